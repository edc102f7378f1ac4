import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from labelnoise import experiment
from labelnoise.errors import ParameterError, ParseError
from labelnoise.experiment import ResultTable, SweepConfig


def test_fnv_and_splitmix_reference_values():
    # published FNV-1a 64 test vectors
    assert experiment.fnv1a_64(b"") == 0xCBF29CE484222325
    assert experiment.fnv1a_64(b"a") == 0xAF63DC4C8601EC8C
    assert experiment.fnv1a_64(b"foobar") == 0x85944171F73967E8
    # splitmix64 stream from state 0: first output
    assert experiment.splitmix64(0) == 0xE220A8397B1DCDAF


@given(master=st.integers(0, 2**64 - 1), key=st.text(max_size=40))
def test_cell_seed_is_64_bit_and_stable(master, key):
    s = experiment.cell_seed(master, key)
    assert 0 <= s < 2**64
    assert s == experiment.cell_seed(master, key)


def test_cell_seed_depends_on_key_and_master():
    seeds = {experiment.cell_seed(m, f"k{i}") for m in range(5) for i in range(50)}
    assert len(seeds) == 250


@pytest.fixture(scope="module")
def small_table():
    cfg = SweepConfig(
        noise=("uniform", {"kind": "class_dependent", "spread": 2}, "gap_max"),
        epsilons=[round(0.1 * i, 12) for i in range(11)],
        replicates=5,
    )
    return cfg, experiment.run_sweep(cfg)


def test_row_count(small_table):
    _, table = small_table
    assert len(table) == 11 * 3 * 5 * 1 * 2


def test_rows_sorted_and_columns(small_table):
    _, table = small_table
    assert table.columns == experiment.COLUMNS
    keys = [experiment._sort_key(r) for r in table.rows]
    assert keys == sorted(keys)
    assert len(set(keys)) == len(keys)


def test_uniform_tipping_point_noisy_accuracy(small_table):
    _, table = small_table
    rows = table.select(noise_kind="uniform", epsilon=0.9, eval_labels="noisy", classifier="bayes_plugin")
    for acc, se in zip(rows.column("accuracy"), rows.column("std_error")):
        assert abs(acc - 0.1) <= 3 * max(se, np.sqrt(0.09 / 1000))


def test_rerun_identical_bytes(small_table):
    cfg, table = small_table
    assert experiment.run_sweep(cfg).to_csv() == table.to_csv()


def test_parallel_identical_bytes():
    cfg = SweepConfig(noise=("uniform", "gap_min"), epsilons=[0.0, 0.3], replicates=2,
                      classifiers=("bayes_plugin", "mlp"), train={"epochs": 3})
    assert experiment.run_sweep(cfg, jobs=1).to_csv() == experiment.run_sweep(cfg, jobs=3).to_csv()


def test_overlay_theory_examples():
    rows = [
        (10, 2, "uniform", 0.9, 9, 0, "bayes_plugin", "noisy", 0.1, 0.01),
        (10, 2, "class_dependent", 0.5, 1, 0, "bayes_plugin", "noisy", 0.5, 0.01),
        (10, 2, "gap_max", 0.2, None, 0, "bayes_plugin", "noisy", 0.4, 0.01),
    ]
    table = experiment.overlay_theory(ResultTable(rows), m_bar=0.9, lam=50.0)
    by_kind = dict(zip(table.column("noise_kind"), table.column("theory_noisy")))
    assert by_kind["uniform"] == pytest.approx(0.1, abs=1e-12)
    assert by_kind["class_dependent"] == pytest.approx(0.5, abs=1e-12)
    assert by_kind["gap_max"] is None
    line = [ln for ln in table.to_csv().splitlines() if ln.startswith("10,2,gap_max")][0]
    assert line.endswith(",,")


def test_csv_round_trip(small_table):
    _, table = small_table
    back = ResultTable.from_csv(table.to_csv())
    assert back.to_csv() == table.to_csv()


def test_config_from_json_and_errors():
    cfg = SweepConfig.from_json('{"c": 4, "epsilons": "0:1:0.5", "noise": ["uniform"], "replicates": 1}')
    assert cfg.c == (4,) and cfg.epsilons == (0.0, 0.5, 1.0)
    with pytest.raises(ParameterError):
        SweepConfig.from_json('{"bogus": 1}')
    with pytest.raises(ParseError):
        SweepConfig.from_json("{not json")
    with pytest.raises(ParameterError):
        SweepConfig(classifiers=("svm",))
    with pytest.raises(ParameterError):
        SweepConfig(replicates=0)
    with pytest.raises(ParameterError):
        SweepConfig(epsilons=())
    with pytest.raises(ParameterError):
        SweepConfig(c=(3,), noise=({"kind": "class_dependent", "spread": 5},))
    with pytest.raises(ParameterError):
        SweepConfig(train={"seed": 4})


def test_config_dict_round_trip():
    cfg = SweepConfig(noise=("uniform", {"kind": "class_dependent", "spread": 2}), train={"epochs": 5})
    assert SweepConfig.from_dict(cfg.to_dict()) == cfg


def test_failing_cell_names_its_key(monkeypatch):
    def boom(*args, **kwargs):
        raise ValueError("synthetic failure")

    monkeypatch.setattr(experiment, "_run_cell", boom)
    cfg = SweepConfig(epsilons=[0.2], replicates=1)
    with pytest.raises(experiment.CellFailure, match=r"c=10\|kind=uniform\|s=\|eps=0.2\|rep=0"):
        experiment.run_sweep(cfg)


def test_features_fixed_across_noise_settings():
    cfg = SweepConfig(epsilons=[0.0], replicates=1)
    a = experiment._benchmark(10, 2, 2.0, 100, 100, cfg.master_seed, None)
    b = experiment._benchmark(10, 2, 2.0, 100, 100, cfg.master_seed, None)
    assert a[1] is b[1]
    rows = experiment.run_sweep(SweepConfig(epsilons=[0.0], noise=("uniform", "gap_max"), replicates=1))
    clean = rows.select(eval_labels="clean").column("accuracy")
    # at eps = 0 every kind sees the same features and labels
    assert clean[0] == clean[1]

