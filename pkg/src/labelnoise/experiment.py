"""Sweep engine crossing noise kinds, noise levels, replicates and classifiers.

A cell is one ``(c, noise, epsilon, replicate)`` combination. Its random
seed is derived from the master seed and a canonical key string, so results
do not depend on execution order or on the number of worker processes.

Seed derivation::

    h    = fnv1a_64(key.encode("utf-8"))
    seed = splitmix64(h ^ splitmix64(master_seed))

Features are drawn once per class count and reused by every cell; only the
labels are resampled.
"""

from __future__ import annotations

import csv
import io
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from functools import lru_cache

import numpy as np

from labelnoise import bayes, channels, learner, theory
from labelnoise.channels import NoiseKind, NoiseSpec
from labelnoise.errors import LabelNoiseError, ParameterError, ParseError
from labelnoise.mixture import make_benchmark_mixture, sample

CLASSIFIERS = ("bayes_plugin", "bayes_gibbs", "mlp")
COLUMNS = ("c", "d", "noise_kind", "epsilon", "s", "seed", "classifier", "eval_labels", "accuracy", "std_error")
THEORY_COLUMNS = ("theory_noisy", "theory_clean")

_MASK64 = (1 << 64) - 1


def fnv1a_64(data: bytes) -> int:
    h = 0xCBF29CE484222325
    for byte in data:
        h = ((h ^ byte) * 0x100000001B3) & _MASK64
    return h


def splitmix64(x: int) -> int:
    x = (x + 0x9E3779B97F4A7C15) & _MASK64
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & _MASK64
    return x ^ (x >> 31)


def cell_seed(master_seed: int, key: str) -> int:
    return splitmix64(fnv1a_64(key.encode("utf-8")) ^ splitmix64(int(master_seed) & _MASK64))


@dataclass(frozen=True)
class NoiseSetting:
    kind: NoiseKind
    spread: int | None = None

    @classmethod
    def parse(cls, obj) -> NoiseSetting:
        if isinstance(obj, NoiseSetting):
            return obj
        if isinstance(obj, str):
            return cls(NoiseKind.parse(obj))
        if isinstance(obj, dict):
            unknown = set(obj) - {"kind", "spread"}
            if unknown:
                raise ParameterError(f"unknown noise fields {sorted(unknown)}")
            kind = NoiseKind.parse(obj["kind"])
            spread = obj.get("spread")
            if (kind is NoiseKind.CLASS_DEPENDENT) != (spread is not None):
                raise ParameterError("spread is required for class_dependent noise and only there")
            return cls(kind, None if spread is None else int(spread))
        raise ParameterError(f"cannot read noise setting {obj!r}")

    def spec(self, epsilon: float) -> NoiseSpec:
        return NoiseSpec(self.kind, epsilon, self.spread)

    def to_json(self):
        if self.spread is None:
            return self.kind.value
        return {"kind": self.kind.value, "spread": self.spread}


@dataclass(frozen=True)
class SweepConfig:
    c: tuple[int, ...] = (10,)
    d: int = 2
    separation: float = 2.0
    n_train_per_class: int = 100
    n_test_per_class: int = 100
    epsilons: tuple[float, ...] = tuple(round(0.1 * i, 12) for i in range(11))
    noise: tuple[NoiseSetting, ...] = (NoiseSetting(NoiseKind.UNIFORM),)
    classifiers: tuple[str, ...] = ("bayes_plugin",)
    replicates: int = 5
    master_seed: int = 0
    mixture_seed: int | None = None
    train: dict = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "c", tuple(int(c) for c in self.c))
        object.__setattr__(self, "epsilons", tuple(float(e) for e in self.epsilons))
        object.__setattr__(self, "noise", tuple(NoiseSetting.parse(n) for n in self.noise))
        object.__setattr__(self, "classifiers", tuple(self.classifiers))
        if not (self.c and self.epsilons and self.noise and self.classifiers):
            raise ParameterError("c, epsilons, noise and classifiers must be nonempty")
        if any(c < 2 for c in self.c) or self.d < 1:
            raise ParameterError("need every c >= 2 and d >= 1")
        if any(not 0.0 <= e <= 1.0 for e in self.epsilons):
            raise ParameterError("epsilons must lie in [0, 1]")
        bad = [k for k in self.classifiers if k not in CLASSIFIERS]
        if bad:
            raise ParameterError(f"unknown classifiers {bad}; choose from {CLASSIFIERS}")
        if self.replicates < 1:
            raise ParameterError("replicates must be >= 1")
        if self.n_train_per_class < 1 or self.n_test_per_class < 1:
            raise ParameterError("sample counts must be >= 1")
        for setting in self.noise:
            if setting.spread is not None and any(setting.spread > c - 1 for c in self.c):
                raise ParameterError(f"spread {setting.spread} exceeds c - 1 for some c")
        self.train_config(0)  # validate overrides early

    def train_config(self, seed: int) -> learner.TrainConfig:
        overrides = dict(self.train)
        if "hidden" in overrides:
            overrides["hidden"] = tuple(overrides["hidden"])
        unknown = set(overrides) - set(learner.TrainConfig.__dataclass_fields__) | ({"seed"} & set(overrides))
        if unknown:
            raise ParameterError(f"unknown or fixed train overrides {sorted(unknown)}")
        return learner.TrainConfig(seed=seed, **overrides)

    @classmethod
    def from_dict(cls, obj: dict) -> SweepConfig:
        fields = set(cls.__dataclass_fields__)
        unknown = set(obj) - fields
        if unknown:
            raise ParameterError(f"unknown sweep config fields {sorted(unknown)}")
        obj = dict(obj)
        if isinstance(obj.get("c"), int):
            obj["c"] = [obj["c"]]
        if isinstance(obj.get("epsilons"), str):
            start, stop, step = (float(v) for v in obj["epsilons"].split(":"))
            obj["epsilons"] = theory.epsilon_grid(start, stop, step)
        try:
            return cls(**obj)
        except TypeError as exc:
            raise ParameterError(str(exc)) from exc

    @classmethod
    def from_json(cls, text: str) -> SweepConfig:
        try:
            obj = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ParseError(f"invalid sweep config JSON: {exc.msg}", exc.lineno) from exc
        if not isinstance(obj, dict):
            raise ParseError("sweep config must be a JSON object")
        return cls.from_dict(obj)

    def to_dict(self) -> dict:
        out = asdict(self)
        out["noise"] = [n.to_json() for n in self.noise]
        for key in ("c", "epsilons", "classifiers"):
            out[key] = list(out[key])
        return out


def config_schema() -> dict:
    """JSON description of the accepted sweep configuration."""
    return {
        "type": "object",
        "additionalProperties": False,
        "properties": {
            "c": {"type": "array", "items": {"type": "integer", "minimum": 2}, "default": [10]},
            "d": {"type": "integer", "minimum": 1, "default": 2},
            "separation": {"type": "number", "default": 2.0},
            "n_train_per_class": {"type": "integer", "minimum": 1, "default": 100},
            "n_test_per_class": {"type": "integer", "minimum": 1, "default": 100},
            "epsilons": {
                "oneOf": [
                    {"type": "array", "items": {"type": "number", "minimum": 0, "maximum": 1}},
                    {"type": "string", "pattern": "start:stop:step"},
                ],
                "default": [round(0.1 * i, 12) for i in range(11)],
            },
            "noise": {
                "type": "array",
                "items": {
                    "oneOf": [
                        {"type": "string", "enum": [k.value for k in NoiseKind]},
                        {"type": "object", "properties": {"kind": {"type": "string"}, "spread": {"type": "integer"}}},
                    ]
                },
                "default": ["uniform"],
            },
            "classifiers": {"type": "array", "items": {"enum": list(CLASSIFIERS)}, "default": ["bayes_plugin"]},
            "replicates": {"type": "integer", "minimum": 1, "default": 5},
            "master_seed": {"type": "integer", "default": 0},
            "mixture_seed": {"type": ["integer", "null"], "default": None},
            "train": {
                "type": "object",
                "properties": {
                    "learning_rate": {"type": "number"},
                    "adam_beta1": {"type": "number"},
                    "adam_beta2": {"type": "number"},
                    "adam_eps": {"type": "number"},
                    "epochs": {"type": "integer"},
                    "batch_size": {"type": "integer"},
                    "hidden": {"type": "array", "items": {"type": "integer"}},
                },
                "default": {},
            },
        },
    }


# --- results -----------------------------------------------------------------


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _sort_key(row: tuple):
    c, d, kind, eps, s, seed, clf, ev = row[:8]
    return (c, d, kind, eps, -1 if s is None else s, seed, clf, ev)


@dataclass
class ResultTable:
    rows: list[tuple]
    columns: tuple[str, ...] = COLUMNS

    def __post_init__(self):
        self.rows = sorted((tuple(r) for r in self.rows), key=_sort_key)

    def __len__(self) -> int:
        return len(self.rows)

    def column(self, name: str) -> list:
        i = self.columns.index(name)
        return [r[i] for r in self.rows]

    def select(self, **conditions) -> ResultTable:
        idx = {self.columns.index(k): v for k, v in conditions.items()}
        return ResultTable([r for r in self.rows if all(r[i] == v for i, v in idx.items())], self.columns)

    def to_csv(self) -> str:
        out = io.StringIO()
        writer = csv.writer(out, lineterminator="\n")
        writer.writerow(self.columns)
        for r in self.rows:
            writer.writerow([_fmt(v) for v in r])
        return out.getvalue()

    def to_dict(self) -> dict:
        return {"columns": list(self.columns), "rows": [list(r) for r in self.rows]}

    @classmethod
    def from_csv(cls, text: str) -> ResultTable:
        reader = csv.reader(io.StringIO(text))
        header = tuple(next(reader, ()))
        if header[: len(COLUMNS)] != COLUMNS:
            raise ParseError("not a result table: unexpected header", 1)
        ints, floats = {"c", "d", "s", "seed"}, {"epsilon", "accuracy", "std_error", *THEORY_COLUMNS}
        rows = []
        for lineno, raw in enumerate(reader, start=2):
            if len(raw) != len(header):
                raise ParseError(f"expected {len(header)} fields, got {len(raw)}", lineno)
            row = []
            for name, v in zip(header, raw):
                try:
                    row.append(None if v == "" else int(v) if name in ints else float(v) if name in floats else v)
                except ValueError as exc:
                    raise ParseError(str(exc), lineno) from exc
            rows.append(tuple(row))
        return cls(rows, header)


class CellFailure(LabelNoiseError):
    """A sweep cell raised; ``key`` names it and ``__cause__`` holds the original error."""

    def __init__(self, key: str, cause: BaseException):
        super().__init__(f"cell {key} failed: {type(cause).__name__}: {cause}")
        self.key = key
        self.cause = cause


# --- cell execution ------------------------------------------------------------


@lru_cache(maxsize=8)
def _benchmark(c: int, d: int, separation: float, n_train: int, n_test: int, master_seed: int, mixture_seed):
    seed = cell_seed(master_seed, f"mixture|c={c}") if mixture_seed is None else mixture_seed
    mixture = make_benchmark_mixture(c, d, separation, seed)
    train = sample(mixture, n_train, cell_seed(master_seed, f"train|c={c}"))
    test = sample(mixture, n_test, cell_seed(master_seed, f"test|c={c}"))
    return mixture, train, test


def cell_key(c: int, setting: NoiseSetting, epsilon: float, replicate: int) -> str:
    s = "" if setting.spread is None else setting.spread
    return f"c={c}|kind={setting.kind.value}|s={s}|eps={epsilon!r}|rep={replicate}"


def _row_spread(setting: NoiseSetting, c: int):
    if setting.kind is NoiseKind.UNIFORM:
        return c - 1
    return setting.spread


def run_cell(config: SweepConfig, c: int, setting: NoiseSetting, epsilon: float, replicate: int) -> list[tuple]:
    key = cell_key(c, setting, epsilon, replicate)
    try:
        return _run_cell(config, key, c, setting, epsilon, replicate)
    except Exception as exc:
        raise CellFailure(key, exc) from exc


def _run_cell(config, key, c, setting, epsilon, replicate):
    mixture, train, test = _benchmark(
        c, config.d, config.separation, config.n_train_per_class, config.n_test_per_class,
        config.master_seed, config.mixture_seed,
    )
    base = cell_seed(config.master_seed, key)
    seeds = np.random.SeedSequence(base).generate_state(4, dtype=np.uint64).tolist()
    spec = channels.ensure_calibrated(setting.spec(epsilon), train, mixture)
    train_noisy = channels.apply(spec, train, mixture, seed=seeds[0])
    test_noisy = channels.apply(spec, test, mixture, seed=seeds[1])

    rows = []
    prefix = (c, config.d, setting.kind.value, epsilon, _row_spread(setting, c), replicate)
    for clf in config.classifiers:
        if clf == "mlp":
            params = learner.train(train_noisy, config.train_config(seeds[2] % (1 << 32)), "noisy", n_classes=c)
            pred = learner.predict(params, test.features)
        else:
            mode = "noisy_plugin" if clf == "bayes_plugin" else "noisy_gibbs"
            handle = bayes.ClassifierHandle(mode, mixture, spec)
            pred = bayes.predict(handle, test.features, np.random.default_rng(seeds[3]))
        for eval_labels, y in (("clean", test_noisy.true_labels), ("noisy", test_noisy.noisy_labels)):
            est = bayes.AccuracyEstimate.from_counts(int(np.count_nonzero(pred == y)), len(y))
            rows.append(prefix + (clf, eval_labels, est.mean, est.std_error))
    return rows


def _cells(config: SweepConfig):
    for c in config.c:
        for setting in config.noise:
            for eps in config.epsilons:
                for rep in range(config.replicates):
                    yield c, setting, eps, rep


def _run_batch(config, cells):
    rows = []
    for cell in cells:
        rows.extend(run_cell(config, *cell))
    return rows


def run_sweep(config: SweepConfig, jobs: int = 1) -> ResultTable:
    """Run every cell and return the sorted table; ``jobs > 1`` uses a process pool."""
    if jobs < 1:
        raise ParameterError("jobs must be >= 1")
    cells = list(_cells(config))
    if jobs == 1 or len(cells) == 1:
        return ResultTable(_run_batch(config, cells))
    # contiguous chunks keep each worker's feature cache warm
    n_chunks = min(len(cells), jobs * 4)
    bounds = np.linspace(0, len(cells), n_chunks + 1).astype(int)
    chunks = [cells[a:b] for a, b in zip(bounds[:-1], bounds[1:]) if b > a]
    rows = []
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        for part in pool.map(_run_batch, [config] * len(chunks), chunks):
            rows.extend(part)
    return ResultTable(rows)


def overlay_theory(table: ResultTable, m_bar: float, lam: float = 50.0) -> ResultTable:
    """Append closed-form noisy/clean accuracy; feature-dependent rows get empty cells."""
    if "theory_noisy" in table.columns:
        raise ParameterError("table already carries theory columns")
    ci, ki, ei, si = (table.columns.index(n) for n in ("c", "noise_kind", "epsilon", "s"))
    rows = []
    for r in table.rows:
        kind = NoiseKind.parse(r[ki])
        if kind.feature_dependent:
            extra = (None, None)
        else:
            p = theory.TheoryParams(r[ci], r[ei], m_bar, lam, r[si])
            extra = (theory.noisy_accuracy(p), theory.clean_accuracy(p))
        rows.append(tuple(r) + extra)
    return ResultTable(rows, tuple(table.columns) + THEORY_COLUMNS)


def mean_accuracy(table: ResultTable, **conditions) -> float:
    acc = table.select(**conditions).column("accuracy")
    if not acc:
        raise ParameterError(f"no rows match {conditions}")
    return float(math.fsum(acc) / len(acc))
