import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from labelnoise import bayes, channels, theory
from labelnoise.bayes import AccuracyEstimate, ClassifierHandle
from labelnoise.channels import NoiseSpec
from labelnoise.errors import ParameterError, StateError
from labelnoise.mixture import make_grid_mixture, sample


def _probe(mix, n=400, scale=6.0, seed=0):
    return np.random.default_rng(seed).normal(scale=scale, size=(n, mix.dim))


def test_clean_plugin_tie_goes_to_class_zero(two_class_1d):
    assert bayes.classify(ClassifierHandle.clean(two_class_1d), [0.0]) == 0


def test_noisy_plugin_agrees_below_tipping_point(bench10):
    X = _probe(bench10)
    clean = bayes.predict(ClassifierHandle.clean(bench10), X)
    noisy = bayes.predict(ClassifierHandle.noisy(bench10, NoiseSpec("uniform", 0.8)), X)
    np.testing.assert_array_equal(clean, noisy)


def test_noisy_plugin_flat_at_tipping_point(bench10):
    pred = bayes.predict(ClassifierHandle.noisy(bench10, NoiseSpec("uniform", 0.9)), _probe(bench10))
    assert np.all(pred == 0)


@given(eps=st.floats(0.76, 1.0), seed=st.integers(0, 100))
def test_noisy_plugin_anti_agrees_above_tipping_point(eps, seed):
    mix = make_grid_mixture(4, 2, 1.0)
    X = _probe(mix, 200, scale=1.5, seed=seed)
    post = np.exp(mix.log_posterior(X))
    # keep points whose two smallest posteriors stay distinguishable after the affine map
    srt = np.sort(post, axis=1)
    X = X[srt[:, 1] - srt[:, 0] > 1e-6]
    pred = bayes.predict(ClassifierHandle.noisy(mix, NoiseSpec("uniform", eps)), X)
    np.testing.assert_array_equal(pred, np.argmin(np.exp(mix.log_posterior(X)), axis=1))


@given(eps=st.floats(0.0, 0.89), seed=st.integers(0, 100))
def test_noisy_plugin_agrees_property(eps, seed, bench10):
    X = _probe(bench10, 50, seed=seed)
    post = np.exp(bench10.log_posterior(X))
    srt = np.sort(post, axis=1)
    X = X[srt[:, -1] - srt[:, -2] > 1e-9]
    clean = bayes.predict(ClassifierHandle.clean(bench10), X)
    noisy = bayes.predict(ClassifierHandle.noisy(bench10, NoiseSpec("uniform", eps)), X)
    np.testing.assert_array_equal(clean, noisy)


def test_gap_max_plugin_disagrees_somewhere(bench10):
    ref = sample(bench10, 200, 0)
    spec = channels.worst_case_channel(bench10, 0.3, ref)
    X = _probe(bench10, 2000, scale=4)
    clean = bayes.predict(ClassifierHandle.clean(bench10), X)
    noisy = bayes.predict(ClassifierHandle.noisy(bench10, spec), X)
    assert np.count_nonzero(clean != noisy) > 0


def test_worst_flip_target_examples():
    assert bayes.worst_flip_target_from_posterior([0.6, 0.3, 0.1], 0) == 1
    assert bayes.worst_flip_target_from_posterior([0.6, 0.2, 0.2], 0) == 1


@given(x=st.floats(-50, 50))
def test_worst_flip_target_binary(x, two_class_1d):
    assert bayes.worst_flip_target(two_class_1d, [x], 0) == 1
    assert bayes.worst_flip_target(two_class_1d, [x], 1) == 0


@given(
    values=hnp.arrays(float, st.tuples(st.integers(1, 10), st.integers(2, 8)), elements=st.floats(1e-3, 1.0)),
    a=st.floats(0.1, 10.0),
    b=st.floats(-5, 5),
)
def test_argmax_invariant_under_increasing_transforms(values, a, b):
    top = np.sort(values, axis=1)
    values = values[top[:, -1] - top[:, -2] > 1e-6]
    if values.size == 0:
        return
    base = bayes.argmax_lowest(values)
    np.testing.assert_array_equal(base, bayes.argmax_lowest(a * values + b))
    np.testing.assert_array_equal(base, bayes.argmax_lowest(np.log(values)))
    np.testing.assert_array_equal(base, bayes.argmax_lowest(np.exp(3 * values)))


def test_handle_contract(bench10):
    with pytest.raises(ParameterError):
        ClassifierHandle("noisy_plugin", bench10)
    with pytest.raises(StateError):
        ClassifierHandle.noisy(bench10, NoiseSpec("gap_min", 0.2))
    with pytest.raises(ParameterError):
        ClassifierHandle("magic", bench10)


def test_separated_clean_accuracy(separated10):
    est = bayes.mc_accuracy(ClassifierHandle.clean(separated10), separated10, "clean", 20_000, 0)
    assert est.mean >= 0.999


def test_noisy_plugin_at_tipping_point_scores_one_over_c(bench10):
    spec = NoiseSpec("uniform", 0.9)
    est = bayes.mc_accuracy(ClassifierHandle.noisy(bench10, spec), bench10, spec, 100_000, 0)
    assert abs(est.mean - 0.1) <= 0.003


def test_zero_noise_labels_score_like_clean(bench10):
    handle = ClassifierHandle.clean(bench10)
    a = bayes.mc_accuracy(handle, bench10, "clean", 30_000, 4)
    b = bayes.mc_accuracy(handle, bench10, NoiseSpec("uniform", 0.0), 30_000, 4)
    assert a == b


def test_mc_accuracy_deterministic_and_batched(bench10):
    handle = ClassifierHandle.noisy(bench10, NoiseSpec("uniform", 0.3))
    a = bayes.mc_accuracy(handle, bench10, NoiseSpec("uniform", 0.3), 120_000, 9)
    b = bayes.mc_accuracy(handle, bench10, NoiseSpec("uniform", 0.3), 120_000, 9)
    assert a == b and a.n == 120_000


@given(correct=st.integers(0, 10_000), extra=st.integers(0, 10_000))
def test_std_error_bound(correct, extra):
    n = max(1, correct + extra)
    est = AccuracyEstimate.from_counts(correct, n)
    assert 0 <= est.mean <= 1
    assert est.std_error <= 0.5 / math.sqrt(n) + 1e-15


def _law(c, eps, s):
    return theory.noisy_accuracy(theory.TheoryParams(c, eps, 1.0, s=s))


@pytest.mark.parametrize("s", [1, 2, 5, 9])
@pytest.mark.parametrize("eps", [0.0, 0.2, 0.5, 0.7, 1.0])
def test_gibbs_plugin_matches_quadratic_law(s, eps, separated10):
    kind = "uniform" if s == 9 else "class_dependent"
    spec = NoiseSpec(kind, eps, None if s == 9 else s)
    handle = ClassifierHandle("noisy_gibbs", separated10, spec)
    est = bayes.mc_accuracy(handle, separated10, spec, 20_000, 1)
    assert abs(est.mean - _law(10, eps, s)) <= 3 * est.std_error + 0.01


@pytest.mark.parametrize("eps", [0.1, 0.3, 0.5, 0.8])
def test_argmax_plugin_scores_keep_rate_below_tipping_point(eps, separated10):
    # argmax of the noisy posterior predicts the true class, which the noisy label keeps w.p. 1 - eps
    spec = NoiseSpec("uniform", eps)
    est = bayes.mc_accuracy(ClassifierHandle.noisy(separated10, spec), separated10, spec, 20_000, 2)
    assert abs(est.mean - (1 - eps)) <= 3 * est.std_error + 0.005


def test_gap_max_hurts_clean_accuracy_more_than_uniform(bench10):
    ref = sample(bench10, 2000, 0)
    gap = channels.worst_case_channel(bench10, 0.2, ref)
    uni = NoiseSpec("uniform", 0.2)
    acc_gap = bayes.mc_accuracy(ClassifierHandle.noisy(bench10, gap), bench10, "clean", 50_000, 3).mean
    acc_uni = bayes.mc_accuracy(ClassifierHandle.noisy(bench10, uni), bench10, "clean", 50_000, 3).mean
    assert acc_gap <= acc_uni - 0.05


def test_estimate_m_bar_near_one_when_separated(separated10):
    assert bayes.estimate_m_bar(separated10, 20_000, 0) >= 0.99


def test_gibbs_needs_rng(bench10):
    handle = ClassifierHandle("noisy_gibbs", bench10, NoiseSpec("uniform", 0.1))
    with pytest.raises(ParameterError):
        bayes.predict(handle, [[0.0, 0.0]])


def test_single_point_classify_matches_batch():
    mix = make_grid_mixture(5, 2, 3.0)
    X = _probe(mix, 30)
    handle = ClassifierHandle.clean(mix)
    np.testing.assert_array_equal([bayes.classify(handle, x) for x in X], bayes.predict(handle, X))
