"""Plug-in classifiers built from known posteriors, and Monte Carlo accuracy.

``clean_plugin`` predicts ``argmax m*(x)`` and ``noisy_plugin`` predicts
``argmax m(x)``, where ``m`` is the noisy posterior under a channel. Ties go
to the lowest class index. Entries within ``TIE_TOL`` of the maximum count
as tied, so a flat noisy posterior predicts class 0 deterministically.

``noisy_gibbs`` draws its prediction from ``m(x)`` instead of taking the
argmax. Its expected agreement with independently drawn noisy labels is
``sum_k m_k(x)^2``, which is the quantity the quadratic noisy-accuracy law
describes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from labelnoise import channels
from labelnoise.channels import NoiseSpec
from labelnoise.errors import ParameterError, StateError
from labelnoise.mixture import GaussianMixture, LabeledDataset, draw_prior_weighted

TIE_TOL = 1e-12
MODES = ("clean_plugin", "noisy_plugin", "noisy_gibbs")
_BATCH = 50_000


@dataclass(frozen=True, eq=False)
class ClassifierHandle:
    mode: str
    mixture: GaussianMixture
    spec: NoiseSpec | None = None

    def __post_init__(self):
        if self.mode not in MODES:
            raise ParameterError(f"mode must be one of {MODES}")
        if self.mode == "clean_plugin":
            return
        if self.spec is None:
            raise ParameterError(f"{self.mode} needs a noise spec")
        if not self.spec.calibrated:
            raise StateError("noisy plug-in needs a calibrated noise spec")

    @classmethod
    def clean(cls, mixture):
        return cls("clean_plugin", mixture)

    @classmethod
    def noisy(cls, mixture, spec):
        return cls("noisy_plugin", mixture, spec)


@dataclass(frozen=True)
class AccuracyEstimate:
    mean: float
    std_error: float
    n: int

    @classmethod
    def from_counts(cls, correct: int, n: int) -> AccuracyEstimate:
        if n < 1:
            raise ParameterError("accuracy needs at least one sample")
        p = correct / n
        return cls(p, math.sqrt(p * (1.0 - p) / n), n)


def argmax_lowest(values, tol: float = TIE_TOL) -> np.ndarray:
    """Row-wise argmax; entries within ``tol`` of the row maximum tie, lowest index wins."""
    values = np.atleast_2d(np.asarray(values, dtype=float))
    top = values.max(axis=1, keepdims=True)
    return np.argmax(values >= top - tol, axis=1)


def posterior(handle: ClassifierHandle, X) -> np.ndarray:
    if handle.mode == "clean_plugin":
        P = np.exp(handle.mixture.log_posterior(X))
        return P / P.sum(axis=1, keepdims=True)
    return np.atleast_2d(channels.noisy_posterior(handle.mixture, handle.spec, X))


def predict(handle: ClassifierHandle, X, rng: np.random.Generator | None = None) -> np.ndarray:
    """Predictions for a batch ``(n, d)``; ``noisy_gibbs`` needs ``rng``."""
    P = posterior(handle, X)
    if handle.mode != "noisy_gibbs":
        return argmax_lowest(P)
    if rng is None:
        raise ParameterError("noisy_gibbs prediction needs a random generator")
    cum = np.cumsum(P, axis=1)
    u = (1.0 - rng.random(P.shape[0])) * cum[:, -1]
    return np.minimum((cum < u[:, None]).sum(axis=1), P.shape[1] - 1)


def classify(handle: ClassifierHandle, x, rng: np.random.Generator | None = None) -> int:
    return int(predict(handle, np.atleast_2d(x), rng)[0])


def worst_flip_target_from_posterior(post, k: int) -> int:
    post = np.array(post, dtype=float)
    if post.size < 2:
        raise ParameterError("need c >= 2")
    post[k] = -np.inf
    return int(argmax_lowest(post)[0])


def worst_flip_target(mixture: GaussianMixture, x, k: int) -> int:
    """Wrong label whose flip raises the competing posterior the most."""
    lp = mixture.log_posterior(x)[0]
    return worst_flip_target_from_posterior(np.exp(lp - lp.max()), k)


def mc_accuracy(
    handle: ClassifierHandle,
    mixture: GaussianMixture,
    spec_for_labels,
    n: int,
    seed: int,
) -> AccuracyEstimate:
    """Score ``handle`` on ``n`` prior-weighted draws labelled cleanly or through a channel.

    ``spec_for_labels`` is ``"clean"`` or a calibrated :class:`NoiseSpec`;
    noisy test labels are drawn fresh. Work is split into batches with
    independent child seeds and the counts are summed in batch order.
    """
    if int(n) != n or n < 1:
        raise ParameterError("n must be a positive integer")
    n = int(n)
    noisy = spec_for_labels != "clean"
    if noisy and not isinstance(spec_for_labels, NoiseSpec):
        raise ParameterError("spec_for_labels must be 'clean' or a NoiseSpec")
    sizes = [min(_BATCH, n - start) for start in range(0, n, _BATCH)]
    correct = 0
    for size, child in zip(sizes, np.random.SeedSequence(seed).spawn(len(sizes))):
        draw_seed, label_seed, pred_seed = child.spawn(3)
        X, y = draw_prior_weighted(mixture, size, np.random.default_rng(draw_seed))
        if noisy:
            labelled = channels.apply(
                spec_for_labels, LabeledDataset(X, y), mixture, seed=label_seed.generate_state(1)[0]
            )
            y = labelled.noisy_labels
        pred = predict(handle, X, np.random.default_rng(pred_seed))
        correct += int(np.count_nonzero(pred == y))
    return AccuracyEstimate.from_counts(correct, n)


def estimate_m_bar(mixture: GaussianMixture, n: int, seed: int) -> float:
    """Mean of ``max_k m*_k(x)`` over prior-weighted draws."""
    X, _ = draw_prior_weighted(mixture, n, np.random.default_rng(seed))
    return float(np.exp(mixture.log_posterior(X).max(axis=1)).mean())
