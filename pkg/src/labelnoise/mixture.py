"""Gaussian class-conditional generative model.

Each class ``k`` has prior ``priors[k]`` and a Gaussian feature density.
The clean posterior ``P[Y*=k | x]`` is evaluated in log-space so it stays
exact far from every mean. Classes are 0-based.
"""

from __future__ import annotations

import csv
import io
import itertools
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from labelnoise.errors import NumericalError, ParameterError, ParseError

_LOG_2PI = math.log(2.0 * math.pi)


@dataclass(frozen=True, eq=False)
class GaussianComponent:
    """One class-conditional Gaussian ``N(mean, covariance)``."""

    mean: np.ndarray
    covariance: np.ndarray
    _chol: np.ndarray = field(init=False, repr=False)
    _half_logdet: float = field(init=False, repr=False)

    def __post_init__(self):
        mean = np.array(self.mean, dtype=float).reshape(-1)
        cov = np.array(self.covariance, dtype=float)
        if mean.size < 1:
            raise ParameterError("component dimension must be >= 1")
        d = mean.size
        if cov.ndim == 0:
            cov = np.eye(d) * float(cov)
        if cov.shape != (d, d):
            raise ParameterError(f"covariance shape {cov.shape} does not match dimension {d}")
        if not np.allclose(cov, cov.T, rtol=0, atol=1e-12 * max(1.0, np.abs(cov).max())):
            raise ParameterError("covariance must be symmetric")
        try:
            chol = np.linalg.cholesky(cov)
        except np.linalg.LinAlgError as exc:
            raise ParameterError("covariance must be positive definite") from exc
        mean.setflags(write=False)
        cov.setflags(write=False)
        chol.setflags(write=False)
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "covariance", cov)
        object.__setattr__(self, "_chol", chol)
        object.__setattr__(self, "_half_logdet", float(np.log(np.diag(chol)).sum()))

    @property
    def dim(self) -> int:
        return self.mean.size

    def log_density(self, X: np.ndarray) -> np.ndarray:
        """Log pdf at each row of ``X`` (shape ``(n, d)``)."""
        diff = np.atleast_2d(X) - self.mean
        z = np.linalg.solve(self._chol, diff.T)
        return -0.5 * np.einsum("ij,ij->j", z, z) - self._half_logdet - 0.5 * self.dim * _LOG_2PI

    def draw(self, n: int, rng: np.random.Generator) -> np.ndarray:
        z = rng.standard_normal((n, self.dim))
        return self.mean + z @ self._chol.T


@dataclass(frozen=True, eq=False)
class GaussianMixture:
    """Class priors plus one Gaussian per class."""

    components: tuple[GaussianComponent, ...]
    priors: np.ndarray

    def __post_init__(self):
        comps = tuple(self.components)
        priors = np.array(self.priors, dtype=float).reshape(-1)
        if len(comps) < 1:
            raise ParameterError("mixture needs at least one component")
        if priors.size != len(comps):
            raise ParameterError("one prior per component required")
        if np.any(priors < 0) or not np.all(np.isfinite(priors)):
            raise ParameterError("priors must be finite and nonnegative")
        if abs(priors.sum() - 1.0) > 1e-12:
            raise ParameterError(f"priors must sum to 1 (got {priors.sum()!r})")
        dims = {comp.dim for comp in comps}
        if len(dims) != 1:
            raise ParameterError(f"components disagree on dimension: {sorted(dims)}")
        priors.setflags(write=False)
        object.__setattr__(self, "components", comps)
        object.__setattr__(self, "priors", priors)

    @classmethod
    def from_arrays(cls, means, covariances=None, priors=None) -> GaussianMixture:
        """Build from stacked means ``(c, d)``; unit covariances and equal priors by default."""
        means = np.atleast_2d(np.asarray(means, dtype=float))
        c, d = means.shape
        if covariances is None:
            covariances = [np.eye(d)] * c
        if priors is None:
            priors = np.full(c, 1.0 / c)
        comps = tuple(GaussianComponent(m, s) for m, s in zip(means, covariances))
        return cls(comps, priors)

    @property
    def n_classes(self) -> int:
        return len(self.components)

    @property
    def dim(self) -> int:
        return self.components[0].dim

    @property
    def means(self) -> np.ndarray:
        return np.stack([comp.mean for comp in self.components])

    def _check_x(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        if X.ndim == 1:
            X = X[None, :]
        if X.ndim != 2 or X.shape[1] != self.dim:
            raise ParameterError(f"expected points of dimension {self.dim}, got shape {X.shape}")
        return X

    def log_joint(self, X) -> np.ndarray:
        """``log pi_k + log f_k(x)`` with shape ``(n, c)``."""
        X = self._check_x(X)
        with np.errstate(divide="ignore"):
            log_priors = np.log(self.priors)
        return np.column_stack([comp.log_density(X) for comp in self.components]) + log_priors

    def log_posterior(self, X) -> np.ndarray:
        """Normalized log clean posterior, shape ``(n, c)``."""
        lj = self.log_joint(X)
        top = lj.max(axis=1, keepdims=True)
        if not np.all(np.isfinite(top)):
            raise NumericalError("every class density is zero at some point; posterior undefined")
        shifted = lj - top
        return shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))

    def to_dict(self) -> dict:
        return {
            "priors": self.priors.tolist(),
            "means": self.means.tolist(),
            "covariances": [comp.covariance.tolist() for comp in self.components],
        }

    @classmethod
    def from_dict(cls, obj: dict) -> GaussianMixture:
        try:
            return cls.from_arrays(obj["means"], obj.get("covariances"), obj.get("priors"))
        except KeyError as exc:
            raise ParseError(f"mixture JSON missing key {exc}") from exc


def clean_posterior(mixture: GaussianMixture, x) -> np.ndarray:
    """Exact clean posterior ``m*(x)``.

    Accepts a single point ``(d,)`` (returns ``(c,)``) or a batch ``(n, d)``
    (returns ``(n, c)``). Rows sum to one to within rounding.
    """
    single = np.ndim(x) == 1
    post = np.exp(mixture.log_posterior(x))
    post /= post.sum(axis=1, keepdims=True)
    return post[0] if single else post


def make_benchmark_mixture(c: int, d: int, separation: float, seed: int) -> GaussianMixture:
    """Deterministic layout with overlapping pairs and well-separated groups.

    Classes are paired onto anchors. Partners sit ``min(separation / 2, 1.5)``
    apart, so they overlap. Anchors lie on a jittered grid with spacing
    ``separation + 6.5``, so distinct groups are more than 6 apart. Class
    indices are shuffled onto slots by ``seed``. Covariances are unit and
    priors equal.
    """
    if int(c) != c or c < 2:
        raise ParameterError("c must be an integer >= 2")
    if int(d) != d or d < 1:
        raise ParameterError("d must be an integer >= 1")
    if not separation > 0 or not math.isfinite(separation):
        raise ParameterError("separation must be a positive finite number")
    c, d = int(c), int(d)
    rng = np.random.default_rng(seed)
    n_anchor = (c + 1) // 2
    spacing = separation + 6.5
    if d == 1:
        slots = [(i,) for i in range(n_anchor)]
    else:
        cols = math.ceil(math.sqrt(n_anchor))
        slots = [(i % cols, i // cols) for i in range(n_anchor)]
    anchors = np.zeros((n_anchor, d))
    for a, slot in enumerate(slots):
        anchors[a, : len(slot)] = np.asarray(slot, dtype=float) * spacing
    anchors += _random_directions(rng, n_anchor, d) * rng.uniform(0.0, 0.1 * separation, (n_anchor, 1))
    anchors -= anchors.mean(axis=0)

    offset = min(separation / 2.0, 1.5)
    means = []
    for a in range(n_anchor):
        means.append(anchors[a])
        if len(means) < c:
            means.append(anchors[a] + offset * _random_directions(rng, 1, d)[0])
    means = np.asarray(means)[rng.permutation(c)]
    return GaussianMixture.from_arrays(means)


def make_grid_mixture(c: int, d: int, spacing: float) -> GaussianMixture:
    """Means on a centered regular grid with the given spacing (all pairs >= spacing)."""
    if c < 1 or d < 1 or not spacing > 0:
        raise ParameterError("need c >= 1, d >= 1, spacing > 0")
    side = 1
    while side**d < c:
        side += 1
    points = list(itertools.islice(itertools.product(range(side), repeat=d), c))
    means = np.asarray(points, dtype=float)[:, ::-1] * spacing
    return GaussianMixture.from_arrays(means - means.mean(axis=0))


def _random_directions(rng: np.random.Generator, n: int, d: int) -> np.ndarray:
    v = rng.standard_normal((n, d))
    norms = np.linalg.norm(v, axis=1, keepdims=True)
    norms[norms == 0] = 1.0
    return v / norms


@dataclass(frozen=True, eq=False)
class LabeledDataset:
    """Features with true labels and, optionally, noisy labels plus flip mask."""

    features: np.ndarray
    true_labels: np.ndarray
    noisy_labels: np.ndarray | None = None
    flip_mask: np.ndarray | None = None

    def __post_init__(self):
        X = np.asarray(self.features, dtype=float)
        if X.ndim != 2:
            raise ParameterError("features must be an (n, d) matrix")
        y = np.asarray(self.true_labels).astype(np.int64)
        if y.shape != (X.shape[0],):
            raise ParameterError("true_labels length must match the feature rows")
        if y.size and y.min() < 0:
            raise ParameterError("labels must be nonnegative")
        noisy, flips = self.noisy_labels, self.flip_mask
        if (noisy is None) != (flips is None):
            raise ParameterError("noisy_labels and flip_mask must be given together")
        if noisy is not None:
            noisy = np.asarray(noisy).astype(np.int64)
            flips = np.asarray(flips, dtype=bool)
            if noisy.shape != y.shape or flips.shape != y.shape:
                raise ParameterError("noisy_labels/flip_mask length mismatch")
            if not np.array_equal(flips, noisy != y):
                raise ParameterError("flip_mask must equal noisy_labels != true_labels")
            noisy.setflags(write=False)
            flips.setflags(write=False)
        X.setflags(write=False)
        y.setflags(write=False)
        object.__setattr__(self, "features", X)
        object.__setattr__(self, "true_labels", y)
        object.__setattr__(self, "noisy_labels", noisy)
        object.__setattr__(self, "flip_mask", flips)

    def __len__(self) -> int:
        return self.features.shape[0]

    @property
    def dim(self) -> int:
        return self.features.shape[1]

    def with_noisy_labels(self, noisy) -> LabeledDataset:
        noisy = np.asarray(noisy).astype(np.int64)
        return LabeledDataset(self.features, self.true_labels, noisy, noisy != self.true_labels)

    def labels(self, source: str) -> np.ndarray:
        """Labels by source: ``"true"``/``"clean"`` or ``"noisy"``."""
        if source in ("true", "clean"):
            return self.true_labels
        if source == "noisy":
            if self.noisy_labels is None:
                raise ParameterError("dataset has no noisy labels")
            return self.noisy_labels
        raise ParameterError(f"unknown label source {source!r}")

    def subset(self, index) -> LabeledDataset:
        noisy = None if self.noisy_labels is None else self.noisy_labels[index]
        flips = None if self.flip_mask is None else self.flip_mask[index]
        return LabeledDataset(self.features[index], self.true_labels[index], noisy, flips)


def sample(mixture: GaussianMixture, n_per_class: int, seed: int) -> LabeledDataset:
    """Stratified sample: exactly ``n_per_class`` rows per class, class-major order."""
    if int(n_per_class) != n_per_class or n_per_class < 1:
        raise ParameterError("n_per_class must be an integer >= 1")
    n_per_class = int(n_per_class)
    rng = np.random.default_rng(seed)
    X = np.concatenate([comp.draw(n_per_class, rng) for comp in mixture.components])
    y = np.repeat(np.arange(mixture.n_classes), n_per_class)
    return LabeledDataset(X, y)


def draw_prior_weighted(mixture: GaussianMixture, n: int, rng: np.random.Generator):
    """``n`` i.i.d. draws of ``(x, y*)`` with class frequencies following the priors."""
    y = rng.choice(mixture.n_classes, size=n, p=mixture.priors)
    X = np.empty((n, mixture.dim))
    for k, comp in enumerate(mixture.components):
        idx = np.flatnonzero(y == k)
        if idx.size:
            X[idx] = comp.draw(idx.size, rng)
    return X, y


def save_mixture(mixture: GaussianMixture, path) -> None:
    Path(path).write_text(json.dumps(mixture.to_dict()) + "\n", encoding="utf-8")


def load_mixture(path) -> GaussianMixture:
    try:
        obj = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ParseError(f"invalid mixture JSON: {exc.msg}", exc.lineno) from exc
    return GaussianMixture.from_dict(obj)


def dataset_to_csv(dataset: LabeledDataset, stream=None) -> str | None:
    """Write ``id,label,noisy_label,f0..`` rows; returns the text when no stream is given."""
    out = io.StringIO() if stream is None else stream
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(["id", "label", "noisy_label"] + [f"f{j}" for j in range(dataset.dim)])
    noisy = dataset.noisy_labels
    for i, (row, label) in enumerate(zip(dataset.features, dataset.true_labels)):
        writer.writerow([i, int(label), "" if noisy is None else int(noisy[i])] + [repr(float(v)) for v in row])
    return out.getvalue() if stream is None else None


def read_dataset_csv(path) -> LabeledDataset:
    with open(path, newline="", encoding="utf-8") as fh:
        return dataset_from_csv(fh)


def dataset_from_csv(stream) -> LabeledDataset:
    reader = csv.reader(stream)
    header = next(reader, None)
    if header is None:
        raise ParseError("empty dataset file", 1)
    if header[:3] != ["id", "label", "noisy_label"]:
        raise ParseError("header must start with id,label,noisy_label", 1)
    d = len(header) - 3
    if header[3:] != [f"f{j}" for j in range(d)] or d < 1:
        raise ParseError("feature columns must be f0..f{d-1}", 1)
    feats, labels, noisy = [], [], []
    for lineno, row in enumerate(reader, start=2):
        if not row:
            continue
        if len(row) != d + 3:
            raise ParseError(f"expected {d + 3} fields, got {len(row)}", lineno)
        try:
            labels.append(int(row[1]))
            noisy.append(None if row[2] == "" else int(row[2]))
            feats.append([float(v) for v in row[3:]])
        except ValueError as exc:
            raise ParseError(str(exc), lineno) from exc
        if not all(math.isfinite(v) for v in feats[-1]):
            raise ParseError("non-finite feature value", lineno)
    has_noisy = {v is not None for v in noisy}
    if len(has_noisy) > 1:
        raise ParseError("noisy_label column must be filled on every row or on none")
    X = np.asarray(feats, dtype=float).reshape(len(feats), d)
    ds = LabeledDataset(X, np.asarray(labels, dtype=np.int64))
    if has_noisy == {True}:
        ds = ds.with_noisy_labels(np.asarray(noisy, dtype=np.int64))
    return ds


def pairwise_mean_distances(mixture: GaussianMixture) -> np.ndarray:
    """Distances between every pair of component means (upper triangle, flattened)."""
    means = mixture.means
    iu = np.triu_indices(len(means), k=1)
    return np.linalg.norm(means[:, None, :] - means[None, :, :], axis=-1)[iu]

