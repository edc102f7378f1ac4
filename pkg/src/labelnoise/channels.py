"""Noise channels ``eta_ki(x) = P[Y=i | Y*=k, X=x]`` and their application.

Kinds
-----
uniform, class_dependent
    Feature-independent; described by a c x c transition matrix.
uniform_x
    Constant keep probability ``1 - eps``; flips go to wrong classes in
    proportion to their clean posterior.
resampling, inverse_resampling, gap_min, gap_max
    Keep probability ``clip(alpha * w(x), 0, 1)`` with a per-kind weight
    ``w``; ``alpha`` is calibrated so the mean flip rate on a reference set
    equals ``eps``. Resampling kinds spread flips over wrong classes by
    posterior; gap kinds send every flip to the most likely wrong class.

All per-sample computations work on log posteriors so far-tail points stay
well defined.
"""

from __future__ import annotations

import csv
import enum
import io
import json
import math
from dataclasses import dataclass, replace

import numpy as np

from labelnoise.errors import ConvergenceError, ParameterError, StateError
from labelnoise.mixture import GaussianMixture, LabeledDataset

INVERSE_FLOOR = 1e-12
_LOG_INVERSE_FLOOR = math.log(INVERSE_FLOOR)


class NoiseKind(str, enum.Enum):
    UNIFORM = "uniform"
    CLASS_DEPENDENT = "class_dependent"
    UNIFORM_X = "uniform_x"
    RESAMPLING = "resampling"
    INVERSE_RESAMPLING = "inverse_resampling"
    GAP_MIN = "gap_min"
    GAP_MAX = "gap_max"

    @classmethod
    def parse(cls, value) -> NoiseKind:
        if isinstance(value, cls):
            return value
        key = str(value).lower().replace("-", "").replace("_", "")
        for kind in cls:
            if kind.value.replace("_", "") == key:
                return kind
        aliases = {"class": cls.CLASS_DEPENDENT, "resamplinginverse": cls.INVERSE_RESAMPLING}
        if key in aliases:
            return aliases[key]
        raise ParameterError(f"unknown noise kind {value!r}")

    @property
    def feature_dependent(self) -> bool:
        return self not in (NoiseKind.UNIFORM, NoiseKind.CLASS_DEPENDENT)

    @property
    def needs_alpha(self) -> bool:
        return self.feature_dependent and self is not NoiseKind.UNIFORM_X


@dataclass(frozen=True)
class NoiseSpec:
    """Immutable description of a noise channel.

    ``targets`` is ``None`` for automatic class-dependent targets, in which
    class ``k`` flips to ``(k+1, ..., k+spread) mod c``.
    """

    kind: NoiseKind
    epsilon: float
    spread: int | None = None
    targets: tuple[tuple[int, ...], ...] | None = None
    alpha: float | None = None

    def __post_init__(self):
        kind = NoiseKind.parse(self.kind)
        object.__setattr__(self, "kind", kind)
        eps = float(self.epsilon)
        if not 0.0 <= eps <= 1.0:
            raise ParameterError(f"epsilon must lie in [0, 1], got {self.epsilon!r}")
        object.__setattr__(self, "epsilon", eps)
        if kind is NoiseKind.CLASS_DEPENDENT:
            if self.spread is None or int(self.spread) != self.spread or self.spread < 1:
                raise ParameterError("class_dependent noise needs an integer spread >= 1")
            object.__setattr__(self, "spread", int(self.spread))
            if self.targets is not None:
                targets = tuple(tuple(int(t) for t in row) for row in self.targets)
                _check_targets(targets, self.spread)
                object.__setattr__(self, "targets", targets)
        elif self.spread is not None or self.targets is not None:
            raise ParameterError("spread/targets only apply to class_dependent noise")
        if self.alpha is not None:
            if not kind.needs_alpha:
                raise ParameterError(f"{kind.value} noise takes no alpha")
            alpha = float(self.alpha)
            if not (alpha > 0 and math.isfinite(alpha)):
                raise ParameterError("alpha must be positive and finite")
            object.__setattr__(self, "alpha", alpha)

    @property
    def calibrated(self) -> bool:
        return not self.kind.needs_alpha or self.alpha is not None

    def resolved_targets(self, c: int) -> np.ndarray:
        """Target table of shape ``(c, spread)`` for class-dependent noise."""
        if self.kind is not NoiseKind.CLASS_DEPENDENT:
            raise ParameterError("targets only exist for class_dependent noise")
        if self.spread > c - 1:
            raise ParameterError(f"spread {self.spread} exceeds c - 1 = {c - 1}")
        if self.targets is None:
            return (np.arange(c)[:, None] + np.arange(1, self.spread + 1)[None, :]) % c
        if len(self.targets) != c:
            raise ParameterError(f"need one target list per class ({c}), got {len(self.targets)}")
        table = np.asarray(self.targets, dtype=np.int64)
        if table.min() < 0 or table.max() >= c:
            raise ParameterError("target class out of range")
        return table

    def to_dict(self) -> dict:
        out = {"kind": self.kind.value, "epsilon": self.epsilon}
        if self.spread is not None:
            out["spread"] = self.spread
        if self.targets is not None:
            out["targets"] = [list(t) for t in self.targets]
        if self.alpha is not None:
            out["alpha"] = self.alpha
        return out

    @classmethod
    def from_dict(cls, obj: dict) -> NoiseSpec:
        unknown = set(obj) - {"kind", "epsilon", "spread", "targets", "alpha"}
        if unknown:
            raise ParameterError(f"unknown NoiseSpec fields: {sorted(unknown)}")
        targets = obj.get("targets")
        if targets == "auto":
            targets = None
        return cls(obj["kind"], obj["epsilon"], obj.get("spread"), targets, obj.get("alpha"))

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_json(cls, text: str) -> NoiseSpec:
        return cls.from_dict(json.loads(text))


def _check_targets(targets, spread):
    for k, row in enumerate(targets):
        if len(row) != spread:
            raise ParameterError(f"class {k}: expected {spread} targets, got {len(row)}")
        if len(set(row)) != len(row):
            raise ParameterError(f"class {k}: duplicate targets {row}")
        if k in row:
            raise ParameterError(f"class {k}: a class cannot be its own flip target")


@dataclass(frozen=True, eq=False)
class TransitionMatrix:
    """Row-stochastic matrix; entry ``(k, i)`` is ``P[Y=i | Y*=k]``."""

    rows: np.ndarray

    def __post_init__(self):
        rows = np.array(self.rows, dtype=float)
        if rows.ndim != 2 or rows.shape[0] != rows.shape[1]:
            raise ParameterError("transition matrix must be square")
        if np.any(rows < 0) or np.any(rows > 1):
            raise ParameterError("transition entries must lie in [0, 1]")
        if np.max(np.abs(rows.sum(axis=1) - 1.0)) > 1e-12:
            raise ParameterError("transition rows must sum to 1")
        rows.setflags(write=False)
        object.__setattr__(self, "rows", rows)

    def __array__(self, dtype=None, copy=None):
        return self.rows if dtype is None else self.rows.astype(dtype)

    def to_csv(self) -> str:
        out = io.StringIO()
        writer = csv.writer(out, lineterminator="\n")
        c = self.rows.shape[0]
        writer.writerow(["true_class"] + [f"p{i}" for i in range(c)])
        for k, row in enumerate(self.rows):
            writer.writerow([k] + [repr(float(v)) for v in row])
        return out.getvalue()


def uniform_channel(c: int, epsilon: float) -> TransitionMatrix:
    if c < 2:
        raise ParameterError("uniform noise needs c >= 2")
    if not 0.0 <= epsilon <= 1.0:
        raise ParameterError(f"epsilon must lie in [0, 1], got {epsilon!r}")
    rows = np.full((c, c), epsilon / (c - 1))
    np.fill_diagonal(rows, 1.0 - epsilon)
    return TransitionMatrix(rows)


def class_channel(c: int, epsilon: float, spread: int, targets="auto") -> TransitionMatrix:
    """Flip mass ``epsilon`` split evenly over ``spread`` designated targets per class."""
    spec = NoiseSpec(NoiseKind.CLASS_DEPENDENT, epsilon, spread, None if targets == "auto" else targets)
    table = spec.resolved_targets(c)
    rows = np.zeros((c, c))
    rows[np.arange(c)[:, None], table] = epsilon / spread
    np.fill_diagonal(rows, 1.0 - epsilon)
    return TransitionMatrix(rows)


def transition_matrix(spec: NoiseSpec, c: int) -> TransitionMatrix:
    if spec.kind is NoiseKind.UNIFORM:
        return uniform_channel(c, spec.epsilon)
    if spec.kind is NoiseKind.CLASS_DEPENDENT:
        return class_channel(c, spec.epsilon, spec.spread, "auto" if spec.targets is None else spec.targets)
    raise ParameterError("feature-dependent channels have no single transition matrix")


# --- per-sample channel rows -------------------------------------------------


def _own_and_best_wrong(log_post: np.ndarray, labels: np.ndarray):
    n, c = log_post.shape
    rows = np.arange(n)
    own = log_post[rows, labels]
    masked = np.where(np.isneginf(log_post), -np.finfo(float).max, log_post)
    masked[rows, labels] = -np.inf
    best = masked.argmax(axis=1)
    return own, log_post[rows, best], best


def log_keep_weights(kind: NoiseKind, log_post: np.ndarray, labels: np.ndarray) -> np.ndarray:
    """Log of the unscaled keep weight ``w(x)`` for the calibrated kinds."""
    own, best_wrong, _ = _own_and_best_wrong(log_post, labels)
    if kind is NoiseKind.RESAMPLING:
        return own
    if kind is NoiseKind.INVERSE_RESAMPLING:
        return -np.maximum(own, _LOG_INVERSE_FLOOR)
    if kind is NoiseKind.GAP_MIN:
        return own - best_wrong
    if kind is NoiseKind.GAP_MAX:
        return best_wrong - own
    raise ParameterError(f"{kind.value} has no keep weight")


def keep_probability(spec: NoiseSpec, log_post: np.ndarray, labels: np.ndarray) -> np.ndarray:
    n = log_post.shape[0]
    if spec.epsilon == 0.0:
        return np.ones(n)
    if not spec.kind.needs_alpha:
        return np.full(n, 1.0 - spec.epsilon)
    if spec.alpha is None:
        raise StateError(f"{spec.kind.value} channel used before calibration")
    if spec.epsilon == 1.0:
        return np.zeros(n)
    lw = log_keep_weights(spec.kind, log_post, labels)
    with np.errstate(over="ignore", invalid="ignore"):
        return np.exp(np.minimum(math.log(spec.alpha) + lw, 0.0))


def flip_distribution(spec: NoiseSpec, log_post: np.ndarray, labels: np.ndarray) -> np.ndarray:
    """Distribution of the flipped label given that a flip happens; zero on the true class."""
    n, c = log_post.shape
    rows = np.arange(n)
    if spec.kind is NoiseKind.UNIFORM:
        dist = np.full((n, c), 1.0 / (c - 1))
    elif spec.kind is NoiseKind.CLASS_DEPENDENT:
        table = spec.resolved_targets(c)
        dist = np.zeros((n, c))
        dist[rows[:, None], table[labels]] = 1.0 / spec.spread
    elif spec.kind in (NoiseKind.GAP_MIN, NoiseKind.GAP_MAX):
        _, _, best = _own_and_best_wrong(log_post, labels)
        dist = np.zeros((n, c))
        dist[rows, best] = 1.0
    else:
        masked = log_post.copy()
        masked[rows, labels] = -np.inf
        top = masked.max(axis=1, keepdims=True)
        degenerate = np.isneginf(top[:, 0])
        top[degenerate] = 0.0
        dist = np.exp(masked - top)
        dist[degenerate] = 1.0
        dist[rows, labels] = 0.0
        dist /= dist.sum(axis=1, keepdims=True)
    dist[rows, labels] = 0.0
    return dist


def channel_rows(spec: NoiseSpec, log_post: np.ndarray, labels) -> np.ndarray:
    """``eta_{k.}(x)`` for each row of ``log_post`` with true class ``labels``."""
    log_post = np.atleast_2d(np.asarray(log_post, dtype=float))
    n, c = log_post.shape
    if c < 2:
        raise ParameterError("noise channels need c >= 2")
    labels = np.broadcast_to(np.asarray(labels, dtype=np.int64), (n,))
    if labels.min() < 0 or labels.max() >= c:
        raise ParameterError("true class out of range")
    keep = keep_probability(spec, log_post, labels)
    eta = flip_distribution(spec, log_post, labels) * (1.0 - keep)[:, None]
    eta[np.arange(n), labels] = keep
    return eta


def eta_from_posterior(spec: NoiseSpec, posterior, k) -> np.ndarray:
    """Channel row(s) from clean posterior vector(s) ``m*(x)`` (shape ``(c,)`` or ``(n, c)``)."""
    posterior = np.asarray(posterior, dtype=float)
    with np.errstate(divide="ignore"):
        rows = channel_rows(spec, np.log(posterior), k)
    return rows[0] if posterior.ndim == 1 else rows


def eta_at(spec: NoiseSpec, mixture: GaussianMixture, x, k) -> np.ndarray:
    """Channel row ``eta_{k.}(x)``; batched when ``x`` is ``(n, d)``."""
    rows = channel_rows(spec, mixture.log_posterior(x), k)
    return rows[0] if np.ndim(x) == 1 else rows


def noisy_posterior(mixture: GaussianMixture, spec: NoiseSpec, x) -> np.ndarray:
    """``m_k(x) = sum_i eta_ik(x) m*_i(x)``."""
    log_post = mixture.log_posterior(x)
    post = np.exp(log_post)
    post /= post.sum(axis=1, keepdims=True)
    out = np.zeros_like(post)
    for i in range(mixture.n_classes):
        out += post[:, i : i + 1] * channel_rows(spec, log_post, i)
    return out[0] if np.ndim(x) == 1 else out


# --- calibration -------------------------------------------------------------


@dataclass(frozen=True)
class CalibrationResult:
    alpha: float
    achieved_flip_rate: float
    spec: NoiseSpec


def solve_clip_scale(log_weights, target: float, tolerance: float = 1e-4, max_steps: int = 200):
    """Find ``alpha`` with ``mean(min(1, alpha * w)) == target`` by bisection in ``log alpha``.

    Returns ``(alpha, achieved_mean)``. Weights of ``+inf`` always clip to 1
    and weights of 0 (``-inf`` in log) always give 0, which bounds the
    reachable range; targets outside it raise ``ConvergenceError``.
    """
    lw = np.asarray(log_weights, dtype=float).reshape(-1)
    if lw.size == 0:
        raise ParameterError("need at least one weight")
    if np.any(np.isnan(lw)):
        raise ParameterError("weights must not be NaN")
    finite = lw[np.isfinite(lw)]
    floor = float(np.mean(np.isposinf(lw)))
    ceiling = float(np.mean(~np.isneginf(lw)))

    def mean_at(a):
        with np.errstate(over="ignore"):
            return float(np.mean(np.exp(np.minimum(a + lw, 0.0))))

    if finite.size == 0:
        if abs(floor - target) > tolerance:
            raise ConvergenceError(f"target {target} unreachable: every weight is 0 or infinite")
        return 1.0, floor
    hi = -float(finite.min())
    lo = -float(finite.max()) - 60.0
    if target >= ceiling - tolerance * 1e-3:
        if ceiling < target - tolerance:
            raise ConvergenceError(f"target {target} above the reachable maximum {ceiling}")
        return math.exp(min(hi, 700.0)), mean_at(hi)
    if target < floor - tolerance:
        raise ConvergenceError(f"target {target} below the reachable minimum {floor}")
    value = mean_at(lo)
    a = lo
    for _ in range(max_steps):
        if abs(value - target) <= tolerance * 1e-2:
            break
        a = 0.5 * (lo + hi)
        value = mean_at(a)
        if value < target:
            lo = a
        else:
            hi = a
    if abs(value - target) > tolerance:
        raise ConvergenceError(f"bisection stalled at mean {value} for target {target}")
    return math.exp(min(a, 700.0)), value


def calibrate(
    spec: NoiseSpec, reference: LabeledDataset, mixture: GaussianMixture, tolerance: float = 1e-4
) -> CalibrationResult:
    """Choose ``alpha`` so the mean flip rate over ``reference`` equals ``spec.epsilon``."""
    if not spec.kind.needs_alpha:
        raise ParameterError(f"{spec.kind.value} noise does not need calibration")
    lw = log_keep_weights(spec.kind, mixture.log_posterior(reference.features), reference.true_labels)
    alpha, mean_keep = solve_clip_scale(lw, 1.0 - spec.epsilon, tolerance)
    calibrated = replace(spec, alpha=alpha)
    return CalibrationResult(alpha, 1.0 - mean_keep, calibrated)


def ensure_calibrated(spec, reference, mixture, tolerance=1e-4) -> NoiseSpec:
    if spec.calibrated:
        return spec
    return calibrate(spec, reference, mixture, tolerance).spec


def worst_case_channel(
    mixture: GaussianMixture, epsilon: float, reference: LabeledDataset, tolerance: float = 1e-4
) -> NoiseSpec:
    """Worst-case feature-dependent noise: the calibrated gap_max channel.

    Keep probability is inversely proportional to the ratio of the true-class
    posterior to the best wrong-class posterior, and every flip lands on that
    best wrong class, which moves decision boundaries the most.
    """
    return calibrate(NoiseSpec(NoiseKind.GAP_MAX, epsilon), reference, mixture, tolerance).spec


# --- application -------------------------------------------------------------

MODES = ("bernoulli", "exact_count")


def _class_log_post(n: int, c: int) -> np.ndarray:
    # feature-independent kinds never look at the posterior values
    return np.zeros((n, c))


def apply(
    spec: NoiseSpec,
    dataset: LabeledDataset,
    mixture: GaussianMixture | None = None,
    seed: int = 0,
    mode: str = "bernoulli",
    n_classes: int | None = None,
) -> LabeledDataset:
    """Draw noisy labels for ``dataset`` through ``spec``.

    ``bernoulli`` flips each sample independently with probability
    ``1 - eta_kk(x)``. ``exact_count`` flips exactly ``round(eps * n)``
    samples, chosen by weighted sampling without replacement with weights
    ``1 - eta_kk(x)``. Flip targets come from :func:`flip_distribution`.
    """
    if mode not in MODES:
        raise ParameterError(f"mode must be one of {MODES}")
    n = len(dataset)
    y = dataset.true_labels
    if mixture is not None:
        c = mixture.n_classes
        log_post = mixture.log_posterior(dataset.features) if n else np.zeros((0, c))
    else:
        if spec.kind.feature_dependent:
            raise ParameterError(f"{spec.kind.value} noise needs the mixture")
        c = n_classes if n_classes is not None else int(y.max()) + 1
        log_post = _class_log_post(n, c)
    if c < 2:
        raise ParameterError("noise channels need c >= 2")
    if n and y.max() >= c:
        raise ParameterError("label exceeds the class count")
    if not spec.calibrated:
        raise StateError(f"{spec.kind.value} channel used before calibration")
    if n == 0:
        return dataset.with_noisy_labels(y)

    keep = keep_probability(spec, log_post, y)
    dist = flip_distribution(spec, log_post, y)
    noisy = draw_noisy_labels(y, 1.0 - keep, dist, spec.epsilon, seed, mode)
    return dataset.with_noisy_labels(noisy)


def draw_noisy_labels(labels, flip_prob, flip_dist, epsilon: float, seed: int, mode: str = "bernoulli"):
    """Sample noisy labels given per-sample flip probabilities and target distributions.

    ``flip_dist`` rows are distributions over labels with zero mass on the
    true label. Three uniform streams (flip, target, tie-break) are drawn
    up front so both modes consume the generator identically.
    """
    if mode not in MODES:
        raise ParameterError(f"mode must be one of {MODES}")
    labels = np.asarray(labels)
    n, c = flip_dist.shape
    rng = np.random.default_rng(seed)
    u_flip = rng.random(n)
    u_target = rng.random(n)
    u_tie = rng.random(n)
    if mode == "bernoulli":
        flip = u_flip < flip_prob
    else:
        # Efraimidis-Spirakis keys log(u)/w; zero-weight samples sort last, ties by u_tie
        m = int(math.floor(epsilon * n + 0.5))
        positive = flip_prob > 0
        with np.errstate(divide="ignore"):
            key = np.where(positive, np.log(u_flip) / np.where(positive, flip_prob, 1.0), -np.inf)
        order = np.lexsort((-u_tie, -key))
        flip = np.zeros(n, dtype=bool)
        flip[order[:m]] = True
    cum = np.cumsum(flip_dist, axis=1)
    threshold = (1.0 - u_target) * cum[:, -1]
    targets = np.minimum((cum < threshold[:, None]).sum(axis=1), c - 1)
    return np.where(flip, targets, labels)


def transition_counts(true_labels, noisy_labels, c: int) -> np.ndarray:
    """Realized ``c x c`` counts, rows indexed by true class."""
    counts = np.zeros((c, c), dtype=np.int64)
    np.add.at(counts, (np.asarray(true_labels), np.asarray(noisy_labels)), 1)
    return counts
