"""Center-based label noise for datasets given as precomputed feature vectors.

Each class gets a center (the mean of its feature vectors). Class ``k`` may
only flip to its ``s`` nearest other-class centers.

``class_dependent``
    Every sample flips with probability ``eps``, uniformly over those
    ``s`` targets.
``feature_dependent``
    Sample ``i`` flips with probability ``clip(alpha / (delta + dist_i))``,
    where ``dist_i`` is the distance to the nearest candidate center and
    ``alpha`` is calibrated so the mean flip rate is ``eps``. The target is
    drawn with probability proportional to ``1 / (delta + distance)`` over
    the candidates.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field

import numpy as np

from labelnoise import channels
from labelnoise.errors import ParameterError, ParseError

DELTA = 1e-9
MODES = ("class_dependent", "feature_dependent")


@dataclass(frozen=True, eq=False)
class EmbeddedDataset:
    """Ids, 0-based contiguous labels and an ``(n, d)`` feature matrix.

    ``label_values[k]`` is the original label that was remapped to ``k``.
    """

    ids: tuple[str, ...]
    labels: np.ndarray
    features: np.ndarray
    label_values: tuple[int, ...] | None = None

    def __post_init__(self):
        ids = tuple(str(i) for i in self.ids)
        labels = np.asarray(self.labels).astype(np.int64)
        X = np.asarray(self.features, dtype=float)
        if X.ndim != 2 or len(ids) != labels.size or X.shape[0] != labels.size:
            raise ParameterError("ids, labels and feature rows must have the same length")
        if labels.size == 0:
            raise ParameterError("dataset is empty")
        c = int(labels.max()) + 1
        if labels.min() < 0 or np.any(np.bincount(labels, minlength=c) == 0):
            raise ParameterError("labels must be 0..c-1 with every class present")
        if not np.all(np.isfinite(X)):
            raise ParameterError("features must be finite")
        object.__setattr__(self, "ids", ids)
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "features", X)
        if self.label_values is None:
            object.__setattr__(self, "label_values", tuple(range(c)))

    @property
    def n_classes(self) -> int:
        return int(self.labels.max()) + 1

    def __len__(self) -> int:
        return self.labels.size


def load_features(path, format: str = "csv", remap: bool = False) -> EmbeddedDataset:
    """Parse ``id,label,f0,...,f{d-1}``.

    Labels must be contiguous from 0 unless ``remap`` is set, in which case
    sorted distinct labels are mapped to ``0..c-1`` and recorded in
    ``label_values``.
    """
    if format != "csv":
        raise ParameterError(f"unsupported feature format {format!r}")
    with open(path, newline="", encoding="utf-8") as fh:
        return parse_features(fh, remap=remap)


def parse_features(stream, remap: bool = False) -> EmbeddedDataset:
    reader = csv.reader(stream)
    header = next(reader, None)
    if not header or header[:2] != ["id", "label"]:
        raise ParseError("header must start with id,label", 1)
    d = len(header) - 2
    if d < 1 or header[2:] != [f"f{j}" for j in range(d)]:
        raise ParseError("feature columns must be f0..f{d-1}", 1)
    ids, labels, feats = [], [], []
    for lineno, row in enumerate(reader, start=2):
        if not row:
            continue
        if len(row) != d + 2:
            raise ParseError(f"expected {d + 2} fields, got {len(row)}", lineno)
        try:
            labels.append(int(row[1]))
            values = [float(v) for v in row[2:]]
        except ValueError as exc:
            raise ParseError(str(exc), lineno) from exc
        if not all(math.isfinite(v) for v in values):
            raise ParseError("non-finite feature value", lineno)
        ids.append(row[0])
        feats.append(values)
    if not ids:
        raise ParseError("no data rows")
    raw = np.asarray(labels, dtype=np.int64)
    values = np.unique(raw)
    if not np.array_equal(values, np.arange(values.size)):
        if not remap:
            missing = sorted(set(range(int(values.max()) + 1)) - set(values.tolist()))
            raise ParseError(
                f"labels are not contiguous from 0 (missing {missing[:5]}, min {int(values.min())}); "
                "pass remap=True to renumber them"
            )
        mapped = np.searchsorted(values, raw)
        return EmbeddedDataset(ids, mapped, np.asarray(feats), tuple(int(v) for v in values))
    return EmbeddedDataset(ids, raw, np.asarray(feats))


@dataclass(frozen=True, eq=False)
class CenterTable:
    centers: np.ndarray
    neighbor_lists: np.ndarray  # (c, s), nearest first

    @property
    def spread(self) -> int:
        return self.neighbor_lists.shape[1]


def class_centers(dataset: EmbeddedDataset, s: int) -> CenterTable:
    """Class means and each class's ``s`` nearest other-class centers (ties to lower index)."""
    c = dataset.n_classes
    if int(s) != s or not 1 <= s <= c - 1:
        raise ParameterError(f"spread must be an integer in [1, {c - 1}]")
    centers = np.stack([dataset.features[dataset.labels == k].mean(axis=0) for k in range(c)])
    dist = np.linalg.norm(centers[:, None, :] - centers[None, :, :], axis=-1)
    np.fill_diagonal(dist, np.inf)
    order = np.argsort(dist, axis=1, kind="stable")[:, : int(s)]
    return CenterTable(centers, order)


def center_channel(table: CenterTable, epsilon: float) -> channels.TransitionMatrix:
    """Class-dependent transition matrix implied by the center neighbor lists."""
    c = table.centers.shape[0]
    return channels.class_channel(c, epsilon, table.spread, [tuple(row) for row in table.neighbor_lists])


@dataclass
class InjectionResult:
    noisy_labels: np.ndarray
    flip_mask: np.ndarray
    report: dict = field(default_factory=dict)

    def to_csv(self, dataset: EmbeddedDataset) -> str:
        out = io.StringIO()
        writer = csv.writer(out, lineterminator="\n")
        writer.writerow(["id", "label", "noisy_label", "flipped"])
        values = dataset.label_values
        for i, ident in enumerate(dataset.ids):
            writer.writerow(
                [ident, values[dataset.labels[i]], values[self.noisy_labels[i]], int(self.flip_mask[i])]
            )
        return out.getvalue()

    def report_json(self) -> str:
        return json.dumps(self.report) + "\n"


def inject(
    dataset: EmbeddedDataset,
    epsilon: float,
    s: int,
    mode: str = "class_dependent",
    seed: int = 0,
    count_mode: str = "bernoulli",
    tolerance: float = 1e-4,
) -> InjectionResult:
    if mode not in MODES:
        raise ParameterError(f"mode must be one of {MODES}")
    if not 0.0 <= epsilon <= 1.0:
        raise ParameterError("epsilon must lie in [0, 1]")
    table = class_centers(dataset, s)
    y = dataset.labels
    n, c = len(dataset), dataset.n_classes
    candidates = table.neighbor_lists[y]  # (n, s)
    rows = np.arange(n)[:, None]
    report = {"epsilon": epsilon, "mode": mode, "s": int(s), "seed": seed, "count_mode": count_mode}

    if mode == "class_dependent":
        flip_prob = np.full(n, epsilon)
        target_w = np.ones(candidates.shape)
    else:
        dist = np.linalg.norm(dataset.features[:, None, :] - table.centers[candidates], axis=-1)
        target_w = 1.0 / (DELTA + dist)
        log_w = -np.log(DELTA + dist.min(axis=1))
        if epsilon in (0.0, 1.0):
            flip_prob = np.full(n, epsilon)
        else:
            alpha, _ = channels.solve_clip_scale(log_w, epsilon, tolerance)
            flip_prob = np.exp(np.minimum(math.log(alpha) + log_w, 0.0))
            report["alpha"] = alpha
        report["expected_rate"] = float(flip_prob.mean())

    flip_dist = np.zeros((n, c))
    flip_dist[rows, candidates] = target_w / target_w.sum(axis=1, keepdims=True)
    noisy = channels.draw_noisy_labels(y, flip_prob, flip_dist, epsilon, seed, count_mode)
    flips = noisy != y
    report["realized_rate"] = float(flips.mean())
    report["transition_counts"] = channels.transition_counts(y, noisy, c).tolist()
    report["neighbor_lists"] = table.neighbor_lists.tolist()
    if dataset.label_values != tuple(range(c)):
        report["label_remap"] = {str(k): v for k, v in enumerate(dataset.label_values)}
    return InjectionResult(noisy, flips, report)


def transition_tv(counts, matrix) -> float:
    """Largest per-row total-variation distance between realized frequencies and ``matrix``."""
    counts = np.asarray(counts, dtype=float)
    totals = counts.sum(axis=1, keepdims=True)
    freq = np.divide(counts, totals, out=np.zeros_like(counts), where=totals > 0)
    return float(0.5 * np.abs(freq - np.asarray(matrix)).sum(axis=1).max())
