"""Two-hidden-layer tanh MLP with softmax output, trained by minibatch Adam.

The training loop runs in a compiled kernel when available and otherwise in
numpy (see :mod:`labelnoise._core`). Both follow the same update order, so
results agree to rounding; each backend on its own is bit-deterministic.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from labelnoise import _core
from labelnoise._core import _mlp_py
from labelnoise.bayes import AccuracyEstimate, argmax_lowest
from labelnoise.errors import NumericalError, ParameterError, ParseError
from labelnoise.mixture import LabeledDataset

HIDDEN = (10, 10)


@dataclass(frozen=True, eq=False)
class MLPParams:
    weights: tuple[np.ndarray, ...]
    biases: tuple[np.ndarray, ...]

    def __post_init__(self):
        if len(self.weights) != len(self.biases):
            raise ParameterError("one bias per weight matrix")
        for i, (W, b) in enumerate(zip(self.weights, self.biases)):
            if W.ndim != 2 or b.shape != (W.shape[1],):
                raise ParameterError(f"layer {i}: weight {W.shape} and bias {b.shape} disagree")
            if i and W.shape[0] != self.weights[i - 1].shape[1]:
                raise ParameterError(f"layer {i}: input width does not match previous layer")

    @property
    def shapes(self) -> list[int]:
        return [self.weights[0].shape[0]] + [W.shape[1] for W in self.weights]

    def as_list(self) -> list[np.ndarray]:
        out = []
        for W, b in zip(self.weights, self.biases):
            out += [W, b]
        return out

    @classmethod
    def from_list(cls, arrays) -> MLPParams:
        arrays = list(arrays)
        return cls(tuple(arrays[0::2]), tuple(arrays[1::2]))

    def copy(self) -> MLPParams:
        return MLPParams.from_list([np.array(a, dtype=float, copy=True) for a in self.as_list()])

    def all_finite(self) -> bool:
        return all(np.all(np.isfinite(a)) for a in self.as_list())

    def to_dict(self) -> dict:
        return {
            "architecture": self.shapes,
            "activation": "tanh",
            "layers": [
                {"weight_shape": list(W.shape), "weight": W.ravel().tolist(), "bias": b.tolist()}
                for W, b in zip(self.weights, self.biases)
            ],
        }

    @classmethod
    def from_dict(cls, obj: dict) -> MLPParams:
        try:
            weights, biases = [], []
            for layer in obj["layers"]:
                weights.append(np.asarray(layer["weight"], dtype=float).reshape(layer["weight_shape"]))
                biases.append(np.asarray(layer["bias"], dtype=float))
        except (KeyError, TypeError, ValueError) as exc:
            raise ParseError(f"malformed checkpoint: {exc}") from exc
        return cls(tuple(weights), tuple(biases))


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 0.001
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    epochs: int = 200
    batch_size: int = 32
    seed: int = 0
    hidden: tuple[int, ...] = field(default=HIDDEN)

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise ParameterError("learning_rate must be positive")
        if self.epochs < 1 or self.batch_size < 1:
            raise ParameterError("epochs and batch_size must be >= 1")
        if len(self.hidden) != 2:
            raise ParameterError("the network has exactly two hidden layers")


def init(d: int, c: int, seed: int, hidden=HIDDEN) -> MLPParams:
    """Glorot-uniform weights, zero biases."""
    if d < 1 or c < 2:
        raise ParameterError("need d >= 1 and c >= 2")
    rng = np.random.default_rng(seed)
    sizes = [d, *hidden, c]
    weights, biases = [], []
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        bound = math.sqrt(6.0 / (fan_in + fan_out))
        weights.append(rng.uniform(-bound, bound, size=(fan_in, fan_out)))
        biases.append(np.zeros(fan_out))
    return MLPParams(tuple(weights), tuple(biases))


def predict_proba(params: MLPParams, X) -> np.ndarray:
    X = np.atleast_2d(np.asarray(X, dtype=float))
    *_, z = _mlp_py.forward(params.as_list(), X)
    z = z - z.max(axis=1, keepdims=True)
    p = np.exp(z)
    return p / p.sum(axis=1, keepdims=True)


def predict(params: MLPParams, X) -> np.ndarray:
    X = np.atleast_2d(np.asarray(X, dtype=float))
    *_, z = _mlp_py.forward(params.as_list(), X)
    return argmax_lowest(z, tol=0.0)


def loss_and_grad(params: MLPParams, batch: LabeledDataset, label_source: str = "true"):
    """Mean cross-entropy over ``batch`` and its gradient as an ``MLPParams``."""
    if len(batch) == 0:
        raise ParameterError("batch must be nonempty")
    y = batch.labels(label_source)
    if y.max() >= params.shapes[-1]:
        raise ParameterError("label exceeds the network's class count")
    with np.errstate(over="ignore", invalid="ignore"):
        loss, grads = _mlp_py.loss_and_grad(params.as_list(), batch.features, y)
    if not math.isfinite(loss) or not all(np.all(np.isfinite(g)) for g in grads):
        raise NumericalError(
            f"non-finite loss or gradient (loss={loss!r}, max |x|={np.abs(batch.features).max():.3g})"
        )
    return loss, MLPParams.from_list(grads)


def train(
    dataset: LabeledDataset,
    config: TrainConfig = TrainConfig(),
    label_source: str = "noisy",
    n_classes: int | None = None,
    backend: str | None = None,
) -> MLPParams:
    """Minibatch Adam for ``config.epochs`` epochs with per-epoch seeded shuffles."""
    y = dataset.labels(label_source)
    if len(dataset) == 0:
        raise ParameterError("cannot train on an empty dataset")
    c = n_classes if n_classes is not None else int(max(y.max(), dataset.true_labels.max())) + 1
    params = init(dataset.dim, c, config.seed, config.hidden).copy()
    arrays = params.as_list()
    m_state = [np.zeros_like(a) for a in arrays]
    v_state = [np.zeros_like(a) for a in arrays]
    shuffle = np.random.default_rng([config.seed, 0x5EED])
    n = len(dataset)
    perms = np.stack([shuffle.permutation(n) for _ in range(config.epochs)]).astype(np.int64)
    kernel = _core.get_train_epochs(backend)
    X = np.ascontiguousarray(dataset.features, dtype=np.float64)
    try:
        kernel(
            arrays, m_state, v_state, X, np.ascontiguousarray(y, dtype=np.int64), perms,
            config.batch_size, config.learning_rate, config.adam_beta1, config.adam_beta2,
            config.adam_eps, 0,
        )
    except FloatingPointError as exc:
        raise NumericalError(f"training diverged: {exc}") from exc
    trained = MLPParams.from_list(arrays)
    if not trained.all_finite():
        raise NumericalError("training produced non-finite parameters")
    return trained


def evaluate(params: MLPParams, dataset: LabeledDataset, label_source: str = "true") -> AccuracyEstimate:
    y = dataset.labels(label_source)
    pred = predict(params, dataset.features)
    return AccuracyEstimate.from_counts(int(np.count_nonzero(pred == y)), len(dataset))


def save_checkpoint(params: MLPParams, path) -> None:
    Path(path).write_text(json.dumps(params.to_dict()) + "\n", encoding="utf-8")


def load_checkpoint(path) -> MLPParams:
    try:
        obj = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ParseError(f"invalid checkpoint JSON: {exc.msg}", exc.lineno) from exc
    return MLPParams.from_dict(obj)
