"""Closed-form accuracy laws for uniform and class-dependent label noise.

Class-dependent noise with spread ``s`` behaves like uniform noise over
``s + 1`` classes, so every law takes ``s`` and uniform noise is the case
``s = c - 1``. The softmax base ``b`` of the clean-accuracy law is carried as
``lam = ln b`` because ``b = e^50`` overflows direct exponentiation.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field

from labelnoise.errors import ParameterError

_EXP_CLAMP = 700.0

CURVE_COLUMNS = ("epsilon", "noisy_acc", "clean_acc", "c", "s", "m_bar", "lambda")


@dataclass(frozen=True)
class TheoryParams:
    c: int
    epsilon: float
    m_bar: float
    lam: float = 50.0
    s: int | None = None

    def __post_init__(self):
        if int(self.c) != self.c or self.c < 2:
            raise ParameterError("c must be an integer >= 2")
        s = self.c - 1 if self.s is None else self.s
        if int(s) != s or not 1 <= s <= self.c - 1:
            raise ParameterError(f"spread must be an integer in [1, {self.c - 1}]")
        object.__setattr__(self, "s", int(s))
        if not 0.0 <= self.epsilon <= 1.0:
            raise ParameterError("epsilon must lie in [0, 1]")
        if not 0.0 < self.m_bar <= 1.0:
            raise ParameterError("m_bar must lie in (0, 1]")
        if not self.lam > 0:
            raise ParameterError("lambda (log of the softmax base) must be positive")

    @property
    def in_validity_region(self) -> bool:
        """The tipping point is a minimum only when ``m_bar > 1 / (s + 1)``."""
        return self.m_bar > 1.0 / (self.s + 1)


def noisy_posterior_uniform(m_star: float, epsilon: float, c: int) -> float:
    """True-class noisy posterior under uniform noise."""
    return m_star - (c * epsilon / (c - 1)) * m_star + epsilon / (c - 1)


def noisy_accuracy(params: TheoryParams) -> float:
    """Expected agreement with noisy test labels; quadratic in epsilon."""
    s, eps = params.s, params.epsilon
    q = eps * (s + 1) / s
    return params.m_bar * (1.0 - q) ** 2 + (eps / s) * (2.0 - q)


def clean_accuracy(params: TheoryParams) -> float:
    """Expected accuracy on clean test labels; logistic in epsilon."""
    s, eps, m = params.s, params.epsilon, params.m_bar
    g = ((s + 1) / s) * (2.0 * m - 1.0) * (eps - s / (s + 1))
    z = min(max(params.lam * g, -_EXP_CLAMP), _EXP_CLAMP)
    return m / (1.0 + math.exp(z))


def tipping_point(mode: str, c: int | None = None, s: int | None = None) -> float:
    """Noise level where accuracy collapses: ``(c-1)/c`` uniform, ``s/(s+1)`` class-dependent."""
    if mode == "uniform":
        if c is None or c < 2:
            raise ParameterError("uniform tipping point needs c >= 2")
        return (c - 1) / c
    if mode in ("class", "class_dependent"):
        if s is None or s < 1:
            raise ParameterError("class-dependent tipping point needs s >= 1")
        return s / (s + 1)
    raise ParameterError(f"unknown tipping-point mode {mode!r}")


@dataclass(frozen=True)
class CurveRow:
    epsilon: float
    noisy_acc: float
    clean_acc: float
    c: int
    s: int
    m_bar: float
    lam: float


@dataclass
class TheoryCurve:
    rows: list[CurveRow]
    warnings: list[str] = field(default_factory=list)

    def column(self, name: str) -> list[float]:
        attr = "lam" if name == "lambda" else name
        return [getattr(row, attr) for row in self.rows]

    def to_csv(self) -> str:
        out = io.StringIO()
        writer = csv.writer(out, lineterminator="\n")
        writer.writerow(CURVE_COLUMNS)
        for r in self.rows:
            writer.writerow([repr(r.epsilon), repr(r.noisy_acc), repr(r.clean_acc), r.c, r.s, repr(r.m_bar), repr(r.lam)])
        return out.getvalue()

    def to_dict(self) -> dict:
        return {
            "columns": list(CURVE_COLUMNS),
            "rows": [[r.epsilon, r.noisy_acc, r.clean_acc, r.c, r.s, r.m_bar, r.lam] for r in self.rows],
            "warnings": list(self.warnings),
        }


def curve(grid) -> TheoryCurve:
    """Evaluate both laws at every parameter set in ``grid``, one row each."""
    grid = list(grid)
    if not grid:
        raise ParameterError("curve needs a nonempty parameter grid")
    rows, warnings = [], []
    for p in grid:
        rows.append(CurveRow(p.epsilon, noisy_accuracy(p), clean_accuracy(p), p.c, p.s, p.m_bar, p.lam))
        if not p.in_validity_region:
            msg = f"m_bar={p.m_bar} <= 1/(s+1) for s={p.s}: the tipping point is a maximum, not a minimum"
            if msg not in warnings:
                warnings.append(msg)
    return TheoryCurve(rows, warnings)


def epsilon_grid(start: float, stop: float, step: float) -> list[float]:
    """Inclusive grid ``start, start+step, ...`` up to ``stop`` (endpoint kept within 1e-12)."""
    if not step > 0:
        raise ParameterError("grid step must be positive")
    if stop < start:
        raise ParameterError("grid stop must not precede start")
    count = int(math.floor((stop - start) / step + 1e-9)) + 1
    values = [start + i * step for i in range(count)]
    # snap to the decimal grid so 0.1 * 3 prints as 0.3
    values = [round(v, 12) for v in values]
    if abs(values[-1] - stop) <= 1e-12:
        values[-1] = stop
    return values
