"""Terminal payoffs h(S), the growth envelope check and the truncation operators."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Optional

import numpy as np

from .errors import ValidationError

KINDS = ("call", "put", "constant", "tabulated")


@dataclass(frozen=True)
class PayoffSpec:
    """European terminal payoff.

    ``offset`` is added to the base payoff and ``floor`` (if set) is applied
    last, so the evaluated payoff is ``max(base(S) + offset, floor)``.
    """

    kind: str
    strike: float = 0.0
    level: float = 0.0
    table_S: Optional[tuple] = None
    table_h: Optional[tuple] = None
    offset: float = 0.0
    floor: Optional[float] = None
    growth_A: Optional[float] = None
    growth_alpha: float = 0.25

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValidationError("payoff.kind", f"unknown kind {self.kind!r}; expected one of {KINDS}")
        if self.kind in ("call", "put") and not self.strike > 0.0:
            raise ValidationError("payoff.strike", f"must be > 0, got {self.strike!r}")
        if self.kind == "tabulated":
            if self.table_S is None or self.table_h is None or len(self.table_S) != len(self.table_h):
                raise ValidationError("payoff.table", "needs equal-length S and h columns")
            if len(self.table_S) < 1:
                raise ValidationError("payoff.table", "is empty")
            s = np.asarray(self.table_S, dtype=float)
            if np.any(s <= 0.0) or np.any(np.diff(s) <= 0.0):
                raise ValidationError("payoff.table", "S column must be positive and strictly increasing")
        if self.growth_A is not None and not self.growth_A > 0.0:
            raise ValidationError("payoff.growth_A", "must be > 0")
        if not self.growth_alpha > 0.0:
            raise ValidationError("payoff.growth_alpha", "must be > 0")

    def __call__(self, S):
        return evaluate(self, S)


def call(strike, **kw) -> PayoffSpec:
    return PayoffSpec("call", strike=float(strike), **kw)


def put(strike, **kw) -> PayoffSpec:
    return PayoffSpec("put", strike=float(strike), **kw)


def constant(level, **kw) -> PayoffSpec:
    return PayoffSpec("constant", level=float(level), **kw)


def tabulated(S, h, **kw) -> PayoffSpec:
    S = tuple(float(v) for v in np.asarray(S, dtype=float))
    h = tuple(float(v) for v in np.asarray(h, dtype=float))
    return PayoffSpec("tabulated", table_S=S, table_h=h, **kw)


def load_table_csv(path) -> PayoffSpec:
    """Read a two-column (S, h) CSV; a non-numeric first row is taken as a header."""
    rows = []
    with open(Path(path), newline="") as fh:
        for i, row in enumerate(csv.reader(fh)):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != 2:
                raise ValidationError("payoff.table", f"row {i + 1}: expected 2 columns, got {len(row)}")
            try:
                rows.append((float(row[0]), float(row[1])))
            except ValueError:
                if i == 0 and not rows:
                    continue
                raise ValidationError("payoff.table", f"row {i + 1}: non-numeric value") from None
    if not rows:
        raise ValidationError("payoff.table", "no data rows")
    S, h = zip(*rows)
    return tabulated(S, h)


def evaluate(spec: PayoffSpec, S):
    S_arr = np.asarray(S, dtype=float)
    if spec.kind == "call":
        h = np.maximum(S_arr - spec.strike, 0.0)
    elif spec.kind == "put":
        h = np.maximum(spec.strike - S_arr, 0.0)
    elif spec.kind == "constant":
        h = np.full_like(S_arr, spec.level)
    else:
        # np.interp extrapolates flat outside the table
        h = np.interp(S_arr, spec.table_S, spec.table_h)
    h = h + spec.offset
    if spec.floor is not None:
        h = np.maximum(h, spec.floor)
    if np.ndim(S) == 0:
        return float(h)
    return h


def shifted(spec: PayoffSpec, c: float) -> PayoffSpec:
    """h + c. A floor, if present, moves with the payoff."""
    floor = None if spec.floor is None else spec.floor + c
    return replace(spec, offset=spec.offset + float(c), floor=floor)


@dataclass(frozen=True)
class GrowthReport:
    passed: bool
    worst_ratio: float
    worst_S: float
    A: float
    alpha: float


def growth_check(spec: PayoffSpec, samples) -> GrowthReport:
    """Largest |h(S)| / (A exp(alpha ln^2 S)) over ``samples``; passes iff <= 1."""
    S = np.asarray(samples, dtype=float).ravel()
    if S.size == 0 or np.any(S <= 0.0):
        raise ValidationError("samples", "must be non-empty and positive")
    with np.errstate(over="ignore"):
        h = np.abs(evaluate(spec, S))
    A = spec.growth_A if spec.growth_A is not None else 1.0 + float(np.max(h))
    alpha = spec.growth_alpha
    # compare in log space; exp(alpha ln^2 S) overflows long before h does
    with np.errstate(divide="ignore"):
        log_ratio = np.log(h) - math.log(A) - alpha * np.log(S) ** 2
    ratio = np.exp(np.minimum(log_ratio, 700.0))
    ratio[~np.isfinite(h)] = np.inf
    k = int(np.argmax(ratio))
    worst = float(ratio[k])
    return GrowthReport(worst <= 1.0, worst, float(S[k]), float(A), float(alpha))


@dataclass(frozen=True)
class TruncationParams:
    epsilon: float
    floorN: float = 1.0

    def __post_init__(self):
        if not 0.0 < self.epsilon < 1.0:
            raise ValidationError("truncation.epsilon", "must lie in (0, 1)")
        if not self.floorN > 0.0:
            raise ValidationError("truncation.floorN", "must be > 0")


def smooth_ramp(x):
    """C^2 monotone ramp: 0 on [0, 1/2], 1 on [1, inf), quintic smoothstep between."""
    y = np.clip(2.0 * np.asarray(x, dtype=float) - 1.0, 0.0, 1.0)
    # clip: the polynomial rounds a few ulps above 1 just below y = 1
    return np.clip(y**3 * (10.0 - 15.0 * y + 6.0 * y**2), 0.0, 1.0)


def xi_epsilon(trunc: TruncationParams, S):
    """Cutoff equal to 1 on [eps, 1/eps] and 0 outside (eps/2, 2/eps)."""
    eps = trunc.epsilon
    S_arr = np.asarray(S, dtype=float)
    value = smooth_ramp(S_arr / eps) * (1.0 - smooth_ramp(S_arr * eps / 2.0))
    if np.ndim(S) == 0:
        return float(value)
    return value


def truncate_below(spec: PayoffSpec, N: float, gamma: float = 1.0) -> PayoffSpec:
    """Payoff S -> max(h(S), -N/gamma), so the initial datum gamma*h is floored at -N."""
    if not N > 0.0:
        raise ValidationError("truncation.N", "must be > 0")
    new_floor = -float(N) / float(gamma)
    if spec.floor is not None:
        new_floor = max(new_floor, spec.floor)
    return replace(spec, floor=new_floor)
