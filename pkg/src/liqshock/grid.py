"""Log-price / time grids, the discrete Black-Scholes operator and the barrier function.

All PDE work happens in x = ln S, where (1/2) sigma^2 S^2 d^2/dS^2 becomes the
constant-coefficient operator (1/2) sigma^2 (d^2/dx^2 - d/dx).
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .errors import DomainError, ValidationError


@dataclass(frozen=True)
class Grid:
    x_min: float
    x_max: float
    n_space: int
    horizon: float
    n_time: int

    def __post_init__(self):
        if not (math.isfinite(self.x_min) and math.isfinite(self.x_max) and self.x_min < self.x_max):
            raise ValidationError("grid.x_min", f"need x_min < x_max, got [{self.x_min}, {self.x_max}]")
        if int(self.n_space) != self.n_space or self.n_space < 3:
            raise ValidationError("grid.n_space", f"must be an integer >= 3, got {self.n_space!r}")
        if int(self.n_time) != self.n_time or self.n_time < 1:
            raise ValidationError("grid.n_time", f"must be an integer >= 1, got {self.n_time!r}")
        if not self.horizon > 0.0:
            raise ValidationError("grid.horizon", f"must be > 0, got {self.horizon!r}")

    @property
    def dx(self) -> float:
        return (self.x_max - self.x_min) / (self.n_space - 1)

    @property
    def dtau(self) -> float:
        return self.horizon / self.n_time

    @cached_property
    def x(self) -> np.ndarray:
        return np.linspace(self.x_min, self.x_max, self.n_space)

    @cached_property
    def S(self) -> np.ndarray:
        return np.exp(self.x)

    @cached_property
    def tau(self) -> np.ndarray:
        return np.linspace(0.0, self.horizon, self.n_time + 1)

    def central_mask(self, center=None, half_width=None) -> np.ndarray:
        """Nodes within ``half_width`` of ``center`` (default: the central half of the grid)."""
        if center is None:
            center = 0.5 * (self.x_min + self.x_max)
        if half_width is None:
            half_width = 0.25 * (self.x_max - self.x_min)
        return np.abs(self.x - center) <= half_width + 1e-12

    def refined(self, factor: int = 2) -> "Grid":
        """Same domain with dx and dtau divided by ``factor``."""
        return Grid(self.x_min, self.x_max, (self.n_space - 1) * factor + 1, self.horizon, self.n_time * factor)


def build_grid(x_min, x_max, n_space, horizon, n_time) -> Grid:
    return Grid(float(x_min), float(x_max), int(n_space), float(horizon), int(n_time))


def default_grid(horizon=1.0, center=0.0) -> Grid:
    """Desk-scale grid: x in center +/- 4, 201 nodes, 200 steps per unit horizon."""
    return build_grid(center - 4.0, center + 4.0, 201, horizon, max(1, int(round(200 * horizon))))


def bs_operator_bands(grid: Grid, sigma: float):
    """Tridiagonal coefficients (lower, diag, upper) of the discrete operator L.

    Interior rows: (1/2) sigma^2 (central u_xx - central u_x). Boundary rows
    are zero: the far field is closed with S^2 u_SS = 0 (u linear in S), which
    keeps -L an M-matrix.
    """
    n, dx = grid.n_space, grid.dx
    half_var = 0.5 * sigma**2
    lo = np.full(n, half_var * (1.0 / dx**2 + 0.5 / dx))
    up = np.full(n, half_var * (1.0 / dx**2 - 0.5 / dx))
    lo[0] = lo[-1] = up[0] = up[-1] = 0.0
    # rows sum to zero in floating point too
    di = -(lo + up)
    # lo[i] multiplies u[i-1], up[i] multiplies u[i+1]
    return lo, di, up


def apply_bs_operator(grid: Grid, u, sigma: float) -> np.ndarray:
    """Nodal values of (1/2) sigma^2 S^2 u_SS."""
    u = np.asarray(u, dtype=float)
    if u.shape != (grid.n_space,):
        raise ValidationError("u", f"expected shape ({grid.n_space},), got {u.shape}")
    lo, _, up = bs_operator_bands(grid, sigma)
    # difference form annihilates constants exactly
    out = np.zeros_like(u)
    out[1:-1] = lo[1:-1] * (u[:-2] - u[1:-1]) + up[1:-1] * (u[2:] - u[1:-1])
    return out


@dataclass
class Surface:
    """Solution u(S, tau) and memory I(S, tau), stored time-major: ``values[n, i]``."""

    grid: Grid
    values: np.ndarray
    memory: np.ndarray
    gamma_h: np.ndarray
    meta: dict = field(default_factory=dict)

    def at_level(self, n: int) -> np.ndarray:
        return self.values[n]

    def to_csv(self, path) -> None:
        write_rows(
            path,
            ("x", "S", "tau", "u", "I"),
            _time_major(self.grid, self.grid.tau, self.values, self.memory),
        )


def _time_major(grid, times, *fields):
    x, S = grid.x, grid.S
    for n, t in enumerate(times):
        for i in range(grid.n_space):
            yield (x[i], S[i], t) + tuple(f[n, i] for f in fields)


def write_rows(path, header, rows) -> None:
    # repr gives the shortest round-trip decimal, independent of locale
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([repr(float(v)) for v in row])


@dataclass(frozen=True)
class BarrierParams:
    T1: float
    sigma: float

    def __post_init__(self):
        if not self.T1 > 0.0:
            raise ValidationError("barrier.T1", "must be > 0")
        if not self.sigma > 0.0:
            raise ValidationError("barrier.sigma", "must be > 0")


def _barrier_parts(bp: BarrierParams, S, tau):
    tau = np.asarray(tau, dtype=float)
    if np.any(tau >= bp.T1):
        raise DomainError(f"barrier undefined for tau >= T1 = {bp.T1}")
    s = bp.T1 - tau
    x = np.log(np.asarray(S, dtype=float))
    var = bp.sigma**2
    log_w = -0.5 * np.log(s) + (x + 0.5 * var * s) ** 2 / (2.0 * var * s)
    return x, s, var, log_w


def barrier_omega(bp: BarrierParams, S, tau):
    """(T1 - tau)^(-1/2) exp((ln S + sigma^2 (T1 - tau)/2)^2 / (2 sigma^2 (T1 - tau))).

    With the plus sign the barrier is annihilated by u_tau - (1/2) sigma^2 S^2 u_SS;
    its minimum over S sits on the ridge S = exp(-sigma^2 (T1 - tau)/2).
    """
    *_, log_w = _barrier_parts(bp, S, tau)
    out = np.exp(log_w)
    return float(out) if np.ndim(out) == 0 else out


def barrier_omega_dtau(bp: BarrierParams, S, tau):
    """Analytic tau-derivative of the barrier."""
    x, s, var, log_w = _barrier_parts(bp, S, tau)
    dlog = 0.5 / s + x**2 / (2.0 * var * s**2) - var / 8.0
    out = np.exp(log_w) * dlog
    return float(out) if np.ndim(out) == 0 else out


def barrier_window(alpha: float, sigma: float) -> float:
    """Upper bound min{1/(2 sigma^2 alpha), 4/sigma^2} on the admissible window length."""
    return min(1.0 / (2.0 * sigma**2 * alpha), 4.0 / sigma**2)
