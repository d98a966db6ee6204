"""Certainty equivalents r0, r1 and buyer's indifference prices p, q from a solved surface."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DomainError, ValidationError
from .grid import Grid, Surface, write_rows
from .params import MertonFactors, ModelParams, evaluate_factors


def r_from_u(surface: Surface, params: ModelParams):
    """(r0, r1) on the tau levels of ``surface``.

    r0 = u + nu10 tau; r1 solves its ODE in closed form,
    r1 = nu10 tau - ln(nu10 I + exp(-gamma h)).
    """
    tau = surface.grid.tau[:, None]
    arg = params.nu10 * surface.memory + np.exp(-surface.gamma_h)[None, :]
    if not np.all(arg > 0.0):
        raise DomainError("log argument nu10 I + exp(-gamma h) underflowed to 0")
    r0 = surface.values + params.nu10 * tau
    r1 = params.nu10 * tau - np.log(arg)
    return r0, r1


@dataclass
class PriceSurfaces:
    """Prices indexed by calendar time: row j is t_j = T - tau_{n-j} (ascending)."""

    grid: Grid
    t: np.ndarray
    p: np.ndarray
    q: np.ndarray
    r0: np.ndarray
    r1: np.ndarray

    def to_csv(self, path) -> None:
        x, S = self.grid.x, self.grid.S

        def rows():
            for j, t in enumerate(self.t):
                for i in range(self.grid.n_space):
                    yield (x[i], S[i], t, self.p[j, i], self.q[j, i], self.r0[j, i], self.r1[j, i])

        write_rows(path, ("x", "S", "t", "p", "q", "r0", "r1"), rows())


def indifference_prices(surface: Surface, params: ModelParams, factors: MertonFactors) -> PriceSurfaces:
    grid = surface.grid
    if abs(grid.horizon - params.T) > 1e-12 * max(1.0, params.T):
        raise ValidationError("grid.horizon", f"must equal T = {params.T} to reconstruct prices")
    tau = grid.tau
    t = params.T - tau
    t[-1] = 0.0
    F0, F1, _, _ = evaluate_factors(factors, t)
    r0, r1 = r_from_u(surface, params)
    g = params.gamma
    p = (r0 + np.log(F0)[:, None]) / g
    q = (r1 + np.log(F1)[:, None]) / g
    # flip tau levels to ascending calendar time
    return PriceSurfaces(grid, t[::-1].copy(), p[::-1].copy(), q[::-1].copy(), r0[::-1].copy(), r1[::-1].copy())


def value_function(R, X, gamma: float):
    """Exponential-utility value -exp(-gamma X) exp(-gamma R)."""
    e = -gamma * (np.asarray(X, dtype=float) + np.asarray(R, dtype=float))
    if np.any(np.abs(e) > 500.0):
        raise OverflowError("exponent of the value function exceeds the cap 500")
    out = -np.exp(e)
    return float(out) if np.ndim(out) == 0 else out
