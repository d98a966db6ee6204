"""Time-marching solvers for the liquidity-shock integro-differential problem

    u_tau - (1/2) sigma^2 S^2 u_SS = F[tau; u, gamma h],   u(S, 0) = gamma h(S),
    F = -nu01 exp(u) (nu10 int_0^tau exp(-u(s)) ds + exp(-gamma h)) + kappa.

Both schemes share one discretization: Crank-Nicolson in the diffusion, the
trapezoid rule for F and for the memory integral. ``solve_direct`` reaches it
with one predictor-corrector pass per step; ``solve_monotone`` solves each
step exactly by a decreasing sequence of shifted linear solves started from
the supersolution c0 + M tau.
"""

from __future__ import annotations

import json
import logging
import math
import time
from dataclasses import asdict, dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy.linalg import LinAlgError, solve_banded

from . import memory
from .analysis import power_weight, weighted_norms
from .errors import (MonotonicityViolation, NoConvergence, NonFinite, SingularMatrix, ValidationError)
from .grid import Grid, Surface, apply_bs_operator, bs_operator_bands
from .memory import U_CAP, check_cap
from .params import ModelParams
from .payoff import PayoffSpec, evaluate, truncate_below

log = logging.getLogger(__name__)

SCHEMES = ("direct", "monotone")


@dataclass(frozen=True)
class SolverConfig:
    scheme: str = "direct"
    tol_iter: float = 1e-8
    max_iter: int = 200
    shift_N: Optional[float] = None
    bracket_M: Optional[float] = None
    u_cap: float = U_CAP
    weight_exponent: float = -4.0

    def __post_init__(self):
        if self.scheme not in SCHEMES:
            raise ValidationError("solver.scheme", f"must be one of {SCHEMES}, got {self.scheme!r}")
        if not self.tol_iter > 0.0:
            raise ValidationError("solver.tol_iter", "must be > 0")
        if int(self.max_iter) != self.max_iter or self.max_iter < 1:
            raise ValidationError("solver.max_iter", "must be an integer >= 1")
        if self.shift_N is not None and not self.shift_N >= 0.0:
            raise ValidationError("solver.shift_N", "must be >= 0")
        if not self.u_cap > 0.0:
            raise ValidationError("solver.u_cap", "must be > 0")


@dataclass
class SolveReport:
    scheme: str
    iterations: int = 1
    total_iterations: int = 0
    final_increment: float = 0.0
    max_abs_u: float = 0.0
    estimate_ratio: float = float("nan")
    wall_time_ms: float = 0.0
    max_positive_increment: float = 0.0
    lower_margin: float = float("inf")
    upper_excess: float = float("-inf")
    c0: Optional[float] = None
    M: Optional[float] = None
    N: Optional[float] = None

    def as_json_dict(self, include_timing: bool = True) -> dict:
        d = {
            "scheme": self.scheme,
            "iterations": self.iterations,
            "finalIncrement": self.final_increment,
            "maxAbsU": self.max_abs_u,
            "estimateRatio": self.estimate_ratio,
        }
        if include_timing:
            d["wallTimeMs"] = self.wall_time_ms
        d["totalIterations"] = self.total_iterations
        if self.scheme == "monotone":
            d.update(maxPositiveIncrement=self.max_positive_increment, lowerMargin=self.lower_margin,
                     upperExcess=self.upper_excess, c0=self.c0, M=self.M, N=self.N)
        return d

    def to_json(self, include_timing: bool = True) -> str:
        return json.dumps(self.as_json_dict(include_timing), indent=2, sort_keys=True)


def f_rhs(params: ModelParams, u_now, I, gamma_h, u_cap: float = U_CAP) -> np.ndarray:
    """Nodal F = -nu01 e^u (nu10 I + e^{-gamma h}) + kappa."""
    u_now = np.asarray(u_now, dtype=float)
    check_cap(u_now, u_cap)
    check_cap(gamma_h, u_cap, "gamma*h")
    if params.nu01 == 0.0:
        return np.full_like(u_now, params.kappa)
    return -params.nu01 * np.exp(u_now) * (params.nu10 * np.asarray(I) + np.exp(-np.asarray(gamma_h))) + params.kappa


class _CrankNicolson:
    """Cached bands for (1/dt + N - L/2) u_next = (1/dt + L/2) u_prev + g."""

    def __init__(self, grid: Grid, sigma: float, dtau: float):
        self.grid, self.sigma, self.dtau = grid, sigma, dtau
        lo, di, up = bs_operator_bands(grid, sigma)
        n = grid.n_space
        self.ab = np.zeros((3, n))
        self.ab[0, 1:] = -0.5 * up[:-1]
        self.ab[1] = 1.0 / dtau - 0.5 * di
        self.ab[2, :-1] = -0.5 * lo[1:]

    def explicit(self, u_prev):
        return u_prev / self.dtau + 0.5 * apply_bs_operator(self.grid, u_prev, self.sigma)

    def solve(self, N, rhs):
        ab = self.ab.copy()
        ab[1] = ab[1] + N
        try:
            out = solve_banded((1, 1), ab, rhs, check_finite=False)
        except LinAlgError as exc:
            raise SingularMatrix(str(exc)) from exc
        return out


def linear_parabolic_step(grid: Grid, N, u_prev, g, dtau: float, sigma: float) -> np.ndarray:
    """One shifted Crank-Nicolson step.

    Solves (I/dtau - L/2 + N) u_next = (I/dtau + L/2) u_prev + g, with L the
    discrete Black-Scholes operator. ``N`` may be a scalar or nodal array.
    """
    if not dtau > 0.0:
        raise ValidationError("dtau", "must be > 0")
    if np.any(np.asarray(N) < 0.0):
        raise ValidationError("N", "must be >= 0")
    cn = _CrankNicolson(grid, sigma, dtau)
    return cn.solve(N, cn.explicit(np.asarray(u_prev, dtype=float)) + g)


def _initial(params: ModelParams, payoff: PayoffSpec, grid: Grid, config: SolverConfig):
    gh = params.gamma * np.asarray(evaluate(payoff, grid.S), dtype=float)
    check_cap(gh, config.u_cap, "gamma*h")
    values = np.empty((grid.n_time + 1, grid.n_space))
    mem = np.zeros_like(values)
    values[0] = gh
    return gh, values, mem


def _check_finite(u, n):
    if not np.all(np.isfinite(u)):
        raise NonFinite(f"non-finite value at time level {n}")


def solve_direct(params: ModelParams, payoff: PayoffSpec, grid: Grid, config: Optional[SolverConfig] = None):
    """Predictor-corrector march: explicit F predictor, trapezoid-averaged F corrector."""
    config = config or SolverConfig()
    t0 = time.perf_counter()
    gh, u, I = _initial(params, payoff, grid, config)
    dt = grid.dtau
    cn = _CrankNicolson(grid, params.sigma, dt)
    F_now = f_rhs(params, u[0], I[0], gh, config.u_cap)
    for n in range(grid.n_time):
        base = cn.explicit(u[n])
        u_star = cn.solve(0.0, base + F_now)
        _check_finite(u_star, n + 1)
        I_star = I[n] + memory.trapezoid_increment(u[n], u_star, dt)
        F_star = f_rhs(params, u_star, I_star, gh, config.u_cap)
        u[n + 1] = cn.solve(0.0, base + 0.5 * (F_now + F_star))
        _check_finite(u[n + 1], n + 1)
        check_cap(u[n + 1], config.u_cap)
        I[n + 1] = I[n] + memory.trapezoid_increment(u[n], u[n + 1], dt)
        F_now = f_rhs(params, u[n + 1], I[n + 1], gh, config.u_cap)
    surface = Surface(grid, u, I, gh, meta={"scheme": "direct"})
    report = SolveReport("direct", iterations=1, total_iterations=grid.n_time)
    _finish(report, surface, config, t0)
    return surface, report


@dataclass(frozen=True)
class Bracket:
    c0: float
    M: float
    N: float


def derive_bracket(params: ModelParams, payoff: PayoffSpec, grid: Grid) -> Bracket:
    """Constants for the sub/supersolution pair -c0 - M tau <= u <= c0 + M tau.

    M = |kappa| + nu01 (1 + nu10) + 1 makes -c0 - M tau a subsolution (and
    M >= kappa makes c0 + M tau a supersolution); N bounds the u-derivative of
    F over the whole bracket, so N u + F is increasing there.
    """
    c0 = float(np.max(np.abs(params.gamma * np.asarray(evaluate(payoff, grid.S)))))
    M = abs(params.kappa) + params.nu01 * (1.0 + params.nu10) + 1.0
    N = _global_shift(params, c0, M, grid.horizon)
    if N > 1e8:
        log.info("global monotonizing constant N = %.3g; the per-slab shift is used instead", N)
    return Bracket(c0, M, N)


def _global_shift(params, c0, M, horizon):
    top = c0 + M * horizon
    if top > 700.0:
        return math.inf
    e_top = math.exp(top)
    return params.nu01 * e_top * (params.nu10 * horizon * e_top + math.exp(c0))


def solve_monotone(params: ModelParams, payoff: PayoffSpec, grid: Grid, config: Optional[SolverConfig] = None):
    """Monotone supersolution iteration, applied one time slab at a time.

    On slab (tau_n, tau_{n+1}] the past is fixed, so the discrete equation for
    v = u^{n+1} reads (1/dt - L/2) v - F(v)/2 = rhs. Starting from the
    supersolution c0 + M tau_{n+1}, each iterate solves the shifted problem

        (1/dt - L/2 + N_k) v_{k+1} = rhs + N_k v_k + F(v_k)/2,

    with N_k >= the Lipschitz constant of -F/2 on [lower bound, v_k]. The
    default shift is that local bound, nu01 B exp(v_k)/2 (B collects the
    memory and payoff terms); a fixed ``config.shift_N`` may be given instead.
    Iterates decrease node-wise and stay above the subsolution.
    """
    config = config or SolverConfig(scheme="monotone")
    t0 = time.perf_counter()
    bracket = derive_bracket(params, payoff, grid)
    c0 = bracket.c0
    M = bracket.M if config.bracket_M is None else float(config.bracket_M)
    if M < params.kappa:
        raise ValidationError("solver.bracket_M", f"must be >= kappa = {params.kappa}")
    if c0 + M * grid.horizon > config.u_cap:
        raise ValidationError(
            "payoff",
            f"bracket c0 + M*T = {c0 + M * grid.horizon:.4g} exceeds the exponent cap {config.u_cap}; "
            "the monotone scheme needs bounded data: apply truncate_below or xi_epsilon first",
        )
    gh, u, I = _initial(params, payoff, grid, config)
    dt = grid.dtau
    cn = _CrankNicolson(grid, params.sigma, dt)
    E = np.exp(-gh)
    report = SolveReport("monotone", iterations=0, c0=c0, M=M, N=bracket.N)
    F_now = f_rhs(params, u[0], I[0], gh, config.u_cap)
    for n in range(grid.n_time):
        tau1 = grid.tau[n + 1]
        upper, lower = c0 + M * tau1, -c0 - M * tau1
        rhs = cn.explicit(u[n]) + 0.5 * F_now
        decay = np.exp(-u[n])
        B = params.nu10 * (I[n] + 0.5 * dt * decay) + E
        v = np.full(grid.n_space, upper)
        history = []
        for k in range(1, config.max_iter + 1):
            I_v = I[n] + 0.5 * dt * (decay + np.exp(-v))
            F_v = f_rhs(params, v, I_v, gh, config.u_cap)
            shift = config.shift_N if config.shift_N is not None else 0.5 * params.nu01 * B * np.exp(v)
            v_new = cn.solve(shift, rhs + shift * v + 0.5 * F_v)
            _check_finite(v_new, n + 1)
            inc = v_new - v
            report.max_positive_increment = max(report.max_positive_increment, float(inc.max()))
            report.lower_margin = min(report.lower_margin, float((v_new - lower).min()))
            report.upper_excess = max(report.upper_excess, float((v_new - upper).max()))
            step = float(np.abs(inc).max())
            history.append(step)
            v = v_new
            if step < config.tol_iter:
                break
        else:
            raise NoConvergence(
                f"time level {n + 1}: increment {history[-1]:.3e} still >= tol {config.tol_iter:.1e} "
                f"after {config.max_iter} iterations", history)
        report.iterations = max(report.iterations, k)
        report.total_iterations += k
        report.final_increment = max(report.final_increment, history[-1])
        u[n + 1] = v
        I[n + 1] = I[n] + memory.trapezoid_increment(u[n], v, dt)
        F_now = f_rhs(params, u[n + 1], I[n + 1], gh, config.u_cap)
    surface = Surface(grid, u, I, gh, meta={"scheme": "monotone"})
    _finish(report, surface, config, t0)
    return surface, report


def solve(params, payoff, grid, config: Optional[SolverConfig] = None):
    config = config or SolverConfig()
    if config.scheme == "monotone":
        return solve_monotone(params, payoff, grid, config)
    return solve_direct(params, payoff, grid, config)


def estimate_ratio(surface: Surface, weight_exponent: float = -4.0) -> float:
    """(||u_tau||_{L2(0,T;L2_w)} + max_tau ||u||_{H1_w}) / (||u(0)||_{H1_w} + 1).

    u_tau is the backward difference between time levels.
    """
    ws = power_weight(weight_exponent)
    grid = surface.grid
    dt = grid.dtau
    udot = np.diff(surface.values, axis=0) / dt
    l2 = math.sqrt(sum(dt * weighted_norms(row, ws, grid)[0] ** 2 for row in udot))
    h1 = max(weighted_norms(row, ws, grid)[1] for row in surface.values)
    return (l2 + h1) / (weighted_norms(surface.values[0], ws, grid)[1] + 1.0)


def _finish(report: SolveReport, surface: Surface, config: SolverConfig, t0: float) -> None:
    report.max_abs_u = float(np.max(np.abs(surface.values)))
    report.estimate_ratio = estimate_ratio(surface, config.weight_exponent)
    report.wall_time_ms = 1e3 * (time.perf_counter() - t0)


@dataclass
class LadderReport:
    levels: list
    sup_differences: list = field(default_factory=list)
    max_increase: list = field(default_factory=list)

    def as_dict(self):
        return asdict(self)


def solve_unbounded(params: ModelParams, payoff: PayoffSpec, grid: Grid, config: Optional[SolverConfig],
                    levels: Sequence[float], tol: float = 1e-6):
    """Solve with initial data max(gamma h, -N) for increasing N.

    Successive solutions must not increase anywhere by more than ``tol``;
    ``sup_differences`` records the central-region sup distance between
    consecutive levels. Returns the last surface, its report and the ladder.
    """
    levels = [float(v) for v in levels]
    if not levels or any(b <= a for a, b in zip(levels, levels[1:])):
        raise ValidationError("levels", "must be a non-empty strictly increasing list")
    config = config or SolverConfig()
    mask = grid.central_mask()
    report = LadderReport(levels)
    prev = last = None
    for N in levels:
        surf, last = solve(params, truncate_below(payoff, N, params.gamma), grid, config)
        if prev is not None:
            increase = float(np.max(surf.values - prev.values))
            report.max_increase.append(increase)
            report.sup_differences.append(float(np.max(np.abs(surf.values[:, mask] - prev.values[:, mask]))))
            if increase > tol:
                raise MonotonicityViolation(
                    f"solution for N={N} exceeds the previous level by {increase:.3e} > {tol:.0e}", increase)
        prev = surf
    return prev, last, report
