"""Discrete weighted-Sobolev tools and verification harnesses.

Norms and the bilinear form use trapezoid quadrature in S over the grid nodes,
with S u'(S) taken as the x-derivative (S d/dS = d/dx) by second-order
differences.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from typing import Callable, Optional

import numpy as np
from scipy import integrate

from .errors import AuditFailure, ValidationError
from .grid import Grid, Surface
from .payoff import PayoffSpec, evaluate


@dataclass(frozen=True)
class WeightSpec:
    """Weight w(S): either (1+S)^p with p < -3, or user callables w, w', w''.

    For custom weights ``C`` is the claimed bound on |S w'/w| and |S^2 w''/w|;
    when omitted it is measured on the grid.
    """

    kind: str = "power"
    exponent: float = -4.0
    w: Optional[Callable] = None
    dw: Optional[Callable] = None
    d2w: Optional[Callable] = None
    C_claim: Optional[float] = None

    def __post_init__(self):
        if self.kind == "power":
            if not self.exponent < -3.0:
                raise ValidationError("weight.exponent", f"must be < -3, got {self.exponent!r}")
        elif self.kind == "custom":
            if self.w is None or self.dw is None or self.d2w is None:
                raise ValidationError("weight", "custom weight needs w, dw and d2w")
        else:
            raise ValidationError("weight.kind", f"unknown kind {self.kind!r}")

    def values(self, S):
        S = np.asarray(S, dtype=float)
        if self.kind == "power":
            return (1.0 + S) ** self.exponent
        return np.broadcast_to(np.asarray(self.w(S), dtype=float), S.shape).copy()

    def log_derivative_ratios(self, S):
        """(S w'/w, S^2 w''/w) at S."""
        S = np.asarray(S, dtype=float)
        if self.kind == "power":
            p = self.exponent
            return p * S / (1.0 + S), p * (p - 1.0) * S**2 / (1.0 + S) ** 2
        w = self.values(S)
        dw = np.broadcast_to(np.asarray(self.dw(S), float), S.shape)
        d2w = np.broadcast_to(np.asarray(self.d2w(S), float), S.shape)
        return S * dw / w, S**2 * d2w / w

    @property
    def C(self) -> Optional[float]:
        if self.kind == "power":
            p = self.exponent
            # suprema of |p S/(1+S)| and |p(p-1) S^2/(1+S)^2|, both approached as S -> inf
            return max(abs(p), abs(p * (p - 1.0)))
        return self.C_claim

    @property
    def theta(self) -> float:
        if self.kind == "power":
            return -1.0 / (self.exponent + 1.0)
        return _custom_theta(self.w)


def power_weight(exponent=-4.0) -> WeightSpec:
    return WeightSpec("power", float(exponent))


def _custom_theta(w) -> float:
    head, _ = integrate.quad(lambda s: float(w(s)), 0.0, 1.0, limit=200)
    # tail over [1, inf) as an integral in y = ln S, truncated where it is judged
    total_tail = 0.0
    prev = None
    for upper in (10.0, 20.0, 40.0, 80.0, 160.0):
        val, _ = integrate.quad(lambda y: float(w(math.exp(y))) * math.exp(y), 0.0, upper, limit=400)
        if prev is not None and abs(val - prev) <= 1e-9 * max(1.0, abs(val)):
            total_tail = val
            break
        prev = val
    else:
        return math.inf
    return head + total_tail


def s_derivative(u, grid: Grid) -> np.ndarray:
    """S u'(S) at the nodes, i.e. du/dx."""
    return np.gradient(np.asarray(u, dtype=float), grid.dx, edge_order=2)


def _trap(f, grid: Grid) -> float:
    return float(np.trapezoid(f, grid.S))


def weighted_norms(u, ws: WeightSpec, grid: Grid):
    """(||u||_0, ||u||_1) in L^2_w and H^1_w."""
    u = np.asarray(u, dtype=float)
    w = ws.values(grid.S)
    su = s_derivative(u, grid)
    n0_sq = _trap(u * u * w, grid)
    n1_sq = n0_sq + _trap(su * su * w, grid)
    return math.sqrt(n0_sq), math.sqrt(n1_sq)


def inner_w(u, v, ws: WeightSpec, grid: Grid) -> float:
    return _trap(np.asarray(u) * np.asarray(v) * ws.values(grid.S), grid)


@dataclass(frozen=True)
class WeightReport:
    C: Optional[float]
    C_measured: float
    theta: float
    theta_measured: float
    positive: bool
    passed: bool

    def as_dict(self):
        return asdict(self)


def weight_check(ws: WeightSpec, grid: Grid) -> WeightReport:
    S = grid.S
    w = ws.values(S)
    r1, r2 = ws.log_derivative_ratios(S)
    C_measured = float(max(np.max(np.abs(r1)), np.max(np.abs(r2))))
    theta = ws.theta
    theta_grid = _trap(w, grid)
    positive = bool(np.all(w > 0.0))
    C = ws.C if ws.C is not None else C_measured
    passed = positive and math.isfinite(theta) and theta > 0.0 and C_measured <= C * (1 + 1e-12)
    return WeightReport(C, C_measured, theta, theta_grid, positive, bool(passed))


def bilinear_form(u, v, ws: WeightSpec, grid: Grid, sigma: float) -> float:
    """a(u, v) = (sigma^2/2) int w S u' [S v' + (S w'/w + 2) v] dS."""
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    w = ws.values(grid.S)
    k = ws.log_derivative_ratios(grid.S)[0] + 2.0
    su, sv = s_derivative(u, grid), s_derivative(v, grid)
    return 0.5 * sigma**2 * _trap(w * su * (sv + k * v), grid)


@dataclass(frozen=True)
class CoercivityConstants:
    alpha: float
    beta: float

    @classmethod
    def from_weight(cls, sigma: float, C: float) -> "CoercivityConstants":
        # Young's inequality on the cross term (S w'/w + 2) S u' u, with |S w'/w + 2| <= C + 2
        return cls(sigma**2 / 4.0, sigma**2 * ((C + 2.0) ** 2 + 1.0) / 4.0)


def _draw(rng, family: str, grid: Grid) -> np.ndarray:
    n = grid.n_space
    if family == "white":
        return rng.standard_normal(n)
    if family == "smooth":
        raw = rng.standard_normal(n)
        width = max(1, int(rng.integers(2, 12)))
        kernel = np.exp(-0.5 * (np.arange(-3 * width, 3 * width + 1) / width) ** 2)
        return np.convolve(raw, kernel / kernel.sum(), mode="same")
    if family == "bump":
        c = rng.uniform(grid.x_min, grid.x_max)
        s = rng.uniform(0.1, 1.5) * (grid.x_max - grid.x_min) / 8.0
        return rng.uniform(-3, 3) * np.exp(-0.5 * ((grid.x - c) / s) ** 2)
    raise ValueError(family)


FAMILIES = ("white", "smooth", "bump")


@dataclass(frozen=True)
class CoercivityReport:
    worst_margin: float
    worst_relative_margin: float
    worst_family: str
    c_fit: float
    alpha: float
    beta: float
    trials: int
    passed: bool

    def as_dict(self):
        return asdict(self)


def coercivity_audit(ws: WeightSpec, grid: Grid, sigma: float, trials: int = 100, seed: int = 42,
                     slack: float = 1e-10, raise_on_fail: bool = True) -> CoercivityReport:
    """Check a(u,u) >= alpha ||u||_1^2 - beta ||u||_0^2 on random functions.

    Families cycle through white noise, smoothed noise and localized bumps.
    Also fits the continuity constant as the largest |a(u,v)| / (||u||_1 ||v||_1).
    """
    if trials < 1:
        raise ValidationError("trials", "must be >= 1")
    C = ws.C if ws.C is not None else weight_check(ws, grid).C_measured
    consts = CoercivityConstants.from_weight(sigma, C)
    rng = np.random.default_rng(seed)
    worst, worst_rel, worst_fam, c_fit = math.inf, math.inf, "", 0.0
    for t in range(trials):
        fam = FAMILIES[t % len(FAMILIES)]
        u = _draw(rng, fam, grid)
        v = _draw(rng, FAMILIES[(t + 1) % len(FAMILIES)], grid)
        n0, n1 = weighted_norms(u, ws, grid)
        margin = bilinear_form(u, u, ws, grid, sigma) - consts.alpha * n1**2 + consts.beta * n0**2
        rel = margin / n1**2
        if rel < worst_rel:
            worst, worst_rel, worst_fam = margin, rel, fam
        if rel < -slack and raise_on_fail:
            raise AuditFailure(f"semi-coercivity violated by a {fam} draw (margin {margin!r})",
                               payload={"family": fam, "u": u.tolist(), "margin": margin})
        v1 = weighted_norms(v, ws, grid)[1]
        c_fit = max(c_fit, abs(bilinear_form(u, v, ws, grid, sigma)) / (n1 * v1))
    return CoercivityReport(float(worst), float(worst_rel), worst_fam, float(c_fit),
                            consts.alpha, consts.beta, trials, bool(worst_rel >= -slack))


def pointwise_bound_audit(u, ws: WeightSpec, grid: Grid, C: Optional[float] = None):
    """Fitted c0 = max_S |u(S)|^2 S exp(-C |ln S|) / ||u||_1^2, and the node where it is attained."""
    u = np.asarray(u, dtype=float)
    n1 = weighted_norms(u, ws, grid)[1]
    if not n1 > 0.0:
        raise ValidationError("u", "needs ||u||_1 > 0")
    C = ws.C if C is None else C
    profile = u**2 * np.exp(grid.x - C * np.abs(grid.x)) / n1**2
    k = int(np.argmax(profile))
    return float(profile[k]), float(grid.S[k])


def truncation_distance(u, eps_values, ws: WeightSpec, grid: Grid):
    """||u - xi_eps u||_1 for each eps."""
    from .payoff import TruncationParams, xi_epsilon

    u = np.asarray(u, dtype=float)
    return [weighted_norms(u - xi_epsilon(TruncationParams(e), grid.S) * u, ws, grid)[1] for e in eps_values]


@dataclass(frozen=True)
class ComparisonVerdict:
    passed: bool
    lower: float
    upper: float
    worst_violation: float
    worst_node: int
    worst_level: int

    def as_dict(self):
        return asdict(self)


def comparison_check(u1: Surface, u0: Surface, h1: PayoffSpec, h0: PayoffSpec, gamma: float,
                     tol: float = 2e-3) -> ComparisonVerdict:
    """gamma inf(h1-h0) - tol <= u1 - u0 <= gamma sup(h1-h0) + tol at every node and level."""
    if u1.grid != u0.grid:
        raise ValidationError("surfaces", "must share a grid")
    S = u1.grid.S
    dh = gamma * (np.asarray(evaluate(h1, S)) - np.asarray(evaluate(h0, S)))
    lower, upper = float(dh.min()), float(dh.max())
    diff = u1.values - u0.values
    viol = np.maximum(lower - diff, diff - upper)
    n, i = np.unravel_index(int(np.argmax(viol)), viol.shape)
    worst = float(max(viol[n, i], 0.0))
    return ComparisonVerdict(worst <= tol, lower, upper, worst, int(i), int(n))


@dataclass(frozen=True)
class BarrierReport:
    dx: list
    residuals: list
    rates: list
    min_rate: float
    increasing: bool
    passed: bool

    def as_dict(self):
        return asdict(self)


def barrier_residuals(sigma: float, T1: float, tau: float, x_half_width: float = 1.0,
                      n_levels: int = 3, n0: int = 41):
    """Max relative residual of omega_tau - L_h omega on interior nodes, per refinement level.

    omega_tau is analytic; L_h is the discrete Black-Scholes operator.
    """
    from .grid import BarrierParams, apply_bs_operator, barrier_omega, barrier_omega_dtau, build_grid

    bp = BarrierParams(T1, sigma)
    dxs, res = [], []
    for level in range(n_levels):
        n = (n0 - 1) * 2**level + 1
        g = build_grid(-x_half_width, x_half_width, n, 1.0, 1)
        om = barrier_omega(bp, g.S, tau)
        r = (barrier_omega_dtau(bp, g.S, tau) - apply_bs_operator(g, om, sigma))[1:-1] / om[1:-1]
        dxs.append(g.dx)
        res.append(float(np.max(np.abs(r))))
    rates = [math.log(a / b) / math.log(2.0) for a, b in zip(res, res[1:])]
    return dxs, res, rates


def barrier_increasing(sigma: float, T1: float, S_values, n_tau: int = 200) -> bool:
    """omega(S, .) strictly increasing on [T1 - 4/sigma^2, T1) for every S given."""
    from .grid import BarrierParams, barrier_omega

    bp = BarrierParams(T1, sigma)
    start = T1 - 4.0 / sigma**2
    taus = start + (T1 - start) * np.arange(n_tau) / n_tau
    for S in np.asarray(S_values, dtype=float):
        om = barrier_omega(bp, np.full_like(taus, S), taus)
        if not np.all(np.diff(om) > 0.0):
            return False
    return True


def barrier_audit(sigma: float, T1: float, tau: Optional[float] = None, min_rate: float = 1.8,
                  n_S: int = 20) -> BarrierReport:
    if tau is None:
        tau = T1 - 1.0
    dxs, res, rates = barrier_residuals(sigma, T1, tau)
    S_values = np.exp(np.linspace(-3.0, 3.0, n_S))
    inc = barrier_increasing(sigma, T1, S_values)
    mr = min(rates)
    return BarrierReport(dxs, res, rates, mr, inc, bool(inc and mr >= min_rate))
