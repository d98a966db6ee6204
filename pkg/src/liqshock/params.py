"""Market and utility constants, and the closed-form Merton factors F0, F1."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateSpectrum, DomainError, IllposedFactors, ValidationError


@dataclass(frozen=True)
class ModelParams:
    """Two-state (liquid / illiquid) market with exponential utility.

    ``d0`` and ``kappa`` are derived on construction and cannot be passed in.
    """

    sigma: float
    mu: float
    nu01: float
    nu10: float
    gamma: float
    T: float
    d0: float = field(init=False)
    kappa: float = field(init=False)

    def __post_init__(self):
        for name in ("sigma", "gamma", "T"):
            value = getattr(self, name)
            if not (math.isfinite(value) and value > 0.0):
                raise ValidationError(name, f"must be > 0, got {value!r}")
        for name in ("nu01", "nu10"):
            value = getattr(self, name)
            if not (math.isfinite(value) and value >= 0.0):
                raise ValidationError(name, f"must be >= 0, got {value!r}")
        if not math.isfinite(self.mu):
            raise ValidationError("mu", f"must be finite, got {self.mu!r}")
        d0 = self.mu**2 / (2.0 * self.sigma**2)
        object.__setattr__(self, "d0", d0)
        object.__setattr__(self, "kappa", d0 + self.nu01 - self.nu10)


def derive_constants(sigma, mu, nu01, nu10, gamma, T) -> ModelParams:
    return ModelParams(float(sigma), float(mu), float(nu01), float(nu10), float(gamma), float(T))


@dataclass(frozen=True)
class MertonFactors:
    """Spectral data of the zero-claim (Merton) problem.

    F0(t) = c1 exp(lambda1 t) + c2 exp(lambda2 t) and F1 is the matching
    combination divided by nu01. Evaluation uses the shifted form
    a_i exp(lambda_i (t - T)) with a_i = c_i exp(lambda_i T) so that large
    lambda*T does not overflow.
    """

    lambda1: float
    lambda2: float
    c1: float
    c2: float
    T: float
    d0: float
    nu01: float
    nu10: float
    a1: float
    a2: float

    def evaluate(self, t):
        return evaluate_factors(self, t)


def merton_spectrum(params: ModelParams) -> MertonFactors:
    if params.nu01 <= 0.0:
        raise IllposedFactors("Merton factor F1 requires nu01 > 0 (it divides by nu01)")
    d0, nu01, nu10, T = params.d0, params.nu01, params.nu10, params.T
    s = d0 + nu01 + nu10
    # (d0 - nu10)^2 + nu01 (nu01 + 2 d0 + 2 nu10) == s^2 - 4 d0 nu10, without cancellation
    disc = (d0 - nu10) ** 2 + nu01 * (nu01 + 2.0 * d0 + 2.0 * nu10)
    root = math.sqrt(disc)
    lam1 = 0.5 * (s + root)
    lam2 = d0 * nu10 / lam1
    if abs(lam1 - lam2) < 1e-12 * (lam1 + lam2):
        raise DegenerateSpectrum(f"repeated root lambda1 = lambda2 = {lam1!r}")
    a1 = (lam2 - d0) / (lam2 - lam1)
    a2 = (lam1 - d0) / (lam1 - lam2)
    c1 = a1 * math.exp(-lam1 * T)
    c2 = a2 * math.exp(-lam2 * T)
    return MertonFactors(lam1, lam2, c1, c2, T, d0, nu01, nu10, a1, a2)


def evaluate_factors(factors: MertonFactors, t):
    """Return (F0, F1, F0', F1') at calendar time ``t`` in [0, T].

    Accepts scalars or arrays; derivatives are analytic.
    """
    t_arr = np.asarray(t, dtype=float)
    slack = 1e-12 * max(1.0, factors.T)
    if np.any(t_arr < -slack) or np.any(t_arr > factors.T + slack):
        raise DomainError(f"t must lie in [0, {factors.T}]")
    f = factors
    e1 = f.a1 * np.exp(f.lambda1 * (t_arr - f.T))
    e2 = f.a2 * np.exp(f.lambda2 * (t_arr - f.T))
    k1 = f.d0 + f.nu01 - f.lambda1
    k2 = f.d0 + f.nu01 - f.lambda2
    F0 = e1 + e2
    F1 = (k1 * e1 + k2 * e2) / f.nu01
    dF0 = f.lambda1 * e1 + f.lambda2 * e2
    dF1 = (k1 * f.lambda1 * e1 + k2 * f.lambda2 * e2) / f.nu01
    if np.ndim(t) == 0:
        return float(F0), float(F1), float(dF0), float(dF1)
    return F0, F1, dF0, dF1


def merton_residuals(factors: MertonFactors, t):
    """Residuals of F0' = -nu01 F1 + (d0+nu01) F0 and F1' = -nu10 F0 + nu10 F1."""
    F0, F1, dF0, dF1 = evaluate_factors(factors, t)
    r0 = dF0 + factors.nu01 * F1 - (factors.d0 + factors.nu01) * F0
    r1 = dF1 + factors.nu10 * F0 - factors.nu10 * F1
    return r0, r1
