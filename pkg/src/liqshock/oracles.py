"""Closed-form reference solutions used by tests and the convergence driver."""

from __future__ import annotations

import numpy as np
from scipy.special import ndtr

from .params import ModelParams, evaluate_factors, merton_spectrum
from .payoff import PayoffSpec


def constant_payoff_solution(params: ModelParams, h_star: float, tau):
    """u for h = h_star: gamma h_star - nu10 tau - ln F0(T - tau).

    Follows from p = q = h_star solving the price system. With nu01 = 0 the
    equation is linear with constant source and u = gamma h_star + kappa tau.
    """
    tau = np.asarray(tau, dtype=float)
    if params.nu01 == 0.0:
        return params.gamma * h_star + params.kappa * tau
    F0 = evaluate_factors(merton_spectrum(params), params.T - tau)[0]
    return params.gamma * h_star - params.nu10 * tau - np.log(F0)


def constant_payoff_memory(params: ModelParams, h_star: float, tau):
    """I for h = h_star, from nu10 I + e^{-gamma h*} = e^{nu10 tau} F1(T - tau) e^{-gamma h*}."""
    tau = np.asarray(tau, dtype=float)
    E = np.exp(-params.gamma * h_star)
    if params.nu10 == 0.0:
        raise ValueError("memory oracle needs nu10 > 0")
    F1 = evaluate_factors(merton_spectrum(params), params.T - tau)[1]
    return E * (np.exp(params.nu10 * tau) * F1 - 1.0) / params.nu10


def lognormal_expectation(payoff: PayoffSpec, S, sigma: float, tau):
    """E[h(S_tau)] for driftless lognormal S with volatility sigma (zero rates).

    Supports call, put and constant payoffs without floor.
    """
    S = np.asarray(S, dtype=float)
    tau = np.asarray(tau, dtype=float)
    if payoff.floor is not None:
        raise ValueError("floored payoffs have no closed form here")
    if payoff.kind == "constant":
        return np.broadcast_to(payoff.level + payoff.offset, np.broadcast(S, tau).shape).astype(float)
    if payoff.kind not in ("call", "put"):
        raise ValueError(f"no closed form for kind {payoff.kind!r}")
    K = payoff.strike
    sd = sigma * np.sqrt(tau)
    with np.errstate(divide="ignore", invalid="ignore"):
        d1 = (np.log(S / K) + 0.5 * sd**2) / sd
    d2 = d1 - sd
    if payoff.kind == "call":
        value = S * ndtr(d1) - K * ndtr(d2)
        intrinsic = np.maximum(S - K, 0.0)
    else:
        value = K * ndtr(-d2) - S * ndtr(-d1)
        intrinsic = np.maximum(K - S, 0.0)
    value = np.where(sd > 0.0, value, intrinsic)
    return value + payoff.offset


def linear_reduction_solution(params: ModelParams, payoff: PayoffSpec, S, tau):
    """u = kappa tau + gamma E[h(S_tau)]: exact when nu01 = 0."""
    if params.nu01 != 0.0:
        raise ValueError("the linear reduction holds only for nu01 = 0")
    tau = np.asarray(tau, dtype=float)
    return params.kappa * tau + params.gamma * lognormal_expectation(payoff, S, params.sigma, tau)
