"""Running trapezoid quadrature of the Volterra memory I(S, tau) = int_0^tau exp(-u(S, s)) ds."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import SolverOverflow, ValidationError

U_CAP = 500.0


def check_cap(u, cap: float = U_CAP, what: str = "u") -> None:
    u = np.asarray(u)
    worst = float(np.max(np.abs(u))) if u.size else 0.0
    if not worst <= cap:
        raise SolverOverflow(f"|{what}| reached {worst!r}, above the cap {cap}; the solve is diverging")


@dataclass(frozen=True)
class HistoryState:
    I: np.ndarray
    level: int = 0
    u_cap: float = U_CAP

    @classmethod
    def start(cls, n_space: int, u_cap: float = U_CAP) -> "HistoryState":
        return cls(np.zeros(n_space), 0, u_cap)


def trapezoid_increment(u_prev, u_next, dtau):
    return 0.5 * dtau * (np.exp(-u_prev) + np.exp(-u_next))


def advance(state: HistoryState, u_prev, u_next, dtau: float) -> HistoryState:
    """One trapezoid step of the memory integral; returns a new state."""
    if not dtau > 0.0:
        raise ValidationError("dtau", "must be > 0")
    check_cap(u_prev, state.u_cap)
    check_cap(u_next, state.u_cap)
    I = state.I + trapezoid_increment(np.asarray(u_prev, float), np.asarray(u_next, float), dtau)
    return HistoryState(I, state.level + 1, state.u_cap)
