import math

import numpy as np
import pytest

from liqshock.analysis import barrier_audit, barrier_residuals
from liqshock.errors import DomainError, ValidationError
from liqshock.grid import (BarrierParams, Surface, apply_bs_operator, barrier_omega, barrier_omega_dtau,
                           barrier_window, bs_operator_bands, build_grid, default_grid)

SIGMA = 0.3


def test_build_grid_examples():
    g = build_grid(-4, 4, 9, 1.0, 10)
    assert g.dx == 1.0 and g.dtau == pytest.approx(0.1)
    g = build_grid(-4, 4, 201, 1.0, 200)
    assert g.S.size == 201
    assert g.S[0] == pytest.approx(math.exp(-4)) and g.S[-1] == pytest.approx(math.exp(4))
    assert np.all(np.diff(g.S) > 0)
    with pytest.raises(ValidationError):
        build_grid(0, 0, 9, 1.0, 10)
    with pytest.raises(ValidationError):
        build_grid(0, 1, 2, 1.0, 10)
    with pytest.raises(ValidationError):
        build_grid(0, 1, 9, 1.0, 0)


def test_default_grid_and_refine():
    g = default_grid()
    assert (g.x_min, g.x_max, g.n_space, g.n_time) == (-4.0, 4.0, 201, 200)
    r = g.refined(2)
    assert r.dx == pytest.approx(g.dx / 2) and r.dtau == pytest.approx(g.dtau / 2)
    assert np.array_equal(r.x[::2], g.x)


def test_operator_on_polynomials():
    g = build_grid(-2, 2, 41, 1.0, 1)
    assert np.all(apply_bs_operator(g, np.full(41, 3.7), SIGMA) == 0.0)
    lin = apply_bs_operator(g, g.x, SIGMA)
    assert lin[1:-1] == pytest.approx(-0.5 * SIGMA**2, rel=1e-12)
    quad = apply_bs_operator(g, g.x**2, SIGMA)
    assert quad[1:-1] == pytest.approx(0.5 * SIGMA**2 * (2 - 2 * g.x[1:-1]), abs=1e-12)


def test_boundary_rows_are_far_field():
    g = build_grid(-2, 2, 41, 1.0, 1)
    lo, di, up = bs_operator_bands(g, SIGMA)
    assert di[0] == di[-1] == 0.0 and up[0] == 0.0 and lo[-1] == 0.0
    # S^2 u_SS = 0 for u linear in S
    assert np.all(apply_bs_operator(g, 2.0 * g.S - 1.0, SIGMA)[[0, -1]] == 0.0)


def test_operator_m_matrix_signs():
    g = build_grid(-4, 4, 201, 1.0, 1)
    lo, di, up = bs_operator_bands(g, SIGMA)
    assert np.all(lo[1:-1] > 0) and np.all(up[1:-1] > 0) and np.all(di <= 0)


def test_operator_second_order_on_sine():
    errs = []
    for n in (41, 81, 161):
        g = build_grid(-2, 2, n, 1.0, 1)
        exact = 0.5 * SIGMA**2 * (-np.sin(g.x) - np.cos(g.x))
        errs.append(np.max(np.abs(apply_bs_operator(g, np.sin(g.x), SIGMA) - exact)[1:-1]))
    rates = np.log2(np.array(errs[:-1]) / np.array(errs[1:]))
    assert np.all(rates >= 1.9)


def test_surface_csv(tmp_path):
    g = build_grid(-1, 1, 3, 1.0, 2)
    vals = np.arange(9, dtype=float).reshape(3, 3)
    Surface(g, vals, np.zeros((3, 3)), vals[0]).to_csv(tmp_path / "s.csv")
    lines = (tmp_path / "s.csv").read_text().splitlines()
    assert lines[0] == "x,S,tau,u,I"
    assert len(lines) == 10
    assert lines[4].split(",")[2] == "0.5"


def test_barrier_ridge_and_domain():
    bp = BarrierParams(2.0, SIGMA)
    tau = 0.5
    s = 2.0 - tau
    assert barrier_omega(bp, math.exp(-0.5 * SIGMA**2 * s), tau) == pytest.approx(s**-0.5, rel=1e-14)
    with pytest.raises(DomainError):
        barrier_omega(bp, 1.0, 2.0)


def test_barrier_solves_operator():
    _, res, rates = barrier_residuals(SIGMA, 2.0, 1.0)
    assert min(rates) >= 1.8
    assert res[-1] < 0.02


def test_barrier_dtau_matches_finite_difference():
    bp = BarrierParams(2.0, SIGMA)
    S = np.geomspace(0.1, 10, 9)
    h = 1e-6
    fd = (barrier_omega(bp, S, 1.0 + h) - barrier_omega(bp, S, 1.0 - h)) / (2 * h)
    assert barrier_omega_dtau(bp, S, 1.0) == pytest.approx(fd, rel=1e-7)


def test_barrier_increasing_and_growth():
    rep = barrier_audit(SIGMA, 2.0)
    assert rep.passed and rep.increasing
    g = build_grid(-4, 4, 81, 1.0, 1)
    w = barrier_omega(BarrierParams(2.0, SIGMA), g.S, 1.0)
    assert np.all(np.diff(w[-4:]) > 0) and np.all(np.diff(w[:4]) < 0)


def test_barrier_window():
    assert barrier_window(0.25, 0.3) == pytest.approx(min(1 / (2 * 0.09 * 0.25), 4 / 0.09))
