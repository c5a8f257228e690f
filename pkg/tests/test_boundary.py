import math

import numpy as np
import pytest

from leraymarch.boundary import (BoundaryDomain, HeatGamma, RobinData,
                                 boundary_step, fd_robin_reference, k_gamma,
                                 solve_density)
from leraymarch.errors import SeriesDiverging


def test_interval_domain_geometry():
    dom = BoundaryDomain.interval(-1.0, 1.0, 101)
    assert dom.nodes.tolist() == [[-1.0], [1.0]]
    assert dom.normals.tolist() == [[-1.0], [1.0]]
    assert np.sum(dom.interior_weights) == pytest.approx(2.0)


def test_disk_domain_geometry():
    dom = BoundaryDomain.disk(2.0, n_nodes=32)
    assert np.allclose(np.linalg.norm(dom.normals, axis=1), 1.0)
    assert np.sum(dom.node_weights) == pytest.approx(2 * math.pi * 2.0)
    assert np.sum(dom.interior_weights) == pytest.approx(math.pi * 4.0,
                                                         rel=1e-6)


# ---------------------------------------------------------------------------
# kernel

def test_k_gamma_matches_analytic_normal_derivative():
    gamma = HeatGamma(0.3, dim=1)
    tau, s = 0.7, 0.2
    x = np.array([[1.0]])
    y = np.array([0.4])
    nrm = np.array([[1.0]])
    got = k_gamma(gamma, lambda t, p: np.zeros(1), tau, x, nrm, s, y)[0]
    var = 4 * 0.3 * (tau - s)
    val = (math.pi * var) ** -0.5 * math.exp(-(0.6) ** 2 / var)
    expect = -2 * 0.6 / var * val
    assert got == pytest.approx(expect, rel=1e-12)


def test_k_gamma_linear_in_alpha():
    gamma = HeatGamma(0.2, dim=1)
    x = np.array([[1.0]])
    nrm = np.array([[1.0]])
    y = np.array([0.0])
    base = k_gamma(gamma, lambda t, p: np.zeros(1), 0.5, x, nrm, 0.0, y)[0]
    big = k_gamma(gamma, lambda t, p: np.full(1, 50.0), 0.5, x, nrm, 0.0, y)[0]
    val = gamma.value(0.5, x, 0.0, y)[0]
    assert big - base == pytest.approx(50.0 * val, rel=1e-12)


def test_k_gamma_vanishes_at_short_times_for_separated_points():
    gamma = HeatGamma(0.1, dim=1)
    x = np.array([[1.0]])
    nrm = np.array([[1.0]])
    got = k_gamma(gamma, lambda t, p: np.ones(1), 1.0, x, nrm, 1.0 - 1e-6,
                  np.array([-1.0]))[0]
    assert abs(got) < 1e-200


# ---------------------------------------------------------------------------
# density solve

def test_density_zero_forcing():
    dom = BoundaryDomain.interval(-1.0, 1.0, 64)
    times = np.linspace(0.0, 0.3, 16)
    gamma = HeatGamma(0.1, dim=1)

    def kern(tau, x, s, y):
        return -0.1 * k_gamma(gamma, lambda t, p: np.ones(len(np.atleast_2d(p))),
                              tau, x, dom.normals, s, y)

    dens = solve_density(np.zeros((16, 2)), kern, dom, times, 0.0)
    assert np.max(np.abs(dens.values)) == 0.0
    assert dens.residual == 0.0


def test_density_residual_and_decay():
    dom = BoundaryDomain.interval(-1.0, 1.0, 64)
    times = np.linspace(0.0, 0.3, 24)
    gamma = HeatGamma(0.1, dim=1)
    alpha = lambda t, p: np.ones(len(np.atleast_2d(p)))

    def kern(tau, x, s, y):
        return -0.1 * k_gamma(gamma, alpha, tau, x, dom.normals, s, y)

    f = np.outer(np.sqrt(times / times[-1]), np.array([0.3, -0.2]))
    dens = solve_density(f, kern, dom, times, 0.0, depth=14)
    assert dens.residual <= 1e-6
    tn = dens.term_norms
    ratios = [tn[m + 1] / tn[m] for m in range(1, len(tn) - 1) if tn[m] > 0]
    assert all(r < 0.9 for r in ratios)


def test_density_diverges_for_oversized_kernel():
    dom = BoundaryDomain.interval(-1.0, 1.0, 32)
    times = np.linspace(0.0, 1.0, 12)
    gamma = HeatGamma(0.5, dim=1)
    alpha = lambda t, p: np.full(len(np.atleast_2d(p)), 40.0)

    def kern(tau, x, s, y):
        return -0.5 * k_gamma(gamma, alpha, tau, x, dom.normals, s, y)

    f = np.ones((12, 2))
    with pytest.raises(SeriesDiverging):
        solve_density(f, kern, dom, times, 0.0)


# ---------------------------------------------------------------------------
# interior step

def test_constant_neumann_data_stays_constant():
    dom = BoundaryDomain.interval(-1.0, 1.0, 256)
    v0 = np.full(256, 0.8)
    robin = RobinData.constant(0.0, 0.0)
    _, states, dens = boundary_step(v0, robin, 0.1, dom, horizon=0.25,
                                    n_time=24, depth=12)
    assert dens.residual <= 1e-6
    assert np.max(np.abs(states[0] - 0.8)) <= 1e-4


def test_neumann_mass_conserved():
    dom = BoundaryDomain.interval(-1.0, 1.0, 256)
    xs = dom.interior[:, 0]
    v0 = 0.5 + 0.3 * np.cos(math.pi * xs / 2.0)
    robin = RobinData.constant(0.0, 0.0)
    _, states, _ = boundary_step(v0, robin, 0.1, dom, horizon=0.25,
                                 n_time=24, depth=12)
    m0 = float(np.sum(dom.interior_weights * v0))
    m1 = float(np.sum(dom.interior_weights * states[0]))
    assert abs(m1 - m0) <= 1e-4


def test_robin_benchmark_matches_fd_reference():
    dom = BoundaryDomain.interval(-1.0, 1.0, 256)
    xs = dom.interior[:, 0]
    v0 = np.cos(math.pi * xs / 2.0) + 0.4
    robin = RobinData.constant(1.0, 0.0)
    _, states, dens = boundary_step(v0, robin, 0.1, dom, horizon=0.25,
                                    n_time=32, depth=14)
    ref = fd_robin_reference(v0, robin, 0.1, dom, 0.25, n_steps=4000)
    assert dens.residual <= 1e-6
    assert np.max(np.abs(states[0] - ref)) <= 1e-3
