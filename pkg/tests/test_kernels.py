import math

import numpy as np
import pytest

from leraymarch import errors
from leraymarch.grids import (FREE_SPACE, TORUS, ScalarField, VectorField,
                              d1, make_grid)
from leraymarch.kernels import (GaussianKernelSpec, convolve,
                                gaussian_offsets_kernel,
                                gradient_consistency_gap, heat_kernel,
                                leray_pressure, leray_rhs,
                                poisson_kernel_grad,
                                pressure_identity_residual, sample_kernel,
                                unit_sphere_area)

RNG = np.random.default_rng(7)


def taylor_green(grid):
    # orientation whose pressure is -(cos 2x + cos 2y)/4
    return VectorField.from_functions(grid, [
        lambda x, y: np.cos(x) * np.sin(y),
        lambda x, y: -np.sin(x) * np.cos(y),
    ])


def smooth_bump_vector(grid):
    meshes = grid.meshes()
    r2 = sum(m * m for m in meshes)
    env = np.exp(-r2)
    comps = [env * (m + 0.3 * i) for i, m in enumerate(meshes)]
    return VectorField(grid, comps)


# ---------------------------------------------------------------------------
# Poisson kernel gradient

def test_grad_closed_form_e1():
    out = poisson_kernel_grad(3, np.array([1.0, 0.0, 0.0]))
    assert out == pytest.approx([1.0 / (4 * math.pi), 0.0, 0.0])
    assert out[0] == pytest.approx(0.0795775, abs=1e-7)


def test_grad_closed_form_axis3():
    out = poisson_kernel_grad(3, np.array([0.0, 0.0, 2.0]))
    assert out == pytest.approx([0.0, 0.0, 1.0 / (16 * math.pi)])


def test_grad_bound_outside_unit_ball():
    # natural bound 1/omega_n for |x| >= 1
    for n in (2, 3):
        pts = RNG.standard_normal((10_000, n))
        r = np.linalg.norm(pts, axis=1, keepdims=True)
        pts = pts / r * (1.0 + 4.0 * RNG.random((10_000, 1)))
        vals = poisson_kernel_grad(n, pts)
        assert np.max(np.abs(vals)) <= 1.0 / unit_sphere_area(n) + 1e-15


def test_grad_antisymmetry():
    pts = RNG.standard_normal((64, 3))
    assert np.allclose(poisson_kernel_grad(3, -pts), -poisson_kernel_grad(3, pts))


def test_grad_singularity_raises():
    with pytest.raises(errors.SingularPoint):
        poisson_kernel_grad(3, np.zeros(3))


# ---------------------------------------------------------------------------
# heat kernel

def test_heat_kernel_normalization():
    g = make_grid(1, 6.0, 256, FREE_SPACE)
    spec = GaussianKernelSpec(diffusion=0.5, elapsed=1.0)
    x = g.axis().reshape(-1, 1)
    vals = heat_kernel(spec, np.zeros((1, 1)), x)
    mass = np.sum(vals) * g.spacing
    assert mass == pytest.approx(1.0, abs=1e-6)


def test_heat_kernel_peak_value():
    spec = GaussianKernelSpec(diffusion=0.3, elapsed=0.7)
    peak = heat_kernel(spec, np.zeros((1, 2)), np.zeros((1, 2)))[0]
    assert peak == pytest.approx((4 * math.pi * 0.3 * 0.7) ** -1.0)


def test_heat_kernel_far_field_underflows_to_zero():
    spec = GaussianKernelSpec(diffusion=0.1, elapsed=0.1)
    val = heat_kernel(spec, np.zeros((1, 1)), np.array([[200.0]]))[0]
    assert val == 0.0


def test_heat_kernel_zero_time_raises():
    spec = GaussianKernelSpec(diffusion=0.1, elapsed=0.0)
    with pytest.raises(errors.ZeroTime):
        heat_kernel(spec, np.zeros((1, 1)), np.zeros((1, 1)))


# ---------------------------------------------------------------------------
# convolution engines

def test_convolve_zero_field():
    g = make_grid(1, 3.0, 64, TORUS)
    ker = gaussian_offsets_kernel(0.2, 0.5, g)
    out = convolve(ScalarField.zeros(g), ker)
    assert np.max(np.abs(out.values)) == 0.0


def test_convolve_gaussian_times_gaussian_1d():
    # closed form: variances add under convolution
    g = make_grid(1, 8.0, 128, FREE_SPACE)
    x = g.meshes()[0]
    s1, s2 = 0.5, 0.7
    f = ScalarField(g, np.exp(-x * x / (2 * s1 * s1)) / (s1 * math.sqrt(2 * math.pi)))
    ker = lambda pts: (np.exp(-np.sum(pts ** 2, axis=-1) / (2 * s2 * s2))
                       / (s2 * math.sqrt(2 * math.pi)))
    out = convolve(f, ker)
    s3 = math.hypot(s1, s2)
    expect = np.exp(-x * x / (2 * s3 * s3)) / (s3 * math.sqrt(2 * math.pi))
    assert np.max(np.abs(out.values - expect)) <= 1e-6


def test_convolve_near_delta_returns_field():
    # elapsed tied to spacing^2 keeps the kernel resolved while the
    # smoothing error scales like spacing^2
    errs = []
    for m in (64, 128, 256):
        g = make_grid(1, math.pi, m, TORUS)
        f = ScalarField.from_function(g, np.sin)
        ker = gaussian_offsets_kernel(1.0, g.spacing ** 2, g)
        out = convolve(f, ker)
        errs.append(float(np.max(np.abs(out.values - f.values))))
        assert errs[-1] <= 2.0 * g.spacing ** 2
    assert errs[2] <= 0.3 * errs[1] <= 0.3 * 0.3 * errs[0] / 0.3


@pytest.mark.parametrize("topology", [TORUS, FREE_SPACE])
def test_engines_agree(topology):
    g = make_grid(2, 2.0, 16, topology)
    f = ScalarField(g, RNG.standard_normal(g.shape))
    ker = gaussian_offsets_kernel(0.2, 0.3, g)
    out = convolve(f, ker, self_test=True)
    assert np.all(np.isfinite(out.values))


def test_engines_agree_singular_kernel():
    g = make_grid(2, 2.0, 16, FREE_SPACE)
    f = ScalarField(g, RNG.standard_normal(g.shape))
    ker = sample_kernel(lambda pts: poisson_kernel_grad(2, pts)[..., 0],
                        g, singular=True)
    convolve(f, ker, self_test=True)


def test_singular_sampling_respects_odd_symmetry():
    g = make_grid(2, 2.0, 16, FREE_SPACE)
    ker = sample_kernel(lambda pts: poisson_kernel_grad(2, pts)[..., 0],
                        g, singular=True)
    assert ker[0, 0] == pytest.approx(0.0, abs=1e-14)


# ---------------------------------------------------------------------------
# pressure elimination

def test_leray_pressure_zero_and_constant_fields():
    g = make_grid(2, math.pi, 32, TORUS)
    assert np.max(np.abs(leray_pressure(VectorField.zeros(g)).values)) == 0.0
    const = VectorField(g, [np.full(g.shape, 1.7), np.full(g.shape, -0.4)])
    assert np.max(np.abs(leray_pressure(const).values)) <= 1e-12


def test_leray_pressure_taylor_green():
    g = make_grid(2, math.pi, 128, TORUS)
    v = taylor_green(g)
    p = leray_pressure(v).values
    x, y = g.meshes()
    expect = -0.25 * (np.cos(2 * x) + np.cos(2 * y))
    expect -= np.mean(expect)
    scale = np.max(np.abs(expect))
    assert np.max(np.abs(p - expect)) <= 0.02 * scale


def test_leray_rhs_zero_field():
    g = make_grid(2, math.pi, 16, TORUS)
    out = leray_rhs(VectorField.zeros(g))
    assert all(np.max(np.abs(a)) == 0.0 for a in out.arrays())


def test_leray_rhs_matches_analytic_taylor_green():
    g = make_grid(2, math.pi, 128, TORUS)
    rhs = leray_rhs(taylor_green(g))
    x, y = g.meshes()
    # -grad of -(cos2x + cos2y)/4
    expect = [-0.5 * np.sin(2 * x), -0.5 * np.sin(2 * y)]
    for got, ref in zip(rhs.arrays(), expect):
        assert np.max(np.abs(got - ref)) <= 0.02 * np.max(np.abs(ref))


@pytest.mark.parametrize("topology,m", [(TORUS, 48), (FREE_SPACE, 32)])
def test_gradient_consistency(topology, m):
    extent = math.pi if topology == TORUS else 5.0
    g = make_grid(2, extent, m, topology)
    if topology == TORUS:
        v = taylor_green(g)
    else:
        v = smooth_bump_vector(g)
    gap = gradient_consistency_gap(v)
    assert gap <= 40.0 * g.spacing ** 2


def test_pressure_identity_zero_field():
    g = make_grid(2, math.pi, 16, TORUS)
    assert pressure_identity_residual(VectorField.zeros(g)) == 0.0


def test_pressure_identity_second_order_on_taylor_green():
    res = [pressure_identity_residual(taylor_green(make_grid(2, math.pi, m, TORUS)))
           for m in (32, 64, 128)]
    rate1 = math.log2(res[0] / res[1])
    rate2 = math.log2(res[1] / res[2])
    assert rate1 >= 1.8 and rate2 >= 1.8


def test_pressure_identity_bump_refinement():
    res = []
    for m in (64, 128, 256):
        g = make_grid(2, 5.0, m, FREE_SPACE)
        res.append(pressure_identity_residual(smooth_bump_vector(g)))
    assert math.log2(res[0] / res[1]) >= 1.6
    assert math.log2(res[1] / res[2]) >= 1.8


def test_engine_mismatch_detected_on_induced_bug(monkeypatch):
    # mutation check: corrupt one engine and confirm the self-test trips
    import leraymarch.kernels as K

    g = make_grid(1, 2.0, 16, TORUS)
    f = ScalarField(g, RNG.standard_normal(g.shape))
    ker = gaussian_offsets_kernel(0.2, 0.3, g)
    real_direct = K._direct_convolve

    def corrupted(values, kernel, grid):
        return real_direct(values, kernel, grid) + 1e-6

    monkeypatch.setattr(K, "_direct_convolve", corrupted)
    with pytest.raises(errors.EngineMismatch):
        convolve(f, ker, self_test=True)
