"""Acceptance suite: every criterion at its stated tolerance, one line each."""

import math
import time

import numpy as np
import pytest

from leraymarch.control import (build_phi, consumption_dominance, r_source,
                                source_term_magnitude)
from leraymarch.grids import (FREE_SPACE, TORUS, VectorField, d1, divergence,
                              make_grid, norms)
from leraymarch.kernels import (gradient_consistency_gap,
                                poisson_kernel_grad,
                                pressure_identity_residual, unit_sphere_area)
from leraymarch.linparab import Backend
from leraymarch.oracles import (burgers_initial, cole_hopf_solution,
                                gaussian_bump_field, taylor_green_field)
from leraymarch.parametrix import (DkExpansion, LevySeries, constant_drift,
                                   dk_coefficients, levy_gamma,
                                   param_fundamental, shifted_gaussian,
                                   zero_drift)
from leraymarch.scheme import (StepSchedule, burgers_march, global_march,
                               harmonic_sum_lower_bound, steps_to_reach)

NU = 0.1


def div_reference(h: VectorField) -> float:
    """Reference scale for the discretized divergence of initial data.

    The raw discrete divergence when it is above the second-order
    discretization floor of the operator, else that floor (single-mode data
    cancel the central stencil exactly, leaving round-off).
    """
    grid = h.grid
    raw = float(np.max(np.abs(divergence(h).values)))
    third = np.zeros(grid.shape)
    for i, comp in enumerate(h.components):
        a = comp.values
        d3 = d1(d1(d1(a, i, grid), i, grid), i, grid)
        third += np.abs(d3)
    floor = grid.spacing ** 2 / 6.0 * float(np.max(third))
    return max(raw, floor)


@pytest.fixture(scope="session")
def tg_run_128():
    g = make_grid(2, math.pi, 128, TORUS)
    h = taylor_green_field(g, NU)
    start = time.time()
    res = global_march(h, StepSchedule("uniform_section4"), 1.0, NU,
                       controls=False, backend=Backend(substeps=16))
    res.elapsed = time.time() - start
    res.initial = h
    return res


@pytest.fixture(scope="session")
def tg_run_64():
    g = make_grid(2, math.pi, 64, TORUS)
    h = taylor_green_field(g, NU)
    res = global_march(h, StepSchedule("uniform_section4"), 1.0, NU,
                       controls=False, backend=Backend(substeps=16))
    res.initial = h
    return res


@pytest.fixture(scope="session")
def burgers_run():
    g = make_grid(1, math.pi, 256, TORUS)
    h = burgers_initial(g)
    res = burgers_march(h, StepSchedule("uniform_section4"), 0.5, NU,
                        backend=Backend(substeps=16))
    res.initial = h
    return res


@pytest.fixture(scope="session")
def smoke_3d():
    g = make_grid(3, 6.0, 32, FREE_SPACE)
    h = gaussian_bump_field(g)
    return global_march(h, StepSchedule("uniform_section4"), 1e9, NU,
                        controls=False, backend=Backend(substeps=16),
                        max_steps=3)


@pytest.fixture(scope="session")
def controls_run():
    g = make_grid(2, math.pi, 64, TORUS)
    h = taylor_green_field(g, NU)
    return global_march(h, StepSchedule("decreasing_paper", c=0.5), 1e9, NU,
                        controls=True, backend=Backend(substeps=16),
                        collect_psi_gap=True, max_steps=20)


def test_criterion_1_taylor_green(tg_run_128, acceptance_log):
    res = tg_run_128
    ref = taylor_green_field(res.grid, NU, res.t_final)
    err = max(float(np.max(np.abs(a - b)))
              for a, b in zip(res.v_final.arrays(), ref.arrays()))
    ok = err <= 0.02 and res.elapsed <= 300.0 and \
        abs(res.t_final - 1.0) < 1e-9
    acceptance_log.record(1, ok,
                          f"vortex 128^2 Linf={err:.2e} (<=0.02), "
                          f"runtime={res.elapsed:.0f}s (<=300)")
    assert err <= 0.02
    assert res.elapsed <= 300.0


def test_criterion_2_burgers(burgers_run, acceptance_log):
    res = burgers_run
    ref = cole_hopf_solution(res.grid, NU, res.t_final)
    err = float(np.max(np.abs(res.v_final.arrays()[0] - ref.values)))
    eps = 1e-6 + 5.0 * res.grid.spacing ** 2
    sups = [1.0] + [r.sup_v for r in res.reports]
    mp_ok = all(b <= a + eps for a, b in zip(sups, sups[1:]))
    ok = err <= 1e-3 and mp_ok
    acceptance_log.record(2, ok, f"transport 256pt Linf={err:.2e} (<=1e-3), "
                                 f"max principle eps={eps:.1e}")
    assert err <= 1e-3
    assert mp_ok


def test_criterion_3_contraction(tg_run_128, burgers_run, smoke_3d,
                                 acceptance_log):
    worst_ratio = 0.0
    worst_sum = 0.0
    for res in (tg_run_128, burgers_run, smoke_3d):
        budget = 0.25 * res.ledger.c12
        for rep in res.reports:
            worst_ratio = max(worst_ratio, rep.final_ratio)
            worst_sum = max(worst_sum, rep.delta_sum / budget)
    ok = worst_ratio <= 0.25 + 0.02 and worst_sum <= 1.0
    acceptance_log.record(3, ok, f"contraction ratio max={worst_ratio:.3f} "
                                 f"(<=0.27), sum/budget={worst_sum:.2e}")
    assert worst_ratio <= 0.27
    assert worst_sum <= 1.0


def test_criterion_4_parametrix(acceptance_log):
    a, b = 0.01, 0.01
    y = np.linspace(-0.45, 0.47, 301).reshape(-1, 1)
    ref = shifted_gaussian(a, [b], 1.0, np.zeros((1, 1)), y)
    series = LevySeries(constant_drift([b]), a, truncation=2)
    got = levy_gamma(series, 1.0, np.zeros(1), 0.0, y)
    levy_err = float(np.max(np.abs(got - ref)) / np.max(ref))

    ae, be, t = 0.25, 0.4, 0.05
    exp = DkExpansion(constant_drift([be]), diffusion=ae, order=2)
    dk_err = 0.0
    for xv in np.linspace(-0.3, 0.3, 7):
        got_p = param_fundamental(exp, t, np.array([xv]), np.zeros(1))
        ref_p = shifted_gaussian(ae, [be], t, np.array([[xv]]),
                                 np.zeros((1, 1)))[0]
        dk_err = max(dk_err, abs(got_p - ref_p) / ref_p)

    zseries = LevySeries(zero_drift(1), 0.2, truncation=3)
    yz = np.array([[0.25]])
    exact_gap = abs(levy_gamma(zseries, 1.0, np.zeros(1), 0.0, yz)[0]
                    - shifted_gaussian(0.2, [0.0], 1.0, np.zeros((1, 1)),
                                       yz)[0])

    wide = np.linspace(-0.9, 0.92, 801)
    mass_vals = levy_gamma(series, 1.0, np.zeros(1), 0.0,
                           wide.reshape(-1, 1))
    mass = float(np.trapezoid(mass_vals, wide))

    ok = levy_err <= 1e-3 and dk_err <= 1e-4 and exact_gap <= 1e-14 \
        and abs(mass - 1.0) <= 2e-3
    acceptance_log.record(4, ok, f"series rel={levy_err:.1e} (<=1e-3), "
                                 f"expansion rel={dk_err:.1e} (<=1e-4), "
                                 f"mass err={abs(mass-1):.1e} (<=2e-3)")
    assert levy_err <= 1e-3
    assert dk_err <= 1e-4
    assert exact_gap <= 1e-14
    assert abs(mass - 1.0) <= 2e-3


def test_criterion_5_kernels(acceptance_log):
    rng = np.random.default_rng(20240817)
    worst = 0.0
    for n in (2, 3):
        pts = rng.standard_normal((10_000, n))
        pts /= np.linalg.norm(pts, axis=1, keepdims=True)
        pts *= 1.0 + 9.0 * rng.random((10_000, 1))
        bound = 1.0 / unit_sphere_area(n)
        worst = max(worst, float(np.max(np.abs(
            poisson_kernel_grad(n, pts)))) / bound)

    gaps = []
    for m in (48, 96):
        g = make_grid(2, math.pi, m, TORUS)
        gap = gradient_consistency_gap(taylor_green_field(g, NU))
        gaps.append(gap <= 40.0 * g.spacing ** 2)

    res = [pressure_identity_residual(
        taylor_green_field(make_grid(2, math.pi, m, TORUS), NU))
        for m in (32, 64, 128)]
    rates = [math.log2(res[i] / res[i + 1]) for i in range(2)]

    ok = worst <= 1.0 + 1e-12 and all(gaps) and all(r >= 1.8 for r in rates)
    acceptance_log.record(5, ok, f"grad bound ratio={worst:.4f} (<=1), "
                                 f"identity rates={[f'{r:.2f}' for r in rates]}"
                                 f" (>=2nd order)")
    assert worst <= 1.0 + 1e-12
    assert all(gaps)
    assert all(r >= 1.8 for r in rates)


def test_criterion_6_control(controls_run, acceptance_log):
    res = controls_run
    # partition exactness
    from leraymarch.control import build_partition
    g = res.grid
    x, y = g.meshes()
    part, _ = build_partition(x ** 2 + y ** 2 <= 1.0,
                              x ** 2 + y ** 2 >= 4.0, g)
    rng = np.random.default_rng(7)
    pts = rng.uniform(-math.pi, math.pi, (100, 2))
    part_err = float(np.max(np.abs(part.partition_sum(pts) - 1.0)))

    # band exactness and dominance at the run's capped step, on the final
    # state of the 20-step run
    level = max(float(np.max(np.abs(c.values)))
                for c in res.vr_final.components)
    phi = build_phi(res.vr_final, res.r_final, level)
    band_ok = True
    for i in range(g.dim):
        vals = phi.phi_v.arrays()[i]
        bands = phi.sets.v_bands[i]
        if bands.plus.any():
            band_ok &= bool(np.all(vals[bands.plus] == -1.0))
        if bands.minus.any():
            band_ok &= bool(np.all(vals[bands.minus] == 1.0))

    rho = res.reports[-1].rho
    dom_ok = True
    for family in ("v", "r"):
        for i in range(g.dim):
            upper, lower = consumption_dominance(phi, family, i, res.r_final,
                                                 rho, NU)
            if upper is not None:
                dom_ok &= upper <= -0.75
            if lower is not None:
                dom_ok &= lower >= 0.75

    src = r_source(res.vr_final, res.r_final, rho)
    s_ok = source_term_magnitude(src, rho, NU) <= 0.5

    ledger_ok = len(res.reports) == 20 and \
        all(not r.flags for r in res.reports) and \
        all(r.sup_r <= res.ledger.c_r for r in res.reports) and \
        all(r.h2_r <= res.ledger.h2_budget(r.l, res.ledger.c_r)
            for r in res.reports)

    ok = part_err <= 1e-12 and band_ok and dom_ok and s_ok and ledger_ok
    acceptance_log.record(6, ok, f"partition err={part_err:.1e} (<=1e-12), "
                                 f"bands exact={band_ok}, dominance={dom_ok}, "
                                 f"20-step ledger clean={ledger_ok}")
    assert part_err <= 1e-12
    assert band_ok and dom_ok and s_ok and ledger_ok


def test_criterion_7_schedule(controls_run, acceptance_log):
    c = 0.5
    rho_ratio_ok = True
    for rep in controls_run.reports:
        # each step is c/l unless the cap binds, and never exceeds c/l
        rho_ratio_ok &= rep.rho <= c / rep.l + 1e-15
    total_bound = harmonic_sum_lower_bound(c, 10 ** 6)
    unbounded_ok = all(
        harmonic_sum_lower_bound(c, steps_to_reach(c, target)) >= target
        for target in (1.0, 10.0, 40.0))
    gap_ok = max(controls_run.psi_gaps) <= 0.25
    ok = rho_ratio_ok and total_bound > 6.0 and unbounded_ok and gap_ok
    acceptance_log.record(7, ok, f"decreasing steps <= c/l, harmonic sum "
                                 f"bound={total_bound:.2f}, psi gap max="
                                 f"{max(controls_run.psi_gaps):.3f} (<=0.25)")
    assert ok


def test_criterion_8_boundary(acceptance_log):
    from leraymarch.runner import run_boundary_bench
    summary = run_boundary_bench(None)
    worst_err = max(r["fd_linf_error"] for r in summary["benchmarks"])
    worst_res = max(r["residual"] for r in summary["benchmarks"])
    worst_ratio = max(r["max_series_ratio_past_1"]
                      for r in summary["benchmarks"])
    ok = summary["all_checks_pass"]
    acceptance_log.record(8, ok, f"boundary fd err={worst_err:.1e} (<=1e-3), "
                                 f"residual={worst_res:.1e} (<=1e-6), "
                                 f"series ratio={worst_ratio:.2f} (<0.9)")
    assert worst_err <= 1e-3
    assert worst_res <= 1e-6
    assert worst_ratio < 0.9


def test_criterion_9_divergence(tg_run_128, tg_run_64, acceptance_log):
    ref128 = div_reference(tg_run_128.initial)
    per_step_ok = all(r.max_divergence <= 10.0 * ref128
                      for r in tg_run_128.reports)
    final64 = tg_run_64.reports[-1].max_divergence
    final128 = tg_run_128.reports[-1].max_divergence
    order = math.log2(final64 / final128)
    ok = per_step_ok and order >= 1.0
    acceptance_log.record(9, ok,
                          f"div<=10x data scale each step ({per_step_ok}), "
                          f"refinement order={order:.2f} (>=1)")
    assert per_step_ok
    assert order >= 1.0


def test_criterion_10_determinism(tmp_path, acceptance_log):
    from leraymarch.config import parse_config
    from leraymarch.runner import run

    cfg_path = tmp_path / "det.toml"
    cfg_path.write_text("""
mode = "navier_stokes_controls_off"

[grid]
dim = 2
points = 32

[physics]
nu = 0.1
t_end = 0.05

[schedule]
mode = "uniform_section4"

[output]
dump_times = [0.05]
plots = false
""")
    cfg = parse_config(cfg_path)
    run(cfg, output_dir=tmp_path / "a")
    run(cfg, output_dir=tmp_path / "b")
    same = all(
        (tmp_path / "a" / name).read_bytes() ==
        (tmp_path / "b" / name).read_bytes()
        for name in ("step_reports.csv", "ledger.csv"))
    acceptance_log.record(10, same, "identical runs produce bit-identical "
                                    "CSV outputs")
    assert same
