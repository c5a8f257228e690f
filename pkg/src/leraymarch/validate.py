"""Fast oracle/property suite over every module at desk-scale grids."""

from __future__ import annotations

import math

import numpy as np

CHECK_MODULES = ("grid_fields", "kernels", "parametrix", "linparab",
                 "control", "scheme", "boundary")


def _check(name, fn):
    try:
        ok, detail = fn()
        return {"name": name, "ok": bool(ok), "detail": detail}
    except Exception as exc:  # a crashed check is a failed check
        return {"name": name, "ok": False,
                "detail": f"{type(exc).__name__}: {exc}"}


def _grid_checks():
    from .grids import (FREE_SPACE, TORUS, ScalarField, decay_check,
                        divergence, make_grid, norms)
    from .oracles import taylor_green_field

    def spacing():
        g = make_grid(1, math.pi, 16, TORUS)
        return abs(g.spacing - 2 * math.pi / 16) < 1e-15, f"{g.spacing:.6f}"

    def div_refinement():
        errs = [float(np.max(np.abs(divergence(
            taylor_green_field(make_grid(2, math.pi, m, TORUS), 0.1)).values)))
            for m in (16, 32)]
        return errs[1] <= 0.3 * errs[0] + 1e-12, f"{errs}"

    def sine_l2():
        g = make_grid(1, math.pi, 256, TORUS)
        rep = norms(ScalarField.from_function(g, np.sin))
        return abs(rep.l2 - math.sqrt(math.pi)) < 1e-6, f"l2={rep.l2:.8f}"

    def decay():
        g = make_grid(2, 6.0, 32, FREE_SPACE)
        r2 = sum(m * m for m in g.meshes())
        ok_gauss, _ = decay_check(ScalarField(g, np.exp(-r2)), 5)
        ok_const, _ = decay_check(ScalarField(g, np.ones(g.shape)), 1)
        return ok_gauss and not ok_const, "gaussian passes, constant fails"

    return [_check("grid_spacing", spacing),
            _check("divergence_refinement", div_refinement),
            _check("sine_l2_oracle", sine_l2),
            _check("decay_check", decay)]


def _kernel_checks():
    from .grids import TORUS, make_grid
    from .kernels import (gradient_consistency_gap, leray_pressure,
                          poisson_kernel_grad, pressure_identity_residual,
                          unit_sphere_area)
    from .oracles import taylor_green_field

    def grad_bound():
        rng = np.random.default_rng(1)
        pts = rng.standard_normal((1000, 3))
        pts /= np.linalg.norm(pts, axis=1, keepdims=True)
        pts *= 1.0 + 3.0 * rng.random((1000, 1))
        worst = float(np.max(np.abs(poisson_kernel_grad(3, pts))))
        return worst <= 1.0 / unit_sphere_area(3) + 1e-15, f"worst={worst:.6f}"

    def tg_pressure():
        g = make_grid(2, math.pi, 64, TORUS)
        p = leray_pressure(taylor_green_field(g, 0.1)).values
        x, y = g.meshes()
        ref = -0.25 * (np.cos(2 * x) + np.cos(2 * y))
        ref -= np.mean(ref)
        err = float(np.max(np.abs(p - ref)) / np.max(np.abs(ref)))
        return err <= 0.02, f"rel={err:.5f}"

    def grad_consistency():
        g = make_grid(2, math.pi, 48, TORUS)
        gap = gradient_consistency_gap(taylor_green_field(g, 0.1))
        return gap <= 40 * g.spacing ** 2, f"gap={gap:.2e}"

    def identity_order():
        res = [pressure_identity_residual(
            taylor_green_field(make_grid(2, math.pi, m, TORUS), 0.1))
            for m in (32, 64)]
        rate = math.log2(res[0] / res[1])
        return rate >= 1.8, f"rate={rate:.2f}"

    return [_check("poisson_grad_bound", grad_bound),
            _check("taylor_green_pressure", tg_pressure),
            _check("gradient_consistency", grad_consistency),
            _check("identity_second_order", identity_order)]


def _parametrix_checks():
    from .kernels import GaussianKernelSpec, heat_kernel
    from .parametrix import (DkExpansion, LevySeries, constant_drift,
                             dk_coefficients, estimate_gamma_constant,
                             levy_gamma, param_fundamental, shifted_gaussian,
                             zero_drift)

    def zero_collapse():
        series = LevySeries(zero_drift(1), 0.2, truncation=3)
        y = np.array([[0.3]])
        got = levy_gamma(series, 1.0, np.zeros(1), 0.0, y)[0]
        ref = heat_kernel(GaussianKernelSpec(0.2, 1.0),
                          np.zeros((1, 1)), y)[0]
        return abs(got - ref) < 1e-15, f"|diff|={abs(got-ref):.2e}"

    def const_drift():
        a, b = 0.01, 0.01
        y = np.linspace(-0.4, 0.42, 101).reshape(-1, 1)
        ref = shifted_gaussian(a, [b], 1.0, np.zeros((1, 1)), y)
        series = LevySeries(constant_drift([b]), a, truncation=2)
        got = levy_gamma(series, 1.0, np.zeros(1), 0.0, y)
        err = float(np.max(np.abs(got - ref)) / np.max(ref))
        return err <= 1e-3, f"rel={err:.2e}"

    def dk_values():
        exp = DkExpansion(zero_drift(2), diffusion=1.0, order=2)
        d = dk_coefficients(exp, 0.1, np.array([0.3, 0.1]), np.zeros(2))
        ok = abs(d[0] - 1.0) < 1e-12 and np.all(np.abs(d[1:]) < 1e-8)
        exp2 = DkExpansion(constant_drift([-0.37, 0.0, 0.0]), diffusion=0.5,
                           order=0)
        d2 = dk_coefficients(exp2, 0.05, np.array([1.0, 0.0, 0.0]),
                             np.zeros(3))
        ok = ok and abs(d2[0] - math.exp(-0.37)) < 1e-10
        return ok, f"d={d}, leading={d2[0]:.8f}"

    def expansion_oracle():
        a, b, t = 0.25, 0.4, 0.05
        exp = DkExpansion(constant_drift([b]), diffusion=a, order=2)
        worst = 0.0
        for xv in (-0.2, 0.0, 0.25):
            got = param_fundamental(exp, t, np.array([xv]), np.zeros(1))
            ref = shifted_gaussian(a, [b], t, np.array([[xv]]),
                                   np.zeros((1, 1)))[0]
            worst = max(worst, abs(got - ref) / ref)
        return worst <= 1e-4, f"rel={worst:.2e}"

    def gamma_bound():
        got = estimate_gamma_constant(0.0, 1.0, 1.0, dim=1, method="series")
        ref = 1.25 * (1.0 + 2.0 / math.sqrt(math.pi))
        return abs(got - ref) / ref <= 0.05, f"got={got:.4f} ref={ref:.4f}"

    return [_check("zero_drift_collapse", zero_collapse),
            _check("constant_drift_series", const_drift),
            _check("expansion_coefficients", dk_values),
            _check("expansion_oracle", expansion_oracle),
            _check("kernel_bound_estimate", gamma_bound)]


def _linparab_checks():
    from .grids import FREE_SPACE, ScalarField, make_grid
    from .linparab import Backend, LinearProblem, cross_validate, solve_cauchy

    def heat_oracle():
        g = make_grid(1, 8.0, 256, FREE_SPACE)
        x = g.meshes()[0]
        u0 = ScalarField(g, np.exp(-x * x / 2.0))
        prob = LinearProblem(0.05, None, None, u0)
        traj = solve_cauchy(prob, Backend(substeps=64))
        s2 = 1.0 + 2 * 0.05
        expect = np.exp(-x * x / (2 * s2)) / math.sqrt(s2)
        err = float(np.max(np.abs(traj.final()[0] - expect)))
        return err <= 1e-4, f"err={err:.2e}"

    def backends_agree():
        g = make_grid(1, 8.0, 48, FREE_SPACE)
        x = g.meshes()[0]
        u0 = ScalarField(g, np.exp(-x * x / (2 * 1.44)))
        gap = cross_validate(LinearProblem(0.02, None, None, u0), substeps=32)
        return gap <= 1e-3, f"gap={gap:.2e}"

    return [_check("heat_closed_form", heat_oracle),
            _check("backend_cross_validation", backends_agree)]


def _control_checks():
    from .control import (build_partition, build_phi, consumption_dominance,
                          r_source, substep_rho_bound)
    from .grids import TORUS, VectorField, make_grid, norms
    from .oracles import taylor_green_field

    def partition_sum():
        g = make_grid(2, math.pi, 32, TORUS)
        x, y = g.meshes()
        part, _ = build_partition(x ** 2 + y ** 2 <= 1.0,
                                  x ** 2 + y ** 2 >= 4.0, g)
        rng = np.random.default_rng(2)
        pts = rng.uniform(-math.pi, math.pi, (50, 2))
        worst = float(np.max(np.abs(part.partition_sum(pts) - 1.0)))
        return worst <= 1e-12, f"worst={worst:.2e}"

    def phi_bands():
        g = make_grid(1, math.pi, 256, TORUS)
        v = VectorField(g, [np.sin(g.meshes()[0])])
        phi = build_phi(v, None, 1.0)
        vals = phi.phi_v.arrays()[0]
        bands = phi.sets.v_bands[0]
        ok = np.all(vals[bands.plus] == -1.0) and \
            np.all(vals[bands.minus] == 1.0) and \
            float(np.max(np.abs(vals))) <= 1.0
        return ok, "band values exact"

    def dominance():
        g = make_grid(1, math.pi, 256, TORUS)
        v = VectorField(g, [np.sin(g.meshes()[0])])
        phi = build_phi(v, None, 1.0)
        upper, lower = consumption_dominance(phi, "v", 0, None, 0.01, 0.1)
        return upper <= -0.75 and lower >= 0.75, \
            f"upper={upper:.3f} lower={lower:.3f}"

    def source_bound():
        g = make_grid(2, math.pi, 64, TORUS)
        v = taylor_green_field(g, 0.1)
        r = VectorField(g, [0.1 * a for a in v.arrays()])
        rho = substep_rho_bound(norms(v).sup12, norms(r).sup12, 1, 2)
        sup01 = norms(r_source(v, r, rho)).sup01
        return sup01 <= 0.25, f"|S|={sup01:.4f} at rho={rho:.2e}"

    return [_check("partition_of_unity", partition_sum),
            _check("consumption_band_values", phi_bands),
            _check("consumption_dominance", dominance),
            _check("source_quarter_bound", source_bound)]


def _scheme_checks():
    from .grids import TORUS, make_grid
    from .linparab import Backend
    from .oracles import (burgers_initial, cole_hopf_solution,
                          taylor_green_field)
    from .scheme import (StepSchedule, burgers_march, global_march,
                         harmonic_sum_lower_bound)

    def schedule_props():
        ok = abs(harmonic_sum_lower_bound(0.5, 10 ** 6) - 0.5 *
                 math.log(10 ** 6 + 1)) < 1e-12
        return ok and harmonic_sum_lower_bound(0.5, 10 ** 6) > 6.0, \
            "harmonic lower bound"

    def burgers_oracle():
        g = make_grid(1, math.pi, 256, TORUS)
        res = burgers_march(burgers_initial(g),
                            StepSchedule("uniform_section4"), 0.25, 0.1,
                            backend=Backend(substeps=16))
        ref = cole_hopf_solution(g, 0.1, res.t_final)
        err = float(np.max(np.abs(res.v_final.arrays()[0] - ref.values)))
        return err <= 1e-3, f"err={err:.2e}"

    def tg_march():
        g = make_grid(2, math.pi, 48, TORUS)
        h = taylor_green_field(g, 0.1)
        res = global_march(h, StepSchedule("uniform_section4"), 0.15, 0.1,
                           controls=False, backend=Backend(substeps=16))
        ref = taylor_green_field(g, 0.1, res.t_final)
        err = max(float(np.max(np.abs(a - b)))
                  for a, b in zip(res.v_final.arrays(), ref.arrays()))
        ratio_ok = all(r.final_ratio <= 0.27 for r in res.reports)
        return err <= 0.02 and ratio_ok, f"err={err:.2e}"

    return [_check("schedule_closed_forms", schedule_props),
            _check("transport_oracle", burgers_oracle),
            _check("vortex_march", tg_march)]


def _boundary_checks():
    from .runner import run_boundary_bench

    def bench():
        summary = run_boundary_bench(None, n_points=192, horizon=0.2)
        detail = "; ".join(f"{r['case']}:{r['fd_linf_error']:.1e}"
                           for r in summary["benchmarks"])
        return summary["all_checks_pass"], detail

    return [_check("robin_benchmarks", bench)]


_REGISTRY = {
    "grid_fields": _grid_checks,
    "kernels": _kernel_checks,
    "parametrix": _parametrix_checks,
    "linparab": _linparab_checks,
    "control": _control_checks,
    "scheme": _scheme_checks,
    "boundary": _boundary_checks,
}


def validate(module_filter=None) -> dict:
    """Run the suite (optionally one module); machine-readable results."""
    if module_filter is not None and module_filter not in _REGISTRY:
        from .errors import ValidationError
        raise ValidationError(f"unknown module {module_filter!r}; "
                              f"choose from {sorted(_REGISTRY)}")
    results = {}
    for name, builder in _REGISTRY.items():
        if module_filter is not None and name != module_filter:
            continue
        results[name] = builder()
    passed = all(c["ok"] for checks in results.values() for c in checks)
    return {"modules": results, "all_checks_pass": passed}
