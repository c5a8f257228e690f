import math

import numpy as np
import pytest

from leraymarch.control import BoundsLedger
from leraymarch.errors import CapCollapse, ScheduleError
from leraymarch.grids import TORUS, VectorField, divergence, make_grid, norms
from leraymarch.linparab import Backend
from leraymarch.oracles import (burgers_initial, cole_hopf_solution,
                                gaussian_bump_field, taylor_green_field)
from leraymarch.scheme import (StepSchedule, burgers_march, global_march,
                               harmonic_sum_lower_bound, local_fixed_point,
                               psi_gap_diagnostic, rho_schedule,
                               steps_to_reach)


def small_ledger():
    g = make_grid(2, math.pi, 16, TORUS)
    h = taylor_green_field(g, 0.1)
    led = BoundsLedger.from_initial_data(h, 0.1, c_gamma=2.0)
    led.c_star_n = 1.0
    return led


# ---------------------------------------------------------------------------
# schedules

def test_decreasing_schedule_c_over_l():
    led = small_ledger()
    sched = StepSchedule("decreasing_paper", c=0.5)
    # cap not binding for tiny norms
    rho = rho_schedule(10, led, sched, c12_prev=1e-6)
    assert rho == pytest.approx(0.05)


def test_schedule_cap_binds():
    led = small_ledger()
    sched = StepSchedule("decreasing_paper", c=100.0)
    rho = rho_schedule(1, led, sched, c12_prev=10.0)
    cap = 1.0 / (1.0 * (10.0) * 2.0 * 4.0 * led.c_gamma ** 2)
    assert rho == pytest.approx(cap)


def test_uniform_schedule_freezes_first_cap():
    led = small_ledger()
    sched = StepSchedule("uniform_section4")
    r1 = rho_schedule(1, led, sched, c12_prev=10.0)
    r5 = rho_schedule(5, led, sched, c12_prev=10.0)
    assert r1 == r5 > 0


def test_uniform_schedule_rejects_oversized_rho():
    led = small_ledger()
    sched = StepSchedule("uniform_section4", rho=100.0)
    with pytest.raises(ScheduleError):
        rho_schedule(1, led, sched, c12_prev=10.0)


def test_cap_collapse_detected():
    led = small_ledger()
    sched = StepSchedule("decreasing_paper", c=0.5)
    with pytest.raises(CapCollapse):
        rho_schedule(1, led, sched, c12_prev=1e12)


def test_harmonic_sum_properties():
    # closed-form comparison: no simulation needed for divergence of the sum
    c = 0.5
    total_bound = harmonic_sum_lower_bound(c, 10 ** 6)
    assert total_bound > 6.0
    for target in (1.0, 5.0, 20.0):
        n = steps_to_reach(c, target)
        assert harmonic_sum_lower_bound(c, n) >= target


# ---------------------------------------------------------------------------
# local fixed point

def test_fixed_point_zero_data_stays_zero():
    g = make_grid(2, math.pi, 16, TORUS)
    traj, hist = local_fixed_point(VectorField.zeros(g), 0.05, 0.1, 1, None,
                                   tol=1e-10, backend=Backend(substeps=8))
    assert max(float(np.max(np.abs(s))) for s in traj.states) == 0.0
    assert hist[0].delta_norm12 <= 1e-10


def test_fixed_point_contracts_on_taylor_green():
    g = make_grid(2, math.pi, 32, TORUS)
    h = taylor_green_field(g, 0.1)
    traj, hist = local_fixed_point(h, 0.01, 0.1, 1, None, tol=1e-12, kmax=6,
                                   backend=Backend(substeps=8))
    ratios = [st.ratio for st in hist if st.ratio is not None]
    assert ratios and max(ratios) <= 0.25


# ---------------------------------------------------------------------------
# transport-diffusion baseline

def test_burgers_constant_data_steady():
    g = make_grid(1, math.pi, 64, TORUS)
    h = VectorField(g, [np.full(g.shape, 0.7)])
    res = burgers_march(h, StepSchedule("uniform_section4"), 0.05, 0.1,
                        backend=Backend(substeps=8))
    assert max(np.max(np.abs(a - 0.7)) for a in res.v_final.arrays()) <= 1e-12


def test_burgers_max_principle_and_oracle():
    g = make_grid(1, math.pi, 256, TORUS)
    h = burgers_initial(g)
    res = burgers_march(h, StepSchedule("uniform_section4"), 0.5, 0.1,
                        backend=Backend(substeps=16))
    # sup never grew beyond the grid tolerance (no exception) and stays <= 1
    eps = 1e-6 + 5.0 * g.spacing ** 2
    assert all(r.sup_v <= 1.0 + eps for r in res.reports)
    ref = cole_hopf_solution(g, 0.1, res.t_final)
    err = float(np.max(np.abs(res.v_final.arrays()[0] - ref.values)))
    assert err <= 1e-3


# ---------------------------------------------------------------------------
# full march

def test_march_zero_data():
    g = make_grid(2, math.pi, 16, TORUS)
    res = global_march(VectorField.zeros(g), StepSchedule("uniform_section4",
                                                          rho=0.01),
                       0.03, 0.1, controls=False, backend=Backend(substeps=8))
    assert max(np.max(np.abs(a)) for a in res.v_final.arrays()) == 0.0


def test_march_taylor_green_decay():
    g = make_grid(2, math.pi, 64, TORUS)
    h = taylor_green_field(g, 0.1)
    res = global_march(h, StepSchedule("uniform_section4"), 0.25, 0.1,
                       controls=False, backend=Backend(substeps=16))
    ref = taylor_green_field(g, 0.1, res.t_final)
    err = max(float(np.max(np.abs(a - b)))
              for a, b in zip(res.v_final.arrays(), ref.arrays()))
    assert res.t_final == pytest.approx(0.25)
    assert err <= 0.02 * math.exp(-0.2 * res.t_final)


def test_march_divergence_stays_small():
    g = make_grid(2, math.pi, 64, TORUS)
    h = taylor_green_field(g, 0.1)
    res = global_march(h, StepSchedule("uniform_section4"), 0.1, 0.1,
                       controls=False, backend=Backend(substeps=16))
    floor = 2.0 * g.spacing ** 2 / 6.0  # third-derivative scale of the data
    assert all(r.max_divergence <= 10.0 * floor for r in res.reports)


def test_march_snapshots_and_time_stamps():
    g = make_grid(2, math.pi, 32, TORUS)
    h = taylor_green_field(g, 0.1)
    res = global_march(h, StepSchedule("uniform_section4"), 0.1,
                       0.1, controls=False, backend=Backend(substeps=8),
                       snapshot_times=[0.05, 0.1])
    assert len(res.snapshots) == 2
    times = [r.t_end for r in res.reports]
    assert all(b > a for a, b in zip(times, times[1:]))
    assert times[-1] == pytest.approx(0.1)


def test_controls_on_ledger_and_gap():
    g = make_grid(2, math.pi, 32, TORUS)
    h = taylor_green_field(g, 0.1)
    res = global_march(h, StepSchedule("decreasing_paper", c=0.5), 1e9, 0.1,
                       controls=True, backend=Backend(substeps=8),
                       collect_psi_gap=True, max_steps=8)
    assert len(res.reports) == 8
    assert all(not r.flags for r in res.reports)
    assert all(r.sup_r <= res.ledger.c_r for r in res.reports)
    assert res.psi_gaps[0] == 0.0      # auxiliary field still zero
    assert max(res.psi_gaps) <= 0.25
    # solution recovered by subtraction stays near the plain solution scale
    assert max(np.max(np.abs(a)) for a in res.v_final.arrays()) <= 1.2


def test_psi_gap_zero_without_auxiliary_field():
    g = make_grid(2, math.pi, 16, TORUS)
    h = taylor_green_field(g, 0.1)
    assert psi_gap_diagnostic(h, None, 0.01, 0.1) == 0.0


def test_march_3d_smoke():
    g = make_grid(3, 6.0, 16, "free_space_truncated")
    h = gaussian_bump_field(g)
    res = global_march(h, StepSchedule("uniform_section4"), 1e9, 0.1,
                       controls=False, backend=Backend(substeps=8),
                       max_steps=2)
    assert len(res.reports) == 2
    ratios = [r.final_ratio for r in res.reports]
    assert max(ratios) <= 0.27
