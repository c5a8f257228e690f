"""Run orchestration: presets, marches, and deterministic artifacts.

Artifacts per run: ``step_reports.csv`` (one row per step), ``ledger.csv``,
field dumps at the requested times, midplane SVG heatmaps of speed and
divergence, and ``summary.json`` with the pass/fail state of every invariant
assertion. CSV floats are written with ``repr`` so identical runs are
bit-identical.
"""

from __future__ import annotations

import csv
import json
import math
import os
import time
from pathlib import Path

import numpy as np

from .boundary import (BoundaryDomain, RobinData, boundary_step,
                       fd_robin_reference)
from .config import RunConfig
from .grids import (TORUS, VectorField, divergence, dump_field, load_field,
                    make_grid, norms)
from .linparab import Backend
from .oracles import (burgers_initial, cole_hopf_solution,
                      gaussian_bump_field, taylor_green_field)
from .scheme import (CONTRACTION_SLACK, CONTRACTION_TARGET, StepSchedule,
                     burgers_march, global_march)


def build_initial(config: RunConfig) -> VectorField:
    grid = make_grid(config.dim, config.extent, config.points,
                     config.topology)
    if config.preset == "taylor_green":
        return taylor_green_field(grid, config.nu)
    if config.preset == "cole_hopf_1d":
        return burgers_initial(grid)
    if config.preset == "gaussian_bump":
        return gaussian_bump_field(grid, width=config.preset_width,
                                   amplitude=config.preset_amplitude)
    loaded = load_field(config.preset_path)
    if not isinstance(loaded, VectorField):
        loaded = VectorField(loaded.grid, [loaded.values])
    return loaded


def _schedule(config: RunConfig) -> StepSchedule:
    return StepSchedule(mode=config.schedule_mode, c=config.schedule_c,
                        rho=config.schedule_rho)


def _oracle_error(config: RunConfig, grid, v_field, t: float):
    if config.preset == "taylor_green":
        ref = taylor_green_field(grid, config.nu, t)
        return max(float(np.max(np.abs(a - b)))
                   for a, b in zip(v_field.arrays(), ref.arrays()))
    if config.preset == "cole_hopf_1d":
        ref = cole_hopf_solution(grid, config.nu, t)
        return float(np.max(np.abs(v_field.arrays()[0] - ref.values)))
    return None


def _write_step_reports(path, reports):
    from .scheme import StepReport
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(StepReport.CSV_FIELDS)
        for rep in reports:
            writer.writerow(rep.csv_row())


def _write_ledger(path, ledger):
    keys = ["l", "rho", "c12", "h2_budget", "vr_sup", "v_h2", "v_sup",
            "r_sup", "r_h2", "v_flags", "r_flags"]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(keys + ["c_r", "c_gamma", "c_star_n"])
        consts = [repr(float(ledger.c_r)), repr(float(ledger.c_gamma)),
                  repr(float(ledger.c_star_n or 0.0))]
        for row in sorted(ledger.rows, key=lambda r: r["l"]):
            out = []
            for key in keys:
                val = row.get(key, "")
                if isinstance(val, float):
                    val = repr(val)
                elif isinstance(val, list):
                    val = "|".join(val)
                out.append(val)
            writer.writerow(out + consts)


def _plot_field(path, v_field):
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    grid = v_field.grid
    speed = np.sqrt(sum(a * a for a in v_field.arrays()))
    div = divergence(v_field).values if grid.dim >= 2 else None
    if grid.dim == 3:
        mid = grid.points_per_axis // 2
        speed = speed[:, :, mid]
        div = div[:, :, mid]
    panels = 1 if div is None else 2
    fig, axes = plt.subplots(1, panels, figsize=(5 * panels, 4))
    axes = np.atleast_1d(axes)
    if grid.dim == 1:
        axes[0].plot(grid.axis(), v_field.arrays()[0])
        axes[0].set_title("field")
    else:
        im0 = axes[0].imshow(speed.T, origin="lower", cmap="viridis")
        axes[0].set_title("|v| midplane")
        fig.colorbar(im0, ax=axes[0])
        im1 = axes[1].imshow(div.T, origin="lower", cmap="RdBu")
        axes[1].set_title("divergence")
        fig.colorbar(im1, ax=axes[1])
    fig.tight_layout()
    fig.savefig(path, metadata={"Date": None})
    plt.close(fig)


def run(config: RunConfig, output_dir=None) -> dict:
    """Execute the configured run and write artifacts; returns the summary."""
    np.random.seed(config.seed % (2 ** 32))
    out = Path(output_dir or os.environ.get("LERAYMARCH_OUTPUT",
                                            config.output_dir))
    out.mkdir(parents=True, exist_ok=True)
    started = time.time()

    if config.mode == "boundary_bench":
        summary = run_boundary_bench(out)
        summary["config_notes"] = config.notes
        with open(out / "summary.json", "w") as fh:
            json.dump(summary, fh, indent=2, sort_keys=True)
        return summary

    h = build_initial(config)
    grid = h.grid
    schedule = _schedule(config)
    backend = Backend(config.backend_kind, config.substeps)
    snapshot_times = sorted(set(config.dump_times) | {config.t_end})

    if config.mode == "burgers":
        result = burgers_march(h, schedule, config.t_end, config.nu,
                               backend=backend, tol_factor=config.tol_factor,
                               kmax=config.kmax,
                               snapshot_times=snapshot_times)
    else:
        controls = config.mode == "navier_stokes_controls_on"
        result = global_march(h, schedule, config.t_end, config.nu,
                              controls=controls, backend=backend,
                              tol_factor=config.tol_factor, kmax=config.kmax,
                              phi_mode=config.phi_mode,
                              snapshot_times=snapshot_times,
                              collect_psi_gap=controls)

    for rep in result.reports:
        rep.oracle_error = _oracle_error(config, grid,
                                         _snapshot_at(result, rep.t_end),
                                         rep.t_end) \
            if _snapshot_at(result, rep.t_end) is not None else None

    _write_step_reports(out / "step_reports.csv", result.reports)
    if result.ledger is not None:
        _write_ledger(out / "ledger.csv", result.ledger)
    for t, fld in result.snapshots:
        tag = f"{t:.6f}".rstrip("0").rstrip(".").replace(".", "p")
        dump_field(out / f"field_t{tag}.dat", fld,
                   payload=config.dump_payload)
        if config.plots:
            _plot_field(out / f"plot_t{tag}.svg", fld)

    checks = {
        "contraction": all(r.final_ratio <= CONTRACTION_TARGET
                           + CONTRACTION_SLACK for r in result.reports),
        "ledger_flags_clear": all(not r.flags for r in result.reports),
        "times_increasing": all(b.t_end > a.t_end for a, b in
                                zip(result.reports, result.reports[1:])),
        "reached_t_end": abs(result.t_final - config.t_end) < 1e-9,
    }
    if result.psi_gaps:
        checks["psi_gap_quarter"] = max(result.psi_gaps) <= 0.25
    final_oracle = _oracle_error(config, grid, result.v_final, result.t_final)
    summary = {
        "mode": config.mode,
        "steps": len(result.reports),
        "t_final": result.t_final,
        "final_oracle_error": final_oracle,
        "max_divergence": max(r.max_divergence for r in result.reports),
        "max_ratio": max(r.final_ratio for r in result.reports),
        "checks": checks,
        "all_checks_pass": all(checks.values()),
        "elapsed_seconds": round(time.time() - started, 3),
        "config_notes": config.notes,
    }
    with open(out / "summary.json", "w") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
    return summary


def _snapshot_at(result, t):
    for ts, fld in result.snapshots:
        if abs(ts - t) < 1e-9:
            return fld
    return None


# ---------------------------------------------------------------------------
# boundary benchmark suite

def run_boundary_bench(out_dir=None, n_points: int = 256,
                       horizon: float = 0.25) -> dict:
    """Robin benchmarks on the interval: density residuals, series decay,
    and agreement with the finite-difference reference."""
    dom = BoundaryDomain.interval(-1.0, 1.0, n_points)
    xs = dom.interior[:, 0]
    cases = {
        "robin_cosine": (np.cos(math.pi * xs / 2.0) + 0.4,
                         RobinData.constant(1.0, 0.0)),
        "neumann_constant": (np.full(n_points, 0.8),
                             RobinData.constant(0.0, 0.0)),
        "robin_forced": (0.5 * np.cos(math.pi * xs / 2.0),
                         RobinData.constant(1.0, 0.2)),
    }
    rows = []
    for name, (v0, robin) in cases.items():
        _, states, dens = boundary_step(v0, robin, 0.1, dom, horizon=horizon,
                                        n_time=32, depth=14)
        ref = fd_robin_reference(v0, robin, 0.1, dom, horizon, n_steps=4000)
        err = float(np.max(np.abs(states[0] - ref)))
        tn = dens.term_norms
        ratios = [tn[m + 1] / tn[m]
                  for m in range(1, len(tn) - 1) if tn[m] > 1e-300]
        rows.append({
            "case": name,
            "fd_linf_error": err,
            "residual": dens.residual,
            "max_series_ratio_past_1": max(ratios) if ratios else 0.0,
            "pass": bool(err <= 1e-3 and dens.residual <= 1e-6
                         and all(r < 0.9 for r in ratios)),
        })
    summary = {"benchmarks": rows,
               "all_checks_pass": all(r["pass"] for r in rows)}
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        with open(out / "boundary_bench.csv", "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["case", "fd_linf_error", "residual",
                             "max_series_ratio_past_1", "pass"])
            for row in rows:
                writer.writerow([row["case"], repr(row["fd_linf_error"]),
                                 repr(row["residual"]),
                                 repr(row["max_series_ratio_past_1"]),
                                 row["pass"]])
    return summary
