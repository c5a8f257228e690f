"""Run configuration: a small validated TOML surface.

The grammar is a key=value subset of TOML (tables of scalars plus one list
of dump times); see docs/formats.md for a complete annotated example.
"""

from __future__ import annotations

import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

if sys.version_info >= (3, 11):
    import tomllib as _toml
else:
    import tomli as _toml

from .errors import ParseError, ValidationError

MODES = ("navier_stokes_controls_on", "navier_stokes_controls_off",
         "burgers", "boundary_bench")
PRESETS = ("taylor_green", "gaussian_bump", "cole_hopf_1d", "file")
TOPOLOGIES = ("torus", "free_space_truncated")
SCHEDULES = ("decreasing_paper", "uniform_section4")
BACKENDS = ("reference_imex", "duhamel_parametrix")
PHI_MODES = ("time_constant", "sin2")


@dataclass
class RunConfig:
    mode: str
    dim: int
    extent: float
    points: int
    topology: str
    schedule_mode: str
    schedule_c: float
    schedule_rho: Optional[float]
    nu: float
    t_end: float
    preset: str
    preset_path: Optional[str]
    preset_width: Optional[float]
    preset_amplitude: float
    backend_kind: str
    substeps: int
    tol_factor: float
    kmax: int
    phi_mode: str
    paper_faithful_first_step: bool
    external_force: str
    seed: int
    output_dir: str
    dump_times: list
    dump_payload: str
    plots: bool
    notes: list = field(default_factory=list)


_DEFAULTS = {
    "mode": "navier_stokes_controls_off",
    "seed": 20240817,
}


def _get(table, key, default):
    return table.get(key, default) if isinstance(table, dict) else default


def parse_config(path) -> RunConfig:
    """Parse and validate a config file; collects every problem found."""
    raw_path = Path(path)
    if not raw_path.exists():
        raise ParseError(f"config file not found: {path}")
    try:
        with open(raw_path, "rb") as fh:
            data = _toml.load(fh)
    except _toml.TOMLDecodeError as exc:
        raise ParseError(f"{path}: {exc}") from exc

    notes = []
    problems = []

    mode = data.get("mode", _DEFAULTS["mode"])
    grid = data.get("grid", {})
    sched = data.get("schedule", {})
    phys = data.get("physics", {})
    init = data.get("initial", {})
    backend = data.get("backend", {})
    tol = data.get("tolerances", {})
    controls = data.get("controls", {})
    output = data.get("output", {})

    dim = int(_get(grid, "dim", 2))
    extent = float(_get(grid, "extent", 3.141592653589793))
    points = int(_get(grid, "points", 64))
    topology = _get(grid, "topology", "torus")

    schedule_mode = _get(sched, "mode", "uniform_section4")
    schedule_c = float(_get(sched, "c", 0.5))
    schedule_rho = _get(sched, "rho", None)
    if schedule_rho is not None:
        schedule_rho = float(schedule_rho)

    if "nu" in phys:
        nu = float(phys["nu"])
    else:
        nu = 0.1
        notes.append("nu not set; defaulting to 0.1")
    t_end = float(_get(phys, "t_end", 1.0))
    external_force = _get(phys, "external_force", "none")
    if external_force != "none":
        notes.append("external_force hook present but not exercised")

    preset = _get(init, "preset", "taylor_green")
    preset_path = _get(init, "path", None)
    preset_width = _get(init, "width", None)
    if preset_width is not None:
        preset_width = float(preset_width)
    preset_amplitude = float(_get(init, "amplitude", 1.0))

    backend_kind = _get(backend, "kind", "reference_imex")
    substeps = int(_get(backend, "substeps", 16))

    tol_factor = float(_get(tol, "fixed_point_factor", 1e-8))
    kmax = int(_get(tol, "kmax", 25))

    phi_mode = _get(controls, "phi_mode", "time_constant")
    paper_first = bool(_get(controls, "paper_faithful_first_step", True))

    output_dir = _get(output, "directory", "leraymarch_out")
    dump_times = list(_get(output, "dump_times", []))
    dump_payload = _get(output, "dump_payload", "binary")
    plots = bool(_get(output, "plots", True))
    seed = int(data.get("seed", _DEFAULTS["seed"]))

    # validation: collect everything before raising
    if mode not in MODES:
        problems.append(f"mode must be one of {MODES}, got {mode!r}")
    if dim not in (1, 2, 3):
        problems.append(f"grid.dim must be 1, 2 or 3, got {dim}")
    if points < 8:
        problems.append(f"grid.points must be >= 8, got {points}")
    if extent <= 0:
        problems.append(f"grid.extent must be positive, got {extent}")
    if topology not in TOPOLOGIES:
        problems.append(f"grid.topology must be one of {TOPOLOGIES}")
    if schedule_mode not in SCHEDULES:
        problems.append(f"schedule.mode must be one of {SCHEDULES}")
    if schedule_mode == "decreasing_paper" and schedule_c <= 0:
        problems.append("schedule.c must be positive")
    if schedule_rho is not None and schedule_rho <= 0:
        problems.append("schedule.rho must be positive when set")
    if nu <= 0:
        problems.append(f"physics.nu must be positive, got {nu}")
    if t_end <= 0:
        problems.append(f"physics.t_end must be positive, got {t_end}")
    if preset not in PRESETS:
        problems.append(f"initial.preset must be one of {PRESETS}")
    if preset == "taylor_green" and dim != 2:
        problems.append("taylor_green preset is 2D; set grid.dim = 2")
    if preset == "taylor_green" and topology != "torus":
        problems.append("taylor_green preset needs the torus topology")
    if preset == "cole_hopf_1d" and (dim != 1 or topology != "torus"):
        problems.append("cole_hopf_1d preset needs a 1D torus grid")
    if preset == "file" and not preset_path:
        problems.append("initial.path required for the file preset")
    if preset == "file" and preset_path and not Path(preset_path).exists():
        problems.append(f"initial.path does not exist: {preset_path}")
    if mode == "burgers" and preset == "taylor_green":
        problems.append("burgers mode needs 1D data (cole_hopf_1d, "
                        "gaussian_bump or file)")
    if backend_kind not in BACKENDS:
        problems.append(f"backend.kind must be one of {BACKENDS}")
    if substeps < 4:
        problems.append("backend.substeps must be >= 4")
    if tol_factor <= 0:
        problems.append("tolerances.fixed_point_factor must be positive")
    if kmax < 1:
        problems.append("tolerances.kmax must be >= 1")
    if phi_mode not in PHI_MODES:
        problems.append(f"controls.phi_mode must be one of {PHI_MODES}")
    if dump_payload not in ("binary", "csv"):
        problems.append("output.dump_payload must be 'binary' or 'csv'")
    if any(t <= 0 for t in dump_times):
        problems.append("output.dump_times must be positive")

    if problems:
        raise ValidationError(problems)

    return RunConfig(
        mode=mode, dim=dim, extent=extent, points=points, topology=topology,
        schedule_mode=schedule_mode, schedule_c=schedule_c,
        schedule_rho=schedule_rho, nu=nu, t_end=t_end, preset=preset,
        preset_path=preset_path, preset_width=preset_width,
        preset_amplitude=preset_amplitude, backend_kind=backend_kind,
        substeps=substeps, tol_factor=tol_factor, kmax=kmax,
        phi_mode=phi_mode, paper_faithful_first_step=paper_first,
        external_force=external_force, seed=seed, output_dir=output_dir,
        dump_times=dump_times, dump_payload=dump_payload, plots=plots,
        notes=notes)
