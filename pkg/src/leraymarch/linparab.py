"""Frozen-drift linear advection-diffusion solves over one transformed-time unit.

Every sub-iteration of the marching scheme reduces to a Cauchy problem

    du/dtau = diffusion * lap(u) - drift . grad(u) + source

on [t0, t0 + horizon]. The marching backend is IMEX: unconditionally stable
implicit diffusion (spectral on the torus, per-axis tridiagonal sweeps on the
truncated box) with explicit upwind-biased advection and explicit source.
A kernel-representation backend (initial and source integrated against the
fundamental solution) is kept as the validation path on small grids.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence, Union

import numpy as np
from scipy.linalg import solve_banded

from .errors import BackendDisagreement, CFLViolation
from .grids import Grid, ScalarField, VectorField
from .kernels import gaussian_offsets_kernel, _fft_convolve
from .parametrix import DriftSpec, LevySeries, levy_gamma


class Trajectory:
    """Fields sampled at the substep nodes of one solve."""

    def __init__(self, grid: Grid, times: np.ndarray, states: list):
        self.grid = grid
        self.times = np.asarray(times, dtype=float)
        self.states = states  # list over times of (ncomp, *grid.shape) arrays

    @property
    def ncomp(self) -> int:
        return self.states[0].shape[0]

    def at(self, idx: int) -> np.ndarray:
        return self.states[idx]

    def final(self) -> np.ndarray:
        return self.states[-1]

    def field(self, idx: int = -1):
        state = self.states[idx]
        if state.shape[0] == 1:
            return ScalarField(self.grid, state[0])
        return VectorField.from_arrays(self.grid, list(state))

    def time_quotients(self) -> list:
        """Backward difference quotients; the first entry repeats the second."""
        dts = np.diff(self.times)
        quots = [(self.states[m + 1] - self.states[m]) / dts[m]
                 for m in range(len(dts))]
        return [quots[0]] + quots


DriftLike = Union[None, VectorField, Sequence[VectorField], np.ndarray]
SourceLike = Union[None, ScalarField, VectorField, Callable, Sequence]


@dataclass
class LinearProblem:
    diffusion: float
    drift: DriftLike
    source: SourceLike
    initial: Union[ScalarField, VectorField]
    t0: float = 0.0
    horizon: float = 1.0
    drift_spec: Optional[DriftSpec] = None

    def __post_init__(self):
        if self.diffusion <= 0.0:
            raise ValueError("diffusion must be positive")
        if self.horizon <= 0.0:
            raise ValueError("horizon must be positive")

    @property
    def grid(self) -> Grid:
        return self.initial.grid

    def initial_state(self) -> np.ndarray:
        if isinstance(self.initial, ScalarField):
            return self.initial.values[None, ...].copy()
        return np.stack(self.initial.arrays())


@dataclass
class Backend:
    kind: str = "reference_imex"
    substeps: int = 16

    def __post_init__(self):
        if self.kind not in ("reference_imex", "duhamel_parametrix"):
            raise ValueError(f"unknown backend kind {self.kind!r}")
        if self.substeps < 4:
            raise ValueError("need at least 4 substeps")


# ---------------------------------------------------------------------------
# drift / source normalization

def _drift_arrays(problem: LinearProblem, nsub: int) -> Optional[list]:
    """Per-substep drift stacks (ncomp_drift, *shape), or None for zero drift."""
    d = problem.drift
    if d is None:
        return None
    if isinstance(d, VectorField):
        arr = np.stack(d.arrays())
        return [arr] * (nsub + 1)
    if isinstance(d, np.ndarray):
        return [d] * (nsub + 1)
    seq = list(d)
    if len(seq) != nsub + 1:
        raise ValueError(f"drift sequence must have {nsub + 1} entries")
    return [np.stack(v.arrays()) if isinstance(v, VectorField) else v
            for v in seq]


def _source_states(problem: LinearProblem, times: np.ndarray,
                   ncomp: int) -> Optional[list]:
    s = problem.source
    if s is None:
        return None
    shape = problem.grid.shape

    def lift(obj):
        if isinstance(obj, ScalarField):
            return obj.values[None, ...]
        if isinstance(obj, VectorField):
            return np.stack(obj.arrays())
        arr = np.asarray(obj, dtype=float)
        if arr.shape == shape:
            arr = arr[None, ...]
        return arr

    if callable(s):
        out = [lift(s(t)) for t in times]
    elif isinstance(s, (ScalarField, VectorField, np.ndarray)):
        out = [lift(s)] * len(times)
    else:
        seq = list(s)
        if len(seq) not in (len(times), len(times) - 1):
            raise ValueError("source sequence length mismatch")
        out = [lift(o) for o in seq]
        while len(out) < len(times):
            out.append(out[-1])
    for o in out:
        if o.shape[0] != ncomp:
            raise ValueError("source component count mismatch")
    return out


# ---------------------------------------------------------------------------
# spatial operators for the marching backend

def _shift(a: np.ndarray, axis: int, s: int, torus: bool) -> np.ndarray:
    """Index shift by s with periodic wrap or zero extension."""
    out = np.roll(a, s, axis=axis)
    if not torus:
        sl = [slice(None)] * a.ndim
        if s > 0:
            sl[axis] = slice(0, s)
        else:
            sl[axis] = slice(a.shape[axis] + s, a.shape[axis])
        out[tuple(sl)] = 0.0
    return out


def _upwind2(u: np.ndarray, b: np.ndarray, axis: int, grid: Grid) -> np.ndarray:
    """Second-order upwind-biased derivative b * du/dx along one axis."""
    h = grid.spacing
    torus = grid.is_torus
    um1 = _shift(u, axis, 1, torus)
    um2 = _shift(u, axis, 2, torus)
    up1 = _shift(u, axis, -1, torus)
    up2 = _shift(u, axis, -2, torus)
    dminus = (3.0 * u - 4.0 * um1 + um2) / (2.0 * h)
    dplus = (-3.0 * u + 4.0 * up1 - up2) / (2.0 * h)
    return b * np.where(b > 0.0, dminus, dplus)


class _ImplicitDiffusion:
    """(I - c*lap)^-1 applied once per substep."""

    def __init__(self, grid: Grid, coef: float):
        self.grid = grid
        self.coef = coef
        if grid.is_torus:
            k1 = 2.0 * math.pi * np.fft.fftfreq(grid.points_per_axis,
                                                d=grid.spacing)
            ks = np.meshgrid(*([k1] * grid.dim), indexing="ij")
            k2 = sum(k * k for k in ks)
            self.symbol = 1.0 / (1.0 + coef * k2)
        else:
            m = grid.points_per_axis
            r = coef / grid.spacing ** 2
            ab = np.zeros((3, m))
            ab[0, 1:] = -r
            ab[1, :] = 1.0 + 2.0 * r
            ab[2, :-1] = -r
            self.ab = ab

    def apply(self, u: np.ndarray) -> np.ndarray:
        if self.grid.is_torus:
            return np.fft.ifftn(np.fft.fftn(u) * self.symbol).real
        out = u
        for axis in range(self.grid.dim):
            moved = np.moveaxis(out, axis, 0)
            flat = moved.reshape(moved.shape[0], -1)
            sol = solve_banded((1, 1), self.ab, flat)
            out = np.moveaxis(sol.reshape(moved.shape), 0, axis)
        return out


def _march(problem: LinearProblem, backend: Backend) -> Trajectory:
    grid = problem.grid
    nsub = backend.substeps
    dtau = problem.horizon / nsub
    times = problem.t0 + dtau * np.arange(nsub + 1)
    state = problem.initial_state()
    ncomp = state.shape[0]
    drifts = _drift_arrays(problem, nsub)
    sources = _source_states(problem, times, ncomp)

    if drifts is not None:
        bmax = max(float(np.max(np.abs(d))) for d in drifts)
        if bmax * dtau / grid.spacing > 0.5 + 1e-12:
            raise CFLViolation(
                f"advection CFL {bmax * dtau / grid.spacing:.3f} > 0.5; "
                f"raise substeps above {nsub}")

    solver = _ImplicitDiffusion(grid, problem.diffusion * dtau)
    states = [state.copy()]
    for m in range(nsub):
        new = np.empty_like(state)
        for c in range(ncomp):
            rhs = np.zeros(grid.shape)
            if drifts is not None:
                b = drifts[m]
                for ax in range(grid.dim):
                    rhs -= _upwind2(state[c], b[ax], ax, grid)
            if sources is not None:
                rhs += sources[m][c]
            new[c] = solver.apply(state[c] + dtau * rhs)
        state = new
        states.append(state.copy())
    return Trajectory(grid, times, states)


# ---------------------------------------------------------------------------
# kernel-representation backend

def _drift_spec_for(problem: LinearProblem) -> Optional[DriftSpec]:
    if problem.drift_spec is not None:
        return problem.drift_spec
    d = problem.drift
    if d is None:
        return None
    if isinstance(d, (list, tuple)):
        d = d[0]
    if isinstance(d, VectorField):
        arr = np.stack(d.arrays())
    else:
        arr = np.asarray(d)
    if float(np.max(np.abs(arr))) == 0.0:
        return None
    grid = problem.grid
    from scipy.interpolate import RegularGridInterpolator

    axes = [grid.axis()] * grid.dim
    interps = [RegularGridInterpolator(axes, arr[i], bounds_error=False,
                                       fill_value=0.0)
               for i in range(arr.shape[0])]

    def fn(pts, t=0.0):
        pts = np.atleast_2d(pts)
        q = grid.wrap(pts) if grid.is_torus else pts
        return np.stack([it(q) for it in interps], axis=-1)

    return DriftSpec(grid.dim, fn, sup_bound=float(np.max(np.abs(arr))))


def _duhamel(problem: LinearProblem, backend: Backend) -> Trajectory:
    grid = problem.grid
    nsub = backend.substeps
    dtau = problem.horizon / nsub
    times = problem.t0 + dtau * np.arange(nsub + 1)
    init = problem.initial_state()
    ncomp = init.shape[0]
    sources = _source_states(problem, times, ncomp)
    spec = _drift_spec_for(problem)

    states = [init.copy()]
    if spec is None:
        # pure diffusion: exact Gaussian propagation of initial and source
        for idx in range(1, nsub + 1):
            t = times[idx] - problem.t0
            ker = np.asarray(_sample_gauss(grid, problem.diffusion, t))
            out = np.stack([_fft_convolve(init[c], ker, grid) * 1.0
                            for c in range(ncomp)])
            if sources is not None:
                for m in range(idx):
                    el = times[idx] - (times[m] + 0.5 * dtau)
                    kerm = _sample_gauss(grid, problem.diffusion, el)
                    half = 0.5 * (sources[m] + sources[min(m + 1, nsub)])
                    for c in range(ncomp):
                        out[c] += dtau * _fft_convolve(half[c], kerm, grid)
            states.append(out)
        return Trajectory(grid, times, states)

    if grid.num_points > 48 ** grid.dim:
        raise BackendDisagreement(
            "kernel-representation backend is restricted to small grids")
    pts = grid.points()
    w = grid.quad_weights().ravel()
    series = LevySeries(spec, problem.diffusion, truncation=2)
    for idx in range(1, nsub + 1):
        tau = times[idx]
        out = np.zeros((ncomp,) + grid.shape)
        gmat = np.stack([levy_gamma(series, tau, x, problem.t0, pts)
                         for x in pts])
        for c in range(ncomp):
            out[c] = (gmat @ (w * init[c].ravel())).reshape(grid.shape)
        if sources is not None:
            for m in range(idx):
                sm = times[m] + 0.5 * dtau
                gm = np.stack([levy_gamma(series, tau, x, sm, pts)
                               for x in pts])
                half = 0.5 * (sources[m] + sources[min(m + 1, nsub)])
                for c in range(ncomp):
                    out[c] += dtau * (gm @ (w * half[c].ravel())).reshape(grid.shape)
        states.append(out)
    return Trajectory(grid, times, states)


def _sample_gauss(grid: Grid, diffusion: float, elapsed: float) -> np.ndarray:
    from .kernels import sample_kernel
    fn = gaussian_offsets_kernel(diffusion, elapsed, grid)
    ker = sample_kernel(fn, grid)
    # renormalize the discrete mass so sub-grid kernels act as near-deltas
    mass = float(np.sum(ker)) * grid.cell_volume()
    return ker / mass


# ---------------------------------------------------------------------------
# public entry points

def solve_cauchy(problem: LinearProblem, backend: Backend) -> Trajectory:
    """Solve the linear Cauchy problem, returning all substep nodes."""
    if backend.kind == "reference_imex":
        return _march(problem, backend)
    return _duhamel(problem, backend)


def cross_validate(problem: LinearProblem, substeps: int = 16) -> float:
    """Run both backends and return the final-time sup discrepancy.

    The kernel representation is not a march: away from sources its nodes are
    independent single-shot evaluations, so it runs on a coarse node set.
    """
    if problem.grid.points_per_axis > 48:
        raise BackendDisagreement("cross-validation restricted to <= 48 points/axis")
    ref = solve_cauchy(problem, Backend("reference_imex", substeps))
    duh = solve_cauchy(problem, Backend("duhamel_parametrix", 8))
    return float(np.max(np.abs(ref.final() - duh.final())))
