"""Growth control: threshold bands, bump partitions, consumption sources,
the auxiliary linear solve, and the bounds ledger the march asserts against.

Each step builds, per velocity component, a bounded source that is exactly -1
where the previous step's data sit in the upper threshold band and exactly +1
in the lower band, with a smooth fill proportional to the data in between.
The auxiliary field solves a linearized step equation driven by that source;
its sup and Hilbert norms are checked against the ledger every step.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, List, Optional

import numpy as np
from scipy import ndimage
from scipy.interpolate import RegularGridInterpolator

from .errors import EmptyDistance, LedgerBreach, LedgerViolation
from .grids import Grid, ScalarField, VectorField, d1, norms
from .kernels import LerayOperators, unit_sphere_area
from .linparab import Backend, LinearProblem, Trajectory, solve_cauchy


# ---------------------------------------------------------------------------
# smooth bump partition of unity

def _bump(y: np.ndarray) -> np.ndarray:
    out = np.zeros_like(y)
    inside = np.abs(y) < 1.0
    yi = y[inside]
    out[inside] = np.exp(-1.0 / (1.0 - yi * yi))
    return out


def _bump_over_total(y: np.ndarray, total: np.ndarray) -> np.ndarray:
    return np.where(np.abs(y) < 1.0, _bump(y) / total, 0.0)


@dataclass
class BumpPartition:
    """Lattice of normalized bump products with cell size mu."""

    grid: Grid
    mu: float
    count: Optional[int]  # lattice cells per axis on the torus, else None
    p_plus: list          # lattice tuples whose bump is added
    p_minus: list         # lattice tuples whose bump is subtracted
    c_plus_report: float = 0.0

    def _axis_psi(self, coords: np.ndarray, p: int) -> np.ndarray:
        t = coords / self.mu - p
        if self.count is not None:
            t = (t + 0.5 * self.count) % self.count - 0.5 * self.count
        frac = t - np.floor(t)
        total = _bump(frac) + _bump(frac - 1.0)
        return _bump_over_total(t, total)

    def bump_value(self, pts: np.ndarray, p: tuple) -> np.ndarray:
        out = np.ones(pts.shape[0])
        for ax in range(self.grid.dim):
            out *= self._axis_psi(pts[:, ax], p[ax])
        return out

    def evaluate(self, pts: np.ndarray):
        """Return (f, w): signed sum and total bump mass at the points."""
        pts = np.atleast_2d(pts)
        f = np.zeros(pts.shape[0])
        w = np.zeros(pts.shape[0])
        for p in self.p_plus:
            v = self.bump_value(pts, p)
            f += v
            w += v
        for p in self.p_minus:
            v = self.bump_value(pts, p)
            f -= v
            w += v
        return f, w

    def partition_sum(self, pts: np.ndarray) -> np.ndarray:
        """Sum over the full lattice (exactness check; equals 1 everywhere)."""
        pts = np.atleast_2d(pts)
        out = np.zeros(pts.shape[0])
        if self.count is not None:
            ranges = [range(self.count)] * self.grid.dim
        else:
            los = np.floor(pts.min(axis=0) / self.mu).astype(int) - 1
            his = np.floor(pts.max(axis=0) / self.mu).astype(int) + 2
            ranges = [range(lo, hi) for lo, hi in zip(los, his)]
        import itertools
        for p in itertools.product(*ranges):
            out += self.bump_value(pts, p)
        return out


def _set_distance(a_mask: np.ndarray, b_mask: np.ndarray, grid: Grid) -> float:
    """Minimal Euclidean distance between two grid index sets."""
    if not a_mask.any() or not b_mask.any():
        return math.inf
    if grid.is_torus:
        tiled = np.tile(b_mask, (3,) * grid.dim)
        dist = ndimage.distance_transform_edt(~tiled)
        m = grid.points_per_axis
        center = tuple(slice(m, 2 * m) for _ in range(grid.dim))
        dist = dist[center]
    else:
        dist = ndimage.distance_transform_edt(~b_mask)
    return float(dist[a_mask].min()) * grid.spacing


def _candidate_cells(mask: np.ndarray, grid: Grid, mu: float,
                     count: Optional[int]) -> list:
    coords = np.stack([m[mask] for m in grid.meshes()], axis=-1)
    cells = set()
    for row in coords:
        ranges = []
        for ax in range(grid.dim):
            t = row[ax] / mu
            lo = int(np.floor(t - 1.0)) + 1
            hi = int(np.ceil(t + 1.0)) - 1
            opts = range(lo, hi + 1)
            if count is not None:
                opts = [o % count for o in opts]
            ranges.append(sorted(set(opts)))
        import itertools
        for p in itertools.product(*ranges):
            cells.add(p)
    return sorted(cells)


def build_partition(a_mask: np.ndarray, b_mask: np.ndarray, grid: Grid):
    """Blend field for two disjoint index sets: +1 on A, -1 on B, |f| <= 1.

    Returns (BumpPartition, ScalarField). Raises EmptyDistance when the sets
    touch on the grid.
    """
    a_mask = np.asarray(a_mask, dtype=bool)
    b_mask = np.asarray(b_mask, dtype=bool)
    if (a_mask & b_mask).any():
        raise EmptyDistance("sets overlap")
    dist = _set_distance(a_mask, b_mask, grid)
    if dist == 0.0:
        raise EmptyDistance("sets touch on the grid")
    if math.isinf(dist):
        # one set empty: any comfortable cell size works
        dist = grid.extent
    mu = dist / (2.0 * math.sqrt(grid.dim)) * (1.0 - 1e-9)
    count = None
    if grid.is_torus:
        count = max(3, int(math.ceil(grid.period / mu)))
        mu = grid.period / count
    part = BumpPartition(grid, mu, count,
                         _candidate_cells(a_mask, grid, mu, count),
                         _candidate_cells(b_mask, grid, mu, count))
    pts = grid.points()
    f, _ = part.evaluate(pts)
    fld = ScalarField(grid, f.reshape(grid.shape))
    rep = norms(fld)
    part.c_plus_report = rep.sup12
    return part, fld


# ---------------------------------------------------------------------------
# threshold bands

def _wrap_erode(mask: np.ndarray, grid: Grid) -> np.ndarray:
    out = mask.copy()
    for ax in range(grid.dim):
        for s in (1, -1):
            rolled = np.roll(mask, s, axis=ax)
            if not grid.is_torus:
                sl = [slice(None)] * mask.ndim
                sl[ax] = 0 if s > 0 else -1
                rolled[tuple(sl)] = False
            out &= rolled
    return out


@dataclass
class ComponentBands:
    plus: np.ndarray
    minus: np.ndarray
    distance: float
    shrunk: int = 0


@dataclass
class ThresholdSets:
    level: float
    v_bands: List[ComponentBands]
    r_bands: List[ComponentBands]


def build_threshold_sets(v_prev: VectorField, r_prev: Optional[VectorField],
                         level: float) -> ThresholdSets:
    """Index sets where the data modulus sits in [level/2, level].

    The auxiliary-field bands exclude points already claimed by the velocity
    bands of the same component.
    """
    grid = v_prev.grid
    sup = max(float(np.max(np.abs(c.values))) for c in v_prev.components)
    if sup > level * (1.0 + 1e-12):
        raise LedgerViolation(
            f"sup |data| = {sup:.6g} exceeds declared level {level:.6g}")

    def bands_for(values, exclude=None):
        plus = (values >= 0.5 * level) & (values <= level * (1.0 + 1e-12))
        minus = (values <= -0.5 * level) & (values >= -level * (1.0 + 1e-12))
        if exclude is not None:
            plus &= ~exclude
            minus &= ~exclude
        dist = _set_distance(plus, minus, grid)
        shrunk = 0
        while dist < 2.0 * grid.spacing and plus.any() and minus.any():
            plus = _wrap_erode(plus, grid)
            minus = _wrap_erode(minus, grid)
            shrunk += 1
            dist = _set_distance(plus, minus, grid)
        return ComponentBands(plus, minus, dist, shrunk)

    v_bands = [bands_for(c.values) for c in v_prev.components]
    r_bands = []
    for i in range(grid.dim):
        if r_prev is None:
            empty = np.zeros(grid.shape, dtype=bool)
            r_bands.append(ComponentBands(empty, empty.copy(), math.inf))
        else:
            excl = v_bands[i].plus | v_bands[i].minus
            r_bands.append(bands_for(r_prev.components[i].values, exclude=excl))
    return ThresholdSets(level, v_bands, r_bands)


# ---------------------------------------------------------------------------
# consumption source fields

def _interpolator(grid: Grid, values: np.ndarray) -> Callable:
    axis = grid.axis()
    if grid.is_torus:
        axis = np.concatenate([axis, [axis[0] + grid.period]])
        pad = values
        for ax in range(grid.dim):
            first = np.take(pad, [0], axis=ax)
            pad = np.concatenate([pad, first], axis=ax)
        values = pad
    interp = RegularGridInterpolator([axis] * grid.dim, values,
                                     bounds_error=False, fill_value=0.0)

    def fn(pts):
        pts = np.atleast_2d(pts)
        if grid.is_torus:
            pts = (pts + grid.extent) % grid.period - grid.extent
        return interp(pts)

    return fn


_PROFILE_CORE = 0.375  # the fill stays exactly proportional up to this level


def _smoothstep(t: np.ndarray) -> np.ndarray:
    t = np.clip(t, 0.0, 1.0)
    num = _bump_half(t)
    return num / (num + _bump_half(1.0 - t))


def _bump_half(u: np.ndarray) -> np.ndarray:
    out = np.zeros_like(u)
    pos = u > 0.0
    out[pos] = np.exp(-1.0 / u[pos])
    return out


def consumption_profile(s: np.ndarray) -> np.ndarray:
    """Odd smooth profile: -2s on |s| <= 0.375, exactly -sign(s) beyond 0.5.

    Built from the same exponential-bump smoothstep as the partition lemma;
    stays within [-1, 1] everywhere.
    """
    s = np.asarray(s, dtype=float)
    a = np.abs(s)
    w = _smoothstep((a - _PROFILE_CORE) / (0.5 - _PROFILE_CORE))
    mag = (1.0 - w) * 2.0 * a + w
    return -np.sign(s) * np.minimum(mag, 1.0)


class _ComponentPhi:
    """One component of a consumption family: the smooth profile of the data.

    Exactly -1 where the data sit in the upper band [level/2, level], +1 in
    the lower band, and -(2/level) * data wherever the modulus stays under
    0.375 * level; a bump-smoothstep bridges the two regimes.
    """

    def __init__(self, grid: Grid, bands: ComponentBands, data: np.ndarray,
                 level: float):
        self.grid = grid
        self.bands = bands
        self.level = level
        self._data = data
        self._fill = _interpolator(grid, data)

    def evaluate(self, pts: np.ndarray) -> np.ndarray:
        pts = np.atleast_2d(pts)
        return consumption_profile(self._fill(pts) / self.level)

    def on_grid(self) -> np.ndarray:
        return consumption_profile(self._data / self.level)


@dataclass
class ConsumptionField:
    """Per-component consumption sources phi = phi_v + phi_r for one step."""

    grid: Grid
    sets: ThresholdSets
    phi_v: VectorField
    phi_r: VectorField
    v_parts: list
    r_parts: list
    mode: str = "time_constant"

    def time_factor(self, tau_frac: float) -> float:
        if self.mode == "sin2":
            return math.sin(math.pi * tau_frac) ** 2
        return 1.0

    def total_arrays(self) -> np.ndarray:
        return np.stack([a + b for a, b in zip(self.phi_v.arrays(),
                                               self.phi_r.arrays())])

    def evaluate_total(self, i: int, pts: np.ndarray,
                       tau_frac: float = 0.0) -> np.ndarray:
        out = self.v_parts[i].evaluate(pts)
        if self.r_parts[i] is not None:
            out = out + self.r_parts[i].evaluate(pts)
        return self.time_factor(tau_frac) * out

    def evaluate_family(self, family: str, i: int, pts: np.ndarray) -> np.ndarray:
        part = self.v_parts[i] if family == "v" else self.r_parts[i]
        if part is None:
            return np.zeros(np.atleast_2d(pts).shape[0])
        return part.evaluate(pts)


def build_phi(v_prev: VectorField, r_prev: Optional[VectorField], level: float,
              mode: str = "time_constant",
              sets: Optional[ThresholdSets] = None) -> ConsumptionField:
    """Assemble the consumption sources from the previous step's data."""
    grid = v_prev.grid
    if sets is None:
        sets = build_threshold_sets(v_prev, r_prev, level)
    v_parts = [
        _ComponentPhi(grid, sets.v_bands[i], v_prev.components[i].values, level)
        for i in range(grid.dim)]
    if r_prev is None:
        r_parts = [None] * grid.dim
        phi_r = VectorField.zeros(grid)
    else:
        r_parts = [
            _ComponentPhi(grid, sets.r_bands[i], r_prev.components[i].values,
                          level)
            for i in range(grid.dim)]
        phi_r = VectorField(grid, [p.on_grid() for p in r_parts])
    phi_v = VectorField(grid, [p.on_grid() for p in v_parts])
    return ConsumptionField(grid, sets, phi_v, phi_r, v_parts, r_parts, mode)


# ---------------------------------------------------------------------------
# auxiliary-field source and solve

def poisson_gradient_quad_constant(n: int) -> float:
    """Bound constant for gradient-kernel integrals: the unit-ball integral of
    one gradient component plus the far-field bound 1/omega_n."""
    omega = unit_sphere_area(n)
    if n == 2:
        ball = 2.0 / math.pi
    elif n == 3:
        ball = 0.5
    else:
        # 2 * volume of the (n-1)-ball / omega_n
        vol = math.pi ** ((n - 1) / 2.0) / math.gamma((n + 1) / 2.0)
        ball = 2.0 * vol / omega
    return ball + 1.0 / omega


def _pair_sum(a: VectorField, b: VectorField) -> np.ndarray:
    """sum_{j,k} (d_j a_k)(d_k b_j) on the grid."""
    g = a.grid
    aa = a.arrays()
    bb = b.arrays()
    out = np.zeros(g.shape)
    for j in range(g.dim):
        for k in range(g.dim):
            out += d1(aa[k], j, g) * d1(bb[j], k, g)
    return out


def r_source(v_prev: VectorField, r_prev: VectorField, rho: float) -> VectorField:
    """Assemble the five-term source of the auxiliary linear step equation."""
    grid = v_prev.grid
    ops = LerayOperators(grid)
    q_rr = _pair_sum(r_prev, r_prev)
    q_rv = _pair_sum(r_prev, v_prev)
    q_vv = _pair_sum(v_prev, v_prev)
    rhs_rr = ops.rhs_from_q(q_rr)
    rhs_rv = ops.rhs_from_q(q_rv)
    rhs_vv = ops.rhs_from_q(q_vv)
    v_arr = v_prev.arrays()
    r_arr = r_prev.arrays()
    comps = []
    for i in range(grid.dim):
        transport = np.zeros(grid.shape)
        for j in range(grid.dim):
            transport += r_arr[j] * d1(v_arr[i], j, grid)
            transport += v_arr[j] * d1(r_arr[i], j, grid)
        comps.append(rho * (rhs_rr[i] - transport + 2.0 * rhs_rv[i] - rhs_vv[i]))
    return VectorField(grid, comps)


def substep_rho_bound(c02_prev: float, c_r: float, l: int, n: int) -> float:
    """Step size below which the assembled source stays under a quarter."""
    ck = poisson_gradient_quad_constant(n)
    denom = 4.0 * (2.0 * ck * (2.0 * c02_prev + 2.0 * l * c02_prev
                               + 2.0 * c_r + 2.0 * l * c_r)
                   + 4.0 * n * c02_prev * c_r)
    return 1.0 / denom if denom > 0 else math.inf


def solve_r(v_prev: VectorField, r_prev: Optional[VectorField],
            phi: Optional[ConsumptionField], rho: float, nu: float,
            step_index: int, ledger: "BoundsLedger",
            backend: Optional[Backend] = None,
            paper_faithful_first_step: bool = True) -> Trajectory:
    """Solve the linearized auxiliary equation over one transformed-time unit
    and check its ledger bounds."""
    grid = v_prev.grid
    backend = backend or Backend()
    t0 = float(step_index - 1)
    if (step_index <= 1 and paper_faithful_first_step) or r_prev is None:
        times = t0 + np.arange(backend.substeps + 1) / backend.substeps
        zeros = [np.zeros((grid.dim,) + grid.shape)
                 for _ in range(backend.substeps + 1)]
        return Trajectory(grid, times, zeros)

    src_static = np.stack(r_source(v_prev, r_prev, rho).arrays())
    if phi is not None:
        phi_static = phi.total_arrays()

        def source(tau):
            return src_static + phi.time_factor(tau - t0) * phi_static
    else:
        def source(tau):
            return src_static

    drift = VectorField(grid, [rho * a for a in r_prev.arrays()])
    prob = LinearProblem(rho * nu, drift, source, r_prev, t0=t0, horizon=1.0)
    traj = solve_cauchy(prob, backend)
    ledger.check_r_step(traj, step_index)
    return traj


# ---------------------------------------------------------------------------
# dominance quadrature

def consumption_dominance(phi: ConsumptionField, family: str, i: int,
                          r_prev: Optional[VectorField], rho: float, nu: float,
                          tau_frac: float = 1.0, max_points: int = 12,
                          gh_nodes: int = 8, time_nodes: int = 8):
    """Quadrature of the consumption source against the step kernel on the
    component's own upper band; the analogous integral on the lower band is
    the mirror image. Returns (worst_upper, best_lower) normalized by the
    elapsed fraction; empty bands give (None, None).
    """
    grid = phi.grid
    bands = (phi.sets.v_bands if family == "v" else phi.sets.r_bands)[i]
    part = phi.v_parts[i] if family == "v" else phi.r_parts[i]
    if part is None or not (bands.plus.any() or bands.minus.any()):
        return None, None
    xg, wg = np.polynomial.hermite_e.hermegauss(gh_nodes)
    wg = wg / math.sqrt(2.0 * math.pi)
    mesh = np.meshgrid(*([xg] * grid.dim), indexing="ij")
    zpts = np.stack([m.ravel() for m in mesh], axis=-1)
    zw = np.ones(zpts.shape[0])
    for m in np.meshgrid(*([wg] * grid.dim), indexing="ij"):
        zw *= m.ravel()

    drift_fn = None
    if r_prev is not None:
        interp = [_interpolator(grid, a) for a in r_prev.arrays()]
        drift_fn = lambda p: np.stack([f(p) for f in interp], axis=-1)

    def integral(x):
        su = tau_frac * (np.arange(time_nodes) + 0.5) / time_nodes
        total = 0.0
        for s in su:
            el = tau_frac - s
            sigma = math.sqrt(2.0 * rho * nu * el)
            centers = x[None, :] - zpts * 0.0
            if drift_fn is not None:
                centers = centers - rho * el * drift_fn(x[None, :])
            pts = centers + sigma * zpts
            vals = part.evaluate(pts)
            total += (tau_frac / time_nodes) * float(np.sum(zw * vals))
        return total

    def collect(mask):
        coords = np.stack([m[mask] for m in grid.meshes()], axis=-1)
        if coords.shape[0] > max_points:
            idx = np.linspace(0, coords.shape[0] - 1, max_points).astype(int)
            coords = coords[idx]
        return coords

    worst_upper = None
    if bands.plus.any():
        worst_upper = max(integral(x) for x in collect(bands.plus))
    best_lower = None
    if bands.minus.any():
        best_lower = min(integral(x) for x in collect(bands.minus))
    return worst_upper, best_lower


def source_term_magnitude(src: VectorField, rho: float, nu: float,
                          tau_frac: float = 1.0) -> float:
    """Upper bound on the kernel-integrated source over the elapsed fraction.

    The kernel has unit mass per time slice, so the integral is bounded by
    the source sup norm times the elapsed fraction.
    """
    sup = max(float(np.max(np.abs(a))) for a in src.arrays())
    return sup * tau_frac


# ---------------------------------------------------------------------------
# bounds ledger

@dataclass
class BoundsLedger:
    """Global constants of the run plus per-step audit rows."""

    c_r: float
    c12: float
    c_gamma: float
    nu: float
    dim: int
    c_star_n: Optional[float] = None
    rows: list = field(default_factory=list)
    strict: bool = True

    @classmethod
    def from_initial_data(cls, h: VectorField, nu: float,
                          c_gamma: float) -> "BoundsLedger":
        grid = h.grid
        rep = norms(h)
        w = grid.quad_weights()
        arrs = h.arrays()
        first_abs = np.zeros(grid.shape)
        second_abs = np.zeros(grid.shape)
        for k in range(grid.dim):
            for j in range(grid.dim):
                first_abs += np.abs(d1(arrs[k], j, grid))
                for p in range(grid.dim):
                    second_abs += np.abs(d1(d1(arrs[k], j, grid), p, grid))
        int1 = float(np.sum(w * first_abs * first_abs))
        int2 = float(np.sum(w * second_abs * first_abs))
        c_r = 2.0 + 2.0 * rep.sup12 + int1 + int2
        return cls(c_r=c_r, c12=c_r, c_gamma=c_gamma, nu=nu, dim=grid.dim)

    def calibrate_c_star(self, h2_v: float, h2_r: float, l: int = 1) -> float:
        """Freeze the dimension constant: the smallest power of two making
        the first step's Hilbert-norm budgets pass."""
        need = max(h2_v / (self.c12 * (1.0 + l)),
                   h2_r / (self.c_r * (1.0 + l)) if self.c_r > 0 else 0.0,
                   2.0 ** -10)
        self.c_star_n = 2.0 ** math.ceil(math.log2(need))
        return self.c_star_n

    def h2_budget(self, l: int, constant: float) -> float:
        c_star = self.c_star_n if self.c_star_n is not None else 1.0
        return c_star * constant * (1.0 + l)

    def check_r_step(self, traj: Trajectory, l: int):
        sup = max(float(np.max(np.abs(s))) for s in traj.states)
        h2 = max(norms(traj.field(m)).h2 for m in range(len(traj.states)))
        flags = []
        if sup > self.c_r * (1.0 + 1e-9):
            flags.append("r_sup")
        if self.c_star_n is not None and h2 > self.h2_budget(l, self.c_r):
            flags.append("r_h2")
        self._record(l, {"r_sup": sup, "r_h2": h2, "r_flags": flags})
        if flags and self.strict:
            raise LedgerBreach(f"auxiliary-field bounds failed at step {l}: "
                               f"{flags}", diagnostics={"sup": sup, "h2": h2})

    def check_v_step(self, sup0_vr: float, h2: float, sup_v: float, l: int,
                     sup12: float = 0.0):
        flags = []
        if sup0_vr > self.c12 * (1.0 + 1e-9):
            flags.append("vr_sup")
        if self.c_star_n is not None and h2 > self.h2_budget(l, self.c12):
            flags.append("v_h2")
        if sup_v > (self.dim + 1.0) * self.c12 * (1.0 + 1e-9):
            flags.append("v_orig_sup")
        self._record(l, {"vr_sup": sup0_vr, "v_sup12": sup12, "v_h2": h2,
                         "v_sup": sup_v, "v_flags": flags})
        return flags

    def _record(self, l: int, data: dict):
        for row in self.rows:
            if row["l"] == l:
                row.update(data)
                return
        row = {"l": l}
        row.update(data)
        self.rows.append(row)

    def row(self, l: int) -> dict:
        for row in self.rows:
            if row["l"] == l:
                return row
        row = {"l": l}
        self.rows.append(row)
        return row
