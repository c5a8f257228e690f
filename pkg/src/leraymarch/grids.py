"""Uniform-grid scalar/vector fields with the norms the scheme's ledgers track.

Fields live on a uniform tensor grid that either truncates free space to the
box [-L, L)^n (data assumed negligible outside, see :func:`decay_check`) or
wraps periodically (torus of period 2L). All derivative estimates are
second-order difference quotients: central in the interior and on the torus,
one-sided at a truncation boundary.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .errors import InvalidGrid, NonFinite, TopologyMismatch

TORUS = "torus"
FREE_SPACE = "free_space_truncated"
_TOPOLOGIES = (TORUS, FREE_SPACE)


@dataclass(frozen=True)
class Grid:
    """Uniform grid on [-extent, extent)^dim.

    ``spacing = 2*extent/points_per_axis``; node i along an axis sits at
    ``-extent + i*spacing``. On the torus the period is ``2*extent``.
    """

    dim: int
    extent: float
    points_per_axis: int
    topology: str

    @property
    def spacing(self) -> float:
        return 2.0 * self.extent / self.points_per_axis

    @property
    def period(self) -> float:
        return 2.0 * self.extent

    @property
    def shape(self) -> tuple:
        return (self.points_per_axis,) * self.dim

    @property
    def num_points(self) -> int:
        return self.points_per_axis ** self.dim

    @property
    def is_torus(self) -> bool:
        return self.topology == TORUS

    def axis(self) -> np.ndarray:
        return -self.extent + self.spacing * np.arange(self.points_per_axis)

    def meshes(self) -> list:
        return np.meshgrid(*([self.axis()] * self.dim), indexing="ij")

    def points(self) -> np.ndarray:
        """All grid nodes as an (num_points, dim) array, row-major order."""
        return np.stack([m.ravel() for m in self.meshes()], axis=-1)

    def wrap(self, delta):
        """Minimal-image displacement(s) on the torus; identity off it."""
        if not self.is_torus:
            return delta
        p = self.period
        return (np.asarray(delta) + 0.5 * p) % p - 0.5 * p

    def quad_weights(self) -> np.ndarray:
        """Quadrature weights: uniform cells on the torus, trapezoid on the box."""
        if self.is_torus:
            return np.full(self.shape, self.spacing ** self.dim)
        w1 = np.full(self.points_per_axis, self.spacing)
        w1[0] *= 0.5
        w1[-1] *= 0.5
        w = w1
        for _ in range(self.dim - 1):
            w = np.multiply.outer(w, w1)
        return w

    def cell_volume(self) -> float:
        return self.spacing ** self.dim


def make_grid(dim: int, extent: float, points_per_axis: int, topology: str) -> Grid:
    if dim not in (1, 2, 3):
        raise InvalidGrid(f"dim must be 1, 2 or 3, got {dim}")
    if not (extent > 0.0 and np.isfinite(extent)):
        raise InvalidGrid(f"extent must be positive and finite, got {extent}")
    if points_per_axis < 8:
        raise InvalidGrid(f"points_per_axis must be >= 8, got {points_per_axis}")
    if topology not in _TOPOLOGIES:
        raise InvalidGrid(f"topology must be one of {_TOPOLOGIES}, got {topology!r}")
    return Grid(dim, float(extent), int(points_per_axis), topology)


class ScalarField:
    """Immutable scalar samples on a grid."""

    def __init__(self, grid: Grid, values):
        values = np.ascontiguousarray(values, dtype=float)
        if values.shape != grid.shape:
            raise InvalidGrid(
                f"value shape {values.shape} does not match grid shape {grid.shape}")
        if not np.all(np.isfinite(values)):
            raise NonFinite("scalar field contains non-finite samples")
        values.setflags(write=False)
        self.grid = grid
        self.values = values

    @classmethod
    def from_function(cls, grid: Grid, fn: Callable) -> "ScalarField":
        return cls(grid, fn(*grid.meshes()))

    @classmethod
    def zeros(cls, grid: Grid) -> "ScalarField":
        return cls(grid, np.zeros(grid.shape))


class VectorField:
    """dim scalar components sharing one grid."""

    def __init__(self, grid: Grid, components: Sequence):
        comps = []
        for c in components:
            if isinstance(c, ScalarField):
                if c.grid != grid:
                    raise InvalidGrid("component grids differ")
                comps.append(c)
            else:
                comps.append(ScalarField(grid, c))
        if len(comps) != grid.dim:
            raise InvalidGrid(f"expected {grid.dim} components, got {len(comps)}")
        self.grid = grid
        self.components = tuple(comps)

    @classmethod
    def from_functions(cls, grid: Grid, fns: Sequence[Callable]) -> "VectorField":
        return cls(grid, [fn(*grid.meshes()) for fn in fns])

    @classmethod
    def zeros(cls, grid: Grid) -> "VectorField":
        return cls(grid, [np.zeros(grid.shape) for _ in range(grid.dim)])

    @classmethod
    def from_arrays(cls, grid: Grid, arrays) -> "VectorField":
        return cls(grid, list(arrays))

    def arrays(self) -> list:
        return [c.values for c in self.components]

    def stack(self) -> np.ndarray:
        return np.stack(self.arrays())


@dataclass(frozen=True)
class NormReport:
    """Sup-norm ladder, Hilbert norms and the quadratic-gradient integral."""

    sup0: float
    sup01: float
    sup12: float
    l2: float
    h1: float
    h2: float
    integral_magnitude: float


def _roll(a, axis, shift):
    return np.roll(a, shift, axis=axis)


def d1(a: np.ndarray, axis: int, grid: Grid) -> np.ndarray:
    """Second-order first derivative along one axis."""
    h = grid.spacing
    if grid.is_torus:
        return (_roll(a, axis, -1) - _roll(a, axis, 1)) / (2.0 * h)
    return np.gradient(a, h, axis=axis, edge_order=2)


def d2_axis(a: np.ndarray, axis: int, grid: Grid) -> np.ndarray:
    """Second-order pure second derivative along one axis."""
    h = grid.spacing
    if grid.is_torus:
        return (_roll(a, axis, -1) - 2.0 * a + _roll(a, axis, 1)) / (h * h)
    out = (_roll(a, axis, -1) - 2.0 * a + _roll(a, axis, 1)) / (h * h)
    # one-sided second-order stencils at the truncation boundary
    lead = [slice(None)] * a.ndim

    def take(i):
        lead[axis] = i
        return a[tuple(lead)]

    first = (2.0 * take(0) - 5.0 * take(1) + 4.0 * take(2) - take(3)) / (h * h)
    last = (2.0 * take(-1) - 5.0 * take(-2) + 4.0 * take(-3) - take(-4)) / (h * h)
    lead[axis] = 0
    out[tuple(lead)] = first
    lead[axis] = -1
    out[tuple(lead)] = last
    return out


def d2(a: np.ndarray, ax1: int, ax2: int, grid: Grid) -> np.ndarray:
    if ax1 == ax2:
        return d2_axis(a, ax1, grid)
    return d1(d1(a, ax1, grid), ax2, grid)


def gradient_arrays(a: np.ndarray, grid: Grid) -> list:
    return [d1(a, ax, grid) for ax in range(grid.dim)]


def laplacian_array(a: np.ndarray, grid: Grid) -> np.ndarray:
    out = d2_axis(a, 0, grid)
    for ax in range(1, grid.dim):
        out = out + d2_axis(a, ax, grid)
    return out


def divergence(v: VectorField) -> ScalarField:
    """Pointwise sum of the diagonal difference-quotient derivatives."""
    if v.grid.dim < 2:
        raise InvalidGrid("divergence requires dim >= 2")
    acc = np.zeros(v.grid.shape)
    for i, comp in enumerate(v.components):
        acc += d1(comp.values, i, v.grid)
    return ScalarField(v.grid, acc)


def gradient_products(v: VectorField) -> np.ndarray:
    """The quadratic source sum_{j,k} (d_j v_k)(d_k v_j) on the grid."""
    g = v.grid
    arrs = v.arrays()
    derivs = [[d1(arrs[k], j, g) for j in range(g.dim)] for k in range(g.dim)]
    q = np.zeros(g.shape)
    for j in range(g.dim):
        for k in range(g.dim):
            q += derivs[k][j] * derivs[j][k]
    return q


def _as_component_list(v):
    if isinstance(v, ScalarField):
        return v.grid, [v.values]
    return v.grid, v.arrays()


def norms(v) -> NormReport:
    """Norm report for a scalar or vector field (components summed for sups).

    Sup norms use difference-quotient derivatives; l2/h1/h2 use trapezoidal
    quadrature; integral_magnitude is the quadrature of
    sum_{j,k} |(d_j v_k)(d_k v_j)|.
    """
    grid, arrs = _as_component_list(v)
    for a in arrs:
        if not np.all(np.isfinite(a)):
            raise NonFinite("field contains non-finite samples")
    w = grid.quad_weights()
    sup0 = sum(float(np.max(np.abs(a))) for a in arrs)
    firsts = [[d1(a, ax, grid) for ax in range(grid.dim)] for a in arrs]
    sup_first = sum(float(np.max(np.abs(da))) for row in firsts for da in row)
    sup_second = 0.0
    sq_second = 0.0
    for a in arrs:
        for ax1 in range(grid.dim):
            for ax2 in range(grid.dim):
                dd = d2(a, ax1, ax2, grid)
                sup_second += float(np.max(np.abs(dd)))
                sq_second += float(np.sum(w * dd * dd))
    sq0 = sum(float(np.sum(w * a * a)) for a in arrs)
    sq1 = sum(float(np.sum(w * da * da)) for row in firsts for da in row)
    l2 = np.sqrt(sq0)
    h1 = np.sqrt(sq0 + sq1)
    h2 = np.sqrt(sq0 + sq1 + sq_second)

    mag = np.zeros(grid.shape)
    n = len(arrs)
    if n == grid.dim:
        for j in range(n):
            for k in range(n):
                mag += np.abs(firsts[k][j] * firsts[j][k])
    else:
        for row in firsts:
            for da in row:
                mag += da * da
    integral_magnitude = float(np.sum(w * mag))
    return NormReport(
        sup0=sup0,
        sup01=sup0 + sup_first,
        sup12=sup0 + sup_first + sup_second,
        l2=float(l2),
        h1=float(h1),
        h2=float(h2),
        integral_magnitude=integral_magnitude,
    )


def decay_check(v, order: int):
    """Check polynomial decay |d^a v(x)|(1+|x|)^k bounded, |a| <= 2, k = order.

    Passes when the weighted magnitude attains its worst constant away from
    the outer shell of the truncated box, i.e. the samples decay at least
    like (1+|x|)^-k toward the boundary. Returns (passed, worst_constant).
    """
    grid, arrs = _as_component_list(v)
    if grid.is_torus:
        raise TopologyMismatch("decay_check applies to free-space grids only")
    if not 0 <= order <= 5:
        raise InvalidGrid("decay order must lie in 0..5")
    meshes = grid.meshes()
    radius = np.sqrt(sum(m * m for m in meshes))
    weight = (1.0 + radius) ** order
    outer = np.max(np.abs(np.stack(meshes)), axis=0) >= 0.5 * grid.extent

    worst = 0.0
    worst_outer = 0.0
    worst_inner = 0.0
    for a in arrs:
        mags = [np.abs(a)]
        for ax in range(grid.dim):
            mags.append(np.abs(d1(a, ax, grid)))
        for ax1 in range(grid.dim):
            for ax2 in range(ax1, grid.dim):
                mags.append(np.abs(d2(a, ax1, ax2, grid)))
        for m in mags:
            wm = weight * m
            worst = max(worst, float(np.max(wm)))
            worst_outer = max(worst_outer, float(np.max(wm[outer])))
            worst_inner = max(worst_inner, float(np.max(wm[~outer])))
    passed = worst_outer <= worst_inner * (1.0 + 1e-9) + 1e-300
    return passed, worst


# ---------------------------------------------------------------------------
# field dump format (see docs/formats.md)

_MAGIC = "leraymarch-field v1"


def dump_field(path, v, payload: str = "binary") -> None:
    """Write a field dump: text header line pair + row-major payload."""
    grid, arrs = _as_component_list(v)
    if payload not in ("binary", "csv"):
        raise ValueError("payload must be 'binary' or 'csv'")
    header = (
        f"{_MAGIC}\n"
        f"dim={grid.dim} topology={grid.topology} extent={grid.extent!r} "
        f"points={grid.points_per_axis} components={len(arrs)} payload={payload}\n"
    )
    with open(path, "wb") as fh:
        fh.write(header.encode("ascii"))
        flat = np.stack([a.ravel() for a in arrs], axis=-1)
        if payload == "binary":
            fh.write(flat.astype("<f8").tobytes())
        else:
            lines = [",".join(repr(float(x)) for x in row) for row in flat]
            fh.write(("\n".join(lines) + "\n").encode("ascii"))


def load_field(path):
    """Read a field dump; returns a ScalarField or VectorField."""
    with open(path, "rb") as fh:
        magic = fh.readline().decode("ascii").strip()
        if magic != _MAGIC:
            raise InvalidGrid(f"not a field dump: bad magic {magic!r}")
        meta = dict(kv.split("=", 1) for kv in fh.readline().decode("ascii").split())
        grid = make_grid(int(meta["dim"]), float(meta["extent"]),
                         int(meta["points"]), meta["topology"])
        ncomp = int(meta["components"])
        if meta["payload"] == "binary":
            flat = np.frombuffer(fh.read(), dtype="<f8").reshape(-1, ncomp)
        else:
            rows = [[float(x) for x in line.split(",")]
                    for line in fh.read().decode("ascii").splitlines() if line]
            flat = np.array(rows)
    arrs = [flat[:, i].reshape(grid.shape) for i in range(ncomp)]
    if ncomp == 1:
        return ScalarField(grid, arrs[0])
    return VectorField(grid, arrs)
