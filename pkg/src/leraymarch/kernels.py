"""Poisson and Gaussian kernels plus the convolution engines behind them.

The Poisson kernel here is the fundamental solution of the Laplacian on R^n
(log branch for n = 2); its gradient drives the pressure elimination. Two
convolution engines are kept: a direct quadrature sum and an FFT path
(cyclic on the torus, zero-padded with domain doubling on the truncated
box). They evaluate the same discrete sum and are bit-compared in tests.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import EngineMismatch, SingularPoint, ZeroTime
from .grids import (FREE_SPACE, Grid, ScalarField, VectorField, d1,
                    gradient_products, laplacian_array)


def unit_sphere_area(n: int) -> float:
    """Surface area of the unit sphere in R^n (2*pi for n=2, 4*pi for n=3)."""
    return 2.0 * math.pi ** (n / 2.0) / math.gamma(n / 2.0)


@dataclass(frozen=True)
class PoissonKernelSpec:
    dim: int

    def __post_init__(self):
        if self.dim < 2:
            raise ValueError("Poisson kernel needs dim >= 2")

    @property
    def omega_n(self) -> float:
        return unit_sphere_area(self.dim)


def poisson_kernel(n: int, x) -> np.ndarray:
    """K_n(x): log kernel for n=2, |x|^(2-n)/((2-n)*omega_n) for n>=3."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    r = np.linalg.norm(x, axis=-1)
    if np.any(r == 0.0):
        raise SingularPoint("Poisson kernel evaluated at x=0")
    omega = unit_sphere_area(n)
    if n == 2:
        out = np.log(r) / omega
    else:
        out = r ** (2 - n) / ((2 - n) * omega)
    return out


def poisson_kernel_grad(n: int, x) -> np.ndarray:
    """Gradient of K_n: component l is x_l / (omega_n |x|^n)."""
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    x = np.atleast_2d(x)
    r = np.linalg.norm(x, axis=-1, keepdims=True)
    if np.any(r == 0.0):
        raise SingularPoint("Poisson kernel gradient evaluated at x=0")
    out = x / (unit_sphere_area(n) * r ** n)
    return out[0] if single else out


@dataclass(frozen=True)
class GaussianKernelSpec:
    """Heat kernel exp(-|x-y|^2 / (4*diffusion*elapsed)) normalized to mass one."""

    diffusion: float
    elapsed: float

    def __post_init__(self):
        if self.diffusion <= 0.0:
            raise ValueError("diffusion must be positive")
        if self.elapsed < 0.0:
            raise ValueError("elapsed time must be nonnegative")


def heat_kernel(spec: GaussianKernelSpec, x, y) -> np.ndarray:
    if spec.elapsed == 0.0:
        raise ZeroTime("pointwise heat kernel undefined at elapsed=0")
    x = np.atleast_2d(np.asarray(x, dtype=float))
    y = np.atleast_2d(np.asarray(y, dtype=float))
    n = x.shape[-1]
    var = 4.0 * spec.diffusion * spec.elapsed
    sq = np.sum((x - y) ** 2, axis=-1)
    out = (math.pi * var) ** (-n / 2.0) * np.exp(-sq / var)
    return out


def gaussian_offsets_kernel(diffusion: float, elapsed: float, grid: Grid):
    """Heat kernel as a function of grid offsets (periodic images on a torus)."""
    var = 4.0 * diffusion * elapsed
    n = grid.dim
    norm = (math.pi * var) ** (-n / 2.0)

    def fn(offsets):
        if grid.is_torus:
            # sum nearest periodic images; enough when sqrt(var) << period
            acc = 0.0
            p = grid.period
            for shift in np.ndindex(*(3,) * n):
                s = (np.array(shift) - 1) * p
                acc = acc + np.exp(-np.sum((offsets + s) ** 2, axis=-1) / var)
            return norm * acc
        return norm * np.exp(-np.sum(offsets ** 2, axis=-1) / var)

    return fn


# ---------------------------------------------------------------------------
# offset sampling and the two convolution engines

def _offset_grid(grid: Grid):
    """Offsets matching the discrete convolution layout.

    Torus: shape == grid.shape with minimal-image displacements, index 0 at
    offset 0. Free space: doubled shape with displacements wrapped so that
    index 0 is offset 0 and negative offsets sit in the upper half.
    """
    m = grid.points_per_axis
    h = grid.spacing
    if grid.is_torus:
        idx = np.arange(m)
        ax = grid.wrap(idx * h)
    else:
        idx = np.arange(2 * m)
        ax = np.where(idx < m, idx, idx - 2 * m) * h
    mesh = np.meshgrid(*([ax] * grid.dim), indexing="ij")
    return np.stack(mesh, axis=-1)


def sample_kernel(kernel_fn, grid: Grid, singular: bool = False,
                  avg_cells: int = 2, subdiv: int = 6) -> np.ndarray:
    """Sample a kernel on the convolution offset grid.

    With ``singular=True`` the cells within ``avg_cells`` of the origin are
    replaced by midpoint cell averages (symmetric subsamples, so odd kernels
    average to exactly zero at the origin: the principal value).
    """
    offsets = _offset_grid(grid)
    flat = offsets.reshape(-1, grid.dim)
    if not singular:
        return np.asarray(kernel_fn(flat)).reshape(offsets.shape[:-1])

    r_inf = np.max(np.abs(flat), axis=-1)
    near = r_inf <= avg_cells * grid.spacing + 1e-12
    vals = np.zeros(flat.shape[0])
    vals[~near] = np.asarray(kernel_fn(flat[~near])).ravel()

    h = grid.spacing
    sub = (np.arange(subdiv) + 0.5) / subdiv - 0.5  # symmetric midpoints, no 0
    sub_mesh = np.meshgrid(*([sub * h] * grid.dim), indexing="ij")
    sub_pts = np.stack([s.ravel() for s in sub_mesh], axis=-1)
    near_pts = flat[near]
    acc = np.zeros(near_pts.shape[0])
    for sp in sub_pts:
        acc += np.asarray(kernel_fn(near_pts + sp)).ravel()
    vals[near] = acc / sub_pts.shape[0]
    return vals.reshape(offsets.shape[:-1])


def _direct_convolve(values: np.ndarray, ker: np.ndarray, grid: Grid) -> np.ndarray:
    m = grid.points_per_axis
    n = grid.dim
    wrap = m if grid.is_torus else 2 * m
    source_idx = np.indices(grid.shape)
    out = np.zeros(grid.shape)
    for idx in np.ndindex(*grid.shape):
        gather = tuple((idx[d] - source_idx[d]) % wrap for d in range(n))
        out[idx] = np.sum(ker[gather] * values)
    return out * grid.cell_volume()


def _fft_convolve(values: np.ndarray, ker: np.ndarray, grid: Grid) -> np.ndarray:
    if grid.is_torus:
        out = np.fft.ifftn(np.fft.fftn(values) * np.fft.fftn(ker)).real
        return out * grid.cell_volume()
    m = grid.points_per_axis
    pad = np.zeros(ker.shape)
    pad[tuple(slice(0, m) for _ in range(grid.dim))] = values
    out = np.fft.ifftn(np.fft.fftn(pad) * np.fft.fftn(ker)).real
    return out[tuple(slice(0, m) for _ in range(grid.dim))] * grid.cell_volume()


def convolve(field: ScalarField, kernel, engine: str = "fft",
             singular: bool = False, self_test: bool = False) -> ScalarField:
    """Convolve a field with a kernel given as callable or offset samples.

    ``engine`` is ``fft`` (default) or ``direct``; with ``self_test=True``
    both run and an :class:`EngineMismatch` is raised if they disagree
    beyond 1e-10 relative to the result scale.
    """
    grid = field.grid
    if callable(kernel):
        ker = sample_kernel(kernel, grid, singular=singular)
    else:
        ker = np.asarray(kernel, dtype=float)
    fast = _fft_convolve(field.values, ker, grid)
    if self_test or engine == "direct":
        direct = _direct_convolve(field.values, ker, grid)
        if self_test:
            scale = max(float(np.max(np.abs(direct))), 1.0)
            gap = float(np.max(np.abs(direct - fast)))
            if gap > 1e-10 * scale:
                raise EngineMismatch(
                    f"convolution engines disagree: |direct-fft|={gap:.3e}")
        if engine == "direct":
            return ScalarField(grid, direct)
    return ScalarField(grid, fast)


# ---------------------------------------------------------------------------
# pressure elimination

def _spectral_wavenumbers(grid: Grid):
    k1 = 2.0 * math.pi * np.fft.fftfreq(grid.points_per_axis, d=grid.spacing)
    return np.meshgrid(*([k1] * grid.dim), indexing="ij")


def _poisson_solve_torus(q: np.ndarray, grid: Grid) -> np.ndarray:
    """Solve -lap p = q on the torus with mean(p) = 0."""
    ks = _spectral_wavenumbers(grid)
    k2 = sum(k * k for k in ks)
    k2[(0,) * grid.dim] = 1.0
    qh = np.fft.fftn(q)
    ph = qh / k2
    ph[(0,) * grid.dim] = 0.0
    return np.fft.ifftn(ph).real


def _grad_inv_laplacian_torus(q: np.ndarray, grid: Grid) -> list:
    """Components of -grad of the mean-zero solution of -lap p = q."""
    ks = _spectral_wavenumbers(grid)
    k2 = sum(k * k for k in ks)
    k2[(0,) * grid.dim] = 1.0
    qh = np.fft.fftn(q)
    qh[(0,) * grid.dim] = 0.0
    return [np.fft.ifftn(-1j * k * qh / k2).real for k in ks]


def _poisson_grad_kernel_fn(n: int, component: int):
    def fn(pts):
        return poisson_kernel_grad(n, pts)[..., component]
    return fn


class LerayOperators:
    """Grid-bound pressure/projection operators with cached kernel samples."""

    def __init__(self, grid: Grid):
        self.grid = grid
        self._grad_kernels = None
        self._k_kernel = None

    def _grad_kernel_samples(self):
        if self._grad_kernels is None:
            n = self.grid.dim
            self._grad_kernels = [
                sample_kernel(_poisson_grad_kernel_fn(n, c), self.grid, singular=True)
                for c in range(n)]
        return self._grad_kernels

    def _k_kernel_samples(self):
        if self._k_kernel is None:
            self._k_kernel = sample_kernel(
                lambda pts: poisson_kernel(self.grid.dim, pts),
                self.grid, singular=True)
        return self._k_kernel

    def pressure_from_q(self, q: np.ndarray) -> np.ndarray:
        if self.grid.is_torus:
            return _poisson_solve_torus(q, self.grid)
        p = -_fft_convolve(q, self._k_kernel_samples(), self.grid)
        return p - np.mean(p)

    def rhs_from_q(self, q: np.ndarray) -> list:
        if self.grid.is_torus:
            return _grad_inv_laplacian_torus(q, self.grid)
        return [_fft_convolve(q, kc, self.grid)
                for kc in self._grad_kernel_samples()]


def leray_pressure(v: VectorField) -> ScalarField:
    """Pressure eliminating the velocity-gradient source, mean pinned to zero."""
    q = gradient_products(v)
    return ScalarField(v.grid, LerayOperators(v.grid).pressure_from_q(q))


def leray_rhs(v: VectorField) -> VectorField:
    """The gradient-kernel integral source; equals -grad(leray_pressure)."""
    q = gradient_products(v)
    return VectorField(v.grid, LerayOperators(v.grid).rhs_from_q(q))


def pressure_identity_residual(v: VectorField) -> float:
    """Sup norm of the consistency identity between the quadratic source and
    the difference-quotient Laplacian of the kernel integral."""
    q = gradient_products(v)
    p = LerayOperators(v.grid).pressure_from_q(q)
    resid = q + laplacian_array(p, v.grid)
    return float(np.max(np.abs(resid)))


def gradient_consistency_gap(v: VectorField) -> float:
    """Sup discrepancy between the kernel-integral source and -grad(pressure)."""
    ops = LerayOperators(v.grid)
    q = gradient_products(v)
    rhs = ops.rhs_from_q(q)
    p = ops.pressure_from_q(q)
    gap = 0.0
    for i in range(v.grid.dim):
        gap = max(gap, float(np.max(np.abs(rhs[i] + d1(p, i, v.grid)))))
    return gap
