"""Analytic reference solutions and initial-data presets used for validation."""

from __future__ import annotations

import math

import numpy as np

from .grids import Grid, ScalarField, VectorField, make_grid, TORUS


def taylor_green_field(grid: Grid, nu: float, t: float = 0.0) -> VectorField:
    """Single-mode planar vortex lattice; decays like exp(-2 nu t)."""
    if grid.dim != 2:
        raise ValueError("the vortex-lattice preset is two-dimensional")
    x, y = grid.meshes()
    decay = math.exp(-2.0 * nu * t)
    return VectorField(grid, [decay * np.cos(x) * np.sin(y),
                              -decay * np.sin(x) * np.cos(y)])


def taylor_green_pressure(grid: Grid, nu: float, t: float = 0.0) -> ScalarField:
    x, y = grid.meshes()
    decay = math.exp(-4.0 * nu * t)
    p = -0.25 * decay * (np.cos(2 * x) + np.cos(2 * y))
    return ScalarField(grid, p - np.mean(p))


def cole_hopf_solution(grid: Grid, nu: float, t: float,
                       oversample: int = 8) -> ScalarField:
    """Exact 1D viscous transport solution for initial data sin(x).

    Built by the log-derivative transform: the transformed variable solves
    the heat equation and is propagated spectrally on an oversampled grid.
    """
    if grid.dim != 1 or not grid.is_torus:
        raise ValueError("the exact transport oracle needs a 1D torus grid")
    m = grid.points_per_axis * oversample
    fine = make_grid(1, grid.extent, m, TORUS)
    x = fine.axis()
    phi0 = np.exp(-(1.0 - np.cos(x)) / (2.0 * nu))
    k = 2.0 * math.pi * np.fft.fftfreq(m, d=fine.spacing)
    phih = np.fft.fft(phi0) * np.exp(-nu * k * k * t)
    phi = np.fft.ifft(phih).real
    phix = np.fft.ifft(1j * k * phih).real
    u = -2.0 * nu * phix / phi
    return ScalarField(grid, u[::oversample])


def burgers_initial(grid: Grid) -> VectorField:
    if grid.dim != 1:
        raise ValueError("transport baseline initial data is 1D")
    return VectorField(grid, [np.sin(grid.meshes()[0])])


def gaussian_bump_field(grid: Grid, width: float = None,
                        amplitude: float = 1.0) -> VectorField:
    """Divergence-free, rapidly decaying data on a free-space grid.

    2D: rotated gradient of a Gaussian stream function. 3D: curl of a
    Gaussian vector potential with offset centers. 1D: a plain bump (used by
    the scalar baseline, where no solenoidal constraint applies).
    """
    width = width or grid.extent / 4.0
    meshes = grid.meshes()

    def gauss(center):
        r2 = sum((m - c) ** 2 for m, c in zip(meshes, center))
        return amplitude * np.exp(-r2 / (2.0 * width * width))

    def dgauss(center, axis):
        return -(meshes[axis] - center[axis]) / width ** 2 * gauss(center)

    if grid.dim == 1:
        return VectorField(grid, [gauss([0.0])])
    if grid.dim == 2:
        c = [0.0, 0.0]
        return VectorField(grid, [dgauss(c, 1), -dgauss(c, 0)])
    off = 0.2 * grid.extent
    centers = [[off, 0.0, 0.0], [0.0, off, 0.0], [0.0, 0.0, off]]
    curl = [
        dgauss(centers[2], 1) - dgauss(centers[1], 2),
        dgauss(centers[0], 2) - dgauss(centers[2], 0),
        dgauss(centers[1], 0) - dgauss(centers[0], 1),
    ]
    return VectorField(grid, curl)
