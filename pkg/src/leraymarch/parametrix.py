"""Series expansions of fundamental solutions of frozen-drift parabolic operators.

Everything here concerns the scalar operator

    du/dt = a * lap(u) - b(x) . grad(u)

with constant diffusion ``a`` and a bounded drift ``b``. Two expansions of
its fundamental solution Gamma(tau, x; s, y) are provided: the iterated-kernel
series around the Gaussian (``levy_gamma``) and the analytic short-time
expansion with polynomial-in-time coefficients (``param_fundamental``). They
are cross-validated against each other and against the exact shifted Gaussian
for constant drift.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .errors import DepthExceeded, TruncationWarning, ValidityWindowWarning


@dataclass(frozen=True)
class DriftSpec:
    """Evaluator for the drift b(t, x) with a declared sup bound.

    ``func`` maps an (N, dim) point batch (and a time) to (N, dim) values.
    """

    dim: int
    func: Callable
    sup_bound: float

    def __call__(self, pts, t=0.0):
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        out = np.asarray(self.func(pts, t), dtype=float)
        if out.shape != pts.shape:
            raise ValueError(f"drift evaluator returned shape {out.shape}, "
                             f"expected {pts.shape}")
        return out


def constant_drift(b) -> DriftSpec:
    b = np.atleast_1d(np.asarray(b, dtype=float))

    def fn(pts, t=0.0):
        return np.broadcast_to(b, pts.shape).copy()

    return DriftSpec(dim=b.size, func=fn, sup_bound=float(np.max(np.abs(b))))


def zero_drift(dim: int) -> DriftSpec:
    return DriftSpec(dim=dim, func=lambda pts, t=0.0: np.zeros_like(pts),
                     sup_bound=0.0)


def _heat(a: float, dt: float, diff: np.ndarray) -> np.ndarray:
    """Gaussian kernel of du/dt = a lap u for displacement array diff (..., n)."""
    n = diff.shape[-1]
    var = 4.0 * a * dt
    return (math.pi * var) ** (-n / 2.0) * np.exp(-np.sum(diff * diff, axis=-1) / var)


def _heat_grad1(a: float, dt: float, diff: np.ndarray) -> np.ndarray:
    """Gradient of _heat with respect to its first (left) argument."""
    var = 4.0 * a * dt
    base = _heat(a, dt, diff)
    return -2.0 * diff / var * base[..., None]


@dataclass
class LevySeries:
    """Iterated-kernel series configuration for a frozen-drift operator."""

    drift: DriftSpec
    diffusion: float
    truncation: int = 2
    time_nodes: int = 16
    space_nodes: Optional[int] = None
    box_sigmas: float = 6.0

    MAX_TRUNCATION = 6

    def __post_init__(self):
        if not 0 <= self.truncation <= self.MAX_TRUNCATION:
            raise DepthExceeded(
                f"series truncation must lie in 0..{self.MAX_TRUNCATION}")
        if self.space_nodes is None:
            self.space_nodes = {1: 96, 2: 28, 3: 12}[self.drift.dim]


def _lattice(series: LevySeries, tau: float, s: float, x: np.ndarray,
             y: np.ndarray):
    """Midpoint space-time lattice covering the kernel mass between x and y."""
    n = series.drift.dim
    a = series.diffusion
    span = tau - s
    sigma = math.sqrt(2.0 * a * span)
    reach = series.box_sigmas * sigma + series.drift.sup_bound * span
    lo = np.minimum(x, y.min(axis=0)) - reach
    hi = np.maximum(x, y.max(axis=0)) + reach
    m = series.space_nodes
    axes = [lo[d] + (hi[d] - lo[d]) * (np.arange(m) + 0.5) / m for d in range(n)]
    mesh = np.meshgrid(*axes, indexing="ij")
    pts = np.stack([mm.ravel() for mm in mesh], axis=-1)
    wx = float(np.prod([(hi[d] - lo[d]) / m for d in range(n)]))
    q = series.time_nodes
    times = s + span * (np.arange(q) + 0.5) / q
    wt = span / q
    return times, wt, pts, wx


def levy_gamma(series: LevySeries, tau: float, x, s: float, y) -> np.ndarray:
    """Evaluate the truncated series for Gamma(tau, x; s, y).

    ``y`` may be a batch (N, dim); returns an (N,) array (or scalar for a
    single point). Emits :class:`TruncationWarning` when the last retained
    term is above a tenth of the first correction.
    """
    if tau <= s:
        raise ValueError("levy_gamma requires tau > s")
    a = series.diffusion
    drift = series.drift
    x = np.atleast_1d(np.asarray(x, dtype=float))
    y_in = np.asarray(y, dtype=float)
    single = y_in.ndim == 1
    y2 = np.atleast_2d(y_in)

    total = _heat(a, tau - s, x[None, :] - y2)
    if series.truncation == 0:
        return total[0] if single else total

    times, wt, pts, wx = _lattice(series, tau, s, x, y2)
    npts = pts.shape[0]
    nq = len(times)
    b_pts = drift(pts)

    # v_m[q, i, l]: m-fold iterated kernel from lattice node (q, i) to (s, y_l)
    diff0 = pts[:, None, :] - y2[None, :, :]
    v_m = np.empty((nq, npts, y2.shape[0]))
    for q in range(nq):
        grad = _heat_grad1(a, times[q] - s, diff0)
        v_m[q] = np.einsum("ild,id->il", grad, b_pts)

    contributions = []
    sign = -1.0
    v_cur = v_m
    for m in range(1, series.truncation + 1):
        if m > 1:
            v_next = np.zeros_like(v_cur)
            for q in range(nq):
                acc = np.zeros((npts, y2.shape[0]))
                for qp in range(q):
                    diff = pts[:, None, :] - pts[None, :, :]
                    grad = _heat_grad1(a, times[q] - times[qp], diff)
                    kern = np.einsum("ijd,id->ij", grad, b_pts)
                    acc += kern @ v_cur[qp]
                v_next[q] = wt * wx * acc
            v_cur = v_next
        contrib = np.zeros(y2.shape[0])
        for q in range(nq):
            row = _heat(a, tau - times[q], x[None, :] - pts)
            contrib += wt * wx * (row @ v_cur[q])
        contributions.append(sign * contrib)
        sign = -sign

    if len(contributions) >= 2:
        last = float(np.max(np.abs(contributions[-1])))
        first = float(np.max(np.abs(contributions[0])))
        if first > 0 and last / first > 0.1:
            warnings.warn("series truncated before decay "
                          f"(|term {series.truncation}|/|term 1| = {last/first:.2f})",
                          TruncationWarning)
    for c in contributions:
        total = total + c
    return total[0] if single else total


# ---------------------------------------------------------------------------
# analytic short-time expansion

@dataclass
class DkExpansion:
    """Analytic expansion Gamma = gauss_prefactor * sum_k d_k(t,x,y) t^k.

    The log-expansion coefficients c_k are line integrals along the segment
    from y to x; the d_k follow by exponential composition with
    d_0 = exp(c_0). For zero drift d_0 = 1 and all higher terms vanish.
    """

    drift: DriftSpec
    diffusion: float = 1.0
    order: int = 2
    max_order: int = 4
    gl_nodes: int = 12
    fd_scale: float = 1e-4

    def __post_init__(self):
        if self.order < 0 or self.order > self.max_order:
            raise DepthExceeded(
                f"expansion order {self.order} outside 0..{self.max_order}")
        if self.gl_nodes < 8:
            raise ValueError("segment quadrature needs >= 8 nodes")


def _gl01(nodes: int):
    xg, wg = np.polynomial.legendre.leggauss(nodes)
    return 0.5 * (xg + 1.0), 0.5 * wg


def _c_evaluator(exp: DkExpansion, k: int, y: np.ndarray, scale: float):
    """Return a vectorized evaluator z -> c_k(z, y) for fixed base point y."""
    a = exp.diffusion
    drift = exp.drift
    n = drift.dim
    sg, wg = _gl01(exp.gl_nodes)
    # widen the difference step with nesting depth: deeper evaluators carry
    # round-off from the inner quadrature/differencing that a tiny step
    # would amplify
    h = scale * exp.fd_scale ** (1.0 / max(k, 1))

    if k == 0:
        def c0(z):
            z = np.atleast_2d(z)
            seg = y[None, None, :] + sg[:, None, None] * (z[None, :, :] - y[None, None, :])
            bvals = drift(seg.reshape(-1, n)).reshape(len(sg), -1, n)
            integral = np.einsum("g,gld->ld", wg, bvals)
            return np.einsum("ld,ld->l", z - y[None, :], integral) / (2.0 * a)
        return c0

    c_prev = _c_evaluator(exp, k - 1, y, scale)
    c_all = [_c_evaluator(exp, r, y, scale) for r in range(k)]

    def grad_and_lap(fn, z):
        z = np.atleast_2d(z)
        base = fn(z)
        grads = np.empty(z.shape)
        lap = np.zeros(z.shape[0])
        for d in range(n):
            zp = z.copy()
            zm = z.copy()
            zp[:, d] += h
            zm[:, d] -= h
            fp = fn(zp)
            fm = fn(zm)
            grads[:, d] = (fp - fm) / (2.0 * h)
            lap += (fp - 2.0 * base + fm) / (h * h)
        return grads, lap

    def resid(z):
        z = np.atleast_2d(z)
        gprev, lprev = grad_and_lap(c_prev, z)
        out = a * lprev - np.einsum("ld,ld->l", drift(z), gprev)
        for r in range(k):
            gr, _ = grad_and_lap(c_all[r], z)
            gs, _ = grad_and_lap(c_all[k - 1 - r], z)
            out += a * np.einsum("ld,ld->l", gr, gs)
        return out

    def ck(z):
        z = np.atleast_2d(z)
        seg = y[None, None, :] + sg[:, None, None] * (z[None, :, :] - y[None, None, :])
        rv = resid(seg.reshape(-1, n)).reshape(len(sg), -1)
        return np.einsum("g,gl->l", wg * sg ** (k - 1), rv)

    return ck


def dk_coefficients(exp: DkExpansion, t: float, x, y) -> np.ndarray:
    """Coefficients d_0..d_order of the analytic expansion at (t, x, y)."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    y = np.atleast_1d(np.asarray(y, dtype=float))
    scale = max(float(np.max(np.abs(x - y))), 1.0)
    cs = []
    for k in range(exp.order + 1):
        ck = _c_evaluator(exp, k, y, scale)(x[None, :])
        cs.append(float(ck[0]))
    d = np.empty(exp.order + 1)
    d[0] = math.exp(cs[0])
    for m in range(1, exp.order + 1):
        d[m] = sum(k * cs[k] * d[m - k] for k in range(1, m + 1)) / m
    return d


def param_fundamental(exp: DkExpansion, t: float, x, y) -> float:
    """Gaussian prefactor times the truncated polynomial-in-time factor."""
    if t <= 0.0:
        raise ValueError("param_fundamental requires t > 0")
    x = np.atleast_1d(np.asarray(x, dtype=float))
    y = np.atleast_1d(np.asarray(y, dtype=float))
    d = dk_coefficients(exp, t, x, y)
    terms = d * t ** np.arange(len(d))
    mags = np.abs(terms)
    if len(terms) >= 3 and mags[-1] >= mags[-2] > 0.0:
        warnings.warn("expansion terms not decaying; outside validity window",
                      ValidityWindowWarning)
    pref = _heat(exp.diffusion, t, (x - y)[None, :])[0]
    return float(pref * np.sum(terms))


def shifted_gaussian(a: float, drift_vec, t: float, x, y) -> np.ndarray:
    """Exact fundamental solution for constant drift (oracle)."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    y = np.atleast_2d(np.asarray(y, dtype=float))
    b = np.asarray(drift_vec, dtype=float)
    return _heat(a, t, x - y - b * t)


# ---------------------------------------------------------------------------
# uniform bound on the kernel and its first derivatives

_GAMMA_CACHE: dict = {}


def estimate_gamma_constant(drift_bound: float, diffusion: float,
                            horizon: float, dim: int = 1,
                            method: str = "auto",
                            safety: float = 1.25) -> float:
    """Upper estimate of sup over (tau, x) of the time-space integral of
    |Gamma| + |Gamma_{,i}| over one step, sampled on constant drifts at the
    declared bound (both signs per axis, plus zero), times a safety factor.

    The series quadrature is affordable in 1D; in higher dimension the
    sampled family is constant drifts, whose integrals have the same closed
    form the 1D quadrature is checked against.
    """
    key = (round(drift_bound, 12), round(diffusion, 12), round(horizon, 12),
           dim, method, safety)
    if key in _GAMMA_CACHE:
        return _GAMMA_CACHE[key]
    if method == "auto":
        method = "series" if dim == 1 else "analytic"
    family = [np.zeros(dim)]
    for d in range(dim):
        for sgn in (1.0, -1.0):
            e = np.zeros(dim)
            e[d] = sgn * drift_bound
            family.append(e)

    if method == "analytic":
        # constant-drift closed form: the mass integral is the horizon and
        # the derivative integral is shift-invariant
        val = safety * (horizon + 2.0 * math.sqrt(horizon / (math.pi * diffusion)))
        _GAMMA_CACHE[key] = val
        return val

    worst = 0.0
    x0 = np.zeros(dim)
    uu = np.linspace(0.0, math.sqrt(horizon), 13)[1:]
    us = 0.5 * (uu[:-1] + uu[1:])
    du = np.diff(uu)
    for b in family:
        series = LevySeries(constant_drift(b) if np.any(b) else zero_drift(dim),
                            diffusion, truncation=1 if np.any(b) else 0)
        reach = 8.0 * math.sqrt(2.0 * diffusion * horizon) \
            + drift_bound * horizon
        m = {1: 400, 2: 60}[dim]
        axes = [np.linspace(-reach, reach, m)] * dim
        mesh = np.meshgrid(*axes, indexing="ij")
        ypts = np.stack([mm.ravel() for mm in mesh], axis=-1)
        wy = (2 * reach / (m - 1)) ** dim
        h = 1e-4 * math.sqrt(diffusion * horizon)
        total = 0.0
        for u, w in zip(us, du):
            s = horizon - u * u
            g = levy_gamma(series, horizon, x0, s, ypts)
            shift = np.zeros(dim)
            shift[0] = h
            gp = levy_gamma(series, horizon, x0, s, ypts + shift)
            gm = levy_gamma(series, horizon, x0, s, ypts - shift)
            gx = -(gp - gm) / (2.0 * h)
            total += 2.0 * u * w * wy * float(np.sum(np.abs(g) + np.abs(gx)))
        worst = max(worst, total)
    _GAMMA_CACHE[key] = safety * worst
    return safety * worst
