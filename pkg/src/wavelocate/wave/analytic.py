"""Closed-form solutions for a homogeneous, unbounded 2D medium.

The field radiated by a point source with time function ``g`` is the
convolution of ``g`` with the 2D Green's function

    G(rho, t) = H(t - rho/c) / (2 pi c^2 sqrt(t^2 - rho^2/c^2)).

Substituting ``theta = theta0 - v^2`` turns the convolution with the Ricker
wavelet into an integral with a smooth integrand, which is evaluated either
adaptively (:func:`analytic_u`) or with a fixed composite Gauss-Legendre rule
on the wavelet support (:func:`analytic_traces`).

For sampled source traces the convolution is exact for the piecewise-linear
interpolant: integrating by parts twice moves the singularity of ``G`` into
its first and second time antiderivatives, which are elementary.
"""

from __future__ import annotations

import math
from typing import Sequence, Tuple

import numpy as np
from scipy.signal import fftconvolve

from ..model import SourceParams, ricker

# Ricker wavelet is below 1e-30 |A| beyond this many periods from its centre
_SUPPORT_PERIODS = 3.0


class SingularPointError(ValueError):
    """The observation point coincides with the source."""


def _adaptive_simpson(fn, a: float, b: float, tol: float, max_depth: int = 50) -> float:
    fa, fm, fb = fn(a), fn(0.5 * (a + b)), fn(b)
    whole = (b - a) * (fa + 4 * fm + fb) / 6.0
    total = 0.0
    stack = [(a, b, fa, fm, fb, whole, tol, 0)]
    while stack:
        a, b, fa, fm, fb, whole, tol, depth = stack.pop()
        m = 0.5 * (a + b)
        lm, rm = 0.5 * (a + m), 0.5 * (m + b)
        flm, frm = fn(lm), fn(rm)
        left = (m - a) * (fa + 4 * flm + fm) / 6.0
        right = (b - m) * (fm + 4 * frm + fb) / 6.0
        delta = left + right - whole
        if depth >= max_depth or abs(delta) <= 15.0 * tol:
            total += left + right + delta / 15.0
        else:
            stack.append((a, m, fa, flm, fm, left, 0.5 * tol, depth + 1))
            stack.append((m, b, fm, frm, fb, right, 0.5 * tol, depth + 1))
    return total


def _v_window(theta0, tau, f0):
    """Range of ``v`` where ``f(theta0 - v^2 - tau)`` is non-negligible."""
    half = _SUPPORT_PERIODS / f0
    lo = np.sqrt(np.maximum(0.0, theta0 - tau - half))
    hi = np.sqrt(np.maximum(0.0, theta0 - np.maximum(0.0, tau - half)))
    return lo, hi


def analytic_u(c0: float, source: SourceParams, x: Tuple[float, float], t: float) -> float:
    """Field at ``x`` and time ``t`` for a Ricker point source in a homogeneous full plane.

    Adaptive Simpson quadrature to an absolute tolerance of ``1e-8 |A|``.
    """
    if c0 <= 0:
        raise ValueError("c0 must be positive")
    rho = math.dist(x, source.xi)
    if rho == 0.0:
        raise SingularPointError("the field is singular at the source position")
    a = rho / c0
    theta0 = t - a
    if theta0 <= 0.0 or source.A == 0.0:
        return 0.0
    lo, hi = _v_window(theta0, source.tau, source.f0)
    lo, hi = float(lo), float(hi)
    if hi <= lo:
        return 0.0
    scale = 1.0 / (2.0 * math.pi * c0 * c0)
    f0, A, tau = source.f0, source.A, source.tau

    def integrand(v):
        return 2.0 * ricker(theta0 - v * v - tau, f0, A) / math.sqrt(2.0 * a + v * v)

    # local error estimates are optimistic near the singular endpoint, hence the margin
    return scale * _adaptive_simpson(integrand, lo, hi, 1e-9 * abs(A) / scale)


_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(16)


def analytic_traces(
    c0: float, source: SourceParams, positions: Sequence[Tuple[float, float]], times: np.ndarray, panels: int = 12
) -> np.ndarray:
    """Vectorised :func:`analytic_u` for many receivers and times.

    Returns an array of shape ``(len(positions), len(times))``.
    """
    times = np.asarray(times, dtype=float)
    out = np.zeros((len(positions), times.size))
    if source.A == 0.0:
        return out
    scale = 1.0 / (2.0 * math.pi * c0 * c0)
    p2 = (math.pi * source.f0) ** 2
    edges = np.linspace(0.0, 1.0, panels + 1)
    # composite rule on [0, 1]
    u = (edges[:-1, None] + 0.5 * (edges[1:] - edges[:-1])[:, None] * (_GL_NODES[None, :] + 1.0)).ravel()
    w = (0.5 * (edges[1:] - edges[:-1])[:, None] * _GL_WEIGHTS[None, :]).ravel()
    for k, pos in enumerate(positions):
        rho = math.dist(pos, source.xi)
        if rho == 0.0:
            raise SingularPointError(f"receiver {k + 1} coincides with the source")
        a = rho / c0
        theta0 = times - a
        lo, hi = _v_window(theta0, source.tau, source.f0)
        live = (theta0 > 0.0) & (hi > lo)
        if not np.any(live):
            continue
        lo, hi, th = lo[live], hi[live], theta0[live]
        span = hi - lo
        v = lo[:, None] + span[:, None] * u[None, :]
        arg = th[:, None] - v * v - source.tau
        q = p2 * arg * arg
        f = source.A * (1.0 - 2.0 * q) * np.exp(-q)
        vals = 2.0 * f / np.sqrt(2.0 * a + v * v)
        out[k, live] = scale * span * (vals @ w)
    return out


def half_space_traces(c0, source, positions, times, panels: int = 12) -> np.ndarray:
    """Homogeneous half-space ``z <= 0`` with a zero-flux surface: direct field plus image source."""
    image = source.moved(xi=(source.xi[0], -source.xi[1]))
    return analytic_traces(c0, source, positions, times, panels) + analytic_traces(
        c0, image, positions, times, panels
    )


# ---------------------------------------------------------------------------
# sampled-trace convolution


def _ramp_kernels(c0: float, rho: float, dt: float, nt: int):
    """Step, ramp-difference and their ``d/drho`` kernels on the sample lattice.

    ``H`` is the first and ``J`` the second time antiderivative of ``G``.
    """
    t = dt * np.arange(nt + 1)
    ct = c0 * t
    past = ct > rho
    s = np.zeros_like(t)
    s[past] = np.sqrt(ct[past] ** 2 - rho * rho)  # c * sqrt(t^2 - rho^2/c^2)
    ach = np.zeros_like(t)
    ach[past] = np.arccosh(ct[past] / rho)
    norm = 1.0 / (2.0 * math.pi * c0 * c0)
    H = norm * ach
    J = norm * (t * ach - s / c0)
    dJ = np.zeros_like(t)
    dJ[past] = -s[past] / (2.0 * math.pi * c0**3 * rho)
    dH = np.zeros_like(t)
    dH[past] = -norm * ct[past] / (rho * s[past])
    return H[:nt], dH[:nt], np.diff(J), np.diff(dJ)


def green_response(c0: float, trace: np.ndarray, dt: float, rho: float):
    """Field and its ``d/drho`` at distance ``rho`` from a point source with sampled time function.

    The trace is interpolated linearly between samples and taken as zero before ``t = 0``.
    """
    g = np.asarray(trace, dtype=float)
    nt = g.size
    if rho <= 0.0:
        raise SingularPointError("the field is singular at the source position")
    H, dH, W, dW = _ramp_kernels(c0, rho, dt, nt)
    slopes = np.diff(g) / dt
    val = g[0] * H
    der = g[0] * dH
    if nt > 1 and np.any(slopes):
        val = val.copy()
        der = der.copy()
        val[1:] += fftconvolve(slopes, W[: nt - 1])[: nt - 1]
        der[1:] += fftconvolve(slopes, dW[: nt - 1])[: nt - 1]
    return val, der
