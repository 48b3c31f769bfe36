"""Time-shift alignment between observed and synthetic traces.

For each station the relative error ``e_r(tau) = ||d(t) - s(t - tau)|| / ||d||``
is scanned over integer-sample shifts (the synthetic is zero-padded where it
is shifted out of the record). The per-station minimisers are clustered by
choosing the ``n`` stations whose shifts have the smallest spread, and one
joint shift is then fitted to that subset.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, Mapping, Sequence, Tuple

import numpy as np
from scipy.signal import correlate

from .adjoint import DegenerateDataError
from .wave import Seismogram, SeismogramSet


@dataclass(frozen=True)
class ShiftCurve:
    taus: np.ndarray
    errors: np.ndarray

    @property
    def dt(self) -> float:
        return float(self.taus[1] - self.taus[0]) if self.taus.size > 1 else 0.0


@dataclass(frozen=True)
class ShiftEstimate:
    tau_star_r: Dict[int, float]
    selected: Tuple[int, ...]
    tau_bar: float
    tau_star: float


def relative_error_curve(d: Seismogram, s: Seismogram, scan_half_width: float = None) -> ShiftCurve:
    """``e_r(tau)`` on the integer-sample shifts in ``[-scan_half_width, scan_half_width]``.

    ``scan_half_width=None`` scans ``T/2``; any width up to the record length is accepted.
    """
    if d.nt != s.nt or abs(d.dt - s.dt) > 1e-12 * d.dt:
        raise ValueError("observed and synthetic traces must share dt and nt")
    n, dt = d.nt, d.dt
    dd = float(np.dot(d.samples, d.samples))
    if dd <= 0.0:
        raise DegenerateDataError(f"observed trace {d.receiver_index} has zero energy")
    T = (n - 1) * dt
    width = 0.5 * T if scan_half_width is None else scan_half_width
    m_max = min(n - 1, int(np.floor(width / dt + 1e-9)))
    shifts = np.arange(-m_max, m_max + 1)
    # corr[m] = sum_n d[n] s[n - m]
    full = correlate(d.samples, s.samples, mode="full")
    corr = full[shifts + n - 1]
    cs = np.concatenate(([0.0], np.cumsum(s.samples * s.samples)))
    ss = cs[np.minimum(n, n - shifts)] - cs[np.maximum(0, -shifts)]
    e2 = np.maximum(0.0, (dd + ss - 2.0 * corr) / dd)
    return ShiftCurve(shifts * dt, np.sqrt(e2))


def _argmin_refined(taus: np.ndarray, values: np.ndarray, allowed: np.ndarray = None) -> float:
    """Smallest-|tau| discrete minimiser over ``allowed`` samples, then a 3-point parabola."""
    ok = np.ones(values.size, bool) if allowed is None else allowed
    vmin = values[ok].min()
    ties = np.flatnonzero(ok & (values <= vmin + 1e-12 * max(1.0, abs(vmin))))
    i = int(ties[np.argmin(np.abs(taus[ties]))])
    if 0 < i < values.size - 1:
        a, b, c = values[i - 1], values[i], values[i + 1]
        denom = a - 2.0 * b + c
        if denom > 0.0:
            off = float(np.clip(0.5 * (a - c) / denom, -0.5, 0.5))
            return float(taus[i] + off * (taus[i + 1] - taus[i]))
    return float(taus[i])


def best_shift_single(curve: ShiftCurve) -> float:
    """Minimiser of one curve, refined by a parabola through the three samples around it."""
    if curve.taus.size == 0:
        raise ValueError("empty shift curve")
    return _argmin_refined(curve.taus, curve.errors)


def select_receivers(tau_stars: Mapping[int, float], n: int) -> Tuple[Tuple[int, ...], float]:
    """Subset of ``n`` stations minimising ``sum (tau_r* - mean)^2``, and that mean.

    For a fixed subset size the optimum is a run of consecutive values in sorted
    order, so scanning all windows of length ``n`` is exact.
    """
    items = sorted(tau_stars.items(), key=lambda kv: (kv[1], kv[0]))
    if not 1 <= n <= len(items):
        raise ValueError(f"subset size {n} must lie in [1, {len(items)}]")
    vals = np.array([v for _, v in items])
    c1 = np.concatenate(([0.0], np.cumsum(vals)))
    c2 = np.concatenate(([0.0], np.cumsum(vals * vals)))
    sums = c1[n:] - c1[:-n]
    ssd = (c2[n:] - c2[:-n]) - sums * sums / n
    means = sums / n
    best = ssd.min()
    cand = np.flatnonzero(ssd <= best + 1e-12 * max(1.0, abs(best)))
    k = int(cand[np.argmin(np.abs(means[cand]))])
    chosen = tuple(sorted(r for r, _ in items[k : k + n]))
    return chosen, float(means[k])


def summed_curve(d_set: SeismogramSet, s_set: SeismogramSet, receivers: Sequence[int], scan_half_width: float = None) -> ShiftCurve:
    curves = [relative_error_curve(d_set[r], s_set[r], scan_half_width) for r in receivers]
    return ShiftCurve(curves[0].taus, np.sum([c.errors for c in curves], axis=0))


def refine_shift(
    d_set: SeismogramSet,
    s_set: SeismogramSet,
    R_star: Sequence[int],
    scan_half_width: float = None,
    bracket: Tuple[float, float] = None,
) -> float:
    """Joint shift minimising ``sum_{r in R*} e_r(tau)``.

    ``bracket=(lo, hi)`` restricts the search to those shifts. Without it a
    far lag that pushes the synthetics off the arrivals (``e_r = 1``) can beat
    a cluster whose members are individually aligned but mutually misaligned
    by more than half a period.
    """
    if not R_star:
        raise ValueError("receiver subset is empty")
    curve = summed_curve(d_set, s_set, R_star, scan_half_width)
    allowed = None
    if bracket is not None:
        allowed = (curve.taus >= bracket[0] - 1e-9) & (curve.taus <= bracket[1] + 1e-9)
        if not allowed.any():
            allowed = None
    return _argmin_refined(curve.taus, curve.errors, allowed)


def shifted_origin(tau: float, tau_star: float) -> float:
    return tau + tau_star


def estimate_shift(d_set: SeismogramSet, s_set: SeismogramSet, n: int, scan_half_width: float = None) -> ShiftEstimate:
    """Per-station shifts, the tightest ``n``-station cluster and its joint shift."""
    taus = {r: best_shift_single(relative_error_curve(d_set[r], s_set[r], scan_half_width)) for r in d_set}
    selected, tau_bar = select_receivers(taus, n)
    dt = d_set.dt
    members = [taus[r] for r in selected]
    tau_star = refine_shift(d_set, s_set, selected, scan_half_width, (min(members) - 2 * dt, max(members) + 2 * dt))
    return ShiftEstimate(taus, selected, tau_bar, tau_star)


def write_shift_csv(estimate: ShiftEstimate, d_set, s_set, path, scan_half_width: float = None) -> Path:
    """Per-station ``(r, tau_r*, min e_r, selected)`` followed by the summed curve of the subset."""
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["r", "tau_star_s", "min_error", "selected"])
        for r in d_set:
            c = relative_error_curve(d_set[r], s_set[r], scan_half_width)
            w.writerow([r, f"{estimate.tau_star_r[r]:.10g}", f"{c.errors.min():.10g}", int(r in estimate.selected)])
        w.writerow([])
        w.writerow(["tau_s", "summed_error"])
        curve = summed_curve(d_set, s_set, estimate.selected, scan_half_width)
        for t, e in zip(curve.taus, curve.errors):
            w.writerow([f"{t:.10g}", f"{e:.10g}"])
    return path
