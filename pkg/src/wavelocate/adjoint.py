"""Waveform misfit, adjoint wavefields and hypocentre/origin-time sensitivity kernels."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .model import SimConfig, SourceParams, VelocityModel
from .wave import FieldHistory, Propagator, Seismogram, make_propagator


class DegenerateDataError(ValueError):
    """The observed trace carries no energy, so the normalised misfit is undefined."""


@dataclass(frozen=True)
class SensitivityKernels:
    k_xi: np.ndarray  # (d/dx, d/dz) part, per km
    k_tau: float  # per s
    chi: float
    receiver_index: int = 0

    def __post_init__(self):
        object.__setattr__(self, "k_xi", np.asarray(self.k_xi, dtype=float).reshape(2))
        if not (np.all(np.isfinite(self.k_xi)) and np.isfinite(self.k_tau) and np.isfinite(self.chi)):
            raise ValueError("kernels must be finite")


def _check_pair(d: Seismogram, s: Seismogram):
    if d.nt != s.nt or abs(d.dt - s.dt) > 1e-12 * d.dt:
        raise ValueError("observed and synthetic traces must share dt and nt")
    energy = d.energy
    if energy <= 0.0:
        raise DegenerateDataError(f"observed trace {d.receiver_index} has zero energy")
    return energy


def misfit(d: Seismogram, s: Seismogram) -> float:
    """``int |d - s|^2 dt / (2 int |d|^2 dt)``."""
    energy = _check_pair(d, s)
    r = d.samples - s.samples
    return float(np.dot(r, r) * d.dt / (2.0 * energy))


def adjoint_source(d: Seismogram, s: Seismogram) -> Seismogram:
    """Residual ``d - s`` scaled by the inverse observed energy."""
    energy = _check_pair(d, s)
    return d.with_samples((d.samples - s.samples) / energy)


def solve_adjoint(
    model: VelocityModel,
    adj_src: Seismogram,
    position: Sequence[float],
    cfg: SimConfig,
    query: Sequence[float],
    propagator: Propagator = None,
) -> FieldHistory:
    """Adjoint field at ``query`` for a source at receiver ``position``, zero at ``t = T``.

    The terminal-value problem is solved forward in reversed time ``t' = T - t``
    with the reversed source; the history is returned in forward time order.
    """
    prop = propagator or make_propagator(model, cfg)
    prop.check_point(position, "receiver")
    prop.check_point(query, "query point")
    reversed_hist = prop.field(adj_src.samples[::-1].copy(), tuple(position), tuple(query))
    return reversed_hist.reversed()


def compute_kernels(w: FieldHistory, source: SourceParams, chi: float = 0.0, receiver_index: int = 0) -> SensitivityKernels:
    """Hypocentre kernel ``int grad w f(t - tau) dt`` and origin-time kernel ``-int w f'(t - tau) dt``."""
    t = w.dt * np.arange(w.nt)
    f = source.wavelet(t)
    fp = source.wavelet_derivative(t)
    if f.shape[0] != w.nt:
        raise ValueError("field history and wavelet lengths differ")
    k_xi = w.dt * (w.gradient.T @ f)
    k_tau = -w.dt * float(np.dot(w.values, fp))
    return SensitivityKernels(k_xi, k_tau, chi, receiver_index)


def predicted_delta_chi(kernels: SensitivityKernels, dxi: Sequence[float], dtau: float) -> float:
    """First-order misfit change ``-(K_xi . dxi + K_tau dtau)``."""
    return -float(np.dot(kernels.k_xi, np.asarray(dxi, dtype=float)) + kernels.k_tau * dtau)


def station_kernels(
    propagator: Propagator,
    source: SourceParams,
    observed: Seismogram,
    synthetic: Seismogram,
    position: Sequence[float],
) -> SensitivityKernels:
    """Misfit and kernels of one station at the trial source ``source``."""
    chi = misfit(observed, synthetic)
    adj = adjoint_source(observed, synthetic)
    if chi == 0.0:
        return SensitivityKernels(np.zeros(2), 0.0, 0.0, observed.receiver_index)
    hist = propagator.field(adj.samples[::-1].copy(), tuple(position), source.xi).reversed()
    return compute_kernels(hist, source, chi, observed.receiver_index)


def write_kernels_csv(kernels: Iterable[SensitivityKernels], path) -> Path:
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["r", "k_xi_x", "k_xi_z", "k_tau", "chi"])
        for k in kernels:
            w.writerow([k.receiver_index, f"{k.k_xi[0]:.17g}", f"{k.k_xi[1]:.17g}", f"{k.k_tau:.17g}", f"{k.chi:.17g}"])
    return path
