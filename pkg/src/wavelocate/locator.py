"""Iterative hypocentre and origin-time location.

Each iteration linearises the per-station misfits around the current trial
source, ``-chi_r = K_r^xi . dxi + K_r^tau dtau``, divides every row by
``chi_r`` and solves the resulting small system in the least-squares sense.

``mode="new"`` first aligns the synthetics with the data by a joint time shift
fitted on the most consistent subset of stations and linearises on that subset
only. ``mode="conventional"`` is the same loop without the alignment step,
using all stations and updating the origin time every iteration.
"""

from __future__ import annotations

import csv
import enum
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Sequence, Tuple

import numpy as np

from .adjoint import SensitivityKernels, station_kernels
from .align import ShiftEstimate, estimate_shift
from .model import ConfigurationError, ReceiverArray, SimConfig, SourceParams, VelocityModel
from .wave import Propagator, SeismogramSet, make_propagator


class Mode(str, enum.Enum):
    NEW = "new"
    CONVENTIONAL = "conventional"


class Status(str, enum.Enum):
    CONVERGED = "Converged"
    DIVERGED = "Diverged"
    MAX_ITERS = "MaxIters"


@dataclass(frozen=True)
class LocateOptions:
    """Stopping rules and alignment settings.

    Parameters
    ----------
    epsilon, sigma : float
        Convergence and divergence thresholds on the step length, km.
    max_iters : int
        Break-off step ``K``.
    subset_size : int
        Stations kept by the alignment step (new mode).
    mode : Mode or str
    tau0 : float
        Initial origin time, s.
    scan_half_width : float, optional
        Shift search half width, s. ``None`` scans the whole record.
    workers : int
        Threads used for the per-station adjoint solves.
    """

    epsilon: float = 0.01
    sigma: float = 100.0
    max_iters: int = 30
    subset_size: int = 6
    mode: Mode = Mode.NEW
    tau0: float = 0.0
    scan_half_width: float = None
    workers: int = 1

    def __post_init__(self):
        object.__setattr__(self, "mode", Mode(self.mode))
        if not self.epsilon > 0:
            raise ConfigurationError("epsilon must be positive")
        if not self.sigma > self.epsilon:
            raise ConfigurationError("sigma must exceed epsilon")
        if self.max_iters < 1 or self.subset_size < 1 or self.workers < 1:
            raise ConfigurationError("max_iters, subset_size and workers must be >= 1")


@dataclass(frozen=True)
class TrajectoryPoint:
    k: int
    xi: Tuple[float, float]
    tau: float
    step: float  # |dxi_k|, nan for the final point
    chi_sum: float
    selected: Tuple[int, ...] = ()


@dataclass
class LocationResult:
    trajectory: List[TrajectoryPoint]
    final_xi: Tuple[float, float]
    final_tau: float
    status: Status
    iterations: int
    shifts: List[ShiftEstimate] = field(default_factory=list, repr=False)

    @property
    def converged(self) -> bool:
        return self.status is Status.CONVERGED

    def summary(self) -> dict:
        return {
            "status": self.status.value,
            "final_xi_km": list(self.final_xi),
            "final_tau_s": self.final_tau,
            "iterations": self.iterations,
        }


def build_system(kernels: Sequence[SensitivityKernels]) -> Tuple[np.ndarray, np.ndarray]:
    """Rows ``(K_x/chi, K_z/chi, K_tau/chi)`` with right-hand side 1."""
    if not kernels:
        raise ValueError("no stations to build a system from")
    rows = []
    for k in kernels:
        if not k.chi > 0.0:
            raise ValueError(f"station {k.receiver_index} has zero misfit")
        rows.append([k.k_xi[0] / k.chi, k.k_xi[1] / k.chi, k.k_tau / k.chi])
    A = np.array(rows)
    return A, np.ones(A.shape[0])


def solve_update(system: Tuple[np.ndarray, np.ndarray]) -> Tuple[np.ndarray, float]:
    """Minimum-norm least-squares solution, singular values below ``1e-10 * s_max`` dropped."""
    A, b = system
    if A.shape[0] == 0 or not np.any(A):
        return np.zeros(2), 0.0
    sol, *_ = np.linalg.lstsq(A, b, rcond=1e-10)
    return sol[:2].copy(), float(sol[2])


def admissible_box(model: VelocityModel, cfg: SimConfig) -> Tuple[float, float, float, float]:
    """``(xmin, xmax, zmin, zmax)`` for trial sources: the physical domain shrunk by two grid steps."""
    x0, x1, z0 = model.bounds
    m = 2.0 * cfg.h
    return x0 + m, x1 - m, z0 + m, -m


def clamp(xi, box) -> Tuple[float, float]:
    xmin, xmax, zmin, zmax = box
    return float(np.clip(xi[0], xmin, xmax)), float(np.clip(xi[1], zmin, zmax))


def _map(fn, items, workers):
    if workers <= 1:
        return [fn(i) for i in items]
    with ThreadPoolExecutor(max_workers=workers) as ex:
        return list(ex.map(fn, items))


def locate(
    model: VelocityModel,
    observed: SeismogramSet,
    receivers: ReceiverArray,
    xi0: Sequence[float],
    opts: LocateOptions = LocateOptions(),
    cfg: SimConfig = None,
    source_template: SourceParams = None,
    propagator: Propagator = None,
) -> LocationResult:
    """Locate the source of ``observed`` starting from ``xi0`` and ``opts.tau0``.

    ``source_template`` supplies the wavelet (``f0``, ``A``); its position and
    origin time are ignored. Receivers are matched to traces by index.
    """
    if cfg is None:
        raise ConfigurationError("a SimConfig is required")
    prop = propagator or make_propagator(model, cfg)
    if observed.nt != prop.nt or abs(observed.dt - prop.dt) > 1e-12 * prop.dt:
        raise ConfigurationError(
            f"observed traces (dt={observed.dt}, nt={observed.nt}) do not match the engine "
            f"(dt={prop.dt}, nt={prop.nt})"
        )
    missing = set(observed.indices) - set(receivers.indices)
    if missing:
        raise ConfigurationError(f"no receiver positions for traces {sorted(missing)}")
    template = source_template or SourceParams((0.0, -1.0), 0.0)
    stations = list(observed.indices)
    positions = [receivers.position(r) for r in stations]
    box = admissible_box(model, cfg)
    x0, x1, z0 = model.bounds
    if not (x0 <= xi0[0] <= x1 and z0 <= xi0[1] <= 0.0):
        raise ConfigurationError(f"initial hypocentre {tuple(xi0)} lies outside the domain")
    xi = clamp(xi0, box)
    tau = float(opts.tau0)
    new_mode = opts.mode is Mode.NEW
    # the trial origin time can be far off, so by default every lag in the record is scanned
    width = opts.scan_half_width if opts.scan_half_width is not None else (prop.nt - 1) * prop.dt
    traj: List[TrajectoryPoint] = []
    shifts: List[ShiftEstimate] = []

    def synth(src):
        return SeismogramSet.from_matrix(prop.dt, prop.traces(src, positions), stations)

    k = 0
    while True:
        if new_mode:
            est = estimate_shift(observed, synth(template.moved(xi=xi, tau=tau)), opts.subset_size, width)
            shifts.append(est)
            tau = tau + est.tau_star
            use = list(est.selected)
        else:
            use = stations
        src = template.moved(xi=xi, tau=tau)
        syn = synth(src)
        kern = _map(
            lambda r: station_kernels(prop, src, observed[r], syn[r], receivers.position(r)),
            use,
            opts.workers,
        )
        chi_sum = float(sum(kk.chi for kk in kern))
        live = [kk for kk in kern if kk.chi > 0.0]
        if live:
            dxi, dtau = solve_update(build_system(live))
        else:
            dxi, dtau = np.zeros(2), 0.0
        step = float(math.hypot(*dxi))
        traj.append(TrajectoryPoint(k, xi, tau, step, chi_sum, tuple(use)))
        nxt = clamp((xi[0] + dxi[0], xi[1] + dxi[1]), box)
        moved = float(math.hypot(nxt[0] - xi[0], nxt[1] - xi[1]))
        if not new_mode:
            tau_next = tau + dtau
        if moved < opts.epsilon:
            final_tau = tau + dtau
            traj.append(TrajectoryPoint(k + 1, nxt, final_tau, float("nan"), float("nan")))
            return LocationResult(traj, nxt, final_tau, Status.CONVERGED, k + 1, shifts)
        if step > opts.sigma:
            final_tau = tau + dtau
            traj.append(TrajectoryPoint(k + 1, nxt, final_tau, float("nan"), float("nan")))
            return LocationResult(traj, nxt, final_tau, Status.DIVERGED, k + 1, shifts)
        if k + 1 > opts.max_iters:
            final_tau = tau + dtau
            traj.append(TrajectoryPoint(k + 1, nxt, final_tau, float("nan"), float("nan")))
            return LocationResult(traj, nxt, final_tau, Status.MAX_ITERS, k + 1, shifts)
        xi = nxt
        if not new_mode:
            tau = tau_next
        k += 1


def write_trajectory_csv(result: LocationResult, path) -> Path:
    """Rows ``(k, xi_x, xi_z, tau, |dxi|, sum chi_r)``."""
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["k", "xi_x_km", "xi_z_km", "tau_s", "step_km", "chi_sum"])
        for p in result.trajectory:
            w.writerow([p.k, f"{p.xi[0]:.10g}", f"{p.xi[1]:.10g}", f"{p.tau:.10g}", f"{p.step:.10g}", f"{p.chi_sum:.10g}"])
    return path
