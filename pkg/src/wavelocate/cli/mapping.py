"""Convergence-domain maps: run the locator from every node of a scan lattice."""

from __future__ import annotations

import csv
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path
from typing import List, Optional, Tuple

import numpy as np

from ..locator import LocateOptions, Mode, locate
from ..wave import make_propagator, solve_forward
from .config import ExperimentConfig, ScanSpec


@dataclass(frozen=True)
class NodeResult:
    i: int
    j: int
    xi0: Tuple[float, float]
    status: str
    iterations: int
    final_xi: Tuple[float, float]
    final_tau: float
    hit: bool  # converged to within the truth radius


@dataclass
class ConvergenceMap:
    mode: str
    scan: ScanSpec
    nodes: List[NodeResult]
    radius_km: float

    @property
    def converged(self) -> int:
        return sum(n.hit for n in self.nodes)

    @property
    def total(self) -> int:
        return len(self.nodes)

    @property
    def area(self) -> float:
        return convergence_area(self.scan.area, self.converged, self.total)

    def mask(self) -> np.ndarray:
        """``(nz, nx)`` boolean lattice, row 0 at the top of the scan."""
        m = np.zeros((self.scan.nz, self.scan.nx), bool)
        for n in self.nodes:
            m[n.j, n.i] = n.hit
        return m

    def summary(self) -> dict:
        rect = inscribed_rectangle(self.mask(), self.scan)
        return {
            "mode": self.mode,
            "converged": self.converged,
            "total": self.total,
            "scan_area_km2": self.scan.area,
            "area_km2": self.area,
            "truth_radius_km": self.radius_km,
            "inscribed_rectangle": rect,
        }


def convergence_area(rect_area: float, converged: int, total: int) -> float:
    """Rectangle area times the converged fraction."""
    if total <= 0:
        raise ValueError("empty scan")
    return rect_area * converged / total


def inscribed_rectangle(mask: np.ndarray, scan: ScanSpec) -> Optional[dict]:
    """Largest axis-aligned block of all-converged nodes, by node count then by extent.

    The extent of a block is measured over the cells its nodes represent, so a
    single node spans one cell.
    """
    nz, nx = mask.shape
    best = None
    for j0 in range(nz):
        col_ok = np.ones(nx, bool)
        for j1 in range(j0, nz):
            col_ok &= mask[j1]
            run = 0
            for i in range(nx + 1):
                if i < nx and col_ok[i]:
                    run += 1
                    continue
                if run:
                    cand = (run * (j1 - j0 + 1), i - run, i - 1, j0, j1)
                    if best is None or cand[0] > best[0]:
                        best = cand
                run = 0
    if best is None:
        return None
    count, i0, i1, j0, j1 = best
    dx = (scan.x_km[1] - scan.x_km[0]) / scan.nx
    dz = (scan.z_km[1] - scan.z_km[0]) / scan.nz
    x = (scan.x_km[0] + i0 * dx, scan.x_km[0] + (i1 + 1) * dx)
    z = (scan.z_km[1] - (j1 + 1) * dz, scan.z_km[1] - j0 * dz)
    return {"nodes": count, "x_km": list(x), "z_km": list(z), "area_km2": (x[1] - x[0]) * (z[1] - z[0])}


_WORKER = {}


def _init_worker(cfg: ExperimentConfig, opts: LocateOptions):
    prop = make_propagator(cfg.model, cfg.sim)
    observed = solve_forward(cfg.model, cfg.source, cfg.sim, cfg.receivers, prop)
    _WORKER.update(cfg=cfg, opts=opts, prop=prop, observed=observed)


def _run_node(node) -> NodeResult:
    i, j, x, z = node
    w = _WORKER
    cfg = w["cfg"]
    res = locate(cfg.model, w["observed"], cfg.receivers, (x, z), w["opts"], cfg.sim, cfg.source, w["prop"])
    err = math.hypot(res.final_xi[0] - cfg.source.xi[0], res.final_xi[1] - cfg.source.xi[1])
    hit = res.converged and err < 10.0 * w["opts"].epsilon
    return NodeResult(i, j, (x, z), res.status.value, res.iterations, tuple(res.final_xi), res.final_tau, hit)


def run_map(cfg: ExperimentConfig, mode, workers: int = 1, scan: ScanSpec = None) -> ConvergenceMap:
    """Locate from every scan node; results are ordered by node regardless of scheduling."""
    mode = Mode(mode)
    scan = scan or cfg.scans.get(mode.value)
    if scan is None:
        raise ValueError(f"config has no scan section for mode {mode.value!r}")
    opts = replace(cfg.locate, mode=mode, workers=1)
    if scan.tau0_s is not None:
        opts = replace(opts, tau0=scan.tau0_s)
    nodes = list(scan.nodes())
    if workers <= 1:
        _init_worker(cfg, opts)
        results = [_run_node(n) for n in nodes]
    else:
        with ProcessPoolExecutor(max_workers=workers, initializer=_init_worker, initargs=(cfg, opts)) as ex:
            results = list(ex.map(_run_node, nodes, chunksize=max(1, len(nodes) // (4 * workers))))
    results.sort(key=lambda n: (n.j, n.i))
    return ConvergenceMap(mode.value, scan, results, 10.0 * opts.epsilon)


def write_map(cmap: ConvergenceMap, out_dir) -> Tuple[Path, Path]:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    csv_path = out_dir / f"map_{cmap.mode}.csv"
    with csv_path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["i", "j", "x0_km", "z0_km", "status", "iterations", "final_x_km", "final_z_km", "final_tau_s", "converged_to_truth"])
        for n in cmap.nodes:
            w.writerow([n.i, n.j, f"{n.xi0[0]:.6g}", f"{n.xi0[1]:.6g}", n.status, n.iterations,
                        f"{n.final_xi[0]:.8g}", f"{n.final_xi[1]:.8g}", f"{n.final_tau:.8g}", int(n.hit)])
    json_path = out_dir / f"map_{cmap.mode}.json"
    json_path.write_text(json.dumps(cmap.summary(), indent=2))
    return csv_path, json_path


def ascii_map(cmap: ConvergenceMap) -> str:
    return "\n".join("".join("#" if v else "." for v in row) for row in cmap.mask())


def compare_maps(new: ConvergenceMap, conv: ConvergenceMap) -> dict:
    """Area ratio New/Conventional and the inscribed all-converging rectangles of both."""
    sn, sc = new.summary(), conv.summary()

    def ratio(a, b):
        # undefined when the baseline never converges; reported as null
        return a / b if b > 0 else None

    rn, rc = sn["inscribed_rectangle"], sc["inscribed_rectangle"]
    return {
        "new": sn,
        "conventional": sc,
        "area_ratio": ratio(sn["area_km2"], sc["area_km2"]),
        "rectangle_area_ratio": ratio(rn["area_km2"] if rn else 0.0, rc["area_km2"] if rc else 0.0),
    }
