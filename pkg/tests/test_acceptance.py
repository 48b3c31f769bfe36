"""Acceptance checks, one per criterion, each printing a PASS/FAIL line.

Run with ``pytest tests/test_acceptance.py -s`` or directly as
``python tests/test_acceptance.py``. Criterion 8 scans two 16x14 lattices
and takes several minutes.
"""

from __future__ import annotations

import itertools
import math
import sys
import tempfile
import time
import warnings
from pathlib import Path

import numpy as np
import pytest

from wavelocate.adjoint import misfit, predicted_delta_chi, station_kernels
from wavelocate.align import best_shift_single, relative_error_curve, select_receivers
from wavelocate.cli import main as cli_main
from wavelocate.cli.config import load_config
from wavelocate.cli.mapping import compare_maps, run_map
from wavelocate.locator import LocateOptions, Mode, locate
from wavelocate.model import ConstantVelocity, SimConfig, SourceParams, TwoLayerDeep, default_receivers, default_record_length
from wavelocate.wave import SeismogramSet, make_propagator, solve_forward
from wavelocate.wave.analytic import half_space_traces
from wavelocate.wave.fd import FDSolver

CONFIGS = Path(__file__).resolve().parent.parent / "configs"
TRUTH = SourceParams((50.0, -30.0), 10.0, 2.0, 1.0)
RECEIVERS = default_receivers()


def _homogeneous(dt):
    model = ConstantVelocity()
    cfg = SimConfig(T=default_record_length(model, TRUTH, RECEIVERS), dt=dt)
    prop = make_propagator(model, cfg)
    return model, cfg, prop, solve_forward(model, TRUTH, cfg, RECEIVERS, prop)


def _synth(prop, src):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        return SeismogramSet.from_matrix(prop.dt, prop.traces(src, RECEIVERS.positions), RECEIVERS.indices)


def _rel(a, b):
    return float(np.linalg.norm(a - b) / np.linalg.norm(b))


def criterion_1():
    """FD vs closed-form half-space solution, h = 0.25 km."""
    pad = 20.0
    model = ConstantVelocity(6.5, bounds=(-pad, 100.0 + pad, -30.0 - pad))
    cfg = SimConfig(T=21.6, h=0.25, cfl=0.2)
    t0 = time.perf_counter()
    solver = FDSolver(model, cfg)
    t = solver.dt * np.arange(solver.nt)
    fd, _, _ = solver.run(TRUTH.xi, TRUTH.wavelet(t), RECEIVERS.positions)
    elapsed = time.perf_counter() - t0
    # the free surface doubles the direct wave with its image, so the oracle is the half-space solution
    ref = half_space_traces(6.5, TRUTH, RECEIVERS.positions, t)
    errs = np.linalg.norm(fd - ref, axis=1) / np.linalg.norm(ref, axis=1)
    ok = errs.max() < 0.05 and elapsed < 120.0
    return ok, f"worst trace misfit {100 * errs.max():.2f}% (station {errs.argmax() + 1}), FD run {elapsed:.1f} s"


def criterion_2():
    """Shifting the origin time by 40 dt shifts the seismograms by 40 samples."""
    _, _, prop, d = _homogeneous(0.01)
    s = _synth(prop, TRUTH.moved(tau=TRUTH.tau + 40 * prop.dt))
    worst = max(_rel(s[r].samples[40:], d[r].samples[:-40]) for r in d)
    # the same property for the grid solver on a small box
    model = ConstantVelocity(6.5, bounds=(0.0, 20.0, -10.0))
    solver = FDSolver(model, SimConfig(T=4.0, h=0.25))
    t = solver.dt * np.arange(solver.nt)
    src = SourceParams((10.0, -5.0), 1.0)
    a, _, _ = solver.run(src.xi, src.wavelet(t), [(6.0, 0.0), (14.0, 0.0)])
    b, _, _ = solver.run(src.xi, src.moved(tau=1.0 + 40 * solver.dt).wavelet(t), [(6.0, 0.0), (14.0, 0.0)])
    worst_fd = max(_rel(b[k, 40:], a[k, :-40]) for k in range(2))
    return max(worst, worst_fd) < 1e-10, f"closed form {worst:.2e}, grid solver {worst_fd:.2e} relative L2"


def criterion_3():
    """First-order misfit prediction from the kernels against brute force."""
    _, _, prop, d = _homogeneous(0.005)
    base = TRUTH.moved(xi=(50.0, -30.5))
    S = _synth(prop, base)
    chi0 = np.array([misfit(d[r], S[r]) for r in d])
    K = [station_kernels(prop, base, d[r], S[r], RECEIVERS.position(r)) for r in d]
    worst = []
    for scale in (1.0, 0.5):
        step = np.array([0.0, -0.1]) * scale
        moved = _synth(prop, base.moved(xi=tuple(np.array(base.xi) + step)))
        meas = np.array([misfit(d[r], moved[r]) for r in d]) - chi0
        pred = np.array([predicted_delta_chi(k, step, 0.0) for k in K])
        worst.append(float(np.max(np.abs(pred - meas) / np.abs(meas))))
    reduction = worst[0] / worst[1]
    ok = worst[0] <= 0.10 and reduction >= 1.7
    return ok, f"worst station {100 * worst[0]:.2f}% at |dxi|=0.1 km, {100 * worst[1]:.2f}% at 0.05 km (x{reduction:.2f})"


def criterion_4():
    """A synthetic delayed by 1.7 s is realigned by tau* = -1.7 s."""
    _, _, prop, d = _homogeneous(0.01)
    s = _synth(prop, TRUTH.moved(tau=TRUTH.tau + 1.7))
    taus = [best_shift_single(relative_error_curve(d[r], s[r])) for r in d]
    worst = max(abs(t + 1.7) for t in taus)
    return worst <= prop.dt, f"max |tau* + 1.7| = {worst:.2e} s over 20 stations (dt = {prop.dt} s)"


def criterion_5():
    """Per-station shift signs for the trial hypocentre (52, -30.3)."""
    _, _, prop, d = _homogeneous(0.01)
    s = _synth(prop, TRUTH.moved(xi=(52.0, -30.3)))
    taus = {r: best_shift_single(relative_error_curve(d[r], s[r])) for r in d}
    wrong = [r for r in d if (taus[r] < 0) != (r <= 10)]
    detail = "all signs as expected" if not wrong else "unexpected sign at " + ", ".join(f"r={r} (tau*={taus[r]:+.4f} s)" for r in wrong)
    return not wrong, detail


def criterion_6():
    """select_receivers against exhaustive enumeration."""
    rng = np.random.default_rng(7)
    mismatches = checked = 0
    for _ in range(100):
        m = int(rng.integers(7, 13))
        taus = {r + 1: float(v) for r, v in enumerate(rng.normal(0.0, 0.5, m))}
        for n in (3, 5, 6, 7):
            R, _ = select_receivers(taus, n)
            best = min(itertools.combinations(taus, n), key=lambda c: np.var([taus[r] for r in c]))
            checked += 1
            mismatches += set(R) != set(best)
    return mismatches == 0, f"{mismatches} mismatches in {checked} cases (#A in 7..12)"


def criterion_7():
    """New-mode location from (45, -40), tau0 = 0."""
    model, cfg, prop, d = _homogeneous(0.01)
    opts = LocateOptions(mode=Mode.NEW, tau0=0.0)
    t0 = time.perf_counter()
    res = locate(model, d, RECEIVERS, (45.0, -40.0), opts, cfg, TRUTH, prop)
    elapsed = time.perf_counter() - t0
    err = math.dist(res.final_xi, TRUTH.xi)
    dtau = abs(res.final_tau - TRUTH.tau)
    ok = res.converged and err < opts.epsilon and dtau <= 2 * prop.dt and res.iterations <= opts.max_iters and elapsed < 600
    return ok, f"{res.status.value} in {res.iterations} iterations, |xi - xi_T| = {err:.4f} km, |tau - 10| = {dtau:.4f} s, {elapsed:.1f} s"


def criterion_8():
    """Convergence-area ratio on the coarse 16x14 scans of the deep homogeneous case."""
    cfg = load_config(CONFIGS / "homogeneous_deep.yaml")
    t0 = time.perf_counter()
    new = run_map(cfg, "new")
    conv = run_map(cfg, "conventional")
    rep = compare_maps(new, conv)
    ratio = rep["area_ratio"]
    detail = (f"new {new.converged}/{new.total} ({new.area:.1f} km2), conventional {conv.converged}/{conv.total} "
              f"({conv.area:.2f} km2), ratio {ratio if ratio is None else round(ratio, 1)}, {time.perf_counter() - t0:.0f} s")
    return ratio is not None and ratio >= 20, detail


def criterion_9():
    """Far-field Conventional start terminates cleanly with exit code 3."""
    with tempfile.TemporaryDirectory() as tmp:
        code = cli_main(["locate", "--config", str(CONFIGS / "homogeneous_shallow.yaml"), "--mode", "conventional",
                         "--xi0", "20,-60", "--out", tmp])
        traj = Path(tmp) / "trajectory.csv"
        rows = len(traj.read_text().splitlines()) - 1 if traj.exists() else 0
    return code == 3 and rows > 0, f"exit code {code}, trajectory rows {rows}"


def criterion_10():
    """Energy drift in a fully reflecting box after the source has stopped."""
    model = TwoLayerDeep()
    solver = FDSolver(model, SimConfig(T=10.0, h=0.25, pml=False))
    src = SourceParams((50.0, -20.0), 1.0)
    t = solver.dt * np.arange(solver.nt)
    _, _, E = solver.run(src.xi, src.wavelet(t), [], energy=True)
    quiet = t > src.tau + 1.5 / src.f0
    Eq = E[quiet]
    drift = float((Eq.max() - Eq.min()) / Eq[0])
    return drift < 0.005, f"relative drift {drift:.2e} over {quiet.sum()} steps"


CRITERIA = [criterion_1, criterion_2, criterion_3, criterion_4, criterion_5,
            criterion_6, criterion_7, criterion_8, criterion_9, criterion_10]


def _line(k, ok, detail):
    return f"[{'PASS' if ok else 'FAIL'}] criterion {k:2d}: {detail}"


@pytest.mark.parametrize("k", range(1, len(CRITERIA) + 1))
def test_criterion(k, capsys):
    ok, detail = CRITERIA[k - 1]()
    with capsys.disabled():
        print("\n" + _line(k, ok, detail))
    assert ok, detail


if __name__ == "__main__":
    failed = 0
    for k, fn in enumerate(CRITERIA, 1):
        ok, detail = fn()
        failed += not ok
        print(_line(k, ok, detail), flush=True)
    sys.exit(1 if failed else 0)
