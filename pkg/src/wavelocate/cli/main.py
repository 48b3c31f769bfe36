"""``wavelocate`` command line.

Exit codes: 0 success, 2 configuration or input error, 3 the locator did not converge.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import logging
import sys
import time
from dataclasses import replace
from pathlib import Path

import numpy as np

from .. import align
from ..locator import Mode, locate, write_trajectory_csv
from ..model import ConfigurationError, DomainError
from ..wave import SeismogramSet, make_propagator, select_engine, solve_forward
from ..wave.io import read_binary, write_binary, write_csv
from .config import ConfigError, ExperimentConfig, load_config
from .mapping import ascii_map, compare_maps, run_map, write_map

EXIT_OK, EXIT_CONFIG, EXIT_NOT_CONVERGED = 0, 2, 3
MANIFEST = "manifest.json"
MANIFEST_FORMAT = "wavelocate-traces/1"

log = logging.getLogger("wavelocate")


class InputError(Exception):
    """Data on disk does not match the configuration."""


def _out_dir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _xi0(args, cfg: ExperimentConfig):
    if args.xi0 is not None:
        try:
            x, z = (float(v) for v in args.xi0.split(","))
        except ValueError:
            raise ConfigError(f"--xi0: expected 'x,z' in km, got {args.xi0!r}") from None
        if not cfg.model.contains(x, z):
            raise ConfigError(f"--xi0: {(x, z)} lies outside the model domain {cfg.model.bounds}")
        return x, z
    if cfg.xi0 is None:
        raise ConfigError(f"{cfg.path}: locate.xi0_km is not set and --xi0 was not given")
    return cfg.xi0


def write_dataset(cfg: ExperimentConfig, traces: SeismogramSet, out: Path) -> Path:
    """Binary traces, one CSV per receiver and a manifest tying them to the config."""
    binary = write_binary(traces, out / "traces.wls")
    csv_dir = out / "traces"
    csv_dir.mkdir(exist_ok=True)
    receivers = []
    for r in traces:
        p = cfg.receivers.position(r)
        name = f"trace_{r:03d}.csv"
        write_csv(traces[r], csv_dir / name)
        receivers.append({"r": r, "x_km": p[0], "z_km": p[1], "csv": f"traces/{name}"})
    src = cfg.source
    manifest = {
        "format": MANIFEST_FORMAT,
        "config": cfg.path,
        "config_digest": cfg.digest(),
        "engine": select_engine(cfg.model, cfg.sim),
        "dt_s": traces.dt,
        "nt": traces.nt,
        "source": {"xi_km": list(src.xi), "tau_s": src.tau, "f0_hz": src.f0, "amplitude": src.A},
        "receivers": receivers,
        "binary": binary.name,
        "binary_sha256": _sha256(binary),
    }
    path = out / MANIFEST
    path.write_text(json.dumps(manifest, indent=2))
    return path


def load_dataset(cfg: ExperimentConfig, data_dir) -> SeismogramSet:
    """Read a dataset written by ``synth`` and check it against ``cfg``."""
    data_dir = Path(data_dir)
    try:
        manifest = json.loads((data_dir / MANIFEST).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise InputError(f"{data_dir / MANIFEST}: cannot read manifest: {exc}") from None
    if manifest.get("format") != MANIFEST_FORMAT:
        raise InputError(f"{data_dir / MANIFEST}: unsupported format {manifest.get('format')!r}")
    binary = data_dir / manifest["binary"]
    if _sha256(binary) != manifest["binary_sha256"]:
        raise InputError(f"{binary}: checksum does not match the manifest")
    traces = read_binary(binary)
    listed = {int(e["r"]): (float(e["x_km"]), float(e["z_km"])) for e in manifest["receivers"]}
    if set(listed) != set(cfg.receivers.indices):
        raise InputError(f"manifest receivers {sorted(listed)} differ from the config's {list(cfg.receivers.indices)}")
    for r, p in listed.items():
        q = cfg.receivers.position(r)
        if abs(p[0] - q[0]) > 1e-9 or abs(p[1] - q[1]) > 1e-9:
            raise InputError(f"receiver {r}: manifest position {p} differs from config position {q}")
    return traces


def cmd_synth(args) -> int:
    cfg = load_config(args.config)
    out = _out_dir(args)
    t0 = time.perf_counter()
    traces = solve_forward(cfg.model, cfg.source, cfg.sim, cfg.receivers)
    path = write_dataset(cfg, traces, out)
    print(f"wrote {len(traces)} traces (dt={traces.dt:.6g} s, nt={traces.nt}) to {out} in {time.perf_counter() - t0:.1f} s")
    print(f"manifest: {path}")
    return EXIT_OK


def cmd_locate(args) -> int:
    cfg = load_config(args.config)
    if args.mode:
        cfg = cfg.with_mode(args.mode)
    opts = cfg.locate
    if args.threads:
        opts = replace(opts, workers=args.threads)
    xi0 = _xi0(args, cfg)
    out = _out_dir(args)
    prop = make_propagator(cfg.model, cfg.sim)
    if args.data:
        observed = load_dataset(cfg, args.data)
    else:
        observed = solve_forward(cfg.model, cfg.source, cfg.sim, cfg.receivers, prop)
    t0 = time.perf_counter()
    res = locate(cfg.model, observed, cfg.receivers, xi0, opts, cfg.sim, cfg.source, prop)
    elapsed = time.perf_counter() - t0
    write_trajectory_csv(res, out / "trajectory.csv")
    summary = res.summary()
    truth = cfg.source
    summary.update(
        mode=opts.mode.value,
        xi0_km=list(xi0),
        tau0_s=opts.tau0,
        error_km=float(np.hypot(res.final_xi[0] - truth.xi[0], res.final_xi[1] - truth.xi[1])),
        tau_error_s=res.final_tau - truth.tau,
        elapsed_s=elapsed,
    )
    (out / "summary.json").write_text(json.dumps(summary, indent=2))
    for p in res.trajectory:
        print(f"k={p.k:2d}  xi=({p.xi[0]:9.4f}, {p.xi[1]:9.4f})  tau={p.tau:8.4f}  step={p.step:10.4g}")
    x, z = res.final_xi
    print(f"{res.status.value} after {res.iterations} iterations: xi=({x:.4f}, {z:.4f}) km, tau={res.final_tau:.4f} s")
    if not res.converged:
        print("The iteration diverges." if res.status.value == "Diverged" else "Iteration limit reached.", file=sys.stderr)
        return EXIT_NOT_CONVERGED
    return EXIT_OK


def _map_one(cfg, mode, args, out):
    t0 = time.perf_counter()
    cmap = run_map(cfg, mode, workers=args.threads or 1)
    write_map(cmap, out)
    print(f"[{mode}] {cmap.converged}/{cmap.total} nodes converged, area {cmap.area:.4g} km^2 ({time.perf_counter() - t0:.1f} s)")
    print(ascii_map(cmap))
    return cmap


def cmd_map(args) -> int:
    cfg = load_config(args.config)
    mode = args.mode or cfg.locate.mode.value
    if mode not in cfg.scans:
        raise ConfigError(f"{cfg.path}: no scan.{mode} section")
    _map_one(cfg, mode, args, _out_dir(args))
    return EXIT_OK


def cmd_compare(args) -> int:
    cfg = load_config(args.config)
    for mode in ("new", "conventional"):
        if mode not in cfg.scans:
            raise ConfigError(f"{cfg.path}: no scan.{mode} section")
    out = _out_dir(args)
    new = _map_one(cfg, "new", args, out)
    conv = _map_one(cfg, "conventional", args, out)
    report = compare_maps(new, conv)
    (out / "compare.json").write_text(json.dumps(report, indent=2))
    ratio = report["area_ratio"]
    print("area ratio new/conventional: " + ("undefined (no conventional convergence)" if ratio is None else f"{ratio:.4g}"))
    return EXIT_OK


def cmd_shift_demo(args) -> int:
    cfg = load_config(args.config)
    prop = make_propagator(cfg.model, cfg.sim)
    observed = solve_forward(cfg.model, cfg.source, cfg.sim, cfg.receivers, prop)
    trial = cfg.source.moved(xi=cfg.shift_demo_xi)
    synthetic = solve_forward(cfg.model, trial, cfg.sim, cfg.receivers, prop)
    width = cfg.locate.scan_half_width
    est = align.estimate_shift(observed, synthetic, cfg.locate.subset_size, width)
    print(f"trial source {trial.xi} vs truth {cfg.source.xi}, tau = {trial.tau:g} s")
    print(f"{'r':>3} {'tau_r* (s)':>11} {'e_r(0)':>8} {'min e_r':>8}")
    rows = []
    for r in observed:
        c = align.relative_error_curve(observed[r], synthetic[r], width)
        e0 = float(c.errors[np.argmin(np.abs(c.taus))])
        mark = " *" if r in est.selected else ""
        print(f"{r:3d} {est.tau_star_r[r]:11.4f} {e0:8.4f} {c.errors.min():8.4f}{mark}")
        rows.append(c)
    print(f"selected {list(est.selected)}  tau_bar={est.tau_bar:.4f} s  tau*={est.tau_star:.4f} s")
    if args.out:
        out = _out_dir(args)
        align.write_shift_csv(est, observed, synthetic, out / "shift_summary.csv", width)
        with (out / "shift_curves.csv").open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["tau_s"] + [f"e_{r}" for r in observed])
            for k, t in enumerate(rows[0].taus):
                w.writerow([f"{t:.6g}"] + [f"{c.errors[k]:.8g}" for c in rows])
        print(f"curves written to {out}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="wavelocate", description="Waveform-based earthquake location with time-shift alignment.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, out_required=True):
        sp.add_argument("--config", required=True, help="experiment YAML file")
        sp.add_argument("--out", required=out_required, help="output directory")

    sp = sub.add_parser("synth", help="generate observed seismograms from the configured truth")
    common(sp)
    sp.set_defaults(func=cmd_synth)

    sp = sub.add_parser("locate", help="locate one event")
    common(sp)
    sp.add_argument("--data", help="dataset directory written by synth (default: synthesise in memory)")
    sp.add_argument("--mode", choices=[m.value for m in Mode])
    sp.add_argument("--xi0", help="initial hypocentre 'x,z' in km")
    sp.add_argument("--threads", type=int, help="threads for per-station adjoint solves")
    sp.set_defaults(func=cmd_locate)

    sp = sub.add_parser("map", help="convergence map over the configured scan lattice")
    common(sp)
    sp.add_argument("--mode", choices=[m.value for m in Mode])
    sp.add_argument("--threads", type=int, help="worker processes")
    sp.set_defaults(func=cmd_map)

    sp = sub.add_parser("compare", help="maps for both methods plus area statistics")
    common(sp)
    sp.add_argument("--threads", type=int, help="worker processes")
    sp.set_defaults(func=cmd_compare)

    sp = sub.add_parser("shift-demo", help="per-station shift curves for a trial source")
    common(sp, out_required=False)
    sp.set_defaults(func=cmd_shift_demo)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    if getattr(args, "threads", None) is not None and args.threads < 1:
        print("error: --threads must be >= 1", file=sys.stderr)
        return EXIT_CONFIG
    try:
        return args.func(args)
    except (ConfigurationError, DomainError, InputError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
