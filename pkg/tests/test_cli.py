import json
import random
from dataclasses import replace
from pathlib import Path

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from wavelocate.cli import main
from wavelocate.cli.config import ConfigError, ScanSpec, load_config, parse_config
from wavelocate.cli.main import load_dataset
from wavelocate.cli.mapping import (
    ConvergenceMap,
    NodeResult,
    _init_worker,
    _run_node,
    compare_maps,
    convergence_area,
    inscribed_rectangle,
    run_map,
)
from wavelocate.locator import Mode
from wavelocate.wave import solve_forward

CONFIGS = Path(__file__).resolve().parent.parent / "configs"

SMALL = """\
model:
  kind: constant
  c0_km_s: 6.5
source:
  xi_km: [50, -30]
  tau_s: 10
  f0_hz: 2
  amplitude: {amplitude}
receivers:
  layout: uniform
  count: 20
  spacing_km: 5
simulation:
  dt_s: 0.01
locate:
  mode: new
  xi0_km: [50, -30]
scan:
  new: {{x_km: [49.9, 50.1], z_km: [-30.1, -29.9], nx: 1, nz: 1}}
  conventional: {{x_km: [49.9, 50.1], z_km: [-30.1, -29.9], nx: 1, nz: 1, tau0_s: 10}}
"""


def write_config(tmp_path, text=None, name="exp.yaml", amplitude=1):
    p = tmp_path / name
    p.write_text(text if text is not None else SMALL.format(amplitude=amplitude))
    return str(p)


class TestConfig:
    def test_shipped_configs_parse(self):
        for p in sorted(CONFIGS.glob("*.yaml")):
            cfg = load_config(p)
            assert cfg.source.tau > 0 and len(cfg.receivers) > 0

    def test_unknown_key_reports_line(self, tmp_path):
        text = SMALL.format(amplitude=1).replace("  f0_hz: 2\n", "  f0_hz: 2\n  f1_hz: 3\n")
        with pytest.raises(ConfigError) as exc:
            load_config(write_config(tmp_path, text))
        assert ":8:" in str(exc.value) and "source.f1_hz" in str(exc.value)

    def test_bad_value_reports_line(self, tmp_path):
        text = SMALL.format(amplitude=1).replace("dt_s: 0.01", "dt_s: -1")
        with pytest.raises(ConfigError) as exc:
            load_config(write_config(tmp_path, text))
        assert ":14:" in str(exc.value)

    def test_subduction_layout(self):
        text = SMALL.format(amplitude=1).replace("layout: uniform\n  count: 20\n  spacing_km: 5", "layout: subduction")
        text = text.replace("kind: constant\n  c0_km_s: 6.5", "kind: constant\n  c0_km_s: 6.5\n  bounds_km: {x_min: 0, x_max: 220, z_min: -100}")
        cfg = parse_config(text)
        assert len(cfg.receivers) == 12
        assert cfg.receivers.position(12) == (197.0, 0.0)

    def test_lattice_is_cell_centred(self):
        nodes = list(ScanSpec((46.0, 54.0), (-35.0, -25.0), 4, 2).nodes())
        assert nodes[0] == (0, 0, 47.0, -27.5)
        assert nodes[-1] == (3, 1, 53.0, -32.5)

    def test_main_returns_2_on_config_error(self, tmp_path, capsys):
        cfg = write_config(tmp_path, SMALL.format(amplitude=1).replace("kind: constant", "kind: marble"))
        assert main(["synth", "--config", cfg, "--out", str(tmp_path / "o")]) == 2
        assert ":2:" in capsys.readouterr().err


class TestSynthAndLocate:
    def test_example_onset(self, tmp_path):
        out = tmp_path / "d"
        assert main(["synth", "--config", str(CONFIGS / "homogeneous_deep.yaml"), "--out", str(out)]) == 0
        cfg = load_config(CONFIGS / "homogeneous_deep.yaml")
        traces = load_dataset(cfg, out)
        assert len(traces) == 20
        tr = traces[7]
        first = tr.times[np.argmax(np.abs(tr.samples) > 1e-3 * np.abs(tr.samples).max())]
        assert 15.34 - 0.6 < first < 15.34
        assert (out / "traces" / "trace_007.csv").exists()

    def test_manifest_round_trip_is_exact(self, tmp_path):
        cfg_path = write_config(tmp_path)
        out = tmp_path / "d"
        assert main(["synth", "--config", cfg_path, "--out", str(out)]) == 0
        cfg = load_config(cfg_path)
        loaded = load_dataset(cfg, out)
        direct = solve_forward(cfg.model, cfg.source, cfg.sim, cfg.receivers)
        np.testing.assert_array_equal(loaded.matrix(), direct.matrix())
        manifest = json.loads((out / "manifest.json").read_text())
        assert manifest["engine"] == "analytic" and manifest["nt"] == loaded.nt

    def test_zero_amplitude(self, tmp_path):
        cfg_path = write_config(tmp_path, amplitude=0)
        out = tmp_path / "d"
        assert main(["synth", "--config", cfg_path, "--out", str(out)]) == 0
        traces = load_dataset(load_config(cfg_path), out)
        assert not np.any(traces.matrix())

    def test_tampered_data_rejected(self, tmp_path, capsys):
        cfg_path = write_config(tmp_path)
        out = tmp_path / "d"
        main(["synth", "--config", cfg_path, "--out", str(out)])
        raw = bytearray((out / "traces.wls").read_bytes())
        raw[-1] ^= 0xFF
        (out / "traces.wls").write_bytes(bytes(raw))
        assert main(["locate", "--config", cfg_path, "--data", str(out), "--out", str(tmp_path / "r")]) == 2
        assert "checksum" in capsys.readouterr().err

    def test_truth_start_locate(self, tmp_path):
        cfg_path = write_config(tmp_path)
        data = tmp_path / "d"
        main(["synth", "--config", cfg_path, "--out", str(data)])
        out = tmp_path / "r"
        assert main(["locate", "--config", cfg_path, "--data", str(data), "--out", str(out)]) == 0
        summary = json.loads((out / "summary.json").read_text())
        assert summary["status"] == "Converged" and summary["iterations"] <= 2
        assert (out / "trajectory.csv").read_text().startswith("k,xi_x_km")

    def test_far_start_conventional_reports_non_convergence(self, tmp_path, capsys):
        out = tmp_path / "r"
        code = main(["locate", "--config", str(CONFIGS / "homogeneous_shallow.yaml"), "--mode", "conventional",
                     "--xi0", "20,-60", "--out", str(out)])
        assert code == 3
        assert (out / "trajectory.csv").exists()
        status = json.loads((out / "summary.json").read_text())["status"]
        assert status in ("Diverged", "MaxIters")
        expected = "The iteration diverges." if status == "Diverged" else "Iteration limit reached."
        assert expected in capsys.readouterr().err

    @pytest.mark.parametrize("arg", ["20", "a,b", "50,5"])
    def test_bad_xi0(self, tmp_path, arg):
        assert main(["locate", "--config", write_config(tmp_path), "--xi0", arg, "--out", str(tmp_path / "r")]) == 2

    def test_bad_threads(self, tmp_path):
        assert main(["locate", "--config", write_config(tmp_path), "--threads", "0", "--out", str(tmp_path / "r")]) == 2

    def test_shift_demo(self, tmp_path, capsys):
        out = tmp_path / "s"
        assert main(["shift-demo", "--config", str(CONFIGS / "homogeneous_deep.yaml"), "--out", str(out)]) == 0
        assert "tau*" in capsys.readouterr().out
        header = (out / "shift_curves.csv").read_text().splitlines()[0].split(",")
        assert header[0] == "tau_s" and len(header) == 21


class TestMaps:
    def test_area_formula(self):
        assert convergence_area((54 - 46) * (-25 - (-35)), 228, 1280) == pytest.approx(14.25)
        assert convergence_area(3194.0, 5, 5) == 3194.0
        with pytest.raises(ValueError):
            convergence_area(1.0, 0, 0)

    def test_single_node_at_truth(self, tmp_path):
        cfg_path = write_config(tmp_path)
        out = tmp_path / "m"
        assert main(["compare", "--config", cfg_path, "--out", str(out)]) == 0
        report = json.loads((out / "compare.json").read_text())
        assert report["new"]["converged"] == 1 and report["new"]["total"] == 1
        assert report["new"]["area_km2"] == pytest.approx(0.04)
        assert report["area_ratio"] == pytest.approx(1.0)
        assert report["rectangle_area_ratio"] == pytest.approx(1.0)
        assert (out / "map_new.csv").exists() and (out / "map_conventional.json").exists()

    def test_order_independence(self, tmp_path):
        cfg = load_config(write_config(tmp_path))
        scan = ScanSpec((49.0, 51.0), (-31.0, -29.0), 2, 2, tau0_s=10.0)
        ref = run_map(cfg, "conventional", scan=scan)
        _init_worker(cfg, replace(cfg.locate, mode=Mode.CONVENTIONAL, tau0=10.0))
        nodes = list(scan.nodes())
        random.Random(3).shuffle(nodes)
        shuffled = sorted((_run_node(n) for n in nodes), key=lambda n: (n.j, n.i))
        assert [(n.status, n.final_xi) for n in shuffled] == [(n.status, n.final_xi) for n in ref.nodes]

    def test_process_pool_matches_serial(self, tmp_path):
        cfg = load_config(write_config(tmp_path))
        scan = ScanSpec((49.5, 50.5), (-30.5, -29.5), 2, 1, tau0_s=10.0)
        a = run_map(cfg, "conventional", scan=scan)
        b = run_map(cfg, "conventional", workers=2, scan=scan)
        assert a.nodes == b.nodes

    def test_compare_without_conventional_hits(self):
        scan = ScanSpec((0.0, 1.0), (-1.0, 0.0), 1, 1)
        miss = ConvergenceMap("conventional", scan, [NodeResult(0, 0, (0.5, -0.5), "Diverged", 2, (0, 0), 0, False)], 0.1)
        hit = ConvergenceMap("new", scan, [NodeResult(0, 0, (0.5, -0.5), "Converged", 2, (0, 0), 0, True)], 0.1)
        report = compare_maps(hit, miss)
        assert report["area_ratio"] is None and report["rectangle_area_ratio"] is None


def brute_force_rectangle(mask):
    nz, nx = mask.shape
    best = 0
    for j0 in range(nz):
        for j1 in range(j0, nz):
            for i0 in range(nx):
                for i1 in range(i0, nx):
                    if mask[j0 : j1 + 1, i0 : i1 + 1].all():
                        best = max(best, (j1 - j0 + 1) * (i1 - i0 + 1))
    return best


@given(st.integers(1, 6), st.integers(1, 6), st.integers(0, 2**31), st.floats(0.2, 0.95))
@settings(max_examples=150, deadline=None)
def test_inscribed_rectangle_matches_exhaustive_search(nz, nx, seed, p):
    mask = np.random.default_rng(seed).random((nz, nx)) < p
    scan = ScanSpec((0.0, float(nx)), (-float(nz), 0.0), nx, nz)
    rect = inscribed_rectangle(mask, scan)
    best = brute_force_rectangle(mask)
    if best == 0:
        assert rect is None
    else:
        assert rect["nodes"] == best
        assert rect["area_km2"] == pytest.approx(best)  # unit cells
        x0, x1 = (int(round(v)) for v in rect["x_km"])
        z0, z1 = (int(round(v)) for v in rect["z_km"])
        assert mask[-z1 : -z0, x0:x1].all()
