"""Experiment configuration files.

YAML, with units spelled out in key names. Example::

    model:
      kind: constant          # constant | two_layer_deep | two_layer_shallow | subduction
      c0_km_s: 6.5
    source:
      xi_km: [50, -30]
      tau_s: 10
      f0_hz: 2
      amplitude: 1
    receivers:
      layout: uniform         # uniform | subduction | explicit
      count: 20
      spacing_km: 5
    simulation:
      dt_s: 0.01
      h_km: 0.25
    locate:
      mode: new
      xi0_km: [45, -40]
    scan:
      new: {x_km: [10, 90], z_km: [-70, 0], nx: 16, nz: 14}
      conventional: {x_km: [46, 54], z_km: [-35, -25], nx: 16, nz: 14, tau0_s: 10}

Every key is validated; errors name the file, line and key path.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Dict, Optional, Tuple

import yaml

from ..locator import LocateOptions, Mode
from ..model import (
    ConfigurationError,
    ConstantVelocity,
    ReceiverArray,
    SimConfig,
    SourceParams,
    SubductionVelocity,
    TwoLayerDeep,
    TwoLayerShallow,
    VelocityModel,
    default_receivers,
    default_record_length,
    receivers_from_x,
    subduction_receivers,
)

MODEL_KINDS = {
    "constant": ConstantVelocity,
    "two_layer_deep": TwoLayerDeep,
    "two_layer_shallow": TwoLayerShallow,
    "subduction": SubductionVelocity,
}


class ConfigError(ConfigurationError):
    """Invalid configuration file; the message carries ``file:line: key``."""


@dataclass(frozen=True)
class ScanSpec:
    x_km: Tuple[float, float]
    z_km: Tuple[float, float]
    nx: int
    nz: int
    tau0_s: Optional[float] = None

    @property
    def area(self) -> float:
        return (self.x_km[1] - self.x_km[0]) * (self.z_km[1] - self.z_km[0])

    def nodes(self):
        """Cell-centred lattice, row-major from the top (shallowest) row, as ``(i, j, x, z)``."""
        dx = (self.x_km[1] - self.x_km[0]) / self.nx
        dz = (self.z_km[1] - self.z_km[0]) / self.nz
        for j in range(self.nz):
            z = self.z_km[1] - (j + 0.5) * dz
            for i in range(self.nx):
                yield i, j, self.x_km[0] + (i + 0.5) * dx, z


@dataclass(frozen=True)
class ExperimentConfig:
    model: VelocityModel
    source: SourceParams
    receivers: ReceiverArray
    sim: SimConfig
    locate: LocateOptions
    xi0: Optional[Tuple[float, float]] = None
    scans: Dict[str, ScanSpec] = field(default_factory=dict)
    shift_demo_xi: Tuple[float, float] = (52.0, -30.3)
    raw: Dict[str, Any] = field(default_factory=dict, repr=False, compare=False)
    path: Optional[str] = None

    def digest(self) -> str:
        return hashlib.sha256(json.dumps(self.raw, sort_keys=True, default=str).encode()).hexdigest()[:16]

    def with_mode(self, mode) -> "ExperimentConfig":
        return replace(self, locate=replace(self.locate, mode=Mode(mode)))


class _Located:
    """Walks the composed YAML tree alongside the plain data to report line numbers."""

    def __init__(self, path: str, text: str):
        self.path = path
        loader = yaml.SafeLoader(text)
        try:
            self.node = loader.get_single_node()
            self.data = loader.construct_document(self.node) if self.node is not None else {}
        except yaml.YAMLError as exc:
            mark = getattr(exc, "problem_mark", None)
            where = f"{path}:{mark.line + 1}" if mark else path
            raise ConfigError(f"{where}: YAML syntax error: {getattr(exc, 'problem', exc)}") from None
        finally:
            loader.dispose()
        self.lines: Dict[Tuple[str, ...], int] = {}
        if self.node is not None:
            self._index(self.node, ())

    def _index(self, node, key):
        self.lines[key] = node.start_mark.line + 1
        if isinstance(node, yaml.MappingNode):
            for k, v in node.value:
                sub = key + (str(k.value),)
                self._index(v, sub)
                self.lines[sub] = k.start_mark.line + 1
        elif isinstance(node, yaml.SequenceNode):
            for i, v in enumerate(node.value):
                self._index(v, key + (str(i),))

    def error(self, key: Tuple[str, ...], msg: str) -> ConfigError:
        k = key
        while k and k not in self.lines:
            k = k[:-1]
        line = self.lines.get(k, 1)
        return ConfigError(f"{self.path}:{line}: {'.'.join(key) or '<root>'}: {msg}")


class _Section:
    def __init__(self, loc: _Located, key: Tuple[str, ...], data, allowed):
        if data is None:
            data = {}
        if not isinstance(data, dict):
            raise loc.error(key, "expected a mapping")
        for k in data:
            if str(k) not in allowed:
                raise loc.error(key + (str(k),), f"unknown key (allowed: {', '.join(sorted(allowed))})")
        self.loc, self.key, self.data = loc, key, data

    def has(self, name):
        return name in self.data and self.data[name] is not None

    def _err(self, name, msg):
        return self.loc.error(self.key + (name,), msg)

    def number(self, name, default=None, positive=False, integer=False, required=False):
        if not self.has(name):
            if required:
                raise self._err(name, "required key is missing")
            return default
        v = self.data[name]
        if isinstance(v, bool) or not isinstance(v, (int, float)):
            raise self._err(name, f"expected a number, got {v!r}")
        if integer and (not isinstance(v, int)):
            raise self._err(name, f"expected an integer, got {v!r}")
        if positive and not v > 0:
            raise self._err(name, f"must be positive, got {v!r}")
        return int(v) if integer else float(v)

    def pair(self, name, default=None, required=False):
        if not self.has(name):
            if required:
                raise self._err(name, "required key is missing")
            return default
        v = self.data[name]
        if not (isinstance(v, list) and len(v) == 2 and all(isinstance(a, (int, float)) and not isinstance(a, bool) for a in v)):
            raise self._err(name, f"expected a pair of numbers, got {v!r}")
        return float(v[0]), float(v[1])

    def choice(self, name, options, default):
        v = self.data.get(name, default)
        if v not in options:
            raise self._err(name, f"expected one of {', '.join(options)}, got {v!r}")
        return v

    def flag(self, name, default):
        v = self.data.get(name, default)
        if not isinstance(v, bool):
            raise self._err(name, f"expected true or false, got {v!r}")
        return v

    def sub(self, name, allowed):
        return _Section(self.loc, self.key + (name,), self.data.get(name), allowed)


def _parse_model(s: _Section) -> VelocityModel:
    kind = s.choice("kind", list(MODEL_KINDS), "constant")
    cls = MODEL_KINDS[kind]
    kwargs = {}
    if s.has("bounds_km"):
        b = s.sub("bounds_km", {"x_min", "x_max", "z_min"})
        kwargs["bounds"] = (b.number("x_min", required=True), b.number("x_max", required=True), b.number("z_min", required=True))
        if not (kwargs["bounds"][0] < kwargs["bounds"][1] and kwargs["bounds"][2] < 0):
            raise s._err("bounds_km", "need x_min < x_max and z_min < 0")
    if kind == "constant":
        kwargs["c0"] = s.number("c0_km_s", 6.5, positive=True)
    elif s.has("c0_km_s"):
        raise s._err("c0_km_s", f"only valid for kind 'constant', not {kind!r}")
    return cls(**kwargs)


def _parse_receivers(s: _Section) -> ReceiverArray:
    layout = s.choice("layout", ["uniform", "subduction", "explicit"], "uniform")
    if layout == "uniform":
        return default_receivers(s.number("count", 20, positive=True, integer=True), s.number("spacing_km", 5.0, positive=True))
    if layout == "subduction":
        return subduction_receivers()
    if not s.has("x_km"):
        raise s._err("x_km", "explicit layout needs a list of x positions")
    xs = s.data["x_km"]
    if not (isinstance(xs, list) and xs and all(isinstance(a, (int, float)) and not isinstance(a, bool) for a in xs)):
        raise s._err("x_km", f"expected a non-empty list of numbers, got {xs!r}")
    return receivers_from_x([float(a) for a in xs])


def _parse_scan(s: _Section, model: VelocityModel) -> ScanSpec:
    x = s.pair("x_km", required=True)
    z = s.pair("z_km", required=True)
    nx = s.number("nx", required=True, positive=True, integer=True)
    nz = s.number("nz", required=True, positive=True, integer=True)
    x0, x1, zmin = model.bounds
    if not (x0 <= x[0] <= x[1] <= x1):
        raise s._err("x_km", f"must satisfy {x0} <= lo <= hi <= {x1}")
    if not (zmin <= z[0] <= z[1] <= 0.0):
        raise s._err("z_km", f"must satisfy {zmin} <= lo <= hi <= 0")
    return ScanSpec(x, z, nx, nz, s.number("tau0_s"))


def parse_config(text: str, path: str = "<config>") -> ExperimentConfig:
    loc = _Located(path, text)
    root = _Section(loc, (), loc.data, {"model", "source", "receivers", "simulation", "locate", "scan", "shift_demo"})

    try:
        model = _parse_model(root.sub("model", {"kind", "c0_km_s", "bounds_km"}))

        src = root.sub("source", {"xi_km", "tau_s", "f0_hz", "amplitude"})
        xi_t = src.pair("xi_km", required=True)
        if not model.contains(*xi_t):
            raise src._err("xi_km", f"{xi_t} lies outside the model domain {model.bounds}")
        source = SourceParams(xi_t, src.number("tau_s", required=True), src.number("f0_hz", 2.0, positive=True), src.number("amplitude", 1.0))

        receivers = _parse_receivers(root.sub("receivers", {"layout", "count", "spacing_km", "x_km"}))
        for p in receivers.positions:
            if not model.contains(*p):
                raise root._err("receivers", f"receiver {p} lies outside the model domain")

        sim = root.sub("simulation", {"T_s", "dt_s", "h_km", "cfl", "pml", "pml_width_nodes", "pml_reflectivity", "engine"})
        T = sim.number("T_s", positive=True)
        if T is None:
            T = default_record_length(model, source, receivers)
        cfg = SimConfig(
            T=T,
            dt=sim.number("dt_s", positive=True),
            h=sim.number("h_km", 0.25, positive=True),
            cfl=sim.number("cfl", 0.2, positive=True),
            pml_width=sim.number("pml_width_nodes", 20, integer=True),
            pml_reflectivity=sim.number("pml_reflectivity", 1e-6, positive=True),
            pml=sim.flag("pml", True),
            engine=sim.choice("engine", ["auto", "fd", "analytic"], "auto"),
        )

        lo = root.sub("locate", {"epsilon_km", "sigma_km", "max_iters", "subset_size", "mode", "tau0_s", "scan_half_width_s", "xi0_km", "workers"})
        n = lo.number("subset_size", 6, positive=True, integer=True)
        if n > len(receivers):
            raise lo._err("subset_size", f"{n} exceeds the {len(receivers)} receivers")
        opts = LocateOptions(
            epsilon=lo.number("epsilon_km", 0.01, positive=True),
            sigma=lo.number("sigma_km", 100.0, positive=True),
            max_iters=lo.number("max_iters", 30, positive=True, integer=True),
            subset_size=n,
            mode=lo.choice("mode", ["new", "conventional"], "new"),
            tau0=lo.number("tau0_s", 0.0),
            scan_half_width=lo.number("scan_half_width_s", positive=True),
            workers=lo.number("workers", 1, positive=True, integer=True),
        )
        xi0 = lo.pair("xi0_km")
        if xi0 is not None and not model.contains(*xi0):
            raise lo._err("xi0_km", f"{xi0} lies outside the model domain")

        scans = {}
        sc = root.sub("scan", {"new", "conventional"})
        for mode in ("new", "conventional"):
            if sc.has(mode):
                scans[mode] = _parse_scan(sc.sub(mode, {"x_km", "z_km", "nx", "nz", "tau0_s"}), model)

        demo = root.sub("shift_demo", {"xi_km"})
        demo_xi = demo.pair("xi_km", (52.0, -30.3))
    except ConfigError:
        raise
    except ConfigurationError as exc:
        raise ConfigError(f"{path}: {exc}") from None

    return ExperimentConfig(model, source, receivers, cfg, opts, xi0, scans, demo_xi, loc.data, path)


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"{path}: cannot read config: {exc.strerror}") from None
    return parse_config(text, str(path))
