"""Engine-independent access to forward traces and point-receiver field histories.

Two engines share one interface:

``FDPropagator``
    finite differences on the model's bounded domain (free surface + PML).
``HomogeneousPropagator``
    closed-form Green's function of a homogeneous full plane (optionally
    with an image source for a free surface at z = 0).
"""

from __future__ import annotations

import math
from typing import Sequence

import numpy as np

from ..model import ConfigurationError, ConstantVelocity, SimConfig, SourceParams, VelocityModel
from .analytic import analytic_traces, green_response
from .fd import FDSolver
from .types import FieldHistory


class Propagator:
    dt: float
    nt: int

    @property
    def times(self) -> np.ndarray:
        return self.dt * np.arange(self.nt)

    def traces(self, source: SourceParams, positions: Sequence) -> np.ndarray:
        """Ricker-source seismograms, shape ``(len(positions), nt)``."""
        raise NotImplementedError

    def field(self, trace: np.ndarray, at, query) -> FieldHistory:
        """Field and gradient at ``query`` radiated by a point source at ``at`` with time series ``trace``."""
        raise NotImplementedError

    def check_point(self, point, what: str = "point"):
        pass


class FDPropagator(Propagator):
    def __init__(self, model: VelocityModel, cfg: SimConfig):
        self.solver = FDSolver(model, cfg)
        self.dt = self.solver.dt
        self.nt = self.solver.nt

    def traces(self, source, positions):
        out, _, _ = self.solver.run(source.xi, source.wavelet(self.times), positions)
        return out

    def field(self, trace, at, query):
        _, hist, _ = self.solver.run(at, trace, (), [query])
        vals, grad = hist[0]
        return FieldHistory(self.dt, vals, grad)

    def check_point(self, point, what="point"):
        self.solver.check_inside(point, what)


class HomogeneousPropagator(Propagator):
    def __init__(self, c0: float, dt: float, nt: int, image: bool = False):
        if c0 <= 0 or dt <= 0 or nt < 2:
            raise ConfigurationError("need c0 > 0, dt > 0 and nt >= 2")
        self.c0, self.dt, self.nt, self.image = float(c0), float(dt), int(nt), image

    def traces(self, source, positions):
        out = analytic_traces(self.c0, source, positions, self.times)
        if self.image:
            out += analytic_traces(self.c0, source.moved(xi=(source.xi[0], -source.xi[1])), positions, self.times)
        return out

    def field(self, trace, at, query):
        trace = np.asarray(trace, dtype=float)
        if trace.size != self.nt:
            raise ConfigurationError(f"source trace has {trace.size} samples, engine expects {self.nt}")
        vals = np.zeros(self.nt)
        grad = np.zeros((self.nt, 2))
        sources = [at, (at[0], -at[1])] if self.image else [at]
        for p in sources:
            dx, dz = query[0] - p[0], query[1] - p[1]
            rho = math.hypot(dx, dz)
            v, d = green_response(self.c0, trace, self.dt, rho)
            vals += v
            grad[:, 0] += d * dx / rho
            grad[:, 1] += d * dz / rho
        return FieldHistory(self.dt, vals, grad)


def select_engine(model: VelocityModel, cfg: SimConfig) -> str:
    if cfg.engine != "auto":
        return cfg.engine
    return "analytic" if isinstance(model, ConstantVelocity) else "fd"


def make_propagator(model: VelocityModel, cfg: SimConfig) -> Propagator:
    """Engine for ``model``; ``engine='auto'`` uses the closed form for constant speed."""
    engine = select_engine(model, cfg)
    if engine == "fd":
        return FDPropagator(model, cfg)
    if not isinstance(model, ConstantVelocity):
        raise ConfigurationError("the analytic engine needs a constant velocity model")
    # no spatial grid here, so dt is free; default to the FD step for comparability
    dt = cfg.dt if cfg.dt is not None else cfg.cfl * cfg.h / model.c0
    return HomogeneousPropagator(model.c0, dt, cfg.n_samples(dt))
