"""Forward acoustic propagation."""

from __future__ import annotations

from typing import Sequence

from ..model import ReceiverArray, SimConfig, SourceParams, VelocityModel
from .analytic import SingularPointError, analytic_traces, analytic_u, half_space_traces
from .fd import FDSolver
from .propagator import FDPropagator, HomogeneousPropagator, Propagator, make_propagator, select_engine
from .types import FieldHistory, Seismogram, SeismogramSet


def solve_forward(
    model: VelocityModel,
    source: SourceParams,
    cfg: SimConfig,
    receivers: ReceiverArray,
    propagator: Propagator = None,
) -> SeismogramSet:
    """Synthetic seismograms at every receiver for a Ricker point source."""
    source.warn_if_incompatible()
    prop = propagator or make_propagator(model, cfg)
    for p in receivers.positions:
        prop.check_point(p, "receiver")
    prop.check_point(source.xi, "source")
    data = prop.traces(source, receivers.positions)
    return SeismogramSet.from_matrix(prop.dt, data, receivers.indices)


def record_field_at(
    model: VelocityModel,
    trace: Seismogram,
    position: Sequence[float],
    cfg: SimConfig,
    query: Sequence[float],
    propagator: Propagator = None,
) -> FieldHistory:
    """Field history at ``query`` for an arbitrary source time series injected at ``position``."""
    prop = propagator or make_propagator(model, cfg)
    prop.check_point(position, "source")
    prop.check_point(query, "query point")
    return prop.field(trace.samples, tuple(position), tuple(query))


__all__ = [
    "FDPropagator",
    "FDSolver",
    "FieldHistory",
    "HomogeneousPropagator",
    "Propagator",
    "Seismogram",
    "SeismogramSet",
    "SingularPointError",
    "analytic_traces",
    "analytic_u",
    "half_space_traces",
    "make_propagator",
    "record_field_at",
    "select_engine",
    "solve_forward",
]
