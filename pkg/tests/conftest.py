import warnings
from dataclasses import dataclass

import numpy as np
import pytest

from wavelocate.model import ConstantVelocity, ReceiverArray, SimConfig, SourceParams, default_receivers, default_record_length
from wavelocate.wave import HomogeneousPropagator, SeismogramSet, make_propagator, solve_forward


@dataclass
class Homogeneous:
    """Constant 6.5 km/s medium, 20 surface stations, event at (50, -30) with tau = 10 s."""

    model: ConstantVelocity
    receivers: ReceiverArray
    truth: SourceParams
    cfg: SimConfig
    prop: HomogeneousPropagator
    observed: SeismogramSet

    def synth(self, xi=None, tau=None) -> SeismogramSet:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            src = self.truth.moved(xi=xi, tau=tau)
        return SeismogramSet.from_matrix(self.prop.dt, self.prop.traces(src, self.receivers.positions), self.receivers.indices)


def make_homogeneous(dt: float) -> Homogeneous:
    model = ConstantVelocity()
    rec = default_receivers()
    truth = SourceParams((50.0, -30.0), 10.0)
    cfg = SimConfig(T=default_record_length(model, truth, rec), dt=dt)
    prop = make_propagator(model, cfg)
    return Homogeneous(model, rec, truth, cfg, prop, solve_forward(model, truth, cfg, rec, prop))


@pytest.fixture(scope="session")
def homog() -> Homogeneous:
    return make_homogeneous(0.01)


@pytest.fixture(scope="session")
def homog_fine() -> Homogeneous:
    return make_homogeneous(0.005)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)
