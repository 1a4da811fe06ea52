"""Shared fixtures: reference datasets are integrated once per session."""

import numpy as np
import pytest

from core_types import AnalyticCurve, Dataset, ForcingSpec, ModelFamily
from harness import make_dataset
from odesim import integrate
from systems import make_system


def linear_dataset(damping: float = 0.0, stiffness: float = 1.0) -> Dataset:
    """x'' + damping x' + stiffness x = 0.5 cos(0.5 t) from (1, 0)."""
    cc_a = AnalyticCurve(lambda z: np.full_like(z, damping), 'x')
    cc_b = AnalyticCurve(lambda z: stiffness * z, 'x')
    traj = integrate(ModelFamily.POSITION_FRICTION, cc_a, cc_b, ForcingSpec(0.5, 0.5), 1.0, 0.0)
    return traj.to_dataset({'A': 0.5, 'omega': 0.5, 'x0': 1.0, 'v0': 0.0})


@pytest.fixture(scope='session')
def vdp_system():
    return make_system('van_der_pol')


@pytest.fixture(scope='session')
def vdp_dataset(vdp_system):
    return make_dataset(vdp_system)


@pytest.fixture(scope='session')
def undamped_dataset():
    return linear_dataset()


@pytest.fixture(scope='session')
def damped_dataset():
    return linear_dataset(damping=0.2)


@pytest.fixture
def small_dataset():
    """Consistent-looking 20-sample dataset for gradient checks."""
    t = np.linspace(0.0, 2.0, 20)
    rng = np.random.default_rng(3)
    return Dataset(t=t, x=np.sin(t), xdot=np.cos(t), xddot=-np.sin(t),
                   fext=rng.normal(size=t.size))
