import os

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile(
    "default", deadline=None, max_examples=30,
    suppress_health_check=[HealthCheck.too_slow])
settings.register_profile("ci", deadline=None, max_examples=100)
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))


@pytest.fixture(scope="session")
def reference_spec():
    from jjlqubit.ladder import LadderSpec
    return LadderSpec(N_plaquettes=3, seam="mobius_impurity", E_C=0.1, n_max=2, n_tot=0)


@pytest.fixture(scope="session")
def reference_ladder(reference_spec):
    from jjlqubit.ladder import LadderHamiltonian
    return LadderHamiltonian(reference_spec)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
