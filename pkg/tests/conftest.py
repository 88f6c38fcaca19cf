"""Shared fixtures: physics constants and small generated cohorts."""

import pytest

from epc_pinn.physics import PhysicsConstants
from epc_pinn.synth import GeneratorConfig, generate_cohort


@pytest.fixture
def constants():
    return PhysicsConstants()


@pytest.fixture(scope="session")
def clean_cohort_dir(tmp_path_factory):
    """40 noise-free buildings; measured consumption equals the model
    output exactly, so closure and training sanity checks are sharp."""
    out = tmp_path_factory.mktemp("clean_cohort")
    generate_cohort(
        GeneratorConfig(n_buildings=40, seed=101, consumption_noise=0.0, audit_noise=0.0),
        out,
    )
    return out
