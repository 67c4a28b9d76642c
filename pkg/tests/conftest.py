import numpy as np
import pytest

from machflow.harness import ExperimentConfig, run_converge
from machflow.lattice import FrequencyLattice, SpectralField
from machflow.thermo import derive_constants, ideal_gas


@pytest.fixture(scope="session")
def lat2():
    return FrequencyLattice(2, 8)


@pytest.fixture(scope="session")
def consts2(lat2):
    return derive_constants(ideal_gas(c_v=1.0), 1.0, 1.0, lat2.volume, 2)


@pytest.fixture(scope="session")
def lat3():
    return FrequencyLattice(3, 4)


@pytest.fixture(scope="session")
def consts3(lat3):
    return derive_constants(ideal_gas(c_v=1.0), 1.0, 1.0, lat3.volume, 3)


def random_real_field(lattice, rng, decay=1.0):
    shape = (lattice.dim + 2,) + lattice.shape
    raw = rng.standard_normal(shape) + 1j * rng.standard_normal(shape)
    raw *= (1.0 + lattice.k_sq) ** (-decay)
    flipped = raw.copy()
    for ax in range(1, raw.ndim):
        flipped = np.flip(np.roll(flipped, -1, axis=ax), axis=ax)
    return SpectralField(lattice, 0.5 * (raw + np.conj(flipped)), True)


@pytest.fixture(scope="session")
def default_sweep():
    """The desk-scale eps-sweep shared by the conservation, filtering, and
    convergence acceptance checks.  One run, several criteria."""
    import time

    t0 = time.time()
    table = run_converge(ExperimentConfig())
    table.wall_seconds = time.time() - t0
    return table
