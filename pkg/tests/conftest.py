from pathlib import Path

import numpy as np
import pytest

from ofps.channels import Transmission, apply_loss
from ofps.fock import generator
from ofps.io import read_state

DATA = Path(__file__).parent / "data"

# Optimized probe for N=6, nbar=2, T1=T2=0.8 (linear), frozen from the first verified run.
NOISY_QFI = 3.9745058


@pytest.fixture(scope="session")
def noisy_probe():
    state, record = read_state(DATA / "noisy_ofps_n6_nbar2_t08.json")
    return state


@pytest.fixture(scope="session")
def noisy_rho(noisy_probe):
    return apply_loss(noisy_probe, Transmission(0.8, 0.8))


@pytest.fixture(scope="session")
def jz6():
    return generator(6, "linear")


def random_state_amps(rng, dim, real=False):
    a = rng.normal(size=dim) + (0 if real else 1j * rng.normal(size=dim))
    return a / np.linalg.norm(a)
