import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ofps.channels import (
    Transmission,
    apply_loss,
    apply_loss_to_operator,
    loss_kraus_set,
    loss_phase_commutation_check,
    loss_via_trace_out,
)
from ofps.fock import FockCutoff, TwoModePureState, generator

from conftest import random_state_amps


def test_transmission_validation():
    with pytest.raises(ValueError):
        Transmission(1.2, 0.5)
    with pytest.raises(ValueError):
        Transmission(0.5, -0.1)
    t = Transmission.symmetric(0.5)
    assert np.isclose(np.cos(t.eta1 / 2) ** 2, 0.5)


@pytest.mark.parametrize("T", [0.0, 0.3, 0.8, 1.0])
def test_kraus_completeness(T):
    K = loss_kraus_set(4, T)
    total = np.einsum("lji,ljk->ik", K, K)
    assert np.allclose(total, np.eye(5), atol=1e-13)


def test_kraus_rejects_bad_transmission():
    with pytest.raises(ValueError):
        loss_kraus_set(3, 1.5)


def test_single_photon_loss():
    c = FockCutoff(1)
    T = 0.7
    rho = apply_loss(TwoModePureState.fock(c, 1, 0), Transmission(T, 1.0)).matrix
    expected = np.zeros((4, 4))
    expected[c.index(1, 0), c.index(1, 0)] = T
    expected[0, 0] = 1 - T
    assert np.allclose(rho, expected)


def test_full_loss_gives_vacuum():
    rng = np.random.default_rng(3)
    s = TwoModePureState(FockCutoff(3), random_state_amps(rng, 16))
    rho = apply_loss(s, Transmission(0.0, 0.0)).matrix
    assert np.isclose(rho[0, 0].real, 1.0)
    assert np.isclose(np.abs(rho).sum(), 1.0)


def test_lossless_is_identity():
    rng = np.random.default_rng(4)
    s = TwoModePureState(FockCutoff(3), random_state_amps(rng, 16))
    assert np.allclose(apply_loss(s, Transmission.lossless()).matrix, s.projector())


@settings(max_examples=30, deadline=None)
@given(n=st.integers(1, 3), t1=st.floats(0, 1), t2=st.floats(0, 1), seed=st.integers(0, 10**6))
def test_kraus_matches_trace_out(n, t1, t2, seed):
    rng = np.random.default_rng(seed)
    s = TwoModePureState(FockCutoff(n), random_state_amps(rng, (n + 1) ** 2))
    trans = Transmission(t1, t2)
    assert np.max(np.abs(apply_loss(s, trans).matrix - loss_via_trace_out(s, trans).matrix)) < 1e-10


def test_trace_out_size_guard():
    s = TwoModePureState.fock(9, 0, 0)
    with pytest.raises(MemoryError):
        loss_via_trace_out(s, Transmission(0.5, 0.5))


def test_operator_map_agrees_with_state_map():
    rng = np.random.default_rng(5)
    s = TwoModePureState(FockCutoff(3), random_state_amps(rng, 16))
    trans = Transmission(0.6, 0.9)
    assert np.allclose(apply_loss_to_operator(s.projector(), 3, trans), apply_loss(s, trans).matrix)


def test_loss_phase_commutation_linear():
    rng = np.random.default_rng(6)
    s = TwoModePureState(FockCutoff(4), random_state_amps(rng, 25))
    before, after = loss_phase_commutation_check(s, Transmission(0.7, 0.9), generator(4, "linear"), 0.4)
    assert np.isclose(before, after, rtol=1e-8)


def test_loss_output_is_valid_density_matrix():
    rng = np.random.default_rng(7)
    s = TwoModePureState(FockCutoff(4), random_state_amps(rng, 25))
    rho = apply_loss(s, Transmission(0.3, 0.55)).matrix
    assert np.isclose(np.trace(rho).real, 1.0)
    assert np.linalg.eigvalsh(rho).min() > -1e-12
