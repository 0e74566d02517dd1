import warnings

import numpy as np
import pytest

from ofps.bayes import (
    BayesState,
    GridTooCoarseWarning,
    Instance,
    LikelihoodTable,
    PhaseExpansion,
    PhaseGrid,
    TwoStepSchedule,
    average_cfi_of_estimated_sldm,
    bayes_update,
    best_pc_phase,
    mean_squared_error,
    povm_cfi,
    refine_grid,
    run_adaptive_pc,
    run_two_step,
    sample_outcome,
    simulate,
)
from ofps.channels import Transmission, apply_loss
from ofps.fock import DensityMatrix, FockCutoff, TwoModePureState, generator
from ofps.metrology import Povm, outcome_probabilities, parity_povm, pc_povm, qfi, sldm_povm
from ofps.probes import OfpsSpec, noiseless_ofps

from conftest import random_state_amps


@pytest.fixture(scope="module")
def instance(noisy_rho, jz6):
    return Instance(noisy_rho, jz6)


def test_grid_validation_and_prior():
    with pytest.raises(ValueError):
        PhaseGrid(1.0, 0.5)
    with pytest.raises(ValueError):
        PhaseGrid(0, 1, 1)
    g = PhaseGrid()
    assert g.points == 1000
    assert np.isclose(g.uniform_prior().sum(), 1.0, atol=1e-12)


def test_schedule_must_add_up():
    with pytest.raises(ValueError):
        TwoStepSchedule(50, (250, 100), 500)
    s = TwoStepSchedule()
    assert s.pre_iterations + sum(s.sldm_stage_iterations) == s.total_iterations


def test_expansion_matches_born_rule():
    rng = np.random.default_rng(0)
    s = TwoModePureState(FockCutoff(3), random_state_amps(rng, 16))
    rho = apply_loss(s, Transmission(0.7, 0.9))
    for kind in ("linear", "nonlinear"):
        g = generator(3, kind)
        inst = Instance(rho, g)
        for povm in (parity_povm(3), pc_povm(3), sldm_povm(rho, g, 0.4)):
            pe = PhaseExpansion(inst, povm)
            for phi in (0.0, 0.37, 2.1):
                assert np.allclose(pe.probabilities(phi)[:, 0], outcome_probabilities(rho, g, phi, povm), atol=1e-13)
            assert np.isclose(pe.cfi_curve([0.37])[0], povm_cfi(inst, povm, 0.37), rtol=1e-5)


def test_expansion_rejects_dense_generator():
    from ofps.fock import build_jx

    rho = DensityMatrix.from_pure(TwoModePureState.fock(2, 1, 0))
    with pytest.raises(ValueError):
        PhaseExpansion(Instance(rho, build_jx(2)), pc_povm(2))


def test_deterministic_distribution_always_sampled():
    rho = DensityMatrix.from_pure(TwoModePureState.fock(2, 0, 0))
    rng = np.random.default_rng(0)
    draws = {sample_outcome(rho, generator(2, "linear"), 0.3, parity_povm(2), rng) for _ in range(200)}
    assert draws == {0}


def test_sample_frequencies_within_binomial_bounds(noisy_rho, jz6):
    povm = pc_povm(6)
    p = outcome_probabilities(noisy_rho, jz6, 0.2, povm)
    inst = Instance(noisy_rho, jz6)
    rng = np.random.default_rng(11)
    # draw through the same sampler the simulation uses
    from ofps.bayes import _draw

    n = 100_000
    counts = np.bincount([_draw(p, rng) for _ in range(n)], minlength=p.size)
    sigma = np.sqrt(n * p * (1 - p))
    assert np.all(np.abs(counts - n * p) <= 3 * sigma + 1)
    assert inst.rho.shape == (49, 49)


def test_sampling_reproducibility(noisy_rho, jz6):
    povm = pc_povm(6)
    seq = lambda seed: [sample_outcome(noisy_rho, jz6, 0.2, povm, r) for r in [np.random.default_rng(seed)] for _ in range(50)]
    assert seq(1) == seq(1)
    assert seq(1) != seq(2)


def test_flat_likelihood_leaves_posterior():
    st = BayesState.uniform(PhaseGrid(0, 1, 50))
    before = st.posterior.copy()
    bayes_update(st, np.full(50, 0.3))
    assert np.allclose(st.posterior, before)


def test_delta_likelihood_collapses_posterior():
    st = BayesState.uniform(PhaseGrid(0, 1, 50))
    like = np.zeros(50)
    like[17] = 0.4
    bayes_update(st, like)
    assert st.posterior[17] == 1.0
    assert st.posterior.sum() == 1.0


def test_zero_likelihood_raises_with_diagnostics():
    st = BayesState.uniform(PhaseGrid(0, 1, 50))
    with pytest.raises(FloatingPointError, match="50 points"):
        bayes_update(st, np.zeros(50))


def test_variance_shrinks_under_peaked_likelihood():
    grid = PhaseGrid(0, 1, 400)
    st = BayesState.uniform(grid)
    like = np.exp(-((grid.values - 0.3) ** 2) / 0.02)
    variances = []
    for _ in range(100):
        bayes_update(st, like)
        variances.append(st.variance)
        assert abs(st.posterior.sum() - 1) < 1e-12
        assert st.posterior.min() >= 0
    assert np.all(np.diff(variances) < 0)


def test_refine_grid_keeps_mass_and_warns(instance):
    grid = PhaseGrid(0, 1, 100)
    st = BayesState.uniform(grid)
    like = np.zeros(100)
    like[40:42] = 1.0
    bayes_update(st, like)
    fine = refine_grid(st)
    assert fine.grid.spacing == pytest.approx(grid.spacing / 4)
    assert np.isclose(fine.posterior.sum(), 1.0)
    assert fine.grid.lower <= grid.values[40] and fine.grid.upper >= grid.values[41]

    coarse = PhaseGrid(0.0, np.pi / 6, 4)
    with pytest.warns(GridTooCoarseWarning):
        t = run_two_step(instance, 0.2, TwoStepSchedule(200, (5,), 205, 1), np.random.default_rng(0), coarse)
    assert len(t.records) == 205


def test_likelihood_cache_is_bit_identical(instance):
    sched = TwoStepSchedule(20, (30, 20), 70, 1)
    a = run_two_step(instance, 0.2, sched, np.random.default_rng(5), cache=True)
    b = run_two_step(instance, 0.2, sched, np.random.default_rng(5), cache=False)
    assert a.records == b.records
    table = LikelihoodTable(PhaseExpansion(instance, pc_povm(6)), PhaseGrid())
    assert np.shares_memory(table.row(3), table.row(3))


def test_two_step_trajectory_layout(instance):
    sched = TwoStepSchedule(10, (15, 5), 30, 1)
    t = run_two_step(instance, 0.2, sched, np.random.default_rng(0))
    stages = [r[1] for r in t.records]
    assert stages == ["pre"] * 10 + ["sldm1"] * 15 + ["sldm2"] * 5
    assert [r[0] for r in t.records] == list(range(1, 31))
    assert len(t.stage_estimates) == 3


def test_phi_true_outside_grid_rejected(instance):
    with pytest.raises(ValueError):
        run_two_step(instance, 1.0, TwoStepSchedule(), np.random.default_rng(0))


def test_adaptive_pc_zero_iterations(instance):
    t = run_adaptive_pc(instance, 0.2, 0, np.random.default_rng(0))
    assert t.records == []


def test_best_pc_phase_bounds_cfi(instance, noisy_rho, jz6):
    phi, value = best_pc_phase(instance)
    assert 0 <= phi < 2 * np.pi
    assert value < qfi(noisy_rho, jz6)
    curve = PhaseExpansion(instance, pc_povm(6)).cfi_curve(np.linspace(0, 2 * np.pi, 500))
    assert value >= curve.max() - 1e-3


def test_lossless_adaptive_pc_reaches_qfi():
    spec = OfpsSpec(4, 2)
    rho = DensityMatrix.from_pure(noiseless_ofps(spec))
    g = generator(4, "linear")
    _, value = best_pc_phase(Instance(rho, g))
    assert np.isclose(value, qfi(rho, g), rtol=1e-3)


def test_sldm_curve_peaks_at_true_phase(instance, noisy_rho, jz6):
    phis = np.linspace(0.1, 0.3, 201)
    curve = PhaseExpansion(instance, sldm_povm(noisy_rho, jz6, 0.2)).cfi_curve(phis)
    assert np.isclose(curve[100], qfi(noisy_rho, jz6), rtol=1e-6)
    assert curve.max() <= qfi(noisy_rho, jz6) * (1 + 1e-9)


def test_average_over_one_simulation_is_its_curve(instance, noisy_rho, jz6):
    t = run_two_step(instance, 0.2, TwoStepSchedule(20, (20, 10), 50, 1), np.random.default_rng(3))
    phis = np.linspace(0, 0.5, 11)
    avg = average_cfi_of_estimated_sldm(instance, [t], phis)
    direct = PhaseExpansion(instance, sldm_povm(noisy_rho, jz6, t.stage_estimates[1])).cfi_curve(phis)
    assert np.allclose(avg[1], direct)


def test_simulation_reproducible_and_worker_independent(instance):
    sched = TwoStepSchedule(10, (10, 10), 30, 4)
    a = simulate(instance, 0.2, sched, seed=9)
    b = simulate(instance, 0.2, sched, seed=9, workers=2)
    assert [t.records for t in a] == [t.records for t in b]
    c = simulate(instance, 0.2, sched, seed=10)
    assert [t.records for t in a] != [t.records for t in c]
    with pytest.raises(ValueError):
        simulate(instance, 0.2, sched, seed=9, strategy="greedy")


def test_fixed_povm_mse_respects_cramer_rao(instance, noisy_rho, jz6):
    # 2000 trajectories of a single fixed SLDM: MSE >= (1 - 0.15) / (mu I) for mu >= 200
    sched = TwoStepSchedule(0, (300,), 300, 2000)
    trajs = [
        run_two_step(instance, 0.2, sched, r, initial_estimate=0.2)
        for r in (np.random.default_rng(s) for s in np.random.SeedSequence(4).spawn(sched.simulations))
    ]
    mse = mean_squared_error(trajs)
    info = PhaseExpansion(instance, sldm_povm(noisy_rho, jz6, 0.2)).cfi_curve([0.2])[0]
    mu = np.arange(1, 301)
    assert np.all(mse[199:] >= (1 - 0.15) / (mu[199:] * info))


def test_lossless_sldm_saturates_cramer_rao():
    rho = DensityMatrix.from_pure(noiseless_ofps(OfpsSpec(6, 2)))
    inst = Instance(rho, generator(6, "linear"))
    sched = TwoStepSchedule(0, (500,), 500, 2000)
    trajs = [
        run_two_step(inst, 0.2, sched, r, initial_estimate=0.2)
        for r in (np.random.default_rng(s) for s in np.random.SeedSequence(8).spawn(sched.simulations))
    ]
    ratio = mean_squared_error(trajs)[-1] * 500 * qfi(rho, inst.generator)
    assert abs(ratio - 1) < 0.10
