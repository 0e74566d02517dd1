import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.optimize import minimize

from ofps.channels import Transmission, apply_loss
from ofps.fock import TwoModePureState
from ofps.metrology import qfi
from ofps.optimize import CobylaConfig, ProbeSearchProblem, optimize_probe, random_phase_validation, transmission_sweep
from ofps.optimize.probe import (
    ProbeObjective,
    diagonal_monotonicity,
    lossy_qfi,
    project_to_constraints,
    random_feasible_start,
    restart_seeds,
    run_restart,
    uniform_grid,
    warm_start,
)
from ofps.probes import OfpsSpec, noiseless_ofps, noiseless_ofps_qfi

FAST = CobylaConfig(restarts=3, max_evals=4000)


def _slsqp_oracle(problem, starts=6):
    # exact equality constraints, different algorithm
    obj = ProbeObjective(problem, 0.0)
    photons = obj.photons
    cons = [
        {"type": "eq", "fun": lambda x: x @ x - 1},
        {"type": "eq", "fun": lambda x: (x * x) @ photons - problem.nbar},
    ]
    rng = np.random.default_rng(123)
    best = 0.0
    for k in range(starts):
        x0 = warm_start(problem) if k == 0 else random_feasible_start(problem, rng)
        r = minimize(obj, x0, method="SLSQP", constraints=cons, bounds=[(-1, 1)] * x0.size,
                     options={"maxiter": 500, "ftol": 1e-12})
        if r.success and abs(r.x @ r.x - 1) < 1e-8 and abs((r.x**2) @ photons - problem.nbar) < 1e-8:
            best = max(best, -r.fun)
    return best


def test_problem_validation():
    with pytest.raises(ValueError):
        ProbeSearchProblem(3, 6.0)
    with pytest.raises(ValueError):
        ProbeSearchProblem(3, 1.0, phase_kind="cubic")
    assert ProbeSearchProblem(3, 1.0).n_vars == 16
    assert ProbeSearchProblem(3, 1.0, coefficients_real=False).n_vars == 32


@settings(max_examples=40, deadline=None)
@given(N=st.integers(1, 6), frac=st.floats(0.02, 0.98), seed=st.integers(0, 10**6),
       real=st.booleans())
def test_random_starts_are_feasible(N, frac, seed, real):
    problem = ProbeSearchProblem(N, frac * 2 * N, coefficients_real=real)
    x = random_feasible_start(problem, np.random.default_rng(seed))
    c = ProbeObjective(problem, 0.0).constraints(x)
    assert np.all(c > -1e-10)
    assert np.all(np.abs(x) <= 1)


def test_projection_restores_constraints():
    problem = ProbeSearchProblem(4, 3.0)
    photons = problem.cutoff.total_photons().astype(float)
    x = random_feasible_start(problem, np.random.default_rng(0))
    x = x + 1e-5 * np.random.default_rng(1).normal(size=x.size)
    amps, corr = project_to_constraints(x.astype(complex), photons, 3.0)
    assert np.isclose(np.linalg.norm(amps), 1.0)
    assert abs((np.abs(amps) ** 2) @ photons - 3.0) < 1e-9
    assert corr < 1e-3


def test_restart_seeds_are_deterministic_and_distinct():
    a = restart_seeds(5, 8)
    assert a == restart_seeds(5, 8)
    assert len(set(a)) == 8


@pytest.mark.parametrize("N,nbar", [(2, 1.0), (3, 4.0)])
def test_lossless_recovery_small(N, nbar):
    problem = ProbeSearchProblem(N, nbar)
    res = optimize_probe(problem, FAST)
    assert res.qfi >= noiseless_ofps_qfi(OfpsSpec(N, nbar)) * (1 - 1e-4)


def test_lossless_recovery_from_random_starts_only():
    problem = ProbeSearchProblem(2, 1.0)
    best = max(run_restart(problem, FAST, k, s).qfi for k, s in enumerate(restart_seeds(1, 4)) if k > 0)
    assert best >= 2.0 * (1 - 1e-4)


def test_nonlinear_lossless_recovery_matches_catalog():
    problem = ProbeSearchProblem(2, 2.5, phase_kind="nonlinear")
    res = optimize_probe(problem, FAST)
    spec = OfpsSpec(2, 2.5, "nonlinear")
    catalog = lossy_qfi(noiseless_ofps(spec), Transmission.lossless(), problem.generator)
    assert res.qfi >= catalog * (1 - 1e-4)


def test_lossy_optimum_matches_independent_oracle():
    problem = ProbeSearchProblem(3, 2.0, Transmission(0.7, 0.9))
    res = optimize_probe(problem, CobylaConfig(restarts=4, max_evals=6000))
    oracle = _slsqp_oracle(problem)
    assert res.qfi >= oracle - 1e-5
    assert res.qfi <= oracle + 1e-3


def test_result_invariants():
    problem = ProbeSearchProblem(3, 2.0, Transmission(0.8, 0.8))
    res = optimize_probe(problem, FAST)
    amps = res.state.amplitudes
    photons = problem.cutoff.total_photons()
    assert abs(np.vdot(amps, amps).real - 1) <= 1e-8
    assert abs((np.abs(amps) ** 2) @ photons - 2.0) <= 1e-8
    assert np.isclose(qfi(apply_loss(res.state, problem.trans), problem.generator), res.qfi, atol=1e-9)
    noiseless = lossy_qfi(noiseless_ofps(OfpsSpec(3, 2.0)), problem.trans, problem.generator)
    assert res.qfi >= noiseless - 1e-6
    assert len(res.restart_qfis) == FAST.restarts


def test_complex_mode_runs():
    problem = ProbeSearchProblem(2, 1.0, coefficients_real=False)
    res = optimize_probe(problem, CobylaConfig(restarts=1, max_evals=3000))
    assert res.qfi >= 2.0 * (1 - 1e-4)


def test_random_phase_validation_passes_for_lossless_optimum():
    problem = ProbeSearchProblem(2, 1.0)
    res = optimize_probe(problem, CobylaConfig(restarts=1, max_evals=3000))
    best, passed = random_phase_validation(res, problem, 200)
    assert passed
    assert best <= res.qfi * (1 + 1e-6)


def test_sweep_corner_values():
    template = ProbeSearchProblem(2, 1.0)
    rows = transmission_sweep(template, [(1.0, 1.0), (0.0, 0.0), (0.6, 0.6)],
                              CobylaConfig(restarts=2, max_evals=3000))
    assert np.isclose(rows[0].qfi, 2.0, rtol=1e-4)
    assert rows[1].qfi == pytest.approx(0.0, abs=1e-9)
    assert rows[1].qfi <= rows[2].qfi <= rows[0].qfi
    assert len({r.seed for r in rows}) == 3  # one seed per grid point


def test_sweep_rejects_empty_grid():
    with pytest.raises(ValueError):
        transmission_sweep(ProbeSearchProblem(2, 1.0), [])


def test_diagonal_monotonicity_reports_drops():
    from ofps.optimize import SweepRow

    rows = [SweepRow(t, t, q, True, 0, 0, None) for t, q in [(0.5, 1.0), (0.7, 0.9), (0.9, 1.2)]]
    assert diagonal_monotonicity(rows) == [(0.5, 0.7)]
    assert len(uniform_grid(0.5, 1.0, 10)) == 100


def test_warm_start_is_noiseless_ofps():
    problem = ProbeSearchProblem(4, 2.0)
    state = TwoModePureState(problem.cutoff, warm_start(problem).astype(complex))
    assert np.allclose(state.amplitudes, noiseless_ofps(OfpsSpec(4, 2.0)).amplitudes)
