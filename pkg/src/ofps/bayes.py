"""Monte-Carlo simulation of Bayesian phase estimation.

Strategies: particle-counting pre-estimation followed by staged SLD
measurements (the two-step strategy), and an adaptive particle-counting
baseline with a control phase. Likelihoods over the phase grid come from an
exact trigonometric expansion of the Born probabilities in ``phi``.
"""
from __future__ import annotations

import logging
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from functools import cached_property, lru_cache

import numpy as np

from .fock import Operator, beam_splitter_rotation
from .metrology import Povm, cfi, outcome_probabilities, pc_povm, sldm_povm

log = logging.getLogger(__name__)

MIN_SUPPORT_POINTS = 3
REFINE_FACTOR = 4
SUPPORT_MASS = 1e-3  # a grid point counts as carrying posterior mass above this share
STRATEGIES = ("two-step", "adaptive-pc")


class GridTooCoarseWarning(RuntimeWarning):
    """The posterior collapsed onto fewer than three grid points."""


@dataclass(frozen=True)
class PhaseGrid:
    lower: float = 0.0
    upper: float = np.pi / 6
    points: int = 1000

    def __post_init__(self):
        if not self.lower < self.upper:
            raise ValueError("grid needs lower < upper")
        if self.points < 2:
            raise ValueError("grid needs at least 2 points")

    @cached_property
    def values(self) -> np.ndarray:
        v = np.linspace(self.lower, self.upper, self.points)
        v.setflags(write=False)
        return v

    @property
    def spacing(self) -> float:
        return (self.upper - self.lower) / (self.points - 1)

    def uniform_prior(self) -> np.ndarray:
        return np.full(self.points, 1.0 / self.points)


@dataclass
class BayesState:
    grid: PhaseGrid
    posterior: np.ndarray
    iteration: int = 0
    history: list = field(default_factory=list)

    @classmethod
    def uniform(cls, grid: PhaseGrid) -> "BayesState":
        return cls(grid, grid.uniform_prior())

    @property
    def estimate(self) -> float:
        """Posterior mean."""
        return float(self.posterior @ self.grid.values)

    @property
    def variance(self) -> float:
        return _moments(self.posterior, self.grid.values)[1]


def _moments(posterior: np.ndarray, v: np.ndarray) -> tuple[float, float]:
    m = float(posterior @ v)
    return m, float(posterior @ (v - m) ** 2)


@dataclass(frozen=True)
class TwoStepSchedule:
    pre_iterations: int = 50
    sldm_stage_iterations: tuple = (250, 200)
    total_iterations: int = 500
    simulations: int = 2000

    def __post_init__(self):
        stages = tuple(int(s) for s in self.sldm_stage_iterations)
        object.__setattr__(self, "sldm_stage_iterations", stages)
        if self.pre_iterations < 0 or any(s < 0 for s in stages):
            raise ValueError("iteration counts must be nonnegative")
        if self.pre_iterations + sum(stages) != self.total_iterations:
            raise ValueError(
                f"stage iterations {self.pre_iterations} + {list(stages)} do not add up to "
                f"total_iterations={self.total_iterations}"
            )
        if self.simulations < 1:
            raise ValueError("simulations must be >= 1")


@dataclass(frozen=True)
class Instance:
    """Lossy probe and phase generator shared by all trajectories."""

    rho: np.ndarray
    generator: Operator

    def __post_init__(self):
        object.__setattr__(self, "rho", np.asarray(getattr(self.rho, "matrix", self.rho), dtype=complex))


class PhaseExpansion:
    """Outcome probabilities as trigonometric polynomials in the phase.

    ``p_k(phi) = Re sum_w c[k, w] exp(i w phi)`` exactly, for a diagonal
    generator; frequencies are the differences of generator eigenvalues.
    """

    def __init__(self, instance: Instance, povm: Povm):
        gen = instance.generator
        if not gen.is_diagonal:
            raise ValueError("trigonometric expansion needs a generator diagonal in the Fock basis")
        bs = beam_splitter_rotation(gen.cutoff).matrix
        # M_k = V^dag E_k V; p_k = sum_ab M_k[b, a] rho[a, b] exp(i phi (g_a - g_b))
        if povm.vectors is not None:
            w = (bs.conj().T @ povm.vectors).T  # M_k = w_k w_k^dag
            weights = (w.conj()[:, :, None] * w[:, None, :]) * instance.rho
        else:
            m = bs.conj().T @ povm.elements @ bs
            weights = m.transpose(0, 2, 1) * instance.rho
        weights = weights.reshape(len(povm), -1)
        self.omegas, indicator = _frequency_map(gen.diagonal().real.tobytes())
        self.coeffs = weights @ indicator
        self.povm = povm

    def probabilities(self, phis) -> np.ndarray:
        """Array of shape ``(K, len(phis))``, clipped at zero."""
        phis = np.atleast_1d(np.asarray(phis, dtype=float))
        waves = np.exp(1j * np.outer(self.omegas, phis))
        return np.clip((self.coeffs @ waves).real, 0.0, None)

    def outcome_likelihood(self, k: int, phis) -> np.ndarray:
        waves = np.exp(1j * np.outer(self.omegas, np.atleast_1d(phis)))
        return np.clip((self.coeffs[k] @ waves).real, 0.0, None)

    def cfi_curve(self, phis) -> np.ndarray:
        """Exact-slope CFI at each phase; outcomes with ``p < 1e-12`` are dropped."""
        phis = np.atleast_1d(np.asarray(phis, dtype=float))
        waves = np.exp(1j * np.outer(self.omegas, phis))
        p = (self.coeffs @ waves).real
        dp = (self.coeffs @ (1j * self.omegas[:, None] * waves)).real
        keep = p >= 1e-12
        return np.sum(np.where(keep, dp**2 / np.where(keep, p, 1.0), 0.0), axis=0)


@lru_cache(maxsize=16)
def _frequency_map(g_bytes: bytes) -> tuple[np.ndarray, np.ndarray]:
    """Distinct eigenvalue gaps and the 0/1 matrix sending each (a, b) pair to its gap."""
    g = np.frombuffer(g_bytes)
    key = np.round(2 * (g[:, None] - g[None, :])).astype(int).ravel()
    keys, inverse = np.unique(key, return_inverse=True)
    indicator = np.zeros((key.size, keys.size))
    indicator[np.arange(key.size), inverse] = 1.0
    indicator.setflags(write=False)
    return keys / 2.0, indicator


def sample_outcome(rho, gen: Operator, phi_true: float, povm: Povm, rng: np.random.Generator) -> int:
    """Born-rule draw; returns the outcome index (its label is ``povm.labels[k]``)."""
    return _draw(outcome_probabilities(rho, gen, phi_true, povm), rng)


def _draw(p: np.ndarray, rng: np.random.Generator) -> int:
    cdf = np.cumsum(p)
    k = int(np.searchsorted(cdf, rng.random() * cdf[-1], side="right"))
    return min(k, p.size - 1)


def bayes_update(state: BayesState, likelihood: np.ndarray) -> BayesState:
    """Multiply by the likelihood of the observed outcome and renormalize, in place."""
    post = state.posterior * likelihood
    total = post.sum()
    if not total > 0:
        v = state.grid.values
        raise FloatingPointError(
            f"likelihood vanishes on the posterior support at iteration {state.iteration + 1}; "
            f"grid [{v[0]:.6g}, {v[-1]:.6g}] with {v.size} points, "
            f"posterior mass on {int(np.sum(state.posterior > SUPPORT_MASS))} points"
        )
    state.posterior = post / total
    state.iteration += 1
    state.history.append((state.iteration, *_moments(state.posterior, state.grid.values)))
    return state


def refine_grid(state: BayesState, factor: int = REFINE_FACTOR) -> BayesState:
    """Resample the posterior on a grid ``factor`` times finer around its mass."""
    grid = state.grid
    v = grid.values
    idx = np.flatnonzero(state.posterior > SUPPORT_MASS)
    if idx.size == 0:
        idx = np.array([int(np.argmax(state.posterior))])
    lo = max(grid.lower, v[max(idx[0] - 2, 0)])
    hi = min(grid.upper, v[min(idx[-1] + 2, v.size - 1)])
    points = int(round((hi - lo) / grid.spacing)) * factor + 1
    new = PhaseGrid(lo, hi, max(points, 2))
    post = np.clip(np.interp(new.values, v, state.posterior), 0.0, None)
    return BayesState(new, post / post.sum(), state.iteration, list(state.history))


class LikelihoodTable:
    """Per-outcome likelihoods over one grid, computed lazily and optionally cached."""

    def __init__(self, expansion: PhaseExpansion, grid: PhaseGrid, cache: bool = True):
        self.expansion = expansion
        self.grid = grid
        self.cache = cache
        self._table = None

    def row(self, k: int) -> np.ndarray:
        if not self.cache:
            return self.expansion.probabilities(self.grid.values)[k]
        if self._table is None:
            self._table = self.expansion.probabilities(self.grid.values)
        return self._table[k]


@dataclass
class Trajectory:
    """Per-iteration records: (iteration, stage, estimate, variance, squared error)."""

    records: list = field(default_factory=list)
    stage_estimates: list = field(default_factory=list)

    def squared_errors(self) -> np.ndarray:
        return np.array([r[4] for r in self.records])

    def estimates(self) -> np.ndarray:
        return np.array([r[2] for r in self.records])


def _run_stage(state, table, probs, iterations, stage, phi_true, rng, traj):
    for _ in range(iterations):
        k = _draw(probs, rng)
        _, est, var = bayes_update(state, table.row(k)).history[-1]
        traj.records.append((state.iteration, stage, est, var, (est - phi_true) ** 2))
    return state


def run_two_step(
    instance: Instance,
    phi_true: float,
    schedule: TwoStepSchedule,
    rng: np.random.Generator,
    grid: PhaseGrid | None = None,
    cache: bool = True,
    initial_estimate: float | None = None,
) -> Trajectory:
    """Particle-counting pre-estimation, then one SLDM stage per schedule entry.

    Each SLDM is built at the current estimate. With ``pre_iterations = 0`` the
    first SLDM is built at ``initial_estimate`` (default: the prior mean).
    """
    grid = grid or PhaseGrid()
    if not grid.lower <= phi_true <= grid.upper:
        raise ValueError(f"phi_true={phi_true} lies outside the grid [{grid.lower}, {grid.upper}]")
    state = BayesState.uniform(grid)
    traj = Trajectory()
    gen = instance.generator

    if schedule.pre_iterations:
        pc = PhaseExpansion(instance, pc_povm(gen.cutoff))
        table = LikelihoodTable(pc, grid, cache)
        probs = pc.probabilities(phi_true)[:, 0]
        _run_stage(state, table, probs, schedule.pre_iterations, "pre", phi_true, rng, traj)
        estimate = state.estimate
    else:
        estimate = state.estimate if initial_estimate is None else float(initial_estimate)

    for s, iterations in enumerate(schedule.sldm_stage_iterations, start=1):
        if state.iteration and np.sum(state.posterior > SUPPORT_MASS) < MIN_SUPPORT_POINTS:
            warnings.warn(
                f"posterior mass on fewer than {MIN_SUPPORT_POINTS} grid points before stage {s}; "
                f"refining the grid x{REFINE_FACTOR}",
                GridTooCoarseWarning,
                stacklevel=2,
            )
            state = refine_grid(state)
        traj.stage_estimates.append(estimate)
        povm = sldm_povm(instance.rho, gen, estimate)
        expansion = PhaseExpansion(instance, povm)
        table = LikelihoodTable(expansion, state.grid, cache)
        probs = expansion.probabilities(phi_true)[:, 0]
        _run_stage(state, table, probs, iterations, f"sldm{s}", phi_true, rng, traj)
        estimate = state.estimate
    traj.stage_estimates.append(estimate)
    return traj


def best_pc_phase(instance: Instance, points: int = 4096) -> tuple[float, float]:
    """Dense scan of the particle-counting CFI over ``[0, 2 pi)``: (argmax, max)."""
    pc = PhaseExpansion(instance, pc_povm(instance.generator.cutoff))
    phis = np.linspace(0.0, 2 * np.pi, points, endpoint=False)
    curve = pc.cfi_curve(phis)
    k = int(np.argmax(curve))
    return float(phis[k]), float(curve[k])


def run_adaptive_pc(
    instance: Instance,
    phi_true: float,
    iterations: int,
    rng: np.random.Generator,
    grid: PhaseGrid | None = None,
    best_phase: float | None = None,
) -> Trajectory:
    """Particle counting with a control phase that keeps the estimate at the best CFI point."""
    grid = grid or PhaseGrid()
    if not grid.lower <= phi_true <= grid.upper:
        raise ValueError(f"phi_true={phi_true} lies outside the grid [{grid.lower}, {grid.upper}]")
    pc = PhaseExpansion(instance, pc_povm(instance.generator.cutoff))
    if best_phase is None:
        best_phase, _ = best_pc_phase(instance)
    state = BayesState.uniform(grid)
    traj = Trajectory()
    waves = np.exp(1j * np.outer(pc.omegas, grid.values))
    for _ in range(iterations):
        control = best_phase - state.estimate
        shift = np.exp(1j * pc.omegas * control)
        k = _draw(pc.probabilities(phi_true + control)[:, 0], rng)
        like = np.clip(((pc.coeffs[k] * shift) @ waves).real, 0.0, None)
        _, est, var = bayes_update(state, like).history[-1]
        traj.records.append((state.iteration, "adaptive-pc", est, var, (est - phi_true) ** 2))
    return traj


def _simulate_chunk(instance, phi_true, schedule, strategy, grid, best, seeds):
    rngs = [np.random.default_rng(s) for s in seeds]
    if strategy == "two-step":
        return [run_two_step(instance, phi_true, schedule, r, grid) for r in rngs]
    return [run_adaptive_pc(instance, phi_true, schedule.total_iterations, r, grid, best) for r in rngs]


def simulate(
    instance: Instance,
    phi_true: float,
    schedule: TwoStepSchedule,
    seed: int,
    strategy: str = "two-step",
    grid: PhaseGrid | None = None,
    workers: int = 1,
) -> list[Trajectory]:
    """Run ``schedule.simulations`` trajectories of one strategy.

    Trajectory ``i`` always uses the ``i``-th spawned seed and results come back
    in index order, so the output does not depend on ``workers``.
    """
    if strategy not in STRATEGIES:
        raise ValueError(f"unknown strategy {strategy!r}; use one of {STRATEGIES}")
    seeds = np.random.SeedSequence(seed).spawn(schedule.simulations)
    best = best_pc_phase(instance)[0] if strategy == "adaptive-pc" else None
    if workers <= 1 or schedule.simulations < 2:
        return _simulate_chunk(instance, phi_true, schedule, strategy, grid, best, seeds)
    chunks = [c.tolist() for c in np.array_split(np.array(seeds, dtype=object), workers) if c.size]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        parts = pool.map(
            _simulate_chunk,
            *zip(*[(instance, phi_true, schedule, strategy, grid, best, c) for c in chunks]),
        )
        return [t for part in parts for t in part]


def mean_squared_error(trajectories: list[Trajectory]) -> np.ndarray:
    """MSE per iteration, summed in trajectory order."""
    errs = np.stack([t.squared_errors() for t in trajectories])
    return errs.mean(axis=0)


def average_cfi_of_estimated_sldm(
    instance: Instance, trajectories: list[Trajectory], phis
) -> np.ndarray:
    """Mean CFI curve over ``phis`` of the SLDM built at each stage estimate.

    Row ``s`` averages the SLDMs built at the estimate entering SLDM stage ``s``.
    """
    phis = np.asarray(phis, dtype=float)
    n_stages = min(len(t.stage_estimates) for t in trajectories) - 1
    curves = np.zeros((n_stages, phis.size))
    for t in trajectories:
        for s in range(n_stages):
            povm = sldm_povm(instance.rho, instance.generator, t.stage_estimates[s])
            curves[s] += PhaseExpansion(instance, povm).cfi_curve(phis)
    return curves / len(trajectories)


def povm_cfi(instance: Instance, povm: Povm, phi: float) -> float:
    """Finite-difference CFI, for cross-checks against :meth:`PhaseExpansion.cfi_curve`."""
    return cfi(instance.rho, instance.generator, phi, povm)
