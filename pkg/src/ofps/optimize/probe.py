"""Probe-state search: maximize the lossy QFI at fixed mean photon number."""
from __future__ import annotations

import logging
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from ..channels import Transmission, apply_loss, lossy_matrix
from ..fock import DensityMatrix, FockCutoff, Operator, TwoModePureState, as_cutoff, generator
from ..metrology import qfi, qfi_matrix
from ..probes import OfpsSpec, noiseless_ofps
from .cobyla import CobylaConfig, CobylaResult, cobyla_minimize

log = logging.getLogger(__name__)

MAX_CORRECTION = 1e-6
CONVERGENCE_TOL = 1e-6


@dataclass(frozen=True)
class ProbeSearchProblem:
    cutoff: FockCutoff
    nbar: float
    trans: Transmission = field(default_factory=Transmission.lossless)
    phase_kind: str = "linear"
    coefficients_real: bool = True

    def __post_init__(self):
        object.__setattr__(self, "cutoff", as_cutoff(self.cutoff))
        N = self.cutoff.N
        if not 0.0 < float(self.nbar) < 2 * N:
            raise ValueError(
                f"mean photon number {self.nbar} is not reachable with Fock dimension {N}; "
                f"it must lie in (0, {2 * N})"
            )
        object.__setattr__(self, "nbar", float(self.nbar))
        generator(self.cutoff, self.phase_kind)  # validates the kind

    @property
    def n_vars(self) -> int:
        d = self.cutoff.dim
        return d if self.coefficients_real else 2 * d

    @property
    def generator(self) -> Operator:
        return generator(self.cutoff, self.phase_kind)

    def amplitudes(self, x: np.ndarray) -> np.ndarray:
        """Raw (unnormalized) amplitudes encoded by decision vector ``x``."""
        x = np.asarray(x, dtype=float)
        if self.coefficients_real:
            return x.astype(complex)
        d = self.cutoff.dim
        return x[:d] + 1j * x[d:]

    def encode(self, amps: np.ndarray) -> np.ndarray:
        amps = np.asarray(amps, dtype=complex)
        if self.coefficients_real:
            return amps.real.copy()
        return np.concatenate([amps.real, amps.imag])


@dataclass
class ProbeSearchResult:
    state: TwoModePureState
    qfi: float
    evals_used: int
    restart_index: int
    converged: bool
    seed: int
    correction: float = 0.0
    restart_qfis: list = field(default_factory=list)


def lossy_qfi(state: TwoModePureState, trans: Transmission, gen: Operator) -> float:
    return qfi(apply_loss(state, trans, check=False), gen)


class ProbeObjective:
    """Negative lossy QFI of the renormalized decision vector, plus constraint pair values."""

    def __init__(self, problem: ProbeSearchProblem, tolerance: float):
        self.problem = problem
        self.tol = tolerance
        self.gen = problem.generator
        self.g_diag = self.gen.diagonal().real
        photons = problem.cutoff.total_photons().astype(float)
        self.photons = photons

    def state(self, x) -> TwoModePureState:
        return TwoModePureState.from_amplitudes(self.problem.cutoff, self.problem.amplitudes(x))

    def __call__(self, x) -> float:
        x = np.asarray(x, dtype=float)
        if self.problem.coefficients_real:
            amps = x
        else:
            amps = self.problem.amplitudes(x)
        norm = np.linalg.norm(amps)
        if norm == 0:
            return 0.0
        rho = lossy_matrix(amps / norm, self.problem.cutoff.N, self.problem.trans)
        return -qfi_matrix(rho, self.g_diag)

    def constraints(self, x) -> np.ndarray:
        w = np.abs(self.problem.amplitudes(x)) ** 2
        s = w.sum()
        nb = w @ self.photons
        e = self.tol
        target = self.problem.nbar
        return np.array([s - 1 + e, 1 - s + e, nb - target + e, target - nb + e])


def project_to_constraints(amps: np.ndarray, photons: np.ndarray, nbar: float) -> tuple[np.ndarray, float]:
    """Renormalize and apply one tangent step that restores the mean photon number.

    Moving along ``(n - nbar) * c`` on the unit sphere changes the mean photon
    number at rate ``2 Var(n)``; one such step, then renormalization.
    Returns the corrected amplitudes and the size of the correction.
    """
    c = amps / np.linalg.norm(amps)
    w = np.abs(c) ** 2
    mean = w @ photons
    var = w @ (photons - mean) ** 2
    if var > 0:
        t = (nbar - mean) / (2.0 * var)
        c_new = c + t * (photons - mean) * c
        c_new /= np.linalg.norm(c_new)
    else:
        c_new = c
    return c_new, float(np.linalg.norm(c_new - amps))


def random_feasible_start(problem: ProbeSearchProblem, rng: np.random.Generator) -> np.ndarray:
    """Gaussian draw mixed with |00> or |NN> so that it meets both constraints exactly."""
    cutoff = problem.cutoff
    d = cutoff.dim
    photons = cutoff.total_photons()
    if problem.coefficients_real:
        g = rng.normal(size=d).astype(complex)
    else:
        g = rng.normal(size=d) + 1j * rng.normal(size=d)
    target = problem.nbar
    vac, top = 0, d - 1
    g[vac] = 0.0
    g /= np.linalg.norm(g)
    mean = (np.abs(g) ** 2) @ photons
    if mean < target:
        g[top] = 0.0
        g /= np.linalg.norm(g)
        mean = (np.abs(g) ** 2) @ photons
        w = (target - mean) / (2 * cutoff.N - mean)
        c = np.sqrt(1 - w) * g
        c[top] = np.sqrt(w)
    else:
        w = 1.0 - target / mean
        c = np.sqrt(1 - w) * g
        c[vac] = np.sqrt(w)
    return problem.encode(c)


def warm_start(problem: ProbeSearchProblem) -> np.ndarray:
    spec = OfpsSpec(problem.cutoff, problem.nbar, problem.phase_kind)
    return problem.encode(noiseless_ofps(spec).amplitudes)


def restart_seeds(seed: int, restarts: int) -> list[int]:
    children = np.random.SeedSequence(seed).spawn(restarts)
    return [int(c.generate_state(1, dtype=np.uint32)[0]) for c in children]


@dataclass
class RestartOutcome:
    index: int
    seed: int
    amplitudes: np.ndarray
    qfi: float
    nfev: int
    converged: bool
    feasible: bool
    correction: float


def run_restart(problem: ProbeSearchProblem, config: CobylaConfig, index: int, seed: int, x0=None) -> RestartOutcome:
    """One COBYLA run; start 0 is the noiseless optimum, the rest are random."""
    obj = ProbeObjective(problem, config.constraint_tolerance)
    if x0 is None:
        x0 = warm_start(problem) if index == 0 else random_feasible_start(problem, np.random.default_rng(seed))
    res: CobylaResult = cobyla_minimize(
        obj, x0, [obj.constraints], config=config, bounds=(-1.0, 1.0)
    )
    amps, corr = project_to_constraints(problem.amplitudes(res.x), obj.photons, problem.nbar)
    if corr > MAX_CORRECTION:
        log.warning("restart %d: final constraint correction %.3g exceeds %.0e", index, corr, MAX_CORRECTION)
    else:
        log.debug("restart %d: final constraint correction %.3g", index, corr)
    state = TwoModePureState(problem.cutoff, amps)
    value = lossy_qfi(state, problem.trans, obj.gen)
    lv = res.level_best
    converged = res.status == "converged" and (len(lv) < 2 or abs(lv[-1] - lv[-2]) < CONVERGENCE_TOL)
    return RestartOutcome(
        index=index,
        seed=seed,
        amplitudes=amps,
        qfi=value,
        nfev=res.nfev,
        converged=converged,
        feasible=res.status != "infeasible",
        correction=corr,
    )


def default_workers() -> int:
    env = os.environ.get("OFPS_THREADS")
    if env:
        return max(1, int(env))
    return os.cpu_count() or 1


def _map(fn, args_list, workers: int):
    if workers <= 1 or len(args_list) <= 1:
        return [fn(*a) for a in args_list]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        futures = [pool.submit(fn, *a) for a in args_list]
        return [f.result() for f in futures]


def optimize_probe(
    problem: ProbeSearchProblem,
    config: CobylaConfig | None = None,
    workers: int = 1,
    extra_starts: list | None = None,
) -> ProbeSearchResult:
    """Best of ``config.restarts`` seeded COBYLA runs (plus optional given starts)."""
    config = config or CobylaConfig()
    seeds = restart_seeds(config.seed, config.restarts)
    jobs = [(problem, config, k, s) for k, s in enumerate(seeds)]
    for k, amps in enumerate(extra_starts or ()):
        x0 = problem.encode(np.asarray(amps, dtype=complex))
        jobs.append((problem, config, config.restarts + k, -1, x0))
    outcomes = _map(run_restart, jobs, workers)
    feasible = [o for o in outcomes if o.feasible] or outcomes
    best = max(feasible, key=lambda o: (o.qfi, -o.index))
    return ProbeSearchResult(
        state=TwoModePureState(problem.cutoff, best.amplitudes),
        qfi=best.qfi,
        evals_used=sum(o.nfev for o in outcomes),
        restart_index=best.index,
        converged=best.converged,
        seed=best.seed,
        correction=best.correction,
        restart_qfis=[o.qfi for o in outcomes],
    )


def random_phase_validation(
    result: ProbeSearchResult, problem: ProbeSearchProblem, trials: int, seed: int = 0
) -> tuple[float, bool]:
    """Attach uniform random phases to the nonzero coefficients; none may beat the real optimum."""
    amps = result.state.amplitudes
    nonzero = np.abs(amps) > 0
    gen = problem.generator
    rng = np.random.default_rng(seed)
    best = result.qfi
    for _ in range(trials):
        theta = rng.uniform(0.0, 2 * np.pi, size=amps.size)
        phased = np.where(nonzero, amps * np.exp(1j * theta), 0.0)
        value = lossy_qfi(TwoModePureState(problem.cutoff, phased), problem.trans, gen)
        best = max(best, value)
    return best, bool(best <= result.qfi * (1 + 1e-6))


@dataclass
class SweepRow:
    T1: float
    T2: float
    qfi: float
    converged: bool
    seed: int
    evals: int
    state: TwoModePureState | None
    error: str | None = None


def _sweep_point(problem: ProbeSearchProblem, config: CobylaConfig) -> SweepRow:
    try:
        res = optimize_probe(problem, config)
        return SweepRow(problem.trans.T1, problem.trans.T2, res.qfi, res.converged, config.seed,
                        res.evals_used, res.state)
    except Exception as exc:  # recorded per point; the sweep carries on
        log.exception("sweep point (%g, %g) failed", problem.trans.T1, problem.trans.T2)
        return SweepRow(problem.trans.T1, problem.trans.T2, float("nan"), False, config.seed, 0, None,
                        error=f"{type(exc).__name__}: {exc}")


def transmission_sweep(
    template: ProbeSearchProblem,
    grid,
    config: CobylaConfig | None = None,
    workers: int = 1,
) -> list[SweepRow]:
    """Optimize the probe at every ``(T1, T2)`` grid point, each with its own seed."""
    grid = [(float(a), float(b)) for a, b in grid]
    if not grid:
        raise ValueError("transmission grid is empty")
    config = config or CobylaConfig()
    seeds = restart_seeds(config.seed, len(grid))
    jobs = [
        (replace(template, trans=Transmission(t1, t2)), replace(config, seed=s))
        for (t1, t2), s in zip(grid, seeds)
    ]
    return _map(_sweep_point, jobs, workers)


def diagonal_monotonicity(rows: list[SweepRow], slack: float = 1e-3) -> list[tuple[float, float]]:
    """Pairs of symmetric transmissions where the optimized QFI drops by more than ``slack``."""
    diag = sorted((r.T1, r.qfi) for r in rows if r.T1 == r.T2 and np.isfinite(r.qfi))
    return [(a[0], b[0]) for a, b in zip(diag, diag[1:]) if b[1] < a[1] - slack]


def uniform_grid(lo: float, hi: float, points: int) -> list[tuple[float, float]]:
    ts = np.linspace(lo, hi, points)
    return [(float(a), float(b)) for a in ts for b in ts]
