"""Quantum and classical Fisher information, SLDs and the measurement catalog.

All measurements are placed after the second beam splitter ``V = exp(i pi J_x/2)``:
outcome ``k`` has probability ``Tr(V U rho U^dag V^dag E_k)`` with
``U = exp(i phi G)``.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .fock import DensityMatrix, Operator, as_cutoff, beam_splitter_rotation, phase_unitary

SUPPORT_THRESHOLD = 1e-12
PROB_FLOOR = 1e-12
DERIV_FLOOR = 1e-9


class SingularFisherWarning(RuntimeWarning):
    """An outcome with vanishing probability still has a non-vanishing slope."""


@dataclass(frozen=True)
class SpectralDecomposition:
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray
    support_threshold: float = SUPPORT_THRESHOLD

    @classmethod
    def of(cls, matrix, support_threshold: float = SUPPORT_THRESHOLD) -> "SpectralDecomposition":
        w, v = np.linalg.eigh(_matrix(matrix))
        return cls(w, v, support_threshold)

    @property
    def support(self) -> np.ndarray:
        """Boolean mask of the eigenvalues kept in the support set."""
        return self.eigenvalues > self.support_threshold


@dataclass(frozen=True)
class Povm:
    """Finite measurement; ``elements`` has shape ``(K, d, d)``.

    Rank-one projective measurements may also carry ``vectors`` of shape
    ``(d, K)`` with ``E_k = v_k v_k^dag``, which lets callers skip the full
    matrices.
    """

    elements: np.ndarray
    labels: tuple
    name: str = ""
    vectors: np.ndarray | None = field(default=None, compare=False, repr=False)

    def __post_init__(self):
        e = np.asarray(self.elements, dtype=complex)
        if e.ndim != 3 or e.shape[1] != e.shape[2]:
            raise ValueError("POVM elements must be a stack of square matrices")
        if len(self.labels) != e.shape[0]:
            raise ValueError("one label per POVM element required")
        d = e.shape[1]
        total = e.sum(axis=0)
        if np.max(np.abs(total - np.eye(d))) > 1e-10:
            raise ValueError("POVM elements do not sum to the identity")
        if self.vectors is not None and np.shape(self.vectors) != (d, e.shape[0]):
            raise ValueError("POVM vectors must have shape (d, K)")
        e.setflags(write=False)
        object.__setattr__(self, "elements", e)
        object.__setattr__(self, "labels", tuple(self.labels))

    def __len__(self):
        return self.elements.shape[0]

    def min_eigenvalue(self) -> float:
        return float(min(np.linalg.eigvalsh(x).min() for x in self.elements))


@dataclass(frozen=True)
class SldOperator:
    matrix: np.ndarray
    eval_phase: float


def _matrix(rho) -> np.ndarray:
    return rho.matrix if hasattr(rho, "matrix") else np.asarray(rho, dtype=complex)


def _check_generator(gen: Operator):
    if not gen.hermitian:
        raise ValueError("generator must be Hermitian")


def evolve(rho, gen: Operator, phi: float) -> np.ndarray:
    """``U rho U^dag`` with ``U = exp(i phi G)``."""
    m = _matrix(rho)
    if gen.is_diagonal:
        ph = np.exp(1j * phi * gen.diagonal().real)
        return m * np.outer(ph, ph.conj())
    u = phase_unitary(gen, phi).matrix
    return u @ m @ u.conj().T


def qfi(rho, gen: Operator, support_threshold: float = SUPPORT_THRESHOLD) -> float:
    """QFI of the unitary family ``exp(i phi G) rho exp(-i phi G)``.

    Uses the spectral form: weighted variances over the support minus the
    pairwise coherence correction.
    """
    _check_generator(gen)
    if not isinstance(rho, DensityMatrix):
        rho = DensityMatrix(gen.cutoff, rho)
    g = gen.diagonal().real if gen.is_diagonal else gen.matrix
    return qfi_matrix(rho.matrix, g, support_threshold)


def qfi_matrix(rho: np.ndarray, g: np.ndarray, support_threshold: float = SUPPORT_THRESHOLD) -> float:
    """Unchecked core of :func:`qfi`; ``g`` is either a full matrix or a diagonal vector."""
    w, v = np.linalg.eigh(rho)
    keep = w > support_threshold
    lam = w[keep]
    vs = v[:, keep]
    gv = g[:, None] * vs if g.ndim == 1 else g @ vs
    mean = np.real(np.sum(vs.conj() * gv, axis=0))
    second = np.real(np.sum(gv.conj() * gv, axis=0))
    first_sum = 4.0 * np.sum(lam * (second - mean**2))

    gij = vs.conj().T @ gv
    weight = 8.0 * np.outer(lam, lam) / (lam[:, None] + lam[None, :])
    np.fill_diagonal(weight, 0.0)
    f = first_sum - np.sum(weight * np.abs(gij) ** 2)
    return float(max(f, 0.0))


def qfi_from_derivative(rho, drho, support_threshold: float = SUPPORT_THRESHOLD) -> float:
    """General QFI ``sum 2 |<i|d rho|j>|^2 / (l_i + l_j)`` for any family."""
    w, v = np.linalg.eigh(_matrix(rho))
    d = v.conj().T @ np.asarray(drho, dtype=complex) @ v
    lsum = w[:, None] + w[None, :]
    mask = lsum > support_threshold
    terms = np.zeros_like(lsum)
    terms[mask] = 2.0 * np.abs(d[mask]) ** 2 / lsum[mask]
    return float(terms.sum())


def sld(rho, gen: Operator, phi: float, support_threshold: float = SUPPORT_THRESHOLD) -> SldOperator:
    """Symmetric logarithmic derivative at ``phi``, built in the eigenbasis of rho_phi."""
    _check_generator(gen)
    rho_phi = evolve(rho, gen, phi)
    g = gen.matrix
    drho = 1j * (g @ rho_phi - rho_phi @ g)
    w, v = np.linalg.eigh(rho_phi)
    d = v.conj().T @ drho @ v
    lsum = w[:, None] + w[None, :]
    mask = lsum > support_threshold
    l_eig = np.zeros_like(d)
    l_eig[mask] = 2.0 * d[mask] / lsum[mask]
    L = v @ l_eig @ v.conj().T
    return SldOperator(0.5 * (L + L.conj().T), float(phi))


def sldm_povm(rho, gen: Operator, phi_hat: float) -> Povm:
    """Projective measurement on SLD eigenvectors, pre-rotated by the beam splitter.

    Degenerate eigenspaces keep whatever orthonormal basis the eigensolver
    returns.
    """
    L = sld(rho, gen, phi_hat).matrix
    _, vecs = np.linalg.eigh(L)
    bs = beam_splitter_rotation(gen.cutoff).matrix
    rotated = bs @ vecs
    elements = np.einsum("ak,bk->kab", rotated, rotated.conj())
    return Povm(elements, tuple(range(vecs.shape[1])), name=f"sldm@{phi_hat:.6g}", vectors=rotated)


def parity_povm(cutoff) -> Povm:
    """Photon-number parity of output mode a."""
    cutoff = as_cutoff(cutoff)
    i, _ = cutoff.occupations()
    even = np.diag((i % 2 == 0).astype(float))
    odd = np.eye(cutoff.dim) - even
    return Povm(np.stack([even, odd]), ("even", "odd"), name="parity")


def pc_povm(cutoff) -> Povm:
    """Joint photon counting on both output modes."""
    cutoff = as_cutoff(cutoff)
    d = cutoff.dim
    elements = np.zeros((d, d, d))
    elements[np.arange(d), np.arange(d), np.arange(d)] = 1.0
    i, j = cutoff.occupations()
    return Povm(elements, tuple(zip(i.tolist(), j.tolist())), name="pc", vectors=np.eye(d))


def _raw_probabilities(rho, gen: Operator, phi: float, povm: Povm) -> np.ndarray:
    bs = beam_splitter_rotation(gen.cutoff).matrix
    sigma = bs @ evolve(rho, gen, phi) @ bs.conj().T
    return np.einsum("kab,ba->k", povm.elements, sigma).real


def _clean(p: np.ndarray) -> np.ndarray:
    p = np.clip(p, 0.0, None)
    return p / p.sum()


def outcome_probabilities(rho, gen: Operator, phi: float, povm: Povm) -> np.ndarray:
    """Born-rule outcome distribution after phase ``phi`` and the second beam splitter."""
    return _clean(_raw_probabilities(rho, gen, phi, povm))


def fisher_from_differences(p0, p_plus, p_minus, h: float, cap: float | None = None) -> float:
    """Classical Fisher information from a central difference of probabilities.

    Outcomes with ``p < 1e-12`` are dropped when their slope also vanishes;
    otherwise a warning is raised, the probability is floored and, when ``cap``
    is given, the total is capped there.
    """
    p0 = np.asarray(p0)
    dp = (np.asarray(p_plus) - np.asarray(p_minus)) / (2.0 * h)
    small = p0 < PROB_FLOOR
    singular = small & (np.abs(dp) >= DERIV_FLOOR)
    keep = ~small
    total = float(np.sum(dp[keep] ** 2 / p0[keep]))
    if np.any(singular):
        warnings.warn(
            f"{int(singular.sum())} outcome(s) with p < {PROB_FLOOR:g} but |dp| >= {DERIV_FLOOR:g}",
            SingularFisherWarning,
            stacklevel=3,
        )
        total += float(np.sum(dp[singular] ** 2 / PROB_FLOOR))
        if cap is not None:
            total = min(total, cap)
    return total


def fd_step(gen: Operator, h: float = 1e-5) -> float:
    """Finite-difference step scaled by the generator's spectral width.

    Probabilities oscillate at frequencies up to the width, so a fixed step
    would be too coarse for the nonlinear generator.
    """
    return h / max(1.0, gen.spectral_width())


def cfi(rho, gen: Operator, phi: float, povm: Povm, h: float = 1e-5) -> float:
    """CFI of ``povm`` at ``phi`` by central finite differences of the outcome probabilities."""
    step = fd_step(gen, h)
    p0 = _raw_probabilities(rho, gen, phi, povm)
    pp = _raw_probabilities(rho, gen, phi + step, povm)
    pm = _raw_probabilities(rho, gen, phi - step, povm)
    singular = (p0 < PROB_FLOOR) & (np.abs((pp - pm) / (2 * step)) >= DERIV_FLOOR)
    cap = qfi(rho, gen) if np.any(singular) else None
    return fisher_from_differences(p0, pp, pm, step, cap=cap)


def cfi_analytic(rho, gen: Operator, phi: float, povm: Povm) -> float:
    """CFI with exact slopes ``Tr(E_k V i[G, rho_phi] V^dag)``; independent of the step."""
    bs = beam_splitter_rotation(gen.cutoff).matrix
    rho_phi = evolve(rho, gen, phi)
    g = gen.matrix
    sigma = bs @ rho_phi @ bs.conj().T
    dsigma = bs @ (1j * (g @ rho_phi - rho_phi @ g)) @ bs.conj().T
    p = np.einsum("kab,ba->k", povm.elements, sigma).real
    dp = np.einsum("kab,ba->k", povm.elements, dsigma).real
    keep = p >= PROB_FLOOR
    return float(np.sum(dp[keep] ** 2 / p[keep]))


def fidelity(rho, sigma) -> float:
    """Uhlmann fidelity ``(Tr sqrt(sqrt(rho) sigma sqrt(rho)))^2``."""
    a = _matrix(rho)
    b = _matrix(sigma)
    w, v = np.linalg.eigh(a)
    sa = (v * np.sqrt(np.clip(w, 0, None))) @ v.conj().T
    m = sa @ b @ sa
    ev = np.linalg.eigvalsh(0.5 * (m + m.conj().T))
    return float(np.sum(np.sqrt(np.clip(ev, 0, None))) ** 2)
