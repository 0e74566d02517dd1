"""Particle loss on both arms of the interferometer.

Two routes produce the same reduced state: the production Kraus form
(``apply_loss``) and the fictitious beam-splitter dilation with the two
environment modes traced out (``loss_via_trace_out``), which is kept as a slow
reference.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.special import comb

from .fock import (
    DensityMatrix,
    FockCutoff,
    Operator,
    TwoModePureState,
    as_cutoff,
    expm_hermitian,
    phase_unitary,
)

__all__ = [
    "DensityMatrix",
    "Transmission",
    "loss_kraus_set",
    "apply_loss",
    "apply_loss_to_density",
    "apply_loss_to_operator",
    "loss_via_trace_out",
    "loss_phase_commutation_check",
]

TRACE_OUT_MAX_N = 8


@dataclass(frozen=True)
class Transmission:
    """Transmission coefficients of the two arms, ``T = cos^2(eta / 2)``."""

    T1: float
    T2: float

    def __post_init__(self):
        for name in ("T1", "T2"):
            t = float(getattr(self, name))
            if not 0.0 <= t <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1], got {t}")
            object.__setattr__(self, name, t)

    @classmethod
    def symmetric(cls, T: float) -> "Transmission":
        return cls(T, T)

    @classmethod
    def lossless(cls) -> "Transmission":
        return cls(1.0, 1.0)

    @property
    def eta1(self) -> float:
        return 2.0 * np.arccos(np.sqrt(self.T1))

    @property
    def eta2(self) -> float:
        return 2.0 * np.arccos(np.sqrt(self.T2))


def loss_kraus_set(cutoff, T: float) -> np.ndarray:
    """Single-mode loss Kraus operators stacked as ``K[l]``, ``l = 0..N``.

    ``<n-l| K_l |n> = sqrt(C(n, l) T^(n-l) (1-T)^l)``; ``K_l`` removes exactly
    ``l`` photons.
    """
    if not 0.0 <= T <= 1.0:
        raise ValueError(f"transmission must lie in [0, 1], got {T}")
    return _kraus(as_cutoff(cutoff).N, float(T)).copy()


@lru_cache(maxsize=256)
def _kraus(N: int, T: float) -> np.ndarray:
    K = np.zeros((N + 1, N + 1, N + 1))
    for l in range(N + 1):
        n = np.arange(l, N + 1)
        K[l, n - l, n] = np.sqrt(comb(n, l) * T ** (n - l) * (1.0 - T) ** l)
    K.setflags(write=False)
    return K


def _branches(amps: np.ndarray, N: int, trans: Transmission) -> np.ndarray:
    """Unnormalized output vectors ``(K_l x K_m)|psi>`` as rows, one per (l, m)."""
    psi = amps.reshape(N + 1, N + 1)
    ka = _kraus(N, trans.T1)
    kb = _kraus(N, trans.T2)
    left = ka @ psi  # (l, i, b)
    out = left[:, None] @ kb.transpose(0, 2, 1)[None]  # (l, m, i, j)
    return out.reshape((N + 1) ** 2, (N + 1) ** 2)


def apply_loss(state: TwoModePureState, trans: Transmission, check: bool = True) -> DensityMatrix:
    """Reduced two-mode state after loss ``T1`` on mode a and ``T2`` on mode b."""
    return DensityMatrix(state.cutoff, lossy_matrix(state.amplitudes, state.cutoff.N, trans), check=check)


def lossy_matrix(amps: np.ndarray, N: int, trans: Transmission) -> np.ndarray:
    """Raw output matrix of the loss channel; real input amplitudes give a real matrix."""
    w = _branches(amps, N, trans)
    return w.T @ w.conj()


def apply_loss_to_operator(matrix: np.ndarray, cutoff, trans: Transmission) -> np.ndarray:
    """Apply the loss map to an arbitrary (not necessarily Hermitian) operator.

    The map is linear, so this also propagates derivatives of density matrices.
    """
    cutoff = as_cutoff(cutoff)
    N = cutoff.N
    n = N + 1
    r = np.asarray(matrix, dtype=complex).reshape(n, n, n, n)
    ka = _kraus(N, trans.T1)
    kb = _kraus(N, trans.T2)
    out = np.einsum("lia,mjb,abcd,lkc,mqd->ijkq", ka, kb, r, ka, kb, optimize=True)
    return out.reshape(n * n, n * n)


def apply_loss_to_density(rho: DensityMatrix, trans: Transmission) -> DensityMatrix:
    return DensityMatrix(rho.cutoff, apply_loss_to_operator(rho.matrix, rho.cutoff, trans))


def _beam_splitter_pair(N: int, eta: float) -> np.ndarray:
    """``exp(i eta/2 (x^dag y + x y^dag))`` on two truncated modes, index ``x*(N+1)+y``."""
    n = N + 1
    a1 = np.diag(np.sqrt(np.arange(1, n)), k=1)
    eye = np.eye(n)
    x = np.kron(a1, eye)
    y = np.kron(eye, a1)
    h = x.T @ y + x @ y.T
    return expm_hermitian(h, 0.5j * eta)


def loss_via_trace_out(
    state: TwoModePureState, trans: Transmission, allow_large: bool = False
) -> DensityMatrix:
    """Reference route: dilate with vacuum modes c, d, mix, and trace them out.

    Each environment mode keeps N+1 levels, enough because it can only receive
    photons from a signal mode holding at most N.
    """
    N = state.cutoff.N
    if N > TRACE_OUT_MAX_N and not allow_large:
        raise MemoryError(
            f"four-mode oracle at N={N} needs dimension {(N + 1) ** 4}; "
            f"pass allow_large=True to run it anyway"
        )
    n = N + 1
    full = np.zeros((n, n, n, n), dtype=complex)  # modes (a, b, c, d)
    full[:, :, 0, 0] = state.as_matrix()

    bac = _beam_splitter_pair(N, trans.eta1).reshape(n, n, n, n)  # (a', c', a, c)
    bbd = _beam_splitter_pair(N, trans.eta2).reshape(n, n, n, n)  # (b', d', b, d)
    full = np.einsum("pqac,abcd->pbqd", bac, full, optimize=True)
    full = np.einsum("pqbd,abcd->apcq", bbd, full, optimize=True)

    m = full.reshape(n * n, n * n)
    return DensityMatrix(state.cutoff, m @ m.conj().T)


def loss_phase_commutation_check(
    state: TwoModePureState, trans: Transmission, generator: Operator, phi: float
) -> tuple[float, float]:
    """QFI with loss applied before the phase shift and after it.

    The second ordering is not a unitary family, so its QFI is taken from the
    general SLD formula using the propagated derivative.
    """
    from .metrology import qfi, qfi_from_derivative

    before = qfi(apply_loss(state, trans), generator)

    u = phase_unitary(generator, phi).matrix
    shifted = u @ state.amplitudes
    rho_pure = np.outer(shifted, shifted.conj())
    g = generator.matrix
    drho_pure = 1j * (g @ rho_pure - rho_pure @ g)
    rho_after = apply_loss_to_operator(rho_pure, state.cutoff, trans)
    drho_after = apply_loss_to_operator(drho_pure, state.cutoff, trans)
    after = qfi_from_derivative(rho_after, drho_after)
    return before, after
