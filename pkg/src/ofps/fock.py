"""Two-mode Fock-basis states and operators.

Basis ordering is row-major: the ket |i, j> (i photons in mode a, j in mode b)
sits at flat index ``k = i * (N + 1) + j``.  Every module in the package and
every file written by the CLI uses this ordering.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

HERMITIAN_TOL = 1e-12
UNITARY_TOL = 1e-10
NORM_TOL = 1e-12


@dataclass(frozen=True)
class FockCutoff:
    """Per-mode Fock dimension ``N`` (largest photon number in either mode)."""

    N: int

    def __post_init__(self):
        if isinstance(self.N, bool) or int(self.N) != self.N:
            raise TypeError(f"Fock dimension must be an integer, got {self.N!r}")
        if self.N < 1:
            raise ValueError(f"Fock dimension must be >= 1, got {self.N}")
        object.__setattr__(self, "N", int(self.N))

    @property
    def levels(self) -> int:
        return self.N + 1

    @property
    def dim(self) -> int:
        return (self.N + 1) ** 2

    def index(self, i: int, j: int) -> int:
        if not (0 <= i <= self.N and 0 <= j <= self.N):
            raise IndexError(f"|{i},{j}> outside cutoff N={self.N}")
        return i * (self.N + 1) + j

    def occupations(self) -> tuple[np.ndarray, np.ndarray]:
        """Photon numbers ``(i, j)`` of every basis ket, in flat order."""
        return np.divmod(np.arange(self.dim), self.N + 1)

    def total_photons(self) -> np.ndarray:
        i, j = self.occupations()
        return i + j


def as_cutoff(cutoff) -> FockCutoff:
    return cutoff if isinstance(cutoff, FockCutoff) else FockCutoff(cutoff)


@dataclass(frozen=True)
class TwoModePureState:
    """Normalized amplitude vector ``c_ij`` over the two-mode Fock basis."""

    cutoff: FockCutoff
    amplitudes: np.ndarray

    def __post_init__(self):
        amps = np.array(self.amplitudes, dtype=complex).reshape(-1)
        if amps.size != self.cutoff.dim:
            raise ValueError(
                f"expected {self.cutoff.dim} amplitudes for N={self.cutoff.N}, got {amps.size}"
            )
        norm = np.vdot(amps, amps).real
        if abs(norm - 1.0) > NORM_TOL:
            raise ValueError(f"state is not normalized (|c|^2 sums to {norm!r})")
        amps.setflags(write=False)
        object.__setattr__(self, "amplitudes", amps)

    @classmethod
    def from_amplitudes(cls, cutoff, amplitudes, normalize: bool = True) -> "TwoModePureState":
        cutoff = as_cutoff(cutoff)
        amps = np.asarray(amplitudes, dtype=complex).reshape(-1)
        if normalize:
            norm = np.linalg.norm(amps)
            if norm == 0:
                raise ValueError("cannot normalize the zero vector")
            amps = amps / norm
        return cls(cutoff, amps)

    @classmethod
    def fock(cls, cutoff, i: int, j: int) -> "TwoModePureState":
        cutoff = as_cutoff(cutoff)
        amps = np.zeros(cutoff.dim, dtype=complex)
        amps[cutoff.index(i, j)] = 1.0
        return cls(cutoff, amps)

    @classmethod
    def from_kets(cls, cutoff, kets: dict) -> "TwoModePureState":
        """Build from ``{(i, j): amplitude}``; the result is normalized."""
        cutoff = as_cutoff(cutoff)
        amps = np.zeros(cutoff.dim, dtype=complex)
        for (i, j), c in kets.items():
            amps[cutoff.index(i, j)] += c
        return cls.from_amplitudes(cutoff, amps)

    def as_matrix(self) -> np.ndarray:
        """Amplitudes reshaped to ``(N+1, N+1)`` with rows indexing mode a."""
        return self.amplitudes.reshape(self.cutoff.levels, self.cutoff.levels)

    def projector(self) -> np.ndarray:
        return np.outer(self.amplitudes, self.amplitudes.conj())

    def amplitude(self, i: int, j: int) -> complex:
        return self.amplitudes[self.cutoff.index(i, j)]


@dataclass(frozen=True)
class Operator:
    """Dense operator on the two-mode space, optionally flagged Hermitian/unitary."""

    cutoff: FockCutoff
    matrix: np.ndarray
    hermitian: bool = False
    unitary: bool = False

    def __post_init__(self):
        m = np.array(self.matrix, dtype=complex)
        d = self.cutoff.dim
        if m.shape != (d, d):
            raise ValueError(f"operator must be {d}x{d}, got {m.shape}")
        if self.hermitian and np.max(np.abs(m - m.conj().T), initial=0.0) > HERMITIAN_TOL:
            raise ValueError("operator flagged Hermitian is not Hermitian")
        if self.unitary and np.max(np.abs(m.conj().T @ m - np.eye(d)), initial=0.0) > UNITARY_TOL:
            raise ValueError("operator flagged unitary is not unitary")
        m.setflags(write=False)
        object.__setattr__(self, "matrix", m)

    @property
    def is_diagonal(self) -> bool:
        m = self.matrix
        return not np.any(m - np.diag(np.diagonal(m)))

    def diagonal(self) -> np.ndarray:
        return np.diagonal(self.matrix).copy()

    def spectral_width(self) -> float:
        """Largest minus smallest eigenvalue (Hermitian operators only)."""
        if self.is_diagonal:
            w = self.diagonal().real
        else:
            w = np.linalg.eigvalsh(self.matrix)
        return float(w.max() - w.min())


@dataclass(frozen=True)
class DensityMatrix:
    """Hermitian, unit-trace, positive-semidefinite two-mode state.

    ``check=False`` skips the spectral validation; it is meant for hot loops that
    build the matrix from Kraus branches, which is PSD by construction.
    """

    cutoff: FockCutoff
    matrix: np.ndarray
    check: bool = field(default=True, repr=False, compare=False)

    def __post_init__(self):
        m = np.array(self.matrix, dtype=complex)
        d = self.cutoff.dim
        if m.shape != (d, d):
            raise ValueError(f"density matrix must be {d}x{d}, got {m.shape}")
        if self.check:
            herm_err = np.max(np.abs(m - m.conj().T))
            if herm_err > HERMITIAN_TOL:
                raise ValueError(f"density matrix not Hermitian (max deviation {herm_err:.3g})")
            tr = np.trace(m).real
            if abs(tr - 1.0) > 1e-10:
                raise ValueError(f"density matrix trace is {tr!r}, expected 1")
            lmin = np.linalg.eigvalsh(m).min()
            if lmin < -1e-10:
                raise ValueError(f"density matrix has negative eigenvalue {lmin:.3g}")
        m = 0.5 * (m + m.conj().T)
        m.setflags(write=False)
        object.__setattr__(self, "matrix", m)

    @classmethod
    def from_pure(cls, state: TwoModePureState) -> "DensityMatrix":
        return cls(state.cutoff, state.projector())

    @classmethod
    def maximally_mixed(cls, cutoff) -> "DensityMatrix":
        cutoff = as_cutoff(cutoff)
        return cls(cutoff, np.eye(cutoff.dim) / cutoff.dim)

    def eigh(self):
        return np.linalg.eigh(self.matrix)


def _mode_ops(cutoff: FockCutoff):
    """Truncated annihilation operators for modes a and b on the two-mode space."""
    n = cutoff.levels
    a1 = np.diag(np.sqrt(np.arange(1, n)), k=1)
    eye = np.eye(n)
    return np.kron(a1, eye), np.kron(eye, a1)


def annihilation_ops(cutoff) -> tuple[np.ndarray, np.ndarray]:
    return _mode_ops(as_cutoff(cutoff))


def build_number(cutoff) -> Operator:
    cutoff = as_cutoff(cutoff)
    return Operator(cutoff, np.diag(cutoff.total_photons().astype(float)), hermitian=True)


def build_jz(cutoff) -> Operator:
    """Schwinger operator ``J_z = (a^dag a - b^dag b) / 2``."""
    cutoff = as_cutoff(cutoff)
    i, j = cutoff.occupations()
    return Operator(cutoff, np.diag((i - j) / 2.0), hermitian=True)


def build_nonlinear_generator(cutoff) -> Operator:
    """Generator ``n J_z`` of the Kerr-type (k = 2) phase shift."""
    cutoff = as_cutoff(cutoff)
    i, j = cutoff.occupations()
    return Operator(cutoff, np.diag((i + j) * (i - j) / 2.0), hermitian=True)


def build_jx(cutoff) -> Operator:
    """Schwinger operator ``J_x = (a^dag b + a b^dag) / 2``, truncated at the cutoff."""
    cutoff = as_cutoff(cutoff)
    a, b = _mode_ops(cutoff)
    jx = 0.5 * (a.T @ b + a @ b.T)
    return Operator(cutoff, jx, hermitian=True)


def generator(cutoff, kind: str) -> Operator:
    """Phase-shift generator for ``kind`` in {"linear", "nonlinear"}."""
    if kind == "linear":
        return build_jz(cutoff)
    if kind == "nonlinear":
        return build_nonlinear_generator(cutoff)
    raise ValueError(f"unknown phase-shift kind {kind!r}; use 'linear' or 'nonlinear'")


def expm_hermitian(matrix: np.ndarray, t: complex) -> np.ndarray:
    """``exp(t * H)`` for Hermitian ``H`` by eigendecomposition."""
    m = np.asarray(matrix)
    if not np.any(m - np.diag(np.diagonal(m))):
        return np.diag(np.exp(t * np.diagonal(m)))
    w, v = np.linalg.eigh(m)
    return (v * np.exp(t * w)) @ v.conj().T


def phase_unitary(gen: Operator, phi: float) -> Operator:
    """``exp(i phi G)``; element-wise for diagonal ``G``."""
    if not gen.hermitian:
        raise ValueError("phase generator must be flagged Hermitian")
    return Operator(gen.cutoff, expm_hermitian(gen.matrix, 1j * phi), unitary=True)


def beam_splitter_rotation(cutoff) -> Operator:
    """Second beam splitter ``exp(i pi J_x / 2)`` placed before detection."""
    return _beam_splitter(as_cutoff(cutoff))


@lru_cache(maxsize=32)
def _beam_splitter(cutoff: FockCutoff) -> Operator:
    return Operator(cutoff, expm_hermitian(build_jx(cutoff).matrix, 0.5j * np.pi), unitary=True)


def mean_particle_number(state: TwoModePureState) -> float:
    p = np.abs(state.amplitudes) ** 2
    return float(p @ state.cutoff.total_photons())
