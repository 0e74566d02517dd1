"""Analytical noiseless optimal probes and the small-loss QFI approximation."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .channels import Transmission, apply_loss
from .fock import DensityMatrix, FockCutoff, TwoModePureState, as_cutoff, build_jz, generator
from .metrology import qfi

PHASE_KINDS = ("linear", "nonlinear")


@dataclass(frozen=True)
class OfpsSpec:
    """Catalog key: Fock dimension, mean photon number, phase-shift kind, relative phases."""

    N: FockCutoff
    nbar: float
    phase_kind: str = "linear"
    relative_phases: tuple = field(default=())

    def __post_init__(self):
        object.__setattr__(self, "N", as_cutoff(self.N))
        nbar = float(self.nbar)
        if not 0.0 < nbar < 2 * self.N.N:
            raise ValueError(f"nbar must lie in (0, {2 * self.N.N}) for N={self.N.N}, got {nbar}")
        if self.phase_kind not in PHASE_KINDS:
            raise ValueError(f"phase_kind must be one of {PHASE_KINDS}, got {self.phase_kind!r}")
        object.__setattr__(self, "nbar", nbar)
        object.__setattr__(self, "relative_phases", tuple(float(t) for t in self.relative_phases))

    def phase(self, k: int) -> float:
        return self.relative_phases[k] if k < len(self.relative_phases) else 0.0

    @property
    def regime(self) -> str:
        """Name of the catalog formula that applies."""
        N = self.N.N
        if self.phase_kind == "linear":
            return "low" if self.nbar <= N else "high"
        if self.nbar <= N:
            return "low"
        if self.nbar <= (4 * N + 1) // 3:
            return "nonlinear-mid"
        return "nonlinear-high"


def _cis(theta: float) -> complex:
    return complex(np.exp(1j * theta))


def ofps_low(cutoff, nbar: float, theta1: float = 0.0, theta2: float = 0.0) -> TwoModePureState:
    """``sqrt((N-n)/N)|00> + sqrt(n/2N)(e^{i t1}|0N> + e^{i t2}|N0>)`` for ``n <= N``."""
    N = as_cutoff(cutoff).N
    amps = {
        (0, 0): math.sqrt((N - nbar) / N),
        (0, N): math.sqrt(nbar / (2 * N)) * _cis(theta1),
        (N, 0): math.sqrt(nbar / (2 * N)) * _cis(theta2),
    }
    return _state(cutoff, amps)


def ofps_high_linear(cutoff, nbar: float, theta1: float = 0.0, theta2: float = 0.0) -> TwoModePureState:
    """N00N-like pair plus ``|NN>`` weight, for ``N <= n < 2N``."""
    N = as_cutoff(cutoff).N
    w = math.sqrt((2 * N - nbar) / (2 * N))
    amps = {
        (0, N): w * _cis(theta1),
        (N, 0): w * _cis(theta2),
        (N, N): math.sqrt((nbar - N) / N),
    }
    return _state(cutoff, amps)


def ofps_nonlinear_mid(cutoff, nbar: float, theta1=0.0, theta2=0.0, theta3=0.0) -> TwoModePureState:
    """Nonlinear optimum for ``N <= n <= floor((4N+1)/3)``.

    Mixes the kets carrying ``floor(n)+1`` and ``floor(n)`` photons with the
    fractional part of ``n`` as weight; integer ``n`` leaves the balanced pair
    ``(|n-N, N> + |N, n-N>)/sqrt(2)``.
    """
    N = as_cutoff(cutoff).N
    m = math.floor(nbar)
    frac = nbar - m
    upper = math.sqrt(frac / 2)
    lower = math.sqrt((1 - frac) / 2)
    amps: dict = {}
    if upper > 0:
        _put(amps, (m + 1 - N, N), upper, N)
        _put(amps, (N, m + 1 - N), upper * _cis(theta1), N)
    _put(amps, (m - N, N), lower * _cis(theta2), N)
    _put(amps, (N, m - N), lower * _cis(theta3), N)
    return _state(cutoff, amps)


def ofps_nonlinear_high(cutoff, nbar: float, theta1: float = 0.0, theta2: float = 0.0) -> TwoModePureState:
    """Nonlinear optimum for ``floor((4N+1)/3) <= n < 2N`` with ``zeta = floor((N+1)/3)``."""
    N = as_cutoff(cutoff).N
    zeta = (N + 1) // 3
    w = math.sqrt((2 * N - nbar) / (2 * (N - zeta)))
    amps: dict = {}
    _put(amps, (zeta, N), w * _cis(theta1), N)
    _put(amps, (N, zeta), w * _cis(theta2), N)
    _put(amps, (N, N), math.sqrt(max(nbar - N - zeta, 0.0) / (N - zeta)), N)
    return _state(cutoff, amps)


def _put(amps: dict, ket, value, N: int):
    i, j = ket
    if not (0 <= i <= N and 0 <= j <= N):
        raise AssertionError(f"catalog ket |{i},{j}> falls outside the cutoff N={N}")
    amps[ket] = amps.get(ket, 0) + value


def _state(cutoff, amps: dict) -> TwoModePureState:
    cutoff = as_cutoff(cutoff)
    vec = np.zeros(cutoff.dim, dtype=complex)
    for (i, j), c in amps.items():
        vec[cutoff.index(i, j)] += c
    return TwoModePureState(cutoff, vec)


def noiseless_ofps(spec: OfpsSpec) -> TwoModePureState:
    """Catalog probe for ``spec``; relative phases default to zero."""
    N, n = spec.N, spec.nbar
    regime = spec.regime
    if regime == "low":
        return ofps_low(N, n, spec.phase(0), spec.phase(1))
    if regime == "high":
        return ofps_high_linear(N, n, spec.phase(0), spec.phase(1))
    if regime == "nonlinear-mid":
        return ofps_nonlinear_mid(N, n, spec.phase(0), spec.phase(1), spec.phase(2))
    return ofps_nonlinear_high(N, n, spec.phase(0), spec.phase(1))


def noiseless_ofps_qfi(spec: OfpsSpec) -> float:
    """Closed form ``nN`` / ``N(2N-n)`` for linear shifts, numerical QFI otherwise."""
    N = spec.N.N
    if spec.phase_kind == "linear":
        return spec.nbar * N if spec.nbar <= N else N * (2 * N - spec.nbar)
    state = noiseless_ofps(spec)
    return qfi(DensityMatrix.from_pure(state), generator(spec.N, spec.phase_kind))


class ExpansionBreakdown(ArithmeticError):
    """The dominant eigenvalue is no longer well separated; loss too large to expand."""


def taylor_qfi_first_order(spec: OfpsSpec, delta1: float, delta2: float, separation: float = 10.0) -> float:
    """Small-loss QFI ``4 l0 (<J_z^2> - <J_z>^2)`` on the dominant eigen-branch of rho.

    The branch ``(l0, |l0>)`` is taken from the exact lossy state at
    ``T = 1 - delta``, which agrees with the first-order expansion up to
    second-order terms. Linear phase shifts only.
    """
    for d in (delta1, delta2):
        if not 0.0 <= d <= 0.2:
            raise ValueError(f"loss parameter delta must lie in [0, 0.2], got {d}")
    if spec.phase_kind != "linear":
        raise ValueError("the small-loss approximation is defined for linear phase shifts")
    probe = noiseless_ofps(spec)
    rho = apply_loss(probe, Transmission(1.0 - delta1, 1.0 - delta2))
    w, v = np.linalg.eigh(rho.matrix)
    lam0, vec0 = w[-1], v[:, -1]
    if w.size > 1 and lam0 < separation * w[-2]:
        raise ExpansionBreakdown(
            f"dominant eigenvalue {lam0:.4g} not {separation:g}x above the next ({w[-2]:.4g})"
        )
    jz = build_jz(spec.N).diagonal().real
    p = np.abs(vec0) ** 2
    return float(4.0 * lam0 * (p @ jz**2 - (p @ jz) ** 2))
