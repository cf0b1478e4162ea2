"""Density-matrix algebra for a pair of spin-1/2 particles.

A state of the 4-dimensional Hilbert space is parametrized by a real
15-component coherence vector s through

    rho(s) = (1/4) (I + sum_m s_m Sigma_m),

where the Sigma_m are the fifteen traceless Hermitian products of Pauli
matrices on the two factors.  Particle 1 is the first tensor factor.  In
this representation the unit trace and Hermiticity of rho are exact by
construction, so integration schemes acting on s can never violate them.

The module provides the generator basis, conversions in both directions,
expectation values of the standard spin observables, purity, probability
amplitudes in the collapse bases, and the canonical preset states used by
the measurement protocols.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

POS_TOL = 1e-9  # default tolerance on negative density-matrix eigenvalues

_I2 = np.eye(2, dtype=complex)
_SX = np.array([[0.0, 1.0], [1.0, 0.0]], dtype=complex)
_SY = np.array([[0.0, -1.0j], [1.0j, 0.0]], dtype=complex)
_SZ = np.array([[1.0, 0.0], [0.0, -1.0]], dtype=complex)
_PAULIS = (_I2, _SX, _SY, _SZ)


def _build_generators() -> np.ndarray:
    """The fifteen Sigma_m, ordered with particle 1 as the first factor.

    Index m-1 runs over (p1, p2) pairs in row-major order with the
    identity pair excluded: I(x)sx, I(x)sy, I(x)sz, sx(x)I, sx(x)sx, ...
    """
    mats = []
    for p1 in range(4):
        for p2 in range(4):
            if p1 == 0 and p2 == 0:
                continue
            mats.append(np.kron(_PAULIS[p1], _PAULIS[p2]))
    return np.array(mats)


SIGMA = _build_generators()  # shape (15, 4, 4)

# Collective and single-particle spin observables (hbar = 1).
SZ1 = 0.5 * np.kron(_SZ, _I2)
SZ2 = 0.5 * np.kron(_I2, _SZ)
SX1 = 0.5 * np.kron(_SX, _I2)
SX2 = 0.5 * np.kron(_I2, _SX)
SY1 = 0.5 * np.kron(_SY, _I2)
SY2 = 0.5 * np.kron(_I2, _SY)
SZ_TOTAL = SZ1 + SZ2
SX_TOTAL = SX1 + SX2
SY_TOTAL = SY1 + SY2
S_SQUARED = SX_TOTAL @ SX_TOTAL + SY_TOTAL @ SY_TOTAL + SZ_TOTAL @ SZ_TOTAL


@dataclass(frozen=True)
class CoherenceState:
    """Immutable 15-component coherence vector with a time stamp."""

    s: np.ndarray
    t: float = 0.0

    def __post_init__(self) -> None:
        vec = np.asarray(self.s, dtype=float)
        if vec.shape != (15,):
            raise ValueError(f"coherence vector must have shape (15,), got {vec.shape}")
        vec = vec.copy()
        vec.flags.writeable = False
        object.__setattr__(self, "s", vec)


def _vec(s) -> np.ndarray:
    """Accept a CoherenceState or a bare array of shape (..., 15)."""
    if isinstance(s, CoherenceState):
        return s.s
    arr = np.asarray(s, dtype=float)
    if arr.shape[-1] != 15:
        raise ValueError(f"expected trailing dimension 15, got shape {arr.shape}")
    return arr


def density_from_coherence(s) -> np.ndarray:
    """rho = (1/4)(I + s . Sigma).  Supports batches: (..., 15) -> (..., 4, 4)."""
    vec = _vec(s)
    rho = np.tensordot(vec, SIGMA, axes=([-1], [0]))
    rho += np.eye(4)
    return 0.25 * rho


def coherence_from_density(rho: np.ndarray, *, validate: bool = True) -> np.ndarray:
    """Project a density matrix onto the generator basis: s_m = Tr(rho Sigma_m).

    Rejects non-Hermitian or non-unit-trace input (tolerance 1e-12) unless
    validate is disabled.
    """
    rho = np.asarray(rho, dtype=complex)
    if rho.shape[-2:] != (4, 4):
        raise ValueError(f"expected a 4x4 matrix, got shape {rho.shape}")
    if validate:
        herm_err = np.max(np.abs(rho - np.swapaxes(rho.conj(), -1, -2)))
        if herm_err > 1e-12:
            raise ValueError(f"density matrix not Hermitian (deviation {herm_err:.2e})")
        tr_err = np.max(np.abs(np.trace(rho, axis1=-2, axis2=-1) - 1.0))
        if tr_err > 1e-12:
            raise ValueError(f"density matrix trace differs from 1 by {tr_err:.2e}")
    # Tr(rho Sigma_m) with Sigma Hermitian: contract rho_ij Sigma_m_ji
    s = np.einsum('...ij,mji->...m', rho, SIGMA).real
    return s


def expectation(observable: np.ndarray, s) -> float | np.ndarray:
    """Tr(X rho(s)) for a Hermitian observable X."""
    X = np.asarray(observable, dtype=complex)
    if np.max(np.abs(X - X.conj().T)) > 1e-12:
        raise ValueError("observable must be Hermitian")
    rho = density_from_coherence(s)
    val = np.einsum('...ij,ji->...', rho, X).real
    return float(val) if val.ndim == 0 else val


def purity(s) -> float | np.ndarray:
    """Tr(rho^2) = (1 + |s|^2) / 4."""
    vec = _vec(s)
    val = 0.25 * (1.0 + np.sum(vec * vec, axis=-1))
    return float(val) if np.ndim(val) == 0 else val


def min_eigenvalue(s) -> float | np.ndarray:
    """Smallest eigenvalue of rho(s); negative values flag unphysical states."""
    rho = density_from_coherence(s)
    ev = np.linalg.eigvalsh(rho)
    val = ev[..., 0]
    return float(val) if np.ndim(val) == 0 else val


# z basis kets, particle 1 first: |up up>, |up down>, |down up>, |down down>
_UP = np.array([1.0, 0.0], dtype=complex)
_DOWN = np.array([0.0, 1.0], dtype=complex)
_X_PLUS = np.array([1.0, 1.0], dtype=complex) / np.sqrt(2.0)
_X_MINUS = np.array([1.0, -1.0], dtype=complex) / np.sqrt(2.0)


def _ket(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return np.kron(a, b)


_TRIPLET_KETS = (
    _ket(_UP, _UP),
    (_ket(_UP, _DOWN) + _ket(_DOWN, _UP)) / np.sqrt(2.0),
    _ket(_DOWN, _DOWN),
)

_CASE2_KETS = (
    _ket(_UP, _X_PLUS),
    _ket(_UP, _X_MINUS),
    _ket(_DOWN, _X_PLUS),
    _ket(_DOWN, _X_MINUS),
)


def _amplitudes(s, kets) -> np.ndarray:
    rho = density_from_coherence(s)
    out = []
    for e in kets:
        p = np.einsum('i,...ij,j->...', e.conj(), rho, e).real
        out.append(np.sqrt(np.maximum(p, 0.0)))  # clip roundoff negatives
    return np.stack(out, axis=-1)


def triplet_amplitudes(s) -> np.ndarray:
    """Moduli sqrt(<e|rho|e>) over the three z-basis triplet eigenstates.

    Order: |1,1>, (|1,-1> + |-1,1>)/sqrt2, |-1,-1> in collective Sz labels.
    """
    return _amplitudes(s, _TRIPLET_KETS)


def case2_amplitudes(s) -> np.ndarray:
    """Moduli over the four product outcomes |+-1>_z (x) |+-1>_x.

    Order: (z+,x+), (z+,x-), (z-,x+), (z-,x-).
    """
    return _amplitudes(s, _CASE2_KETS)


def _pure(ket: np.ndarray) -> np.ndarray:
    return np.outer(ket, ket.conj())


def _case_b_ket() -> np.ndarray:
    # equal-weight superposition of |1,1> and the z triplet-zero state
    return (_TRIPLET_KETS[0] + _TRIPLET_KETS[1]) / np.sqrt(2.0)


def _case_e_ket() -> np.ndarray:
    # amplitudes (1/2, 1/sqrt2, 0, 1/2) over the z product basis
    return np.array([0.5, 1.0 / np.sqrt(2.0), 0.0, 0.5], dtype=complex)


class StatePreset(enum.Enum):
    """Canonical initial states for the measurement protocols."""

    Singlet = "Singlet"
    TripletSzPlus = "TripletSzPlus"
    TripletSzZero = "TripletSzZero"
    TripletSzMinus = "TripletSzMinus"
    SxPlusPlus = "SxPlusPlus"
    SxMinusMinus = "SxMinusMinus"
    SxTripletZero = "SxTripletZero"
    CaseBSuperposition = "CaseBSuperposition"
    CaseDMixed = "CaseDMixed"
    CaseEState = "CaseEState"
    ProductZUpZDown = "ProductZUpZDown"

    @property
    def density(self) -> np.ndarray:
        return _PRESET_DENSITIES[self].copy()

    @property
    def coherence(self) -> np.ndarray:
        return coherence_from_density(_PRESET_DENSITIES[self])


_PRESET_DENSITIES = {
    StatePreset.Singlet: _pure((_ket(_UP, _DOWN) - _ket(_DOWN, _UP)) / np.sqrt(2.0)),
    StatePreset.TripletSzPlus: _pure(_TRIPLET_KETS[0]),
    StatePreset.TripletSzZero: _pure(_TRIPLET_KETS[1]),
    StatePreset.TripletSzMinus: _pure(_TRIPLET_KETS[2]),
    StatePreset.SxPlusPlus: _pure(_ket(_X_PLUS, _X_PLUS)),
    StatePreset.SxMinusMinus: _pure(_ket(_X_MINUS, _X_MINUS)),
    StatePreset.SxTripletZero: _pure(
        (_ket(_X_PLUS, _X_MINUS) + _ket(_X_MINUS, _X_PLUS)) / np.sqrt(2.0)
    ),
    StatePreset.CaseBSuperposition: _pure(_case_b_ket()),
    StatePreset.CaseDMixed: 0.25 * np.eye(4, dtype=complex),
    StatePreset.CaseEState: _pure(_case_e_ket()),
    StatePreset.ProductZUpZDown: _pure(_ket(_UP, _DOWN)),
}


class CollapseOutcome(enum.Enum):
    """Labels for the terminal states a trajectory can collapse to."""

    ZupZup = "ZupZup"
    ZdownZdown = "ZdownZdown"
    TripletZero = "TripletZero"
    Singlet = "Singlet"
    MixedStationary = "MixedStationary"
    ZupZdown = "ZupZdown"
    ZdownZup = "ZdownZup"
    ZupXup = "ZupXup"
    ZupXdown = "ZupXdown"
    ZdownXup = "ZdownXup"
    ZdownXdown = "ZdownXdown"
    Unresolved = "Unresolved"


# Target density matrices for collapse classification.
OUTCOME_DENSITIES = {
    CollapseOutcome.ZupZup: _pure(_TRIPLET_KETS[0]),
    CollapseOutcome.ZdownZdown: _pure(_TRIPLET_KETS[2]),
    CollapseOutcome.TripletZero: _pure(_TRIPLET_KETS[1]),
    CollapseOutcome.Singlet: _pure((_ket(_UP, _DOWN) - _ket(_DOWN, _UP)) / np.sqrt(2.0)),
    CollapseOutcome.ZupZdown: _pure(_ket(_UP, _DOWN)),
    CollapseOutcome.ZdownZup: _pure(_ket(_DOWN, _UP)),
    CollapseOutcome.ZupXup: _pure(_CASE2_KETS[0]),
    CollapseOutcome.ZupXdown: _pure(_CASE2_KETS[1]),
    CollapseOutcome.ZdownXup: _pure(_CASE2_KETS[2]),
    CollapseOutcome.ZdownXdown: _pure(_CASE2_KETS[3]),
    CollapseOutcome.MixedStationary: 0.5 * (_pure(_ket(_UP, _DOWN)) + _pure(_ket(_DOWN, _UP))),
}


def trace_distance(s, target_rho: np.ndarray) -> float | np.ndarray:
    """(1/2) || rho(s) - target ||_1 via eigenvalues of the difference."""
    diff = density_from_coherence(s) - target_rho
    ev = np.linalg.eigvalsh(diff)
    val = 0.5 * np.sum(np.abs(ev), axis=-1)
    return float(val) if np.ndim(val) == 0 else val
