"""Ito coefficients and integrators for continuously measured two-spin states.

Measurement protocols are specified by Lindblad operators L_k.  The
stochastic master equation unravelling used throughout is the diffusive
one: writing l_k = Tr[rho (L_k + L_k^dag)],

    drho = -i[H, rho] dt
         + sum_k ( L_k rho L_k^dag - (1/2){L_k^dag L_k, rho} ) dt
         + sum_k ( rho L_k^dag + L_k rho - l_k rho ) dW_k.

Projected onto the generator basis this becomes ds = A(s) dt + B(s) dW
with A affine in s and each column of B quadratic in s.  The generic
projection (sde_from_lindblads) and hand-coded per-protocol closed forms
are maintained side by side and cross-checked in the tests; both routes
must agree to near machine precision.

Trajectories are integrated by fixed-step Euler-Maruyama on s.  A Kraus
branch stepper on the density matrix itself, positive by construction, is
provided as an independent validation integrator.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .coherence import (
    SIGMA,
    SX2,
    SZ1,
    SZ2,
    SZ_TOTAL,
    S_SQUARED,
    CoherenceState,
    _vec,
)


@dataclass(frozen=True)
class LindbladModel:
    """A measurement protocol: Hamiltonian plus labelled Lindblad operators.

    Coupling strengths are folded into the operators.
    """

    h_s: np.ndarray
    lindblads: tuple[tuple[np.ndarray, str], ...]

    def __post_init__(self) -> None:
        h = np.asarray(self.h_s, dtype=complex)
        if h.shape != (4, 4) or not np.allclose(h, h.conj().T, atol=1e-12):
            raise ValueError("h_s must be a 4x4 Hermitian matrix")
        if len(self.lindblads) == 0:
            raise ValueError("at least one Lindblad operator is required")
        ops = []
        for op, label in self.lindblads:
            op = np.asarray(op, dtype=complex)
            if op.shape != (4, 4) or not np.all(np.isfinite(op)):
                raise ValueError(f"Lindblad operator {label!r} must be a finite 4x4 matrix")
            ops.append((op, str(label)))
        object.__setattr__(self, "h_s", h)
        object.__setattr__(self, "lindblads", tuple(ops))

    @property
    def n_channels(self) -> int:
        return len(self.lindblads)


def case1_model(a1: float = 1.0, a2: float = 1.0) -> LindbladModel:
    """Independent z measurements: L1 = a1 S_z1, L2 = a2 S_z2."""
    return LindbladModel(np.zeros((4, 4)), ((a1 * SZ1, "z1"), (a2 * SZ2, "z2")))


def case2_model(a1: float = 1.0, a2: float = 1.0) -> LindbladModel:
    """z measurement on particle 1, x measurement on particle 2."""
    return LindbladModel(np.zeros((4, 4)), ((a1 * SZ1, "z1"), (a2 * SX2, "x2")))


def sz_model(a: float = 1.0, extra: str | None = None,
             extra_coupling: float | None = None) -> LindbladModel:
    """Collective measurement L = a S_z, optionally with a purifying channel.

    extra = "s2" appends a measurement of total S^2; extra = "sz2" appends a
    measurement of particle 2's z spin.  Both lift the degeneracy of the
    <S_z> = 0 sector that otherwise traps mixed states.
    """
    chans = [(a * SZ_TOTAL, "sz")]
    b = a if extra_coupling is None else extra_coupling
    if extra == "s2":
        chans.append((b * S_SQUARED, "s2"))
    elif extra == "sz2":
        chans.append((b * SZ2, "sz2"))
    elif extra is not None:
        raise ValueError(f"unknown extra channel {extra!r}")
    return LindbladModel(np.zeros((4, 4)), tuple(chans))


# ---------------------------------------------------------------------------
# Generic projection of the stochastic master equation onto the basis
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class CoefficientTables:
    """Constant tensors defining A(s) = a0 + a1 s and the columns of B(s).

    B_mk(s) = beta0[m,k] + sum_n beta1[k,m,n] s_n - ell_k(s) s_m with
    ell_k(s) = ell0[k] + ell1[k] . s.  Everything downstream (diffusion
    matrix, its exact first and second derivatives) follows from these by
    the product rule.
    """

    a0: np.ndarray      # (15,)
    a1: np.ndarray      # (15, 15)
    beta0: np.ndarray   # (15, K)
    beta1: np.ndarray   # (K, 15, 15)
    ell0: np.ndarray    # (K,)
    ell1: np.ndarray    # (K, 15)

    @property
    def n_channels(self) -> int:
        return self.beta0.shape[1]


def _project(mat: np.ndarray) -> np.ndarray:
    """Components of a traceless Hermitian matrix in the generator basis."""
    return np.einsum('ij,mji->m', mat, SIGMA).real


def coefficient_tables(model: LindbladModel) -> CoefficientTables:
    """Build the constant coefficient tensors by trace projection."""
    H = model.h_s
    K = model.n_channels

    def drift_map(rho: np.ndarray) -> np.ndarray:
        out = -1j * (H @ rho - rho @ H)
        for L, _ in model.lindblads:
            LdL = L.conj().T @ L
            out += L @ rho @ L.conj().T - 0.5 * (LdL @ rho + rho @ LdL)
        return out

    eye4 = np.eye(4, dtype=complex)
    a0 = _project(drift_map(eye4 / 4.0))
    a1 = np.empty((15, 15))
    for n in range(15):
        a1[:, n] = _project(drift_map(SIGMA[n] / 4.0))

    beta0 = np.empty((15, K))
    beta1 = np.empty((K, 15, 15))
    ell0 = np.empty(K)
    ell1 = np.empty((K, 15))
    for k, (L, _) in enumerate(model.lindblads):
        Ld = L.conj().T
        lin = lambda rho: rho @ Ld + L @ rho
        beta0[:, k] = _project(lin(eye4 / 4.0))
        for n in range(15):
            beta1[k, :, n] = _project(lin(SIGMA[n] / 4.0))
        ell0[k] = np.trace((eye4 / 4.0) @ (L + Ld)).real
        ell1[k] = np.einsum('nij,ji->n', SIGMA / 4.0, L + Ld).real
    return CoefficientTables(a0, a1, beta0, beta1, ell0, ell1)


def evaluate_tables(tab: CoefficientTables, s) -> tuple[np.ndarray, np.ndarray]:
    """A(s), B(s) for one state or a batch: (..., 15) -> (..., 15), (..., 15, K)."""
    S = _vec(s)
    A = tab.a0 + np.einsum('mn,...n->...m', tab.a1, S)
    lin = tab.beta0 + np.einsum('kmn,...n->...mk', tab.beta1, S)
    ell = tab.ell0 + np.einsum('kn,...n->...k', tab.ell1, S)
    B = lin - S[..., :, None] * ell[..., None, :]
    return A, B


@dataclass(frozen=True)
class DiffusionModel:
    """Drift, noise loadings, and diffusion matrix at a state point."""

    a: np.ndarray        # (15,)
    b: np.ndarray        # (15, K)
    d: np.ndarray        # (15, 15) = b b^T / 2
    parity: np.ndarray   # (15,), all +1 for coherence variables

    @classmethod
    def from_ab(cls, a: np.ndarray, b: np.ndarray) -> "DiffusionModel":
        a = np.asarray(a, dtype=float)
        b = np.asarray(b, dtype=float)
        return cls(a=a, b=b, d=0.5 * (b @ b.T), parity=np.ones(15))


def sde_from_lindblads(model: LindbladModel, s) -> DiffusionModel:
    """Project the stochastic master equation at state s onto the basis."""
    A, B = evaluate_tables(coefficient_tables(model), s)
    return DiffusionModel.from_ab(A, B)


# ---------------------------------------------------------------------------
# Hand-coded closed-form coefficients, one function per protocol
# ---------------------------------------------------------------------------
# These were differentiated from the stochastic master equation by hand and
# are kept independent of the generic projection above on purpose.  Batch
# input (..., 15) is supported; the returned arrays broadcast the same way.

def _unpack(S: np.ndarray) -> tuple[np.ndarray, ...]:
    return tuple(S[..., m] for m in range(15))


def _case1_ab(S: np.ndarray, a1: float, a2: float) -> tuple[np.ndarray, np.ndarray]:
    (s1, s2, s3, s4, s5, s6, s7, s8, s9, s10, s11, s12, s13, s14, s15) = _unpack(S)
    g1, g2 = a1 * a1, a2 * a2
    A = np.empty_like(S)
    # channel 1 dephases first-factor x/y rows, channel 2 second-factor x/y rows
    A[..., 0] = -0.5 * g2 * s1
    A[..., 1] = -0.5 * g2 * s2
    A[..., 2] = 0.0
    A[..., 3] = -0.5 * g1 * s4
    A[..., 4] = -0.5 * (g1 + g2) * s5
    A[..., 5] = -0.5 * (g1 + g2) * s6
    A[..., 6] = -0.5 * g1 * s7
    A[..., 7] = -0.5 * g1 * s8
    A[..., 8] = -0.5 * (g1 + g2) * s9
    A[..., 9] = -0.5 * (g1 + g2) * s10
    A[..., 10] = -0.5 * g1 * s11
    A[..., 11] = 0.0
    A[..., 12] = -0.5 * g2 * s13
    A[..., 13] = -0.5 * g2 * s14
    A[..., 14] = 0.0
    B = np.empty(S.shape + (2,))
    B[..., 0, 0] = a1 * (s13 - s1 * s12)
    B[..., 1, 0] = a1 * (s14 - s2 * s12)
    B[..., 2, 0] = a1 * (s15 - s3 * s12)
    B[..., 3, 0] = a1 * (-s4 * s12)
    B[..., 4, 0] = a1 * (-s5 * s12)
    B[..., 5, 0] = a1 * (-s6 * s12)
    B[..., 6, 0] = a1 * (-s7 * s12)
    B[..., 7, 0] = a1 * (-s8 * s12)
    B[..., 8, 0] = a1 * (-s9 * s12)
    B[..., 9, 0] = a1 * (-s10 * s12)
    B[..., 10, 0] = a1 * (-s11 * s12)
    B[..., 11, 0] = a1 * (1.0 - s12 * s12)
    B[..., 12, 0] = a1 * (s1 - s13 * s12)
    B[..., 13, 0] = a1 * (s2 - s14 * s12)
    B[..., 14, 0] = a1 * (s3 - s15 * s12)
    B[..., 0, 1] = a2 * (-s1 * s3)
    B[..., 1, 1] = a2 * (-s2 * s3)
    B[..., 2, 1] = a2 * (1.0 - s3 * s3)
    B[..., 3, 1] = a2 * (s7 - s4 * s3)
    B[..., 4, 1] = a2 * (-s5 * s3)
    B[..., 5, 1] = a2 * (-s6 * s3)
    B[..., 6, 1] = a2 * (s4 - s7 * s3)
    B[..., 7, 1] = a2 * (s11 - s8 * s3)
    B[..., 8, 1] = a2 * (-s9 * s3)
    B[..., 9, 1] = a2 * (-s10 * s3)
    B[..., 10, 1] = a2 * (s8 - s11 * s3)
    B[..., 11, 1] = a2 * (s15 - s12 * s3)
    B[..., 12, 1] = a2 * (-s13 * s3)
    B[..., 13, 1] = a2 * (-s14 * s3)
    B[..., 14, 1] = a2 * (s12 - s15 * s3)
    return A, B


def _case2_ab(S: np.ndarray, a1: float, a2: float) -> tuple[np.ndarray, np.ndarray]:
    (s1, s2, s3, s4, s5, s6, s7, s8, s9, s10, s11, s12, s13, s14, s15) = _unpack(S)
    g1, g2 = a1 * a1, a2 * a2
    A = np.empty_like(S)
    A[..., 0] = 0.0
    A[..., 1] = -0.5 * g2 * s2
    A[..., 2] = -0.5 * g2 * s3
    A[..., 3] = -0.5 * g1 * s4
    A[..., 4] = -0.5 * g1 * s5
    A[..., 5] = -0.5 * (g1 + g2) * s6
    A[..., 6] = -0.5 * (g1 + g2) * s7
    A[..., 7] = -0.5 * g1 * s8
    A[..., 8] = -0.5 * g1 * s9
    A[..., 9] = -0.5 * (g1 + g2) * s10
    A[..., 10] = -0.5 * (g1 + g2) * s11
    A[..., 11] = 0.0
    A[..., 12] = 0.0
    A[..., 13] = -0.5 * g2 * s14
    A[..., 14] = -0.5 * g2 * s15
    B = np.empty(S.shape + (2,))
    B[..., 0, 0] = a1 * (s13 - s1 * s12)
    B[..., 1, 0] = a1 * (s14 - s2 * s12)
    B[..., 2, 0] = a1 * (s15 - s3 * s12)
    B[..., 3, 0] = a1 * (-s4 * s12)
    B[..., 4, 0] = a1 * (-s5 * s12)
    B[..., 5, 0] = a1 * (-s6 * s12)
    B[..., 6, 0] = a1 * (-s7 * s12)
    B[..., 7, 0] = a1 * (-s8 * s12)
    B[..., 8, 0] = a1 * (-s9 * s12)
    B[..., 9, 0] = a1 * (-s10 * s12)
    B[..., 10, 0] = a1 * (-s11 * s12)
    B[..., 11, 0] = a1 * (1.0 - s12 * s12)
    B[..., 12, 0] = a1 * (s1 - s13 * s12)
    B[..., 13, 0] = a1 * (s2 - s14 * s12)
    B[..., 14, 0] = a1 * (s3 - s15 * s12)
    B[..., 0, 1] = a2 * (1.0 - s1 * s1)
    B[..., 1, 1] = a2 * (-s2 * s1)
    B[..., 2, 1] = a2 * (-s3 * s1)
    B[..., 3, 1] = a2 * (s5 - s4 * s1)
    B[..., 4, 1] = a2 * (s4 - s5 * s1)
    B[..., 5, 1] = a2 * (-s6 * s1)
    B[..., 6, 1] = a2 * (-s7 * s1)
    B[..., 7, 1] = a2 * (s9 - s8 * s1)
    B[..., 8, 1] = a2 * (s8 - s9 * s1)
    B[..., 9, 1] = a2 * (-s10 * s1)
    B[..., 10, 1] = a2 * (-s11 * s1)
    B[..., 11, 1] = a2 * (s13 - s12 * s1)
    B[..., 12, 1] = a2 * (s12 - s13 * s1)
    B[..., 13, 1] = a2 * (-s14 * s1)
    B[..., 14, 1] = a2 * (-s15 * s1)
    return A, B


def _sz_ab(S: np.ndarray, a: float) -> tuple[np.ndarray, np.ndarray]:
    (s1, s2, s3, s4, s5, s6, s7, s8, s9, s10, s11, s12, s13, s14, s15) = _unpack(S)
    g = a * a
    u = s3 + s12  # = 2 <S_z>
    A = np.empty_like(S)
    A[..., 0] = -0.5 * g * s1
    A[..., 1] = -0.5 * g * s2
    A[..., 2] = 0.0
    A[..., 3] = -0.5 * g * s4
    A[..., 4] = g * (s10 - s5)
    A[..., 5] = g * (-s6 - s9)
    A[..., 6] = -0.5 * g * s7
    A[..., 7] = -0.5 * g * s8
    A[..., 8] = g * (-s6 - s9)
    A[..., 9] = g * (s5 - s10)
    A[..., 10] = -0.5 * g * s11
    A[..., 11] = 0.0
    A[..., 12] = -0.5 * g * s13
    A[..., 13] = -0.5 * g * s14
    A[..., 14] = 0.0
    B = np.empty(S.shape + (1,))
    B[..., 0, 0] = a * (s13 - s1 * u)
    B[..., 1, 0] = a * (s14 - s2 * u)
    B[..., 2, 0] = a * (1.0 - s3 * u + s15)
    B[..., 3, 0] = a * (s7 - s4 * u)
    B[..., 4, 0] = a * (-s5 * u)
    B[..., 5, 0] = a * (-s6 * u)
    B[..., 6, 0] = a * (s4 - s7 * u)
    B[..., 7, 0] = a * (s11 - s8 * u)
    B[..., 8, 0] = a * (-s9 * u)
    B[..., 9, 0] = a * (-s10 * u)
    B[..., 10, 0] = a * (s8 - s11 * u)
    B[..., 11, 0] = a * (1.0 - s12 * u + s15)
    B[..., 12, 0] = a * (s1 - s13 * u)
    B[..., 13, 0] = a * (s2 - s14 * u)
    B[..., 14, 0] = a * (-u * (s15 - 1.0))
    return A, B


def case1_coefficients(s, a1: float = 1.0, a2: float = 1.0) -> DiffusionModel:
    """Closed-form coefficients for independent z measurements on both spins."""
    A, B = _case1_ab(_vec(s), a1, a2)
    return DiffusionModel.from_ab(A, B)


def case2_coefficients(s, a1: float = 1.0, a2: float = 1.0) -> DiffusionModel:
    """Closed-form coefficients for z on particle 1, x on particle 2."""
    A, B = _case2_ab(_vec(s), a1, a2)
    return DiffusionModel.from_ab(A, B)


def sz_coefficients(s, a: float = 1.0) -> DiffusionModel:
    """Closed-form coefficients for the collective S_z measurement.

    The three noise loadings of (s12, s3, s15) are -a*kappa, -a*nu, -a*gamma
    in the compact notation provided by spinentropy.entropy.sz_compact.
    """
    A, B = _sz_ab(_vec(s), a)
    return DiffusionModel.from_ab(A, B)


# ---------------------------------------------------------------------------
# Integrators
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class IntegratorConfig:
    dt: float = 1e-4
    duration: float = 6.0
    seed: int = 0
    scheme: str = "EulerMaruyama"

    def __post_init__(self) -> None:
        if self.dt <= 0:
            raise ValueError("dt must be positive")
        if self.duration < self.dt:
            raise ValueError("duration must be at least one step")
        if self.scheme != "EulerMaruyama":
            raise ValueError(f"unsupported scheme {self.scheme!r}")


def euler_step(s, dm: DiffusionModel, dt: float, dW: np.ndarray):
    """One Euler-Maruyama step: s' = s + A dt + B dW.

    No renormalization or clamping is applied; invariant violations are the
    caller's to detect and flag.
    """
    dW = np.asarray(dW, dtype=float)
    if isinstance(s, CoherenceState):
        new = s.s + dm.a * dt + dm.b @ dW
        return CoherenceState(new, t=s.t + dt)
    return _vec(s) + dm.a * dt + dm.b @ dW


@dataclass(frozen=True)
class KrausPair:
    """The two incremental branch operators of one channel at a given state."""

    m_plus: np.ndarray
    m_minus: np.ndarray
    p_plus: float
    p_minus: float


def kraus_pair(model: LindbladModel, channel: int, dt: float, rho: np.ndarray) -> KrausPair:
    """Branch operators M_(+-) = (I + A_(+-))/sqrt2 and their raw probabilities."""
    L, _ = model.lindblads[channel]
    base = -1j * model.h_s * dt - 0.5 * (L.conj().T @ L) * dt
    root = np.sqrt(dt)
    eye4 = np.eye(4, dtype=complex)
    m_plus = (eye4 + base + L * root) / np.sqrt(2.0)
    m_minus = (eye4 + base - L * root) / np.sqrt(2.0)
    p_plus = np.trace(m_plus @ rho @ m_plus.conj().T).real
    p_minus = np.trace(m_minus @ rho @ m_minus.conj().T).real
    return KrausPair(m_plus, m_minus, p_plus, p_minus)


def kraus_step(rho: np.ndarray, model: LindbladModel, dt: float, rng) -> np.ndarray:
    """Apply one randomly selected Kraus branch per channel, renormalizing.

    The output is positive semidefinite by construction, which makes this
    stepper the positivity reference against the Euler-Maruyama path.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    for k in range(model.n_channels):
        pair = kraus_pair(model, k, dt, rho)
        if min(pair.p_plus, pair.p_minus) < -1e-12:
            raise ValueError("negative branch probability: dt too large for couplings")
        total = pair.p_plus + pair.p_minus
        m = pair.m_plus if rng.random() < pair.p_plus / total else pair.m_minus
        rho = m @ rho @ m.conj().T
        rho = rho / np.trace(rho).real
    return rho


def lindblad_reference(model: LindbladModel, rho0: np.ndarray, dt: float,
                       duration: float) -> np.ndarray:
    """Deterministic RK4 integration of the Lindblad master equation.

    Returns the series of density matrices on the grid t = 0, dt, ..., with
    duration/dt steps; this is the ensemble-mean oracle for the trajectory
    integrators.
    """
    H = model.h_s
    ops = [(L, L.conj().T, L.conj().T @ L) for L, _ in model.lindblads]

    def rhs(rho: np.ndarray) -> np.ndarray:
        out = -1j * (H @ rho - rho @ H)
        for L, Ld, LdL in ops:
            out += L @ rho @ Ld - 0.5 * (LdL @ rho + rho @ LdL)
        return out

    n_steps = int(round(duration / dt))
    series = np.empty((n_steps + 1, 4, 4), dtype=complex)
    rho = np.asarray(rho0, dtype=complex)
    series[0] = rho
    for i in range(n_steps):
        k1 = rhs(rho)
        k2 = rhs(rho + 0.5 * dt * k1)
        k3 = rhs(rho + 0.5 * dt * k2)
        k4 = rhs(rho + dt * k3)
        rho = rho + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        series[i + 1] = rho
    return series


def trajectory_stream(master_seed: int, traj_index: int) -> np.random.Generator:
    """Counter-based stream for one trajectory, independent of worker layout.

    Each trajectory draws its Wiener increments exclusively from its own
    stream, so ensembles are bit-identical however trajectories are
    partitioned across workers.
    """
    mask = (1 << 64) - 1
    key = np.array([master_seed & mask, traj_index & mask], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))
