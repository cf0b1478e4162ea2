"""Environmental stochastic entropy production along measurement trajectories.

The coherence-vector SDE has far fewer noise channels than variables, so
its diffusion matrix D = (1/2) B B^T is singular.  Entropy increments are
therefore evaluated on a reduced set of "dynamical" variables carrying the
noise, while the remaining "spectator" variables ride along through exact
differential constraints dx_l = sum_m R_lm dx_m encoded by null
eigenvectors of D.  Every derivative of the reduced diffusion matrix must
be corrected for the spectator chain:

    dD_ij/dx_m = partial_m D_ij + sum_l (partial_l D_ij) R_lm.

With phi = Dred^{-1} C and C_i = A_i - sum_j dD_ij/dx_j (all derivatives
corrected), the increment over one step is

    d(Delta s_env) = sum_i phi_i dx_i + sum_ik Dred_ik (d phi_i / dx_k) dt,

again with corrected derivatives.  All derivatives here are exact
polynomial ones assembled from the coefficient tables; finite differences
appear only in the tests, as an independent oracle.

Indices into the coherence vector are 0-based throughout this module: the
component conventionally written s3 is index 2, s12 is index 11, s15 is
index 14.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .coherence import _vec
from .dynamics import CoefficientTables, evaluate_tables

NULL_TOL = 1e-10   # relative eigenvalue threshold for null-vector identification
SING_TOL = 1e-12   # absolute floor on the reduced diffusion matrix
COND_MAX = 1e12

# Crossover scales for collapse-frozen trajectories: below FREEZE_FLOOR
# the factor (1 - z)(1 + z) of a polarized variable is too small for the
# general engine's floating-point cancellations, and PRODUCT_RESID_TOL
# bounds how far from an exact product state a denominator-free limit
# form may stand in for it.
FREEZE_FLOOR = 1e-11
PRODUCT_RESID_TOL = 1e-6


class EntropyEngineError(Exception):
    """Base class for entropy-engine failures."""


class IllConditioned(EntropyEngineError):
    """The dynamical diffusion block cannot be inverted reliably."""


class RankDeficient(EntropyEngineError):
    """The null space of D does not span the requested spectator directions."""


class SingularD(EntropyEngineError):
    """Reduced diffusion matrix at or below the singularity floor."""


class SingularNu(SingularD):
    """The collective-Sz compact denominator nu vanished."""


class SingularDenominator(SingularD):
    """The two-channel closed-form denominator vanished."""


class NonFiniteIncrement(EntropyEngineError):
    """An entropy increment evaluated to inf or nan."""


# ---------------------------------------------------------------------------
# Spectator coupling
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SpectatorCoupling:
    """Dynamical/spectator split of the coherence variables at one state.

    null_basis rows are null eigenvectors of the full diffusion matrix in
    the canonical form v_l = e_spec(l) - sum_m R_lm e_dyn(m); with that
    choice P is the identity and Q = -R, so R = -P^{-1} Q holds trivially.
    R rows are indexed by spectator variables, columns by dynamical ones.
    """

    dyn_idx: tuple[int, ...]
    spec_idx: tuple[int, ...]
    null_basis: np.ndarray   # (L, n)
    p: np.ndarray            # (L, L)
    q: np.ndarray            # (L, M)
    r: np.ndarray            # (L, M)


def build_coupling(D: np.ndarray, dyn_idx, spec_idx, *, null_tol: float = NULL_TOL,
                   cond_max: float = COND_MAX) -> SpectatorCoupling:
    """Construct the spectator coupling R from the full diffusion matrix.

    R is obtained by regressing the spectator rows of D onto the dynamical
    block, which is equivalent to (and numerically stabler than) solving
    for null eigenvectors directly; the resulting canonical null vectors
    are validated against D afterwards.
    """
    D = np.asarray(D, dtype=float)
    n = D.shape[0]
    if D.shape != (n, n):
        raise ValueError("D must be square")
    dyn = tuple(int(i) for i in dyn_idx)
    spec = tuple(int(i) for i in spec_idx)
    M, L = len(dyn), len(spec)
    Ddd = D[np.ix_(dyn, dyn)]
    ev = np.linalg.eigvalsh(Ddd)
    lam_max = ev[-1]
    if lam_max <= 0.0 or ev[0] < lam_max / cond_max:
        raise IllConditioned(
            f"dynamical diffusion block not invertible within cond_max={cond_max:g} "
            f"(eigenvalues {ev})")
    R = np.linalg.solve(Ddd.T, D[np.ix_(spec, dyn)].T).T

    null_basis = np.zeros((L, n))
    for l, si in enumerate(spec):
        null_basis[l, si] = 1.0
        null_basis[l, list(dyn)] = -R[l]
    d_norm = np.linalg.norm(D, 2)
    resid = np.linalg.norm(D @ null_basis.T, axis=0)
    if np.any(resid > null_tol * max(d_norm, 1e-300)):
        raise RankDeficient(
            "null space of D does not span the spectator directions "
            f"(residuals {resid}, |D| = {d_norm:.3e})")
    return SpectatorCoupling(dyn, spec, null_basis, np.eye(L), -R, R)


# ---------------------------------------------------------------------------
# Exact derivatives of the reduced diffusion geometry
# ---------------------------------------------------------------------------
# Batch layout: arrays carry leading batch dims "..."; the subspace
# coordinate order is always dynamical variables first, then spectators.

@dataclass(frozen=True)
class SubspaceTables:
    """Constant pieces of the subspace derivative stack, hoisted per protocol."""

    sub: tuple[int, ...]
    beta0_sub: np.ndarray    # (P, K)
    beta1_rows: np.ndarray   # (K, P, 15)
    beta1_pp: np.ndarray     # (P wrt, P row, K)
    ell0: np.ndarray         # (K,)
    ell1: np.ndarray         # (K, 15)
    ell1_sub_t: np.ndarray   # (P, K) = ell1[:, sub].T
    d2B: np.ndarray          # (P, P, P, K), constant second partials
    a0_sub: np.ndarray       # (P,)
    a1_rows: np.ndarray      # (P, 15)
    dA_sub: np.ndarray       # (P wrt, P row)


def subspace_tables(tab: CoefficientTables, sub) -> SubspaceTables:
    """Precompute the constant tensors used by the subspace geometry."""
    sub = tuple(int(i) for i in sub)
    lst = list(sub)
    P = len(sub)
    ell1_sub_t = tab.ell1[:, lst].T.copy()
    eyeP = np.eye(P)
    d2B = (-eyeP[None, :, :, None] * ell1_sub_t[:, None, None, :]
           - eyeP[:, None, :, None] * ell1_sub_t[None, :, None, :])
    return SubspaceTables(
        sub=sub,
        beta0_sub=tab.beta0[lst, :].copy(),
        beta1_rows=tab.beta1[:, lst, :].copy(),
        beta1_pp=np.transpose(tab.beta1[:, lst][:, :, lst], (2, 1, 0)).copy(),
        ell0=tab.ell0, ell1=tab.ell1, ell1_sub_t=ell1_sub_t, d2B=d2B,
        a0_sub=tab.a0[lst].copy(), a1_rows=tab.a1[lst, :].copy(),
        dA_sub=tab.a1[np.ix_(lst, lst)].T.copy())


def _geometry_from_tables(st: SubspaceTables, S: np.ndarray):
    """B rows and exact D values/derivatives restricted to a variable subset.

    Returns (A_sub, dA_sub, D, dD, d2D) where derivative axes come first:
    dD[..., p, i, j] = partial D_ij / partial s_sub[p], and d2D adds a
    second leading derivative axis.
    """
    sub = list(st.sub)
    ell = st.ell0 + np.einsum('kn,...n->...k', st.ell1, S)             # (..., K)
    B = (st.beta0_sub
         + np.einsum('kmn,...n->...mk', st.beta1_rows, S)
         - S[..., sub, None] * ell[..., None, :])                      # (..., P, K)

    # dB[..., p, m, k] = beta1[k, sub_m, sub_p] - ell1[k, sub_p] s_sub_m
    #                    - ell_k delta(m == p)
    P = len(sub)
    eyeP = np.eye(P)
    dB = (st.beta1_pp
          - S[..., None, sub, None] * st.ell1_sub_t[:, None, :]
          - eyeP[:, :, None] * ell[..., None, None, :])

    D = 0.5 * np.einsum('...ik,...jk->...ij', B, B)
    dD = 0.5 * (np.einsum('...pik,...jk->...pij', dB, B)
                + np.einsum('...ik,...pjk->...pij', B, dB))
    d2D = 0.5 * (np.einsum('pqik,...jk->...pqij', st.d2B, B)
                 + np.einsum('...pik,...qjk->...pqij', dB, dB)
                 + np.einsum('...qik,...pjk->...pqij', dB, dB)
                 + np.einsum('...ik,pqjk->...pqij', B, st.d2B))

    A_sub = st.a0_sub + np.einsum('mn,...n->...m', st.a1_rows, S)
    return A_sub, st.dA_sub, D, dD, d2D


def _subspace_geometry(tab: CoefficientTables, S: np.ndarray, sub: tuple[int, ...]):
    return _geometry_from_tables(subspace_tables(tab, sub), S)


@dataclass(frozen=True)
class ReducedDiffusion:
    """Reduced diffusion matrix with its exact derivative stack at one state.

    Derivative axes run over the subspace coordinates, dynamical first then
    spectator (P = M + L entries).  cred is filled once a coupling is
    supplied, since the corrected divergence needs R.
    """

    dyn_idx: tuple[int, ...]
    spec_idx: tuple[int, ...]
    dred: np.ndarray            # (M, M)
    ared: np.ndarray            # (M,)
    ddred: np.ndarray           # (P, M, M)
    d2dred: np.ndarray          # (P, P, M, M)
    dsd: np.ndarray             # (L, M) spectator-dynamical block of D
    ddsd: np.ndarray            # (P, L, M)
    dared: np.ndarray           # (P, M)
    cred: np.ndarray | None = None


def reduced_diffusion(tab: CoefficientTables, s, dyn_idx, spec_idx,
                      coupling: SpectatorCoupling | None = None) -> ReducedDiffusion:
    """Evaluate the reduced diffusion geometry at one state."""
    S = _vec(s)
    dyn = tuple(int(i) for i in dyn_idx)
    spec = tuple(int(i) for i in spec_idx)
    M = len(dyn)
    sub = dyn + spec
    A_sub, dA_sub, D, dD, d2D = _subspace_geometry(tab, S, sub)
    red = ReducedDiffusion(
        dyn_idx=dyn, spec_idx=spec,
        dred=D[:M, :M], ared=A_sub[:M],
        ddred=dD[:, :M, :M], d2dred=d2D[:, :, :M, :M],
        dsd=D[M:, :M], ddsd=dD[:, M:, :M], dared=dA_sub[:, :M])
    if coupling is not None:
        W = _corrected_divergence(red.ddred, coupling.r)
        object.__setattr__(red, "cred", red.ared - W)
    return red


def corrected_derivative(red: ReducedDiffusion, coupling: SpectatorCoupling,
                         m: int) -> np.ndarray:
    """Total derivative dDred/dx_m including the spectator chain terms.

    m is the 0-based coherence index of a dynamical variable.
    """
    if m not in red.dyn_idx:
        raise ValueError(f"index {m} is not a dynamical variable of this reduction")
    pos = red.dyn_idx.index(m)
    M = len(red.dyn_idx)
    out = red.ddred[pos].copy()
    for l in range(len(red.spec_idx)):
        out += red.ddred[M + l] * coupling.r[l, pos]
    return out


def _corrected_divergence(ddred: np.ndarray, R: np.ndarray) -> np.ndarray:
    """W_i = sum_j dD_ij/dx_j with corrected derivatives; batch-friendly."""
    M = ddred.shape[-1]
    t1 = np.einsum('...jij->...i', ddred[..., :M, :, :])
    t2 = np.einsum('...lij,...lj->...i', ddred[..., M:, :, :], R)
    return t1 + t2


def _invert_pd(Dm: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Inverse and determinant of small symmetric blocks, batch-safe.

    Singular entries produce inf/nan rather than raising, so callers can
    mask them; explicit formulas cover M = 1, 2 (the protocols in scope).
    """
    M = Dm.shape[-1]
    with np.errstate(divide='ignore', invalid='ignore'):
        if M == 1:
            det = Dm[..., 0, 0]
            inv = 1.0 / Dm
        elif M == 2:
            det = Dm[..., 0, 0] * Dm[..., 1, 1] - Dm[..., 0, 1] * Dm[..., 1, 0]
            inv = np.empty_like(Dm)
            inv[..., 0, 0] = Dm[..., 1, 1]
            inv[..., 1, 1] = Dm[..., 0, 0]
            inv[..., 0, 1] = -Dm[..., 0, 1]
            inv[..., 1, 0] = -Dm[..., 1, 0]
            inv = inv / det[..., None, None]
        else:
            det = np.linalg.det(Dm)
            inv = np.linalg.inv(Dm)
    return inv, det


def _general_core(ared, dared, dred, ddred, d2dred, dsd, ddsd, dx, dt):
    """Shared evaluation of the reduced-entropy increment; batch-friendly.

    Returns (increment, det) with non-finite entries wherever the reduced
    matrix was singular.
    """
    M = dred.shape[-1]
    Dinv, det = _invert_pd(dred)
    with np.errstate(divide='ignore', invalid='ignore'):
        R = np.einsum('...lm,...mn->...ln', dsd, Dinv)
        # plain partials of R: dR_p = (dDsd_p - R dDdd_p) Dinv
        tmp = ddsd - np.einsum('...lm,...pmn->...pln', R, ddred)
        dR = np.einsum('...pln,...nm->...plm', tmp, Dinv)

        W = _corrected_divergence(ddred, R)
        C = ared - W
        # plain partials of W over all subspace coordinates p
        dW = (np.einsum('...pjij->...pi', d2dred[..., :, :M, :, :])
              + np.einsum('...plij,...lj->...pi', d2dred[..., :, M:, :, :], R)
              + np.einsum('...lij,...plj->...pi', ddred[..., M:, :, :], dR))
        dC = dared - dW

        phi = np.einsum('...ij,...j->...i', Dinv, C)
        inner = dC - np.einsum('...pij,...j->...pi', ddred, phi)
        dphi = np.einsum('...ij,...pj->...pi', Dinv, inner)
        # corrected derivative of phi along dynamical coordinate k
        dphi_corr = dphi[..., :M, :] + np.einsum('...li,...lk->...ki',
                                                 dphi[..., M:, :], R)
        term1 = np.einsum('...i,...i->...', phi, dx)
        term2 = np.einsum('...ik,...ki->...', dred, dphi_corr)
        inc = term1 + term2 * dt
    return inc, det


def entropy_increment_general(red: ReducedDiffusion, coupling: SpectatorCoupling,
                              dx, dt: float, *, sing_tol: float = SING_TOL) -> float:
    """One increment of Delta s_env from the reduced geometry at one state.

    dx is the step taken by the dynamical variables.  Reduces exactly to
    entropy_increment_1d when there is a single dynamical variable.
    """
    dx = np.atleast_1d(np.asarray(dx, dtype=float))
    ev = np.linalg.eigvalsh(red.dred)
    if ev[0] <= sing_tol:
        raise SingularD(f"reduced diffusion matrix eigenvalue {ev[0]:.3e} <= {sing_tol:g}")
    inc, _ = _general_core(red.ared, red.dared, red.dred, red.ddred, red.d2dred,
                           red.dsd, red.ddsd, dx, dt)
    inc = float(inc)
    if not np.isfinite(inc):
        raise NonFiniteIncrement("entropy increment is not finite")
    return inc


def general_increment_batch(tab: CoefficientTables, S: np.ndarray, dyn_idx,
                            spec_idx, dx_dyn: np.ndarray, dt: float,
                            tables: SubspaceTables | None = None
                            ) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized increments over a batch of states.

    Returns (increments, det) where singular states yield non-finite
    increments for the caller's exclusion policy instead of raising.
    Pass a precomputed ``subspace_tables`` result to skip the constant
    setup when calling once per integrator step.
    """
    dyn = tuple(int(i) for i in dyn_idx)
    spec = tuple(int(i) for i in spec_idx)
    M = len(dyn)
    if tables is None:
        tables = subspace_tables(tab, dyn + spec)
    A_sub, dA_sub, D, dD, d2D = _geometry_from_tables(tables, S)
    return _general_core(A_sub[..., :M], dA_sub[:, :M],
                         D[..., :M, :M], dD[..., :, :M, :M],
                         d2D[..., :, :, :M, :M],
                         D[..., M:, :M], dD[..., :, M:, :M],
                         dx_dyn, dt)


# ---------------------------------------------------------------------------
# Scalar three-term form and per-protocol closed forms
# ---------------------------------------------------------------------------

def entropy_increment_1d(D: float, dDdx: float, d2Ddx2: float, dx: float,
                         dt: float, *, sing_tol: float = SING_TOL) -> float:
    """Single-variable increment with zero reduced drift.

    -(1/D)(dD/dx) dx - (d2D/dx2) dt + (1/D)(dD/dx)^2 dt, where both
    derivatives are the corrected (spectator-chain) ones.
    """
    if D <= sing_tol:
        raise SingularD(f"scalar diffusion {D:.3e} <= {sing_tol:g}")
    return (-dDdx / D) * dx - d2Ddx2 * dt + (dDdx * dDdx / D) * dt


@dataclass(frozen=True)
class SzCompact:
    """kappa, nu, gamma: shared-noise loadings of (s12, s3, s15) under S_z."""

    kappa: float | np.ndarray
    nu: float | np.ndarray
    gamma: float | np.ndarray


def sz_compact(s3, s12, s15) -> SzCompact:
    """ds12 = -a kappa dW, ds3 = -a nu dW, ds15 = -a gamma dW."""
    s3 = np.asarray(s3, dtype=float)
    s12 = np.asarray(s12, dtype=float)
    s15 = np.asarray(s15, dtype=float)
    # Grouped so that near the slow fixed points (both z-components small,
    # or of opposite sign) every factor is itself small and the subtraction
    # carries no O(1) intermediate; the naive expansion loses all relative
    # accuracy there once |nu| drops below ~1e-12.
    zsum = s3 + s12
    p15 = s15 + 1.0
    kappa = s12 * zsum - p15
    nu = s3 * zsum - p15
    gamma = zsum * (s15 - 1.0)
    return SzCompact(kappa, nu, gamma)


def _sz_core(s3, s12, s15, a, dW_z, dt):
    """Closed-form Sz increment with s3 dynamical; returns (increment, nu)."""
    c = sz_compact(s3, s12, s15)
    kappa, nu, gamma = c.kappa, c.nu, c.gamma
    g = a * a
    E = 2.0 * (nu * (2.0 * s3 + s12) + s3 * kappa - gamma)
    with np.errstate(divide='ignore', invalid='ignore'):
        dt_coef = g * (-(1.0 / nu) * (-(4.0 * s3 + 2.0 * s12) * gamma
                                      + (4.0 * s3 * s3 + 4.0 * s3 * s12 - 2.0 * s15) * kappa)
                       - (6.0 * s3 * s3 + 8.0 * s3 * s12 + 2.0 * s12 * s12
                          - 4.0 * s15 - 2.0)
                       + E * E / (2.0 * nu * nu))
        noise = (a / nu) * E * dW_z
        inc = dt_coef * dt + noise
    return inc, nu


def sz_entropy_increment(s3, s12, s15, a, dW_z, dt, *, dynamical: str = "s3",
                         sing_tol: float = SING_TOL) -> float:
    """Closed-form entropy increment for the collective S_z measurement.

    dynamical selects which of s3 / s12 carries the reduction; the two
    choices are related by exchanging the roles of the two variables.
    """
    if dynamical == "s12":
        s3, s12 = s12, s3
    elif dynamical != "s3":
        raise ValueError(f"dynamical must be 's3' or 's12', got {dynamical!r}")
    inc, nu = _sz_core(np.asarray(s3, float), np.asarray(s12, float),
                       np.asarray(s15, float), a, np.asarray(dW_z, float), dt)
    if np.ndim(inc) == 0:
        if abs(float(nu)) <= sing_tol:
            raise SingularNu(f"|nu| = {abs(float(nu)):.3e} <= {sing_tol:g}")
        return float(inc)
    return inc


def _case1_core(s3, s12, s15, dW1, dW2, dt):
    """Closed-form two-channel increment with s12 dynamical; returns (inc, den)."""
    g1 = s12 * s12 - 1.0
    g2 = s3 * s12 - s15
    den = 0.5 * (g1 * g1 + g2 * g2)
    X = 2.0 * s12 * g1 + s3 * g2 - s12 * g2
    with np.errstate(divide='ignore', invalid='ignore'):
        dt_coef = (-(s3 * s3 - 4.0 * s3 * s12 + 7.0 * s12 * s12 + 2.0 * s15 - 2.0)
                   + X * X / den)
        noise = (X / den) * (g1 * dW1 + g2 * dW2)
    return dt_coef * dt + noise, den


def case1_entropy_increment(s3, s12, s15, dW1, dW2, dt, *,
                            sing_tol: float = SING_TOL) -> float:
    """Closed-form entropy increment for independent z measurements (a1=a2=1).

    s12 is the dynamical variable; s3 and s15 are spectators.
    """
    inc, den = _case1_core(np.asarray(s3, float), np.asarray(s12, float),
                           np.asarray(s15, float), np.asarray(dW1, float),
                           np.asarray(dW2, float), dt)
    if np.ndim(inc) == 0:
        if float(den) <= sing_tol:
            raise SingularDenominator(f"denominator {float(den):.3e} <= {sing_tol:g}")
        return float(inc)
    return inc


# ---------------------------------------------------------------------------
# Accumulation
# ---------------------------------------------------------------------------

@dataclass
class EntropyAccumulator:
    """Running Delta s_env with periodic samples and exclusion bookkeeping."""

    value: float = 0.0
    series: list = field(default_factory=list)   # (t, value) samples
    excluded: bool = False
    reason: str | None = None


def accumulate(steps, increment_fn, *, sample_every: int = 1) -> EntropyAccumulator:
    """Sum increments over a step stream of (s, dx_dyn, dW, dt) tuples.

    Any singularity signal from increment_fn marks the accumulator excluded
    and stops accumulation; the value up to that point is retained.
    """
    acc = EntropyAccumulator()
    t = 0.0
    acc.series.append((t, 0.0))
    for i, (s, dx_dyn, dW, dt) in enumerate(steps):
        if not acc.excluded:
            try:
                inc = increment_fn(s, dx_dyn, dW, dt)
                if not np.isfinite(inc):
                    raise NonFiniteIncrement("increment not finite")
                acc.value += inc
            except (SingularD, NonFiniteIncrement) as err:
                acc.excluded = True
                acc.reason = type(err).__name__
        t += dt
        if (i + 1) % sample_every == 0:
            acc.series.append((t, acc.value))
    if not acc.series or acc.series[-1][0] != t:
        acc.series.append((t, acc.value))
    return acc
