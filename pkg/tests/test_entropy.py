"""Spectator coupling, reduced diffusion geometry, and entropy increments."""

import dataclasses

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import spinentropy.coherence as coh
import spinentropy.dynamics as dyn
import spinentropy.entropy as ent
from spinentropy.coherence import StatePreset, coherence_from_density
from spinentropy.dynamics import (case1_coefficients, case1_model,
                                  case2_coefficients, case2_model,
                                  coefficient_tables, sz_coefficients,
                                  sz_model, trajectory_stream)
from spinentropy.entropy import (EntropyAccumulator, IllConditioned,
                                 NonFiniteIncrement, RankDeficient,
                                 ReducedDiffusion, SingularD,
                                 SingularDenominator, SingularNu,
                                 SpectatorCoupling, accumulate, build_coupling,
                                 case1_entropy_increment, corrected_derivative,
                                 entropy_increment_1d,
                                 entropy_increment_general,
                                 general_increment_batch, reduced_diffusion,
                                 subspace_tables, sz_compact,
                                 sz_entropy_increment)

from conftest import random_physical_states

SINGLET = StatePreset.Singlet.coherence
DYN_SZ, SPEC_SZ = (2,), (11, 14)
DYN_C1, SPEC_C1 = (11,), (2, 14)
DYN_C2, SPEC_C2 = (0, 11), (12,)


def _case1_line_state(z, s5=-0.6, s10=-0.6):
    """A state on the singlet-start invariant line s3 = -s12, s15 = -1."""
    s = np.zeros(15)
    s[11], s[2], s[14] = z, -z, -1.0
    s[4], s[9] = s5, s10
    return s


def _product_state_zx(z, x):
    """Particle 1 polarized along z, particle 2 along x (case-2 manifold)."""
    rho1 = 0.5 * (np.eye(2) + z * np.array([[1.0, 0.0], [0.0, -1.0]], dtype=complex))
    rho2 = 0.5 * (np.eye(2) + x * np.array([[0.0, 1.0], [1.0, 0.0]], dtype=complex))
    return coherence_from_density(np.kron(rho1, rho2))


# ---------------------------------------------------------------------------
# Spectator coupling
# ---------------------------------------------------------------------------

def test_exception_hierarchy():
    for exc in (SingularNu, SingularDenominator):
        assert issubclass(exc, SingularD)
    for exc in (SingularD, IllConditioned, RankDeficient, NonFiniteIncrement):
        assert issubclass(exc, ent.EntropyEngineError)


def test_coupling_case1_singlet():
    coupling = build_coupling(case1_coefficients(SINGLET).d, DYN_C1, SPEC_C1)
    assert coupling.r[0, 0] == pytest.approx(-1.0, abs=1e-12)  # s3 row
    assert coupling.r[1, 0] == pytest.approx(0.0, abs=1e-12)   # s15 row


@pytest.mark.parametrize("z", [-0.7, -0.2, 0.4, 0.85])
def test_coupling_case1_along_line(z):
    # the coupling stays (-1, 0) everywhere on the invariant line
    D = case1_coefficients(_case1_line_state(z)).d
    coupling = build_coupling(D, DYN_C1, SPEC_C1)
    assert coupling.r[0, 0] == pytest.approx(-1.0, abs=1e-10)
    assert coupling.r[1, 0] == pytest.approx(0.0, abs=1e-10)


def test_coupling_sz_compact_ratios():
    """The spectators follow ds12 = (kappa/nu) ds3 and ds15 = (gamma/nu) ds3."""
    for s in random_physical_states(25, seed=41):
        c = sz_compact(s[2], s[11], s[14])
        if abs(c.nu) < 1e-3:
            continue
        coupling = build_coupling(sz_coefficients(s).d, DYN_SZ, SPEC_SZ)
        assert coupling.r[0, 0] == pytest.approx(c.kappa / c.nu, rel=1e-9)
        assert coupling.r[1, 0] == pytest.approx(c.gamma / c.nu, rel=1e-9)


def test_coupling_null_vectors_annihilate_d():
    s = random_physical_states(6, seed=43)[3]
    D = sz_coefficients(s).d
    coupling = build_coupling(D, DYN_SZ, SPEC_SZ)
    resid = D @ coupling.null_basis.T
    assert np.max(np.abs(resid)) < 1e-10 * np.linalg.norm(D, 2)
    # canonical form: P = I and Q = -R
    assert np.array_equal(coupling.p, np.eye(2))
    assert np.array_equal(coupling.q, -coupling.r)


def test_coupling_rank_deficient():
    # s1 is noise-driven under case 1, so it cannot be a spectator
    s = random_physical_states(4, seed=47)[1]
    with pytest.raises(RankDeficient):
        build_coupling(case1_coefficients(s).d, DYN_C1, (0,))


def test_coupling_ill_conditioned_at_fixed_point():
    # every coefficient vanishes at a collapse terminus
    D = case1_coefficients(StatePreset.ProductZUpZDown.coherence).d
    with pytest.raises(IllConditioned):
        build_coupling(D, DYN_C1, SPEC_C1)


def test_coupling_rejects_non_square():
    with pytest.raises(ValueError):
        build_coupling(np.zeros((3, 4)), (0,), (1,))


# ---------------------------------------------------------------------------
# Corrected derivatives
# ---------------------------------------------------------------------------

def _zero_coupling(dyn_idx, spec_idx):
    M, L = len(dyn_idx), len(spec_idx)
    basis = np.zeros((L, 15))
    for l, si in enumerate(spec_idx):
        basis[l, si] = 1.0
    return SpectatorCoupling(tuple(dyn_idx), tuple(spec_idx), basis,
                             np.eye(L), np.zeros((L, M)), np.zeros((L, M)))


def test_corrected_derivative_r_zero_is_plain_partial():
    s = random_physical_states(3, seed=53)[0]
    tab = coefficient_tables(sz_model(1.0))
    red = reduced_diffusion(tab, s, DYN_SZ, SPEC_SZ)
    out = corrected_derivative(red, _zero_coupling(DYN_SZ, SPEC_SZ), 2)
    assert np.array_equal(out, red.ddred[0])


def test_corrected_derivative_rejects_spectator_index():
    s = random_physical_states(3, seed=53)[1]
    tab = coefficient_tables(sz_model(1.0))
    red = reduced_diffusion(tab, s, DYN_SZ, SPEC_SZ)
    with pytest.raises(ValueError):
        corrected_derivative(red, _zero_coupling(DYN_SZ, SPEC_SZ), 11)


def _fd_along(f, s, direction, h):
    return (f(s + h * direction) - f(s - h * direction)) / (2.0 * h)


@pytest.mark.parametrize("seed", [61, 67, 71])
def test_corrected_derivative_fd_oracle_sz(seed):
    """Central differences along the constraint direction e_dyn + R e_spec."""
    s = random_physical_states(8, seed=seed)[5]
    tab = coefficient_tables(sz_model(1.0))
    D_full = sz_coefficients(s).d
    coupling = build_coupling(D_full, DYN_SZ, SPEC_SZ)
    red = reduced_diffusion(tab, s, DYN_SZ, SPEC_SZ, coupling)

    direction = np.zeros(15)
    direction[2] = 1.0
    direction[11] = coupling.r[0, 0]
    direction[14] = coupling.r[1, 0]
    fd = _fd_along(lambda v: reduced_diffusion(tab, v, DYN_SZ, SPEC_SZ).dred,
                   s, direction, 1e-6)
    exact = corrected_derivative(red, coupling, 2)
    assert np.max(np.abs(fd - exact)) < 1e-6 * max(1.0, np.max(np.abs(exact)))


def test_corrected_derivative_fd_oracle_case1_line():
    tab = coefficient_tables(case1_model(1.0, 1.0))
    s = _case1_line_state(0.35)
    coupling = build_coupling(case1_coefficients(s).d, DYN_C1, SPEC_C1)
    red = reduced_diffusion(tab, s, DYN_C1, SPEC_C1, coupling)
    direction = np.zeros(15)
    direction[11] = 1.0
    direction[2] = coupling.r[0, 0]
    direction[14] = coupling.r[1, 0]
    fd = _fd_along(lambda v: reduced_diffusion(tab, v, DYN_C1, SPEC_C1).dred,
                   s, direction, 1e-6)
    exact = corrected_derivative(red, coupling, 11)
    assert np.max(np.abs(fd - exact)) < 1e-6


def test_reduced_diffusion_cred_needs_coupling():
    s = random_physical_states(3, seed=73)[2]
    tab = coefficient_tables(sz_model(1.0))
    assert reduced_diffusion(tab, s, DYN_SZ, SPEC_SZ).cred is None
    coupling = build_coupling(sz_coefficients(s).d, DYN_SZ, SPEC_SZ)
    red = reduced_diffusion(tab, s, DYN_SZ, SPEC_SZ, coupling)
    assert red.cred is not None and red.cred.shape == (1,)


def test_reduced_diffusion_matches_full_matrix_blocks():
    # dred and dsd are plain blocks of the full 15x15 diffusion matrix
    s = random_physical_states(5, seed=79)[4]
    tab = coefficient_tables(case2_model(1.0, 1.0))
    red = reduced_diffusion(tab, s, DYN_C2, SPEC_C2)
    D_full = case2_coefficients(s).d
    assert np.allclose(red.dred, D_full[np.ix_(DYN_C2, DYN_C2)], atol=1e-12)
    assert np.allclose(red.dsd, D_full[np.ix_(SPEC_C2, DYN_C2)], atol=1e-12)


def test_reduced_derivative_stack_fd_oracle():
    """Exact polynomial derivatives of D against differences of b b^T / 2."""
    s = _product_state_zx(0.4, -0.3)
    tab = coefficient_tables(case2_model(1.0, 1.0))
    red = reduced_diffusion(tab, s, DYN_C2, SPEC_C2)
    sub = DYN_C2 + SPEC_C2

    def dred_at(v):
        return case2_coefficients(v).d[np.ix_(DYN_C2, DYN_C2)]

    for p, m in enumerate(sub):
        e = np.zeros(15)
        e[m] = 1.0
        fd1 = _fd_along(dred_at, s, e, 1e-6)
        assert np.max(np.abs(fd1 - red.ddred[p])) < 1e-8
        h = 1e-4
        fd2 = (dred_at(s + h * e) - 2.0 * dred_at(s) + dred_at(s - h * e)) / (h * h)
        assert np.max(np.abs(fd2 - red.d2dred[p, p])) < 1e-5


# ---------------------------------------------------------------------------
# Increment forms
# ---------------------------------------------------------------------------

def test_increment_1d_zero_derivatives():
    assert entropy_increment_1d(1.0, 0.0, 0.0, 0.3, 1e-4) == 0.0


def test_increment_1d_three_terms():
    D, d1, d2, dx, dt = 2.0, 0.5, -1.5, 0.01, 1e-3
    expected = -(d1 / D) * dx - d2 * dt + (d1 * d1 / D) * dt
    assert entropy_increment_1d(D, d1, d2, dx, dt) == pytest.approx(expected, rel=1e-15)


def test_increment_1d_singular():
    with pytest.raises(SingularD):
        entropy_increment_1d(1e-13, 0.5, 0.5, 0.01, 1e-4)


def _scalar_reduction(D, d1, d2):
    """Synthetic one-variable reduction with no spectators and zero drift."""
    return ReducedDiffusion(
        dyn_idx=(2,), spec_idx=(),
        dred=np.array([[D]]), ared=np.zeros(1),
        ddred=np.array([[[d1]]]), d2dred=np.array([[[[d2]]]]),
        dsd=np.zeros((0, 1)), ddsd=np.zeros((1, 0, 1)),
        dared=np.zeros((1, 1)))


@given(st.floats(0.1, 5.0), st.floats(-3.0, 3.0), st.floats(-3.0, 3.0),
       st.floats(-0.05, 0.05))
@settings(max_examples=80, deadline=None)
def test_general_reduces_to_scalar_form(D, d1, d2, dx):
    """With M = 1 the general form collapses to the three-term scalar form."""
    red = _scalar_reduction(D, d1, d2)
    coupling = _zero_coupling((2,), ())
    general = entropy_increment_general(red, coupling, [dx], 1e-4)
    scalar = entropy_increment_1d(D, d1, d2, dx, 1e-4)
    assert general == pytest.approx(scalar, rel=1e-12, abs=1e-15)


def test_general_raises_on_singular_matrix():
    red = _scalar_reduction(1e-14, 0.0, 0.0)
    with pytest.raises(SingularD):
        entropy_increment_general(red, _zero_coupling((2,), ()), [0.01], 1e-4)


def test_sz_closed_form_manifold():
    """On s3 = s12, s15 = 1 the closed form is 8a^2(z^2+1)dt + 8az dW."""
    rng = np.random.default_rng(83)
    dt = 1e-4
    for a in (1.0, 1.0 / np.sqrt(2.0), np.sqrt(2.0)):
        for z in np.linspace(-0.9, 0.9, 7):
            dW = rng.normal(0.0, np.sqrt(dt))
            inc = sz_entropy_increment(z, z, 1.0, a, dW, dt)
            expected = 8.0 * a * a * (z * z + 1.0) * dt + 8.0 * a * z * dW
            assert inc == pytest.approx(expected, rel=1e-10)
            swapped = sz_entropy_increment(z, z, 1.0, a, dW, dt, dynamical="s12")
            assert swapped == pytest.approx(expected, rel=1e-10)


def test_sz_closed_form_center_value():
    assert sz_entropy_increment(0.0, 0.0, 1.0, 1.0, 0.0, 1e-4) == pytest.approx(
        8e-4, rel=1e-12)


def test_sz_closed_form_singular_at_eigenstate():
    with pytest.raises(SingularNu):
        sz_entropy_increment(1.0, 1.0, 1.0, 1.0, 0.0, 1e-4)


def test_sz_swap_contract():
    # measuring through s12 equals measuring through s3 on the swapped state
    s = random_physical_states(9, seed=89)[7]
    dW, dt = 0.004, 1e-4
    a = 1.2
    assert sz_entropy_increment(s[2], s[11], s[14], a, dW, dt, dynamical="s12") == \
        sz_entropy_increment(s[11], s[2], s[14], a, dW, dt)


def test_case1_closed_form_manifold():
    rng = np.random.default_rng(97)
    dt = 1e-4
    for z in np.linspace(-0.9, 0.9, 9):
        dW1, dW2 = rng.normal(0.0, np.sqrt(dt), 2)
        inc = case1_entropy_increment(-z, z, -1.0, dW1, dW2, dt)
        expected = 4.0 * (z * z + 1.0) * dt + 4.0 * z * (dW1 - dW2)
        assert inc == pytest.approx(expected, rel=1e-10)


def test_case1_closed_form_center_value():
    assert case1_entropy_increment(0.0, 0.0, -1.0, 0.0, 0.0, 1e-4) == pytest.approx(
        4e-4, rel=1e-12)


def test_case1_closed_form_singular():
    with pytest.raises(SingularDenominator):
        case1_entropy_increment(1.0, 1.0, 1.0, 0.0, 0.0, 1e-4)


# ---------------------------------------------------------------------------
# Generic engine against the closed forms along trajectories
# ---------------------------------------------------------------------------

def _closed_vs_general_case1(n_traj, n_steps, seed=11, dt=1e-4):
    """Integrate case-1 trajectories, comparing both entropy routes per step."""
    tab = coefficient_tables(case1_model(1.0, 1.0))
    tables = subspace_tables(tab, DYN_C1 + SPEC_C1)
    S = np.tile(SINGLET, (n_traj, 1))
    streams = [trajectory_stream(seed, i) for i in range(n_traj)]
    sq = np.sqrt(dt)
    worst = 0.0
    for _ in range(n_steps):
        dW = np.stack([g.normal(0.0, sq, 2) for g in streams])
        A, B = dyn._case1_ab(S, 1.0, 1.0)
        ds = A * dt + np.einsum('nmk,nk->nm', B, dW)
        closed, den = ent._case1_core(S[:, 2], S[:, 11], S[:, 14],
                                      dW[:, 0], dW[:, 1], dt)
        gen, det = general_increment_batch(tab, S, DYN_C1, SPEC_C1,
                                           ds[:, [11]], dt, tables=tables)
        ok = (det > ent.SING_TOL) & (den > ent.SING_TOL)
        gap = np.abs(gen[ok] - closed[ok]) / np.maximum(np.abs(closed[ok]), 1e-6)
        worst = max(worst, float(gap.max()))
        S = S + ds
    return worst


def _closed_vs_general_sz(n_traj, n_steps, seed=13, dt=1e-4, a=1.0):
    tab = coefficient_tables(sz_model(a))
    tables = subspace_tables(tab, DYN_SZ + SPEC_SZ)
    S = np.tile(StatePreset.SxTripletZero.coherence, (n_traj, 1))
    streams = [trajectory_stream(seed, i) for i in range(n_traj)]
    sq = np.sqrt(dt)
    worst = 0.0
    for _ in range(n_steps):
        dW = np.stack([g.normal(0.0, sq, 1) for g in streams])
        A, B = dyn._sz_ab(S, a)
        ds = A * dt + np.einsum('nmk,nk->nm', B, dW)
        closed, nu = ent._sz_core(S[:, 2], S[:, 11], S[:, 14], a, dW[:, 0], dt)
        gen, det = general_increment_batch(tab, S, DYN_SZ, SPEC_SZ,
                                           ds[:, [2]], dt, tables=tables)
        ok = (det > ent.SING_TOL) & (np.abs(nu) > 1e-5)
        gap = np.abs(gen[ok] - closed[ok]) / np.maximum(np.abs(closed[ok]), 1e-6)
        worst = max(worst, float(gap.max()))
        S = S + ds
    return worst


def test_general_engine_matches_case1_closed_form():
    assert _closed_vs_general_case1(20, 2000) < 1e-9


def test_general_engine_matches_sz_closed_form():
    assert _closed_vs_general_sz(20, 2000) < 1e-9


def test_general_engine_matches_scalar_calls():
    # the batch path and the scalar path agree bit-for-bit
    tab = coefficient_tables(sz_model(1.0))
    tables = subspace_tables(tab, DYN_SZ + SPEC_SZ)
    states = random_physical_states(10, seed=101)
    dx = np.full((10, 1), 0.003)
    batch, det = general_increment_batch(tab, states, DYN_SZ, SPEC_SZ, dx, 1e-4,
                                         tables=tables)
    for i, s in enumerate(states):
        coupling = build_coupling(sz_coefficients(s).d, DYN_SZ, SPEC_SZ)
        red = reduced_diffusion(tab, s, DYN_SZ, SPEC_SZ, coupling)
        assert entropy_increment_general(red, coupling, dx[i], 1e-4) == \
            pytest.approx(batch[i], rel=1e-12)


def test_subspace_tables_do_not_change_results():
    tab = coefficient_tables(case2_model(1.0, 1.0))
    states = random_physical_states(16, seed=103)
    dx = np.full((16, 2), 1e-3)
    with_tables, _ = general_increment_batch(
        tab, states, DYN_C2, SPEC_C2, dx, 1e-4,
        tables=subspace_tables(tab, DYN_C2 + SPEC_C2))
    without, _ = general_increment_batch(tab, states, DYN_C2, SPEC_C2, dx, 1e-4)
    assert np.array_equal(with_tables, without)


def test_case2_increment_fd_oracle():
    """Independent route: diffusion blocks from b b^T / 2, derivatives by
    central differences along the constraint directions, assembled into the
    reduced-form increment."""
    dt = 1e-4
    rng = np.random.default_rng(107)
    tab = coefficient_tables(case2_model(1.0, 1.0))
    tables = subspace_tables(tab, DYN_C2 + SPEC_C2)

    def phi_at(v):
        D_full = case2_coefficients(v).d
        Dred = D_full[np.ix_(DYN_C2, DYN_C2)]
        Ddd_inv = np.linalg.inv(Dred)
        R = D_full[np.ix_(SPEC_C2, DYN_C2)] @ Ddd_inv
        h = 1e-5
        W = np.zeros(2)
        for j in range(2):
            e = np.zeros(15)
            e[DYN_C2[j]] = 1.0
            e[SPEC_C2[0]] = R[0, j]
            dD = _fd_along(lambda u: case2_coefficients(u).d[np.ix_(DYN_C2, DYN_C2)],
                           v, e, h)
            W += dD[:, j]
        # the dynamical variables are drift-free, so C = -W
        return Ddd_inv @ (-W), Dred, R

    for z, x in ((0.5, -0.2), (-0.4, 0.6), (0.15, 0.3)):
        s = _product_state_zx(z, x)
        dx = rng.normal(0.0, 0.01, 2)
        phi, Dred, R = phi_at(s)
        term1 = phi @ dx
        term2 = 0.0
        h1 = 1e-4
        for k in range(2):
            e = np.zeros(15)
            e[DYN_C2[k]] = 1.0
            e[SPEC_C2[0]] = R[0, k]
            dphi = (phi_at(s + h1 * e)[0] - phi_at(s - h1 * e)[0]) / (2.0 * h1)
            term2 += Dred[:, k] @ dphi
        oracle = term1 + term2 * dt
        engine, det = general_increment_batch(tab, s[None, :], DYN_C2, SPEC_C2,
                                              dx[None, :], dt, tables=tables)
        assert det[0] > 0.0
        assert engine[0] == pytest.approx(oracle, rel=1e-4)


def test_case2_dynamical_variables_are_drift_free():
    for s in random_physical_states(10, seed=109):
        dm = case2_coefficients(s)
        assert abs(dm.a[0]) < 1e-14
        assert abs(dm.a[11]) < 1e-14


def test_correction_guard_r_matters():
    """Zeroing the spectator blocks must change the increments on generic
    states; guards against the correction being silently dropped."""
    tab = coefficient_tables(sz_model(1.0))
    states = random_physical_states(20, seed=113)
    rel_gaps = []
    for s in states:
        coupling = build_coupling(sz_coefficients(s).d, DYN_SZ, SPEC_SZ)
        red = reduced_diffusion(tab, s, DYN_SZ, SPEC_SZ, coupling)
        uncorrected = dataclasses.replace(red, dsd=np.zeros_like(red.dsd),
                                          ddsd=np.zeros_like(red.ddsd))
        a = entropy_increment_general(red, coupling, [1e-3], 1e-4)
        b = entropy_increment_general(uncorrected, coupling, [1e-3], 1e-4)
        rel_gaps.append(abs(a - b) / max(abs(a), 1e-12))
    assert max(rel_gaps) > 1e-2
    assert np.median(rel_gaps) > 1e-6


# ---------------------------------------------------------------------------
# Regrouped compact quantities and terminus limits
# ---------------------------------------------------------------------------

def test_sz_compact_matches_naive_polynomial():
    rng = np.random.default_rng(127)
    s3, s12, s15 = rng.uniform(-1.0, 1.0, size=(3, 200))
    c = sz_compact(s3, s12, s15)
    assert np.allclose(c.kappa, s12 * s12 + s3 * s12 - s15 - 1.0, atol=5e-15)
    assert np.allclose(c.nu, s3 * s3 + s3 * s12 - s15 - 1.0, atol=5e-15)
    assert np.allclose(c.gamma, s3 * s15 + s12 * s15 - s3 - s12, atol=5e-15)


@given(st.floats(-1.0, 1.0), st.floats(-1.0, 1.0), st.floats(-1.0, 1.0))
@settings(max_examples=100, deadline=None)
def test_sz_compact_regrouping_identity(s3, s12, s15):
    c = sz_compact(s3, s12, s15)
    assert c.nu == pytest.approx(s3 * s3 + s3 * s12 - s15 - 1.0, abs=5e-15)


def test_sz_compact_vanishes_at_eigenstates():
    for s3, s12, s15 in ((1.0, 1.0, 1.0), (-1.0, -1.0, 1.0),
                         (1.0, -1.0, -1.0), (-1.0, 1.0, -1.0)):
        c = sz_compact(s3, s12, s15)
        assert c.kappa == 0.0 and c.nu == 0.0 and c.gamma == 0.0


def _mp_nu(s3, s12, s15):
    with mpmath.workdps(50):
        return mpmath.mpf(s3) * mpmath.mpf(s3) + mpmath.mpf(s3) * mpmath.mpf(s12) \
            - mpmath.mpf(s15) - 1
    # inputs are exact binary floats, so this is the true value to 50 digits


@pytest.mark.parametrize("s3,s12,s15", [
    # opposite-sign terminus: every factor of the grouped form is small
    (0.95 + 3e-13, -0.95 + 4e-13, -1.0 + 9.5e-13),
    # central terminus
    (2e-13, -3e-13, -1.0 + 4e-13),
])
def test_sz_compact_cancellation_accuracy(s3, s12, s15):
    """Near the slow fixed points the grouped form keeps relative accuracy
    where the naive expansion is destroyed by O(1) intermediates."""
    truth = float(_mp_nu(s3, s12, s15))
    grouped = float(sz_compact(s3, s12, s15).nu)
    naive = s3 * s3 + s3 * s12 - s15 - 1.0
    assert abs(truth) > 1e-14  # the probe itself must be resolvable
    assert abs(grouped - truth) < 1e-12 * abs(truth)
    assert abs(naive - truth) > 100.0 * abs(grouped - truth)


def test_sz_limit_aligned_manifold_exact():
    # on s3 = s12 = z, s15 = 1 the closed form IS the aligned limit form
    rng = np.random.default_rng(131)
    dt = 1e-4
    for z in (0.99, 0.999999, -0.9999):
        dW = rng.normal(0.0, np.sqrt(dt))
        inc = sz_entropy_increment(z, z, 1.0, 1.0, dW, dt)
        lim = 8.0 * z * dW + 8.0 * (1.0 + z * z) * dt
        assert inc == pytest.approx(lim, rel=1e-10)


def test_sz_limit_opposite_product_corridor():
    """Along product states s15 = s3 s12 with opposite polarizations the
    closed form converges linearly to the flat limit 4a sgn(s3) dW + 4a^2 dt."""
    dt = 1e-4
    dW = 0.008
    for t, tol in ((1e-6, 1e-5), (1e-8, 1e-6), (1e-10, 1e-8)):
        s3, s12 = -1.0 + 0.3 * t, 1.0 - t
        s15 = s3 * s12
        inc = sz_entropy_increment(s3, s12, s15, 1.0, dW, dt)
        lim = -4.0 * dW + 4.0 * dt
        assert inc == pytest.approx(lim, rel=tol)


def test_sz_limit_central_flow_corridor():
    """The central terminus is approached along the lock s15 = s3 + s12 - 1,
    where the closed form converges to the flat limit with noise sign -1."""
    dt = 1e-4
    dW = -0.006
    for t, tol in ((1e-5, 1e-4), (1e-7, 1e-6)):
        s3, s12 = 0.7 * t, -0.2 * t
        s15 = s3 + s12 - 1.0
        inc = sz_entropy_increment(s3, s12, s15, 1.0, dW, dt)
        lim = -4.0 * dW + 4.0 * dt
        assert inc == pytest.approx(lim, rel=tol)


def test_case2_limit_product_corridor():
    dt = 1e-4
    rng = np.random.default_rng(137)
    tab = coefficient_tables(case2_model(1.0, 1.0))
    tables = subspace_tables(tab, DYN_C2 + SPEC_C2)
    z = 0.3
    for ex in (1e-6, 1e-8, 1e-10):
        x = 1.0 - ex
        s = _product_state_zx(z, x)
        dW = rng.normal(0.0, np.sqrt(dt), 2)
        A, B = dyn.evaluate_tables(tab, s)
        ds = A * dt + B @ dW
        inc, det = general_increment_batch(tab, s[None, :], DYN_C2, SPEC_C2,
                                           ds[None, [0, 11]], dt, tables=tables)
        lim = (4.0 * z * dW[0] + 4.0 * x * dW[1]
               + (2.0 * (1.0 + z * z) + 2.0 * (1.0 + x * x)) * dt)
        assert det[0] > 0.0
        assert inc[0] == pytest.approx(lim, rel=1e-6)


# ---------------------------------------------------------------------------
# Accumulation
# ---------------------------------------------------------------------------

def test_accumulate_empty_stream():
    acc = accumulate([], lambda *a: 0.0)
    assert acc.value == 0.0
    assert not acc.excluded
    assert acc.series == [(0.0, 0.0)]


def test_accumulate_sums_increments():
    steps = [(None, 0.0, 0.0, 0.1)] * 5
    acc = accumulate(steps, lambda s, dx, dW, dt: 2.0 * dt)
    assert acc.value == pytest.approx(1.0)
    assert acc.series[-1] == (pytest.approx(0.5), pytest.approx(1.0))


def test_accumulate_sampling_stride():
    steps = [(None, 0.0, 0.0, 0.1)] * 10
    acc = accumulate(steps, lambda s, dx, dW, dt: 1.0, sample_every=4)
    times = [t for t, _ in acc.series]
    assert times == [pytest.approx(v) for v in (0.0, 0.4, 0.8, 1.0)]


def test_accumulate_marks_singular_and_keeps_value():
    def fn(s, dx, dW, dt):
        if s == "bad":
            raise SingularNu("nu vanished")
        return 1.0

    steps = [("ok", 0, 0, 0.1), ("ok", 0, 0, 0.1), ("bad", 0, 0, 0.1),
             ("ok", 0, 0, 0.1)]
    acc = accumulate(steps, fn)
    assert acc.excluded
    assert acc.reason == "SingularNu"
    assert acc.value == pytest.approx(2.0)  # frozen at the failure point


def test_accumulate_marks_non_finite():
    steps = [(None, 0, 0, 0.1)] * 3
    acc = accumulate(steps, lambda *a: np.inf)
    assert acc.excluded
    assert acc.reason == "NonFiniteIncrement"
    assert acc.value == 0.0


def test_accumulator_defaults():
    acc = EntropyAccumulator()
    assert acc.value == 0.0 and not acc.excluded and acc.reason is None
