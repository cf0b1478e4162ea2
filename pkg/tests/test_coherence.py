"""Generator basis, state presets, and observable extraction."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import spinentropy.coherence as coh
from spinentropy.coherence import (CoherenceState, CollapseOutcome,
                                   OUTCOME_DENSITIES, SIGMA, StatePreset,
                                   case2_amplitudes, coherence_from_density,
                                   density_from_coherence, expectation,
                                   min_eigenvalue, purity, trace_distance,
                                   triplet_amplitudes)

RT2 = np.sqrt(2.0)


def test_generators_hermitian_traceless():
    for m in range(15):
        assert np.allclose(SIGMA[m], SIGMA[m].conj().T, atol=1e-15)
        assert abs(np.trace(SIGMA[m])) < 1e-15


def test_generators_orthonormal():
    # Tr(Sigma_m Sigma_n) = 4 delta_mn over all 225 pairs
    for m in range(15):
        for n in range(15):
            tr = np.trace(SIGMA[m] @ SIGMA[n]).real
            assert tr == pytest.approx(4.0 if m == n else 0.0, abs=1e-12)


def test_zero_vector_is_maximally_mixed():
    rho = density_from_coherence(np.zeros(15))
    assert np.allclose(rho, np.eye(4) / 4.0, atol=1e-16)
    assert np.allclose(coherence_from_density(np.eye(4) / 4.0), 0.0, atol=1e-16)


def test_roundtrip_identity_batch():
    rng = np.random.default_rng(3)
    s = rng.normal(scale=0.5, size=(64, 15))
    back = coherence_from_density(density_from_coherence(s))
    assert np.max(np.abs(back - s)) < 1e-12


@given(st.lists(st.floats(-2.0, 2.0, allow_nan=False), min_size=15, max_size=15))
@settings(max_examples=60, deadline=None)
def test_roundtrip_identity_property(vals):
    s = np.array(vals)
    back = coherence_from_density(density_from_coherence(s))
    assert np.max(np.abs(back - s)) < 1e-12


def test_density_is_hermitian_unit_trace_exactly():
    # structural consequence of the real-coefficient generator expansion:
    # Hermiticity holds bit-exactly, the trace to rounding of the four
    # diagonal entries (the generators are traceless, so it cannot depend
    # on s beyond that)
    rng = np.random.default_rng(11)
    s = rng.normal(scale=0.6, size=(32, 15))
    rho = density_from_coherence(s)
    assert np.array_equal(rho, np.swapaxes(rho.conj(), -1, -2))
    tr = np.trace(rho, axis1=-2, axis2=-1)
    assert np.max(np.abs(tr - 1.0)) < 1e-15


def test_singlet_components():
    s = StatePreset.Singlet.coherence
    expected = np.zeros(15)
    expected[[4, 9, 14]] = -1.0  # s5 = s10 = s15 = -1
    assert np.allclose(s, expected, atol=1e-12)


def test_triplet_sz_plus_components():
    s = StatePreset.TripletSzPlus.coherence
    expected = np.zeros(15)
    expected[[2, 11, 14]] = 1.0  # s3 = s12 = s15 = +1
    assert np.allclose(s, expected, atol=1e-12)


def test_product_up_down_components():
    s = StatePreset.ProductZUpZDown.coherence
    expected = np.zeros(15)
    expected[11] = 1.0
    expected[2] = -1.0
    expected[14] = -1.0
    assert np.allclose(s, expected, atol=1e-12)


TRIPLET_SECTOR = (StatePreset.TripletSzPlus, StatePreset.TripletSzZero,
                  StatePreset.TripletSzMinus, StatePreset.SxTripletZero,
                  StatePreset.SxPlusPlus, StatePreset.SxMinusMinus,
                  StatePreset.CaseBSuperposition)


@pytest.mark.parametrize("preset", TRIPLET_SECTOR)
def test_triplet_sector_identity(preset):
    """States with <S^2> = 2 satisfy s5 + s10 + s15 = 1."""
    s = preset.coherence
    assert s[4] + s[9] + s[14] == pytest.approx(1.0, abs=1e-12)
    assert expectation(coh.S_SQUARED, s) == pytest.approx(2.0, abs=1e-12)


def test_singlet_total_spin_zero():
    s = StatePreset.Singlet.coherence
    assert expectation(coh.S_SQUARED, s) == pytest.approx(0.0, abs=1e-12)


def test_s_squared_formula_matches_operator():
    # (3 + s5 + s10 + s15) / 2 against the matrix route
    rng = np.random.default_rng(5)
    for _ in range(50):
        psi = rng.normal(size=4) + 1j * rng.normal(size=4)
        psi /= np.linalg.norm(psi)
        s = coherence_from_density(np.outer(psi, psi.conj()))
        formula = 0.5 * (3.0 + s[4] + s[9] + s[14])
        assert expectation(coh.S_SQUARED, s) == pytest.approx(formula, abs=1e-12)


def test_case_b_superposition_observables():
    s = StatePreset.CaseBSuperposition.coherence
    assert expectation(coh.SX_TOTAL, s) == pytest.approx(1.0 / RT2, abs=1e-12)
    assert expectation(coh.SZ_TOTAL, s) == pytest.approx(0.5, abs=1e-12)


def test_single_particle_z_components():
    s = StatePreset.ProductZUpZDown.coherence
    assert expectation(coh.SZ1, s) == pytest.approx(0.5, abs=1e-12)
    assert expectation(coh.SZ2, s) == pytest.approx(-0.5, abs=1e-12)
    # sz1 reads s12/2, sz2 reads s3/2
    assert expectation(coh.SZ1, s) == pytest.approx(0.5 * s[11], abs=1e-12)
    assert expectation(coh.SZ2, s) == pytest.approx(0.5 * s[2], abs=1e-12)


# The moduli are square roots of projection weights, so an exactly zero
# weight resolves only to sqrt(eps) ~ 1e-8 in the modulus; the squared
# values carry the full 1e-12 comparison.

def _check_amps(amps, expected):
    assert np.allclose(amps, expected, atol=2e-8)
    assert np.allclose(amps ** 2, np.asarray(expected) ** 2, atol=1e-12)


def test_triplet_amplitudes_sx_triplet_zero():
    amps = triplet_amplitudes(StatePreset.SxTripletZero.coherence)
    _check_amps(amps, [1.0 / RT2, 0.0, 1.0 / RT2])


def test_triplet_amplitudes_sx_plus_plus():
    amps = triplet_amplitudes(StatePreset.SxPlusPlus.coherence)
    _check_amps(amps, [0.5, 1.0 / RT2, 0.5])


def test_triplet_amplitudes_pure_triplet_zero():
    amps = triplet_amplitudes(StatePreset.TripletSzZero.coherence)
    _check_amps(amps, [0.0, 1.0, 0.0])


def test_case_e_state_amplitudes():
    s = StatePreset.CaseEState.coherence
    assert np.allclose(triplet_amplitudes(s), [0.5, 0.5, 0.5], atol=1e-12)
    # the remaining quarter of the weight sits on the singlet
    rho_ud = OUTCOME_DENSITIES[CollapseOutcome.ZupZdown]
    p_ud = np.einsum('ij,ji->', density_from_coherence(s), rho_ud).real
    assert p_ud == pytest.approx(0.5, abs=1e-12)


def test_case2_amplitudes_singlet():
    amps = case2_amplitudes(StatePreset.Singlet.coherence)
    assert np.allclose(amps, [0.5, 0.5, 0.5, 0.5], atol=1e-12)


def test_case2_amplitudes_product_outcomes():
    for j, outcome in enumerate((CollapseOutcome.ZupXup, CollapseOutcome.ZupXdown,
                                 CollapseOutcome.ZdownXup, CollapseOutcome.ZdownXdown)):
        s = coherence_from_density(OUTCOME_DENSITIES[outcome])
        expected = np.zeros(4)
        expected[j] = 1.0
        _check_amps(case2_amplitudes(s), expected)


def test_purity_values():
    assert purity(np.zeros(15)) == pytest.approx(0.25, abs=1e-15)
    assert purity(StatePreset.Singlet.coherence) == pytest.approx(1.0, abs=1e-12)
    assert purity(StatePreset.CaseDMixed.coherence) == pytest.approx(0.25, abs=1e-15)
    mixed = coherence_from_density(OUTCOME_DENSITIES[CollapseOutcome.MixedStationary])
    assert purity(mixed) == pytest.approx(0.5, abs=1e-12)


def test_purity_matches_matrix_route():
    rng = np.random.default_rng(17)
    s = rng.normal(scale=0.4, size=(40, 15))
    rho = density_from_coherence(s)
    direct = np.einsum('nij,nji->n', rho, rho).real
    assert np.allclose(purity(s), direct, atol=1e-12)


@given(st.integers(0, 10**6))
@settings(max_examples=60, deadline=None)
def test_physical_state_properties(seed):
    """Random pure states: unit purity, PSD, amplitude weights below one."""
    rng = np.random.default_rng(seed)
    psi = rng.normal(size=4) + 1j * rng.normal(size=4)
    psi /= np.linalg.norm(psi)
    s = coherence_from_density(np.outer(psi, psi.conj()))
    assert purity(s) == pytest.approx(1.0, abs=1e-12)
    assert min_eigenvalue(s) > -1e-12
    assert np.sum(triplet_amplitudes(s) ** 2) <= 1.0 + 1e-9
    assert np.sum(case2_amplitudes(s) ** 2) <= 1.0 + 1e-9


def test_min_eigenvalue_flags_unphysical():
    s = np.zeros(15)
    s[0] = 2.0  # |s| too large for any density matrix
    assert min_eigenvalue(s) < -0.1
    for preset in StatePreset:
        assert min_eigenvalue(preset.coherence) > -1e-12


def test_expectation_rejects_non_hermitian():
    bad = np.array([[0.0, 1.0], [0.0, 0.0]])
    bad = np.kron(bad, np.eye(2))
    with pytest.raises(ValueError):
        expectation(bad, np.zeros(15))


def test_coherence_from_density_validates():
    rho = StatePreset.Singlet.density
    with pytest.raises(ValueError):
        coherence_from_density(rho + 1e-6 * np.array([[0, 1j], [0, 0]]).repeat(2, 0).repeat(2, 1))
    with pytest.raises(ValueError):
        coherence_from_density(1.1 * rho)
    # validation can be bypassed for intermediate quantities
    out = coherence_from_density(1.1 * rho, validate=False)
    assert np.isfinite(out).all()


def test_coherence_state_contract():
    with pytest.raises(ValueError):
        CoherenceState(np.zeros(14))
    st_ = CoherenceState(np.zeros(15), t=1.5)
    assert st_.t == 1.5
    with pytest.raises(ValueError):
        st_.s[0] = 1.0  # frozen


def test_vector_shape_check():
    with pytest.raises(ValueError):
        density_from_coherence(np.zeros(14))


def test_trace_distance_limits():
    singlet = StatePreset.Singlet
    assert trace_distance(singlet.coherence, singlet.density) == pytest.approx(0.0, abs=1e-12)
    # orthogonal pure states sit at the maximal distance 1
    assert trace_distance(singlet.coherence,
                          OUTCOME_DENSITIES[CollapseOutcome.ZupZup]) == pytest.approx(1.0, abs=1e-12)
