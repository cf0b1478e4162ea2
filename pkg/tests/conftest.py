"""Shared fixtures for the test suite.

The reference ensembles are expensive, so each protocol is integrated once
per session and shared between the module tests and the acceptance gate.
Every run keeps the published defaults (seed 0, dt = 1e-4) and turns on
per-step positivity monitoring so the constraint checks see every step.
"""

import numpy as np
import pytest

import spinentropy.coherence as coh
from spinentropy.harness.cases import default_config, run_case


def _ensemble(case: str, **overrides):
    overrides.setdefault("positivity", "every-step")
    return run_case(default_config(case, **overrides))


@pytest.fixture(scope="session")
def run_case1():
    """Independent z measurements on both spins, singlet start."""
    return _ensemble("case1")


@pytest.fixture(scope="session")
def run_case2():
    """z on particle 1, x on particle 2, singlet start."""
    return _ensemble("case2")


@pytest.fixture(scope="session")
def run_caseA():
    return _ensemble("caseA")


@pytest.fixture(scope="session")
def run_caseA_weak():
    return _ensemble("caseA", a=1.0 / np.sqrt(2.0), n_traj=300)


@pytest.fixture(scope="session")
def run_caseA_strong():
    return _ensemble("caseA", a=np.sqrt(2.0), n_traj=300)


@pytest.fixture(scope="session")
def run_caseB():
    return _ensemble("caseB")


@pytest.fixture(scope="session")
def run_caseC():
    return _ensemble("caseC")


@pytest.fixture(scope="session")
def run_caseD():
    return _ensemble("caseD")


@pytest.fixture(scope="session")
def run_caseE():
    return _ensemble("caseE")


@pytest.fixture(scope="session")
def run_caseE_swapped():
    """Same protocol with the roles of s3 and s12 exchanged in the reduction."""
    return _ensemble("caseE", dynamical_vars=("s12",))


def random_physical_states(n: int, seed: int = 0) -> np.ndarray:
    """Coherence vectors of random valid density matrices.

    Alternates random pure kets with rank-2 mixtures so both boundary and
    interior states are exercised.
    """
    rng = np.random.default_rng(seed)
    out = np.empty((n, 15))
    for i in range(n):
        k = 1 if i % 2 == 0 else 2
        psi = rng.normal(size=(k, 4)) + 1j * rng.normal(size=(k, 4))
        psi /= np.linalg.norm(psi, axis=1, keepdims=True)
        w = rng.dirichlet(np.ones(k))
        rho = np.einsum('a,ai,aj->ij', w, psi, psi.conj())
        out[i] = coh.coherence_from_density(rho)
    return out


@pytest.fixture(scope="session")
def random_states():
    """1000 random valid states shared by the dual-route coefficient checks."""
    return random_physical_states(1000, seed=7)


def em_mean_case1(n_traj: int, duration: float, seed: int,
                  sample_every: int = 100, dt: float = 1e-4):
    """Ensemble mean of Euler-Maruyama trajectories from the singlet.

    Uses the closed-form coefficients directly so the comparison against
    the deterministic reference is independent of the harness plumbing.
    Returns (times, mean coherence vectors on the sample grid).
    """
    import spinentropy.dynamics as dyn

    n_steps = round(duration / dt)
    S = np.tile(coh.StatePreset.Singlet.coherence, (n_traj, 1))
    rng = np.random.default_rng(seed)
    sqdt = np.sqrt(dt)
    means = [S.mean(axis=0)]
    times = [0.0]
    for step in range(n_steps):
        dW = rng.normal(0.0, sqdt, size=(n_traj, 2))
        A, B = dyn._case1_ab(S, 1.0, 1.0)
        S = S + A * dt + np.einsum('nmk,nk->nm', B, dW)
        if (step + 1) % sample_every == 0:
            means.append(S.mean(axis=0))
            times.append((step + 1) * dt)
    return np.array(times), np.array(means)
