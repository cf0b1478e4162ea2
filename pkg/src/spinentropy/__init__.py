"""Stochastic entropy production along quantum state diffusion trajectories
of two continuously measured spin-1/2 particles.

The package has four layers:

- coherence: the 15-component generalized Bloch description of a two-spin
  density matrix, state presets, and collapse targets.
- dynamics: the diffusive unravelling of the measurement master equation,
  closed-form and generic drift/noise coefficients, and integrators.
- entropy: the environmental stochastic entropy increment for diffusions
  with a singular diffusion matrix, via spectator elimination and
  noise-constrained (corrected) derivatives.
- harness: ensemble runs of the built-in protocols, collapse statistics,
  and deterministic CSV/manifest output (also exposed as the spinentropy
  command line tool).
"""

from .coherence import (
    POS_TOL,
    SIGMA,
    CoherenceState,
    CollapseOutcome,
    OUTCOME_DENSITIES,
    StatePreset,
    case2_amplitudes,
    coherence_from_density,
    density_from_coherence,
    expectation,
    min_eigenvalue,
    purity,
    trace_distance,
    triplet_amplitudes,
)
from .dynamics import (
    CoefficientTables,
    DiffusionModel,
    IntegratorConfig,
    KrausPair,
    LindbladModel,
    case1_coefficients,
    case1_model,
    case2_coefficients,
    case2_model,
    coefficient_tables,
    euler_step,
    evaluate_tables,
    kraus_pair,
    kraus_step,
    lindblad_reference,
    sde_from_lindblads,
    sz_coefficients,
    sz_model,
    trajectory_stream,
)
from .entropy import (
    EntropyAccumulator,
    EntropyEngineError,
    IllConditioned,
    NonFiniteIncrement,
    RankDeficient,
    ReducedDiffusion,
    SingularD,
    SingularDenominator,
    SingularNu,
    SpectatorCoupling,
    SzCompact,
    accumulate,
    build_coupling,
    case1_entropy_increment,
    corrected_derivative,
    entropy_increment_1d,
    entropy_increment_general,
    general_increment_batch,
    reduced_diffusion,
    subspace_tables,
    sz_compact,
    sz_entropy_increment,
)
from . import harness

__version__ = "0.1.0"

__all__ = [
    "POS_TOL", "SIGMA", "CoherenceState", "CollapseOutcome",
    "OUTCOME_DENSITIES", "StatePreset", "case2_amplitudes",
    "coherence_from_density", "density_from_coherence", "expectation",
    "min_eigenvalue", "purity", "trace_distance", "triplet_amplitudes",
    "CoefficientTables", "DiffusionModel", "IntegratorConfig", "KrausPair",
    "LindbladModel", "case1_coefficients", "case1_model",
    "case2_coefficients", "case2_model", "coefficient_tables", "euler_step",
    "evaluate_tables", "kraus_pair", "kraus_step", "lindblad_reference",
    "sde_from_lindblads", "sz_coefficients", "sz_model", "trajectory_stream",
    "EntropyAccumulator", "EntropyEngineError", "IllConditioned",
    "NonFiniteIncrement", "RankDeficient", "ReducedDiffusion", "SingularD",
    "SingularDenominator", "SingularNu", "SpectatorCoupling", "SzCompact",
    "accumulate", "build_coupling", "case1_entropy_increment",
    "corrected_derivative", "entropy_increment_1d",
    "entropy_increment_general", "general_increment_batch",
    "reduced_diffusion", "subspace_tables", "sz_compact",
    "sz_entropy_increment", "harness",
]
