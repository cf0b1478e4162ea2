"""Ensemble runner, statistics, and file output for the built-in protocols."""

from .cases import (
    CASE_NAMES,
    CaseConfig,
    EnsembleResult,
    EnsembleStats,
    InvalidConfig,
    TrajectoryRecord,
    default_config,
    run_case,
)
from .io import (
    default_outdir,
    manifest_dict,
    write_case_outputs,
    write_csv,
    write_manifest,
    write_run,
)
from .stats import (
    CASE_TARGETS,
    EmptySelection,
    RateFit,
    WindowTooShort,
    asymptotic_rate,
    case_targets,
    classify_collapse,
    conditional_mean,
    crossed_loci,
    crossed_locus,
    final_state_histogram,
    first_vanish_channel,
    locus_distance,
    petal_confined,
    petal_inside,
    rate_sensitivity,
    trajectory_scatter,
    vanish_times,
)

__all__ = [
    "CASE_NAMES", "CASE_TARGETS", "CaseConfig", "EmptySelection",
    "EnsembleResult", "EnsembleStats", "InvalidConfig", "RateFit",
    "TrajectoryRecord", "WindowTooShort", "asymptotic_rate", "case_targets",
    "classify_collapse", "conditional_mean", "crossed_loci", "crossed_locus",
    "default_config", "default_outdir", "final_state_histogram",
    "first_vanish_channel", "locus_distance", "manifest_dict",
    "petal_confined", "petal_inside", "rate_sensitivity", "run_case",
    "trajectory_scatter", "vanish_times", "write_case_outputs", "write_csv",
    "write_manifest", "write_run",
]
