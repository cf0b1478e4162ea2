"""Deterministic CSV and manifest output for ensemble runs.

Every float is written with 17 significant digits so a rerun of the same
manifest reproduces files byte for byte.
"""

from __future__ import annotations

import csv
import dataclasses
import json
import os
from pathlib import Path

import numpy as np

from . import stats as hstats
from .cases import (
    CASE2_AMP_KEYS,
    TRIPLET_AMP_KEYS,
    CaseConfig,
    EnsembleResult,
)

OUTDIR_ENV = "SPINENTROPY_OUTDIR"
FLOAT_FMT = "%.17g"


def default_outdir() -> Path:
    return Path(os.environ.get(OUTDIR_ENV, "results"))


def _fmt(v) -> str:
    if isinstance(v, (float, np.floating)):
        return FLOAT_FMT % v
    return str(v)


def write_csv(path, columns: dict[str, np.ndarray]) -> None:
    """Write named columns; a column named time always comes first."""
    names = list(columns)
    if "time" in names:
        names.remove("time")
        names.insert(0, "time")
    rows = zip(*(np.asarray(columns[n]) for n in names))
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(names)
        for row in rows:
            w.writerow([_fmt(v) for v in row])


def config_dict(config: CaseConfig) -> dict:
    d = dataclasses.asdict(config)
    d["initial"] = config.initial.value
    d["dynamical_vars"] = list(config.dynamical_vars)
    return d


def _jsonable(value):
    """Recursively convert numpy scalars and non-finite floats for JSON."""
    if isinstance(value, dict):
        return {k: _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    if isinstance(value, (np.integer,)):
        return int(value)
    if isinstance(value, (float, np.floating)):
        v = float(value)
        return v if np.isfinite(v) else None
    return value


def manifest_dict(result: EnsembleResult, files: list[str]) -> dict:
    """Everything needed to audit or reproduce a run."""
    st = result.stats
    rate = None
    if st.rate is not None:
        rate = dict(rate=st.rate.rate, stderr=st.rate.stderr,
                    window=list(st.rate.window), n_points=st.rate.n_points)
    excl = [dict(index=r.index, time=r.exclusion_time)
            for r in result.records if r.excluded]
    partial = result.config.entropy_enabled and st.n_excluded > 0
    return {
        "config": config_dict(result.config),
        "n_trajectories": st.n_traj,
        "outcome_counts": st.outcome_counts,
        "exclusions": {
            "count": st.n_excluded,
            "fraction": st.n_excluded / st.n_traj,
            "trajectories": excl,
        },
        "positivity": {
            "min_eigenvalue": st.min_eigenvalue,
            "n_violations": st.n_positivity_violations,
            "mode": result.config.positivity,
        },
        "asymptotic_rate": rate,
        "rate_note": st.rate_note,
        "rate_window_sensitivity": st.rate_sensitivity,
        "partial": partial,
        "files": sorted(files),
    }


def write_manifest(path, manifest: dict) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as fh:
        json.dump(_jsonable(manifest), fh, indent=2, sort_keys=True)
        fh.write("\n")


def write_case_outputs(result: EnsembleResult, outdir,
                       tag: str = "") -> list[str]:
    """Write the standard product files for one run; returns file names."""
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    cfg = result.config
    st = result.stats
    written: list[str] = []

    def emit(name: str, columns: dict) -> None:
        write_csv(outdir / name, columns)
        written.append(name)

    suffix = f"_{tag}" if tag else ""
    emit(f"mean_entropy{suffix}.csv", {
        "time": st.t, "mean_entropy": st.mean_entropy,
        "sem_entropy": st.sem_entropy,
        "collapse_fraction": st.collapse_fraction})

    labels = sorted(st.outcome_counts)
    emit(f"outcomes{suffix}.csv", {
        "outcome": np.array(labels),
        "count": np.array([st.outcome_counts[k] for k in labels])})

    amp_keys = CASE2_AMP_KEYS if cfg.case == "case2" else TRIPLET_AMP_KEYS
    t, _, _ = hstats.conditional_mean(result.records, "purity")
    mean_cols = {"time": t}
    for key in amp_keys + ("purity", "sz", "sx"):
        _, m, _ = hstats.conditional_mean(result.records, key)
        mean_cols[key] = m
    emit(f"observables_mean{suffix}.csv", mean_cols)

    # per-outcome conditional amplitude means, for the collapse cascade plots
    for outcome in cfg.targets():
        try:
            cols = {"time": t}
            for key in amp_keys:
                _, m, n_sel = hstats.conditional_mean(
                    result.records, key, outcome=outcome)
                cols[key] = m
            emit(f"amplitudes_{outcome.value}{suffix}.csv", cols)
        except hstats.EmptySelection:
            continue

    if cfg.case == "case2":
        pts = hstats.trajectory_scatter(result.records, "sx2", "sz1")
        emit(f"scatter_sx2_sz1{suffix}.csv",
             {"sx2": pts[:, 0], "sz1": pts[:, 1]})
    else:
        pts = hstats.trajectory_scatter(result.records, "sx", "sz")
        emit(f"scatter_sx_sz{suffix}.csv", {"sx": pts[:, 0], "sz": pts[:, 1]})
        for var in ("s3", "s12"):
            edges, dens = hstats.final_state_histogram(result.records, var)
            centers = 0.5 * (edges[:-1] + edges[1:])
            emit(f"final_hist_{var}{suffix}.csv",
                 {"bin_center": centers, "density": dens})

    # per-outcome entropy means where available
    if cfg.entropy_enabled:
        cols = {"time": t}
        for outcome in cfg.targets():
            try:
                _, m, _ = hstats.conditional_mean(
                    result.records, "entropy", outcome=outcome)
                cols[f"entropy_{outcome.value}"] = m
            except hstats.EmptySelection:
                continue
        if len(cols) > 1:
            emit(f"entropy_by_outcome{suffix}.csv", cols)

    return written


def write_run(result: EnsembleResult, outdir) -> Path:
    """Write product files plus manifest.json; returns the manifest path."""
    files = write_case_outputs(result, outdir)
    manifest = manifest_dict(result, files)
    path = Path(outdir) / "manifest.json"
    write_manifest(path, manifest)
    return path
