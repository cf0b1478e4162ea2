"""Collapse classification, conditional statistics, and trajectory geometry."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..coherence import (
    CollapseOutcome,
    OUTCOME_DENSITIES,
    coherence_from_density,
    density_from_coherence,
    purity,
)

# Classification thresholds shared by the classifier and the collapse
# fraction series.
COLLAPSE_DISTANCE = 0.05
COLLAPSE_PURITY = 0.995
MIXED_PURITY_BAND = 0.02
MIXED_SZ_BAND = 0.05

# An amplitude has vanished once it drops below VANISH_DROP and never
# exceeds VANISH_CEILING afterwards.
VANISH_DROP = 0.02
VANISH_CEILING = 0.05


class EmptySelection(ValueError):
    """No trajectory matched the requested conditioning."""


class WindowTooShort(ValueError):
    """Too few samples left in the fit window after exclusions."""


# Terminal states each protocol can reach, in reporting order.
CASE_TARGETS: dict[str, tuple[CollapseOutcome, ...]] = {
    "case1": (CollapseOutcome.ZupZdown, CollapseOutcome.ZdownZup),
    "case2": (CollapseOutcome.ZupXup, CollapseOutcome.ZupXdown,
              CollapseOutcome.ZdownXup, CollapseOutcome.ZdownXdown),
    "caseA": (CollapseOutcome.ZupZup, CollapseOutcome.ZdownZdown),
    "caseB": (CollapseOutcome.ZupZup, CollapseOutcome.TripletZero),
    "caseC": (CollapseOutcome.ZupZup, CollapseOutcome.ZdownZdown,
              CollapseOutcome.TripletZero),
    "caseD": (CollapseOutcome.ZupZup, CollapseOutcome.ZdownZdown,
              CollapseOutcome.MixedStationary),
    "caseE": (CollapseOutcome.ZupZup, CollapseOutcome.ZdownZdown,
              CollapseOutcome.ZupZdown),
}

# The purifying channels lift the mixed stationary state, replacing it with
# pure termini in the lifted sector.
_PURIFY_TARGETS = {
    "s2": (CollapseOutcome.ZupZup, CollapseOutcome.ZdownZdown,
           CollapseOutcome.TripletZero, CollapseOutcome.Singlet),
    "sz2": (CollapseOutcome.ZupZup, CollapseOutcome.ZdownZdown,
            CollapseOutcome.ZupZdown, CollapseOutcome.ZdownZup),
}


def case_targets(case: str, extra_lindblad: str | None = None
                 ) -> tuple[CollapseOutcome, ...]:
    """Terminal states for a protocol, honouring a purifying channel."""
    if extra_lindblad is not None:
        if extra_lindblad not in _PURIFY_TARGETS:
            raise ValueError(f"unknown purifying channel {extra_lindblad!r}")
        return _PURIFY_TARGETS[extra_lindblad]
    if case not in CASE_TARGETS:
        raise ValueError(f"unknown case {case!r}")
    return CASE_TARGETS[case]


def _target_coherence(outcome: CollapseOutcome) -> np.ndarray:
    return coherence_from_density(OUTCOME_DENSITIES[outcome])


def collapse_matrix(S: np.ndarray, targets) -> np.ndarray:
    """Boolean (..., n_targets): which trajectories sit at which terminus.

    Pure targets require trace distance below COLLAPSE_DISTANCE and purity
    above COLLAPSE_PURITY; the mixed stationary target instead requires
    purity within MIXED_PURITY_BAND of 1/2 and |<S_z>| below MIXED_SZ_BAND.
    """
    S = np.asarray(S, dtype=float)
    rho = density_from_coherence(S)
    pur = purity(S)
    sz = 0.5 * (S[..., 2] + S[..., 11])
    out = np.empty(S.shape[:-1] + (len(targets),), dtype=bool)
    for j, tgt in enumerate(targets):
        ev = np.linalg.eigvalsh(rho - OUTCOME_DENSITIES[tgt])
        dist = 0.5 * np.sum(np.abs(ev), axis=-1)
        if tgt is CollapseOutcome.MixedStationary:
            out[..., j] = ((np.abs(pur - 0.5) < MIXED_PURITY_BAND)
                           & (np.abs(sz) < MIXED_SZ_BAND))
        else:
            out[..., j] = (dist < COLLAPSE_DISTANCE) & (pur > COLLAPSE_PURITY)
    return out


def classify_collapse(s, targets) -> CollapseOutcome:
    """Assign a final state to one terminus, or Unresolved.

    If several targets match (possible only with overlapping tolerances) the
    nearest in trace distance wins.
    """
    S = np.asarray(s, dtype=float)
    if S.ndim != 1:
        raise ValueError("classify_collapse takes a single state")
    hits = collapse_matrix(S, targets)
    if not hits.any():
        return CollapseOutcome.Unresolved
    rho = density_from_coherence(S)
    best, best_d = None, np.inf
    for j, tgt in enumerate(targets):
        if not hits[j]:
            continue
        ev = np.linalg.eigvalsh(rho - OUTCOME_DENSITIES[tgt])
        d = 0.5 * np.sum(np.abs(ev))
        if d < best_d:
            best, best_d = tgt, d
    return best


def classify_batch(S: np.ndarray, targets) -> list[CollapseOutcome]:
    """Vectorized classifier over final states (N, 15)."""
    S = np.asarray(S, dtype=float)
    hits = collapse_matrix(S, targets)
    rho = density_from_coherence(S)
    dists = np.stack([0.5 * np.sum(np.abs(np.linalg.eigvalsh(
        rho - OUTCOME_DENSITIES[t])), axis=-1) for t in targets], axis=-1)
    masked = np.where(hits, dists, np.inf)
    idx = np.argmin(masked, axis=-1)
    any_hit = hits.any(axis=-1)
    return [targets[int(i)] if ok else CollapseOutcome.Unresolved
            for i, ok in zip(idx, any_hit)]


# ---------------------------------------------------------------------------
# Amplitude vanishing order
# ---------------------------------------------------------------------------

def first_vanish_channel(amps: np.ndarray, labels) -> str | None:
    """Which amplitude channel vanished first along one trajectory.

    amps has shape (n_samples, n_channels).  A channel vanishes at the first
    sample where it drops below VANISH_DROP and never exceeds VANISH_CEILING
    afterwards; the channel with the earliest such sample wins.
    """
    amps = np.asarray(amps, dtype=float)
    suffix_max = np.maximum.accumulate(amps[::-1, :], axis=0)[::-1, :]
    ok = (amps < VANISH_DROP) & (suffix_max < VANISH_CEILING)
    n = amps.shape[0]
    first = np.where(ok.any(axis=0), np.argmax(ok, axis=0), n)
    if (first == n).all():
        return None
    return labels[int(np.argmin(first))]


def vanish_times(amps: np.ndarray, t: np.ndarray) -> np.ndarray:
    """Vanishing time per channel (nan where the channel never vanishes)."""
    amps = np.asarray(amps, dtype=float)
    suffix_max = np.maximum.accumulate(amps[::-1, :], axis=0)[::-1, :]
    ok = (amps < VANISH_DROP) & (suffix_max < VANISH_CEILING)
    first = np.argmax(ok, axis=0)
    out = np.asarray(t, dtype=float)[first].astype(float)
    out[~ok.any(axis=0)] = np.nan
    return out


# ---------------------------------------------------------------------------
# Conditional means and rate fits
# ---------------------------------------------------------------------------

def _selected(records, outcome=None, first_vanish=None, include_excluded=True):
    sel = []
    for r in records:
        if outcome is not None and r.outcome is not outcome:
            continue
        if first_vanish is not None and r.first_vanish != first_vanish:
            continue
        if not include_excluded and r.excluded:
            continue
        sel.append(r)
    return sel


def conditional_mean(records, key: str, *, outcome: CollapseOutcome | None = None,
                     first_vanish: str | None = None,
                     include_excluded: bool | None = None
                     ) -> tuple[np.ndarray, np.ndarray, int]:
    """Mean of one sampled observable over a conditioned sub-ensemble.

    Returns (t, mean, n_selected).  Entropy conditioning drops trajectories
    excluded by the entropy engine; state observables keep them.
    """
    if include_excluded is None:
        include_excluded = key != "entropy"
    sel = _selected(records, outcome, first_vanish, include_excluded)
    if not sel:
        raise EmptySelection(
            f"no trajectories with outcome={outcome}, first_vanish={first_vanish}")
    t = sel[0].t
    stack = np.stack([r.observables[key] for r in sel])
    return t, stack.mean(axis=0), len(sel)


@dataclass(frozen=True)
class RateFit:
    """Least-squares slope of a mean series over a late-time window."""

    rate: float
    stderr: float
    window: tuple[float, float]
    n_points: int


def asymptotic_rate(t, values, window: tuple[float, float] | None = None, *,
                    collapse_fraction=None, trailing: float = 0.25,
                    min_points: int = 10) -> RateFit:
    """Fit the asymptotic production rate of a mean entropy series.

    Default window is the trailing fraction of the time span, further
    restricted to samples where the collapse fraction has reached 90%.
    Raises WindowTooShort if fewer than min_points samples survive.
    """
    t = np.asarray(t, dtype=float)
    v = np.asarray(values, dtype=float)
    mask = np.isfinite(v)
    if window is not None:
        mask &= (t >= window[0]) & (t <= window[1])
    else:
        mask &= t >= t[-1] - trailing * (t[-1] - t[0])
        if collapse_fraction is not None:
            mask &= np.asarray(collapse_fraction, dtype=float) >= 0.9
    if mask.sum() < min_points:
        raise WindowTooShort(
            f"{int(mask.sum())} samples in fit window, need {min_points}")
    tw, vw = t[mask], v[mask]
    slope, intercept = np.polyfit(tw, vw, 1)
    resid = vw - (slope * tw + intercept)
    dof = max(len(tw) - 2, 1)
    stderr = float(np.sqrt(resid @ resid / dof / np.sum((tw - tw.mean()) ** 2)))
    return RateFit(rate=float(slope), stderr=stderr,
                   window=(float(tw[0]), float(tw[-1])), n_points=int(len(tw)))


def rate_sensitivity(t, values, *, collapse_fraction=None,
                     fractions=(0.20, 0.25, 0.30)) -> dict[str, float | None]:
    """Fitted rate for several trailing-window widths, None where too short."""
    out: dict[str, float | None] = {}
    for f in fractions:
        key = f"trailing{int(round(100 * f))}"
        try:
            out[key] = asymptotic_rate(t, values, collapse_fraction=collapse_fraction,
                                       trailing=f).rate
        except WindowTooShort:
            out[key] = None
    return out


# ---------------------------------------------------------------------------
# Histograms and scatter extraction
# ---------------------------------------------------------------------------

def final_state_histogram(records, variable: str, *, bins: int = 101
                          ) -> tuple[np.ndarray, np.ndarray]:
    """Density histogram of one coherence component at the final sample.

    Returns (bin_edges, density) over [-1, 1] with the requested number of
    uniform bins.
    """
    vals = np.array([r.observables[variable][-1] for r in records])
    edges = np.linspace(-1.0, 1.0, bins + 1)
    density, _ = np.histogram(vals, bins=edges, density=True)
    return edges, density


def trajectory_scatter(records, x_key: str, y_key: str, *, every: int = 1
                       ) -> np.ndarray:
    """Sampled (x, y) points pooled over trajectories, shape (n_points, 2)."""
    xs, ys = [], []
    for r in records:
        xs.append(r.observables[x_key][::every])
        ys.append(r.observables[y_key][::every])
    return np.column_stack([np.concatenate(xs), np.concatenate(ys)])


# ---------------------------------------------------------------------------
# Geometry of the collective-measurement plane and the two-axis petals
# ---------------------------------------------------------------------------

SZ_LOCI = ("upper_ellipse", "lower_ellipse", "vertical_line", "unit_circle")


def locus_distance(name: str, x, z) -> np.ndarray:
    """Signed effective distance f/|grad f| to one invariant locus.

    Coordinates are (<S_x>, <S_z>).  The loci: two ellipses
    (2z -+ 1)^2 + 2x^2 = 1, the line x = 0, and the unit circle.
    """
    x = np.asarray(x, dtype=float)
    z = np.asarray(z, dtype=float)
    if name == "upper_ellipse":
        f = (2 * z - 1) ** 2 + 2 * x * x - 1
        grad = 4.0 * np.sqrt(x * x + (2 * z - 1) ** 2)
    elif name == "lower_ellipse":
        f = (2 * z + 1) ** 2 + 2 * x * x - 1
        grad = 4.0 * np.sqrt(x * x + (2 * z + 1) ** 2)
    elif name == "vertical_line":
        return x
    elif name == "unit_circle":
        f = x * x + z * z - 1
        grad = 2.0 * np.sqrt(x * x + z * z)
    else:
        raise ValueError(f"unknown locus {name!r}")
    return f / np.maximum(grad, 1e-12)


def crossed_locus(name: str, x, z, *, tol: float = 0.02) -> bool:
    """Whether a trajectory transits a locus beyond the tolerance band.

    A crossing needs the signed distance beyond +tol at one time and beyond
    -tol at a later time, in either order; riding along the locus within the
    band does not count.
    """
    d = locus_distance(name, x, z)
    above = d > tol
    below = d < -tol
    if not (above.any() and below.any()):
        return False
    first_above = int(np.argmax(above))
    first_below = int(np.argmax(below))
    last_above = len(d) - 1 - int(np.argmax(above[::-1]))
    last_below = len(d) - 1 - int(np.argmax(below[::-1]))
    return first_above < last_below or first_below < last_above


def crossed_loci(x, z, *, tol: float = 0.02) -> dict[str, bool]:
    return {name: crossed_locus(name, x, z, tol=tol) for name in SZ_LOCI}


# Four circular petals of radius 1/2 centred on the half-axes of the
# (<S_x,2>, <S_z,1>) plane.
PETAL_CENTERS = ((0.5, 0.0), (-0.5, 0.0), (0.0, 0.5), (0.0, -0.5))
PETAL_RADIUS = 0.5


def petal_inside(x, y, *, tol: float = 0.02) -> np.ndarray:
    """Membership of points in the union of the four petals (with margin)."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    inside = np.zeros(np.broadcast(x, y).shape, dtype=bool)
    for cx, cy in PETAL_CENTERS:
        inside |= np.hypot(x - cx, y - cy) <= PETAL_RADIUS + tol
    return inside


def petal_confined(x, y, *, tol: float = 0.02) -> bool:
    """Whether every point keeps both half-spin projections within 1/2."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    return bool((np.abs(x) <= 0.5 + tol).all() and (np.abs(y) <= 0.5 + tol).all())
