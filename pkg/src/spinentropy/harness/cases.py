"""Protocol configurations and the trajectory-ensemble integrator.

Seven measurement protocols are built in.  case1 and case2 measure the two
spins through separate channels; the caseA..caseE family measures the
collective z spin, differing in initial state, duration, and (for caseD)
an optional purifying channel.
"""

from __future__ import annotations

import concurrent.futures
import math
from dataclasses import dataclass

import numpy as np

from .. import dynamics as dyn
from .. import entropy as ent
from ..coherence import (
    POS_TOL,
    CollapseOutcome,
    StatePreset,
    _CASE2_KETS,
    _TRIPLET_KETS,
    _ket,
    _DOWN,
    _UP,
    SIGMA,
)
from . import stats as hstats

CASE_NAMES = ("case1", "case2", "caseA", "caseB", "caseC", "caseD", "caseE")

VAR_INDEX = {f"s{i + 1}": i for i in range(15)}

# Wiener increments are drawn per trajectory in fixed blocks of this many
# steps, so the draw pattern never depends on chunking or worker count.
NOISE_BLOCK = 20000

# Variables i, j, k of each protocol's closed reduction triple; the
# dynamical subset must come from here and the rest are spectators.
REDUCTION_TRIPLES = {
    "case1": ("s3", "s12", "s15"),
    "case2": ("s1", "s12", "s13"),
    "caseA": ("s3", "s12", "s15"),
    "caseB": ("s3", "s12", "s15"),
    "caseC": ("s3", "s12", "s15"),
    "caseD": ("s3", "s12", "s15"),
    "caseE": ("s3", "s12", "s15"),
}

_DEFAULTS: dict[str, dict] = {
    "case1": dict(initial=StatePreset.Singlet, duration=6.0, n_traj=326,
                  dynamical_vars=("s12",)),
    "case2": dict(initial=StatePreset.Singlet, duration=12.0, n_traj=314,
                  dynamical_vars=("s1", "s12")),
    "caseA": dict(initial=StatePreset.SxTripletZero, duration=6.0, n_traj=600,
                  dynamical_vars=("s3",)),
    "caseB": dict(initial=StatePreset.CaseBSuperposition, duration=12.0,
                  n_traj=370, dynamical_vars=("s3",)),
    "caseC": dict(initial=StatePreset.SxPlusPlus, duration=12.0, n_traj=445,
                  dynamical_vars=("s3",)),
    "caseD": dict(initial=StatePreset.CaseDMixed, duration=16.0, n_traj=137,
                  dynamical_vars=("s3",)),
    "caseE": dict(initial=StatePreset.CaseEState, duration=12.0, n_traj=200,
                  dynamical_vars=("s3",)),
}

SZ_FAMILY = ("caseA", "caseB", "caseC", "caseD", "caseE")


class InvalidConfig(ValueError):
    """A CaseConfig field fails validation."""


@dataclass(frozen=True)
class CaseConfig:
    """Full description of one ensemble run.

    Fields left as None are filled from the per-case defaults.  a is the
    collective coupling for the caseA..caseE family; a1, a2 are the two
    channel couplings for case1 and case2.
    """

    case: str
    initial: StatePreset | None = None
    dt: float = 1e-4
    duration: float | None = None
    n_traj: int | None = None
    seed: int = 0
    a: float = 1.0
    a1: float = 1.0
    a2: float = 1.0
    dynamical_vars: tuple[str, ...] | None = None
    extra_lindblad: str | None = None
    extra_coupling: float | None = None
    sample_every: int = 100
    positivity: str = "sampled"      # sampled | every-step | off
    entropy: bool = True
    chunk_size: int = 256
    n_workers: int = 1

    def __post_init__(self):
        if self.case not in CASE_NAMES:
            raise InvalidConfig(f"unknown case {self.case!r}; "
                                f"choose from {', '.join(CASE_NAMES)}")
        for name in ("initial", "duration", "n_traj", "dynamical_vars"):
            if getattr(self, name) is None:
                object.__setattr__(self, name, _DEFAULTS[self.case][name])
        object.__setattr__(self, "dynamical_vars",
                           tuple(self.dynamical_vars))
        if self.dt <= 0 or self.duration <= 0:
            raise InvalidConfig("dt and duration must be positive")
        if self.dt > 1e-2:
            raise InvalidConfig("dt above 1e-2 is too coarse for the scheme")
        if self.n_traj < 1:
            raise InvalidConfig("n_traj must be at least 1")
        if self.sample_every < 1:
            raise InvalidConfig("sample_every must be at least 1")
        if self.positivity not in ("sampled", "every-step", "off"):
            raise InvalidConfig("positivity must be sampled, every-step or off")
        triple = REDUCTION_TRIPLES[self.case]
        for v in self.dynamical_vars:
            if v not in triple:
                raise InvalidConfig(
                    f"dynamical variable {v!r} not in the closed triple "
                    f"{triple} of {self.case}")
        if len(set(self.dynamical_vars)) != len(self.dynamical_vars):
            raise InvalidConfig("dynamical variables must be distinct")
        if not self.dynamical_vars:
            raise InvalidConfig("need at least one dynamical variable")
        if self.extra_lindblad is not None:
            if self.case not in SZ_FAMILY:
                raise InvalidConfig("purifying channels apply to the "
                                    "collective-measurement cases only")
            if self.extra_lindblad not in ("s2", "sz2"):
                raise InvalidConfig("extra_lindblad must be 's2' or 'sz2'")
        if min(self.a, self.a1, self.a2) <= 0:
            raise InvalidConfig("couplings must be positive")

    @property
    def n_steps(self) -> int:
        return round(self.duration / self.dt)

    @property
    def dyn_idx(self) -> tuple[int, ...]:
        return tuple(VAR_INDEX[v] for v in self.dynamical_vars)

    @property
    def spec_idx(self) -> tuple[int, ...]:
        triple = REDUCTION_TRIPLES[self.case]
        return tuple(VAR_INDEX[v] for v in triple
                     if v not in self.dynamical_vars)

    @property
    def entropy_enabled(self) -> bool:
        # No reduced description is derived for the purified dynamics.
        return self.entropy and self.extra_lindblad is None

    def model(self) -> dyn.LindbladModel:
        if self.case == "case1":
            return dyn.case1_model(self.a1, self.a2)
        if self.case == "case2":
            return dyn.case2_model(self.a1, self.a2)
        return dyn.sz_model(self.a, extra=self.extra_lindblad,
                            extra_coupling=self.extra_coupling)

    def targets(self) -> tuple[CollapseOutcome, ...]:
        return hstats.case_targets(self.case, self.extra_lindblad)


def default_config(case: str, **overrides) -> CaseConfig:
    """CaseConfig for one protocol with published defaults, plus overrides."""
    return CaseConfig(case=case, **overrides)


# ---------------------------------------------------------------------------
# Observable extraction at sample times
# ---------------------------------------------------------------------------

def _amp_weights(kets) -> np.ndarray:
    """Rows w with <e|rho(s)|e> = (1 + w . s) / 4 for each ket."""
    return np.stack([
        np.real(np.einsum('i,mij,j->m', k.conj(), SIGMA, k)) for k in kets])


_TRIPLET_W = _amp_weights(_TRIPLET_KETS)
_SINGLET_W = _amp_weights([(_ket(_UP, _DOWN) - _ket(_DOWN, _UP)) / np.sqrt(2.0)])
_CASE2_W = _amp_weights(_CASE2_KETS)

TRIPLET_AMP_KEYS = ("amp_zupzup", "amp_tripletzero", "amp_zdownzdown",
                    "amp_singlet")
CASE2_AMP_KEYS = ("amp_zup_xup", "amp_zup_xdown", "amp_zdown_xup",
                  "amp_zdown_xdown")

AMP_CHANNEL_LABELS = {
    "amp_zupzup": "ZupZup",
    "amp_tripletzero": "TripletZero",
    "amp_zdownzdown": "ZdownZdown",
}


def _amps(S: np.ndarray, W: np.ndarray) -> np.ndarray:
    p = 0.25 * (1.0 + S @ W.T)
    return np.sqrt(np.clip(p, 0.0, None))


def observable_keys(case: str) -> tuple[str, ...]:
    base = ("sz", "sx", "sz1", "sz2", "sx1", "sx2", "purity", "s_squared",
            "s1", "s3", "s4", "s12", "s13", "s15", "entropy")
    amp = CASE2_AMP_KEYS if case == "case2" else TRIPLET_AMP_KEYS
    return base + amp


def _sampled_observables(case: str, S: np.ndarray, ent_val: np.ndarray
                         ) -> dict[str, np.ndarray]:
    out = {
        "sz": 0.5 * (S[:, 2] + S[:, 11]),
        "sx": 0.5 * (S[:, 0] + S[:, 3]),
        "sz1": 0.5 * S[:, 11],
        "sz2": 0.5 * S[:, 2],
        "sx1": 0.5 * S[:, 3],
        "sx2": 0.5 * S[:, 0],
        "purity": 0.25 * (1.0 + np.sum(S * S, axis=-1)),
        "s_squared": 0.5 * (3.0 + S[:, 4] + S[:, 9] + S[:, 14]),
        "s1": S[:, 0], "s3": S[:, 2], "s4": S[:, 3],
        "s12": S[:, 11], "s13": S[:, 12], "s15": S[:, 14],
        "entropy": ent_val.copy(),
    }
    if case == "case2":
        amps = _amps(S, _CASE2_W)
        for j, key in enumerate(CASE2_AMP_KEYS):
            out[key] = amps[:, j]
    else:
        amps = _amps(S, np.vstack([_TRIPLET_W, _SINGLET_W]))
        for j, key in enumerate(TRIPLET_AMP_KEYS):
            out[key] = amps[:, j]
    return out


# ---------------------------------------------------------------------------
# Coefficient and entropy routing
# ---------------------------------------------------------------------------

def _coefficient_route(config: CaseConfig, model: dyn.LindbladModel):
    if config.case == "case1":
        a1, a2 = config.a1, config.a2
        return lambda S: dyn._case1_ab(S, a1, a2)
    if config.case == "case2":
        a1, a2 = config.a1, config.a2
        return lambda S: dyn._case2_ab(S, a1, a2)
    if config.extra_lindblad is None:
        a = config.a
        return lambda S: dyn._sz_ab(S, a)
    tab = dyn.coefficient_tables(model)
    return lambda S: dyn.evaluate_tables(tab, S)


def _entropy_route(config: CaseConfig, model: dyn.LindbladModel):
    """Per-step increment function (S, dx, dW) -> (n,) or None if disabled.

    Closed forms cover the single-variable reductions they were derived
    for; everything else goes through the general engine.  Non-finite
    values signal the exclusion policy instead of raising.
    """
    if not config.entropy_enabled:
        return None
    dt = config.dt
    dvars = config.dynamical_vars
    if (config.case == "case1" and dvars in (("s12",), ("s3",))
            and config.a1 == 1.0 and config.a2 == 1.0):
        # the two channels play symmetric roles; measuring through s3
        # swaps both the variable pair and the noise pair
        swap = dvars == ("s3",)
        def route(S, dx, dW):
            s3, s12 = S[:, 2], S[:, 11]
            w1, w2 = dW[:, 0], dW[:, 1]
            if swap:
                s3, s12, w1, w2 = s12, s3, w2, w1
            inc, _den = ent._case1_core(s3, s12, S[:, 14], w1, w2, dt)
            return inc
        return route
    if config.case in SZ_FAMILY and dvars in (("s3",), ("s12",)):
        a = config.a
        dynamical = dvars[0]
        def route(S, dx, dW):
            s3, s12 = S[:, 2], S[:, 11]
            if dynamical == "s12":
                s3, s12 = s12, s3
            w = dW[:, 0]
            inc, nu = ent._sz_core(s3, s12, S[:, 14], a, w, dt)
            # Trajectories pinned at a terminus eventually push |nu| below
            # what the closed form can resolve.  Where the limit of the
            # increment is direction-independent it is substituted exactly:
            # both variables polarized with the same sign (quadratic limit),
            # with opposite signs, or both near zero in the <S_z> = 0
            # sector (flat limit, differing only in the noise sign).  A
            # floor hit anywhere else -- a transversal nu = 0 crossing, or
            # a one-spin-collapsed state whose limit depends on ratios the
            # float coordinates no longer carry -- excludes the trajectory
            # from entropy averages.
            frozen = np.abs(nu) < ent.FREEZE_FLOOR
            if frozen.any():
                az3, az12 = np.abs(s3), np.abs(s12)
                both_polar = (az3 > 0.9) & (az12 > 0.9)
                aligned = frozen & both_polar & (s3 * s12 > 0.0)
                opposite = frozen & both_polar & (s3 * s12 < 0.0)
                central = (frozen & (az3 < 0.1) & (az12 < 0.1)
                           & (S[:, 14] < -0.9))
                z = 0.5 * (s3 + s12)
                lim_same = (8.0 * a * z * w
                            + 8.0 * a * a * (1.0 + z * z) * dt)
                sgn = np.where(central, -1.0, np.sign(s3))
                lim_flat = 4.0 * a * sgn * w + 4.0 * a * a * dt
                inc = np.where(aligned, lim_same,
                               np.where(opposite | central, lim_flat,
                                        np.where(frozen, np.nan, inc)))
            return inc
        return route
    tab = dyn.coefficient_tables(model)
    dyn_idx, spec_idx = config.dyn_idx, config.spec_idx
    tables = ent.subspace_tables(tab, dyn_idx + spec_idx)
    cols = list(dyn_idx)
    if config.case == "case2" and dvars == ("s1", "s12"):
        # Deep in the collapse the two polarizations sit within machine
        # precision of +-1 and the engine's cancellations fail, while the
        # state is exactly a product to ~1e-7.  There the increment has a
        # regular denominator-free limit (two independent single-spin
        # measurements), so switch per trajectory once the engine can no
        # longer resolve the reduced diffusion.
        a1, a2 = config.a1, config.a2
        def route(S, dx, dW):
            inc, det = ent.general_increment_batch(
                tab, S, dyn_idx, spec_idx, dx[:, cols], dt, tables=tables)
            X, Z = S[:, 0], S[:, 11]
            u = np.minimum((1.0 - X) * (1.0 + X), (1.0 - Z) * (1.0 + Z))
            resid = np.abs(S[:, 12] - X * Z)
            lim = (4.0 * a1 * Z * dW[:, 0] + 4.0 * a2 * X * dW[:, 1]
                   + (2.0 * a1 * a1 * (1.0 + Z * Z)
                      + 2.0 * a2 * a2 * (1.0 + X * X)) * dt)
            use_lim = (u < ent.FREEZE_FLOOR) & (resid < ent.PRODUCT_RESID_TOL)
            return np.where(use_lim, lim,
                            np.where(det > 0.0, inc, np.nan))
        return route
    def route(S, dx, dW):
        inc, det = ent.general_increment_batch(
            tab, S, dyn_idx, spec_idx, dx[:, cols], dt, tables=tables)
        return np.where(det > 0.0, inc, np.nan)
    return route


# ---------------------------------------------------------------------------
# The integrator
# ---------------------------------------------------------------------------

def _integrate_range(config: CaseConfig, lo: int, hi: int) -> dict:
    """Integrate trajectories [lo, hi) and return compact sample arrays."""
    n = hi - lo
    model = config.model()
    K = model.n_channels
    dt = config.dt
    sqdt = math.sqrt(dt)
    n_steps = config.n_steps
    sample_every = config.sample_every
    n_samples = n_steps // sample_every + 1
    keys = observable_keys(config.case)
    targets = config.targets()

    route_ab = _coefficient_route(config, model)
    route_ent = _entropy_route(config, model)

    streams = [dyn.trajectory_stream(config.seed, i) for i in range(lo, hi)]
    S = np.tile(config.initial.coherence, (n, 1))

    obs = {k: np.empty((n, n_samples)) for k in keys}
    collapsed = np.zeros((n, n_samples), dtype=bool)
    ent_val = np.zeros(n)
    excluded = np.zeros(n, dtype=bool)
    excl_time = np.full(n, np.nan)
    min_eig = np.full(n, np.inf)

    if not config.entropy_enabled:
        ent_val[:] = np.nan

    def check_positivity(states):
        nonlocal min_eig
        rho = 0.25 * (np.eye(4) + np.einsum('nm,mij->nij', states, SIGMA))
        ev = np.linalg.eigvalsh(rho)[:, 0]
        min_eig = np.minimum(min_eig, ev)

    def record(idx, states):
        vals = _sampled_observables(config.case, states, ent_val)
        for k in keys:
            obs[k][:, idx] = vals[k]
        collapsed[:, idx] = hstats.collapse_matrix(states, targets).any(axis=-1)
        if config.positivity == "sampled":
            check_positivity(states)

    record(0, S)
    step = 0
    sample_i = 0
    while step < n_steps:
        blk = min(NOISE_BLOCK, n_steps - step)
        noise = np.empty((n, blk, K))
        for j, g in enumerate(streams):
            noise[j] = g.normal(0.0, sqdt, (blk, K))
        for b in range(blk):
            dW = noise[:, b, :]
            A, B = route_ab(S)
            dx = A * dt + np.einsum('nmk,nk->nm', B, dW)
            if route_ent is not None:
                inc = route_ent(S, dx, dW)
                bad = ~np.isfinite(inc)
                newly = bad & ~excluded
                if newly.any():
                    excl_time[newly] = (step + b) * dt
                with np.errstate(invalid='ignore'):
                    ent_val = np.where(excluded | bad, ent_val, ent_val + inc)
                excluded |= bad
            S = S + dx
            k = step + b + 1
            if config.positivity == "every-step":
                check_positivity(S)
            if k % sample_every == 0:
                sample_i += 1
                record(sample_i, S)
        step += blk
    assert sample_i == n_samples - 1

    return dict(obs=obs, collapsed=collapsed, final=S.copy(),
                excluded=excluded, excl_time=excl_time, min_eig=min_eig,
                ent_final=ent_val)


@dataclass
class TrajectoryRecord:
    """Sampled series and terminal summary for one trajectory."""

    index: int
    t: np.ndarray
    observables: dict[str, np.ndarray]
    final_state: np.ndarray
    outcome: CollapseOutcome
    first_vanish: str | None
    excluded: bool
    exclusion_time: float
    min_eigenvalue: float

    @property
    def entropy(self) -> np.ndarray:
        return self.observables["entropy"]


@dataclass
class EnsembleStats:
    """Ensemble-level summaries computed by run_case."""

    t: np.ndarray
    mean_entropy: np.ndarray
    sem_entropy: np.ndarray
    collapse_fraction: np.ndarray
    outcome_counts: dict[str, int]
    n_traj: int
    n_excluded: int
    min_eigenvalue: float
    n_positivity_violations: int
    rate: hstats.RateFit | None
    rate_note: str | None
    rate_sensitivity: dict[str, float | None]


@dataclass
class EnsembleResult:
    config: CaseConfig
    records: list[TrajectoryRecord]
    stats: EnsembleStats


def _chunks(n: int, size: int) -> list[tuple[int, int]]:
    return [(lo, min(lo + size, n)) for lo in range(0, n, size)]


def run_case(config: CaseConfig) -> EnsembleResult:
    """Integrate the configured ensemble and assemble records and stats.

    Trajectory i always consumes stream (seed, i), so results are
    bit-identical for any chunk size or worker count.
    """
    ranges = _chunks(config.n_traj, config.chunk_size)
    if config.n_workers > 1 and len(ranges) > 1:
        with concurrent.futures.ProcessPoolExecutor(
                max_workers=config.n_workers) as ex:
            parts = list(ex.map(_integrate_range,
                                [config] * len(ranges),
                                [r[0] for r in ranges],
                                [r[1] for r in ranges]))
    else:
        parts = [_integrate_range(config, lo, hi) for lo, hi in ranges]

    keys = observable_keys(config.case)
    obs = {k: np.concatenate([p["obs"][k] for p in parts]) for k in keys}
    collapsed = np.concatenate([p["collapsed"] for p in parts])
    final = np.concatenate([p["final"] for p in parts])
    excluded = np.concatenate([p["excluded"] for p in parts])
    excl_time = np.concatenate([p["excl_time"] for p in parts])
    min_eig = np.concatenate([p["min_eig"] for p in parts])

    n_steps = config.n_steps
    t = np.arange(0, n_steps + 1, config.sample_every) * config.dt
    n_samples = n_steps // config.sample_every + 1
    t = t[:n_samples]

    targets = config.targets()
    outcomes = hstats.classify_batch(final, targets)

    amp_cols = list(TRIPLET_AMP_KEYS[:3]) if config.case != "case2" else []
    records = []
    for i in range(config.n_traj):
        tr_obs = {k: obs[k][i] for k in keys}
        if amp_cols:
            amps = np.column_stack([tr_obs[k] for k in amp_cols])
            labels = [AMP_CHANNEL_LABELS[k] for k in amp_cols]
            fv = hstats.first_vanish_channel(amps, labels)
        else:
            fv = None
        records.append(TrajectoryRecord(
            index=i, t=t, observables=tr_obs, final_state=final[i],
            outcome=outcomes[i], first_vanish=fv,
            excluded=bool(excluded[i]),
            exclusion_time=float(excl_time[i]),
            min_eigenvalue=float(min_eig[i])))

    include = ~excluded if config.entropy_enabled else np.zeros(len(records), bool)
    if include.any():
        ent_stack = obs["entropy"][include]
        mean_ent = ent_stack.mean(axis=0)
        sem = ent_stack.std(axis=0, ddof=1) / math.sqrt(include.sum()) \
            if include.sum() > 1 else np.zeros(n_samples)
    else:
        mean_ent = np.full(n_samples, np.nan)
        sem = np.full(n_samples, np.nan)

    frac = collapsed.mean(axis=0)
    counts = {o.value: 0 for o in (*targets, CollapseOutcome.Unresolved)}
    for o in outcomes:
        counts[o.value] = counts.get(o.value, 0) + 1

    rate = None
    rate_note = None
    sens: dict[str, float | None] = {}
    if include.any():
        try:
            rate = hstats.asymptotic_rate(t, mean_ent, collapse_fraction=frac)
        except hstats.WindowTooShort as err:
            rate_note = str(err)
        sens = hstats.rate_sensitivity(t, mean_ent, collapse_fraction=frac)
    elif config.entropy_enabled:
        rate_note = "all trajectories excluded"
    else:
        rate_note = "entropy disabled for this run"

    finite_eig = min_eig[np.isfinite(min_eig)]
    stats = EnsembleStats(
        t=t, mean_entropy=mean_ent, sem_entropy=sem, collapse_fraction=frac,
        outcome_counts=counts, n_traj=config.n_traj,
        n_excluded=int(excluded.sum()),
        min_eigenvalue=float(finite_eig.min()) if finite_eig.size else math.nan,
        n_positivity_violations=int((min_eig < -POS_TOL).sum()),
        rate=rate, rate_note=rate_note, rate_sensitivity=sens)
    return EnsembleResult(config=config, records=records, stats=stats)
