"""Command line entry point.

Subcommands:
  run <case>       integrate one ensemble and write CSVs plus manifest.json
  sweep-strength   repeat a collective-measurement run over couplings
  report           summarize a manifest.json produced earlier
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from pathlib import Path

from . import io as hio
from . import stats as hstats
from .cases import CASE_NAMES, CaseConfig, InvalidConfig, run_case


def _add_run_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--ntraj", type=int, default=None,
                   help="number of trajectories (default: per-case)")
    p.add_argument("--dt", type=float, default=1e-4, help="time step")
    p.add_argument("--duration", type=float, default=None,
                   help="total integration time (default: per-case)")
    p.add_argument("--seed", type=int, default=0, help="master seed")
    p.add_argument("--a", type=float, action="append", default=None,
                   help="measurement strength; repeat for several runs "
                        "(collective cases)")
    p.add_argument("--a1", type=float, default=1.0,
                   help="channel-1 strength (case1 / case2)")
    p.add_argument("--a2", type=float, default=1.0,
                   help="channel-2 strength (case1 / case2)")
    p.add_argument("--dyn", type=str, default=None,
                   help="comma-separated dynamical variables, e.g. s12 or "
                        "s1,s12")
    p.add_argument("--purify", choices=("s2", "sz2"), default=None,
                   help="append a purifying channel (caseD)")
    p.add_argument("--sample-every", type=int, default=100,
                   help="record observables every this many steps")
    p.add_argument("--positivity", choices=("sampled", "every-step", "off"),
                   default="sampled")
    p.add_argument("--no-entropy", action="store_true",
                   help="skip entropy accumulation")
    p.add_argument("--workers", type=int, default=1,
                   help="worker processes (results identical for any count)")
    p.add_argument("--out", type=Path, default=None,
                   help=f"output directory (default: ${hio.OUTDIR_ENV} "
                        "or ./results)")


def _config_from_args(case: str, args, a: float | None = None) -> CaseConfig:
    kwargs = dict(case=case, dt=args.dt, seed=args.seed,
                  a1=args.a1, a2=args.a2,
                  extra_lindblad=args.purify,
                  sample_every=args.sample_every,
                  positivity=args.positivity,
                  entropy=not args.no_entropy,
                  n_workers=args.workers)
    if args.ntraj is not None:
        kwargs["n_traj"] = args.ntraj
    if args.duration is not None:
        kwargs["duration"] = args.duration
    if args.dyn is not None:
        kwargs["dynamical_vars"] = tuple(
            v.strip() for v in args.dyn.split(",") if v.strip())
    if a is not None:
        kwargs["a"] = a
    return CaseConfig(**kwargs)


def _outdir(args) -> Path:
    return args.out if args.out is not None else hio.default_outdir()


def _cmd_run(args) -> int:
    strengths = args.a if args.a else [1.0]
    outdir = _outdir(args)
    manifests = []
    for a in strengths:
        config = _config_from_args(args.case, args, a=a)
        result = run_case(config)
        tag = f"a{a:g}" if len(strengths) > 1 else ""
        files = hio.write_case_outputs(result, outdir, tag=tag)
        manifest = hio.manifest_dict(result, files)
        name = f"manifest_{tag}.json" if tag else "manifest.json"
        hio.write_manifest(outdir / name, manifest)
        manifests.append((a, manifest))
        rate = manifest["asymptotic_rate"]
        rate_txt = f"{rate['rate']:.4f} +- {rate['stderr']:.4f}" \
            if rate else manifest["rate_note"]
        print(f"{args.case} a={a:g}: {config.n_traj} trajectories, "
              f"rate {rate_txt}, outcomes {manifest['outcome_counts']}")
    print(f"wrote {outdir}")
    return 0


def _cmd_sweep(args) -> int:
    strengths = args.a if args.a else [1 / math.sqrt(2), 1.0, math.sqrt(2)]
    outdir = _outdir(args)
    rows_a, rows_rate, rows_err = [], [], []
    files: list[str] = []
    for a in strengths:
        config = _config_from_args(args.case, args, a=a)
        result = run_case(config)
        tag = f"a{a:g}"
        files += hio.write_case_outputs(result, outdir, tag=tag)
        fit = result.stats.rate
        if fit is None:
            print(f"a={a:g}: no rate ({result.stats.rate_note})")
            return 1
        rows_a.append(a)
        rows_rate.append(fit.rate)
        rows_err.append(fit.stderr)
        print(f"a={a:g}: rate {fit.rate:.4f} +- {fit.stderr:.4f}")
    import numpy as np
    hio.write_csv(outdir / "rates_vs_strength.csv", {
        "a": np.array(rows_a),
        "a_squared": np.array(rows_a) ** 2,
        "rate": np.array(rows_rate),
        "stderr": np.array(rows_err)})
    files.append("rates_vs_strength.csv")
    manifest = {
        "sweep": {"case": args.case, "strengths": rows_a,
                  "rates": rows_rate, "stderrs": rows_err},
        "files": sorted(files),
    }
    hio.write_manifest(outdir / "manifest.json", manifest)
    print(f"wrote {outdir}")
    return 0


def _cmd_report(args) -> int:
    path = args.dir / "manifest.json"
    if not path.exists():
        print(f"no manifest at {path}", file=sys.stderr)
        return 1
    with open(path) as fh:
        m = json.load(fh)
    if "sweep" in m:
        sw = m["sweep"]
        print(f"strength sweep of {sw['case']}")
        for a, r, e in zip(sw["strengths"], sw["rates"], sw["stderrs"]):
            print(f"  a={a:g}: rate {r:.4f} +- {e:.4f}")
        return 0
    cfg = m["config"]
    print(f"{cfg['case']}: {m['n_trajectories']} trajectories, "
          f"dt={cfg['dt']:g}, duration={cfg['duration']:g}, "
          f"seed={cfg['seed']}")
    print(f"  outcomes: {m['outcome_counts']}")
    ex = m["exclusions"]
    print(f"  exclusions: {ex['count']} ({100 * ex['fraction']:.2f}%)")
    rate = m["asymptotic_rate"]
    if rate:
        print(f"  asymptotic rate: {rate['rate']:.4f} +- {rate['stderr']:.4f}"
              f" over t in [{rate['window'][0]:g}, {rate['window'][1]:g}]")
    else:
        print(f"  asymptotic rate: unavailable ({m['rate_note']})")
    pos = m["positivity"]
    print(f"  positivity ({pos['mode']}): min eigenvalue "
          f"{pos['min_eigenvalue']}, violations {pos['n_violations']}")
    if m.get("partial"):
        print("  NOTE: partial ensemble, entropy statistics exclude "
              "some trajectories")
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="spinentropy",
        description="Trajectory ensembles and entropy production for two "
                    "continuously measured spins")
    sub = ap.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="integrate one ensemble")
    p_run.add_argument("case", choices=CASE_NAMES)
    _add_run_flags(p_run)
    p_run.set_defaults(fn=_cmd_run)

    p_sweep = sub.add_parser(
        "sweep-strength",
        help="rates at several measurement strengths (collective cases)")
    p_sweep.add_argument("--case", choices=CASE_NAMES, default="caseA")
    _add_run_flags(p_sweep)
    p_sweep.set_defaults(fn=_cmd_sweep)

    p_rep = sub.add_parser("report", help="summarize a written manifest")
    p_rep.add_argument("--dir", type=Path, default=None,
                       help="directory holding manifest.json")
    p_rep.set_defaults(fn=_cmd_report)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    if args.command == "report" and args.dir is None:
        args.dir = hio.default_outdir()
    try:
        return args.fn(args)
    except InvalidConfig as err:
        print(f"invalid configuration: {err}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
