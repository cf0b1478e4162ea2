"""Collective S_z measurement: production rate scales with coupling squared.

Start in the transverse triplet state (both spins along +x, total spin
projection zero along z).  The collective record drives the state to
ZupZup or ZdownZdown, half and half, and the mean entropy production
settles to 16 a^2.  Three couplings spaced by sqrt(2) should show rates in
the ratio 1 : 2 : 4.

This is the script twin of the command line sweep:

    spinentropy sweep-strength --case caseA --a 0.7071 --a 1 --a 1.4142 ...

Run: python demos/03_strength_sweep_collective.py   (about fifteen seconds)
"""

import math

from spinentropy import harness as hn

STRENGTHS = (1.0 / math.sqrt(2.0), 1.0, math.sqrt(2.0))

rows = []
for a in STRENGTHS:
    cfg = hn.default_config("caseA", n_traj=80, duration=4.0, a=a, seed=77)
    print(f"a = {a:.4f}: {cfg.n_traj} trajectories ...", flush=True)
    res = hn.run_case(cfg)
    fit = res.stats.rate
    rows.append((a, fit))

print("\n  a        rate      stderr    rate/16a^2")
for a, fit in rows:
    print(f"  {a:.4f}  {fit.rate:8.3f}  {fit.stderr:8.3f}"
          f"  {fit.rate / (16.0 * a * a):8.3f}")

base = rows[0][1].rate
print("\nratios to the weakest coupling (expect 1 : 2 : 4):")
print("  " + " : ".join(f"{fit.rate / base:.2f}" for _, fit in rows))
