"""Measuring a maximally mixed pair, with and without a purifying channel.

From rho = I/4 the collective z record alone cannot tell the TripletZero
and Singlet components apart: half the trajectories end in a genuinely
mixed stationary state of purity 1/2 instead of collapsing.  Adding a
second record that couples to the singlet projector breaks the tie and
every trajectory purifies.

Run: python demos/06_mixed_state_purification.py   (about half a minute)
"""

import numpy as np

from spinentropy import harness as hn
from spinentropy.coherence import CollapseOutcome as CO

print("plain collective measurement from I/4 ...", flush=True)
plain = hn.run_case(hn.default_config("caseD", n_traj=48, seed=31))

print("with the singlet-projector channel added ...", flush=True)
helped = hn.run_case(hn.default_config("caseD", n_traj=48, seed=31,
                                       extra_lindblad="s2"))

for label, res in (("plain", plain), ("purified", helped)):
    print(f"\n{label}: outcomes")
    for name, count in sorted(res.stats.outcome_counts.items()):
        print(f"  {name:15s} {count:4d}")
    finals = np.array([r.observables["purity"][-1] for r in res.records])
    print(f"  final purity: min {finals.min():.3f}, "
          f"median {np.median(finals):.3f}, max {finals.max():.3f}")

stuck = [r for r in plain.records if r.outcome is CO.MixedStationary]
if stuck:
    pur = np.array([r.observables["purity"][-1] for r in stuck])
    sz = np.array([r.observables["sz"][-1] for r in stuck])
    print(f"\nthe {len(stuck)} stationary mixed trajectories sit at "
          f"purity {pur.mean():.3f} +- {pur.std():.3f}, <S_z> ~ {np.max(np.abs(sz)):.1e}")
    print("an even TripletZero/Singlet blend the z record cannot resolve")
