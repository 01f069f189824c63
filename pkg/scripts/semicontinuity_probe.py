"""Filling numbers around a time t0 on a staircase flow.

Prints N(t0 - r), N(t0), N(t0 + r) for shrinking r, flagging radii where a
neighbour needs more steps than t0 itself.

    python scripts/semicontinuity_probe.py --t0 1/2 --depth 8
"""

import argparse

from cfforge.boxset import BoxSet, format_rat, rat
from cfforge.cfcore import Cylinder
from cfforge.errors import BudgetExhausted, ScheduleTooShort
from cfforge.filling import semicontinuity_probe
from cfforge.forcing import AuxFlowSpec, gen_aux


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--t0", default="1/2")
    ap.add_argument("--depth", type=int, default=8)
    ap.add_argument("--atoms", type=int, default=2, help="split F_0 = [0,1) into this many atoms")
    ap.add_argument("--budget", type=int, default=2000)
    args = ap.parse_args()

    s = gen_aux(AuxFlowSpec(cuts=[2, 3], depth=args.depth).with_base(1), args.depth)
    k = args.atoms
    atoms = [BoxSet.from_box((rat(i) / k,), (rat(i + 1) / k,)) for i in range(k)]
    radii = [rat(1) / 2**j for j in range(2, 7)]
    for a in range(k):
        for b in range(k):
            A, B = Cylinder(0, atoms[a]), Cylinder(0, atoms[b])
            try:
                rep = semicontinuity_probe(s, A, B, args.t0, radii, args.budget, p=1)
            except (BudgetExhausted, ScheduleTooShort) as exc:
                print(f"atoms {a}->{b}: {type(exc).__name__}")
                continue
            print(f"atoms {a}->{b}: N(t0) = {rep.N0}")
            for row in rep.rows:
                mark = "  <- exceeds N(t0)" if row["flag"] else ""
                print(f"  r = {format_rat(row['r']):>6}  N(t0-r) = {row['N_minus']}  N(t0+r) = {row['N_plus']}{mark}")


if __name__ == "__main__":
    main()
