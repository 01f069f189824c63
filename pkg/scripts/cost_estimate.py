"""How much work a forcing step needs, measured on a sample of its fillings.

Runs the earlier steps in full, then builds the atom list of the last step,
times a random sample of its (atom, atom, t) fillings on the auxiliary
power flow and extrapolates to the whole table.

    python scripts/cost_estimate.py --p-seq 2,3 --density 4 --sample 20
"""

import argparse
import random
import time

from cfforge.boxset import BoxSet
from cfforge.cfcore import Cylinder, diag_time, power_schedule
from cfforge.errors import BudgetExhausted, DeadlineExceeded, ScheduleTooShort
from cfforge.filling import fill, time_grid
from cfforge.forcing import AuxFlowSpec, gen_aux, initial_state, run_step


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--p-seq", default="2,3")
    ap.add_argument("--density", type=int, default=4)
    ap.add_argument("--cuts", default="2,3")
    ap.add_argument("--budget", type=int, default=500)
    ap.add_argument("--sample", type=int, default=20)
    ap.add_argument("--per-fill", type=float, default=60.0, help="seconds allowed per sampled filling")
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    p_seq = [int(x) for x in args.p_seq.split(",")]
    spec = AuxFlowSpec(cuts=[int(x) for x in args.cuts.split(",")])
    state = initial_state(p_seq)
    for n in range(1, len(p_seq)):
        t0 = time.time()
        state, certs = run_step(state, n, spec, args.density, args.budget)
        print(f"step {n}: {time.time() - t0:.1f}s, D = {state.log[-1]['D']}, markers {state.markers}")

    n = len(p_seq)
    p = p_seq[-1]
    base = state.markers[-1]
    P = state.partition(base)
    grid = time_grid(n, args.density)
    pairs = (P.count ** p) ** 2
    print(f"step {n}: F_{base} = [0,{P.h}), {P.count} atoms per axis, {P.count ** p} product atoms, "
          f"{pairs} pairs x {len(grid)} times = {pairs * len(grid)} fillings")

    aux = gen_aux(spec.with_base(state.schedule.h(base)), spec.depth)
    s_pow = power_schedule(aux, p)
    rng = random.Random(args.seed)
    times, Ns, unfinished = [], [], 0
    for _ in range(args.sample):
        a = [rng.randrange(P.count) for _ in range(p)]
        b = [rng.randrange(P.count) for _ in range(p)]
        t = rng.choice(grid)
        A = Cylinder(0, _atom(P, a))
        B = Cylinder(0, _atom(P, b))
        t0 = time.time()
        try:
            res = fill(s_pow, diag_time(t, p), A, B, args.budget, deadline=t0 + args.per_fill)
            Ns.append(res.N)
        except (DeadlineExceeded, BudgetExhausted, ScheduleTooShort) as exc:
            unfinished += 1
            print(f"  sample a={a} b={b} t={t}: {type(exc).__name__}")
        times.append(time.time() - t0)
    mean = sum(times) / len(times)
    print(f"sampled {len(times)} fillings: mean {mean:.2f}s (lower bound, {unfinished} cut off at "
          f"{args.per_fill:.0f}s), N values {sorted(Ns)}")
    print(f"extrapolated table time: {mean * pairs * len(grid) / 3600:.1f} hours on one worker")


def _atom(P, digits):
    lo = tuple(k * P.step for k in digits)
    hi = tuple((k + 1) * P.step for k in digits)
    return BoxSet.from_box(lo, hi)


if __name__ == "__main__":
    main()
