"""Two forcing steps on flows small enough to finish in about half a minute.

    python scripts/forcing_demo.py [--density 1] [--workers N]
"""

import argparse
import time

from cfforge.boxset import format_rat
from cfforge.forcing import AuxFlowSpec, build_flow


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--p-seq", default="1,1")
    ap.add_argument("--density", type=int, default=1)
    ap.add_argument("--budget", type=int, default=5000)
    ap.add_argument("--workers", type=int, default=1)
    args = ap.parse_args()

    p_seq = [int(x) for x in args.p_seq.split(",")]
    t0 = time.time()
    s, certs, report, state = build_flow(
        p_seq, len(p_seq), AuxFlowSpec(cuts=[2], depth=4), args.density, args.budget, workers=args.workers
    )
    print(f"built in {time.time() - t0:.1f}s")
    print(" n  p  atoms  grid_D  D  m_prev  m  certificates")
    for rec in state.log:
        print(f"{rec['n']:2d} {rec['p']:2d} {rec['atoms']:6d} {rec['grid_D']:7d} {rec['D']:2d} "
              f"{rec['m_prev']:7d} {rec['m']:2d} {rec['certificates']:13d}")
    r = report.ratios
    for m in state.markers[1:]:
        print(f"marker {m}: h = {format_rat(s.h(m))}, ratio jump {format_rat(r[m] / r[m - 1])}")
    print(f"verdict ok: {report.verdict.ok}  doubling: {report.doubling_ok}")


if __name__ == "__main__":
    main()
