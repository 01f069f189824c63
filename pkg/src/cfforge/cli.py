"""``forge`` command line.

Exit codes: 0 ok, 1 usage, 2 validation, 3 budget (also deadline and work cap),
4 precondition.
"""

from __future__ import annotations

import argparse
import json
import os
import random
import sys
import time
from dataclasses import asdict, dataclass
from fractions import Fraction
from pathlib import Path

from .boxset import BoxSet, format_rat, rat
from .cfcore import (
    Cylinder,
    apply_Tg,
    check_infinite_measure,
    cylinder,
    cylinder_measure,
    lift,
    power_schedule,
    schedule_from_json,
)
from .errors import (
    BudgetExhausted,
    CertificateViolation,
    DeadlineExceeded,
    PreconditionError,
    ScheduleError,
    ScheduleTooShort,
    WorkLimitExceeded,
)
from .filling import ADAPTIVE, LEMMA, fill, grid_max
from .forcing import (
    AuxFlowSpec,
    ForcingState,
    Partition,
    build_flow,
    certificates_from_json,
    certificates_json,
    check_certificates,
    flow_json,
)
from .orbit import FiberPoint, sweep_stats
from .parallel import default_workers

EXIT_OK, EXIT_USAGE, EXIT_VALIDATION, EXIT_BUDGET, EXIT_PRECONDITION = 0, 1, 2, 3, 4


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


@dataclass
class Config:
    steps: int = 1
    p_seq: str = "auto"
    grid_density: int = 4
    budget: int = 500
    d_margin: Fraction = Fraction(1)
    aux: str | None = None
    out: str = "flow.json"
    certs: str = "certs.json"
    report: str | None = None
    seed: int = 0
    workers: int = 1
    h0: Fraction = Fraction(1)
    initial_mesh: Fraction | None = None
    deadline: float | None = None

    def check(self):
        if self.steps < 1 or self.grid_density < 1 or self.budget < 0 or self.workers < 1:
            raise UsageError("steps, grid density and workers must be positive; budget non-negative")
        if self.d_margin <= 0 or self.h0 <= 0:
            raise UsageError("d-margin and h0 must be positive")
        paths = [p for p in (self.out, self.certs, self.report) if p]
        if len(set(paths)) != len(paths):
            raise UsageError("output paths must be distinct")

    def p_list(self):
        if self.p_seq == "auto":
            return "auto"
        try:
            return [int(x) for x in self.p_seq.split(",")]
        except ValueError:
            raise UsageError(f"bad --p-seq {self.p_seq!r}") from None


def dumps(obj) -> str:
    return json.dumps(obj, indent=1, sort_keys=True) + "\n"


def _read_json(arg: str):
    """Inline JSON text or a path to a JSON file."""
    text = arg.strip()
    if not text.startswith(("{", "[")):
        try:
            text = Path(arg).read_text()
        except OSError as exc:
            raise UsageError(f"cannot read {arg}: {exc.strerror}") from None
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise ValueError(f"{arg}: invalid JSON at line {exc.lineno} column {exc.colno}: {exc.msg}") from None


def _vector(text: str, dim: int) -> tuple:
    parts = [rat(x) for x in text.split(",")]
    if len(parts) == 1 and dim > 1:
        parts = parts * dim
    if len(parts) != dim:
        raise UsageError(f"expected {dim} components, got {len(parts)}")
    return tuple(parts)


def _load_schedule(path: str):
    return schedule_from_json(_read_json(path))


def _load_cylinder(s, arg: str) -> Cylinder:
    c = Cylinder.from_json(_read_json(arg))
    return cylinder(s, c.level, c.base)


def _out(args, text: str):
    if getattr(args, "out", None):
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)


# --- subcommands ------------------------------------------------------------


def cmd_validate(args) -> int:
    obj = _read_json(args.path)
    if args.strong:
        obj = dict(obj, strong=True)
    s = schedule_from_json(obj)
    print(f"valid: dim={s.dim} levels=0..{s.L} strong={s.checked_strong}")
    return EXIT_OK


def cmd_measure(args) -> int:
    s = _load_schedule(args.flow)
    if args.cyl:
        c = _load_cylinder(s, args.cyl)
        mu = cylinder_measure(s, c)
        print(dumps({"level": c.level, "measure": format_rat(mu)}) if args.json else f"measure {format_rat(mu)}")
        return EXIT_OK
    rep = check_infinite_measure(s)
    if args.json:
        sys.stdout.write(dumps(rep.to_json()))
    else:
        print("level  h  #C  ratio")
        for n, r in enumerate(rep.ratios):
            count = len(s.C(n)) if n else 1
            print(f"{n:5d}  {format_rat(s.h(n))}  {count}  {format_rat(r)}")
        print(f"doubling levels: {rep.jumps}")
        print(f"diverging: {rep.diverging}")
    return EXIT_OK


def cmd_lift(args) -> int:
    s = _load_schedule(args.flow)
    c = _load_cylinder(s, args.cyl)
    _out(args, dumps(lift(s, c, args.to).to_json()))
    return EXIT_OK


def cmd_apply(args) -> int:
    s = _load_schedule(args.flow)
    c = _load_cylinder(s, args.cyl)
    image, rest = apply_Tg(s, c, _vector(args.g, s.dim), rat(args.eps))
    _out(args, dumps({"image": image.to_json(), "remainder": rest.to_json()}))
    return EXIT_OK


def cmd_power(args) -> int:
    s = _load_schedule(args.flow)
    _out(args, dumps(power_schedule(s, args.p).to_json()))
    return EXIT_OK


def cmd_fill(args) -> int:
    s = _load_schedule(args.flow)
    A = _load_cylinder(s, args.A)
    B = _load_cylinder(s, args.B)
    res = fill(s, _vector(args.q, s.dim), A, B, args.budget, max_level=args.max_level, mode=args.mode)
    if args.json:
        sys.stdout.write(dumps(res.to_json()))
    else:
        print(f"N={res.N}")
        print(f"work_level={res.work_level}")
        print(f"Q={res.Q}")
        for i, m in enumerate(res.part_measures(s)):
            print(f"  part {i}: {format_rat(m)}")
        print(f"filled={format_rat(res.filled)} of {format_rat(cylinder_measure(s, A))}")
    return EXIT_OK


def _uniform_atoms(s, level: int, mesh, p: int) -> list:
    if s.dim != 1:
        raise PreconditionError("uniform atoms are built for flows (d = 1)")
    h = s.h(level)
    mesh = h if mesh is None else rat(mesh)
    k = -(-h // mesh)
    return Partition(level, h, h / k).product_atoms(p)


def cmd_gridmax(args) -> int:
    s = _load_schedule(args.flow)
    atoms = _uniform_atoms(s, args.level, args.mesh, args.p)
    gm = grid_max(
        power_schedule(s, args.p), atoms, args.n, args.grid_density, args.budget,
        p=args.p, workers=_workers(args), level=args.level,
    )
    _out(args, dumps(gm.to_json()))
    return EXIT_OK


def _workers(args) -> int:
    w = getattr(args, "workers", None)
    if w is not None:
        return w
    return default_workers()


def _load_aux(path: str | None, steps: int) -> list:
    if path is None:
        return [AuxFlowSpec()] * steps
    obj = _read_json(path)
    if isinstance(obj, dict) and "steps" in obj:
        specs = [AuxFlowSpec.from_json(x) for x in obj["steps"]]
    elif isinstance(obj, list):
        specs = [AuxFlowSpec.from_json(x) for x in obj]
    else:
        specs = [AuxFlowSpec.from_json(obj)]
    if len(specs) == 1:
        specs = specs * steps
    if len(specs) < steps:
        raise UsageError(f"aux file lists {len(specs)} specs for {steps} steps")
    return specs


def cmd_build(args) -> int:
    cfg = Config(
        steps=args.steps,
        p_seq=args.p_seq,
        grid_density=args.grid_density,
        budget=args.budget,
        d_margin=rat(args.d_margin),
        aux=args.aux,
        out=args.out,
        certs=args.certs,
        report=args.report,
        seed=args.seed,
        workers=_workers(args),
        h0=rat(args.h0),
        initial_mesh=None if args.initial_mesh is None else rat(args.initial_mesh),
        deadline=args.deadline,
    )
    cfg.check()
    specs = _load_aux(cfg.aux, cfg.steps)
    deadline = None if cfg.deadline is None else time.time() + cfg.deadline
    _, certs, report, state = build_flow(
        cfg.p_list(), cfg.steps, specs, cfg.grid_density, cfg.budget,
        workers=cfg.workers, d_margin=cfg.d_margin, deadline=deadline,
        h0=cfg.h0, initial_mesh=cfg.initial_mesh,
    )
    flow = flow_json(state)
    flow["forcing"]["config"] = {
        "grid_density": cfg.grid_density,
        "budget": cfg.budget,
        "d_margin": format_rat(cfg.d_margin),
        "h0": format_rat(cfg.h0),
        "initial_mesh": None if cfg.initial_mesh is None else format_rat(cfg.initial_mesh),
        "seed": cfg.seed,
    }
    Path(cfg.out).write_text(dumps(flow))
    Path(cfg.certs).write_text(dumps(certificates_json(certs)))
    rep = report.to_json()
    if cfg.report:
        Path(cfg.report).write_text(dumps(rep))
    print(f"markers {rep['markers']}  D {rep['D']}  certificates {rep['certificates']}")
    print(f"doubling at markers: {rep['doubling_at_markers']}")
    print(f"certificates verified: {report.verdict.ok}")
    return EXIT_OK if report.verdict.ok else EXIT_VALIDATION


def cmd_check(args) -> int:
    state = ForcingState.from_flow_json(_read_json(args.flow))
    certs = certificates_from_json(_read_json(args.certs))
    verdict = check_certificates(state, certs)
    if args.json:
        sys.stdout.write(dumps(verdict.to_json()))
    else:
        print(f"checked {verdict.checked} certificates, {len(verdict.failures)} failures")
        for idx, reason in verdict.failures:
            print(f"  [{idx}] {reason}")
    return EXIT_OK if verdict.ok else EXIT_VALIDATION


def cmd_sweep(args) -> int:
    s = _load_schedule(args.flow)
    if s.dim != 1:
        raise PreconditionError("sweep samples points of a flow (d = 1)")
    rng = random.Random(args.seed)
    h0 = s.h(0)
    den = args.resolution
    sample = []
    for _ in range(args.samples):
        tup = []
        for _ in range(args.p):
            x = Fraction(rng.randrange(int(h0 * den)), den)
            tup.append(FiberPoint(0, (x,), rng.getrandbits(63)))
        sample.append(tup)
    if args.targets:
        obj = _read_json(args.targets)
        targets = [Cylinder.from_json(c) for c in (obj if isinstance(obj, list) else [obj])]
    else:
        targets = _uniform_atoms(s, 0, args.mesh, args.p)
        targets = [Cylinder(0, a) for a in targets]
    rows = sweep_stats(s, rat(args.t), args.p, sample, args.horizon, targets)
    if args.json:
        sys.stdout.write(dumps({"t": format_rat(rat(args.t)), "p": args.p, "rows": [r.to_json() for r in rows]}))
    else:
        print("target  hits/samples  censored  earliest  mean")
        for r in rows:
            j = r.to_json()
            print(f"{r.target:6d}  {r.hits}/{r.samples}  {r.censored}  {j['earliest']}  {j['mean_first_hit']}")
    return EXIT_OK


# --- parser -----------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="forge", description="(C,F)-construction toolkit")
    sub = p.add_subparsers(dest="cmd", parser_class=_Parser)
    sub.required = True

    v = sub.add_parser("validate", help="validate a schedule file")
    v.add_argument("path")
    v.add_argument("--strong", action="store_true", help="also require strong containment")
    v.set_defaults(fn=cmd_validate)

    m = sub.add_parser("measure", help="cylinder measure or the ratio sequence")
    m.add_argument("--flow", required=True)
    m.add_argument("--cyl")
    m.add_argument("--json", action="store_true")
    m.set_defaults(fn=cmd_measure)

    li = sub.add_parser("lift", help="re-express a cylinder at a higher level")
    li.add_argument("--flow", required=True)
    li.add_argument("--cyl", required=True)
    li.add_argument("--to", type=int, required=True)
    li.add_argument("--out")
    li.set_defaults(fn=cmd_lift)

    a = sub.add_parser("apply", help="push a cylinder through T_g")
    a.add_argument("--flow", required=True)
    a.add_argument("--cyl", required=True)
    a.add_argument("--g", required=True)
    a.add_argument("--eps", default="1/1000000")
    a.add_argument("--out")
    a.set_defaults(fn=cmd_apply)

    pw = sub.add_parser("power", help="Cartesian power schedule")
    pw.add_argument("--flow", required=True)
    pw.add_argument("--p", type=int, required=True)
    pw.add_argument("--out")
    pw.set_defaults(fn=cmd_power)

    f = sub.add_parser("fill", help="filling sets and number")
    f.add_argument("--flow", required=True)
    f.add_argument("--q", required=True)
    f.add_argument("--A", required=True)
    f.add_argument("--B", required=True)
    f.add_argument("--budget", type=int, default=1000)
    f.add_argument("--max-level", type=int)
    f.add_argument("--mode", choices=[ADAPTIVE, LEMMA], default=ADAPTIVE)
    f.add_argument("--json", action="store_true")
    f.set_defaults(fn=cmd_fill)

    g = sub.add_parser("gridmax", help="filling-number table over a time grid")
    g.add_argument("--flow", required=True)
    g.add_argument("--p", type=int, required=True)
    g.add_argument("--n", type=int, required=True)
    g.add_argument("--grid-density", type=int, default=4)
    g.add_argument("--budget", type=int, default=1000)
    g.add_argument("--level", type=int, default=0)
    g.add_argument("--mesh")
    g.add_argument("--workers", type=int)
    g.add_argument("--out")
    g.set_defaults(fn=cmd_gridmax)

    b = sub.add_parser("build", help="run the forcing construction")
    b.add_argument("--steps", type=int, default=1)
    b.add_argument("--p-seq", default="auto")
    b.add_argument("--grid-density", type=int, default=4)
    b.add_argument("--budget", type=int, default=500)
    b.add_argument("--d-margin", default="1")
    b.add_argument("--aux")
    b.add_argument("--out", default="flow.json")
    b.add_argument("--certs", default="certs.json")
    b.add_argument("--report")
    b.add_argument("--seed", type=int, default=0)
    b.add_argument("--workers", type=int)
    b.add_argument("--h0", default="1")
    b.add_argument("--initial-mesh")
    b.add_argument("--deadline", type=float, help="wall-clock limit in seconds")
    b.set_defaults(fn=cmd_build)

    c = sub.add_parser("check", help="re-verify certificates against a flow")
    c.add_argument("--flow", required=True)
    c.add_argument("--certs", required=True)
    c.add_argument("--json", action="store_true")
    c.set_defaults(fn=cmd_check)

    sw = sub.add_parser("sweep", help="Monte Carlo first-hit table for V_t")
    sw.add_argument("--flow", required=True)
    sw.add_argument("--t", required=True)
    sw.add_argument("--p", type=int, default=2)
    sw.add_argument("--samples", type=int, default=1000)
    sw.add_argument("--horizon", type=int, default=50)
    sw.add_argument("--seed", type=int, default=0)
    sw.add_argument("--targets")
    sw.add_argument("--mesh")
    sw.add_argument("--resolution", type=int, default=1024, help="sample points on a 1/resolution grid")
    sw.add_argument("--json", action="store_true")
    sw.set_defaults(fn=cmd_sweep)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except BudgetExhausted as exc:
        print(f"budget: {exc}", file=sys.stderr)
        return EXIT_BUDGET
    except (DeadlineExceeded, WorkLimitExceeded) as exc:
        print(f"budget: {exc}", file=sys.stderr)
        return EXIT_BUDGET
    except (PreconditionError, ScheduleTooShort) as exc:
        print(f"precondition: {exc}", file=sys.stderr)
        return EXIT_PRECONDITION
    except (ScheduleError, CertificateViolation) as exc:
        print(f"validation: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except (ValueError, KeyError, TypeError) as exc:
        print(f"validation: {exc}", file=sys.stderr)
        return EXIT_VALIDATION


if __name__ == "__main__":
    sys.exit(main())
