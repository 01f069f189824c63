"""Inductive construction of a rank-one flow by grafting auxiliary flows.

Step ``n`` takes the current top cube ``F_(m_(n-1))`` as the base of an
auxiliary finite-measure flow, measures how long its ``p_n``-th diagonal
power needs to fill atom pairs (the maximum ``D_n`` over a time grid in
``[1/n, n]``), grafts ``n*D_n`` of its levels onto the main schedule and
doubles the last cube.  Every (atom pair, time) checked yields a certificate
that can be re-verified on the main schedule alone.
"""

from __future__ import annotations

import itertools
import math
import time
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Sequence

from .boxset import Box, BoxSet, format_rat, rat, translate, union_all
from .cfcore import (
    CFLevel,
    CFSchedule,
    Cylinder,
    cylinder_measure,
    diag_time,
    lift,
    measure_ratios,
    power_schedule,
    schedule_from_json,
    transport,
    validate,
)
from .errors import (
    BudgetExhausted,
    CertificateViolation,
    ForgeError,
    PreconditionError,
    ScheduleError,
    ScheduleTooShort,
)
from .filling import fill, fits_shift, grid_max, lattice_for, time_grid
from .parallel import ordered_map

SCOPE = (
    "Each certificate covers one (step, power p, atom pair, grid time t). "
    "Times off the recorded grid and powers not in p_seq are not certified."
)


# --- partitions -------------------------------------------------------------


@dataclass(frozen=True)
class Partition:
    """A partition of ``[0, h)`` into equal atoms of length ``step``."""

    level: int
    h: Fraction
    step: Fraction

    @property
    def count(self) -> int:
        return int(self.h / self.step)

    @property
    def mesh(self) -> Fraction:
        return self.step

    @property
    def atoms(self) -> list:
        return [Box((k * self.step,), ((k + 1) * self.step,)) for k in range(self.count)]

    def product_atoms(self, p: int) -> list:
        """Atoms of the p-fold product partition, in lexicographic order."""
        edges = [(k * self.step, (k + 1) * self.step) for k in range(self.count)]
        return [
            BoxSet.from_box(tuple(e[0] for e in combo), tuple(e[1] for e in combo))
            for combo in itertools.product(edges, repeat=p)
        ]

    def to_json(self) -> dict:
        return {"level": self.level, "h": format_rat(self.h), "step": format_rat(self.step)}

    @classmethod
    def from_json(cls, obj: dict) -> "Partition":
        return cls(int(obj["level"]), rat(obj["h"]), rat(obj["step"]))


def make_partition(s: CFSchedule, n: int, prev: Partition | None = None, mesh=None) -> Partition:
    """Partition of ``F_n`` refining the translates ``Delta + c`` of ``prev``.

    Atoms all have one length, the largest divisor of the previous length
    that is at most ``mesh`` (default ``1/n``) and makes every translate and
    spacer interval a union of atoms.  Level 0 splits ``F_0`` into the fewest
    equal pieces of length at most ``mesh`` (default: one atom).
    """
    if s.dim != 1:
        raise PreconditionError("partitions are built for flows (d = 1)")
    h = s.h(n)
    if n == 0:
        mesh = h if mesh is None else rat(mesh)
        k = math.ceil(h / mesh)
        return Partition(0, h, h / k)
    if prev is None or prev.level != n - 1:
        raise PreconditionError(f"the level-{n - 1} partition is required")
    mesh = Fraction(1, n) if mesh is None else rat(mesh)
    ell = prev.step
    needed = 1
    for x in [h, *(c[0] for c in s.C(n))]:
        needed = math.lcm(needed, (x / ell).denominator)
    k = needed * max(1, math.ceil(ell / (mesh * needed)))
    return Partition(n, h, ell / k)


def check_partition_chain(s: CFSchedule, parts: Sequence[Partition]) -> list:
    """Problems with exact cover, mesh and refinement along a chain."""
    problems = []
    for P in parts:
        if P.h != s.h(P.level) or (P.h / P.step).denominator != 1:
            problems.append((P.level, "atoms do not tile F_n"))
        if P.level >= 1 and P.step > Fraction(1, P.level):
            problems.append((P.level, "mesh above 1/n"))
    for P, R in zip(parts, parts[1:]):
        if R.level != P.level + 1:
            continue
        for c in s.C(R.level):
            for x in (c[0], c[0] + P.step):
                if (x / R.step).denominator != 1:
                    problems.append((R.level, "a translate Delta + c is not a union of atoms"))
                    break
        if (P.step / R.step).denominator != 1:
            problems.append((R.level, "atoms do not refine the previous atoms"))
    return problems


# --- auxiliary staircase flows ---------------------------------------------


@dataclass
class AuxFlowSpec:
    """Rank-one staircase (C,F)-flow parameters, cycled per stage.

    Stage ``k`` cuts ``F_k`` into ``r_k`` copies placed at
    ``i*(h_k + sigma_k) + stair_k*i*(i+1)/2`` and tops the next cube with
    ``sigma_k + stair_k*r_k + slack_k`` of extra room.
    """

    cuts: list = field(default_factory=lambda: [2, 3])
    sigma: list = field(default_factory=lambda: [Fraction(2)])
    stair: list = field(default_factory=lambda: [Fraction(1)])
    slack: list = field(default_factory=lambda: [Fraction(0)])
    depth: int = 8
    base_h: Fraction | None = None

    def __post_init__(self):
        self.cuts = [int(r) for r in self.cuts]
        self.sigma = [rat(x) for x in self.sigma]
        self.stair = [rat(x) for x in self.stair]
        self.slack = [rat(x) for x in self.slack]
        if self.base_h is not None:
            self.base_h = rat(self.base_h)
        if not self.cuts or not self.sigma or not self.stair or not self.slack:
            raise ValueError("aux spec lists must be nonempty")
        if any(r < 2 for r in self.cuts):
            raise ValueError("every cut number must be at least 2")
        if any(x < 0 for x in self.sigma + self.stair + self.slack):
            raise ValueError("gaps, staircase increments and slack must be non-negative")
        if self.depth < 1:
            raise ValueError("depth must be positive")

    def stage(self, k: int) -> tuple:
        pick = lambda xs: xs[k % len(xs)]
        return pick(self.cuts), pick(self.sigma), pick(self.stair), pick(self.slack)

    def with_base(self, h) -> "AuxFlowSpec":
        return AuxFlowSpec(self.cuts, self.sigma, self.stair, self.slack, self.depth, rat(h))

    def to_json(self) -> dict:
        out = {
            "cuts": list(self.cuts),
            "sigma": [format_rat(x) for x in self.sigma],
            "stair": [format_rat(x) for x in self.stair],
            "slack": [format_rat(x) for x in self.slack],
            "depth": self.depth,
        }
        if self.base_h is not None:
            out["base_h"] = format_rat(self.base_h)
        return out

    @classmethod
    def from_json(cls, obj: dict) -> "AuxFlowSpec":
        known = {"cuts", "sigma", "stair", "slack", "depth", "base_h"}
        unknown = set(obj) - known
        if unknown:
            raise ValueError(f"unknown aux spec fields: {sorted(unknown)}")
        return cls(**obj)


def gen_aux(spec: AuxFlowSpec, k_levels: int) -> CFSchedule:
    """Levels ``0..k_levels`` of the staircase flow, strongly validated."""
    if spec.base_h is None:
        raise PreconditionError("the aux spec needs a base cube (base_h)")
    levels = []
    h = spec.base_h
    for k in range(k_levels):
        r, sigma, stair, slack = spec.stage(k)
        C = tuple((i * (h + sigma) + stair * i * (i + 1) / 2,) for i in range(r))
        levels.append(CFLevel(h, C))
        h = r * (h + sigma) + stair * r * (r + 1) / 2 + slack
    levels.append(CFLevel(h, ()))
    try:
        return validate(levels, dim=1, strong=True)
    except ScheduleError as exc:
        raise PreconditionError(f"aux stage {exc.level} fails validation: {exc}") from exc


def aux_ratio_limit(spec: AuxFlowSpec, stages: int = 64) -> Fraction:
    """Upper bound on ``h_k / (r_0 ... r_(k-1))`` for every ``k``.

    The ratio increases by ``extra_k / (r_0 ... r_k)`` per stage where
    ``extra_k = r*sigma + stair*r*(r+1)/2 + slack``; past ``stages`` the
    increments are bounded by a geometric tail with ratio 1/2.
    """
    if spec.base_h is None:
        raise PreconditionError("the aux spec needs a base cube (base_h)")
    total = spec.base_h
    prod = 1
    biggest = Fraction(0)
    for k in range(stages):
        r, sigma, stair, slack = spec.stage(k)
        prod *= r
        extra = r * sigma + stair * r * (r + 1) / 2 + slack
        biggest = max(biggest, extra)
        total += extra / prod
    return total + biggest / prod  # sum_{j>=1} biggest / (prod * 2^j)


# --- state and certificates -------------------------------------------------


def auto_p_seq(count: int) -> list:
    """Prefix of 2, 2,3, 2,3,4, ... in which every p >= 2 recurs forever."""
    out: list = []
    k = 1
    while len(out) < count:
        out.extend(range(2, k + 2))
        k += 1
    return out[:count]


@dataclass
class ForcingState:
    p_seq: list
    schedule: CFSchedule
    partitions: dict
    markers: list
    log: list = field(default_factory=list)

    def partition(self, level: int) -> Partition:
        if level not in self.partitions:
            known = max(k for k in self.partitions if k <= level)
            P = self.partitions[known]
            for i in range(known + 1, level + 1):
                P = make_partition(self.schedule, i, P)
                self.partitions[i] = P
        return self.partitions[level]

    def to_json(self) -> dict:
        return {
            "p_seq": list(self.p_seq),
            "markers": list(self.markers),
            "partitions": [self.partitions[k].to_json() for k in sorted(self.partitions)],
            "steps": self.log,
        }

    @classmethod
    def from_flow_json(cls, obj: dict) -> "ForcingState":
        s = schedule_from_json(obj)
        f = obj.get("forcing")
        if f is None:
            raise ValueError("flow JSON has no 'forcing' section")
        parts = {int(P["level"]): Partition.from_json(P) for P in f["partitions"]}
        return cls(list(f["p_seq"]), s, parts, list(f["markers"]), list(f["steps"]))


def initial_state(p_seq: Sequence[int], h0=1, mesh=None) -> ForcingState:
    s = validate([CFLevel(rat(h0), ())], dim=1, strong=True)
    P0 = make_partition(s, 0, mesh=mesh)
    return ForcingState(list(p_seq), s, {0: P0}, [0], [])


@dataclass
class Certificate:
    step: int
    p: int
    a: int
    b: int
    atom_a: Box
    atom_b: Box
    t: Fraction
    N: int
    D: int
    base_level: int
    marker: int
    parts: list
    mass_fraction: Fraction
    checks: dict
    grid: list

    def to_json(self) -> dict:
        return {
            "step": self.step,
            "p": self.p,
            "a": self.a,
            "b": self.b,
            "atom_a": _box_json(self.atom_a),
            "atom_b": _box_json(self.atom_b),
            "t": format_rat(self.t),
            "N": self.N,
            "D": self.D,
            "base_level": self.base_level,
            "marker": self.marker,
            "parts": [c.to_json() for c in self.parts],
            "mass_fraction": format_rat(self.mass_fraction),
            "checks": dict(self.checks),
            "grid": [format_rat(t) for t in self.grid],
        }

    @classmethod
    def from_json(cls, obj: dict) -> "Certificate":
        return cls(
            step=int(obj["step"]),
            p=int(obj["p"]),
            a=int(obj["a"]),
            b=int(obj["b"]),
            atom_a=Box(obj["atom_a"]["lo"], obj["atom_a"]["hi"]),
            atom_b=Box(obj["atom_b"]["lo"], obj["atom_b"]["hi"]),
            t=rat(obj["t"]),
            N=int(obj["N"]),
            D=int(obj["D"]),
            base_level=int(obj["base_level"]),
            marker=int(obj["marker"]),
            parts=[Cylinder.from_json(c) for c in obj["parts"]],
            mass_fraction=rat(obj["mass_fraction"]),
            checks={k: bool(v) for k, v in obj["checks"].items()},
            grid=[rat(t) for t in obj["grid"]],
        )


def _box_json(b: Box) -> dict:
    return {"lo": [format_rat(x) for x in b.lo], "hi": [format_rat(x) for x in b.hi]}


def certificates_json(certs: Sequence[Certificate]) -> dict:
    return {"scope": SCOPE, "certificates": [c.to_json() for c in certs]}


def certificates_from_json(obj: dict) -> list:
    return [Certificate.from_json(c) for c in obj["certificates"]]


# --- one step ---------------------------------------------------------------

_CERT_CTX: dict = {}


def _set_cert_context(s_pow, atoms, p, base, marker, D, grid, budget, deadline):
    _CERT_CTX.clear()
    _CERT_CTX.update(
        s=s_pow, atoms=atoms, p=p, base=base, marker=marker, D=D, grid=grid, budget=budget, deadline=deadline
    )


def _cert_task(key):
    a, b, t = key
    c = _CERT_CTX
    s, base, marker, D = c["s"], c["base"], c["marker"], c["D"]
    A = Cylinder(base, c["atoms"][a])
    B = Cylinder(base, c["atoms"][b])
    res = fill(s, diag_time(t, c["p"]), A, B, c["budget"], max_level=marker, deadline=c["deadline"])
    if res.N > D:
        raise CertificateViolation(f"filling on the main schedule needs N = {res.N} > D = {D}")
    parts = list(res.parts)
    empty = BoxSet(s.dim)
    parts += [Cylinder(res.work_level, empty)] * (D + 1 - len(parts))
    mass = cylinder_measure(s, A)
    frac = res.filled / mass
    checks = _certificate_checks(s, A, B, parts, diag_time(t, c["p"]), marker, frac)
    atom_a = c["atoms"][a].boxes[0]
    atom_b = c["atoms"][b].boxes[0]
    return Certificate(
        step=c["step"],
        p=c["p"],
        a=a,
        b=b,
        atom_a=atom_a,
        atom_b=atom_b,
        t=t,
        N=res.N,
        D=D,
        base_level=base,
        marker=marker,
        parts=parts,
        mass_fraction=frac,
        checks=checks,
        grid=list(c["grid"]),
    )


def _certificate_checks(s, A, B, parts, g, marker, frac) -> dict:
    """The three (mass, target, disjointness) conditions, recomputed from scratch."""
    top = max([A.level] + [c.level for c in parts])
    lat = lattice_for(s, max(top, marker, B.level), g, [A.base, B.base] + [c.base for c in parts])
    k = lat.scale
    A_base = lat.lift_to(A.base.to_lattice(k), A.level, top)
    lifted = [lat.lift_to(c.base.to_lattice(k), c.level, top) for c in parts]
    inside = all(x <= A_base for x in lifted)
    vols = sum(x.volume() for x in lifted)
    up_disjoint = union_all(lifted, s.dim).volume() == vols
    mass = Fraction(vols, k**s.dim * s.divisor(top)) / cylinder_measure(s, A)
    mass_ok = inside and up_disjoint and mass == frac and mass > Fraction(1, 2)
    gk = [int(x * k) for x in g]
    images = []
    target_ok = True
    for i, c in enumerate(parts):
        if c.level > marker:
            target_ok = False
            break
        if not c.base:
            continue
        shift = tuple(i * x for x in gk)
        base, level = c.base.to_lattice(k), c.level
        while not fits_shift(base, shift, lat.h[level]):
            if level == marker:
                target_ok = False
                break
            base, level = lat.lift(base, level), level + 1
        else:
            images.append((level, base.shifted(shift)))
    if target_ok and images:
        top = max([B.level] + [m for m, _ in images])
        B_top = lat.lift_to(B.base.to_lattice(k), B.level, top)
        ib = [lat.lift_to(x, m, top) for m, x in images]
        target_ok = all(x <= B_top for x in ib)
        disjoint = union_all(ib, s.dim).volume() == sum(x.volume() for x in ib)
    else:
        disjoint = target_ok
    return {"mass": bool(mass_ok), "into_target": bool(target_ok), "disjoint": bool(disjoint)}


def run_step(
    state: ForcingState,
    n: int,
    aux: AuxFlowSpec,
    grid_density: int,
    budget: int,
    workers: int = 1,
    d_margin=1,
    deadline: float | None = None,
    max_depth: int = 64,
) -> tuple:
    """Step ``n`` of the construction; returns ``(new_state, certificates)``.

    If the auxiliary flow is too shallow for some filling its depth is
    doubled (up to ``max_depth``) and the grid is recomputed.
    """
    if n != len(state.markers):
        raise PreconditionError(f"state has completed {len(state.markers) - 1} steps; cannot run step {n}")
    if len(state.p_seq) < n:
        raise PreconditionError(f"p_seq has no entry for step {n}")
    p = state.p_seq[n - 1]
    if p < 1:
        raise PreconditionError("powers in p_seq must be positive")
    main = state.schedule
    m_prev = state.markers[-1]
    h_base = main.h(m_prev)
    if aux.base_h is not None and aux.base_h != h_base:
        raise PreconditionError(f"aux base cube {aux.base_h} differs from F_(m_(n-1)) = [0,{h_base})")
    spec = aux.with_base(h_base)

    P = state.partition(m_prev)
    atoms = P.product_atoms(p)
    grid = time_grid(n, grid_density)
    # Deepen the auxiliary flow until every filling fits inside it.
    while True:
        aux_s = gen_aux(spec, spec.depth)
        try:
            gm = grid_max(power_schedule(aux_s, p), atoms, n, grid_density, budget, p=p,
                          workers=workers, deadline=deadline, grid=grid)
            break
        except BudgetExhausted as exc:
            raise BudgetExhausted(exc.iterations, exc.accumulated, {"n": n, **exc.context}) from None
        except ScheduleTooShort:
            if spec.depth >= max_depth:
                raise
            spec = AuxFlowSpec(spec.cuts, spec.sigma, spec.stair, spec.slack,
                               min(2 * spec.depth, max_depth), spec.base_h)
    D = max(math.ceil(gm.D * rat(d_margin)), 1)
    graft = n * D
    if aux_s.L < graft:
        aux_s = gen_aux(spec, graft)

    levels = list(main.levels[:m_prev])
    for k in range(graft):
        levels.append(CFLevel(aux_s.h(k), aux_s.levels[k].C_next))
    levels.append(CFLevel(2 * aux_s.h(graft), ()))
    new_main = validate(levels, dim=1, strong=True)
    m_n = m_prev + graft

    partitions = {k: v for k, v in state.partitions.items() if k <= m_prev}
    new_state = ForcingState(list(state.p_seq), new_main, partitions, state.markers + [m_n], list(state.log))
    new_state.partition(m_n)

    main_pow = power_schedule(new_main, p)
    keys = itertools.product(range(len(atoms)), range(len(atoms)), grid)
    ctx = (main_pow, atoms, p, m_prev, m_n, D, grid, budget, deadline)
    certs = []
    for cert in ordered_map(_cert_task_for_step(n), keys, workers, initializer=_set_cert_context, initargs=ctx):
        certs.append(cert)

    new_state.log.append(
        {
            "n": n,
            "p": p,
            "grid_D": gm.D,
            "D": D,
            "m_prev": m_prev,
            "m": m_n,
            "grid": [format_rat(t) for t in grid],
            "aux": spec.to_json(),
            "atoms": len(atoms),
            "certificates": len(certs),
        }
    )
    return new_state, certs


class _cert_task_for_step:
    # Picklable callable that stamps the step index onto the worker context.
    def __init__(self, n: int):
        self.n = n

    def __call__(self, key):
        _CERT_CTX["step"] = self.n
        return _cert_task(key)


# --- verification -----------------------------------------------------------


@dataclass
class Verdict:
    checked: int
    failures: list

    @property
    def ok(self) -> bool:
        return not self.failures

    def to_json(self) -> dict:
        return {
            "ok": self.ok,
            "checked": self.checked,
            "failures": [{"index": i, "reason": r} for i, r in self.failures],
        }


def check_grafts(state: ForcingState) -> list:
    """Compare grafted main levels with freshly generated auxiliary levels."""
    problems = []
    s = state.schedule
    for rec in state.log:
        spec = AuxFlowSpec.from_json(rec["aux"])
        graft = rec["m"] - rec["m_prev"]
        if graft != rec["n"] * rec["D"]:
            problems.append(("step", rec["n"], "m_n - m_(n-1) differs from n*D_n"))
        aux_s = gen_aux(spec, max(graft, 1))
        for k in range(graft):
            lv = s.levels[rec["m_prev"] + k]
            if lv.h != aux_s.h(k) or lv.C_next != aux_s.levels[k].C_next:
                problems.append(("step", rec["n"], f"main level {rec['m_prev'] + k} differs from aux level {k}"))
        if rec["m"] > s.L or s.h(rec["m"]) != 2 * aux_s.h(graft):
            problems.append(("step", rec["n"], "top cube was not doubled"))
    return problems


def check_certificates(state: ForcingState, certs: Sequence[Certificate]) -> Verdict:
    """Re-verify every certificate on the main schedule, from scratch."""
    failures = []
    pows: dict = {}
    markers = state.markers
    for idx, cert in enumerate(certs):
        try:
            reason = _check_one(state, cert, pows, markers)
        except ForgeError as exc:
            reason = f"{type(exc).__name__}: {exc}"
        if reason:
            failures.append((idx, reason))
    for prob in check_grafts(state):
        failures.append((-1, f"step {prob[1]}: {prob[2]}"))
    return Verdict(len(certs), failures)


def _check_one(state, cert, pows, markers) -> str | None:
    n = cert.step
    if not 1 <= n < len(markers):
        return f"step {n} is not part of the flow"
    if cert.base_level != markers[n - 1] or cert.marker != markers[n]:
        return "levels do not match the flow's markers"
    if cert.p != state.p_seq[n - 1]:
        return "power differs from p_seq"
    if len(cert.parts) != cert.D + 1 or cert.marker - cert.base_level != n * cert.D:
        return "certificate shape does not match n*D_n"
    if cert.t not in time_grid(n, _density_of(cert.grid, n)):
        return "time is not on the recorded grid"
    P = state.partition(cert.base_level)
    count = P.count
    if not (0 <= cert.a < count ** cert.p and 0 <= cert.b < count ** cert.p):
        return "atom index out of range"
    if _atom_box(P, cert.a, cert.p) != cert.atom_a or _atom_box(P, cert.b, cert.p) != cert.atom_b:
        return "atoms are not atoms of the partition at m_(n-1)"
    if cert.p not in pows:
        pows[cert.p] = power_schedule(state.schedule, cert.p)
    s = pows[cert.p]
    A = Cylinder(cert.base_level, BoxSet.from_box(cert.atom_a.lo, cert.atom_a.hi))
    B = Cylinder(cert.base_level, BoxSet.from_box(cert.atom_b.lo, cert.atom_b.hi))
    for c in cert.parts:
        if c.base and not c.base <= s.F(c.level):
            return "a part lies outside its cube"
    checks = _certificate_checks(s, A, B, cert.parts, diag_time(cert.t, cert.p), cert.marker, cert.mass_fraction)
    bad = [k for k, v in checks.items() if not v]
    if bad:
        return "failed: " + ", ".join(bad)
    if checks != cert.checks:
        return "recorded checks differ from recomputation"
    return None


def _density_of(grid: Sequence[Fraction], n: int) -> int:
    if len(grid) < 2:
        return 1
    return int(1 / (n * (grid[1] - grid[0])))


def _atom_box(P: Partition, index: int, p: int) -> Box:
    digits = []
    for _ in range(p):
        index, k = divmod(index, P.count)
        digits.append(k)
    digits.reverse()
    return Box(tuple(k * P.step for k in digits), tuple((k + 1) * P.step for k in digits))


# --- the whole construction -------------------------------------------------


@dataclass
class FlowReport:
    markers: list
    D: list
    ratios: list
    doubling_ok: bool
    lebesgue_ok: bool
    verdict: Verdict
    certificates: int

    def to_json(self) -> dict:
        return {
            "markers": self.markers,
            "D": self.D,
            "ratios": [format_rat(r) for r in self.ratios],
            "doubling_at_markers": self.doubling_ok,
            "lebesgue_jump_at_markers": self.lebesgue_ok,
            "verdict": self.verdict.to_json(),
            "certificates": self.certificates,
        }


def marker_checks(s: CFSchedule, markers: Sequence[int]) -> tuple:
    """Ratio doubling ``r_m >= 2 r_(m-1)`` and ``h_m > 2 h_(m-1) #C_m`` at markers."""
    r = measure_ratios(s)
    doubling = all(r[m] >= 2 * r[m - 1] for m in markers[1:])
    leb = all(s.h(m) > 2 * s.h(m - 1) * len(s.C(m)) for m in markers[1:])
    return doubling, leb


def build_flow(
    p_seq,
    steps: int,
    aux_specs,
    grid_density: int,
    budget: int,
    workers: int = 1,
    d_margin=1,
    deadline: float | None = None,
    h0=1,
    initial_mesh=None,
) -> tuple:
    """Run steps ``1..steps`` from ``F_0 = [0, h0)``.

    Returns ``(schedule, certificates, report, state)``.  ``aux_specs`` is a
    single :class:`AuxFlowSpec` or one per step; ``p_seq`` may be ``"auto"``.
    """
    if steps < 1:
        raise ValueError("steps must be at least 1")
    if p_seq == "auto" or p_seq is None:
        p_seq = auto_p_seq(steps)
    p_seq = list(p_seq)
    if len(p_seq) < steps:
        raise PreconditionError(f"p_seq has {len(p_seq)} entries for {steps} steps")
    if isinstance(aux_specs, AuxFlowSpec):
        aux_specs = [aux_specs] * steps
    aux_specs = list(aux_specs)
    if len(aux_specs) < steps:
        raise PreconditionError(f"{len(aux_specs)} aux specs for {steps} steps")
    state = initial_state(p_seq[:steps], h0, initial_mesh)
    certs: list = []
    for n in range(1, steps + 1):
        state, new = run_step(state, n, aux_specs[n - 1], grid_density, budget, workers, d_margin, deadline)
        certs.extend(new)
    verdict = check_certificates(state, certs)
    doubling, leb = marker_checks(state.schedule, state.markers)
    report = FlowReport(
        markers=list(state.markers),
        D=[rec["D"] for rec in state.log],
        ratios=measure_ratios(state.schedule),
        doubling_ok=doubling,
        lebesgue_ok=leb,
        verdict=verdict,
        certificates=len(certs),
    )
    return state.schedule, certs, report, state


def flow_json(state: ForcingState) -> dict:
    out = state.schedule.to_json()
    out["forcing"] = state.to_json()
    return out
