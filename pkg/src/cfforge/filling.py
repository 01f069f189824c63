"""Filling sets and filling numbers for translations of a (C,F)-action.

Given ``S = T_q`` and cylinders ``A``, ``B`` of equal measure, the filling
sets are

    A_0 = A & B
    A_i = (A - U_{j<i} A_j) & S^-i (B - U_{j<i} S^j A_j)

and the filling number ``N(S, A, B)`` is the least ``i`` with
``mu(A_0 | ... | A_i) > mu(A) / 2``.
"""

from __future__ import annotations

import itertools
import math
import time
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Sequence

from .boxset import BoxSet, format_rat, rat, translate, union_all, _vec
from .cfcore import (
    CFSchedule,
    Cylinder,
    cylinder_measure,
    descend,
    diag_time,
    lift,
    lift_base,
)
from .errors import (
    BudgetExhausted,
    CertificateViolation,
    DeadlineExceeded,
    PreconditionError,
    ScheduleTooShort,
    WorkLimitExceeded,
)
from .parallel import ordered_map

ADAPTIVE = "adaptive"
LEMMA = "lemma"


@dataclass
class FillingResult:
    q: tuple
    A: Cylinder
    B: Cylinder
    work_level: int
    parts: list
    N: int
    Q: int
    mode: str = ADAPTIVE
    filled: Fraction = Fraction(0)

    def part_measures(self, s: CFSchedule) -> list:
        return [cylinder_measure(s, p) for p in self.parts]

    def to_json(self) -> dict:
        return {
            "q": [format_rat(x) for x in self.q],
            "N": self.N,
            "Q": self.Q,
            "work_level": self.work_level,
            "mode": self.mode,
            "filled": format_rat(self.filled),
            "parts": [p.to_json() for p in self.parts],
        }


# Refuse lifts whose result could pass this many boxes.  A 3-D set of 3e7
# boxes already takes about a gigabyte, and the set algebra on it several more.
MAX_BOXES = 1 << 25


def least_integer_above(q: Sequence[Fraction]) -> int:
    """``floor(||q||) + 1`` with the max norm."""
    return math.floor(max(abs(x) for x in q)) + 1


class _Lattice:
    """Levels ``0..top`` of a schedule rescaled so every coordinate is an int."""

    def __init__(self, s: CFSchedule, scale: int, top: int):
        self.s = s
        self.scale = scale
        self.h = [s.h(n) * scale for n in range(top + 1)]
        self.h = [int(x) for x in self.h]
        self.moves = [None]
        for n in range(1, top + 1):
            axes = s.factors(n)
            if axes is not None:
                self.moves.append(("spread", [[int(c * scale) for c in ax] for ax in axes]))
            else:
                self.moves.append(("vectors", [tuple(int(x * scale) for x in c) for c in s.C(n)]))

    def lift(self, base: BoxSet, n: int) -> BoxSet:
        """Level ``n`` base to level ``n + 1``."""
        kind, offs = self.moves[n + 1]
        if kind == "spread":
            return base.spread_raw(offs)
        return base.translates_raw(offs)

    def lift_to(self, base: BoxSet, n: int, m: int) -> BoxSet:
        for k in range(n, m):
            base = self.lift(base, k)
        return base


def _lattice_scale(s: CFSchedule, top: int, vectors, sets) -> int:
    den = 1
    for n in range(top + 1):
        den = math.lcm(den, s.h(n).denominator)
        if n:
            for c in s.C(n):
                for x in c:
                    den = math.lcm(den, x.denominator)
    for x in vectors:
        den = math.lcm(den, x.denominator)
    for S in sets:
        for b in S.boxes:
            for x in b.lo + b.hi:
                den = math.lcm(den, x.denominator)
    return den


_LATTICES: dict = {}


def _lattice(s: CFSchedule, scale: int, top: int) -> _Lattice:
    key = (s, scale, top)
    lat = _LATTICES.get(key)
    if lat is None:
        if len(_LATTICES) > 64:
            _LATTICES.clear()
        lat = _Lattice(s, scale, top)
        _LATTICES[key] = lat
    return lat


def lattice_for(s: CFSchedule, top: int, vectors=(), sets=()) -> _Lattice:
    """Integer rescaling of levels ``0..top`` that also covers the given data."""
    return _lattice(s, _lattice_scale(s, top, vectors, sets), top)


def fits_shift(base: BoxSet, shift: tuple, h) -> bool:
    bb = base.bounds()
    if bb is None:
        return True
    return all(lo + g >= 0 and hi + g <= h for lo, hi, g in zip(bb[0], bb[1], shift))


def fill(
    s: CFSchedule,
    q,
    A: Cylinder,
    B: Cylinder,
    budget: int,
    max_level: int | None = None,
    mode: str = ADAPTIVE,
    deadline: float | None = None,
    max_boxes: int | None = MAX_BOXES,
) -> FillingResult:
    """Run the filling recursion for ``S = T_q`` from ``A`` into ``B``.

    ``budget`` bounds the number of recursion steps ``i = 0, 1, ...``.

    In adaptive mode the working level starts at the level of the inputs
    and is raised only when the current remainder of ``A`` shifted by
    ``i*q`` would leave the cube, so that ``S^i`` is a plain translation on
    everything it touches.  In lemma mode (``q >= 0``, strong schedule) the
    work is done at level ``n + Q*budget`` and the parts are then read back
    at level ``n + Q*N``; failure to do so raises CertificateViolation.

    Internally all coordinates are rescaled onto a common integer lattice.
    A lift whose result could exceed ``max_boxes`` boxes raises
    WorkLimitExceeded instead of exhausting memory.
    """
    q = _vec(q, s.dim)
    mu_a = cylinder_measure(s, A)
    mu_b = cylinder_measure(s, B)
    if mu_a != mu_b:
        raise PreconditionError(f"mu(A) = {mu_a} differs from mu(B) = {mu_b}")
    if mu_a <= 0:
        raise PreconditionError("A must have positive measure")
    if budget < 0:
        raise ValueError("budget must be non-negative")
    Q = least_integer_above(q)
    n0 = max(A.level, B.level)
    top = s.L if max_level is None else min(max_level, s.L)
    if mode == LEMMA:
        if any(x < 0 for x in q):
            raise PreconditionError("lemma mode needs q with non-negative components")
        if not s.checked_strong:
            raise PreconditionError("lemma mode needs a strongly validated schedule")
        level = min(n0 + Q * budget, top)
    elif mode == ADAPTIVE:
        level = n0
    else:
        raise ValueError(f"unknown fill mode {mode!r}")
    if level < n0:
        raise ScheduleTooShort(f"inputs live at level {n0} beyond max level {top}")

    scale = _lattice_scale(s, top, q, (A.base, B.base))
    lat = _lattice(s, scale, top)
    qi = tuple(int(x * scale) for x in q)
    rem_a = lift(s, A, level).base.to_lattice(scale)
    rem_b = lift(s, B, level).base.to_lattice(scale)
    cell = scale ** s.dim
    half = mu_a / 2
    acc = Fraction(0)
    parts: list = []
    N = None
    for i in range(budget):
        if deadline is not None and time.time() > deadline:
            raise DeadlineExceeded(f"deadline passed during filling at step {i}")
        shift = tuple(i * x for x in qi)
        while not fits_shift(rem_a, shift, lat.h[level]):
            if mode == LEMMA or level >= top:
                raise ScheduleTooShort(
                    f"step {i} of the filling needs a level above {level}; extend the schedule"
                )
            if max_boxes is not None:
                bound = (len(rem_a) + len(rem_b)) * len(s.C(level + 1))
                if bound > max_boxes:
                    raise WorkLimitExceeded(
                        f"lifting to level {level + 1} at step {i} may need {bound} boxes (cap {max_boxes})"
                    )
            rem_a = lat.lift(rem_a, level)
            rem_b = lat.lift(rem_b, level)
            level += 1
            if deadline is not None and time.time() > deadline:
                raise DeadlineExceeded(f"deadline passed during filling at step {i}")
        neg = tuple(-x for x in shift)
        part = rem_a & rem_b.shifted(neg)
        parts.append((level, part))
        if part:
            rem_a = rem_a - part
            rem_b = rem_b - part.shifted(shift)
            acc += Fraction(part.volume()) / (cell * s.divisor(level))
        if acc > half:
            N = i
            break
    if N is None:
        raise BudgetExhausted(budget, acc)

    work = level
    lifted = []
    for lv, base in parts:
        for k in range(lv, work):
            base = lat.lift(base, k)
        lifted.append(Cylinder(work, base.from_lattice(scale)))
    if mode == LEMMA:
        target = n0 + Q * N
        if target <= work:
            down = []
            for c in lifted:
                d = descend(s, c, target)
                if d is None:
                    raise CertificateViolation(f"a filling set is not a level-{target} cylinder")
                down.append(d)
            lifted = down
        elif target <= s.L:
            lifted = [lift(s, c, target) for c in lifted]
        else:
            raise ScheduleTooShort(f"level n + Q*N = {target} exceeds the schedule")
        work = target
    return FillingResult(q, A, B, work, lifted, N, Q, mode, acc)


def image_stack(s: CFSchedule, result: FillingResult) -> list:
    """The cylinders ``S^i A_i``, with containment and disjointness verified."""
    k = result.work_level
    F = s.F(k)
    B = lift(s, result.B, k).base
    images = []
    total = Fraction(0)
    for i, part in enumerate(result.parts):
        if part.level != k:
            part = lift(s, part, k)
        img = translate(part.base, tuple(i * x for x in result.q))
        if not img <= F:
            raise CertificateViolation(f"S^{i} A_{i} is not a translation at level {k}")
        if not img <= B:
            raise CertificateViolation(f"S^{i} A_{i} is not contained in B")
        images.append(Cylinder(k, img))
        total += img.volume()
    union = union_all([c.base for c in images], s.dim)
    if union.volume() != total:
        raise CertificateViolation("the images S^i A_i overlap")
    if total / s.divisor(k) != result.filled:
        raise CertificateViolation("image mass differs from the filled mass")
    return images


# --- D-type maxima over time grids --------------------------------------------


def time_grid(n: int, density: int) -> list:
    """``{1/n + k/(n*density)}`` covering ``[1/n, n]``.

    Doubling ``density`` yields a superset; the step is at most ``1/density``.
    """
    if n < 1 or density < 1:
        raise ValueError("n and density must be positive")
    start = Fraction(1, n)
    step = Fraction(1, n * density)
    return [start + k * step for k in range(density * (n * n - 1) + 1)]


@dataclass
class GridMax:
    p: int
    n_step: int
    grid: list
    table: dict = field(default_factory=dict)
    D: int = 0

    def to_json(self) -> dict:
        rows = [
            {"a": a, "b": b, "t": format_rat(t), "N": v}
            for (a, b, t), v in sorted(self.table.items())
        ]
        return {
            "n": self.n_step,
            "p": self.p,
            "grid": [format_rat(t) for t in self.grid],
            "table": rows,
            "D": self.D,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "GridMax":
        table = {(r["a"], r["b"], rat(r["t"])): int(r["N"]) for r in obj["table"]}
        return cls(int(obj["p"]), int(obj["n"]), [rat(t) for t in obj["grid"]], table, int(obj["D"]))


_CTX: dict = {}


def _set_grid_context(s, level, atoms, p, d, budget, deadline):
    _CTX.clear()
    _CTX.update(s=s, level=level, atoms=atoms, p=p, d=d, budget=budget, deadline=deadline)


def _grid_task(key):
    a, b, t = key
    c = _CTX
    A = Cylinder(c["level"], c["atoms"][a])
    B = Cylinder(c["level"], c["atoms"][b])
    try:
        res = fill(c["s"], diag_time(t, c["p"], c["d"]), A, B, c["budget"], deadline=c["deadline"])
    except BudgetExhausted as exc:
        exc.context.update({"a": a, "b": b, "t": format_rat(t)})
        raise BudgetExhausted(exc.iterations, exc.accumulated, exc.context) from None
    return key, res.N


def grid_max(
    s_pow: CFSchedule,
    atoms: Sequence[BoxSet],
    n: int,
    grid_density: int,
    budget: int,
    p: int | None = None,
    d: int = 1,
    workers: int = 1,
    deadline: float | None = None,
    level: int = 0,
    grid: Sequence | None = None,
) -> GridMax:
    """Tabulate ``N(S_t, [a]_0, [b]_0)`` over atom pairs and a time grid.

    ``D`` is the maximum of the table, a lower bound for the supremum over
    the whole segment ``[1/n, n]``.
    """
    if p is None:
        p = s_pow.dim // d
    grid = list(grid) if grid is not None else time_grid(n, grid_density)
    atoms = list(atoms)
    keys = itertools.product(range(len(atoms)), range(len(atoms)), grid)
    table = {}
    ctx = (s_pow, level, atoms, p, d, budget, deadline)
    for key, N in ordered_map(_grid_task, keys, workers, initializer=_set_grid_context, initargs=ctx):
        table[key] = N
    D = max(table.values()) if table else 0
    return GridMax(p, n, grid, table, D)


@dataclass
class ProbeReport:
    t0: Fraction
    N0: int
    rows: list

    @property
    def flagged(self) -> list:
        return [r["r"] for r in self.rows if r["flag"]]

    def to_json(self) -> dict:
        return {
            "t0": format_rat(self.t0),
            "N0": self.N0,
            "rows": [
                {
                    "r": format_rat(r["r"]),
                    "N_minus": r["N_minus"],
                    "N_plus": r["N_plus"],
                    "flag": r["flag"],
                }
                for r in self.rows
            ],
        }


def semicontinuity_probe(
    s_pow: CFSchedule,
    A: Cylinder,
    B: Cylinder,
    t0,
    radii: Sequence,
    budget: int,
    p: int | None = None,
    d: int = 1,
) -> ProbeReport:
    """Filling numbers at ``t0`` and ``t0 +- r``; flags radii where a
    neighbour exceeds ``N(t0)``.  Diagnostic only."""
    t0 = rat(t0)
    if t0 <= 0:
        raise ValueError("t0 must be positive")
    if p is None:
        p = s_pow.dim // d

    def N_at(t):
        return fill(s_pow, diag_time(t, p, d), A, B, budget).N

    N0 = N_at(t0)
    rows = []
    for r in radii:
        r = rat(r)
        lo = N_at(t0 - r) if t0 - r > 0 else None
        hi = N_at(t0 + r)
        flag = (lo is not None and lo > N0) or hi > N0
        rows.append({"r": r, "N_minus": lo, "N_plus": hi, "flag": flag})
    return ProbeReport(t0, N0, rows)
