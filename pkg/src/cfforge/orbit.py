"""Pointwise dynamics on explicit level coordinates.

A point of the limit space is stored as its coordinate in some ``F_M``
together with a seed that fixes every later choice ``c_(M+1), c_(M+2), ...``.
The choice at level ``k`` depends only on ``(seed, k)``, so embedding in one
go or in several hops gives the same point.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from typing import Sequence

from .boxset import _vec, format_rat, rat
from .cfcore import CFSchedule, Cylinder, diag_time, lift, power_schedule
from .errors import ScheduleTooShort

_MASK = (1 << 64) - 1


def splitmix64(x: int) -> int:
    x = (x + 0x9E3779B97F4A7C15) & _MASK
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & _MASK
    return x ^ (x >> 31)


def tail_choice(seed: int, k: int, count: int) -> int:
    """Index into ``C_k`` used by points with this seed."""
    return splitmix64((seed & _MASK) ^ splitmix64(k)) % count


@dataclass(frozen=True)
class FiberPoint:
    level: int
    coord: tuple
    tail_seed: int = 0

    def to_json(self) -> dict:
        return {"level": self.level, "coord": [format_rat(x) for x in self.coord], "tail_seed": self.tail_seed}

    @classmethod
    def from_json(cls, obj: dict) -> "FiberPoint":
        return cls(int(obj["level"]), tuple(rat(x) for x in obj["coord"]), int(obj.get("tail_seed", 0)))


def make_point(s: CFSchedule, level: int, coord, seed: int = 0) -> FiberPoint:
    coord = _vec(coord, s.dim)
    if not 0 <= level <= s.L:
        raise ValueError(f"level {level} outside 0..{s.L}")
    h = s.h(level)
    if not all(0 <= x < h for x in coord):
        raise ValueError(f"coordinate {coord} is not in F_{level}")
    return FiberPoint(level, coord, seed)


def embed(s: CFSchedule, x: FiberPoint, m: int) -> FiberPoint:
    """The same point written in level-``m`` coordinates."""
    if m < x.level or m > s.L:
        raise ValueError(f"cannot embed a level-{x.level} point at level {m} (schedule has 0..{s.L})")
    coord = x.coord
    for k in range(x.level + 1, m + 1):
        C = s.C(k)
        c = C[tail_choice(x.tail_seed, k, len(C))]
        coord = tuple(a + b for a, b in zip(coord, c))
    return FiberPoint(m, coord, x.tail_seed)


def _inside(coord: tuple, h: Fraction) -> bool:
    return all(0 <= a < h for a in coord)


def flow_point(s: CFSchedule, x: FiberPoint, g, max_level: int | None = None) -> FiberPoint:
    """``T_g x``: embed until ``coord + g`` lies in the cube, then translate."""
    g = _vec(g, s.dim)
    top = s.L if max_level is None else min(max_level, s.L)
    m = x.level
    coord = x.coord
    while True:
        moved = tuple(a + b for a, b in zip(coord, g))
        if _inside(moved, s.h(m)):
            return FiberPoint(m, moved, x.tail_seed)
        if m >= top:
            raise ScheduleTooShort(f"T_g leaves F_{m} for this point; extend the schedule")
        m += 1
        C = s.C(m)
        c = C[tail_choice(x.tail_seed, m, len(C))]
        coord = tuple(a + b for a, b in zip(coord, c))


def same_point(s: CFSchedule, x: FiberPoint, y: FiberPoint) -> bool:
    """Whether two points agree at the top level of the finite schedule."""
    return embed(s, x, s.L).coord == embed(s, y, s.L).coord


def in_cylinder(s: CFSchedule, x: FiberPoint, c: Cylinder) -> bool:
    m = max(x.level, c.level)
    return lift(s, c, m).base.contains_point(embed(s, x, m).coord)


def in_product_cylinder(s: CFSchedule, s_pow: CFSchedule, xs: Sequence[FiberPoint], c: Cylinder) -> bool:
    """Membership of a tuple of points of ``s`` in a cylinder of ``s_pow``."""
    m = max([c.level] + [x.level for x in xs])
    coord = ()
    for x in xs:
        coord += embed(s, x, m).coord
    return lift(s_pow, c, m).base.contains_point(coord)


@dataclass
class SweepRow:
    target: int
    hits: int
    censored: int
    samples: int
    first_hits: list = field(default_factory=list)

    @property
    def fraction(self) -> Fraction:
        return Fraction(self.hits, self.samples) if self.samples else Fraction(0)

    def to_json(self) -> dict:
        mean = Fraction(sum(self.first_hits), len(self.first_hits)) if self.first_hits else None
        return {
            "target": self.target,
            "samples": self.samples,
            "hits": self.hits,
            "censored": self.censored,
            "fraction": format_rat(self.fraction),
            "mean_first_hit": None if mean is None else format_rat(mean),
            "earliest": min(self.first_hits) if self.first_hits else None,
        }


def sweep_stats(
    s: CFSchedule,
    t,
    p: int,
    sample: Sequence[Sequence[FiberPoint]],
    horizon: int,
    targets: Sequence[Cylinder],
    s_pow: CFSchedule | None = None,
) -> list:
    """First-hit times of ``V_t^i`` orbits, ``i < horizon``, into each target.

    A tuple whose orbit leaves the finite schedule before hitting a target
    counts as censored for that target.
    """
    if horizon < 1:
        raise ValueError("horizon must be at least 1")
    if not sample:
        return []
    if s_pow is None:
        s_pow = power_schedule(s, p)
    t = rat(t)
    rows = [SweepRow(j, 0, 0, len(sample)) for j in range(len(targets))]
    for xs in sample:
        if len(xs) != p:
            raise ValueError(f"sample tuples must have {p} points")
        pending = set(range(len(targets)))
        for i in range(horizon):
            if not pending:
                break
            try:
                moved = [flow_point(s, x, diag_time(i * t, 1, s.dim)) for x in xs]
            except ScheduleTooShort:
                for j in pending:
                    rows[j].censored += 1
                pending = set()
                break
            for j in sorted(pending):
                if in_product_cylinder(s, s_pow, moved, targets[j]):
                    rows[j].hits += 1
                    rows[j].first_hits.append(i)
                    pending.discard(j)
    return rows
