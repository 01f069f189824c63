"""(C,F)-schedules of R^d and the cylinder calculus on them.

A schedule is the finite prefix ``F_0, C_1, F_1, ..., C_L, F_L`` of a
(C,F)-construction.  Every ``F_n`` is the cube ``[0, h_n)^d``; the level
record at index ``n`` carries ``h_n`` and the translation set ``C_(n+1)``.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from fractions import Fraction
from functools import cached_property
from typing import Iterable, Sequence

from .boxset import BoxSet, DimensionMismatch, cube, format_rat, rat, translate, _vec
from .errors import (
    BadCube,
    ContainmentViolation,
    IndependenceViolation,
    PreconditionError,
    ScheduleTooShort,
    StrongContainmentViolation,
    TooFewTranslations,
)

Vector = tuple  # tuple[Fraction, ...]

DEFAULT_MAX_TRANSLATIONS = 1_000_000


@dataclass(frozen=True)
class CFLevel:
    h: Fraction
    C_next: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "h", rat(self.h))
        object.__setattr__(self, "C_next", tuple(_vec(c) for c in self.C_next))


@dataclass(frozen=True, eq=False)
class CFSchedule:
    dim: int
    levels: tuple
    checked_strong: bool = False

    @property
    def L(self) -> int:
        return len(self.levels) - 1

    def h(self, n: int) -> Fraction:
        return self.levels[n].h

    def F(self, n: int) -> BoxSet:
        return self._cubes[n]

    def C(self, n: int) -> tuple:
        """The translation set ``C_n`` (``n >= 1``)."""
        if not 1 <= n <= self.L:
            raise IndexError(f"C_{n} is not defined for a schedule of length {self.L}")
        return self.levels[n - 1].C_next

    def divisor(self, n: int) -> int:
        """``#C_1 * ... * #C_n``."""
        return self._divisors[n]

    @cached_property
    def _cubes(self) -> list:
        return [cube(lv.h, self.dim) for lv in self.levels]

    @cached_property
    def _divisors(self) -> list:
        out = [1]
        for n in range(1, len(self.levels)):
            out.append(out[-1] * len(self.levels[n - 1].C_next))
        return out

    @cached_property
    def _factors(self) -> dict:
        return {}

    def factors(self, n: int):
        """Per-axis factor sets if ``C_n`` is a Cartesian product, else None."""
        cache = self._factors
        if n not in cache:
            cache[n] = _product_factors(self.C(n), self.dim)
        return cache[n]

    def __eq__(self, other):
        return (
            isinstance(other, CFSchedule)
            and self.dim == other.dim
            and self.levels == other.levels
            and self.checked_strong == other.checked_strong
        )

    def __hash__(self):
        return hash((self.dim, self.levels, self.checked_strong))

    def __getstate__(self):
        return {"dim": self.dim, "levels": self.levels, "checked_strong": self.checked_strong}

    def __setstate__(self, state):
        for k, v in state.items():
            object.__setattr__(self, k, v)

    def prefix(self, L: int) -> "CFSchedule":
        """The schedule truncated at level ``L`` (top ``C_next`` dropped)."""
        levels = list(self.levels[: L + 1])
        levels[-1] = CFLevel(levels[-1].h, ())
        return CFSchedule(self.dim, tuple(levels), self.checked_strong)

    # JSON
    def to_json(self) -> dict:
        return {
            "dim": self.dim,
            "levels": [
                {"h": format_rat(lv.h), "C_next": [[format_rat(x) for x in c] for c in lv.C_next]}
                for lv in self.levels
            ],
            "strong": self.checked_strong,
        }


def _product_factors(C: Sequence[tuple], dim: int):
    if dim == 1:
        return [sorted(c[0] for c in C)]
    axes = [sorted({c[k] for c in C}) for k in range(dim)]
    if math.prod(len(a) for a in axes) != len(set(C)):
        return None
    return axes


def schedule_from_json(obj: dict, validate_it: bool = True) -> CFSchedule:
    """Parse schedule JSON; field errors name the offending path."""
    try:
        dim = int(obj["dim"])
        raw_levels = obj["levels"]
    except KeyError as exc:
        raise ValueError(f"schedule JSON is missing field {exc.args[0]!r}") from exc
    levels = []
    for n, lv in enumerate(raw_levels):
        try:
            h = rat(lv["h"])
        except KeyError as exc:
            raise ValueError(f"levels[{n}]: missing field 'h'") from exc
        except (ValueError, TypeError) as exc:
            raise ValueError(f"levels[{n}].h: {exc}") from exc
        C = []
        for j, c in enumerate(lv.get("C_next", [])):
            try:
                C.append(_vec(c, dim))
            except (ValueError, TypeError) as exc:
                raise ValueError(f"levels[{n}].C_next[{j}]: {exc}") from exc
        levels.append(CFLevel(h, tuple(C)))
    strong = bool(obj.get("strong", False))
    if validate_it:
        return validate(levels, dim=dim, strong=strong)
    return CFSchedule(dim, tuple(levels), strong)


# --- validation -------------------------------------------------------------


def _check_independent(n: int, h: Fraction, C: Sequence[tuple]):
    # (F - F) is the open cube (-h, h)^d, so two translations clash exactly
    # when they differ by less than h in every coordinate.  Bucketing by
    # floor(c / h) limits the comparison to neighbouring buckets.
    buckets: dict = {}
    for c in C:
        key = tuple(math.floor(x / h) for x in c)
        buckets.setdefault(key, []).append(c)
    seen = set()
    for c in C:
        if c in seen:
            raise IndependenceViolation(n, f"duplicate translation {tuple(map(str, c))}")
        seen.add(c)
    dim = len(C[0])
    for key, members in buckets.items():
        for delta in itertools.product((-1, 0, 1), repeat=dim):
            other = buckets.get(tuple(k + d for k, d in zip(key, delta)))
            if not other:
                continue
            for c in members:
                for e in other:
                    if c is e:
                        continue
                    if all(abs(a - b) < h for a, b in zip(c, e)):
                        diff = ", ".join(str(a - b) for a, b in zip(c, e))
                        raise IndependenceViolation(n, f"c - c' = ({diff}) lies in F_{n} - F_{n}")


def validate(levels: Iterable, dim: int | None = None, strong: bool = False) -> CFSchedule:
    """Check independence and containment, plus strong containment when asked.

    Raises the first violation found, scanning levels in order.  The strong
    condition is checked at the corner ``a = (1, ..., 1)``, which implies it
    for every ``0 <= a``, ``||a|| <= 1``.
    """
    levels = [lv if isinstance(lv, CFLevel) else CFLevel(**lv) for lv in levels]
    if not levels:
        raise ValueError("a schedule needs at least one level")
    if dim is None:
        dim = len(levels[0].C_next[0]) if levels[0].C_next else 1
    for n, lv in enumerate(levels):
        if lv.h <= 0:
            raise BadCube(n, f"h_{n} = {lv.h} is not positive")
        for c in lv.C_next:
            if len(c) != dim:
                raise DimensionMismatch(f"level {n}: translation of length {len(c)} in dimension {dim}")
    L = len(levels) - 1
    if levels[L].C_next:
        raise ContainmentViolation(L, "C_next given at the top level without a following cube")
    for n in range(L):
        h, C, h_next = levels[n].h, levels[n].C_next, levels[n + 1].h
        if len(C) < 2:
            raise TooFewTranslations(n, f"#C_{n + 1} = {len(C)}")
        _check_independent(n, h, C)
        for c in C:
            if any(x < 0 or x + h > h_next for x in c):
                raise ContainmentViolation(n, f"F_{n} + {tuple(map(str, c))} leaves F_{n + 1}")
        if strong:
            for c in C:
                if any(x + h + 1 > h_next for x in c):
                    raise StrongContainmentViolation(
                        n, f"(1,...,1) + F_{n} + {tuple(map(str, c))} leaves F_{n + 1}"
                    )
    return CFSchedule(dim, tuple(levels), strong)


# --- cylinders --------------------------------------------------------------


@dataclass(frozen=True)
class Cylinder:
    level: int
    base: BoxSet

    def to_json(self) -> dict:
        return {"level": self.level, "base": self.base.to_json()}

    @classmethod
    def from_json(cls, obj: dict) -> "Cylinder":
        try:
            return cls(int(obj["level"]), BoxSet.from_json(obj["base"]))
        except KeyError as exc:
            raise ValueError(f"cylinder JSON is missing field {exc.args[0]!r}") from exc


def cylinder(s: CFSchedule, level: int, base: BoxSet) -> Cylinder:
    """Build ``[base]_level`` after checking ``base`` lies in ``F_level``."""
    _check_level(s, level)
    if base.dim != s.dim:
        raise DimensionMismatch(f"base has dimension {base.dim}, schedule {s.dim}")
    if not base <= s.F(level):
        raise PreconditionError(f"cylinder base is not contained in F_{level}")
    return Cylinder(level, base)


def _check_level(s: CFSchedule, n: int):
    if not 0 <= n <= s.L:
        raise ScheduleTooShort(f"level {n} is outside the schedule (L = {s.L})")


def cylinder_measure(s: CFSchedule, c: Cylinder) -> Fraction:
    _check_level(s, c.level)
    return c.base.volume() / s.divisor(c.level)


def lift_base(s: CFSchedule, base: BoxSet, n: int) -> BoxSet:
    """``base + C_(n+1)`` for a base at level ``n``."""
    if not base:
        return base
    axes = s.factors(n + 1)
    if axes is not None:
        return base.spread(axes)
    return base.translates(s.C(n + 1))


def lift(s: CFSchedule, c: Cylinder, m: int) -> Cylinder:
    """Re-express ``c`` as a level-``m`` cylinder via ``[A]_n = U_c [A + c]_(n+1)``."""
    _check_level(s, c.level)
    if m < c.level:
        raise ValueError(f"cannot lift a level-{c.level} cylinder down to {m}")
    _check_level(s, m)
    base = c.base
    for n in range(c.level, m):
        base = lift_base(s, base, n)
    return Cylinder(m, base)


def descend(s: CFSchedule, c: Cylinder, m: int) -> Cylinder | None:
    """The level-``m`` cylinder equal to ``c`` as a subset of X, or None.

    ``c`` is a level-``m`` cylinder exactly when its base is the lift of some
    base in ``F_m``.  The candidate is read off one copy per level and
    confirmed by lifting it back.
    """
    if m > c.level:
        raise ValueError("descend target must not exceed the cylinder level")
    base = c.base
    for n in range(c.level, m, -1):
        if not base:
            continue
        C = s.C(n)
        F_prev = s.F(n - 1)
        c0 = C[0]
        neg = tuple(-x for x in c0)
        cand = translate(base & translate(F_prev, c0), neg)
        if lift_base(s, cand, n - 1) != base:
            return None
        base = cand
    return Cylinder(m, base)


def apply_Tg(s: CFSchedule, c: Cylinder, g, eps) -> tuple[Cylinder, Cylinder]:
    """Push ``c`` through ``T_g`` on the part where level-m translation is exact.

    Finds the least level ``m >= c.level`` whose in-range part
    ``lift(c, m).base & (F_m - g)`` leaves a remainder of measure below
    ``eps`` and returns ``([A_in + g]_m, [rest]_m)``.
    """
    g = _vec(g, s.dim)
    eps = rat(eps)
    if eps <= 0:
        raise ValueError("eps must be positive")
    _check_level(s, c.level)
    base = c.base
    neg = tuple(-x for x in g)
    for m in range(c.level, s.L + 1):
        if m > c.level:
            base = lift_base(s, base, m - 1)
        inside = base & translate(s.F(m), neg)
        rest = base - inside
        if rest.volume() / s.divisor(m) < eps:
            return Cylinder(m, translate(inside, g)), Cylinder(m, rest)
    raise ScheduleTooShort(
        f"no level up to {s.L} brings the remainder of T_g below {eps}; extend the schedule"
    )


def transport(s: CFSchedule, c: Cylinder, g, max_level: int | None = None) -> Cylinder:
    """``T_g c`` computed exactly at the least level where it is a translation."""
    g = _vec(g, s.dim)
    top = s.L if max_level is None else min(max_level, s.L)
    neg = tuple(-x for x in g)
    base = c.base
    for m in range(c.level, top + 1):
        if m > c.level:
            base = lift_base(s, base, m - 1)
        if base <= translate(s.F(m), neg):
            return Cylinder(m, translate(base, g))
    raise ScheduleTooShort(f"T_g does not act by translation on this cylinder below level {top + 1}")


def same_set(s: CFSchedule, a: Cylinder, b: Cylinder) -> bool:
    """Whether two cylinders are the same subset of X."""
    m = max(a.level, b.level)
    return lift(s, a, m).base == lift(s, b, m).base


# --- diagnostics and derived schedules --------------------------------------


@dataclass
class InfiniteMeasureReport:
    ratios: list
    jumps: list = field(default_factory=list)
    diverging: bool = False

    def to_json(self) -> dict:
        return {
            "ratios": [format_rat(r) for r in self.ratios],
            "jumps": self.jumps,
            "diverging": self.diverging,
        }


def measure_ratios(s: CFSchedule) -> list:
    """``r_n = h_n^d / (#C_1 ... #C_n)``, the total measure of ``F_n``."""
    return [lv.h ** s.dim / s.divisor(n) for n, lv in enumerate(s.levels)]


def check_infinite_measure(s: CFSchedule, factor=2) -> InfiniteMeasureReport:
    """Finite-prefix diagnostic for divergence of the measure ratios.

    The verdict is positive when the ratios are non-decreasing over the
    second half of the prefix and ``r_L > factor * r_0``.  ``jumps`` lists
    the levels where the ratio at least doubles.
    """
    factor = rat(factor)
    r = measure_ratios(s)
    jumps = [n for n in range(1, len(r)) if r[n] >= 2 * r[n - 1]]
    half = len(r) // 2
    tail_ok = all(r[n] <= r[n + 1] for n in range(half, len(r) - 1))
    return InfiniteMeasureReport(r, jumps, bool(len(r) > 1 and tail_ok and r[-1] > factor * r[0]))


def power_schedule(s: CFSchedule, p: int, max_translations: int = DEFAULT_MAX_TRANSLATIONS) -> CFSchedule:
    """The schedule ``(C_(n+1)^p, F_n^p)`` of the p-fold product action."""
    if p < 1:
        raise ValueError("p must be a positive integer")
    if p == 1:
        return s
    levels = []
    for n, lv in enumerate(s.levels):
        if len(lv.C_next) ** p > max_translations:
            raise PreconditionError(
                f"#C_{n + 1}^{p} = {len(lv.C_next) ** p} exceeds the bound {max_translations}"
            )
        C = tuple(tuple(x for c in combo for x in c) for combo in itertools.product(lv.C_next, repeat=p))
        levels.append(CFLevel(lv.h, C))
    return validate(levels, dim=s.dim * p, strong=s.checked_strong)


def diag_time(t, p: int, d: int = 1) -> tuple:
    """The vector ``(t, ..., t)`` driving ``T_t x ... x T_t`` on the power."""
    g = _vec(t)
    if len(g) == 1 and d > 1:
        g = g * d
    if len(g) != d:
        raise DimensionMismatch(f"time vector of length {len(g)} for d = {d}")
    return g * p
