"""Exact set algebra on finite unions of half-open rational boxes.

A :class:`BoxSet` is stored as a nested slab tree.  Along the first axis the
set is cut into maximal slabs ``[lo, hi)`` on which the cross-section is
constant; each slab carries the canonical tree of that cross-section in the
remaining axes.  The leaf marker is ``True``.  Adjacent slabs with equal
cross-sections are always merged, so two trees are equal as tuples exactly
when they describe the same point set.
"""

from __future__ import annotations

from fractions import Fraction
from numbers import Rational
from typing import Callable, Iterable, Sequence

Rat = Fraction

__all__ = [
    "Rat",
    "rat",
    "format_rat",
    "Box",
    "BoxSet",
    "DimensionMismatch",
    "canonicalize",
    "union",
    "intersect",
    "subtract",
    "translate",
    "volume",
    "is_subset",
    "cube",
]


class DimensionMismatch(ValueError):
    pass


def rat(x) -> Fraction:
    """Coerce ``x`` to an exact rational.

    Accepts ints, Fractions and strings like ``"3/4"``.  Floats are refused
    so that nothing inexact leaks into a certificate.
    """
    if isinstance(x, Fraction):
        return x
    if isinstance(x, bool):
        raise TypeError("booleans are not rationals")
    if isinstance(x, int):
        return Fraction(x)
    if isinstance(x, str):
        try:
            return Fraction(x.strip())
        except ZeroDivisionError as exc:
            raise ValueError(f"invalid rational {x!r}: zero denominator") from exc
        except ValueError as exc:
            raise ValueError(f"invalid rational {x!r}") from exc
    if isinstance(x, Rational):
        return Fraction(x.numerator, x.denominator)
    raise TypeError(f"cannot use {type(x).__name__} as an exact rational")


def format_rat(x: Fraction) -> str:
    x = rat(x)
    return f"{x.numerator}/{x.denominator}"


def _vec(v, dim: int | None = None) -> tuple[Fraction, ...]:
    if isinstance(v, (int, Fraction, str)):
        v = (v,)
    out = tuple(rat(c) for c in v)
    if dim is not None and len(out) != dim:
        raise DimensionMismatch(f"expected {dim} components, got {len(out)}")
    return out


class Box:
    """A nonempty half-open box ``prod_i [lo[i], hi[i])``."""

    __slots__ = ("lo", "hi")

    def __init__(self, lo, hi):
        lo = _vec(lo)
        hi = _vec(hi)
        if len(lo) != len(hi) or not lo:
            raise DimensionMismatch("box corners must have the same positive length")
        for a, b in zip(lo, hi):
            if not a < b:
                raise ValueError(f"empty box side [{a}, {b})")
        self.lo = lo
        self.hi = hi

    @property
    def dim(self) -> int:
        return len(self.lo)

    def volume(self) -> Fraction:
        v = Fraction(1)
        for a, b in zip(self.lo, self.hi):
            v *= b - a
        return v

    def __eq__(self, other):
        return isinstance(other, Box) and self.lo == other.lo and self.hi == other.hi

    def __hash__(self):
        return hash((self.lo, self.hi))

    def __repr__(self):
        sides = "x".join(f"[{a},{b})" for a, b in zip(self.lo, self.hi))
        return f"Box({sides})"


# --- slab trees -------------------------------------------------------------

_EMPTY: tuple = ()


def _box_tree(lo: Sequence[Fraction], hi: Sequence[Fraction]):
    tree = True
    for a, b in zip(reversed(lo), reversed(hi)):
        tree = ((a, b, tree),)
    return tree


def _combine(x, y, keep: Callable[[bool, bool], bool]):
    """Merge two trees of equal depth under the boolean rule ``keep``."""
    if x is True or y is True:
        # Leaf level: x and y are each True (present) or () (absent).
        return True if keep(x is True, y is True) else _EMPTY
    if not x and not y:
        return _EMPTY
    if not y:
        return x if keep(True, False) else _EMPTY
    if not x:
        return y if keep(False, True) else _EMPTY
    if x is y or x == y:
        return x if keep(True, True) else _EMPTY

    cuts = sorted({e for lo, hi, _ in x for e in (lo, hi)} | {e for lo, hi, _ in y for e in (lo, hi)})
    out: list = []
    i = j = 0
    nx, ny = len(x), len(y)
    for p, q in zip(cuts, cuts[1:]):
        while i < nx and x[i][1] <= p:
            i += 1
        while j < ny and y[j][1] <= p:
            j += 1
        sx = x[i][2] if i < nx and x[i][0] <= p else _EMPTY
        sy = y[j][2] if j < ny and y[j][0] <= p else _EMPTY
        if sx is _EMPTY and sy is _EMPTY:
            continue
        sub = _combine(sx, sy, keep)
        if sub is not True and not sub:
            continue
        if out and out[-1][1] == p and (out[-1][2] is sub or out[-1][2] == sub):
            out[-1] = (out[-1][0], q, sub)
        else:
            out.append((p, q, sub))
    return tuple(out)


def _union_all(trees: list):
    """Balanced pairwise union of many trees."""
    if not trees:
        return _EMPTY
    while len(trees) > 1:
        nxt = []
        for k in range(0, len(trees) - 1, 2):
            nxt.append(_combine(trees[k], trees[k + 1], _OR))
        if len(trees) % 2:
            nxt.append(trees[-1])
        trees = nxt
    return trees[0]


def _OR(a, b):
    return a or b


def _AND(a, b):
    return a and b


def _DIFF(a, b):
    return a and not b


def _shift(tree, g: Sequence[Fraction], k: int = 0):
    if tree is True:
        return True
    d = g[k]
    if all(c == 0 for c in g[k:]):
        return tree
    return tuple((lo + d, hi + d, _shift(sub, g, k + 1)) for lo, hi, sub in tree)


def _volume(tree) -> Fraction:
    if tree is True:
        return Fraction(1)
    return sum(((hi - lo) * _volume(sub) for lo, hi, sub in tree), Fraction(0))


def _boxes(tree, prefix_lo=(), prefix_hi=()):
    if tree is True:
        yield Box(prefix_lo, prefix_hi)
        return
    for lo, hi, sub in tree:
        yield from _boxes(sub, prefix_lo + (lo,), prefix_hi + (hi,))


def _count(tree) -> int:
    if tree is True:
        return 1
    return sum(_count(sub) for _, _, sub in tree)


def _product_tree(trees: Sequence):
    """Cartesian product of trees (listed from the first axis on)."""
    out = True
    for t in reversed(trees):
        if t is not True and not t:
            return _EMPTY
        out = tuple((lo, hi, _graft(sub, out)) for lo, hi, sub in t)
    return out


def _graft(tree, tail):
    # Replace every leaf of ``tree`` by ``tail``.
    if tree is True:
        return tail
    return tuple((lo, hi, _graft(sub, tail)) for lo, hi, sub in tree)


def _spread(tree, offsets: Sequence[Sequence[Fraction]]):
    """Union of translates ``tree + (c_0, c_1, ...)`` over a product of offsets.

    ``offsets[k]`` lists the translations used on axis ``k``.  The translates
    must be pairwise disjoint (the independence condition guarantees this for
    lifts), which lets each axis be handled by a sort instead of a union.
    """
    if tree is True:
        return True
    subs = []
    for lo, hi, sub in tree:
        inner = _spread(sub, offsets[1:])
        if inner is None:
            return None
        subs.append((lo, hi, inner))
    pieces = sorted(
        ((lo + c, hi + c, sub) for c in offsets[0] for lo, hi, sub in subs),
        key=lambda s: s[0],
    )
    out: list = []
    for lo, hi, sub in pieces:
        if out and out[-1][1] > lo:
            return None  # overlapping translates; caller falls back to union
        if out and out[-1][1] == lo and out[-1][2] == sub:
            out[-1] = (out[-1][0], hi, sub)
        else:
            out.append((lo, hi, sub))
    return tuple(out)


def _map_tree(tree, f):
    if tree is True:
        return True
    return tuple((f(lo), f(hi), _map_tree(sub, f)) for lo, hi, sub in tree)


def _exact_int(x) -> int:
    if isinstance(x, int):
        return x
    if x.denominator != 1:
        raise ValueError(f"{x} is not on the integer lattice")
    return x.numerator


def _contains_point(tree, x: Sequence[Fraction], k: int = 0) -> bool:
    if tree is True:
        return True
    xk = x[k]
    lo_i, hi_i = 0, len(tree)
    while lo_i < hi_i:
        mid = (lo_i + hi_i) // 2
        if tree[mid][1] <= xk:
            lo_i = mid + 1
        else:
            hi_i = mid
    if lo_i < len(tree) and tree[lo_i][0] <= xk < tree[lo_i][1]:
        return _contains_point(tree[lo_i][2], x, k + 1)
    return False


def _bounds(tree, k: int, dim: int, lo: list, hi: list):
    if tree is True:
        return
    lo[k] = min(lo[k], tree[0][0]) if lo[k] is not None else tree[0][0]
    hi[k] = max(hi[k], tree[-1][1]) if hi[k] is not None else tree[-1][1]
    for _, _, sub in tree:
        _bounds(sub, k + 1, dim, lo, hi)


class BoxSet:
    """Canonical finite disjoint union of half-open rational boxes.

    Instances are immutable.  Equality is set equality.
    """

    __slots__ = ("dim", "_tree", "_vol", "_hash")

    def __init__(self, dim: int, _tree=_EMPTY):
        if dim < 1:
            raise ValueError("dimension must be positive")
        self.dim = dim
        self._tree = _tree
        self._vol = None
        self._hash = None

    # constructors
    @classmethod
    def empty(cls, dim: int) -> "BoxSet":
        return cls(dim)

    @classmethod
    def from_box(cls, lo, hi) -> "BoxSet":
        b = lo if isinstance(lo, Box) else Box(lo, hi)
        return cls(b.dim, _box_tree(b.lo, b.hi))

    @classmethod
    def from_boxes(cls, boxes: Iterable, dim: int | None = None) -> "BoxSet":
        return canonicalize(boxes, dim)

    @classmethod
    def product(cls, factors: Sequence["BoxSet"]) -> "BoxSet":
        return cls(sum(f.dim for f in factors), _product_tree([f._tree for f in factors]))

    # views
    @property
    def boxes(self) -> list[Box]:
        return list(_boxes(self._tree)) if self._tree else []

    def __iter__(self):
        return iter(self.boxes)

    def __len__(self) -> int:
        return _count(self._tree) if self._tree else 0

    def __bool__(self) -> bool:
        return bool(self._tree)

    def is_empty(self) -> bool:
        return not self._tree

    def volume(self) -> Fraction:
        if self._vol is None:
            self._vol = _volume(self._tree) if self._tree else Fraction(0)
        return self._vol

    def contains_point(self, x) -> bool:
        x = _vec(x, self.dim)
        return bool(self._tree) and _contains_point(self._tree, x)

    def bounding_box(self) -> Box | None:
        if not self._tree:
            return None
        lo: list = [None] * self.dim
        hi: list = [None] * self.dim
        _bounds(self._tree, 0, self.dim, lo, hi)
        return Box(lo, hi)

    # algebra
    def _check(self, other: "BoxSet"):
        if not isinstance(other, BoxSet):
            raise TypeError(f"expected BoxSet, got {type(other).__name__}")
        if other.dim != self.dim:
            raise DimensionMismatch(f"dimension {self.dim} vs {other.dim}")

    def __or__(self, other: "BoxSet") -> "BoxSet":
        self._check(other)
        return BoxSet(self.dim, _combine(self._tree, other._tree, _OR))

    def __and__(self, other: "BoxSet") -> "BoxSet":
        self._check(other)
        return BoxSet(self.dim, _combine(self._tree, other._tree, _AND))

    def __sub__(self, other: "BoxSet") -> "BoxSet":
        self._check(other)
        return BoxSet(self.dim, _combine(self._tree, other._tree, _DIFF))

    def __xor__(self, other: "BoxSet") -> "BoxSet":
        self._check(other)
        return BoxSet(self.dim, _combine(self._tree, other._tree, lambda a, b: a != b))

    def __le__(self, other: "BoxSet") -> bool:
        return (self - other).is_empty()

    def __add__(self, g) -> "BoxSet":
        return translate(self, g)

    def spread(self, offsets: Sequence[Sequence]) -> "BoxSet":
        """Union of the translates ``self + c`` for ``c`` in a product of offsets.

        Fast path for lifting through a product translation set; falls back
        to a plain union if the translates overlap.
        """
        if len(offsets) != self.dim:
            raise DimensionMismatch("one offset list per axis is required")
        offs = [sorted({rat(c) for c in axis}) for axis in offsets]
        if not self._tree:
            return self
        tree = _spread(self._tree, offs)
        if tree is None:
            import itertools

            tree = _union_all([_shift(self._tree, c) for c in itertools.product(*offs)])
        return BoxSet(self.dim, tree)

    def translates(self, vectors: Iterable) -> "BoxSet":
        """Union of ``self + v`` over an arbitrary finite set of vectors."""
        trees = [_shift(self._tree, _vec(v, self.dim)) for v in vectors]
        return BoxSet(self.dim, _union_all(trees))

    # Integer-lattice views.  Hot loops rescale everything by a common
    # denominator and work with ints, which compare far faster than Fractions.
    def to_lattice(self, scale: int) -> "BoxSet":
        """Coordinates times ``scale`` stored as ints; must be exact."""
        return BoxSet(self.dim, _map_tree(self._tree, lambda x: _exact_int(x * scale)))

    def from_lattice(self, scale: int) -> "BoxSet":
        return BoxSet(self.dim, _map_tree(self._tree, lambda x: Fraction(x, scale)))

    def shifted(self, g: Sequence) -> "BoxSet":
        """Translate without coercing ``g``."""
        return BoxSet(self.dim, _shift(self._tree, tuple(g)) if self._tree else self._tree)

    def spread_raw(self, offsets: Sequence[Sequence]) -> "BoxSet":
        """:meth:`spread` for offsets that are already sorted, distinct numbers."""
        if not self._tree:
            return self
        tree = _spread(self._tree, offsets)
        if tree is None:
            import itertools

            tree = _union_all([_shift(self._tree, c) for c in itertools.product(*offsets)])
        return BoxSet(self.dim, tree)

    def translates_raw(self, vectors: Iterable) -> "BoxSet":
        return BoxSet(self.dim, _union_all([_shift(self._tree, tuple(v)) for v in vectors]))

    def bounds(self):
        """``(lo, hi)`` corner tuples of the bounding box, uncoerced, or None."""
        if not self._tree:
            return None
        lo = [None] * self.dim
        hi = [None] * self.dim
        _bounds(self._tree, 0, self.dim, lo, hi)
        return tuple(lo), tuple(hi)

    # identity
    def __eq__(self, other):
        return isinstance(other, BoxSet) and self.dim == other.dim and self._tree == other._tree

    def __hash__(self):
        if self._hash is None:
            self._hash = hash((self.dim, self._tree))
        return self._hash

    def __repr__(self):
        if not self._tree:
            return f"BoxSet(dim={self.dim}, empty)"
        bs = self.boxes
        shown = ", ".join(repr(b) for b in bs[:4])
        more = f", ... {len(bs) - 4} more" if len(bs) > 4 else ""
        return f"BoxSet(dim={self.dim}, [{shown}{more}])"

    def __reduce__(self):
        return (_rebuild, (self.dim, self._tree))

    # JSON
    def to_json(self) -> dict:
        return {
            "dim": self.dim,
            "boxes": [
                {"lo": [format_rat(c) for c in b.lo], "hi": [format_rat(c) for c in b.hi]}
                for b in self.boxes
            ],
        }

    @classmethod
    def from_json(cls, obj: dict) -> "BoxSet":
        try:
            dim = int(obj["dim"])
            boxes = [Box(b["lo"], b["hi"]) for b in obj["boxes"]]
        except KeyError as exc:
            raise ValueError(f"box set JSON is missing field {exc.args[0]!r}") from exc
        return canonicalize(boxes, dim)


def _rebuild(dim, tree):
    return BoxSet(dim, tree)


# --- module-level operations --------------------------------------------------


def canonicalize(boxes: Iterable, dim: int | None = None) -> BoxSet:
    """Canonical BoxSet covering the same points as ``boxes``.

    Accepts :class:`Box` objects or ``(lo, hi)`` pairs.  ``dim`` is needed
    only to build an empty set.
    """
    bs = [b if isinstance(b, Box) else Box(*b) for b in boxes]
    if not bs:
        if dim is None:
            raise ValueError("dimension required for an empty box list")
        return BoxSet(dim)
    d = bs[0].dim
    if dim is not None and dim != d:
        raise DimensionMismatch(f"expected dimension {dim}, got {d}")
    for b in bs:
        if b.dim != d:
            raise DimensionMismatch(f"mixed box dimensions {d} and {b.dim}")
    return BoxSet(d, _union_all([_box_tree(b.lo, b.hi) for b in bs]))


def union(a: BoxSet, b: BoxSet) -> BoxSet:
    return a | b


def intersect(a: BoxSet, b: BoxSet) -> BoxSet:
    return a & b


def subtract(a: BoxSet, b: BoxSet) -> BoxSet:
    return a - b


def translate(a: BoxSet, g) -> BoxSet:
    g = _vec(g, a.dim)
    if not a._tree:
        return a
    return BoxSet(a.dim, _shift(a._tree, g))


def volume(a: BoxSet) -> Fraction:
    return a.volume()


def is_subset(a: BoxSet, b: BoxSet) -> bool:
    return a <= b


def cube(h, dim: int) -> BoxSet:
    """The cube ``[0, h)^dim``."""
    h = rat(h)
    return BoxSet.from_box((0,) * dim, (h,) * dim)


def union_all(sets: Iterable[BoxSet], dim: int) -> BoxSet:
    trees = []
    for s in sets:
        if s.dim != dim:
            raise DimensionMismatch(f"dimension {dim} vs {s.dim}")
        trees.append(s._tree)
    return BoxSet(dim, _union_all(trees))


__all__.append("union_all")
