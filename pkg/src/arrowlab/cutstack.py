"""Rank-one cutting-and-stacking systems and their product arrow field.

Tower combinatorics
-------------------
With cuts ``n_1, n_2, ...`` the depth-1 tower is ``J_1, ..., J_{n_1}``.  The
depth-``k`` tower is ``n_k`` copies (columns) of the depth-``(k-1)`` tower
stacked bottom to top, followed by one new spacer ``K_k``.  Its height is::

    h_1 = n_1,    h_k = n_k * h_{k-1} + 1

and the map ``S`` moves every level one rung up.  Cell names follow the
construction: ``J_i^(i_2..i_k)`` (base index then one column index per
depth) and ``K_r^(j_{r+1}..j_k)``.  All indices are 1-based.

Points are never real numbers.  A :class:`StackPoint` is a cell of the tower
at the depth where it first appears plus column indices drawn lazily from a
counter-based stream.  Because the tower is a single rung sequence, ``S^a``
on a point is integer addition on its rung position once the tower is deep
enough to contain both ends, so any orbit position is reachable in
``O(depth)`` big-integer operations.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache
from typing import Callable, Optional

import numpy as np

from .lattice import ArrowField, DIRECTED_2D, E, N
from .rng import derive_seed, hash_key

MAX_DEPTH = 64
VERIFY_BUDGET = 10 ** 6


class UndeterminedError(ValueError):
    """Image of a top-rung cell requested without a refinement source."""


class BudgetError(RuntimeError):
    """Exhaustive check would exceed the cell budget."""


@dataclass(frozen=True)
class StackSpec:
    """Cut sequence ``n_1, n_2, ...``; beyond the stored prefix the last
    entry repeats."""

    cuts: tuple

    def __post_init__(self):
        cuts = tuple(int(c) for c in self.cuts)
        if not cuts:
            raise ValueError("need at least one cut")
        if any(c < 2 for c in cuts):
            raise ValueError("every cut must be >= 2")
        object.__setattr__(self, "cuts", cuts)

    def n(self, i: int) -> int:
        if i < 1:
            raise IndexError(i)
        return self.cuts[i - 1] if i <= len(self.cuts) else self.cuts[-1]

    def height(self, k: int) -> int:
        return _height(self, k)

    def product(self, k: int) -> int:
        """``n_1 * ... * n_k`` (1 for k = 0)."""
        return math.prod(self.n(i) for i in range(1, k + 1))

    def reach_when_bound(self, r: int) -> int:
        return math.prod(self.n(i) + 1 for i in range(1, r + 1))

    def satisfies_size_condition(self, depth: int) -> bool:
        return all(self.n(i) >= max(2, i * i) for i in range(1, depth + 1))

    def __str__(self):
        return ",".join(map(str, self.cuts))


@lru_cache(maxsize=None)
def _height(spec: StackSpec, k: int) -> int:
    if k < 1:
        raise ValueError("depth must be >= 1")
    if k == 1:
        return spec.n(1)
    return spec.n(k) * _height(spec, k - 1) + 1


def default_specs(levels: int = 8):
    """Default pair ``n = (4, 64, 4096, ...)``, ``m = (16, 256, 65536, ...)``.

    Extended by ``n_{i+1} = (m_1...m_i)^2`` and ``m_{i+1} = (n_1...n_{i+1})^2``.
    """
    n, m = [4, 64, 4096], [16, 256, 65536]
    while len(n) < levels:
        n.append(math.prod(m) ** 2)
        m.append(math.prod(n) ** 2)
    return StackSpec(tuple(n[:levels])), StackSpec(tuple(m[:levels]))


# -- addresses -------------------------------------------------------------

@dataclass(frozen=True)
class TowerAddress:
    """A depth-``k`` cell.  ``level`` is 0 for a J-cell (then ``base`` is
    ``i``) and ``r >= 2`` for the spacer ``K_r``."""

    level: int
    indices: tuple = ()
    base: int = 0

    @classmethod
    def J(cls, i: int, *indices) -> "TowerAddress":
        return cls(0, tuple(indices), i)

    @classmethod
    def K(cls, r: int, *indices) -> "TowerAddress":
        if r < 2:
            raise ValueError("spacers are K_2, K_3, ...")
        return cls(r, tuple(indices), 0)

    @property
    def is_spacer(self) -> bool:
        return self.level >= 2

    @property
    def depth(self) -> int:
        return (1 if self.level == 0 else self.level) + len(self.indices)

    def refine(self, index: int) -> "TowerAddress":
        return TowerAddress(self.level, self.indices + (int(index),), self.base)

    def validate(self, spec: StackSpec):
        if self.level == 0:
            if not 1 <= self.base <= spec.n(1):
                raise ValueError(f"base index {self.base} outside [1, {spec.n(1)}]")
            first = 2
        elif self.level >= 2:
            first = self.level + 1
        else:
            raise ValueError("level must be 0 or >= 2")
        for t, i in enumerate(self.indices, start=first):
            if not 1 <= i <= spec.n(t):
                raise ValueError(f"index {i} at depth {t} outside [1, {spec.n(t)}]")

    def measure(self, spec: StackSpec) -> Fraction:
        return Fraction(1, spec.product(self.depth))

    def is_top(self, spec: StackSpec) -> bool:
        if self.level == 0:
            return self.depth == 1 and self.base == spec.n(1)
        return not self.indices

    def is_bottom(self) -> bool:
        return self.level == 0 and self.base == 1 and all(i == 1 for i in self.indices)

    def __str__(self):
        head = f"J{self.base}" if self.level == 0 else f"K{self.level}"
        return head + (f"^({','.join(map(str, self.indices))})" if self.indices else "")


def apply(spec: StackSpec, a: TowerAddress, draw: Optional[Callable[[int], int]] = None):
    """Image of ``a`` under ``S`` by the stage recursion.

    At the top rung of the depth-``k`` tower the image is not determined at
    depth ``k``; ``draw(k)`` must then supply the 1-based column index at depth
    ``k + 1`` and the refined address is mapped instead.
    """
    a.validate(spec)
    if a.is_top(spec):
        if draw is None:
            raise UndeterminedError(f"{a} is the top rung at depth {a.depth}")
        return apply(spec, a.refine(draw(a.depth)), draw)
    if a.level == 0:
        if a.base < spec.n(1):
            return TowerAddress.J(a.base + 1, *a.indices)
        i2, rest = a.indices[0], a.indices[1:]
        if i2 < spec.n(2):
            return TowerAddress.J(1, i2 + 1, *rest)
        return TowerAddress.K(2, *rest)
    r = a.level
    j, rest = a.indices[0], a.indices[1:]
    if j < spec.n(r + 1):
        return TowerAddress.J(1, *([1] * (r - 1)), j + 1, *rest)
    return TowerAddress.K(r + 1, *rest)


def position(spec: StackSpec, a: TowerAddress) -> int:
    """0-based rung of ``a`` in its depth's tower."""
    if a.level == 0:
        p, first = a.base - 1, 2
    else:
        p, first = spec.height(a.level) - 1, a.level + 1
    for t, i in enumerate(a.indices, start=first):
        p += (i - 1) * spec.height(t - 1)
    return p


def address_at(spec: StackSpec, depth: int, p: int) -> TowerAddress:
    """Inverse of :func:`position` at the given depth."""
    if not 0 <= p < spec.height(depth):
        raise ValueError(f"rung {p} outside the depth-{depth} tower")
    idx = []
    for k in range(depth, 1, -1):
        hk1 = spec.height(k - 1)
        if p == spec.height(k) - 1:
            return TowerAddress.K(k, *reversed(idx))
        c, p = divmod(p, hk1)
        idx.append(c + 1)
    return TowerAddress.J(p + 1, *reversed(idx))


def level_at(spec: StackSpec, depth: int, p: int) -> int:
    """Spacer level of rung ``p`` (0 for J-cells) without building the name."""
    for k in range(depth, 1, -1):
        if p == spec.height(k) - 1:
            return k
        p %= spec.height(k - 1)
    return 0


def enumerate_cells(spec: StackSpec, depth: int):
    """All depth-``depth`` cells by index ranges (independent of ``apply``)."""
    from itertools import product
    rng = lambda t: range(1, spec.n(t) + 1)
    for idx in product(*(rng(t) for t in range(2, depth + 1))):
        for i in rng(1):
            yield TowerAddress.J(i, *idx)
    for r in range(2, depth + 1):
        for idx in product(*(rng(t) for t in range(r + 1, depth + 1))):
            yield TowerAddress.K(r, *idx)


# -- lazily refined points -------------------------------------------------

def _randbelow(seed: int, key: int, n: int) -> int:
    words = n.bit_length() // 64 + 2
    acc = 0
    for w in range(words):
        acc = (acc << 64) | hash_key(seed, key, w)
    return acc % n


class StackPoint:
    """A Lebesgue-random point of the tower space, refined on demand.

    ``entry`` is the depth at which the point first appears (1 for the J
    intervals, ``e >= 2`` if it lies in the spacer ``K_e``); ``rung`` is its
    0-based position in that tower.  The column index at depth ``k > entry``
    is ``_randbelow(seed, k, n_k)``, a pure function of the point's seed.
    """

    def __init__(self, spec: StackSpec, seed: int, entry: int, rung: int):
        self.spec = spec
        self.seed = int(seed)
        self.entry = int(entry)
        self.rung = int(rung)
        self._pos = {entry: rung}

    def column(self, k: int) -> int:
        """0-based column at depth ``k > entry``."""
        return _randbelow(self.seed, k, self.spec.n(k))

    def position(self, k: int) -> int:
        if k < self.entry:
            raise ValueError(f"point first appears at depth {self.entry}")
        p = self._pos.get(k)
        if p is None:
            p = self.position(k - 1) + self.column(k) * self.spec.height(k - 1)
            self._pos[k] = p
        return p

    def address(self, k: Optional[int] = None) -> TowerAddress:
        k = self.entry if k is None else k
        return address_at(self.spec, k, self.position(k))

    def locate(self, a: int):
        """``(depth, rung)`` of ``S^a`` of this point, at the shallowest
        depth whose tower holds both the point and its image."""
        k = self.entry
        while True:
            q = self.position(k) + a
            if 0 <= q < self.spec.height(k):
                return k, q
            k += 1
            if k > MAX_DEPTH:
                raise RuntimeError("orbit step exceeds maximum refinement depth")

    def shifted_address(self, a: int, depth: Optional[int] = None) -> TowerAddress:
        k, q = self.locate(a)
        if depth is not None and depth > k:
            q += self.position(depth) - self.position(k)
            k = depth
        return address_at(self.spec, k, q)

    def level(self, a: int = 0) -> int:
        """Spacer level of ``S^a`` of the point (0 for J-cells)."""
        k, q = self.locate(a)
        return level_at(self.spec, k, q)

    def spacer_rungs(self, a0: int, count: int):
        """``(offset, level)`` for every ``S^a`` in a spacer,
        ``a = a0 .. a0+count-1``; cost is proportional to the spacer visits."""
        out = []
        a, end = a0, a0 + count
        while a < end:
            lev = self.level(a)
            if lev:
                out.append((a - a0, lev))
                a += 1
            else:
                a += self.time_to_level(a, 2)
        return out

    def levels(self, a0: int, count: int) -> np.ndarray:
        """Dense spacer levels of ``S^a`` for ``a = a0 .. a0+count-1``."""
        out = np.zeros(count, dtype=np.int64)
        for off, lev in self.spacer_rungs(a0, count):
            out[off] = lev
        return out

    def time_to_level(self, a: int, s: int) -> int:
        """Least ``t >= 0`` with ``S^(a+t)`` of the point in ``K_{>=s}``."""
        k, q = self.locate(a)
        if k < s:
            # the image is in the depth-(s-1) tower; lift to depth s
            q += self.position(s) - self.position(k)
            k = s
        if level_at(self.spec, k, q) >= s:
            return 0
        # within a copy of the depth-s tower: its top is the next K_{>=s}
        qs = q
        for t in range(k, s, -1):
            qs %= self.spec.height(t - 1)
        return self.spec.height(s) - 1 - qs

    def in_G(self, r: int) -> bool:
        """Membership of the point itself in ``G_r`` (see :func:`in_G`)."""
        if self.entry > r:
            return False
        return in_G(self.spec, self.address(r), r)


def sample_point(spec: StackSpec, seed: int, depth: int = 8) -> StackPoint:
    """Draw a point with probability proportional to Lebesgue measure, the
    spacer mass truncated after ``K_depth``."""
    weights = [Fraction(1)] + [Fraction(1, spec.product(k)) for k in range(2, depth + 1)]
    total = sum(weights)
    u = Fraction(hash_key(seed, 0xE17) >> 11, 1 << 53) * total
    acc = Fraction(0)
    entry = depth
    for k, w in enumerate(weights, start=1):
        acc += w
        if u < acc:
            entry = k
            break
    if entry == 1:
        rung = _randbelow(seed, 0xBA5E, spec.n(1))
    else:
        rung = spec.height(entry) - 1
    return StackPoint(spec, seed, entry, rung)


def spacer_probability(spec: StackSpec, r: int, depth: int) -> Fraction:
    """Exact probability that :func:`sample_point` lands in ``K_r``."""
    total = 1 + sum(Fraction(1, spec.product(k)) for k in range(2, depth + 1))
    return Fraction(1, spec.product(r)) / total


def G_column_limit(spec: StackSpec, r: int) -> int:
    """Largest admissible 1-based depth-``r`` column index in ``G_r``:
    ``floor(n_r (1 - r^-2)) - 1``."""
    return (spec.n(r) * (r * r - 1)) // (r * r) - 1


def in_G(spec: StackSpec, a: TowerAddress, r: int) -> bool:
    """Membership in the good set ``G_r``.

    ``G_r`` is the part of the depth-``r`` tower lying in columns
    ``1 .. floor(n_r (1 - r^-2)) - 1``; it excludes ``K_r`` itself and every
    later spacer.  From there the orbit needs at least
    ``n_1...n_{r-1} (n_r / r^2 - 1)`` steps to reach ``K_{>=r}``.
    """
    if r < 3:
        raise ValueError("G_r is used for r >= 3")
    if a.level >= r:
        return False
    if a.depth < r:
        raise ValueError(f"address {a} must be refined to depth {r}")
    p = position(spec, a)
    # lift/lower to the depth-r rung
    for t in range(a.depth, r, -1):
        p %= spec.height(t - 1)
    if p == spec.height(r) - 1:
        return False
    column = p // spec.height(r - 1) + 1
    return column <= G_column_limit(spec, r)


def G_size_bound(r: int) -> float:
    return (1 - 2 / r ** 2) / (1 + 2.0 ** -r)


# -- the product arrow map -------------------------------------------------

def arrow_rule(level_x, level_y):
    """``e1`` iff ``x`` is in a J-interval, or ``x`` is in ``K_s`` and ``y``
    is in a spacer ``K^_j`` with ``j >= s``; otherwise ``e2``.

    Works elementwise on integer arrays of spacer levels (0 = J-cell).
    """
    lx = np.asarray(level_x)
    ly = np.asarray(level_y)
    east = (lx == 0) | (ly >= lx)
    return np.where(east, E.code, N.code).astype(np.int8)


@dataclass
class ProductPoint:
    x: object
    y: object


def _level_of(a) -> int:
    if isinstance(a, TowerAddress):
        return a.level
    return a.level(0)


def arrow_at(pt: ProductPoint):
    code = int(arrow_rule(_level_of(pt.x), _level_of(pt.y)))
    return E if code == E.code else N


class ProductField(ArrowField):
    """``alpha(a, b) = arrow_at(S1^a x, S2^b y)`` for a sampled base point."""

    arrow_set = DIRECTED_2D

    def __init__(self, x: StackPoint, y: StackPoint, seed: Optional[int] = None):
        self.x = x
        self.y = y
        self.seed = seed
        from .fields import FieldSpec
        self.spec = FieldSpec("cutstack-product",
                              {"n": x.spec.cuts, "m": y.spec.cuts},
                              seed if seed is not None else 0)

    def levels(self, site):
        return self.x.level(site[0]), self.y.level(site[1])

    def _code(self, site):
        return int(arrow_rule(*self.levels(site)))

    def axis_levels(self, xs, ys):
        xs = np.asarray(xs, dtype=np.int64).ravel()
        ys = np.asarray(ys, dtype=np.int64).ravel()
        lx = _levels_for(self.x, xs)
        ly = _levels_for(self.y, ys)
        return lx, ly

    def codes(self, x, y):
        x, y = np.asarray(x, dtype=np.int64), np.asarray(y, dtype=np.int64)
        ux, ix = np.unique(x, return_inverse=True)
        uy, iy = np.unique(y, return_inverse=True)
        lx, ly = self.axis_levels(ux, uy)
        lx = lx[ix.reshape(x.shape)]
        ly = ly[iy.reshape(y.shape)]
        return arrow_rule(lx, ly)

    def trace_runs(self, start, n: int):
        """Run-length encoded walk of ``n`` steps from ``start``."""
        a, b = int(start[0]), int(start[1])
        runs = []
        done = 0
        while done < n:
            lx, ly = self.x.level(a), self.y.level(b)
            if lx == 0 or ly >= lx:
                # east until x reaches K_s with s > max(ly, 1)
                need = max(ly + 1, 2)
                t = self.x.time_to_level(a, need)
                t = min(t, n - done)
                runs.append((E.code, t))
                a += t
            else:
                # north until y reaches K^_{>= lx}
                t = self.y.time_to_level(b, lx)
                t = min(t, n - done)
                runs.append((N.code, t))
                b += t
            done += t
        return _merge_runs(runs)


def _merge_runs(runs):
    out = []
    for c, k in runs:
        if out and out[-1][0] == c:
            out[-1] = (c, out[-1][1] + k)
        else:
            out.append((c, k))
    return out


def _levels_for(pt: StackPoint, coords: np.ndarray) -> np.ndarray:
    out = np.zeros(len(coords), dtype=np.int64)
    if len(coords) == 0:
        return out
    order = np.argsort(coords)
    c = coords[order]
    # walk contiguous stretches with spacer jumps
    i = 0
    while i < len(c):
        j = i
        while j + 1 < len(c) and c[j + 1] == c[j] + 1:
            j += 1
        out[order[i:j + 1]] = pt.levels(int(c[i]), j - i + 1)
        i = j + 1
    return out


def product_field(nspec: Optional[StackSpec] = None, mspec: Optional[StackSpec] = None,
                  seed: int = 0, depth: int = 8) -> ProductField:
    dn, dm = default_specs()
    nspec = nspec or dn
    mspec = mspec or dm
    x = sample_point(nspec, derive_seed(seed, 1), depth)
    y = sample_point(mspec, derive_seed(seed, 2), depth)
    return ProductField(x, y, seed)


def find_good_seed(r: int = 3, nspec=None, mspec=None, start: int = 0, extra=(),
                   max_tries: int = 1000):
    """First seed ``>= start`` whose base point lies in ``G_r x G^_r`` (and in
    the additional ``(axis, r')`` good sets listed in ``extra``)."""
    for seed in range(start, start + max_tries):
        f = product_field(nspec, mspec, seed)
        if f.x.in_G(r) and f.y.in_G(r) and all(
                (f.x if ax == 0 else f.y).in_G(rr) for ax, rr in extra):
            return seed, f
    raise RuntimeError("no seed found in range")


# -- lemma thresholds ------------------------------------------------------

def travel_steps(spec: StackSpec, r: int) -> Fraction:
    """``s_1 ... s_{r-1} (s_r / r^2 - 1)`` for a cut sequence ``s``."""
    return spec.product(r - 1) * (Fraction(spec.n(r), r * r) - 1)


def travel_threshold(own: StackSpec, other: StackSpec, r: int, other_depth: int):
    """Checkpoint length and guaranteed slope ratio for the travel lemmas.

    ``own`` is the sequence whose good set holds (m for vertical travel, n for
    horizontal); ``other_depth`` is ``r`` for vertical and ``r - 1`` for
    horizontal travel.
    """
    steps = math.floor(travel_steps(own, r))
    bound = other.reach_when_bound(other_depth)
    return steps, Fraction(steps - bound, bound)


# -- exhaustive verifiers --------------------------------------------------

@dataclass
class LemmaReport:
    lemma: str
    spec: StackSpec
    r: int
    depth: int
    cells_checked: int
    max_hit_time: int
    bound: int
    passed: bool

    def csv_row(self) -> str:
        return (f"{self.lemma},\"{self.spec}\",{self.r},{self.depth},{self.cells_checked},"
                f"{self.max_hit_time},{self.bound},{str(self.passed).lower()}")


CSV_HEADER = "lemma,spec,r,depth,cells_checked,max_hit_time,bound,pass"


def tower_orbit(spec: StackSpec, depth: int, budget: int = VERIFY_BUDGET):
    """The whole depth-``depth`` tower listed by iterating ``apply`` from the
    bottom cell.  Checks that the orbit is a bijection onto the tower."""
    h = spec.height(depth)
    if h > budget:
        raise BudgetError(f"depth-{depth} tower has {h} cells (budget {budget})")
    a = TowerAddress.J(1, *([1] * (depth - 1)))
    cells = [a]
    while not a.is_top(spec):
        a = apply(spec, a)
        cells.append(a)
        if len(cells) > h:
            raise AssertionError("orbit longer than the tower")
    if len(cells) != h or len(set(cells)) != h:
        raise AssertionError("orbit does not enumerate the tower")
    return cells


def verify_reach_when(spec: StackSpec, r: int, depth: Optional[int] = None,
                      budget: int = VERIFY_BUDGET) -> LemmaReport:
    """Every depth cell enters ``K_{>=r}`` within ``(n_1+1)...(n_r+1)`` steps."""
    depth = r if depth is None else depth
    if depth < r or r < 2:
        raise ValueError("need 2 <= r <= depth")
    cells = tower_orbit(spec, depth, budget)
    hit = [0] * len(cells)
    nxt = None
    for p in range(len(cells) - 1, -1, -1):
        if cells[p].level >= r:
            nxt = p
        hit[p] = nxt - p
    bound = spec.reach_when_bound(r)
    worst = max(hit)
    return LemmaReport("reach_when", spec, r, depth, len(cells), worst, bound, worst <= bound)


def verify_reach_again(spec: StackSpec, i: int, depth: Optional[int] = None,
                       budget: int = VERIFY_BUDGET) -> LemmaReport:
    """From every ``K_i^(j, ...)`` with ``j < n_{i+1}`` the orbit avoids
    ``K_{>=i}`` for ``0 < t < n_1...n_i`` steps.

    ``max_hit_time`` reports the smallest first-return time observed; the
    check passes when it is at least the bound.
    """
    depth = i + 1 if depth is None else depth
    if depth < i + 1 or i < 2:
        raise ValueError("need i >= 2 and depth >= i + 1")
    cells = tower_orbit(spec, depth, budget)
    h = len(cells)
    starts = [p for p, c in enumerate(cells)
              if c.level == i and c.indices[0] < spec.n(i + 1)]
    bound = spec.product(i)
    first_return = []
    for p in starts:
        t = 1
        while p + t < h and cells[p + t].level < i:
            t += 1
        first_return.append(t)
    worst = min(first_return) if first_return else 0
    ok = bool(first_return) and worst >= bound
    return LemmaReport("reach_again", spec, i, depth, len(starts), worst, bound, ok)
