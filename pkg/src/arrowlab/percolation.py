"""Directed passage percolation on site weights.

Paths are up-right lattice paths; the weight of a path is the sum of the
weights of all its sites, both endpoints included.  First passage minimises,
last passage maximises.  Everything here works on finite boxes given by a
lower corner and a target (the upper corner).
"""

from __future__ import annotations

import bisect
import math
from dataclasses import dataclass, field
from itertools import combinations
from typing import Optional, Sequence

import numpy as np

from .cutstack import ProductField, StackSpec, product_field
from .lattice import E, N, GridField, Trajectory, Window, check_site, code_vectors
from .rng import derive_seed, uniform_np

ATOMS = (0.5, 0.75, 1.0)


# -- weight fields -----------------------------------------------------------

class WeightField:
    kind = "abstract"
    seed = None

    def values(self, xs, ys) -> np.ndarray:
        raise NotImplementedError

    def value(self, site) -> float:
        return float(self.values(np.array([site[0]]), np.array([site[1]]))[0])

    def box(self, lo, hi) -> np.ndarray:
        """Weights on ``lo <= z <= hi`` as an array indexed ``[x - lo0, y - lo1]``."""
        xs = np.arange(lo[0], hi[0] + 1, dtype=np.int64)
        ys = np.arange(lo[1], hi[1] + 1, dtype=np.int64)
        return self.values(xs[:, None], ys[None, :])

    def along(self, traj: Trajectory) -> np.ndarray:
        s = traj.sites()
        return self.values(s[:, 0], s[:, 1])


class ConstantWeights(WeightField):
    kind = "constant"

    def __init__(self, c: float = 1.0):
        self.c = float(c)

    def values(self, xs, ys):
        return np.full(np.broadcast_shapes(np.shape(xs), np.shape(ys)), self.c)


class IIDWeights(WeightField):
    """iid site weights, exponential(1) or uniform[0, 1)."""

    def __init__(self, kind: str, seed: int):
        if kind not in ("iid-exponential", "iid-uniform"):
            raise ValueError(f"unknown iid weight kind {kind!r}")
        self.kind = kind
        self.seed = int(seed)
        self._stream = derive_seed(self.seed, 0x3E16)

    def values(self, xs, ys):
        u = uniform_np(self._stream, xs, ys)
        if self.kind == "iid-uniform":
            return u
        return -np.log1p(-u)


class ArrayWeights(WeightField):
    kind = "array"

    def __init__(self, lo, array):
        self.lo = check_site(lo)
        self.array = np.asarray(array, dtype=float)

    def values(self, xs, ys):
        i = np.asarray(xs) - self.lo[0]
        j = np.asarray(ys) - self.lo[1]
        if np.any(i < 0) or np.any(j < 0) or np.any(i >= self.array.shape[0]) \
                or np.any(j >= self.array.shape[1]):
            raise IndexError("weight query outside the stored box")
        return self.array[i, j]


def constructed_rule(lx, lxm, ly, lym, variant: str = "w"):
    """Weight from the spacer levels of ``x``, ``S1^-1 x``, ``y``, ``S2^-1 y``.

    The left neighbour misses the site when it is a spacer column ``K_r``
    pointing up (``y`` below ``K^_r``); the lower neighbour misses it when it
    points right (``x`` not above the row's spacer level).  Variant ``w``
    puts weight 1 where both miss, so the site has no in-neighbour and no
    walk enters it; ``w-or`` puts 1 where either misses.  All other sites get
    1/2.  Variant ``what`` is ``w`` with the 1/2 sites whose ``x`` lies in an
    even spacer ``K_{2r}`` raised to 3/4.
    """
    lx, lxm, ly, lym = (np.asarray(v) for v in (lx, lxm, ly, lym))
    left_misses = (lxm >= 2) & (ly < lxm)
    if variant == "w-or":
        one = left_misses | ((lym >= 2) & (lx <= lym))
    else:
        one = left_misses & ((lx == 0) | (lym >= lx))
    w = np.where(one, 1.0, 0.5)
    if variant == "what":
        w = np.where((~one) & (lx >= 2) & (lx % 2 == 0), 0.75, w)
    elif variant not in ("w", "w-or"):
        raise ValueError(f"unknown variant {variant!r}")
    return w


class ConstructedWeights(WeightField):
    """Weights built on the cutting-and-stacking product's base point.

    ``field`` is the matching :class:`~arrowlab.cutstack.ProductField`; its
    walks are the geodesics these weights are designed for.
    """

    def __init__(self, field: ProductField, variant: str = "w"):
        if variant not in ("w", "what", "w-or"):
            raise ValueError(f"unknown variant {variant!r}")
        self.field = field
        self.variant = variant
        self.kind = "constructed-" + variant
        self.seed = field.seed

    def values(self, xs, ys):
        xs, ys = np.broadcast_arrays(np.asarray(xs, dtype=np.int64),
                                     np.asarray(ys, dtype=np.int64))
        ux, ix = np.unique(np.concatenate([xs.ravel(), xs.ravel() - 1]), return_inverse=True)
        uy, iy = np.unique(np.concatenate([ys.ravel(), ys.ravel() - 1]), return_inverse=True)
        lxu, lyu = self.field.axis_levels(ux, uy)
        k = xs.size
        lx = lxu[ix[:k]].reshape(xs.shape)
        lxm = lxu[ix[k:]].reshape(xs.shape)
        ly = lyu[iy[:k]].reshape(ys.shape)
        lym = lyu[iy[k:]].reshape(ys.shape)
        return constructed_rule(lx, lxm, ly, lym, self.variant)

    def run_profile(self, a: int, b: int, code: int, length: int):
        """Weights of the ``length`` sites entered by a straight run from
        ``(a, b)``: a generic value plus sparse exceptions ``(offset, w)``."""
        f = self.field
        if code == E.code:
            moving, fixed, fixed_pt, moving_pt = a, b, f.y, f.x
        else:
            moving, fixed, fixed_pt, moving_pt = b, a, f.x, f.y
        lf, lfm = fixed_pt.level(fixed), fixed_pt.level(fixed - 1)
        # sites moving+1 .. moving+length; their "minus" neighbours start at moving
        rungs = moving_pt.spacer_rungs(moving, length + 1)
        lev = dict(rungs)
        offs = sorted({o for o, _ in rungs if o >= 1} | {o + 1 for o, _ in rungs if o + 1 <= length})

        def rule(lm_self, lm_minus):
            if code == E.code:
                return constructed_rule(lm_self, lm_minus, lf, lfm, self.variant)
            return constructed_rule(lf, lfm, lm_self, lm_minus, self.variant)

        generic = float(rule(0, 0))
        exc = [(o - 1, float(rule(lev.get(o, 0), lev.get(o - 1, 0)))) for o in offs]
        return generic, exc


# -- passage tables ----------------------------------------------------------

@dataclass
class PassageTable:
    """Optimal passage values from every box site to ``target``.

    ``value[i, j]`` is the optimum from ``(lo0+i, lo1+j)``; ``step`` holds the
    optimal first step code (-1 at the target); ``tie`` flags sites where both
    steps are optimal.
    """

    lo: tuple
    target: tuple
    mode: str
    weights: np.ndarray
    value: np.ndarray
    step: np.ndarray
    tie: np.ndarray

    def at(self, site) -> float:
        return float(self.value[site[0] - self.lo[0], site[1] - self.lo[1]])


def _box_of(window, target):
    if isinstance(window, Window):
        lo = window.lo
        if not window.contains(target):
            raise ValueError("target outside window")
    else:
        lo = check_site(window)
    if target[0] < lo[0] or target[1] < lo[1]:
        raise ValueError("target must lie up-right of the lower corner")
    return lo


def passage_dp(weights, window, target, mode: str = "min") -> PassageTable:
    """Exact dynamic programme over ``lo <= z <= target`` by anti-diagonals.

    ``window`` is a :class:`Window` or a lower corner; ``weights`` is a
    :class:`WeightField` or an array already restricted to the box.
    """
    if mode not in ("min", "max"):
        raise ValueError("mode must be 'min' or 'max'")
    target = check_site(target)
    lo = _box_of(window, target)
    if isinstance(weights, WeightField):
        Wt = weights.box(lo, target)
    else:
        Wt = np.asarray(weights, dtype=float)
    A, B = target[0] - lo[0] + 1, target[1] - lo[1] + 1
    if Wt.shape != (A, B):
        raise ValueError("weight array does not match the box")
    better = np.less if mode == "min" else np.greater
    V = np.empty((A, B))
    step = np.full((A, B), -1, dtype=np.int8)
    tie = np.zeros((A, B), dtype=bool)
    fill = np.inf if mode == "min" else -np.inf
    V[A - 1, B - 1] = Wt[A - 1, B - 1]
    for lev in range(A + B - 3, -1, -1):
        i = np.arange(max(0, lev - B + 1), min(A - 1, lev) + 1)
        j = lev - i
        ve = np.where(i + 1 < A, V[np.minimum(i + 1, A - 1), j], fill)
        vn = np.where(j + 1 < B, V[i, np.minimum(j + 1, B - 1)], fill)
        take_n = better(vn, ve)
        V[i, j] = Wt[i, j] + np.where(take_n, vn, ve)
        step[i, j] = np.where(take_n, N.code, E.code)
        tie[i, j] = (ve == vn) & np.isfinite(ve)
    return PassageTable(lo, target, mode, Wt, V, step, tie)


def path_weight(values) -> float:
    """Sum of site weights folded from the far end, the order the DP uses,
    so that equal paths give bit-identical totals."""
    total = 0.0
    for v in reversed(np.asarray(values, dtype=float).tolist()):
        total = v + total
    return total


def passage_time(weights, a, b, mode: str = "min") -> float:
    """Optimal weight of directed paths from ``a`` to ``b``."""
    return passage_dp(weights, a, b, mode).value[0, 0]


def brute_force_passage(W: np.ndarray, mode: str = "min") -> float:
    """Enumerate every up-right path from ``W[0, 0]`` to ``W[-1, -1]``."""
    A, B = W.shape
    n = A + B - 2
    best = None
    for east in combinations(range(n), A - 1):
        i = j = 0
        vals = [W[0, 0]]
        es = set(east)
        for k in range(n):
            if k in es:
                i += 1
            else:
                j += 1
            vals.append(W[i, j])
        total = path_weight(vals)
        if best is None or (total < best if mode == "min" else total > best):
            best = total
    return float(best)


def geodesic_tree(weights, window, target, mode: str = "min", table=None) -> GridField:
    """Arrow field of optimal first steps toward ``target`` (ties prefer e1).

    The target itself is given ``e1``.  Soundness is asserted: every site's
    value equals its weight plus the value of the site its arrow points to.
    """
    t = table if table is not None else passage_dp(weights, window, target, mode)
    codes = t.step.copy()
    codes[-1, -1] = E.code
    A, B = codes.shape
    i, j = np.meshgrid(np.arange(A), np.arange(B), indexing="ij")
    east = codes == E.code
    ni = np.where(east, i + 1, i)
    nj = np.where(east, j, j + 1)
    inside = (ni < A) & (nj < B)
    inside[-1, -1] = False
    lhs = t.value[inside]
    rhs = t.weights[inside] + t.value[ni[inside], nj[inside]]
    if not np.array_equal(lhs, rhs):
        raise AssertionError("geodesic tree arrow is not optimal")
    tree = GridField(t.lo, codes, arrow_set=(E, N))
    tree.table = t
    return tree


def tree_path(tree: GridField, start) -> Trajectory:
    """Follow the tree from ``start`` to its target."""
    t = tree.table
    x, y = start[0] - t.lo[0], start[1] - t.lo[1]
    A, B = tree.grid_codes.shape
    n = (A - 1 - x) + (B - 1 - y)
    steps = np.empty(n, dtype=np.int8)
    for k in range(n):
        c = tree.grid_codes[x, y]
        if x == A - 1:
            c = N.code
        elif y == B - 1:
            c = E.code
        steps[k] = c
        if c == E.code:
            x += 1
        else:
            y += 1
    return Trajectory(tuple(start), steps)


def busemann_diff(weights, x, y, targets, mode: str = "min"):
    """``T(x, z) - T(y, z)`` for each target ``z``; returns ``(series, last_delta)``."""
    x, y = check_site(x), check_site(y)
    lo = (min(x[0], y[0]), min(x[1], y[1]))
    out = []
    for z in targets:
        t = passage_dp(weights, lo, z, mode)
        out.append(t.at(x) - t.at(y))
    out = np.array(out)
    last = float(out[-1] - out[-2]) if len(out) > 1 else 0.0
    return out, last


def constructed_weights(nspec: Optional[StackSpec] = None, mspec: Optional[StackSpec] = None,
                        seed: int = 0, variant: str = "w", field=None) -> ConstructedWeights:
    """Weights on the product system with base point drawn from ``seed``
    (the same point :func:`~arrowlab.cutstack.product_field` uses)."""
    f = field if field is not None else product_field(nspec, mspec, seed)
    return ConstructedWeights(f, variant)


# -- checks along walks ------------------------------------------------------

@dataclass
class GeodesicReport:
    segments: int
    violations: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return not self.violations


def verify_geodesic(weights, traj: Trajectory, segments=None, mode: str = "min",
                    rng_seed: int = 0, count: int = 100, max_len: int = 200) -> GeodesicReport:
    """Compare walk-segment weights with the optimal passage between their
    endpoints.  ``segments`` is a list of ``(i, j)`` step indices; by default
    ``count`` random segments of length at most ``max_len``."""
    n = len(traj)
    if segments is None:
        rng = np.random.default_rng(rng_seed)
        segments = []
        for _ in range(count):
            L = int(rng.integers(1, min(max_len, n) + 1))
            i = int(rng.integers(0, n - L + 1))
            segments.append((i, i + L))
    report = GeodesicReport(len(segments))
    # start sites accumulated in index order, so long walks never need
    # their full site array
    V = code_vectors(traj.d)
    pos = np.array(traj.start, dtype=np.int64)
    prev = 0
    for i, j in sorted(segments):
        pos = pos + np.bincount(traj.steps[prev:i], minlength=2 * traj.d) @ V
        prev = i
        seg = Trajectory(tuple(int(v) for v in pos), traj.steps[i:j]).sites()
        a, b = tuple(seg[0]), tuple(seg[-1])
        walk = path_weight(weights.values(seg[:, 0], seg[:, 1]))
        best = passage_time(weights, a, b, mode)
        if walk != best:
            report.violations.append((i, j, walk, best))
    return report


@dataclass
class HoffmanSeries:
    n: np.ndarray
    mean: np.ndarray
    mass: dict
    oscillation: float

    def csv(self) -> str:
        rows = ["n,mean,mass_half,mass_threequarter,mass_one"]
        for k, n in enumerate(self.n):
            m = [self.mass.get(a, np.zeros(len(self.n)))[k] for a in ATOMS]
            rows.append(f"{int(n)},{float(self.mean[k])!r},{float(m[0])!r},{float(m[1])!r},{float(m[2])!r}")
        return "\n".join(rows) + "\n"


def default_checkpoints(n: int, per_decade: int = 10):
    if n < 1:
        return np.array([], dtype=np.int64)
    k = np.unique(np.round(np.logspace(0, math.log10(n), per_decade * max(1, int(math.log10(n) + 1)))).astype(np.int64))
    return np.unique(np.append(k[k <= n], n))


def hoffman_trace(weights, traj: Trajectory, checkpoints: Optional[Sequence[int]] = None):
    """Running empirical measure of the weights at ``X(1), ..., X(n)``."""
    n = len(traj)
    cps = default_checkpoints(n) if checkpoints is None else np.asarray(checkpoints, dtype=np.int64)
    if len(cps) and (cps.min() < 1 or cps.max() > n):
        raise ValueError("checkpoints must lie in [1, len(traj)]")
    if isinstance(weights, ConstructedWeights) and traj.runs is not None:
        sums, counts = _run_sums(weights, traj, cps)
    else:
        w = weights.along(traj)[1:]
        cum = np.concatenate([[0.0], np.cumsum(w)])
        sums = cum[cps]
        counts = {}
        for atom in ATOMS:
            c = np.concatenate([[0], np.cumsum(w == atom)])
            counts[atom] = c[cps]
    mean = sums / cps
    mass = {a: counts[a] / cps for a in counts}
    osc = float(mean.max() - mean.min()) if len(mean) else 0.0
    return HoffmanSeries(cps, mean, mass, osc)


def geometric_checkpoints(n: int, ratio: int = 4, count: int = 4) -> np.ndarray:
    """``n / ratio^(count-1), ..., n / ratio, n`` (floored, at least 1)."""
    return np.array([max(1, n // ratio ** k) for k in range(count - 1, -1, -1)], dtype=np.int64)


def block_oscillation(weights, traj: Trajectory, checkpoints: Sequence[int]) -> np.ndarray:
    """Range (max - min) of the running mean over each block
    ``checkpoints[k-1] <= n <= checkpoints[k]``."""
    cps = np.asarray(checkpoints, dtype=np.int64)
    w = weights.along(traj)[1:]
    mean = np.cumsum(w) / np.arange(1, len(w) + 1)
    return np.array([np.ptp(mean[cps[k - 1] - 1:cps[k]]) for k in range(1, len(cps))])


def _run_sums(weights: ConstructedWeights, traj: Trajectory, cps):
    """Prefix sums at checkpoints, one run at a time (exact dyadic sums)."""
    sums = np.zeros(len(cps))
    counts = {a: np.zeros(len(cps), dtype=np.int64) for a in ATOMS}
    a, b = traj.start
    done = 0
    total = 0.0
    tot_counts = {a_: 0 for a_ in ATOMS}
    ci = 0
    for code, length in traj.runs:
        generic, exc = weights.run_profile(a, b, code, length)
        offs = [o for o, _ in exc]
        pref_w = np.concatenate([[0.0], np.cumsum([w for _, w in exc])])
        pref_c = {atom: np.concatenate([[0], np.cumsum([w == atom for _, w in exc])]).astype(np.int64)
                  for atom in ATOMS}
        while ci < len(cps) and cps[ci] <= done + length:
            k = int(cps[ci] - done)
            e = bisect.bisect_left(offs, k)
            sums[ci] = total + generic * (k - e) + pref_w[e]
            for atom in ATOMS:
                counts[atom][ci] = tot_counts[atom] + pref_c[atom][e] + ((k - e) if generic == atom else 0)
            ci += 1
        e = len(offs)
        total += generic * (length - e) + pref_w[e]
        for atom in ATOMS:
            tot_counts[atom] += int(pref_c[atom][e]) + ((length - e) if generic == atom else 0)
        done += length
        if code == E.code:
            a += length
        else:
            b += length
    return sums, counts


# -- WEIGHTS v1 text format -------------------------------------------------

def format_weights(weights, lo, shape) -> str:
    w, h = shape
    arr = weights.box(lo, (lo[0] + w - 1, lo[1] + h - 1))
    lines = [f"WEIGHTS v1 {lo[0]} {lo[1]} {w} {h}"]
    for j in range(h - 1, -1, -1):
        lines.append(" ".join(repr(float(v)) for v in arr[:, j]))
    return "\n".join(lines) + "\n"


def parse_weights(text: str) -> ArrayWeights:
    lines = [l for l in text.splitlines() if not l.startswith("#")]
    head = lines[0].split() if lines else []
    if len(head) != 6 or head[:2] != ["WEIGHTS", "v1"]:
        raise ValueError("bad WEIGHTS header")
    x0, y0, w, h = (int(v) for v in head[2:])
    rows = lines[1:]
    if len(rows) != h:
        raise ValueError("WEIGHTS body does not match declared height")
    arr = np.empty((w, h))
    for r, row in enumerate(rows):
        vals = [float(v) for v in row.split()]
        if len(vals) != w:
            raise ValueError("WEIGHTS row does not match declared width")
        arr[:, h - 1 - r] = vals
    return ArrayWeights((x0, y0), arr)


# -- field-spec adapters -----------------------------------------------------

def _window_param(spec, default=50):
    win = spec.params.get("window", (default,))
    win = tuple(win) if isinstance(win, (tuple, list)) else (int(win),)
    return Window.rect(win[0]) if len(win) == 1 else Window((0, 0), win)


def lpp_geodesic_field(spec) -> GridField:
    w = IIDWeights(spec.params.get("weights", "iid-exponential"), spec.seed)
    window = _window_param(spec)
    target = tuple(spec.params.get("target", window.hi))
    return geodesic_tree(w, window, target, spec.params.get("mode", "max"))


def constructed_geodesic_field(spec) -> GridField:
    from .cutstack import StackSpec as SS
    n = SS(tuple(spec.params["n"])) if "n" in spec.params else None
    m = SS(tuple(spec.params["m"])) if "m" in spec.params else None
    w = constructed_weights(n, m, spec.seed, spec.params.get("variant", "w"))
    window = _window_param(spec)
    target = tuple(spec.params.get("target", window.hi))
    return geodesic_tree(w, window, target, "min")
