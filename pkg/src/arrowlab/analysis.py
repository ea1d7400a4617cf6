"""Window statistics of arrow fields.

Everything here looks at a field through a finite :class:`Window`.  Quantities
that stand in for infinite-volume objects (long pasts, last crossings,
coalescence) therefore come with a censoring radius, and the density profiles
have an interior-corrected variant that only counts sites far enough from the
boundary the statistic looks towards.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .lattice import Direction, Trajectory, Window, code_vectors


class AncestryCycleError(RuntimeError):
    """The in-window ancestry graph has a cycle (the field has a loop)."""


@dataclass
class SiteSet:
    """Subset of a window stored as a boolean array over its box."""

    window: Window
    mask: np.ndarray
    censor_radius: Optional[int] = None

    def __post_init__(self):
        self.mask = np.asarray(self.mask, dtype=bool)
        if self.mask.shape != self.window.shape:
            raise ValueError("mask shape does not match window")

    def __len__(self):
        return int(self.mask.sum())

    def __contains__(self, site):
        return self.window.contains(site) and bool(self.mask[self.window.index(site)])

    @property
    def density(self) -> float:
        return len(self) / self.window.size

    def sites(self) -> list:
        return [self.window.site(i) for i in np.argwhere(self.mask)]


# -- ancestry ----------------------------------------------------------------

@dataclass
class AncestryDAG:
    """Out-arrows and in-neighbours of every window site.

    ``target[i]`` is the flat index of ``x + alpha(x)`` or -1 when that site
    lies outside the window.  ``in_ptr``/``in_idx`` is a CSR list of the
    in-window in-neighbours.
    """

    window: Window
    codes: np.ndarray
    target: np.ndarray
    in_ptr: np.ndarray
    in_idx: np.ndarray

    def in_degree(self) -> np.ndarray:
        return np.diff(self.in_ptr).reshape(self.window.shape)

    def in_neighbors(self, site) -> list:
        i = np.ravel_multi_index(self.window.index(site), self.window.shape)
        return [self.window.site(np.unravel_index(j, self.window.shape))
                for j in self.in_idx[self.in_ptr[i]:self.in_ptr[i + 1]]]

    def out_site(self, site) -> tuple:
        v = code_vectors(self.window.d)[self.codes[self.window.index(site)]]
        return tuple(int(a + b) for a, b in zip(site, v))


def _targets(codes: np.ndarray):
    """Flat out-target per site (-1 if it leaves the box) and the exit sites."""
    shape = codes.shape
    d = codes.ndim
    idx = np.indices(shape).reshape(d, -1)
    dest = idx + code_vectors(d)[codes.ravel()].T
    inside = np.all((dest >= 0) & (dest < np.array(shape)[:, None]), axis=0)
    target = np.full(idx.shape[1], -1, dtype=np.int64)
    target[inside] = np.ravel_multi_index(tuple(dest[:, inside]), shape)
    return target, dest


def ancestry_dag(field, window: Window) -> AncestryDAG:
    codes = field.window_codes(window)
    target, _ = _targets(codes)
    src = np.nonzero(target >= 0)[0]
    order = np.argsort(target[src], kind="stable")
    in_idx = src[order]
    counts = np.bincount(target[src], minlength=target.size)
    in_ptr = np.concatenate([[0], np.cumsum(counts)])
    return AncestryDAG(window, codes, target, in_ptr, in_idx)


def _diameter(window: Window) -> int:
    return sum(s - 1 for s in window.shape)


def past_length(field, window: Window) -> np.ndarray:
    """Length of the longest in-window ancestor chain ending at each site.

    Directed fields are swept by coordinate sum (every in-neighbour sits one
    level below); other fields use a topological sort, which raises
    :class:`AncestryCycleError` on a loop.  Values are capped at the window
    diameter.
    """
    codes = field.window_codes(window)
    cap = _diameter(window)
    if field.directed:
        out = _pastlen_directed(codes)
    else:
        out = _pastlen_general(codes)
    return np.minimum(out, cap)


def _pastlen_directed(codes: np.ndarray) -> np.ndarray:
    shape = codes.shape
    d = codes.ndim
    idx = np.indices(shape).reshape(d, -1)
    level = idx.sum(axis=0)
    flat_codes = codes.ravel()
    # feeder along axis k: the site one step back, if its arrow is +e_k
    feeders = []
    for k in range(d):
        back = idx.copy()
        back[k] -= 1
        ok = back[k] >= 0
        j = np.full(level.size, -1, dtype=np.int64)
        j[ok] = np.ravel_multi_index(tuple(back[:, ok]), shape)
        ok[ok] = flat_codes[j[ok]] == 2 * k
        feeders.append((ok, j))
    order = np.argsort(level, kind="stable")
    bounds = np.searchsorted(level[order], np.arange(level.max() + 2))
    pl = np.zeros(level.size, dtype=np.int64)
    for s in range(1, level.max() + 1):
        g = order[bounds[s]:bounds[s + 1]]
        best = np.zeros(g.size, dtype=np.int64)
        for ok, j in feeders:
            m = ok[g]
            best[m] = np.maximum(best[m], pl[j[g[m]]] + 1)
        pl[g] = best
    return pl.reshape(shape)


def _pastlen_general(codes: np.ndarray) -> np.ndarray:
    target, _ = _targets(codes)
    n = target.size
    indeg = np.bincount(target[target >= 0], minlength=n)
    pl = np.zeros(n, dtype=np.int64)
    stack = list(np.nonzero(indeg == 0)[0])
    seen = 0
    while stack:
        i = stack.pop()
        seen += 1
        t = target[i]
        if t >= 0:
            pl[t] = max(pl[t], pl[i] + 1)
            indeg[t] -= 1
            if indeg[t] == 0:
                stack.append(t)
    if seen != n:
        raise AncestryCycleError(f"{n - seen} window sites lie on or downstream of a cycle")
    return pl.reshape(codes.shape)


def past_set(field, window: Window, n: int) -> SiteSet:
    return SiteSet(window, past_length(field, window) >= n, censor_radius=n)


def interior_mask(field, window: Window, n: int) -> np.ndarray:
    """Sites at L1 distance >= ``n`` from the boundary the past comes from.

    For directed fields that is the lower faces only; otherwise every face.
    """
    dist = None
    for k, s in enumerate(window.shape):
        i = np.arange(s).reshape([-1 if a == k else 1 for a in range(window.d)])
        dk = i if field.directed else np.minimum(i, s - 1 - i)
        dist = dk if dist is None else np.minimum(dist, dk)
    return np.broadcast_to(dist >= n, window.shape)


@dataclass
class DensityProfile:
    n: np.ndarray
    raw: np.ndarray
    interior: np.ndarray
    censor_radius: np.ndarray

    def csv(self) -> str:
        rows = ["n,raw_density,interior_density,censor_radius"]
        for k in range(len(self.n)):
            rows.append(f"{int(self.n[k])},{float(self.raw[k])!r},{float(self.interior[k])!r},"
                        f"{int(self.censor_radius[k])}")
        return "\n".join(rows) + "\n"


def pn_density_profile(field, window: Window, nmax: int, pastlen=None) -> DensityProfile:
    """Raw and interior-corrected density of ``P_n`` for ``n = 0..nmax``."""
    if nmax < 0 or nmax >= min(window.halfwidths):
        raise ValueError(f"nmax={nmax} must lie in [0, {min(window.halfwidths) - 1}]")
    pl = past_length(field, window) if pastlen is None else pastlen
    ns = np.arange(nmax + 1)
    raw = np.empty(len(ns))
    inner = np.empty(len(ns))
    for k, n in enumerate(ns):
        have = pl >= n
        m = interior_mask(field, window, n)
        raw[k] = have.mean()
        inner[k] = have[m].mean()
    return DensityProfile(ns, raw, inner, ns.copy())


# -- in-window coalescence ---------------------------------------------------

def walk_roots(field, window: Window, codes=None) -> np.ndarray:
    """Label of the in-window walk tree each site belongs to.

    Two sites get the same label exactly when their walks meet inside the
    window.  The label is the exit site's flat index offset past the box, or
    ``-1 - j`` (``j`` the smallest index on the cycle) when a walk loops.
    """
    if codes is None:
        codes = field.window_codes(window)
    target, dest = _targets(codes)
    n = target.size
    # exits: give each distinct outside site its own sink node
    out = np.nonzero(target < 0)[0]
    ext = np.ravel_multi_index(tuple(dest[:, out] + 1), tuple(s + 2 for s in codes.shape))
    nxt = np.arange(n + out.size, dtype=np.int64)
    nxt[:n] = target
    nxt[out] = n + np.arange(out.size)
    sink_label = np.concatenate([np.arange(n), n + ext])
    for _ in range(max(1, math.ceil(math.log2(n + 1))) + 1):
        nxt = nxt[nxt]
    root = nxt[:n]
    cyc = root < n
    labels = sink_label[root]
    if cyc.any():
        labels = labels.copy()
        for i in np.unique(root[cyc]):
            members, j = [i], target[i]
            while j != i:
                members.append(j)
                j = target[j]
            labels[root == i] = -1 - min(members)
    return labels.reshape(codes.shape)


def coalesced_in_window(roots: np.ndarray, window: Window, x, y) -> bool:
    return roots[window.index(x)] == roots[window.index(y)]


def pairs_within(window: Window, anchor, radius: int) -> list:
    """``(anchor, y)`` for every window site ``y != anchor`` within L1 ``radius``."""
    d = window.d
    out = []
    for off in np.ndindex(*(2 * radius + 1,) * d):
        v = tuple(o - radius for o in off)
        if 0 < sum(abs(c) for c in v) <= radius:
            y = tuple(a + c for a, c in zip(anchor, v))
            if window.contains(y):
                out.append((tuple(anchor), y))
    return out


def coalescence_fraction(field, window: Window, pairs, roots=None) -> float:
    """Share of the site pairs whose walks meet before leaving the window."""
    if roots is None:
        roots = walk_roots(field, window)
    if not len(pairs):
        return float("nan")
    hits = sum(coalesced_in_window(roots, window, x, y) for x, y in pairs)
    return hits / len(pairs)


# -- vertical lines ----------------------------------------------------------

@dataclass
class LineCrossings:
    """Sites of ``Vert_a`` whose walk leaves the line for good, on one side.

    ``departure[j]`` is the row where the walk from row ``j`` last touches the
    line (or -1); this is the last-crossing point of that walk.
    """

    sites: SiteSet
    a: int
    side: int
    departure: np.ndarray


def last_crossings(field, window: Window, a: int, side: int = 1) -> LineCrossings:
    """Window surrogate of ``L+`` (``side=1``) or ``L-`` (``side=-1``) on
    the vertical line ``x1 = a``.

    A site qualifies when its walk, followed until it exits the window,
    eventually has first coordinate strictly beyond ``a`` on the chosen side
    and never comes back.  The censoring radius is the distance from the
    line to the window face on that side.
    """
    if window.d != 2:
        raise ValueError("vertical lines need a two-dimensional window")
    lo, hi = window.lo, window.hi
    if not lo[0] <= a <= hi[0]:
        raise ValueError(f"line a={a} outside the window")
    if side not in (1, -1):
        raise ValueError("side must be +1 or -1")
    h = window.shape[1]
    departure = np.full(h, -1, dtype=np.int64)
    if field.directed and side == 1:
        col = field.codes(np.full(h, a, dtype=np.int64), np.arange(lo[1], hi[1] + 1))
        nxt = -1
        for j in range(h - 1, -1, -1):
            if col[j] == 0:
                nxt = j
            departure[j] = nxt
    elif field.directed:
        pass  # up-right walks never go left
    else:
        codes = field.window_codes(window)
        vec = code_vectors(2)
        i0 = a - lo[0]
        for j in range(h):
            x, y = i0, j
            last, dep = None, -1
            for _ in range(window.size + 1):
                if x == i0:
                    last = y
                elif (x - i0) * side < 0:
                    last = None
                v = vec[codes[x, y]]
                x, y = x + v[0], y + v[1]
                if not (0 <= x < codes.shape[0] and 0 <= y < codes.shape[1]):
                    break
            if last is not None and (x - i0) * side > 0:
                dep = last
            departure[j] = dep
    mask = np.zeros(window.shape, dtype=bool)
    mask[a - lo[0], :] = departure >= 0
    radius = hi[0] - a if side == 1 else a - lo[0]
    return LineCrossings(SiteSet(window, mask, radius), a, side, departure)


def separating_set(field, window: Window, a: int, roots=None) -> list:
    """Alternate members of the pairwise non-coalescing last-crossing points.

    The last-crossing points on ``Vert_a`` are the distinct departure rows.
    A point whose walk meets the walk of any other one inside the window is
    dropped.  Survivors are ordered by height with ``x_0`` the one closest to
    height 0 (the lower one on a tie) and ``x_0, x_{+-2}, ...`` are returned.
    """
    lc = last_crossings(field, window, a)
    lo = window.lo
    rows = np.unique(lc.departure[lc.departure >= 0])
    pts = [(a, lo[1] + int(j)) for j in rows]
    if roots is None:
        roots = walk_roots(field, window)
    labels = np.array([roots[window.index(p)] for p in pts], dtype=np.int64)
    uniq, counts = np.unique(labels, return_counts=True)
    alone = set(uniq[counts == 1].tolist())
    survivors = [p for p, l in zip(pts, labels) if l in alone]
    if not survivors:
        return []
    heights = np.array([p[1] for p in survivors])
    k0 = int(np.lexsort((heights, np.abs(heights)))[0])
    out = [p for k, p in enumerate(survivors) if (k - k0) % 2 == 0]
    got = [roots[window.index(p)] for p in out]
    assert len(set(got)) == len(got), "separating set contains coalescing walks"
    return out


# -- cataclysmic points ------------------------------------------------------

def cataclysmic_points(field, window: Window, n: Optional[int] = None,
                       pastlen=None, dag: Optional[AncestryDAG] = None) -> SiteSet:
    """Sites where two in-window branches with pasts of length ``n - 1`` merge.

    ``n`` defaults to half the smallest halfwidth.
    """
    if n is None:
        n = max(1, min(window.halfwidths) // 2)
    if n < 1:
        raise ValueError("threshold must be >= 1")
    dag = ancestry_dag(field, window) if dag is None else dag
    pl = (past_length(field, window) if pastlen is None else pastlen).ravel()
    good = pl[dag.in_idx] >= n - 1
    c = np.concatenate([[0], np.cumsum(good)])
    deep = c[dag.in_ptr[1:]] - c[dag.in_ptr[:-1]]
    return SiteSet(window, (deep >= 2).reshape(window.shape), censor_radius=n)


def cataclysm_csv(field, window: Window, thresholds: Sequence[int]) -> str:
    pl = past_length(field, window)
    dag = ancestry_dag(field, window)
    rows = ["n,count,density"]
    for n in thresholds:
        s = cataclysmic_points(field, window, int(n), pl, dag)
        rows.append(f"{int(n)},{len(s)},{float(s.density)!r}")
    return "\n".join(rows) + "\n"


# -- walk statistics ---------------------------------------------------------

@dataclass
class DirectionEstimate:
    n: np.ndarray
    series: np.ndarray
    final: tuple
    max_ba: float
    max_ab: float

    def csv(self) -> str:
        rows = ["n,dx_over_n,dy_over_n"]
        for k in range(len(self.n)):
            rows.append(f"{int(self.n[k])},{float(self.series[k, 0])!r},{float(self.series[k, 1])!r}")
        return "\n".join(rows) + "\n"


def _ratio(num, den):
    with np.errstate(divide="ignore", invalid="ignore"):
        r = np.where(den > 0, num / np.where(den > 0, den, 1), np.where(num > 0, np.inf, 0.0))
    return r


def direction_estimate(traj: Trajectory, checkpoints: Optional[Sequence[int]] = None) -> DirectionEstimate:
    """``displacement(n) / n`` at the checkpoints (default every step) and
    the largest slope ratios ``b/a`` and ``a/b`` seen there."""
    n = len(traj)
    if n < 1:
        raise ValueError("trajectory has no steps")
    cps = np.arange(1, n + 1) if checkpoints is None else np.asarray(checkpoints, dtype=np.int64)
    disp = traj.displacement_series(cps).astype(np.float64)
    series = disp / cps[:, None]
    a = disp[:, 0]
    b = disp[:, 1] if traj.d > 1 else np.zeros(len(cps))
    final = tuple(float(v) for v in traj.displacement(n))
    final = tuple(v / n for v in final)
    return DirectionEstimate(cps, series, final, float(_ratio(b, a).max()),
                             float(_ratio(a, b).max()))


def block_frequency(traj: Trajectory, word: Sequence[Direction]) -> np.ndarray:
    """Entry ``n - 1`` is the share of windows ``steps[i:i+L]``, ``i + L <= n``,
    equal to ``word``; zero while ``n < L``."""
    L = len(word)
    if L < 1:
        raise ValueError("word must be non-empty")
    n = len(traj)
    out = np.zeros(n)
    if n < L:
        return out
    w = np.array([d.code for d in word], dtype=np.int8)
    hit = np.ones(n - L + 1, dtype=bool)
    for k in range(L):
        hit &= traj.steps[k:n - L + 1 + k] == w[k]
    cum = np.cumsum(hit)
    out[L - 1:] = cum / np.arange(1, n - L + 2)
    return out


# -- plotting ----------------------------------------------------------------

def svg_line_chart(csv_text: str, x: Optional[str] = None, y: Optional[str] = None,
                   width: int = 480, height: int = 300) -> str:
    """Plain SVG polyline of one CSV column against another.

    Defaults to the first column against the second.  Non-finite values are
    skipped.
    """
    lines = [l for l in csv_text.strip().splitlines() if l and not l.startswith("#")]
    head = lines[0].split(",")
    xi = head.index(x) if x else 0
    yi = head.index(y) if y else 1
    pts = []
    for row in lines[1:]:
        cells = row.split(",")
        try:
            px, py = float(cells[xi]), float(cells[yi])
        except (ValueError, IndexError):
            continue
        if math.isfinite(px) and math.isfinite(py):
            pts.append((px, py))
    pad = 40
    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
           f'viewBox="0 0 {width} {height}">',
           f'<rect width="{width}" height="{height}" fill="white"/>']
    if pts:
        xs = [p[0] for p in pts]
        ys = [p[1] for p in pts]
        x0, x1 = min(xs), max(xs)
        y0, y1 = min(ys), max(ys)
        sx = (width - 2 * pad) / (x1 - x0 or 1.0)
        sy = (height - 2 * pad) / (y1 - y0 or 1.0)
        poly = " ".join(f"{pad + (a - x0) * sx:.2f},{height - pad - (b - y0) * sy:.2f}"
                        for a, b in pts)
        out.append(f'<polyline fill="none" stroke="black" stroke-width="1.5" points="{poly}"/>')
        out.append(f'<text x="{pad}" y="{height - 8}" font-size="12">{head[xi]}: '
                   f'{x0:g} .. {x1:g}</text>')
        out.append(f'<text x="4" y="16" font-size="12">{head[yi]}: {y0:g} .. {y1:g}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"
