"""Lattice geometry, arrow fields and walk semantics.

A site is a tuple of Python ints.  A direction is a signed unit vector,
encoded compactly as ``code = 2*axis + (sign < 0)`` so that trajectories can
store their steps in an ``int8`` array (E=0, W=1, N=2, S=3, U=4, D=5).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple, Optional, Sequence

import numpy as np

INT64_MIN = -(1 << 63)
INT64_MAX = (1 << 63) - 1


class DomainError(ValueError):
    """Query outside the region where a field is defined."""


class TraceError(RuntimeError):
    """Raised when a walk leaves the queryable region before ``n`` steps.

    ``prefix`` holds the trajectory completed so far.
    """

    def __init__(self, message, prefix):
        super().__init__(message)
        self.prefix = prefix


def check_site(site) -> tuple:
    site = tuple(int(c) for c in site)
    for c in site:
        if c < INT64_MIN or c > INT64_MAX:
            raise OverflowError(f"coordinate {c} outside 64-bit range")
    return site


class Direction(NamedTuple):
    axis: int
    sign: int

    @property
    def code(self) -> int:
        return 2 * self.axis + (self.sign < 0)

    @classmethod
    def from_code(cls, code: int) -> "Direction":
        return cls(int(code) // 2, -1 if code % 2 else 1)

    def vector(self, d: int) -> tuple:
        v = [0] * d
        v[self.axis] = self.sign
        return tuple(v)

    @property
    def letter(self) -> str:
        return _LETTERS[self.code]

    def __repr__(self):
        return f"Direction({self.letter})"


_LETTERS = "EWNSUD"
E = Direction(0, 1)
W = Direction(0, -1)
N = Direction(1, 1)
S = Direction(1, -1)
U = Direction(2, 1)
D = Direction(2, -1)

DIRECTED_2D = (E, N)


def add(site: tuple, direction: Direction) -> tuple:
    s = list(site)
    s[direction.axis] += direction.sign
    return check_site(s)


def code_vectors(d: int) -> np.ndarray:
    """Array ``V`` with ``V[code]`` the unit vector of that direction code."""
    V = np.zeros((2 * d, d), dtype=np.int64)
    for c in range(2 * d):
        dr = Direction.from_code(c)
        V[c, dr.axis] = dr.sign
    return V


# -- windows ---------------------------------------------------------------

@dataclass(frozen=True)
class Window:
    """Axis-aligned box ``center ± halfwidths`` (inclusive)."""

    center: tuple
    halfwidths: tuple

    def __post_init__(self):
        object.__setattr__(self, "center", check_site(self.center))
        hw = tuple(int(h) for h in self.halfwidths)
        if len(hw) != len(self.center):
            raise ValueError("center and halfwidths differ in dimension")
        if any(h < 1 for h in hw):
            raise ValueError("halfwidths must be >= 1")
        object.__setattr__(self, "halfwidths", hw)

    @classmethod
    def rect(cls, n: int, center=(0, 0)) -> "Window":
        return cls(tuple(center), (n,) * len(center))

    @property
    def d(self) -> int:
        return len(self.center)

    @property
    def lo(self) -> tuple:
        return tuple(c - h for c, h in zip(self.center, self.halfwidths))

    @property
    def hi(self) -> tuple:
        return tuple(c + h for c, h in zip(self.center, self.halfwidths))

    @property
    def shape(self) -> tuple:
        return tuple(2 * h + 1 for h in self.halfwidths)

    @property
    def size(self) -> int:
        return int(np.prod(self.shape))

    def contains(self, site) -> bool:
        return all(l <= c <= h for c, l, h in zip(site, self.lo, self.hi))

    def on_boundary(self, site) -> bool:
        """Site in the window with a nearest neighbour outside it."""
        return self.contains(site) and any(
            c == l or c == h for c, l, h in zip(site, self.lo, self.hi))

    def axes(self) -> list:
        return [np.arange(l, h + 1, dtype=np.int64) for l, h in zip(self.lo, self.hi)]

    def grid(self) -> list:
        return np.meshgrid(*self.axes(), indexing="ij")

    def index(self, site) -> tuple:
        return tuple(c - l for c, l in zip(site, self.lo))

    def site(self, index) -> tuple:
        return tuple(int(i) + l for i, l in zip(index, self.lo))


# -- arrow fields ----------------------------------------------------------

class ArrowField:
    """A deterministic assignment of one arrow to every queryable site.

    Subclasses implement :meth:`_code` (scalar) and may override
    :meth:`codes` with a vectorised version.  ``arrow_set`` is enforced at
    query time.
    """

    d = 2
    arrow_set: tuple = DIRECTED_2D
    spec = None

    @property
    def directed(self) -> bool:
        return all(a.sign > 0 for a in self.arrow_set)

    def contains(self, site) -> bool:
        return len(site) == self.d

    def _code(self, site: tuple) -> int:
        raise NotImplementedError

    def arrow(self, site) -> Direction:
        site = check_site(site)
        if not self.contains(site):
            raise DomainError(f"site {site} outside the field's region")
        a = Direction.from_code(self._code(site))
        if a not in self.arrow_set:
            raise DomainError(f"arrow {a} at {site} not in declared arrow set")
        return a

    def codes(self, *coords) -> np.ndarray:
        """Arrow codes at broadcast coordinate arrays."""
        arrs = np.broadcast_arrays(*[np.asarray(c, dtype=np.int64) for c in coords])
        out = np.empty(arrs[0].shape, dtype=np.int8)
        for idx in np.ndindex(out.shape):
            out[idx] = self.arrow(tuple(int(a[idx]) for a in arrs)).code
        return out

    def window_codes(self, window: Window) -> np.ndarray:
        for corner in (window.lo, window.hi):
            if not self.contains(corner):
                raise DomainError(f"window corner {corner} outside the field")
        return self.codes(*np.ix_(*window.axes()))

    def rebased(self, x) -> "ArrowField":
        return RebasedField(self, check_site(x))


class RebasedField(ArrowField):
    """The field seen from ``offset``: ``alpha'(z) = alpha(z + offset)``."""

    def __init__(self, base: ArrowField, offset: tuple):
        self.base = base
        self.offset = offset
        self.d = base.d
        self.arrow_set = base.arrow_set
        self.spec = base.spec

    def contains(self, site):
        return self.base.contains(tuple(a + b for a, b in zip(site, self.offset)))

    def _code(self, site):
        return self.base.arrow(tuple(a + b for a, b in zip(site, self.offset))).code

    def codes(self, *coords):
        return self.base.codes(*[np.asarray(c) + o for c, o in zip(coords, self.offset)])


class GridField(ArrowField):
    """Arrow field stored as a code array over a finite box.

    ``lo`` is the lower corner; ``codes[i, j]`` is the arrow at
    ``(lo[0] + i, lo[1] + j)``.
    """

    def __init__(self, lo, codes: np.ndarray, arrow_set=None):
        self.lo = check_site(lo)
        self.grid_codes = np.asarray(codes, dtype=np.int8)
        self.d = self.grid_codes.ndim
        if len(self.lo) != self.d:
            raise ValueError("corner and code array differ in dimension")
        if arrow_set is None:
            arrow_set = tuple(Direction.from_code(c) for c in np.unique(self.grid_codes))
        self.arrow_set = tuple(arrow_set)

    @classmethod
    def from_window(cls, window: Window, codes, arrow_set=None) -> "GridField":
        return cls(window.lo, codes, arrow_set)

    @property
    def shape(self):
        return self.grid_codes.shape

    def contains(self, site):
        return len(site) == self.d and all(
            0 <= c - l < s for c, l, s in zip(site, self.lo, self.shape))

    def _code(self, site):
        return int(self.grid_codes[tuple(c - l for c, l in zip(site, self.lo))])

    def codes(self, *coords):
        idx = [np.asarray(c, dtype=np.int64) - l for c, l in zip(coords, self.lo)]
        for i, s in zip(idx, self.shape):
            if np.any(i < 0) or np.any(i >= s):
                raise DomainError("query outside the stored box")
        return self.grid_codes[tuple(idx)]


# -- trajectories ----------------------------------------------------------

@dataclass
class Trajectory:
    """A finite walk: its start site and the codes of its steps.

    ``runs`` optionally records the same steps run-length encoded as
    ``(code, length)`` pairs; generators that produce very long straight
    stretches fill it so downstream statistics can skip per-step work.
    """

    start: tuple
    steps: np.ndarray
    runs: Optional[list] = field(default=None, repr=False)

    def __post_init__(self):
        self.start = check_site(self.start)
        self.steps = np.asarray(self.steps, dtype=np.int8)

    @classmethod
    def from_runs(cls, start, runs) -> "Trajectory":
        runs = [(int(c), int(n)) for c, n in runs if n > 0]
        if runs:
            codes, lengths = zip(*runs)
            steps = np.repeat(np.array(codes, dtype=np.int8), lengths)
        else:
            steps = np.zeros(0, dtype=np.int8)
        return cls(start, steps, runs)

    @property
    def d(self) -> int:
        return len(self.start)

    def __len__(self):
        return len(self.steps)

    def direction(self, k: int) -> Direction:
        return Direction.from_code(self.steps[k])

    def counts(self, n: Optional[int] = None) -> np.ndarray:
        """Number of steps of each direction code among the first ``n``."""
        n = len(self) if n is None else n
        return np.bincount(self.steps[:n], minlength=2 * self.d)

    def displacement(self, n: Optional[int] = None) -> tuple:
        c = self.counts(n)
        return tuple(int(c[2 * a] - c[2 * a + 1]) for a in range(self.d))

    def site(self, n: int) -> tuple:
        return tuple(s + dx for s, dx in zip(self.start, self.displacement(n)))

    def sites(self) -> np.ndarray:
        """All visited sites as an ``(len+1, d)`` int64 array."""
        V = code_vectors(self.d)
        out = np.zeros((len(self) + 1, self.d), dtype=np.int64)
        np.cumsum(V[self.steps], axis=0, out=out[1:])
        return out + np.array(self.start, dtype=np.int64)

    def displacement_series(self, checkpoints: Sequence[int]) -> np.ndarray:
        """Displacements at increasing ``checkpoints`` in one pass."""
        V = code_vectors(self.d)
        out = np.zeros((len(checkpoints), self.d), dtype=np.int64)
        acc = np.zeros(2 * self.d, dtype=np.int64)
        prev = 0
        for i, n in enumerate(checkpoints):
            if n < prev:
                raise ValueError("checkpoints must be non-decreasing")
            acc += np.bincount(self.steps[prev:n], minlength=2 * self.d)
            out[i] = acc @ V
            prev = n
        return out

    def segment(self, i: int, j: int) -> "Trajectory":
        return Trajectory(self.site(i), self.steps[i:j])


def step(field: ArrowField, x) -> tuple:
    """``x + alpha(x)``."""
    x = check_site(x)
    return add(x, field.arrow(x))


def trace(field: ArrowField, x, n: int) -> Trajectory:
    """Follow the arrows from ``x`` for ``n`` steps."""
    if n < 0:
        raise ValueError("n must be >= 0")
    x = check_site(x)
    fast = getattr(field, "trace_runs", None)
    if fast is not None:
        return Trajectory.from_runs(x, fast(x, n))
    steps = np.empty(n, dtype=np.int8)
    cur = x
    for k in range(n):
        try:
            a = field.arrow(cur)
        except DomainError as exc:
            raise TraceError(f"walk left the field after {k} steps: {exc}",
                             Trajectory(x, steps[:k].copy())) from exc
        steps[k] = a.code
        cur = add(cur, a)
    return Trajectory(x, steps)


@dataclass(frozen=True)
class MeetRecord:
    s: int
    t: int
    site: tuple


def coalesce_time(field: ArrowField, x, y, horizon: int, verify: int = 100):
    """Least ``(s, t)`` with ``X_x(s) = X_y(t)`` and ``s, t <= horizon``.

    For directed fields the walks advance in lockstep by level (coordinate
    sum), so only the current pair of sites is kept.  Otherwise the forward
    orbit of ``x`` is stored.  After a meeting both walks are continued
    independently for ``verify`` more steps and must agree.
    """
    if horizon <= 0:
        raise ValueError("horizon must be positive")
    x, y = check_site(x), check_site(y)
    if x == y:
        raise ValueError("x and y must differ")
    rec = None
    if field.directed:
        a, b, s, t = x, y, 0, 0
        while s <= horizon and t <= horizon:
            if a == b:
                rec = MeetRecord(s, t, a)
                break
            if sum(a) <= sum(b):
                if s == horizon:
                    break
                a, s = step(field, a), s + 1
            else:
                if t == horizon:
                    break
                b, t = step(field, b), t + 1
    else:
        seen = {}
        a = x
        for s in range(horizon + 1):
            seen.setdefault(a, s)
            if s < horizon:
                a = step(field, a)
        b = y
        best = None
        for t in range(horizon + 1):
            if b in seen:
                best = (seen[b], t, b)
                break
            if t < horizon:
                b = step(field, b)
        if best is not None:
            rec = MeetRecord(*best)
    if rec is not None and verify > 0:
        ta = trace(field, x, rec.s + verify)
        tb = trace(field, y, rec.t + verify)
        if not np.array_equal(ta.steps[rec.s:], tb.steps[rec.t:]):
            raise AssertionError("walks separated after meeting")
    return rec


def line_crossings(traj: Trajectory, axis: int = 0) -> dict:
    """Visits per hyperplane ``{z : z[axis] = c}`` along the walk."""
    col = traj.sites()[:, axis]
    values, counts = np.unique(col, return_counts=True)
    return dict(zip(values.tolist(), counts.tolist()))


# -- ARROWS v1 text format -------------------------------------------------

_CHAR_CODE = {"E": 0, "W": 1, "N": 2, "S": 3}


def format_arrows(field: ArrowField, window: Window) -> str:
    if window.d != 2:
        raise ValueError("ARROWS v1 is two-dimensional")
    codes = field.window_codes(window)
    (x0, y0), (w, h) = window.lo, window.shape
    lines = [f"ARROWS v1 d=2 x0={x0} y0={y0} w={w} h={h}"]
    for j in range(h - 1, -1, -1):
        lines.append("".join(_LETTERS[c] for c in codes[:, j]))
    return "\n".join(lines) + "\n"


def parse_arrows(text: str) -> GridField:
    lines = [l for l in text.splitlines() if not l.startswith("#")]
    if not lines:
        raise ValueError("empty ARROWS input")
    head = lines[0].split()
    if head[:3] != ["ARROWS", "v1", "d=2"] or len(head) != 7:
        raise ValueError(f"bad ARROWS header: {lines[0]!r}")
    vals = {}
    for tok, key in zip(head[3:], ("x0", "y0", "w", "h")):
        k, sep, v = tok.partition("=")
        if k != key or not sep:
            raise ValueError(f"bad header field {tok!r}")
        vals[k] = int(v)
    w, h = vals["w"], vals["h"]
    rows = lines[1:]
    if len(rows) != h or any(len(r) != w for r in rows):
        raise ValueError("ARROWS body does not match declared w x h")
    codes = np.empty((w, h), dtype=np.int8)
    for r, row in enumerate(rows):
        for i, ch in enumerate(row):
            if ch not in _CHAR_CODE:
                raise ValueError(f"invalid arrow character {ch!r}")
            codes[i, h - 1 - r] = _CHAR_CODE[ch]
    return GridField((vals["x0"], vals["y0"]), codes)
