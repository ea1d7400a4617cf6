"""Seeded arrow-field generators and their text serialization.

A :class:`FieldSpec` names a generator and its parameters; :func:`make_field`
turns it into an :class:`~arrowlab.lattice.ArrowField`.  The serialized form
is a flat ``key=value`` block, one pair per line::

    kind=iid
    p=0.5
    seed=42
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .lattice import (ArrowField, Direction, DIRECTED_2D, DomainError, E, N,
                      check_site)
from .rng import derive_seed, hash_key, uniform_np

KINDS = ("constant", "iid", "periodic2", "cutstack-product",
         "plane-product-z3", "lpp-geodesic", "constructed-weights")

# Parameters accepted per kind (besides kind and seed).
_PARAMS = {
    "constant": {"arrow"},
    "iid": {"p"},
    "periodic2": {"phase"},
    "cutstack-product": {"n", "m"},
    "plane-product-z3": {"inner"},
    "lpp-geodesic": {"weights", "window", "target", "mode"},
    "constructed-weights": {"n", "m", "variant", "window", "target"},
}


@dataclass(frozen=True)
class FieldSpec:
    kind: str
    params: dict = field(default_factory=dict)
    seed: int = 0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown field kind {self.kind!r}")
        unknown = set(self.params) - _PARAMS[self.kind]
        if unknown:
            raise ValueError(f"unknown parameter(s) for {self.kind}: {sorted(unknown)}")
        if self.kind == "iid":
            p = float(self.params.get("p", 0.5))
            if not 0.0 <= p <= 1.0:
                raise ValueError(f"p={p} outside [0, 1]")
        if self.kind == "periodic2" and int(self.params.get("phase", 0)) not in (0, 1):
            raise ValueError("phase must be 0 or 1")
        if self.kind in ("cutstack-product", "constructed-weights"):
            for key in ("n", "m"):
                seq = self.params.get(key)
                if seq is not None:
                    _check_cuts(_as_cuts(seq))

    def __hash__(self):
        return hash(self.to_text())

    def to_text(self) -> str:
        lines = [f"kind={self.kind}"]
        for k in sorted(self.params):
            v = self.params[k]
            if isinstance(v, FieldSpec):
                lines += [f"{k}.{line}" for line in v.to_text().splitlines()]
                continue
            if isinstance(v, (tuple, list)):
                v = ",".join(str(x) for x in v)
            lines.append(f"{k}={v}")
        lines.append(f"seed={self.seed}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "FieldSpec":
        pairs = {}
        for raw in text.replace(";", "\n").splitlines():
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            key, sep, value = line.partition("=")
            if not sep:
                raise ValueError(f"expected key=value, got {line!r}")
            # nested spec for plane products: inner.kind=..., inner.p=...
            pairs[key.strip()] = value.strip()
        return cls.from_pairs(pairs)

    @classmethod
    def from_pairs(cls, pairs: dict) -> "FieldSpec":
        pairs = dict(pairs)
        kind = pairs.pop("kind", None)
        if kind is None:
            raise ValueError("missing kind=")
        seed = int(pairs.pop("seed", 0))
        inner = {k[6:]: v for k, v in pairs.items() if k.startswith("inner.")}
        params = {k: v for k, v in pairs.items() if not k.startswith("inner.")}
        if inner:
            params["inner"] = cls.from_pairs(inner)
        for key in ("n", "m", "window", "target"):
            if key in params and isinstance(params[key], str):
                params[key] = tuple(int(x) for x in params[key].split(","))
        if "p" in params:
            params["p"] = float(params["p"])
        if "phase" in params:
            params["phase"] = int(params["phase"])
        return cls(kind, params, seed)


def _as_cuts(seq):
    if isinstance(seq, str):
        seq = seq.split(",")
    return tuple(int(x) for x in seq)


def _check_cuts(cuts):
    for i, c in enumerate(cuts, start=1):
        if c < max(2, i * i):
            raise ValueError(f"cut n_{i}={c} violates n_i >= max(2, i^2)")


# -- generators ------------------------------------------------------------

class ConstantField(ArrowField):
    def __init__(self, arrow: Direction = E, d: int = 2):
        self.d = d
        self.value = arrow
        self.arrow_set = (arrow,)
        self.spec = FieldSpec("constant", {"arrow": arrow.letter})

    def _code(self, site):
        return self.value.code

    def codes(self, *coords):
        shape = np.broadcast_shapes(*(np.shape(c) for c in coords))
        return np.full(shape, self.value.code, dtype=np.int8)


class IIDField(ArrowField):
    """Independent arrows: ``e1`` with probability ``p``, else ``e2``.

    The arrow at ``z`` is ``uniform(seed, z) < p`` so it depends on nothing
    but the seed and the site.
    """

    arrow_set = DIRECTED_2D

    def __init__(self, p: float, seed: int):
        if not 0.0 <= p <= 1.0:
            raise ValueError(f"p={p} outside [0, 1]")
        self.p = float(p)
        self.seed = int(seed)
        self.spec = FieldSpec("iid", {"p": self.p}, self.seed)

    def _code(self, site):
        u = (hash_key(self.seed, *site) >> 11) * (1.0 / (1 << 53))
        return E.code if u < self.p else N.code

    def codes(self, *coords):
        u = uniform_np(self.seed, *coords)
        return np.where(u < self.p, E.code, N.code).astype(np.int8)


class Periodic2Field(ArrowField):
    """Checkerboard: ``e1`` where ``x + y + phase`` is even, else ``e2``."""

    arrow_set = DIRECTED_2D

    def __init__(self, phase: int = 0):
        if phase not in (0, 1):
            raise ValueError("phase must be 0 or 1")
        self.phase = phase
        self.spec = FieldSpec("periodic2", {"phase": phase})

    def _code(self, site):
        return E.code if (site[0] + site[1] + self.phase) % 2 == 0 else N.code

    def codes(self, x, y):
        even = (np.asarray(x) + np.asarray(y) + self.phase) % 2 == 0
        return np.where(even, E.code, N.code).astype(np.int8)


def plane_seed(seed: int, plane: int) -> int:
    """Seed of plane ``z3 = plane``: ``hash_key(seed, 0x5EED, plane)``."""
    return derive_seed(seed, plane)


class PlaneProductField(ArrowField):
    """Stack of independent 2-d fields, one per plane ``z3 = c``."""

    d = 3
    arrow_set = DIRECTED_2D

    def __init__(self, inner: FieldSpec, seed: int):
        probe = make_field(inner)
        if probe.d != 2 or not set(probe.arrow_set) <= set(DIRECTED_2D):
            raise ValueError("inner field must be directed and two-dimensional")
        self.inner = inner
        self.seed = int(seed)
        self.spec = FieldSpec("plane-product-z3", {"inner": inner}, self.seed)
        self._planes = {}

    def plane(self, c: int) -> ArrowField:
        f = self._planes.get(c)
        if f is None:
            spec = FieldSpec(self.inner.kind, dict(self.inner.params),
                             plane_seed(self.seed, c))
            f = self._planes[c] = make_field(spec)
        return f

    def _code(self, site):
        return self.plane(site[2]).arrow(site[:2]).code

    def codes(self, x, y, z):
        x, y, z = np.broadcast_arrays(*(np.asarray(a, dtype=np.int64) for a in (x, y, z)))
        out = np.empty(x.shape, dtype=np.int8)
        for c in np.unique(z):
            sel = z == c
            out[sel] = self.plane(int(c)).codes(x[sel], y[sel])
        return out

    def trace_runs(self, x, n):
        inner = self.plane(x[2])
        if hasattr(inner, "trace_runs"):
            return inner.trace_runs(x[:2], n)
        from .lattice import trace
        t = trace(inner, x[:2], n)
        return [(int(c), 1) for c in t.steps]


def make_iid(p: float, seed: int) -> IIDField:
    return IIDField(p, seed)


def make_periodic2(phase: int = 0) -> Periodic2Field:
    return Periodic2Field(phase)


def make_constant(arrow: Direction = E, d: int = 2) -> ConstantField:
    return ConstantField(arrow, d)


def make_plane_product_z3(inner: FieldSpec, seed: int) -> PlaneProductField:
    return PlaneProductField(inner, seed)


_LETTER = {"E": E, "N": N, "W": Direction(0, -1), "S": Direction(1, -1),
           "U": Direction(2, 1), "D": Direction(2, -1)}


def make_field(spec: FieldSpec) -> ArrowField:
    k, p = spec.kind, spec.params
    if k == "constant":
        a = p.get("arrow", "E")
        return ConstantField(_LETTER[a] if isinstance(a, str) else a)
    if k == "iid":
        return IIDField(float(p.get("p", 0.5)), spec.seed)
    if k == "periodic2":
        return Periodic2Field(int(p.get("phase", 0)))
    if k == "plane-product-z3":
        inner = p.get("inner")
        if inner is None:
            raise ValueError("plane-product-z3 needs an inner spec")
        return PlaneProductField(inner, spec.seed)
    if k == "cutstack-product":
        from .cutstack import StackSpec, product_field
        n = StackSpec(_as_cuts(p["n"])) if "n" in p else None
        m = StackSpec(_as_cuts(p["m"])) if "m" in p else None
        return product_field(n, m, spec.seed)
    if k == "lpp-geodesic":
        from .percolation import lpp_geodesic_field
        return lpp_geodesic_field(spec)
    if k == "constructed-weights":
        from .percolation import constructed_geodesic_field
        return constructed_geodesic_field(spec)
    raise ValueError(f"unknown field kind {k!r}")


__all__ = ["FieldSpec", "KINDS", "ConstantField", "IIDField", "Periodic2Field",
           "PlaneProductField", "make_field", "make_iid", "make_periodic2",
           "make_constant", "make_plane_product_z3", "plane_seed", "check_site",
           "DomainError"]
