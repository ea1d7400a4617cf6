"""Block-entropy and information-function estimators.

Patterns are encoded as integers: each arrow is replaced by its index in the
field's arrow set and a block of ``k`` sites becomes a base-``|A|`` number
(row-major over the block).  Histograms are plain ``{pattern: count}`` maps
so shards merge by adding counts.
"""

from __future__ import annotations

import math
from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .lattice import Trajectory, Window
from .rng import derive_seed

SHARD = 1 << 16


@dataclass
class BlockHistogram:
    shape: tuple
    counts: Counter = field(default_factory=Counter)

    @property
    def total(self) -> int:
        return sum(self.counts.values())

    def merge(self, other: "BlockHistogram") -> "BlockHistogram":
        if other.shape != self.shape:
            raise ValueError("cannot merge histograms of different block shapes")
        return BlockHistogram(self.shape, self.counts + other.counts)

    def probabilities(self) -> np.ndarray:
        c = np.array(sorted(self.counts.values()), dtype=np.float64)
        return c / c.sum()

    def probability(self, pattern) -> float:
        n = self.total
        return self.counts.get(pattern, 0) / n if n else 0.0

    def entropy(self) -> float:
        """Plug-in Shannon entropy in nats."""
        p = self.probabilities()
        return float(-(p * np.log(p)).sum()) + 0.0 if p.size else 0.0

    def miller_madow(self) -> float:
        n = self.total
        return self.entropy() + (len(self.counts) - 1) / (2 * n) if n else 0.0

    def bootstrap_sd(self, reps: int = 200, seed: int = 0) -> float:
        """Spread of the plug-in entropy under multinomial resampling."""
        p = self.probabilities()
        n = self.total
        rng = np.random.default_rng(seed)
        hs = np.empty(reps)
        for r in range(reps):
            c = rng.multinomial(n, p)
            q = c[c > 0] / n
            hs[r] = -(q * np.log(q)).sum()
        return float(hs.std(ddof=1)) if reps > 1 else 0.0


@dataclass
class EntropyEstimate:
    L: int
    samples: int
    H_raw: float
    H_mm: float
    histogram: BlockHistogram

    @property
    def per_site(self) -> float:
        return self.H_raw / self.L ** 2

    @property
    def per_site_mm(self) -> float:
        return self.H_mm / self.L ** 2

    def csv_row(self) -> str:
        return f"{self.L},{self.samples},{float(self.H_raw)!r},{float(self.H_mm)!r},{float(self.per_site)!r}"


CSV_HEADER = "L,samples,H_raw,H_mm,per_site"


def _symbol_table(field, codes: np.ndarray):
    alphabet = sorted({a.code for a in field.arrow_set} | set(np.unique(codes).tolist()))
    table = np.full(8, -1, dtype=np.int64)
    table[alphabet] = np.arange(len(alphabet))
    return table, len(alphabet)


def _encode(sym: np.ndarray, base: int, offsets, shape, positions) -> list:
    """Pattern ids of the blocks whose lower corners are ``positions``."""
    k = int(np.prod(shape))
    if base ** k < (1 << 62):
        ids = np.zeros(len(positions[0]), dtype=np.int64)
        for off in offsets:
            ids = ids * base + sym[tuple(p + o for p, o in zip(positions, off))]
        return ids
    cols = np.stack([sym[tuple(p + o for p, o in zip(positions, off))] for off in offsets], axis=1)
    return [bytes(r) for r in cols.astype(np.uint8)]


def block_histogram(field, shape, window: Window, samples: int, seed: int,
                    threads: int = 1) -> BlockHistogram:
    """Histogram of block patterns at uniformly drawn positions in ``window``.

    Positions are drawn with replacement, in shards of fixed size with their
    own derived seeds, so the result does not depend on ``threads``.
    """
    shape = tuple(int(s) for s in shape)
    if samples < 1:
        raise ValueError("samples must be >= 1")
    if len(shape) != window.d or any(s < 1 for s in shape):
        raise ValueError("bad block shape")
    if any(s > w for s, w in zip(shape, window.shape)):
        raise ValueError(f"block {shape} does not fit in window {window.shape}")
    codes = field.window_codes(window)
    table, base = _symbol_table(field, codes)
    sym = table[codes]
    offsets = list(np.ndindex(*shape))
    span = [w - s + 1 for w, s in zip(window.shape, shape)]

    def shard(k):
        n = min(SHARD, samples - k * SHARD)
        rng = np.random.default_rng(derive_seed(seed, k))
        pos = [rng.integers(0, m, size=n) for m in span]
        ids = _encode(sym, base, offsets, shape, pos)
        if isinstance(ids, np.ndarray):
            u, c = np.unique(ids, return_counts=True)
            return Counter(dict(zip(u.tolist(), c.tolist())))
        return Counter(ids)

    nshard = -(-samples // SHARD)
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            parts = list(ex.map(shard, range(nshard)))
    else:
        parts = [shard(k) for k in range(nshard)]
    total = Counter()
    for p in parts:
        total.update(p)
    return BlockHistogram(shape, total)


def block_entropy_2d(field, window: Window, L: int, samples: int, seed: int,
                     threads: int = 1) -> EntropyEstimate:
    if L < 1:
        raise ValueError("L must be >= 1")
    if window.d != 2:
        raise ValueError("block_entropy_2d needs a two-dimensional window")
    h = block_histogram(field, (L, L), window, samples, seed, threads)
    return EntropyEstimate(L, samples, h.entropy(), h.miller_madow(), h)


def pattern_id(field, region: Window, codes: Optional[np.ndarray] = None):
    """Id of the field's pattern on ``region`` in the encoding used above."""
    codes = field.window_codes(region) if codes is None else codes
    table, base = _symbol_table(field, codes)
    sym = table[codes]
    pos = [np.zeros(1, dtype=np.int64)] * region.d
    ids = _encode(sym, base, list(np.ndindex(*region.shape)), region.shape, pos)
    return int(ids[0]) if isinstance(ids, np.ndarray) else ids[0]


def information_function(field, region: Window, sample_window: Window, samples: int,
                         seed: int, pattern=None, hist: Optional[BlockHistogram] = None) -> float:
    """``-log`` of the empirical frequency of a pattern on ``region``'s shape.

    ``pattern`` defaults to what the field shows on ``region`` itself.  An
    unobserved pattern gives 0.
    """
    if hist is None:
        hist = block_histogram(field, region.shape, sample_window, samples, seed)
    if pattern is None:
        pattern = pattern_id(field, region)
    p = hist.probability(pattern)
    return -math.log(p) if p > 0 else 0.0


def word_histogram(traj: Trajectory, L: int) -> BlockHistogram:
    n = len(traj)
    if L < 1:
        raise ValueError("L must be >= 1")
    if n < L:
        raise ValueError(f"trajectory of length {n} is shorter than L={L}")
    s = traj.steps.astype(np.int64)
    if 6 ** L < (1 << 62):
        ids = np.zeros(n - L + 1, dtype=np.int64)
        for k in range(L):
            ids = ids * 6 + s[k:n - L + 1 + k]
        u, c = np.unique(ids, return_counts=True)
        return BlockHistogram((L,), Counter(dict(zip(u.tolist(), c.tolist()))))
    words = np.lib.stride_tricks.sliding_window_view(traj.steps, L)
    return BlockHistogram((L,), Counter(bytes(w) for w in words.astype(np.uint8)))


def trajectory_entropy(traj: Trajectory, L: int) -> float:
    """Plug-in word entropy of the step sequence, per symbol."""
    return word_histogram(traj, L).entropy() / L
