import math

import numpy as np
import pytest

from arrowlab.entropy import (BlockHistogram, block_entropy_2d, block_histogram,
                              information_function, trajectory_entropy)
from arrowlab.fields import ConstantField, IIDField, Periodic2Field
from arrowlab.lattice import E, Trajectory, Window, trace

LOG2 = math.log(2)


def test_constant_zero():
    e = block_entropy_2d(ConstantField(E), Window.rect(20), 3, 5000, 1)
    assert e.H_raw == 0.0 and e.H_mm == 0.0


@pytest.mark.parametrize("L", [1, 2, 3, 5])
def test_periodic_at_most_two_patterns(L):
    e = block_entropy_2d(Periodic2Field(0), Window.rect(20), L, 20000, 2)
    assert len(e.histogram.counts) == 2
    assert e.per_site <= LOG2 / L ** 2 + 1e-12


def test_iid_near_log2_and_bounds():
    w = Window.rect(100)
    for L in (1, 2, 3):
        e = block_entropy_2d(IIDField(0.5, 3), w, L, 50000, 4)
        assert 0.9 * LOG2 <= e.per_site <= LOG2 + 1e-12


def test_entropy_non_increasing_in_L():
    w = Window.rect(150)
    est = [block_entropy_2d(IIDField(0.3, 3), w, L, 100000, 5) for L in (1, 2, 3)]
    for a, b in zip(est, est[1:]):
        sd = b.histogram.bootstrap_sd(50, 0) / b.L ** 2
        assert b.per_site <= a.per_site + 3 * sd + 1e-9


def test_threads_do_not_change_counts():
    f = IIDField(0.5, 1)
    a = block_histogram(f, (2, 2), Window.rect(50), 200000, 3)
    b = block_histogram(f, (2, 2), Window.rect(50), 200000, 3, threads=4)
    assert a.counts == b.counts and a.total == 200000


def test_merge_is_order_free():
    f = IIDField(0.5, 1)
    parts = [block_histogram(f, (2, 1), Window.rect(20), 1000, s) for s in range(3)]
    ab = parts[0].merge(parts[1]).merge(parts[2])
    ba = parts[2].merge(parts[0]).merge(parts[1])
    assert ab.counts == ba.counts and ab.total == 3000
    with pytest.raises(ValueError):
        parts[0].merge(BlockHistogram((1, 1)))


def test_block_must_fit():
    with pytest.raises(ValueError):
        block_entropy_2d(IIDField(0.5, 1), Window.rect(2), 6, 10, 0)


def test_information_function():
    R = Window((0, 0), (1, 1))  # 3 x 3 block around the origin
    assert information_function(ConstantField(E), R, Window.rect(30), 2000, 0) == 0.0
    R2 = Window((0, 0), (1, 1))
    hp = block_histogram(Periodic2Field(0), (2, 2), Window.rect(30), 20000, 0)
    for pat in hp.counts:
        f = information_function(Periodic2Field(0), R2, Window.rect(30), 0, 0, pattern=pat, hist=hp)
        assert abs(f - LOG2) < 0.02
    hi = block_histogram(IIDField(0.5, 2), (2, 2), Window.rect(200), 400000, 0)
    vals = [information_function(None, R2, None, 0, 0, pattern=p, hist=hi) for p in range(16)]
    assert max(abs(v - 4 * LOG2) for v in vals) < 0.05
    assert information_function(None, R2, None, 0, 0, pattern=99, hist=hi) == 0.0


def test_trajectory_entropy():
    assert trajectory_entropy(trace(Periodic2Field(0), (0, 0), 1000), 4) <= LOG2 / 4
    assert trajectory_entropy(trace(ConstantField(E), (0, 0), 100), 3) == 0.0
    h = trajectory_entropy(trace(IIDField(0.5, 3), (0, 0), 200000), 6)
    assert abs(h - LOG2) < 0.01
    with pytest.raises(ValueError):
        trajectory_entropy(Trajectory((0, 0), np.zeros(2, dtype=np.int8)), 3)
