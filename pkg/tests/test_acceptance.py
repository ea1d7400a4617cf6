"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Run with ``pytest -v -s tests/test_acceptance.py`` (the lines are printed
regardless of capture) or ``python3 tests/test_acceptance.py``.
"""

import math
import sys
import time
from fractions import Fraction
from itertools import combinations

import numpy as np
import pytest

from arrowlab.analysis import (cataclysmic_points, coalescence_fraction, direction_estimate,
                               pairs_within, past_length, pn_density_profile, walk_roots,
                               ancestry_dag)
from arrowlab.cutstack import (StackSpec, find_good_seed, in_G, travel_steps,
                               travel_threshold, verify_reach_again, verify_reach_when)
from arrowlab.entropy import block_entropy_2d
from arrowlab.fields import ConstantField, FieldSpec, IIDField, Periodic2Field, PlaneProductField
from arrowlab.lattice import Trajectory, Window, coalesce_time, trace
from arrowlab.percolation import (ConstructedWeights, IIDWeights, block_oscillation,
                                  brute_force_passage, geodesic_tree, geometric_checkpoints,
                                  hoffman_trace, passage_dp, path_weight, tree_path,
                                  verify_geodesic)

ORBIT_STEPS = 30_000_000


def _emit(k, ok, detail):
    line = f"{'PASS' if ok else 'FAIL'} criterion {k}: {detail}"
    sys.__stdout__.write(line + "\n")
    sys.__stdout__.flush()


@pytest.fixture
def report(capsys):
    def emit(k, ok, detail):
        with capsys.disabled():
            _emit(k, ok, detail)
    return emit


@pytest.fixture(scope="module")
def orbit():
    """The base point in G_3 x G^_3 and its walk of ``ORBIT_STEPS`` steps."""
    seed, f = find_good_seed(3)
    attempts = seed + 1  # seeds are tried from 0 upwards
    runs = f.trace_runs((0, 0), ORBIT_STEPS)
    return attempts, f, Trajectory.from_runs((0, 0), runs)


def _checkpoints(f):
    nspec, mspec = f.x.spec, f.y.spec
    vert = travel_threshold(mspec, nspec, 3, 3)
    horiz = travel_threshold(nspec, mspec, 3, 2)
    return vert, horiz


def _ratios(traj, vert_steps, horiz_steps, origin=(0, 0)):
    dx, dy = (c - o for c, o in zip(traj.site(vert_steps)[:2], origin))
    ba = dy / dx if dx else math.inf
    dx, dy = (c - o for c, o in zip(traj.site(horiz_steps)[:2], origin))
    ab = dx / dy if dy else math.inf
    return ba, ab


# -- 1 ---------------------------------------------------------------------

def test_criterion_1_lemma_verification(report):
    t0 = time.time()
    specs = [StackSpec((2, 2)), StackSpec((2, 2, 2)), StackSpec((3, 3)), StackSpec((4, 4))]
    ok = True
    for s in specs:
        rw = verify_reach_when(s, 2)
        ra = verify_reach_again(s, 2)
        ok &= rw.passed and ra.passed
        ok &= rw.bound == (s.n(1) + 1) * (s.n(2) + 1)
    dt = time.time() - t0
    ok &= dt < 10
    report(1, ok, f"reach_when r=2 and reach_again i=2 on {len(specs)} specs, {dt:.2f} s")
    assert ok


# -- 2 ---------------------------------------------------------------------

def test_criterion_2_coalescence_side(report):
    t0 = time.time()
    W = Window.rect(400)
    pairs = pairs_within(W, W.lo, 10)
    hits = 0
    interior = []
    for s in range(20):
        f = IIDField(0.5, s)
        hits += coalescence_fraction(f, W, pairs, walk_roots(f, W)) * len(pairs)
        prof = pn_density_profile(f, W, 100, past_length(f, W))
        interior.append(prof.interior)
    frac = hits / (20 * len(pairs))
    dens = np.mean(interior, axis=0)
    decreasing = bool(np.all(np.diff(dens[10:101]) < 0))
    dt = time.time() - t0
    ok = frac >= 0.95 and decreasing and dens[50] < 0.2 and dt < 60
    report(2, ok, f"coalesced fraction {frac:.4f} over {20 * len(pairs)} pairs; "
                  f"interior P_n density {dens[10]:.4f} -> {dens[50]:.4f} -> {dens[100]:.4f}, "
                  f"strictly decreasing={decreasing}, {dt:.1f} s")
    assert ok


# -- 3 ---------------------------------------------------------------------

def test_criterion_3_bi_infinite_side(report):
    t0 = time.time()
    f = Periodic2Field(0)
    W = Window.rect(50)
    pl = past_length(f, W)
    prof = pn_density_profile(f, W, 40, pl)
    dens_ok = bool(np.all(prof.interior == 1.0))
    dag = ancestry_dag(f, W)
    counts = [len(cataclysmic_points(f, W, n, pl, dag)) for n in range(1, 2 * sum(W.shape))]
    cat_ok = max(counts) == 0
    dir_ok = True
    for start in [(0, 0), (1, 0), (0, 1), (-7, 12), (30, -5)]:
        est = direction_estimate(trace(f, start, 1000), np.arange(2, 1001, 2))
        dir_ok &= bool(np.all(est.series == 0.5))
    dt = time.time() - t0
    ok = dens_ok and cat_ok and dir_ok and dt < 1
    report(3, ok, f"interior P_n density 1.0 for n<=40: {dens_ok}; cataclysmic sets empty for "
                  f"{len(counts)} thresholds: {cat_ok}; direction (0.5, 0.5) at even n: {dir_ok}; "
                  f"{dt:.2f} s")
    assert ok


# -- 4 ---------------------------------------------------------------------

def test_criterion_4_no_asymptotic_direction(report, orbit):
    t0 = time.time()
    attempts, f, traj = orbit
    (tv, gv), (th, gh) = _checkpoints(f)
    # thresholds recomputed from the travel formulas
    nspec, mspec = f.x.spec, f.y.spec
    assert tv == math.floor(mspec.product(2) * (Fraction(mspec.n(3), 9) - 1))
    assert th == math.floor(nspec.product(2) * (Fraction(nspec.n(3), 9) - 1))
    assert gv > 20 and gh > 20
    ba, ab = _ratios(traj, tv, th)
    dt = time.time() - t0
    ok = ba > 20 and ab > 20 and f.x.in_G(3) and f.y.in_G(3)
    report(4, ok, f"seed found after {attempts} attempt(s); b/a={ba:.2f} at n={tv}, "
                  f"a/b={ab:.2f} at n={th} (guaranteed {float(gv):.1f}, {float(gh):.1f}), "
                  f"{dt:.2f} s after tracing")
    assert ok


# -- 5 ---------------------------------------------------------------------

def test_criterion_5_constructed_geodesy(report, orbit):
    t0 = time.time()
    _, f, traj = orbit
    w = ConstructedWeights(f, "w")
    rep = verify_geodesic(w, traj, rng_seed=0, count=100, max_len=200)
    # exhaustive cross-check: every short segment starting in the first 1000
    # steps or within 30 steps of a turn
    turns = np.cumsum([n for _, n in traj.runs])[:-1]
    starts = set(range(1000))
    for b in turns:
        starts |= set(range(max(0, int(b) - 30), int(b) + 30))
    segs = [(i, i + L) for i in sorted(starts) for L in range(1, 13) if i + L <= len(traj)]
    mismatches = 0
    pos = traj.site(0)
    prev = 0
    V = np.array([[1, 0], [-1, 0], [0, 1], [0, -1]])
    for i, j in segs:
        if i != prev:
            pos = tuple(p + d for p, d in zip(pos, np.bincount(traj.steps[prev:i], minlength=4) @ V))
            prev = i
        sites = Trajectory(pos, traj.steps[i:j]).sites()
        a, b = tuple(sites[0]), tuple(sites[-1])
        walk = path_weight(w.values(sites[:, 0], sites[:, 1]))
        box = w.box(a, b)
        if not (walk == brute_force_passage(box) == passage_dp(box, a, b).value[0, 0]):
            mismatches += 1
    dt = time.time() - t0
    ok = rep.passed and mismatches == 0 and dt < 60
    report(5, ok, f"{len(rep.violations)} violations on 100 random segments; "
                  f"{mismatches} mismatches on {len(segs)} short segments checked by enumeration; "
                  f"{dt:.1f} s")
    assert ok


# -- 6 ---------------------------------------------------------------------

def test_criterion_6_hoffman(report, orbit):
    t0 = time.time()
    _, f, traj = orbit
    nspec, mspec = f.x.spec, f.y.spec
    # 3/4 band: a run through the even spacer K_2 of x and the ascent that follows
    t34 = math.floor(travel_steps(mspec, 2)) + nspec.reach_when_bound(2)
    # 1/2 band: the long vertical travel through J-columns
    t12, _ = travel_threshold(mspec, nspec, 3, 3)
    h = hoffman_trace(ConstructedWeights(f, "what"), traj, [t34, t12])
    m34, m12 = float(h.mean[0]), float(h.mean[1])
    band_ok = 0.70 <= m34 <= 0.75 and 0.5 <= m12 <= 0.55

    W = Window.rect(400)
    good = 0
    for s in range(20):
        wts = IIDWeights("iid-exponential", s)
        tree = geodesic_tree(wts, W, W.hi, "max")
        path = tree_path(tree, W.lo)
        osc = block_oscillation(wts, path, geometric_checkpoints(len(path)))
        good += bool(osc[0] > osc[1] > osc[2])
    dt = time.time() - t0
    ok = band_ok and good >= 16 and dt < 300
    report(6, ok, f"constructed-what mean {m34:.4f} at n={t34}, {m12:.4f} at n={t12}; "
                  f"LPP deltas decreasing for {good}/20 seeds; {dt:.1f} s")
    assert ok


# -- 7 ---------------------------------------------------------------------

def test_criterion_7_entropy(report):
    t0 = time.time()
    W = Window.rect(500)
    iid = block_entropy_2d(IIDField(0.5, 7), W, 4, 10 ** 6, seed=1).per_site
    per = block_entropy_2d(Periodic2Field(0), W, 4, 10 ** 6, seed=1).per_site
    const = block_entropy_2d(ConstantField(), W, 4, 10 ** 6, seed=1).per_site
    dt = time.time() - t0
    ok = abs(iid - math.log(2)) <= 0.05 * math.log(2) and per <= 0.05 and const == 0 and dt < 30
    report(7, ok, f"per-site entropy iid {iid:.5f} (log 2 = {math.log(2):.5f}), "
                  f"periodic2 {per:.5f}, constant {const!r}; {dt:.1f} s")
    assert ok


# -- 8 ---------------------------------------------------------------------

def _good_start(plane, a, b):
    return (in_G(plane.x.spec, plane.x.shifted_address(a, 3), 3)
            and in_G(plane.y.spec, plane.y.shifted_address(b, 3), 3))


def test_criterion_8_plane_product(report):
    t0 = time.time()
    inner = FieldSpec("cutstack-product", {}, 0)
    planes = range(5)
    seed = next(s for s in range(100)
                if all(_good_start(PlaneProductField(inner, s).plane(c), 0, 0) for c in planes))
    F = PlaneProductField(inner, seed)
    offsets = [(i * 997, j * 991) for i in range(-3, 4) for j in range(-3, 4)]
    offsets.sort(key=lambda o: (abs(o[0]) + abs(o[1]), o))
    starts = []
    for c in planes:
        p = F.plane(c)
        starts += [(a, b, c) for a, b in offsets if _good_start(p, a, b)][:4]
    assert len(starts) == 20

    z_ok = osc_ok = True
    worst_ba = worst_ab = math.inf
    for x in starts:
        p = F.plane(x[2])
        (tv, _), (th, _) = _checkpoints(p)
        t = Trajectory.from_runs(x, F.trace_runs(x, ORBIT_STEPS))
        # the run-length walk agrees with plain step-by-step tracing
        z_ok &= bool(np.array_equal(t.steps[:500], trace(F, x, 500).steps))
        z_ok &= bool(np.count_nonzero(t.steps >= 4) == 0) and t.site(len(t))[2] == x[2]
        ba, ab = _ratios(t, tv, th, x[:2])
        worst_ba, worst_ab = min(worst_ba, ba), min(worst_ab, ab)
        osc_ok &= ba > 20 and ab > 20
        del t
    cross = [(x, y) for x, y in combinations(starts, 2) if x[2] != y[2]]
    met = sum(coalesce_time(F, x, y, 200) is not None for x, y in cross)
    dt = time.time() - t0
    ok = z_ok and met == 0 and osc_ok
    report(8, ok, f"plane seed {seed}; 20 starts on 5 planes, z constant: {z_ok}; "
                  f"{met} coalescences among {len(cross)} cross-plane pairs; "
                  f"min b/a {worst_ba:.2f}, min a/b {worst_ab:.2f}; {dt:.1f} s")
    assert ok


# -- 9 ---------------------------------------------------------------------

def test_criterion_9_dp_oracle(report):
    t0 = time.time()
    rng = np.random.default_rng(9)
    bad = 0
    for k in range(1000):
        a, b = (int(v) for v in rng.integers(1, 7, size=2))
        lo = tuple(int(v) for v in rng.integers(-1000, 1000, size=2))
        hi = (lo[0] + a - 1, lo[1] + b - 1)
        w = IIDWeights("iid-uniform", k)
        box = w.box(lo, hi)
        for mode in ("min", "max"):
            if passage_dp(w, lo, hi, mode).value[0, 0] != brute_force_passage(box, mode):
                bad += 1
    dt = time.time() - t0
    ok = bad == 0 and dt < 10
    report(9, ok, f"{bad} mismatches in 2000 DP/enumeration comparisons; {dt:.2f} s")
    assert ok


if __name__ == "__main__":
    sys.exit(pytest.main(["-v", "-s", __file__]))
