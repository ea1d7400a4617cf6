import math

import numpy as np
import pytest

from arrowlab.analysis import (AncestryCycleError, ancestry_dag, block_frequency,
                               cataclysm_csv, cataclysmic_points, coalescence_fraction,
                               direction_estimate, interior_mask, last_crossings,
                               pairs_within, past_length, pn_density_profile,
                               separating_set, svg_line_chart, walk_roots)
from arrowlab.fields import ConstantField, IIDField, Periodic2Field
from arrowlab.lattice import E, N, S, W, GridField, Trajectory, Window, coalesce_time, trace


def test_constant_pastlen_is_distance_to_west_edge():
    w = Window.rect(10)
    pl = past_length(ConstantField(E), w)
    assert np.array_equal(pl, np.broadcast_to(np.arange(21)[:, None], (21, 21)))


def test_periodic_pastlen_capped_interior():
    w = Window.rect(50)
    pl = past_length(Periodic2Field(0), w)
    inner = interior_mask(Periodic2Field(0), w, 40)
    assert (pl[inner] >= 40).all()
    prof = pn_density_profile(Periodic2Field(0), w, 40)
    assert (prof.interior == 1.0).all()


def test_pastlen_matches_bruteforce():
    f = IIDField(0.5, 4)
    w = Window.rect(6)
    pl = past_length(f, w)
    dag = ancestry_dag(f, w)

    def longest(site):
        ins = dag.in_neighbors(site)
        return 0 if not ins else 1 + max(longest(y) for y in ins)

    for site in [(0, 0), (6, 6), (-6, 3), (2, -1)]:
        assert pl[w.index(site)] == longest(site)


def test_nesting_and_monotone_profile():
    f = IIDField(0.5, 9)
    prof = pn_density_profile(f, Window.rect(120), 100)
    assert np.all(np.diff(prof.raw) <= 0)
    assert prof.interior[50] < 0.2


def test_dag_degrees():
    dag = ancestry_dag(IIDField(0.5, 1), Window.rect(20))
    assert dag.in_degree().max() <= 2
    assert (dag.target < dag.target.size).all()


def test_cycle_detected():
    codes = np.array([[N.code, E.code], [W.code, S.code]], dtype=np.int8)
    g = GridField((-1, -1), np.pad(codes, ((0, 1), (0, 1)), constant_values=E.code),
                  arrow_set=(E, W, N, S))
    with pytest.raises(AncestryCycleError):
        past_length(g, Window((0, 0), (1, 1)))


def test_nmax_too_large():
    with pytest.raises(ValueError):
        pn_density_profile(ConstantField(E), Window.rect(10), 10)


def test_walk_roots_agree_with_coalesce_time():
    f = IIDField(0.5, 5)
    w = Window.rect(30)
    roots = walk_roots(f, w)
    rng = np.random.default_rng(0)
    for _ in range(40):
        x = tuple(int(v) for v in rng.integers(-30, 31, 2))
        y = tuple(int(v) for v in rng.integers(-30, 31, 2))
        if x == y:
            continue
        rec = coalesce_time(f, x, y, 200, verify=0)
        met_inside = rec is not None and w.contains(rec.site)
        assert met_inside == (roots[w.index(x)] == roots[w.index(y)])


def test_pairs_within():
    w = Window.rect(20)
    assert len(pairs_within(w, (0, 0), 10)) == 2 * 10 * 11
    assert len(pairs_within(w, w.lo, 10)) == 65


def test_coalescence_constant_only_same_row():
    w = Window.rect(20)
    # walks on different rows never meet; a walk behind on the same row runs into the other
    assert coalescence_fraction(ConstantField(E), w, pairs_within(w, (0, 0), 3)) == 6 / 24


def test_last_crossings_examples():
    w = Window.rect(10)
    assert len(last_crossings(ConstantField(E), w, 0).sites) == 21
    assert len(last_crossings(Periodic2Field(0), w, 0).sites) == 21
    big = Window.rect(200)
    got = [len(last_crossings(IIDField(0.5, s), big, 0).sites) for s in range(20)]
    assert 0 < sum(got) < 20 * 401
    assert last_crossings(IIDField(0.5, 0), big, 0).sites.censor_radius == 200
    assert len(last_crossings(ConstantField(N), w, 0).sites) == 0


def test_last_crossings_undirected_mirror():
    codes = np.full((5, 5), W.code, dtype=np.int8)
    g = GridField((-2, -2), codes, arrow_set=(W,))
    assert len(last_crossings(g, Window.rect(2), 0, side=-1).sites) == 5
    assert len(last_crossings(g, Window.rect(2), 0, side=1).sites) == 0


def test_separating_sets():
    assert separating_set(ConstantField(E), Window.rect(4), 0) == [(0, y) for y in (-4, -2, 0, 2, 4)]
    assert separating_set(Periodic2Field(0), Window.rect(6), 0) == [(0, -4), (0, 0), (0, 4)]
    assert len(separating_set(IIDField(0.5, 2), Window.rect(200), 0)) <= 2


def test_separating_tie_prefers_negative():
    f = Periodic2Field(0)
    # on x=1 the departure rows are the odd ones, -1 and 1 tie for closest
    assert separating_set(f, Window.rect(6), 1)[1] == (1, -1)


def test_cataclysm():
    for f in (Periodic2Field(0), Periodic2Field(1), ConstantField(E), ConstantField(N)):
        for n in (1, 3, 10, 25):
            assert len(cataclysmic_points(f, Window.rect(50), n)) == 0
    g = IIDField(0.5, 1)
    c1, c5 = (len(cataclysmic_points(g, Window.rect(60), n)) for n in (1, 5))
    assert c1 > c5 > 0
    csv = cataclysm_csv(g, Window.rect(30), [1, 2])
    assert csv.splitlines()[0] == "n,count,density"


def test_direction_estimates():
    d = direction_estimate(trace(Periodic2Field(0), (0, 0), 1000))
    assert all(tuple(d.series[k]) == (0.5, 0.5) for k in range(1, 1000, 2))
    d = direction_estimate(trace(ConstantField(E), (0, 0), 50))
    assert (d.series == [1.0, 0.0]).all() and d.max_ba == 0.0
    d = direction_estimate(trace(IIDField(0.7, 1), (0, 0), 100000))
    assert abs(d.final[0] - 0.7) < 0.01 and abs(d.final[1] - 0.3) < 0.01
    assert d.csv().splitlines()[0] == "n,dx_over_n,dy_over_n"


def test_block_frequency():
    t = trace(Periodic2Field(0), (0, 0), 1001)
    f = block_frequency(t, (E, N))
    assert abs(f[-1] - 0.5) < 1e-3
    t = trace(IIDField(0.3, 8), (0, 0), 50000)
    assert abs(block_frequency(t, (E,))[-1] - 0.3) < 4 * math.sqrt(0.21 / 50000)
    assert (block_frequency(Trajectory((0, 0), np.zeros(2, dtype=np.int8)), (E, E, E)) == 0).all()


def test_svg_chart():
    svg = svg_line_chart("# comment\nn,v\n1,0.5\n2,0.7\n3,nan\n")
    assert svg.startswith("<svg") and "polyline" in svg and svg.rstrip().endswith("</svg>")
