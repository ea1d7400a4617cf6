import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from arrowlab.fields import ConstantField, IIDField, Periodic2Field
from arrowlab.lattice import (D, E, N, S, U, W, ArrowField, Direction, DomainError,
                              GridField, TraceError, Trajectory, Window, coalesce_time,
                              format_arrows, line_crossings, parse_arrows, step, trace)


def test_direction_codes():
    assert [d.code for d in (E, W, N, S, U, D)] == list(range(6))
    assert all(Direction.from_code(d.code) == d for d in (E, W, N, S, U, D))
    assert N.vector(3) == (0, 1, 0)
    assert "".join(d.letter for d in (E, W, N, S, U, D)) == "EWNSUD"


def test_window_geometry():
    w = Window.rect(8)
    assert w.shape == (17, 17) and w.size == 289
    assert w.lo == (-8, -8) and w.hi == (8, 8)
    assert w.contains((8, -8)) and not w.contains((9, 0))
    assert w.on_boundary((8, 0)) and not w.on_boundary((7, 0))
    assert w.site(w.index((3, -2))) == (3, -2)
    with pytest.raises(ValueError):
        Window((0, 0), (0, 3))


def test_constant_trace_is_straight():
    t = trace(ConstantField(E), (2, 3), 10)
    assert t.site(10) == (12, 3)
    assert t.displacement() == (10, 0)
    assert np.array_equal(t.sites()[:, 1], np.full(11, 3))


def test_periodic_staircase():
    t = trace(Periodic2Field(0), (0, 0), 8)
    assert "".join(t.direction(k).letter for k in range(8)) == "ENENENEN"


def test_trajectory_runs_consistent():
    runs = [(E.code, 3), (N.code, 2), (E.code, 1)]
    t = Trajectory.from_runs((0, 0), runs)
    assert "".join(t.direction(k).letter for k in range(len(t))) == "EEENNE"
    assert t.displacement_series([1, 3, 5, 6]).tolist() == [[1, 0], [3, 0], [3, 2], [4, 2]]
    assert t.segment(2, 5).start == (2, 0)


@given(st.lists(st.sampled_from([E.code, N.code]), min_size=1, max_size=60))
def test_displacement_matches_sites(steps):
    t = Trajectory((0, 0), np.array(steps, dtype=np.int8))
    s = t.sites()
    for k in range(len(steps) + 1):
        assert tuple(s[k]) == t.site(k)
    assert t.displacement() == tuple(s[-1])


def test_trace_error_carries_prefix():
    g = GridField((0, 0), np.zeros((3, 1), dtype=np.int8))
    with pytest.raises(TraceError) as exc:
        trace(g, (0, 0), 10)
    assert len(exc.value.prefix) == 3


class _Bad(ArrowField):
    arrow_set = (E, N)

    def _code(self, site):
        return W.code


def test_arrow_set_enforced():
    with pytest.raises(DomainError):
        _Bad().arrow((0, 0))


def test_overflow_rejected():
    with pytest.raises(OverflowError):
        step(ConstantField(E), (1 << 63, 0))


def test_coalesce_time_iid():
    f = IIDField(0.5, 3)
    rec = coalesce_time(f, (0, 0), (1, -1), 5000)
    assert rec is not None
    assert trace(f, (0, 0), rec.s).site(rec.s) == rec.site == trace(f, (1, -1), rec.t).site(rec.t)


def test_coalesce_time_never_for_constant_shift():
    assert coalesce_time(ConstantField(E), (0, 0), (0, 1), 200) is None


def test_coalesce_undirected_field():
    codes = np.array([[N.code, E.code], [W.code, S.code]], dtype=np.int8)  # a 4-cycle
    g = GridField((0, 0), codes, arrow_set=(E, W, N, S))
    rec = coalesce_time(g, (0, 0), (1, 1), 10, verify=4)
    assert rec is not None and rec.s == 2 and rec.t == 0


def test_line_crossings():
    t = trace(Periodic2Field(0), (0, 0), 6)
    assert line_crossings(t, 0) == {0: 1, 1: 2, 2: 2, 3: 2}


@settings(max_examples=30)
@given(st.integers(1, 9), st.integers(1, 9), st.integers(-50, 50), st.integers(-50, 50),
       st.integers(0, 1000))
def test_arrows_roundtrip(w, h, x0, y0, seed):
    codes = np.where(np.random.default_rng(seed).random((w, h)) < 0.5, E.code, N.code)
    g = GridField((x0, y0), codes.astype(np.int8))
    lines = [f"ARROWS v1 d=2 x0={x0} y0={y0} w={w} h={h}"]
    for j in range(h - 1, -1, -1):
        lines.append("".join("EN"[codes[i, j] // 2] for i in range(w)))
    back = parse_arrows("\n".join(lines) + "\n")
    assert back.lo == (x0, y0) and np.array_equal(back.grid_codes, g.grid_codes)


def test_format_then_parse_field():
    f = IIDField(0.3, 11)
    win = Window((5, -2), (4, 3))
    back = parse_arrows(format_arrows(f, win))
    assert np.array_equal(back.window_codes(win), f.window_codes(win))


@pytest.mark.parametrize("text", [
    "",
    "ARROWS v2 d=2 x0=0 y0=0 w=1 h=1\nE\n",
    "ARROWS v1 d=2 x0=0 y0=0 w=2 h=1\nE\n",
    "ARROWS v1 d=2 x0=0 y0=0 w=1 h=1\nX\n",
])
def test_parse_arrows_rejects(text):
    with pytest.raises(ValueError):
        parse_arrows(text)


def test_rebased_field():
    f = IIDField(0.5, 2)
    g = f.rebased((10, 20))
    assert g.arrow((1, 1)) == f.arrow((11, 21))
