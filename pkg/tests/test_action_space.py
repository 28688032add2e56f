import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bilipcert.action_space import (
    BreakpointCapExceeded,
    CircleAction,
    CircleHomeoPL,
    CircleSample,
    DegenerateSegment,
    PermutationAction,
    PointCloudSample,
    apply,
    apply_word,
    compose,
    invert,
    load_homeo,
    max_slope_ratio,
    save_homeo,
    sup_distance,
)
from bilipcert.group_core import IDENTITY, GeneratorSet


@st.composite
def pl_homeos(draw):
    n = draw(st.integers(1, 6))
    cuts = sorted(set(draw(st.lists(st.floats(0.01, 0.99), min_size=n, max_size=n))))
    bp = [0.0] + cuts + [1.0]
    incs = draw(st.lists(st.floats(0.05, 1.0), min_size=len(bp) - 1, max_size=len(bp) - 1))
    vals = np.concatenate([[0.0], np.cumsum(incs) / sum(incs)])
    shift = draw(st.floats(-0.5, 0.5))
    return CircleHomeoPL(bp, vals + shift)


def test_apply_examples():
    assert apply(CircleHomeoPL.rotation(0.25), 0.5) == 0.75
    assert apply(CircleHomeoPL.identity(), 0.3) == 0.3
    sq = CircleHomeoPL.power_map(2.0, 1024)
    assert apply(sq, 0.5) == pytest.approx(0.25, abs=1e-6)


def test_invert_examples():
    assert invert(CircleHomeoPL.rotation(0.25)).values[0] == pytest.approx(-0.25)
    assert apply(invert(CircleHomeoPL.rotation(0.25)), 0.5) == 0.25
    assert sup_distance(invert(CircleHomeoPL.identity()), CircleHomeoPL.identity()) == 0.0
    assert apply(invert(CircleHomeoPL.power_map(2.0)), 0.25) == pytest.approx(0.5, abs=1e-6)


def test_invert_rejects_degenerate_slope():
    h = CircleHomeoPL([0.0, 0.5, 1.0], [0.0, 1e-310, 1.0], check=False)
    with pytest.raises(DegenerateSegment):
        invert(h)


def test_compose_examples():
    r = CircleHomeoPL.rotation(0.25)
    assert sup_distance(compose(r, r), CircleHomeoPL.rotation(0.5)) == 0.0
    sq = CircleHomeoPL.power_map(2.0)
    assert sup_distance(compose(sq, invert(sq)), CircleHomeoPL.identity()) <= 1e-12
    # dense-grid oracle for t^4
    t = np.linspace(0.0, 1.0, 200_001)[:-1]
    assert np.max(np.abs(compose(sq, sq).lift(t) - t**4)) <= 1e-5


def test_compose_cap():
    sq = CircleHomeoPL.power_map(2.0, 4096)
    with pytest.raises(BreakpointCapExceeded):
        compose(sq, CircleHomeoPL.power_map(3.0, 4096), cap=1000)


@settings(max_examples=50, deadline=None)
@given(pl_homeos(), pl_homeos(), pl_homeos())
def test_group_axioms_on_pl_representatives(f, g, h):
    assert sup_distance(compose(compose(f, g), h), compose(f, compose(g, h))) <= 1e-10
    assert sup_distance(compose(g, invert(g)), CircleHomeoPL.identity()) <= 1e-10
    t = np.linspace(0, 1, 97, endpoint=False)
    back = apply(invert(g), apply(g, t))
    d = np.abs(back - t)
    assert np.max(np.minimum(d, 1 - d)) <= 1e-12


@given(pl_homeos())
def test_lift_is_degree_one(h):
    x = np.linspace(-2, 2, 41)
    assert np.allclose(h.lift(x + 1.0), h.lift(x) + 1.0, atol=1e-12)
    assert np.all(h.slopes > 0)


def test_homeo_round_trip(tmp_path):
    h = CircleHomeoPL.power_map(2.0, 64)
    save_homeo(h, tmp_path / "h.csv")
    back = load_homeo(tmp_path / "h.csv")
    assert np.array_equal(back.breakpoints, h.breakpoints)
    assert np.array_equal(back.values, h.values)


def test_power_map_slope_ratio():
    assert max_slope_ratio(CircleHomeoPL.power_map(2.0, 4096)) >= 50


def test_apply_word_examples():
    act = CircleAction([CircleHomeoPL.rotation(0.125)])
    gens = GeneratorSet(1)
    assert apply_word(act, IDENTITY, 0.3) == 0.3
    assert apply_word(act, gens.parse("aaa"), 0.0) == 0.375
    with pytest.raises(KeyError):
        apply_word(act, GeneratorSet(2).parse("b"), 0.0)


def test_word_application_order():
    a = CircleHomeoPL.rotation(0.25)
    b = CircleHomeoPL.power_map(2.0, 16)
    act = CircleAction([a, b])
    w = GeneratorSet(2).parse("ab")
    assert apply_word(act, w, 0.5) == apply(a, apply(b, 0.5))


def test_circle_action_inverses():
    act = CircleAction([CircleHomeoPL.rotation(0.3), CircleHomeoPL.power_map(2.0)])
    assert act.check_inverses() <= 1e-10


def test_rotation_preserves_arc_distances_exactly():
    sp = CircleSample.uniform(64)
    img = apply(CircleHomeoPL.rotation(5 / 64), sp.points)
    i, j = np.triu_indices(64, 1)
    assert np.array_equal(sp.dist(img[i], img[j]), sp.dist(sp.points[i], sp.points[j]))


def test_samples_are_metric():
    CircleSample.uniform(50).check_metric()
    with pytest.raises(ValueError):
        PointCloudSample([[0, 1, 5], [1, 0, 1], [5, 1, 0]])


def test_permutation_action():
    sp = PointCloudSample([[0, 1, 1], [1, 0, 1], [1, 1, 0]])
    act = PermutationAction([[1, 2, 0]])
    assert sp.diameter == 1.0
    x = np.arange(3)
    assert list(act.apply_letter(0, x)) == [1, 2, 0]
    assert list(act.apply_letter(1, act.apply_letter(0, x))) == [0, 1, 2]
    with pytest.raises(ValueError):
        PermutationAction([[0, 0, 1]])
