import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bilipcert.action_space import BreakpointCapExceeded, CircleHomeoPL, compose, invert, sup_distance
from bilipcert.circle_conjugator import (
    MeasureCDF,
    build_mu,
    certify_conjugation,
    conjugate_action,
    lipschitz_certificate,
    nu_cdf_lift,
    psi_mu,
    pushforward_cdf,
    refine_conjugation,
    round_trip_error,
    verify_measure_equivariance,
)
from bilipcert.group_core import GeneratorSet, build_weight_table

SQ = CircleHomeoPL.power_map(2.0, 4096)


def test_pushforward_examples():
    assert sup_distance(pushforward_cdf(CircleHomeoPL.identity()), MeasureCDF.lebesgue()) == 0.0
    for angle in (0.1, math.sqrt(2) - 1, 0.75):
        assert sup_distance(pushforward_cdf(CircleHomeoPL.rotation(angle)), MeasureCDF.lebesgue()) <= 1e-15
    assert pushforward_cdf(SQ)(0.25) == pytest.approx(0.5, abs=1e-6)


def test_pushforward_of_shifted_map_is_anchored_at_zero():
    h = compose(CircleHomeoPL.rotation(0.3), SQ)
    G = pushforward_cdf(h)
    assert G.values[0] == 0.0 and G.values[-1] == 1.0
    # lambda(h^-1 [0, t]) from a dense oracle: length of the preimage arc
    t = 0.6
    pre0, pre1 = invert(h).lift(0.0), invert(h).lift(t)
    assert G(t) == pytest.approx(pre1 - pre0, abs=1e-12)


def test_measure_cdf_validation():
    with pytest.raises(ValueError):
        MeasureCDF([0, 0.5, 1], [0, 0.5, 0.5])
    with pytest.raises(ValueError):
        MeasureCDF([0, 1], [0.1, 1.1])


def test_build_mu_trivial_and_rotations():
    wt0 = build_weight_table(GeneratorSet(0), 1.0, 3)
    assert build_mu([], wt0).cdf.n_breakpoints == 2
    wt = build_weight_table(GeneratorSet(2), 1.2, 5)
    m = build_mu([CircleHomeoPL.rotation(0.1), CircleHomeoPL.rotation(0.2)], wt)
    assert sup_distance(m.cdf, MeasureCDF.lebesgue()) == 0.0
    assert m.mass == wt.total_weight


def test_build_mu_regression_k1():
    wt = build_weight_table(GeneratorSet(1), 0.9, 10)
    exact = build_mu([SQ], wt)
    grid = build_mu([SQ], wt, grid=4096)
    assert np.all(exact.cdf.slopes > 0)
    # baseline from the exact merged-breakpoint construction
    assert exact.cdf.min_density() == pytest.approx(0.7449127677891666, rel=1e-9)
    assert np.max(np.abs(exact.cdf.lift(grid.cdf.breakpoints) - grid.cdf.values)) <= 1e-14
    assert exact.cdf.values[-1] == 1.0 and exact.mass == wt.total_weight


def test_nu_lift_matches_term_by_term_sum():
    wt = build_weight_table(GeneratorSet(1), 0.9, 4)
    x = np.array([0.1, 0.5, 0.9])
    direct = np.zeros_like(x)
    for w in wt.words:
        h = CircleHomeoPL.identity()
        for l in w.letters:
            g = SQ if l == 0 else invert(SQ)
            h = compose(invert(g), h)
        direct += math.exp(-0.9 * len(w)) * (h.lift(x) - h.lift(0.0))
    assert np.allclose(nu_cdf_lift([SQ], wt, x), direct, rtol=1e-13)


def test_build_mu_cap():
    wt = build_weight_table(GeneratorSet(1), 0.9, 6)
    with pytest.raises(BreakpointCapExceeded, match="grid"):
        build_mu([SQ], wt, cap=5000)


def test_psi_mu_examples():
    assert sup_distance(psi_mu(MeasureCDF.lebesgue()), CircleHomeoPL.identity()) == 0.0
    mu = MeasureCDF.from_homeo(SQ)
    psi = psi_mu(mu)
    assert psi(0.25) == pytest.approx(0.5, abs=1e-6)
    assert round_trip_error(mu, psi) <= 1e-10


def test_conjugate_identity_and_rotations():
    gens = [CircleHomeoPL.rotation(0.3), SQ]
    out = conjugate_action(gens, CircleHomeoPL.identity())
    assert all(sup_distance(a, b) <= 1e-15 for a, b in zip(gens, out))


def test_conjugation_respects_composition():
    g, h = CircleHomeoPL.power_map(2.0, 64), CircleHomeoPL.rotation(0.2)
    psi = invert(CircleHomeoPL.power_map(1.5, 64))
    cg, ch, cgh = conjugate_action([g, h, compose(g, h)], psi)
    assert sup_distance(cgh, compose(cg, ch)) <= 1e-9


def test_lipschitz_certificate_examples():
    assert lipschitz_certificate(CircleHomeoPL.identity()) == 1.0
    assert lipschitz_certificate(CircleHomeoPL.rotation(0.3)) == 1.0
    assert lipschitz_certificate(SQ) == pytest.approx(4096.0, rel=1e-12)


def test_k1_conjugation_grid_passes_bound():
    wt = build_weight_table(GeneratorSet(1), 0.9, 10)
    res = certify_conjugation([SQ], wt, grid=4096)
    assert res.before[0] >= 50
    assert res.after[0] <= math.exp(0.9) * 1.05
    assert all(c.passed for c in res.certificates)


def test_exact_conjugation_sees_fixed_point_obstruction():
    # the truncated measure's density ratio at the fixed point 0 is the inverse slope there
    wt = build_weight_table(GeneratorSet(1), 0.9, 10)
    res = certify_conjugation([SQ], wt, grid=None)
    assert res.after[0] == pytest.approx(4096.0, rel=1e-6)


def test_measure_equivariance():
    wt = build_weight_table(GeneratorSet(1), 0.9, 8)
    m = build_mu([SQ], wt, grid=512)
    assert verify_measure_equivariance(m).passed


def test_refinement_history_shape():
    wt = build_weight_table(GeneratorSet(1), 0.9, 6)
    hist = refine_conjugation(lambda n: [CircleHomeoPL.power_map(2.0, n)], wt, n_breakpoints=256, grid=256)
    assert hist[0][0] == 256 and len(hist) >= 2
    assert abs(hist[-1][1] - hist[-2][1]) <= 0.01 * hist[-2][1]


@settings(max_examples=20, deadline=None)
@given(st.lists(st.floats(0.05, 1.0), min_size=2, max_size=6))
def test_psi_mu_round_trip_random(incs):
    bp = np.linspace(0, 1, len(incs) + 1)
    vals = np.concatenate([[0.0], np.cumsum(incs) / sum(incs)])
    mu = MeasureCDF(bp, vals)
    assert round_trip_error(mu, psi_mu(mu)) <= 1e-10
