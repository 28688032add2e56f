"""Acceptance criteria, each checked at its stated tolerance.

Every test records one PASS/FAIL line; the lines are printed in the pytest
terminal summary, or directly when the file is run as a script.
"""

import math
import time

import numpy as np
import pytest

from bilipcert.action_space import (
    CircleAction,
    CircleHomeoPL,
    CircleSample,
    PermutationAction,
    PointCloudSample,
    sup_distance,
)
from bilipcert.circle_conjugator import (
    certify_conjugation,
    lipschitz_certificate,
    pushforward_cdf,
    refine_conjugation,
    round_trip_error,
)
from bilipcert.cli import DYADIC_ANGLE
from bilipcert.group_core import IDENTITY, GeneratorSet, build_weight_table, check_translated_sums
from bilipcert.metric_engine import (
    RegularizedMetric,
    verify_bilipschitz_sandwich,
    verify_equivariance,
    verify_lower_bound_identity,
    verify_metric_axioms,
    verify_part3_adjustment,
    verify_refinement,
)

RESULTS: list[str] = []

S, R, N = 1.2, 8, 200


def record(number, name, ok, detail):
    line = f"criterion {number} [{name}]: {'PASS' if ok else 'FAIL'} - {detail}"
    RESULTS.append(line)
    return ok


def singular_generators(n_breakpoints=4096):
    return [CircleHomeoPL.rotation(math.sqrt(2) - 1), CircleHomeoPL.power_map(2.0, n_breakpoints)]


def singular_metric():
    wt = build_weight_table(GeneratorSet(2), S, R)
    return RegularizedMetric(wt, CircleSample.uniform(N), CircleAction(singular_generators()))


def rotation_metric(k=1, s=0.7, R=12, N=256):
    angles = [DYADIC_ANGLE, 0.375][:k]
    act = CircleAction([CircleHomeoPL.rotation(a) for a in angles])
    return RegularizedMetric(build_weight_table(GeneratorSet(k), s, R), CircleSample.uniform(N), act)


_cache = {}


@pytest.fixture(scope="module")
def singular():
    if "singular" not in _cache:
        _cache["singular"] = singular_metric()
    return _cache["singular"]


@pytest.fixture(scope="module")
def small_words(singular):
    words = [w for w in singular.wt.words if len(w) <= 2]
    singular.prefetch(words)
    return words


def test_criterion_1_metric_axioms():
    t0 = time.perf_counter()
    rm = singular_metric()
    cert = verify_metric_axioms(rm, n_triples=100_000, rtol=1e-12)
    elapsed = time.perf_counter() - t0
    _cache["singular"] = rm
    ok = cert.passed and cert.details["symmetric"] and cert.details["separating"] and elapsed < 60
    record(
        1,
        "metric axioms",
        ok,
        f"symmetric={cert.details['symmetric']} separating={cert.details['separating']} "
        f"max triangle violation={cert.achieved:.3g} (<= 1e-12), {elapsed:.1f}s (< 60s)",
    )
    assert ok


def test_criterion_2_sandwich(singular, small_words):
    certs = [verify_bilipschitz_sandwich(singular, p) for p in small_words]
    base = certs[0]
    exact_one = (
        small_words[0] == IDENTITY
        and base.details["min_ratio"] == 1.0
        and base.details["max_ratio"] == 1.0
        and np.array_equal(singular.matrix(IDENTITY), singular.matrix(small_words[0]))
    )
    ok = all(c.passed for c in certs) and exact_one
    worst = max(c.achieved for c in certs)
    record(2, "sandwich", ok, f"{len(certs)} basepoints |p|<=2, worst signed excess {worst:.3g} (<= 0), ratio at e exactly 1: {exact_one}")
    assert ok


def test_criterion_3_equivariance(singular, small_words):
    c0 = verify_equivariance(singular, IDENTITY)
    ones = [w for w in small_words if len(w) == 1]
    bound1 = 2 * math.exp(2 * S) * singular.wt.tail_bound * singular.D
    res1 = max(verify_equivariance(singular, eta).achieved for eta in ones)
    rot_res = []
    for k in (1, 2):
        rm = rotation_metric(k=k, s=0.7 if k == 1 else 1.2, R=12 if k == 1 else 8)
        for eta in [w for w in rm.wt.words if len(w) <= 2]:
            rot_res.append(verify_equivariance(rm, eta).achieved)
    ok = c0.achieved == 0.0 and res1 <= bound1 and max(rot_res) == 0.0
    record(
        3,
        "equivariance",
        ok,
        f"residual at e={c0.achieved!r}; |eta|=1 residual {res1:.3g} <= {bound1:.4g}; rotation residual max {max(rot_res)!r}",
    )
    assert ok


def test_criterion_4_lower_bound(singular):
    D6 = [[min(abs(i - j), 6 - abs(i - j)) for j in range(6)] for i in range(6)]
    cloud = RegularizedMetric(
        build_weight_table(GeneratorSet(1), 0.8, 8), PointCloudSample(D6), PermutationAction([[1, 2, 3, 4, 5, 0]])
    )
    trivial = RegularizedMetric(build_weight_table(GeneratorSet(0), 1.0, 4), CircleSample.uniform(32), CircleAction([]))
    scenes = {
        "singular": singular,
        "rotation": rotation_metric(),
        "rotation k=2": rotation_metric(k=2, s=1.2, R=8),
        "isometry s=log2 R=40": rotation_metric(s=math.log(2), R=40),
        "trivial": trivial,
        "point cloud": cloud,
    }
    certs = {name: verify_lower_bound_identity(rm) for name, rm in scenes.items()}
    ok = all(c.passed for c in certs.values()) and certs["trivial"].achieved == 0.0
    mins = ", ".join(f"{n}: {c.achieved:.3g}" for n, c in certs.items())
    record(4, "one-Lipschitz identity", ok, f"min off-diagonal slack (zero tolerance) {mins}")
    assert ok


def test_criterion_5_translated_sums(singular):
    translations = [w for w in singular.wt.words if len(w) <= 2]
    reports = check_translated_sums(singular.wt, translations)
    worst = max(r.max_discrepancy for r in reports)
    ok = all(r.passed for r in reports) and all(r.base_sum == r.translated_sum for r in reports)
    record(5, "translated Poincare sums", ok, f"{len(reports)} translations |zeta|<=2, max term discrepancy {worst!r}")
    assert ok


def test_criterion_6_isometry_closed_form():
    rm = rotation_metric(k=1, s=math.log(2), R=40)
    B = rm.base_matrix()
    M = rm.matrix()
    mask = ~np.eye(B.shape[0], dtype=bool)
    rel = float(np.max(np.abs(M[mask] - 3.0 * B[mask]) / (3.0 * B[mask])))
    ok = rel <= 1e-10 and np.all(M[~mask] == 0.0)
    record(6, "isometry closed form", ok, f"max relative error vs 3*base = {rel:.3g} (<= 1e-10)")
    assert ok


def test_criterion_7_lipschitz_adjustment():
    rm = rotation_metric()
    cert = verify_part3_adjustment(rm.space, rm.action, rm.wt.gens, 1.0, 0.5, 0.7, rm.R)
    closed = 1 + 2 * math.exp(-0.5) / (1 - math.exp(-0.5))
    ok = cert.passed and cert.bound <= closed * (1 + 1e-12)
    record(7, "Lipschitz adjustment", ok, f"max delta_e/base {cert.achieved:.6g} <= C {cert.bound:.6g} (closed form {closed:.6g})")
    assert ok


def test_criterion_8_conjugation():
    t0 = time.perf_counter()
    gens = singular_generators()
    wt = build_weight_table(GeneratorSet(2), S, R)
    raw = max(lipschitz_certificate(g) for g in gens)
    res = certify_conjugation(gens, wt, grid=4096, names=["a", "b"])
    rt = round_trip_error(res.measure.cdf, res.psi)
    pf = sup_distance(pushforward_cdf(res.psi), res.measure.cdf)
    elapsed = time.perf_counter() - t0
    bound = math.exp(S) * 1.05
    after = max(res.after)
    checks = {
        "raw>=50": raw >= 50,
        "after<=e^s*1.05": after <= bound,
        "round trip<=1e-10": rt <= 1e-10,
        "pushforward<=1e-10": pf <= 1e-10,
        "runtime<120s": elapsed < 120,
    }
    ok = all(checks.values())
    failed = [k for k, v in checks.items() if not v]
    record(
        8,
        "conjugated Lipschitz",
        ok,
        f"raw L={raw:.6g}; after a={res.after[0]:.6g} b={res.after[1]:.6g} vs {bound:.6g}; "
        f"round trip {rt:.3g}; pushforward {pf:.3g}; {elapsed:.1f}s" + (f"; failed: {', '.join(failed)}" if failed else ""),
    )
    assert ok, f"failed checks: {failed}"


def test_criterion_9_refinement(singular):
    cert = verify_refinement(singular, 10)
    wt = build_weight_table(GeneratorSet(2), S, R)
    hist = refine_conjugation(singular_generators, wt, n_breakpoints=4096, grid=4096, rtol=0.01, max_rounds=2)
    (n0, l0), (n1, l1) = hist[0], hist[-1]
    change = abs(l1 - l0) / l0
    ok = cert.passed and n1 == 2 * n0 and change <= 0.01
    record(
        9,
        "refinement stability",
        ok,
        f"R 8->10 max change {cert.achieved:.3g} <= tail*D {cert.bound:.4g}; breakpoints {n0}->{n1} relative certificate change {change:.3g} (<= 0.01)",
    )
    assert ok


if __name__ == "__main__":
    import sys

    sys.exit(pytest.main([__file__, "-q"]))
