"""Measures on the circle built from the weights, and the conjugacy they induce.

The measure is nu = sum_psi exp(-s |psi|) psi_* lambda over the kept words; its
normalized CDF G (anchored at 0, positive orientation) is strictly increasing
and Psi = G^-1 conjugates each generator g to G o g o G^-1.

Two representations are offered.  The exact one composes the PL generators
for every word and sums the resulting CDFs on their merged breakpoints; it is
the right tool for small balls and rotation groups.  The grid one evaluates
the nu-CDF exactly at the uniform nodes j / M (and at their images under the
generators) and interpolates linearly between them; it is what large balls
around maps with thousands of breakpoints need.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .action_space import (
    DEFAULT_BREAKPOINT_CAP,
    BreakpointCapExceeded,
    CircleHomeoPL,
    _clean,
    compose,
    invert,
    sup_distance,
)
from .group_core import IDENTITY, GroupWord, Mode, WeightTable
from .metric_engine import Certificate

ROUND_TRIP_TOL = 1e-10
EPS_REP = 0.05


class MeasureCDF(CircleHomeoPL):
    """PL distribution function of an atomless, fully supported probability measure.

    G(0) = 0 and G(1) = 1 exactly; every slope is positive and finite.
    """

    def __init__(self, breakpoints, values, *, check: bool = True):
        values = np.array(values, dtype=float)
        if check and (values[0] != 0.0 or abs(values[-1] - 1.0) > 1e-12):
            raise ValueError(f"a CDF must run from 0 to 1, got {values[0]!r} .. {values[-1]!r}")
        values[0], values[-1] = 0.0, 1.0
        super().__init__(breakpoints, values, check=check)
        if check:
            sl = self.slopes
            if not (np.all(sl > 0) and np.all(np.isfinite(sl))):
                raise ValueError("CDF has an atom or a gap in its support")

    @classmethod
    def lebesgue(cls) -> "MeasureCDF":
        return cls([0.0, 1.0], [0.0, 1.0])

    @classmethod
    def from_homeo(cls, h: CircleHomeoPL) -> "MeasureCDF":
        return cls(h.breakpoints, h.values - h.values[0])

    def min_density(self) -> float:
        return float(self.slopes.min())


def _letter_maps(generators: Sequence[CircleHomeoPL]) -> list[CircleHomeoPL]:
    maps = []
    for g in generators:
        maps.extend([g, invert(g)])
    return maps


def pushforward_cdf(psi: CircleHomeoPL) -> MeasureCDF:
    """CDF of psi_* lambda: G(t) = lambda(psi^-1 [0, t]) = F(t) - F(0) for the lift F of psi^-1."""
    return MeasureCDF.from_homeo(invert(psi))


# --- building the measure -------------------------------------------------


@dataclass
class Measure:
    """Normalized CDF together with the data it was built from."""

    cdf: MeasureCDF
    mass: float
    wt: WeightTable = field(repr=False)
    generators: tuple[CircleHomeoPL, ...] = field(repr=False)
    grid: int | None = None

    def nu_at(self, x) -> np.ndarray:
        """Truncated nu-CDF lift at arbitrary lifted points, evaluated term by term."""
        return nu_cdf_lift(self.generators, self.wt, x)

    def cdf_at(self, x) -> np.ndarray:
        return self.nu_at(x) / self.mass


def _check_table(generators, wt: WeightTable) -> None:
    if len(generators) != wt.k:
        raise ValueError(f"{len(generators)} generators for a table with k = {wt.k}")


def nu_cdf_lift(generators: Sequence[CircleHomeoPL], wt: WeightTable, x) -> np.ndarray:
    """sum_{|psi| <= R} w_psi (F_psi(x) - F_psi(0)) with F_psi the lift of psi^-1.

    Words are visited depth first; contributions are collected per sphere and
    then combined in increasing length.
    """
    _check_table(generators, wt)
    x = np.asarray(x, dtype=float)
    pts = np.concatenate([[0.0], x.ravel()])
    S = np.zeros((wt.R + 1, pts.size - 1))
    if wt.mode is Mode.DEDUP and wt.k:
        maps = _letter_maps(generators)
        for w in wt.words:
            img = pts
            for letter in w.letters:
                img = maps[letter ^ 1].lift(img)
            S[len(w)] += img[1:] - img[0]
    else:
        maps = _letter_maps(generators)
        n_letters = len(maps)

        def visit(img, depth, last):
            S[depth] += img[1:] - img[0]
            if depth == wt.R:
                return
            for letter in range(n_letters):
                if last >= 0 and letter == last ^ 1:
                    continue
                visit(maps[letter ^ 1].lift(img), depth + 1, letter)

        visit(pts, 0, -1)
    w = wt.sphere_weights
    out = S[0] * w[0]
    for n in range(1, wt.R + 1):
        out = out + S[n] * w[n]
    return out.reshape(x.shape)


def _word_inverses(generators, wt: WeightTable, cap: int):
    """PL psi^-1 for every kept word, in canonical order."""
    maps = _letter_maps(generators)
    inv: dict[GroupWord, CircleHomeoPL] = {IDENTITY: CircleHomeoPL.identity()}
    out = []
    for w in wt.words:
        if w not in inv:
            parent = GroupWord(w.letters[:-1])
            # (parent l)^-1 = l^-1 o parent^-1
            inv[w] = compose(maps[w.letters[-1] ^ 1], inv[parent], cap=cap)
        out.append(inv[w])
    return out


def build_mu(
    generators: Sequence[CircleHomeoPL],
    wt: WeightTable,
    grid: int | None = None,
    cap: int = DEFAULT_BREAKPOINT_CAP,
) -> Measure:
    """Normalized measure mu = nu / nu(S^1).

    With ``grid=None`` the nu-CDF is the exact PL sum on the merged breakpoints
    of all push-forward CDFs.  With ``grid=M`` it is evaluated exactly at j / M
    and interpolated.  In both cases G(0) = 0 and nu(S^1) equals the kept
    weight sum, the latter accumulated sphere by sphere.
    """
    generators = tuple(generators)
    _check_table(generators, wt)
    mass = wt.total_weight
    if wt.k == 0 or all(g.is_rotation() for g in generators):
        return Measure(MeasureCDF.lebesgue(), mass, wt, generators, grid)
    if grid is None:
        try:
            inverses = _word_inverses(generators, wt, cap)
            bp = np.unique(np.concatenate([h.breakpoints for h in inverses]))
        except BreakpointCapExceeded as exc:
            raise BreakpointCapExceeded(f"{exc}; pass grid=M to evaluate the measure on a uniform grid") from None
        if bp.size > cap:
            raise BreakpointCapExceeded(
                f"merged grid has {bp.size} points > cap {cap}; pass grid=M to evaluate the measure on a uniform grid"
            )
        S = np.zeros((wt.R + 1, bp.size))
        for w, h in zip(wt.words, inverses):
            S[len(w)] += h.lift(bp) - h.lift(0.0)
        weights = wt.sphere_weights
        nu = S[0] * weights[0]
        for n in range(1, wt.R + 1):
            nu = nu + S[n] * weights[n]
    else:
        if grid < 1:
            raise ValueError("grid must be a positive integer")
        bp = np.linspace(0.0, 1.0, grid + 1)
        nu = nu_cdf_lift(generators, wt, bp)
    nu[0], nu[-1] = 0.0, mass
    if grid is None:
        # merged breakpoints closer than float resolution can tie; drop them
        h = _clean(bp, nu / mass)
        cdf = MeasureCDF(h.breakpoints, h.values)
    else:
        cdf = MeasureCDF(bp, nu / mass)
    return Measure(cdf, mass, wt, generators, grid)


def psi_mu(mu: MeasureCDF, tol: float = ROUND_TRIP_TOL) -> CircleHomeoPL:
    """Inverse CDF Psi with Psi_* lambda = mu, certified to ``tol`` in sup norm."""
    psi = invert(mu)
    err = max(round_trip_error(mu, psi), sup_distance(pushforward_cdf(psi), mu))
    if err > tol:
        raise ArithmeticError(f"inverse CDF certification failed: error {err!r} > {tol!r}")
    return psi


def round_trip_error(mu: MeasureCDF, psi: CircleHomeoPL) -> float:
    """sup_t |G(Psi(t)) - t| over the breakpoints of both maps."""
    t = np.union1d(psi.breakpoints, mu.values)
    return float(np.max(np.abs(mu.lift(psi.lift(t)) - t)))


def conjugate_action(
    generators: Sequence[CircleHomeoPL],
    psi: CircleHomeoPL,
    measure: Measure | None = None,
    cap: int = DEFAULT_BREAKPOINT_CAP,
) -> list[CircleHomeoPL]:
    """Psi^-1 o g o Psi for each generator.

    Without ``measure`` the composition is exact PL.  With a grid ``measure``
    the conjugate is sampled at u_j = G(t_j): there Psi(u_j) = t_j and the
    value G(g(t_j)) is evaluated exactly from the series.
    """
    if measure is None or measure.grid is None or measure.cdf.n_breakpoints == 2:
        psi_inv = invert(psi)
        return [compose(psi_inv, compose(g, psi, cap=cap), cap=cap) for g in generators]
    t = measure.cdf.breakpoints
    u = measure.cdf.values
    out = []
    for g in generators:
        v = measure.cdf_at(g.lift(t))
        v[-1] = v[0] + 1.0
        out.append(CircleHomeoPL(u, v, check=False).simplified())
    return out


def lipschitz_certificate(h: CircleHomeoPL) -> float:
    """Exact bi-Lipschitz constant of a PL circle map: max slope of h and of h^-1."""
    sl = h.slopes
    return float(max(sl.max(), 1.0 / sl.min(), 1.0))


@dataclass
class ConjugationResult:
    measure: Measure
    psi: CircleHomeoPL
    conjugated: list[CircleHomeoPL]
    before: list[float]
    after: list[float]
    round_trip: float
    pushforward_error: float
    certificates: list[Certificate]


def certify_conjugation(
    generators: Sequence[CircleHomeoPL],
    wt: WeightTable,
    grid: int | None = None,
    eps_rep: float = EPS_REP,
    names: Sequence[str] | None = None,
    cap: int = DEFAULT_BREAKPOINT_CAP,
) -> ConjugationResult:
    """Build mu, Psi and the conjugated generators; certify each against exp(s) (1 + eps_rep)."""
    generators = tuple(generators)
    names = list(names) if names is not None else [f"g{i}" for i in range(len(generators))]
    measure = build_mu(generators, wt, grid=grid, cap=cap)
    psi = invert(measure.cdf)
    rt = round_trip_error(measure.cdf, psi)
    pf = sup_distance(pushforward_cdf(psi), measure.cdf)
    conj = conjugate_action(generators, psi, measure, cap=cap)
    before = [lipschitz_certificate(g) for g in generators]
    after = [lipschitz_certificate(h) for h in conj]
    bound = math.exp(wt.s) * (1.0 + eps_rep)
    params = {"s": wt.s, "R": wt.R, "grid": grid, "eps_rep": eps_rep}
    certs = [
        Certificate(
            claim="INVERSE_CDF",
            params=dict(params),
            bound=ROUND_TRIP_TOL,
            achieved=max(rt, pf),
            witness=f"round_trip={rt!r} pushforward={pf!r}",
            status="PASS" if max(rt, pf) <= ROUND_TRIP_TOL else "FAIL",
        )
    ]
    for name, b, a in zip(names, before, after):
        ok = a <= bound
        certs.append(
            Certificate(
                claim="CONJUGATED_LIPSCHITZ",
                params={**params, "generator": name, "before": b},
                bound=bound,
                achieved=a,
                witness=name,
                status="PASS" if ok else "FAIL",
                reason="" if ok else "conjugated slope exceeds exp(s) (1 + eps_rep)",
            )
        )
    return ConjugationResult(measure, psi, conj, before, after, rt, pf, certs)


def refine_conjugation(
    make_generators: Callable[[int], Sequence[CircleHomeoPL]],
    wt: WeightTable,
    n_breakpoints: int = 4096,
    grid: int | None = 4096,
    rtol: float = 0.01,
    max_rounds: int = 4,
) -> list[tuple[int, float]]:
    """Double the generator breakpoints until the worst conjugated constant moves by at most ``rtol``.

    Returns the history of ``(n_breakpoints, worst after-constant)``; the last
    two entries are within ``rtol`` when the loop converged.
    """
    history: list[tuple[int, float]] = []
    n = n_breakpoints
    for _ in range(max_rounds):
        res = certify_conjugation(make_generators(n), wt, grid=grid)
        history.append((n, max(res.after) if res.after else 1.0))
        if len(history) >= 2 and abs(history[-1][1] - history[-2][1]) <= rtol * history[-2][1]:
            break
        n *= 2
    return history


def verify_measure_equivariance(measure: Measure, n_nodes: int | None = None) -> Certificate:
    """Check nu(g I) <= exp(s) (nu(I) + tail) for every letter g and grid interval I.

    Re-indexing psi -> g^-1 psi changes word lengths by at most one, and terms
    pushed out of the ball are covered by the tail bound.
    """
    wt = measure.wt
    nodes = n_nodes or (measure.grid or 1024)
    t = np.linspace(0.0, 1.0, nodes + 1)
    nu = measure.nu_at(t)
    dnu = np.diff(nu)
    worst, where = -math.inf, ""
    maps = _letter_maps(measure.generators)
    c = math.exp(wt.s)
    for letter, g in enumerate(maps):
        gnu = measure.nu_at(g.lift(t))
        excess = np.diff(gnu) - c * dnu
        j = int(np.argmax(excess))
        if excess[j] > worst:
            worst, where = float(excess[j]), f"letter {letter} interval [{t[j]!r}, {t[j + 1]!r}]"
    bound = c * wt.tail_bound
    ok = worst <= bound
    return Certificate(
        claim="MEASURE_EQUIVARIANCE",
        params={"s": wt.s, "R": wt.R, "nodes": nodes},
        bound=bound,
        achieved=max(worst, 0.0),
        witness=where,
        status="PASS" if ok else "FAIL",
        reason="" if ok else "translated mass exceeds the re-indexing bound",
    )
