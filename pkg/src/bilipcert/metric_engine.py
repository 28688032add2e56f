"""The regularized metric and certificates for its bi-Lipschitz properties.

For a basepoint ``p`` the regularized distance is

    delta_p(x, y) = sum_psi exp(-s * dist(p, psi)) * d(psi^-1 x, psi^-1 y)

where ``d`` is the base metric of the space and ``psi`` runs over the free
group on the generators.  It is truncated to the ball ``dist(p, psi) <= R``
around ``p``; every weight profile is then the same for every basepoint, the
discarded mass is at most ``tail_bound * D`` and left translation permutes the
terms exactly.

Sums are formed sphere by sphere (``dist(p, psi) = 0, 1, ..., R``); inside a
sphere words are visited in lexicographic order.  The order does not depend on
the number of threads.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .action_space import GeneratorAction, SpaceSample, apply_word
from .group_core import (
    IDENTITY,
    GroupWord,
    Mode,
    WeightTable,
    build_weight_table,
    free_growth_rate,
    free_tail_bound,
)

DEGENERATE = 1e-13


@dataclass
class Certificate:
    """Outcome of one verifier run."""

    claim: str
    params: dict
    bound: float
    achieved: float
    witness: str = ""
    status: str = "PASS"
    reason: str = ""
    details: dict = field(default_factory=dict)

    def __post_init__(self):
        self.bound = float(self.bound)
        self.achieved = float(self.achieved)

    @property
    def passed(self) -> bool:
        return self.status == "PASS"

    def __str__(self):
        extra = f" ({self.reason})" if self.reason else ""
        return f"{self.claim} {self.status}: achieved={self.achieved!r} bound={self.bound!r}{extra}"


def _status(ok: bool) -> str:
    return "PASS" if ok else "FAIL"


def _fmt_params(**kw) -> dict:
    return {k: (v.letters if isinstance(v, GroupWord) else v) for k, v in kw.items()}


# --- summation engine ------------------------------------------------------


def _sphere_sums(
    action: GeneratorAction,
    space: SpaceSample,
    points: np.ndarray,
    pair_i: np.ndarray,
    pair_j: np.ndarray,
    centers: Sequence[GroupWord],
    R: int,
    n_letters: int,
) -> np.ndarray:
    """S[c, n, m] = sum over words psi with dist(centers[c], psi) = n of d(psi^-1 u_m, psi^-1 v_m).

    ``u_m = points[pair_i[m]]`` and ``v_m = points[pair_j[m]]``.  Words are
    visited depth first from the identity; the ball around every center is
    prefix closed because ``|center| <= R``.
    """
    C = len(centers)
    S = np.zeros((C, R + 1, len(pair_i)))
    clen = np.array([len(c) for c in centers], dtype=np.int64)
    # next letter of each center after a prefix of length n, or -1
    nxt = np.full((C, 2 * R + 2), -1, dtype=np.int64)
    for ci, c in enumerate(centers):
        nxt[ci, : len(c)] = c.letters

    def visit(img, depth, last, dist, on_prefix):
        d = space.dist(img[pair_i], img[pair_j])
        for ci in range(C):
            n = dist[ci]
            if n <= R:
                S[ci, n] += d
        for x in range(n_letters):
            if last >= 0 and x == last ^ 1:
                continue
            step = on_prefix & (nxt[:, depth] == x)
            ndist = np.where(step, dist - 1, dist + 1)
            if ndist.min() > R:
                continue
            visit(action.apply_letter(x ^ 1, img), depth + 1, x, ndist, step)

    if C:
        visit(np.asarray(points), 0, -1, clen.copy(), np.ones(C, dtype=bool))
    return S


def _dedup_sums(action, space, points, pair_i, pair_j, wt: WeightTable) -> np.ndarray:
    S = np.zeros((1, wt.R + 1, len(pair_i)))
    for w in wt.words:
        img = apply_word(action, w.inverse(), points)
        S[0, len(w)] += space.dist(img[pair_i], img[pair_j])
    return S


def _combine(S: np.ndarray, weights: np.ndarray) -> np.ndarray:
    out = S[:, 0] * weights[0]
    for n in range(1, S.shape[1]):
        out = out + S[:, n] * weights[n]
    return out


class RegularizedMetric:
    """Truncated regularized metric on a sampled space.

    Distances between sample points are computed once per basepoint and cached
    as an N x N table; :meth:`distances` evaluates arbitrary point pairs, which
    the circle needs because group elements move points off the sample.
    """

    def __init__(
        self,
        wt: WeightTable,
        space: SpaceSample,
        action: GeneratorAction,
        basepoint: GroupWord = IDENTITY,
        threads: int = 1,
    ):
        if wt.k and action.n_letters != 2 * wt.k:
            raise ValueError(f"action has {action.n_letters} letters, group has {2 * wt.k}")
        self.wt = wt
        self.space = space
        self.action = action
        self.threads = max(1, int(threads))
        self.basepoint = self._check_center(basepoint)
        self._cache: dict[GroupWord, np.ndarray] = {}

    @property
    def s(self) -> float:
        return self.wt.s

    @property
    def R(self) -> int:
        return self.wt.R

    @property
    def D(self) -> float:
        return self.space.diameter

    @property
    def truncation_error(self) -> float:
        """Uniform bound on true minus computed distance, for any basepoint."""
        return self.wt.tail_bound * self.D

    def _check_center(self, p: GroupWord) -> GroupWord:
        if 2 * len(p) > self.wt.R:
            raise ValueError(f"basepoint of length {len(p)} exceeds R/2 = {self.wt.R / 2}")
        if p.letters and self.wt.mode is not Mode.FREE:
            raise ValueError("basepoints other than the identity need FREE mode")
        return p

    # evaluation

    def _sums(self, points, pair_i, pair_j, centers) -> np.ndarray:
        if self.wt.k == 0:
            S = np.zeros((len(centers), self.R + 1, len(pair_i)))
            S[:, 0] = self.space.dist(points[pair_i], points[pair_j])
            return S
        if self.wt.mode is Mode.DEDUP:
            return _dedup_sums(self.action, self.space, points, pair_i, pair_j, self.wt)
        def run(idx):
            # only the points these pairs touch are pushed through the words
            used, inv = np.unique(np.concatenate([pair_i[idx], pair_j[idx]]), return_inverse=True)
            m = len(idx)
            return _sphere_sums(
                self.action, self.space, points[used], inv[:m], inv[m:], centers, self.R, 2 * self.wt.k
            )

        if self.threads == 1 or len(pair_i) < 2 * self.threads:
            return run(np.arange(len(pair_i)))
        chunks = np.array_split(np.arange(len(pair_i)), self.threads)
        with ThreadPoolExecutor(self.threads) as ex:
            parts = list(ex.map(run, chunks))
        return np.concatenate(parts, axis=2)

    def distances(self, xs, ys, p: GroupWord | None = None) -> np.ndarray:
        """delta_p(x_m, y_m) for arbitrary points of the space."""
        p = self.basepoint if p is None else self._check_center(p)
        xs = np.atleast_1d(np.asarray(xs))
        ys = np.atleast_1d(np.asarray(ys))
        pts, inv = np.unique(np.concatenate([xs, ys]), return_inverse=True)
        m = len(xs)
        S = self._sums(pts, inv[:m], inv[m:], [p])
        return _combine(S, self.wt.sphere_weights)[0]

    def prefetch(self, basepoints: Iterable[GroupWord]) -> None:
        """Fill the sample cache for several basepoints in one pass over the words."""
        todo = [self._check_center(p) for p in dict.fromkeys(basepoints) if p not in self._cache]
        if not todo:
            return
        N = self.space.N
        iu, ju = np.triu_indices(N, k=1)
        S = self._sums(self.space.points, iu, ju, todo)
        vals = _combine(S, self.wt.sphere_weights)
        for p, v in zip(todo, vals):
            M = np.zeros((N, N))
            M[iu, ju] = v
            M[ju, iu] = v
            M.setflags(write=False)
            self._cache[p] = M

    def matrix(self, p: GroupWord | None = None) -> np.ndarray:
        """N x N table of delta_p on the sample."""
        p = self.basepoint if p is None else self._check_center(p)
        if p not in self._cache:
            self.prefetch([p])
        return self._cache[p]

    def base_matrix(self) -> np.ndarray:
        if not hasattr(self, "_base"):
            self._base = self.space.table()
        return self._base

    def with_table(self, wt: WeightTable) -> "RegularizedMetric":
        return RegularizedMetric(wt, self.space, self.action, self.basepoint, self.threads)


def regularized_distance(rm: RegularizedMetric, x, y, p: GroupWord | None = None) -> tuple[float, float]:
    """Return ``(value, error_bound)`` for delta_p(x, y); value <= true <= value + error_bound."""
    v = rm.distances([x], [y], p)[0]
    return float(v), rm.truncation_error


def _pairs(N: int, pairs=None) -> tuple[np.ndarray, np.ndarray]:
    if pairs is None:
        return np.triu_indices(N, k=1)
    pairs = np.asarray(pairs, dtype=np.int64).reshape(-1, 2)
    return pairs[:, 0], pairs[:, 1]


def _pair_label(space, i, j) -> str:
    return f"({space.points[i]!r}, {space.points[j]!r})"


# --- verifiers -------------------------------------------------------------


def verify_metric_axioms(rm: RegularizedMetric, n_triples: int = 100_000, rtol: float = 1e-12, seed: int = 0) -> Certificate:
    """Symmetry, identity of indiscernibles and the triangle inequality on the sample."""
    M = rm.matrix()
    N = M.shape[0]
    iu, ju = np.triu_indices(N, k=1)
    # symmetry is checked against an independent evaluation with swapped arguments
    rng = np.random.default_rng(seed)
    take = rng.choice(len(iu), size=min(len(iu), 500), replace=False)
    fwd = rm.distances(rm.space.points[iu[take]], rm.space.points[ju[take]])
    bwd = rm.distances(rm.space.points[ju[take]], rm.space.points[iu[take]])
    sym_ok = bool(np.array_equal(fwd, bwd) and np.array_equal(M, M.T) and np.array_equal(fwd, M[iu[take], ju[take]]))
    diag = rm.distances(rm.space.points, rm.space.points)
    ident_ok = bool(np.all(diag == 0.0) and np.all(M[iu, ju] > 0.0))
    x, y, z = rng.integers(0, N, size=(3, n_triples))
    lhs = M[x, z]
    rhs = M[x, y] + M[y, z]
    scale = np.maximum(np.maximum(lhs, rhs), np.finfo(float).tiny)
    rel = (lhs - rhs) / scale
    worst = int(np.argmax(rel))
    tri = float(max(rel[worst], 0.0))
    ok = sym_ok and ident_ok and tri <= rtol
    return Certificate(
        claim="METRIC_AXIOMS",
        params=_fmt_params(s=rm.s, R=rm.R, N=N, triples=n_triples),
        bound=rtol,
        achieved=tri,
        witness=f"triple ({x[worst]}, {y[worst]}, {z[worst]})",
        status=_status(ok),
        reason="" if ok else f"symmetric={sym_ok} separating={ident_ok} triangle={tri!r}",
        details={"symmetric": sym_ok, "separating": ident_ok},
    )


def verify_lower_bound_identity(rm: RegularizedMetric) -> Certificate:
    """delta_e >= base distance on every sampled pair, with no tolerance."""
    if rm.basepoint.letters:
        raise ValueError("lower bound is stated for the identity basepoint")
    M = rm.matrix()
    B = rm.base_matrix()
    slack = M - B
    worst = np.unravel_index(np.argmin(slack), slack.shape)
    ok = bool(np.all(slack >= 0.0))
    iu, ju = np.triu_indices(M.shape[0], k=1)
    off = slack[iu, ju]
    m = int(np.argmin(off))
    return Certificate(
        claim="LOWER_BOUND",
        params=_fmt_params(s=rm.s, R=rm.R),
        bound=0.0,
        achieved=float(off[m]),
        witness=_pair_label(rm.space, *(worst if not ok else (iu[m], ju[m]))),
        status=_status(ok),
        reason="" if ok else "regularized distance below base distance",
        details={"min_slack_all_pairs": float(slack.min())},
    )


def verify_equivariance(
    rm: RegularizedMetric, eta: GroupWord, pairs=None, p: GroupWord = IDENTITY
) -> Certificate:
    """Compare delta_{eta p}(x, y) with delta_p(eta^-1 x, eta^-1 y) on sampled pairs."""
    if 2 * (len(eta) + len(p)) > rm.R:
        raise ValueError(f"|eta| + |p| = {len(eta) + len(p)} exceeds R/2")
    i, j = _pairs(rm.space.N, pairs)
    ep = eta * p
    lhs = rm.matrix(ep)[i, j]
    einv = eta.inverse()
    xs = apply_word(rm.action, einv, rm.space.points[i])
    ys = apply_word(rm.action, einv, rm.space.points[j])
    rhs = rm.distances(xs, ys, p)
    res = np.abs(lhs - rhs)
    m = int(np.argmax(res)) if len(res) else 0
    bound = 2.0 * math.exp(rm.s * (len(p) + len(eta))) * rm.truncation_error
    achieved = float(res[m]) if len(res) else 0.0
    ok = achieved <= bound
    return Certificate(
        claim="EQUIVARIANCE",
        params=_fmt_params(eta=eta, p=p, s=rm.s, R=rm.R, pairs=len(i)),
        bound=bound,
        achieved=achieved,
        witness=_pair_label(rm.space, i[m], j[m]) if len(res) else "",
        status=_status(ok),
        reason="" if ok else "residual exceeds truncation allowance",
    )


def verify_bilipschitz_sandwich(rm: RegularizedMetric, p: GroupWord) -> Certificate:
    """exp(-s|p|) delta_e - eps <= delta_p <= exp(s|p|) delta_e + eps with eps = 2 exp(s|p|) tail D.

    ``achieved`` is the worst signed violation over all pairs (<= 0 passes);
    the extreme ratios delta_p / delta_e are in ``details``.
    """
    Me = rm.matrix(IDENTITY)
    Mp = rm.matrix(p)
    c = math.exp(rm.s * len(p))
    eps = 2.0 * c * rm.truncation_error
    iu, ju = np.triu_indices(Me.shape[0], k=1)
    e, q = Me[iu, ju], Mp[iu, ju]
    excess = np.maximum((e / c - eps) - q, q - (c * e + eps))
    worst = int(np.argmax(excess))
    ok = bool(excess[worst] <= 0.0)
    good = e >= DEGENERATE
    ratio = q[good] / e[good]
    return Certificate(
        claim="SANDWICH",
        params=_fmt_params(p=p, s=rm.s, R=rm.R),
        bound=0.0,
        achieved=float(excess[worst]),
        witness=_pair_label(rm.space, iu[worst], ju[worst]),
        status=_status(ok),
        reason="" if ok else "pair outside the sandwich beyond truncation allowance",
        details={
            "min_ratio": float(ratio.min()) if len(ratio) else 1.0,
            "max_ratio": float(ratio.max()) if len(ratio) else 1.0,
            "exp_s_len": c,
            "tolerance": eps,
        },
    )


def verify_generator_bilipschitz(rm: RegularizedMetric, psi: GroupWord) -> Certificate:
    """Empirical bi-Lipschitz constant of psi acting on (X, delta_e); ``achieved`` is L_psi.

    Pointwise, delta_e(psi x, psi y) <= exp(s|psi|) (delta_e(x, y) + tail D) and
    symmetrically; hence L_psi <= exp(s|psi|) (1 + eps_rel) with
    eps_rel = tail D / min delta_e.
    """
    if 2 * len(psi) > rm.R:
        raise ValueError(f"|psi| = {len(psi)} exceeds R/2")
    M = rm.matrix(IDENTITY)
    iu, ju = np.triu_indices(M.shape[0], k=1)
    before = M[iu, ju]
    xs = apply_word(rm.action, psi, rm.space.points[iu])
    ys = apply_word(rm.action, psi, rm.space.points[ju])
    after = rm.distances(xs, ys, IDENTITY)
    c = math.exp(rm.s * len(psi))
    t = rm.truncation_error
    ok = bool(np.all(after <= c * (before + t)) and np.all(before <= c * (after + t)))
    good = (before >= DEGENERATE) & (after >= DEGENERATE)
    skipped = int(np.count_nonzero(~good))
    if np.any(good):
        up = after[good] / before[good]
        down = before[good] / after[good]
        L = float(max(up.max(), down.max(), 1.0))
        eps_rel = t / float(min(before[good].min(), after[good].min()))
        k = int(np.argmax(np.maximum(up, down)))
        witness = _pair_label(rm.space, iu[good][k], ju[good][k])
    else:
        L, eps_rel, witness = 1.0, 0.0, ""
    return Certificate(
        claim="GENERATOR_BILIPSCHITZ",
        params=_fmt_params(psi=psi, s=rm.s, R=rm.R),
        bound=c * (1.0 + eps_rel),
        achieved=L,
        witness=witness,
        status=_status(ok and L <= c * (1.0 + eps_rel)),
        reason="" if ok else "pointwise Lipschitz inequality violated",
        details={"eps_rel": eps_rel, "skipped_pairs": skipped, "exp_s_len": c},
    )


@dataclass
class NeighborhoodWitness:
    x: object
    epsilon: float
    radius: int
    A: tuple[GroupWord, ...]
    b: float
    verified: bool
    neighborhood_size: int
    max_inside: float

    def certificate(self, rm: RegularizedMetric) -> Certificate:
        return Certificate(
            claim="NEIGHBORHOOD_WITNESS",
            params=_fmt_params(x=float(self.x), epsilon=self.epsilon, s=rm.s, R=rm.R),
            bound=self.epsilon,
            achieved=self.max_inside,
            witness=f"r={self.radius} b={self.b!r} |C|={self.neighborhood_size}",
            status=_status(self.verified),
            reason="" if self.verified else "a point of the neighborhood is not epsilon-close",
        )


def neighborhood_witness(rm: RegularizedMetric, x_index: int, epsilon: float) -> NeighborhoodWitness:
    """Finite set A = {|psi| <= r} and radius b whose base-metric neighborhood lies in the epsilon-ball of delta_e.

    ``r`` is the least radius with (kept mass beyond r + tail) * D < epsilon / 2,
    and ``b = epsilon / (2 W_r)`` with ``W_r`` the kept mass up to r.  On the
    sample, every y with max_{psi in A} d(psi^-1 x, psi^-1 y) < b is checked to
    satisfy delta_e(x, y) + tail * D < epsilon.
    """
    wt, D = rm.wt, rm.D
    if not epsilon > 2.0 * rm.truncation_error:
        raise ValueError(
            f"epsilon = {epsilon} must exceed twice the truncation error {2 * rm.truncation_error!r}; increase R or s"
        )
    r = next((r for r in range(wt.R + 1) if (wt.shell_mass(r) + wt.tail_bound) * D < epsilon / 2), None)
    if r is None:
        raise ValueError("no admissible radius r <= R; increase R")
    W = 0.0
    for n in range(r + 1):
        W += wt.sphere_counts[n] * wt.sphere_weights[n]
    b = epsilon / (2.0 * W)
    A = tuple(w for w in wt.words if len(w) <= r)
    pts = rm.space.points
    x = pts[x_index]
    spread = np.zeros(rm.space.N)
    for w in A:
        winv = w.inverse()
        spread = np.maximum(
            spread, rm.space.dist(apply_word(rm.action, winv, np.full(rm.space.N, x)), apply_word(rm.action, winv, pts))
        )
    inside = np.nonzero(spread < b)[0]
    vals = rm.matrix()[x_index, inside] + rm.truncation_error
    verified = bool(np.all(vals < epsilon))
    return NeighborhoodWitness(
        x=x,
        epsilon=float(epsilon),
        radius=r,
        A=A,
        b=float(b),
        verified=verified,
        neighborhood_size=int(len(inside)),
        max_inside=float(vals.max()) if len(vals) else 0.0,
    )


def sample_lipschitz_constants(space: SpaceSample, action: GeneratorAction) -> list[float]:
    """For each letter, max over distinct sample pairs of d(l x, l y) / d(x, y)."""
    iu, ju = np.triu_indices(space.N, k=1)
    before = space.dist(space.points[iu], space.points[ju])
    out = []
    for letter in range(action.n_letters):
        img = action.apply_letter(letter, space.points)
        after = space.dist(img[iu], img[ju])
        good = before >= DEGENERATE
        out.append(float(np.max(after[good] / before[good])) if np.any(good) else 1.0)
    return out


def verify_part3_adjustment(
    space: SpaceSample,
    action: GeneratorAction,
    gens,
    L: float,
    u: float,
    s: float,
    R: int,
    threads: int = 1,
) -> Certificate:
    """For an L-bi-Lipschitz action and exp(-s) L <= exp(-u), certify delta_e <= C * base distance.

    ``C = sum_{|psi| <= R} exp(-u |psi|) + tail_u(R)`` bounds the full series
    sum_psi exp(-u |psi|).
    """
    consts = sample_lipschitz_constants(space, action) if gens.k else []
    if consts and max(consts) > L * (1.0 + 1e-12):
        raise ValueError(f"action is not L-bi-Lipschitz on the sample: constants {consts} exceed L = {L}")
    if L < 1.0:
        raise ValueError(f"L = {L} must be >= 1")
    crit = free_growth_rate(gens.k)
    if gens.k >= 2 and not u > crit:
        raise ValueError(f"u = {u} violates u > log(2k-1) = {crit!r}")
    if not u > 0:
        raise ValueError(f"u = {u} must be positive")
    if not math.exp(-s) * L <= math.exp(-u) * (1.0 + 1e-12):
        raise ValueError(f"exp(-s) L = {math.exp(-s) * L!r} exceeds exp(-u) = {math.exp(-u)!r}")
    wt = build_weight_table(gens, s, R)
    rm = RegularizedMetric(wt, space, action, threads=threads)
    weights_u = np.exp(-u * np.arange(R + 1, dtype=float))
    C = 0.0
    for n, a in enumerate(wt.sphere_counts):
        C += a * weights_u[n]
    C += free_tail_bound(gens.k, u, R)
    M = rm.matrix()
    B = rm.base_matrix()
    iu, ju = np.triu_indices(space.N, k=1)
    ok = bool(np.all(M[iu, ju] <= C * B[iu, ju]))
    ratio = M[iu, ju] / B[iu, ju]
    m = int(np.argmax(ratio))
    return Certificate(
        claim="LIPSCHITZ_ADJUSTMENT",
        params=_fmt_params(L=L, u=u, s=s, R=R),
        bound=C,
        achieved=float(ratio[m]),
        witness=_pair_label(space, iu[m], ju[m]),
        status=_status(ok),
        reason="" if ok else "identity map exceeds the certified Lipschitz constant",
        details={"sample_constants": consts},
    )


def verify_refinement(rm: RegularizedMetric, R_new: int) -> Certificate:
    """Raising the radius from R to R_new changes every computed delta_e by at most tail(R) * D."""
    if R_new <= rm.R:
        raise ValueError("R_new must exceed R")
    wt2 = build_weight_table(rm.wt.gens, rm.s, R_new)
    fine = rm.with_table(wt2).matrix(IDENTITY)
    coarse = rm.matrix(IDENTITY)
    change = fine - coarse
    bound = rm.truncation_error
    ok = bool(np.all(change >= 0.0) and np.all(change <= bound))
    idx = np.unravel_index(np.argmax(change), change.shape)
    return Certificate(
        claim="REFINEMENT_STABILITY",
        params=_fmt_params(R=rm.R, R_new=R_new, s=rm.s),
        bound=bound,
        achieved=float(change.max()),
        witness=_pair_label(rm.space, *idx),
        status=_status(ok),
        reason="" if ok else "refined distances moved more than the certified tail",
    )
