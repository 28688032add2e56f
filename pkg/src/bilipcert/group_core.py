"""Cayley balls, growth data and Poincare-series weights for finitely generated groups.

Words are reduced words over a symmetric generating set.  Letter ``2*i`` is the
i-th generator and letter ``2*i + 1`` its inverse, so the inverse of a letter is
``letter ^ 1``.  By default a group is treated as the free group on its
generators (the *free cover*); ``DEDUP`` mode merges words that an
:class:`ElementResolver` declares equal.
"""

from __future__ import annotations

import math
import string
from dataclasses import dataclass, field
from enum import Enum
from functools import cached_property
from typing import Callable, Hashable, Iterable, Sequence

import numpy as np


class Mode(str, Enum):
    FREE = "free"
    DEDUP = "dedup"


def inverse_letter(letter: int) -> int:
    return letter ^ 1


@dataclass(frozen=True, order=False)
class GroupWord:
    """A reduced word; ``letters`` is a tuple of letter indices."""

    letters: tuple[int, ...] = ()

    def __post_init__(self):
        letters = tuple(int(x) for x in self.letters)
        object.__setattr__(self, "letters", letters)
        for a, b in zip(letters, letters[1:]):
            if b == a ^ 1:
                raise ValueError(f"word {letters} is not reduced")

    @classmethod
    def reduce(cls, letters: Iterable[int]) -> "GroupWord":
        out: list[int] = []
        for x in letters:
            x = int(x)
            if out and out[-1] == x ^ 1:
                out.pop()
            else:
                out.append(x)
        return cls(tuple(out))

    @property
    def length(self) -> int:
        return len(self.letters)

    def __len__(self) -> int:
        return len(self.letters)

    def __iter__(self):
        return iter(self.letters)

    def __mul__(self, other: "GroupWord") -> "GroupWord":
        return GroupWord.reduce(self.letters + other.letters)

    def inverse(self) -> "GroupWord":
        return GroupWord(tuple(x ^ 1 for x in reversed(self.letters)))

    def sort_key(self) -> tuple[int, tuple[int, ...]]:
        """Canonical order: by length, then lexicographically by letters."""
        return (len(self.letters), self.letters)

    def __lt__(self, other: "GroupWord") -> bool:
        return self.sort_key() < other.sort_key()

    def label(self, gens: "GeneratorSet") -> str:
        if not self.letters:
            return "e"
        return "".join(gens.labels[x] for x in self.letters)

    def __repr__(self) -> str:
        return f"GroupWord({self.letters})"


IDENTITY = GroupWord(())


@dataclass(frozen=True)
class GeneratorSet:
    """Symmetric generating set with ``2k`` letters paired as ``(g_i, g_i^-1)``."""

    k: int
    labels: tuple[str, ...] = ()
    mode: Mode = Mode.FREE

    def __post_init__(self):
        if self.k < 0:
            raise ValueError("k must be non-negative")
        labels = tuple(self.labels) or default_labels(self.k)
        if len(labels) != 2 * self.k:
            raise ValueError(f"expected {2 * self.k} labels, got {len(labels)}")
        if len(set(labels)) != len(labels):
            raise ValueError(f"letter labels must be distinct: {labels}")
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "mode", Mode(self.mode))

    @property
    def n_letters(self) -> int:
        return 2 * self.k

    def letter(self, label: str) -> int:
        return self.labels.index(label)

    def parse(self, text: str) -> GroupWord:
        """Parse a word written as concatenated single-character labels ('e' or '' is the identity)."""
        if text in ("", "e"):
            return IDENTITY
        letters = []
        for ch in text:
            if ch not in self.labels:
                raise ValueError(f"unknown letter {ch!r} in {text!r}")
            letters.append(self.labels.index(ch))
        return GroupWord.reduce(letters)

    def generator_words(self) -> list[GroupWord]:
        return [GroupWord((x,)) for x in range(self.n_letters)]


def default_labels(k: int) -> tuple[str, ...]:
    if k > 26:
        return tuple(s for i in range(k) for s in (f"g{i}", f"G{i}"))
    return tuple(s for c in string.ascii_lowercase[:k] for s in (c, c.upper()))


def free_sphere_count(k: int, n: int) -> int:
    """Number of reduced words of length ``n`` over ``k`` free generators."""
    if n == 0:
        return 1
    if k == 0:
        return 0
    return 2 * k * (2 * k - 1) ** (n - 1)


def free_growth_rate(k: int) -> float:
    """Exponential growth rate log(2k-1) of the free group; 0 for k <= 1."""
    return math.log(2 * k - 1) if k >= 1 else 0.0


# --- resolvers -------------------------------------------------------------


class ResolverInconsistency(RuntimeError):
    pass


class ElementResolver:
    """Equality decision procedure on words.

    Subclasses implement :meth:`equal`.  :meth:`matches` may be overridden for
    speed; it returns the indices of ``reps`` equal to ``word``.
    """

    def equal(self, u: GroupWord, v: GroupWord) -> bool:
        raise NotImplementedError

    def matches(self, word: GroupWord, reps: Sequence[GroupWord]) -> list[int]:
        return [i for i, r in enumerate(reps) if self.equal(word, r)]

    def reset(self) -> None:
        """Drop any per-enumeration index."""


class NormalFormResolver(ElementResolver):
    """Exact resolver: two words are equal iff their normal forms agree."""

    def __init__(self, normal_form: Callable[[GroupWord], Hashable]):
        self.normal_form = normal_form
        self._index: dict[Hashable, list[int]] = {}
        self._seen = 0

    def equal(self, u, v):
        return self.normal_form(u) == self.normal_form(v)

    def reset(self):
        self._index = {}
        self._seen = 0

    def matches(self, word, reps):
        # reps only ever grows during one enumeration
        for i in range(self._seen, len(reps)):
            self._index.setdefault(self.normal_form(reps[i]), []).append(i)
        self._seen = len(reps)
        return list(self._index.get(self.normal_form(word), ()))


def abelian_normal_form(word: GroupWord) -> tuple[int, ...]:
    """Exponent-sum vector; makes the free abelian group Z^k."""
    k = (max(word.letters) // 2 + 1) if word.letters else 0
    counts = [0] * max(k, 1)
    for x in word.letters:
        counts[x // 2] += -1 if x & 1 else 1
    while len(counts) > 1 and counts[-1] == 0:
        counts.pop()
    return tuple(counts)


class ProbeResolver(ElementResolver):
    """Numerical resolver: words are equal when their actions agree on a probe grid.

    ``evaluate(word, probes)`` returns the images of the probe points;
    ``distance(a, b)`` the pointwise distance between image arrays.
    """

    def __init__(self, evaluate, probes, distance=None, tol: float = 1e-9):
        self.evaluate = evaluate
        self.probes = np.asarray(probes)
        self.distance = distance or (lambda a, b: np.abs(a - b))
        self.tol = tol
        self._sigs: list[np.ndarray] = []

    def signature(self, word: GroupWord) -> np.ndarray:
        return np.asarray(self.evaluate(word, self.probes), dtype=float)

    def equal(self, u, v):
        return bool(np.max(self.distance(self.signature(u), self.signature(v))) <= self.tol)

    def reset(self):
        self._sigs = []

    def matches(self, word, reps):
        while len(self._sigs) < len(reps):
            self._sigs.append(self.signature(reps[len(self._sigs)]))
        if not reps:
            return []
        sig = self.signature(word)
        table = np.stack(self._sigs)
        err = np.max(self.distance(table, sig[None, :]), axis=1)
        return [int(i) for i in np.nonzero(err <= self.tol)[0]]


# --- enumeration -----------------------------------------------------------


@dataclass(frozen=True)
class Ball:
    words: tuple[GroupWord, ...]
    sphere_counts: tuple[int, ...]


def _free_words(k: int, R: int) -> list[GroupWord]:
    spheres: list[list[tuple[int, ...]]] = [[()]]
    for _ in range(R):
        nxt = []
        for w in spheres[-1]:
            for x in range(2 * k):
                if w and x == w[-1] ^ 1:
                    continue
                nxt.append(w + (x,))
        spheres.append(nxt)
    return [GroupWord(w) for sphere in spheres for w in sphere]


def enumerate_ball(gens: GeneratorSet, R: int, resolver: ElementResolver | None = None) -> Ball:
    """All reduced words of length <= R (FREE), or one representative per class (DEDUP).

    Words come out in canonical order.  In DEDUP mode a candidate matching two
    distinct classes means the resolver is not transitive on the words seen;
    this raises :class:`ResolverInconsistency` naming the pair.
    """
    if R < 0:
        raise ValueError("R must be non-negative")
    if gens.mode is Mode.FREE:
        words = _free_words(gens.k, R)
        counts = [0] * (R + 1)
        for w in words:
            counts[len(w)] += 1
        return Ball(tuple(words), tuple(counts))

    if resolver is None:
        raise ValueError("DEDUP mode needs an ElementResolver")
    resolver.reset()
    # Each candidate is merged into the class of the unique representative it
    # matches.  Matching two representatives would force merging two classes
    # the resolver keeps apart, i.e. the resolver is not transitive.
    reps: list[GroupWord] = [IDENTITY]
    counts = [1]
    frontier = [IDENTITY]
    for _ in range(R):
        new_frontier = []
        for w in frontier:
            for x in range(gens.n_letters):
                if w.letters and x == w.letters[-1] ^ 1:
                    continue
                cand = GroupWord(w.letters + (x,))
                hits = resolver.matches(cand, reps)
                if len(hits) > 1:
                    a, b = reps[hits[0]], reps[hits[1]]
                    raise ResolverInconsistency(
                        f"resolver says {cand.label(gens)} equals both {a.label(gens)} and "
                        f"{b.label(gens)}, but {a.label(gens)} != {b.label(gens)}"
                    )
                if not hits:
                    reps.append(cand)
                    new_frontier.append(cand)
        counts.append(len(new_frontier))
        frontier = new_frontier
    return Ball(tuple(reps), tuple(counts))


# --- growth ---------------------------------------------------------------


def estimate_critical_exponent(sphere_counts: Sequence[int], k: int | None = None, window: int = 6) -> float:
    """Estimate the exponential growth rate of the sphere counts.

    Fits ``log a_n = c + delta*n + beta*log n`` by least squares over the last
    ``window`` radii (n >= 1), which is exact for pure exponential and pure
    polynomial growth.  With only two usable radii the log-ratio
    ``log(a_n / a_{n-1})`` is used.  The result is clipped to ``[0, log(2k-1)]``
    when ``k`` is given.  Zero counts beyond the identity mean a finite group.
    """
    counts = [int(c) for c in sphere_counts]
    if len(counts) < 3:
        raise ValueError("need at least 3 sphere counts")
    if all(c == 0 for c in counts[1:]) or counts[-1] == 0:
        return 0.0
    ns = np.arange(1, len(counts))
    tail = ns[-window:]
    a = np.array([counts[n] for n in tail], dtype=float)
    if np.any(a <= 0):
        return 0.0
    y = np.log(a)
    if len(tail) >= 3:
        X = np.column_stack([np.ones(len(tail)), tail, np.log(tail)])
        coef, *_ = np.linalg.lstsq(X, y, rcond=None)
        est = float(coef[1])
    else:
        est = float(y[-1] - y[-2])
    est = max(est, 0.0)
    if k is not None:
        est = min(est, free_growth_rate(k))
    return est


# --- weights ---------------------------------------------------------------


def free_tail_bound(k: int, s: float, R: int) -> float:
    """Closed form of sum_{n>R} 2k(2k-1)^(n-1) e^(-s n); inf when s <= log(2k-1)."""
    if k == 0:
        return 0.0
    q = (2 * k - 1) * math.exp(-s)
    if q >= 1.0:
        return math.inf
    return 2 * k * math.exp(-s) * q**R / (1.0 - q)


@dataclass(frozen=True)
class WeightTable:
    """Truncated Poincare series at the identity.

    ``words`` are in canonical order and ``weights[i] = exp(-s * len(words[i]))``.
    ``tail_bound`` bounds the mass of every discarded reduced word.
    """

    gens: GeneratorSet
    s: float
    R: int
    words: tuple[GroupWord, ...]
    weights: np.ndarray = field(repr=False)
    sphere_counts: tuple[int, ...]
    tail_bound: float

    @property
    def k(self) -> int:
        return self.gens.k

    @property
    def mode(self) -> Mode:
        return self.gens.mode

    @cached_property
    def entries(self) -> dict[GroupWord, float]:
        return dict(zip(self.words, self.weights.tolist()))

    def sphere_weight(self, n: int) -> float:
        return float(np.exp(-self.s * n))

    @cached_property
    def sphere_weights(self) -> np.ndarray:
        return np.exp(-self.s * np.arange(self.R + 1, dtype=float))

    @cached_property
    def total_weight(self) -> float:
        """Sum of the kept weights, accumulated sphere by sphere."""
        total = 0.0
        for n, a in enumerate(self.sphere_counts):
            total += a * self.sphere_weights[n]
        return total

    @property
    def total_mass_bound(self) -> float:
        return self.total_weight + self.tail_bound

    def partial_sums(self) -> list[float]:
        out, total = [], 0.0
        for n, a in enumerate(self.sphere_counts):
            total += a * self.sphere_weights[n]
            out.append(total)
        return out

    def shell_mass(self, r: int) -> float:
        """Kept mass strictly beyond radius r: sum over r < |w| <= R."""
        total = 0.0
        for n in range(r + 1, self.R + 1):
            total += self.sphere_counts[n] * self.sphere_weights[n]
        return total


def build_weight_table(gens: GeneratorSet, s: float, R: int, resolver: ElementResolver | None = None) -> WeightTable:
    """Enumerate the ball of radius R and attach weights e^(-s|w|) and a certified tail."""
    if not s > 0:
        raise ValueError(f"decay exponent must satisfy s > 0, got s = {s}")
    need = free_growth_rate(gens.k)
    if gens.k >= 2 and not s > need:
        raise ValueError(
            f"s = {s} violates s > log(2k-1) = {need:.12g} (k = {gens.k}); the tail bound would diverge"
        )
    ball = enumerate_ball(gens, R, resolver)
    lengths = np.fromiter((len(w) for w in ball.words), dtype=float, count=len(ball.words))
    weights = np.exp(-s * lengths)
    return WeightTable(
        gens=gens,
        s=float(s),
        R=int(R),
        words=ball.words,
        weights=weights,
        sphere_counts=ball.sphere_counts,
        tail_bound=free_tail_bound(gens.k, s, R),
    )


# --- basepoint invariance --------------------------------------------------


def word_distance(u: GroupWord, v: GroupWord) -> int:
    """Free word-metric distance |u^-1 v|."""
    i = 0
    while i < len(u) and i < len(v) and u.letters[i] == v.letters[i]:
        i += 1
    return len(u) + len(v) - 2 * i


@dataclass
class TranslationReport:
    translation: GroupWord
    n_terms: int
    base_sum: float
    translated_sum: float
    max_discrepancy: float

    @property
    def passed(self) -> bool:
        return self.max_discrepancy == 0.0


def check_translated_sums(
    wt: WeightTable,
    translations: Sequence[GroupWord],
    x: GroupWord = IDENTITY,
    y: GroupWord = IDENTITY,
) -> list[TranslationReport]:
    """Compare sum_psi e^(-s dist(zeta y, psi x)) with sum_psi e^(-s dist(y, psi x)).

    The translated sum is re-indexed by psi -> zeta psi and both are restricted to
    the common sub-ball of radius R - |zeta|; term-by-term the integer distances
    agree, so the discrepancy is exactly zero.
    """
    if wt.mode is not Mode.FREE:
        raise ValueError("term-by-term re-indexing needs FREE mode")
    reports = []
    for zeta in translations:
        if 2 * len(zeta) > wt.R:
            raise ValueError(f"translation {zeta} longer than R/2")
        r = wt.R - len(zeta)
        zy = zeta * y
        base_terms, moved_terms = [], []
        for psi in wt.words:
            if len(psi) > r:
                break
            base_terms.append(math.exp(-wt.s * word_distance(y, psi * x)))
            moved_terms.append(math.exp(-wt.s * word_distance(zy, (zeta * psi) * x)))
        base = np.array(base_terms)
        moved = np.array(moved_terms)
        reports.append(
            TranslationReport(
                translation=zeta,
                n_terms=len(base),
                base_sum=sum(base_terms),
                translated_sum=sum(moved_terms),
                max_discrepancy=float(np.max(np.abs(base - moved))),
            )
        )
    return reports
