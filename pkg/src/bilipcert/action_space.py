"""Finite samples of compact metric spaces and concrete group actions on them.

Two kinds of spaces are supported: the circle R/Z with its arc metric, acted on
by orientation-preserving piecewise-linear homeomorphisms, and finite point
clouds with a distance table, acted on by permutations.

Actions are left actions: the word ``l1 l2 ... ln`` sends ``x`` to
``l1(l2(...ln(x)))``.
"""

from __future__ import annotations

import csv
import math
from typing import Sequence

import numpy as np

from .group_core import GroupWord

DEFAULT_BREAKPOINT_CAP = 10**6
MIN_SLOPE = 1e-300
TAU_INV = 1e-10


class BreakpointCapExceeded(RuntimeError):
    pass


class DegenerateSegment(ValueError):
    pass


class CircleHomeoPL:
    """Orientation-preserving circle homeomorphism given by a piecewise-linear lift.

    ``breakpoints`` run from 0 to 1; ``values`` are the lift ``F`` at those
    points with ``F(1) = F(0) + 1``.  The lift is extended by ``F(x+1) = F(x)+1``.
    """

    __slots__ = ("breakpoints", "values")

    def __init__(self, breakpoints, values, *, check: bool = True):
        t = np.array(breakpoints, dtype=float)
        F = np.array(values, dtype=float)
        if check:
            if t.ndim != 1 or t.shape != F.shape or len(t) < 2:
                raise ValueError("breakpoints and values must be 1-d arrays of equal length >= 2")
            if t[0] != 0.0 or t[-1] != 1.0:
                raise ValueError("breakpoints must start at 0 and end at 1")
            if abs(F[-1] - F[0] - 1.0) > 1e-12:
                raise ValueError(f"lift is not degree one: F(1) - F(0) = {F[-1] - F[0]!r}")
            if not (np.all(np.isfinite(t)) and np.all(np.isfinite(F))):
                raise ValueError("non-finite breakpoint data")
            if np.any(np.diff(t) <= 0):
                raise ValueError("breakpoints must be strictly increasing")
            if np.any(np.diff(F) <= 0):
                raise ValueError("values must be strictly increasing (orientation-preserving)")
        F[-1] = F[0] + 1.0
        t.setflags(write=False)
        F.setflags(write=False)
        self.breakpoints = t
        self.values = F

    # construction helpers

    @classmethod
    def identity(cls) -> "CircleHomeoPL":
        return cls([0.0, 1.0], [0.0, 1.0])

    @classmethod
    def rotation(cls, angle: float) -> "CircleHomeoPL":
        return cls([0.0, 1.0], [angle, angle + 1.0])

    @classmethod
    def from_function(cls, f, n_breakpoints: int = 4096) -> "CircleHomeoPL":
        """Sample an increasing map of [0,1] with f(0)=0, f(1)=1 on a uniform grid."""
        t = np.linspace(0.0, 1.0, n_breakpoints + 1)
        F = np.asarray(f(t), dtype=float)
        F[0], F[-1] = 0.0, 1.0
        return cls(t, F)

    @classmethod
    def power_map(cls, alpha: float = 2.0, n_breakpoints: int = 4096) -> "CircleHomeoPL":
        """PL approximation of t -> t**alpha; a homeomorphism fixing 0 with a singular derivative there."""
        return cls.from_function(lambda t: t**alpha, n_breakpoints)

    # evaluation

    def lift(self, x) -> np.ndarray:
        """Evaluate the lift at arbitrary real ``x``."""
        x = np.asarray(x, dtype=float)
        n = np.floor(x)
        return np.interp(x - n, self.breakpoints, self.values) + n

    def __call__(self, t):
        return apply(self, t)

    @property
    def slopes(self) -> np.ndarray:
        return np.diff(self.values) / np.diff(self.breakpoints)

    @property
    def n_breakpoints(self) -> int:
        return len(self.breakpoints)

    def simplified(self) -> "CircleHomeoPL":
        """Drop interior breakpoints where the slope does not change (exact comparison)."""
        s = self.slopes
        keep = np.ones(len(self.breakpoints), dtype=bool)
        keep[1:-1] = s[1:] != s[:-1]
        if keep.all():
            return self
        return CircleHomeoPL(self.breakpoints[keep], self.values[keep], check=False)

    def is_rotation(self) -> bool:
        return self.n_breakpoints == 2

    def __repr__(self):
        return f"CircleHomeoPL({self.n_breakpoints} breakpoints, F(0)={self.values[0]!r})"


def _mod1(x: np.ndarray) -> np.ndarray:
    y = x - np.floor(x)
    return np.where(y >= 1.0, 0.0, y)


def apply(h: CircleHomeoPL, t):
    """Image of ``t`` in [0,1) under ``h``; exact at breakpoints."""
    out = _mod1(h.lift(t))
    return float(out) if np.ndim(out) == 0 else out


def invert(h: CircleHomeoPL) -> CircleHomeoPL:
    """Exact PL inverse: breakpoints and values swap roles on the lift."""
    if np.min(h.slopes) < MIN_SLOPE:
        raise DegenerateSegment(f"segment slope {np.min(h.slopes)!r} too small to invert")
    if h.is_rotation():
        return CircleHomeoPL.rotation(-h.values[0])
    t, F = h.breakpoints, h.values
    # inverse lift G has graph {(F_i + j, t_i + j)}; restrict to y in [0, 1]
    j = -math.floor(F[0])
    ys = F[:-1] + j
    xs = t[:-1] + j
    ys = np.concatenate([ys - 1.0, ys, ys + 1.0])
    xs = np.concatenate([xs - 1.0, xs, xs + 1.0])
    inside = (ys > 0.0) & (ys < 1.0)
    g0 = float(np.interp(0.0, ys, xs))
    by = np.concatenate([[0.0], ys[inside], [1.0]])
    bx = np.concatenate([[g0], xs[inside], [g0 + 1.0]])
    return _clean(by, bx)


def compose(g: CircleHomeoPL, h: CircleHomeoPL, cap: int = DEFAULT_BREAKPOINT_CAP) -> CircleHomeoPL:
    """The PL map ``g o h``, with breakpoints at h's breakpoints and the pull-backs of g's."""
    hinv = invert(h)
    pulled = _mod1(hinv.lift(g.breakpoints[:-1]))
    bp = np.union1d(h.breakpoints, pulled)
    bp = bp[(bp >= 0.0) & (bp <= 1.0)]
    if bp[0] != 0.0:
        bp = np.concatenate([[0.0], bp])
    if bp[-1] != 1.0:
        bp = np.concatenate([bp, [1.0]])
    if len(bp) > cap:
        raise BreakpointCapExceeded(
            f"composition needs {len(bp)} breakpoints (cap {cap}); coarsen the breakpoint grid"
        )
    vals = g.lift(h.lift(bp))
    vals[-1] = vals[0] + 1.0
    return _clean(bp, vals)


def _clean(bp: np.ndarray, vals: np.ndarray) -> CircleHomeoPL:
    # pulled-back breakpoints closer than float resolution can yield flat
    # segments; drop interior points that break strict monotonicity
    if np.all(np.diff(bp) > 0) and np.all(np.diff(vals) > 0):
        return CircleHomeoPL(bp, vals, check=False).simplified()
    keep = np.ones(len(bp), dtype=bool)
    last = 0
    for i in range(1, len(bp) - 1):
        if bp[i] > bp[last] and vals[i] > vals[last] and bp[i] < 1.0 and vals[i] < vals[-1]:
            last = i
        else:
            keep[i] = False
    return CircleHomeoPL(bp[keep], vals[keep], check=False).simplified()


def sup_distance(g: CircleHomeoPL, h: CircleHomeoPL) -> float:
    """Sup-norm distance of two circle maps (exact for PL: checked on both breakpoint sets)."""
    pts = np.union1d(g.breakpoints, h.breakpoints)
    d = g.lift(pts) - h.lift(pts)
    d -= np.round(d)
    return float(np.max(np.abs(d)))


def max_slope_ratio(h: CircleHomeoPL) -> float:
    """Lipschitz constant of ``h`` together with its inverse: max(max slope, 1/min slope)."""
    s = h.slopes
    return float(max(np.max(s), 1.0 / np.min(s)))


# --- serialization ---------------------------------------------------------


def write_table(path, columns: dict[str, Sequence[float]]) -> None:
    """Write columns with round-trip ``repr`` formatting; Python ints stay integers."""
    names = list(columns)
    rows = zip(*(columns[n] for n in names))
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(names)
        for row in rows:
            w.writerow([str(v) if isinstance(v, int) else repr(float(v)) for v in row])


def save_homeo(h: CircleHomeoPL, path) -> None:
    write_table(path, {"breakpoint": h.breakpoints, "value": h.values})


def load_homeo(path) -> CircleHomeoPL:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    body = [r for r in rows[1:] if r]
    return CircleHomeoPL([float(r[0]) for r in body], [float(r[1]) for r in body])


# --- spaces ----------------------------------------------------------------


class SpaceSample:
    """A finite sample of a compact metric space.

    ``points`` may be any array of point representations understood by
    :meth:`dist`.  ``diameter`` is an upper bound on the distance between any
    two points of the whole space (not only of the sample).
    """

    points: np.ndarray
    diameter: float

    def dist(self, u: np.ndarray, v: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    @property
    def N(self) -> int:
        return len(self.points)

    def table(self) -> np.ndarray:
        i, j = np.meshgrid(np.arange(self.N), np.arange(self.N), indexing="ij")
        return self.dist(self.points[i], self.points[j])

    def check_metric(self, rtol: float = 1e-12) -> None:
        D = self.table()
        if np.any(np.diag(D) != 0):
            raise ValueError("base distance is not zero on the diagonal")
        if not np.array_equal(D, D.T):
            raise ValueError("base distance is not symmetric")
        if np.any(D < 0):
            raise ValueError("negative base distance")
        # d(x,z) <= d(x,y) + d(y,z) for all triples
        for y in range(self.N):
            viol = D - (D[:, y][:, None] + D[y, :][None, :])
            if np.max(viol) > rtol * max(np.max(D), 1.0):
                i, j = np.unravel_index(np.argmax(viol), viol.shape)
                raise ValueError(f"triangle inequality fails for ({i}, {y}, {j})")


class CircleSample(SpaceSample):
    """Points of R/Z with the arc metric min(|x-y|, 1-|x-y|); the circle's diameter is 1/2.

    If ``cdf`` is given, distances are measured in the arc metric of that
    probability measure instead: the measure of the shorter arc.
    """

    def __init__(self, points, cdf=None):
        self.points = _mod1(np.asarray(points, dtype=float))
        self.points.setflags(write=False)
        self.cdf = cdf
        self.diameter = 0.5

    @classmethod
    def uniform(cls, N: int, cdf=None) -> "CircleSample":
        return cls(np.arange(N) / N, cdf=cdf)

    def dist(self, u, v):
        if self.cdf is not None:
            u = self.cdf.lift(u)
            v = self.cdf.lift(v)
        d = np.abs(u - v)
        d = d - np.floor(d)
        return np.minimum(d, 1.0 - d)


class PointCloudSample(SpaceSample):
    """A finite metric space given by its distance table; points are indices."""

    def __init__(self, distances):
        D = np.array(distances, dtype=float)
        if D.ndim != 2 or D.shape[0] != D.shape[1] or D.shape[0] < 2:
            raise ValueError("distance table must be square with N >= 2")
        D.setflags(write=False)
        self.D = D
        self.points = np.arange(D.shape[0])
        self.points.setflags(write=False)
        self.diameter = float(D.max())
        self.check_metric()

    def dist(self, u, v):
        return self.D[u, v]


# --- actions ---------------------------------------------------------------


class GeneratorAction:
    """An action of the free group on a space, given letter by letter."""

    n_letters: int

    def apply_letter(self, letter: int, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def check_inverses(self, space: SpaceSample) -> None:
        raise NotImplementedError


class CircleAction(GeneratorAction):
    """Generators act by PL circle homeomorphisms; inverse letters use exact PL inverses."""

    def __init__(self, generators: Sequence[CircleHomeoPL], names: Sequence[str] | None = None):
        self.generators = list(generators)
        self.names = list(names) if names is not None else [f"g{i}" for i in range(len(self.generators))]
        self.maps: list[CircleHomeoPL] = []
        for g in self.generators:
            self.maps.extend([g, invert(g)])
        self.n_letters = len(self.maps)

    def apply_letter(self, letter, x):
        return _mod1(self.maps[letter].lift(x))

    def check_inverses(self, space=None, tol: float = TAU_INV) -> float:
        worst = 0.0
        for i in range(0, self.n_letters, 2):
            g, gi = self.maps[i], self.maps[i + 1]
            for a, b in ((g, gi), (gi, g)):
                pts = np.union1d(b.breakpoints, invert(b).breakpoints)
                err = np.max(np.abs(a.lift(b.lift(pts)) - pts))
                worst = max(worst, float(err))
        if worst > tol:
            raise ValueError(f"generator composed with its inverse is off the identity by {worst!r}")
        return worst


class PermutationAction(GeneratorAction):
    """Generators act on a point cloud by permutations of the sample."""

    def __init__(self, permutations: Sequence[Sequence[int]], names: Sequence[str] | None = None):
        self.maps: list[np.ndarray] = []
        for p in permutations:
            p = np.asarray(p, dtype=np.int64)
            if sorted(p.tolist()) != list(range(len(p))):
                raise ValueError("generator map is not a bijection of the sample")
            inv = np.empty_like(p)
            inv[p] = np.arange(len(p))
            self.maps.extend([p, inv])
        self.names = list(names) if names is not None else [f"g{i}" for i in range(len(permutations))]
        self.n_letters = len(self.maps)

    def apply_letter(self, letter, x):
        return self.maps[letter][x]

    def check_inverses(self, space=None) -> float:
        for i in range(0, self.n_letters, 2):
            p, q = self.maps[i], self.maps[i + 1]
            ident = np.arange(len(p))
            if not (np.array_equal(p[q], ident) and np.array_equal(q[p], ident)):
                raise ValueError(f"letter {i} and its inverse do not compose to the identity")
        return 0.0


def apply_word(action: GeneratorAction, w: GroupWord, x):
    """Apply ``w = l1 ... ln`` to ``x`` as ``l1(l2(...ln(x)))``; the empty word is the identity."""
    out = np.asarray(x)
    for letter in reversed(w.letters):
        if letter >= action.n_letters:
            raise KeyError(f"no map assigned to letter {letter}")
        out = action.apply_letter(letter, out)
    return out


def orbit_table(action: GeneratorAction, w: GroupWord, space: SpaceSample) -> np.ndarray:
    """Base distances between the images of the sample under ``w``: d(w x_i, w x_j)."""
    img = apply_word(action, w, space.points)
    i, j = np.meshgrid(np.arange(space.N), np.arange(space.N), indexing="ij")
    return space.dist(img[i], img[j])
