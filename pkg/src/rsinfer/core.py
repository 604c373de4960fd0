"""Empirical random-set estimators built from samples of set realizations."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.stats import norm, qmc

from .sets import (
    IntervalBox,
    SetRealization,
    contains,
    hits,
    support_function,
)

DIRECTION_TOL = 1e-12


class SampleBundle:
    """Equally weighted realizations of a random set.

    Bundles made only of boxes keep stacked ``lo``/``hi`` arrays so that
    containment and hitting are evaluated in one vectorized pass.
    """

    def __init__(self, realizations):
        realizations = list(realizations)
        if not realizations:
            raise ValueError("a sample bundle needs at least one realization")
        for r in realizations:
            if r.is_empty:
                raise ValueError("empty realizations are not allowed in a sample bundle")
        dims = {r.dim for r in realizations}
        if len(dims) != 1:
            raise ValueError(f"realizations have mixed dimensions {sorted(dims)}")
        self.dim = dims.pop()
        self._realizations = realizations
        self._lo = self._hi = None
        if all(isinstance(r, IntervalBox) for r in realizations):
            self._lo = np.array([r.lo for r in realizations])
            self._hi = np.array([r.hi for r in realizations])

    @classmethod
    def from_boxes(cls, lo, hi) -> SampleBundle:
        lo = np.asarray(lo, dtype=float)
        hi = np.asarray(hi, dtype=float)
        if lo.ndim == 1:
            lo, hi = lo[:, None], hi[:, None]
        if lo.shape != hi.shape or lo.shape[0] == 0:
            raise ValueError("lo and hi must be equally shaped (N, n) arrays with N >= 1")
        if np.any(lo > hi):
            raise ValueError("box bundle requires lo <= hi")
        self = cls.__new__(cls)
        self.dim = lo.shape[1]
        self._realizations = None
        self._lo, self._hi = lo, hi
        return self

    def __len__(self):
        return self._lo.shape[0] if self._lo is not None else len(self._realizations)

    def __iter__(self):
        return iter(self.realizations)

    def __getitem__(self, i):
        return self.realizations[i]

    @property
    def realizations(self) -> list[SetRealization]:
        if self._realizations is None:
            self._realizations = [IntervalBox(l, h) for l, h in zip(self._lo, self._hi)]
        return self._realizations

    @property
    def boxes(self):
        """``(lo, hi)`` arrays when every member is a box, else ``None``."""
        if self._lo is None:
            return None
        return self._lo, self._hi

    def indicators(self, q) -> tuple[np.ndarray, np.ndarray]:
        """Per-realization ``(contained, hit)`` boolean arrays for query ``q``."""
        if self._lo is not None and isinstance(q, IntervalBox):
            inside = np.all((self._lo >= q.lo) & (self._hi <= q.hi), axis=1)
            touch = np.all((self._lo <= q.hi) & (self._hi >= q.lo), axis=1)
            return inside, touch
        inside = np.fromiter((contains(r, q) for r in self.realizations), dtype=bool, count=len(self))
        touch = np.fromiter((hits(r, q) for r in self.realizations), dtype=bool, count=len(self))
        return inside, touch


def estimate_rsd(b: SampleBundle, q) -> float:
    """Fraction of realizations contained in ``q``."""
    return float(np.mean(b.indicators(q)[0]))


def estimate_capacity(b: SampleBundle, q) -> float:
    """Fraction of realizations hitting ``q``."""
    return float(np.mean(b.indicators(q)[1]))


def estimate_bounds(b: SampleBundle, q) -> tuple[float, float]:
    inside, touch = b.indicators(q)
    return float(inside.mean()), float(touch.mean())


def cdf_bounds(b: SampleBundle, dim: int, thresholds) -> tuple[np.ndarray, np.ndarray]:
    """Lower/upper cdf bounds of one coordinate: estimates for ``(-inf, x]`` at each threshold."""
    thresholds = np.asarray(thresholds, dtype=float)
    if b.boxes is not None:
        lo, hi = b.boxes
        lower = (hi[:, dim][None, :] <= thresholds[:, None]).mean(axis=1)
        upper = (lo[:, dim][None, :] <= thresholds[:, None]).mean(axis=1)
        return lower, upper
    lower, upper = np.empty(len(thresholds)), np.empty(len(thresholds))
    lo_q = np.full(b.dim, -np.inf)
    for k, x in enumerate(thresholds):
        hi_q = np.full(b.dim, np.inf)
        hi_q[dim] = x
        lower[k], upper[k] = estimate_bounds(b, IntervalBox(lo_q, hi_q))
    return lower, upper


# -------------------------------------------------------------- directions


def make_direction(nu) -> np.ndarray:
    nu = np.asarray(nu, dtype=float)
    if nu.ndim != 1 or abs(np.linalg.norm(nu) - 1.0) > DIRECTION_TOL:
        raise ValueError(f"direction must be a unit vector, got norm {np.linalg.norm(nu)!r}")
    return nu


def direction_grid(count: int, dim: int) -> np.ndarray:
    """Deterministic unit directions, shape ``(count, dim)``.

    One dimension always yields ``[+1, -1]``; two dimensions use equally
    spaced angles; higher dimensions use an unscrambled Sobol sequence pushed
    through the Gaussian quantile and normalized, plus the signed axes.
    """
    if dim == 1:
        return np.array([[1.0], [-1.0]])
    if count < dim + 1:
        raise ValueError(f"need at least {dim + 1} directions in dimension {dim}")
    if dim == 2:
        ang = 2 * np.pi * np.arange(count) / count
        return np.column_stack([np.cos(ang), np.sin(ang)])
    axes = np.vstack([np.eye(dim), -np.eye(dim)])
    extra = max(count - len(axes), 0)
    if extra:
        m = int(np.ceil(np.log2(2 * extra + 2)))
        u = qmc.Sobol(dim, scramble=False).random_base2(m)
        g = norm.ppf(np.clip(u, 1e-6, 1 - 1e-6))
        r = np.linalg.norm(g, axis=1)
        # the Sobol points at the cube centre map to the origin
        g = g[r > 1e-9] / r[r > 1e-9, None]
        axes = np.vstack([axes, g[:extra]])
    return axes


# ---------------------------------------------------- selection expectation


@dataclass
class Polytope:
    """Intersection of half-spaces ``{x : normals @ x <= offsets}``."""

    normals: np.ndarray
    offsets: np.ndarray
    meta: dict = field(default_factory=dict)

    @property
    def dim(self) -> int:
        return self.normals.shape[1]

    def contains_point(self, x, tol: float = 1e-9) -> bool:
        return bool(np.all(self.normals @ np.asarray(x, dtype=float) <= self.offsets + tol))

    def vertices(self, tol: float = 1e-9) -> np.ndarray:
        """Vertices in counter-clockwise order (1-D: the two interval ends; 2-D only otherwise)."""
        if self.dim == 1:
            up = self.offsets[self.normals[:, 0] > 0] / self.normals[self.normals[:, 0] > 0, 0]
            down = self.offsets[self.normals[:, 0] < 0] / self.normals[self.normals[:, 0] < 0, 0]
            return np.array([[down.max()], [up.min()]])
        if self.dim != 2:
            raise NotImplementedError("vertex extraction is implemented for 1-D and 2-D polytopes only")
        n, h = self.normals, self.offsets
        i, j = np.triu_indices(len(h), 1)
        det = n[i, 0] * n[j, 1] - n[i, 1] * n[j, 0]
        ok = np.abs(det) >= 1e-12
        i, j, det = i[ok], j[ok], det[ok]
        x = np.column_stack([(h[i] * n[j, 1] - h[j] * n[i, 1]) / det, (n[i, 0] * h[j] - n[j, 0] * h[i]) / det])
        scale = np.maximum(1.0, np.abs(x).max(axis=1))
        feasible = np.empty(len(x), dtype=bool)
        for start in range(0, len(x), 4096):
            sl = slice(start, start + 4096)
            feasible[sl] = np.all(x[sl] @ n.T <= h + tol * scale[sl, None], axis=1)
        v = x[feasible]
        if len(v) == 0:
            raise ValueError("polytope is empty or unbounded")
        c = v.mean(axis=0)
        v = v[np.argsort(np.arctan2(v[:, 1] - c[1], v[:, 0] - c[0]))]
        keep = [0]
        for k in range(1, len(v)):
            if np.linalg.norm(v[k] - v[keep[-1]]) > 1e-9 * max(1.0, np.abs(v).max()):
                keep.append(k)
        if len(keep) > 1 and np.linalg.norm(v[keep[-1]] - v[keep[0]]) <= 1e-9 * max(1.0, np.abs(v).max()):
            keep.pop()
        return v[keep]


def expected_support(b: SampleBundle, dirs) -> np.ndarray:
    """Sample mean of the support function for every direction."""
    dirs = np.atleast_2d(np.asarray(dirs, dtype=float))
    if b.boxes is not None:
        lo, hi = b.boxes
        pos = np.clip(dirs, 0, None)
        neg = np.clip(dirs, None, 0)
        with np.errstate(invalid="ignore"):
            vals = hi @ pos.T + lo @ neg.T
        return vals.mean(axis=0)
    vals = np.array([[support_function(r, nu) for nu in dirs] for r in b.realizations])
    return vals.mean(axis=0)


def selection_expectation(b: SampleBundle, dirs, atomic: bool = False) -> Polytope:
    """Outer polytope of the selection expectation from support-function means.

    ``atomic`` records that the underlying probability space has atoms, in
    which case the true selection expectation may be non-convex and the
    polytope is only its convex outer bound.
    """
    dirs = np.atleast_2d(np.asarray(dirs, dtype=float))
    if dirs.shape[1] != b.dim:
        raise ValueError(f"directions have dimension {dirs.shape[1]}, bundle has {b.dim}")
    norms = np.linalg.norm(dirs, axis=1)
    if np.any(np.abs(norms - 1) > DIRECTION_TOL):
        raise ValueError("directions must be unit vectors")
    h = expected_support(b, dirs)
    if not np.all(np.isfinite(h)):
        raise ValueError("support function is infinite: the bundle is not integrally bounded")
    meta = {"n_realizations": len(b), "n_directions": len(dirs), "atomic": bool(atomic), "convex_outer_bound": True}
    return Polytope(dirs.copy(), h, meta)
