"""Uncertainty descriptions and their random-set embeddings.

Every description used as a prior is embedded as a random set driven by a
uniform variable ``u``:

* a mass function picks the focal set whose cumulative-mass slot holds ``u``;
* a p-box maps ``u`` to ``[upper_cdf^-1(u), lower_cdf^-1(u)]``;
* a random variable maps ``u`` to the degenerate interval at its quantile;
* a fixed interval ignores ``u``.

Dimensions of a :class:`PriorSpec` are independent.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence, Union

import numpy as np
from scipy import special, stats

from .sets import IntervalBox, SetRealization, contains, hits, set_from_json, set_to_json

QUANTILE_TOL = 1e-10
U_TRUNCATION = 1e-9
MASS_RENORMALIZE_TOL = 1e-9
_HALF_LOG_2PI = 0.5 * math.log(2 * math.pi)


class DomainError(ValueError):
    """A quantile was requested at a level where it is unbounded."""


def invert_cdf(cdf: Callable, u, lower: float = -math.inf, upper: float = math.inf, tol: float = QUANTILE_TOL):
    """Generalized inverse ``inf{x : cdf(x) >= u}`` by vectorized bisection.

    ``lower``/``upper`` bound the support when known; infinite ends are
    bracketed by doubling.  Raises :class:`DomainError` when no finite
    bracket exists (``u`` at 0 or 1 for an unbounded support).
    """
    u = np.asarray(u, dtype=float)
    scalar = u.ndim == 0
    u = np.atleast_1d(u)
    if np.any((u < 0) | (u > 1)) or np.any(np.isnan(u)):
        raise DomainError("quantile levels must lie in [0, 1]")
    lo = np.full(u.shape, lower if math.isfinite(lower) else -1.0)
    hi = np.full(u.shape, upper if math.isfinite(upper) else 1.0)
    if not math.isfinite(lower):
        bad = cdf(lo) >= u
        for _ in range(64):
            if not bad.any():
                break
            lo[bad] = 2.0 * lo[bad] - 1.0
            bad = cdf(lo) >= u
        else:
            raise DomainError(f"quantile unbounded below at level {u[bad].min()!r}")
    if not math.isfinite(upper):
        bad = cdf(hi) < u
        for _ in range(64):
            if not bad.any():
                break
            hi[bad] = 2.0 * hi[bad] + 1.0
            bad = cdf(hi) < u
        else:
            raise DomainError(f"quantile unbounded above at level {u[bad].max()!r}")
    while True:
        width = hi - lo
        if width.max() <= tol:
            break
        mid = lo + 0.5 * width
        # stop when the midpoint can no longer split the bracket in floating point
        stuck = (mid <= lo) | (mid >= hi)
        if stuck.all():
            break
        up = cdf(mid) >= u
        hi = np.where(up & ~stuck, mid, hi)
        lo = np.where(~up & ~stuck, mid, lo)
    return float(hi[0]) if scalar else hi


@dataclass(frozen=True)
class Distribution:
    """Named parametric distribution.

    ``lognormal`` is parametrized by the mean and standard deviation of the
    variate itself (not of its logarithm).
    """

    family: str
    params: tuple

    FAMILIES = {"normal": ("mean", "sd"), "lognormal": ("mean", "sd"), "uniform": ("lo", "hi")}

    def __post_init__(self):
        if self.family not in self.FAMILIES:
            raise ValueError(f"unknown distribution family {self.family!r}; known: {sorted(self.FAMILIES)}")
        if len(self.params) != 2:
            raise ValueError(f"{self.family} takes parameters {self.FAMILIES[self.family]}")
        a, b = self.params
        if self.family in ("normal", "lognormal") and not b > 0:
            raise ValueError("standard deviation must be positive")
        if self.family == "lognormal" and not a > 0:
            raise ValueError("lognormal mean must be positive")
        if self.family == "uniform" and not a < b:
            raise ValueError("uniform needs lo < hi")

    @classmethod
    def normal(cls, mean: float, sd: float) -> Distribution:
        return cls("normal", (float(mean), float(sd)))

    @classmethod
    def lognormal(cls, mean: float, sd: float) -> Distribution:
        return cls("lognormal", (float(mean), float(sd)))

    @classmethod
    def uniform(cls, lo: float, hi: float) -> Distribution:
        return cls("uniform", (float(lo), float(hi)))

    @property
    def log_params(self) -> tuple[float, float]:
        """``(mu, sigma)`` of the underlying normal for the lognormal family."""
        m, sd = self.params
        s2 = math.log1p((sd / m) ** 2)
        return math.log(m) - 0.5 * s2, math.sqrt(s2)

    @property
    def frozen(self):
        a, b = self.params
        if self.family == "normal":
            return stats.norm(loc=a, scale=b)
        if self.family == "lognormal":
            mu, sigma = self.log_params
            return stats.lognorm(s=sigma, scale=math.exp(mu))
        return stats.uniform(loc=a, scale=b - a)

    @property
    def support(self) -> tuple[float, float]:
        if self.family == "lognormal":
            return 0.0, math.inf
        if self.family == "uniform":
            return self.params
        return -math.inf, math.inf

    # closed forms below avoid building a scipy object per call

    def cdf(self, x):
        x = np.asarray(x, dtype=float)
        a, b = self.params
        if self.family == "normal":
            return special.ndtr((x - a) / b)
        if self.family == "lognormal":
            mu, sigma = self.log_params
            with np.errstate(divide="ignore", invalid="ignore"):
                return np.where(x > 0, special.ndtr((np.log(np.where(x > 0, x, 1.0)) - mu) / sigma), 0.0)
        return np.clip((x - a) / (b - a), 0.0, 1.0)

    def logpdf(self, x):
        x = np.asarray(x, dtype=float)
        a, b = self.params
        if self.family == "normal":
            z = (x - a) / b
            return -0.5 * z * z - math.log(b) - _HALF_LOG_2PI
        if self.family == "lognormal":
            mu, sigma = self.log_params
            pos = x > 0
            lx = np.log(np.where(pos, x, 1.0))
            z = (lx - mu) / sigma
            return np.where(pos, -lx - math.log(sigma) - _HALF_LOG_2PI - 0.5 * z * z, -np.inf)
        return np.where((x >= a) & (x <= b), -math.log(b - a), -np.inf)

    def pdf(self, x):
        return np.exp(self.logpdf(x))

    def quantile(self, u):
        lo, hi = self.support
        return invert_cdf(self.cdf, u, lo, hi)

    def to_json(self) -> dict:
        return {"family": self.family, **dict(zip(self.FAMILIES[self.family], self.params))}

    @classmethod
    def from_json(cls, obj: dict) -> Distribution:
        family = obj["family"]
        names = cls.FAMILIES.get(family)
        if names is None:
            raise ValueError(f"unknown distribution family {family!r}")
        return cls(family, tuple(float(obj[n]) for n in names))


# ----------------------------------------------------------- mass functions


class MassFunction:
    """Dempster-Shafer mass function over a finite list of nonempty focal sets."""

    def __init__(self, focal: Sequence[SetRealization], mass: Sequence[float]):
        focal = tuple(focal)
        mass = np.asarray(mass, dtype=float)
        if len(focal) == 0 or len(focal) != len(mass):
            raise ValueError("focal sets and masses must be nonempty and equally long")
        if np.any(~np.isfinite(mass)) or np.any(mass <= 0):
            raise ValueError("every focal mass must be positive")
        if any(f.is_empty for f in focal):
            raise ValueError("the empty set cannot carry mass")
        if len({f.dim for f in focal}) != 1:
            raise ValueError("focal sets must share one dimension")
        total = float(mass.sum())
        if abs(total - 1.0) > MASS_RENORMALIZE_TOL:
            raise ValueError(f"masses sum to {total!r}, expected 1")
        mass = mass / total
        mass.flags.writeable = False
        self.focal = focal
        self.mass = mass
        self.dim = focal[0].dim

    def __len__(self):
        return len(self.focal)

    def __iter__(self):
        return zip(self.focal, self.mass)

    def __repr__(self):
        body = ", ".join(f"{f!r}: {m:.6g}" for f, m in self)
        return f"MassFunction({{{body}}})"

    @property
    def cumulative(self) -> np.ndarray:
        return np.cumsum(self.mass)

    def focal_intervals(self) -> tuple[np.ndarray, np.ndarray]:
        """Endpoints of 1-D interval focal sets as two arrays."""
        if self.dim != 1 or not all(isinstance(f, IntervalBox) for f in self.focal):
            raise TypeError("a prior dimension needs a mass function over 1-D intervals")
        return np.array([f.lo[0] for f in self.focal]), np.array([f.hi[0] for f in self.focal])

    def index_of(self, u) -> np.ndarray:
        u = np.asarray(u, dtype=float)
        idx = np.searchsorted(self.cumulative, u, side="left")
        return np.minimum(idx, len(self.mass) - 1)

    def to_json(self) -> dict:
        return {"focal": [set_to_json(f) for f in self.focal], "mass": [float(m) for m in self.mass]}

    @classmethod
    def from_json(cls, obj: dict) -> MassFunction:
        return cls([set_from_json(f) for f in obj["focal"]], obj["mass"])


def mass_to_random_set(m: MassFunction, u: float) -> SetRealization:
    """Focal set selected by ``u`` through the cumulative-mass partition of ``[0, 1]``."""
    if not 0.0 <= u <= 1.0:
        raise ValueError(f"u must lie in [0, 1], got {u!r}")
    return m.focal[int(m.index_of(u))]


def bel_pl(m: MassFunction, query) -> tuple[float, float]:
    """Belief and plausibility of a box-shaped query."""
    bel = sum(w for f, w in m if contains(f, query))
    pl = sum(w for f, w in m if hits(f, query))
    return float(bel), float(pl)


# ------------------------------------------------------------------ p-boxes

CdfLike = Union[Distribution, Callable]


def _cdf_of(c: CdfLike) -> Callable:
    return c.cdf if isinstance(c, Distribution) else c


def _support_of(c: CdfLike) -> tuple[float, float]:
    return c.support if isinstance(c, Distribution) else (-math.inf, math.inf)


@dataclass(frozen=True)
class PBoxDim:
    """One coordinate of a p-box: ``upper`` dominates ``lower`` pointwise."""

    upper: CdfLike
    lower: CdfLike

    def __post_init__(self):
        grid = self._check_grid()
        up, low = np.asarray(_cdf_of(self.upper)(grid)), np.asarray(_cdf_of(self.lower)(grid))
        if np.any(up < low - 1e-12):
            x = grid[np.argmax(low - up)]
            raise ValueError(f"upper cdf falls below lower cdf at x={x:g}")

    def _check_grid(self) -> np.ndarray:
        levels = np.linspace(1e-6, 1 - 1e-6, 201)
        pts = [invert_cdf(_cdf_of(c), levels, *_support_of(c), tol=1e-6) for c in (self.upper, self.lower)]
        return np.unique(np.concatenate(pts))

    def upper_cdf(self, x):
        return _cdf_of(self.upper)(x)

    def lower_cdf(self, x):
        return _cdf_of(self.lower)(x)

    def interval(self, u) -> tuple[np.ndarray, np.ndarray]:
        u = np.asarray(u, dtype=float)
        if np.any((u <= 0) | (u >= 1)):
            raise DomainError("p-box quantile levels must lie strictly inside (0, 1)")
        lo = invert_cdf(_cdf_of(self.upper), u, *_support_of(self.upper))
        hi = invert_cdf(_cdf_of(self.lower), u, *_support_of(self.lower))
        # bisection noise can invert an interval of zero true width
        return np.minimum(lo, hi), np.maximum(lo, hi)

    def outer_range(self, level: float = U_TRUNCATION) -> tuple[float, float]:
        """Range covered by realizations whose level lies in ``[level, 1 - level]``."""
        lo = invert_cdf(_cdf_of(self.upper), level, *_support_of(self.upper))
        hi = invert_cdf(_cdf_of(self.lower), 1.0 - level, *_support_of(self.lower))
        return lo, hi

    def to_json(self) -> dict:
        if not isinstance(self.upper, Distribution) or not isinstance(self.lower, Distribution):
            raise TypeError("only p-boxes bounded by named distributions can be serialized")
        return {"kind": "pbox", "upper": self.upper.to_json(), "lower": self.lower.to_json()}


class PBox(tuple):
    """Tuple of independent :class:`PBoxDim` coordinates."""

    def __new__(cls, dims):
        dims = tuple(dims)
        if not dims or not all(isinstance(d, PBoxDim) for d in dims):
            raise TypeError("a PBox is a nonempty sequence of PBoxDim")
        return super().__new__(cls, dims)


def pbox_to_random_set(p, u) -> IntervalBox:
    """Box ``[upper_i^-1(u_i), lower_i^-1(u_i)]`` per coordinate."""
    if isinstance(p, PBoxDim):
        p = PBox([p])
    u = np.atleast_1d(np.asarray(u, dtype=float))
    if u.shape != (len(p),):
        raise ValueError(f"need one level per dimension ({len(p)}), got {u.shape}")
    lo, hi = zip(*(d.interval(ui) for d, ui in zip(p, u)))
    return IntervalBox(np.array(lo, dtype=float), np.array(hi, dtype=float))


# -------------------------------------------------------------- prior specs


@dataclass(frozen=True)
class RandomVariable:
    """Precise prior on one coordinate: a singleton random set."""

    dist: Distribution

    def to_json(self) -> dict:
        return {"kind": "rv", "dist": self.dist.to_json()}


PriorDim = Union[PBoxDim, MassFunction, RandomVariable, IntervalBox]


class PriorSpec:
    """Independent per-coordinate prior descriptions forming a product random set."""

    def __init__(self, dims: Sequence[PriorDim], names: Sequence[str] | None = None):
        dims = tuple(dims)
        if not dims:
            raise ValueError("a prior needs at least one dimension")
        for d in dims:
            if isinstance(d, MassFunction):
                d.focal_intervals()
            elif isinstance(d, IntervalBox):
                if d.dim != 1 or not d.is_bounded:
                    raise ValueError("fixed-interval dimensions must be bounded 1-D intervals")
            elif not isinstance(d, (PBoxDim, RandomVariable)):
                raise TypeError(f"unsupported prior dimension {type(d).__name__}")
        self.dims = dims
        self.names = tuple(names) if names is not None else tuple(f"x{i}" for i in range(len(dims)))
        if len(self.names) != len(dims):
            raise ValueError("one name per dimension")

    def __len__(self):
        return len(self.dims)

    @property
    def kinds(self) -> tuple[str, ...]:
        return tuple(_kind(d) for d in self.dims)

    @property
    def is_random_variable(self) -> bool:
        """True when every coordinate is precise (random variable or a single point)."""
        return all(
            isinstance(d, RandomVariable) or (isinstance(d, IntervalBox) and d.lo[0] == d.hi[0])
            for d in self.dims
        )

    @property
    def is_atomic(self) -> bool:
        """True when the prior lives on finitely many realizations (no continuous coordinate)."""
        return all(isinstance(d, (MassFunction, IntervalBox)) for d in self.dims)

    def sample_boxes(self, n: int, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
        """``n`` independent realizations as stacked ``(lo, hi)`` arrays of shape ``(n, dim)``."""
        u = rng.uniform(size=(n, len(self.dims)))
        return self.boxes_from_levels(u)

    def boxes_from_levels(self, u) -> tuple[np.ndarray, np.ndarray]:
        u = np.atleast_2d(np.asarray(u, dtype=float))
        lo = np.empty_like(u)
        hi = np.empty_like(u)
        for k, d in enumerate(self.dims):
            lo[:, k], hi[:, k] = _dim_interval(d, u[:, k])
        return lo, hi

    def to_json(self) -> list:
        out = []
        for name, d in zip(self.names, self.dims):
            if isinstance(d, MassFunction):
                entry = {"kind": "mass", **d.to_json()}
            elif isinstance(d, IntervalBox):
                entry = {"kind": "interval", "lo": float(d.lo[0]), "hi": float(d.hi[0])}
            else:
                entry = d.to_json()
            out.append({"name": name, **entry})
        return out

    @classmethod
    def from_json(cls, entries: list) -> PriorSpec:
        dims, names = [], []
        for k, e in enumerate(entries):
            kind = e.get("kind")
            if kind == "pbox":
                dims.append(PBoxDim(Distribution.from_json(e["upper"]), Distribution.from_json(e["lower"])))
            elif kind == "mass":
                dims.append(MassFunction.from_json(e))
            elif kind == "rv":
                dims.append(RandomVariable(Distribution.from_json(e["dist"])))
            elif kind == "interval":
                dims.append(IntervalBox.interval(float(e["lo"]), float(e["hi"])))
            else:
                raise ValueError(f"prior dimension {k}: unknown kind {kind!r}")
            names.append(e.get("name", f"x{k}"))
        return cls(dims, names)


def _kind(d) -> str:
    if isinstance(d, PBoxDim):
        return "pbox"
    if isinstance(d, MassFunction):
        return "mass"
    if isinstance(d, RandomVariable):
        return "rv"
    return "interval"


def _dim_interval(d, u: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    if isinstance(d, MassFunction):
        flo, fhi = d.focal_intervals()
        idx = d.index_of(u)
        return flo[idx], fhi[idx]
    if isinstance(d, IntervalBox):
        return np.full(u.shape, d.lo[0]), np.full(u.shape, d.hi[0])
    u = np.clip(u, U_TRUNCATION, 1.0 - U_TRUNCATION)
    if isinstance(d, PBoxDim):
        return d.interval(u)
    x = d.dist.quantile(u)
    return x, x.copy()


def prior_sampler(spec: PriorSpec, seed) -> IntervalBox:
    """One product realization of the prior, reproducible from ``seed``."""
    rng = np.random.default_rng(seed)
    lo, hi = spec.sample_boxes(1, rng)
    return IntervalBox(lo[0], hi[0])
