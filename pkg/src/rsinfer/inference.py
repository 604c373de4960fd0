"""Updating a prior random set with interval-valued noisy measurements.

The measurement-induced random set is never built explicitly.  It enters
through two functions of a parameter vector ``x``: membership for a given
noise draw, and the likelihood (the probability over the noise that the
model response lands in the observation box).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from scipy import special, stats

from .models import (
    U_TRUNCATION,
    MassFunction,
    PBoxDim,
    PriorSpec,
    RandomVariable,
)
from .sets import Empty, IntervalBox, intersect, member, set_equal

TOTAL_CONFLICT_TOL = 1e-12


class TotalConflictError(RuntimeError):
    """Prior and data share no realization: the combination is undefined."""


# -------------------------------------------------------------------- noise


@dataclass(frozen=True)
class Noise:
    """Zero-mean additive noise of one channel."""

    family: str = "gaussian"
    scale: float = 1.0

    FAMILIES = ("gaussian", "laplace", "logistic")

    def __post_init__(self):
        family = {"normal": "gaussian"}.get(self.family, self.family)
        object.__setattr__(self, "family", family)
        if family not in self.FAMILIES:
            raise ValueError(f"unknown noise family {self.family!r}; known: {self.FAMILIES}")
        if not self.scale > 0:
            raise ValueError("noise scale must be positive")

    @property
    def _std(self):
        return {"gaussian": stats.norm, "laplace": stats.laplace, "logistic": stats.logistic}[self.family]

    def cdf(self, e):
        return self._std.cdf(np.asarray(e, dtype=float) / self.scale)

    def sample(self, rng: np.random.Generator, size) -> np.ndarray:
        z = {
            "gaussian": rng.standard_normal,
            "laplace": lambda s: rng.laplace(size=s),
            "logistic": lambda s: rng.logistic(size=s),
        }[self.family](size)
        return self.scale * z

    def log_prob(self, lo, hi):
        """``log P(lo <= e <= hi)``."""
        return _log_interval_mass(self.family, np.asarray(lo, dtype=float) / self.scale, np.asarray(hi, dtype=float) / self.scale)

    def sample_truncated(self, rng: np.random.Generator, size: int, lo, hi) -> np.ndarray:
        """Draws conditioned on ``lo <= e <= hi`` by inversion; bounds broadcast against ``size``.

        Upper-tail intervals are inverted through the survival function to
        keep precision far from the mode.
        """
        a = np.broadcast_to(np.asarray(lo, dtype=float) / self.scale, (size,))
        b = np.broadcast_to(np.asarray(hi, dtype=float) / self.scale, (size,))
        if np.any(~(a < b)):
            raise ValueError("truncation intervals must have lo < hi")
        d = self._std
        u = rng.uniform(size=size)
        upper = a > 0
        with np.errstate(invalid="ignore", over="ignore"):
            sa, sb = d.sf(a), d.sf(b)
            ca, cb = d.cdf(a), d.cdf(b)
            z = np.where(upper, d.isf(sb + u * (sa - sb)), d.ppf(ca + u * (cb - ca)))
        return self.scale * np.clip(z, a, b)


def _log_std_cdf(family: str, t):
    if family == "gaussian":
        return special.log_ndtr(t)
    return {"laplace": stats.laplace, "logistic": stats.logistic}[family].logcdf(t)


def _log_std_sf(family: str, t):
    if family == "gaussian":
        return special.log_ndtr(-t)
    return {"laplace": stats.laplace, "logistic": stats.logistic}[family].logsf(t)


def _log_interval_mass(family: str, a, b):
    """``log(F(b) - F(a))`` for a standardized symmetric law, stable in both tails."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        upper_tail = a > 0
        la, lb = _log_std_cdf(family, a), _log_std_cdf(family, b)
        sa, sb = _log_std_sf(family, a), _log_std_sf(family, b)
        via_cdf = lb + np.log1p(-np.exp(la - lb))
        via_sf = sa + np.log1p(-np.exp(sb - sa))
        out = np.where(upper_tail, via_sf, via_cdf)
    return np.where(np.isnan(out), -np.inf, out)


# -------------------------------------------------------- measurement model


class MeasurementModel:
    """Forward model, per-channel observation intervals and per-channel noise.

    ``forward`` maps a parameter vector to the vector of model responses.
    ``reentrant`` tells callers whether the forward model may be evaluated
    from several threads at once.
    """

    def __init__(self, forward: Callable, z_lo, z_hi, noise, names: Sequence[str] | None = None, reentrant=True):
        z_lo = np.atleast_1d(np.asarray(z_lo, dtype=float))
        z_hi = np.atleast_1d(np.asarray(z_hi, dtype=float))
        if z_lo.ndim != 1 or z_lo.shape != z_hi.shape or z_lo.size == 0:
            raise ValueError("observation bounds must be nonempty equal-length vectors")
        if np.any(np.isnan(z_lo)) or np.any(np.isnan(z_hi)) or np.any(z_lo >= z_hi):
            raise ValueError("every observation interval needs z_lo < z_hi (nonempty interior)")
        if isinstance(noise, Noise):
            noise = [noise] * z_lo.size
        noise = tuple(noise)
        if len(noise) != z_lo.size:
            raise ValueError(f"{len(noise)} noise laws for {z_lo.size} channels")
        self.forward = forward
        self.z_lo, self.z_hi = z_lo, z_hi
        self.noise = noise
        self.names = tuple(names) if names is not None else tuple(f"z{i}" for i in range(z_lo.size))
        self.reentrant = reentrant
        self._scales = np.array([n.scale for n in noise])
        self._groups = {}
        for k, n in enumerate(noise):
            self._groups.setdefault(n.family, []).append(k)
        self._groups = {f: np.array(ix) for f, ix in self._groups.items()}

    @property
    def n_channels(self) -> int:
        return self.z_lo.size

    def subset(self, channels: Sequence[int]) -> MeasurementModel:
        """Model restricted to the given channels (the forward response is sliced)."""
        idx = np.asarray(channels, dtype=int)
        fwd = self.forward
        return MeasurementModel(
            lambda x: np.asarray(fwd(x))[idx],
            self.z_lo[idx],
            self.z_hi[idx],
            [self.noise[i] for i in idx],
            [self.names[i] for i in idx],
            self.reentrant,
        )

    def response(self, x) -> np.ndarray:
        r = np.atleast_1d(np.asarray(self.forward(np.asarray(x, dtype=float)), dtype=float))
        if r.shape != (self.n_channels,):
            raise ValueError(f"forward model returned shape {r.shape}, expected ({self.n_channels},)")
        return r

    def log_likelihood_of_response(self, u) -> float | np.ndarray:
        """Log-likelihood from model responses ``u`` of shape ``(m,)`` or ``(k, m)``."""
        u = np.asarray(u, dtype=float)
        a = (self.z_lo - u) / self._scales
        b = (self.z_hi - u) / self._scales
        total = np.zeros(u.shape[:-1])
        for family, idx in self._groups.items():
            total = total + _log_interval_mass(family, a[..., idx], b[..., idx]).sum(axis=-1)
        return total if total.ndim else float(total)

    def sample_noise(self, rng: np.random.Generator, n: int) -> np.ndarray:
        """``n`` noise vectors, shape ``(n, m)``."""
        out = np.empty((n, self.n_channels))
        for k, nz in enumerate(self.noise):
            out[:, k] = nz.sample(rng, n)
        return out

    def consistent(self, responses, eps) -> np.ndarray:
        """Boolean matrix: does ``response[k] + eps[j]`` fall in the observation box."""
        responses = np.atleast_2d(responses)
        eps = np.atleast_2d(eps)
        z = responses[None, :, :] + eps[:, None, :]
        return np.all((z >= self.z_lo) & (z <= self.z_hi), axis=2)


def data_set_membership(mm: MeasurementModel, eps, x) -> bool:
    """Membership of ``x`` in the measurement-induced set for the noise draw ``eps``."""
    eps = np.atleast_1d(np.asarray(eps, dtype=float))
    if eps.shape != (mm.n_channels,):
        raise ValueError(f"noise draw has shape {eps.shape}, expected ({mm.n_channels},)")
    z = mm.response(x) + eps
    return bool(np.all((z >= mm.z_lo) & (z <= mm.z_hi)))


def likelihood(mm: MeasurementModel, x) -> float:
    """Probability over the noise that the response at ``x`` lands in the observation box."""
    return math.exp(mm.log_likelihood_of_response(mm.response(x)))


def posterior_membership(prior_realization, mm: MeasurementModel, eps, x) -> bool:
    """Membership of ``x`` in ``prior_realization`` intersected with the data set for ``eps``."""
    if prior_realization.is_empty:
        raise ValueError("prior realization must be nonempty")
    return member(prior_realization, x) and data_set_membership(mm, eps, x)


# -------------------------------------------------------------- densities


class UnnormalizedDensity:
    """Nonnegative function known up to a constant, with a box hinting its support."""

    def __init__(self, log_fn: Callable, support: IntervalBox):
        self._log_fn = log_fn
        self.support = support
        self.dim = support.dim

    def log_density(self, x) -> float:
        return float(self._log_fn(np.atleast_1d(np.asarray(x, dtype=float))))

    def log_density_and_response(self, x):
        return self.log_density(x), None

    def __call__(self, x) -> float:
        return math.exp(self.log_density(x))


def _dim_log_capacity(d, x: float) -> float:
    with np.errstate(divide="ignore"):
        if isinstance(d, PBoxDim):
            gap = float(d.upper_cdf(x)) - float(d.lower_cdf(x))
            return math.log(gap) if gap > 0 else -math.inf
        if isinstance(d, MassFunction):
            lo, hi = d.focal_intervals()
            w = float(d.mass[(lo <= x) & (x <= hi)].sum())
            return math.log(w) if w > 0 else -math.inf
        if isinstance(d, RandomVariable):
            return float(d.dist.logpdf(x))
    return 0.0 if d.lo[0] <= x <= d.hi[0] else -math.inf


def _dim_support(d) -> tuple[float, float]:
    if isinstance(d, PBoxDim):
        return d.outer_range()
    if isinstance(d, MassFunction):
        lo, hi = d.focal_intervals()
        return float(lo.min()), float(hi.max())
    if isinstance(d, RandomVariable):
        return d.dist.quantile(U_TRUNCATION), d.dist.quantile(1 - U_TRUNCATION)
    return float(d.lo[0]), float(d.hi[0])


def capacity_transform_prior(spec: PriorSpec) -> UnnormalizedDensity:
    """Unnormalized single-point hit density of the prior random set.

    Per coordinate: ``upper_cdf - lower_cdf`` for a p-box, the summed mass
    of covering focal intervals for a mass function, the pdf for a random
    variable and the indicator for a fixed interval.  Coordinates multiply.
    """
    for d in spec.dims:
        if isinstance(d, IntervalBox) and d.lo[0] == d.hi[0]:
            raise ValueError("a single-point coordinate has no density; drop it from the parameter vector")
    dims = spec.dims

    def log_fn(x):
        if x.shape != (len(dims),):
            raise ValueError(f"expected a point of dimension {len(dims)}, got shape {x.shape}")
        total = 0.0
        for d, xi in zip(dims, x):
            total += _dim_log_capacity(d, float(xi))
            if total == -math.inf:
                break
        return total

    lo, hi = zip(*(_dim_support(d) for d in dims))
    return UnnormalizedDensity(log_fn, IntervalBox(lo, hi))


class PosteriorDensity(UnnormalizedDensity):
    """Prior capacity density times the likelihood; the MCMC target.

    The forward model is evaluated only where the prior factor is positive,
    and the response is handed back so samplers can store it.
    """

    def __init__(self, prior: UnnormalizedDensity, mm: MeasurementModel):
        super().__init__(self._log_only, prior.support)
        self.prior = prior
        self.model = mm

    def _log_only(self, x):
        return self.log_density_and_response(x)[0]

    def log_density_and_response(self, x):
        x = np.atleast_1d(np.asarray(x, dtype=float))
        lp = self.prior.log_density(x)
        if lp == -math.inf:
            return -math.inf, None
        u = self.model.response(x)
        return lp + self.model.log_likelihood_of_response(u), u


def posterior_capacity_density(prior: UnnormalizedDensity, mm: MeasurementModel) -> PosteriorDensity:
    """Capacity-transform density of the posterior random set, up to a constant."""
    return PosteriorDensity(prior, mm)


# --------------------------------------------------------- Dempster's rule


@dataclass(frozen=True)
class CombinationResult:
    combined: MassFunction
    conflict: float


def dempster_combine(m1: MassFunction, m2: MassFunction, tol: float = 1e-12) -> CombinationResult:
    """Exact Dempster combination by enumeration of all focal pairs.

    Equal intersections (coordinates within ``tol``) are merged.  Raises
    :class:`TotalConflictError` when every pair has an empty intersection.
    """
    if m1.dim != m2.dim:
        raise ValueError(f"mass functions live in different dimensions ({m1.dim} vs {m2.dim})")
    sets, weights = [], []
    conflict = 0.0
    for f1, w1 in m1:
        for f2, w2 in m2:
            w = float(w1) * float(w2)
            s = intersect(f1, f2)
            if isinstance(s, Empty):
                conflict += w
                continue
            for k, seen in enumerate(sets):
                if set_equal(s, seen, tol):
                    weights[k] += w
                    break
            else:
                sets.append(s)
                weights.append(w)
    if conflict >= 1.0 - TOTAL_CONFLICT_TOL or not sets:
        raise TotalConflictError("the two bodies of evidence are in total conflict (K = 1)")
    norm = 1.0 - conflict
    return CombinationResult(MassFunction(sets, [w / norm for w in weights]), conflict)


def monte_carlo_combine(m1: MassFunction, m2: MassFunction, n: int, rng: np.random.Generator) -> CombinationResult:
    """Sampled version of the combination: draw both random sets, intersect, drop empties.

    The returned conflict is the fraction of empty intersections and the
    masses are the relative frequencies of the nonempty ones.
    """
    i = m1.index_of(rng.uniform(size=n))
    j = m2.index_of(rng.uniform(size=n))
    counts = np.bincount(i * len(m2) + j, minlength=len(m1) * len(m2)).reshape(len(m1), len(m2))
    sets, freq = [], []
    empty = 0
    for a in range(len(m1)):
        for b in range(len(m2)):
            c = int(counts[a, b])
            if c == 0:
                continue
            s = intersect(m1.focal[a], m2.focal[b])
            if isinstance(s, Empty):
                empty += c
                continue
            for k, seen in enumerate(sets):
                if set_equal(s, seen):
                    freq[k] += c
                    break
            else:
                sets.append(s)
                freq.append(c)
    if not sets:
        raise TotalConflictError("every sampled intersection was empty")
    kept = n - empty
    return CombinationResult(MassFunction(sets, [c / kept for c in freq]), empty / n)
