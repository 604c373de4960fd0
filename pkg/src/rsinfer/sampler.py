"""Sampling the posterior random set through a random discrete set.

The pipeline has two stages.  :func:`mh_sample` draws ``kappa`` atoms from
the posterior capacity-transform density and records the model response at
each of them.  :func:`algorithm_one` then pairs prior realizations with
noise draws and keeps, for each pair, the atoms inside the prior
realization whose stored response is consistent with the data under that
noise draw.  The second stage never evaluates the forward model.
"""

from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .core import direction_grid
from .inference import MeasurementModel, TotalConflictError, UnnormalizedDensity
from .models import PriorSpec, RandomVariable
from .sets import IntervalBox, Points, SetRealization, hausdorff_distance, intersect

log = logging.getLogger(__name__)

ACCEPTANCE_WARN_RANGE = (0.05, 0.9)
TUNE_TARGET = (0.2, 0.4)


def derive_seed(master: int, *keys: int) -> int:
    """Sub-seed for component ``keys`` of a run seeded with ``master``."""
    ss = np.random.SeedSequence(int(master), spawn_key=tuple(int(k) for k in keys))
    return int(ss.generate_state(1, dtype=np.uint64)[0] >> np.uint64(1))


# ---------------------------------------------------------------------- MCMC


@dataclass
class McmcConfig:
    kappa: int
    burn_in: int = 1000
    proposal_scale: Sequence[float] | None = None
    seed: int = 0
    init: Sequence[float] | None = None
    thin: int = 1
    tune: bool = True
    pilot_steps: int = 400

    def __post_init__(self):
        if self.kappa < 1:
            raise ValueError("kappa must be at least 1")
        if self.burn_in < 0:
            raise ValueError("burn_in must be nonnegative")
        if self.thin < 1:
            raise ValueError("thin must be at least 1")
        if self.proposal_scale is not None and np.any(np.asarray(self.proposal_scale, dtype=float) <= 0):
            raise ValueError("proposal_scale must be positive in every coordinate")


@dataclass
class AtomSet:
    """Chain states kept after burn-in together with their model responses."""

    atoms: np.ndarray
    responses: np.ndarray
    acceptance_rate: float
    log_density: np.ndarray | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.atoms = np.atleast_2d(np.asarray(self.atoms, dtype=float))
        self.responses = np.asarray(self.responses, dtype=float).reshape(len(self.atoms), -1)
        if self.atoms.ndim != 2 or self.atoms.shape[0] == 0:
            raise ValueError("an atom set needs at least one atom")

    @property
    def kappa(self) -> int:
        return self.atoms.shape[0]

    @property
    def dim(self) -> int:
        return self.atoms.shape[1]

    def unique_index(self) -> np.ndarray:
        """Index of the first occurrence of every distinct atom, ascending."""
        _, first = np.unique(self.atoms, axis=0, return_index=True)
        return np.sort(first)


def _evaluator(target: UnnormalizedDensity, forward: Callable | None):
    def evaluate(x):
        lp, resp = target.log_density_and_response(x)
        if resp is None and forward is not None and lp > -math.inf:
            resp = np.atleast_1d(np.asarray(forward(x), dtype=float))
        return lp, resp

    return evaluate


def find_start(target: UnnormalizedDensity, rng: np.random.Generator, tries: int = 20000) -> np.ndarray:
    """Rejection search for a point of positive density, uniform over the support hint."""
    lo, hi = target.support.lo, target.support.hi
    if not target.support.is_bounded:
        raise ValueError("cannot search for a start point in an unbounded support; give init explicitly")
    center = 0.5 * (lo + hi)
    if target.log_density(center) > -math.inf:
        return center
    for _ in range(tries):
        x = rng.uniform(lo, hi)
        if target.log_density(x) > -math.inf:
            return x
    raise ValueError(f"no point of positive density found in {tries} uniform draws over the support")


def _run_chain(evaluate, x, lp, resp, scale, steps, rng, keep_every=1, keep_from=0):
    n = x.size
    kept = (steps - keep_from) // keep_every if steps > keep_from else 0
    xs = np.empty((kept, n))
    lps = np.empty(kept)
    rs = [None] * kept
    z = rng.standard_normal((steps, n)) * scale
    logu = np.log(rng.uniform(size=steps))
    accepted = 0
    k = 0
    for t in range(steps):
        y = x + z[t]
        lp_y, resp_y = evaluate(y)
        if lp_y > -math.inf and logu[t] < lp_y - lp:
            x, lp, resp = y, lp_y, resp_y
            if t >= keep_from:
                accepted += 1
        if t >= keep_from and (t - keep_from) % keep_every == keep_every - 1:
            xs[k], lps[k], rs[k] = x, lp, resp
            k += 1
    counted = steps - keep_from
    return x, lp, resp, xs, lps, rs, (accepted / counted if counted > 0 else 0.0)


def tune_scale(evaluate, x, lp, resp, scale, rng, pilot_steps=400, max_rounds=12):
    """Pilot runs halving or doubling the step until acceptance sits in 20-40 %."""
    rate = float("nan")
    for _ in range(max_rounds):
        x, lp, resp, _, _, _, rate = _run_chain(evaluate, x, lp, resp, scale, pilot_steps, rng, keep_from=0)
        if rate < TUNE_TARGET[0]:
            scale = scale / 2.0
        elif rate > TUNE_TARGET[1]:
            scale = scale * 2.0
        else:
            break
    return scale, x, lp, resp, rate


def mh_sample(target: UnnormalizedDensity, forward: Callable | None, cfg: McmcConfig) -> AtomSet:
    """Gaussian random-walk Metropolis chain targeting the normalized ``target``.

    Responses are recorded for every kept state, so no forward evaluation
    is needed afterwards.  Deterministic for a fixed ``cfg.seed``.
    """
    evaluate = _evaluator(target, forward)
    init_rng = np.random.default_rng([cfg.seed, 2])
    x0 = np.asarray(cfg.init, dtype=float) if cfg.init is not None else find_start(target, init_rng)
    if x0.shape != (target.dim,):
        raise ValueError(f"init has shape {x0.shape}, target has dimension {target.dim}")
    lp0, resp0 = evaluate(x0)
    if lp0 == -math.inf:
        raise ValueError(f"target density is zero at the initial point {x0.tolist()}")
    if cfg.proposal_scale is not None:
        scale = np.broadcast_to(np.asarray(cfg.proposal_scale, dtype=float), x0.shape).copy()
    else:
        width = target.support.widths
        scale = np.where(np.isfinite(width) & (width > 0), 0.1 * width, 1.0)
    pilot_rate = None
    if cfg.tune:
        scale, x0, lp0, resp0, pilot_rate = tune_scale(
            evaluate, x0, lp0, resp0, scale, np.random.default_rng([cfg.seed, 1]), cfg.pilot_steps
        )
    rng = np.random.default_rng([cfg.seed, 0])
    steps = cfg.burn_in + cfg.kappa * cfg.thin
    _, _, _, xs, lps, rs, rate = _run_chain(
        evaluate, x0, lp0, resp0, scale, steps, rng, keep_every=cfg.thin, keep_from=cfg.burn_in
    )
    if rs and rs[0] is not None:
        responses = np.vstack(rs)
    else:
        responses = np.empty((cfg.kappa, 0))
    meta = {
        "seed": cfg.seed,
        "kappa": cfg.kappa,
        "burn_in": cfg.burn_in,
        "thin": cfg.thin,
        "proposal_scale": scale.tolist(),
        "pilot_acceptance": pilot_rate,
        "acceptance_rate": rate,
        "warnings": [],
    }
    if not ACCEPTANCE_WARN_RANGE[0] <= rate <= ACCEPTANCE_WARN_RANGE[1]:
        msg = f"acceptance rate {rate:.3f} outside {list(ACCEPTANCE_WARN_RANGE)}"
        meta["warnings"].append(msg)
        log.warning(msg)
    return AtomSet(xs, responses, rate, lps, meta)


# ------------------------------------------------------------ set sampling


@dataclass
class AlgoOneConfig:
    n_prior: int = 200
    n_eps: int = 200
    seed: int = 0
    rv_radius: float | None = None
    conditioned_noise: bool = False

    def __post_init__(self):
        if self.n_prior < 1 or self.n_eps < 1:
            raise ValueError("n_prior and n_eps must be at least 1")
        if self.rv_radius is not None and not self.rv_radius > 0:
            raise ValueError("rv_radius must be positive")


@dataclass(frozen=True)
class PosteriorDiscreteSample:
    """Indices into an :class:`AtomSet` forming one draw of the discrete posterior set."""

    indices: tuple

    def __post_init__(self):
        idx = tuple(int(i) for i in self.indices)
        if not idx:
            raise ValueError("a posterior sample is never empty")
        if any(b <= a for a, b in zip(idx, idx[1:])):
            raise ValueError("indices must be sorted and unique")
        object.__setattr__(self, "indices", idx)

    def as_set(self, atoms: AtomSet) -> Points:
        return Points(atoms.atoms[list(self.indices)])


class PosteriorSamples:
    """All samples of one :func:`algorithm_one` run in compressed form.

    ``indices[offsets[k]:offsets[k + 1]]`` are the atom indices of sample
    ``k``; ``pairs[k]`` is the (prior draw, noise draw) pair that produced
    it.  Sequence access yields :class:`PosteriorDiscreteSample` objects.
    """

    def __init__(self, indices, offsets, pairs, n_candidates: int, conflict: float | None, meta=None):
        self.indices = np.asarray(indices, dtype=np.int64)
        self.offsets = np.asarray(offsets, dtype=np.int64)
        self.pairs = np.asarray(pairs, dtype=np.int64).reshape(-1, 2)
        self.n_candidates = int(n_candidates)
        self.conflict = conflict
        self.meta = dict(meta or {})
        if len(self.offsets) != len(self.pairs) + 1:
            raise ValueError("offsets must have one more entry than there are samples")
        if len(self.pairs) and np.any(np.diff(self.offsets) < 1):
            raise ValueError("posterior samples must be nonempty")

    def __len__(self):
        return len(self.pairs)

    def __getitem__(self, k) -> PosteriorDiscreteSample:
        if not -len(self) <= k < len(self):
            raise IndexError(k)
        k %= len(self)
        return PosteriorDiscreteSample(tuple(self.indices[self.offsets[k] : self.offsets[k + 1]]))

    def __iter__(self):
        for k in range(len(self)):
            yield self[k]

    @property
    def sizes(self) -> np.ndarray:
        return np.diff(self.offsets)

    def to_sets(self, atoms: AtomSet) -> list[Points]:
        return [s.as_set(atoms) for s in self]

    def reduce(self, values: np.ndarray, op) -> np.ndarray:
        """Apply ``op.reduceat`` of per-atom ``values`` over every sample."""
        return op.reduceat(values[self.indices], self.offsets[:-1], axis=0)


def _prior_boxes(prior: PriorSpec, cfg: AlgoOneConfig, rng) -> tuple[np.ndarray, np.ndarray]:
    lo, hi = prior.sample_boxes(cfg.n_prior, rng)
    rv = np.array([isinstance(d, RandomVariable) for d in prior.dims])
    if rv.any() and not rv.all():
        if cfg.rv_radius is None:
            raise ValueError(
                "a prior mixing random-variable and set-valued coordinates needs rv_radius: "
                "point realizations almost never contain an atom"
            )
        lo[:, rv] -= cfg.rv_radius
        hi[:, rv] += cfg.rv_radius
    return lo, hi


def _noise_envelope(mm: MeasurementModel, responses: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Per-channel range of noise values that leaves at least one atom consistent."""
    return mm.z_lo - responses.max(axis=0), mm.z_hi - responses.min(axis=0)


CELL_FRACTION = 0.125


def _noise_cells(mm: MeasurementModel, responses: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Noise boxes covering every atom's consistency box, one per occupied response cell.

    Response space is cut into cells of ``CELL_FRACTION`` of each finite
    observation window; a channel with an infinite window gets one cell.
    Atom ``k`` is consistent only for noise in ``Z - h_k``, which lies
    inside ``Z - cell(h_k)``.
    """
    width = mm.z_hi - mm.z_lo
    finite = np.isfinite(width)
    step = np.where(finite, CELL_FRACTION * np.where(finite, width, 1.0), 1.0)
    idx = np.where(finite, np.floor((responses - np.where(finite, mm.z_lo, 0.0)) / step), 0.0)
    cells = np.unique(idx, axis=0)
    cell_lo = np.where(finite, np.where(finite, mm.z_lo, 0.0) + cells * step, responses.min(axis=0))
    cell_hi = np.where(finite, cell_lo + step, responses.max(axis=0))
    # guard against rounding at cell edges
    cell_lo = np.minimum(cell_lo, cell_lo - 1e-12 * np.maximum(1.0, np.abs(cell_lo)))
    cell_hi = np.maximum(cell_hi, cell_hi + 1e-12 * np.maximum(1.0, np.abs(cell_hi)))
    return mm.z_lo - cell_hi, mm.z_hi - cell_lo


def _conditioned_noise(mm: MeasurementModel, responses: np.ndarray, n: int, rng) -> tuple[np.ndarray, float]:
    """``n`` noise draws conditioned on the union of the cell boxes, and that union's log-probability.

    The union contains every noise value that leaves some atom consistent,
    so discarded draws could only have produced empty candidates.  Draws
    come from the mixture that picks a box in proportion to its noise mass
    and samples inside it; a draw covered by ``c`` boxes is kept with
    probability ``1/c``, which makes the kept draws exact.
    """
    lo, hi = _noise_cells(mm, responses)
    logw = np.sum([nz.log_prob(lo[:, c], hi[:, c]) for c, nz in enumerate(mm.noise)], axis=0)
    top = logw.max()
    if top == -math.inf:
        raise TotalConflictError("no noise value makes any atom consistent with the data")
    w = np.exp(logw - top)
    total = w.sum()
    kept, proposed, accepted = [], 0, 0
    while accepted < n:
        batch = max(1024, 2 * (n - accepted))
        k = rng.choice(len(w), size=batch, p=w / total)
        eps = np.column_stack([nz.sample_truncated(rng, batch, lo[k, c], hi[k, c]) for c, nz in enumerate(mm.noise)])
        cover = np.zeros(batch, dtype=np.int64)
        for s in range(0, batch, 512):
            e = eps[s : s + 512, None, :]
            cover[s : s + 512] = np.all((e >= lo[None]) & (e <= hi[None]), axis=2).sum(axis=1)
        ok = rng.uniform(size=batch) * np.maximum(cover, 1) < 1.0
        kept.append(eps[ok])
        proposed += batch
        accepted += int(ok.sum())
    log_p = top + math.log(total) + math.log(accepted / proposed)
    return np.vstack(kept)[:n], min(log_p, 0.0)


def _consistent_rows(mm: MeasurementModel, responses: np.ndarray, eps: np.ndarray, chunk: int = 4096):
    """Noise draws for which at least one atom is consistent, and the consistency masks."""
    # an atom can only pass if eps lies in the envelope of all atoms' windows
    env_lo, env_hi = _noise_envelope(mm, responses)
    cand = np.flatnonzero(np.all((eps >= env_lo) & (eps <= env_hi), axis=1))
    rows, masks = [], []
    for start in range(0, len(cand), chunk):
        js = cand[start : start + chunk]
        m = np.ones((len(js), responses.shape[0]), dtype=bool)
        alive = np.arange(len(js))
        # channel by channel, dropping noise draws that lost every atom
        for k in range(mm.n_channels):
            z = responses[None, :, k] + eps[js[alive], k][:, None]
            m[alive] &= (z >= mm.z_lo[k]) & (z <= mm.z_hi[k])
            alive = alive[m[alive].any(axis=1)]
            if not len(alive):
                break
        rows.append(js[alive])
        masks.append(m[alive])
    if not rows:
        return np.empty(0, dtype=np.int64), np.empty((0, responses.shape[0]), dtype=bool)
    return np.concatenate(rows), np.vstack(masks)


@dataclass
class _Stage:
    uniq: np.ndarray
    atoms: np.ndarray
    lo: np.ndarray
    hi: np.ndarray
    rows: np.ndarray
    masks: np.ndarray
    log_p_noise: float = 0.0


def _prepare(atoms: AtomSet, prior: PriorSpec, mm: MeasurementModel, cfg: AlgoOneConfig, noise_pool=None) -> _Stage:
    if atoms.responses.shape != (atoms.kappa, mm.n_channels):
        raise ValueError(
            f"atom responses have shape {atoms.responses.shape}, expected ({atoms.kappa}, {mm.n_channels})"
        )
    if atoms.dim != len(prior):
        raise ValueError(f"atoms have dimension {atoms.dim}, prior has {len(prior)}")
    lo, hi = _prior_boxes(prior, cfg, np.random.default_rng([cfg.seed, 0]))
    uniq = atoms.unique_index()
    ua, ur = atoms.atoms[uniq], atoms.responses[uniq]
    rng = np.random.default_rng([cfg.seed, 1])
    log_p = 0.0
    if cfg.conditioned_noise:
        eps, log_p = _conditioned_noise(mm, ur if noise_pool is None else noise_pool, cfg.n_eps, rng)
    else:
        eps = mm.sample_noise(rng, cfg.n_eps)
    rows, masks = _consistent_rows(mm, ur, eps)
    return _Stage(uniq, ua, lo, hi, rows, masks, log_p)


def _block(stage: _Stage, i: int) -> tuple[np.ndarray, np.ndarray]:
    inside = np.all((stage.atoms >= stage.lo[i]) & (stage.atoms <= stage.hi[i]), axis=1)
    if not inside.any() or not len(stage.rows):
        return stage.rows[:0], stage.masks[:0]
    m = stage.masks[:, inside]
    keep = m.any(axis=1)
    full = np.zeros((int(keep.sum()), len(inside)), dtype=bool)
    full[:, inside] = m[keep]
    return stage.rows[keep], full


def _map_blocks(stage: _Stage, n_prior: int, fn, workers: int):
    if workers <= 1:
        return [fn(i, *_block(stage, i)) for i in range(n_prior)]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(lambda i: fn(i, *_block(stage, i)), range(n_prior)))


def _singleton_samples(atoms: AtomSet) -> PosteriorSamples:
    k = atoms.kappa
    return PosteriorSamples(
        np.arange(k), np.arange(k + 1), np.column_stack([np.arange(k), np.zeros(k, dtype=int)]), k, None,
        {"mode": "random-variable prior: every atom is one posterior sample"},
    )


def algorithm_one(
    atoms: AtomSet, prior: PriorSpec, mm: MeasurementModel, cfg: AlgoOneConfig, workers: int = 1
) -> PosteriorSamples:
    """Monte Carlo samples of the discrete approximation of the posterior random set.

    For every prior realization ``i`` and noise draw ``j`` the candidate is
    the set of distinct atoms inside realization ``i`` whose stored response
    plus noise ``j`` falls in the observation box.  Empty candidates are
    discarded; the discarded fraction estimates the degree of conflict.
    Samples come out ordered by ``(i, j)`` whatever the worker count.

    With ``cfg.conditioned_noise`` the noise is drawn from its law
    conditioned on an event that contains every noise value leaving some
    atom consistent.  Draws outside it only ever give empty candidates, so
    the nonempty samples keep their distribution; the conflict estimate is
    rescaled by the probability of the event.

    A prior made only of random variables is a random variable itself, and
    then each atom is a posterior sample.
    """
    if prior.is_random_variable:
        return _singleton_samples(atoms)
    stage = _prepare(atoms, prior, mm, cfg)

    def collect(i, rows, m):
        r, c = np.nonzero(m)
        return rows, np.bincount(r, minlength=len(rows)), stage.uniq[c]

    parts = _map_blocks(stage, cfg.n_prior, collect, workers)
    pairs, counts, idx = [], [], []
    for i, (rows, cnt, ix) in enumerate(parts):
        pairs.append(np.column_stack([np.full(len(rows), i), rows]))
        counts.append(cnt)
        idx.append(ix)
    pairs = np.vstack(pairs) if pairs else np.empty((0, 2), dtype=int)
    n_cand = cfg.n_prior * cfg.n_eps
    if len(pairs) == 0:
        raise TotalConflictError(f"all {n_cand} candidate posterior sets were empty")
    counts = np.concatenate(counts)
    offsets = np.concatenate([[0], np.cumsum(counts)])
    meta = {
        "n_prior": cfg.n_prior,
        "n_eps": cfg.n_eps,
        "seed": cfg.seed,
        "n_samples": int(len(pairs)),
        "consistent_noise_draws": int(len(stage.rows)),
    }
    meta["noise_event_log_prob"] = stage.log_p_noise
    conflict = 1.0 - math.exp(stage.log_p_noise) * len(pairs) / n_cand
    return PosteriorSamples(np.concatenate(idx), offsets, pairs, n_cand, conflict, meta)


def prior_realizations(prior: PriorSpec, cfg: AlgoOneConfig) -> tuple[np.ndarray, np.ndarray]:
    """The prior boxes :func:`algorithm_one` uses for ``cfg`` (same seed stream)."""
    return _prior_boxes(prior, cfg, np.random.default_rng([cfg.seed, 0]))


# ---------------------------------------------------------------- estimators


def _query_box(q, dim) -> IntervalBox:
    if not isinstance(q, IntervalBox) or q.dim != dim:
        raise ValueError(f"query must be an IntervalBox of dimension {dim}")
    return q


def posterior_bounds(samples: PosteriorSamples, atoms: AtomSet, q: IntervalBox) -> tuple[float, float]:
    """Fractions of posterior samples contained in / hitting the box ``q``."""
    if len(samples) == 0:
        raise ValueError("no posterior samples")
    q = _query_box(q, atoms.dim)
    inside = np.all((atoms.atoms >= q.lo) & (atoms.atoms <= q.hi), axis=1)
    contained = samples.reduce(inside, np.logical_and)
    hit = samples.reduce(inside, np.logical_or)
    return float(contained.mean()), float(hit.mean())


def posterior_cdf_bounds(samples: PosteriorSamples, atoms: AtomSet, dim: int, thresholds) -> tuple[np.ndarray, np.ndarray]:
    """Lower and upper bounds of the marginal cdf of coordinate ``dim`` at each threshold."""
    thresholds = np.asarray(thresholds, dtype=float)
    col = atoms.atoms[:, dim]
    smin = np.sort(samples.reduce(col, np.minimum))
    smax = np.sort(samples.reduce(col, np.maximum))
    n = len(samples)
    lower = np.searchsorted(smax, thresholds, side="right") / n
    upper = np.searchsorted(smin, thresholds, side="right") / n
    return lower, upper


def _support_rows(proj: np.ndarray, masks: np.ndarray, budget: int = 1 << 22) -> np.ndarray:
    """Row-wise maxima of ``proj`` restricted to each mask row: shape ``(rows, D)``."""
    out = np.empty((masks.shape[0], proj.shape[1]))
    step = max(1, budget // max(1, masks.shape[1] * proj.shape[1]))
    for s in range(0, masks.shape[0], step):
        m = masks[s : s + step]
        out[s : s + step] = np.where(m[:, :, None], proj[None, :, :], -np.inf).max(axis=1)
    return out


def expected_support_posterior(samples: PosteriorSamples, atoms: AtomSet, dirs) -> np.ndarray:
    """Mean support function of the posterior samples per direction."""
    dirs = np.atleast_2d(np.asarray(dirs, dtype=float))
    proj = atoms.atoms @ dirs.T
    total = np.zeros(len(dirs))
    chunk = max(1, (1 << 22) // max(1, len(dirs)))
    starts = samples.offsets[:-1]
    k = 0
    while k < len(samples):
        # group whole samples so that at most ``chunk`` atom entries are touched
        end = int(np.searchsorted(samples.offsets, samples.offsets[k] + chunk, side="right")) - 1
        end = min(max(end, k + 1), len(samples))
        lo, hi = samples.offsets[k], samples.offsets[end]
        vals = proj[samples.indices[lo:hi]]
        total += np.maximum.reduceat(vals, starts[k:end] - lo, axis=0).sum(axis=0)
        k = end
    return total / len(samples)


def streamed_support(
    atoms: AtomSet, prior: PriorSpec, mm: MeasurementModel, cfg: AlgoOneConfig, dirs, workers: int = 1, noise_pool=None
) -> tuple[np.ndarray, int]:
    """Mean support function over :func:`algorithm_one` samples without storing them.

    ``noise_pool`` (conditioned noise only) holds the responses of a pool of
    atoms that includes these ones; runs sharing a pool share noise draws.
    """
    dirs = np.atleast_2d(np.asarray(dirs, dtype=float))
    if prior.is_random_variable:
        return (atoms.atoms @ dirs.T).mean(axis=0), atoms.kappa
    stage = _prepare(atoms, prior, mm, cfg, noise_pool)
    proj = stage.atoms @ dirs.T

    def acc(i, rows, m):
        if not len(rows):
            return np.zeros(len(dirs)), 0
        return _support_rows(proj, m).sum(axis=0), len(rows)

    parts = _map_blocks(stage, cfg.n_prior, acc, workers)
    n = sum(c for _, c in parts)
    if n == 0:
        raise TotalConflictError("all candidate posterior sets were empty")
    return sum(s for s, _ in parts) / n, n


# -------------------------------------------------------------- diagnostics


@dataclass
class MseTable:
    kappas: list
    directions: np.ndarray
    mse: np.ndarray
    normalized: np.ndarray
    reference: np.ndarray
    is_normalized: np.ndarray
    meta: dict = field(default_factory=dict)

    def median_normalized(self) -> np.ndarray:
        return np.median(self.normalized, axis=1)

    def rows(self):
        for a, k in enumerate(self.kappas):
            for d, nu in enumerate(self.directions):
                yield k, d, nu, self.mse[a, d], self.normalized[a, d], bool(self.is_normalized[d])


def mse_convergence(
    target: UnnormalizedDensity,
    prior: PriorSpec,
    mm: MeasurementModel,
    kappas: Sequence[int],
    kappa_inf: int | None = None,
    dirs=None,
    replications: int = 20,
    mcmc: McmcConfig | None = None,
    algo: AlgoOneConfig | None = None,
    seed: int = 0,
    workers: int = 1,
    max_kappa_inf: int = 500_000,
) -> MseTable:
    """Root-mean-square gap of the mean support function against a large-``kappa`` reference.

    Every replication draws a fresh atom set; all runs share the prior and
    noise draws of ``algo`` so that only the atoms differ.  The table holds
    one row per ``kappa`` plus the reference row itself (gap zero).
    """
    kappas = sorted(int(k) for k in kappas)
    if not kappas or kappas[0] < 1:
        raise ValueError("kappas must be positive")
    if kappa_inf is None:
        kappa_inf = 10 * kappas[-1]
    if kappa_inf < 5 * kappas[-1]:
        raise ValueError(f"kappa_inf={kappa_inf} must be at least 5 x max(kappas) = {5 * kappas[-1]}")
    if kappa_inf > max_kappa_inf:
        raise ValueError(
            f"kappa_inf={kappa_inf} exceeds the budget of {max_kappa_inf} chain states; "
            f"use kappa_inf between {5 * kappas[-1]} and {max_kappa_inf} or raise the budget"
        )
    if replications < 1:
        raise ValueError("replications must be at least 1")
    dirs = direction_grid(8, len(prior.dims)) if dirs is None else np.atleast_2d(np.asarray(dirs, dtype=float))
    mcmc = mcmc or McmcConfig(kappa=kappa_inf)
    algo = algo or AlgoOneConfig(seed=derive_seed(seed, 1))

    def chain(kappa, chain_seed, scale, tune):
        cfg = McmcConfig(
            kappa=kappa, burn_in=mcmc.burn_in, proposal_scale=scale, seed=chain_seed,
            init=mcmc.init, thin=mcmc.thin, tune=tune, pilot_steps=mcmc.pilot_steps,
        )
        return mh_sample(target, None, cfg)

    ref_atoms = chain(kappa_inf, derive_seed(seed, 0), mcmc.proposal_scale, mcmc.tune)
    scale = ref_atoms.meta["proposal_scale"]
    runs = [[chain(k, derive_seed(seed, 2, k, r), scale, False) for r in range(replications)] for k in kappas]
    pool = None
    if algo.conditioned_noise:
        # conditioning on the pooled atoms keeps the noise draws common to all runs
        pool = np.unique(np.vstack([ref_atoms.responses] + [a.responses for row in runs for a in row]), axis=0)

    def support(atoms):
        return streamed_support(atoms, prior, mm, algo, dirs, workers, pool)[0]

    ref = support(ref_atoms)
    mse = np.zeros((len(kappas) + 1, len(dirs)))
    for a, row in enumerate(runs):
        gaps = np.array([support(atoms) - ref for atoms in row])
        mse[a] = np.sqrt(np.mean(gaps**2, axis=0))
    mag = np.abs(ref)
    ok = mag > 1e-12
    normalized = np.where(ok, mse / np.where(ok, mag, 1.0), mse)
    meta = {"kappa_inf": kappa_inf, "replications": replications, "seed": seed, "n_prior": algo.n_prior, "n_eps": algo.n_eps}
    return MseTable(kappas + [kappa_inf], dirs, mse, normalized, ref, ok, meta)


def hausdorff_convergence(
    prior_set: SetRealization,
    density: UnnormalizedDensity | None,
    kappas: Sequence[int],
    seed: int = 0,
    sampler: Callable | None = None,
) -> dict:
    """Hausdorff distance between ``prior_set`` and its intersection with ``kappa`` density draws.

    Draws come from ``sampler(rng, n)`` when given, else from a Metropolis
    chain on ``density``.  Smaller ``kappa`` use prefixes of the same draw,
    so the table is a single realization of the convergence path.  A
    ``kappa`` whose draws all miss ``prior_set`` maps to ``inf``.
    """
    kappas = sorted(int(k) for k in kappas)
    n = kappas[-1]
    rng = np.random.default_rng([seed, 3])
    if sampler is not None:
        pts = np.asarray(sampler(rng, n), dtype=float).reshape(n, -1)
    else:
        pts = mh_sample(density, None, McmcConfig(kappa=n, seed=seed)).atoms
    table = {}
    for k in kappas:
        sub = intersect(Points(pts[:k]), prior_set)
        table[k] = math.inf if sub.is_empty else hausdorff_distance(prior_set, sub)
    return table
