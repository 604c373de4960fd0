import logging
import math

import numpy as np
import pytest
from scipy import stats

from rsinfer import (
    AlgoOneConfig,
    AtomSet,
    Distribution,
    IntervalBox,
    MassFunction,
    McmcConfig,
    MeasurementModel,
    Noise,
    Points,
    PriorSpec,
    RandomVariable,
    TotalConflictError,
    UnnormalizedDensity,
    algorithm_one,
    capacity_transform_prior,
    derive_seed,
    hausdorff_convergence,
    mh_sample,
    mse_convergence,
    posterior_bounds,
    posterior_capacity_density,
    posterior_cdf_bounds,
)
from rsinfer.io import IdentityModel
from rsinfer.sampler import _consistent_rows, _noise_cells, prior_realizations


def gaussian_target(lim=8.0):
    return UnnormalizedDensity(lambda x: -0.5 * float(x @ x), IntervalBox.interval(-lim, lim))


def uniform_target():
    box = IntervalBox.interval(0, 1)
    return UnnormalizedDensity(lambda x: 0.0 if 0 <= x[0] <= 1 else -math.inf, box)


def atoms_1d(values):
    v = np.asarray(values, dtype=float)[:, None]
    return AtomSet(v, v.copy(), 1.0)


def window(lo, hi, scale=1.0):
    return MeasurementModel(IdentityModel(), [lo], [hi], Noise("gaussian", scale))


def test_derive_seed_is_stable_and_distinct():
    assert derive_seed(0, 1) == derive_seed(0, 1)
    assert len({derive_seed(0, k) for k in range(6)} | {derive_seed(1, 0)}) == 7


def test_chain_moments_for_standard_normal():
    a = mh_sample(gaussian_target(), None, McmcConfig(kappa=50_000, seed=0))
    assert abs(a.atoms.mean()) <= 0.02
    assert abs(a.atoms.var() - 1.0) <= 0.05
    assert 0.2 <= a.acceptance_rate <= 0.6


def test_chain_stays_in_uniform_support():
    a = mh_sample(uniform_target(), None, McmcConfig(kappa=5000, seed=1))
    assert a.atoms.min() >= 0 and a.atoms.max() <= 1
    assert stats.kstest(a.atoms[:, 0], "uniform").statistic < 0.05


def test_chain_is_deterministic():
    cfg = McmcConfig(kappa=500, seed=42)
    a, b = mh_sample(gaussian_target(), None, cfg), mh_sample(gaussian_target(), None, cfg)
    np.testing.assert_array_equal(a.atoms, b.atoms)
    c = mh_sample(gaussian_target(), None, McmcConfig(kappa=500, seed=43))
    assert not np.array_equal(a.atoms, c.atoms)


def test_chain_records_responses():
    post = posterior_capacity_density(
        capacity_transform_prior(PriorSpec([RandomVariable(Distribution.normal(0, 1))])), window(0, 1)
    )
    a = mh_sample(post, None, McmcConfig(kappa=200, seed=0))
    np.testing.assert_array_equal(a.responses, a.atoms)


def test_zero_density_start_rejected():
    with pytest.raises(ValueError, match="zero"):
        mh_sample(uniform_target(), None, McmcConfig(kappa=10, init=[2.0]))
    with pytest.raises(ValueError):
        McmcConfig(kappa=0)


def test_extreme_acceptance_is_flagged(caplog):
    with caplog.at_level(logging.WARNING):
        a = mh_sample(gaussian_target(1e4), None, McmcConfig(kappa=500, proposal_scale=[500.0], tune=False, init=[0.0]))
    assert a.acceptance_rate < 0.05
    assert a.meta["warnings"] and "acceptance" in caplog.text


def test_vacuous_data_keeps_every_atom():
    atoms = atoms_1d([0.1, 0.4, 0.9])
    prior = PriorSpec([IntervalBox.interval(0, 1)])
    mm = window(-np.inf, np.inf)
    s = algorithm_one(atoms, prior, mm, AlgoOneConfig(n_prior=5, n_eps=4))
    assert len(s) == 20 and s.conflict == 0.0
    assert all(d.indices == (0, 1, 2) for d in s)


def test_prior_realization_selects_atoms():
    atoms = atoms_1d([0.25, 0.75])
    s = algorithm_one(atoms, PriorSpec([IntervalBox.interval(0, 0.5)]), window(-np.inf, np.inf), AlgoOneConfig(3, 3))
    assert [d.as_set(atoms) for d in s] == [Points([0.25])] * 9


def test_total_conflict():
    atoms = atoms_1d([0.25, 0.75])
    with pytest.raises(TotalConflictError):
        algorithm_one(atoms, PriorSpec([IntervalBox.interval(2, 3)]), window(-np.inf, np.inf), AlgoOneConfig(3, 3))


def test_mixed_prior_needs_radius():
    atoms = AtomSet(np.zeros((2, 2)), np.zeros((2, 2)), 1.0)
    prior = PriorSpec([RandomVariable(Distribution.normal(0, 1)), IntervalBox.interval(-1, 1)])
    mm = MeasurementModel(IdentityModel(), [-np.inf] * 2, [np.inf] * 2, Noise())
    with pytest.raises(ValueError, match="rv_radius"):
        algorithm_one(atoms, prior, mm, AlgoOneConfig(2, 2))
    s = algorithm_one(atoms, prior, mm, AlgoOneConfig(200, 2, rv_radius=0.5))
    assert 0 < len(s) < 400


def test_posterior_bounds_examples():
    atoms = atoms_1d([0.0, 1.0, 2.0])
    prior = PriorSpec([MassFunction([IntervalBox.interval(-0.5, 1.5), IntervalBox.interval(1.5, 2.5)], [0.5, 0.5])])
    s = algorithm_one(atoms, prior, window(-np.inf, np.inf), AlgoOneConfig(n_prior=400, n_eps=1, seed=3))
    first = np.mean([d.indices == (0, 1) for d in s])
    lower, upper = posterior_bounds(s, atoms, IntervalBox.interval(-1, 0.5))
    assert lower == 0.0 and upper == pytest.approx(first)
    assert posterior_bounds(s, atoms, IntervalBox.interval(-1, 3)) == (1.0, 1.0)
    lo, hi = posterior_cdf_bounds(s, atoms, 0, [0.5, 1.5, 2.5])
    np.testing.assert_allclose(lo, [0, first, 1])
    np.testing.assert_allclose(hi, [first, first, 1])


def test_posterior_bounds_rejects_bad_query():
    atoms = atoms_1d([0.0])
    s = algorithm_one(atoms, PriorSpec([IntervalBox.interval(-1, 1)]), window(-np.inf, np.inf), AlgoOneConfig(1, 1))
    with pytest.raises(ValueError):
        posterior_bounds(s, atoms, IntervalBox([0, 0], [1, 1]))


def _mixed_problem():
    rng = np.random.default_rng(5)
    atoms = atoms_1d(rng.uniform(0, 4, 300))
    prior = PriorSpec([MassFunction([IntervalBox.interval(0, 2), IntervalBox.interval(1, 3.5), IntervalBox.interval(2.5, 4)], [0.3, 0.4, 0.3])])
    return atoms, prior, window(1.0, 1.5, 3.0)


def test_noise_cells_cover_every_consistency_box():
    atoms, _, mm = _mixed_problem()
    lo, hi = _noise_cells(mm, atoms.responses)
    own_lo, own_hi = mm.z_lo - atoms.responses, mm.z_hi - atoms.responses
    covered = np.all((lo[None] <= own_lo[:, None]) & (own_hi[:, None] <= hi[None]), axis=2).any(axis=1)
    assert covered.all()
    assert len(lo) <= 4 / (0.125 * 0.5) + 1


def test_conditioned_noise_matches_plain_noise():
    atoms, prior, mm = _mixed_problem()
    plain = algorithm_one(atoms, prior, mm, AlgoOneConfig(n_prior=200, n_eps=20_000, seed=1))
    cond = algorithm_one(atoms, prior, mm, AlgoOneConfig(n_prior=200, n_eps=20_000, seed=1, conditioned_noise=True))
    assert cond.meta["noise_event_log_prob"] < 0
    assert len(cond) > len(plain)
    assert abs(cond.conflict - plain.conflict) < 0.03
    x = np.linspace(0, 4, 41)
    for a, b in zip(posterior_cdf_bounds(plain, atoms, 0, x), posterior_cdf_bounds(cond, atoms, 0, x)):
        assert np.max(np.abs(a - b)) < 0.03


def test_consistent_rows_brute_force():
    atoms, _, mm = _mixed_problem()
    eps = mm.sample_noise(np.random.default_rng(0), 500)
    rows, masks = _consistent_rows(mm, atoms.responses, eps, chunk=64)
    z = atoms.responses[None, :, 0] + eps[:, :1]
    brute = (z >= mm.z_lo[0]) & (z <= mm.z_hi[0])
    np.testing.assert_array_equal(rows, np.flatnonzero(brute.any(axis=1)))
    np.testing.assert_array_equal(masks, brute[rows])


def test_workers_do_not_change_output():
    atoms, prior, mm = _mixed_problem()
    cfg = AlgoOneConfig(n_prior=60, n_eps=300, seed=2)
    a, b = algorithm_one(atoms, prior, mm, cfg), algorithm_one(atoms, prior, mm, cfg, workers=4)
    np.testing.assert_array_equal(a.indices, b.indices)
    np.testing.assert_array_equal(a.offsets, b.offsets)
    np.testing.assert_array_equal(a.pairs, b.pairs)


def test_samples_lie_inside_their_prior_realization():
    atoms, prior, mm = _mixed_problem()
    cfg = AlgoOneConfig(n_prior=50, n_eps=100, seed=4)
    s = algorithm_one(atoms, prior, mm, cfg)
    lo, hi = prior_realizations(prior, cfg)
    for d, (i, _) in zip(s, s.pairs):
        pts = d.as_set(atoms).coords
        assert np.all((pts >= lo[i]) & (pts <= hi[i]))


def test_random_variable_prior_gives_singletons():
    post = posterior_capacity_density(
        capacity_transform_prior(PriorSpec([RandomVariable(Distribution.normal(0, 1))])), window(-0.5, 0.5, 0.5)
    )
    atoms = mh_sample(post, None, McmcConfig(kappa=20_000, seed=0))
    s = algorithm_one(atoms, PriorSpec([RandomVariable(Distribution.normal(0, 1))]), window(-0.5, 0.5, 0.5), AlgoOneConfig())
    assert len(s) == atoms.kappa and np.all(s.sizes == 1)
    x = np.linspace(-6, 6, 20_001)
    dens = stats.norm.pdf(x) * (stats.norm.cdf((0.5 - x) / 0.5) - stats.norm.cdf((-0.5 - x) / 0.5))
    cdf = np.cumsum(dens)
    cdf /= cdf[-1]
    assert stats.kstest(atoms.atoms[:, 0], lambda t: np.interp(t, x, cdf)).statistic < 0.03


def test_mse_table_shape_and_reference_row():
    prior = PriorSpec([MassFunction([IntervalBox.interval(-1, 1), IntervalBox.interval(0, 2)], [0.5, 0.5])])
    mm = window(0.0, 1.0, 0.5)
    target = posterior_capacity_density(capacity_transform_prior(prior), mm)
    t = mse_convergence(target, prior, mm, [50, 200], replications=3, algo=AlgoOneConfig(40, 40, seed=1))
    assert t.kappas == [50, 200, 2000]
    assert t.mse.shape == (3, 2) and np.all(t.mse[-1] == 0)
    assert np.all(t.is_normalized)
    assert len(list(t.rows())) == 6
    with pytest.raises(ValueError, match="5 x"):
        mse_convergence(target, prior, mm, [100], kappa_inf=400)


def test_hausdorff_examples():
    box = IntervalBox.interval(0, 1)
    t = hausdorff_convergence(box, None, [1], sampler=lambda rng, n: np.full(n, 0.5))
    assert t[1] == pytest.approx(0.5)
    p = Points([0.3])
    assert hausdorff_convergence(p, None, [1, 5], sampler=lambda rng, n: np.full(n, 0.3)) == {1: 0.0, 5: 0.0}
    assert hausdorff_convergence(box, None, [3], sampler=lambda rng, n: np.full(n, 4.0)) == {3: math.inf}


def test_hausdorff_shrinks_on_unit_square():
    sq = IntervalBox([0, 0], [1, 1])
    t = hausdorff_convergence(sq, None, [10, 100, 1000, 10_000], seed=8, sampler=lambda rng, n: rng.uniform(size=(n, 2)))
    vals = [t[k] for k in sorted(t)]
    assert all(b <= a for a, b in zip(vals, vals[1:]))
    assert vals[-1] < 0.05
