import json
import math

import numpy as np
import pytest
from scipy import stats

from rsinfer import (
    Distribution,
    DomainError,
    IntervalBox,
    MassFunction,
    PBox,
    PBoxDim,
    PriorSpec,
    RandomVariable,
    bel_pl,
    mass_to_random_set,
    pbox_to_random_set,
    prior_sampler,
)
from rsinfer.models import invert_cdf

Q1, Q2, Q3 = IntervalBox.interval(0.77, 0.92), IntervalBox.interval(0.85, 0.98), IntervalBox.interval(0.96, 1.08)
LOAD_MASS = MassFunction([Q1, Q2, Q3], [0.3, 0.3, 0.4])
STIFFNESS_PBOX = PBoxDim(Distribution.lognormal(0.9, 0.1), Distribution.lognormal(1.0, 0.11))


@pytest.mark.parametrize("u, want", [(0.0, Q1), (0.3, Q1), (0.30001, Q2), (0.5, Q2), (0.6, Q2), (0.95, Q3), (1.0, Q3)])
def test_mass_partition(u, want):
    assert mass_to_random_set(LOAD_MASS, u) == want


def test_vacuous_mass_always_returns_its_set():
    s = IntervalBox.interval(-1, 4)
    m = MassFunction([s], [1.0])
    assert all(mass_to_random_set(m, u) == s for u in np.linspace(0, 1, 11))


def test_mass_validation():
    with pytest.raises(ValueError):
        MassFunction([Q1, Q2], [0.5, 0.6])
    with pytest.raises(ValueError):
        MassFunction([Q1], [0.0])
    with pytest.raises(ValueError):
        mass_to_random_set(LOAD_MASS, 1.5)
    # within the renormalization tolerance the masses are rescaled
    m = MassFunction([Q1, Q2], [0.5, 0.5 + 5e-10])
    assert m.mass.sum() == pytest.approx(1.0, abs=1e-15)


def test_bel_pl_examples():
    two = MassFunction([IntervalBox.interval(0, 1), IntervalBox.interval(2, 3)], [0.5, 0.5])
    assert bel_pl(two, IntervalBox.interval(0, 1)) == (0.5, 0.5)
    assert bel_pl(two, IntervalBox.whole(1)) == (1.0, 1.0)
    assert bel_pl(LOAD_MASS, IntervalBox.interval(0.9, 1.0)) == (0.0, pytest.approx(1.0))


def test_degenerate_pbox_gives_a_point():
    n = Distribution.normal(0, 1)
    box = pbox_to_random_set(PBoxDim(n, n), [0.5])
    assert box.lo[0] == pytest.approx(0.0, abs=1e-9) and box.hi[0] == pytest.approx(0.0, abs=1e-9)


def test_lognormal_pbox_median_interval():
    box = pbox_to_random_set(STIFFNESS_PBOX, [0.5])
    # median of a lognormal with mean m and sd s is m / sqrt(1 + (s/m)^2)
    assert box.lo[0] == pytest.approx(0.8944953612062571, abs=1e-9)
    assert box.hi[0] == pytest.approx(0.9940043559354328, abs=1e-9)


def test_pbox_quantiles_monotone():
    us = np.linspace(0.01, 0.99, 50)
    lo, hi = STIFFNESS_PBOX.interval(us)
    assert np.all(np.diff(lo) >= 0) and np.all(np.diff(hi) >= 0) and np.all(lo <= hi)


def test_pbox_domain_errors():
    for u in (0.0, 1.0):
        with pytest.raises(DomainError):
            pbox_to_random_set(STIFFNESS_PBOX, [u])
    with pytest.raises(DomainError):
        invert_cdf(stats.norm.cdf, 1.5)


def test_pbox_requires_ordered_cdfs():
    with pytest.raises(ValueError):
        PBoxDim(Distribution.normal(1, 1), Distribution.normal(0, 1))
    with pytest.raises(TypeError):
        PBox([])


def test_pbox_with_plain_callables():
    p = PBoxDim(lambda x: stats.norm.cdf(x, 0, 1), lambda x: stats.norm.cdf(x, 1, 1))
    box = pbox_to_random_set(PBox([p]), [0.5])
    assert box.lo[0] == pytest.approx(0.0, abs=1e-8) and box.hi[0] == pytest.approx(1.0, abs=1e-8)


def test_invert_cdf_tolerance():
    u = np.array([1e-6, 0.1, 0.5, 0.9, 1 - 1e-6])
    np.testing.assert_allclose(invert_cdf(stats.norm.cdf, u), stats.norm.ppf(u), atol=1e-9)


@pytest.mark.parametrize(
    "dist, ref",
    [
        (Distribution.normal(1.5, 0.7), stats.norm(1.5, 0.7)),
        (Distribution.uniform(-1, 3), stats.uniform(-1, 4)),
    ],
)
def test_distribution_closed_forms(dist, ref):
    x = np.linspace(-3, 5, 41)
    np.testing.assert_allclose(dist.cdf(x), ref.cdf(x), atol=1e-13)
    np.testing.assert_allclose(dist.pdf(x), ref.pdf(x), atol=1e-13)


def test_lognormal_moments():
    d = Distribution.lognormal(0.9, 0.1)
    mu, sigma = d.log_params
    ref = stats.lognorm(s=sigma, scale=math.exp(mu))
    assert ref.mean() == pytest.approx(0.9, rel=1e-12) and ref.std() == pytest.approx(0.1, rel=1e-12)
    x = np.linspace(0.5, 1.5, 11)
    np.testing.assert_allclose(d.cdf(x), ref.cdf(x), atol=1e-13)


def test_prior_sampler_mixed_prior():
    spec = PriorSpec([STIFFNESS_PBOX, LOAD_MASS], ["E", "q"])
    box = prior_sampler(spec, 11)
    assert box.dim == 2
    assert any(box.lo[1] == f.lo[0] and box.hi[1] == f.hi[0] for f in (Q1, Q2, Q3))
    assert prior_sampler(spec, 11) == box


def test_prior_sampler_points():
    spec = PriorSpec([IntervalBox.interval(2, 2), IntervalBox.interval(-1, -1)])
    box = prior_sampler(spec, 0)
    assert np.array_equal(box.lo, box.hi) and box.lo.tolist() == [2.0, -1.0]
    assert spec.is_random_variable


def test_prior_spec_json_round_trip():
    spec = PriorSpec([STIFFNESS_PBOX, LOAD_MASS, RandomVariable(Distribution.normal(0, 2)), IntervalBox.interval(0, 1)])
    back = PriorSpec.from_json(json.loads(json.dumps(spec.to_json())))
    assert back.kinds == spec.kinds and back.names == spec.names
    assert back.dims[1].mass.sum() == 1.0
    rng_a, rng_b = np.random.default_rng(0), np.random.default_rng(0)
    for a, b in zip(spec.sample_boxes(20, rng_a), back.sample_boxes(20, rng_b)):
        np.testing.assert_array_equal(a, b)


def test_prior_spec_rejects_unknown_dimension():
    with pytest.raises(TypeError):
        PriorSpec(["not a prior"])
    with pytest.raises(ValueError):
        PriorSpec.from_json([{"kind": "weird"}])
