"""Acceptance criteria 1-10.  Each test records one PASS/FAIL line, shown in the terminal summary."""

import csv
import json
import sys
import time

import numpy as np
import pytest
from scipy import stats
from scipy.integrate import cumulative_trapezoid

from conftest import ACCEPTANCE
from rsinfer import (
    AlgoOneConfig,
    AtomSet,
    BoxUnion,
    Distribution,
    IntervalBox,
    MassFunction,
    McmcConfig,
    MeasurementModel,
    Noise,
    Points,
    PriorSpec,
    RandomVariable,
    SampleBundle,
    TrussModel,
    algorithm_one,
    capacity_transform_prior,
    cdf_bounds,
    direction_grid,
    estimate_bounds,
    hausdorff_convergence,
    hausdorff_distance,
    mh_sample,
    monte_carlo_combine,
    posterior_capacity_density,
    selection_expectation,
)
from rsinfer import cli
from rsinfer.io import IdentityModel
from rsinfer.sampler import prior_realizations
from rsinfer.truss import TABLE1, demo_geometry, validate_records

MC_TOL = 0.01


def report(n: int, ok: bool, detail: str) -> None:
    ACCEPTANCE.append((n, bool(ok), detail))
    assert ok, detail


def ks_to_cdf(sample, x, cdf) -> float:
    s = np.sort(np.asarray(sample))
    f = np.interp(s, x, cdf)
    n = len(s)
    return float(max(np.max(np.arange(1, n + 1) / n - f), np.max(f - np.arange(n) / n)))


def test_c1_grid_bayes_equivalence():
    t0 = time.perf_counter()
    prior = PriorSpec([RandomVariable(Distribution.normal(0.0, 1.0))])
    mm = MeasurementModel(IdentityModel(), [-0.5], [0.5], Noise("gaussian", 0.5))
    target = posterior_capacity_density(capacity_transform_prior(prior), mm)
    atoms = mh_sample(target, None, McmcConfig(kappa=50_000, seed=0))
    # trapezoid-rule Bayes posterior on 10^4 points
    x = np.linspace(-6.0, 6.0, 10_000)
    dens = stats.norm.pdf(x) * (stats.norm.cdf((0.5 - x) / 0.5) - stats.norm.cdf((-0.5 - x) / 0.5))
    cdf = cumulative_trapezoid(dens, x, initial=0.0)
    cdf /= cdf[-1]
    ks = ks_to_cdf(atoms.atoms[:, 0], x, cdf)
    elapsed = time.perf_counter() - t0
    report(1, ks <= 0.02 and elapsed < 60, f"KS={ks:.4f} (<=0.02), {elapsed:.1f}s (<60s)")


def test_c2_dempster_exact_and_sampled(tmp_path, capsys):
    cfg = {
        "m1": {"focal": [{"labels": ["a"]}, {"labels": ["a", "b"]}], "mass": [0.6, 0.4]},
        "m2": {"focal": [{"labels": ["b"]}, {"labels": ["a", "b"]}], "mass": [0.5, 0.5]},
    }
    path = tmp_path / "d.json"
    path.write_text(json.dumps(cfg))
    assert cli.main(["dempster", "--config", str(path), "--mc", "100000"]) == 0
    rows = list(csv.reader(capsys.readouterr().out.splitlines()))
    assert rows[0] == ["focal", "mass", "mc_mass"]
    got = {r[0]: (float(r[1]), float(r[2])) for r in rows[1:]}
    want = {"{a}": 3 / 7, "{b}": 2 / 7, "{a,b}": 2 / 7, "K": 0.3}
    exact_err = max(abs(got[k][0] - v) for k, v in want.items())
    mc_err = max(abs(got[k][1] - v) for k, v in want.items())
    report(2, exact_err <= 1e-12 and mc_err <= MC_TOL, f"exact max err {exact_err:.1e} (<=1e-12), MC max err {mc_err:.4f} (<=0.01)")


def test_c3_two_strategy_example():
    # X1 = [0, 2] w.p. 0.3, X2 = [1, 3] w.p. 0.7; data set {0.5, 2.5}
    prior_mass = MassFunction([IntervalBox.interval(0, 2), IntervalBox.interval(1, 3)], [0.3, 0.7])
    data = MassFunction([Points([0.5, 2.5])], [1.0])
    res = monte_carlo_combine(prior_mass, data, 100_000, np.random.default_rng(3))
    p = {float(s.coords[0, 0]): float(w) for s, w in res.combined}
    assert all(len(s) == 1 for s, _ in res.combined)

    # the same update through algorithm_one: atoms are the data points, constraints vacuous
    atoms = AtomSet([[0.5], [2.5]], [[0.5], [2.5]], 1.0)
    mm = MeasurementModel(IdentityModel(), [-np.inf], [np.inf], Noise())
    samples = algorithm_one(atoms, PriorSpec([prior_mass]), mm, AlgoOneConfig(n_prior=100_000, n_eps=1, seed=3))
    sizes = samples.sizes
    first = samples.indices[samples.offsets[:-1]]
    p_alg = float(np.mean(first == 0))
    err = max(abs(p[0.5] - 0.3), abs(p[2.5] - 0.7), abs(p_alg - 0.3))
    report(3, err <= MC_TOL and np.all(sizes == 1), f"P(x1)={p[0.5]:.4f}, P(x2)={p[2.5]:.4f}, algorithm_one P(x1)={p_alg:.4f}")


def test_c4_pbox_embedding():
    e = cli.demo_prior().dims[0]
    spec = PriorSpec([e])
    lo, hi = spec.sample_boxes(100_000, np.random.default_rng(4))
    bundle = SampleBundle.from_boxes(lo, hi)
    x = np.linspace(0.6, 1.4, 50)
    p_hat, t_hat = cdf_bounds(bundle, 0, x)
    err_p = float(np.max(np.abs(p_hat - e.lower_cdf(x))))
    err_t = float(np.max(np.abs(t_hat - e.upper_cdf(x))))
    report(4, max(err_p, err_t) <= MC_TOL, f"max |P-F_lower|={err_p:.4f}, max |T-F_upper|={err_t:.4f} (<=0.01)")


def _random_box(rng, lo, hi):
    a, b = np.sort(rng.uniform(lo, hi, size=(2, len(lo))), axis=0)
    return IntervalBox(a, b)


def _disjoint_pair(rng, lo, hi):
    q = _random_box(rng, lo, hi)
    k = rng.integers(len(lo))
    cut = rng.uniform(q.lo[k], q.hi[k])
    gap = 1e-9 * (hi[k] - lo[k])
    a_hi, b_lo = q.hi.copy(), q.lo.copy()
    a_hi[k], b_lo[k] = cut, min(cut + gap, q.hi[k])
    return IntervalBox(q.lo, a_hi), IntervalBox(b_lo, q.hi)


def _posterior_indicators(samples, atoms, q):
    inside = np.all((atoms.atoms >= q.lo) & (atoms.atoms <= q.hi), axis=1)
    return inside


def test_c5_ordering_invariants(demo):
    rng = np.random.default_rng(5)
    lo, hi = np.array([0.5, 0.7]), np.array([1.5, 1.15])
    violations = 0
    bundles = []
    for case in ("one", "all"):
        atoms, samples = demo.atoms(case), demo.samples(case)

        def post(q, atoms=atoms, samples=samples):
            inside = _posterior_indicators(samples, atoms, q)
            return samples.reduce(inside, np.logical_and).mean(), samples.reduce(inside, np.logical_or).mean()

        def post_union(q1, q2, atoms=atoms, samples=samples):
            inside = _posterior_indicators(samples, atoms, q1) | _posterior_indicators(samples, atoms, q2)
            return samples.reduce(inside, np.logical_and).mean(), samples.reduce(inside, np.logical_or).mean()

        bundles.append((post, post_union))
    cfg = demo.config("all")
    plo, phi = prior_realizations(cfg.prior, cfg.algo_config(demo.meta("all")["algorithm_seed"]))
    prior_bundle = SampleBundle.from_boxes(plo, phi)
    bundles.append((lambda q: estimate_bounds(prior_bundle, q), lambda a, b: estimate_bounds(prior_bundle, BoxUnion([a, b]))))

    for post, _ in bundles:
        for _ in range(1000):
            p, t = post(_random_box(rng, lo, hi))
            violations += not (0.0 <= p <= t <= 1.0)
    for post, post_union in bundles:
        for _ in range(1000):
            a, b = _disjoint_pair(rng, lo, hi)
            (pa, ta), (pb, tb), (pu, tu) = post(a), post(b), post_union(a, b)
            violations += not (tu <= ta + tb + 1e-15 and pu >= pa + pb - 1e-15)
    report(5, violations == 0, f"{violations} violations over 3 bundles x (1000 queries + 1000 disjoint pairs)")


def test_c6_selection_expectation():
    rng = np.random.default_rng(6)
    pts = rng.normal([1.0, -2.0], [0.3, 0.5], size=(5000, 2))
    bundle = SampleBundle([Points(p[None, :]) for p in pts])
    poly = selection_expectation(bundle, direction_grid(360, 2))
    d_a = hausdorff_distance(Points(poly.vertices()), Points(pts.mean(axis=0)[None, :]))

    eta = rng.uniform(size=100_000)
    interval = selection_expectation(SampleBundle.from_boxes(eta, eta + 1.0), direction_grid(2, 1)).vertices()[:, 0]
    err_b = float(np.max(np.abs(interval - [0.5, 1.5])))
    report(6, d_a <= 0.02 and err_b <= 0.02, f"(a) d_H={d_a:.2e} (<=0.02); (b) [{interval[0]:.4f}, {interval[1]:.4f}] vs [0.5, 1.5]")


@pytest.mark.slow
def test_c7_truss_mse_convergence(demo, tmp_path):
    t0 = time.perf_counter()
    out = tmp_path / "conv"
    assert cli.main(["converge", "--config", str(demo.root / "config_all.json"), "--out", str(out)]) == 0
    elapsed = time.perf_counter() - t0
    med = json.loads((out / "mse.csv.meta.json").read_text())["median_normalized"]
    med = med[:4]
    mono = all(b <= a for a, b in zip(med, med[1:]))
    report(
        7, mono and med[-1] < 0.03 and elapsed < 600,
        "median normalized MSE " + ", ".join(f"{m:.4f}" for m in med) + f" for kappa 250..2000; {elapsed:.0f}s",
    )


def test_c8_hausdorff_convergence():
    square = IntervalBox([0, 0], [1, 1])
    kappas = [10, 100, 1000, 10_000]
    table = hausdorff_convergence(square, None, kappas, seed=8, sampler=lambda rng, n: rng.uniform(size=(n, 2)))
    d = [table[k] for k in kappas]
    decreasing = all(b < a for a, b in zip(d, d[1:]))
    report(8, decreasing and d[-1] <= 0.08, "d_H " + ", ".join(f"{v:.4f}" for v in d) + " for kappa 10..10^4")


def test_c9_truss_band_reproduction(demo):
    # each posterior candidate lies inside the prior box that generated it
    nested = True
    for case in ("one", "all"):
        atoms, samples, meta = demo.atoms(case), demo.samples(case), demo.meta(case)
        cfg = demo.config(case)
        algo = cfg.algo_config(meta["algorithm_seed"])
        rerun = algorithm_one(atoms, cfg.prior, cfg.measurement_model(), algo)
        plo, phi = prior_realizations(cfg.prior, algo)
        pts = atoms.atoms[rerun.indices]
        box = np.repeat(rerun.pairs[:, 0], rerun.sizes)
        nested &= bool(np.all((pts >= plo[box]) & (pts <= phi[box])))
        nested &= np.array_equal(rerun.indices, samples.indices)

    one, all_ = demo.cdf_rows("one"), demo.cdf_rows("all")
    fractions = {}
    for name in ("E", "q"):
        w1 = one[name][:, 4] - one[name][:, 3]
        w11 = all_[name][:, 4] - all_[name][:, 3]
        fractions[name] = float(np.mean(w11 <= w1 + 1e-12))
    table_ok = validate_records(TABLE1) == [] and all(r.z_lo <= r.u_obs <= r.z_hi and r.z_hi - r.z_lo == 1 for r in TABLE1)
    ok = nested and table_ok and min(fractions.values()) >= 0.95
    report(
        9, ok,
        f"per-candidate nesting {nested}; 11-data band <= 1-datum band at "
        + ", ".join(f"{k} {v:.1%}" for k, v in fractions.items())
        + f" of grid points (>=95%); reference records valid {table_ok}",
    )


def test_c10_zero_forward_calls(demo):
    calls = [demo.meta(case)["forward_calls_during_algorithm"] for case in ("one", "all")]
    cfg = demo.config("all")
    model = TrussModel(demo_geometry())
    atoms = demo.atoms("all")
    mm = MeasurementModel(model, cfg.measurements.z_lo, cfg.measurements.z_hi, cfg.measurements.noise)
    algorithm_one(atoms, cfg.prior, mm, cfg.algo_config(1), workers=2)
    calls.append(model.calls)
    report(10, calls == [0, 0, 0], f"forward calls during set sampling: {calls}")


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-v"]))
