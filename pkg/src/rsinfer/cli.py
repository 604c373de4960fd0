"""Command-line front end.

Sub-seeds come from the master seed by counter:
0 chain, 1 set-sampling draws, 2 convergence study, 3 virtual data noise,
4 Hausdorff study, 5 sampled Dempster combination.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import sys
from pathlib import Path

import numpy as np

from .core import Polytope, SampleBundle, cdf_bounds, direction_grid
from .inference import (
    Noise,
    TotalConflictError,
    capacity_transform_prior,
    dempster_combine,
    monte_carlo_combine,
    posterior_capacity_density,
)
from .io import (
    ConfigError,
    RunConfig,
    load_config_file,
    load_run_config,
    parse_run_config,
    read_atoms,
    write_atoms,
    write_csv,
    write_measurements,
    write_records,
    write_samples,
    write_sidecar,
)
from .models import DomainError, Distribution, MassFunction, PBoxDim, PriorSpec
from .sampler import (
    AtomSet,
    PosteriorSamples,
    algorithm_one,
    derive_seed,
    expected_support_posterior,
    hausdorff_convergence,
    mh_sample,
    mse_convergence,
    posterior_cdf_bounds,
    prior_realizations,
)
from .sets import IntervalBox, Points, set_from_json, set_to_json
from .truss import DEMO_TRUTH, TABLE1, StructuralError, demo_geometry, generate_virtual_data, validate_records

log = logging.getLogger("rsinfer")

EXIT_OK, EXIT_INPUT, EXIT_CONFLICT, EXIT_NUMERIC = 0, 2, 3, 4

SEED_CHAIN, SEED_ALGO, SEED_CONVERGE, SEED_DATA, SEED_HAUSDORFF, SEED_DEMPSTER = range(6)


# ------------------------------------------------------------------ stages


def _calls(forward) -> int | None:
    return getattr(forward, "calls", None)


def run_sample(cfg: RunConfig, seed: int) -> AtomSet:
    mm = cfg.measurement_model()
    target = posterior_capacity_density(capacity_transform_prior(cfg.prior), mm)
    atoms = mh_sample(target, None, cfg.mcmc_config(seed=derive_seed(seed, SEED_CHAIN)))
    atoms.meta["master_seed"] = seed
    return atoms


def _isolated_point_risk(prior: PriorSpec) -> bool:
    """Point-valued focal sets break the no-isolated-point condition of the convergence result."""
    for d in prior.dims:
        if isinstance(d, MassFunction):
            lo, hi = d.focal_intervals()
            if np.any(lo == hi):
                return True
        elif isinstance(d, IntervalBox) and d.lo[0] == d.hi[0]:
            return True
    return False


def run_posterior(cfg: RunConfig, atoms: AtomSet, seed: int, workers: int = 1):
    """Set sampling plus estimators; returns (samples, cdf rows, polytope, meta)."""
    mm = cfg.measurement_model()
    if atoms.responses.shape[1] != mm.n_channels:
        raise ConfigError(
            f"atoms carry {atoms.responses.shape[1]} response channels, the measurements have {mm.n_channels}"
        )
    algo = cfg.algo_config(derive_seed(seed, SEED_ALGO))
    before = _calls(cfg.forward)
    samples = algorithm_one(atoms, cfg.prior, mm, algo, workers=workers if cfg.reentrant or workers <= 1 else 1)
    after = _calls(cfg.forward)
    support = capacity_transform_prior(cfg.prior).support
    plo, phi = prior_realizations(cfg.prior, algo)
    prior_bundle = SampleBundle.from_boxes(plo, phi)
    rows = []
    for d, name in enumerate(cfg.prior.names):
        x = cfg.threshold_grid(d, float(support.lo[d]), float(support.hi[d]))
        pl, pu = cdf_bounds(prior_bundle, d, x)
        ql, qu = posterior_cdf_bounds(samples, atoms, d, x)
        rows.extend((d, name, float(xi), float(a), float(b), float(c), float(e)) for xi, a, b, c, e in zip(x, pl, pu, ql, qu))
    dirs = direction_grid(cfg.directions, atoms.dim)
    poly = Polytope(dirs, expected_support_posterior(samples, atoms, dirs), {"atomic": True, "convex_outer_bound": True})
    meta = {
        "master_seed": seed,
        "algorithm_seed": algo.seed,
        "kappa": atoms.kappa,
        "N1": algo.n_prior,
        "N2": algo.n_eps,
        "N": len(samples),
        "conflict_estimate": samples.conflict,
        "conditioned_noise": algo.conditioned_noise,
        "forward_calls_during_algorithm": None if before is None else after - before,
        "isolated_point_risk": _isolated_point_risk(cfg.prior),
        **{k: v for k, v in samples.meta.items() if k not in ("seed",)},
    }
    return samples, rows, poly, meta


CDF_HEADER = ["dim", "name", "x", "prior_lower", "prior_upper", "posterior_lower", "posterior_upper"]


def write_posterior(out: Path, samples: PosteriorSamples, rows, poly: Polytope, meta: dict) -> None:
    out.mkdir(parents=True, exist_ok=True)
    write_samples(out / "samples.txt", samples)
    write_sidecar(out / "samples.txt", meta)
    write_csv(out / "cdf_bounds.csv", CDF_HEADER, rows)
    write_sidecar(out / "cdf_bounds.csv", meta)
    n = poly.dim
    write_csv(
        out / "expectation_halfspaces.csv",
        [f"nu{i}" for i in range(n)] + ["offset"],
        (list(map(float, nu)) + [float(h)] for nu, h in zip(poly.normals, poly.offsets)),
    )
    write_sidecar(out / "expectation_halfspaces.csv", meta)
    if n <= 2:
        write_csv(out / "expectation_vertices.csv", [f"x{i}" for i in range(n)], (list(map(float, v)) for v in poly.vertices()))
        write_sidecar(out / "expectation_vertices.csv", meta)


def write_atom_artifact(out: Path, atoms: AtomSet, cfg: RunConfig) -> Path:
    out.mkdir(parents=True, exist_ok=True)
    path = out / "atoms.csv"
    mm = cfg.measurement_model()
    write_atoms(path, atoms, cfg.prior.names, mm.names)
    write_sidecar(path, {**atoms.meta, "acceptance_rate": atoms.acceptance_rate, "N1": None, "N2": None, "conflict_estimate": None})
    return path


# --------------------------------------------------------------- commands


def _seed(args, cfg: RunConfig) -> int:
    return cfg.seed if args.seed is None else args.seed


def cmd_sample(args) -> int:
    cfg = load_run_config(args.config)
    atoms = run_sample(cfg, _seed(args, cfg))
    path = write_atom_artifact(Path(args.out), atoms, cfg)
    log.info("wrote %s (%d atoms, acceptance %.3f)", path, atoms.kappa, atoms.acceptance_rate)
    return EXIT_OK


def cmd_posterior(args) -> int:
    cfg = load_run_config(args.config)
    atoms, _, _ = read_atoms(args.atoms, dim=len(cfg.prior))
    samples, rows, poly, meta = run_posterior(cfg, atoms, _seed(args, cfg), args.threads)
    out = Path(args.out)
    write_posterior(out, samples, rows, poly, meta)
    if args.figures:
        from . import report

        report.posterior_figures(out, rows, poly, atoms)
    print(f"N={len(samples)} K_hat={samples.conflict!r}")
    return EXIT_OK


def _uniform_box_sampler(lo, hi):
    def draw(rng, n):
        return rng.uniform(lo, hi, size=(n, len(lo)))

    return draw


def run_converge(cfg: RunConfig, seed: int, workers: int = 1, out: Path | None = None, figures: bool = False) -> dict:
    conv = cfg.converge
    results = {}
    if "kappas" in conv:
        mm = cfg.measurement_model()
        target = posterior_capacity_density(capacity_transform_prior(cfg.prior), mm)
        dirs = direction_grid(int(conv.get("directions", 8)), len(cfg.prior))
        table = mse_convergence(
            target, cfg.prior, mm, conv["kappas"], conv.get("kappa_inf"), dirs,
            int(conv.get("replications", 20)), cfg.mcmc_config(kappa=1), cfg.algo_config(derive_seed(seed, SEED_ALGO)),
            derive_seed(seed, SEED_CONVERGE), workers, int(conv.get("max_kappa_inf", 500_000)),
        )
        results["mse"] = table
        if out is not None:
            n = table.directions.shape[1]
            rows = [(k, d, *map(float, nu), float(m), float(nm), int(ok)) for k, d, nu, m, nm, ok in table.rows()]
            write_csv(out / "mse.csv", ["kappa", "direction"] + [f"nu{i}" for i in range(n)] + ["mse", "normalized_mse", "normalized"], rows)
            write_sidecar(out / "mse.csv", {
                **table.meta, "master_seed": seed, "kappa": table.kappas, "N1": table.meta["n_prior"],
                "N2": table.meta["n_eps"], "conflict_estimate": None, "median_normalized": table.median_normalized().tolist(),
                "isolated_point_risk": _isolated_point_risk(cfg.prior),
            })
            if figures:
                from . import report

                report.mse_figure(out / "mse.png", table)
    if "hausdorff" in conv:
        h = conv["hausdorff"]
        box = set_from_json(h["set"]) if "set" in h else IntervalBox(*h["box"])
        if not isinstance(box, IntervalBox) or not box.is_bounded:
            raise ConfigError("hausdorff.set must be a bounded box")
        table = hausdorff_convergence(box, None, h["kappas"], derive_seed(seed, SEED_HAUSDORFF), _uniform_box_sampler(box.lo, box.hi))
        results["hausdorff"] = table
        if out is not None:
            write_csv(out / "hausdorff.csv", ["kappa", "hausdorff"], [(k, float(v)) for k, v in table.items()])
            write_sidecar(out / "hausdorff.csv", {"master_seed": seed, "kappa": list(table), "N1": None, "N2": None, "conflict_estimate": None})
    if not results:
        raise ConfigError("converge section needs 'kappas' and/or 'hausdorff'")
    return results


def cmd_converge(args) -> int:
    cfg = load_run_config(args.config)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    res = run_converge(cfg, _seed(args, cfg), args.threads, out, args.figures)
    if "mse" in res:
        t = res["mse"]
        for k, m in zip(t.kappas, t.median_normalized()):
            print(f"kappa={k} median_normalized_mse={m:.6g}")
    for k, v in res.get("hausdorff", {}).items():
        print(f"kappa={k} hausdorff={v:.6g}")
    return EXIT_OK


# -------------------------------------------------------------- truss demo


def demo_prior() -> PriorSpec:
    """P-box on the stiffness multiplier, three-interval mass function on the load multiplier."""
    return PriorSpec(
        [
            PBoxDim(Distribution.lognormal(0.9, 0.1), Distribution.lognormal(1.0, 0.11)),
            MassFunction(
                [IntervalBox.interval(0.77, 0.92), IntervalBox.interval(0.85, 0.98), IntervalBox.interval(0.96, 1.08)],
                [0.3, 0.3, 0.4],
            ),
        ],
        ["E", "q"],
    )


DEMO_CASES = {
    "one": {"channels": [0], "algorithm": {"n_prior": 200, "n_eps": 500, "conditioned_noise": True}},
    "all": {"channels": None, "algorithm": {"n_prior": 200, "n_eps": 1000, "conditioned_noise": True}},
}


def demo_configs(out: Path, data: str, seed: int, kappa: int = 2000) -> dict:
    """Write geometry, measurements and one config per case; return the raw configs."""
    g = demo_geometry()
    out.mkdir(parents=True, exist_ok=True)
    g.save(out / "geometry.json")
    if data == "table1":
        records = list(TABLE1)
    else:
        records = generate_virtual_data(g, DEMO_TRUTH, derive_seed(seed, SEED_DATA))
    problems = validate_records(records)
    if problems:
        raise ConfigError("; ".join(problems))
    write_records(out / "records.csv", records)
    write_measurements(
        out / "measurements.csv", [r.channel for r in records], [r.z_lo for r in records], [r.z_hi for r in records],
        [Noise("gaussian", 1.0)] * len(records),
    )
    configs = {}
    for case, extra in DEMO_CASES.items():
        raw = {
            "seed": seed,
            "prior": demo_prior().to_json(),
            "measurements": "measurements.csv",
            "forward": {"kind": "truss", "geometry": "geometry.json"},
            "mcmc": {"kappa": kappa, "burn_in": 1000},
            "algorithm": dict(extra["algorithm"]),
            "thresholds": {"E": {"lo": 0.5, "hi": 1.5, "count": 201}, "q": {"lo": 0.7, "hi": 1.15, "count": 181}},
            "directions": 360,
            "converge": {"kappas": [250, 500, 1000, 2000], "replications": 20, "directions": 8},
        }
        if extra["channels"] is not None:
            raw["channels"] = extra["channels"]
        (out / f"config_{case}.json").write_text(json.dumps(raw, indent=1) + "\n")
        configs[case] = raw
    return configs


def cmd_truss_demo(args) -> int:
    out = Path(args.out)
    seed = 0 if args.seed is None else args.seed
    raws = demo_configs(out, args.data, seed, args.kappa)
    summary = []
    for case, raw in raws.items():
        cfg = parse_run_config(raw, out)
        atoms = run_sample(cfg, seed)
        write_atom_artifact(out / case, atoms, cfg)
        try:
            samples, rows, poly, meta = run_posterior(cfg, atoms, seed, args.threads)
        except TotalConflictError as e:
            log.error("case %s: %s", case, e)
            summary.append((case, atoms.kappa, float(atoms.acceptance_rate), 0, 1.0))
            continue
        write_posterior(out / case, samples, rows, poly, meta)
        if args.figures:
            from . import report

            report.posterior_figures(out / case, rows, poly, atoms)
        summary.append((case, atoms.kappa, float(atoms.acceptance_rate), len(samples), float(samples.conflict)))
        if args.converge and case == "all":
            run_converge(cfg, seed, args.threads, out / case, args.figures)
    write_csv(out / "summary.csv", ["case", "kappa", "acceptance_rate", "N", "conflict_estimate"], summary)
    for row in summary:
        print(",".join(str(v) for v in row))
    return EXIT_CONFLICT if any(r[3] == 0 for r in summary) else EXIT_OK


# ---------------------------------------------------------------- dempster


def _mass_from_config(obj: dict, labels: dict) -> MassFunction:
    focal = []
    for f in obj["focal"]:
        if isinstance(f, dict) and "labels" in f:
            idx = [labels.setdefault(str(lab), len(labels)) for lab in f["labels"]]
            focal.append(Points([[float(i)] for i in idx]))
        else:
            focal.append(set_from_json(f))
    return MassFunction(focal, obj["mass"])


def _render(s, names: dict) -> str:
    if names and isinstance(s, Points):
        return "{" + ",".join(names[int(round(v))] for v in sorted(s.coords[:, 0])) + "}"
    return json.dumps(set_to_json(s), separators=(",", ":"))


def cmd_dempster(args) -> int:
    raw, _ = load_config_file(args.config)
    labels: dict = {}
    try:
        m1 = _mass_from_config(raw["m1"], labels)
        m2 = _mass_from_config(raw["m2"], labels)
    except KeyError as e:
        raise ConfigError(f"dempster config is missing {e}") from None
    names = {v: k for k, v in labels.items()}
    res = dempster_combine(m1, m2)
    seed = int(raw.get("seed", 0)) if args.seed is None else args.seed
    mc = None
    if args.mc:
        mc = monte_carlo_combine(m1, m2, args.mc, np.random.default_rng(derive_seed(seed, SEED_DEMPSTER)))
    rows = []
    for s, w in res.combined:
        row = [_render(s, names), float(w)]
        if mc is not None:
            match = [float(v) for t, v in mc.combined if _render(t, names) == row[0]]
            row.append(match[0] if match else 0.0)
        rows.append(row)
    header = ["focal", "mass"] + (["mc_mass"] if mc is not None else [])
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows([r[0]] + [repr(v) for v in r[1:]] for r in rows)
    w.writerow(["K", repr(res.conflict)] + ([repr(mc.conflict)] if mc is not None else []))
    text = buf.getvalue()
    sys.stdout.write(text)
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "dempster.csv").write_text(text)
        write_sidecar(out / "dempster.csv", {"master_seed": seed, "K": res.conflict, "mc_samples": args.mc, "mc_K": None if mc is None else mc.conflict})
    return EXIT_OK


# -------------------------------------------------------------------- main


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="rsinfer", description="Random-set inference with interval measurement data.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, config=True, out=True):
        if config:
            sp.add_argument("--config", required=True, help="JSON or YAML run configuration")
        if out:
            sp.add_argument("--out", required=True, help="output directory")
        sp.add_argument("--seed", type=int, default=None, help="master seed (overrides the config)")
        sp.add_argument("--threads", type=int, default=1, help="workers for the set-sampling stage")

    sp = sub.add_parser("sample", help="Metropolis chain on the posterior capacity density")
    common(sp)
    sp.set_defaults(func=cmd_sample)

    sp = sub.add_parser("posterior", help="posterior set samples, cdf bounds and expectation polytope")
    common(sp)
    sp.add_argument("--atoms", required=True, help="atoms CSV written by 'sample'")
    sp.add_argument("--figures", action="store_true", help="also render PNG figures (needs matplotlib)")
    sp.set_defaults(func=cmd_posterior)

    sp = sub.add_parser("converge", help="MSE and Hausdorff convergence tables")
    common(sp)
    sp.add_argument("--figures", action="store_true")
    sp.set_defaults(func=cmd_converge)

    sp = sub.add_parser("truss-demo", help="full pipeline on the truss example, one datum and all data")
    common(sp, config=False)
    sp.add_argument("--data", choices=("virtual", "table1"), default="virtual")
    sp.add_argument("--kappa", type=int, default=2000)
    sp.add_argument("--converge", action="store_true", help="also run the MSE study on the all-data case")
    sp.add_argument("--figures", action="store_true")
    sp.set_defaults(func=cmd_truss_demo)

    sp = sub.add_parser("dempster", help="exact Dempster combination of two mass functions")
    common(sp, out=False)
    sp.add_argument("--out", default=None)
    sp.add_argument("--mc", type=int, default=0, help="also run the sampled combination with this many draws")
    sp.set_defaults(func=cmd_dempster)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s: %(message)s")
    try:
        return args.func(args)
    except TotalConflictError as e:
        print(f"error: total conflict: {e}", file=sys.stderr)
        return EXIT_CONFLICT
    except (StructuralError, DomainError, FloatingPointError, np.linalg.LinAlgError) as e:
        print(f"error: numerical failure: {e}", file=sys.stderr)
        return EXIT_NUMERIC
    except (ConfigError, ValueError, KeyError, TypeError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
