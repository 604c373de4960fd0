"""File formats: run configs, measurement records, atoms, sample streams, sidecars.

Every CSV written here has a header row.  Floats are written with 17
significant digits so that reading a file back gives the same bits.
"""

from __future__ import annotations

import atexit
import csv
import json
import math
import subprocess
import threading
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .inference import MeasurementModel, Noise
from .models import PriorSpec
from .sampler import AlgoOneConfig, AtomSet, McmcConfig, PosteriorSamples
from .truss import TrussGeometry, TrussModel, demo_geometry


class ConfigError(ValueError):
    """Invalid or inconsistent input file."""


def fmt(v: float) -> str:
    v = float(v)
    if math.isinf(v):
        return "inf" if v > 0 else "-inf"
    return repr(v) if v == v else "nan"


def _parse(s: str) -> float:
    return float(s.strip())


def _open_existing(path, what: str) -> Path:
    p = Path(path)
    if not p.is_file():
        raise ConfigError(f"{what} not found: {p}")
    return p


def write_csv(path, header: Sequence[str], rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([fmt(v) if isinstance(v, (float, np.floating)) else v for v in r])


def write_sidecar(csv_path, meta: dict) -> Path:
    p = Path(str(csv_path) + ".meta.json")
    p.write_text(json.dumps(meta, indent=1, sort_keys=True, default=_json_default) + "\n")
    return p


def _json_default(o):
    if isinstance(o, (np.integer,)):
        return int(o)
    if isinstance(o, (np.floating,)):
        return float(o)
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(type(o).__name__)


# --------------------------------------------------------------- measurements


@dataclass
class MeasurementTable:
    channels: list
    z_lo: np.ndarray
    z_hi: np.ndarray
    noise: list

    def noise_laws(self) -> list[Noise]:
        return list(self.noise)


def read_measurements(path) -> MeasurementTable:
    """``channel,z_lo,z_hi,noise_family,noise_scale`` (``noise_sd`` accepted; family defaults to gaussian)."""
    p = _open_existing(path, "measurement file")
    with open(p, newline="") as fh:
        rows = list(csv.DictReader(fh))
    if not rows:
        raise ConfigError(f"measurement file {p} has no records")
    names, lo, hi, noise = [], [], [], []
    for k, r in enumerate(rows, start=2):
        try:
            scale = r.get("noise_scale") or r.get("noise_sd")
            if scale is None:
                raise KeyError("noise_scale")
            names.append(r["channel"])
            lo.append(_parse(r["z_lo"]))
            hi.append(_parse(r["z_hi"]))
            noise.append(Noise((r.get("noise_family") or "gaussian").strip(), _parse(scale)))
        except (KeyError, ValueError) as e:
            raise ConfigError(f"{p}:{k}: bad measurement record ({e})") from None
    return MeasurementTable(names, np.array(lo), np.array(hi), noise)


def write_measurements(path, channels, z_lo, z_hi, noise: Sequence[Noise]) -> None:
    write_csv(
        path,
        ["channel", "z_lo", "z_hi", "noise_family", "noise_scale"],
        [(c, float(a), float(b), n.family, float(n.scale)) for c, a, b, n in zip(channels, z_lo, z_hi, noise)],
    )


def write_records(path, records) -> None:
    write_csv(
        path,
        ["channel", "u_true", "u_obs", "z_lo", "z_hi"],
        [(r.channel, r.u_true, r.u_obs, r.z_lo, r.z_hi) for r in records],
    )


# ----------------------------------------------------------------- atoms


def write_atoms(path, atoms: AtomSet, names: Sequence[str] | None = None, channels: Sequence[str] | None = None) -> None:
    names = list(names or [f"x{i}" for i in range(atoms.dim)])
    m = atoms.responses.shape[1]
    channels = list(channels or [f"h{i}" for i in range(m)])
    header = ["index"] + names + [f"h:{c}" for c in channels]
    write_csv(path, header, ([k] + list(map(float, a)) + list(map(float, r)) for k, (a, r) in enumerate(zip(atoms.atoms, atoms.responses))))


def read_atoms(path, dim: int | None = None) -> tuple[AtomSet, list, list]:
    """Atoms, parameter names and channel names from an atoms CSV."""
    p = _open_existing(path, "atoms file")
    with open(p, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        rows = [r for r in reader if r]
    if not header or header[0] != "index" or not rows:
        raise ConfigError(f"{p} is not an atoms file")
    hcols = [i for i, h in enumerate(header) if h.startswith("h:")]
    xcols = [i for i in range(1, len(header)) if i not in hcols]
    if dim is not None and len(xcols) != dim:
        raise ConfigError(f"{p} holds {len(xcols)}-dimensional atoms, expected {dim}")
    data = np.array([[_parse(v) for v in r] for r in rows])
    if not np.array_equal(data[:, 0], np.arange(len(rows))):
        raise ConfigError(f"{p}: index column must count up from 0")
    atoms = AtomSet(data[:, xcols], data[:, hcols] if hcols else np.empty((len(rows), 0)), float("nan"))
    meta_path = Path(str(p) + ".meta.json")
    if meta_path.is_file():
        atoms.meta = json.loads(meta_path.read_text())
        atoms.acceptance_rate = atoms.meta.get("acceptance_rate", float("nan"))
    return atoms, [header[i] for i in xcols], [header[i][2:] for i in hcols]


def write_samples(path, samples: PosteriorSamples) -> None:
    """One line per posterior sample: space-separated atom indices."""
    with open(path, "w") as fh:
        for k in range(len(samples)):
            fh.write(" ".join(map(str, samples.indices[samples.offsets[k] : samples.offsets[k + 1]])) + "\n")


def read_samples(path) -> PosteriorSamples:
    p = _open_existing(path, "samples file")
    idx, offsets = [], [0]
    for line in p.read_text().splitlines():
        if line.strip():
            row = [int(t) for t in line.split()]
            idx.extend(row)
            offsets.append(len(idx))
    n = len(offsets) - 1
    return PosteriorSamples(idx, offsets, np.column_stack([np.arange(n), np.zeros(n, dtype=int)]), n, None)


# ---------------------------------------------------------- forward models


class CommandModel:
    """External forward model run as a child process.

    Each evaluation writes one line of space-separated parameters and reads
    back one line of responses.  Calls are serialized with a lock.
    """

    def __init__(self, argv: Sequence[str], cwd=None):
        self.argv = list(argv)
        self._lock = threading.Lock()
        self._proc = subprocess.Popen(
            self.argv, stdin=subprocess.PIPE, stdout=subprocess.PIPE, text=True, bufsize=1, cwd=cwd
        )
        self.calls = 0
        atexit.register(self.close)

    def __call__(self, x) -> np.ndarray:
        with self._lock:
            self.calls += 1
            self._proc.stdin.write(" ".join(fmt(v) for v in np.ravel(x)) + "\n")
            self._proc.stdin.flush()
            line = self._proc.stdout.readline()
        if not line:
            raise RuntimeError(f"forward command {self.argv} closed its output")
        return np.array([float(t) for t in line.split()])

    def close(self) -> None:
        if self._proc.poll() is None:
            self._proc.stdin.close()
            self._proc.wait(timeout=10)


class IdentityModel:
    def __init__(self):
        self.calls = 0

    def __call__(self, x):
        self.calls += 1
        return np.array(x, dtype=float, copy=True)


# ------------------------------------------------------------------ configs


@dataclass
class RunConfig:
    """Parsed run configuration; relative paths resolve against the config file."""

    prior: PriorSpec
    measurements: MeasurementTable | None
    forward: object
    reentrant: bool
    mcmc: dict
    algorithm: dict
    thresholds: dict
    directions: int
    seed: int
    converge: dict = field(default_factory=dict)
    channels: list | None = None
    raw: dict = field(default_factory=dict)

    def measurement_model(self) -> MeasurementModel:
        if self.measurements is None:
            raise ConfigError("config has no measurements section")
        t = self.measurements
        mm = MeasurementModel(self.forward, t.z_lo, t.z_hi, t.noise, t.channels, self.reentrant)
        if self.channels is not None:
            mm = mm.subset(self.channels)
        return mm

    def mcmc_config(self, kappa: int | None = None, seed: int | None = None) -> McmcConfig:
        c = dict(self.mcmc)
        if kappa is not None:
            c["kappa"] = kappa
        c["seed"] = c.get("seed", 0) if seed is None else seed
        return McmcConfig(**c)

    def algo_config(self, seed: int) -> AlgoOneConfig:
        return AlgoOneConfig(seed=seed, **self.algorithm)

    def threshold_grid(self, dim: int, lo: float, hi: float) -> np.ndarray:
        name = self.prior.names[dim]
        spec = self.thresholds.get(name, self.thresholds.get(str(dim), {}))
        if isinstance(spec, list):
            return np.asarray(spec, dtype=float)
        return np.linspace(spec.get("lo", lo), spec.get("hi", hi), int(spec.get("count", 200)))


def load_config_file(path) -> tuple[dict, Path]:
    p = _open_existing(path, "config file")
    text = p.read_text()
    try:
        if p.suffix in (".yaml", ".yml"):
            import yaml

            raw = yaml.safe_load(text)
        else:
            raw = json.loads(text)
    except Exception as e:  # parse errors of either format
        raise ConfigError(f"cannot parse {p}: {e}") from None
    if not isinstance(raw, dict):
        raise ConfigError(f"{p}: top level must be a mapping")
    return raw, p.parent


_MCMC_KEYS = {"kappa", "burn_in", "proposal_scale", "init", "thin", "tune", "pilot_steps"}
_ALGO_KEYS = {"n_prior", "n_eps", "rv_radius", "conditioned_noise"}


def _forward_from(raw: dict, base: Path):
    spec = raw.get("forward", {"kind": "identity"})
    kind = spec.get("kind")
    if kind == "identity":
        return IdentityModel(), True
    if kind == "truss":
        if "geometry" in spec:
            g = TrussGeometry.load(_open_existing(base / spec["geometry"], "geometry file"))
        else:
            g = demo_geometry()
        return TrussModel(g), True
    if kind == "command":
        argv = spec.get("argv")
        if not argv:
            raise ConfigError("command forward model needs argv")
        return CommandModel(argv, cwd=base), bool(spec.get("reentrant", False))
    raise ConfigError(f"unknown forward model kind {kind!r}")


def parse_run_config(raw: dict, base: Path = Path(".")) -> RunConfig:
    try:
        prior = PriorSpec.from_json(raw["prior"])
    except KeyError:
        raise ConfigError("config needs a prior section") from None
    except (TypeError, ValueError) as e:
        raise ConfigError(f"bad prior: {e}") from None
    meas = None
    if "measurements" in raw:
        meas = read_measurements(base / raw["measurements"])
    mcmc = dict(raw.get("mcmc", {}))
    algo = dict(raw.get("algorithm", {}))
    for name, got, allowed in (("mcmc", mcmc, _MCMC_KEYS), ("algorithm", algo, _ALGO_KEYS)):
        bad = set(got) - allowed
        if bad:
            raise ConfigError(f"unknown {name} keys {sorted(bad)}")
    mcmc.setdefault("kappa", 2000)
    forward, reentrant = _forward_from(raw, base)
    cfg = RunConfig(
        prior=prior,
        measurements=meas,
        forward=forward,
        reentrant=reentrant,
        mcmc=mcmc,
        algorithm=algo,
        thresholds=dict(raw.get("thresholds", {})),
        directions=int(raw.get("directions", 360)),
        seed=int(raw.get("seed", 0)),
        converge=dict(raw.get("converge", {})),
        channels=raw.get("channels"),
        raw=raw,
    )
    if mcmc.get("init") is not None and len(mcmc["init"]) != len(prior):
        raise ConfigError(f"mcmc.init has {len(mcmc['init'])} entries, prior has {len(prior)} dimensions")
    if mcmc.get("proposal_scale") is not None and np.ndim(mcmc["proposal_scale"]) and len(mcmc["proposal_scale"]) != len(prior):
        raise ConfigError("mcmc.proposal_scale length does not match the prior dimension")
    return cfg


def load_run_config(path) -> RunConfig:
    raw, base = load_config_file(path)
    return parse_run_config(raw, base)
