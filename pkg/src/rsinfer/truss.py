"""Pin-jointed planar truss with axial bar elements.

Parameters are ``x = [E, q]``: ``E`` scales the stiffness of bars tagged
``horizontal`` and ``q`` scales every applied nodal force.  The response is
the displacement of each sensor node along its sensor axis.
"""

from __future__ import annotations

import json
import math
import threading
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy.linalg import LinAlgError, cho_factor, cho_solve

HORIZONTAL = "horizontal"
OTHER = "other"
_AXIS = {"x": 0, "y": 1}


class StructuralError(RuntimeError):
    """The constrained stiffness matrix is singular or indefinite."""


@dataclass(frozen=True)
class TrussParams:
    E: float
    q: float

    def __post_init__(self):
        if not self.E > 0:
            raise ValueError(f"E must be positive, got {self.E}")

    @classmethod
    def from_vector(cls, x) -> TrussParams:
        E, q = (float(v) for v in np.asarray(x, dtype=float).ravel())
        return cls(E, q)


@dataclass
class TrussGeometry:
    nodes: np.ndarray
    bars: list
    supports: list
    loads: list
    sensors: list
    area: float = 1.0
    other_stiffness: float = 1.0
    load_unit: float = 1.0

    def __post_init__(self):
        self.nodes = np.asarray(self.nodes, dtype=float).reshape(-1, 2)
        n = len(self.nodes)
        bars = []
        for b in self.bars:
            a, c = int(b[0]), int(b[1])
            tag = b[2] if len(b) > 2 else OTHER
            if tag not in (HORIZONTAL, OTHER):
                raise ValueError(f"unknown bar group {tag!r}")
            if not (0 <= a < n and 0 <= c < n) or a == c:
                raise ValueError(f"bar {b} references invalid nodes")
            if np.allclose(self.nodes[a], self.nodes[c]):
                raise ValueError(f"bar {b} has zero length")
            bars.append((a, c, tag))
        self.bars = bars
        self.supports = [(int(s[0]), s[1]) for s in self.supports]
        self.loads = [(int(l[0]), float(l[1]), float(l[2])) for l in self.loads]
        self.sensors = [(int(s), "y") if np.isscalar(s) else (int(s[0]), s[1]) for s in self.sensors]
        for node, axis in self.supports + self.sensors:
            if not 0 <= node < n or axis not in _AXIS:
                raise ValueError(f"bad node/axis pair ({node}, {axis!r})")
        for node, _, _ in self.loads:
            if not 0 <= node < n:
                raise ValueError(f"load node {node} does not exist")
        if not self.sensors:
            raise ValueError("at least one sensor is required")
        if self.area <= 0 or self.other_stiffness <= 0:
            raise ValueError("area and other_stiffness must be positive")

    @property
    def n_dof(self) -> int:
        return 2 * len(self.nodes)

    def free_dofs(self) -> np.ndarray:
        fixed = {2 * node + _AXIS[axis] for node, axis in self.supports}
        return np.array([d for d in range(self.n_dof) if d not in fixed], dtype=int)

    def to_json(self) -> dict:
        return {
            "nodes": self.nodes.tolist(),
            "bars": [list(b) for b in self.bars],
            "supports": [list(s) for s in self.supports],
            "loads": [list(l) for l in self.loads],
            "sensors": [list(s) for s in self.sensors],
            "area": self.area,
            "other_stiffness": self.other_stiffness,
            "load_unit": self.load_unit,
        }

    @classmethod
    def from_json(cls, d: dict) -> TrussGeometry:
        keys = ("nodes", "bars", "supports", "loads", "sensors")
        missing = [k for k in keys if k not in d]
        if missing:
            raise ValueError(f"geometry is missing {missing}")
        extra = {k: float(d[k]) for k in ("area", "other_stiffness", "load_unit") if k in d}
        return cls(*(d[k] for k in keys), **extra)

    @classmethod
    def load(cls, path) -> TrussGeometry:
        return cls.from_json(json.loads(Path(path).read_text()))

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_json(), indent=1) + "\n")


def pratt_truss(panels: int = 12, panel_length: float = 1.0, height: float = 1.0, load_unit: float = 1.0) -> TrussGeometry:
    """Statically determinate Pratt truss loaded and measured on the bottom chord.

    Bottom nodes ``0..panels`` come first, then top nodes above bottom nodes
    ``1..panels-1``.  Pin at bottom node 0, roller at the last bottom node.
    Web diagonals run from the top chord down toward midspan.
    """
    if panels < 4 or panels % 2:
        raise ValueError("panels must be an even number >= 4")
    nb = panels + 1
    bottom = [(k * panel_length, 0.0) for k in range(nb)]
    top = [(k * panel_length, height) for k in range(1, panels)]
    t = lambda k: nb + k - 1  # noqa: E731  top node above bottom node k
    bars = [(k, k + 1, HORIZONTAL) for k in range(panels)]
    bars += [(t(k), t(k + 1), HORIZONTAL) for k in range(1, panels - 1)]
    bars += [(k, t(k), OTHER) for k in range(1, panels)]
    bars += [(0, t(1), OTHER), (panels, t(panels - 1), OTHER)]
    half = panels // 2
    bars += [(t(k), k + 1, OTHER) for k in range(1, half)]
    bars += [(t(k), k - 1, OTHER) for k in range(half + 1, panels)]
    return TrussGeometry(
        nodes=bottom + top,
        bars=bars,
        supports=[(0, "x"), (0, "y"), (panels, "y")],
        loads=[(k, 0.0, -1.0) for k in range(1, panels)],
        sensors=[(k, "y") for k in range(1, panels)],
        load_unit=load_unit,
    )


def _assemble(g: TrussGeometry) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Stiffness split into the ``horizontal`` and ``other`` groups, and the unit load."""
    kh = np.zeros((g.n_dof, g.n_dof))
    ko = np.zeros((g.n_dof, g.n_dof))
    for a, b, tag in g.bars:
        d = g.nodes[b] - g.nodes[a]
        length = float(np.hypot(*d))
        c, s = d / length
        blk = np.outer([c, s], [c, s]) * g.area / length
        if tag == OTHER:
            blk = blk * g.other_stiffness
        k = kh if tag == HORIZONTAL else ko
        idx = [2 * a, 2 * a + 1, 2 * b, 2 * b + 1]
        k[np.ix_(idx, idx)] += np.block([[blk, -blk], [-blk, blk]])
    f = np.zeros(g.n_dof)
    for node, fx, fy in g.loads:
        f[2 * node] += fx * g.load_unit
        f[2 * node + 1] += fy * g.load_unit
    return kh, ko, f


def solve_displacements(g: TrussGeometry, p: TrussParams) -> np.ndarray:
    """Sensor displacements from a dense Cholesky solve of the constrained system."""
    return TrussModel(g)(np.array([p.E, p.q]))


class TrussModel:
    """Forward model ``h(x)`` for ``x = [E, q]`` with a thread-safe call counter."""

    def __init__(self, g: TrussGeometry):
        self.geometry = g
        kh, ko, f = _assemble(g)
        free = g.free_dofs()
        self._kh = kh[np.ix_(free, free)]
        self._ko = ko[np.ix_(free, free)]
        self._f = f[free]
        pos = {d: i for i, d in enumerate(free)}
        try:
            self._sensor = np.array([pos[2 * n + _AXIS[a]] for n, a in g.sensors])
        except KeyError as e:
            raise ValueError(f"sensor dof {e.args[0]} is constrained") from None
        self._lock = threading.Lock()
        self.calls = 0

    @property
    def n_channels(self) -> int:
        return len(self._sensor)

    def reset_counter(self) -> None:
        with self._lock:
            self.calls = 0

    def __call__(self, x) -> np.ndarray:
        p = TrussParams.from_vector(x)
        with self._lock:
            self.calls += 1
        k = p.E * self._kh + self._ko
        try:
            c = cho_factor(k, check_finite=False)
        except LinAlgError:
            raise StructuralError("constrained stiffness matrix is not positive definite") from None
        if np.min(np.abs(np.diag(c[0]))) ** 2 < 1e-12 * np.max(np.abs(np.diag(k))):
            raise StructuralError("constrained stiffness matrix is numerically singular")
        u = cho_solve(c, self._f * p.q, check_finite=False)
        return u[self._sensor]


# ----------------------------------------------------------- measurement data


@dataclass(frozen=True)
class MeasurementRecord:
    channel: str
    u_true: float
    u_obs: float
    z_lo: float
    z_hi: float


def observation_interval(u_obs: float, resolution: float = 1.0) -> tuple[float, float]:
    """Resolution cell ``[floor(u/res)·res, floor(u/res)·res + res]`` holding ``u_obs``."""
    if not resolution > 0:
        raise ValueError("resolution must be positive")
    lo = math.floor(u_obs / resolution) * resolution
    return lo, lo + resolution


def generate_virtual_data(
    g: TrussGeometry, truth: TrussParams, noise_seed: int, resolution: float = 1.0, names: Sequence[str] | None = None
) -> list[MeasurementRecord]:
    """Truth response plus i.i.d. standard normal noise, quantized to the sensor resolution."""
    if not resolution > 0:
        raise ValueError("resolution must be positive")
    u = solve_displacements(g, truth)
    eps = np.random.default_rng(noise_seed).standard_normal(len(u))
    names = list(names) if names is not None else [f"a{i + 1}" for i in range(len(u))]
    out = []
    for name, ut, e in zip(names, u, eps):
        obs = float(ut + e)
        out.append(MeasurementRecord(name, float(ut), obs, *observation_interval(obs, resolution)))
    return out


# Virtual measurements a1..a11 of the reference experiment, kept verbatim.
# The a8 truth value carries the opposite sign of its observation.
TABLE1: tuple[MeasurementRecord, ...] = tuple(
    MeasurementRecord(f"a{i + 1}", ut, uo, lo, lo + 1.0)
    for i, (ut, uo, lo) in enumerate(
        [
            (-4.3959, -5.2414, -6.0),
            (-5.9547, -5.7764, -6.0),
            (-5.3349, -6.1868, -7.0),
            (-3.8462, -2.9703, -3.0),
            (-1.9231, -3.8885, -4.0),
            (-2.5000, -0.7187, -1.0),
            (-5.7488, -6.7999, -7.0),
            (5.7263, -7.0940, -8.0),
            (-4.6177, -4.5517, -5.0),
            (-2.8575, -2.0691, -3.0),
            (-0.8801, 0.9171, 0.0),
        ]
    )
)


def validate_records(records: Sequence[MeasurementRecord], resolution: float = 1.0, tol: float = 1e-12) -> list[str]:
    """Problems found in a record set: observation outside its cell, wrong width, or off-grid cell."""
    problems = []
    for r in records:
        if not r.z_lo - tol <= r.u_obs <= r.z_hi + tol:
            problems.append(f"{r.channel}: observation {r.u_obs} outside [{r.z_lo}, {r.z_hi}]")
        if abs((r.z_hi - r.z_lo) - resolution) > tol:
            problems.append(f"{r.channel}: cell width {r.z_hi - r.z_lo} != {resolution}")
        if (r.z_lo, r.z_hi) != observation_interval(r.u_obs, resolution):
            problems.append(f"{r.channel}: cell [{r.z_lo}, {r.z_hi}] does not follow the floor rule")
    return problems


@dataclass
class DemoSetup:
    """Everything the truss demonstration needs in one place."""

    geometry: TrussGeometry
    truth: TrussParams
    records: list
    meta: dict = field(default_factory=dict)


DEMO_TRUTH = TrussParams(0.95, 0.9)
DEMO_MIDSPAN = -6.0


def demo_geometry() -> TrussGeometry:
    """Default Pratt truss with the load unit chosen so that midspan deflection at the demo truth is -6."""
    g = pratt_truss()
    u = solve_displacements(g, DEMO_TRUTH)
    g.load_unit = DEMO_MIDSPAN / float(u[len(u) // 2])
    return g
