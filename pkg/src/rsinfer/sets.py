"""Set realizations: finite point sets, axis-aligned boxes and unions of boxes.

These are the only shapes a random set in this package can take.  All
geometric predicates (containment, hitting, intersection, support function,
Hausdorff distance) are exact for these shapes.
"""

from __future__ import annotations

import itertools
import math

import numpy as np
from scipy.spatial import QhullError, Voronoi, cKDTree

SET_TOL = 1e-12


class SetRealization:
    """Base class of every set shape."""

    dim: int

    @property
    def is_empty(self) -> bool:
        return False


class Empty(SetRealization):
    def __init__(self, dim: int = 1):
        self.dim = int(dim)

    @property
    def is_empty(self) -> bool:
        return True

    def __repr__(self):
        return f"Empty(dim={self.dim})"

    def __eq__(self, other):
        return isinstance(other, Empty) and other.dim == self.dim

    def __hash__(self):
        return hash(("empty", self.dim))


class IntervalBox(SetRealization):
    """Closed axis-aligned box ``[lo_1, hi_1] x ... x [lo_n, hi_n]``.

    A box with ``lo == hi`` in every coordinate is a single point.
    Infinite bounds are allowed so that half-lines like ``(-inf, x]`` can be
    used as queries.
    """

    __slots__ = ("lo", "hi", "dim")

    def __init__(self, lo, hi):
        lo = np.atleast_1d(np.asarray(lo, dtype=float)).copy()
        hi = np.atleast_1d(np.asarray(hi, dtype=float)).copy()
        if lo.ndim != 1 or lo.shape != hi.shape or lo.size == 0:
            raise ValueError(f"box bounds must be equal-length 1-D vectors, got {lo.shape} and {hi.shape}")
        if np.any(np.isnan(lo)) or np.any(np.isnan(hi)):
            raise ValueError("box bounds must not be NaN")
        if np.any(lo > hi):
            raise ValueError(f"box requires lo <= hi, got lo={lo}, hi={hi}")
        lo.flags.writeable = False
        hi.flags.writeable = False
        self.lo = lo
        self.hi = hi
        self.dim = lo.size

    @classmethod
    def whole(cls, dim: int) -> IntervalBox:
        return cls(np.full(dim, -np.inf), np.full(dim, np.inf))

    @classmethod
    def interval(cls, lo: float, hi: float) -> IntervalBox:
        return cls([lo], [hi])

    @property
    def is_bounded(self) -> bool:
        return bool(np.all(np.isfinite(self.lo)) and np.all(np.isfinite(self.hi)))

    @property
    def widths(self) -> np.ndarray:
        return self.hi - self.lo

    def corners(self) -> np.ndarray:
        return np.array(list(itertools.product(*zip(self.lo, self.hi))), dtype=float)

    def __eq__(self, other):
        return isinstance(other, IntervalBox) and np.array_equal(self.lo, other.lo) and np.array_equal(self.hi, other.hi)

    def __hash__(self):
        return hash((tuple(self.lo), tuple(self.hi)))

    def __repr__(self):
        if self.dim == 1:
            return f"IntervalBox([{self.lo[0]:g}, {self.hi[0]:g}])"
        return f"IntervalBox(lo={self.lo.tolist()}, hi={self.hi.tolist()})"


class Points(SetRealization):
    """Finite set of points, stored as a ``(k, n)`` array without duplicates."""

    __slots__ = ("coords", "dim")

    def __init__(self, coords, dim: int | None = None):
        arr = np.asarray(coords, dtype=float)
        if arr.ndim == 0:
            arr = arr.reshape(1, 1)
        elif arr.ndim == 1:
            # a flat list is read as scalar points unless the dimension says otherwise
            arr = arr.reshape(1, -1) if dim is not None and dim == arr.size and dim > 1 else arr.reshape(-1, 1)
        if arr.ndim != 2 or arr.shape[0] == 0:
            raise ValueError("Points needs at least one point; use Empty for the empty set")
        if not np.all(np.isfinite(arr)):
            raise ValueError("point coordinates must be finite")
        arr = _dedupe_rows(arr)
        arr.flags.writeable = False
        self.coords = arr
        self.dim = arr.shape[1]

    def __len__(self):
        return self.coords.shape[0]

    def __eq__(self, other):
        return isinstance(other, Points) and set_equal(self, other, tol=0.0)

    def __hash__(self):
        return hash(tuple(map(tuple, np.unique(self.coords, axis=0))))

    def __repr__(self):
        if self.dim == 1:
            return f"Points({self.coords[:, 0].tolist()})"
        return f"Points({self.coords.tolist()})"


class BoxUnion(SetRealization):
    """Finite union of boxes of equal dimension."""

    __slots__ = ("boxes", "dim")

    def __init__(self, boxes):
        boxes = tuple(boxes)
        if not boxes:
            raise ValueError("BoxUnion needs at least one member")
        for b in boxes:
            if not isinstance(b, IntervalBox):
                raise TypeError(f"BoxUnion members must be IntervalBox, got {type(b).__name__}")
        dims = {b.dim for b in boxes}
        if len(dims) != 1:
            raise ValueError(f"BoxUnion members have mixed dimensions {sorted(dims)}")
        self.boxes = boxes
        self.dim = boxes[0].dim

    def __eq__(self, other):
        return isinstance(other, BoxUnion) and set_equal(self, other, tol=0.0)

    def __hash__(self):
        return hash(frozenset(self.boxes))

    def __repr__(self):
        return f"BoxUnion({list(self.boxes)})"


def _dedupe_rows(arr: np.ndarray, tol: float = SET_TOL) -> np.ndarray:
    _, first = np.unique(arr, axis=0, return_index=True)
    arr = arr[np.sort(first)]
    if arr.shape[0] > 1 and tol > 0:
        pairs = cKDTree(arr).query_pairs(tol, output_type="ndarray")
        if len(pairs):
            keep = np.ones(arr.shape[0], dtype=bool)
            keep[pairs.max(axis=1)] = False
            arr = arr[keep]
    return arr


def make_set(obj, dim: int | None = None) -> SetRealization:
    """Coerce ``obj`` into a set: sets pass through, a pair ``(lo, hi)`` of scalars becomes an interval."""
    if isinstance(obj, SetRealization):
        return obj
    arr = np.asarray(obj, dtype=float)
    if arr.shape == (2,):
        return IntervalBox.interval(arr[0], arr[1])
    raise TypeError(f"cannot interpret {obj!r} as a set")


def _as_query_boxes(q) -> tuple[IntervalBox, ...]:
    if isinstance(q, IntervalBox):
        return (q,)
    if isinstance(q, BoxUnion):
        return q.boxes
    raise TypeError(f"queries must be IntervalBox or BoxUnion, got {type(q).__name__}")


def _points_in_box(coords: np.ndarray, box: IntervalBox) -> np.ndarray:
    return np.all((coords >= box.lo) & (coords <= box.hi), axis=1)


def _box_within(inner: IntervalBox, outer: IntervalBox) -> bool:
    return bool(np.all(inner.lo >= outer.lo) and np.all(inner.hi <= outer.hi))


def _boxes_meet(a: IntervalBox, b: IntervalBox) -> bool:
    return bool(np.all(a.lo <= b.hi) and np.all(b.lo <= a.hi))


def _box_minus(box: IntervalBox, cut: IntervalBox) -> list[IntervalBox]:
    """Closed pieces covering ``box`` minus ``cut`` (they share faces with ``cut``)."""
    if not _boxes_meet(box, cut):
        return [box]
    pieces = []
    lo, hi = box.lo.copy(), box.hi.copy()
    for i in range(box.dim):
        if lo[i] < cut.lo[i]:
            plo, phi = lo.copy(), hi.copy()
            phi[i] = cut.lo[i]
            pieces.append(IntervalBox(plo, phi))
            lo[i] = cut.lo[i]
        if hi[i] > cut.hi[i]:
            plo, phi = lo.copy(), hi.copy()
            plo[i] = cut.hi[i]
            pieces.append(IntervalBox(plo, phi))
            hi[i] = cut.hi[i]
    return pieces


def _box_covered(box: IntervalBox, cover: tuple[IntervalBox, ...]) -> bool:
    if len(cover) == 1:
        return _box_within(box, cover[0])
    remaining = [box]
    for c in cover:
        remaining = [p for r in remaining for p in _box_minus(r, c)]
        if not remaining:
            return True
    return False


def contains(s: SetRealization, q) -> bool:
    """True when ``s`` is a subset of the query ``q`` (a box or a union of boxes)."""
    if s.is_empty:
        raise ValueError("containment is undefined for the empty realization")
    qboxes = _as_query_boxes(q)
    if isinstance(s, Points):
        inside = np.zeros(len(s), dtype=bool)
        for b in qboxes:
            inside |= _points_in_box(s.coords, b)
        return bool(inside.all())
    if isinstance(s, IntervalBox):
        return _box_covered(s, qboxes)
    if isinstance(s, BoxUnion):
        return all(_box_covered(b, qboxes) for b in s.boxes)
    raise TypeError(f"unsupported set type {type(s).__name__}")


def hits(s: SetRealization, q) -> bool:
    """True when ``s`` and the query ``q`` have a common point."""
    if s.is_empty:
        raise ValueError("hitting is undefined for the empty realization")
    qboxes = _as_query_boxes(q)
    if isinstance(s, Points):
        return any(bool(_points_in_box(s.coords, b).any()) for b in qboxes)
    if isinstance(s, IntervalBox):
        return any(_boxes_meet(s, b) for b in qboxes)
    if isinstance(s, BoxUnion):
        return any(_boxes_meet(m, b) for m in s.boxes for b in qboxes)
    raise TypeError(f"unsupported set type {type(s).__name__}")


def intersect(a: SetRealization, b: SetRealization) -> SetRealization:
    """Exact intersection; returns :class:`Empty` when the sets are disjoint."""
    if a.dim != b.dim:
        raise ValueError(f"dimension mismatch: {a.dim} vs {b.dim}")
    if a.is_empty or b.is_empty:
        return Empty(a.dim)
    if isinstance(b, Points) and not isinstance(a, Points):
        a, b = b, a
    if isinstance(a, Points):
        if isinstance(b, Points):
            tree = cKDTree(b.coords)
            d, _ = tree.query(a.coords)
            mask = d <= SET_TOL
        else:
            mask = np.zeros(len(a), dtype=bool)
            for box in _as_query_boxes(b):
                mask |= _points_in_box(a.coords, box)
        return Points(a.coords[mask]) if mask.any() else Empty(a.dim)
    pieces = []
    for x in _as_query_boxes(a):
        for y in _as_query_boxes(b):
            lo, hi = np.maximum(x.lo, y.lo), np.minimum(x.hi, y.hi)
            if np.all(lo <= hi):
                box = IntervalBox(lo, hi)
                if not any(box == p for p in pieces):
                    pieces.append(box)
    if not pieces:
        return Empty(a.dim)
    return pieces[0] if len(pieces) == 1 else BoxUnion(pieces)


def set_equal(a: SetRealization, b: SetRealization, tol: float = SET_TOL) -> bool:
    """Structural set equality with an absolute tolerance on coordinates."""
    if a.dim != b.dim or type(a) is not type(b):
        if isinstance(a, (IntervalBox, BoxUnion)) and isinstance(b, (IntervalBox, BoxUnion)):
            ba, bb = _as_query_boxes(a), _as_query_boxes(b)
            return len(ba) == len(bb) and _boxes_match(ba, bb, tol)
        return False
    if isinstance(a, Empty):
        return True
    if isinstance(a, Points):
        if len(a) != len(b):
            return False
        d, _ = cKDTree(b.coords).query(a.coords)
        return bool(np.all(d <= tol))
    if isinstance(a, IntervalBox):
        return _close(a.lo, b.lo, tol) and _close(a.hi, b.hi, tol)
    return len(a.boxes) == len(b.boxes) and _boxes_match(a.boxes, b.boxes, tol)


def _close(x: np.ndarray, y: np.ndarray, tol: float) -> bool:
    with np.errstate(invalid="ignore"):
        return bool(np.all((x == y) | (np.abs(x - y) <= tol)))


def _boxes_match(xs, ys, tol) -> bool:
    unused = list(ys)
    for x in xs:
        for k, y in enumerate(unused):
            if set_equal(x, y, tol):
                del unused[k]
                break
        else:
            return False
    return True


def support_function(s: SetRealization, nu) -> float:
    """Exact support function ``sup_{x in s} nu . x``."""
    nu = np.asarray(nu, dtype=float)
    if s.is_empty:
        raise ValueError("support function of the empty set is undefined")
    if nu.shape != (s.dim,):
        raise ValueError(f"direction has shape {nu.shape}, set has dimension {s.dim}")
    if isinstance(s, Points):
        return float(np.max(s.coords @ nu))
    if isinstance(s, IntervalBox):
        return _box_support(s.lo, s.hi, nu)
    if isinstance(s, BoxUnion):
        return max(_box_support(b.lo, b.hi, nu) for b in s.boxes)
    raise TypeError(f"unsupported set type {type(s).__name__}")


def _box_support(lo, hi, nu) -> float:
    extreme = np.where(nu > 0, hi, lo)
    active = nu != 0
    if not np.all(np.isfinite(extreme[active])):
        return math.inf
    return float(extreme[active] @ nu[active])


# ---------------------------------------------------------------- Hausdorff


def hausdorff_distance(a: SetRealization, b: SetRealization) -> float:
    """Euclidean Hausdorff distance between two bounded sets.

    At least one argument must be a :class:`Points` set; the box/box case
    is not supported.
    """
    if a.is_empty or b.is_empty:
        raise ValueError("Hausdorff distance needs nonempty sets")
    if a.dim != b.dim:
        raise ValueError(f"dimension mismatch: {a.dim} vs {b.dim}")
    if not isinstance(a, Points) and not isinstance(b, Points):
        raise NotImplementedError("Hausdorff distance between two box-shaped sets is not supported")
    return max(directed_hausdorff(a, b), directed_hausdorff(b, a))


def directed_hausdorff(a: SetRealization, b: SetRealization) -> float:
    """``sup_{x in a} inf_{y in b} |x - y|`` for the supported shape pairs."""
    if isinstance(a, Points) and isinstance(b, Points):
        d, _ = cKDTree(b.coords).query(a.coords)
        return float(d.max())
    if isinstance(a, Points):
        return float(max(_distance_to_boxes(a.coords, _as_query_boxes(b))))
    if not isinstance(b, Points):
        raise NotImplementedError("Hausdorff distance between two box-shaped sets is not supported")
    return max(_box_to_points(box, b.coords) for box in _as_query_boxes(a))


def _distance_to_boxes(coords, boxes):
    dists = []
    for box in boxes:
        gap = np.maximum(box.lo - coords, 0) + np.maximum(coords - box.hi, 0)
        dists.append(np.sqrt(np.sum(gap**2, axis=1)))
    return np.min(dists, axis=0)


def _box_to_points(box: IntervalBox, pts: np.ndarray) -> float:
    """Largest distance from a point of ``box`` to its nearest point in ``pts``."""
    if not box.is_bounded:
        return math.inf
    tree = cKDTree(pts)
    cands = [box.corners()]
    if box.dim == 1:
        xs = np.sort(pts[:, 0])
        mids = 0.5 * (xs[1:] + xs[:-1])
        cands.append(mids[(mids >= box.lo[0]) & (mids <= box.hi[0])].reshape(-1, 1))
    elif box.dim == 2:
        cands.append(_voronoi_candidates_2d(box, pts))
    else:
        cands.append(_mirror_voronoi_candidates(box, pts))
    c = np.vstack([x for x in cands if len(x)])
    d, _ = tree.query(c)
    return float(d.max())


def _voronoi_candidates_2d(box: IntervalBox, pts: np.ndarray) -> np.ndarray:
    """Voronoi vertices inside ``box`` and Voronoi edge crossings of its boundary.

    The nearest-point distance restricted to the box attains its maximum at
    one of these points or at a corner.
    """
    pts = np.unique(pts, axis=0)
    if len(pts) == 1:
        return np.empty((0, 2))
    try:
        vor = Voronoi(pts)
    except QhullError:
        return _pairwise_candidates_2d(box, pts)
    out = [vor.vertices[_points_in_box(vor.vertices, box)]]
    center = pts.mean(axis=0)
    span = np.ptp(np.vstack([pts, box.corners()]), axis=0).max()
    far = 4.0 * span + 1.0
    segs = []
    for (p, q), ridge in zip(vor.ridge_points, vor.ridge_vertices):
        ridge = np.asarray(ridge)
        if np.all(ridge >= 0):
            segs.append((vor.vertices[ridge[0]], vor.vertices[ridge[1]]))
        else:
            start = vor.vertices[ridge[ridge >= 0][0]]
            t = pts[q] - pts[p]
            n = np.array([-t[1], t[0]]) / np.linalg.norm(t)
            mid = 0.5 * (pts[p] + pts[q])
            direction = np.sign(np.dot(mid - center, n)) * n
            if not np.any(direction):
                direction = n
            segs.append((start, start + direction * (far + np.linalg.norm(start - center))))
    out.append(_segment_box_crossings(box, segs))
    return np.vstack(out)


def _segment_box_crossings(box: IntervalBox, segs) -> np.ndarray:
    if not segs:
        return np.empty((0, 2))
    a = np.array([s[0] for s in segs])
    b = np.array([s[1] for s in segs])
    d = b - a
    found = []
    with np.errstate(divide="ignore", invalid="ignore"):
        for axis in (0, 1):
            other = 1 - axis
            for level in (box.lo[axis], box.hi[axis]):
                t = (level - a[:, axis]) / d[:, axis]
                ok = np.isfinite(t) & (t >= 0) & (t <= 1)
                y = a[ok, other] + t[ok] * d[ok, other]
                ok2 = (y >= box.lo[other]) & (y <= box.hi[other])
                pt = np.empty((ok2.sum(), 2))
                pt[:, axis] = level
                pt[:, other] = y[ok2]
                found.append(pt)
    return np.vstack(found)


def _pairwise_candidates_2d(box: IntervalBox, pts: np.ndarray) -> np.ndarray:
    # degenerate input for qhull (too few or collinear points): brute-force bisectors
    if len(pts) > 400:
        raise ValueError("degenerate point configuration too large for the pairwise fallback")
    cands = []
    corners = box.corners()
    edges = [(corners[0], corners[1]), (corners[1], corners[3]), (corners[3], corners[2]), (corners[2], corners[0])]
    for p, q in itertools.combinations(pts, 2):
        mid, t = 0.5 * (p + q), q - p
        n = np.array([-t[1], t[0]])
        for e0, e1 in edges:
            m = np.column_stack([n, e0 - e1])
            if abs(np.linalg.det(m)) < 1e-15:
                continue
            s, r = np.linalg.solve(m, e0 - mid)
            if 0 <= r <= 1:
                cands.append(e0 + r * (e1 - e0))
    for p, q, r in itertools.combinations(pts, 3):
        m = 2 * np.array([q - p, r - p])
        if abs(np.linalg.det(m)) < 1e-15:
            continue
        c = np.linalg.solve(m, np.array([q @ q - p @ p, r @ r - p @ p]))
        if np.all(c >= box.lo) and np.all(c <= box.hi):
            cands.append(c)
    return np.array(cands).reshape(-1, 2)


def _mirror_voronoi_candidates(box: IntervalBox, pts: np.ndarray) -> np.ndarray:
    """Cell vertices of ``pts`` clipped to ``box`` by mirroring across every face.

    Exact when all points lie inside the box, which is the only case needed
    (a point sample of the box itself).
    """
    if not np.all(_points_in_box(pts, box)):
        raise NotImplementedError("Hausdorff distance in dimension > 2 needs the points inside the box")
    pts = np.unique(pts, axis=0)
    mirrored = [pts]
    for i in range(box.dim):
        for level in (box.lo[i], box.hi[i]):
            m = pts.copy()
            m[:, i] = 2 * level - m[:, i]
            mirrored.append(m)
    vor = Voronoi(np.vstack(mirrored))
    verts = vor.vertices
    return verts[_points_in_box(verts, IntervalBox(box.lo - 1e-9, box.hi + 1e-9))].clip(box.lo, box.hi)


# ------------------------------------------------------------ serialization


def _num(x: float):
    return x if math.isfinite(x) else ("inf" if x > 0 else "-inf")


def set_to_json(s: SetRealization) -> dict:
    """JSON-ready description; infinite bounds are written as ``"inf"``/``"-inf"``."""
    if isinstance(s, Empty):
        return {"empty": s.dim}
    if isinstance(s, IntervalBox):
        return {"box": [[_num(v) for v in s.lo], [_num(v) for v in s.hi]]}
    if isinstance(s, Points):
        return {"points": s.coords.tolist()}
    if isinstance(s, BoxUnion):
        return {"union": [set_to_json(b) for b in s.boxes]}
    raise TypeError(f"unsupported set type {type(s).__name__}")


def set_from_json(obj) -> SetRealization:
    """Inverse of :func:`set_to_json`; also accepts ``{"interval": [lo, hi]}`` and a bare ``[lo, hi]``."""
    if isinstance(obj, (list, tuple)):
        return make_set([float(v) for v in obj])
    if not isinstance(obj, dict) or len(obj) != 1:
        raise ValueError(f"a set is a one-key mapping, got {obj!r}")
    (kind, val), = obj.items()
    if kind == "empty":
        return Empty(int(val))
    if kind == "interval":
        return IntervalBox.interval(float(val[0]), float(val[1]))
    if kind == "box":
        return IntervalBox([float(v) for v in val[0]], [float(v) for v in val[1]])
    if kind == "points":
        arr = np.asarray(val, dtype=float)
        return Points(arr.reshape(-1, 1) if arr.ndim == 1 else arr)
    if kind == "union":
        return BoxUnion([set_from_json(b) for b in val])
    raise ValueError(f"unknown set kind {kind!r}")


def member(s: SetRealization, x) -> bool:
    """True when the point ``x`` belongs to ``s``."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    if s.is_empty:
        return False
    if x.shape != (s.dim,):
        raise ValueError(f"point has shape {x.shape}, set has dimension {s.dim}")
    if isinstance(s, Points):
        return bool(np.min(np.linalg.norm(s.coords - x, axis=1)) <= SET_TOL)
    return any(bool(np.all((x >= b.lo) & (x <= b.hi))) for b in _as_query_boxes(s))
