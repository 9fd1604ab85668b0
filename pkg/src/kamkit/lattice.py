"""Integer-lattice combinatorics: pseudo-metric, spheres, resonance blocks.

Everything here works on a finite truncation {|a| <= R} of Z^d.  Points are
plain tuples of ints.  Sphere enumeration is done by exhaustive box scan and
serves as the oracle for the rest of the package.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

from functools import lru_cache

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components
from scipy.spatial import cKDTree

Point = tuple  # tuple[int, ...]


def _as_point(a) -> Point:
    return tuple(int(x) for x in a)


def norm_sq(a) -> int:
    return sum(int(x) * int(x) for x in a)


def pseudo_dist(a, b) -> float:
    """[a-b] = min(|a-b|, |a+b|)."""
    if len(a) != len(b):
        raise ValueError(f"dimension mismatch: {len(a)} vs {len(b)}")
    dm = sum((x - y) ** 2 for x, y in zip(a, b))
    dp = sum((x + y) ** 2 for x, y in zip(a, b))
    return math.sqrt(min(dm, dp))


@lru_cache(maxsize=32)
def _ball_points_cached(R: float, d: int) -> tuple[Point, ...]:
    r = int(math.floor(R))
    axis = np.arange(-r, r + 1)
    grids = np.meshgrid(*([axis] * d), indexing="ij")
    X = np.stack([g.ravel() for g in grids], axis=1)
    X = X[(X ** 2).sum(axis=1) <= R * R]
    return tuple(map(tuple, X.tolist()))


def ball_points(R: float, d: int) -> list[Point]:
    """All integer points with |a| <= R, lexicographically ordered."""
    return list(_ball_points_cached(float(R), int(d)))


def sphere_points(nsq: int, d: int, R: float | None = None) -> list[Point]:
    """Integer points with |x|^2 = nsq, by exhaustive box scan."""
    if nsq < 0:
        raise ValueError("norm_sq must be nonnegative")
    if R is not None and nsq > R * R:
        raise ValueError(f"norm_sq {nsq} exceeds truncation R^2 = {R * R}")
    r = int(math.isqrt(nsq))
    return [a for a in itertools.product(range(-r, r + 1), repeat=d)
            if norm_sq(a) == nsq]


@dataclass
class BlockPartition:
    """Partition of the truncated lattice into resonance blocks.

    Classes are tuples of points.  The designated finite set F is one class,
    the low-norm core {|a| <= core_cutoff} another; the remaining classes are
    generated by |a|=|b|, [a-b] <= delta restricted to the truncation.
    """
    delta: float            # positive int or math.inf
    radius: float
    d: int
    classes: list[tuple[Point, ...]]
    finite_set: tuple[Point, ...]
    core_cutoff: float
    exclude: tuple[Point, ...] = ()
    class_of: dict = field(default_factory=dict, repr=False)
    boundary_flags: list[bool] = field(default_factory=list, repr=False)
    finite_index: int | None = None
    core_index: int | None = None

    def class_index(self, a) -> int:
        return self.class_of[_as_point(a)]

    def class_points(self, a) -> tuple[Point, ...]:
        return self.classes[self.class_index(a)]

    def sites(self) -> list[Point]:
        out = []
        for cl in self.classes:
            out.extend(cl)
        return out

    def dump_lines(self) -> list[str]:
        """One structured record per class."""
        lines = []
        diams = class_diameters(self)
        for i, cl in enumerate(self.classes):
            pts = ";".join(",".join(str(x) for x in p) for p in cl)
            lines.append(
                f"delta={self.delta} class={i} diameter={diams[i]:.6g} "
                f"boundary={int(self.boundary_flags[i])} points={pts}")
        return lines


def build_partition(delta, R, d, finite_set=(), core_cutoff=1.0,
                    exclude=()) -> BlockPartition:
    """Blocks of {|a| <= R} under the closure of |a|=|b|, [a-b] <= delta.

    ``finite_set`` becomes a single class; points of the complement with
    |a| <= core_cutoff are merged into one core class.  ``exclude`` removes

    points (e.g. the model's internal nodes) from the lattice altogether.
    """
    if R < core_cutoff:
        raise ValueError("truncation radius below core cutoff")
    fset = tuple(_as_point(p) for p in finite_set)
    excl = set(_as_point(p) for p in exclude)
    if excl & set(fset):
        raise ValueError("finite set intersects the excluded node set")

    drop = excl | set(fset)
    all_pts = [p for p in _ball_points_cached(float(R), int(d))
               if p not in drop]
    nsq_all = (np.array(all_pts, dtype=np.int64) ** 2).sum(axis=1) \
        if all_pts else np.zeros(0, dtype=np.int64)
    cut = core_cutoff * core_cutoff
    core = [p for p, q in zip(all_pts, nsq_all) if q <= cut]
    rest = [(p, int(q)) for p, q in zip(all_pts, nsq_all) if q > cut]

    classes: list[tuple[Point, ...]] = []
    boundary: list[bool] = []
    finite_index = core_index = None
    if fset:
        finite_index = len(classes)
        classes.append(tuple(sorted(fset)))
        boundary.append(False)
    if core:
        core_index = len(classes)
        classes.append(tuple(sorted(core)))
        boundary.append(False)

    # group by sphere: the generating relation requires |a| = |b|, so every
    # class lives inside a single sphere and truncation never splits it.
    by_sphere: dict[int, list[Point]] = {}
    for p, q in rest:
        by_sphere.setdefault(q, []).append(p)

    for nsq in sorted(by_sphere):
        pts = sorted(by_sphere[nsq])
        if delta == math.inf:
            classes.append(tuple(pts))
            boundary.append(False)
            continue
        X = np.array(pts, dtype=float)
        m = len(pts)
        # neighbors under the pseudo-distance min(|a-b|, |a+b|): direct
        # pairs from one tree query, antipodal pairs from a mirrored query
        tree = cKDTree(X)
        direct = tree.query_pairs(delta, output_type="ndarray")
        mirror = cKDTree(-X).query_ball_tree(tree, delta)
        rows = list(direct[:, 0])
        cols = list(direct[:, 1])
        for i, near in enumerate(mirror):
            rows.extend([i] * len(near))
            cols.extend(near)
        adj = coo_matrix((np.ones(len(rows)), (rows, cols)), shape=(m, m))
        _, labels = connected_components(adj, directed=False)
        groups: dict[int, list[Point]] = {}
        for lab, p in zip(labels.tolist(), pts):
            groups.setdefault(lab, []).append(p)
        near_edge = math.sqrt(nsq) + (0 if delta == math.inf else delta) > R
        for g in groups.values():
            classes.append(tuple(sorted(g)))
            boundary.append(bool(near_edge))

    part = BlockPartition(delta=delta, radius=R, d=d, classes=classes,
                          finite_set=fset, core_cutoff=core_cutoff,
                          exclude=tuple(sorted(excl)),
                          boundary_flags=boundary,
                          finite_index=finite_index, core_index=core_index)
    for i, cl in enumerate(classes):
        for p in cl:
            part.class_of[p] = i
    return part


def class_diameters(p: BlockPartition) -> list[float]:
    """Max pairwise pseudo-distance per class (0 for singletons)."""
    out = []
    for cl in p.classes:
        if len(cl) < 2:
            out.append(0.0)
            continue
        X = np.array(cl, dtype=np.int64)
        d2m = ((X[:, None, :] - X[None, :, :]) ** 2).sum(axis=2)
        d2p = ((X[:, None, :] + X[None, :, :]) ** 2).sum(axis=2)
        out.append(float(np.sqrt(np.minimum(d2m, d2p).max())))
    return out


def max_diameter(p: BlockPartition, include_boundary: bool = True) -> float:
    """d_Delta: max class diameter, excluding the core and finite classes."""
    diams = class_diameters(p)
    best = 0.0
    for i, dv in enumerate(diams):
        if i in (p.finite_index, p.core_index):
            continue
        if not include_boundary and p.boundary_flags[i]:
            continue
        best = max(best, dv)
    return best


def angle_relation(a, b) -> tuple[bool, int]:
    """a angle b: the sphere |x| = |a| meets {|x-b| = |a-b|} in <= 2 points.

    Returns (holds, exact count) by scanning the sphere of radius |a|.
    """
    a = _as_point(a)
    b = _as_point(b)
    if len(a) != len(b):
        raise ValueError("dimension mismatch")
    target = sum((x - y) ** 2 for x, y in zip(a, b))
    count = 0
    for x in sphere_points(norm_sq(a), len(a)):
        if sum((u - v) ** 2 for u, v in zip(x, b)) == target:
            count += 1
    return count <= 2, count


@dataclass
class AdmissibleReport:
    set: tuple[Point, ...]
    admissible: bool
    strongly_admissible: bool
    witnesses: list  # (a, b, kind, count)

    def as_dict(self) -> dict:
        return {
            "set": [list(p) for p in self.set],
            "admissible": self.admissible,
            "strongly_admissible": self.strongly_admissible,
            "witnesses": [
                {"a": list(a), "b": list(b), "kind": kind, "count": count}
                for a, b, kind, count in self.witnesses
            ],
        }


def check_admissible(points) -> AdmissibleReport:
    """Admissible: pairwise distinct norms.  Strongly: plus a angle b for all
    ordered pairs."""
    pts = [_as_point(p) for p in points]
    if len(set(pts)) != len(pts):
        raise ValueError("duplicate points in node set")
    witnesses = []
    admissible = True
    for a, b in itertools.combinations(pts, 2):
        if norm_sq(a) == norm_sq(b):
            admissible = False
            witnesses.append((a, b, "norm", 0))
    strongly = admissible
    if admissible:
        for a, b in itertools.permutations(pts, 2):
            holds, count = angle_relation(a, b)
            if not holds:
                strongly = False
                witnesses.append((a, b, "angle", count))
    return AdmissibleReport(set=tuple(pts), admissible=admissible,
                            strongly_admissible=strongly, witnesses=witnesses)
