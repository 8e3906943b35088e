"""Point-to-mesh distance and signed distance queries.

Unsigned distance is the minimum over all triangles of the exact
point-triangle distance (Ericson's closest-point construction, vectorized
over point x triangle pairs). The sign comes from ray-crossing parity: a +x
ray is cast first, and when it grazes a triangle edge/vertex (any hit
within 1e-9 of a triangle boundary) two fixed fallback rays are cast and
the majority parity wins. Signs are only meaningful on closed meshes;
``MeshDistanceField`` detects watertightness once per mesh and warns when
signs are requested without it.
"""

from __future__ import annotations

import warnings

import numpy as np

from .mesh import MeshError, TriMesh

GRAZE_TOL = 1e-9
_PAIR_BLOCK = 500_000  # point x triangle pairs evaluated per chunk

# Primary ray +x; fallbacks are fixed irrational-looking directions so that
# results stay deterministic across runs.
_RAY_DIRS = np.array(
    [
        [1.0, 0.0, 0.0],
        [0.357407, 0.861603, 0.359662],
        [-0.534522, 0.267261, 0.801784],
    ]
)
_RAY_DIRS /= np.linalg.norm(_RAY_DIRS, axis=1, keepdims=True)


class NotWatertightWarning(UserWarning):
    pass


def _pair_distances(points: np.ndarray, triangles: np.ndarray) -> np.ndarray:
    """Exact distances for every point/triangle pair, shape (n, m).

    Region tests from Real-Time Collision Detection ("closest point on
    triangle"), broadcast over pairs.
    """
    p = points[:, None, :]  # (n, 1, 3)
    a, b, c = triangles[:, 0], triangles[:, 1], triangles[:, 2]  # (m, 3)
    ab = b - a
    ac = c - a
    ap = p - a  # (n, m, 3)

    d1 = np.einsum("mk,nmk->nm", ab, ap)
    d2 = np.einsum("mk,nmk->nm", ac, ap)
    closest = np.empty(ap.shape)
    remain = np.ones(d1.shape, dtype=bool)

    is_a = (d1 <= 0) & (d2 <= 0)
    closest[is_a] = np.broadcast_to(a, ap.shape)[is_a]
    remain &= ~is_a

    bp = p - b
    d3 = np.einsum("mk,nmk->nm", ab, bp)
    d4 = np.einsum("mk,nmk->nm", ac, bp)
    is_b = remain & (d3 >= 0) & (d4 <= d3)
    closest[is_b] = np.broadcast_to(b, ap.shape)[is_b]
    remain &= ~is_b

    vc = d1 * d4 - d3 * d2
    is_ab = remain & (vc <= 0) & (d1 >= 0) & (d3 <= 0)
    if is_ab.any():
        v = (d1 / np.where(d1 - d3 == 0, 1.0, d1 - d3))[..., None]
        closest[is_ab] = (a + v * ab)[is_ab]
        remain &= ~is_ab

    cp = p - c
    d5 = np.einsum("mk,nmk->nm", ab, cp)
    d6 = np.einsum("mk,nmk->nm", ac, cp)
    is_c = remain & (d6 >= 0) & (d5 <= d6)
    closest[is_c] = np.broadcast_to(c, ap.shape)[is_c]
    remain &= ~is_c

    vb = d5 * d2 - d1 * d6
    is_ac = remain & (vb <= 0) & (d2 >= 0) & (d6 <= 0)
    if is_ac.any():
        denom = np.where(d2 - d6 == 0, 1.0, d2 - d6)
        w = (d2 / denom)[..., None]
        closest[is_ac] = (a + w * ac)[is_ac]
        remain &= ~is_ac

    va = d3 * d6 - d5 * d4
    is_bc = remain & (va <= 0) & (d4 - d3 >= 0) & (d5 - d6 >= 0)
    if is_bc.any():
        denom = (d4 - d3) + (d5 - d6)
        w = ((d4 - d3) / np.where(denom == 0, 1.0, denom))[..., None]
        closest[is_bc] = (b + w * (c - b))[is_bc]
        remain &= ~is_bc

    if remain.any():
        denom = va + vb + vc
        denom = np.where(denom == 0, 1.0, denom)
        v = (vb / denom)[..., None]
        w = (vc / denom)[..., None]
        closest[remain] = (a + v * ab + w * ac)[remain]

    return np.linalg.norm(closest - p, axis=2)


def point_triangle_distances(point, triangles: np.ndarray) -> np.ndarray:
    """Distance from one point to each triangle, shape (m,)."""
    p = np.asarray(point, dtype=np.float64).reshape(1, 3)
    return _pair_distances(p, triangles)[0]


def points_to_surface_distance(points, triangles: np.ndarray) -> np.ndarray:
    """Min distance from each point to a triangle set, chunked for memory."""
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    if len(triangles) == 0:
        raise MeshError("no triangles")
    if not np.all(np.isfinite(pts)):
        raise ValueError("query points contain NaN/inf")
    rows = max(1, _PAIR_BLOCK // len(triangles))
    out = np.empty(len(pts))
    for start in range(0, len(pts), rows):
        block = pts[start : start + rows]
        out[start : start + len(block)] = _pair_distances(block, triangles).min(axis=1)
    return out


def is_watertight(mesh: TriMesh) -> bool:
    """Closed orientable manifold check: every undirected edge is shared by
    exactly two faces with opposite orientations."""
    if mesh.num_faces == 0:
        return False
    f = mesh.faces
    directed = np.vstack([f[:, [0, 1]], f[:, [1, 2]], f[:, [2, 0]]])
    # each directed edge must appear exactly once
    d_view = directed[np.lexsort(directed.T[::-1])]
    if np.any(np.all(d_view[1:] == d_view[:-1], axis=1)):
        return False
    undirected = np.sort(directed, axis=1)
    _, counts = np.unique(undirected, axis=0, return_counts=True)
    return bool(np.all(counts == 2))


def _ray_parity(origin: np.ndarray, direction: np.ndarray, tri: np.ndarray) -> tuple[int, bool]:
    """Crossing count parity along a ray (Moller-Trumbore over all triangles).

    Returns (parity, clean); clean is False when any hit landed within
    GRAZE_TOL of a triangle boundary or the ray skimmed past one.
    """
    v0, v1, v2 = tri[:, 0], tri[:, 1], tri[:, 2]
    e1 = v1 - v0
    e2 = v2 - v0
    h = np.cross(direction, e2)
    det = np.einsum("ij,ij->i", e1, h)
    parallel = np.abs(det) < 1e-14
    safe_det = np.where(parallel, 1.0, det)
    s = origin - v0
    u = np.einsum("ij,ij->i", s, h) / safe_det
    q = np.cross(s, e1)
    v = np.einsum("ij,j->i", q, direction) / safe_det
    t = np.einsum("ij,ij->i", q, e2) / safe_det

    inside = (~parallel) & (u >= 0.0) & (v >= 0.0) & (u + v <= 1.0) & (t > 0.0)
    hits = int(np.count_nonzero(inside))
    # A hit near a triangle boundary (or the ray origin) may be double
    # counted or missed by the adjacent triangle; flag the ray as unreliable.
    near_edge = inside & (
        (u < GRAZE_TOL) | (v < GRAZE_TOL) | (u + v > 1.0 - GRAZE_TOL) | (t < GRAZE_TOL)
    )
    near_miss = (
        (~parallel)
        & (~inside)
        & (t > 0.0)
        & (u > -GRAZE_TOL)
        & (v > -GRAZE_TOL)
        & (u + v < 1.0 + GRAZE_TOL)
        & ((np.abs(u) < GRAZE_TOL) | (np.abs(v) < GRAZE_TOL) | (np.abs(u + v - 1.0) < GRAZE_TOL))
    )
    clean = not (near_edge.any() or near_miss.any())
    return hits & 1, clean


class MeshDistanceField:
    """Per-mesh distance/sign query object.

    Precomputes triangle data and the watertightness flag once; queries are
    pure and safe to call concurrently.
    """

    def __init__(self, mesh: TriMesh):
        if mesh.num_faces == 0:
            raise MeshError("distance field needs at least one triangle")
        self.mesh = mesh
        self._tri = mesh.triangles()
        self.watertight = is_watertight(mesh)
        self._warned = False

    def distance(self, point) -> float:
        """Unsigned distance from point to the surface."""
        p = np.asarray(point, dtype=np.float64).reshape(3)
        return float(points_to_surface_distance(p[None, :], self._tri)[0])

    def distance_many(self, points) -> np.ndarray:
        return points_to_surface_distance(points, self._tri)

    def contains(self, point) -> bool:
        """Interior test by ray parity (majority vote on grazing rays)."""
        p = np.asarray(point, dtype=np.float64).reshape(3)
        if not np.all(np.isfinite(p)):
            raise ValueError("query point contains NaN/inf")
        parity, clean = _ray_parity(p, _RAY_DIRS[0], self._tri)
        if clean:
            return bool(parity)
        votes = [parity]
        for d in _RAY_DIRS[1:]:
            par, _ = _ray_parity(p, d, self._tri)
            votes.append(par)
        return sum(votes) >= 2

    def signed(self, point) -> float:
        """Signed distance, negative inside. Warns once if the mesh is open."""
        if not self.watertight and not self._warned:
            warnings.warn(
                "sign requested on a non-watertight mesh; interior test is unreliable",
                NotWatertightWarning,
                stacklevel=2,
            )
            self._warned = True
        d = self.distance(point)
        return -d if self.contains(point) else d

    def signed_many(self, points) -> np.ndarray:
        pts = np.asarray(points, dtype=np.float64).reshape(-1, 3)
        dists = self.distance_many(pts)
        if not self.watertight and not self._warned:
            warnings.warn(
                "sign requested on a non-watertight mesh; interior test is unreliable",
                NotWatertightWarning,
                stacklevel=2,
            )
            self._warned = True
        signs = np.array([-1.0 if self.contains(p) else 1.0 for p in pts])
        return signs * dists


def signed_distance(mesh: TriMesh, point) -> float:
    """One-shot signed distance (negative inside).

    Builds a fresh ``MeshDistanceField``; hold one explicitly when querying
    the same mesh repeatedly.
    """
    return MeshDistanceField(mesh).signed(point)
