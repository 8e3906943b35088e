"""Voxel occupancy grids, the downward fill rule, and penetration metrics.

Occupancy convention: cell (i,j,k) covers the half-open box
[origin + (i,j,k)*s, origin + (i+1,j+1,k+1)*s) and point queries map a point
to floor((p - origin)/s). Surface geometry lying exactly on a cell-boundary
plane is assigned to the cell *below/behind* that plane, while point queries
resolve to the cell above/ahead. The two conventions together make resting
contact (a body or object vertex exactly on a support surface) count as
non-penetrating; a contact epsilon of 1e-6 m absorbs float rounding around
the boundary. Anything penetrating deeper than the epsilon still registers.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field

import numpy as np

from .body import BodyFrame, BodyError
from .geometry import Aabb, MeshDistanceField, TriMesh

CONTACT_EPS = 1e-6  # meters; boundary snap tolerance, see module docstring
FLOOR_EPS = 1e-6  # meters; tolerance below z=0 before a foot vertex counts as sunk
DEFAULT_CELL_BUDGET = 64_000_000


class VoxelError(ValueError):
    pass


class ResolutionError(VoxelError):
    """Grid would exceed the configured cell budget."""


@dataclass(frozen=True)
class PenConfig:
    """Penetration evaluation parameters."""

    voxel_size: float = 0.05
    region_radius: float = 2.0
    clip_to_scene: bool = True

    def __post_init__(self):
        if self.voxel_size <= 0 or self.region_radius <= 0:
            raise VoxelError("voxel_size and region_radius must be positive")


@dataclass(frozen=True)
class VoxelGrid:
    """Axis-aligned occupancy grid. Immutable after construction."""

    origin: np.ndarray
    voxel_size: float
    occupancy: np.ndarray  # bool, shape dims
    filled: bool = field(default=False)

    def __post_init__(self):
        origin = np.asarray(self.origin, dtype=np.float64).reshape(3)
        occ = np.asarray(self.occupancy, dtype=bool)
        if occ.ndim != 3:
            raise VoxelError("occupancy must be a 3-d bool array")
        if self.voxel_size <= 0:
            raise VoxelError("voxel_size must be positive")
        origin.flags.writeable = False
        occ.flags.writeable = False
        object.__setattr__(self, "origin", origin)
        object.__setattr__(self, "occupancy", occ)

    @property
    def dims(self) -> tuple[int, int, int]:
        return self.occupancy.shape

    @property
    def num_occupied(self) -> int:
        return int(self.occupancy.sum())

    def point_cells(self, points) -> np.ndarray:
        """Cell index of each point under the query-side convention."""
        pts = np.asarray(points, dtype=np.float64).reshape(-1, 3)
        return np.floor((pts - self.origin + CONTACT_EPS) / self.voxel_size).astype(np.int64)

    def occupied_at(self, points) -> np.ndarray:
        """Boolean per point; points outside the grid count as free."""
        cells = self.point_cells(points)
        dims = np.array(self.dims)
        inside = np.all((cells >= 0) & (cells < dims), axis=1)
        out = np.zeros(len(cells), dtype=bool)
        if inside.any():
            c = cells[inside]
            out[inside] = self.occupancy[c[:, 0], c[:, 1], c[:, 2]]
        return out

    def cell_centers(self) -> np.ndarray:
        """Centers of occupied cells, shape (n, 3)."""
        idx = np.argwhere(self.occupancy)
        return self.origin + (idx + 0.5) * self.voxel_size


def grid_region(center, cfg: PenConfig, scene_aabb: Aabb | None = None) -> Aabb:
    """Axis-aligned region of side 2*region_radius around a point, optionally
    clipped to the scene bounds."""
    c = np.asarray(center, dtype=np.float64).reshape(3)
    region = Aabb(c - cfg.region_radius, c + cfg.region_radius)
    if cfg.clip_to_scene and scene_aabb is not None:
        region = region.intersection(scene_aabb)
    return region


def anchored_region(region: Aabb, anchor_z: float, voxel_size: float) -> Aabb:
    """Shift the region floor so anchor_z falls on a cell boundary.

    Placement checks anchor the z lattice at the support plane, so geometry
    on the plane sinks into the cell below it and resting vertices query the
    cell above.
    """
    k = int(np.ceil((anchor_z - region.lo[2]) / voxel_size))
    lo = region.lo.copy()
    lo[2] = anchor_z - k * voxel_size
    return Aabb(lo, region.hi)


# -- triangle/cell occupancy test ---------------------------------------

def _clip_polygon_axis(poly: list[np.ndarray], axis: int, bound: float, keep_le: bool) -> list[np.ndarray]:
    """Sutherland-Hodgman clip against an axis-aligned half-space.

    Points exactly on the plane are kept, so boundary-degenerate contact
    survives to the acceptance test below.
    """
    out: list[np.ndarray] = []
    n = len(poly)
    for i in range(n):
        a = poly[i]
        b = poly[(i + 1) % n]
        da = a[axis] - bound
        db = b[axis] - bound
        a_in = da <= 0 if keep_le else da >= 0
        b_in = db <= 0 if keep_le else db >= 0
        if a_in:
            out.append(a)
            if not b_in:
                out.append(a + (da / (da - db)) * (b - a))
        elif b_in:
            out.append(a + (da / (da - db)) * (b - a))
    return out


def tri_cell_occupied(tri: np.ndarray, cell_lo: np.ndarray, cell_hi: np.ndarray) -> bool:
    """Whether a triangle occupies the cell under the boundary-sinking rule.

    The triangle is clipped to the cell box (upper faces padded by the
    contact epsilon); it occupies the cell iff the clipped polygon is
    non-empty and extends beyond every *lower* face by more than the
    epsilon. Geometry lying exactly in a lower-face plane therefore belongs
    to the neighboring (lower-index) cell instead.
    """
    poly = [tri[0], tri[1], tri[2]]
    for axis in range(3):
        poly = _clip_polygon_axis(poly, axis, cell_lo[axis], keep_le=False)
        if not poly:
            return False
        poly = _clip_polygon_axis(poly, axis, cell_hi[axis] + CONTACT_EPS, keep_le=True)
        if not poly:
            return False
    pts = np.array(poly)
    return bool(np.all(pts.max(axis=0) > cell_lo + CONTACT_EPS))


def _sat_candidate_mask(tri: np.ndarray, centers: np.ndarray, half: float) -> np.ndarray:
    """Conservative separating-axis prefilter of cells against one triangle.

    Never rejects a cell the exact clip test would accept (boxes are
    inflated by twice the contact epsilon).
    """
    h = half + 2.0 * CONTACT_EPS
    v = tri[None, :, :] - centers[:, None, :]  # (m, 3, 3)
    keep = np.ones(len(centers), dtype=bool)

    # box axes
    mn = v.min(axis=1)
    mx = v.max(axis=1)
    keep &= ~np.any((mn > h) | (mx < -h), axis=1)

    # triangle plane
    e0 = tri[1] - tri[0]
    e1 = tri[2] - tri[1]
    e2 = tri[0] - tri[2]
    normal = np.cross(e0, e1)
    r = h * np.abs(normal).sum()
    d = v[:, 0, :] @ normal
    keep &= np.abs(d) <= r

    # cross-product axes
    for e in (e0, e1, e2):
        for ax in np.eye(3):
            axis = np.cross(e, ax)
            if np.abs(axis).sum() < 1e-15:
                continue
            proj = v @ axis  # (m, 3)
            rad = h * np.abs(axis).sum()
            keep &= ~((proj.min(axis=1) > rad) | (proj.max(axis=1) < -rad))
    return keep


def _occ_index_range(lo: float, hi: float, origin: float, s: float, n: int) -> tuple[int, int]:
    """Conservative cell range for a coordinate extent [lo, hi].

    One cell of slack on each side; the exact per-cell test rejects extras.
    """
    i0 = int(np.floor((lo - origin) / s)) - 1
    i1 = int(np.floor((hi - origin) / s)) + 1
    return max(i0, 0), min(i1, n - 1)


def voxelize(
    mesh: TriMesh,
    region: Aabb,
    voxel_size: float,
    cell_budget: int = DEFAULT_CELL_BUDGET,
) -> VoxelGrid:
    """Occupancy grid over ``region``: a cell is occupied iff it intersects
    at least one mesh triangle (exact test, boundary geometry sinking down).
    """
    if voxel_size <= 0:
        raise VoxelError("voxel_size must be positive")
    if region.volume() <= 0:
        raise VoxelError("voxelize region must have positive volume")
    dims = np.maximum(np.ceil(region.size / voxel_size).astype(np.int64), 1)
    if int(np.prod(dims)) > cell_budget:
        raise ResolutionError(
            f"grid {tuple(dims)} = {int(np.prod(dims))} cells exceeds budget {cell_budget}"
        )
    occ = np.zeros(tuple(dims), dtype=bool)
    origin = region.lo
    s = voxel_size
    half = s / 2.0

    for tri in mesh.triangles():
        lo = tri.min(axis=0)
        hi = tri.max(axis=0)
        ranges = [_occ_index_range(lo[a], hi[a], origin[a], s, int(dims[a])) for a in range(3)]
        if any(r[0] > r[1] for r in ranges):
            continue
        ii = np.arange(ranges[0][0], ranges[0][1] + 1)
        jj = np.arange(ranges[1][0], ranges[1][1] + 1)
        kk = np.arange(ranges[2][0], ranges[2][1] + 1)
        cells = np.stack(np.meshgrid(ii, jj, kk, indexing="ij"), axis=-1).reshape(-1, 3)
        if len(cells) == 0:
            continue
        # Skip cells already marked; then SAT-prune before the exact test.
        todo = ~occ[cells[:, 0], cells[:, 1], cells[:, 2]]
        cells = cells[todo]
        if len(cells) == 0:
            continue
        centers = origin + (cells + 0.5) * s
        mask = _sat_candidate_mask(tri, centers, half)
        for cell in cells[mask]:
            c_lo = origin + cell * s
            if tri_cell_occupied(tri, c_lo, c_lo + s):
                occ[cell[0], cell[1], cell[2]] = True

    return VoxelGrid(origin, voxel_size, occ, filled=False)


def downward_fill(grid: VoxelGrid) -> VoxelGrid:
    """Mark every cell below an occupied cell (same column) as occupied."""
    occ = grid.occupancy
    filled = np.logical_or.accumulate(occ[:, :, ::-1], axis=2)[:, :, ::-1]
    return VoxelGrid(grid.origin, grid.voxel_size, filled, filled=True)


# -- metrics -------------------------------------------------------------

def scene_penetration(body: BodyFrame, grid: VoxelGrid) -> float:
    """Fraction of body vertices inside occupied voxels.

    Vertices outside the grid region count as non-penetrating. The grid is
    expected to be downward-filled (``grid.filled``); magnitude is computed
    either way.
    """
    if body.num_vertices == 0:
        raise BodyError("empty body")
    hits = grid.occupied_at(body.vertices)
    return float(hits.sum()) / body.num_vertices


def floor_penetration(body: BodyFrame) -> float:
    """Fraction of foot vertices below the z=0 floor plane."""
    feet = body.foot_ids
    if len(feet) == 0:
        raise BodyError("body has no foot vertices")
    below = body.vertices[feet, 2] < -FLOOR_EPS
    return float(below.sum()) / len(feet)


@dataclass(frozen=True)
class ObjectPenetration:
    mean_sdf: float
    negative_count: int
    hand_count: int


def object_penetration(body: BodyFrame, obj: TriMesh | MeshDistanceField) -> ObjectPenetration:
    """Mean signed distance from hand vertices to the object surface.

    More negative means deeper penetration. Requires a watertight object;
    the sign is undefined otherwise.
    """
    hands = body.hand_ids
    if len(hands) == 0:
        raise BodyError("body has no hand vertices")
    fld = obj if isinstance(obj, MeshDistanceField) else MeshDistanceField(obj)
    if not fld.watertight:
        raise VoxelError("object mesh is not watertight; signed distance undefined")
    sdf = fld.signed_many(body.vertices[hands])
    return ObjectPenetration(float(sdf.mean()), int((sdf < 0).sum()), len(hands))


def pen_loss(vertices, grid: VoxelGrid, depth_weighted: bool = False) -> float:
    """Penalty on vertices inside occupied voxels.

    Default form is the mean occupancy indicator (numerically equal to
    ``scene_penetration`` over the same vertices). The depth-weighted form
    replaces the indicator with the vertical distance to the first free cell
    above the vertex's column, in meters, for use by external optimizers.
    """
    pts = np.asarray(vertices, dtype=np.float64).reshape(-1, 3)
    if len(pts) == 0:
        raise BodyError("empty vertex set")
    hits = grid.occupied_at(pts)
    if not depth_weighted:
        return float(hits.sum()) / len(pts)
    if not hits.any():
        return 0.0
    cells = grid.point_cells(pts[hits])
    occ = grid.occupancy
    nz = occ.shape[2]
    # highest occupied k per column; columns are contiguous from the bottom
    # once the grid has been downward-filled
    ks = np.arange(nz)
    top_k = np.where(occ.any(axis=2), np.max(np.where(occ, ks[None, None, :], -1), axis=2), -1)
    depth_sum = 0.0
    for (i, j, _), p in zip(cells, pts[hits]):
        free_z = grid.origin[2] + (top_k[i, j] + 1) * grid.voxel_size
        depth_sum += max(free_z - p[2], 0.0)
    return depth_sum / len(pts)


# -- serialization -------------------------------------------------------

_MAGIC = b"SGVX"
_HEADER = struct.Struct("<4sH3d d 3I B")


def save_grid(grid: VoxelGrid, path) -> None:
    """Binary container: header (origin, size, dims, fill flag) + bit-packed cells."""
    dims = grid.dims
    header = _HEADER.pack(
        _MAGIC, 1,
        float(grid.origin[0]), float(grid.origin[1]), float(grid.origin[2]),
        float(grid.voxel_size),
        dims[0], dims[1], dims[2],
        1 if grid.filled else 0,
    )
    bits = np.packbits(grid.occupancy.reshape(-1))
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(bits.tobytes())


def load_grid(path) -> VoxelGrid:
    with open(path, "rb") as fh:
        data = fh.read()
    if len(data) < _HEADER.size or data[:4] != _MAGIC:
        raise VoxelError(f"{path}: not a voxel grid file")
    magic, version, ox, oy, oz, s, nx, ny, nz, filled = _HEADER.unpack_from(data, 0)
    if version != 1:
        raise VoxelError(f"{path}: unsupported grid version {version}")
    n = nx * ny * nz
    bits = np.frombuffer(data, dtype=np.uint8, offset=_HEADER.size)
    occ = np.unpackbits(bits, count=n).astype(bool).reshape(nx, ny, nz)
    return VoxelGrid(np.array([ox, oy, oz]), s, occ, filled=bool(filled))


def dump_grid_json(grid: VoxelGrid, path, max_cells: int = 32**3) -> None:
    """Human-auditable dump for small grids (debugging aid)."""
    if int(np.prod(grid.dims)) > max_cells:
        raise VoxelError(f"grid too large for JSON dump (> {max_cells} cells)")
    payload = {
        "origin": [float(x) for x in grid.origin],
        "voxel_size": grid.voxel_size,
        "dims": list(grid.dims),
        "filled": grid.filled,
        "occupied": [[int(i), int(j), int(k)] for i, j, k in np.argwhere(grid.occupancy)],
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, sort_keys=True)
        fh.write("\n")
