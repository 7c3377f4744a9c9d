"""Regular grids, ray-parity voxelization, and signed distance fields.

Sign convention: negative inside the solid, positive outside, zero level set
on the surface. Scalar values are samples at cell centers; cell (i, j, k)
has its center at ``origin + (i + 0.5, j + 0.5, k + 0.5) * spacing``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage
from skimage import measure

from ..errors import DataError, GeometryError, ShapeMismatchError
from .mesh import TriangleMesh, require_watertight

_JITTER_SCALE = 1e-6
_MAX_JITTERS = 3


@dataclass(frozen=True)
class GridSpec:
    """Uniform cell grid: origin corner, cell spacing (meters), cell counts."""

    origin: tuple[float, float, float]
    spacing: float
    dims: tuple[int, int, int]

    def __post_init__(self):
        if self.spacing <= 0:
            raise DataError("grid spacing must be positive")
        if any(d < 2 for d in self.dims):
            raise DataError("grid needs at least 2 cells per axis")
        object.__setattr__(self, "origin", tuple(float(o) for o in self.origin))
        object.__setattr__(self, "dims", tuple(int(d) for d in self.dims))

    @classmethod
    def fit(cls, bounds_min, bounds_max, dims, margin_cells: int = 3) -> "GridSpec":
        """Smallest uniform-spacing grid covering a bounding box plus margin."""
        lo = np.asarray(bounds_min, dtype=float)
        hi = np.asarray(bounds_max, dtype=float)
        dims = tuple(int(d) for d in dims)
        extent = hi - lo
        usable = np.array(dims) - 2 * margin_cells
        if (usable <= 0).any():
            raise DataError("margin leaves no interior cells")
        spacing = float((extent / usable).max())
        center = (lo + hi) / 2.0
        origin = tuple(center - np.array(dims) * spacing / 2.0)
        return cls(origin, spacing, dims)

    def axis_centers(self, axis: int) -> np.ndarray:
        return self.origin[axis] + (np.arange(self.dims[axis]) + 0.5) * self.spacing

    def cell_centers(self) -> np.ndarray:
        """(nx, ny, nz, 3) array of cell-center coordinates."""
        xs = [self.axis_centers(a) for a in range(3)]
        return np.stack(np.meshgrid(*xs, indexing="ij"), axis=-1)

    def bounds(self) -> tuple[np.ndarray, np.ndarray]:
        lo = np.array(self.origin)
        return lo, lo + np.array(self.dims) * self.spacing

    def diagonal(self) -> float:
        return float(np.linalg.norm(np.array(self.dims) * self.spacing))

    def contains_with_margin(self, lo, hi, margin_cells: int = 2) -> bool:
        glo, ghi = self.bounds()
        m = margin_cells * self.spacing
        return bool((np.asarray(lo) - m >= glo).all() and (np.asarray(hi) + m <= ghi).all())


@dataclass
class OccupancyGrid:
    """Boolean inside/outside per cell."""

    spec: GridSpec
    values: np.ndarray

    def __post_init__(self):
        self.values = np.ascontiguousarray(self.values, dtype=bool)
        if self.values.shape != self.spec.dims:
            raise ShapeMismatchError(
                f"occupancy shape {self.values.shape} != grid dims {self.spec.dims}"
            )


@dataclass
class SDFField:
    """Signed distance samples on a grid: negative inside, positive outside."""

    spec: GridSpec
    values: np.ndarray

    def __post_init__(self):
        self.values = np.ascontiguousarray(self.values, dtype=np.float64)
        if self.values.shape != self.spec.dims:
            raise ShapeMismatchError(
                f"field shape {self.values.shape} != grid dims {self.spec.dims}"
            )


def _column_hits(tris: np.ndarray, y: np.ndarray, z: np.ndarray):
    """Crossing x-coordinates of +x rays through (y, z) points.

    tris: (t, 3, 3). y, z: (c,). Returns (cross_x, col_idx, grazing_cols):
    crossing positions, the column each belongs to, and a boolean mask of
    columns whose ray passes within epsilon of a triangle boundary in the
    (y, z) projection. Triangles edge-on to the rays contribute no
    crossings; rays lying in such a plane necessarily graze the boundary of
    an adjacent non-edge-on face of a closed mesh, so they get flagged.
    """
    a = tris[:, 0]
    e1 = tris[:, 1] - tris[:, 0]
    e2 = tris[:, 2] - tris[:, 0]
    det = e1[:, 1] * e2[:, 2] - e1[:, 2] * e2[:, 1]  # (t,)
    scale = np.maximum(
        np.abs(e1[:, 1:]).max(axis=1), np.abs(e2[:, 1:]).max(axis=1)
    )  # projected edge scale per triangle
    edge_on = np.abs(det) <= 1e-12 * np.maximum(scale * scale, 1e-300)
    safe_det = np.where(edge_on, 1.0, det)

    ry = y[:, None] - a[None, :, 1]  # (c, t)
    rz = z[:, None] - a[None, :, 2]
    u = (ry * e2[None, :, 2] - rz * e2[None, :, 1]) / safe_det[None, :]
    v = (e1[None, :, 1] * rz - e1[None, :, 2] * ry) / safe_det[None, :]
    w = 1.0 - u - v

    eps = 1e-9
    proper = ~edge_on[None, :]
    inside = (u > eps) & (v > eps) & (w > eps) & proper
    grazing = (
        (u > -eps) & (v > -eps) & (w > -eps)
        & ((u <= eps) | (v <= eps) | (w <= eps))
        & proper
    )

    grazing_cols = grazing.any(axis=1)
    col_idx, tri_idx = np.nonzero(inside)
    cross_x = (
        a[tri_idx, 0] + u[col_idx, tri_idx] * e1[tri_idx, 0] + v[col_idx, tri_idx] * e2[tri_idx, 0]
    )
    return cross_x, col_idx, grazing_cols


def voxelize(mesh: TriangleMesh, spec: GridSpec, _chunk: int = 2048) -> OccupancyGrid:
    """Ray-parity voxelization: a cell is inside iff a +x ray from its center
    crosses the surface an odd number of times.

    Columns whose ray grazes a vertex, edge, or edge-on triangle are retried
    with the ray origin jittered by 1e-6 * spacing (up to 3 jitters). A
    column with an odd total crossing count after retries means the mesh is
    not watertight.
    """
    require_watertight(mesh)
    lo, hi = mesh.bounds()
    if not spec.contains_with_margin(lo, hi, margin_cells=2):
        raise GeometryError("grid must contain the mesh bounding box plus a 2-cell margin")

    nx, ny, nz = spec.dims
    tris = mesh.vertices[mesh.faces]  # (t, 3, 3)
    ys = spec.axis_centers(1)
    zs = spec.axis_centers(2)
    ygrid, zgrid = np.meshgrid(ys, zs, indexing="ij")
    ycol = ygrid.ravel()
    zcol = zgrid.ravel()
    xc = spec.axis_centers(0)

    occ = np.zeros((nx, ny * nz), dtype=bool, order="C")
    jit = _JITTER_SCALE * spec.spacing

    for start in range(0, ny * nz, _chunk):
        sl = slice(start, min(start + _chunk, ny * nz))
        y = ycol[sl].copy()
        z = zcol[sl].copy()
        ncols = len(y)
        for attempt in range(_MAX_JITTERS + 1):
            cross_x, col_idx, grazing = _column_hits(tris, y, z)
            counts = np.bincount(col_idx, minlength=ncols)
            bad = grazing | ((counts % 2) == 1)
            if not bad.any():
                break
            if attempt == _MAX_JITTERS:
                if grazing.any():
                    raise GeometryError("ray grazing persists after jitter; degenerate geometry")
                raise GeometryError(
                    "odd ray-crossing parity after jitter: mesh is not watertight"
                )
            y[bad] += jit * (attempt + 1)
            z[bad] += jit * (attempt + 1) * 0.5

        if len(cross_x) == 0:
            continue
        order = np.lexsort((cross_x, col_idx))
        cross_x = cross_x[order]
        col_idx = col_idx[order]
        starts = np.concatenate([[0], np.cumsum(counts)])
        for c in np.nonzero(counts)[0]:
            xs = cross_x[starts[c] : starts[c + 1]]
            # parity of crossings strictly ahead of each center
            ahead = len(xs) - np.searchsorted(xs, xc, side="right")
            occ[:, start + c] = (ahead % 2) == 1

    values = occ.reshape(nx, ny, nz)
    shell = np.zeros_like(values)
    shell[0, :, :] = shell[-1, :, :] = True
    shell[:, 0, :] = shell[:, -1, :] = True
    shell[:, :, 0] = shell[:, :, -1] = True
    if values[shell].any():
        raise GeometryError("occupancy reaches the grid boundary shell")
    return OccupancyGrid(spec, values)


def occupancy_to_sdf(occ: OccupancyGrid) -> SDFField:
    """Exact Euclidean signed distance from cell centers to the inside/outside
    interface: +distance to the nearest inside cell for outside cells,
    -distance to the nearest outside cell for inside cells.
    """
    inside = occ.values
    if not inside.any():
        raise GeometryError("degenerate field: no inside cells")
    if inside.all():
        raise GeometryError("degenerate field: no outside cells")
    s = occ.spec.spacing
    d_out = ndimage.distance_transform_edt(~inside, sampling=s)
    d_in = ndimage.distance_transform_edt(inside, sampling=s)
    return SDFField(occ.spec, d_out - d_in)


def _check_weights(weights, n_fields: int) -> np.ndarray:
    w = np.asarray(getattr(weights, "w", weights), dtype=np.float64)
    if w.ndim != 1 or len(w) != n_fields:
        raise DataError(f"{len(w)} weights for {n_fields} fields")
    if (w < 0).any():
        raise DataError("weights must be non-negative")
    if abs(w.sum() - 1.0) > 1e-12:
        raise DataError("weights must sum to 1")
    return w


def interpolate_sdf(fields: list[SDFField], weights) -> SDFField:
    """Pointwise convex combination of signed distance fields on one grid.

    ``weights`` may be a BarycentricWeights or any sequence of non-negative
    scalars summing to 1, one per field. The combination is the exact linear
    sum -- no re-signing or re-initialization.
    """
    if not fields:
        raise DataError("no fields to interpolate")
    spec = fields[0].spec
    for f in fields[1:]:
        if f.spec != spec:
            raise ShapeMismatchError("all fields must share one GridSpec")
    w = _check_weights(weights, len(fields))
    out = w[0] * fields[0].values
    for wi, f in zip(w[1:], fields[1:]):
        out += wi * f.values
    return SDFField(spec, out)


def marching_cubes(sdf: SDFField, iso: float = 0.0) -> TriangleMesh:
    """Extract the iso-surface as a triangle mesh.

    Classic 256-case table (lorensen) with linear edge interpolation;
    ambiguity resolution is the table's fixed convention. Faces come out
    oriented outward for the negative-inside sign convention.
    """
    vals = sdf.values
    if vals.min() >= iso or vals.max() <= iso:
        raise GeometryError("no iso crossing: field does not change sign about iso")
    s = sdf.spec.spacing
    verts, faces, _, _ = measure.marching_cubes(
        vals, level=iso, spacing=(s, s, s), method="lorensen", gradient_direction="descent"
    )
    verts = verts + (np.array(sdf.spec.origin) + 0.5 * s)
    return TriangleMesh(verts, faces.astype(np.int64))


# ---------------------------------------------------------------------------
# Analytic fields, handy for demos and tests
# ---------------------------------------------------------------------------


def sphere_sdf(spec: GridSpec, center, radius: float) -> SDFField:
    c = spec.cell_centers() - np.asarray(center, dtype=float)
    return SDFField(spec, np.linalg.norm(c, axis=-1) - radius)


def box_sdf(spec: GridSpec, center, half_extents) -> SDFField:
    """Chebyshev-style box field: exact outside on faces, max-metric inside."""
    c = np.abs(spec.cell_centers() - np.asarray(center, dtype=float)) - np.asarray(
        half_extents, dtype=float
    )
    outside = np.linalg.norm(np.maximum(c, 0.0), axis=-1)
    inside = np.minimum(c.max(axis=-1), 0.0)
    return SDFField(spec, outside + inside)
