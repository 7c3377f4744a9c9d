"""Triangle meshes and the mesh-level operations of the shape pipeline.

Coordinate convention used throughout the package: x streamwise, y vertical
(up), z spanwise. Buildings stand on the ground plane y = 0 with their
footprint centered on the origin.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ..errors import DataError, FormatError, GeometryError


@dataclass
class TriangleMesh:
    """Indexed triangle surface.

    vertices : (n, 3) float64 array, meters, full scale
    faces    : (m, 3) int array of vertex indices
    normals  : optional (n, 3) float64 array of unit per-vertex normals
    """

    vertices: np.ndarray
    faces: np.ndarray
    normals: np.ndarray | None = field(default=None)

    def __post_init__(self):
        self.vertices = np.ascontiguousarray(self.vertices, dtype=np.float64)
        self.faces = np.ascontiguousarray(self.faces, dtype=np.int64)
        if self.vertices.ndim != 2 or self.vertices.shape[1] != 3:
            raise DataError(f"vertices must be (n, 3), got {self.vertices.shape}")
        if self.faces.ndim != 2 or self.faces.shape[1] != 3:
            raise DataError(f"faces must be (m, 3), got {self.faces.shape}")
        if not np.isfinite(self.vertices).all():
            raise DataError("vertex coordinates must be finite")
        n = len(self.vertices)
        if len(self.faces) and (self.faces.min() < 0 or self.faces.max() >= n):
            raise DataError("face index out of range")
        if len(self.faces):
            f = self.faces
            if ((f[:, 0] == f[:, 1]) | (f[:, 1] == f[:, 2]) | (f[:, 0] == f[:, 2])).any():
                raise DataError("face with repeated vertices")

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_faces(self) -> int:
        return len(self.faces)

    def bounds(self) -> tuple[np.ndarray, np.ndarray]:
        """(min, max) corners of the axis-aligned bounding box."""
        return self.vertices.min(axis=0), self.vertices.max(axis=0)

    def height(self) -> float:
        """Vertical (y) extent of the mesh."""
        lo, hi = self.bounds()
        return float(hi[1] - lo[1])

    def copy(self) -> "TriangleMesh":
        nrm = None if self.normals is None else self.normals.copy()
        return TriangleMesh(self.vertices.copy(), self.faces.copy(), nrm)


def unique_edges(faces: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Undirected edges of a triangle list.

    Returns (edges, counts): edges is (e, 2) with each row sorted, counts is
    how many faces share each edge.
    """
    he = faces[:, [0, 1, 1, 2, 2, 0]].reshape(-1, 2)
    he = np.sort(he, axis=1)
    edges, counts = np.unique(he, axis=0, return_counts=True)
    return edges, counts


def is_watertight(mesh: TriangleMesh) -> bool:
    """True iff every edge is shared by exactly two faces."""
    if mesh.n_faces == 0:
        return False
    _, counts = unique_edges(mesh.faces)
    return bool((counts == 2).all())


def footprint_centroid(mesh: TriangleMesh) -> tuple[float, float]:
    """(x, z) center of the mesh bounding box, at ground level."""
    lo, hi = mesh.bounds()
    return (float(lo[0] + hi[0]) / 2.0, float(lo[2] + hi[2]) / 2.0)


def rotate_about_vertical(
    mesh: TriangleMesh, angle_deg: float, pivot: tuple[float, float] | None = None
) -> TriangleMesh:
    """Rotate a mesh about the vertical (y) axis through a footprint pivot.

    Convention: x' = x cos(t) - z sin(t), z' = x sin(t) + z cos(t). The pivot
    defaults to the mesh's own footprint centroid; pass an explicit (x, z)
    pivot to share one rotation center across several meshes.
    """
    if pivot is None:
        pivot = footprint_centroid(mesh)
    px, pz = pivot
    t = math.radians(angle_deg)
    c, s = math.cos(t), math.sin(t)
    v = mesh.vertices.copy()
    x = v[:, 0] - px
    z = v[:, 2] - pz
    v[:, 0] = x * c - z * s + px
    v[:, 2] = x * s + z * c + pz
    return TriangleMesh(v, mesh.faces.copy())


def mirror_spanwise(mesh: TriangleMesh) -> TriangleMesh:
    """Reflect a mesh across the x-y plane (negate z).

    Face winding is reversed so the surface stays outward-oriented; vertex
    order is unchanged.
    """
    v = mesh.vertices.copy()
    v[:, 2] = -v[:, 2]
    f = mesh.faces[:, [0, 2, 1]].copy()
    return TriangleMesh(v, f)


def vertex_adjacency(mesh: TriangleMesh) -> tuple[np.ndarray, np.ndarray]:
    """1-ring adjacency as CSR arrays (offsets, neighbor indices).

    Neighbor lists are sorted ascending; isolated vertices get empty lists.
    """
    edges, _ = unique_edges(mesh.faces)
    n = mesh.n_vertices
    src = np.concatenate([edges[:, 0], edges[:, 1]])
    dst = np.concatenate([edges[:, 1], edges[:, 0]])
    order = np.lexsort((dst, src))
    src, dst = src[order], dst[order]
    offsets = np.zeros(n + 1, dtype=np.int64)
    np.add.at(offsets, src + 1, 1)
    np.cumsum(offsets, out=offsets)
    return offsets, dst


def laplacian_smooth(mesh: TriangleMesh, iterations: int, lam: float) -> TriangleMesh:
    """Umbrella-operator smoothing.

    Each iteration moves every vertex toward the uniform average of its
    1-ring neighbors by factor ``lam``; connectivity is unchanged and
    isolated vertices stay put.
    """
    if iterations < 0:
        raise DataError("iterations must be >= 0")
    if not 0.0 <= lam <= 1.0:
        raise DataError("lambda must lie in [0, 1]")
    if iterations == 0 or lam == 0.0 or mesh.n_faces == 0:
        return mesh.copy()
    offsets, nbr = vertex_adjacency(mesh)
    deg = np.diff(offsets).astype(np.float64)
    movable = deg > 0
    inv_deg = np.zeros_like(deg)
    inv_deg[movable] = 1.0 / deg[movable]
    src = np.repeat(np.arange(mesh.n_vertices), np.diff(offsets))
    v = mesh.vertices.copy()
    for _ in range(iterations):
        acc = np.zeros_like(v)
        np.add.at(acc, src, v[nbr])
        avg = acc * inv_deg[:, None]
        v[movable] += lam * (avg[movable] - v[movable])
    return TriangleMesh(v, mesh.faces.copy())


def compute_vertex_normals(mesh: TriangleMesh) -> np.ndarray:
    """Angle-weighted per-vertex unit normals.

    Faces must be consistently outward-oriented; zero-area faces contribute
    nothing.
    """
    v, f = mesh.vertices, mesh.faces
    p0, p1, p2 = v[f[:, 0]], v[f[:, 1]], v[f[:, 2]]
    fn = np.cross(p1 - p0, p2 - p0)
    area2 = np.linalg.norm(fn, axis=1)
    ok = area2 > 0.0
    fn_unit = np.zeros_like(fn)
    fn_unit[ok] = fn[ok] / area2[ok, None]

    normals = np.zeros_like(v)
    corners = ((p0, p1, p2), (p1, p2, p0), (p2, p0, p1))
    for ci, (a, b, c) in enumerate(corners):
        e1 = b - a
        e2 = c - a
        n1 = np.linalg.norm(e1, axis=1)
        n2 = np.linalg.norm(e2, axis=1)
        good = ok & (n1 > 0) & (n2 > 0)
        cosang = np.zeros(len(f))
        cosang[good] = np.einsum("ij,ij->i", e1[good], e2[good]) / (n1[good] * n2[good])
        ang = np.arccos(np.clip(cosang, -1.0, 1.0))
        w = np.where(good, ang, 0.0)
        np.add.at(normals, f[:, ci], fn_unit * w[:, None])

    norm = np.linalg.norm(normals, axis=1)
    nz = norm > 0
    normals[nz] /= norm[nz, None]
    return normals


# ---------------------------------------------------------------------------
# Basis building shapes
#
# All three share an 18 m x 12 m footprint centered on the origin with walls
# to a common 8 m eave; the roofs differ: flat (8 m), gable ridge (16 m), hip
# ridge (24 m). Meshes are closed (bottom face included) so that ray-parity
# voxelization is well defined.
# ---------------------------------------------------------------------------

FOOTPRINT_LENGTH = 18.0  # x
FOOTPRINT_WIDTH = 12.0  # z
EAVE_HEIGHT = 8.0
FLAT_HEIGHT = 8.0
GABLE_HEIGHT = 16.0
HIP_HEIGHT = 24.0
HIP_RIDGE_FRACTION = 1.0 / 3.0  # ridge length relative to footprint length


def _close_quad(faces: list, a: int, b: int, c: int, d: int) -> None:
    # quad a-b-c-d (counterclockwise seen from outside) as two triangles
    faces.append((a, b, c))
    faces.append((a, c, d))


def flat_roof_mesh(
    length: float = FOOTPRINT_LENGTH,
    width: float = FOOTPRINT_WIDTH,
    height: float = FLAT_HEIGHT,
) -> TriangleMesh:
    """Closed box: flat-roof basis shape."""
    hx, hz = length / 2.0, width / 2.0
    v = np.array(
        [
            (-hx, 0.0, -hz),
            (hx, 0.0, -hz),
            (hx, 0.0, hz),
            (-hx, 0.0, hz),
            (-hx, height, -hz),
            (hx, height, -hz),
            (hx, height, hz),
            (-hx, height, hz),
        ]
    )
    faces: list = []
    # bottom (outward = -y): wind counterclockwise when seen from below
    _close_quad(faces, 0, 3, 2, 1)
    # top (outward = +y)
    _close_quad(faces, 4, 5, 6, 7)
    # walls
    _close_quad(faces, 0, 1, 5, 4)  # z = -hz
    _close_quad(faces, 2, 3, 7, 6)  # z = +hz
    _close_quad(faces, 1, 2, 6, 5)  # x = +hx
    _close_quad(faces, 3, 0, 4, 7)  # x = -hx
    return TriangleMesh(v, np.array(faces))


def gable_roof_mesh(
    length: float = FOOTPRINT_LENGTH,
    width: float = FOOTPRINT_WIDTH,
    eave: float = EAVE_HEIGHT,
    ridge: float = GABLE_HEIGHT,
) -> TriangleMesh:
    """Walls to the eave, then two roof planes meeting at a ridge along x."""
    hx, hz = length / 2.0, width / 2.0
    v = np.array(
        [
            (-hx, 0.0, -hz),
            (hx, 0.0, -hz),
            (hx, 0.0, hz),
            (-hx, 0.0, hz),
            (-hx, eave, -hz),
            (hx, eave, -hz),
            (hx, eave, hz),
            (-hx, eave, hz),
            (-hx, ridge, 0.0),  # 8: ridge end at x = -hx
            (hx, ridge, 0.0),  # 9: ridge end at x = +hx
        ]
    )
    faces: list = []
    _close_quad(faces, 0, 3, 2, 1)  # bottom
    _close_quad(faces, 0, 1, 5, 4)  # wall z = -hz
    _close_quad(faces, 2, 3, 7, 6)  # wall z = +hz
    _close_quad(faces, 1, 2, 6, 5)  # wall x = +hx
    _close_quad(faces, 3, 0, 4, 7)  # wall x = -hx
    # gable triangles on the x-end walls
    faces.append((5, 9, 6))  # x = +hx end
    faces.append((7, 8, 4))  # x = -hx end
    # roof planes
    _close_quad(faces, 4, 5, 9, 8)  # z < 0 side
    _close_quad(faces, 6, 7, 8, 9)  # z > 0 side
    return TriangleMesh(v, np.array(faces))


def hip_roof_mesh(
    length: float = FOOTPRINT_LENGTH,
    width: float = FOOTPRINT_WIDTH,
    eave: float = EAVE_HEIGHT,
    ridge: float = HIP_HEIGHT,
    ridge_fraction: float = HIP_RIDGE_FRACTION,
) -> TriangleMesh:
    """Walls to the eave, four sloped roof planes meeting at a short ridge."""
    hx, hz = length / 2.0, width / 2.0
    rx = ridge_fraction * hx
    v = np.array(
        [
            (-hx, 0.0, -hz),
            (hx, 0.0, -hz),
            (hx, 0.0, hz),
            (-hx, 0.0, hz),
            (-hx, eave, -hz),
            (hx, eave, -hz),
            (hx, eave, hz),
            (-hx, eave, hz),
            (-rx, ridge, 0.0),  # 8
            (rx, ridge, 0.0),  # 9
        ]
    )
    faces: list = []
    _close_quad(faces, 0, 3, 2, 1)  # bottom
    _close_quad(faces, 0, 1, 5, 4)  # wall z = -hz
    _close_quad(faces, 2, 3, 7, 6)  # wall z = +hz
    _close_quad(faces, 1, 2, 6, 5)  # wall x = +hx
    _close_quad(faces, 3, 0, 4, 7)  # wall x = -hx
    # long roof planes
    _close_quad(faces, 4, 5, 9, 8)  # z < 0 side
    _close_quad(faces, 6, 7, 8, 9)  # z > 0 side
    # hip ends
    faces.append((5, 6, 9))  # x = +hx end
    faces.append((7, 4, 8))  # x = -hx end
    return TriangleMesh(v, np.array(faces))


def basis_meshes() -> tuple[TriangleMesh, TriangleMesh, TriangleMesh]:
    """The (flat, gable, hip) basis triple with default dimensions."""
    return flat_roof_mesh(), gable_roof_mesh(), hip_roof_mesh()


# ---------------------------------------------------------------------------
# ASCII OBJ I/O (v/f records only)
# ---------------------------------------------------------------------------


def write_obj(mesh: TriangleMesh, path) -> None:
    """Write vertices and faces as ASCII OBJ."""
    with open(path, "w") as fh:
        for x, y, z in mesh.vertices:
            fh.write(f"v {x!r} {y!r} {z!r}\n")
        for a, b, c in mesh.faces + 1:
            fh.write(f"f {a} {b} {c}\n")


def read_obj(path) -> TriangleMesh:
    """Read an ASCII OBJ; only v and f records are honored.

    Face records may carry texture/normal slashes (``f 1/1/1 ...``); those
    sub-indices are ignored. Normals on input are ignored.
    """
    verts: list = []
    faces: list = []
    with open(path) as fh:
        for ln, line in enumerate(fh, 1):
            parts = line.split()
            if not parts or parts[0].startswith("#"):
                continue
            tag = parts[0]
            if tag == "v":
                if len(parts) < 4:
                    raise FormatError(f"{path}:{ln}: short vertex record")
                verts.append((float(parts[1]), float(parts[2]), float(parts[3])))
            elif tag == "f":
                if len(parts) != 4:
                    raise FormatError(f"{path}:{ln}: only triangular faces are supported")
                idx = [int(p.split("/")[0]) for p in parts[1:4]]
                faces.append([i - 1 if i > 0 else len(verts) + i for i in idx])
    if not verts:
        raise FormatError(f"{path}: no vertices")
    return TriangleMesh(np.array(verts), np.array(faces).reshape(-1, 3))


def require_watertight(mesh: TriangleMesh, what: str = "mesh") -> None:
    if not is_watertight(mesh):
        raise GeometryError(f"{what} is not watertight (every edge must join exactly two faces)")
