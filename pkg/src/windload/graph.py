"""Surface graphs: proximity edges over mesh vertices plus geometric features.

Node features are six columns in canonical order
(x_hat, y_hat, z_hat, n_x, n_y, n_z): coordinates about the footprint
centroid at ground level divided by the characteristic height, and the unit
outward surface normal. The spanwise reflection operator acts on this table
by negating the z_hat and n_z columns only.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from .errors import DataError, FormatError, ShapeMismatchError
from .geometry.cases import CaseGeometry
from .geometry.mesh import compute_vertex_normals

GRAPH_MAGIC = b"WMLG"
GRAPH_VERSION = 1

FEATURE_COLUMNS = ("x_hat", "y_hat", "z_hat", "n_x", "n_y", "n_z")


@dataclass
class SurfaceGraph:
    """Immutable node-feature table plus symmetric CSR adjacency."""

    features: np.ndarray  # (n, 6) float64
    offsets: np.ndarray  # (n + 1,) int64, CSR row offsets
    neighbors: np.ndarray  # (e,) int64, ascending within each row
    case_id: str = ""
    k: int = 0

    def __post_init__(self):
        self.features = np.ascontiguousarray(self.features, dtype=np.float64)
        self.offsets = np.ascontiguousarray(self.offsets, dtype=np.int64)
        self.neighbors = np.ascontiguousarray(self.neighbors, dtype=np.int64)
        if self.features.ndim != 2 or self.features.shape[1] != 6:
            raise ShapeMismatchError("feature table must be (n, 6)")
        if len(self.offsets) != self.node_count + 1:
            raise ShapeMismatchError("offsets length must be node_count + 1")
        if not np.isfinite(self.features).all():
            raise DataError("features must be finite")

    @property
    def node_count(self) -> int:
        return self.features.shape[0]

    def degree(self) -> np.ndarray:
        return np.diff(self.offsets)

    def neighbor_list(self, v: int) -> np.ndarray:
        return self.neighbors[self.offsets[v] : self.offsets[v + 1]]

    def edge_set(self) -> set[tuple[int, int]]:
        src = np.repeat(np.arange(self.node_count), self.degree())
        pairs = np.stack([src, self.neighbors], axis=1)
        pairs.sort(axis=1)
        return set(map(tuple, np.unique(pairs, axis=0)))

    def with_features(self, features: np.ndarray) -> "SurfaceGraph":
        return SurfaceGraph(features, self.offsets, self.neighbors, self.case_id, self.k)


def _knn_indices(points: np.ndarray, k: int) -> np.ndarray:
    """Exact k nearest neighbors per point, self excluded.

    Candidates are re-sorted by (squared distance, node index), so ties at
    the cut are resolved deterministically and independently of kd-tree
    internals; the result is identical for any isometric copy of the points
    that preserves vertex order. The candidate window widens until every
    tie at the cut distance is inside it.
    """
    n = len(points)
    tree = cKDTree(points)
    rows = np.arange(n)
    pad = min(n, k + 17)  # self + k + tie headroom
    while True:
        _, idx = tree.query(points, k=pad)
        diff = points[idx] - points[:, None, :]
        d2 = np.einsum("ijk,ijk->ij", diff, diff)
        order = np.lexsort((idx, d2), axis=1)
        idx_sorted = np.take_along_axis(idx, order, axis=1)
        d2_sorted = np.take_along_axis(d2, order, axis=1)
        mask = idx_sorted != rows[:, None]
        take = mask & (np.cumsum(mask, axis=1) <= k)
        sel = idx_sorted[take].reshape(n, k)
        dk = d2_sorted[take].reshape(n, k)[:, -1]
        if pad == n or (dk < d2_sorted[:, pad - 1]).all():
            return sel
        pad = min(n, pad * 2)


def build_graph(case: CaseGeometry, k: int = 8) -> SurfaceGraph:
    """Symmetrized k-nearest-neighbor graph over mesh vertices.

    Distances are Euclidean on raw coordinates (meters); stored features are
    normalized by h_ref about the footprint centroid at ground level. Node
    order equals mesh vertex order.
    """
    mesh = case.mesh
    n = mesh.n_vertices
    if k < 1:
        raise DataError("k must be >= 1")
    if k >= n:
        raise DataError(f"k={k} needs at least k+1={k + 1} vertices, mesh has {n}")

    nn = _knn_indices(mesh.vertices, k)
    src = np.repeat(np.arange(n, dtype=np.int64), k)
    dst = nn.ravel()
    # symmetrize: union of both directions, no self loops, dedup
    a = np.concatenate([src, dst])
    b = np.concatenate([dst, src])
    pairs = np.unique(np.stack([a, b], axis=1), axis=0)
    offsets = np.zeros(n + 1, dtype=np.int64)
    np.add.at(offsets, pairs[:, 0] + 1, 1)
    np.cumsum(offsets, out=offsets)

    normals = mesh.normals if mesh.normals is not None else compute_vertex_normals(mesh)
    lo, _ = mesh.bounds()
    cx = (lo[0] + mesh.vertices[:, 0].max()) / 2.0
    cz = (lo[2] + mesh.vertices[:, 2].max()) / 2.0
    feats = np.empty((n, 6), dtype=np.float64)
    feats[:, 0] = (mesh.vertices[:, 0] - cx) / case.h_ref
    feats[:, 1] = (mesh.vertices[:, 1] - lo[1]) / case.h_ref
    feats[:, 2] = (mesh.vertices[:, 2] - cz) / case.h_ref
    feats[:, 3:6] = normals

    return SurfaceGraph(feats, offsets, pairs[:, 1].copy(), case_id=case.case_id, k=k)


def reflect_features(features: np.ndarray) -> np.ndarray:
    """Spanwise reflection on the feature table: negate z_hat and n_z.

    The node order and the proximity graph are untouched because reflection
    is an isometry.
    """
    X = np.asarray(features)
    if X.ndim != 2 or X.shape[1] != 6:
        raise ShapeMismatchError("feature table must have 6 columns")
    out = X.copy()
    out[:, 2] = -out[:, 2]
    out[:, 5] = -out[:, 5]
    return out


def save_graph(graph: SurfaceGraph, path) -> None:
    """Little-endian binary layout: magic, version, node_count, k, feature
    table (f64 row-major), CSR offsets (u32), neighbor indices (u32)."""
    with open(path, "wb") as fh:
        fh.write(GRAPH_MAGIC)
        fh.write(struct.pack("<III", GRAPH_VERSION, graph.node_count, graph.k))
        fh.write(graph.features.astype("<f8").tobytes())
        fh.write(graph.offsets.astype("<u4").tobytes())
        fh.write(graph.neighbors.astype("<u4").tobytes())


def load_graph(path, case_id: str = "") -> SurfaceGraph:
    with open(path, "rb") as fh:
        raw = fh.read()
    if raw[:4] != GRAPH_MAGIC:
        raise FormatError(f"{path}: bad magic")
    version, n, k = struct.unpack_from("<III", raw, 4)
    if version != GRAPH_VERSION:
        raise FormatError(f"{path}: unsupported graph version {version}")
    off = 16
    need = n * 6 * 8 + (n + 1) * 4
    if len(raw) < off + need:
        raise FormatError(f"{path}: truncated graph file")
    feats = np.frombuffer(raw, dtype="<f8", count=n * 6, offset=off).reshape(n, 6)
    off += n * 6 * 8
    offsets = np.frombuffer(raw, dtype="<u4", count=n + 1, offset=off).astype(np.int64)
    off += (n + 1) * 4
    e = int(offsets[-1])
    if len(raw) < off + e * 4:
        raise FormatError(f"{path}: truncated neighbor array")
    nbr = np.frombuffer(raw, dtype="<u4", count=e, offset=off).astype(np.int64)
    return SurfaceGraph(feats.copy(), offsets, nbr, case_id=case_id, k=int(k))
