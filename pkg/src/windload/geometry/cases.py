"""Shape-space lattice and the per-case generation pipeline.

A case is one interpolated building at one wind direction. The pipeline per
direction: rotate the basis meshes about a shared footprint pivot, voxelize
each, build signed distance fields, take the convex combination, reconstruct
with marching cubes, smooth, and measure the characteristic height.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterator, Sequence

import numpy as np

from ..errors import DataError
from .mesh import (
    TriangleMesh,
    compute_vertex_normals,
    laplacian_smooth,
    rotate_about_vertical,
)
from .sdf import GridSpec, SDFField, interpolate_sdf, marching_cubes, occupancy_to_sdf, voxelize

SMOOTH_ITERATIONS = 10
SMOOTH_LAMBDA = 0.5
DEFAULT_SUBDIV = 10
DEFAULT_ANGLES = (0.0, 15.0, 30.0, 45.0, 60.0, 75.0, 90.0)


@dataclass(frozen=True)
class BarycentricWeights:
    """Convex coefficients over the three basis shapes.

    ``lattice`` carries the integer lattice coordinates (i, j, k) with
    i + j + k = subdiv when the weights come from the enumeration; it is
    None for free-floating weights.
    """

    w: tuple[float, float, float]
    lattice: tuple[int, int, int] | None = None

    def __post_init__(self):
        w = tuple(float(x) for x in self.w)
        if len(w) != 3:
            raise DataError("barycentric weights have exactly 3 components")
        if any(x < 0 for x in w):
            raise DataError("barycentric weights must be non-negative")
        if abs(sum(w) - 1.0) > 1e-12:
            raise DataError("barycentric weights must sum to 1")
        object.__setattr__(self, "w", w)

    @classmethod
    def from_lattice(cls, i: int, j: int, k: int, subdiv: int) -> "BarycentricWeights":
        if i + j + k != subdiv:
            raise DataError("lattice indices must sum to subdiv")
        return cls((i / subdiv, j / subdiv, k / subdiv), lattice=(i, j, k))

    @property
    def is_boundary(self) -> bool:
        """True when the point lies on the convex-hull boundary (a zero weight)."""
        if self.lattice is not None:
            return 0 in self.lattice
        return any(x == 0.0 for x in self.w)


def enumerate_barycentric_lattice(subdiv: int) -> list[tuple[BarycentricWeights, bool]]:
    """All (i, j, k)/subdiv triples with i + j + k = subdiv.

    Returns (weights, is_boundary) pairs; count is
    (subdiv + 1)(subdiv + 2) / 2 and boundary points are those with any
    zero component.
    """
    if subdiv < 1:
        raise DataError("subdiv must be >= 1")
    out = []
    for i in range(subdiv + 1):
        for j in range(subdiv + 1 - i):
            k = subdiv - i - j
            bw = BarycentricWeights.from_lattice(i, j, k, subdiv)
            out.append((bw, bw.is_boundary))
    return out


def format_case_id(weights: BarycentricWeights, angle_deg: float) -> str:
    """Stable identifier from lattice indices and wind direction."""
    if weights.lattice is None:
        raise DataError("case ids require lattice-based weights")
    i, j, k = weights.lattice
    a = f"{angle_deg:g}".replace("-", "m").replace(".", "p")
    return f"w{i:02d}-{j:02d}-{k:02d}_a{a}"


@dataclass
class CaseGeometry:
    """One generated building: reconstructed mesh plus generation identity."""

    mesh: TriangleMesh
    weights: BarycentricWeights
    angle_deg: float
    h_ref: float
    case_id: str

    def __post_init__(self):
        if self.h_ref <= 0:
            raise DataError("h_ref must be positive")


def shared_footprint_pivot(basis: Sequence[TriangleMesh]) -> tuple[float, float]:
    """Footprint centroid of the union bounding box of the unrotated bases."""
    lo = np.min([m.bounds()[0] for m in basis], axis=0)
    hi = np.max([m.bounds()[1] for m in basis], axis=0)
    return (float(lo[0] + hi[0]) / 2.0, float(lo[2] + hi[2]) / 2.0)


DOMAIN_CLEARANCE = 0.4


def grid_for_cases(
    basis: Sequence[TriangleMesh],
    resolution: int = 128,
    clearance: float = DOMAIN_CLEARANCE,
) -> GridSpec:
    """A grid that holds every rotation of every basis shape.

    The horizontal envelope is the largest footprint radius about the shared
    pivot, so one spec serves all wind directions; the envelope is padded by
    ``clearance`` times its own size so the distance field has open space
    around every shape (only above ground: below it the minimum 2-cell
    margin applies).
    """
    px, pz = shared_footprint_pivot(basis)
    r = 0.0
    ymin, ymax = np.inf, -np.inf
    for m in basis:
        d = np.hypot(m.vertices[:, 0] - px, m.vertices[:, 2] - pz)
        r = max(r, float(d.max()))
        ymin = min(ymin, float(m.vertices[:, 1].min()))
        ymax = max(ymax, float(m.vertices[:, 1].max()))
    rp = (1.0 + clearance) * r
    lo = (px - rp, ymin, pz - rp)
    hi = (px + rp, ymax + clearance * (ymax - ymin), pz + rp)
    dims = (resolution, resolution, resolution)
    return GridSpec.fit(lo, hi, dims, margin_cells=2)


def basis_sdfs_at_angle(
    basis: Sequence[TriangleMesh],
    angle_deg: float,
    spec: GridSpec,
    pivot: tuple[float, float] | None = None,
) -> list[SDFField]:
    """Rotate each basis mesh, voxelize, and build its signed distance field."""
    if pivot is None:
        pivot = shared_footprint_pivot(basis)
    fields = []
    for m in basis:
        rm = rotate_about_vertical(m, angle_deg, pivot=pivot)
        fields.append(occupancy_to_sdf(voxelize(rm, spec)))
    return fields


def reconstruct_case(
    fields: list[SDFField],
    weights: BarycentricWeights,
    angle_deg: float,
    smooth_iterations: int = SMOOTH_ITERATIONS,
    smooth_lambda: float = SMOOTH_LAMBDA,
) -> CaseGeometry:
    """Interpolate prebuilt per-direction SDFs and reconstruct the surface."""
    phi = interpolate_sdf(fields, weights)
    mesh = marching_cubes(phi, 0.0)
    mesh = laplacian_smooth(mesh, smooth_iterations, smooth_lambda)
    mesh.normals = compute_vertex_normals(mesh)
    h_ref = mesh.height()
    return CaseGeometry(
        mesh=mesh,
        weights=weights,
        angle_deg=angle_deg,
        h_ref=h_ref,
        case_id=format_case_id(weights, angle_deg),
    )


def generate_case(
    basis: Sequence[TriangleMesh],
    weights: BarycentricWeights,
    angle_deg: float,
    spec: GridSpec,
    smooth_iterations: int = SMOOTH_ITERATIONS,
    smooth_lambda: float = SMOOTH_LAMBDA,
) -> CaseGeometry:
    """Full single-case pipeline from the three unrotated basis meshes."""
    if len(basis) != 3:
        raise DataError("exactly three basis meshes are required")
    fields = basis_sdfs_at_angle(basis, angle_deg, spec)
    return reconstruct_case(fields, weights, angle_deg, smooth_iterations, smooth_lambda)


def generate_cases(
    basis: Sequence[TriangleMesh],
    subdiv: int = DEFAULT_SUBDIV,
    angles: Sequence[float] = DEFAULT_ANGLES,
    spec: GridSpec | None = None,
    resolution: int = 128,
    smooth_iterations: int = SMOOTH_ITERATIONS,
    smooth_lambda: float = SMOOTH_LAMBDA,
) -> Iterator[CaseGeometry]:
    """Sweep the whole lattice at every wind direction.

    The three basis SDFs are built once per direction and reused across all
    lattice points, so the sweep cost is dominated by reconstruction.
    """
    if len(basis) != 3:
        raise DataError("exactly three basis meshes are required")
    if spec is None:
        spec = grid_for_cases(basis, resolution=resolution)
    lattice = enumerate_barycentric_lattice(subdiv)
    pivot = shared_footprint_pivot(basis)
    for angle in angles:
        fields = basis_sdfs_at_angle(basis, angle, spec, pivot=pivot)
        for bw, _ in lattice:
            yield reconstruct_case(fields, bw, angle, smooth_iterations, smooth_lambda)
