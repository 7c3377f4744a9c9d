from .mesh import (
    TriangleMesh,
    basis_meshes,
    compute_vertex_normals,
    flat_roof_mesh,
    footprint_centroid,
    gable_roof_mesh,
    hip_roof_mesh,
    is_watertight,
    laplacian_smooth,
    mirror_spanwise,
    read_obj,
    rotate_about_vertical,
    unique_edges,
    write_obj,
)
from .sdf import (
    GridSpec,
    OccupancyGrid,
    SDFField,
    box_sdf,
    interpolate_sdf,
    marching_cubes,
    occupancy_to_sdf,
    sphere_sdf,
    voxelize,
)
from .cases import (
    BarycentricWeights,
    CaseGeometry,
    DEFAULT_ANGLES,
    DEFAULT_SUBDIV,
    enumerate_barycentric_lattice,
    format_case_id,
    generate_case,
    generate_cases,
    grid_for_cases,
    reconstruct_case,
    basis_sdfs_at_angle,
    shared_footprint_pivot,
)

__all__ = [name for name in dir() if not name.startswith("_")]
