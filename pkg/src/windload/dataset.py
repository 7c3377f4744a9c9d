"""Case directory layout and dataset assembly.

Each case lives in ``cases/<case_id>/`` with four files: ``mesh.obj`` (the
reconstructed surface), ``meta.json`` (generation identity), ``graph.bin``
(features plus adjacency), and ``labels.csv`` (per-node targets).
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

from . import __version__
from .errors import DataError, FormatError
from .geometry.cases import (
    DEFAULT_ANGLES,
    DEFAULT_SUBDIV,
    SMOOTH_ITERATIONS,
    SMOOTH_LAMBDA,
    BarycentricWeights,
    CaseGeometry,
    basis_sdfs_at_angle,
    enumerate_barycentric_lattice,
    grid_for_cases,
    reconstruct_case,
    shared_footprint_pivot,
)
from .geometry.mesh import TriangleMesh, read_obj, write_obj
from .geometry.sdf import GridSpec
from .graph import SurfaceGraph, build_graph, load_graph, save_graph
from .oracle import CpLabels, load_labels, pseudo_cp, save_labels

DEFAULT_KNN = 8


@dataclass
class LabeledCase:
    """A case as the training/evaluation stack consumes it."""

    case_id: str
    graph: SurfaceGraph
    labels: CpLabels
    meta: dict

    @property
    def angle_deg(self) -> float:
        return float(self.meta["angle_deg"])

    @property
    def lattice(self) -> tuple[int, int, int]:
        return tuple(self.meta["lattice"])

    @property
    def is_boundary(self) -> bool:
        return 0 in self.lattice


def case_meta(
    case: CaseGeometry,
    spec: GridSpec,
    k: int,
    smooth_iterations: int,
    smooth_lambda: float,
    subdiv: int,
) -> dict:
    if case.weights.lattice is None:
        raise DataError("dataset cases need lattice-based weights")
    return {
        "case_id": case.case_id,
        "weights": list(case.weights.w),
        "lattice": list(case.weights.lattice),
        "subdiv": subdiv,
        "angle_deg": case.angle_deg,
        "h_ref": case.h_ref,
        "grid": {"origin": list(spec.origin), "spacing": spec.spacing, "dims": list(spec.dims)},
        "smoothing": {"iterations": smooth_iterations, "lambda": smooth_lambda},
        "knn": k,
        "generator_version": __version__,
    }


def write_case(
    out_dir: Path, case: CaseGeometry, graph: SurfaceGraph, labels: CpLabels, meta: dict
) -> Path:
    d = Path(out_dir) / case.case_id
    d.mkdir(parents=True, exist_ok=True)
    write_obj(case.mesh, d / "mesh.obj")
    with open(d / "meta.json", "w") as fh:
        json.dump(meta, fh, sort_keys=True, indent=1)
        fh.write("\n")
    save_graph(graph, d / "graph.bin")
    save_labels(labels, d / "labels.csv")
    return d


def generate_dataset(
    basis: Sequence[TriangleMesh],
    out_dir,
    subdiv: int = DEFAULT_SUBDIV,
    angles: Sequence[float] = DEFAULT_ANGLES,
    resolution: int = 128,
    spec: GridSpec | None = None,
    k: int = DEFAULT_KNN,
    smooth_iterations: int = SMOOTH_ITERATIONS,
    smooth_lambda: float = SMOOTH_LAMBDA,
    progress=None,
) -> list[str]:
    """Generate, label, and write the full case sweep; returns case ids.

    Basis signed distance fields are built once per wind direction and
    shared across the lattice. Each case directory is self-contained, so
    the sweep could be distributed; this driver is sequential.
    """
    if len(basis) != 3:
        raise DataError("exactly three basis meshes are required")
    if spec is None:
        spec = grid_for_cases(basis, resolution=resolution)
    out_dir = Path(out_dir)
    lattice = enumerate_barycentric_lattice(subdiv)
    pivot = shared_footprint_pivot(basis)
    ids: list[str] = []
    for angle in angles:
        fields = basis_sdfs_at_angle(basis, angle, spec, pivot=pivot)
        for bw, _ in lattice:
            case = reconstruct_case(fields, bw, angle, smooth_iterations, smooth_lambda)
            graph = build_graph(case, k=k)
            labels = pseudo_cp(graph, angle)
            meta = case_meta(case, spec, k, smooth_iterations, smooth_lambda, subdiv)
            write_case(out_dir, case, graph, labels, meta)
            ids.append(case.case_id)
            if progress is not None:
                progress(case.case_id)
    return ids


def list_case_ids(cases_dir) -> list[str]:
    root = Path(cases_dir)
    if not root.is_dir():
        raise DataError(f"dataset directory not found: {root}")
    ids = sorted(p.name for p in root.iterdir() if (p / "meta.json").is_file())
    if not ids:
        raise DataError(f"no cases under {root}")
    return ids


def load_case(cases_dir, case_id: str) -> LabeledCase:
    d = Path(cases_dir) / case_id
    try:
        with open(d / "meta.json") as fh:
            meta = json.load(fh)
    except FileNotFoundError:
        raise DataError(f"case {case_id} not found under {cases_dir}")
    except json.JSONDecodeError as e:
        raise FormatError(f"{d / 'meta.json'}: {e}")
    graph = load_graph(d / "graph.bin", case_id=case_id)
    labels = load_labels(d / "labels.csv")
    if len(labels) != graph.node_count:
        raise DataError(f"case {case_id}: {len(labels)} labels for {graph.node_count} nodes")
    return LabeledCase(case_id=case_id, graph=graph, labels=labels, meta=meta)


def load_cases(cases_dir, case_ids: Iterable[str] | None = None) -> list[LabeledCase]:
    ids = list_case_ids(cases_dir) if case_ids is None else list(case_ids)
    return [load_case(cases_dir, cid) for cid in ids]


def load_case_mesh(cases_dir, case_id: str) -> TriangleMesh:
    return read_obj(Path(cases_dir) / case_id / "mesh.obj")
