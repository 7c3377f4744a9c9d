"""Per-node surface-pressure labels.

Two label paths: a deterministic analytic generator used at desk scale, and
an ingestion path converting measured or simulated pressures into pressure
coefficients. The analytic generator is built to be exactly consistent
under the joint spanwise reflection (z_hat, n_z, theta) -> (-z_hat, -n_z,
-theta), which is what makes mirrored-test evaluation meaningful without a
flow solver.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass

import numpy as np

from .errors import DataError, FormatError
from .graph import SurfaceGraph

LABEL_SOURCES = ("oracle", "ingested")

# Fixed generator constants. Label magnitudes stay within |cp_mean| <= 1.0
# and cp_std <= 0.45; changing them invalidates recorded baselines.
_MEAN_PRESSURE_GAIN = 0.8
_MEAN_HEIGHT_FLOOR = 0.3
_MEAN_HEIGHT_SPAN = 0.7
_MEAN_SUCTION = 0.5
_MEAN_ASYM_GAIN = 0.2
_ASYM_SHARPNESS = 3.0
_STD_GAIN = 0.25
_STD_HEIGHT_FLOOR = 0.4
_STD_HEIGHT_SPAN = 0.6
_STD_ASYM_GAIN = 0.05


@dataclass(frozen=True)
class FlowConditions:
    """Freestream reference state for pressure-coefficient conversion."""

    p_inf: float
    rho: float
    u_inf: float
    theta_deg: float = 0.0

    def __post_init__(self):
        if self.rho <= 0:
            raise DataError("air density must be positive")
        if self.u_inf <= 0:
            raise DataError("reference velocity must be positive")

    @property
    def dynamic_pressure(self) -> float:
        return 0.5 * self.rho * self.u_inf**2


@dataclass
class CpLabels:
    """Per-node mean and standard deviation of the pressure coefficient."""

    cp_mean: np.ndarray
    cp_std: np.ndarray
    source: str = "oracle"

    def __post_init__(self):
        self.cp_mean = np.ascontiguousarray(self.cp_mean, dtype=np.float64)
        self.cp_std = np.ascontiguousarray(self.cp_std, dtype=np.float64)
        if self.cp_mean.shape != self.cp_std.shape or self.cp_mean.ndim != 1:
            raise DataError("cp_mean and cp_std must be equal-length vectors")
        if not (np.isfinite(self.cp_mean).all() and np.isfinite(self.cp_std).all()):
            raise DataError("labels must be finite")
        if (self.cp_std < 0).any():
            raise DataError("cp_std must be non-negative")
        if self.source not in LABEL_SOURCES:
            raise DataError(f"unknown label source {self.source!r}")

    def __len__(self) -> int:
        return len(self.cp_mean)

    def target(self, name: str) -> np.ndarray:
        if name == "cp_mean":
            return self.cp_mean
        if name == "cp_std":
            return self.cp_std
        raise DataError(f"unknown target {name!r}")


def wind_vector(theta_deg: float) -> np.ndarray:
    """Unit wind direction (cos t, 0, sin t) in the ground plane."""
    t = math.radians(theta_deg)
    return np.array([math.cos(t), 0.0, math.sin(t)])


def pseudo_cp(graph: SurfaceGraph, theta_deg: float) -> CpLabels:
    """Analytic stand-in labels from node features and wind direction.

    With w the wind vector, d = n . w the alignment of the outward normal
    with the wind, y the normalized height, and z the normalized spanwise
    coordinate:

        cp_mean = 0.8 (-d) (0.3 + 0.7 y) - 0.5 (1 - d^2)
                  + 0.2 tanh(3 z w_z)
        cp_std  = 0.25 sqrt(1 - d^2) (0.4 + 0.6 y)
                  + 0.05 (1 + tanh(3 z w_z)) / 2

    Every term depends on d, y, or the product z * w_z, all invariant under
    the joint reflection (z, n_z, theta) -> (-z, -n_z, -theta), so mirrored
    geometries at the opposite angle reproduce these labels exactly.
    """
    X = graph.features
    w = wind_vector(theta_deg)
    y = X[:, 1]
    z = X[:, 2]
    d = X[:, 3:6] @ w
    cross = np.sqrt(np.clip(1.0 - d * d, 0.0, None))
    asym = np.tanh(_ASYM_SHARPNESS * z * w[2])
    cp_mean = (
        _MEAN_PRESSURE_GAIN * (-d) * (_MEAN_HEIGHT_FLOOR + _MEAN_HEIGHT_SPAN * y)
        - _MEAN_SUCTION * (1.0 - d * d)
        + _MEAN_ASYM_GAIN * asym
    )
    cp_std = _STD_GAIN * cross * (_STD_HEIGHT_FLOOR + _STD_HEIGHT_SPAN * y) + _STD_ASYM_GAIN * (
        1.0 + asym
    ) / 2.0
    return CpLabels(cp_mean, cp_std, source="oracle")


def cp_from_pressure(p_series, fc: FlowConditions) -> tuple[float, float]:
    """Sample mean and population standard deviation of the pressure
    coefficient (p - p_inf) / (rho u^2 / 2) over a pressure time series."""
    p = np.asarray(p_series, dtype=np.float64)
    if p.size == 0:
        raise DataError("empty pressure series")
    cp = (p - fc.p_inf) / fc.dynamic_pressure
    return float(cp.mean()), float(cp.std())


# ---------------------------------------------------------------------------
# Label file I/O: cases/<case_id>/labels.csv
# ---------------------------------------------------------------------------


def save_labels(labels: CpLabels, path) -> None:
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["node_id", "cp_mean", "cp_std", "source"])
        for i in range(len(labels)):
            wr.writerow([i, repr(labels.cp_mean[i]), repr(labels.cp_std[i]), labels.source])


def load_labels(path) -> CpLabels:
    with open(path, newline="") as fh:
        rd = csv.reader(fh)
        header = next(rd, None)
        if header is None or [h.strip() for h in header] != ["node_id", "cp_mean", "cp_std", "source"]:
            raise FormatError(f"{path}: expected header node_id,cp_mean,cp_std,source")
        means, stds, sources = [], [], set()
        for row in rd:
            if not row:
                continue
            means.append(float(row[1]))
            stds.append(float(row[2]))
            sources.add(row[3])
    if not means:
        raise FormatError(f"{path}: no label rows")
    if len(sources) != 1:
        raise FormatError(f"{path}: mixed label sources {sorted(sources)}")
    return CpLabels(np.array(means), np.array(stds), source=sources.pop())


def ingest_pressure_stats(csv_path, sidecar_path) -> CpLabels:
    """Convert per-node pressure statistics to pressure coefficients.

    ``csv_path`` has header node_id,p_mean,p_std (pascals); the JSON sidecar
    holds the FlowConditions fields. The mean shifts and scales by the
    dynamic pressure; the standard deviation only scales.
    """
    with open(sidecar_path) as fh:
        raw = json.load(fh)
    fc = FlowConditions(
        p_inf=float(raw["p_inf"]),
        rho=float(raw["rho"]),
        u_inf=float(raw["u_inf"]),
        theta_deg=float(raw.get("theta_deg", 0.0)),
    )
    means, stds = _read_two_column_csv(csv_path, ("node_id", "p_mean", "p_std"))
    q = fc.dynamic_pressure
    return CpLabels((means - fc.p_inf) / q, stds / q, source="ingested")


def ingest_cp_stats(csv_path) -> CpLabels:
    """Ingest precomputed pressure-coefficient statistics directly."""
    means, stds = _read_two_column_csv(csv_path, ("node_id", "cp_mean", "cp_std"))
    return CpLabels(means, stds, source="ingested")


def _read_two_column_csv(path, expected_header) -> tuple[np.ndarray, np.ndarray]:
    with open(path, newline="") as fh:
        rd = csv.reader(fh)
        header = next(rd, None)
        if header is None or tuple(h.strip() for h in header) != tuple(expected_header):
            raise FormatError(f"{path}: expected header {','.join(expected_header)}")
        a, b = [], []
        for row in rd:
            if not row:
                continue
            a.append(float(row[1]))
            b.append(float(row[2]))
    if not a:
        raise FormatError(f"{path}: no data rows")
    return np.array(a), np.array(b)
