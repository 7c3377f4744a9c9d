"""Dataset splits, mirrored-test augmentation, metrics, and the experiment
driver that trains baseline and equivariant models side by side.

The mirrored-test protocol appends a spanwise-reflected copy of every test
case, with labels carried over node-for-node, while train/dev stay
untouched; a model that has truly internalized the reflection symmetry loses
nothing on the augmented set.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from .dataset import LabeledCase, load_case_mesh, load_cases
from .errors import ConfigError, DataError
from .geometry.mesh import TriangleMesh
from .graph import reflect_features
from .model import (
    ModelConfig,
    ModelParams,
    TrainConfig,
    forward,
    load_checkpoint,
    save_checkpoint,
    train,
)
from .vtkio import write_polydata

HITRATE_TOLERANCE = {"cp_mean": 0.10, "cp_std": 0.05}
SPLIT_KINDS = ("interpolation", "extrapolation")
DEFAULT_FRACTIONS = (0.70, 0.15, 0.15)
EXTRAPOLATION_TRAIN_FRACTION = 0.8


# ---------------------------------------------------------------------------
# Splits
# ---------------------------------------------------------------------------


@dataclass
class SplitSpec:
    split_kind: str
    seed: int
    train: list[str]
    dev: list[str]
    test: list[str]
    fractions: tuple[float, ...] | None = None

    def __post_init__(self):
        if self.split_kind not in SPLIT_KINDS:
            raise ConfigError(f"split kind must be one of {SPLIT_KINDS}")
        groups = (set(self.train), set(self.dev), set(self.test))
        if groups[0] & groups[1] or groups[0] & groups[2] or groups[1] & groups[2]:
            raise ConfigError("split partitions overlap")
        if not (self.train and self.dev and self.test):
            raise ConfigError("every split partition must be non-empty")

    def to_dict(self) -> dict:
        return {
            "kind": self.split_kind,
            "seed": self.seed,
            "fractions": list(self.fractions) if self.fractions else None,
            "train": self.train,
            "dev": self.dev,
            "test": self.test,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SplitSpec":
        return cls(
            split_kind=d["kind"],
            seed=int(d["seed"]),
            train=list(d["train"]),
            dev=list(d["dev"]),
            test=list(d["test"]),
            fractions=tuple(d["fractions"]) if d.get("fractions") else None,
        )

    def save(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, sort_keys=True, indent=1)
            fh.write("\n")

    @classmethod
    def load(cls, path) -> "SplitSpec":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


def split_interpolation(
    case_ids: Sequence[str],
    fractions: tuple[float, float, float] = DEFAULT_FRACTIONS,
    seed: int = 0,
) -> SplitSpec:
    """Seeded shuffle then contiguous partition at the given fractions.

    Partition sizes are (floor, floor, remainder). Every angle of a geometry
    is split independently because each case id is its own draw.
    """
    if len(fractions) != 3 or any(f <= 0 for f in fractions):
        raise ConfigError("fractions must be three positive numbers")
    if abs(sum(fractions) - 1.0) > 1e-9:
        raise ConfigError("fractions must sum to 1")
    ids = sorted(case_ids)
    n = len(ids)
    order = np.random.default_rng(seed).permutation(n)
    shuffled = [ids[i] for i in order]
    n_train = math.floor(n * fractions[0])
    n_dev = math.floor(n * fractions[1])
    train_ids = shuffled[:n_train]
    dev_ids = shuffled[n_train : n_train + n_dev]
    test_ids = shuffled[n_train + n_dev :]
    if not (train_ids and dev_ids and test_ids):
        raise ConfigError("fractions leave an empty partition")
    return SplitSpec("interpolation", seed, train_ids, dev_ids, test_ids, tuple(fractions))


def split_extrapolation(cases: Sequence[LabeledCase], seed: int = 0) -> SplitSpec:
    """Hold out every shape on the lattice boundary for testing; split the
    interior cases 80/20 into train/dev with a seeded shuffle."""
    ordered = sorted(cases, key=lambda c: c.case_id)
    test_ids = [c.case_id for c in ordered if c.is_boundary]
    interior = [c.case_id for c in ordered if not c.is_boundary]
    if not test_ids:
        raise ConfigError("no boundary cases to hold out")
    if not interior:
        raise ConfigError("no interior cases left for training")
    order = np.random.default_rng(seed).permutation(len(interior))
    shuffled = [interior[i] for i in order]
    n_train = math.floor(len(interior) * EXTRAPOLATION_TRAIN_FRACTION)
    train_ids = shuffled[:n_train]
    dev_ids = shuffled[n_train:]
    if not (train_ids and dev_ids):
        raise ConfigError("interior pool too small for a train/dev split")
    return SplitSpec("extrapolation", seed, train_ids, dev_ids, test_ids)


def select_cases(cases: Sequence[LabeledCase], ids: Sequence[str]) -> list[LabeledCase]:
    by_id = {c.case_id: c for c in cases}
    missing = [i for i in ids if i not in by_id]
    if missing:
        raise DataError(f"split references unknown cases: {missing[:5]}")
    return [by_id[i] for i in ids]


# ---------------------------------------------------------------------------
# Mirrored-test augmentation
# ---------------------------------------------------------------------------


def mirror_case(case: LabeledCase) -> LabeledCase:
    """Spanwise-reflected copy: features reflected, adjacency reused (the
    proximity graph is reflection-invariant), labels carried node-for-node."""
    meta = dict(case.meta)
    meta["angle_deg"] = -float(meta.get("angle_deg", 0.0))
    meta["mirrored"] = True
    return LabeledCase(
        case_id=case.case_id + "+sym",
        graph=case.graph.with_features(reflect_features(case.graph.features)),
        labels=case.labels,
        meta=meta,
    )


def augment_sym(test_cases: Sequence[LabeledCase]) -> list[LabeledCase]:
    """Original test cases followed by their mirrored copies."""
    return list(test_cases) + [mirror_case(c) for c in test_cases]


def case_list_digest(cases: Sequence[LabeledCase]) -> str:
    h = hashlib.sha256()
    for c in cases:
        h.update(c.case_id.encode())
        h.update(b"\0")
    return h.hexdigest()


# ---------------------------------------------------------------------------
# Metrics
# ---------------------------------------------------------------------------


@dataclass
class MetricReport:
    rmse: float
    mse: float
    mae: float
    r2: float
    hitrate_pct: float
    tolerance: float
    target: str = ""
    sym_augmented: bool = False
    r2_defined: bool = True

    def to_dict(self) -> dict:
        return {
            "rmse": self.rmse,
            "mse": self.mse,
            "mae": self.mae,
            "r2": self.r2 if self.r2_defined else None,
            "r2_defined": self.r2_defined,
            "hitrate_pct": self.hitrate_pct,
            "tolerance": self.tolerance,
            "target": self.target,
            "sym_augmented": self.sym_augmented,
        }


def compute_metrics(
    pred,
    target,
    tolerance: float,
    target_name: str = "",
    sym_augmented: bool = False,
) -> MetricReport:
    """Pooled per-node regression metrics.

    mse is the mean squared error and rmse its square root; r2 uses the
    pooled target mean; hitrate counts |error| <= tolerance (closed
    interval). Zero-variance targets leave r2 undefined (NaN, flagged).
    """
    p = np.asarray(pred, dtype=np.float64)
    t = np.asarray(target, dtype=np.float64)
    if p.shape != t.shape or p.ndim != 1 or p.size == 0:
        raise DataError("pred and target must be equal-length non-empty vectors")
    err = p - t
    mse = float(np.mean(err * err))
    rmse = float(np.sqrt(mse))
    mae = float(np.mean(np.abs(err)))
    ss_tot = float(np.sum((t - t.mean()) ** 2))
    if ss_tot == 0.0:
        r2, r2_defined = float("nan"), False
    else:
        r2 = 1.0 - float(np.sum(err * err)) / ss_tot
        r2_defined = True
    hitrate = 100.0 * float(np.mean(np.abs(err) <= tolerance))
    return MetricReport(
        rmse=rmse,
        mse=mse,
        mae=mae,
        r2=r2,
        hitrate_pct=hitrate,
        tolerance=tolerance,
        target=target_name,
        sym_augmented=sym_augmented,
        r2_defined=r2_defined,
    )


def predict_cases(params: ModelParams, cases: Sequence[LabeledCase]):
    preds, trues = [], []
    for c in cases:
        preds.append(forward(c.graph, c.graph.features, params))
        trues.append(c.labels.target(params.config.target))
    return np.concatenate(preds), np.concatenate(trues)


def evaluate(params: ModelParams, test_cases: Sequence[LabeledCase], sym: bool) -> MetricReport:
    """Pooled metrics of a trained model on the (optionally augmented) test
    set, at the target's hitrate tolerance."""
    cases = augment_sym(test_cases) if sym else list(test_cases)
    pred, true = predict_cases(params, cases)
    tgt = params.config.target
    return compute_metrics(
        pred, true, HITRATE_TOLERANCE[tgt], target_name=tgt, sym_augmented=sym
    )


def evaluate_checkpoint(ckpt_path, test_cases: Sequence[LabeledCase], sym: bool) -> MetricReport:
    params, _ = load_checkpoint(ckpt_path)
    return evaluate(params, test_cases, sym)


# ---------------------------------------------------------------------------
# Experiment driver
# ---------------------------------------------------------------------------


@dataclass
class ExperimentConfig:
    dataset: str
    out_dir: str
    split_kind: str = "interpolation"
    split_seed: int = 0
    fractions: tuple[float, float, float] = DEFAULT_FRACTIONS
    split_path: str | None = None  # reuse an existing split.json instead
    model: ModelConfig = field(default_factory=ModelConfig)
    trainer: TrainConfig = field(default_factory=TrainConfig)
    targets: tuple[str, ...] = ("cp_mean", "cp_std")
    modes: tuple[str, ...] = ("baseline", "equivariant")

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        split = d.get("split", {})
        kw = dict(
            dataset=d["dataset"],
            out_dir=d["out"],
            split_kind=split.get("kind", "interpolation"),
            split_seed=int(split.get("seed", 0)),
            split_path=split.get("path"),
            model=ModelConfig.from_dict(d.get("model", {})) if d.get("model") else ModelConfig(),
            trainer=TrainConfig.from_dict(d.get("train", {})) if d.get("train") else TrainConfig(),
        )
        if split.get("fractions"):
            kw["fractions"] = tuple(split["fractions"])
        if d.get("targets"):
            kw["targets"] = tuple(d["targets"])
        if d.get("modes"):
            kw["modes"] = tuple(d["modes"])
        return cls(**kw)

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


def make_split(cfg: ExperimentConfig, cases: Sequence[LabeledCase]) -> SplitSpec:
    if cfg.split_path:
        return SplitSpec.load(cfg.split_path)
    if cfg.split_kind == "interpolation":
        return split_interpolation([c.case_id for c in cases], cfg.fractions, cfg.split_seed)
    if cfg.split_kind == "extrapolation":
        return split_extrapolation(cases, cfg.split_seed)
    raise ConfigError(f"unknown split kind {cfg.split_kind!r}")


def _flush_report(out_dir: Path, payload: dict) -> None:
    with open(out_dir / "report.json", "w") as fh:
        json.dump(payload, fh, sort_keys=True, indent=1)
        fh.write("\n")


def run_experiment(cfg: ExperimentConfig) -> dict:
    """Train {baseline, equivariant} x targets on one split and evaluate each
    with and without mirrored-test augmentation: an 8-row report.

    Rows are flushed to report.json as they complete; report.md renders the
    table plus the hitrate gap between plain and mirrored evaluation.
    """
    out_dir = Path(cfg.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    cases = load_cases(cfg.dataset)
    split = make_split(cfg, cases)
    split.save(out_dir / "split.json")

    train_cases = select_cases(cases, split.train)
    dev_cases = select_cases(cases, split.dev)
    test_cases = select_cases(cases, split.test)
    guard_before = case_list_digest(train_cases) + case_list_digest(dev_cases)

    payload: dict = {
        "split": {
            "kind": split.split_kind,
            "seed": split.seed,
            "sizes": {"train": len(split.train), "dev": len(split.dev), "test": len(split.test)},
        },
        "model": cfg.model.to_dict(),
        "train": cfg.trainer.to_dict(),
        "rows": [],
    }
    _flush_report(out_dir, payload)

    for target in cfg.targets:
        for mode in cfg.modes:
            mconfig = replace(cfg.model, mode=mode, target=target)
            params, history = train(train_cases, dev_cases, mconfig, cfg.trainer)
            ckpt = out_dir / f"ckpt_{target}_{mode}.bin"
            save_checkpoint(params, mconfig, ckpt)
            with open(out_dir / f"history_{target}_{mode}.json", "w") as fh:
                json.dump(history.to_dict(), fh, sort_keys=True)
                fh.write("\n")
            for sym in (False, True):
                rep = evaluate(params, test_cases, sym)
                row = {
                    "split_kind": split.split_kind,
                    "target": target,
                    "mode": mode,
                    "sym": sym,
                    **rep.to_dict(),
                    "n_cases": len(test_cases) * (2 if sym else 1),
                    "best_epoch": history.best_epoch,
                    "epochs_run": history.epochs_run,
                }
                payload["rows"].append(row)
                _flush_report(out_dir, payload)

    guard_after = case_list_digest(train_cases) + case_list_digest(dev_cases)
    if guard_before != guard_after:
        raise DataError("train/dev case lists changed during evaluation")

    write_report_md(out_dir / "report.md", payload)
    return payload


def _fmt(x, nd=4):
    if x is None or (isinstance(x, float) and not np.isfinite(x)):
        return "n/a"
    return f"{x:.{nd}f}"


def write_report_md(path, payload: dict) -> None:
    rows = payload["rows"]
    lines = [
        f"# Surrogate evaluation ({payload['split']['kind']} split)",
        "",
        f"Split sizes: train {payload['split']['sizes']['train']}, "
        f"dev {payload['split']['sizes']['dev']}, test {payload['split']['sizes']['test']}. "
        "\"+ Sym\" rows evaluate on the test set extended with mirrored copies.",
        "",
    ]
    for target, label in (("cp_mean", "Mean Cp"), ("cp_std", "Std Cp")):
        sub = [r for r in rows if r["target"] == target]
        if not sub:
            continue
        lines += [
            f"## {label}",
            "",
            "| Method | RMSE | MSE | MAE | R2 | Hitrate (%) |",
            "|---|---|---|---|---|---|",
        ]
        for mode in ("baseline", "equivariant"):
            for sym in (False, True):
                r = next((x for x in sub if x["mode"] == mode and x["sym"] == sym), None)
                if r is None:
                    continue
                name = mode + (" + Sym" if sym else "")
                lines.append(
                    f"| {name} | {_fmt(r['rmse'])} | {_fmt(r['mse'])} | {_fmt(r['mae'])} "
                    f"| {_fmt(r['r2'], 4)} | {_fmt(r['hitrate_pct'], 2)} |"
                )
        lines.append("")
        gaps = []
        for mode in ("baseline", "equivariant"):
            plain = next((x for x in sub if x["mode"] == mode and not x["sym"]), None)
            symd = next((x for x in sub if x["mode"] == mode and x["sym"]), None)
            if plain and symd:
                gap = abs(symd["hitrate_pct"] - plain["hitrate_pct"])
                gaps.append(f"{mode}: {gap:.3f} points")
        if gaps:
            lines.append("Hitrate change when mirrored copies are added: " + "; ".join(gaps) + ".")
            lines.append("")
    with open(path, "w") as fh:
        fh.write("\n".join(lines))


# ---------------------------------------------------------------------------
# Contour export
# ---------------------------------------------------------------------------


def export_contours(mesh: TriangleMesh, pred, true, path) -> None:
    """Legacy ASCII VTK PolyData with cp_pred, cp_true, cp_abs_err scalars."""
    pred = np.asarray(pred, dtype=np.float64)
    true = np.asarray(true, dtype=np.float64)
    if len(pred) != mesh.n_vertices or len(true) != mesh.n_vertices:
        raise DataError("prediction length must equal mesh vertex count")
    write_polydata(
        path,
        mesh.vertices,
        mesh.faces,
        {"cp_pred": pred, "cp_true": true, "cp_abs_err": np.abs(pred - true)},
    )


def export_case_contours(cases_dir, case_id: str, params: ModelParams, path) -> None:
    mesh = load_case_mesh(cases_dir, case_id)
    case = load_cases(cases_dir, [case_id])[0]
    pred = forward(case.graph, case.graph.features, params)
    true = case.labels.target(params.config.target)
    export_contours(mesh, pred, true, path)
