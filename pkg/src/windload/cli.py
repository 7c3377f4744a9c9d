"""Command-line entry points.

Exit codes: 0 success, 2 configuration error, 3 data error, 4 numeric
failure.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .errors import ConfigError, DataError, NumericError, WindloadError


def _parse_angles(text: str) -> list[float]:
    if ":" in text:
        parts = text.split(":")
        if len(parts) != 3:
            raise ConfigError("angle range must be start:stop:step")
        start, stop, step = (float(p) for p in parts)
        if step <= 0:
            raise ConfigError("angle step must be positive")
        out = []
        a = start
        while a <= stop + 1e-9:
            out.append(round(a, 9))
            a += step
        return out
    return [float(p) for p in text.split(",") if p]


def _parse_fractions(text: str) -> tuple[float, float, float]:
    parts = [float(p) for p in text.split(",")]
    if len(parts) != 3:
        raise ConfigError("fractions must be three comma-separated numbers")
    return tuple(parts)  # type: ignore[return-value]


def cmd_generate(args) -> int:
    from .dataset import generate_dataset
    from .geometry.mesh import read_obj

    basis = [read_obj(p) for p in args.basis]
    angles = _parse_angles(args.angles)
    count = 0

    def tick(case_id):
        nonlocal count
        count += 1
        if args.verbose:
            print(f"[{count}] {case_id}", flush=True)

    ids = generate_dataset(
        basis,
        args.out,
        subdiv=args.subdiv,
        angles=angles,
        resolution=args.grid,
        k=args.k,
        smooth_iterations=args.smooth_iterations,
        smooth_lambda=args.smooth_lambda,
        progress=tick,
    )
    print(f"generated {len(ids)} cases under {args.out}")
    return 0


def cmd_split(args) -> int:
    from .dataset import list_case_ids, load_cases
    from .harness import split_extrapolation, split_interpolation

    if args.kind == "interpolation":
        ids = list_case_ids(args.dataset)
        split = split_interpolation(ids, _parse_fractions(args.fractions), args.seed)
    else:
        cases = load_cases(args.dataset)
        split = split_extrapolation(cases, args.seed)
    split.save(args.out)
    print(
        f"{args.kind} split: train {len(split.train)}, dev {len(split.dev)}, "
        f"test {len(split.test)} -> {args.out}"
    )
    return 0


def cmd_train(args) -> int:
    from .dataset import load_cases
    from .harness import SplitSpec, select_cases
    from .model import ModelConfig, TrainConfig, save_checkpoint, train

    split = SplitSpec.load(args.split)
    cases = load_cases(args.dataset, split.train + split.dev)
    train_cases = select_cases(cases, split.train)
    dev_cases = select_cases(cases, split.dev)
    config = ModelConfig(
        hidden_dim=args.hidden,
        num_layers=args.layers,
        activation=args.activation,
        mode=args.mode,
        target=args.target,
        seed=args.seed,
    )
    tc = TrainConfig(
        learning_rate=args.lr,
        max_epochs=args.max_epochs,
        patience=args.patience,
    )
    params, history = train(train_cases, dev_cases, config, tc)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    ckpt = out / f"ckpt_{args.target}_{args.mode}.bin"
    save_checkpoint(params, config, ckpt)
    with open(out / f"history_{args.target}_{args.mode}.json", "w") as fh:
        json.dump(history.to_dict(), fh, sort_keys=True)
        fh.write("\n")
    print(
        f"trained {args.mode}/{args.target}: best dev RMSE "
        f"{history.best_dev_rmse:.6f} at epoch {history.best_epoch} "
        f"({history.epochs_run} epochs) -> {ckpt}"
    )
    return 0


def cmd_evaluate(args) -> int:
    from .dataset import load_cases
    from .harness import SplitSpec, evaluate, select_cases
    from .model import load_checkpoint

    split = SplitSpec.load(args.split)
    params, _ = load_checkpoint(args.ckpt)
    cases = load_cases(args.dataset, split.test)
    test_cases = select_cases(cases, split.test)
    rep = evaluate(params, test_cases, args.sym)
    text = json.dumps(rep.to_dict(), sort_keys=True, indent=1)
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text + "\n")
    print(text)
    return 0


def cmd_report(args) -> int:
    from .harness import ExperimentConfig, run_experiment

    cfg = ExperimentConfig.load(args.experiment)
    payload = run_experiment(cfg)
    print(f"wrote {len(payload['rows'])} rows to {Path(cfg.out_dir) / 'report.json'}")
    return 0


def cmd_export_contours(args) -> int:
    from .harness import export_case_contours
    from .model import load_checkpoint

    params, _ = load_checkpoint(args.ckpt)
    export_case_contours(args.dataset, args.case, params, args.out)
    print(f"wrote {args.out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="windload", description=__doc__)
    sub = ap.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="generate the case dataset from basis meshes")
    g.add_argument("--basis", nargs=3, required=True, metavar=("FLAT", "GABLE", "HIP"))
    g.add_argument("--subdiv", type=int, default=10)
    g.add_argument("--angles", default="0:90:15")
    g.add_argument("--grid", type=int, default=128, help="cells per axis")
    g.add_argument("--out", required=True)
    g.add_argument("--k", type=int, default=8, help="graph nearest-neighbor count")
    g.add_argument("--smooth-iterations", type=int, default=10)
    g.add_argument("--smooth-lambda", type=float, default=0.5)
    g.add_argument("-v", "--verbose", action="store_true")
    g.set_defaults(fn=cmd_generate)

    s = sub.add_parser("split", help="write a train/dev/test split")
    s.add_argument("--kind", choices=("interpolation", "extrapolation"), required=True)
    s.add_argument("--dataset", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--fractions", default="0.70,0.15,0.15")
    s.set_defaults(fn=cmd_split)

    t = sub.add_parser("train", help="train one model on a split")
    t.add_argument("--dataset", required=True)
    t.add_argument("--split", required=True)
    t.add_argument("--target", choices=("cp_mean", "cp_std"), required=True)
    t.add_argument("--mode", choices=("baseline", "equivariant"), required=True)
    t.add_argument("--seed", type=int, default=0)
    t.add_argument("--out", required=True)
    t.add_argument("--hidden", type=int, default=128)
    t.add_argument("--layers", type=int, default=4)
    t.add_argument("--activation", choices=("relu", "tanh", "identity"), default="relu")
    t.add_argument("--lr", type=float, default=1e-3)
    t.add_argument("--max-epochs", type=int, default=200)
    t.add_argument("--patience", type=int, default=20)
    t.set_defaults(fn=cmd_train)

    e = sub.add_parser("evaluate", help="evaluate a checkpoint on a split's test set")
    e.add_argument("--ckpt", required=True)
    e.add_argument("--split", required=True)
    e.add_argument("--dataset", required=True)
    e.add_argument("--sym", action="store_true", help="extend the test set with mirrored copies")
    e.add_argument("--out")
    e.set_defaults(fn=cmd_evaluate)

    r = sub.add_parser("report", help="run a full experiment from a JSON config")
    r.add_argument("--experiment", required=True)
    r.set_defaults(fn=cmd_report)

    x = sub.add_parser("export-contours", help="write VTK surface scalars for one case")
    x.add_argument("--case", required=True)
    x.add_argument("--ckpt", required=True)
    x.add_argument("--dataset", required=True)
    x.add_argument("--out", required=True)
    x.set_defaults(fn=cmd_export_contours)

    return ap


def main(argv=None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    try:
        return args.fn(args)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return 2
    except NumericError as e:
        print(f"numeric failure: {e}", file=sys.stderr)
        return 4
    except (DataError, OSError) as e:
        print(f"data error: {e}", file=sys.stderr)
        return 3
    except WindloadError as e:
        print(f"error: {e}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
