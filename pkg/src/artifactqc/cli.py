"""Command-line pipeline: simulate -> train-encoder -> train-flow -> score.

Every command is deterministic given the config and seeds.  Unknown
``--section.key value`` pairs override config entries, so one JSON file
plus a few flags fully describes a run.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
from pathlib import Path

import numpy as np

from .config import RunConfig, apply_override, load_config
from .diffnet import ParamStore
from .encoder import train_encoder
from .errors import ArtifactQCError
from .flow import load_flow, save_flow, train_flow, log_density
from .phantom import generate_dataset, load_manifest
from .qc import calibrate_threshold, classify, contingency, emit_report, volume_embedding
from .selftest import run_selftest
from .volio import load_volume


def _load_volumes(data_dir: str) -> list[tuple[str, object]]:
    paths = sorted(Path(data_dir).glob("*.mqcv"))
    if not paths:
        raise FileNotFoundError(f"no .mqcv volumes under {data_dir!r}")
    return [(p.stem, load_volume(p)) for p in paths]


def _write_loss_csv(path: Path, losses: list[float]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["step", "loss"])
        for step, loss in enumerate(losses):
            writer.writerow([step, format(loss, ".12g")])


def _write_embeddings_csv(path: Path, rows: list[tuple[str, np.ndarray]]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["volume_id", "m1", "m2"])
        for volume_id, emb in rows:
            writer.writerow([volume_id, format(emb[0], ".17g"), format(emb[1], ".17g")])


def _read_embeddings_csv(path: Path) -> list[tuple[str, np.ndarray]]:
    rows = []
    with open(path, "r", newline="", encoding="utf-8") as fh:
        for row in csv.DictReader(fh):
            rows.append(
                (row["volume_id"], np.array([float(row["m1"]), float(row["m2"])]))
            )
    return rows


def cmd_simulate(
    config: RunConfig,
    data_dir: str | None = None,
    count: int | None = None,
    corrupt_fraction: float | None = None,
    seed: int | None = None,
) -> Path:
    """Generate a labelled phantom dataset; returns the manifest path."""
    target = Path(data_dir or config.paths.train_dir)
    shape = (config.image_size[0], config.image_size[1], config.simulate.depth)
    entries = generate_dataset(
        out_dir=target,
        count=count if count is not None else config.simulate.count,
        corrupt_fraction=(
            corrupt_fraction
            if corrupt_fraction is not None
            else config.simulate.corrupt_fraction
        ),
        seed=seed if seed is not None else config.simulate.seed,
        shape=shape,
    )
    n_bad = sum(1 for e in entries if e.label != "low")
    print(f"simulate: wrote {len(entries)} volumes ({n_bad} corrupted) to {target}")
    return target / "manifest.json"


def cmd_train_encoder(config: RunConfig) -> Path:
    """Train the artifact encoder on the train split; returns the checkpoint path."""
    out_dir = Path(config.paths.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    volumes = [v for _, v in _load_volumes(config.paths.train_dir)]
    params, losses = train_encoder(
        volumes,
        config.encoder,
        steps=config.encoder_train.steps,
        lr=config.encoder_train.lr,
        seed=config.encoder_train.seed,
    )
    checkpoint = out_dir / "encoder.mqcp"
    params.save(checkpoint)
    _write_loss_csv(out_dir / "encoder_loss.csv", losses)
    print(
        f"train-encoder: {config.encoder_train.steps} steps, "
        f"final loss {losses[-1]:.4f}, checkpoint {checkpoint}"
    )
    return checkpoint


def cmd_train_flow(config: RunConfig) -> Path:
    """Embed every training volume, fit the flow, store reference embeddings."""
    out_dir = Path(config.paths.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    encoder_params = ParamStore.load(out_dir / "encoder.mqcp")
    named = _load_volumes(config.paths.train_dir)
    rows = [
        (vid, volume_embedding(vol, encoder_params, config.encoder, config.slice_count))
        for vid, vol in named
    ]
    _write_embeddings_csv(out_dir / "reference_embeddings.csv", rows)
    embeddings = np.stack([emb for _, emb in rows])
    model, losses = train_flow(
        embeddings,
        steps=config.flow_train.steps,
        lr=config.flow_train.lr,
        batch_size=min(config.flow_train.batch_size, embeddings.shape[0]),
        seed=config.flow_train.seed,
    )
    checkpoint = out_dir / "flow.mqcp"
    save_flow(model, checkpoint, out_dir / "flow.json")
    _write_loss_csv(out_dir / "flow_loss.csv", losses)
    print(
        f"train-flow: {config.flow_train.steps} steps over {len(rows)} volumes, "
        f"final nll {losses[-1]:.4f}, checkpoint {checkpoint}"
    )
    return checkpoint


def cmd_score(config: RunConfig, eval_dir: str | None = None) -> dict:
    """Calibrate on the reference embeddings, score the evaluation split."""
    out_dir = Path(config.paths.out_dir)
    model = load_flow(out_dir / "flow.mqcp", out_dir / "flow.json")
    reference = _read_embeddings_csv(out_dir / "reference_embeddings.csv")
    ref_log_densities = [float(log_density(model, emb)) for _, emb in reference]
    calibration = calibrate_threshold(ref_log_densities, config.tau)

    data_dir = eval_dir or config.paths.eval_dir
    encoder_params = ParamStore.load(out_dir / "encoder.mqcp")
    named = _load_volumes(data_dir)
    items = [
        (vid, volume_embedding(vol, encoder_params, config.encoder, config.slice_count))
        for vid, vol in named
    ]
    labels = load_manifest(data_dir) or None
    records = classify(items, model, calibration, labels=labels)
    paths = emit_report(records, calibration, model, out_dir)

    n_fail = sum(1 for r in records if r.verdict == "fail")
    summary = {
        "scored": len(records),
        "failed": n_fail,
        "tau": config.tau,
        "cutoff_log_density": calibration.log_density_cutoff,
    }
    if labels:
        metrics = contingency(records)
        summary["sensitivity"] = metrics.sensitivity
        summary["specificity"] = metrics.specificity
    print(
        f"score: {summary['scored']} volumes, {n_fail} flagged at tau={config.tau}; "
        f"reports in {paths['records']}, {paths['metrics']}, {paths['scatter']}"
    )
    if "sensitivity" in summary:
        print(
            f"score: sensitivity={summary['sensitivity']}, "
            f"specificity={summary['specificity']}"
        )
    return summary


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="artifactqc",
        description="Unsupervised volume quality control on phantom datasets.",
    )
    parser.add_argument("--config", help="JSON config file")
    parser.add_argument("--seed", type=int, help="master seed deriving all stage seeds")
    parser.add_argument("--out", help="output directory override")
    sub = parser.add_subparsers(dest="command", required=True)

    p_sim = sub.add_parser("simulate", help="generate a labelled phantom dataset")
    p_sim.add_argument("--data-dir", help="dataset directory (default: train split)")
    p_sim.add_argument("--count", type=int)
    p_sim.add_argument("--corrupt-fraction", type=float)
    p_sim.add_argument("--sim-seed", type=int, help="dataset seed override")

    sub.add_parser("train-encoder", help="contrastive training of the artifact encoder")
    sub.add_parser("train-flow", help="fit the density model on training embeddings")
    p_score = sub.add_parser("score", help="calibrate and score the evaluation split")
    p_score.add_argument("--eval-dir", help="volumes to score (default: eval split)")
    sub.add_parser("selftest", help="run built-in numerical checks")
    return parser


def _apply_extra_overrides(config: RunConfig, extras: list[str]) -> None:
    if len(extras) % 2 != 0:
        raise ValueError(f"dangling override (expected '--key value' pairs): {extras}")
    for key, value in zip(extras[::2], extras[1::2]):
        if not key.startswith("--"):
            raise ValueError(f"override keys must start with '--': {key!r}")
        apply_override(config, key[2:], value)


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args, extras = parser.parse_known_args(argv)
    try:
        if args.command == "selftest":
            return 0 if run_selftest() else 1
        config = load_config(args.config)
        _apply_extra_overrides(config, extras)
        if args.out:
            config.paths.out_dir = args.out
        if args.seed is not None:
            config.reseed(args.seed)
        if args.command == "simulate":
            cmd_simulate(
                config,
                data_dir=args.data_dir,
                count=args.count,
                corrupt_fraction=args.corrupt_fraction,
                seed=args.sim_seed,
            )
        elif args.command == "train-encoder":
            cmd_train_encoder(config)
        elif args.command == "train-flow":
            cmd_train_flow(config)
        elif args.command == "score":
            cmd_score(config, eval_dir=args.eval_dir)
        else:  # pragma: no cover - argparse enforces the choices
            parser.error(f"unknown command {args.command!r}")
        return 0
    except (ArtifactQCError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    raise SystemExit(main())
