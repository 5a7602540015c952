"""Command-line entry point: synth, train, generate, eval, inspect.

Config precedence is CLI flag > config file (--config) > built-in default;
the resolved configuration is printed at the start of every run. Exit codes:
0 success, 1 runtime failure, 2 usage error.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import metrics as mt
from . import report
from .config import RunConfig, config_to_dict, format_config, resolve_config
from .features import FeatureError
from .formats import (
    FANIM_MAGIC,
    FAUD_MAGIC,
    FCKP_MAGIC,
    FormatError,
    read_fanim,
    read_faud,
    read_fckp,
)
from .geom import validate_sequence
from .model import init_model, load_model, save_model
from .rollout import export_animation, generate as run_generate
from .synthdata import make_dataset
from .training import SequenceData, prepare_sequence, train

ENV_SEED = "FACEPOLICY_SEED"


def _seed_override(args) -> int | None:
    """CLI flag beats config file; the environment variable is the fallback
    applied only when neither names a seed."""
    if getattr(args, "seed", None) is not None:
        return args.seed
    return None


def _resolve(args, overrides: dict) -> RunConfig:
    cfg = resolve_config(getattr(args, "config", None), overrides)
    if _seed_override(args) is None and "seed" not in _file_config_keys(args):
        env = os.environ.get(ENV_SEED)
        if env is not None:
            cfg = dataclasses.replace(cfg, seed=int(env))
    print("resolved config:")
    print(format_config(cfg))
    return cfg


def _file_config_keys(args) -> set:
    path = getattr(args, "config", None)
    if not path:
        return set()
    with open(path) as fh:
        return set(json.load(fh))


def cmd_synth(args) -> int:
    overrides = {
        "seed": args.seed,
        "synth.count": args.count,
        "synth.vertices": args.vertices,
        "synth.frames": args.frames,
        "synth.fps": args.fps,
        "synth.sample_rate": args.sample_rate,
    }
    cfg = _resolve(args, overrides)
    manifest = make_dataset(cfg.seed, cfg.synth.count, args.out,
                            v=cfg.synth.vertices, n=cfg.synth.frames,
                            fps=cfg.synth.fps, sample_rate=cfg.synth.sample_rate)
    print(f"wrote {len(manifest['entries'])} sequence pairs to {args.out}")
    return 0


def _load_training_data(data_dir: Path, bank_cfg) -> list[SequenceData]:
    manifest_path = data_dir / "manifest.json"
    if manifest_path.exists():
        with open(manifest_path) as fh:
            manifest = json.load(fh)
        names = [e["name"] for e in manifest["entries"] if e["split"] == "train"]
    else:
        names = sorted(p.stem for p in data_dir.glob("*.fanim"))
    if not names:
        raise FileNotFoundError(f"no training sequences under {data_dir}")
    dataset = []
    for name in names:
        seq = read_fanim(data_dir / f"{name}.fanim")
        track = read_faud(data_dir / f"{name}.faud")
        dataset.append(prepare_sequence(name, seq, track, bank_cfg))
    return dataset


def cmd_train(args) -> int:
    overrides = {
        "seed": args.seed,
        "train.epochs": args.epochs,
        "train.batch_size": args.batch_size,
        "train.learning_rate": args.lr,
        "diffusion.prediction_mode": args.mode,
    }
    cfg = _resolve(args, overrides)
    data_dir = Path(args.data)
    dataset = _load_training_data(data_dir, cfg.bank)
    v = dataset[0].vertices.num_vertices
    fps = dataset[0].vertices.fps
    for d in dataset[1:]:
        if d.vertices.num_vertices != v:
            raise FormatError(f"sequence {d.name} has {d.vertices.num_vertices} "
                              f"vertices, expected {v}")
    rng = np.random.default_rng(cfg.seed)
    model = init_model(cfg, v, fps, rng)

    log_path = Path(args.log) if args.log else Path(str(args.out) + ".log.jsonl")
    losses: list[float] = []
    with open(log_path, "w") as log_fh:
        def log(record):
            losses.append(record["loss"])
            log_fh.write(json.dumps(record) + "\n")

        summaries = train(dataset, model, cfg.seed, log=log,
                          max_steps=args.max_steps)
    save_model(args.out, model)
    fig_path = Path(str(args.out) + ".loss.png")
    report.plot_loss_curve(losses, fig_path)
    first = summaries[0].mean_loss if summaries else float("nan")
    last = summaries[-1].mean_loss if summaries else float("nan")
    print(f"trained {len(summaries)} epochs over {len(dataset)} sequences "
          f"({sum(s.steps for s in summaries)} steps)")
    print(f"epoch loss: first {first:.3e}, last {last:.3e}")
    print(f"checkpoint: {args.out}")
    print(f"log: {log_path}")
    print(f"figure: {fig_path}")
    return 0


def cmd_generate(args) -> int:
    model = load_model(args.checkpoint)
    if args.ddim_steps is not None:
        model.cfg = dataclasses.replace(
            model.cfg,
            diffusion=dataclasses.replace(model.cfg.diffusion,
                                          ddim_steps=args.ddim_steps),
        )
    print("resolved config:")
    print(format_config(model.cfg))
    template_seq = read_fanim(args.template)
    track = read_faud(args.audio)
    fps = template_seq.fps
    n_frames = args.frames
    if n_frames is None:
        n_frames = int(np.floor(track.num_samples * fps / track.sample_rate))
    seed = args.seed if args.seed is not None else int(os.environ.get(ENV_SEED, 0))
    reference = read_fanim(args.reference) if args.reference else None
    seq = run_generate(template_seq.template, template_seq.frames[0], track,
                       model, n_frames, fps, seed,
                       teacher_forced=args.teacher_forced, reference=reference)
    export_animation(seq, args.out)
    print(f"generated {n_frames} frames -> {args.out}")
    return 0


def _write_csv(result: mt.EvalResult, path: Path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["sequence", "mve_mm", "fdd_mm", "mve_scaled_1e3", "fdd_scaled_1e5"])
        for r in result.rows:
            writer.writerow([r.name, repr(r.mve_mm), repr(r.fdd_mm),
                             repr(r.mve_mm * 1e3), repr(r.fdd_mm * 1e5)])
        writer.writerow(["mean", repr(result.mean_mve), repr(result.mean_fdd),
                         repr(result.mean_mve * 1e3), repr(result.mean_fdd * 1e5)])


def cmd_eval(args) -> int:
    cfg = _resolve(args, {})
    mask = None
    if args.mask:
        with open(args.mask) as fh:
            indices = json.load(fh)
        mask = mt.RegionMask(np.asarray(indices, dtype=np.int64), name=Path(args.mask).name)
    result = mt.evaluate(args.pred, args.gt, mask,
                         vertical_axis=cfg.metrics.vertical_axis)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    with open(out, "w") as fh:
        json.dump(result.as_dict(), fh, indent=2, sort_keys=True)
    csv_path = out.with_suffix(".csv")
    _write_csv(result, csv_path)
    print(mt.format_table(result))
    print(f"table: {out}")
    print(f"csv: {csv_path}")
    if not args.no_figures:
        fig_dir = out.parent / (out.stem + "_figures")
        report.plot_metric_bars(result, fig_dir)
        curves = {}
        for r in result.rows:
            pred = read_fanim(Path(args.pred) / r.name)
            gt = read_fanim(Path(args.gt) / r.name)
            curves[r.name] = mt.frame_error_curve(pred, gt)
        report.plot_error_curves(curves, fig_dir)
        print(f"figures: {fig_dir}")
    if result.unpaired:
        print(f"error: {len(result.unpaired)} unpaired file(s) excluded", file=sys.stderr)
        return 1
    return 0


def cmd_inspect(args) -> int:
    path = Path(args.file)
    with open(path, "rb") as fh:
        magic = fh.read(4)
    if magic == FANIM_MAGIC:
        seq = read_fanim(path)
        rep = validate_sequence(seq)
        print(f"FANIM  {path}")
        print(f"  vertices: {seq.num_vertices}  frames: {seq.num_frames}  fps: {seq.fps:g}")
        print(f"  frame values: min {seq.frames.min():.6g}  max {seq.frames.max():.6g}  "
              f"mean {seq.frames.mean():.6g}")
        t = seq.template.vertices
        print(f"  template: min {t.min():.6g}  max {t.max():.6g}")
        print(f"  validation: {'pass' if rep.ok else 'FAIL: ' + '; '.join(rep.failures)}")
    elif magic == FAUD_MAGIC:
        track = read_faud(path)
        dur = track.num_samples / track.sample_rate
        print(f"FAUD   {path}")
        print(f"  sample_rate: {track.sample_rate}  samples: {track.num_samples}  "
              f"duration: {dur:.3f}s")
        print(f"  values: min {track.samples.min():.6g}  max {track.samples.max():.6g}")
    elif magic == FCKP_MAGIC:
        config, blocks = read_fckp(path)
        total = sum(b.size for b in blocks.values())
        print(f"FCKP   {path}")
        print(f"  parameters: {len(blocks)} blocks, {total} elements")
        for name in sorted(blocks):
            print(f"    {name}: {blocks[name].size}")
        print("  config echo:")
        print("    " + json.dumps(config, sort_keys=True))
    else:
        raise FormatError(f"unrecognized magic {magic!r} in {path}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="facepolicy",
        description="Speech-conditioned facial motion prediction via diffusion policy.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic dataset")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--config", help="JSON config file")
    p.add_argument("--seed", type=int)
    p.add_argument("--count", type=int)
    p.add_argument("--vertices", type=int)
    p.add_argument("--frames", type=int)
    p.add_argument("--fps", type=float)
    p.add_argument("--sample-rate", type=int, dest="sample_rate")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("train", help="train a policy on FANIM/FAUD pairs")
    p.add_argument("--data", required=True, help="dataset directory")
    p.add_argument("--out", required=True, help="checkpoint output path (.fckp)")
    p.add_argument("--config", help="JSON config file")
    p.add_argument("--seed", type=int)
    p.add_argument("--epochs", type=int)
    p.add_argument("--batch-size", type=int, dest="batch_size")
    p.add_argument("--lr", type=float)
    p.add_argument("--mode", choices=["sample", "epsilon"])
    p.add_argument("--max-steps", type=int, dest="max_steps")
    p.add_argument("--log", help="training log path (JSON lines)")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("generate", help="generate animation from audio")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--audio", required=True, help="FAUD input")
    p.add_argument("--template", required=True,
                   help="FANIM supplying the template and first-frame anchor")
    p.add_argument("--out", required=True, help="FANIM output")
    p.add_argument("--seed", type=int)
    p.add_argument("--frames", type=int)
    p.add_argument("--ddim-steps", type=int, dest="ddim_steps")
    p.add_argument("--teacher-forced", action="store_true", dest="teacher_forced")
    p.add_argument("--reference", help="FANIM observed under --teacher-forced")
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("eval", help="score prediction dir against ground truth dir")
    p.add_argument("--pred", required=True)
    p.add_argument("--gt", required=True)
    p.add_argument("--mask", help="JSON file with masked vertex indices")
    p.add_argument("--out", required=True, help="metric table JSON path")
    p.add_argument("--config", help="JSON config file")
    p.add_argument("--no-figures", action="store_true", dest="no_figures")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("inspect", help="print header and stats of a container file")
    p.add_argument("file")
    p.set_defaults(func=cmd_inspect)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (FormatError, FeatureError, ValueError, OSError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
