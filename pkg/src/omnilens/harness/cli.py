"""Command-line entry point: ``omnilens <subcommand>``."""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from omnilens.errors import OmnilensError
from omnilens.harness import acceptance
from omnilens.harness.bench import bench_flops, default_grid, rows_to_csv
from omnilens.harness.config import MODALITIES, RunConfig, desk_config
from omnilens.harness.data import gen_synthetic, save_dataset
from omnilens.harness.train import (
    CHECKPOINT, Pipeline, build_teachers, embed_samples, evaluate, load_data, load_encoder, run_train,
)
from omnilens.numerics import tensor as T
from omnilens.tokenizers import io


def _global_flags(parser, suppress):
    default = argparse.SUPPRESS if suppress else None
    parser.add_argument("--config", default=default, help="run config JSON")
    parser.add_argument("--seed", type=int, default=default)
    parser.add_argument("--precision", choices=("f32", "f64"), default=default)
    parser.add_argument("--out", default=default, help="output directory")
    parser.add_argument("--data", default=default, help="dataset directory written by gen-data")
    parser.add_argument("--plot", action="store_true", default=argparse.SUPPRESS if suppress else False,
                        help="also write an SVG plot where the command has one")
    parser.add_argument("--modality", choices=MODALITIES, default=default,
                        help="desk-scale defaults for this modality when no --config is given")


def build_parser():
    parser = argparse.ArgumentParser(prog="omnilens", description=__doc__)
    _global_flags(parser, suppress=False)
    common = argparse.ArgumentParser(add_help=False)
    _global_flags(common, suppress=True)
    sub = parser.add_subparsers(dest="command", required=True)

    sub.add_parser("gen-data", parents=[common], help="generate and save the synthetic dataset")
    p = sub.add_parser("train", parents=[common], help="train a lens against frozen teachers")
    p.add_argument("--steps", type=int)
    p.add_argument("--resume", action="store_true", help="continue from the checkpoint in --out")
    for name, text in (
        ("eval-zeroshot", "zero-shot top-K accuracy"),
        ("eval-retrieval", "image retrieval recall@K"),
        ("eval-map", "mean average precision over classes"),
        ("probe", "few-shot linear probe accuracy"),
    ):
        p = sub.add_parser(name, parents=[common], help=text)
        p.add_argument("--checkpoint", help=f"defaults to <out>/{CHECKPOINT}")
        p.add_argument("--split", default="test")
        if name == "probe":
            p.add_argument("--shots", type=int)
    p = sub.add_parser("embed", parents=[common], help="embed samples or payload files with a checkpoint")
    p.add_argument("--checkpoint")
    p.add_argument("--split", default="test")
    p.add_argument("inputs", nargs="*", help="payload files (.olpc, .wav, raw f32 grid); default: a dataset split")
    p = sub.add_parser("gradcheck", parents=[common], help="finite-difference check of the micro pipelines")
    p.add_argument("--all", action="store_true", help="every modality instead of --modality")
    p = sub.add_parser("bench-flops", parents=[common], help="FLOP model and wall times as CSV")
    p.add_argument("--ms", default="32,196,2048", help="comma-separated input lengths")
    p.add_argument("--no-measure", action="store_true", help="analytic columns only")
    p = sub.add_parser("verify", parents=[common], help="run the acceptance checks")
    p.add_argument("--only", help="comma-separated subset, e.g. A1,A4")
    return parser


def resolve_config(args):
    if args.config:
        cfg = RunConfig.load(args.config)
    else:
        cfg = desk_config(args.modality or "points")
    if args.seed is not None:
        cfg.seed = args.seed
    if args.precision is not None:
        cfg.precision = args.precision
    if args.data is not None:
        cfg.paths["data"] = args.data
    return cfg


def out_dir(args, cfg):
    return Path(args.out) if args.out else Path("runs") / cfg.tokenizer.modality


def emit(record, path=None):
    line = json.dumps(record, sort_keys=True)
    print(line)
    if path is not None:
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "a") as fh:
            fh.write(line + "\n")


def plot_series(path, xs, series, xlabel, ylabel, log=False):
    import matplotlib

    matplotlib.use("svg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(5, 3.5))
    for label, ys in series.items():
        ax.plot(xs[label] if isinstance(xs, dict) else xs, ys, marker="o", ms=3, label=label)
    if log:
        ax.set_xscale("log")
        ax.set_yscale("log")
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, format="svg")
    plt.close(fig)


def cmd_gen_data(args, cfg):
    out = Path(args.data) if args.data else out_dir(args, cfg) / "data"
    ds = gen_synthetic(cfg)
    save_dataset(ds, out, cfg.tokenizer.sample_rate)
    counts = {s: len(ds.split(s)) for s in ("train", "val", "test")}
    emit({"event": "gen-data", "path": str(out), "classes": ds.class_names, **counts})
    return 0


def cmd_train(args, cfg):
    if args.steps is not None:
        cfg.train.steps = args.steps
    out = out_dir(args, cfg)
    result = run_train(cfg, out_dir=out, resume=args.resume)
    emit({"event": "trained", "path": str(out), **result.report})
    if args.plot:
        train = [r for r in result.records if r["event"] == "train"]
        plot_series(out / "loss.svg", [r["step"] for r in train], {"loss": [r["loss"] for r in train]}, "step", "loss")
    return 0


def _eval_context(args, cfg):
    T.set_precision(cfg.precision)
    ds = load_data(cfg)
    ckpt = Path(args.checkpoint) if args.checkpoint else out_dir(args, cfg) / CHECKPOINT
    encoder = load_encoder(cfg, ckpt)
    return ds, build_teachers(cfg, ds), encoder


_EVAL_KEYS = {
    "eval-zeroshot": "zero_shot_top",
    "eval-retrieval": "image_recall@",
    "eval-map": "map",
    "probe": "probe_acc",
}


def cmd_eval(args, cfg):
    if args.command == "probe" and args.shots is not None:
        cfg.eval.probe_shots = args.shots
    if args.command != "probe":
        cfg.eval.probe_shots = 0
    ds, teachers, encoder = _eval_context(args, cfg)
    report = evaluate(encoder, Pipeline(cfg), ds, teachers, cfg, args.split)
    prefix = _EVAL_KEYS[args.command]
    picked = {k: v for k, v in report.items() if k.startswith(prefix)}
    emit({"event": args.command, "split": args.split, **picked}, out_dir(args, cfg) / "eval.jsonl")
    return 0


def _read_payload(path, modality, sample_rate):
    path = Path(path)
    if modality == "points":
        return io.read_point_cloud(path)
    if modality == "audio":
        return io.read_wav(path, sample_rate)
    return io.read_grid(path)[0]


def cmd_embed(args, cfg):
    T.set_precision(cfg.precision)
    ckpt = Path(args.checkpoint) if args.checkpoint else out_dir(args, cfg) / CHECKPOINT
    encoder = load_encoder(cfg, ckpt)
    pipeline = Pipeline(cfg)
    if args.inputs:
        payloads = [_read_payload(p, cfg.tokenizer.modality, cfg.tokenizer.sample_rate) for p in args.inputs]
        with T.no_grad():
            emb = encoder.embed(pipeline.raw_inputs(payloads)).data
        ids = list(args.inputs)
    else:
        samples = load_data(cfg).split(args.split)
        emb = embed_samples(encoder, pipeline, samples)
        ids = [s.id for s in samples]
    path = out_dir(args, cfg) / "embeddings.jsonl"
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as fh:
        for sample_id, row in zip(ids, np.asarray(emb, dtype=np.float64)):
            fh.write(json.dumps({"id": sample_id, "embedding": [float(x) for x in row]}) + "\n")
    emit({"event": "embed", "count": len(ids), "path": str(path)})
    return 0


def cmd_gradcheck(args, cfg):
    modalities = MODALITIES if args.all else (args.modality or cfg.tokenizer.modality,)
    worst = 0.0
    for m in modalities:
        err, n = acceptance.gradcheck_modality(m, seed=cfg.seed)
        worst = max(worst, err)
        emit({"event": "gradcheck", "modality": m, "params": n, "max_rel_err": err, "pass": err < 1e-4})
    return 0 if worst < 1e-4 else 1


def cmd_bench(args, cfg):
    ms = [int(x) for x in args.ms.split(",")]
    T.set_precision(cfg.precision)
    bb = cfg.backbone
    grid = default_grid(bb.d, bb.heads, cfg.lens.n_latents if cfg.lens else 16)
    rows = bench_flops(ms, grid, bb, measure=not args.no_measure, seed=cfg.seed)
    text = rows_to_csv(rows)
    out = out_dir(args, cfg)
    out.mkdir(parents=True, exist_ok=True)
    (out / "bench_flops.csv").write_text(text)
    sys.stdout.write(text)
    if args.plot:
        variants = sorted({r.variant for r in rows})
        xs = {v: [r.m for r in rows if r.variant == v] for v in variants}
        ys = {v: [r.lens_flops + r.trunk_flops for r in rows if r.variant == v] for v in variants}
        plot_series(out / "bench_flops.svg", xs, ys, "input tokens m", "lens + trunk FLOPs", log=True)
    return 0


def cmd_verify(args, cfg):
    selected = set(args.only.split(",")) if args.only else None
    results = acceptance.run_all(selected)
    failed = [r.name for r in results if not r.ok]
    print(f"{len(results) - len(failed)}/{len(results)} acceptance checks passed")
    return 1 if failed else 0


COMMANDS = {
    "gen-data": cmd_gen_data,
    "train": cmd_train,
    "eval-zeroshot": cmd_eval,
    "eval-retrieval": cmd_eval,
    "eval-map": cmd_eval,
    "probe": cmd_eval,
    "embed": cmd_embed,
    "gradcheck": cmd_gradcheck,
    "bench-flops": cmd_bench,
    "verify": cmd_verify,
}


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        cfg = resolve_config(args)
        cfg.validate()
        return COMMANDS[args.command](args, cfg)
    except (OmnilensError, OSError, json.JSONDecodeError) as exc:
        print(f"omnilens: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
