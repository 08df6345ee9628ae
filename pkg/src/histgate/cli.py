"""Command line interface.

Subcommands cover the whole pipeline: synthesize datasets, translate source
images toward a target style, gate the translations, train/apply a segmenter,
score predictions, and run the full experiment matrix.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import replace
from pathlib import Path

from . import __version__
from .curation import CurationConfig, gate
from .imagecore import load_split, read_manifest, save_mask, save_split, write_manifest
from .harness import ExperimentConfig, run_matrix
from .metrics import IOU_EMPTY_NOTE, ConfusionCounts, confusion, iou, segmentation_accuracy
from .segmodel import SegTrainConfig, SegmenterModel, predict, train_segmenter
from .synthgen import SOURCE_STYLE, TARGET_STYLES, LayoutSpec, generate_domain_pair
from .translate import (
    TranslationConfig,
    TranslatorModel,
    apply_translator,
    fda_translate,
    hist_match,
    train_translator,
)


def cmd_synth(args) -> int:
    if args.preset not in TARGET_STYLES:
        print(f"unknown preset {args.preset!r}; choose from {sorted(TARGET_STYLES)}", file=sys.stderr)
        return 2
    spec = LayoutSpec(image_size=args.size, line_width_range=_widths(args.size), density=args.density, seed=args.seed)
    generate_domain_pair(
        SOURCE_STYLE,
        TARGET_STYLES[args.preset],
        n_train=args.n_train,
        n_test=args.n_test,
        spec=spec,
        out_dir=args.out,
    )
    print(f"wrote {args.n_train}+{args.n_test} images per domain under {args.out}")
    return 0


def _widths(size: int) -> tuple[int, int]:
    if size >= 96:
        return (3, 7)
    if size >= 48:
        return (2, 5)
    return (2, 4)


def cmd_translate(args) -> int:
    source = load_split(args.source)
    target = load_split(args.target)
    out = Path(args.out)

    if args.backend == "cyclegan":
        cfg = TranslationConfig(
            backend="cyclegan",
            epochs=args.epochs,
            lambda_cyc=args.lambda_cyc,
            seed=args.seed,
        )
        if args.checkpoint and Path(args.checkpoint).exists():
            model = TranslatorModel.load(args.checkpoint)
            print(f"loaded translator checkpoint {args.checkpoint}")
        else:
            model = train_translator(source, target, cfg, verbose=True)
            if args.checkpoint:
                model.save(args.checkpoint)
                print(f"saved translator checkpoint {args.checkpoint}")
        translated = apply_translator(source, model)
    elif args.backend == "hist-match":
        from .imagecore import compute_histogram, mean_histogram

        profile = mean_histogram([compute_histogram(im) for im in target.images])
        translated = source.with_images([hist_match(im, profile) for im in source.images])
    elif args.backend == "fda":
        import numpy as np

        rng = np.random.default_rng(args.seed)
        targets = target.images
        translated = source.with_images(
            [fda_translate(im, targets[int(rng.integers(len(targets)))], args.beta) for im in source.images]
        )
    else:
        print(f"unknown backend {args.backend!r}", file=sys.stderr)
        return 2

    manifest = save_split(translated, out)
    print(f"translated {len(translated)} images -> {manifest}")
    return 0


def cmd_gate(args) -> int:
    transformed = load_split(args.transformed)
    target = load_split(args.target)
    cfg = CurationConfig(keep_percent=args.keep_percent)
    selected, report = gate(transformed, target, cfg)

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    # selected manifest points at the existing transformed files
    role, items = read_manifest(args.transformed)
    by_id = {item["id"]: item for item in items}
    selected_items = []
    for item_id in selected.ids:
        item = by_id[item_id]
        selected_items.append(
            {
                "id": item_id,
                "image": os.path.relpath(item["image"], out),
                "mask": None if item["mask"] is None else os.path.relpath(item["mask"], out),
            }
        )
    manifest = write_manifest(out / "selected_manifest.json", role, selected_items)
    report.to_json(out / "curation_report.json")
    report.to_csv(out / "curation_report.csv")
    print(f"kept {len(selected)}/{len(transformed)} images (top {args.keep_percent}%) -> {manifest}")
    return 0


def cmd_train_seg(args) -> int:
    split = load_split(args.data)
    cfg = SegTrainConfig(
        epochs=args.epochs,
        batch_size=args.batch_size,
        learning_rate=args.lr,
        threshold=args.threshold,
        seed=args.seed,
    )
    model = train_segmenter(split, cfg, verbose=True)
    model.save(args.out)
    last = model.training_log[-1]
    print(f"trained {args.epochs} epochs (final loss {last['loss']:.4f}) -> {args.out}")
    return 0


def cmd_predict(args) -> int:
    split = load_split(args.data)
    model = SegmenterModel.load(args.model)
    masks = predict(split, model, threshold=args.threshold)
    out = Path(args.out)
    for item_id, mask in zip(split.ids, masks):
        save_mask(mask, out / f"{item_id}.png")
    print(f"wrote {len(masks)} predicted masks under {out}")
    return 0


def cmd_eval(args) -> int:
    from .imagecore import load_mask

    truth = load_split(args.truth)
    if truth.masks is None:
        print(f"truth manifest {args.truth} has no masks", file=sys.stderr)
        return 2
    pred_dir = Path(args.pred)
    counts = ConfusionCounts(0, 0, 0, 0)
    for item_id, truth_mask in zip(truth.ids, truth.masks):
        pred_mask = load_mask(pred_dir / f"{item_id}.png")
        counts = counts + confusion(pred_mask, truth_mask)
    payload = {
        "scenario": args.scenario,
        "dataset": args.dataset,
        "seed": args.seed,
        "sa": segmentation_accuracy(counts),
        "iou": iou(counts),
        "counts": {"tp": counts.tp, "fp": counts.fp, "tn": counts.tn, "fn": counts.fn},
        "averaging": "micro (counts accumulated over the whole split)",
        "iou_convention": IOU_EMPTY_NOTE,
    }
    Path(args.out).parent.mkdir(parents=True, exist_ok=True)
    Path(args.out).write_text(json.dumps(payload, indent=2))
    print(f"SA {payload['sa']:.4f}  IoU {payload['iou']:.4f} -> {args.out}")
    return 0


def cmd_run_experiment(args) -> int:
    cfg = ExperimentConfig.from_json(args.config)
    if args.out_dir:
        cfg = replace(cfg, out_dir=args.out_dir)
    report = run_matrix(cfg, resume=args.resume, jobs=args.jobs)
    print(f"report written under {cfg.out_dir} ({len(report.results)} runs, {len(report.failures)} failures)")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="histgate", description=__doc__)
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic source/target domain pair")
    p.add_argument("--out", required=True)
    p.add_argument("--preset", default="shifted-dark-lowcontrast", help=f"target style: {sorted(TARGET_STYLES)}")
    p.add_argument("--n-train", type=int, default=200)
    p.add_argument("--n-test", type=int, default=50)
    p.add_argument("--size", type=int, default=64)
    p.add_argument("--seed", type=int, default=7)
    p.add_argument("--density", type=float, default=0.30)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("translate", help="translate source images toward the target style")
    p.add_argument("--backend", choices=["cyclegan", "hist-match", "fda"], required=True)
    p.add_argument("--source", required=True, help="source manifest")
    p.add_argument("--target", required=True, help="target manifest")
    p.add_argument("--out", required=True)
    p.add_argument("--epochs", type=int, default=10)
    p.add_argument("--lambda-cyc", type=float, default=10.0)
    p.add_argument("--beta", type=float, default=0.05)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--checkpoint", default=None)
    p.set_defaults(func=cmd_translate)

    p = sub.add_parser("gate", help="keep the top N%% of translated images by histogram similarity")
    p.add_argument("--transformed", required=True, help="transformed manifest")
    p.add_argument("--target", required=True, help="target manifest")
    p.add_argument("--keep-percent", type=float, default=70.0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_gate)

    p = sub.add_parser("train-seg", help="train the segmentation network")
    p.add_argument("--data", required=True, help="training manifest (with masks)")
    p.add_argument("--out", required=True, help="checkpoint path")
    p.add_argument("--epochs", type=int, default=25)
    p.add_argument("--batch-size", type=int, default=8)
    p.add_argument("--lr", type=float, default=1e-3)
    p.add_argument("--threshold", type=float, default=0.5)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_train_seg)

    p = sub.add_parser("predict", help="annotate images with a trained segmenter")
    p.add_argument("--data", required=True)
    p.add_argument("--model", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--threshold", type=float, default=None)
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("eval", help="score predicted masks against ground truth")
    p.add_argument("--pred", required=True, help="directory of predicted masks (<id>.png)")
    p.add_argument("--truth", required=True, help="manifest with ground-truth masks")
    p.add_argument("--out", required=True, help="results JSON path")
    p.add_argument("--scenario", default="")
    p.add_argument("--dataset", default="")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("run-experiment", help="run the scenario matrix from a config file")
    p.add_argument("--config", required=True, help="experiment JSON")
    p.add_argument("--resume", action="store_true")
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--out-dir", default=None, help="override the config's out_dir")
    p.set_defaults(func=cmd_run_experiment)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    raise SystemExit(main())
