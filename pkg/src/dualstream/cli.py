"""Command-line harness: one subcommand per pipeline stage.

Exit codes: 0 success, 1 usage or configuration error, 2 data error,
3 numeric failure (non-finite values or a failed gradient check).
"""
from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import sys
from pathlib import Path
from typing import Optional

import numpy as np

from .config import RunConfig, synthetic_preset
from .errors import ConfigError, DataError, NumericError
from .sample import ImageSample

log = logging.getLogger("dualstream")

STAGE_DIRS = {"preprocess": "preprocessed", "augment": "augmented"}


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # usage errors exit with 1, not argparse's 2
        self.print_usage(sys.stderr)
        raise ConfigError(message)


class Run:
    """Resolved configuration plus the provenance stamped on every artifact."""

    def __init__(self, cfg: RunConfig):
        cfg.validate()
        self.cfg = cfg
        self.hash = cfg.config_hash()
        self.out = Path(cfg.output_dir)

    @property
    def stamp(self) -> dict:
        return {"config_hash": self.hash, "seed": self.cfg.seed}

    @property
    def comment(self) -> str:
        return f"config_hash={self.hash} seed={self.cfg.seed}"

    @property
    def png_text(self) -> dict[str, str]:
        return {"config_hash": self.hash, "seed": str(self.cfg.seed)}

    def write_json(self, path: Path, doc: dict) -> None:
        path.parent.mkdir(parents=True, exist_ok=True)
        full = dict(self.stamp)
        full.update(doc)
        path.write_text(json.dumps(full, indent=2, sort_keys=True) + "\n")


# -- helpers ---------------------------------------------------------------------


def _class_names_from(doc: dict) -> tuple[str, ...]:
    from .data import CLASS_NAMES

    return tuple(doc.get("class_names") or CLASS_NAMES)


def _load_stage(run: Run, manifest: Optional[str], with_pixels: bool):
    """Corpus from an explicit manifest, else the latest stage present, else the raw dataset."""
    from .data import LabeledCorpus, load_corpus
    from .imageproc.io import load_manifest_samples, read_manifest

    candidates = [Path(manifest)] if manifest else [run.out / d / "manifest.json" for d in ("augmented", "preprocessed")]
    for path in candidates:
        if path.exists() or manifest:
            doc = read_manifest(path)
            samples = load_manifest_samples(path, with_pixels)
            return LabeledCorpus.from_samples(samples, _class_names_from(doc)), path
    return load_corpus(run.cfg.dataset_root), Path(run.cfg.dataset_root)


def _image_name(sample_id: str) -> str:
    """'Glioma/a.jpg#aug2' -> 'Glioma/a_aug2.png'."""
    base, _, suffix = sample_id.partition("#")
    stem = Path(base)
    if stem.suffix.lower() in (".png", ".jpg", ".jpeg"):
        stem = stem.with_suffix("")
    return stem.as_posix() + (f"_{suffix}" if suffix else "") + ".png"


def _write_stage(run: Run, stage: str, corpus_names, samples: list[ImageSample], extra: dict) -> Path:
    from .imageproc.io import write_manifest, write_png

    out_dir = run.out / STAGE_DIRS[stage]
    seen: dict[str, str] = {}
    for s in samples:
        rel = _image_name(s.id)
        if rel in seen:
            raise DataError(f"samples {seen[rel]!r} and {s.id!r} map to the same file {rel}")
        seen[rel] = s.id
        write_png(out_dir / rel, s.pixels, run.png_text)
        s.path = rel
    doc = dict(run.stamp)
    doc.update(extra)
    doc["class_names"] = list(corpus_names)
    write_manifest(out_dir / "manifest.json", samples, doc)
    return out_dir / "manifest.json"


def _normalized(x: np.ndarray, stats) -> np.ndarray:
    from .imageproc.transforms import normalize

    return normalize(x, stats)[:, None]


def _load_model(run: Run, checkpoint: Optional[str]):
    from .imageproc.transforms import NormalizationStats
    from .model.checkpoint import load_checkpoint

    path = Path(checkpoint) if checkpoint else run.out / "model.ckpt"
    if not path.exists():
        raise DataError(f"{path}: checkpoint not found (run `train` first)")
    model, header = load_checkpoint(path)
    stats = header.get("extra", {}).get("normalization")
    if stats is None:
        raise DataError(f"{path}: checkpoint carries no normalization statistics")
    return model, NormalizationStats.from_dict(stats), path


def _split(run: Run, path: Optional[str]):
    from .data import DatasetSplit

    return DatasetSplit.load(Path(path) if path else run.out / "split.json")


# -- subcommands -----------------------------------------------------------------


def cmd_init_config(args) -> int:
    cfg = synthetic_preset() if args.preset == "synthetic" else RunConfig()
    if args.seed is not None:
        cfg.apply_seed(args.seed)
    text = json.dumps(cfg.to_dict(), indent=2, sort_keys=True) + "\n"
    if not args.config:
        sys.stdout.write(text)
        return 0
    path = Path(args.config)
    if path.exists() and not args.force:
        raise ConfigError(f"{path} exists; pass --force to overwrite")
    path.write_text(text)
    print(f"wrote {path}")
    return 0


def cmd_make_synthetic(run: Run, args) -> int:
    from .data import CLASS_NAMES
    from .imageproc.io import write_png
    from .synthetic import make_quadrant_blobs

    p = run.cfg.synthetic
    images, labels = make_quadrant_blobs(p.per_class, p.size, run.cfg.seed)
    root = Path(run.cfg.dataset_root)
    counters = [0] * len(CLASS_NAMES)
    for img, y in zip(images, labels):
        write_png(root / CLASS_NAMES[y] / f"img_{counters[y]:04d}.png", img, run.png_text)
        counters[y] += 1
    print(f"wrote {len(images)} images to {root}")
    return 0


def cmd_preprocess(run: Run, args) -> int:
    from .data import load_corpus
    from .imageproc.transforms import preprocess

    corpus = load_corpus(run.cfg.dataset_root, permissive=args.permissive)
    samples = []
    for s in corpus.samples.values():
        samples.append(ImageSample(s.id, s.label, preprocess(s.pixels, run.cfg.preprocess), source=s.id))
    path = _write_stage(run, "preprocess", corpus.class_names, samples,
                        {"stage": "preprocess", "params": run.cfg.preprocess.to_dict()})
    print(f"preprocessed {len(samples)} images -> {path}")
    return 0


def cmd_augment(run: Run, args) -> int:
    from .imageproc.augment import augment_dataset

    src = args.input or str(run.out / "preprocessed" / "manifest.json")
    corpus, _ = _load_stage(run, src, with_pixels=True)
    cfg = run.cfg.augment
    if args.target_total is not None:
        cfg = dataclasses.replace(cfg, target_total=args.target_total)
    samples = augment_dataset(list(corpus.samples.values()), cfg, len(corpus.class_names))
    path = _write_stage(run, "augment", corpus.class_names, samples, {"stage": "augment", "params": cfg.to_dict()})
    print(f"augmented {len(corpus)} -> {len(samples)} images -> {path}")
    return 0


def cmd_split(run: Run, args) -> int:
    from .data import split_80_10_10

    corpus, source = _load_stage(run, args.input, with_pixels=False)
    split = split_80_10_10(corpus, run.cfg.seed, run.cfg.split.group_by_source or args.group_by_source)
    out = Path(args.output) if args.output else run.out / "split.json"
    out.parent.mkdir(parents=True, exist_ok=True)
    counts = {}
    for name, ids in split.partitions.items():
        per = np.bincount([corpus.samples[i].label for i in ids], minlength=len(corpus.class_names))
        counts[name] = dict(zip(corpus.class_names, per.tolist()))
    extra = dict(run.stamp)
    extra.update({"source": str(source), "class_names": list(corpus.class_names), "counts": counts})
    split.save(out, extra)
    print(f"split {len(corpus)} samples -> {out}")
    for name, c in counts.items():
        print(f"  {name}: " + " ".join(f"{k}={v}" for k, v in c.items()))
    return 0


def cmd_train(run: Run, args) -> int:
    from .imageproc.transforms import compute_normalization_stats
    from .model.checkpoint import save_checkpoint
    from .model.fusion import FusionModel
    from .model.training import train, write_curve_csv

    corpus, source = _load_stage(run, args.input, with_pixels=True)
    split = _split(run, args.split)
    x_tr, y_tr = corpus.arrays(split["train"])
    x_va, y_va = corpus.arrays(split["validation"])
    if x_tr.shape[1:] != (run.cfg.model.input_size,) * 2:
        raise ConfigError(f"images are {x_tr.shape[1:]} but model.input_size is {run.cfg.model.input_size}")
    stats = compute_normalization_stats(list(x_tr))
    tcfg = run.cfg.train
    if args.epochs is not None:
        tcfg = dataclasses.replace(tcfg, epochs=args.epochs)
    tcfg = dataclasses.replace(tcfg, checkpoint_dir=tcfg.checkpoint_dir or str(run.out / "checkpoints"))
    meta = dict(run.stamp)
    meta["normalization"] = stats.to_dict()
    model = FusionModel(run.cfg.model)
    curve = train(model, (_normalized(x_tr, stats), y_tr), (_normalized(x_va, stats), y_va), tcfg, meta)
    save_checkpoint(model, run.out / "model.ckpt", meta)
    write_curve_csv(curve, run.out / "curves.csv", run.comment)
    last = curve[-1] if curve else None
    run.write_json(run.out / "train.json", {
        "epochs": tcfg.epochs,
        "source": str(source),
        "normalization": stats.to_dict(),
        "final": dataclasses.asdict(last) if last else None,
    })
    if last:
        print(f"trained {tcfg.epochs} epochs: train_acc={last.train_acc:.4f} val_acc={last.val_acc:.4f}")
    else:
        print("epochs=0: saved the initial model")
    return 0


def cmd_evaluate(run: Run, args) -> int:
    from .metrics import evaluate_predictions, read_predictions_csv, write_predictions_csv
    from .model.training import predict

    ev = run.cfg.eval
    out_dir = run.out / "eval"
    if args.predictions:
        ids, labels, scores = read_predictions_csv(args.predictions)
        from .data import CLASS_NAMES

        names = tuple(CLASS_NAMES[:scores.shape[1]]) if scores.shape[1] <= len(CLASS_NAMES) else \
            tuple(str(i) for i in range(scores.shape[1]))
    else:
        corpus, _ = _load_stage(run, args.input, with_pixels=True)
        split = _split(run, args.split)
        if args.partition not in split.partitions:
            raise DataError(f"split has no partition {args.partition!r}")
        ids = split[args.partition]
        model, stats, _ = _load_model(run, args.checkpoint)
        x, labels = corpus.arrays(ids)
        scores = predict(model, _normalized(x, stats)).scores
        names = corpus.class_names
        out_dir.mkdir(parents=True, exist_ok=True)
        write_predictions_csv(out_dir / "predictions.csv", ids, labels, scores, run.comment)
    report = evaluate_predictions(scores, labels, names, ev.bootstrap_resamples, run.cfg.seed, ev.level)
    report.write(out_dir, "metrics", run.comment, run.stamp, scores, labels)
    b = report.bootstrap
    print(f"accuracy={report.metrics.accuracy:.4f} kappa={report.kappa:.4f} "
          f"weighted_f1={report.metrics.weighted['f1']:.4f} CI=({b.lower:.4f}, {b.upper:.4f}) n={report.n}")
    return 0


def cmd_explain(run: Run, args) -> int:
    from .gradcam import gradcam, write_explanations
    from .model.training import predict

    p = run.cfg.explain
    corpus, _ = _load_stage(run, args.input, with_pixels=True)
    model, stats, _ = _load_model(run, args.checkpoint)
    if args.samples:
        ids = args.samples
        missing = [i for i in ids if i not in corpus.samples]
        if missing:
            raise DataError(f"unknown sample id(s): {', '.join(missing)}")
    else:
        split = _split(run, args.split)
        ids = split[args.partition or p.partition][:args.limit if args.limit is not None else p.limit]
    x, labels = corpus.arrays(ids)
    xn = _normalized(x, stats)
    predicted = predict(model, xn).labels
    items = []
    for i, sid in enumerate(ids):
        target = int(labels[i]) if args.target == "actual" else int(predicted[i])
        for stream in ("mobile", "dense"):
            items.append((gradcam(model, stream, xn[i], target, sid), x[i]))
    index_extra = dict(run.stamp)
    index_extra["target"] = args.target
    write_explanations(items, run.out / "explain", p.alpha, run.png_text, index_extra)
    print(f"wrote {len(items)} heatmaps for {len(ids)} samples -> {run.out / 'explain'}")
    return 0


def cmd_crossval(run: Run, args) -> int:
    from .crossval import crossval_run
    from .model.fusion import FusionModel

    corpus, _ = _load_stage(run, args.input, with_pixels=True)
    ev = run.cfg.eval
    k = args.folds or ev.folds

    def builder(i: int) -> FusionModel:
        return FusionModel(dataclasses.replace(run.cfg.model, seed=run.cfg.seed * 1000 + i))

    report = crossval_run(corpus, builder, run.cfg.train, k, run.cfg.seed, ev.bootstrap_resamples, ev.level)
    report.write(run.out / "crossval", run.comment, run.stamp)
    print(f"{k}-fold accuracy mean={report.mean('accuracy'):.4f} std={report.std('accuracy'):.4f}")
    return 0


def cmd_gradcheck(run: Run, args) -> int:
    from .gradsuite import run_suite, summarize

    results = run_suite(range(args.seeds), include_model=not args.ops_only)
    summary = summarize(results)
    ok = all(v["passed"] for v in summary.values())
    run.write_json(run.out / "gradcheck.json", {"tolerance": 1e-4, "step": 1e-5, "cases": summary, "passed": ok})
    for name, v in summary.items():
        print(f"{'PASS' if v['passed'] else 'FAIL'} {name}: max_rel_error={v['max_rel_error']:.3e} over {v['seeds']} seeds")
    if not ok:
        raise NumericError("gradient check failed")
    return 0


COMMANDS = {
    "make-synthetic": cmd_make_synthetic,
    "preprocess": cmd_preprocess,
    "augment": cmd_augment,
    "split": cmd_split,
    "train": cmd_train,
    "evaluate": cmd_evaluate,
    "explain": cmd_explain,
    "crossval": cmd_crossval,
    "gradcheck": cmd_gradcheck,
}


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--config", help="JSON run configuration (defaults apply when omitted)")
    common.add_argument("--seed", type=int, help="override the configured seed")
    common.add_argument("--out", help="override the output directory")
    common.add_argument("--dataset", help="override the dataset root")
    common.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")

    parser = _Parser(prog="dualstream", description="Dual-stream fusion classifier pipeline.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("init-config", parents=[common], help="write a configuration with every default filled in")
    p.add_argument("--preset", choices=("default", "synthetic"), default="default")
    p.add_argument("--force", action="store_true", help="overwrite an existing file")

    sub.add_parser("make-synthetic", parents=[common], help="generate the quadrant corpus into the dataset root")

    p = sub.add_parser("preprocess", parents=[common], help="resize, CLAHE and denoise the dataset")
    p.add_argument("--permissive", action="store_true", help="skip unreadable files instead of failing")

    p = sub.add_parser("augment", parents=[common], help="grow the preprocessed corpus to target_total")
    p.add_argument("--input", help="source manifest (default: preprocessed stage)")
    p.add_argument("--target-total", type=int)

    p = sub.add_parser("split", parents=[common], help="write the 80-10-10 split manifest")
    p.add_argument("--input", help="sample manifest (default: latest stage, else the dataset root)")
    p.add_argument("--output", help="split manifest path (default: OUT/split.json)")
    p.add_argument("--group-by-source", action="store_true",
                   help="keep each original and its augmentations in one partition")

    p = sub.add_parser("train", parents=[common], help="train and write checkpoints and curves")
    p.add_argument("--input", help="sample manifest")
    p.add_argument("--split", help="split manifest")
    p.add_argument("--epochs", type=int)

    p = sub.add_parser("evaluate", parents=[common], help="metrics report for a checkpoint or a predictions CSV")
    p.add_argument("--input", help="sample manifest")
    p.add_argument("--split", help="split manifest")
    p.add_argument("--checkpoint")
    p.add_argument("--partition", default="test")
    p.add_argument("--predictions", help="CSV with sample_id, actual, score_0..; skips the model")

    p = sub.add_parser("explain", parents=[common], help="Grad-CAM overlays for both streams")
    p.add_argument("--input", help="sample manifest")
    p.add_argument("--split", help="split manifest")
    p.add_argument("--checkpoint")
    p.add_argument("--partition")
    p.add_argument("--limit", type=int)
    p.add_argument("--samples", nargs="+", help="explicit sample ids")
    p.add_argument("--target", choices=("predicted", "actual"), default="predicted")

    p = sub.add_parser("crossval", parents=[common], help="stratified k-fold training and evaluation")
    p.add_argument("--input", help="sample manifest")
    p.add_argument("--folds", type=int)

    p = sub.add_parser("gradcheck", parents=[common], help="finite-difference check of every op and the model")
    p.add_argument("--seeds", type=int, default=20)
    p.add_argument("--ops-only", action="store_true", help="skip the end-to-end model check")
    return parser


def _resolve(args) -> Run:
    cfg = RunConfig.load(args.config) if args.config else RunConfig()
    if args.seed is not None:
        cfg.apply_seed(args.seed)
    if args.out:
        cfg.output_dir = args.out
    if args.dataset:
        cfg.dataset_root = args.dataset
    return Run(cfg)


def main(argv: Optional[list[str]] = None) -> int:
    try:
        args = build_parser().parse_args(argv)
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                            format="%(levelname)s %(name)s: %(message)s")
        if args.command == "init-config":
            return cmd_init_config(args)
        return COMMANDS[args.command](_resolve(args), args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 2
    except NumericError as exc:
        print(f"numeric error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
