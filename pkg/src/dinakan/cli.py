"""Command-line surface.

Subcommands: train, eval, robustness, rf, cosine, gradcam, params,
flops, corrupt.  Every report is comma-separated text; errors print a
single machine-parseable line ``error,<type>,"<message>"`` on stderr
and exit nonzero.

The ``--config`` document is JSON with two optional sections::

    {
      "model": {"variant": "micro", "num_classes": 8, "input_size": 32,
                "dtype": "float32", "seed": 0},
      "train": {"epochs": 100, "batch_size": 128, "lr": 0.001,
                "decay_epochs": [50, 75], "weight_decay": 0.0001, "seed": 0}
    }

A model section may instead spell out the full stage plan (the format
written by ``ModelConfig.to_json``; see the README schema).
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from .accounting import count_flops, count_params
from .analysis import cosine_profile, empirical_rf, grad_cam, profile_csv, write_pgm
from .checkpoint import load_checkpoint, load_into_model, save_checkpoint
from .corruption import KINDS, corrupt_dataset
from .data import Dataset, load_idx, save_dataset_idx
from .metrics import BaselineErrorTable, SeverityErrors, aggregate
from .model import PRESETS, ModelConfig, build_model
from .optim import AdamW, TrainConfig, train_config_preset
from .tensor import Tensor
from .train import evaluate, train


def load_config(path):
    """Parse the JSON config document into (ModelConfig, TrainConfig)."""
    with open(path, "r", encoding="utf-8") as fh:
        doc = json.load(fh)
    model_doc = doc.get("model", {})
    if "stages" in model_doc:
        model_cfg = ModelConfig.from_json(json.dumps(model_doc))
    else:
        opts = dict(model_doc)
        variant = opts.pop("variant", "micro")
        num_classes = opts.pop("num_classes", 2)
        if variant not in PRESETS:
            raise ValueError(f"unknown variant {variant!r}; choose from {sorted(PRESETS)}")
        model_cfg = PRESETS[variant](num_classes, **opts)
    train_doc = dict(doc.get("train", {}))
    if "decay_epochs" in train_doc:
        train_doc["decay_epochs"] = tuple(train_doc["decay_epochs"])
    preset = train_doc.pop("preset", None)
    train_cfg = train_config_preset(preset, **train_doc) if preset else TrainConfig(**train_doc)
    return model_cfg, train_cfg


def _model_from_args(args):
    """Build a model from --checkpoint (weights included) or --config."""
    if getattr(args, "checkpoint", None):
        ck = load_checkpoint(args.checkpoint)
        model = build_model(ModelConfig.from_json(ck.config_doc))
        load_into_model(model, ck)
        return model
    if args.config is None:
        raise ValueError("either --config or --checkpoint is required")
    model_cfg, _ = load_config(args.config)
    if getattr(args, "seed", None) is not None:
        model_cfg.seed = args.seed
    return build_model(model_cfg)


def _load_dataset(args, split="test"):
    if not args.data_images or not args.data_labels:
        raise ValueError("--data-images and --data-labels are required")
    return load_idx(args.data_images, args.data_labels, split=split, channels=3)


def _emit(text, out_path):
    if out_path:
        with open(out_path, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


# ----------------------------------------------------------------------
# subcommand handlers

def cmd_train(args):
    model_cfg, train_cfg = load_config(args.config)
    if args.seed is not None:
        model_cfg.seed = args.seed
        train_cfg.seed = args.seed
    dataset = _load_dataset(args, split="train")
    if model_cfg.num_classes != dataset.num_classes:
        model_cfg.num_classes = dataset.num_classes
    model = build_model(model_cfg)
    optimizer = None
    start_epoch = 0
    if args.resume:
        ck = load_checkpoint(args.resume)
        load_into_model(model, ck)
        optimizer = AdamW(model.named_parameters(), train_cfg)
        optimizer.load_state_tensors(ck.opt_state)
        start_epoch = ck.epoch
    result, optimizer = train(model, dataset, train_cfg, optimizer=optimizer,
                              start_epoch=start_epoch, verbose=False)
    lines = ["epoch,lr,loss,train_acc"]
    lines += [f"{e.epoch},{e.lr:g},{e.loss:.6f},{e.train_acc:.6f}" for e in result.log]
    _emit("\n".join(lines) + "\n", getattr(args, "log", None))
    if args.out:
        epoch_done = result.log[-1].epoch + 1 if result.log else start_epoch
        save_checkpoint(args.out, model, optimizer, epoch=epoch_done)
    return 0


def cmd_eval(args):
    model = _model_from_args(args)
    dataset = _load_dataset(args)
    metrics = evaluate(model, dataset, batch_size=args.batch_size)
    auc = "absent" if metrics["auc"] is None else f"{metrics['auc']:.6f}"
    text = "metric,value\n" + (
        f"acc,{metrics['acc']:.6f}\nauc,{auc}\nbacc,{metrics['bacc']:.6f}\n"
    )
    _emit(text, args.out)
    return 0


def cmd_robustness(args):
    results = BaselineErrorTable.load(args.results)
    baseline = BaselineErrorTable.load(args.baseline)
    categories = {}
    if args.categories:
        with open(args.categories, "r", encoding="utf-8") as fh:
            for raw in fh:
                line = raw.split("#", 1)[0].strip()
                if line:
                    name, cat = [p.strip() for p in line.split(",")]
                    categories[name] = cat
    clean_error = results.clean()
    names = sorted({name for (name, s) in results.entries if s > 0})
    per = {
        name: SeverityErrors(name, [results.get(name, s) for s in range(1, 6)], clean_error)
        for name in names
    }
    report = aggregate(per, baseline, bacc_clean=1.0 - clean_error, categories=categories or None)
    _emit(report.csv(), args.out)
    return 0


def cmd_rf(args):
    schedule = tuple(int(d) for d in args.schedule.split(",")) if args.schedule else None
    report = empirical_rf(args.pattern, args.k, args.tokens, schedule=schedule,
                          n_layers=args.layers, seed=args.seed or 0)
    lines = ["layer,dilation,analytic_rf"]
    for layer, dilation, rf in report.rows():
        lines.append(f"{layer},{dilation},{rf}")
    lines.append(f"empirical,{report.empirical},{report.analytic[-1]}")
    lines.append(f"upper_bound,{report.upper_bound},{report.n_tokens}")
    _emit("\n".join(lines) + "\n", args.out)
    return 0


def cmd_cosine(args):
    model = _model_from_args(args)
    model.eval()
    dataset = _load_dataset(args)
    n = min(args.n_images, len(dataset))
    profile = cosine_profile(model, dataset.images[:n].astype(model.head.weight.data.dtype))
    _emit(profile_csv(profile), args.out)
    return 0


def cmd_gradcam(args):
    model = _model_from_args(args)
    model.eval()
    dataset = _load_dataset(args)
    image = dataset.images[args.index].astype(model.head.weight.data.dtype)
    target = args.target
    if target < 0:
        model.eval()
        target = int(model(Tensor(image[None])).data[0].argmax())
    heatmap = grad_cam(model, image, target, args.layer)
    out = args.out or "heatmap.pgm"
    write_pgm(out, heatmap.map)
    sys.stdout.write(f"layer,target_class,out\n{heatmap.layer_name},{heatmap.target_class},{out}\n")
    return 0


def cmd_params(args):
    model = _model_from_args(args)
    _emit(f"metric,value\nparameters,{count_params(model)}\n", args.out)
    return 0


def cmd_flops(args):
    model = _model_from_args(args)
    macs = count_flops(model, input_size=args.resolution)
    resolution = args.resolution or model.cfg.input_size
    _emit(f"metric,value\nresolution,{resolution}\nmacs,{macs}\n", args.out)
    return 0


def cmd_corrupt(args):
    dataset = _load_dataset(args)
    kinds = args.kinds.split(",") if args.kinds else list(KINDS)
    os.makedirs(args.out_dir, exist_ok=True)
    lines = ["kind,severity,images,labels"]
    for kind in kinds:
        for severity in range(1, 6):
            images = corrupt_dataset(dataset.images, kind, severity, seed=args.seed or 0)
            corrupted = Dataset(images, dataset.labels, dataset.num_classes, split="test")
            img_path = os.path.join(args.out_dir, f"{kind}_s{severity}-images.idx")
            lab_path = os.path.join(args.out_dir, f"{kind}_s{severity}-labels.idx")
            save_dataset_idx(corrupted, img_path, lab_path)
            lines.append(f"{kind},{severity},{img_path},{lab_path}")
    _emit("\n".join(lines) + "\n", args.out)
    return 0


# ----------------------------------------------------------------------

def build_parser():
    parser = argparse.ArgumentParser(prog="dinakan", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, checkpoint=False, data=False):
        p.add_argument("--config", help="JSON model/train config document")
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--out", help="output path (default: stdout)")
        if checkpoint:
            p.add_argument("--checkpoint", help="checkpoint to load the model from")
        if data:
            p.add_argument("--data-images", help="IDX image file")
            p.add_argument("--data-labels", help="IDX label file")

    p = sub.add_parser("train", help="train a model and write a checkpoint")
    common(p, data=True)
    p.add_argument("--resume", help="checkpoint to resume from")
    p.add_argument("--log", help="write the epoch log here instead of stdout")
    p.set_defaults(fn=cmd_train)

    p = sub.add_parser("eval", help="accuracy/AUC/balanced accuracy on a dataset")
    common(p, checkpoint=True, data=True)
    p.add_argument("--batch-size", type=int, default=64)
    p.set_defaults(fn=cmd_eval)

    p = sub.add_parser("robustness", help="corruption robustness report")
    common(p)
    p.add_argument("--results", required=True,
                   help="model balanced errors: corruption,severity,error (severity 0 = clean)")
    p.add_argument("--baseline", required=True, help="reference error table, same format")
    p.add_argument("--categories", help="optional corruption,category map")
    p.set_defaults(fn=cmd_robustness)

    p = sub.add_parser("rf", help="receptive-field report (analytic and empirical)")
    common(p)
    p.add_argument("--pattern", choices=("full", "neighborhood", "dilated"), default="dilated")
    p.add_argument("--k", type=int, default=3)
    p.add_argument("--tokens", type=int, default=200)
    p.add_argument("--layers", type=int, default=None)
    p.add_argument("--schedule", help="comma-separated dilations, one per layer")
    p.set_defaults(fn=cmd_rf)

    p = sub.add_parser("cosine", help="per-layer channel cosine-distance profile")
    common(p, checkpoint=True, data=True)
    p.add_argument("--n-images", type=int, default=64)
    p.set_defaults(fn=cmd_cosine)

    p = sub.add_parser("gradcam", help="class-activation heatmap as a PGM image")
    common(p, checkpoint=True, data=True)
    p.add_argument("--index", type=int, default=0, help="image index in the dataset")
    p.add_argument("--target", type=int, default=-1, help="class id (-1 = predicted)")
    p.add_argument("--layer", required=True, help="recorded layer name")
    p.set_defaults(fn=cmd_gradcam)

    p = sub.add_parser("params", help="exact parameter count")
    common(p, checkpoint=True)
    p.set_defaults(fn=cmd_params)

    p = sub.add_parser("flops", help="analytic multiply-accumulate count")
    common(p, checkpoint=True)
    p.add_argument("--resolution", type=int, default=None)
    p.set_defaults(fn=cmd_flops)

    p = sub.add_parser("corrupt", help="write corrupted copies at severities 1..5")
    common(p, data=True)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--kinds", help=f"comma-separated subset of {','.join(KINDS)}")
    p.set_defaults(fn=cmd_corrupt)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except Exception as err:  # single-line machine-parseable failure
        message = str(err).replace('"', "'")
        sys.stderr.write(f'error,{type(err).__name__},"{message}"\n')
        return 1


if __name__ == "__main__":
    sys.exit(main())
