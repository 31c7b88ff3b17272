"""``orientnet`` command line: synth, augment, train, eval, predict, saliency.

Settings resolve as explicit flag > ``--config`` JSON file > built-in default.
Errors print one ``error: <category>: <detail>`` line to stderr and exit 1.
"""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import data, nn, zoo
from .checkpoint import load_params, save_checkpoint
from .errors import OrientError, ValidationError
from .evaluate import REPORTED_RESULTS, evaluate, format_confusion, format_report
from .guided import guided_backward, render_saliency
from .imageio import Image, read_image, write_gray, write_image

DEFAULTS = {
    "n": 100,
    "side": 32,
    "seed": 0,
    "model": "tiny-orient",
    "epochs": 15,
    "lr": 0.01,
    "momentum": 0.9,
    "batch": 16,
    "dropout": zoo.DEFAULT_DROPOUT,
    "init": "fresh",
    "split": "test",
    "mode": "absolute",
    "dataset": "synthetic",
}


class UsageError(OrientError):
    category = "usage"


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _setting(args, config: dict, key: str):
    value = getattr(args, key, None)
    if value is not None:
        return value
    return config.get(key, DEFAULTS.get(key))


def _require(args, config, key):
    value = _setting(args, config, key)
    if value is None:
        raise UsageError(f"--{key.replace('_', '-')} is required")
    return value


def _load_config(path) -> dict:
    if path is None:
        return {}
    try:
        cfg = json.loads(Path(path).read_text())
    except json.JSONDecodeError as e:
        raise ValidationError(f"config file {path} is not valid JSON: {e}") from None
    if not isinstance(cfg, dict):
        raise ValidationError("config file must hold a JSON object")
    return {k.replace("-", "_"): v for k, v in cfg.items()}


def cmd_synth(args, cfg):
    out = Path(_require(args, cfg, "out"))
    n, side, seed = _setting(args, cfg, "n"), _setting(args, cfg, "side"), _setting(args, cfg, "seed")
    base = data.generate_synthetic_dataset(n, side, seed, out)
    manifest = data.augment_with_rotations(base)
    manifest.save(out / "manifest.json")
    c = base.counts()
    print(f"wrote {n} images and {len(manifest.records)} records to {out / 'manifest.json'} "
          f"(photos: train {c['train']}, val {c['val']}, test {c['test']})")


def cmd_augment(args, cfg):
    src = Path(_require(args, cfg, "manifest"))
    dst = Path(_require(args, cfg, "out"))
    manifest = data.augment_with_rotations(data.DatasetManifest.load(src))
    if dst.resolve().parent != src.resolve().parent:
        # keep record paths valid relative to the new manifest location
        manifest.records = [data.Record(str(manifest.resolve(r).resolve()), r.label, r.split, r.rotation)
                            for r in manifest.records]
    manifest.save(dst)
    print(f"wrote {len(manifest.records)} records to {dst}")


def cmd_train(args, cfg):
    manifest = data.DatasetManifest.load(_require(args, cfg, "manifest"))
    out = Path(_require(args, cfg, "out_checkpoint"))
    tc = nn.TrainConfig(
        lr=_setting(args, cfg, "lr"),
        momentum=_setting(args, cfg, "momentum"),
        batch_size=_setting(args, cfg, "batch"),
        epochs=_setting(args, cfg, "epochs"),
        dropout=_setting(args, cfg, "dropout"),
        seed=_setting(args, cfg, "seed"),
        init=_setting(args, cfg, "init"),
    )
    side = _setting(args, cfg, "input_side")
    config = zoo.build_model(_setting(args, cfg, "model"), side, drop_rate=tc.dropout)
    side = config.input_shape[1]
    train_data = data.load_split(manifest, "train", side)
    val_data = data.load_split(manifest, "val", side)
    rng = np.random.default_rng(tc.seed)
    params = nn.init_params(config, tc.init, rng)
    log_path = _setting(args, cfg, "log")
    lines = ["epoch,loss,train_acc,val_acc"]
    print(lines[0], flush=True)

    def on_epoch(row):
        line = f"{row['epoch']},{row['loss']:.6f},{row['train_acc']:.6f},{row['val_acc']:.6f}"
        lines.append(line)
        print(line, flush=True)

    nn.fit(config, params, train_data, tc, rng, val_data, on_epoch)
    save_checkpoint(params, config, out)
    if log_path:
        Path(log_path).write_text("\n".join(lines) + "\n")


def _load_input(path, config) -> np.ndarray:
    try:
        image = read_image(path)
    except OSError as e:
        raise OSError(f"cannot read image {path}: {e.strerror or e}") from None
    return data.to_input_tensor(data.fit_and_pad(image, config.input_shape[1]))


def cmd_predict(args, cfg):
    config, params = load_params(_require(args, cfg, "checkpoint"))
    x = _load_input(_require(args, cfg, "image"), config)
    logits, _ = nn.forward(config, params, x[None], "eval")
    probs = nn.softmax(logits[0].astype(np.float64))
    label = int(np.argmax(logits[0]))
    print(",".join([str(data.label_to_degrees(label))] + [f"{p:.6f}" for p in probs]))


def cmd_eval(args, cfg):
    config, params = load_params(_require(args, cfg, "checkpoint"))
    manifest = data.DatasetManifest.load(_require(args, cfg, "manifest"))
    split = _setting(args, cfg, "split")
    report = evaluate(config, params, manifest, split)
    for f in report.failures or []:
        print(f"warning: unreadable record: {f}", file=sys.stderr)
    baselines = None
    if _setting(args, cfg, "reported_baselines"):
        baselines = {name: (f"{100 * ours:.1f}% (reported)" + (f"; {sota}" if sota else ""))
                     for name, ours, sota in REPORTED_RESULTS}
    print(format_report(report, baselines, _setting(args, cfg, "dataset")))
    print(format_confusion(report))
    json_path = _setting(args, cfg, "json")
    if json_path:
        Path(json_path).write_text(report.to_json() + "\n")


def cmd_saliency(args, cfg):
    config, params = load_params(_require(args, cfg, "checkpoint"))
    image_path = _require(args, cfg, "image")
    out = Path(_require(args, cfg, "out"))
    x = _load_input(image_path, config)
    smap = guided_backward(config, params, x, _setting(args, cfg, "target"), image_id=str(image_path))
    gray = render_saliency(smap, _setting(args, cfg, "mode"))
    write_gray(out, gray)
    sidecar = {"target": smap.target, "logits": [float(v) for v in smap.logits], "was_argmax": smap.was_argmax}
    out.with_suffix(".json").write_text(json.dumps(sidecar) + "\n")
    pair = _setting(args, cfg, "pair")
    if pair:
        shown = data.from_input_tensor(x).pixels
        write_image(pair, Image(np.concatenate([shown, np.repeat(gray[..., None], 3, axis=2)], axis=1)))
    print(f"target {data.label_to_degrees(smap.target)} (argmax: {smap.was_argmax}) -> {out}")


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="orientnet", description="Photo orientation classifier with guided-backprop saliency.")
    p.add_argument("--config", help="JSON file with default settings for the subcommand")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("synth", help="generate a synthetic upright-photo dataset")
    s.add_argument("--n", type=int)
    s.add_argument("--side", type=int)
    s.add_argument("--seed", type=int)
    s.add_argument("--out")
    s.set_defaults(func=cmd_synth)

    s = sub.add_parser("augment", help="expand a manifest with all four rotations")
    s.add_argument("--manifest")
    s.add_argument("--out")
    s.set_defaults(func=cmd_augment)

    s = sub.add_parser("train", help="train a model on the train split")
    s.add_argument("--manifest")
    s.add_argument("--model")
    s.add_argument("--input-side", type=int)
    s.add_argument("--epochs", type=int)
    s.add_argument("--lr", type=float)
    s.add_argument("--momentum", type=float)
    s.add_argument("--batch", type=int)
    s.add_argument("--dropout", type=float)
    s.add_argument("--seed", type=int)
    s.add_argument("--init", help="'fresh' or a checkpoint path (head may differ)")
    s.add_argument("--out-checkpoint")
    s.add_argument("--log", help="also write the epoch log to this file")
    s.set_defaults(func=cmd_train)

    s = sub.add_parser("eval", help="accuracy report over one split")
    s.add_argument("--checkpoint")
    s.add_argument("--manifest")
    s.add_argument("--split", choices=data.SPLITS)
    s.add_argument("--json")
    s.add_argument("--dataset", help="row name in the report table")
    s.add_argument("--reported-baselines", action="store_true", default=None)
    s.set_defaults(func=cmd_eval)

    s = sub.add_parser("predict", help="classify one image")
    s.add_argument("--checkpoint")
    s.add_argument("--image")
    s.set_defaults(func=cmd_predict)

    s = sub.add_parser("saliency", help="guided-backprop saliency map for one image")
    s.add_argument("--checkpoint")
    s.add_argument("--image")
    s.add_argument("--out", help="output .png or .pgm")
    s.add_argument("--target", type=int, help="output index 0..3 (default: argmax)")
    s.add_argument("--mode", choices=("absolute", "signed"))
    s.add_argument("--pair", help="also write input and map side by side (.png or .ppm)")
    s.set_defaults(func=cmd_saliency)
    return p


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        args.func(args, _load_config(args.config))
    except OrientError as e:
        print(f"error: {e.category}: {e}".replace("\n", " "), file=sys.stderr)
        return 1
    except OSError as e:
        print(f"error: io: {e}".replace("\n", " "), file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
