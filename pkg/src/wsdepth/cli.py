"""Command-line entry points wiring data, trainer, and metrics into
reproducible runs.

Commands: synth-data, pretrain-teacher, train, eval, predict, report. Every
flag has a config-file equivalent (UTF-8 ``key = value`` lines keyed by the
flag name with dashes as underscores); explicit flags win on conflict. Each
run directory receives exactly one manifest.json from which the run can be
repeated.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
import time
from pathlib import Path

import numpy as np

from . import checkpoint as ckpt_io
from .data import (
    ColorImage,
    DatasetConfig,
    DepthMap,
    DirectoryDataset,
    SyntheticDataset,
    _hsv_to_rgb,
    load_color_png,
    parse_kv_lines,
    save_depth_png,
    write_dataset,
)
from .errors import ConfigError, FormatError, NoValidPixelsError, TrainingDivergedError
from .losses import LossWeights
from .metrics import MetricsReport, aggregate_reports, garg_crop, mirror_average_predict, report_lines
from .networks import NetworkConfig
from .trainer import ALL_LOSS_TERMS, TrainingConfig, evaluate, make_predictor, pretrain_drn, train

from PIL import Image


# ---------------------------------------------------------------------------
# manifests


def git_blob_hash(data: bytes) -> str:
    """Content hash in git's blob format: sha1 over 'blob <len>\\0' + bytes."""
    h = hashlib.sha1()
    h.update(f"blob {len(data)}\0".encode())
    h.update(data)
    return h.hexdigest()


def hash_path(path: Path) -> str:
    path = Path(path)
    if path.is_file():
        return git_blob_hash(path.read_bytes())
    if path.is_dir():
        entries = []
        for p in sorted(path.rglob("*")):
            if p.is_file():
                entries.append(f"{p.relative_to(path)}:{git_blob_hash(p.read_bytes())}")
        return hashlib.sha1("\n".join(entries).encode()).hexdigest()
    raise OSError(f"no such input: {path}")


def write_manifest(out_dir: Path, command: str, resolved: dict, inputs: dict,
                   outputs: list[str]) -> dict:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    input_hashes = {name: hash_path(Path(p)) for name, p in inputs.items()}
    core = {"command": command, "config": resolved, "inputs": input_hashes}
    manifest_hash = hashlib.sha256(json.dumps(core, sort_keys=True).encode()).hexdigest()
    manifest = dict(core)
    manifest["manifest_hash"] = manifest_hash
    manifest["timestamp"] = time.strftime("%Y-%m-%dT%H:%M:%S%z")
    manifest["outputs"] = outputs
    path = out_dir / "manifest.json"
    if path.is_file():
        try:
            previous = json.loads(path.read_text(encoding="utf-8"))
        except json.JSONDecodeError:
            previous = {}
        if previous.get("manifest_hash") == manifest_hash:
            manifest["duplicate_of"] = previous.get("timestamp")
            print(f"warning: duplicate run (same manifest hash {manifest_hash[:12]})",
                  file=sys.stderr)
    path.write_text(json.dumps(manifest, indent=2) + "\n", encoding="utf-8")
    return manifest


# ---------------------------------------------------------------------------
# shared flag plumbing


def _apply_config_file(parser: argparse.ArgumentParser, argv: list[str]) -> list[str]:
    """Apply --config key=value defaults; explicit flags still win."""
    if "--config" not in argv:
        return argv
    idx = argv.index("--config")
    if idx + 1 >= len(argv):
        raise ConfigError("--config needs a file path")
    kv = parse_kv_lines(Path(argv[idx + 1]).read_text(encoding="utf-8"))
    known = {a.dest for a in parser._actions}
    unknown = set(kv) - known
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    typed = {}
    for key, raw in kv.items():
        action = next(a for a in parser._actions if a.dest == key)
        if isinstance(action, (argparse._StoreTrueAction, argparse._StoreFalseAction)):
            typed[key] = raw.strip().lower() in ("1", "true", "yes", "on")
        elif action.type is not None:
            typed[key] = action.type(raw)
        else:
            typed[key] = raw
    parser.set_defaults(**typed)
    return argv


def _add_network_flags(p: argparse.ArgumentParser):
    p.add_argument("--n-bins", type=int, default=64, help="number of adaptive depth bins")
    p.add_argument("--patch-size", type=int, default=8)
    p.add_argument("--embed-dim", type=int, default=32)
    p.add_argument("--transformer-layers", type=int, default=4)
    p.add_argument("--n-kernels", type=int, default=16)
    p.add_argument("--encoder-channels", type=str, default="16,32,48,64",
                   help="comma-separated channels of the halving encoder blocks")
    p.add_argument("--decoder-channels", type=str, default="48,32,16,16")
    p.add_argument("--tap-indices", type=str, default="1,2",
                   help="decoder block indices exposed for distillation")


def _add_training_flags(p: argparse.ArgumentParser):
    p.add_argument("--epochs", type=int, default=20)
    p.add_argument("--batch-size", type=int, default=4)
    p.add_argument("--max-lr", type=float, default=3.5e-4)
    p.add_argument("--weight-decay", type=float, default=1e-2)
    p.add_argument("--warmup-frac", type=float, default=0.3)
    p.add_argument("--min-lr-ratio", type=float, default=1.0 / 25.0)
    p.add_argument("--val-fraction", type=float, default=0.1)
    p.add_argument("--eval-every", type=int, default=1)
    p.add_argument("--grad-clip", type=float, default=None)
    p.add_argument("--no-augment", action="store_true")


def _ints(csv: str) -> tuple[int, ...]:
    return tuple(int(x) for x in csv.split(",") if x.strip())


def _network_config(args, ds_cfg: DatasetConfig, in_channels: int = 3) -> NetworkConfig:
    enc = _ints(args.encoder_channels)
    dec = _ints(args.decoder_channels)
    return NetworkConfig(
        in_channels=in_channels,
        encoder_blocks=tuple((c, True) for c in enc),
        decoder_channels=dec,
        patch_size=args.patch_size,
        transformer_layers=args.transformer_layers,
        embed_dim=args.embed_dim,
        n_bins=args.n_bins,
        d_min=ds_cfg.d_min,
        d_max=ds_cfg.d_max,
        tap_indices=_ints(args.tap_indices),
        n_kernels=args.n_kernels,
    )


def _training_config(args, net: NetworkConfig, mu: float, ablation=ALL_LOSS_TERMS) -> TrainingConfig:
    return TrainingConfig(
        network=net,
        epochs=args.epochs,
        batch_size=args.batch_size,
        max_lr=args.max_lr,
        weight_decay=args.weight_decay,
        warmup_frac=args.warmup_frac,
        min_lr_ratio=args.min_lr_ratio,
        loss_weights=LossWeights(),
        mu=mu,
        seed=args.seed,
        ablation=tuple(ablation),
        augment=not args.no_augment,
        val_fraction=args.val_fraction,
        eval_every=args.eval_every,
        grad_clip=args.grad_clip,
    )


def _write_history(path: Path, history: list[dict]) -> None:
    lines = []
    for h in history:
        parts = [f"epoch {h['epoch']}"]
        for key in ("loss", "LR", "HR", "net", "distill", "lr"):
            if key in h:
                parts.append(f"{key}={h[key]:.6g}")
        if "val" in h:
            parts.append(f"val_rel={h['val']['rel']:.4f}")
            parts.append(f"val_d1={h['val']['delta1']:.4f}")
        lines.append(" ".join(parts))
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


# ---------------------------------------------------------------------------
# rendering


def depth_to_falsecolor(d: DepthMap) -> np.ndarray:
    """Fixed preview colormap: hue ramps red (near) to blue (far) over
    [d_min, d_max], full saturation, invalid pixels black. Returns uint8 RGB."""
    norm = np.clip((d.values - d.d_min) / (d.d_max - d.d_min), 0.0, 1.0)
    rgb = _hsv_to_rgb(norm * (2.0 / 3.0), np.full_like(norm, 0.9), np.full_like(norm, 0.95))
    rgb = np.where(d.valid[..., None], rgb, 0.0)
    return np.clip(np.rint(rgb * 255.0), 0, 255).astype(np.uint8)


def _save_preview(path, d: DepthMap) -> None:
    Image.fromarray(depth_to_falsecolor(d), mode="RGB").save(path)


# ---------------------------------------------------------------------------
# commands


def cmd_synth_data(args) -> int:
    ds = SyntheticDataset(
        count=args.count, base_seed=args.seed, size=(args.size, args.size),
        mu=args.mu, num_rects=args.num_rects,
        depth_range=(args.d_min, args.d_max), texture_amplitude=args.texture,
    )
    cfg = DatasetConfig(depth_scale=args.depth_scale, d_min=args.d_min,
                        d_max=args.d_max, mu=args.mu)
    out = Path(args.out)
    pairs = [ds[i] for i in range(len(ds))]
    names = write_dataset(out, pairs, cfg, names=ds.names, include_hr=not args.no_hr)
    write_manifest(out, "synth-data", _resolved(args), {},
                   [f"color/{n}.png" for n in names] + [f"depth/{n}.png" for n in names])
    print(f"wrote {len(names)} pairs to {out}")
    return 0


def cmd_pretrain_teacher(args) -> int:
    data = DirectoryDataset(args.data)
    ds_cfg = data.config
    maps = [data[i].depth_lr for i in range(len(data))]
    net = _network_config(args, ds_cfg, in_channels=1)
    cfg = _training_config(args, net, ds_cfg.mu)
    result = pretrain_drn(maps, cfg)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    ckpt_io.save_checkpoint(out / "teacher.ckpt.npz", result.best)
    _write_history(out / "train.log", result.history)
    write_manifest(out, "pretrain-teacher", _resolved(args), {"data": args.data},
                   ["teacher.ckpt.npz", "train.log"])
    val = result.best.metrics or {}
    print(f"teacher checkpoint: {out / 'teacher.ckpt.npz'} "
          f"(val rel={val.get('rel', float('nan')):.4f} d1={val.get('delta1', float('nan')):.4f})")
    return 0


def cmd_train(args) -> int:
    data = DirectoryDataset(args.data)
    ds_cfg = data.config
    ablation = tuple(t.strip() for t in args.ablation.split(",") if t.strip())
    teacher = None
    if "distill" in ablation:
        if not args.teacher:
            raise ConfigError("distillation enabled: pass --teacher or drop 'distill' from --ablation")
        teacher = ckpt_io.load_checkpoint(args.teacher)
    net = _network_config(args, ds_cfg, in_channels=3)
    cfg = _training_config(args, net, ds_cfg.mu, ablation=ablation)
    result = train(data, cfg, teacher)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    ckpt_io.save_checkpoint(out / "student.ckpt.npz", result.best)
    ckpt_io.save_checkpoint(out / "student.final.ckpt.npz", result.final)
    _write_history(out / "train.log", result.history)
    inputs = {"data": args.data}
    if args.teacher:
        inputs["teacher"] = args.teacher
    write_manifest(out, "train", _resolved(args), inputs,
                   ["student.ckpt.npz", "student.final.ckpt.npz", "train.log"])
    val = result.best.metrics or {}
    print(f"student checkpoint: {out / 'student.ckpt.npz'} "
          f"(val rel={val.get('rel', float('nan')):.4f} d1={val.get('delta1', float('nan')):.4f})")
    return 0


def cmd_eval(args) -> int:
    data = DirectoryDataset(args.data)
    ckpt = ckpt_io.load_checkpoint(args.checkpoint)
    model = ckpt.build_model()
    crop = None
    if args.garg_crop:
        sample = data[0]
        if args.input_res == "hr":
            crop = garg_crop(sample.color_hr.height, sample.color_hr.width)
        else:
            crop = garg_crop(sample.depth_lr.height, sample.depth_lr.width)
    agg, per_image = evaluate(model, data, input_res=args.input_res,
                              mirror=not args.no_mirror, cap=args.cap, crop=crop)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "per_image.jsonl", "w", encoding="utf-8") as f:
        for name, rep in per_image:
            f.write(json.dumps({"image": name, **rep.to_dict()}) + "\n")
    (out / "aggregate.json").write_text(json.dumps(agg.to_dict(), indent=2) + "\n", encoding="utf-8")
    (out / "report.txt").write_text("\n".join(report_lines(per_image, agg)) + "\n", encoding="utf-8")

    if not args.no_render:
        (out / "pred_depth").mkdir(exist_ok=True)
        (out / "preview").mkdir(exist_ok=True)
        predict = make_predictor(model)
        for i in range(len(data)):
            pair = data[i]
            img = pair.color_hr if args.input_res == "hr" else None
            if img is None:
                from .data import downsample_image

                img = downsample_image(pair.color_hr, pair.mu)
            pred = mirror_average_predict(predict, img) if not args.no_mirror else predict(img)
            name = data.names[i]
            save_depth_png(out / "pred_depth" / f"{name}.png", pred, data.config.depth_scale)
            _save_preview(out / "preview" / f"{name}.png", pred)

    write_manifest(out, "eval", _resolved(args),
                   {"data": args.data, "checkpoint": args.checkpoint},
                   ["aggregate.json", "per_image.jsonl", "report.txt"])
    print("\n".join(report_lines(per_image, agg)))
    return 0


def cmd_predict(args) -> int:
    ckpt = ckpt_io.load_checkpoint(args.checkpoint)
    model = ckpt.build_model()
    img = load_color_png(args.image)
    predict = make_predictor(model)
    pred = mirror_average_predict(predict, img)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    stem = Path(args.image).stem
    save_depth_png(out / f"{stem}.depth.png", pred, args.depth_scale)
    _save_preview(out / f"{stem}.preview.png", pred)
    write_manifest(out, "predict", _resolved(args),
                   {"image": args.image, "checkpoint": args.checkpoint},
                   [f"{stem}.depth.png", f"{stem}.preview.png"])
    print(f"wrote {out / f'{stem}.depth.png'}")
    return 0


def cmd_report(args) -> int:
    eval_dir = Path(args.eval_dir)
    agg = MetricsReport.from_dict(json.loads((eval_dir / "aggregate.json").read_text(encoding="utf-8")))
    per_image = []
    with open(eval_dir / "per_image.jsonl", encoding="utf-8") as f:
        for line in f:
            rec = json.loads(line)
            name = rec.pop("image")
            per_image.append((name, MetricsReport.from_dict(rec)))
    recomputed = aggregate_reports([r for _, r in per_image])
    print("\n".join(report_lines(per_image, agg)))
    drift = abs(recomputed.rel - agg.rel)
    if drift > 1e-9:
        print(f"warning: stored aggregate deviates from per-image mean by {drift:g}",
              file=sys.stderr)
    return 0


def _resolved(args) -> dict:
    skip = {"func", "config"}
    return {k: v for k, v in sorted(vars(args).items()) if k not in skip}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="wsdepth",
        description="Weakly-supervised monocular depth estimation at desk scale.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", type=str, default=None,
                       help="key = value file of flag defaults; flags win")
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--out", type=str, required=True, help="run output directory")

    p = sub.add_parser("synth-data", help="generate a synthetic dataset")
    common(p)
    p.add_argument("--count", type=int, default=100)
    p.add_argument("--size", type=int, default=128, help="HR image side length")
    p.add_argument("--mu", type=float, default=0.5)
    p.add_argument("--num-rects", type=int, default=6)
    p.add_argument("--d-min", type=float, default=1.0)
    p.add_argument("--d-max", type=float, default=10.0)
    p.add_argument("--texture", type=float, default=0.15)
    p.add_argument("--depth-scale", type=float, default=1000.0)
    p.add_argument("--no-hr", action="store_true", help="skip the evaluation-only depth_hr/ maps")
    p.set_defaults(func=cmd_synth_data)

    p = sub.add_parser("pretrain-teacher", help="pretrain the depth reconstruction teacher")
    common(p)
    p.add_argument("--data", type=str, required=True)
    _add_network_flags(p)
    _add_training_flags(p)
    p.set_defaults(func=cmd_pretrain_teacher)

    p = sub.add_parser("train", help="train the student with weak supervision")
    common(p)
    p.add_argument("--data", type=str, required=True)
    p.add_argument("--teacher", type=str, default=None, help="teacher checkpoint path")
    p.add_argument("--ablation", type=str, default=",".join(ALL_LOSS_TERMS),
                   help="comma subset of LR,HR,net,distill")
    _add_network_flags(p)
    _add_training_flags(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint on a dataset")
    common(p)
    p.add_argument("--data", type=str, required=True)
    p.add_argument("--checkpoint", type=str, required=True)
    p.add_argument("--input-res", choices=("hr", "lr"), default="hr")
    p.add_argument("--cap", type=float, default=None)
    p.add_argument("--garg-crop", action="store_true")
    p.add_argument("--no-mirror", action="store_true")
    p.add_argument("--no-render", action="store_true")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("predict", help="predict depth for one color image")
    common(p)
    p.add_argument("--checkpoint", type=str, required=True)
    p.add_argument("--image", type=str, required=True)
    p.add_argument("--depth-scale", type=float, default=1000.0)
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("report", help="re-print a saved evaluation report")
    p.add_argument("--eval-dir", type=str, required=True)
    p.set_defaults(func=cmd_report)

    return parser


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        if argv and argv[0] in {"synth-data", "pretrain-teacher", "train", "eval", "predict"}:
            subparser = {
                a.dest: a for a in parser._actions
                if isinstance(a, argparse._SubParsersAction)
            }["command"].choices[argv[0]]
            _apply_config_file(subparser, argv)
        args = parser.parse_args(argv)
        return args.func(args)
    except (ConfigError, FormatError, NoValidPixelsError, TrainingDivergedError,
            ValueError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
