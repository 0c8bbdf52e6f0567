"""Command-line entry point.

Subcommands cover the full pipeline: synth-data, prepare, train, infer,
evaluate, mos-prepare, mos-serve, mos-report. Every output directory receives
a run_manifest.json sufficient to reproduce the command (command, arguments,
resolved-config hash, seed). Exit codes: 0 success, 2 usage error, 3 data or
configuration error, 4 internal error.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
from pathlib import Path

import numpy as np
import yaml

from . import corpus as corpus_io
from .data import ImageSlice
from .errors import DataFormatError, LesionSRError
from .metrics import MetricsReport, MosRecord, bilinear_upsample, mos_aggregate, psnr, ssim
from .mos_bundle import GROUND_TRUTH_LABEL, create_bundle, load_key
from .phantom import synth_phantom_corpus
from .report import write_metrics_report, write_mos_report
from .training import TrainingConfig, infer, load_checkpoint, train

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_DATA = 3
EXIT_INTERNAL = 4


def config_hash(resolved: dict) -> str:
    """Stable hash over the resolved configuration (key order independent)."""
    canonical = json.dumps(resolved, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode()).hexdigest()


def write_run_manifest(out_dir, command: str, resolved: dict, config_path=None, seed=None):
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    manifest = {
        "command": command,
        "config_path": str(config_path) if config_path else None,
        "config_hash": config_hash(resolved),
        "out_dir": str(out),
        "seed": seed,
        "resolved_config": resolved,
    }
    (out / "run_manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")


def cmd_synth_data(args) -> int:
    items = synth_phantom_corpus(args.n, args.size, args.seed)
    corpus_io.save_corpus(items, args.out)
    write_run_manifest(args.out, "synth-data",
                       {"n": args.n, "size": args.size, "seed": args.seed}, seed=args.seed)
    print(f"wrote {args.n} slices to {args.out}")
    return EXIT_OK


def cmd_prepare(args) -> int:
    items = corpus_io.load_corpus(args.corpus)
    train_items, val_items = corpus_io.split(items, args.train_fraction, args.seed,
                                             by_patient=args.by_patient)
    out = Path(args.out)
    summary = {}
    for name, subset in (("train", train_items), ("val", val_items)):
        pairs, excluded = corpus_io.prepare_corpus(subset, scale=args.scale, margin=args.margin)
        corpus_io.save_roi_pairs(pairs, out / name)
        summary[name] = {"pairs": len(pairs), "excluded": excluded}
    write_run_manifest(out, "prepare",
                       {"corpus": str(args.corpus), "scale": args.scale, "margin": args.margin,
                        "train_fraction": args.train_fraction, "seed": args.seed,
                        "by_patient": args.by_patient},
                       seed=args.seed)
    print(f"prepared {summary['train']['pairs']} train / {summary['val']['pairs']} val ROI pairs"
          f" -> {out}")
    for name in ("train", "val"):
        if summary[name]["excluded"]:
            print(f"excluded ({name}, empty or missing mask): {', '.join(summary[name]['excluded'])}")
    return EXIT_OK


def _apply_overrides(config: dict, overrides: list[str]) -> dict:
    for item in overrides:
        if "=" not in item:
            raise DataFormatError(f"override {item!r} is not of the form dotted.path=value")
        dotted, raw = item.split("=", 1)
        node = config
        keys = dotted.split(".")
        for key in keys[:-1]:
            node = node.setdefault(key, {})
            if not isinstance(node, dict):
                raise DataFormatError(f"override {dotted!r} path collides with a non-mapping")
        node[keys[-1]] = yaml.safe_load(raw)
    return config


def load_run_config(path, overrides=()) -> dict:
    try:
        config = yaml.safe_load(Path(path).read_text())
    except FileNotFoundError:
        raise
    except yaml.YAMLError as e:
        raise DataFormatError(f"{path}: invalid YAML ({e})") from e
    if not isinstance(config, dict):
        raise DataFormatError(f"{path}: config must be a mapping")
    return _apply_overrides(config, list(overrides))


def cmd_train(args) -> int:
    config = load_run_config(args.config, args.set or [])
    for section in ("data", "output", "training"):
        if section not in config:
            raise DataFormatError(f"{args.config}: missing {section!r} section")
    cfg = TrainingConfig.from_dict(config["training"])
    train_pairs = corpus_io.load_roi_pairs(config["data"]["train_dir"])
    val_dir = config["data"].get("val_dir")
    val_pairs = corpus_io.load_roi_pairs(val_dir) if val_dir else None
    out_dir = Path(config["output"]["out_dir"])
    write_run_manifest(out_dir, "train", config, config_path=args.config, seed=cfg.seed)
    ckpt, history = train(cfg, train_pairs, val_set=val_pairs, out_dir=out_dir)
    last = history.adversarial_steps()[-1]
    print(f"finished {cfg.variant.value}: {len(history.adversarial_steps())} generator steps, "
          f"final terms {json.dumps(last.terms)}")
    print(f"checkpoint: {ckpt}")
    return EXIT_OK


def _load_sr_dir(path) -> dict[str, dict]:
    """{image_id: {pixels, meta}} for an inference output directory."""
    root = Path(path)
    out = {}
    for npy in sorted(root.glob("*.npy")):
        image_id = npy.stem
        meta_path = root / f"{image_id}.json"
        if not meta_path.exists():
            raise DataFormatError(f"{meta_path}: missing metadata for {npy.name}")
        out[image_id] = {"pixels": np.load(npy), "meta": json.loads(meta_path.read_text())}
    if not out:
        raise DataFormatError(f"{root}: no inference outputs (*.npy) found")
    return out


def cmd_infer(args) -> int:
    pairs = corpus_io.load_roi_pairs(args.data)
    if args.ids:
        wanted = set(args.ids.split(","))
        pairs = [p for p in pairs if p.slice_id in wanted]
        if not pairs:
            raise DataFormatError(f"no pairs match ids {sorted(wanted)}")
    gen_state = load_checkpoint(args.checkpoint)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for pair in pairs:
        sr, box = infer(gen_state, pair)
        np.save(out / f"{pair.slice_id}.npy", sr.pixels)
        meta = {"box": [box.x0, box.y0, box.w, box.h], "scale": pair.scale,
                "norm_mean": pair.hr.norm_mean, "norm_std": pair.hr.norm_std}
        (out / f"{pair.slice_id}.json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")
    write_run_manifest(out, "infer",
                       {"checkpoint": str(args.checkpoint), "data": str(args.data),
                        "ids": args.ids}, seed=None)
    print(f"wrote {len(pairs)} SR outputs to {out}")
    return EXIT_OK


def _labelled_dirs(values) -> dict[str, Path]:
    out = {}
    for item in values:
        if "=" not in item:
            raise DataFormatError(f"expected label=dir, got {item!r}")
        label, path = item.split("=", 1)
        if label == GROUND_TRUTH_LABEL:
            raise DataFormatError(f"{GROUND_TRUTH_LABEL!r} is reserved; it is added automatically")
        out[label] = Path(path)
    return out


def cmd_evaluate(args) -> int:
    pairs = {p.slice_id: p for p in corpus_io.load_roi_pairs(args.data)}
    methods: dict[str, dict] = {}
    if args.checkpoint:
        label = args.label or Path(args.checkpoint).stem
        gen_state = load_checkpoint(args.checkpoint)
        methods[label] = {
            pid: {"pixels": infer(gen_state, pair)[0].pixels} for pid, pair in pairs.items()
        }
    for label, path in _labelled_dirs(args.sr or []).items():
        methods[label] = _load_sr_dir(path)
    if not methods:
        raise DataFormatError("nothing to evaluate: pass --checkpoint or --sr label=dir")

    report = MetricsReport()
    grid = {}
    for pid, pair in sorted(pairs.items()):
        data_range = float(pair.hr.pixels.max() - pair.hr.pixels.min())
        upsampled = bilinear_upsample(pair.lr, pair.scale)
        report.method("bilinear").add(pid, psnr(upsampled, pair.hr, data_range),
                                      ssim(upsampled, pair.hr, data_range=data_range), data_range)
    for label, outputs in methods.items():
        for pid, pair in sorted(pairs.items()):
            if pid not in outputs:
                raise DataFormatError(f"method {label!r} lacks output for {pid}")
            sr = outputs[pid]["pixels"]
            data_range = float(pair.hr.pixels.max() - pair.hr.pixels.min())
            report.method(label).add(pid, psnr(sr, pair.hr, data_range),
                                     ssim(sr, pair.hr, data_range=data_range), data_range)

    example_ids = sorted(pairs)[: args.examples]
    if example_ids:
        grid["LR"] = [pairs[p].lr.pixels for p in example_ids]
        grid["bilinear"] = [bilinear_upsample(pairs[p].lr, pairs[p].scale).pixels for p in example_ids]
        for label, outputs in methods.items():
            grid[label] = [outputs[p]["pixels"] for p in example_ids]
        grid["HR"] = [pairs[p].hr.pixels for p in example_ids]
    write_metrics_report(report, args.out, example_png=grid if example_ids else None)
    write_run_manifest(args.out, "evaluate",
                       {"data": str(args.data), "sr": args.sr or [],
                        "checkpoint": str(args.checkpoint) if args.checkpoint else None},
                       seed=None)
    print((Path(args.out) / "report.txt").read_text())
    return EXIT_OK


def cmd_mos_prepare(args) -> int:
    pairs = {p.slice_id: p for p in corpus_io.load_roi_pairs(args.data)}
    method_dirs = _labelled_dirs(args.input)
    if not method_dirs:
        raise DataFormatError("pass at least one --input label=dir")
    loaded = {label: _load_sr_dir(path) for label, path in method_dirs.items()}
    common = set(pairs)
    for outputs in loaded.values():
        common &= set(outputs)
    if not common:
        raise DataFormatError("no image ids shared by the reference data and every method")
    images = {}
    for pid in sorted(common):
        hr = pairs[pid].hr
        entry = {GROUND_TRUTH_LABEL: hr}
        for label, outputs in loaded.items():
            entry[label] = ImageSlice(outputs[pid]["pixels"], normalized=True,
                                      norm_mean=hr.norm_mean, norm_std=hr.norm_std)
        images[pid] = entry
    create_bundle(images, args.out, seed=args.seed, n_images=args.n_images)
    n_items = (args.n_images or len(images)) * (len(method_dirs) + 1)
    write_run_manifest(args.out, "mos-prepare",
                       {"data": str(args.data), "inputs": sorted(args.input),
                        "n_images": args.n_images, "seed": args.seed},
                       seed=args.seed)
    print(f"blinded bundle with {n_items} items -> {args.out}")
    return EXIT_OK


def cmd_mos_serve(args) -> int:
    from .service import serve

    serve(args.bundle, args.records, host=args.host, port=args.port, ui_dir=args.ui)
    return EXIT_OK


def cmd_mos_report(args) -> int:
    from .service import SessionStore

    store = SessionStore(args.bundle, args.records)
    session_ids = args.sessions.split(",") if args.sessions else None
    summaries = store.report(session_ids)
    write_mos_report(summaries, args.out)
    write_run_manifest(args.out, "mos-report",
                       {"bundle": str(args.bundle), "records": str(args.records),
                        "sessions": args.sessions}, seed=None)
    print((Path(args.out) / "report.txt").read_text())
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="lesionsr",
                                     description="lesion-focused super-resolution toolkit")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth-data", help="generate a synthetic phantom corpus")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--size", type=int, default=64)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_synth_data)

    p = sub.add_parser("prepare", help="build normalized lesion ROI datasets")
    p.add_argument("--corpus", required=True)
    p.add_argument("--scale", type=int, default=4, choices=(2, 4))
    p.add_argument("--margin", type=int, default=2)
    p.add_argument("--train-fraction", type=float, default=0.8)
    p.add_argument("--by-patient", action="store_true")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_prepare)

    p = sub.add_parser("train", help="run one training configuration")
    p.add_argument("--config", required=True)
    p.add_argument("--set", action="append", metavar="dotted.path=value",
                   help="override a config value (repeatable)")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("infer", help="super-resolve prepared ROI pairs")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True, help="prepared ROI dataset directory")
    p.add_argument("--ids", help="comma-separated slice ids (default: all)")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_infer)

    p = sub.add_parser("evaluate", help="PSNR/SSIM report with bilinear baseline")
    p.add_argument("--data", required=True, help="prepared ROI dataset directory")
    p.add_argument("--checkpoint", help="evaluate this checkpoint directly")
    p.add_argument("--label", help="method label for --checkpoint")
    p.add_argument("--sr", action="append", metavar="label=dir",
                   help="evaluate pre-computed inference outputs (repeatable)")
    p.add_argument("--examples", type=int, default=3, help="images in the example grid figure")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("mos-prepare", help="build a blinded MOS session bundle")
    p.add_argument("--data", required=True, help="prepared ROI dataset directory (ground truth)")
    p.add_argument("--input", action="append", required=True, metavar="label=dir")
    p.add_argument("--n-images", type=int, default=None)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_mos_prepare)

    p = sub.add_parser("mos-serve", help="serve blinded rating sessions over HTTP")
    p.add_argument("--bundle", required=True)
    p.add_argument("--records", required=True, help="append-only rating log (JSONL)")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8008)
    p.add_argument("--ui", help="directory with the built rating UI (served at /)")
    p.set_defaults(func=cmd_mos_serve)

    p = sub.add_parser("mos-report", help="aggregate ratings into the MOS report")
    p.add_argument("--bundle", required=True)
    p.add_argument("--records", required=True)
    p.add_argument("--sessions", help="comma-separated session ids (default: all)")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_mos_report)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except FileNotFoundError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except LesionSRError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_DATA
    except Exception as e:  # pragma: no cover - internal errors
        print(f"internal error: {type(e).__name__}: {e}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
