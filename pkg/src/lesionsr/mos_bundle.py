"""Blinded MOS session bundles.

A bundle holds 8-bit renderings of every (image, method) item under opaque
blinded ids, plus a sealed key file mapping blinded ids back to methods. The
key is consumed only by report generation; no rater-facing code reads it.

Display windowing is per-item-constant: every method rendering of an image
shares the window derived from that image's de-normalized ground truth, so
the display mapping cannot leak the method.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np
from PIL import Image

from .data import ImageSlice, denormalize
from .errors import DataFormatError, InvalidInputError

BUNDLE_FORMAT_VERSION = 1
BUNDLE_NAME = "bundle.json"
KEY_NAME = "key.json"  # sealed; never served to raters
GROUND_TRUTH_LABEL = "ground_truth"


def render_display(slice_: ImageSlice, lo: float, hi: float) -> np.ndarray:
    """Map a normalized slice to 8-bit grayscale with a fixed window."""
    raw = denormalize(slice_).pixels
    if hi <= lo:
        hi = lo + 1e-6
    scaled = np.clip((raw - lo) / (hi - lo), 0.0, 1.0)
    return np.round(scaled * 255).astype(np.uint8)


def create_bundle(images: dict, out_dir, seed: int, n_images: int | None = None) -> Path:
    """Write a blinded bundle from {image_id: {method_label: ImageSlice}}.

    Every image must include a ground-truth entry (it defines the display
    window and is itself rated, blinded like any other method).
    """
    if not images:
        raise InvalidInputError("no images to bundle")
    image_ids = sorted(images)
    rng = np.random.default_rng(seed)
    if n_images is not None:
        if n_images < 1 or n_images > len(image_ids):
            raise InvalidInputError(f"n_images must be in 1..{len(image_ids)}, got {n_images}")
        chosen = rng.choice(len(image_ids), size=n_images, replace=False)
        image_ids = [image_ids[i] for i in sorted(chosen)]

    entries = []
    for image_id in image_ids:
        methods = images[image_id]
        if GROUND_TRUTH_LABEL not in methods:
            raise InvalidInputError(f"image {image_id!r} lacks a {GROUND_TRUTH_LABEL} rendering")
        gt_raw = denormalize(methods[GROUND_TRUTH_LABEL]).pixels
        lo, hi = float(gt_raw.min()), float(gt_raw.max())
        for label in sorted(methods):
            entries.append((image_id, label, render_display(methods[label], lo, hi)))

    out = Path(out_dir)
    (out / "items").mkdir(parents=True, exist_ok=True)
    order = rng.permutation(len(entries))
    item_ids = []
    key = {}
    for blind_index, entry_index in enumerate(order):
        image_id, label, pixels8 = entries[entry_index]
        blind_id = f"item_{blind_index:04d}"
        Image.fromarray(pixels8).save(out / "items" / f"{blind_id}.png")
        item_ids.append(blind_id)
        key[blind_id] = {"image_id": image_id, "method": label}

    bundle = {"format_version": BUNDLE_FORMAT_VERSION, "items": item_ids}
    (out / BUNDLE_NAME).write_text(json.dumps(bundle, indent=2, sort_keys=True) + "\n")
    (out / KEY_NAME).write_text(json.dumps(key, indent=2, sort_keys=True) + "\n")
    return out


def load_bundle(bundle_dir) -> list[str]:
    """Blinded item ids, in bundle order. Never touches the key file."""
    path = Path(bundle_dir) / BUNDLE_NAME
    if not path.exists():
        raise DataFormatError(f"{path}: bundle manifest not found")
    try:
        bundle = json.loads(path.read_text())
    except json.JSONDecodeError as e:
        raise DataFormatError(f"{path}: invalid JSON ({e})") from e
    if bundle.get("format_version") != BUNDLE_FORMAT_VERSION:
        raise DataFormatError(f"{path}: unsupported format_version")
    items = bundle.get("items", [])
    for item_id in items:
        if not (Path(bundle_dir) / "items" / f"{item_id}.png").exists():
            raise DataFormatError(f"{path}: missing rendering for {item_id}")
    return items


def read_item_png(bundle_dir, item_id: str) -> bytes:
    path = Path(bundle_dir) / "items" / f"{item_id}.png"
    if not path.exists():
        raise DataFormatError(f"{path}: no such item")
    return path.read_bytes()


def load_key(bundle_dir) -> dict:
    """Sealed blinded-id -> (image, method) mapping; report-side use only."""
    path = Path(bundle_dir) / KEY_NAME
    if not path.exists():
        raise DataFormatError(f"{path}: key file not found")
    try:
        return json.loads(path.read_text())
    except json.JSONDecodeError as e:
        raise DataFormatError(f"{path}: invalid JSON ({e})") from e
