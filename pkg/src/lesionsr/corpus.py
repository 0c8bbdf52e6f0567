"""On-disk corpus layout and prepared ROI datasets.

Corpus directory layout::

    corpus/
      manifest.json        ids, relative paths, patient grouping
      hr/<id>.png          16-bit grayscale PNG, intensities in [0, 1]
      mask/<id>.png        8-bit binary PNG (optional per slice)

Intensities are stored on the 65535-level grid, so save -> load round-trips
exactly for data produced by the phantom generator (or any source already on
that grid). Prepared ROI pairs are stored one ``.npz`` per pair plus a
manifest, all in normalized units.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image

from .data import (
    ImageSlice,
    RoiBox,
    RoiPair,
    SegMask,
    SlicePair,
    crop_pair,
    downsample,
    normalize,
    roi_from_mask,
)
from .errors import DataFormatError, InvalidInputError, NoLesionError
from .phantom import QUANT_LEVELS

MANIFEST_NAME = "manifest.json"
CORPUS_FORMAT_VERSION = 1


@dataclass
class CorpusItem:
    slice_id: str
    hr: ImageSlice
    mask: SegMask | None
    patient: str
    lr: ImageSlice | None = None  # optional pre-paired full-frame LR


def _write_png16(path: Path, pixels: np.ndarray) -> None:
    if pixels.min() < 0.0 or pixels.max() > 1.0:
        raise InvalidInputError("corpus images must have intensities in [0, 1]")
    q = np.round(pixels * QUANT_LEVELS).astype(np.uint16)
    Image.fromarray(q).save(path)  # uint16 -> 16-bit grayscale PNG


def _read_png16(path: Path) -> np.ndarray:
    with Image.open(path) as im:
        arr = np.asarray(im)
    if arr.ndim != 2:
        raise DataFormatError(f"{path}: expected single-channel image, got shape {arr.shape}")
    return arr.astype(np.float64) / QUANT_LEVELS


def save_corpus(items: list[tuple[ImageSlice, SegMask | None]], out_dir, patients=None) -> Path:
    """Write slices (and masks when present) plus the manifest; returns out_dir."""
    out = Path(out_dir)
    (out / "hr").mkdir(parents=True, exist_ok=True)
    (out / "mask").mkdir(exist_ok=True)
    entries = []
    for i, (slice_, mask) in enumerate(items):
        if slice_.normalized:
            raise InvalidInputError("corpus stores raw slices; normalize at prepare time")
        sid = f"s{i:04d}"
        patient = patients[i] if patients else f"p{i:04d}"
        _write_png16(out / "hr" / f"{sid}.png", slice_.pixels)
        entry = {"id": sid, "hr": f"hr/{sid}.png", "patient": patient, "mask": None}
        if mask is not None:
            if mask.shape != slice_.shape:
                raise DataFormatError(f"{sid}: mask shape {mask.shape} != slice shape {slice_.shape}")
            Image.fromarray(mask.pixels * 255, mode="L").save(out / "mask" / f"{sid}.png")
            entry["mask"] = f"mask/{sid}.png"
        entries.append(entry)
    manifest = {"format_version": CORPUS_FORMAT_VERSION, "items": entries}
    (out / MANIFEST_NAME).write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return out


def load_corpus(path) -> list[CorpusItem]:
    """Load a corpus directory; raises DataFormatError naming the bad file."""
    root = Path(path)
    manifest_path = root / MANIFEST_NAME
    if not manifest_path.exists():
        raise DataFormatError(f"{manifest_path}: manifest not found")
    try:
        manifest = json.loads(manifest_path.read_text())
    except json.JSONDecodeError as e:
        raise DataFormatError(f"{manifest_path}: invalid JSON ({e})") from e
    if manifest.get("format_version") != CORPUS_FORMAT_VERSION:
        raise DataFormatError(f"{manifest_path}: unsupported format_version")
    items = []
    for entry in manifest.get("items", []):
        try:
            sid = entry["id"]
            hr = ImageSlice(_read_png16(root / entry["hr"]))
            mask = None
            if entry.get("mask"):
                with Image.open(root / entry["mask"]) as im:
                    mask = SegMask((np.asarray(im) > 0).astype(np.uint8))
            lr = ImageSlice(_read_png16(root / entry["lr"])) if entry.get("lr") else None
            items.append(CorpusItem(sid, hr, mask, entry.get("patient", sid), lr=lr))
        except (KeyError, OSError, ValueError) as e:
            raise DataFormatError(f"{manifest_path}: bad entry {entry!r} ({e})") from e
    return items


def prepare_corpus(items: list[CorpusItem], scale: int, margin: int = 0):
    """normalize -> detect ROI -> crop; returns (roi pairs, excluded slice ids).

    Slices with a missing or empty mask are excluded, never trained on. When
    a slice has no pre-paired LR frame, the LR crop is simulated by
    downsampling the HR crop.
    """
    pairs, excluded = [], []
    for item in items:
        if item.mask is None:
            excluded.append(item.slice_id)
            continue
        try:
            box = roi_from_mask(item.mask, scale=scale, margin=margin)
        except NoLesionError:
            excluded.append(item.slice_id)
            continue
        hr_n = normalize(item.hr)
        if item.lr is not None:
            pair = crop_pair(SlicePair(lr=normalize(item.lr), hr=hr_n, scale=scale), box)
        else:
            hr_crop = hr_n.crop(box)
            pair = RoiPair(
                lr=downsample(hr_crop, scale),
                hr=hr_crop,
                dr=downsample(hr_crop, 2) if scale == 4 else None,
                scale=scale,
                box=box,
            )
        pair.slice_id = item.slice_id
        pairs.append(pair)
    return pairs, excluded


def split(corpus: list, train_fraction: float, seed: int, by_patient: bool = False):
    """Deterministic disjoint train/validation split.

    With ``by_patient`` all slices of a patient land on the same side,
    otherwise the split is at slice level with exact counts.
    """
    if not 0.0 < train_fraction < 1.0:
        raise InvalidInputError(f"train_fraction must be in (0, 1), got {train_fraction}")
    rng = np.random.default_rng(seed)
    if by_patient:
        patients = sorted({item.patient for item in corpus})
        order = [patients[i] for i in rng.permutation(len(patients))]
        n_train = int(round(train_fraction * len(order)))
        train_patients = set(order[:n_train])
        train = [it for it in corpus if it.patient in train_patients]
        val = [it for it in corpus if it.patient not in train_patients]
        return train, val
    order = rng.permutation(len(corpus))
    n_train = int(round(train_fraction * len(corpus)))
    train = [corpus[i] for i in order[:n_train]]
    val = [corpus[i] for i in order[n_train:]]
    return train, val


def save_roi_pairs(pairs: list[RoiPair], out_dir) -> Path:
    """Persist prepared ROI pairs (normalized units) as one npz per pair."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    entries = []
    for i, pair in enumerate(pairs):
        sid = pair.slice_id or f"s{i:04d}"
        arrays = {
            "lr": pair.lr.pixels,
            "hr": pair.hr.pixels,
            "box": np.array([pair.box.x0, pair.box.y0, pair.box.w, pair.box.h], dtype=np.int64),
            "norm": np.array([pair.hr.norm_mean, pair.hr.norm_std], dtype=np.float64),
        }
        if pair.dr is not None:
            arrays["dr"] = pair.dr.pixels
        np.savez(out / f"{sid}.npz", **arrays)
        entries.append({"id": sid, "file": f"{sid}.npz", "scale": pair.scale})
    manifest = {"format_version": CORPUS_FORMAT_VERSION, "kind": "roi_pairs", "items": entries}
    (out / MANIFEST_NAME).write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return out


def load_roi_pairs(path) -> list[RoiPair]:
    root = Path(path)
    manifest_path = root / MANIFEST_NAME
    if not manifest_path.exists():
        raise DataFormatError(f"{manifest_path}: manifest not found")
    try:
        manifest = json.loads(manifest_path.read_text())
    except json.JSONDecodeError as e:
        raise DataFormatError(f"{manifest_path}: invalid JSON ({e})") from e
    if manifest.get("kind") != "roi_pairs":
        raise DataFormatError(f"{manifest_path}: not a prepared ROI dataset")
    pairs = []
    for entry in manifest.get("items", []):
        try:
            with np.load(root / entry["file"]) as z:
                mean, std = z["norm"]
                meta = dict(normalized=True, norm_mean=float(mean), norm_std=float(std))
                box = RoiBox(*(int(v) for v in z["box"]))
                dr = ImageSlice(z["dr"], **meta) if "dr" in z else None
                pairs.append(
                    RoiPair(
                        lr=ImageSlice(z["lr"], **meta),
                        hr=ImageSlice(z["hr"], **meta),
                        dr=dr,
                        scale=int(entry["scale"]),
                        box=box,
                        slice_id=entry["id"],
                    )
                )
        except (KeyError, OSError, ValueError) as e:
            raise DataFormatError(f"{manifest_path}: bad entry {entry!r} ({e})") from e
    return pairs
