"""Core image types and ROI extraction.

Images are single-channel 2D arrays (float64, shape ``(H, W)``). Slices carry
their normalization state so that outputs can be mapped back to the original
intensity range for display and rating.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np
from PIL import Image

from .errors import AlignmentError, InvalidInputError, NoLesionError, ShapeError

# Floor applied when a slice has zero variance, so blank slices normalize to
# all-zero pixels instead of NaN.
STD_FLOOR = 1e-8


@dataclass
class ImageSlice:
    """2D single-channel image with normalization metadata.

    ``normalized`` means the pixels are in z-scored units; ``norm_mean`` and
    ``norm_std`` hold the original statistics needed to undo the mapping.
    Crops of a normalized slice keep the flag and the parent statistics.
    """

    pixels: np.ndarray
    normalized: bool = False
    norm_mean: float = 0.0
    norm_std: float = 1.0

    def __post_init__(self):
        self.pixels = np.asarray(self.pixels, dtype=np.float64)
        if self.pixels.ndim != 2 or self.pixels.size == 0:
            raise ShapeError(f"pixels must be a non-empty 2D array, got shape {self.pixels.shape}")
        if not np.all(np.isfinite(self.pixels)):
            raise InvalidInputError("pixels contain non-finite values")

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def shape(self):
        return self.pixels.shape

    def crop(self, box: "RoiBox") -> "ImageSlice":
        if box.x0 < 0 or box.y0 < 0 or box.x0 + box.w > self.width or box.y0 + box.h > self.height:
            raise ShapeError(f"box {box} exceeds image bounds {self.shape}")
        return replace(self, pixels=self.pixels[box.y0 : box.y0 + box.h, box.x0 : box.x0 + box.w].copy())


@dataclass
class SegMask:
    """Binary lesion mask aligned with its companion HR slice."""

    pixels: np.ndarray

    def __post_init__(self):
        self.pixels = np.asarray(self.pixels, dtype=np.uint8)
        if self.pixels.ndim != 2 or self.pixels.size == 0:
            raise ShapeError(f"mask must be a non-empty 2D array, got shape {self.pixels.shape}")
        if not np.isin(self.pixels, (0, 1)).all():
            raise InvalidInputError("mask values must be 0 or 1")

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def shape(self):
        return self.pixels.shape


@dataclass(frozen=True)
class RoiBox:
    """Lesion bounding box in HR pixel coordinates."""

    x0: int
    y0: int
    w: int
    h: int

    def validate(self, img_shape, scale: int) -> None:
        H, W = img_shape
        if self.w <= 0 or self.h <= 0:
            raise ShapeError(f"box sides must be positive, got {self}")
        if self.x0 < 0 or self.y0 < 0 or self.x0 + self.w > W or self.y0 + self.h > H:
            raise ShapeError(f"box {self} not contained in image of shape {img_shape}")
        if self.w % scale or self.h % scale:
            raise AlignmentError(f"box sides {self.w}x{self.h} not divisible by scale {scale}")

    def scaled(self, factor: int) -> "RoiBox":
        if any(v % factor for v in (self.x0, self.y0, self.w, self.h)):
            raise AlignmentError(f"box {self} offsets/sizes not divisible by {factor}")
        return RoiBox(self.x0 // factor, self.y0 // factor, self.w // factor, self.h // factor)


@dataclass
class SlicePair:
    """Full-frame LR/HR pair; HR dims are exactly scale x LR dims."""

    lr: ImageSlice
    hr: ImageSlice
    scale: int

    def __post_init__(self):
        if self.scale not in (2, 4):
            raise InvalidInputError(f"scale must be 2 or 4, got {self.scale}")
        if self.hr.width != self.scale * self.lr.width or self.hr.height != self.scale * self.lr.height:
            raise ShapeError(
                f"hr dims {self.hr.shape} != {self.scale} x lr dims {self.lr.shape}"
            )


@dataclass
class RoiPair:
    """Lesion-cropped LR/HR pair, with the X2 intermediate target at scale 4."""

    lr: ImageSlice
    hr: ImageSlice
    scale: int
    box: RoiBox
    dr: ImageSlice | None = None
    slice_id: str = ""

    def __post_init__(self):
        if self.hr.width != self.scale * self.lr.width or self.hr.height != self.scale * self.lr.height:
            raise ShapeError(f"hr dims {self.hr.shape} != {self.scale} x lr dims {self.lr.shape}")
        if self.dr is not None:
            if self.scale != 4:
                raise InvalidInputError("dr target only exists at scale 4")
            if self.dr.width != 2 * self.lr.width or self.dr.height != 2 * self.lr.height:
                raise ShapeError(f"dr dims {self.dr.shape} != 2 x lr dims {self.lr.shape}")


def normalize(slice_: ImageSlice) -> ImageSlice:
    """Return a zero-mean unit-variance copy, recording the original stats.

    Constant slices divide by the ``STD_FLOOR`` epsilon and come out all-zero.
    """
    if slice_.normalized:
        raise InvalidInputError("slice is already normalized")
    mean = float(slice_.pixels.mean())
    std = float(slice_.pixels.std())
    std = max(std, STD_FLOOR)
    return ImageSlice(
        pixels=(slice_.pixels - mean) / std,
        normalized=True,
        norm_mean=mean,
        norm_std=std,
    )


def denormalize(slice_: ImageSlice) -> ImageSlice:
    """Map a normalized slice back to its original intensity units."""
    if not slice_.normalized:
        return slice_
    return ImageSlice(pixels=slice_.pixels * slice_.norm_std + slice_.norm_mean)


def _box2(pixels: np.ndarray) -> np.ndarray:
    # One 2x2 block-mean pass; division by 4 is exact in binary floating point.
    return (pixels[0::2, 0::2] + pixels[0::2, 1::2] + pixels[1::2, 0::2] + pixels[1::2, 1::2]) / 4.0


def downsample(hr: ImageSlice, factor: int, method: str = "box") -> ImageSlice:
    """Downsample by block mean (default) or bicubic resampling.

    Factor 4 is defined as two successive factor-2 box passes, so
    ``downsample(downsample(x, 2), 2)`` equals ``downsample(x, 4)`` exactly.
    """
    if factor not in (2, 4):
        raise InvalidInputError(f"factor must be 2 or 4, got {factor}")
    if hr.height % factor or hr.width % factor:
        raise ShapeError(f"dims {hr.shape} not divisible by factor {factor}")
    if method == "box":
        out = _box2(hr.pixels)
        if factor == 4:
            out = _box2(out)
    elif method == "bicubic":
        im = Image.fromarray(hr.pixels.astype(np.float32), mode="F")
        im = im.resize((hr.width // factor, hr.height // factor), Image.BICUBIC)
        out = np.asarray(im, dtype=np.float64)
    else:
        raise InvalidInputError(f"unknown downsampling method {method!r}")
    return replace(hr, pixels=out)


def roi_from_mask(mask: SegMask, scale: int, margin: int = 0) -> RoiBox:
    """Bounding box of the lesion, expanded by ``margin`` and snapped to ``scale``.

    The tight box of nonzero pixels is grown by ``margin`` on each side,
    clipped to the image, then expanded outward to the ``scale`` grid so both
    offsets and sizes are divisible (crop_pair needs integer LR coordinates).
    """
    ys, xs = np.nonzero(mask.pixels)
    if ys.size == 0:
        raise NoLesionError("mask has no nonzero pixels; slice excluded")
    H, W = mask.shape
    if H % scale or W % scale:
        raise ShapeError(f"mask dims {mask.shape} not divisible by scale {scale}")
    x0 = max(int(xs.min()) - margin, 0)
    y0 = max(int(ys.min()) - margin, 0)
    x1 = min(int(xs.max()) + 1 + margin, W)
    y1 = min(int(ys.max()) + 1 + margin, H)
    x0, x1 = _snap_span(x0, x1, scale)
    y0, y1 = _snap_span(y0, y1, scale)
    box = RoiBox(x0, y0, x1 - x0, y1 - y0)
    box.validate(mask.shape, scale)
    return box


def _snap_span(lo: int, hi: int, scale: int) -> tuple[int, int]:
    # Expand [lo, hi) outward to the scale grid; the image sides are divisible
    # by scale, so the snapped span always fits.
    return (lo // scale) * scale, ((hi + scale - 1) // scale) * scale


def crop_pair(pair: SlicePair, box: RoiBox) -> RoiPair:
    """Crop an aligned ROI pair; at scale 4 also derives the X2 target."""
    box.validate(pair.hr.shape, pair.scale)
    lr_box = box.scaled(pair.scale)
    hr_crop = pair.hr.crop(box)
    lr_crop = pair.lr.crop(lr_box)
    dr = downsample(hr_crop, 2) if pair.scale == 4 else None
    return RoiPair(lr=lr_crop, hr=hr_crop, scale=pair.scale, box=box, dr=dr)


def mask_detector(mask: SegMask, scale: int, margin: int = 0):
    """Detector interface implementation backed by a segmentation mask.

    Returns a callable ``(ImageSlice) -> RoiBox`` so any learned detector with
    the same signature can be swapped in.
    """

    def detect(hr_slice: ImageSlice) -> RoiBox:
        if mask.shape != hr_slice.shape:
            raise ShapeError(f"mask shape {mask.shape} != slice shape {hr_slice.shape}")
        return roi_from_mask(mask, scale=scale, margin=margin)

    return detect
