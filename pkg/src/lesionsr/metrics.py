"""Image quality metrics and MOS aggregation.

PSNR uses a caller-supplied data range (for normalized images the evaluation
pipeline passes the per-image HR max-min and records it in the report). SSIM
is the classic windowed formulation with a uniform window. MOS statistics use
the population standard deviation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy.ndimage import map_coordinates

from .data import ImageSlice
from .errors import InvalidInputError, ShapeError

SCORE_LABELS = {0: "non-diagnostic", 1: "poor", 2: "fair", 3: "good", 4: "great"}
FLAGS = ("S", "A", "U", "N")  # over-smooth, artefacts, unrealistic textures, noisy


def _pixels(img) -> np.ndarray:
    if isinstance(img, ImageSlice):
        return img.pixels
    return np.asarray(img, dtype=np.float64)


def psnr(a, b, data_range: float) -> float:
    """Peak signal-to-noise ratio in dB; returns +inf when the images match."""
    pa, pb = _pixels(a), _pixels(b)
    if pa.shape != pb.shape:
        raise ShapeError(f"shape mismatch {pa.shape} vs {pb.shape}")
    if data_range <= 0:
        raise InvalidInputError(f"data_range must be positive, got {data_range}")
    mse = float(np.mean((pa - pb) ** 2))
    if mse == 0.0:
        return math.inf
    return 10.0 * math.log10(data_range**2 / mse)


def ssim(a, b, window: int = 8, k1: float = 0.01, k2: float = 0.03, data_range: float = 1.0) -> float:
    """Mean local SSIM over all sliding windows (uniform window, valid positions)."""
    pa, pb = _pixels(a), _pixels(b)
    if pa.shape != pb.shape:
        raise ShapeError(f"shape mismatch {pa.shape} vs {pb.shape}")
    if min(pa.shape) < window:
        raise ShapeError(f"image {pa.shape} smaller than window {window}")
    if data_range <= 0:
        raise InvalidInputError(f"data_range must be positive, got {data_range}")
    c1 = (k1 * data_range) ** 2
    c2 = (k2 * data_range) ** 2
    wa = sliding_window_view(pa, (window, window)).reshape(-1, window * window)
    wb = sliding_window_view(pb, (window, window)).reshape(-1, window * window)
    mu_a = wa.mean(axis=1)
    mu_b = wb.mean(axis=1)
    var_a = wa.var(axis=1)
    var_b = wb.var(axis=1)
    cov = ((wa - mu_a[:, None]) * (wb - mu_b[:, None])).mean(axis=1)
    num = (2 * mu_a * mu_b + c1) * (2 * cov + c2)
    den = (mu_a**2 + mu_b**2 + c1) * (var_a + var_b + c2)
    return float(np.mean(num / den))


def bilinear_upsample(lr, factor: int) -> ImageSlice:
    """Bilinear interpolation with corner-aligned sampling."""
    if factor not in (2, 4):
        raise InvalidInputError(f"factor must be 2 or 4, got {factor}")
    pixels = _pixels(lr)
    h, w = pixels.shape
    # Corner alignment: output sample i maps to i * (n_in - 1) / (n_out - 1).
    ys = np.linspace(0.0, h - 1, h * factor)
    xs = np.linspace(0.0, w - 1, w * factor)
    grid = np.meshgrid(ys, xs, indexing="ij")
    out = map_coordinates(pixels, grid, order=1, mode="nearest")
    if isinstance(lr, ImageSlice):
        return ImageSlice(out, normalized=lr.normalized, norm_mean=lr.norm_mean, norm_std=lr.norm_std)
    return ImageSlice(out)


@dataclass
class MosRecord:
    """One blinded rater judgment, joined with its method label at report time."""

    image_id: str
    method: str
    score: int
    flags: tuple = ()
    rater_id: str = ""
    timestamp: float = 0.0

    def __post_init__(self):
        if not isinstance(self.score, int) or not 0 <= self.score <= 4:
            raise InvalidInputError(f"score must be an integer in 0..4, got {self.score!r}")
        self.flags = tuple(self.flags)
        bad = [f for f in self.flags if f not in FLAGS]
        if bad:
            raise InvalidInputError(f"unknown flags {bad}; allowed: {FLAGS}")
        if len(set(self.flags)) != len(self.flags):
            raise InvalidInputError(f"duplicate flags in {self.flags}")


@dataclass
class MosSummary:
    method: str
    n: int
    mean: float
    std: float  # population std
    score_counts: dict
    flag_counts: dict


def mos_aggregate(records: list[MosRecord]) -> dict[str, MosSummary]:
    """Per-method mean, population std, score histogram and flag counts."""
    if not records:
        raise InvalidInputError("no MOS records to aggregate")
    by_method: dict[str, list[MosRecord]] = {}
    for rec in records:
        by_method.setdefault(rec.method, []).append(rec)
    out = {}
    for method, recs in sorted(by_method.items()):
        scores = np.array([r.score for r in recs], dtype=np.float64)
        score_counts = {s: int(np.sum(scores == s)) for s in range(5)}
        flag_counts = {f: sum(1 for r in recs if f in r.flags) for f in FLAGS}
        out[method] = MosSummary(
            method=method,
            n=len(recs),
            mean=float(scores.mean()),
            std=float(scores.std()),
            score_counts=score_counts,
            flag_counts=flag_counts,
        )
    return out


@dataclass
class MethodMetrics:
    """Per-method PSNR/SSIM lists plus their summary statistics."""

    method: str
    image_ids: list = field(default_factory=list)
    psnr_values: list = field(default_factory=list)
    ssim_values: list = field(default_factory=list)
    data_ranges: list = field(default_factory=list)

    def add(self, image_id: str, psnr_db: float, ssim_val: float, data_range: float):
        self.image_ids.append(image_id)
        self.psnr_values.append(psnr_db)
        self.ssim_values.append(ssim_val)
        self.data_ranges.append(data_range)

    def summary(self) -> dict:
        p = np.asarray(self.psnr_values, dtype=np.float64)
        s = np.asarray(self.ssim_values, dtype=np.float64)
        return {
            "method": self.method,
            "n": len(self.psnr_values),
            "psnr_mean": float(p.mean()),
            "psnr_std": float(p.std()),
            "ssim_mean": float(s.mean()),
            "ssim_std": float(s.std()),
        }


@dataclass
class MetricsReport:
    """Table-shaped evaluation report: one MethodMetrics per method label."""

    methods: dict[str, MethodMetrics] = field(default_factory=dict)
    notes: str = "per-slice statistics; PSNR data_range = per-image HR max-min"

    def method(self, label: str) -> MethodMetrics:
        if label not in self.methods:
            self.methods[label] = MethodMetrics(label)
        return self.methods[label]

    def summaries(self) -> list[dict]:
        return [m.summary() for m in self.methods.values()]
