"""Report rendering: delimited tables plus matplotlib figures.

Every report directory gets machine-readable CSVs, a plain-text table, and
PNG figures rendered next to them.
"""

from __future__ import annotations

import csv
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .metrics import FLAGS, MetricsReport, MosSummary


def _ensure(out_dir) -> Path:
    out = Path(out_dir)
    (out / "figures").mkdir(parents=True, exist_ok=True)
    return out


def write_metrics_report(report: MetricsReport, out_dir, example_png=None) -> Path:
    """Emit per_image.csv, summary.csv, report.txt and a metrics figure."""
    out = _ensure(out_dir)

    with (out / "per_image.csv").open("w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["method", "image_id", "psnr_db", "ssim", "data_range"])
        for m in report.methods.values():
            for i, image_id in enumerate(m.image_ids):
                w.writerow([m.method, image_id, f"{m.psnr_values[i]:.6f}",
                            f"{m.ssim_values[i]:.6f}", f"{m.data_ranges[i]:.6f}"])

    summaries = report.summaries()
    with (out / "summary.csv").open("w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["method", "n", "psnr_mean", "psnr_std", "ssim_mean", "ssim_std"])
        for s in summaries:
            w.writerow([s["method"], s["n"], f"{s['psnr_mean']:.4f}", f"{s['psnr_std']:.4f}",
                        f"{s['ssim_mean']:.6f}", f"{s['ssim_std']:.6f}"])

    lines = [f"{'method':<16} {'n':>4} {'PSNR (dB)':>16} {'SSIM':>18}"]
    for s in summaries:
        lines.append(
            f"{s['method']:<16} {s['n']:>4} "
            f"{s['psnr_mean']:>9.2f}±{s['psnr_std']:<6.2f} "
            f"{s['ssim_mean']:>10.4f}±{s['ssim_std']:<7.4f}"
        )
    lines.append("")
    lines.append(f"note: {report.notes}")
    (out / "report.txt").write_text("\n".join(lines) + "\n")

    fig, axes = plt.subplots(1, 2, figsize=(9, 3.5))
    methods = [s["method"] for s in summaries]
    x = np.arange(len(methods))
    axes[0].bar(x, [s["psnr_mean"] for s in summaries],
                yerr=[s["psnr_std"] for s in summaries], capsize=3, color="#4878a8")
    axes[0].set_ylabel("PSNR (dB)")
    axes[1].bar(x, [s["ssim_mean"] for s in summaries],
                yerr=[s["ssim_std"] for s in summaries], capsize=3, color="#6aa84f")
    axes[1].set_ylabel("SSIM")
    for ax in axes:
        ax.set_xticks(x)
        ax.set_xticklabels(methods, rotation=30, ha="right")
    fig.tight_layout()
    fig.savefig(out / "figures" / "metrics.png", dpi=120)
    plt.close(fig)

    if example_png is not None:
        save_image_grid(example_png, out / "figures" / "examples.png")
    return out


def save_image_grid(grid, path, titles=None) -> Path:
    """Render a dict of {column label: [2D arrays, one per row]} as an image grid."""
    labels = list(grid)
    n_rows = max(len(v) for v in grid.values())
    fig, axes = plt.subplots(n_rows, len(labels), figsize=(2.2 * len(labels), 2.2 * n_rows),
                             squeeze=False)
    for j, label in enumerate(labels):
        for i in range(n_rows):
            ax = axes[i][j]
            ax.set_axis_off()
            if i < len(grid[label]):
                ax.imshow(np.asarray(grid[label][i]), cmap="gray", interpolation="nearest")
            if i == 0:
                ax.set_title(label, fontsize=9)
    fig.tight_layout()
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def write_mos_report(summaries: dict[str, MosSummary], out_dir,
                     note="pooled over raters; population standard deviation") -> Path:
    """Emit mos_summary.csv, report.txt and the score/flag figure."""
    out = _ensure(out_dir)
    methods = sorted(summaries)

    with (out / "mos_summary.csv").open("w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["method", "n", "mos_mean", "mos_std",
                    "score_0", "score_1", "score_2", "score_3", "score_4",
                    "flag_S", "flag_A", "flag_U", "flag_N"])
        for name in methods:
            s = summaries[name]
            w.writerow([s.method, s.n, f"{s.mean:.4f}", f"{s.std:.4f}",
                        *[s.score_counts[k] for k in range(5)],
                        *[s.flag_counts[fl] for fl in FLAGS]])

    header = (f"{'method':<16} {'MOS':>12} {'0':>4} {'1':>4} {'2':>4} {'3':>4} {'4':>4}"
              f" {'S':>4} {'A':>4} {'U':>4} {'N':>4}")
    lines = [header]
    for name in methods:
        s = summaries[name]
        lines.append(
            f"{s.method:<16} {s.mean:>6.2f}±{s.std:<5.3f}"
            + "".join(f" {s.score_counts[k]:>4}" for k in range(5))
            + "".join(f" {s.flag_counts[fl]:>4}" for fl in FLAGS)
        )
    lines += ["", f"note: {note}"]
    (out / "report.txt").write_text("\n".join(lines) + "\n")

    fig, axes = plt.subplots(1, 2, figsize=(10, 3.5))
    width = 0.8 / max(len(methods), 1)
    for k, name in enumerate(methods):
        s = summaries[name]
        axes[0].bar(np.arange(5) + k * width, [s.score_counts[v] for v in range(5)],
                    width=width, label=name)
        axes[1].bar(np.arange(len(FLAGS)) + k * width, [s.flag_counts[fl] for fl in FLAGS],
                    width=width, label=name)
    axes[0].set_xticks(np.arange(5) + 0.4 - width / 2)
    axes[0].set_xticklabels(["0", "1", "2", "3", "4"])
    axes[0].set_xlabel("score")
    axes[0].set_ylabel("count")
    axes[1].set_xticks(np.arange(len(FLAGS)) + 0.4 - width / 2)
    axes[1].set_xticklabels(FLAGS)
    axes[1].set_xlabel("flag")
    axes[0].legend(fontsize=7)
    fig.tight_layout()
    fig.savefig(out / "figures" / "mos_scores.png", dpi=120)
    plt.close(fig)
    return out
