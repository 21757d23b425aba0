"""Report rendering: portable graymaps, attention-map figures, benchmark and
loss-curve plots. Figures go to files; nothing is shown interactively."""

import csv

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402
from matplotlib.collections import PatchCollection  # noqa: E402
from matplotlib.patches import Rectangle  # noqa: E402

GRID = 1000
DEFAULT_RC = {
    "font.size": 9,
    "axes.labelsize": 9,
    "legend.fontsize": 8,
    "xtick.labelsize": 8,
    "ytick.labelsize": 8,
    "savefig.dpi": 120,
    # keep PNG bytes independent of the run
    "svg.hashsalt": "skimattn",
}


def _fig(**kw):
    with plt.rc_context(DEFAULT_RC):
        return plt.subplots(**kw)


def raster_scores(boxes, scores, size=(250, 250)):
    """Grayscale raster over the normalized page; each box filled with intensity
    ``round(255 * score / max(score))``. Overlaps keep the brighter value."""
    h, w = size
    img = np.zeros((h, w), dtype=np.int64)
    scores = np.asarray(scores, dtype=np.float64)
    top = scores.max() if scores.size else 0.0
    if top <= 0:
        return img
    for (x0, y0, x1, y1), s in zip(boxes, scores):
        c0, c1 = int(x0 * w // GRID), max(int(x0 * w // GRID) + 1, int(-(-x1 * w // GRID)))
        r0, r1 = int(y0 * h // GRID), max(int(y0 * h // GRID) + 1, int(-(-y1 * h // GRID)))
        val = int(np.floor(255 * s / top + 0.5))
        region = img[r0:min(r1, h), c0:min(c1, w)]
        np.maximum(region, val, out=region)
    return img


def write_pgm(path, img, maxval=255):
    """Plain (P2) portable graymap; byte-stable for a given array."""
    img = np.asarray(img, dtype=np.int64)
    h, w = img.shape
    lines = ["P2", f"{w} {h}", str(maxval)]
    lines += [" ".join(str(int(v)) for v in row) for row in img]
    with open(path, "w", encoding="ascii") as fh:
        fh.write("\n".join(lines) + "\n")


def read_pgm(path):
    with open(path, encoding="ascii") as fh:
        tokens = fh.read().split()
    if tokens[0] != "P2":
        raise ValueError("not a plain PGM file")
    w, h = int(tokens[1]), int(tokens[2])
    return np.array(tokens[4:], dtype=np.int64).reshape(h, w)


def write_attention_csv(path, tokens, boxes, scores):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        wr = csv.writer(fh)
        wr.writerow(["token", "x0", "y0", "x1", "y1", "score"])
        for t, b, s in zip(tokens, boxes, scores):
            wr.writerow([t, *[int(v) for v in b], repr(float(s))])


def plot_attention_map(path, boxes, scores, unit=(), title=None, cmap="gray"):
    """Page view with each box shaded by its averaged skim-attention score."""
    fig, ax = _fig(figsize=(4.2, 5.0))
    scores = np.asarray(scores, dtype=np.float64)
    top = scores.max() if scores.size and scores.max() > 0 else 1.0
    patches = [Rectangle((b[0], b[1]), max(b[2] - b[0], 1), max(b[3] - b[1], 1)) for b in boxes]
    coll = PatchCollection(patches, cmap=cmap, edgecolor="none")
    coll.set_array(scores / top)
    coll.set_clim(0, 1)
    ax.add_collection(coll)
    for i in unit:
        b = boxes[i]
        ax.add_patch(Rectangle((b[0], b[1]), b[2] - b[0], b[3] - b[1], fill=False, edgecolor="tab:green", lw=0.8))
    ax.set_facecolor("black")
    ax.set_xlim(0, GRID)
    ax.set_ylim(GRID, 0)
    ax.set_aspect("equal")
    ax.set_xticks([])
    ax.set_yticks([])
    if title:
        ax.set_title(title)
    fig.colorbar(coll, ax=ax, fraction=0.046, pad=0.04, label="score / max")
    fig.tight_layout()
    fig.savefig(path, metadata={"Software": None})
    plt.close(fig)


def plot_bench(path, rows):
    """Time and peak-memory panels against sequence length, one line per variant."""
    fig, (ax_t, ax_m) = _fig(ncols=2, figsize=(8, 3.2))
    variants = sorted({r["variant"] for r in rows})
    for v in variants:
        sub = sorted((r for r in rows if r["variant"] == v), key=lambda r: r["seq_len"])
        n = [r["seq_len"] for r in sub]
        ax_t.plot(n, [r["median_time_s"] for r in sub], marker="o", label=v)
        ax_m.plot(n, [r["peak_mem_mib"] for r in sub], marker="o", label=v)
    for ax, lab in ((ax_t, "time per step (s)"), (ax_m, "estimated peak memory (MiB)")):
        ax.set_xscale("log", base=2)
        ax.set_xlabel("sequence length")
        ax.set_ylabel(lab)
        ax.grid(alpha=0.3)
    ax_t.legend()
    fig.tight_layout()
    fig.savefig(path, metadata={"Software": None})
    plt.close(fig)


def plot_loss_curve(path, losses, label="loss"):
    fig, ax = _fig(figsize=(4.5, 3.0))
    ax.plot(np.arange(len(losses)), losses, lw=0.8, label=label)
    ax.set_xlabel("step")
    ax.set_ylabel(label)
    ax.grid(alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, metadata={"Software": None})
    plt.close(fig)
