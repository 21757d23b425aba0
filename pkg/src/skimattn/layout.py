"""Bounding boxes, layout embeddings, the layout contextualizer and the
ablation transforms applied to skim-attention inputs."""

import enum
import math
from typing import NamedTuple

import numpy as np

from . import attention as att
from .errors import ValidationError
from .numerics import tensor as T

COORD_BUCKETS = 1001
UNIFORM_BOX = (0, 0, 1000, 1000)
LAYOUT_TABLES = ("layout.x", "layout.y", "layout.w", "layout.h")


class BoundingBox(NamedTuple):
    x0: float
    y0: float
    x1: float
    y1: float


class NormalizedBox(NamedTuple):
    x0: int
    y0: int
    x1: int
    y1: int


class LayoutMode(str, enum.Enum):
    TRUE_LAYOUT = "true_layout"
    ONE_D_POSITION = "one_d_position"
    UNIFORM = "uniform"
    DEGRADED = "degraded"
    CONTEXTUALIZED = "contextualized"


def _round_half_up(v):
    return int(math.floor(v + 0.5))


def normalize_box(box, page_width, page_height, index=None):
    """Scale raw page coordinates onto the integer grid [0, 1000]."""
    if page_width <= 0 or page_height <= 0:
        raise ValidationError(f"page dimensions must be positive, got {page_width}x{page_height}")
    x0, y0, x1, y1 = box
    if x1 < x0 or y1 < y0:
        where = "" if index is None else f" at token {index}"
        raise ValidationError(f"inverted bounding box {tuple(box)}{where}")
    sx = 1000.0 / page_width
    sy = 1000.0 / page_height

    def clamp(v):
        return min(1000, max(0, _round_half_up(v)))

    return NormalizedBox(clamp(x0 * sx), clamp(y0 * sy), clamp(x1 * sx), clamp(y1 * sy))


def normalize_boxes(boxes, page_width, page_height):
    return np.array([normalize_box(b, page_width, page_height, i) for i, b in enumerate(boxes)], dtype=np.int64).reshape(-1, 4)


def layout_shapes(d_layout, max_len=None):
    shapes = {name: (COORD_BUCKETS, d_layout) for name in LAYOUT_TABLES}
    if max_len is not None:
        shapes["layout.pos"] = (max_len, d_layout)
    return shapes


def embed_layout(boxes, params):
    """Sum of x0, y0, x1, y1, width and height lookups for integer boxes ``(..., 4)``."""
    b = np.asarray(boxes, dtype=np.int64)
    if b.size and (b.min() < 0 or b.max() > 1000):
        raise AssertionError("layout index outside [0, 1000]; boxes must be normalized first")
    x0, y0, x1, y1 = b[..., 0], b[..., 1], b[..., 2], b[..., 3]
    tx, ty = params["layout.x"], params["layout.y"]
    out = T.embedding(tx, x0)
    out = T.add(out, T.embedding(ty, y0))
    out = T.add(out, T.embedding(tx, x1))
    out = T.add(out, T.embedding(ty, y1))
    out = T.add(out, T.embedding(params["layout.w"], x1 - x0))
    return T.add(out, T.embedding(params["layout.h"], y1 - y0))


def apply_layout_mode(boxes, mode):
    """Box-level ablation transform; 1-D position and contextualized modes keep the boxes."""
    mode = LayoutMode(mode)
    b = np.array(boxes, dtype=np.int64).reshape(np.shape(boxes))
    if mode is LayoutMode.UNIFORM:
        out = np.empty_like(b)
        out[...] = UNIFORM_BOX
        return out
    if mode is LayoutMode.DEGRADED:
        cx = (b[..., 0] + b[..., 2] + 1) // 2
        cy = (b[..., 1] + b[..., 3] + 1) // 2
        return np.stack([cx, cy, cx, cy], axis=-1)
    return b


def contextualizer_shapes(d_layout, num_layers):
    shapes = {}
    for i in range(num_layers):
        shapes.update(att.encoder_block_shapes(f"ctx.{i}", d_layout))
    if num_layers:
        shapes.update(att.layer_norm_shapes("ctx.ln_f", d_layout))
    return shapes


def contextualize(embeddings, params, num_heads, valid=None):
    """Small pre-norm Transformer over layout embeddings, no sequential positions."""
    x = embeddings
    i = 0
    while f"ctx.{i}.ln1.g" in params:
        x = att.encoder_block(x, params, f"ctx.{i}", num_heads, valid=valid)
        i += 1
    if i == 0:
        return x
    return att.norm(x, params, "ctx.ln_f")


def layout_representation(boxes, positions, mode, params, num_heads, valid=None):
    """Full skim-input pipeline: mode transform, embedding, optional contextualizer."""
    mode = LayoutMode(mode)
    if mode is LayoutMode.ONE_D_POSITION:
        pos = np.asarray(positions, dtype=np.int64)
        table = params["layout.pos"]
        if pos.size and pos.max() >= table.shape[0]:
            raise ValidationError(f"position {int(pos.max())} exceeds position table size {table.shape[0]}")
        return T.embedding(table, pos)
    emb = embed_layout(apply_layout_mode(boxes, mode), params)
    if mode is LayoutMode.CONTEXTUALIZED:
        emb = contextualize(emb, params, num_heads, valid)
    return emb
