"""Attention kernels: standard self-attention, layout-only skim attention,
its per-layer application, a banded long-input variant, and compute accounting.

Tensors are ``(batch, seq, hidden)``. Masks are boolean allow-sets broadcastable
to ``(batch, heads, seq, seq)``; ``True`` means the key may be attended.
"""

import math
from dataclasses import dataclass

import numpy as np

from .errors import AllMaskedRowError, DimensionError, ValidationError
from .numerics import tensor as T

# incremented on every skim matrix construction; tests use it to assert the
# matrix is built once per forward pass
SKIM_CALLS = {"count": 0}


def linear(x, params, name):
    return T.add(T.matmul(x, params[f"{name}.w"]), params[f"{name}.b"])


def linear_shapes(name, d_in, d_out):
    return {f"{name}.w": (d_in, d_out), f"{name}.b": (d_out,)}


def split_heads(x, num_heads):
    b, n, d = x.shape
    return T.transpose(T.reshape(x, (b, n, num_heads, d // num_heads)), (0, 2, 1, 3))


def merge_heads(x):
    b, h, n, dh = x.shape
    return T.reshape(T.transpose(x, (0, 2, 1, 3)), (b, n, h * dh))


def expand_mask(mask, batch, n):
    """Normalize a mask to a 4-D boolean array broadcastable to (B, h, n, n)."""
    if mask is None:
        return None
    if hasattr(mask, "to_dense"):
        mask = mask.to_dense(n)
    m = np.asarray(mask, dtype=bool)
    if m.ndim == 2:
        m = m[None, None]
    elif m.ndim == 3:
        m = m[:, None]
    if m.ndim != 4 or m.shape[-1] != n or m.shape[-2] not in (1, n) or m.shape[0] not in (1, batch):
        raise DimensionError(f"mask shape {np.shape(mask)} incompatible with sequence length {n}")
    return m


def key_padding_mask(valid):
    """(B, n) validity -> (B, 1, 1, n) key allow-mask."""
    if valid is None:
        return None
    return np.asarray(valid, dtype=bool)[:, None, None, :]


def combine_masks(*masks):
    out = None
    for m in masks:
        if m is None:
            continue
        out = m if out is None else (out & m)
    return out


def _ensure_batch(x):
    if x.ndim == 2:
        return T.reshape(x, (1,) + x.shape), True
    return x, False


def standard_attention(x, params, prefix, num_heads, mask=None, valid=None):
    """Multi-head softmax(QK^T / sqrt(d_head)) V followed by an output projection.

    ``mask`` is an n x n allow-set (or batched ``(B, n, n)``, or an object with
    ``to_dense``); ``valid`` is ``(B, n)`` key validity for padding.
    """
    x, squeeze = _ensure_batch(x)
    b, n, d = x.shape
    if d % num_heads:
        raise DimensionError(f"hidden size {d} not divisible by {num_heads} heads")
    dh = d // num_heads
    q = split_heads(linear(x, params, f"{prefix}.q"), num_heads)
    k = split_heads(linear(x, params, f"{prefix}.k"), num_heads)
    v = split_heads(linear(x, params, f"{prefix}.v"), num_heads)
    scores = T.scale(T.matmul(q, T.transpose(k, (0, 1, 3, 2))), 1.0 / math.sqrt(dh))
    m = combine_masks(expand_mask(mask, b, n), key_padding_mask(valid))
    try:
        probs = T.softmax_rows(scores, m)
    except AllMaskedRowError as exc:
        raise AllMaskedRowError(exc.row % n) from exc
    out = linear(merge_heads(T.matmul(probs, v)), params, f"{prefix}.o")
    return T.reshape(out, (n, d)) if squeeze else out


def attention_shapes(prefix, d):
    shapes = {}
    for part in ("q", "k", "v", "o"):
        shapes.update(linear_shapes(f"{prefix}.{part}", d, d))
    return shapes


@dataclass
class SkimAttentionParams:
    """Layout query/key projections for skim attention."""

    w_q: T.Tensor
    b_q: T.Tensor
    w_k: T.Tensor
    b_k: T.Tensor
    num_heads: int

    @property
    def head_dim(self):
        return self.w_q.shape[1] // self.num_heads

    @classmethod
    def from_params(cls, params, prefix, num_heads):
        p = cls(params[f"{prefix}.q.w"], params[f"{prefix}.q.b"], params[f"{prefix}.k.w"], params[f"{prefix}.k.b"], num_heads)
        if p.w_q.shape[1] % num_heads or p.head_dim < 1:
            raise DimensionError(f"projection width {p.w_q.shape[1]} not divisible into {num_heads} heads")
        return p


def skim_shapes(prefix, d_layout, num_heads, head_dim=None):
    width = d_layout if head_dim is None else num_heads * head_dim
    return {**linear_shapes(f"{prefix}.q", d_layout, width), **linear_shapes(f"{prefix}.k", d_layout, width)}


@dataclass
class SkimAttentionMatrix:
    """Row-stochastic per-head attention ``(B, h, n, n)`` plus key validity ``(B, n)``."""

    values: T.Tensor
    padding: np.ndarray

    @property
    def num_heads(self):
        return self.values.shape[1]

    @property
    def n(self):
        return self.values.shape[-1]

    def page(self, i):
        """Numpy ``(h, n_valid, n_valid)`` slice of page ``i`` with padding removed."""
        valid = np.flatnonzero(self.padding[i])
        return self.values.data[i][:, valid][:, :, valid]

    def head_mean(self, i=0):
        return self.page(i).mean(axis=0)


def _skim_scores(layout_repr, params):
    b, n, _ = layout_repr.shape
    h = params.num_heads
    q = split_heads(T.add(T.matmul(layout_repr, params.w_q), params.b_q), h)
    k = split_heads(T.add(T.matmul(layout_repr, params.w_k), params.b_k), h)
    return T.scale(T.matmul(q, T.transpose(k, (0, 1, 3, 2))), 1.0 / math.sqrt(params.head_dim))


def _prep_layout(layout_repr, padding):
    layout_repr, _ = _ensure_batch(layout_repr)
    b, n, _ = layout_repr.shape
    if n == 0:
        raise ValidationError("skim attention needs a nonempty sequence")
    if padding is None:
        padding = np.ones((b, n), dtype=bool)
    padding = np.asarray(padding, dtype=bool).reshape(b, n)
    return layout_repr, padding


def skim_attention(layout_repr, params, padding=None):
    """Layout-only attention matrix, computed once per page and shared by all layers.

    ``padding`` marks valid positions (``True`` = real token); padded keys get
    weight exactly 0.
    """
    SKIM_CALLS["count"] += 1
    layout_repr, padding = _prep_layout(layout_repr, padding)
    scores = _skim_scores(layout_repr, params)
    probs = T.softmax_rows(scores, key_padding_mask(padding))
    return SkimAttentionMatrix(probs, padding)


def band_mask(n, window_w):
    if window_w < 1 or window_w % 2 == 0:
        raise ValidationError(f"window width must be odd and >= 1, got {window_w}")
    half = min(window_w // 2, max(n - 1, 0))
    idx = np.arange(n)
    return np.abs(idx[:, None] - idx[None, :]) <= half


def windowed_skim_attention(layout_repr, params, window_w, padding=None):
    """Skim attention restricted to keys within ``window_w // 2`` positions in sequence order."""
    SKIM_CALLS["count"] += 1
    layout_repr, padding = _prep_layout(layout_repr, padding)
    n = layout_repr.shape[1]
    allow = combine_masks(band_mask(n, window_w)[None, None], key_padding_mask(padding))
    # padded query rows may lose every in-band key; let them see all valid keys
    starving = ~allow.any(axis=-1, keepdims=True)
    allow = allow | (starving & key_padding_mask(padding))
    scores = _skim_scores(layout_repr, params)
    probs = T.softmax_rows(scores, allow)
    return SkimAttentionMatrix(probs, padding)


def apply_skim(A, x, params, prefix):
    """Mix layer-``prefix`` value projections of ``x`` with the shared skim matrix."""
    x, squeeze = _ensure_batch(x)
    b, n, d = x.shape
    if A.values.shape[-1] != n or A.values.shape[0] not in (1, b):
        raise DimensionError(f"skim matrix {A.values.shape} does not match representations {x.shape}")
    v = split_heads(linear(x, params, f"{prefix}.v"), A.num_heads)
    out = linear(merge_heads(T.matmul(A.values, v)), params, f"{prefix}.o")
    return T.reshape(out, (n, d)) if squeeze else out


def apply_skim_shapes(prefix, d):
    return {**linear_shapes(f"{prefix}.v", d, d), **linear_shapes(f"{prefix}.o", d, d)}


@dataclass(frozen=True)
class ComputeBudget:
    skim_seq_len: int
    standard_seq_len: int
    num_skim_attn: int
    num_standard_attn: int

    def __post_init__(self):
        for name in ("skim_seq_len", "standard_seq_len", "num_skim_attn", "num_standard_attn"):
            if getattr(self, name) < 0:
                raise ValidationError(f"{name} must be nonnegative")

    def total(self):
        return self.skim_seq_len**2 * self.num_skim_attn + self.standard_seq_len**2 * self.num_standard_attn


def compute_ratio(model, baseline):
    """Attention cost of ``model`` as a percentage of ``baseline``."""
    base = baseline.total()
    if base <= 0:
        raise ValidationError("baseline compute budget is zero")
    return 100.0 * model.total() / base


def layer_norm_shapes(name, d):
    return {f"{name}.g": (d,), f"{name}.b": (d,)}


def norm(x, params, name):
    return T.layer_norm(x, params[f"{name}.g"], params[f"{name}.b"])


def feed_forward(x, params, prefix):
    return linear(T.gelu(linear(x, params, f"{prefix}.ff1")), params, f"{prefix}.ff2")


def feed_forward_shapes(prefix, d, d_ff=None):
    d_ff = 4 * d if d_ff is None else d_ff
    return {**linear_shapes(f"{prefix}.ff1", d, d_ff), **linear_shapes(f"{prefix}.ff2", d_ff, d)}


def encoder_block(x, params, prefix, num_heads, mask=None, valid=None):
    """Pre-norm block: x + Attn(LN(x)), then x + FFN(LN(x))."""
    h = T.add(x, standard_attention(norm(x, params, f"{prefix}.ln1"), params, f"{prefix}.attn", num_heads, mask, valid))
    return T.add(h, feed_forward(norm(h, params, f"{prefix}.ln2"), params, prefix))


def encoder_block_shapes(prefix, d):
    return {
        **layer_norm_shapes(f"{prefix}.ln1", d),
        **attention_shapes(f"{prefix}.attn", d),
        **layer_norm_shapes(f"{prefix}.ln2", d),
        **feed_forward_shapes(prefix, d),
    }


def unit_attention(A, unit, page=0):
    """Average of the head-averaged skim rows over the token indices in ``unit``.

    Indices address the page's valid tokens; the result has one score per valid
    token.
    """
    unit = list(unit)
    if not unit:
        raise ValidationError("attention unit needs at least one token")
    mean = A.head_mean(page)
    if max(unit) >= mean.shape[0] or min(unit) < 0:
        raise ValidationError(f"unit index outside [0, {mean.shape[0]})")
    return mean[unit].mean(axis=0)
