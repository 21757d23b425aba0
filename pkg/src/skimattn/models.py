"""Encoders assembled from the attention kernels, plus task heads.

Parameters live in a flat ``{name: Tensor}`` dict so they round-trip through
the checkpoint format unchanged. Four architectures share the code:

- ``skimformer``: layout-only skim matrix built once, reused by every layer
- ``text``: BERT-like baseline with sequential position embeddings
- ``skim_embeddings``: text baseline plus projected pretrained layout embeddings
- ``skimming_mask``: text baseline whose attention is restricted by a top-k
  mask built from a pretrained skim module
"""

from dataclasses import asdict, dataclass, field, fields
from typing import Optional

import numpy as np

from . import attention as att
from . import layout as lay
from .errors import CheckpointError, DimensionError, ValidationError
from .numerics import tensor as T

LABELS = (
    "abstract",
    "author",
    "caption",
    "date",
    "equation",
    "footer",
    "list",
    "paragraph",
    "reference",
    "section",
    "table",
    "title",
)

ARCHITECTURES = ("skimformer", "text", "skim_embeddings", "skimming_mask")
ATTENTION_KINDS = ("standard", "skim", "windowed_skim")


@dataclass
class ModelConfig:
    vocab_size: int = 512
    hidden_size: int = 32
    num_layers: int = 2
    num_heads: int = 2
    layout_hidden: Optional[int] = None
    contextualizer_layers: int = 2
    max_len: int = 64
    layout_mode: str = "true_layout"
    attention_kind: str = "skim"
    window_w: int = 9
    mask_top_k: Optional[int] = None
    architecture: str = "skimformer"
    num_labels: int = len(LABELS)
    init_std: float = 0.02
    layout_init_std: float = 0.2

    def __post_init__(self):
        if self.layout_hidden is None:
            self.layout_hidden = self.hidden_size
        self.layout_mode = lay.LayoutMode(self.layout_mode).value
        if self.architecture not in ARCHITECTURES:
            raise ValidationError(f"unknown architecture {self.architecture!r}")
        if self.attention_kind not in ATTENTION_KINDS:
            raise ValidationError(f"unknown attention kind {self.attention_kind!r}")
        if self.hidden_size % self.num_heads or self.layout_hidden % self.num_heads:
            raise ValidationError("hidden sizes must be divisible by num_heads")
        if self.max_len < 1:
            raise ValidationError("max_len must be >= 1")
        if self.architecture == "skimming_mask" and not self.mask_top_k:
            raise ValidationError("skimming_mask architecture needs mask_top_k")

    @property
    def uses_contextualizer(self):
        return self.layout_mode == lay.LayoutMode.CONTEXTUALIZED.value and self.contextualizer_layers > 0

    @property
    def has_skim_module(self):
        return self.architecture in ("skimformer", "skimming_mask")

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d):
        names = {f.name for f in fields(cls)}
        unknown = set(d) - names
        if unknown:
            raise ValidationError(f"unknown model config keys: {sorted(unknown)}")
        return cls(**d)


def _skim_module_shapes(cfg):
    dl = cfg.layout_hidden
    shapes = lay.layout_shapes(dl, cfg.max_len if cfg.layout_mode == "one_d_position" else None)
    if cfg.uses_contextualizer:
        shapes.update(lay.contextualizer_shapes(dl, cfg.contextualizer_layers))
    shapes.update(att.skim_shapes("skim", dl, cfg.num_heads))
    return shapes


def parameter_shapes(cfg, heads=True):
    """Name -> shape for every parameter; no allocation, so usable at paper scale."""
    d = cfg.hidden_size
    shapes = {"tok_emb": (cfg.vocab_size, d)}
    if cfg.architecture == "skimformer":
        shapes.update(_skim_module_shapes(cfg))
        for k in range(cfg.num_layers):
            p = f"layer.{k}"
            shapes.update(att.layer_norm_shapes(f"{p}.ln1", d))
            shapes.update(att.apply_skim_shapes(f"{p}.attn", d))
            shapes.update(att.layer_norm_shapes(f"{p}.ln2", d))
            shapes.update(att.feed_forward_shapes(p, d))
    else:
        shapes["pos_emb"] = (cfg.max_len, d)
        for k in range(cfg.num_layers):
            shapes.update(att.encoder_block_shapes(f"layer.{k}", d))
        if cfg.architecture == "skim_embeddings":
            shapes.update(lay.layout_shapes(cfg.layout_hidden))
            shapes["layout_proj.w"] = (cfg.layout_hidden, d)
        elif cfg.architecture == "skimming_mask":
            shapes.update(_skim_module_shapes(cfg))
    shapes.update(att.layer_norm_shapes("ln_f", d))
    if heads:
        # MVLM decoder is tied to tok_emb; only its bias is separate
        shapes["head.mvlm.b"] = (cfg.vocab_size,)
        shapes.update(att.linear_shapes("head.cls", d, cfg.num_labels))
    return shapes


def parameter_count(cfg, heads=False):
    return int(sum(np.prod(s, dtype=np.int64) for s in parameter_shapes(cfg, heads=heads).values()))


def frozen_names(cfg):
    """Parameters not updated by training (the skim module of a SkimmingMask host)."""
    if cfg.architecture != "skimming_mask":
        return set()
    return set(_skim_module_shapes(cfg))


def init_params(cfg, seed=0, pretrained=None):
    """Seeded N(0, init_std) weights, zero biases, unit layer-norm gains.

    Layout tables and skim projections use the wider ``layout_init_std`` so the
    skim matrix is geometry-dependent from the first step.

    Entries of ``pretrained`` whose names appear in the model overwrite the
    fresh values; a shape disagreement raises :class:`CheckpointError`.
    """
    rng = np.random.default_rng(seed)
    shapes = parameter_shapes(cfg)
    params = {}
    for name in sorted(shapes):
        shape = shapes[name]
        if name.endswith(".g"):
            data = np.ones(shape)
        elif name.endswith(".b"):
            data = np.zeros(shape)
        else:
            std = cfg.layout_init_std if name.startswith(("layout.", "skim.")) else cfg.init_std
            data = rng.normal(0.0, std, size=shape)
        params[name] = T.Tensor(data, requires_grad=True, name=name)
    if pretrained:
        load_into(params, pretrained, strict=False)
    needs = []
    if cfg.architecture == "skim_embeddings":
        needs = list(lay.LAYOUT_TABLES)
    elif cfg.architecture == "skimming_mask":
        needs = ["skim.q.w", "skim.k.w"] + list(lay.LAYOUT_TABLES)
    missing = [n for n in needs if not pretrained or n not in pretrained]
    if missing:
        raise CheckpointError(f"{cfg.architecture} needs pretrained layout weights; missing {missing}")
    return params


def load_into(params, arrays, strict=True):
    """Copy numpy ``arrays`` into ``params`` by name, reporting shape mismatches."""
    mismatches = []
    for name, arr in arrays.items():
        if name not in params:
            continue
        arr = np.asarray(arr.data if isinstance(arr, T.Tensor) else arr, dtype=np.float64)
        if arr.shape != params[name].shape:
            mismatches.append(f"{name}: checkpoint {arr.shape} vs model {params[name].shape}")
            continue
        params[name].data[...] = arr
    if mismatches:
        raise CheckpointError("shape mismatch: " + "; ".join(mismatches))
    if strict:
        absent = sorted(set(params) - set(arrays))
        if absent:
            raise CheckpointError(f"checkpoint lacks parameters: {absent[:5]}{'...' if len(absent) > 5 else ''}")
    return params


def _batchify(tokens, boxes=None, valid=None):
    tok = np.asarray(tokens, dtype=np.int64)
    single = tok.ndim == 1
    if single:
        tok = tok[None]
        boxes = None if boxes is None else np.asarray(boxes)[None]
        valid = None if valid is None else np.asarray(valid)[None]
    if valid is None:
        valid = np.ones(tok.shape, dtype=bool)
    if boxes is not None:
        boxes = np.asarray(boxes, dtype=np.int64)
        if boxes.shape[:2] != tok.shape:
            raise DimensionError(f"{tok.shape[1]} tokens but {boxes.shape[1]} boxes")
    return tok, boxes, np.asarray(valid, dtype=bool), single


def _check_len(cfg, n):
    if n > cfg.max_len:
        raise ValidationError(f"sequence length {n} exceeds max_len {cfg.max_len}")


def skim_matrix(boxes, cfg, params, valid):
    """Build the (once-per-page) skim matrix for batched normalized ``boxes``."""
    b, n = valid.shape
    positions = np.broadcast_to(np.arange(n), (b, n))
    rep = lay.layout_representation(boxes, positions, cfg.layout_mode, params, cfg.num_heads, valid if cfg.uses_contextualizer else None)
    sp = att.SkimAttentionParams.from_params(params, "skim", cfg.num_heads)
    if cfg.attention_kind == "windowed_skim":
        return att.windowed_skim_attention(rep, sp, cfg.window_w, valid)
    return att.skim_attention(rep, sp, valid)


def skimformer_forward(tokens, boxes, cfg, params, valid=None, return_skim=False):
    """Final hidden states of the Skimformer; text gets no position embeddings."""
    tok, boxes, valid, single = _batchify(tokens, boxes, valid)
    _check_len(cfg, tok.shape[1])
    A = skim_matrix(boxes, cfg, params, valid)
    x = T.embedding(params["tok_emb"], tok)
    for k in range(cfg.num_layers):
        p = f"layer.{k}"
        x = T.add(x, att.apply_skim(A, att.norm(x, params, f"{p}.ln1"), params, f"{p}.attn"))
        x = T.add(x, att.feed_forward(att.norm(x, params, f"{p}.ln2"), params, p))
    out = att.norm(x, params, "ln_f")
    if single:
        out = T.reshape(out, out.shape[1:])
    return (out, A) if return_skim else out


def _text_stack(x, cfg, params, mask, valid):
    for k in range(cfg.num_layers):
        x = att.encoder_block(x, params, f"layer.{k}", cfg.num_heads, mask, valid)
    return att.norm(x, params, "ln_f")


def _text_input(tok, params):
    n = tok.shape[1]
    return T.add(T.embedding(params["tok_emb"], tok), T.embedding(params["pos_emb"], np.arange(n)))


def text_encoder_forward(tokens, cfg, params, mask=None, valid=None):
    """BERT-like encoder; ``mask`` restricts attention (SkimmingMask path)."""
    tok, _, valid, single = _batchify(tokens, None, valid)
    _check_len(cfg, tok.shape[1])
    out = _text_stack(_text_input(tok, params), cfg, params, mask, valid)
    return T.reshape(out, out.shape[1:]) if single else out


def skim_embeddings_forward(tokens, boxes, cfg, params, valid=None):
    """Text encoder whose input adds a projection of Skimformer layout embeddings."""
    if not all(n in params for n in lay.LAYOUT_TABLES):
        raise CheckpointError("skim embeddings need pretrained layout tables")
    tok, boxes, valid, single = _batchify(tokens, boxes, valid)
    _check_len(cfg, tok.shape[1])
    layout = T.matmul(lay.embed_layout(boxes, params), params["layout_proj.w"])
    out = _text_stack(T.add(_text_input(tok, params), layout), cfg, params, None, valid)
    return T.reshape(out, out.shape[1:]) if single else out


def skimming_masks(boxes, cfg, params, valid, k=None):
    """Top-k masks from the frozen skim module, one per page, densified to (B, n, n)."""
    from .skimmask import build_mask

    k = cfg.mask_top_k if k is None else k
    with T.no_grad():
        A = skim_matrix(boxes, cfg, params, valid)
    b, n = valid.shape
    dense = np.zeros((b, n, n), dtype=bool)
    for i in range(b):
        m = build_mask(A, k, page=i)
        dense[i] = m.to_dense(n, valid[i])
    return dense


def skimming_mask_forward(tokens, boxes, cfg, params, valid=None):
    tok, boxes, valid, single = _batchify(tokens, boxes, valid)
    _check_len(cfg, tok.shape[1])
    mask = skimming_masks(boxes, cfg, params, valid)
    out = _text_stack(_text_input(tok, params), cfg, params, mask, valid)
    return T.reshape(out, out.shape[1:]) if single else out


def encode(tokens, boxes, cfg, params, valid=None):
    """Dispatch on ``cfg.architecture``."""
    arch = cfg.architecture
    if arch == "skimformer":
        return skimformer_forward(tokens, boxes, cfg, params, valid)
    if arch == "text":
        return text_encoder_forward(tokens, cfg, params, valid=valid)
    if arch == "skim_embeddings":
        return skim_embeddings_forward(tokens, boxes, cfg, params, valid)
    return skimming_mask_forward(tokens, boxes, cfg, params, valid)


def attach_head(hidden, params, head):
    """Per-position logits from the ``mvlm`` (tied to ``tok_emb``) or ``token_classifier`` head."""
    if head in ("mvlm", "mvlm_vocab"):
        w = T.transpose(params["tok_emb"], (1, 0))
        b = params["head.mvlm.b"]
    elif head in ("token_classifier", "cls"):
        w, b = params["head.cls.w"], params["head.cls.b"]
    else:
        raise ValueError(f"unknown head {head!r}")
    if hidden.shape[-1] != w.shape[0]:
        raise DimensionError(f"head {head} expects width {w.shape[0]}, got {hidden.shape[-1]}")
    return T.add(T.matmul(hidden, w), b)


def compute_budget(cfg, seq_len=None):
    """Attention operation counts in the accounting used for the compute ratio."""
    n = cfg.max_len if seq_len is None else seq_len
    skim = (cfg.contextualizer_layers + 1) if cfg.uses_contextualizer else 1
    if cfg.architecture == "skimformer":
        return att.ComputeBudget(n, n, skim, 0)
    if cfg.architecture == "skimming_mask":
        return att.ComputeBudget(n, min(cfg.mask_top_k, n), skim, cfg.num_layers)
    return att.ComputeBudget(0, n, 0, cfg.num_layers)


@dataclass
class Model:
    config: ModelConfig
    params: dict = field(repr=False)

    @classmethod
    def create(cls, config, seed=0, pretrained=None):
        return cls(config, init_params(config, seed, pretrained))

    def encode(self, tokens, boxes=None, valid=None):
        return encode(tokens, boxes, self.config, self.params, valid)

    def logits(self, tokens, boxes=None, valid=None, head="mvlm"):
        return attach_head(self.encode(tokens, boxes, valid), self.params, head)

    def trainable(self, objective):
        skip = frozen_names(self.config)
        unused = "head.cls" if objective in ("mvlm", "mlm") else "head.mvlm"
        return {n: p for n, p in self.params.items() if n not in skip and not n.startswith(unused)}

    def arrays(self):
        return {n: p.data for n, p in self.params.items()}
