"""Document pages, vocabulary, JSONL ingestion and a synthetic page generator.

The generator places label-typed text blocks in label-typical page regions and
fills each block with words from that label's sub-vocabulary, so content is
predictable from geometry.
"""

import json
import logging
from collections import Counter
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import ValidationError
from .models import LABELS

log = logging.getLogger(__name__)

PAD, UNK, MASK, CLS = "[PAD]", "[UNK]", "[MASK]", "[CLS]"
SPECIALS = (PAD, UNK, MASK, CLS)
PAD_ID, UNK_ID, MASK_ID, CLS_ID = range(4)
LABEL_IDS = {name: i for i, name in enumerate(LABELS)}


@dataclass
class DocumentPage:
    tokens: list
    boxes: list
    page_width: float
    page_height: float
    doc_id: str = ""
    labels: Optional[list] = None

    def __post_init__(self):
        self.validate()

    def validate(self):
        if len(self.tokens) != len(self.boxes):
            raise ValidationError(f"{len(self.tokens)} tokens but {len(self.boxes)} boxes")
        if self.labels is not None and len(self.labels) != len(self.tokens):
            raise ValidationError(f"{len(self.tokens)} tokens but {len(self.labels)} labels")
        if not (self.page_width > 0 and self.page_height > 0):
            raise ValidationError("page dimensions must be positive")
        for i, b in enumerate(self.boxes):
            if len(b) != 4:
                raise ValidationError(f"box {i} must have 4 coordinates")
            if b[2] < b[0] or b[3] < b[1]:
                raise ValidationError(f"inverted bounding box {tuple(b)} at token {i}")
        if self.labels is not None:
            for i, lab in enumerate(self.labels):
                if not (isinstance(lab, int) and 0 <= lab < len(LABELS)):
                    raise ValidationError(f"label {lab!r} at token {i} outside the {len(LABELS)}-label set")

    def to_json(self):
        d = {
            "doc_id": self.doc_id,
            "tokens": list(self.tokens),
            "boxes": [list(b) for b in self.boxes],
            "page_width": self.page_width,
            "page_height": self.page_height,
        }
        if self.labels is not None:
            d["labels"] = list(self.labels)
        return json.dumps(d, separators=(",", ":"))


class JsonlError(ValidationError):
    def __init__(self, line_no, message):
        self.line_no = line_no
        super().__init__(f"line {line_no}: {message}")


def _page_from_obj(obj):
    if not isinstance(obj, dict):
        raise ValidationError("expected a JSON object")
    for key in ("tokens", "boxes", "page_width", "page_height"):
        if key not in obj:
            raise ValidationError(f"missing key {key!r}")
    labels = obj.get("labels")
    if labels is not None:
        labels = [LABEL_IDS[x] if isinstance(x, str) and x in LABEL_IDS else x for x in labels]
    return DocumentPage(
        tokens=[str(t) for t in obj["tokens"]],
        boxes=[tuple(b) for b in obj["boxes"]],
        page_width=obj["page_width"],
        page_height=obj["page_height"],
        doc_id=str(obj.get("doc_id", "")),
        labels=labels,
    )


def load_jsonl(path, fail_fast=True, errors=None):
    """Yield validated pages from a JSONL file.

    With ``fail_fast=False`` bad lines are logged, appended to ``errors`` (if a
    list is given) and skipped.
    """
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                page = _page_from_obj(json.loads(line))
            except (ValueError, TypeError) as exc:
                err = JsonlError(line_no, str(exc))
                if fail_fast:
                    raise err from exc
                log.warning("%s", err)
                if errors is not None:
                    errors.append(err)
                continue
            yield page


def write_jsonl(path, pages):
    with open(path, "w", encoding="utf-8") as fh:
        for p in pages:
            fh.write(p.to_json() + "\n")


@dataclass
class Vocabulary:
    itos: list

    def __post_init__(self):
        if tuple(self.itos[:4]) != SPECIALS:
            raise ValidationError("vocabulary must start with the special tokens")
        self.stoi = {t: i for i, t in enumerate(self.itos)}

    def __len__(self):
        return len(self.itos)

    def encode(self, tokens):
        return [self.stoi.get(t, UNK_ID) for t in tokens]

    def to_json(self):
        return json.dumps({"tokens": self.itos})

    @classmethod
    def from_json(cls, text):
        return cls(json.loads(text)["tokens"])


def build_vocab(pages, max_size):
    """Most frequent tokens first, ties lexicographic, specials at ids 0-3."""
    if max_size <= len(SPECIALS):
        raise ValidationError("max_size must exceed the number of special tokens")
    counts = Counter(t for p in pages for t in p.tokens if t not in SPECIALS)
    ranked = sorted(counts, key=lambda t: (-counts[t], t))
    return Vocabulary(list(SPECIALS) + ranked[: max_size - len(SPECIALS)])


# regions are (x_lo, x_hi, y_lo, y_hi) page fractions for the block's top-left
# corner; widths are page fractions; lines is the max height in text lines;
# ``vocab`` shares another label's word list
DEFAULT_TEMPLATES = {
    "title": dict(region=(0.15, 0.3, 0.03, 0.06), width=(0.4, 0.7), lines=(1, 2), tokens=(3, 7), glyph=1.8),
    "author": dict(region=(0.2, 0.35, 0.11, 0.14), width=(0.3, 0.6), lines=(1, 1), tokens=(2, 5), glyph=1.0),
    "date": dict(region=(0.65, 0.75, 0.17, 0.19), width=(0.15, 0.25), lines=(1, 1), tokens=(2, 4), glyph=0.9),
    "abstract": dict(region=(0.15, 0.2, 0.22, 0.26), width=(0.6, 0.7), lines=(3, 5), tokens=(8, 14), glyph=0.9),
    "section": dict(region=(0.08, 0.1, 0.36, 0.8), width=(0.3, 0.45), lines=(1, 1), tokens=(2, 4), glyph=1.3),
    "paragraph": dict(region=(0.08, 0.1, 0.36, 0.8), width=(0.8, 0.84), lines=(2, 4), tokens=(8, 14), glyph=1.0),
    "list": dict(region=(0.2, 0.25, 0.36, 0.8), width=(0.5, 0.7), lines=(2, 4), tokens=(6, 10), glyph=1.0, vocab="paragraph"),
    "equation": dict(region=(0.35, 0.4, 0.36, 0.8), width=(0.25, 0.35), lines=(1, 1), tokens=(3, 6), glyph=1.1),
    "table": dict(region=(0.2, 0.3, 0.36, 0.8), width=(0.45, 0.6), lines=(2, 4), tokens=(6, 12), glyph=0.7),
    "caption": dict(region=(0.2, 0.3, 0.36, 0.8), width=(0.45, 0.6), lines=(1, 2), tokens=(4, 8), glyph=1.0, vocab="table"),
    "reference": dict(region=(0.08, 0.1, 0.8, 0.86), width=(0.8, 0.84), lines=(2, 3), tokens=(6, 10), glyph=0.8),
    "footer": dict(region=(0.4, 0.45, 0.95, 0.96), width=(0.2, 0.3), lines=(1, 1), tokens=(2, 4), glyph=0.8),
}


@dataclass
class GeneratorConfig:
    page_width: float = 612.0
    page_height: float = 792.0
    blocks_per_page: tuple = (3, 8)
    max_tokens: int = 63
    label_vocab_size: int = 12
    theme_size: int = 2
    common_vocab_size: int = 8
    common_rate: float = 0.05
    successor_rate: float = 0.95
    glyph_width: float = 6.0
    line_height: float = 11.0
    max_retries: int = 30
    templates: dict = field(default_factory=lambda: {k: dict(v) for k, v in DEFAULT_TEMPLATES.items()})

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        if "blocks_per_page" in d:
            d["blocks_per_page"] = tuple(d["blocks_per_page"])
        return cls(**d)


def label_vocabularies(cfg):
    """Per-label word lists plus the shared pool used by every label.

    Labels whose template names the same ``vocab`` group get the same list, so
    only geometry separates them.
    """
    group = {lab: cfg.templates[lab].get("vocab", lab) for lab in LABELS}
    words = {lab: [f"{group[lab][:3]}{i:02d}" for i in range(cfg.label_vocab_size)] for lab in LABELS}
    common = [f"cmn{i:02d}" for i in range(cfg.common_vocab_size)]
    return words, common


def _block_words(rng, label, count, cfg, vocab, common):
    # each block recycles a small theme drawn from its label's words
    own = vocab[label]
    theme = [own[int(i)] for i in rng.choice(len(own), size=min(cfg.theme_size, len(own)), replace=False)]
    weights = 1.0 / np.arange(1, len(common) + 1)
    weights /= weights.sum()
    out = []
    cur = int(rng.integers(len(theme)))
    for _ in range(count):
        if rng.random() < cfg.common_rate:
            out.append(common[int(rng.choice(len(common), p=weights))])
            continue
        out.append(theme[cur])
        cur = (cur + 1) % len(theme) if rng.random() < cfg.successor_rate else int(rng.integers(len(theme)))
    return out


def _overlaps(a, b, gap):
    return not (a[2] + gap <= b[0] or b[2] + gap <= a[0] or a[3] + gap <= b[1] or b[3] + gap <= a[1])


def _layout_block(rng, words, x, y, width, glyph, cfg):
    gw = cfg.glyph_width * glyph
    lh = cfg.line_height * glyph
    boxes = []
    cx, cy = x, y
    for w in words:
        ww = gw * len(w)
        if cx > x and cx + ww > x + width:
            cx, cy = x, cy + lh * 1.2
        boxes.append((round(cx, 2), round(cy, 2), round(cx + ww, 2), round(cy + lh, 2)))
        cx += ww + gw
    return boxes


def generate_page(rng, page_index, cfg):
    vocab, common = label_vocabularies(cfg)
    W, H = cfg.page_width, cfg.page_height
    lo, hi = cfg.blocks_per_page
    n_blocks = int(rng.integers(lo, hi + 1))
    labels = [LABELS[int(i)] for i in rng.choice(len(LABELS), size=n_blocks, replace=False)]
    placed = []
    for label in labels:
        t = cfg.templates[label]
        count = int(rng.integers(t["tokens"][0], t["tokens"][1] + 1))
        words = _block_words(rng, label, count, cfg, vocab, common)
        for _ in range(cfg.max_retries):
            x = rng.uniform(t["region"][0], t["region"][1]) * W
            y = rng.uniform(t["region"][2], t["region"][3]) * H
            width = rng.uniform(*t["width"]) * W
            boxes = _layout_block(rng, words, x, y, width, t["glyph"], cfg)
            max_lines = t["lines"][1]
            n_lines = len({b[1] for b in boxes})
            if n_lines > max_lines + 2:
                continue
            ext = (min(b[0] for b in boxes), min(b[1] for b in boxes), max(b[2] for b in boxes), max(b[3] for b in boxes))
            if ext[2] > W or ext[3] > H:
                continue
            if any(_overlaps(ext, other[0], 2.0) for other in placed):
                continue
            placed.append((ext, label, words, boxes))
            break
        else:
            log.warning("page %d: could not place %s block, skipping", page_index, label)
    # reading order: top-to-bottom by block, left-to-right inside
    placed.sort(key=lambda p: (p[0][1], p[0][0]))
    tokens, boxes, labs = [], [], []
    for _, label, words, bxs in placed:
        for w, b in zip(words, bxs):
            if len(tokens) >= cfg.max_tokens:
                break
            tokens.append(w)
            boxes.append(b)
            labs.append(LABEL_IDS[label])
    return DocumentPage(tokens, boxes, W, H, doc_id=f"synth-{page_index:06d}", labels=labs)


def page_extents(page):
    """Bounding rectangle of each contiguous same-label run (blocks in reading order)."""
    out = []
    start = 0
    for i in range(1, len(page.tokens) + 1):
        if i == len(page.tokens) or page.labels[i] != page.labels[start]:
            bs = page.boxes[start:i]
            out.append((min(b[0] for b in bs), min(b[1] for b in bs), max(b[2] for b in bs), max(b[3] for b in bs)))
            start = i
    return out


def generate_synthetic(cfg, seed, num_pages):
    """Deterministic stream of labeled pages; page ``i`` uses seed ``(seed, i)``."""
    for i in range(num_pages):
        rng = np.random.default_rng([seed, i])
        yield generate_page(rng, i, cfg)


def split(pages, ratios=(0.8, 0.1, 0.1), seed=0):
    """Page-level shuffle then partition; train and valid are floored, test takes the rest."""
    pages = list(pages)
    if abs(sum(ratios) - 1.0) > 1e-9:
        raise ValidationError(f"split ratios must sum to 1, got {ratios}")
    if len(pages) < len(ratios):
        raise ValidationError(f"{len(pages)} pages cannot fill {len(ratios)} splits")
    order = np.random.default_rng(seed).permutation(len(pages))
    n = len(pages)
    n_train = int(np.floor(ratios[0] * n + 1e-9))
    n_valid = int(np.floor(ratios[1] * n + 1e-9))
    idx = [order[:n_train], order[n_train : n_train + n_valid], order[n_train + n_valid :]]
    return tuple([pages[i] for i in part] for part in idx)
