"""MVLM masking, training loops, perplexity and layout-analysis metrics."""

import logging
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .corpus import CLS_ID, MASK_ID, PAD_ID, SPECIALS
from .errors import NonFiniteError, UndefinedLossError, ValidationError
from .layout import normalize_boxes
from .models import LABELS
from .numerics import checkpoint as ckpt
from .numerics import tensor as T
from .numerics.optim import OptimizerState, adamw_step

log = logging.getLogger(__name__)

IGNORE = -100
OBJECTIVES = ("mvlm", "mlm", "token_classification")


@dataclass
class MaskingPolicy:
    mask_rate: float = 0.15
    replace_mask: float = 0.8
    replace_random: float = 0.1
    keep: float = 0.1
    seed: int = 0

    def __post_init__(self):
        if not 0.0 < self.mask_rate < 1.0:
            raise ValidationError("mask_rate must lie in (0, 1)")
        if abs(self.replace_mask + self.replace_random + self.keep - 1.0) > 1e-9:
            raise ValidationError("replacement fractions must sum to 1")


def masked_count(n_maskable, rate=0.15):
    """max(1, round-half-up(rate * n)); integer arithmetic for the default rate."""
    if rate == 0.15:
        return max(1, (15 * n_maskable + 50) // 100)
    return max(1, int(math.floor(rate * n_maskable + 0.5)))


@dataclass
class MaskedPage:
    tokens: np.ndarray
    boxes: np.ndarray
    targets: np.ndarray
    selected: np.ndarray
    kinds: list


def apply_mvlm_masking(tokens, boxes, policy, rng, vocab_size, maskable=None):
    """Corrupt a page's token ids for masked-token prediction; boxes pass through untouched.

    Returns ``None`` (with a warning) when nothing is maskable.
    """
    tokens = np.asarray(tokens, dtype=np.int64)
    if maskable is None:
        maskable = tokens >= len(SPECIALS)
    candidates = np.flatnonzero(maskable)
    if candidates.size == 0:
        log.warning("page has no maskable tokens; skipping")
        return None
    count = masked_count(candidates.size, policy.mask_rate)
    selected = np.sort(rng.choice(candidates, size=count, replace=False))
    draws = rng.random(count)
    corrupted = tokens.copy()
    targets = np.full(tokens.shape, IGNORE, dtype=np.int64)
    targets[selected] = tokens[selected]
    kinds = []
    for pos, u in zip(selected, draws):
        if u < policy.replace_mask:
            corrupted[pos] = MASK_ID
            kinds.append("mask")
        elif u < policy.replace_mask + policy.replace_random:
            corrupted[pos] = int(rng.integers(len(SPECIALS), vocab_size))
            kinds.append("random")
        else:
            kinds.append("keep")
    return MaskedPage(corrupted, boxes, targets, selected, kinds)


@dataclass
class EncodedPage:
    ids: np.ndarray
    boxes: np.ndarray
    labels: np.ndarray
    doc_id: str = ""


def encode_page(page, vocab, max_len):
    """Prepend [CLS] with box (0,0,0,0), normalize boxes, truncate to ``max_len``."""
    keep = max_len - 1
    ids = np.array([CLS_ID] + vocab.encode(page.tokens[:keep]), dtype=np.int64)
    boxes = np.zeros((len(ids), 4), dtype=np.int64)
    if len(ids) > 1:
        boxes[1:] = normalize_boxes(page.boxes[:keep], page.page_width, page.page_height)
    labels = np.full(len(ids), IGNORE, dtype=np.int64)
    if page.labels is not None:
        labels[1:] = page.labels[:keep]
    return EncodedPage(ids, boxes, labels, page.doc_id)


@dataclass
class Batch:
    tokens: np.ndarray
    boxes: np.ndarray
    valid: np.ndarray
    targets: np.ndarray


def collate(pages, targets=None):
    """Pad to the longest page; ``targets`` defaults to the page labels."""
    n = max(len(p.ids) for p in pages)
    b = len(pages)
    tok = np.full((b, n), PAD_ID, dtype=np.int64)
    box = np.zeros((b, n, 4), dtype=np.int64)
    valid = np.zeros((b, n), dtype=bool)
    tgt = np.full((b, n), IGNORE, dtype=np.int64)
    for i, p in enumerate(pages):
        m = len(p.ids)
        tok[i, :m] = p.ids
        box[i, :m] = p.boxes
        valid[i, :m] = True
        tgt[i, :m] = p.labels if targets is None else targets[i]
    return Batch(tok, box, valid, tgt)


def mvlm_batch(pages, policy, rng, vocab_size, on_batch=None):
    masked = []
    for p in pages:
        m = apply_mvlm_masking(p.ids, p.boxes, policy, rng, vocab_size)
        if m is None:
            m = MaskedPage(p.ids.copy(), p.boxes, np.full(len(p.ids), IGNORE), np.array([], dtype=np.int64), [])
        masked.append(m)
    view = [EncodedPage(m.tokens, m.boxes, m.targets, p.doc_id) for m, p in zip(masked, pages)]
    batch = collate(view)
    if on_batch is not None:
        on_batch(pages, masked, batch)
    return batch


@dataclass
class Schedule:
    steps: int = 500
    batch_size: int = 8
    learning_rate: float = 1e-3
    warmup_steps: int = 50
    weight_decay: float = 0.01
    seed: int = 0
    epochs: Optional[int] = None
    checkpoint_every: int = 0

    def total_steps(self, num_pages):
        if self.epochs is not None:
            return self.epochs * math.ceil(num_pages / self.batch_size)
        return self.steps


def _batches(num_pages, batch_size, rng):
    while True:
        order = rng.permutation(num_pages)
        for s in range(0, num_pages, batch_size):
            yield order[s : s + batch_size]


def batch_loss(model, batch, objective):
    head = "token_classifier" if objective == "token_classification" else "mvlm"
    logits = model.logits(batch.tokens, batch.boxes, batch.valid, head=head)
    return T.cross_entropy(logits, batch.targets, IGNORE)


@dataclass
class TrainResult:
    losses: list = field(default_factory=list)
    checkpoints: list = field(default_factory=list)
    state: Optional[OptimizerState] = None


def train(model, pages, objective, schedule, policy=None, on_batch=None, checkpoint_path=None, on_step=None):
    """Run AdamW on ``objective`` over encoded ``pages``; deterministic given the seeds.

    ``on_batch(pages, masked_pages, batch)`` observes every MVLM batch;
    ``on_step(step, loss)`` sees each loss as it is produced.
    """
    if objective not in OBJECTIVES:
        raise ValidationError(f"unknown objective {objective!r}")
    if not pages:
        raise ValidationError("training corpus is empty")
    policy = policy or MaskingPolicy(seed=schedule.seed)
    batch_rng = np.random.default_rng([schedule.seed, 1])
    mask_rng = np.random.default_rng([policy.seed, 2])
    state = OptimizerState(
        learning_rate=schedule.learning_rate,
        weight_decay=schedule.weight_decay,
        warmup_steps=schedule.warmup_steps,
    )
    params = model.trainable(objective)
    vocab_size = model.config.vocab_size
    result = TrainResult(state=state)
    batches = _batches(len(pages), schedule.batch_size, batch_rng)
    for step in range(schedule.total_steps(len(pages))):
        chosen = [pages[i] for i in next(batches)]
        if objective == "token_classification":
            batch = collate(chosen)
        else:
            batch = mvlm_batch(chosen, policy, mask_rng, vocab_size, on_batch)
        for p in model.params.values():
            p.zero_grad()
        try:
            loss = batch_loss(model, batch, objective)
        except UndefinedLossError:
            log.warning("step %d: batch has no targets, skipped", step)
            continue
        value = loss.item()
        if not math.isfinite(value):
            raise NonFiniteError(f"non-finite loss at step {step}")
        loss.backward()
        adamw_step(params, {n: p.grad for n, p in params.items()}, state)
        result.losses.append(value)
        if on_step is not None:
            on_step(step, value)
        if checkpoint_path and schedule.checkpoint_every and (step + 1) % schedule.checkpoint_every == 0:
            path = f"{checkpoint_path}.step{step + 1}"
            ckpt.save(path, model.arrays())
            result.checkpoints.append(path)
    if checkpoint_path:
        ckpt.save(checkpoint_path, model.arrays())
        result.checkpoints.append(checkpoint_path)
    return result


def perplexity(model, pages, policy=None, seed=1234, batch_size=8):
    """exp(mean NLL) over masked positions drawn with a fixed evaluation seed."""
    if not pages:
        raise ValidationError("perplexity needs a nonempty dataset")
    policy = policy or MaskingPolicy(seed=seed)
    rng = np.random.default_rng([seed, 3])
    total, count = 0.0, 0
    with T.no_grad():
        for s in range(0, len(pages), batch_size):
            batch = mvlm_batch(pages[s : s + batch_size], policy, rng, model.config.vocab_size)
            n = int((batch.targets != IGNORE).sum())
            if n == 0:
                continue
            total += batch_loss(model, batch, "mvlm").item() * n
            count += n
    if count == 0:
        raise UndefinedLossError("no masked positions to score")
    return math.exp(total / count)


@dataclass
class EvalReport:
    per_label: dict
    macro: dict
    token_count: int
    perplexity: Optional[float] = None

    def to_dict(self):
        d = {"macro": self.macro, "per_label": self.per_label, "token_count": self.token_count}
        if self.perplexity is not None:
            d["perplexity"] = self.perplexity
        return d


def _prf(tp, fp, fn):
    p = tp / (tp + fp) if tp + fp else 0.0
    r = tp / (tp + fn) if tp + fn else 0.0
    f = 2 * p * r / (p + r) if p + r else 0.0
    return p, r, f


def sequence_labeling_metrics(predictions, gold, label_set=LABELS):
    """Token-level per-label and macro precision/recall/F1; gold ``-100`` is skipped."""
    pred = np.concatenate([np.ravel(x) for x in predictions]) if _nested(predictions) else np.ravel(predictions)
    ref = np.concatenate([np.ravel(x) for x in gold]) if _nested(gold) else np.ravel(gold)
    if pred.shape != ref.shape:
        raise ValidationError(f"{pred.size} predictions for {ref.size} gold labels")
    keep = ref != IGNORE
    pred, ref = pred[keep].astype(np.int64), ref[keep].astype(np.int64)
    k = len(label_set)
    for arr in (pred, ref):
        if arr.size and (arr.min() < 0 or arr.max() >= k):
            raise ValidationError(f"label id outside [0, {k})")
    per_label = {}
    sums = np.zeros(3)
    for c, name in enumerate(label_set):
        tp = int(((pred == c) & (ref == c)).sum())
        fp = int(((pred == c) & (ref != c)).sum())
        fn = int(((pred != c) & (ref == c)).sum())
        p, r, f = _prf(tp, fp, fn)
        per_label[name] = {"precision": p, "recall": r, "f1": f, "support": tp + fn}
        sums += (p, r, f)
    macro = dict(zip(("precision", "recall", "f1"), (sums / k).tolist()))
    return EvalReport(per_label, macro, int(ref.size))


def _nested(x):
    return len(x) > 0 and np.ndim(x[0]) > 0


def predict_labels(model, pages, batch_size=8):
    preds, gold = [], []
    with T.no_grad():
        for s in range(0, len(pages), batch_size):
            batch = collate(pages[s : s + batch_size])
            logits = model.logits(batch.tokens, batch.boxes, batch.valid, head="token_classifier")
            arg = logits.data.argmax(axis=-1)
            keep = batch.targets != IGNORE
            preds.append(arg[keep])
            gold.append(batch.targets[keep])
    return np.concatenate(preds), np.concatenate(gold)


def evaluate_labeling(model, pages, batch_size=8):
    return sequence_labeling_metrics(*predict_labels(model, pages, batch_size))
