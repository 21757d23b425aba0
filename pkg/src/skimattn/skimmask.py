"""Top-k attention masks derived from a skim matrix, and their JSON form."""

import json
from dataclasses import dataclass

import numpy as np

from .errors import ValidationError


class MaskFormatError(ValidationError):
    pass


@dataclass
class AttentionMask:
    """Per-query sorted lists of attendable key indices over the valid tokens."""

    n: int
    k: int
    rows: list

    def validate(self, require_self=True):
        if not isinstance(self.n, int) or self.n < 1:
            raise MaskFormatError(f"mask length must be a positive integer, got {self.n!r}")
        if not isinstance(self.k, int) or self.k < 1:
            raise MaskFormatError(f"mask k must be a positive integer, got {self.k!r}")
        if len(self.rows) != self.n:
            raise MaskFormatError(f"mask has {len(self.rows)} rows for n={self.n}")
        want = min(self.k, self.n)
        for i, row in enumerate(self.rows):
            if any(not isinstance(j, int) or isinstance(j, bool) for j in row):
                raise MaskFormatError(f"row {i} holds non-integer indices")
            if any(j < 0 or j >= self.n for j in row):
                raise MaskFormatError(f"row {i} has an index outside [0, {self.n})")
            if any(a >= b for a, b in zip(row, row[1:])):
                raise MaskFormatError(f"row {i} indices are not strictly increasing")
            if require_self and i not in row:
                raise MaskFormatError(f"row {i} is missing its own index")
            if len(row) != want:
                raise MaskFormatError(f"row {i} has {len(row)} entries, expected {want}")
        return self

    def to_dense(self, n_total=None, valid=None):
        """Boolean (n_total, n_total) allow-matrix; padded query rows see every valid key."""
        n_total = self.n if n_total is None else n_total
        valid_idx = np.arange(self.n) if valid is None else np.flatnonzero(valid)
        if len(valid_idx) != self.n:
            raise ValidationError(f"mask covers {self.n} tokens but {len(valid_idx)} are valid")
        dense = np.zeros((n_total, n_total), dtype=bool)
        for i, row in enumerate(self.rows):
            dense[valid_idx[i], valid_idx[row]] = True
        pad_rows = np.setdiff1d(np.arange(n_total), valid_idx)
        dense[np.ix_(pad_rows, valid_idx)] = True
        return dense

    def is_subset_of(self, other):
        return self.n == other.n and all(set(a) <= set(b) for a, b in zip(self.rows, other.rows))


def top_k_rows(scores, k, force_self=True):
    """Row-wise top-k of a square score matrix; ties go to the lower index."""
    n = scores.shape[0]
    kk = min(k, n)
    rows = []
    for i in range(n):
        # lexsort: last key is primary -> descending score, then ascending index
        order = np.lexsort((np.arange(n), -scores[i]))
        if force_self:
            chosen = [i] + [int(j) for j in order if j != i][: kk - 1]
        else:
            chosen = [int(j) for j in order[:kk]]
        rows.append(sorted(chosen))
    return rows


def build_mask(A, k, page=0, force_self=True):
    """Head-averaged top-k mask for one page of a :class:`SkimAttentionMatrix`.

    Only valid (non-padded) tokens take part. No gradient flows through this.
    """
    if k < 1:
        raise ValidationError(f"k must be >= 1, got {k}")
    scores = A.head_mean(page)
    return AttentionMask(scores.shape[0], int(k), top_k_rows(scores, k, force_self))


def dumps(mask):
    return json.dumps({"n": mask.n, "k": mask.k, "rows": mask.rows}, separators=(",", ":"))


def loads(text, require_self=True):
    try:
        doc = json.loads(text)
    except (json.JSONDecodeError, TypeError) as exc:
        raise MaskFormatError(f"malformed mask document: {exc}") from exc
    if not isinstance(doc, dict) or set(doc) != {"n", "k", "rows"}:
        raise MaskFormatError("mask document must have exactly the keys n, k, rows")
    if not isinstance(doc["rows"], list) or not all(isinstance(r, list) for r in doc["rows"]):
        raise MaskFormatError("rows must be a list of index lists")
    return AttentionMask(doc["n"], doc["k"], doc["rows"]).validate(require_self)
