import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from skimattn import skimmask as SM
from skimattn.attention import SkimAttentionMatrix
from skimattn.errors import ValidationError
from skimattn.numerics import tensor as T


def matrix(values, valid=None):
    v = np.asarray(values, dtype=np.float64)
    if v.ndim == 2:
        v = v[None, None]
    elif v.ndim == 3:
        v = v[None]
    valid = np.ones((1, v.shape[-1]), dtype=bool) if valid is None else np.asarray(valid)[None]
    return SkimAttentionMatrix(T.Tensor(v), valid)


def sort_select_oracle(scores, k):
    """Brute force: rank every foreign key by (score desc, index asc), keep self plus the best k-1."""
    n = len(scores)
    rows = []
    for i in range(n):
        ranked = sorted((j for j in range(n) if j != i), key=lambda j: (-scores[i][j], j))
        rows.append(sorted([i] + ranked[: min(k, n) - 1]))
    return rows


def random_stochastic(rng, h, n):
    s = rng.random((h, n, n))
    return s / s.sum(-1, keepdims=True)


def test_k_equals_n_is_full_mask(rng):
    m = SM.build_mask(matrix(random_stochastic(rng, 2, 5)), 5)
    assert m.rows == [list(range(5))] * 5
    assert m.to_dense().all()


def test_k_one_keeps_only_self(rng):
    m = SM.build_mask(matrix(random_stochastic(rng, 2, 4)), 1)
    assert m.rows == [[0], [1], [2], [3]]


def test_sort_select_oracle_with_ties():
    scores = np.array([
        [0.1, 0.4, 0.4, 0.1],
        [0.25, 0.25, 0.25, 0.25],
        [0.0, 0.5, 0.2, 0.3],
        [0.3, 0.3, 0.3, 0.1],
    ])
    for k in range(1, 5):
        assert SM.build_mask(matrix(scores), k).rows == sort_select_oracle(scores, k)
    # explicit expectations at k=2: ties go to the lower index
    assert SM.build_mask(matrix(scores), 2).rows == [[0, 1], [0, 1], [1, 2], [0, 3]]


def test_head_average_before_top_k():
    h0 = np.array([[0.9, 0.1, 0.0], [0.0, 0.2, 0.8], [0.5, 0.5, 0.0]])
    h1 = np.array([[0.0, 0.1, 0.9], [0.7, 0.3, 0.0], [0.0, 0.1, 0.9]])
    A = matrix(np.stack([h0, h1]))
    mean = (h0 + h1) / 2
    assert SM.build_mask(A, 2).rows == sort_select_oracle(mean, 2)


def test_padded_positions_never_selected(rng):
    vals = random_stochastic(rng, 2, 5)
    valid = np.array([True, False, True, True, False])
    vals[..., ~valid] = 0
    m = SM.build_mask(matrix(vals, valid), 3)
    assert m.n == 3 and all(len(r) == 3 for r in m.rows)
    dense = m.to_dense(5, valid)
    assert not dense[:, ~valid].any()


def test_k_below_one_is_error(rng):
    with pytest.raises(ValidationError):
        SM.build_mask(matrix(random_stochastic(rng, 1, 3)), 0)


def test_force_self_can_be_disabled():
    scores = np.array([[0.1, 0.9], [0.9, 0.1]])
    assert SM.build_mask(matrix(scores), 1, force_self=False).rows == [[1], [0]]


# ---------------------------------------------------------------- mask_io


def test_round_trip(rng):
    m = SM.build_mask(matrix(random_stochastic(rng, 2, 6)), 3)
    back = SM.loads(SM.dumps(m))
    assert back == m


def test_hand_written_document_parses():
    m = SM.loads('{"n": 3, "k": 2, "rows": [[0, 2], [0, 1], [1, 2]]}')
    assert (m.n, m.k, m.rows) == (3, 2, [[0, 2], [0, 1], [1, 2]])
    assert m.to_dense().tolist() == [[True, False, True], [True, True, False], [False, True, True]]


@pytest.mark.parametrize("doc, fragment", [
    ('{"n": 2, "k": 1, "rows": [[1], [1]]}', "own index"),
    ('{"n": 2, "k": 1, "rows": [[0], [5]]}', "outside"),
    ('{"n": 2, "k": 2, "rows": [[1, 0], [0, 1]]}', "increasing"),
    ('{"n": 2, "k": 2, "rows": [[0, 1]]}', "rows for n"),
    ('{"n": 2, "k": 2, "rows": [[0], [0, 1]]}', "entries"),
    ('{"n": 2, "rows": [[0], [1]]}', "exactly the keys"),
    ('{"n": 2, "k": 1, "rows": [[0], [1]], "x": 1}', "exactly the keys"),
    ('{"n": 2, "k": 1, "rows": [[0.5], [1]]}', "non-integer"),
    ("not json", "malformed"),
    ('{"n": 2, "k": 1, "rows": [0, 1]}', "list of index lists"),
])
def test_malformed_documents_rejected(doc, fragment):
    with pytest.raises(SM.MaskFormatError, match=fragment):
        SM.loads(doc)


def test_dense_rejects_validity_mismatch():
    m = SM.loads('{"n": 2, "k": 1, "rows": [[0], [1]]}')
    with pytest.raises(ValidationError):
        m.to_dense(3, np.array([True, True, True]))


# ---------------------------------------------------------------- properties


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(1, 9), st.integers(1, 3))
def test_monotone_in_k(seed, n, h):
    rng = np.random.default_rng(seed)
    # quantized scores make ties common
    vals = np.round(random_stochastic(rng, h, n), 1)
    A = matrix(vals)
    masks = [SM.build_mask(A, k) for k in range(1, n + 2)]
    for small, big in zip(masks, masks[1:]):
        assert small.is_subset_of(big)
    for k, m in enumerate(masks, 1):
        m.validate()
        assert m.rows == sort_select_oracle(vals.mean(0), k)
