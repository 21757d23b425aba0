import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import tensor_params
from skimattn import attention as att
from skimattn.errors import AllMaskedRowError, DimensionError, ValidationError
from skimattn.numerics import grad_check
from skimattn.numerics import tensor as T


def softmax_np(s):
    e = np.exp(s - s.max(-1, keepdims=True))
    return e / e.sum(-1, keepdims=True)


def skim_params(rng, d=4, h=2, std=0.5):
    p = tensor_params(att.skim_shapes("skim", d, h), rng, std)
    return p, att.SkimAttentionParams.from_params(p, "skim", h)


def const_matrix(M, h=1):
    """SkimAttentionMatrix with fixed per-head values, for apply_skim tests."""
    b, n = 1, M.shape[-1]
    vals = np.broadcast_to(M, (b, h, n, n)).copy()
    return att.SkimAttentionMatrix(T.Tensor(vals), np.ones((b, n), dtype=bool))


# ---------------------------------------------------------------- standard attention


def brute_force_attention(x, P, prefix, h):
    n, d = x.shape
    dh = d // h
    q = x @ P[f"{prefix}.q.w"] + P[f"{prefix}.q.b"]
    k = x @ P[f"{prefix}.k.w"] + P[f"{prefix}.k.b"]
    v = x @ P[f"{prefix}.v.w"] + P[f"{prefix}.v.b"]
    cat = np.zeros((n, d))
    for head in range(h):
        sl = slice(head * dh, (head + 1) * dh)
        for i in range(n):
            scores = [sum(q[i, sl][t] * k[j, sl][t] for t in range(dh)) / math.sqrt(dh) for j in range(n)]
            m = max(scores)
            w = [math.exp(s - m) for s in scores]
            z = sum(w)
            for j in range(n):
                cat[i, sl] += (w[j] / z) * v[j, sl]
    return cat @ P[f"{prefix}.o.w"] + P[f"{prefix}.o.b"]


def test_standard_attention_brute_force_oracle(rng):
    d, h, n = 4, 2, 3
    p = tensor_params(att.attention_shapes("a", d), rng)
    x = rng.normal(size=(n, d))
    got = att.standard_attention(T.Tensor(x), p, "a", h).data
    want = brute_force_attention(x, {k: v.data for k, v in p.items()}, "a", h)
    assert np.max(np.abs(got - want)) < 1e-12


def test_standard_attention_single_token_is_value_path(rng):
    p = tensor_params(att.attention_shapes("a", 4), rng)
    x = T.Tensor(rng.normal(size=(1, 4)))
    got = att.standard_attention(x, p, "a", 2).data
    want = att.linear(att.linear(x, p, "a.v"), p, "a.o").data
    assert np.max(np.abs(got - want)) < 1e-14


def test_standard_attention_full_mask_is_vacuous(rng):
    p = tensor_params(att.attention_shapes("a", 4), rng)
    x = T.Tensor(rng.normal(size=(5, 4)))
    a = att.standard_attention(x, p, "a", 2).data
    b = att.standard_attention(x, p, "a", 2, mask=np.ones((5, 5), dtype=bool)).data
    assert np.array_equal(a, b)


def test_standard_attention_all_masked_row_reports_index(rng):
    p = tensor_params(att.attention_shapes("a", 4), rng)
    mask = np.ones((3, 3), dtype=bool)
    mask[2] = False
    with pytest.raises(AllMaskedRowError) as exc:
        att.standard_attention(T.Tensor(rng.normal(size=(3, 4))), p, "a", 2, mask=mask)
    assert exc.value.row == 2


def test_standard_attention_rejects_bad_mask_shape(rng):
    p = tensor_params(att.attention_shapes("a", 4), rng)
    with pytest.raises(DimensionError):
        att.standard_attention(T.Tensor(rng.normal(size=(3, 4))), p, "a", 2, mask=np.ones((4, 4), dtype=bool))


def test_padding_keys_get_no_weight(rng):
    p = tensor_params(att.attention_shapes("a", 4), rng)
    x = rng.normal(size=(1, 4, 4))
    valid = np.array([[True, True, True, False]])
    full = att.standard_attention(T.Tensor(x), p, "a", 2, valid=valid).data
    short = att.standard_attention(T.Tensor(x[:, :3]), p, "a", 2).data
    assert np.max(np.abs(full[:, :3] - short)) < 1e-12


def test_standard_attention_gradcheck(rng):
    p = tensor_params(att.attention_shapes("a", 4), rng)
    x = T.Tensor(rng.normal(size=(2, 3, 4)), requires_grad=True)
    w = rng.normal(size=(2, 3, 4))
    f = lambda: T.tsum(T.mul(att.standard_attention(x, p, "a", 2), T.Tensor(w)))  # noqa: E731
    assert grad_check(f, [x, *p.values()]) < 1e-6


# ---------------------------------------------------------------- skim attention


def test_skim_single_token_is_one(rng):
    _, sp = skim_params(rng)
    A = att.skim_attention(T.Tensor(rng.normal(size=(1, 4))), sp)
    assert A.values.data.tolist() == [[[[1.0]], [[1.0]]]]


def test_skim_identical_layout_gives_uniform_rows(rng):
    _, sp = skim_params(rng)
    A = att.skim_attention(T.Tensor(np.tile(rng.normal(size=4), (4, 1))), sp)
    assert np.all(A.values.data == 0.25)


def test_skim_hand_set_projections_softmax_oracle():
    d = 2
    eye = np.eye(d) * math.sqrt(2.0)
    sp = att.SkimAttentionParams(T.Tensor(eye), T.Tensor(np.zeros(d)), T.Tensor(eye), T.Tensor(np.zeros(d)), 1)
    # q k^T = 2 I, so the scaled scores are [[2, 0], [0, 2]] / sqrt(2)
    A = att.skim_attention(T.Tensor(np.eye(d)), sp).values.data[0, 0]
    s = 2 / math.sqrt(2)
    e1, e0 = math.exp(s), math.exp(0.0)
    want = [[e1 / (e1 + e0), e0 / (e1 + e0)], [e0 / (e1 + e0), e1 / (e1 + e0)]]
    assert np.max(np.abs(A - want)) < 1e-12


def test_skim_empty_sequence_is_error(rng):
    _, sp = skim_params(rng)
    with pytest.raises(ValidationError):
        att.skim_attention(T.Tensor(np.zeros((1, 0, 4))), sp)


def test_skim_matches_numpy_per_head(rng):
    p, sp = skim_params(rng, d=4, h=2)
    x = rng.normal(size=(5, 4))
    A = att.skim_attention(T.Tensor(x), sp).values.data[0]
    q = x @ p["skim.q.w"].data + p["skim.q.b"].data
    k = x @ p["skim.k.w"].data + p["skim.k.b"].data
    for h in range(2):
        sl = slice(2 * h, 2 * h + 2)
        assert np.max(np.abs(A[h] - softmax_np(q[:, sl] @ k[:, sl].T / math.sqrt(2)))) < 1e-12


def test_skim_padding_and_row_sums(rng):
    _, sp = skim_params(rng)
    valid = np.array([[True, True, False, True, False]])
    A = att.skim_attention(T.Tensor(rng.normal(size=(1, 5, 4))), sp, valid)
    v = A.values.data
    assert np.all(v[..., ~valid[0]] == 0.0)
    assert np.allclose(v.sum(-1), 1.0, atol=1e-12)
    assert A.page(0).shape == (2, 3, 3)


def test_skim_gradcheck_into_layout(rng):
    p, sp = skim_params(rng, d=4, h=2)
    x = T.Tensor(rng.normal(size=(4, 4)), requires_grad=True)
    w = rng.normal(size=(1, 2, 4, 4))
    f = lambda: T.tsum(T.mul(att.skim_attention(x, sp).values, T.Tensor(w)))  # noqa: E731
    assert grad_check(f, [x, *p.values()]) < 1e-6


# ---------------------------------------------------------------- windowed skim


def test_window_full_equals_skim(rng):
    _, sp = skim_params(rng)
    x = T.Tensor(rng.normal(size=(5, 4)))
    full = att.skim_attention(x, sp).values.data
    win = att.windowed_skim_attention(x, sp, 2 * 5 - 1).values.data
    assert np.max(np.abs(full - win)) < 1e-12
    assert np.max(np.abs(full - att.windowed_skim_attention(x, sp, 51).values.data)) < 1e-12


def test_window_one_is_identity(rng):
    _, sp = skim_params(rng)
    A = att.windowed_skim_attention(T.Tensor(rng.normal(size=(5, 4))), sp, 1).values.data
    assert np.array_equal(A, np.broadcast_to(np.eye(5), A.shape))


def test_window_mask_and_renormalize_oracle(rng):
    p, sp = skim_params(rng, d=4, h=2)
    x = rng.normal(size=(6, 4))
    got = att.windowed_skim_attention(T.Tensor(x), sp, 3).values.data[0]
    full = att.skim_attention(T.Tensor(x), sp).values.data[0]
    band = np.abs(np.subtract.outer(np.arange(6), np.arange(6))) <= 1
    masked = np.where(band, full, 0.0)
    want = masked / masked.sum(-1, keepdims=True)
    assert np.max(np.abs(got - want)) < 1e-12
    assert np.all(got[:, ~band] == 0.0)


@pytest.mark.parametrize("w", [0, 2, -3])
def test_window_must_be_odd_positive(w, rng):
    _, sp = skim_params(rng)
    with pytest.raises(ValidationError):
        att.windowed_skim_attention(T.Tensor(rng.normal(size=(3, 4))), sp, w)


def test_window_with_padding_rows_are_stochastic(rng):
    _, sp = skim_params(rng)
    valid = np.array([[True, True, True, False, False, False]])
    A = att.windowed_skim_attention(T.Tensor(rng.normal(size=(1, 6, 4))), sp, 3, valid).values.data
    assert np.allclose(A.sum(-1), 1.0, atol=1e-12)
    assert np.all(A[..., 3:] == 0.0)


# ---------------------------------------------------------------- apply_skim


def test_apply_skim_identity_is_value_projection(rng):
    p = tensor_params(att.apply_skim_shapes("l", 4), rng)
    x = T.Tensor(rng.normal(size=(3, 4)))
    got = att.apply_skim(const_matrix(np.eye(3), 2), x, p, "l").data
    want = att.linear(att.linear(x, p, "l.v"), p, "l.o").data
    assert np.max(np.abs(got - want)) < 1e-14


def test_apply_skim_uniform_rows_pool(rng):
    p = tensor_params(att.apply_skim_shapes("l", 4), rng)
    out = att.apply_skim(const_matrix(np.full((4, 4), 0.25), 2), T.Tensor(rng.normal(size=(4, 4))), p, "l").data
    assert np.allclose(out, out[0], atol=1e-14, rtol=0)


def test_apply_skim_matmul_oracle(rng):
    d, h, n = 4, 2, 5
    p = tensor_params(att.apply_skim_shapes("l", d), rng)
    A = softmax_np(rng.normal(size=(1, h, n, n)))
    x = rng.normal(size=(n, d))
    P = {k: v.data for k, v in p.items()}
    v = x @ P["l.v.w"] + P["l.v.b"]
    cat = np.concatenate([A[0, i] @ v[:, 2 * i : 2 * i + 2] for i in range(h)], axis=1)
    want = cat @ P["l.o.w"] + P["l.o.b"]
    mat = att.SkimAttentionMatrix(T.Tensor(A), np.ones((1, n), dtype=bool))
    got = att.apply_skim(mat, T.Tensor(x), p, "l").data
    assert np.max(np.abs(got - want)) < 1e-12


def test_apply_skim_one_hot_rows_gather_values(rng):
    p = tensor_params(att.apply_skim_shapes("l", 4), rng)
    perm = np.array([2, 0, 3, 1])
    x = T.Tensor(rng.normal(size=(4, 4)))
    got = att.apply_skim(const_matrix(np.eye(4)[perm], 1), x, p, "l").data
    ident = att.apply_skim(const_matrix(np.eye(4), 1), x, p, "l").data
    assert np.max(np.abs(got - ident[perm])) < 1e-14


def test_apply_skim_length_mismatch(rng):
    p = tensor_params(att.apply_skim_shapes("l", 4), rng)
    with pytest.raises(DimensionError):
        att.apply_skim(const_matrix(np.eye(3)), T.Tensor(rng.normal(size=(4, 4))), p, "l")


# ---------------------------------------------------------------- compute accounting


def test_compute_ratio_skimformer_vs_bert():
    r = att.compute_ratio(att.ComputeBudget(512, 512, 3, 0), att.ComputeBudget(512, 512, 0, 12))
    assert f"{r:.2f}" == "25.00"


def test_compute_ratio_skimming_mask_vs_layoutlm():
    r = att.compute_ratio(att.ComputeBudget(512, 128, 3, 12), att.ComputeBudget(512, 512, 0, 12))
    assert f"{r:.2f}" == "31.25"


def test_compute_ratio_identity_and_errors():
    b = att.ComputeBudget(64, 64, 1, 2)
    assert att.compute_ratio(b, b) == 100.0
    with pytest.raises(ValidationError):
        att.compute_ratio(b, att.ComputeBudget(0, 0, 0, 0))
    with pytest.raises(ValidationError):
        att.ComputeBudget(-1, 0, 0, 0)


@settings(max_examples=80, deadline=None)
@given(st.integers(1, 4096), st.integers(0, 4096), st.integers(0, 24), st.integers(0, 24), st.integers(1, 24))
def test_compute_ratio_formula(n, s, ns, nt, nb):
    model = att.ComputeBudget(n, s, ns, nt)
    base = att.ComputeBudget(n, n, 0, nb)
    assert att.compute_ratio(model, base) == pytest.approx(100 * (n * n * ns + s * s * nt) / (n * n * nb))


def test_unit_attention_averages_rows(rng):
    A = softmax_np(rng.normal(size=(1, 2, 4, 4)))
    mat = att.SkimAttentionMatrix(T.Tensor(A), np.ones((1, 4), dtype=bool))
    want = (A[0].mean(0)[1] + A[0].mean(0)[3]) / 2
    assert np.max(np.abs(att.unit_attention(mat, [1, 3]) - want)) < 1e-15
    with pytest.raises(ValidationError):
        att.unit_attention(mat, [])
