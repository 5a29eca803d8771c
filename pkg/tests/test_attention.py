import numpy as np
import pytest

from incident_impact.attention import ConfigurationError, attention_params, multi_head_attention
from incident_impact.autodiff import Tensor, parameter


def identity_params(width, prefix="a"):
    eye = np.eye(width)
    return {f"{prefix}.{k}": parameter(eye) for k in "qkvo"} | {f"{prefix}.b": parameter(np.zeros(width))}


def test_uniform_attention_returns_column_mean(rng):
    p = identity_params(4)
    p["a.q"] = parameter(np.zeros((4, 4)))  # zero queries: uniform logits
    v = rng.normal(size=(5, 4))
    out = multi_head_attention(Tensor(v), Tensor(v), Tensor(v), p, "a", 1, mask=np.ones((5, 5))).data
    np.testing.assert_allclose(out, np.tile(v.mean(axis=0), (5, 1)), atol=1e-12)


def test_identity_mask_is_self_only(rng):
    p = attention_params(rng, 8, "a")
    x = rng.normal(size=(6, 8))
    base = multi_head_attention(Tensor(x), Tensor(x), Tensor(x), p, "a", 2, mask=np.eye(6)).data
    x2 = x.copy()
    x2[3] += 10.0
    moved = multi_head_attention(Tensor(x2), Tensor(x2), Tensor(x2), p, "a", 2, mask=np.eye(6)).data
    changed = np.abs(moved - base).max(axis=1) > 0
    assert changed.tolist() == [False, False, False, True, False, False]


def test_per_head_rows_sum_to_one(rng):
    p = attention_params(rng, 8, "a")
    x = Tensor(rng.normal(size=(4, 8)))
    trace = {}
    multi_head_attention(x, x, x, p, "a", 4, trace=trace)
    w = trace["a"]
    assert w.shape == (4, 4, 4)
    np.testing.assert_allclose(w.sum(axis=-1), 1.0, atol=1e-6)


def test_per_head_masks(rng):
    p = attention_params(rng, 8, "a")
    x = Tensor(rng.normal(size=(3, 8)))
    masks = np.stack([np.eye(3), np.ones((3, 3)), np.eye(3), np.ones((3, 3))])
    trace = {}
    multi_head_attention(x, x, x, p, "a", 4, mask=masks, trace=trace)
    assert np.array_equal(trace["a"][0], np.eye(3))
    assert np.all(trace["a"][1] > 0)


def test_width_not_divisible_by_heads(rng):
    p = attention_params(rng, 6, "a")
    x = Tensor(rng.normal(size=(2, 6)))
    with pytest.raises(ConfigurationError):
        multi_head_attention(x, x, x, p, "a", 4)


@pytest.mark.parametrize("mask_shape", [None, (7, 30), (4, 7, 30), (1, 30)])
def test_blocked_inference_matches_full(rng, monkeypatch, mask_shape):
    from incident_impact import attention
    from incident_impact.autodiff import no_grad

    p = attention_params(rng, 8, "a")
    q, kv = Tensor(rng.normal(size=(2, 7, 8))), Tensor(rng.normal(size=(2, 30, 8)))
    mask = None if mask_shape is None else rng.random(mask_shape) < 0.5
    full_trace, block_trace = {}, {}
    full = multi_head_attention(q, kv, kv, p, "a", 4, mask=mask, trace=full_trace).data
    monkeypatch.setattr(attention, "INFERENCE_BLOCK", 2 * 4 * 30 * 3)  # three query rows per block
    with no_grad():
        blocked = multi_head_attention(q, kv, kv, p, "a", 4, mask=mask, trace=block_trace).data
    np.testing.assert_allclose(blocked, full, rtol=1e-12, atol=1e-14)
    np.testing.assert_allclose(block_trace["a"], full_trace["a"], rtol=1e-12, atol=1e-15)
