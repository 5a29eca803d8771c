import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from incident_impact.autodiff import Tensor, l1_loss, parameter, zeros
from incident_impact.model import ModelSpec, init_params
from incident_impact.temporal import (
    compute_importance,
    decoder1,
    decoder2,
    importance_forward,
    reconstruct,
    t_trans,
)


def temporal_params(seed=0, c=16, t_bv=6, t_av=3, gate=None):
    spec = ModelSpec(n_sensors=4, n_roads=2, t_bv=t_bv, t_av=t_av, hidden=c)
    p = init_params(spec, np.random.default_rng(seed))
    if gate is not None:
        for k in [k for k in p if k.endswith(".gate")]:
            p[k] = parameter(np.full(1, gate))
    return p


def test_t_trans_with_zero_score_is_deterministic(rng):
    p = temporal_params()
    h = Tensor(rng.normal(size=(5, 9, 16)))
    a = t_trans(h, zeros(h.shape), p, 4).data
    b = t_trans(h, zeros(h.shape), p, 4).data
    assert np.array_equal(a, b) and np.all(np.isfinite(a))


def test_t_trans_single_timestamp(rng):
    p = temporal_params(t_bv=0, t_av=1)
    trace = {}
    h = Tensor(rng.normal(size=(5, 1, 16)))
    t_trans(h, zeros(h.shape), p, 4, trace)
    assert np.all(trace["tt"] == 1.0)


def test_t_trans_rows_sum_to_one(rng):
    trace = {}
    h = Tensor(rng.normal(size=(2, 5, 9, 16)))
    t_trans(h, Tensor(rng.normal(size=h.shape)), temporal_params(), 4, trace)
    np.testing.assert_allclose(trace["tt"].sum(axis=-1), 1.0, atol=1e-6)


def test_t_trans_rejects_mismatched_score(rng):
    h = Tensor(rng.normal(size=(5, 9, 16)))
    with pytest.raises(ValueError):
        t_trans(h, zeros((5, 3, 16)), temporal_params(), 4)


def test_decoder_shapes_and_row_sums(rng):
    p = temporal_params(gate=1.0)
    h = Tensor(rng.normal(size=(6, 9, 16)))
    trace = {}
    out = decoder1(h, h[:, 6:, :], p, 4, trace)
    assert out.shape == (6, 3, 16)
    assert trace["dec1.mu"].shape == (6, 4, 3, 9)
    np.testing.assert_allclose(trace["dec1.mu"].sum(axis=-1), 1.0, atol=1e-6)
    np.testing.assert_allclose(trace["dec1.self"].sum(axis=-1), 1.0, atol=1e-6)


def test_decoder_without_before_segment(rng):
    p = temporal_params(t_bv=0, t_av=9, gate=1.0)
    h = Tensor(rng.normal(size=(3, 9, 16)))
    assert decoder2(h, h, p, 4).shape == (3, 9, 16)


def test_decoder_needs_after_segment(rng):
    h = Tensor(rng.normal(size=(3, 9, 16)))
    with pytest.raises(ValueError):
        decoder1(h, h[:, 9:, :], temporal_params(), 4)


def test_untrained_gates_pass_after_segment_through(rng):
    h = Tensor(rng.normal(size=(3, 9, 16)))
    np.testing.assert_array_equal(decoder1(h, h[:, 6:, :], temporal_params(), 4).data, h.data[:, 6:, :])


def test_decoders_differ_only_by_parameters(rng):
    p = temporal_params(gate=0.7)
    h = Tensor(rng.normal(size=(4, 9, 16)))
    h_av = h[:, 6:, :]
    assert not np.allclose(decoder1(h, h_av, p, 4).data, decoder2(h, h_av, p, 4).data)
    for k in list(p):
        if k.startswith("dec1."):
            p["dec2." + k[5:]] = p[k]
    np.testing.assert_array_equal(decoder1(h, h_av, p, 4).data, decoder2(h, h_av, p, 4).data)


def test_importance_of_matching_mean_is_zero(rng):
    h_av = rng.normal(size=(4, 3, 8))
    h_st = np.broadcast_to(h_av.mean(axis=1, keepdims=True), (4, 9, 8)).copy()
    assert np.allclose(compute_importance(Tensor(h_st), Tensor(h_av)).data, 0.0, atol=1e-15)


def test_importance_of_constants():
    out = compute_importance(Tensor(np.full((2, 9, 4), 3.0)), Tensor(np.full((2, 3, 4), 1.25))).data
    assert np.all(out == 1.75)


@settings(max_examples=30, deadline=None)
@given(arrays(np.float64, (3, 5, 4), elements=st.floats(-10, 10)),
       arrays(np.float64, (3, 2, 4), elements=st.floats(-10, 10)))
def test_importance_plus_mean_rebuilds_input(h_st, h_av):
    score = compute_importance(Tensor(h_st), Tensor(h_av)).data
    np.testing.assert_allclose(score + h_av.mean(axis=1, keepdims=True), h_st, atol=1e-9)


def test_reconstruct(rng):
    p = temporal_params()
    zero_bias = dict(p, **{"ffn.b1": parameter(np.zeros(16)), "ffn.b2": parameter(np.zeros(2))})
    assert np.all(reconstruct(zeros((3, 3, 16)), zero_bias).data == 0.0)
    h = Tensor(rng.normal(size=(3, 3, 16)))
    out = reconstruct(h, p)
    assert out.shape == (3, 3, 2)
    assert np.array_equal(out.data, reconstruct(h, p).data)


def test_importance_forward_shapes_and_determinism(rng):
    p = temporal_params(gate=0.5)
    h_st = Tensor(rng.normal(size=(60, 9, 16)))
    a = importance_forward(h_st, 6, p, 4)
    b = importance_forward(h_st, 6, p, 4)
    shapes = [a[k].shape for k in ("h", "h_prime", "x1_av", "x2_av")]
    assert shapes == [(60, 9, 16), (60, 9, 16), (60, 3, 2), (60, 3, 2)]
    assert a["score"].shape == (60, 9, 16)
    for k in ("h", "h_prime", "score", "x1_av", "x2_av"):
        assert np.array_equal(a[k].data, b[k].data)
        assert np.all(np.isfinite(a[k].data))
    # the score is a pure function of its two inputs
    again = compute_importance(Tensor(h_st.data.copy()), Tensor(a["h1_av"].data.copy())).data
    assert np.array_equal(again, a["score"].data)


def test_zero_score_on_second_pass_reproduces_first(rng):
    p = temporal_params()
    h_st = Tensor(rng.normal(size=(5, 9, 16)))
    first = importance_forward(h_st, 6, p, 4)["h"].data
    assert np.array_equal(t_trans(h_st, zeros(h_st.shape), p, 4).data, first)


def test_second_decoder_loss_reaches_first_decoder(rng):
    # gates opened so the attention weights sit on the gradient path
    p = temporal_params(gate=0.5)
    h_st = Tensor(rng.normal(size=(5, 9, 16)))
    out = importance_forward(h_st, 6, p, 4)
    l1_loss(out["x2_av"], Tensor(rng.normal(size=(5, 3, 2)))).backward()
    for k in ("dec1.self.q", "dec1.mu.v", "dec1.mu.gate"):
        assert np.abs(p[k].grad).max() > 0


def test_no_score_single_pass(rng):
    p = temporal_params()
    out = importance_forward(Tensor(rng.normal(size=(5, 9, 16))), 6, p, 4, no_score=True)
    assert out["score"] is None and out["x1_av"] is None
    assert out["h_prime"].shape == (5, 9, 16)
