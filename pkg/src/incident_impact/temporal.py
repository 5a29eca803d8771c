"""Temporal encoder with importance scores and the two reconstruction decoders.

Tensors are sensor-major ``(..., S, T, C)``; all attention here runs along the
time axis of each sensor independently.
"""

from __future__ import annotations

from typing import Mapping

from .attention import multi_head_attention
from .autodiff import Tensor, concat, leaky_relu, matmul, zeros


def t_trans(h_st: Tensor, score: Tensor | None, params: Mapping[str, Tensor], n_head: int, trace=None) -> Tensor:
    """Temporal self-attention with a skip connection over ``[h_st || score]``.

    The 2C-wide concatenation is first projected to C. With ``score=None`` the
    concatenation is skipped and only the ``h_st`` rows of the projection are used.
    """
    w, b = params["tt.in.w"], params["tt.in.b"]
    if score is None:
        z = matmul(h_st, w[: h_st.shape[-1]]) + b
    else:
        if score.shape != h_st.shape:
            raise ValueError(f"score shape {score.shape} does not match encoder input {h_st.shape}")
        z = matmul(concat([h_st, score], axis=-1), w) + b
    return z + multi_head_attention(z, z, z, params, "tt", n_head, trace=trace)


def decode(h: Tensor, h_av: Tensor, params, prefix: str, n_head: int, trace=None) -> Tensor:
    """Self-attention over ``h_av`` gives queries; mutual attention reads keys and values from ``h``.

    Both attention steps carry a residual connection whose branch is scaled by a
    learned gate. The gates start at zero, so an untrained decoder passes
    ``h_av`` through unchanged.
    """
    if h_av.shape[-2] == 0:
        raise ValueError("decoder needs at least one after-validation timestamp")
    attn = multi_head_attention(h_av, h_av, h_av, params, f"{prefix}.self", n_head, trace=trace)
    query = h_av + attn * params[f"{prefix}.self.gate"]
    attn = multi_head_attention(query, h, h, params, f"{prefix}.mu", n_head, trace=trace)
    return query + attn * params[f"{prefix}.mu.gate"]


def decoder1(h: Tensor, h_av: Tensor, params, n_head: int, trace=None) -> Tensor:
    return decode(h, h_av, params, "dec1", n_head, trace)


def decoder2(h_prime: Tensor, h_av: Tensor, params, n_head: int, trace=None) -> Tensor:
    return decode(h_prime, h_av, params, "dec2", n_head, trace)


def compute_importance(h_st: Tensor, h_prime_av: Tensor) -> Tensor:
    """``h_st`` minus the time-mean of the decoded after-validation segment."""
    return h_st - h_prime_av.mean(axis=-2, keepdims=True)


def reconstruct(h: Tensor, params: Mapping[str, Tensor], slope: float = 0.2) -> Tensor:
    """Shared two-layer position-wise FFN back to input channels."""
    hidden = leaky_relu(matmul(h, params["ffn.w1"]) + params["ffn.b1"], slope)
    return matmul(hidden, params["ffn.w2"]) + params["ffn.b2"]


def importance_forward(
    h_st: Tensor,
    t_bv: int,
    params: Mapping[str, Tensor],
    n_head: int = 4,
    *,
    slope: float = 0.2,
    no_score: bool = False,
    trace: dict | None = None,
) -> dict:
    """Run both encoder passes and both decoders.

    Returns ``h`` (first pass), ``h_prime`` (second pass), ``score`` and the
    two reconstructions ``x1_av``/``x2_av``. With ``no_score`` a single
    pass without concatenation is made and the score and reconstructions are
    ``None``.
    """
    if no_score:
        h_prime = t_trans(h_st, None, params, n_head, trace)
        return {"h": h_prime, "h_prime": h_prime, "score": None, "x1_av": None, "x2_av": None}
    h_av = h_st[..., t_bv:, :]
    h = t_trans(h_st, zeros(h_st.shape), params, n_head, trace)
    h1_av = decoder1(h, h_av, params, n_head, trace)
    score = compute_importance(h_st, h1_av)
    h_prime = t_trans(h_st, score, params, n_head, trace)
    h2_av = decoder2(h_prime, h_av, params, n_head, trace)
    return {
        "h": h,
        "h_prime": h_prime,
        "score": score,
        "h1_av": h1_av,
        "h2_av": h2_av,
        "x1_av": reconstruct(h1_av, params, slope),
        "x2_av": reconstruct(h2_av, params, slope),
    }
