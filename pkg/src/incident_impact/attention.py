"""Multi-head scaled dot-product attention on :class:`Tensor` inputs."""

from __future__ import annotations

import math
from typing import Mapping

import numpy as np

from .autodiff import Tensor, is_grad_enabled, masked_softmax, matmul, parameter

# logits entries evaluated at once when no tape is recorded; keeps inference in cache
INFERENCE_BLOCK = 1 << 15


class ConfigurationError(ValueError):
    """Model hyperparameters are inconsistent."""


def linear_init(rng: np.random.Generator, fan_in: int, fan_out: int, name: str | None = None) -> Tensor:
    bound = math.sqrt(6.0 / (fan_in + fan_out))
    return parameter(rng.uniform(-bound, bound, size=(fan_in, fan_out)), name=name)


def attention_params(rng: np.random.Generator, width: int, prefix: str) -> dict[str, Tensor]:
    """Query/key/value projections plus the output projection and bias."""
    out = {}
    for part in ("q", "k", "v", "o"):
        out[f"{prefix}.{part}"] = linear_init(rng, width, width, name=f"{prefix}.{part}")
    out[f"{prefix}.b"] = parameter(np.zeros(width), name=f"{prefix}.b")
    return out


def split_heads(x: Tensor, n_head: int) -> Tensor:
    """``(..., N, C)`` -> ``(..., n_head, N, C // n_head)``."""
    *lead, n, c = x.shape
    return x.reshape(*lead, n, n_head, c // n_head).swapaxes(-2, -3)


def merge_heads(x: Tensor) -> Tensor:
    """Inverse of :func:`split_heads`."""
    *lead, h, n, d = x.shape
    return x.swapaxes(-2, -3).reshape(*lead, n, h * d)


def multi_head_attention(
    q_in: Tensor,
    k_in: Tensor,
    v_in: Tensor,
    params: Mapping[str, Tensor],
    prefix: str,
    n_head: int,
    mask=None,
    trace: dict | None = None,
) -> Tensor:
    """Attend from ``q_in`` rows to ``k_in``/``v_in`` rows over the second-to-last axis.

    ``mask`` broadcasts against the per-head logits ``(..., n_head, Nq, Nk)``;
    pass an ``(n_head, Nq, Nk)`` array to give each head its own mask. When
    ``trace`` is a dict, the attention weights are stored under ``prefix``.
    """
    width = q_in.shape[-1]
    if width % n_head:
        raise ConfigurationError(f"channel width {width} is not divisible by n_head={n_head}")
    d = width // n_head
    # scaling the queries is cheaper than scaling the (Nq, Nk) logits
    q = split_heads(matmul(q_in, params[f"{prefix}.q"]) * (1.0 / math.sqrt(d)), n_head)
    k = split_heads(matmul(k_in, params[f"{prefix}.k"]), n_head)
    v = split_heads(matmul(v_in, params[f"{prefix}.v"]), n_head)
    kt = k.swapaxes(-1, -2)
    n_q, n_k = q.shape[-2], k.shape[-2]
    rows = max(1, INFERENCE_BLOCK // max(1, math.prod(q.shape[:-2]) * n_k))
    if is_grad_enabled() or rows >= n_q:
        weights = masked_softmax(matmul(q, kt), mask)
        if trace is not None:
            trace[prefix] = weights.data
        out = merge_heads(matmul(weights, v))
    else:
        out = merge_heads(Tensor(_blocked(q.data, kt.data, v.data, mask, rows, trace, prefix)))
    return matmul(out, params[f"{prefix}.o"]) + params[f"{prefix}.b"]


def _blocked(q, kt, v, mask, rows, trace, prefix):
    """Attention over blocks of query rows; rows are independent, so this is exact."""
    n_q = q.shape[-2]
    m = None if mask is None else np.asarray(mask.data if isinstance(mask, Tensor) else mask)
    outs, kept = [], []
    for i in range(0, n_q, rows):
        block = slice(i, i + rows)
        mb = m if m is None or m.ndim < 2 or m.shape[-2] == 1 else m[..., block, :]
        w = masked_softmax(Tensor(q[..., block, :] @ kt), mb).data
        outs.append(w @ v)
        if trace is not None:
            kept.append(w)
    if trace is not None:
        trace[prefix] = np.concatenate(kept, axis=-2)
    return np.concatenate(outs, axis=-2)
