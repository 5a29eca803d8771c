"""Dual-level spatial encoder: sensors -> roads -> roads -> sensors.

Roads act as anchor nodes. Sensor features update a learned per-road bank,
roads exchange messages under four adjacency levels (one per head), and the
road features are read back by every sensor. Attention is applied
independently at each timestamp, so tensors are handled time-major
``(..., T, N, C)`` inside this module and sensor-major ``(..., S, T, C)`` at
its boundary.
"""

from __future__ import annotations

from typing import Mapping

import numpy as np

from .attention import ConfigurationError, multi_head_attention
from .autodiff import Tensor, dropout, layer_norm, matmul
from .graph import N_MASK_LEVELS, MaskSet


def sensor_to_road(x_emb: Tensor, bank: Tensor, m_sr: np.ndarray, params, n_head: int, trace=None) -> Tensor:
    """Roads query the sensors lying on them.

    ``x_emb`` is ``(..., T, S, C)``, ``bank`` is ``(T, R, C)``; returns ``(..., T, R, C)``.
    A road without sensors gets only the output bias.
    """
    return multi_head_attention(bank, x_emb, x_emb, params, "sr", n_head, mask=np.asarray(m_sr).T, trace=trace)


def road_to_road(h_sr: Tensor, m_rr_levels: np.ndarray, params, n_head: int, trace=None) -> Tensor:
    """Road self-attention; head ``k`` sees adjacency level ``k + 1``."""
    if n_head != N_MASK_LEVELS:
        raise ConfigurationError(
            f"road-to-road attention uses one head per adjacency level; need n_head={N_MASK_LEVELS}, got {n_head}"
        )
    return multi_head_attention(h_sr, h_sr, h_sr, params, "rr", n_head, mask=m_rr_levels, trace=trace)


def road_to_sensor(h_rr: Tensor, x_emb: Tensor, params, n_head: int, trace=None) -> Tensor:
    """Unmasked cross-attention: sensors query every road."""
    return multi_head_attention(x_emb, h_rr, h_rr, params, "rs", n_head, trace=trace)


def embed_input(x: Tensor, params: Mapping[str, Tensor]) -> Tensor:
    return matmul(x, params["in.w"]) + params["in.b"]


def spatial_forward(
    x: Tensor,
    masks: MaskSet,
    params: Mapping[str, Tensor],
    n_head: int = 4,
    *,
    training: bool = False,
    dropout_p: float = 0.1,
    rng: np.random.Generator | None = None,
    no_strans: bool = False,
    no_road: bool = False,
    trace: dict | None = None,
    return_stages: bool = False,
):
    """Encode ``x`` of shape ``(..., S, T, C_in)`` into ``(..., S, T, C)``.

    ``no_road`` swaps the anchored stack for plain sensor-to-sensor attention;
    ``no_strans`` keeps only the input projection.
    """
    x_emb = embed_input(x, params)
    if no_strans:
        return (x_emb, {}) if return_stages else x_emb
    xt = x_emb.swapaxes(-3, -2)
    stages = {}
    if no_road:
        h = multi_head_attention(xt, xt, xt, params, "ss", n_head, trace=trace)
    else:
        bank = params["bank"].swapaxes(0, 1)
        h_sr = sensor_to_road(xt, bank, masks.m_sr, params, n_head, trace)
        h_rr = road_to_road(h_sr, masks.m_rr_levels, params, n_head, trace)
        h = road_to_sensor(h_rr, xt, params, n_head, trace)
        stages = {"h_sr": h_sr, "h_rr": h_rr, "h_rs": h}
    h = layer_norm(h + xt, params["sln.g"], params["sln.b"])
    h = dropout(h, dropout_p, training, rng)
    h = h.swapaxes(-3, -2)
    return (h, stages) if return_stages else h
