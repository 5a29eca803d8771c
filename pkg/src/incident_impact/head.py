"""Prediction head, training loss and the reconstruction-weight schedule."""

from __future__ import annotations

from typing import Mapping

import numpy as np

from .autodiff import Tensor, abs_, as_tensor, l1_loss, leaky_relu, matmul


def pool_predict(h_prime: Tensor, score: Tensor | None, params: Mapping[str, Tensor], slope: float = 0.2) -> Tensor:
    """Weight by the score, collapse time with a per-channel kernel, sum over sensors, then a 3-layer MLP.

    ``h_prime`` is ``(..., S, T, C)``; the result is ``(..., 2)`` with
    duration first and length second.
    """
    z = h_prime if score is None else h_prime * score
    z = (z * params["conv.w"]).sum(axis=-2) + params["conv.b"]
    pooled = z.sum(axis=-2)
    single = pooled.ndim == 1
    if single:
        pooled = pooled.reshape(1, -1)
    h = leaky_relu(matmul(pooled, params["p1.w"]) + params["p1.b"], slope)
    h = leaky_relu(matmul(h, params["p2.w"]) + params["p2.b"], slope)
    out = matmul(h, params["p3.w"]) + params["p3.b"]
    return out.reshape(-1) if single else out


def omega_schedule(epoch: int) -> float:
    """Weight of the first decoder's reconstruction loss: 1 / epoch."""
    if epoch < 1:
        raise ValueError(f"epoch counts from 1, got {epoch}")
    return 1.0 / epoch


def combined_loss(pred: Tensor, labels, x1_av, x2_av, x_av, psi: float = 1.0, omega: float = 1.0):
    """``psi * L1 + omega * L2 + (1 - omega) * L3``.

    ``L1`` is the per-incident sum of absolute duration and length errors,
    averaged over the batch. ``L2``/``L3`` are the mean absolute
    reconstruction errors of the two decoders; pass ``None`` to drop them.
    Returns the total and a dict of the three components as floats.
    """
    if not 0.0 < omega <= 1.0:
        raise ValueError(f"omega must lie in (0, 1], got {omega}")
    if not psi > 0:
        raise ValueError(f"psi must be positive, got {psi}")
    labels = as_tensor(labels)
    if pred.shape != labels.shape:
        raise ValueError(f"prediction shape {pred.shape} does not match labels {labels.shape}")
    diff = abs_(pred - labels)
    loss1 = diff.sum(axis=-1).mean() if diff.ndim > 1 else diff.sum()
    total = loss1 * psi
    parts = {"loss1": float(loss1.data), "loss2": 0.0, "loss3": 0.0}
    if x1_av is not None:
        loss2 = l1_loss(x1_av, x_av)
        loss3 = l1_loss(x2_av, x_av)
        total = total + loss2 * omega + loss3 * (1.0 - omega)
        parts["loss2"] = float(loss2.data)
        parts["loss3"] = float(loss3.data)
    parts["total"] = float(np.asarray(total.data))
    return total, parts
