"""Parameter layout and the end-to-end forward pass."""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from .attention import ConfigurationError, attention_params, linear_init
from .autodiff import Tensor, parameter
from .graph import MaskSet
from .head import pool_predict
from .spatial import spatial_forward
from .temporal import importance_forward

BANK_INIT_STD = 0.02
# the output layer starts small so an untrained model predicts close to the label location
OUTPUT_INIT_GAIN = 0.1


@dataclass(frozen=True)
class ModelSpec:
    n_sensors: int
    n_roads: int
    t_bv: int = 6
    t_av: int = 3
    c_in: int = 2
    hidden: int = 16
    n_head: int = 4
    dropout: float = 0.1
    leaky_slope: float = 0.2
    no_strans: bool = False
    no_ttrans: bool = False
    no_road: bool = False
    no_score: bool = False

    def __post_init__(self):
        if self.hidden % self.n_head:
            raise ConfigurationError(f"hidden={self.hidden} is not divisible by n_head={self.n_head}")
        if self.t_av < 1 or self.t_bv < 0:
            raise ConfigurationError(f"need t_av >= 1 and t_bv >= 0, got {self.t_bv}/{self.t_av}")
        if not 0.0 <= self.dropout < 1.0:
            raise ConfigurationError(f"dropout must lie in [0, 1), got {self.dropout}")

    @property
    def n_timestamps(self) -> int:
        return self.t_bv + self.t_av

    @property
    def uses_reconstruction(self) -> bool:
        return not (self.no_ttrans or self.no_score)

    def to_dict(self) -> dict:
        return asdict(self)


def init_params(spec: ModelSpec, rng: np.random.Generator) -> dict[str, Tensor]:
    """Create the parameters the configured variant actually uses."""
    c, t = spec.hidden, spec.n_timestamps
    p: dict[str, Tensor] = {
        "in.w": linear_init(rng, spec.c_in, c, "in.w"),
        "in.b": parameter(np.zeros(c), "in.b"),
    }
    if not spec.no_strans:
        if spec.no_road:
            p.update(attention_params(rng, c, "ss"))
        else:
            p["bank"] = parameter(rng.normal(0.0, BANK_INIT_STD, size=(spec.n_roads, t, c)), "bank")
            for stage in ("sr", "rr", "rs"):
                p.update(attention_params(rng, c, stage))
        p["sln.g"] = parameter(np.ones(c), "sln.g")
        p["sln.b"] = parameter(np.zeros(c), "sln.b")
    if not spec.no_ttrans:
        p["tt.in.w"] = linear_init(rng, 2 * c, c, "tt.in.w")
        p["tt.in.b"] = parameter(np.zeros(c), "tt.in.b")
        p.update(attention_params(rng, c, "tt"))
        if not spec.no_score:
            for dec in ("dec1", "dec2"):
                for part in ("self", "mu"):
                    p.update(attention_params(rng, c, f"{dec}.{part}"))
                    # residual gate starting at zero: decoders begin as the identity on h_av
                    p[f"{dec}.{part}.gate"] = parameter(np.zeros(1), f"{dec}.{part}.gate")
            p["ffn.w1"] = linear_init(rng, c, c, "ffn.w1")
            p["ffn.b1"] = parameter(np.zeros(c), "ffn.b1")
            p["ffn.w2"] = linear_init(rng, c, spec.c_in, "ffn.w2")
            p["ffn.b2"] = parameter(np.zeros(spec.c_in), "ffn.b2")
    p["conv.w"] = parameter(np.full((t, c), 1.0 / t), "conv.w")
    p["conv.b"] = parameter(np.zeros(c), "conv.b")
    p["p1.w"] = linear_init(rng, c, c, "p1.w")
    p["p1.b"] = parameter(np.zeros(c), "p1.b")
    p["p2.w"] = linear_init(rng, c, c, "p2.w")
    p["p2.b"] = parameter(np.zeros(c), "p2.b")
    p["p3.w"] = parameter(linear_init(rng, c, 2).data * OUTPUT_INIT_GAIN, "p3.w")
    p["p3.b"] = parameter(np.zeros(2), "p3.b")
    return p


def forward(
    params: dict[str, Tensor],
    spec: ModelSpec,
    masks: MaskSet,
    x,
    *,
    training: bool = False,
    rng: np.random.Generator | None = None,
    y_loc=0.0,
    y_scale=1.0,
    trace: dict | None = None,
) -> dict:
    """Run the full model on ``x`` of shape ``(B, S, T, C_in)`` (batch axis optional).

    ``pred`` is returned in label units: ``y_loc + y_scale * head_output``.
    """
    x = x if isinstance(x, Tensor) else Tensor(x)
    if x.shape[-3:] != (spec.n_sensors, spec.n_timestamps, spec.c_in):
        raise ValueError(
            f"expected input (..., {spec.n_sensors}, {spec.n_timestamps}, {spec.c_in}), got {x.shape}"
        )
    h_st = spatial_forward(
        x,
        masks,
        params,
        spec.n_head,
        training=training,
        dropout_p=spec.dropout,
        rng=rng,
        no_strans=spec.no_strans,
        no_road=spec.no_road,
        trace=trace,
    )
    if spec.no_ttrans:
        out = {"h": h_st, "h_prime": h_st, "score": None, "x1_av": None, "x2_av": None}
    else:
        out = importance_forward(
            h_st, spec.t_bv, params, spec.n_head, slope=spec.leaky_slope, no_score=spec.no_score, trace=trace
        )
    raw = pool_predict(out["h_prime"], out["score"], params, spec.leaky_slope)
    out["pred"] = raw * np.asarray(y_scale, dtype=float) + np.asarray(y_loc, dtype=float)
    out["h_st"] = h_st
    return out


def estimate_memory_bytes(spec: ModelSpec, batch_size: int) -> int:
    """Rough peak tape size of one training batch."""
    b, s, r, t, c, h = batch_size, spec.n_sensors, spec.n_roads, spec.n_timestamps, spec.hidden, spec.n_head
    dense = b * s * t * c
    if spec.no_road:
        attn = b * t * h * s * s
    else:
        attn = 2 * b * t * h * s * r + b * t * h * r * r
    temporal = 0 if spec.no_ttrans else 6 * b * s * h * t * t
    # each attention weight tensor is held ~4 times on the tape (logits, scaled, softmax, grad)
    return 8 * (40 * dense + 4 * (attn + temporal))
