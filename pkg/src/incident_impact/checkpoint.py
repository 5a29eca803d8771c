"""Versioned checkpoint files.

Layout::

    INCIDENT-IMPACT-CHECKPOINT\\n
    version 1\\n
    header-bytes <n>\\n
    <n bytes of UTF-8 JSON: configuration, hashes, network, RNG states, history>
    <numpy .npz archive: parameters, optimizer moments, scalers>

The header is plain text so ``head -c`` shows what a file was trained with.
"""

from __future__ import annotations

import io
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .autodiff import parameter
from .config import stable_hash
from .estimator import IncidentImpactRegressor
from .graph import RoadNetwork, build_masks
from .model import ModelSpec
from .optim import AdamW

MAGIC = b"INCIDENT-IMPACT-CHECKPOINT\n"
FORMAT_VERSION = 1

# estimator hyper-parameters stored in the header (the network is stored separately)
_ESTIMATOR_KEYS = (
    "t_bv", "hidden", "n_head", "batch_size", "learning_rate", "weight_decay", "dropout", "leaky_slope",
    "psi", "epochs", "no_strans", "no_ttrans", "no_road", "no_score", "restore_best", "random_state",
    "max_memory_gb",
)


class CheckpointError(ValueError):
    """A checkpoint file is unreadable, from another format version, or incompatible."""


def dataset_schema(network: RoadNetwork, t_bv: int, t_av: int, c_in: int = 2) -> dict:
    """What a model is tied to: sensor and road identities, order and window shape."""
    return {
        "sensors": [s.sensor_id for s in network.sensors],
        "roads": [r.road_id for r in network.roads],
        "t_bv": t_bv,
        "t_av": t_av,
        "c_in": c_in,
    }


def schema_hash(schema: dict) -> str:
    return stable_hash(schema)


@dataclass
class Checkpoint:
    header: dict
    estimator: IncidentImpactRegressor

    @property
    def network(self) -> RoadNetwork:
        return self.estimator.network

    @property
    def epoch(self) -> int:
        return self.estimator.epoch_


def _estimator_state(est: IncidentImpactRegressor) -> tuple[dict, dict[str, np.ndarray]]:
    arrays = {f"param/{k}": p.data for k, p in est.params_.items()}
    if est.best_params_ is not None:
        arrays.update({f"best/{k}": a for k, a in est.best_params_.items()})
    arrays.update({f"opt/{k}": a for k, a in est.optimizer_.state_dict().items()})
    arrays["x_scale"] = np.asarray(est.x_scale_)
    arrays["y_loc"] = np.asarray(est.y_loc_)
    arrays["y_scale"] = np.asarray(est.y_scale_)
    state = {
        "epoch": est.epoch_,
        "best_epoch": est.best_epoch_,
        "best_score": None if not np.isfinite(est.best_score_) else float(est.best_score_),
        "history": est.history_,
        "spec": est.spec_.to_dict(),
        "rng": {
            "shuffle": est.shuffle_rng_.bit_generator.state,
            "dropout": est.dropout_rng_.bit_generator.state,
        },
    }
    return state, arrays


def save_checkpoint(path, est: IncidentImpactRegressor, *, config: dict | None = None, extra: dict | None = None) -> Path:
    """Write a fitted estimator with everything needed to resume training bit-exactly."""
    if not hasattr(est, "params_"):
        raise CheckpointError("estimator is not fitted")
    state, arrays = _estimator_state(est)
    schema = dataset_schema(est.network, est.spec_.t_bv, est.spec_.t_av, est.spec_.c_in)
    header = {
        "format_version": FORMAT_VERSION,
        "config": config or {},
        "config_hash": stable_hash(config or {}),
        "estimator": {k: getattr(est, k) for k in _ESTIMATOR_KEYS},
        "schema": schema,
        "schema_hash": schema_hash(schema),
        "network": est.network.to_dict(),
        "state": state,
        "extra": extra or {},
    }
    blob = json.dumps(header, indent=1, sort_keys=True).encode("utf-8")
    payload = io.BytesIO()
    np.savez(payload, **arrays)
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(f"version {FORMAT_VERSION}\n".encode())
        fh.write(f"header-bytes {len(blob)}\n".encode())
        fh.write(blob)
        fh.write(payload.getvalue())
    return path


def _read_line(fh, expect: str) -> str:
    line = fh.readline().decode("utf-8", errors="replace").rstrip("\n")
    if not line.startswith(expect + " "):
        raise CheckpointError(f"expected a {expect!r} line, got {line[:40]!r}")
    return line[len(expect) + 1:]


def read_header(path) -> dict:
    """Only the JSON header (cheap; the arrays are not loaded)."""
    return _read(path, arrays=False)[0]


def _read(path, arrays: bool = True):
    path = Path(path)
    with open(path, "rb") as fh:
        if fh.read(len(MAGIC)) != MAGIC:
            raise CheckpointError(f"{path}: not a checkpoint file")
        version = int(_read_line(fh, "version"))
        if version != FORMAT_VERSION:
            raise CheckpointError(f"{path}: format version {version}, this build reads {FORMAT_VERSION}")
        n = int(_read_line(fh, "header-bytes"))
        header = json.loads(fh.read(n).decode("utf-8"))
        if not arrays:
            return header, None
        with np.load(io.BytesIO(fh.read()), allow_pickle=False) as npz:
            data = {k: npz[k] for k in npz.files}
    return header, data


def load_checkpoint(path) -> Checkpoint:
    """Rebuild the estimator exactly as it was when saved."""
    header, data = _read(path)
    network = RoadNetwork.from_dict(header["network"])
    est = IncidentImpactRegressor(network=network, **header["estimator"])
    state = header["state"]
    est.spec_ = ModelSpec(**state["spec"])
    est.masks_ = build_masks(network)
    est.params_ = {k[6:]: parameter(v, k[6:]) for k, v in data.items() if k.startswith("param/")}
    best = {k[5:]: v.copy() for k, v in data.items() if k.startswith("best/")}
    est.best_params_ = best or None
    est.optimizer_ = AdamW(est.params_, est.learning_rate, est.weight_decay)
    est.optimizer_.load_state_dict({k[4:]: v for k, v in data.items() if k.startswith("opt/")})
    est.x_scale_ = data["x_scale"]
    est.y_loc_ = data["y_loc"]
    est.y_scale_ = data["y_scale"]
    est.shuffle_rng_ = np.random.default_rng()
    est.shuffle_rng_.bit_generator.state = state["rng"]["shuffle"]
    est.dropout_rng_ = np.random.default_rng()
    est.dropout_rng_.bit_generator.state = state["rng"]["dropout"]
    est.epoch_ = state["epoch"]
    est.best_epoch_ = state["best_epoch"]
    est.best_score_ = np.inf if state["best_score"] is None else state["best_score"]
    est.history_ = state["history"]
    return Checkpoint(header, est)


def check_schema(header: dict, network: RoadNetwork, t_bv: int, t_av: int) -> None:
    """Refuse a dataset whose sensors, roads or window differ from the checkpoint's."""
    expected = header["schema_hash"]
    actual = schema_hash(dataset_schema(network, t_bv, t_av, header["schema"]["c_in"]))
    if expected != actual:
        raise CheckpointError(
            "dataset schema does not match the checkpoint "
            f"(checkpoint {expected[:12]}, dataset {actual[:12]}): sensors, roads or window differ"
        )
