"""Scikit-learn style regressor wrapping the full model and its training loop."""

from __future__ import annotations

import logging
import time

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_is_fitted

from .autodiff import Tensor, no_grad
from .graph import IncidentSample, RoadNetwork, build_masks
from .head import combined_loss, omega_schedule
from .metrics import metric_row
from .model import ModelSpec, estimate_memory_bytes, forward, init_params
from .optim import AdamW

logger = logging.getLogger(__name__)


class TrainingDivergedError(FloatingPointError):
    """The loss became NaN or infinite."""


def samples_to_arrays(samples: list[IncidentSample]) -> tuple[np.ndarray, np.ndarray]:
    """Stack samples into ``X`` of shape ``(n, S, T, C_in)`` and ``y`` of shape ``(n, 2)``."""
    if not samples:
        raise ValueError("no samples")
    X = np.stack([np.asarray(s.x, dtype=float) for s in samples])
    y = np.array([[s.y_dur, s.y_len] for s in samples], dtype=float)
    return X, y


def check_X(X, spec: ModelSpec | None = None) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 3:
        X = X[None]
    if X.ndim != 4:
        raise ValueError(f"expected X with shape (n_samples, n_sensors, n_timestamps, n_channels), got {X.shape}")
    if X.shape[0] == 0:
        raise ValueError("X has no samples")
    if not np.all(np.isfinite(X)):
        raise ValueError("X contains NaN or infinite values")
    if spec is not None and X.shape[1:] != (spec.n_sensors, spec.n_timestamps, spec.c_in):
        raise ValueError(
            f"X has per-sample shape {X.shape[1:]}, model expects "
            f"{(spec.n_sensors, spec.n_timestamps, spec.c_in)}"
        )
    return X


def check_y(y, n: int) -> np.ndarray:
    y = np.asarray(y, dtype=np.float64)
    if y.shape != (n, 2):
        raise ValueError(f"expected y with shape ({n}, 2) (duration, length), got {y.shape}")
    if not np.all(np.isfinite(y)):
        raise ValueError("y contains NaN or infinite values")
    return y


class IncidentImpactRegressor(RegressorMixin, BaseEstimator):
    """Predict incident duration (minutes) and impact length (miles).

    ``X`` is ``(n_samples, n_sensors, n_timestamps, 2)`` speed/occupancy
    windows whose first ``t_bv`` timestamps precede validation; ``y`` is
    ``(n_samples, 2)``. Inputs are divided by their per-channel root mean
    square from the first ``fit`` call. The head output is rescaled by the
    training label median and mean absolute deviation, so the loss is in label
    units and an untrained head predicts the median.

    With ``warm_start=True`` a further ``fit`` call continues training for
    ``epochs`` more epochs, keeping optimizer, random and schedule state.
    """

    def __init__(
        self,
        network: RoadNetwork | None = None,
        t_bv: int = 6,
        hidden: int = 16,
        n_head: int = 4,
        batch_size: int = 8,
        learning_rate: float = 5e-4,
        weight_decay: float = 1e-3,
        dropout: float = 0.1,
        leaky_slope: float = 0.2,
        psi: float = 1.0,
        epochs: int = 20,
        no_strans: bool = False,
        no_ttrans: bool = False,
        no_road: bool = False,
        no_score: bool = False,
        restore_best: bool = True,
        warm_start: bool = False,
        random_state: int = 0,
        max_memory_gb: float = 4.0,
        verbose: bool = False,
    ):
        self.network = network
        self.t_bv = t_bv
        self.hidden = hidden
        self.n_head = n_head
        self.batch_size = batch_size
        self.learning_rate = learning_rate
        self.weight_decay = weight_decay
        self.dropout = dropout
        self.leaky_slope = leaky_slope
        self.psi = psi
        self.epochs = epochs
        self.no_strans = no_strans
        self.no_ttrans = no_ttrans
        self.no_road = no_road
        self.no_score = no_score
        self.restore_best = restore_best
        self.warm_start = warm_start
        self.random_state = random_state
        self.max_memory_gb = max_memory_gb
        self.verbose = verbose

    # -- setup ------------------------------------------------------------------
    def _make_spec(self, X: np.ndarray) -> ModelSpec:
        if not isinstance(self.network, RoadNetwork):
            raise ValueError("network must be a RoadNetwork")
        _, s, t, c = X.shape
        if s != self.network.n_sensors:
            raise ValueError(f"X has {s} sensors but the network has {self.network.n_sensors}")
        return ModelSpec(
            n_sensors=s,
            n_roads=self.network.n_roads,
            t_bv=self.t_bv,
            t_av=t - self.t_bv,
            c_in=c,
            hidden=self.hidden,
            n_head=self.n_head,
            dropout=self.dropout,
            leaky_slope=self.leaky_slope,
            no_strans=self.no_strans,
            no_ttrans=self.no_ttrans,
            no_road=self.no_road,
            no_score=self.no_score,
        )

    def _initialize(self, X: np.ndarray, y: np.ndarray) -> None:
        spec = self._make_spec(X)
        need = estimate_memory_bytes(spec, self.batch_size)
        if need > self.max_memory_gb * 2**30:
            raise MemoryError(
                f"estimated {need / 2**30:.1f} GiB per batch exceeds max_memory_gb={self.max_memory_gb}"
            )
        seeds = np.random.SeedSequence(self.random_state).spawn(3)
        self.spec_ = spec
        self.masks_ = build_masks(self.network)
        self.params_ = init_params(spec, np.random.default_rng(seeds[0]))
        self.shuffle_rng_ = np.random.default_rng(seeds[1])
        self.dropout_rng_ = np.random.default_rng(seeds[2])
        self.optimizer_ = AdamW(self.params_, self.learning_rate, self.weight_decay)
        # scale without centering: free-flow readings then map to a stable
        # direction instead of noise around zero, which layer norm would amplify
        rms = np.sqrt((X ** 2).mean(axis=(0, 1, 2)))
        self.x_scale_ = np.where(rms > 0, rms, 1.0)
        # the median is the best constant under an absolute-error loss
        self.y_loc_ = np.median(y, axis=0)
        spread = np.abs(y - self.y_loc_).mean(axis=0)
        self.y_scale_ = np.where(spread > 0, spread, 1.0)
        self.epoch_ = 0
        self.history_ = []
        self.best_score_ = np.inf
        self.best_params_ = None
        self.best_epoch_ = 0

    def _normalize(self, X: np.ndarray) -> np.ndarray:
        return X / self.x_scale_

    def _forward(self, Xn: np.ndarray, training: bool, params=None, trace=None) -> dict:
        return forward(
            params if params is not None else self.params_,
            self.spec_,
            self.masks_,
            Xn,
            training=training,
            rng=self.dropout_rng_,
            y_loc=self.y_loc_,
            y_scale=self.y_scale_,
            trace=trace,
        )

    # -- training ---------------------------------------------------------------
    def fit(self, X, y, eval_set=None):
        """Train for ``epochs`` epochs; ``eval_set=(X_val, y_val)`` enables best-epoch tracking."""
        X = check_X(X)
        y = check_y(y, X.shape[0])
        if not (self.warm_start and hasattr(self, "params_")):
            self._initialize(X, y)
        else:
            check_X(X, self.spec_)
        if eval_set is not None:
            Xv = check_X(eval_set[0], self.spec_)
            yv = check_y(eval_set[1], Xv.shape[0])
        Xn = self._normalize(X)
        t_bv = self.spec_.t_bv
        for _ in range(self.epochs):
            self.epoch_ += 1
            epoch = self.epoch_
            omega = omega_schedule(epoch)
            started = time.perf_counter()
            order = self.shuffle_rng_.permutation(X.shape[0])
            sums = {"loss1": 0.0, "loss2": 0.0, "loss3": 0.0, "total": 0.0}
            for b, start in enumerate(range(0, len(order), self.batch_size)):
                idx = order[start:start + self.batch_size]
                xb = Xn[idx]
                out = self._forward(xb, training=True)
                loss, parts = combined_loss(
                    out["pred"], y[idx], out["x1_av"], out["x2_av"], xb[:, :, t_bv:, :], self.psi, omega
                )
                if not np.isfinite(parts["total"]):
                    raise TrainingDivergedError(f"non-finite loss at epoch {epoch}, batch {b}")
                self.optimizer_.zero_grad()
                loss.backward()
                self.optimizer_.step()
                for k in sums:
                    sums[k] += parts[k] * len(idx)
            row = {"epoch": epoch, "omega": omega}
            row.update({k: v / X.shape[0] for k, v in sums.items()})
            if eval_set is not None:
                val = metric_row(self._predict_with(Xv, self.params_), yv)
                row.update({f"val_{k}": v for k, v in val.items()})
                score = val["dur_mae"] + val["len_mae"]
                if score < self.best_score_:
                    self.best_score_ = score
                    self.best_epoch_ = epoch
                    self.best_params_ = {k: p.data.copy() for k, p in self.params_.items()}
            row["seconds"] = time.perf_counter() - started
            self.history_.append(row)
            if self.verbose:
                logger.info("epoch %d: %s", epoch, {k: round(v, 4) for k, v in row.items()})
        return self

    # -- inference --------------------------------------------------------------
    def _inference_params(self):
        if self.restore_best and getattr(self, "best_params_", None) is not None:
            return {k: Tensor(v) for k, v in self.best_params_.items()}
        return self.params_

    def _predict_with(self, X: np.ndarray, params, batch: int = 64) -> np.ndarray:
        Xn = self._normalize(X)
        out = []
        with no_grad():
            for start in range(0, Xn.shape[0], batch):
                out.append(self._forward(Xn[start:start + batch], training=False, params=params)["pred"].data)
        return np.concatenate(out, axis=0)

    def predict(self, X) -> np.ndarray:
        """``(n_samples, 2)`` predicted duration (minutes) and impact length (miles)."""
        check_is_fitted(self, "params_")
        X = check_X(X, self.spec_)
        return self._predict_with(X, self._inference_params())

    def forward_details(self, X, trace: dict | None = None) -> dict:
        """All intermediate outputs for ``X`` as numpy arrays (``None`` where a stage is ablated)."""
        check_is_fitted(self, "params_")
        X = check_X(X, self.spec_)
        with no_grad():
            out = self._forward(self._normalize(X), training=False, params=self._inference_params(), trace=trace)
        return {k: (v.data if isinstance(v, Tensor) else v) for k, v in out.items()}

    def importance_scores(self, X) -> np.ndarray:
        """Importance scores ``(n, S, T, C)``; zeros when the variant has no score."""
        out = self.forward_details(X)
        if out["score"] is None:
            return np.zeros_like(out["h_prime"])
        return out["score"]
