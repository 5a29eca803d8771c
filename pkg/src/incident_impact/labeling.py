"""Impact labels from raw loop-sensor speeds and incident records.

Measurements live in dense ``(sensor, bin)`` arrays of five-minute bins;
column 0 corresponds to ``start_index`` bins after the epoch. Missing cells
are NaN.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from sklearn.base import BaseEstimator, ClusterMixin
from sklearn.utils.validation import check_is_fitted

from .graph import MIN_DURATION_MIN, IncidentSample, RoadNetwork

logger = logging.getLogger(__name__)

BIN_MINUTES = 5
BINS_PER_DAY = 24 * 60 // BIN_MINUTES
BINS_PER_WEEK = 7 * BINS_PER_DAY


@dataclass
class Measurements:
    """Speed (mph) and occupancy per sensor and bin, sensors in network order."""

    speed: np.ndarray
    occupancy: np.ndarray
    start_index: int = 0

    def __post_init__(self):
        self.speed = np.asarray(self.speed, dtype=float)
        self.occupancy = np.asarray(self.occupancy, dtype=float)
        if self.speed.shape != self.occupancy.shape or self.speed.ndim != 2:
            raise ValueError(
                f"speed {self.speed.shape} and occupancy {self.occupancy.shape} must be matching 2-D arrays"
            )

    @property
    def n_bins(self) -> int:
        return self.speed.shape[1]

    def column(self, datetime_index: int) -> int:
        return datetime_index - self.start_index


@dataclass(frozen=True)
class IncidentRecord:
    incident_id: str
    road_id: str
    milepost: float
    validation_index: int
    restoration_index: int
    category: str = "unknown"


@dataclass
class LabeledIncident:
    record: IncidentRecord
    duration_min: float
    impact_len: float
    censored: bool = False

    @property
    def incident_id(self) -> str:
        return self.record.incident_id


@dataclass
class LabelReport:
    labeled: list[LabeledIncident] = field(default_factory=list)
    rejected: list[tuple[str, str]] = field(default_factory=list)
    dead_sensors: list[int] = field(default_factory=list)
    threshold: float = float("nan")


# -- missing data and baseline ---------------------------------------------

def fill_missing(values: np.ndarray, start_index: int = 0) -> tuple[np.ndarray, np.ndarray]:
    """Replace NaNs by the sensor's mean for that day, or its overall mean for an empty day.

    Returns the filled array and a boolean mask of sensors with no data at
    all; those rows stay NaN and should be excluded downstream.
    """
    values = np.asarray(values, dtype=float)
    out = values.copy()
    day = (start_index + np.arange(values.shape[1])) // BINS_PER_DAY
    present = ~np.isnan(values)
    dead = ~present.any(axis=1)
    if present.all():
        return out, dead
    with np.errstate(invalid="ignore"):
        overall = np.nanmean(np.where(dead[:, None], 0.0, values), axis=1)
    for d in np.unique(day):
        cols = day == d
        block = out[:, cols]
        miss = np.isnan(block)
        if not miss.any():
            continue
        cnt = (~miss).sum(axis=1)
        day_mean = np.where(cnt > 0, np.nansum(block, axis=1) / np.maximum(cnt, 1), overall)
        block[miss] = np.broadcast_to(day_mean[:, None], block.shape)[miss]
        out[:, cols] = block
    out[dead] = np.nan
    return out, dead


def weekly_baseline(speed: np.ndarray, start_index: int = 0) -> np.ndarray:
    """Mean speed per sensor and week bin, shape ``(S, 2016)``.

    Bins never observed fall back to the sensor's overall mean.
    """
    speed = np.asarray(speed, dtype=float)
    if speed.size == 0:
        raise ValueError("weekly baseline needs a non-empty history")
    if speed.shape[1] < BINS_PER_WEEK:
        raise ValueError(f"weekly baseline needs at least {BINS_PER_WEEK} bins, got {speed.shape[1]}")
    week_bin = (start_index + np.arange(speed.shape[1])) % BINS_PER_WEEK
    ok = ~np.isnan(speed)
    sums = np.zeros((speed.shape[0], BINS_PER_WEEK))
    counts = np.zeros_like(sums)
    np.add.at(sums.T, week_bin, np.where(ok, speed, 0.0).T)
    np.add.at(counts.T, week_bin, ok.T.astype(float))
    with np.errstate(invalid="ignore", divide="ignore"):
        overall = np.where(ok, speed, 0.0).sum(axis=1) / ok.sum(axis=1)
        base = sums / counts
    return np.where(counts > 0, base, overall[:, None])


# -- two-cluster 1-D k-means ------------------------------------------------

@dataclass(frozen=True)
class KMeansSplit:
    threshold: float
    low: np.ndarray
    centers: tuple[float, float]
    n_iter: int

    @property
    def degenerate(self) -> bool:
        return not np.isfinite(self.threshold)


def kmeans_1d_binary(values, max_iter: int = 100) -> KMeansSplit:
    """Lloyd's algorithm with k=2, centers starting at the min and max.

    Iterates until the assignment stops changing. Values at or below the
    midpoint of the final centers are labeled low. With a single distinct
    value there is nothing to split: everything is labeled high and the
    threshold is ``-inf``.
    """
    v = np.asarray(values, dtype=float).ravel()
    v_fin = v[np.isfinite(v)]
    if v_fin.size == 0 or v_fin.min() == v_fin.max():
        c = float(v_fin[0]) if v_fin.size else float("nan")
        return KMeansSplit(float("-inf"), np.zeros(v.shape, dtype=bool), (c, c), 0)
    lo, hi = float(v_fin.min()), float(v_fin.max())
    assign = None
    n_iter = 0
    for n_iter in range(1, max_iter + 1):
        new = v_fin <= 0.5 * (lo + hi)
        if assign is not None and np.array_equal(new, assign):
            break
        assign = new
        lo, hi = float(v_fin[assign].mean()), float(v_fin[~assign].mean())
    threshold = 0.5 * (lo + hi)
    with np.errstate(invalid="ignore"):
        low = v <= threshold
    return KMeansSplit(threshold, low, (lo, hi), n_iter)


class BinaryKMeans1D(ClusterMixin, BaseEstimator):
    """Estimator wrapper: ``fit`` learns the split, ``predict`` returns 0 (low) / 1 (high)."""

    def __init__(self, max_iter: int = 100):
        self.max_iter = max_iter

    def fit(self, X, y=None):
        split = kmeans_1d_binary(np.asarray(X, dtype=float).ravel(), self.max_iter)
        self.threshold_ = split.threshold
        self.cluster_centers_ = np.array(split.centers).reshape(2, 1)
        self.labels_ = (~split.low).astype(int)
        self.n_iter_ = split.n_iter
        return self

    def predict(self, X):
        check_is_fitted(self, "threshold_")
        return (np.asarray(X, dtype=float).ravel() > self.threshold_).astype(int)


def congestion_flags(speed: np.ndarray, baseline: np.ndarray, threshold: float, start_index: int = 0) -> np.ndarray:
    """Congested where the speed is in the low k-means cluster and under the weekly baseline."""
    week_bin = (start_index + np.arange(speed.shape[1])) % BINS_PER_WEEK
    with np.errstate(invalid="ignore"):
        return (speed <= threshold) & (speed < baseline[:, week_bin])


# -- impact length ------------------------------------------------------------

def impact_length_from_distances(distances, congested) -> tuple[float, bool]:
    """Walk upstream sensors (nearest first) to the first one that never saw congestion.

    If it is the nearest sensor the length is 0; otherwise it is the distance
    to the sensor just before it. Without any congestion-free sensor the
    distance to the farthest sensor is returned with ``censored=True``.
    """
    distances = np.asarray(distances, dtype=float)
    congested = np.asarray(congested, dtype=bool)
    if distances.size == 0:
        raise ValueError("no upstream sensors")
    order = np.argsort(distances, kind="stable")
    distances, congested = distances[order], congested[order]
    clean = np.flatnonzero(~congested)
    if clean.size == 0:
        return float(distances[-1]), True
    k = int(clean[0])
    return (0.0 if k == 0 else float(distances[k - 1])), False


def impact_length(
    record: IncidentRecord,
    network: RoadNetwork,
    flags: np.ndarray,
    window: tuple[int, int],
    exclude=None,
) -> tuple[float, bool]:
    """Impact length of ``record`` using congestion flags over ``window`` columns ``[start, stop)``."""
    up = [(i, d) for i, d in network.upstream_sensors(record.road_id, record.milepost)
          if exclude is None or not exclude[i]]
    if not up:
        raise ValueError(f"incident {record.incident_id}: no upstream sensor on road {record.road_id!r}")
    idx = np.array([i for i, _ in up])
    start, stop = window
    hit = flags[idx, max(start, 0):max(stop, 0)].any(axis=1)
    return impact_length_from_distances([d for _, d in up], hit)


def window_indices(validation_index: int, t_bv: int = 6, t_av: int = 3) -> range:
    """Datetime indices of the observation window; position ``t_bv`` is the validation bin."""
    return range(validation_index - t_bv, validation_index + t_av)


def filter_and_label(
    records,
    flags: np.ndarray,
    network: RoadNetwork,
    start_index: int = 0,
    *,
    t_bv: int = 6,
    t_av: int = 3,
    min_duration: float = MIN_DURATION_MIN,
    dead=None,
) -> LabelReport:
    """Durations and impact lengths for every usable record.

    Records are rejected when restoration precedes validation, the duration
    is under ``min_duration`` minutes, the observation window leaves the
    measurement range or the road has no upstream sensor.
    """
    report = LabelReport()
    n_bins = flags.shape[1]
    for rec in records:
        if rec.restoration_index < rec.validation_index:
            report.rejected.append((rec.incident_id, "restoration before validation"))
            continue
        duration = (rec.restoration_index - rec.validation_index) * BIN_MINUTES
        if duration < min_duration:
            report.rejected.append((rec.incident_id, f"duration {duration:g} min below {min_duration:g} min"))
            continue
        win = window_indices(rec.validation_index, t_bv, t_av)
        if win.start - start_index < 0 or win.stop - start_index > n_bins:
            report.rejected.append((rec.incident_id, "observation window outside measurements"))
            continue
        if rec.road_id not in network.road_index:
            report.rejected.append((rec.incident_id, f"unknown road {rec.road_id!r}"))
            continue
        clearance = (rec.validation_index - start_index, rec.restoration_index - start_index)
        try:
            length, censored = impact_length(rec, network, flags, clearance, exclude=dead)
        except ValueError as exc:
            report.rejected.append((rec.incident_id, str(exc)))
            continue
        report.labeled.append(LabeledIncident(rec, float(duration), length, censored))
    return report


def label_incidents(network: RoadNetwork, meas: Measurements, records, *, t_bv: int = 6, t_av: int = 3) -> LabelReport:
    """Full pipeline: fill gaps, weekly baseline, k-means split, flags, then labels."""
    speed, dead = fill_missing(meas.speed, meas.start_index)
    baseline = weekly_baseline(speed, meas.start_index)
    split = kmeans_1d_binary(speed[~dead])
    flags = congestion_flags(speed, baseline, split.threshold, meas.start_index)
    flags[dead] = False
    report = filter_and_label(records, flags, network, meas.start_index, t_bv=t_bv, t_av=t_av, dead=dead)
    report.dead_sensors = [int(i) for i in np.flatnonzero(dead)]
    report.threshold = split.threshold
    if report.rejected:
        logger.info("rejected %d of %d incident records", len(report.rejected), len(records))
    return report


def build_samples(meas: Measurements, labeled, *, t_bv: int = 6, t_av: int = 3) -> list[IncidentSample]:
    """Cut ``(S, T, 2)`` speed/occupancy windows around each labeled incident."""
    speed, dead = fill_missing(meas.speed, meas.start_index)
    occ, _ = fill_missing(meas.occupancy, meas.start_index)
    if dead.any():
        speed[dead] = np.nanmean(speed[~dead])
        occ[dead] = np.nanmean(occ[~dead])
    occ = np.where(np.isnan(occ), np.nanmean(occ), occ)
    samples = []
    for lab in labeled:
        rec = lab.record
        cols = np.array(window_indices(rec.validation_index, t_bv, t_av)) - meas.start_index
        if cols[0] < 0 or cols[-1] >= meas.n_bins:
            raise ValueError(f"incident {rec.incident_id}: observation window outside measurements")
        x = np.stack([speed[:, cols], occ[:, cols]], axis=-1)
        meta = {
            "incident_id": rec.incident_id,
            "road_id": rec.road_id,
            "milepost": rec.milepost,
            "validation_index": rec.validation_index,
            "category": rec.category,
        }
        samples.append(IncidentSample(x, t_bv, t_av, lab.duration_min, lab.impact_len, meta))
    return samples
