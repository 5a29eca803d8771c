"""Static sensor/road network, attention masks and per-incident samples."""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

MIN_DURATION_MIN = 30.0
N_MASK_LEVELS = 4


class NetworkError(ValueError):
    """A road network references unknown roads or out-of-range positions."""


@dataclass(frozen=True)
class Road:
    road_id: str
    length: float


@dataclass(frozen=True)
class Intersection:
    road_a: str
    road_b: str
    position_on_a: float
    position_on_b: float


@dataclass(frozen=True)
class Sensor:
    sensor_id: str
    road_id: str
    milepost: float


@dataclass(frozen=True, eq=False)
class RoadNetwork:
    """Roads (one per travel direction), their intersections and the sensors on them.

    Mileposts increase in the direction of travel, so a sensor is upstream of
    a point on the same road when its milepost is smaller.
    """

    roads: tuple[Road, ...]
    intersections: tuple[Intersection, ...] = ()
    sensors: tuple[Sensor, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "roads", tuple(self.roads))
        object.__setattr__(self, "intersections", tuple(self.intersections))
        object.__setattr__(self, "sensors", tuple(self.sensors))
        lengths = {}
        for r in self.roads:
            if r.road_id in lengths:
                raise NetworkError(f"duplicate road id {r.road_id!r}")
            if not r.length > 0:
                raise NetworkError(f"road {r.road_id!r} has non-positive length {r.length}")
            lengths[r.road_id] = r.length
        for it in self.intersections:
            for rid, pos in ((it.road_a, it.position_on_a), (it.road_b, it.position_on_b)):
                if rid not in lengths:
                    raise NetworkError(f"intersection references unknown road {rid!r}")
                if not 0.0 <= pos <= lengths[rid]:
                    raise NetworkError(f"intersection position {pos} outside road {rid!r}")
            if it.road_a == it.road_b:
                raise NetworkError(f"intersection joins road {it.road_a!r} to itself")
        seen = set()
        for s in self.sensors:
            if s.sensor_id in seen:
                raise NetworkError(f"duplicate sensor id {s.sensor_id!r}")
            seen.add(s.sensor_id)
            if s.road_id not in lengths:
                raise NetworkError(f"sensor {s.sensor_id!r} references unknown road {s.road_id!r}")
            if not 0.0 <= s.milepost <= lengths[s.road_id]:
                raise NetworkError(
                    f"sensor {s.sensor_id!r} milepost {s.milepost} outside road {s.road_id!r}"
                )

    @property
    def n_roads(self) -> int:
        return len(self.roads)

    @property
    def n_sensors(self) -> int:
        return len(self.sensors)

    @cached_property
    def road_index(self) -> dict[str, int]:
        return {r.road_id: i for i, r in enumerate(self.roads)}

    @cached_property
    def sensor_index(self) -> dict[str, int]:
        return {s.sensor_id: i for i, s in enumerate(self.sensors)}

    @cached_property
    def sensor_roads(self) -> np.ndarray:
        return np.array([self.road_index[s.road_id] for s in self.sensors], dtype=int)

    @cached_property
    def sensor_mileposts(self) -> np.ndarray:
        return np.array([s.milepost for s in self.sensors], dtype=float)

    def road_length(self, road_id: str) -> float:
        return self.roads[self.road_index[road_id]].length

    def upstream_sensors(self, road_id: str, milepost: float) -> list[tuple[int, float]]:
        """Sensors at or before ``milepost`` on ``road_id``, nearest first, as (index, distance)."""
        out = [
            (i, milepost - s.milepost)
            for i, s in enumerate(self.sensors)
            if s.road_id == road_id and s.milepost <= milepost
        ]
        out.sort(key=lambda t: (t[1], t[0]))
        return out

    def to_dict(self) -> dict:
        return {
            "roads": [[r.road_id, r.length] for r in self.roads],
            "intersections": [
                [i.road_a, i.road_b, i.position_on_a, i.position_on_b] for i in self.intersections
            ],
            "sensors": [[s.sensor_id, s.road_id, s.milepost] for s in self.sensors],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "RoadNetwork":
        return cls(
            roads=tuple(Road(str(a), float(b)) for a, b in d["roads"]),
            intersections=tuple(
                Intersection(str(a), str(b), float(p), float(q)) for a, b, p, q in d["intersections"]
            ),
            sensors=tuple(Sensor(str(a), str(b), float(m)) for a, b, m in d["sensors"]),
        )


@dataclass(frozen=True, eq=False)
class MaskSet:
    """Sensor-to-road mask ``m_sr`` (|S| x |R|) and four cumulative road-to-road levels."""

    m_sr: np.ndarray
    m_rr_levels: np.ndarray  # (4, |R|, |R|)

    @property
    def m_rs(self) -> np.ndarray:
        return self.m_sr.T


def road_adjacency(network: RoadNetwork) -> np.ndarray:
    n = network.n_roads
    adj = np.zeros((n, n), dtype=bool)
    idx = network.road_index
    for it in network.intersections:
        a, b = idx[it.road_a], idx[it.road_b]
        adj[a, b] = adj[b, a] = True
    return adj


def build_masks(network: RoadNetwork) -> MaskSet:
    """Masks for the sensor-to-road stage and the four road-to-road heads.

    Level 1 keeps only self edges, level 2 adds intersecting roads, level 3
    adds roads sharing an intersecting neighbour and level 4 is fully
    connected. Each level contains all edges of the lower ones.
    """
    n_r, n_s = network.n_roads, network.n_sensors
    m_sr = np.zeros((n_s, n_r), dtype=bool)
    m_sr[np.arange(n_s), network.sensor_roads] = True

    adj = road_adjacency(network)
    eye = np.eye(n_r, dtype=bool)
    a = adj.astype(np.int64)
    level2 = eye | adj
    level3 = level2 | ((a @ a) > 0)
    level4 = np.ones((n_r, n_r), dtype=bool)
    return MaskSet(m_sr=m_sr, m_rr_levels=np.stack([eye, level2, level3, level4]))


def edge_counts(masks: MaskSet) -> dict[str, int]:
    """Edge counts of the dual-level graph: sr ones, rr ones at the densest level, rs (unmasked)."""
    n_s, n_r = masks.m_sr.shape
    out = {
        "sensor_road": int(masks.m_sr.sum()),
        "road_road": int(masks.m_rr_levels[-1].sum()),
        "road_sensor": n_s * n_r,
    }
    out["total"] = sum(out.values())
    out["vanilla"] = n_s * n_s
    return out


@dataclass
class IncidentSample:
    """Feature window around one incident plus its impact labels."""

    x: np.ndarray  # (|S|, T, C_in)
    t_bv: int
    t_av: int
    y_dur: float
    y_len: float
    meta: dict = field(default_factory=dict)

    @property
    def n_timestamps(self) -> int:
        return self.x.shape[1]


def validate_sample(sample: IncidentSample, network: RoadNetwork | None = None) -> list[str]:
    """Return the violated sample invariants; an empty list means the sample is valid."""
    problems = []
    x = np.asarray(sample.x)
    if x.ndim != 3:
        problems.append(f"x: expected 3 axes (sensor, time, channel), got shape {x.shape}")
    else:
        if x.shape[1] != sample.t_bv + sample.t_av:
            problems.append(
                f"t_bv/t_av: T={x.shape[1]} but t_bv + t_av = {sample.t_bv + sample.t_av}"
            )
        if network is not None and x.shape[0] != network.n_sensors:
            problems.append(f"x: {x.shape[0]} sensors but network has {network.n_sensors}")
        if not np.all(np.isfinite(x)):
            problems.append("x: contains non-finite values")
    if sample.t_av < 1:
        problems.append("t_av: need at least one after-validation timestamp")
    if sample.t_bv < 0:
        problems.append("t_bv: negative")
    if not sample.y_dur >= MIN_DURATION_MIN:
        problems.append(f"y_dur: {sample.y_dur} min is below the {MIN_DURATION_MIN:g}-minute filter")
    if not sample.y_len >= 0:
        problems.append(f"y_len: negative impact length {sample.y_len}")
    if network is not None and "road_id" in sample.meta:
        if sample.meta["road_id"] not in network.road_index:
            problems.append(f"meta.road_id: unknown road {sample.meta['road_id']!r}")
    return problems
