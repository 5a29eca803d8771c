"""Synthetic road networks and traffic with planted incident congestion.

Each incident plants a congestion wedge on its road: starting shortly before
validation at the incident location, the slowdown spreads upstream until it
reaches the planted extent, then clears from the far end back towards the
incident before restoration. The planted duration and extent are kept as
ground truth so the labeling pipeline and the model can be checked against
them.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .config import parse_key_values, read_config
from .graph import Intersection, Road, RoadNetwork, Sensor
from .labeling import BINS_PER_DAY, BINS_PER_WEEK, IncidentRecord, Measurements

MIN_DURATION_BINS = 6
MAX_DURATION_BINS = 36
LEAD_BINS = 2
SLOT_BINS = 48
CATEGORIES = ("collision", "hazard", "disabled vehicle", "debris")


@dataclass(frozen=True)
class ScenarioConfig:
    n_sensors: int = 60
    n_roads: int = 8
    days: int = 35
    incident_count: int = 200
    seed: int = 0
    missing_rate: float = 0.0005
    zero_length_fraction: float = 0.1
    short_fraction: float = 0.0
    noise_mph: float = 1.5
    t_bv: int = 6
    t_av: int = 3

    def __post_init__(self):
        if self.n_roads < 1 or self.n_sensors < self.n_roads:
            raise ValueError("need at least one road and at least one sensor per road")
        if self.days < 1 or self.incident_count < 0:
            raise ValueError("days must be positive and incident_count non-negative")

    @classmethod
    def from_text(cls, text: str) -> "ScenarioConfig":
        """Parse ``key = value`` lines; ``#`` starts a comment."""
        return parse_key_values(cls, text)

    @classmethod
    def from_file(cls, path) -> "ScenarioConfig":
        return read_config(cls, path)


@dataclass
class PlantedIncident:
    incident_id: str
    duration_min: float
    extent: float
    severity: float
    # sensors congested at some point of the observation window
    visible: list[int] = field(default_factory=list)
    # every sensor the wedge reaches
    affected: list[int] = field(default_factory=list)


@dataclass
class Scenario:
    network: RoadNetwork
    measurements: Measurements
    records: list[IncidentRecord]
    truth: list[PlantedIncident]
    spacing: dict[str, float]


def _round(x: float) -> int:
    return int(np.floor(x + 0.5))


def random_network(n_roads: int, n_sensors: int, rng: np.random.Generator) -> tuple[RoadNetwork, dict[str, float]]:
    """Connected road graph with evenly spaced sensors; also returns sensor spacing per road."""
    lengths = np.round(rng.uniform(8.0, 16.0, size=n_roads), 2)
    roads = [Road(f"R{i:02d}", float(lengths[i])) for i in range(n_roads)]
    pairs = set()
    for i in range(1, n_roads):
        pairs.add((int(rng.integers(0, i)), i))
    for _ in range(n_roads // 3):
        a, b = sorted(rng.choice(n_roads, size=2, replace=False).tolist()) if n_roads > 1 else (0, 0)
        if a != b:
            pairs.add((a, b))
    inters = [
        Intersection(
            roads[a].road_id,
            roads[b].road_id,
            float(np.round(rng.uniform(0, lengths[a]), 2)),
            float(np.round(rng.uniform(0, lengths[b]), 2)),
        )
        for a, b in sorted(pairs)
    ]
    # largest-remainder allocation, at least one sensor per road
    share = lengths / lengths.sum() * (n_sensors - n_roads)
    counts = np.floor(share).astype(int) + 1
    rest = n_sensors - counts.sum()
    counts[np.argsort(-(share - np.floor(share)), kind="stable")[:rest]] += 1
    sensors, spacing = [], {}
    for road, n in zip(roads, counts):
        gap = road.length / n
        spacing[road.road_id] = gap
        for k in range(n):
            sensors.append(Sensor(f"S{len(sensors):04d}", road.road_id, round((k + 0.5) * gap, 6)))
    return RoadNetwork(tuple(roads), tuple(inters), tuple(sensors)), spacing


def background(network: RoadNetwork, n_bins: int, rng: np.random.Generator, noise: float) -> np.ndarray:
    """Weekly-periodic free-flow speed plus noise."""
    s = network.n_sensors
    t = np.arange(n_bins)
    base = rng.uniform(60.0, 66.0, size=(s, 1))
    phase = rng.uniform(0, 2 * np.pi, size=(s, 1))
    daily = 3.0 * np.sin(2 * np.pi * t / BINS_PER_DAY + phase)
    weekly = 1.0 * np.sin(2 * np.pi * t / BINS_PER_WEEK)
    return base + daily + weekly + rng.normal(0.0, noise, size=(s, n_bins))


def occupancy_from_speed(speed: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    occ = 0.06 + 0.5 * np.clip(1.0 - speed / 70.0, 0.0, 1.0)
    return np.clip(occ + rng.normal(0.0, 0.005, size=speed.shape), 0.0, 1.0)


def synthesize_scenario(config: ScenarioConfig) -> Scenario:
    """Build a network, background traffic and ``incident_count`` planted incidents.

    Each incident gets its own time slot of ``SLOT_BINS`` bins, so no two
    wedges overlap in time. No two incidents on one road share the same slot
    of the week, so every weekly-baseline bin keeps at least one
    congestion-free observation when the history spans two weeks or more.
    """
    rng = np.random.default_rng(config.seed)
    network, spacing = random_network(config.n_roads, config.n_sensors, rng)
    n_bins = config.days * BINS_PER_DAY
    speed = background(network, n_bins, rng, config.noise_mph)

    n_slots = n_bins // SLOT_BINS
    week_slots = BINS_PER_WEEK // SLOT_BINS
    if config.incident_count > n_slots - 1:
        raise ValueError(
            f"cannot place {config.incident_count} incidents: {config.days} days hold only "
            f"{n_slots - 1} incident slots of {SLOT_BINS} bins"
        )
    slots = np.sort(rng.choice(np.arange(1, n_slots), size=config.incident_count, replace=False))
    used, chosen = set(), []
    for k in slots:
        roads = [r for r in rng.permutation(config.n_roads) if (r, k % week_slots) not in used]
        if not roads:
            raise ValueError(f"slot {k}: every road already has an incident at this time of week")
        used.add((roads[0], k % week_slots))
        chosen.append((int(roads[0]), int(k)))
    chosen.sort(key=lambda rk: (rk[1], rk[0]))

    records, truth = [], []
    for n, (r, k) in enumerate(chosen):
        road = network.roads[r]
        gap = spacing[road.road_id]
        if rng.random() < config.short_fraction:
            dur = int(rng.integers(2, MIN_DURATION_BINS))
        else:
            dur = int(rng.integers(MIN_DURATION_BINS, MAX_DURATION_BINS + 1))
        severity = float(np.clip((dur - MIN_DURATION_BINS) / (MAX_DURATION_BINS - MIN_DURATION_BINS), 0.0, 1.0))
        validation = k * SLOT_BINS + config.t_bv + LEAD_BINS
        milepost = float(np.round(rng.uniform(0.6, 1.0) * road.length, 3))
        milepost = max(milepost, gap)
        up = network.upstream_sensors(road.road_id, milepost)
        nearest, farthest = up[0][1], up[-1][1]
        if rng.random() < config.zero_length_fraction:
            extent = float(rng.uniform(0.0, 0.9) * nearest)
        else:
            extent = 0.5 + 5.0 * severity + float(rng.normal(0.0, 0.4))
            extent = float(np.clip(extent, nearest, max(nearest, farthest - 0.25 * gap)))

        growth = max(2, _round(0.3 * dur))
        onset = validation - LEAD_BINS
        visible, affected = [], []
        for i, dist in up:
            if dist > extent:
                break
            frac = dist / extent if extent > 0 else 0.0
            on = onset + _round(growth * frac)
            off = validation + dur - 1 - _round(0.3 * dur * frac)
            depth = 38.0 - 20.0 * severity - 8.0 * (1.0 - frac)
            span = slice(on, off + 1)
            speed[i, span] = np.maximum(5.0, depth + rng.normal(0.0, config.noise_mph, size=off + 1 - on))
            affected.append(i)
            if on <= validation + config.t_av - 1:
                visible.append(i)

        iid = f"I{n:05d}"
        records.append(
            IncidentRecord(iid, road.road_id, milepost, validation, validation + dur,
                           CATEGORIES[int(rng.integers(len(CATEGORIES)))])
        )
        truth.append(PlantedIncident(iid, dur * 5.0, extent, severity, visible, affected))

    occupancy = occupancy_from_speed(speed, rng)
    if config.missing_rate > 0:
        miss = rng.random(speed.shape) < config.missing_rate
        speed[miss] = np.nan
        occupancy[miss] = np.nan
    return Scenario(network, Measurements(speed, occupancy, 0), records, truth, spacing)
