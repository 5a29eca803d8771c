"""Comma-separated dataset files.

A dataset directory holds ``roads.csv``, ``intersections.csv``,
``sensors.csv``, ``measurements.csv`` and either ``incidents_raw.csv``
(validation and restoration indices, before labeling) or ``incidents.csv``
(labeled). ``dataset.txt`` carries ``key=value`` summary counts that are
checked on load. Generated scenarios also write ``truth.csv``.
"""

from __future__ import annotations

import csv
import math
from pathlib import Path

import numpy as np

from .graph import Intersection, IncidentSample, Road, RoadNetwork, Sensor, NetworkError, validate_sample
from .labeling import BIN_MINUTES, IncidentRecord, LabeledIncident, Measurements, build_samples

ROADS_HEADER = ("road_id", "length_miles")
INTERSECTIONS_HEADER = ("road_a", "road_b", "pos_a_miles", "pos_b_miles")
SENSORS_HEADER = ("sensor_id", "road_id", "milepost_miles")
MEASUREMENTS_HEADER = ("sensor_id", "datetime_index", "speed_mph", "occupancy")
INCIDENTS_HEADER = (
    "incident_id", "road_id", "milepost_miles", "validation_index", "category", "duration_min", "impact_len_miles",
)
RAW_INCIDENTS_HEADER = (
    "incident_id", "road_id", "milepost_miles", "validation_index", "restoration_index", "category",
)
TRUTH_HEADER = ("incident_id", "duration_min", "extent_miles", "severity", "visible_sensors", "affected_sensors")


class DatasetError(ValueError):
    """A dataset file is malformed or inconsistent; the message names file and line."""


def _rows(path: Path, header):
    """Yield ``(line_number, row_dict)`` after checking the header."""
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            first = next(reader)
        except StopIteration:
            raise DatasetError(f"{path.name}:1: missing header row") from None
        first = [c.strip() for c in first]
        if tuple(first) != tuple(header):
            raise DatasetError(f"{path.name}:1: expected header {','.join(header)}, got {','.join(first)}")
        for row in reader:
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(header):
                raise DatasetError(
                    f"{path.name}:{reader.line_num}: expected {len(header)} fields, got {len(row)}"
                )
            yield reader.line_num, dict(zip(header, (c.strip() for c in row)))


def _num(path: Path, line: int, value: str, kind=float, allow_empty: bool = False):
    if allow_empty and value == "":
        return math.nan
    try:
        return kind(value)
    except ValueError:
        raise DatasetError(f"{path.name}:{line}: cannot parse {value!r} as {kind.__name__}") from None


def _write(path: Path, header, rows) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def _fmt(v: float) -> str:
    return "" if v != v else repr(float(v))


# -- network ------------------------------------------------------------------

def read_network(root) -> RoadNetwork:
    root = Path(root)
    p = root / "roads.csv"
    roads = [Road(r["road_id"], _num(p, n, r["length_miles"])) for n, r in _rows(p, ROADS_HEADER)]
    known = {r.road_id for r in roads}
    p = root / "intersections.csv"
    inters = []
    if p.exists():
        for n, r in _rows(p, INTERSECTIONS_HEADER):
            for key in ("road_a", "road_b"):
                if r[key] not in known:
                    raise DatasetError(f"{p.name}:{n}: unknown road {r[key]!r}")
            inters.append(Intersection(r["road_a"], r["road_b"], _num(p, n, r["pos_a_miles"]), _num(p, n, r["pos_b_miles"])))
    p = root / "sensors.csv"
    sensors = []
    for n, r in _rows(p, SENSORS_HEADER):
        if r["road_id"] not in known:
            raise DatasetError(f"{p.name}:{n}: sensor {r['sensor_id']!r} references unknown road {r['road_id']!r}")
        sensors.append(Sensor(r["sensor_id"], r["road_id"], _num(p, n, r["milepost_miles"])))
    try:
        return RoadNetwork(tuple(roads), tuple(inters), tuple(sensors))
    except NetworkError as exc:
        raise DatasetError(str(exc)) from exc


def write_network(root, network: RoadNetwork) -> None:
    root = Path(root)
    root.mkdir(parents=True, exist_ok=True)
    _write(root / "roads.csv", ROADS_HEADER, [(r.road_id, _fmt(r.length)) for r in network.roads])
    _write(
        root / "intersections.csv",
        INTERSECTIONS_HEADER,
        [(i.road_a, i.road_b, _fmt(i.position_on_a), _fmt(i.position_on_b)) for i in network.intersections],
    )
    _write(root / "sensors.csv", SENSORS_HEADER, [(s.sensor_id, s.road_id, _fmt(s.milepost)) for s in network.sensors])


# -- measurements -------------------------------------------------------------

def read_measurements(root, network: RoadNetwork) -> Measurements:
    """Dense arrays from long-format rows; absent rows and empty fields become NaN."""
    p = Path(root) / "measurements.csv"
    idx = network.sensor_index
    sens, times, spd, occ = [], [], [], []
    for n, r in _rows(p, MEASUREMENTS_HEADER):
        i = idx.get(r["sensor_id"])
        if i is None:
            raise DatasetError(f"{p.name}:{n}: unknown sensor {r['sensor_id']!r}")
        sens.append(i)
        times.append(_num(p, n, r["datetime_index"], int))
        spd.append(_num(p, n, r["speed_mph"], allow_empty=True))
        occ.append(_num(p, n, r["occupancy"], allow_empty=True))
    if not times:
        return Measurements(np.full((network.n_sensors, 0), np.nan), np.full((network.n_sensors, 0), np.nan), 0)
    times = np.asarray(times)
    start = int(times.min())
    n_bins = int(times.max()) - start + 1
    speed = np.full((network.n_sensors, n_bins), np.nan)
    occupancy = np.full_like(speed, np.nan)
    speed[sens, times - start] = spd
    occupancy[sens, times - start] = occ
    return Measurements(speed, occupancy, start)


def write_measurements(root, network: RoadNetwork, meas: Measurements) -> None:
    p = Path(root) / "measurements.csv"
    with open(p, "w", encoding="utf-8") as fh:
        fh.write(",".join(MEASUREMENTS_HEADER) + "\n")
        for i, s in enumerate(network.sensors):
            for j in range(meas.n_bins):
                fh.write(f"{s.sensor_id},{meas.start_index + j},{_fmt(meas.speed[i, j])},{_fmt(meas.occupancy[i, j])}\n")


# -- incidents ----------------------------------------------------------------

def read_raw_incidents(root) -> list[IncidentRecord]:
    p = Path(root) / "incidents_raw.csv"
    return [
        IncidentRecord(
            r["incident_id"], r["road_id"], _num(p, n, r["milepost_miles"]),
            _num(p, n, r["validation_index"], int), _num(p, n, r["restoration_index"], int), r["category"],
        )
        for n, r in _rows(p, RAW_INCIDENTS_HEADER)
    ]


def write_raw_incidents(root, records) -> None:
    _write(
        Path(root) / "incidents_raw.csv",
        RAW_INCIDENTS_HEADER,
        [(r.incident_id, r.road_id, _fmt(r.milepost), r.validation_index, r.restoration_index, r.category) for r in records],
    )


def read_labeled_incidents(root, network: RoadNetwork | None = None) -> list[LabeledIncident]:
    p = Path(root) / "incidents.csv"
    out = []
    for n, r in _rows(p, INCIDENTS_HEADER):
        if network is not None and r["road_id"] not in network.road_index:
            raise DatasetError(f"{p.name}:{n}: unknown road {r['road_id']!r}")
        v = _num(p, n, r["validation_index"], int)
        dur = _num(p, n, r["duration_min"])
        rec = IncidentRecord(
            r["incident_id"], r["road_id"], _num(p, n, r["milepost_miles"]), v, v + int(round(dur / BIN_MINUTES)), r["category"]
        )
        out.append(LabeledIncident(rec, dur, _num(p, n, r["impact_len_miles"])))
    return out


def write_labeled_incidents(root, labeled) -> None:
    _write(
        Path(root) / "incidents.csv",
        INCIDENTS_HEADER,
        [
            (l.record.incident_id, l.record.road_id, _fmt(l.record.milepost), l.record.validation_index,
             l.record.category, _fmt(l.duration_min), _fmt(l.impact_len))
            for l in labeled
        ],
    )


def write_truth(root, network: RoadNetwork, truth) -> None:
    ids = [s.sensor_id for s in network.sensors]
    _write(
        Path(root) / "truth.csv",
        TRUTH_HEADER,
        [
            (t.incident_id, _fmt(t.duration_min), _fmt(t.extent), _fmt(t.severity),
             ";".join(ids[i] for i in t.visible), ";".join(ids[i] for i in t.affected))
            for t in truth
        ],
    )


def read_truth(root, network: RoadNetwork) -> dict[str, dict]:
    p = Path(root) / "truth.csv"
    idx = network.sensor_index
    out = {}
    for n, r in _rows(p, TRUTH_HEADER):
        out[r["incident_id"]] = {
            "duration_min": _num(p, n, r["duration_min"]),
            "extent": _num(p, n, r["extent_miles"]),
            "visible": [idx[s] for s in r["visible_sensors"].split(";") if s],
            "affected": [idx[s] for s in r["affected_sensors"].split(";") if s],
        }
    return out


# -- summary and whole-dataset helpers ---------------------------------------

def write_summary(root, **counts) -> None:
    with open(Path(root) / "dataset.txt", "w", encoding="utf-8") as fh:
        for k, v in counts.items():
            fh.write(f"{k}={v}\n")


def read_summary(root) -> dict[str, int]:
    p = Path(root) / "dataset.txt"
    if not p.exists():
        return {}
    out = {}
    for n, line in enumerate(p.read_text(encoding="utf-8").splitlines(), 1):
        if not line.strip():
            continue
        if "=" not in line:
            raise DatasetError(f"{p.name}:{n}: expected key=value")
        k, v = line.split("=", 1)
        out[k.strip()] = _num(p, n, v.strip(), int)
    return out


def load_dataset(path, *, t_bv: int = 6, t_av: int = 3) -> tuple[RoadNetwork, list[IncidentSample]]:
    """Read a labeled dataset directory into a network and validated samples.

    Raises :class:`DatasetError` on malformed files, on summary-count
    mismatches, and with every collected sample violation.
    """
    root = Path(path)
    network = read_network(root)
    labeled = read_labeled_incidents(root, network)
    summary = read_summary(root)
    actual = {"n_roads": network.n_roads, "n_sensors": network.n_sensors, "n_incidents": len(labeled)}
    for key, value in actual.items():
        if key in summary and summary[key] != value:
            raise DatasetError(f"dataset.txt: {key}={summary[key]} but files contain {value}")
    if not labeled:
        return network, []
    meas = read_measurements(root, network)
    try:
        samples = build_samples(meas, labeled, t_bv=t_bv, t_av=t_av)
    except ValueError as exc:
        raise DatasetError(str(exc)) from exc
    problems = []
    for s in samples:
        problems.extend(f"{s.meta['incident_id']}: {v}" for v in validate_sample(s, network))
    if problems:
        raise DatasetError("invalid samples:\n" + "\n".join(problems))
    return network, samples


def write_scenario(root, scenario) -> None:
    """Write a generated scenario (unlabeled records plus ground truth)."""
    root = Path(root)
    write_network(root, scenario.network)
    write_measurements(root, scenario.network, scenario.measurements)
    write_raw_incidents(root, scenario.records)
    write_truth(root, scenario.network, scenario.truth)
    write_summary(root, n_roads=scenario.network.n_roads, n_sensors=scenario.network.n_sensors,
                  n_records=len(scenario.records))
