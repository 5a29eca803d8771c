"""Training, evaluation, ablation and importance reports over dataset directories."""

from __future__ import annotations

import csv
import logging
import shutil
import time
from dataclasses import asdict, dataclass, replace
from pathlib import Path

import numpy as np

from .checkpoint import Checkpoint, check_schema, load_checkpoint, save_checkpoint
from .config import format_key_values, parse_key_values, read_config
from .estimator import IncidentImpactRegressor, samples_to_arrays
from .graph import IncidentSample, RoadNetwork
from .io import (
    load_dataset,
    read_measurements,
    read_network,
    read_raw_incidents,
    write_labeled_incidents,
    write_measurements,
    write_network,
    write_scenario,
    write_summary,
)
from .labeling import LabelReport, label_incidents
from .metrics import COLUMNS, metric_row
from .synthetic import Scenario, ScenarioConfig, synthesize_scenario

logger = logging.getLogger(__name__)

SPLITS = ("train", "val", "test")
VARIANTS = {
    "Full": {},
    "No-STrans": {"no_strans": True},
    "No-TTrans": {"no_ttrans": True},
    "No-Road": {"no_road": True},
    "No-Score": {"no_score": True},
}
CHECKPOINT_NAME = "model.ckpt"


@dataclass(frozen=True)
class TrainConfig:
    batch_size: int = 8
    learning_rate: float = 5e-4
    weight_decay: float = 1e-3
    n_head: int = 4
    leaky_slope: float = 0.2
    dropout: float = 0.1
    psi: float = 1.0
    hidden: int = 16
    t_bv: int = 6
    t_av: int = 3
    epochs: int = 20
    seed: int = 0
    no_strans: bool = False
    no_ttrans: bool = False
    no_road: bool = False
    no_score: bool = False
    max_memory_gb: float = 4.0

    def __post_init__(self):
        if self.t_av < 1 or self.t_bv < 0:
            raise ValueError(f"need t_av >= 1 and t_bv >= 0, got t_bv={self.t_bv}, t_av={self.t_av}")
        if self.epochs < 0 or self.batch_size < 1:
            raise ValueError("epochs must be >= 0 and batch_size >= 1")

    @classmethod
    def from_text(cls, text: str) -> "TrainConfig":
        return parse_key_values(cls, text)

    @classmethod
    def from_file(cls, path) -> "TrainConfig":
        return read_config(cls, path)

    def to_text(self) -> str:
        return format_key_values(self)

    def estimator(self, network: RoadNetwork, **overrides) -> IncidentImpactRegressor:
        params = dict(
            network=network,
            t_bv=self.t_bv,
            hidden=self.hidden,
            n_head=self.n_head,
            batch_size=self.batch_size,
            learning_rate=self.learning_rate,
            weight_decay=self.weight_decay,
            dropout=self.dropout,
            leaky_slope=self.leaky_slope,
            psi=self.psi,
            epochs=self.epochs,
            no_strans=self.no_strans,
            no_ttrans=self.no_ttrans,
            no_road=self.no_road,
            no_score=self.no_score,
            random_state=self.seed,
            max_memory_gb=self.max_memory_gb,
        )
        params.update(overrides)
        return IncidentImpactRegressor(**params)


def split_indices(n: int, seed: int, fractions=(0.7, 0.15, 0.15)) -> dict[str, np.ndarray]:
    """Seeded random split by incident; each part keeps the original order."""
    if n < 3:
        raise ValueError(f"need at least 3 incidents to split, got {n}")
    perm = np.random.default_rng(seed).permutation(n)
    n_train = int(round(fractions[0] * n))
    n_val = int(round(fractions[1] * n))
    n_train = min(max(n_train, 1), n - 2)
    n_val = min(max(n_val, 1), n - n_train - 1)
    parts = (perm[:n_train], perm[n_train:n_train + n_val], perm[n_train + n_val:])
    return {name: np.sort(p) for name, p in zip(SPLITS, parts)}


@dataclass
class Dataset:
    path: Path
    network: RoadNetwork
    samples: list[IncidentSample]
    X: np.ndarray
    y: np.ndarray
    splits: dict[str, np.ndarray]

    @classmethod
    def load(cls, path, config: TrainConfig) -> "Dataset":
        network, samples = load_dataset(path, t_bv=config.t_bv, t_av=config.t_av)
        X, y = samples_to_arrays(samples)
        return cls(Path(path), network, samples, X, y, split_indices(len(samples), config.seed))

    def part(self, name: str) -> tuple[np.ndarray, np.ndarray]:
        idx = self.splits[name]
        return self.X[idx], self.y[idx]

    def incident_ids(self, name: str) -> list[str]:
        return [self.samples[i].meta["incident_id"] for i in self.splits[name]]


def write_table(path, rows: list[dict], columns=None) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    columns = list(columns or rows[0].keys())
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.DictWriter(fh, fieldnames=columns, lineterminator="\n", extrasaction="ignore")
        w.writeheader()
        w.writerows(rows)
    return path


def format_table(rows: list[dict], columns=None) -> str:
    columns = list(columns or rows[0].keys())
    lines = [",".join(columns)]
    for r in rows:
        lines.append(",".join(f"{r[c]:.6g}" if isinstance(r[c], float) else str(r[c]) for c in columns))
    return "\n".join(lines)


# -- training -------------------------------------------------------------------

def _fit(est: IncidentImpactRegressor, data: Dataset) -> IncidentImpactRegressor:
    X_tr, y_tr = data.part("train")
    return est.fit(X_tr, y_tr, eval_set=data.part("val"))


def _checkpoint_extra(data: Dataset) -> dict:
    return {"data": str(data.path.resolve()), "splits": {k: data.incident_ids(k) for k in SPLITS}}


def train(config: TrainConfig, data_dir, out_dir) -> Checkpoint:
    """Fit on the training split, track the best validation epoch, write the checkpoint and per-epoch log."""
    data = Dataset.load(data_dir, config)
    est = _fit(config.estimator(data.network), data)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    path = save_checkpoint(out / CHECKPOINT_NAME, est, config=asdict(config), extra=_checkpoint_extra(data))
    write_table(out / "metrics.csv", est.history_)
    (out / "config.txt").write_text(config.to_text(), encoding="utf-8")
    logger.info("wrote %s (best epoch %d)", path, est.best_epoch_)
    return load_checkpoint(path)


def resume(ckpt_path, epochs: int, out_path=None, data_dir=None) -> Checkpoint:
    """Continue training a checkpoint for ``epochs`` more epochs on the same split."""
    ckpt = load_checkpoint(ckpt_path)
    config = TrainConfig(**{**ckpt.header["config"], "epochs": epochs})
    data = Dataset.load(data_dir or ckpt.header["extra"]["data"], config)
    check_schema(ckpt.header, data.network, config.t_bv, config.t_av)
    est = ckpt.estimator
    est.set_params(warm_start=True, epochs=epochs)
    _fit(est, data)
    est.set_params(warm_start=False)
    config = replace(config, epochs=est.epoch_)
    path = save_checkpoint(out_path or ckpt_path, est, config=asdict(config), extra=_checkpoint_extra(data))
    return load_checkpoint(path)


# -- evaluation -----------------------------------------------------------------

def evaluate(ckpt_path, split: str = "test", data_dir=None) -> list[dict]:
    """Metric rows for the model and for the training-label mean predictor."""
    if split not in SPLITS:
        raise ValueError(f"split must be one of {SPLITS}, got {split!r}")
    ckpt = load_checkpoint(ckpt_path)
    config = TrainConfig(**ckpt.header["config"])
    data = Dataset.load(data_dir or ckpt.header["extra"]["data"], config)
    check_schema(ckpt.header, data.network, config.t_bv, config.t_av)
    return evaluate_estimator(ckpt.estimator, data, split)


def evaluate_estimator(est: IncidentImpactRegressor, data: Dataset, split: str, name: str = "model") -> list[dict]:
    X, y = data.part(split)
    _, y_train = data.part("train")
    baseline = np.tile(y_train.mean(axis=0), (len(y), 1))
    return [
        {"model": name, "split": split, **metric_row(est.predict(X), y)},
        {"model": "train-mean", "split": split, **metric_row(baseline, y)},
    ]


def ablate(config: TrainConfig, data_dir, out_dir=None) -> list[dict]:
    """Train the full model and each single-module ablation; test-split metrics per variant."""
    data = Dataset.load(data_dir, config)
    rows = []
    for name, flags in VARIANTS.items():
        started = time.perf_counter()
        est = _fit(config.estimator(data.network, **flags), data)
        X, y = data.part("test")
        row = {"variant": name, **metric_row(est.predict(X), y)}
        row["best_epoch"] = est.best_epoch_
        row["seconds"] = time.perf_counter() - started
        rows.append(row)
        logger.info("%s: dur_mae=%.3f len_mae=%.3f", name, row["dur_mae"], row["len_mae"])
        if out_dir is not None:
            write_table(Path(out_dir) / f"history_{name}.csv", est.history_)
    if out_dir is not None:
        write_table(Path(out_dir) / "ablation.csv", rows, ["variant", *COLUMNS, "best_epoch", "seconds"])
    return rows


# -- importance report ------------------------------------------------------------

def score_report(ckpt_path, incident_id: str, data_dir=None) -> list[dict]:
    """Per-sensor mean absolute importance for one incident, with sensor milepost and mean speed."""
    ckpt = load_checkpoint(ckpt_path)
    config = TrainConfig(**ckpt.header["config"])
    network, samples = load_dataset(data_dir or ckpt.header["extra"]["data"], t_bv=config.t_bv, t_av=config.t_av)
    check_schema(ckpt.header, network, config.t_bv, config.t_av)
    match = [s for s in samples if s.meta["incident_id"] == incident_id]
    if not match:
        raise KeyError(f"incident {incident_id!r} is not in the dataset")
    sample = match[0]
    scores = np.abs(ckpt.estimator.importance_scores(sample.x[None])[0]).mean(axis=(1, 2))
    speed = np.asarray(sample.x)[:, :, 0].mean(axis=1)
    return [
        {"sensor_id": s.sensor_id, "road_id": s.road_id, "milepost": s.milepost,
         "score": float(scores[i]), "mean_speed": float(speed[i])}
        for i, s in enumerate(network.sensors)
    ]


def plot_score_report(rows: list[dict], path, title: str = "") -> Path:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(6, 4))
    pts = ax.scatter([r["mean_speed"] for r in rows], [r["score"] for r in rows],
                     c=[r["milepost"] for r in rows], cmap="viridis", s=18)
    fig.colorbar(pts, ax=ax, label="milepost (miles)")
    ax.set_xlabel("mean speed in window (mph)")
    ax.set_ylabel("mean |importance|")
    ax.set_title(title)
    fig.tight_layout()
    path = Path(path)
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


# -- dataset preparation ----------------------------------------------------------

def generate_dataset(config: ScenarioConfig, out_dir) -> Scenario:
    scenario = synthesize_scenario(config)
    write_scenario(out_dir, scenario)
    return scenario


def label_dataset(data_dir, out_dir, *, t_bv: int = 6, t_av: int = 3) -> LabelReport:
    """Label raw incident records and write a training-ready dataset directory."""
    src, dst = Path(data_dir), Path(out_dir)
    network = read_network(src)
    meas = read_measurements(src, network)
    report = label_incidents(network, meas, read_raw_incidents(src), t_bv=t_bv, t_av=t_av)
    write_network(dst, network)
    write_measurements(dst, network, meas)
    write_labeled_incidents(dst, report.labeled)
    write_table(dst / "rejected.csv", [{"incident_id": i, "reason": r} for i, r in report.rejected],
                ["incident_id", "reason"])
    write_summary(dst, n_roads=network.n_roads, n_sensors=network.n_sensors, n_incidents=len(report.labeled))
    if (src / "truth.csv").exists() and src.resolve() != dst.resolve():
        shutil.copyfile(src / "truth.csv", dst / "truth.csv")
    return report
