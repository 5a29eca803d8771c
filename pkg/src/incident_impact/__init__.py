"""Incident duration and impact-length regression over a road sensor network."""

from .checkpoint import CheckpointError, load_checkpoint, save_checkpoint
from .estimator import IncidentImpactRegressor, samples_to_arrays
from .graph import IncidentSample, Intersection, Road, RoadNetwork, Sensor, build_masks, edge_counts
from .io import DatasetError, load_dataset
from .labeling import BinaryKMeans1D, label_incidents
from .metrics import metric_row
from .synthetic import ScenarioConfig

__version__ = "0.1.0"

__all__ = [
    "BinaryKMeans1D",
    "CheckpointError",
    "DatasetError",
    "IncidentImpactRegressor",
    "IncidentSample",
    "Intersection",
    "Road",
    "RoadNetwork",
    "ScenarioConfig",
    "Sensor",
    "build_masks",
    "edge_counts",
    "label_incidents",
    "load_checkpoint",
    "load_dataset",
    "metric_row",
    "samples_to_arrays",
    "save_checkpoint",
]
