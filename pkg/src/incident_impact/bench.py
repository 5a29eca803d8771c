"""Wall-clock scaling of the anchored spatial stack against plain sensor attention."""

from __future__ import annotations

import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .autodiff import Tensor, no_grad
from .graph import build_masks, edge_counts
from .model import ModelSpec, init_params
from .spatial import spatial_forward
from .synthetic import random_network

VARIANTS = ("dual", "vanilla")


@dataclass(frozen=True)
class BenchCase:
    n_sensors: int
    n_roads: int = 32
    n_timestamps: int = 1
    hidden: int = 16


def _prepare(case: BenchCase, variant: str, seed: int = 0):
    """A zero-argument callable running one spatial forward pass of the case."""
    if variant not in VARIANTS:
        raise ValueError(f"variant must be one of {VARIANTS}, got {variant!r}")
    rng = np.random.default_rng(seed)
    network, _ = random_network(case.n_roads, case.n_sensors, rng)
    masks = build_masks(network)
    spec = ModelSpec(
        n_sensors=case.n_sensors, n_roads=case.n_roads, t_bv=0, t_av=case.n_timestamps,
        hidden=case.hidden, no_road=variant == "vanilla", no_ttrans=True,
    )
    params = init_params(spec, rng)
    x = Tensor(rng.normal(size=(case.n_sensors, case.n_timestamps, spec.c_in)))
    return lambda: spatial_forward(x, masks, params, spec.n_head, no_road=spec.no_road)


def _time_round_robin(runs, reps: int) -> np.ndarray:
    """Seconds per call, shape ``(len(runs), reps)``; each round times every run once so drift hits all alike."""
    if reps < 1:
        raise ValueError("reps must be positive")
    times = np.empty((len(runs), reps))
    with no_grad():
        for run in runs:
            run()  # warm-up
        for i in range(reps):
            for j, run in enumerate(runs):
                start = time.perf_counter()
                run()
                times[j, i] = time.perf_counter() - start
    return times


def time_forward(case: BenchCase, variant: str, reps: int, seed: int = 0) -> np.ndarray:
    """Seconds per spatial forward pass, one entry per repetition (one warm-up call first)."""
    return _time_round_robin([_prepare(case, variant, seed)], reps)[0]


def complexity_bench(sizes, reps: int = 20, variants=VARIANTS, n_roads: int = 32, n_timestamps: int = 1,
                     hidden: int = 16) -> list[dict]:
    """Median forward time per sensor count and variant, with the growth ratio to the previous size."""
    rows = []
    sizes = sorted(sizes)
    for variant in variants:
        cases = [BenchCase(s, n_roads, n_timestamps, hidden) for s in sizes]
        medians = np.median(_time_round_robin([_prepare(c, variant) for c in cases], reps), axis=1)
        for k, s in enumerate(sizes):
            network, _ = random_network(n_roads, s, np.random.default_rng(0))
            counts = edge_counts(build_masks(network))
            rows.append({
                "variant": variant,
                "n_sensors": s,
                "n_roads": n_roads,
                "reps": reps,
                "median_seconds": float(medians[k]),
                "growth": float("nan") if k == 0 else float(medians[k] / medians[k - 1]),
                "edges": counts["total"] if variant == "dual" else counts["vanilla"],
            })
    return rows


def plot_bench(rows: list[dict], path) -> Path:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(5, 4))
    for variant in sorted({r["variant"] for r in rows}):
        pts = [r for r in rows if r["variant"] == variant]
        ax.loglog([r["n_sensors"] for r in pts], [r["median_seconds"] for r in pts], "o-", label=variant)
    ax.set_xlabel("sensors")
    ax.set_ylabel("median forward time (s)")
    ax.legend()
    fig.tight_layout()
    path = Path(path)
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path
