import numpy as np
import pytest

from incident_impact.graph import Intersection, Road, RoadNetwork, Sensor


def finite_difference(f, arrays, step=1e-5):
    """Central differences of scalar ``f()`` with respect to each array, perturbed in place."""
    grads = []
    for a in arrays:
        g = np.zeros_like(a)
        it = np.nditer(a, flags=["multi_index"])
        for _ in it:
            i = it.multi_index
            old = a[i]
            a[i] = old + step
            hi = f()
            a[i] = old - step
            lo = f()
            a[i] = old
            g[i] = (hi - lo) / (2 * step)
        grads.append(g)
    return grads


def relative_error(analytic, numeric):
    """``|a - n| / max(|a|, |n|)`` in the Euclidean norm over the whole array."""
    analytic, numeric = np.ravel(analytic), np.ravel(numeric)
    scale = max(np.linalg.norm(analytic), np.linalg.norm(numeric), 1e-12)
    return float(np.linalg.norm(analytic - numeric) / scale)


def chain_network(n_roads=3, sensors_per_road=2):
    """Roads R0-R1-...; consecutive roads intersect, nothing else does."""
    roads = [Road(f"R{i}", 10.0) for i in range(n_roads)]
    inters = [Intersection(f"R{i}", f"R{i + 1}", 5.0, 5.0) for i in range(n_roads - 1)]
    sensors = [
        Sensor(f"S{i}_{k}", f"R{i}", 1.0 + 2.0 * k) for i in range(n_roads) for k in range(sensors_per_road)
    ]
    return RoadNetwork(tuple(roads), tuple(inters), tuple(sensors))


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def chain3():
    return chain_network(3, 2)
