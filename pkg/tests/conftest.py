import numpy as np
import pytest

from ising_sembed.generators import delaunay_map, square_grid


@pytest.fixture
def rng():
    return np.random.default_rng(0)


def grid(nx, ny, boundary="wired"):
    return square_grid(nx, ny, boundary=boundary)


def small_random_maps(rng, count, max_edges, allow_free=True):
    """Stream of random Delaunay maps with at most max_edges edges."""
    made = 0
    while made < count:
        n_pts = int(rng.integers(4, 9))
        if allow_free and rng.uniform() < 0.4:
            runs = [("wired", 0.6), ("free", 0.4)]
        else:
            runs = None
        try:
            m = delaunay_map(n_pts, rng, boundary_runs=runs)
        except Exception:
            continue
        if m.n_edges <= max_edges:
            made += 1
            yield m
