import math

import numpy as np
import pytest
from hypothesis import HealthCheck, settings
from hypothesis import strategies as st

from softpath.paths import INF, StepPath, make_step_path

settings.register_profile(
    "default",
    deadline=None,
    max_examples=150,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("default")

GRID = 1000  # breakpoints on a 1/1000 grid keep gaps far above the minimum


@st.composite
def step_paths(draw, max_jumps=6, vmax=8, allow_inf=False, T=1.0, terminal_jump=False):
    k = draw(st.integers(0, max_jumps))
    ticks = sorted(draw(st.sets(st.integers(1, GRID - 1), min_size=k, max_size=k)))
    vals = st.integers(1, vmax) | st.just(INF) if allow_inf else st.integers(1, vmax)
    values = [draw(vals) for _ in range(k + 1)]
    pts = [(0.0, values[0])] + [(T * t / GRID, v) for t, v in zip(ticks, values[1:])]
    if terminal_jump and draw(st.booleans()):
        pts.append((T, draw(vals)))
    return make_step_path(T, pts)


def random_path(rng, max_jumps=6, vmax=8, T=1.0, p_inf=0.0):
    k = int(rng.integers(0, max_jumps + 1))
    ticks = np.sort(rng.choice(np.arange(1, GRID), k, replace=False)) / GRID * T
    vals = rng.integers(1, vmax + 1, k + 1).astype(float)
    if p_inf:
        vals[rng.random(k + 1) < p_inf] = math.inf
    return StepPath.from_arrays(T, np.concatenate(([0.0], ticks)), vals)


@pytest.fixture
def spike():
    return make_step_path(1, [(0, 1), (0.3, 5), (0.5, 1)])


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)
