import sys
from pathlib import Path

import pytest

from dynbench.scenes import WalkerConfig, generate_synthetic_scene

sys.path.insert(0, str(Path(__file__).parent))  # for oracles / mock peer helpers


def linear_walker_config(**overrides):
    """Walkers that move in exact straight lines (no turns, no jitter)."""
    params = dict(
        n_agents=8,
        duration_ticks=100,
        delta_t=0.4,
        bounds=(-1e6, -1e6, 1e6, 1e6),
        speed_min=0.5,
        speed_max=2.0,
        turn_prob=0.0,
        speed_jitter=0.0,
        partial_lifespan_prob=0.3,
    )
    params.update(overrides)
    return WalkerConfig(**params)


def make_linear_scenes(count, seed=100, **overrides):
    return [
        generate_synthetic_scene(
            linear_walker_config(scene_id=f"lin-{i:02d}", **overrides), seed + i
        )
        for i in range(count)
    ]


def make_walker_scenes(count, seed=200, **overrides):
    params = dict(n_agents=8, duration_ticks=60, scene_id="walk")
    params.update(overrides)
    scenes = []
    for i in range(count):
        params["scene_id"] = f"walk-{i:02d}"
        scenes.append(generate_synthetic_scene(WalkerConfig(**params), seed + i))
    return scenes


@pytest.fixture
def linear_scene():
    return make_linear_scenes(1, seed=42)[0]


@pytest.fixture
def walker_scene():
    return make_walker_scenes(1, seed=7)[0]
