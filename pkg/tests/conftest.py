import numpy as np
import pytest

from rmbench import make_env
from rmbench.core import ChannelSpec, EnvSpec
from rmbench.sim2d.tasks import TaskId


@pytest.fixture
def pick_env():
    return make_env("pick_place", randomization_radius=0.1)


def build_small_spec():
    """Tiny synthetic spec for storage tests (no image, short horizon)."""
    return EnvSpec(
        env_id="pick_place",
        embodiment="single_arm",
        link_lengths=(1.0, 1.0),
        task=TaskId("pick_place"),
        action_dim=3,
        observation_channels=(
            ChannelSpec("joint_pos_abs", "f32", (2,), "absolute"),
            ChannelSpec("joint_pos_rel", "f32", (2,), "relative"),
            ChannelSpec("gripper", "f32", (1,), "none"),
        ),
        max_steps=50,
    )


@pytest.fixture
def small_spec():
    return build_small_spec()


def make_grid_walk(rng, t, dim):
    """Absolute series on the 2**-16 grid, like env kinematic channels."""
    steps = rng.integers(-800, 800, size=(t, dim))
    return (np.cumsum(steps, axis=0) * 2.0 ** -16).astype(np.float32)
