"""rmbench: desk-scale robot imitation learning bench.

End-to-end pipeline over a deterministic planar simulator: demonstration
collection (scripted expert, keyboard, browser teleop), chunked binary
episode storage, behavior-cloning / action-chunking / diffusion policies,
and seeded success-rate benchmarking.
"""

__version__ = "0.1.0"

from .core import (Action, ChannelSpec, EnvSpec, Environment, Observation,
                   State, StepResult, make_env, register_env, registered_envs)

__all__ = [
    "Action", "ChannelSpec", "EnvSpec", "Environment", "Observation",
    "State", "StepResult", "make_env", "register_env", "registered_envs",
    "__version__",
]
