"""Policy families with a shared train/infer interface."""

from .config import INPUT_ORDER, POLICY_KINDS, PolicyConfig
from .diffusion import NoiseSchedule, ancestral_sample, ddpm_forward, embed_timesteps
from .encoding import FeatureEncoder, pool_image, proprio_channel_names
from .models import (EnsembleBuffer, PolicyCore, PolicyModel, ensemble_average,
                     infer, load_policy, make_random_model, save_policy, train)

__all__ = [
    "INPUT_ORDER", "POLICY_KINDS", "PolicyConfig", "NoiseSchedule",
    "ancestral_sample", "ddpm_forward", "embed_timesteps", "FeatureEncoder",
    "pool_image", "proprio_channel_names", "EnsembleBuffer", "PolicyCore",
    "PolicyModel", "ensemble_average", "infer", "load_policy",
    "make_random_model", "save_policy", "train",
]
