"""Observation -> feature pipeline.

Static preprocessing (normalization, image pooling) happens once per
sample; the trainable branches (pooled-image MLP, per-point MLP with max
pooling, task embedding) run inside the training loop so their gradients
flow with the policy head. The point branch max-pools over points, which
makes it exactly permutation invariant; its input normalization is pooled
per coordinate for the same reason.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from ..core import EnvSpec, Observation
from ..datastore import NormStats
from ..errors import MissingChannel
from ..neuro import Mlp, backward, forward_cache, init_mlp
from .config import PolicyConfig

# channels concatenated into the proprio feature block, in this order
PROPRIO_CHANNELS = ("joint_pos_abs", "ee_pose_abs", "gripper", "base_pose_abs")
IMAGE_POOLED_SIDE = 16


def proprio_channel_names(spec: EnvSpec) -> list[str]:
    available = {c.name for c in spec.observation_channels}
    return [name for name in PROPRIO_CHANNELS if name in available]


def pool_image(img: np.ndarray) -> np.ndarray:
    """u8 [..., S, S, 3] -> grayscale [..., 16*16] in [0, 1]."""
    side = img.shape[-3]
    factor = side // IMAGE_POOLED_SIDE
    gray = img.astype(np.float64).mean(axis=-1) / 255.0
    lead = gray.shape[:-2]
    pooled = gray.reshape(lead + (IMAGE_POOLED_SIDE, factor, IMAGE_POOLED_SIDE, factor))
    pooled = pooled.mean(axis=(-3, -1))
    return pooled.reshape(lead + (IMAGE_POOLED_SIDE * IMAGE_POOLED_SIDE,))


@dataclass
class EncoderInputs:
    """Preprocessed per-sample inputs for the trainable branches."""

    proprio: Optional[np.ndarray] = None      # [B, P] normalized
    image: Optional[np.ndarray] = None        # [B, 256] pooled grayscale
    point_cloud: Optional[np.ndarray] = None  # [B, m, 2] normalized
    task_id: Optional[np.ndarray] = None      # [B] int

    def gather(self, idx: np.ndarray) -> "EncoderInputs":
        pick = lambda a: None if a is None else a[idx]
        return EncoderInputs(pick(self.proprio), pick(self.image),
                             pick(self.point_cloud), pick(self.task_id))

    @property
    def batch_size(self) -> int:
        for a in (self.proprio, self.image, self.point_cloud, self.task_id):
            if a is not None:
                return a.shape[0]
        raise ValueError("empty encoder inputs")


class FeatureEncoder:
    """Preprocessing constants plus the trainable branch parameters."""

    def __init__(self, spec: EnvSpec, stats: NormStats, cfg: PolicyConfig,
                 seed: int, zero: bool = False):
        self.spec = spec
        self.cfg = cfg
        self.inputs = cfg.obs_inputs
        self.proprio_names = proprio_channel_names(spec)
        if "proprio" in self.inputs:
            means, stds = [], []
            for name in self.proprio_names:
                m, s = stats.channels[name]
                means.append(np.ravel(m))
                stds.append(np.ravel(s))
            self.proprio_mean = np.concatenate(means)
            self.proprio_std = np.concatenate(stds)
        if "point_cloud" in self.inputs:
            self.point_mean, self.point_std = stats.pooled("point_cloud")

        self.point_mlp: Optional[Mlp] = None
        self.image_mlp: Optional[Mlp] = None
        self.task_embed: Optional[np.ndarray] = None
        if "point_cloud" in self.inputs:
            widths = (2,) + cfg.point_branch
            self.point_mlp = init_mlp(widths, cfg.activation, seed, stream_index=1, zero=zero)
        if "image" in self.inputs:
            widths = (IMAGE_POOLED_SIDE ** 2,) + cfg.image_branch
            self.image_mlp = init_mlp(widths, cfg.activation, seed, stream_index=2, zero=zero)
        if "task_id" in self.inputs:
            bound = np.sqrt(6.0 / (cfg.n_tasks + cfg.task_embed_dim))
            from ..rng import STREAM_INIT, make_rng
            rng = make_rng(seed, STREAM_INIT, 3)
            table = np.zeros((cfg.n_tasks, cfg.task_embed_dim)) if zero else \
                rng.uniform(-bound, bound, size=(cfg.n_tasks, cfg.task_embed_dim))
            self.task_embed = table.astype(np.float32)

    @property
    def feature_dim(self) -> int:
        dim = 0
        if "proprio" in self.inputs:
            dim += len(self.proprio_mean)
        if "image" in self.inputs:
            dim += self.cfg.image_branch[-1]
        if "point_cloud" in self.inputs:
            dim += self.cfg.point_branch[-1]
        if "task_id" in self.inputs:
            dim += self.cfg.task_embed_dim
        return dim

    # --- parameter plumbing (order: point, image, task) ---

    def params(self) -> list[np.ndarray]:
        out: list[np.ndarray] = []
        if self.point_mlp is not None:
            out += self.point_mlp.params()
        if self.image_mlp is not None:
            out += self.image_mlp.params()
        if self.task_embed is not None:
            out.append(self.task_embed)
        return out

    def set_params(self, params: list[np.ndarray]) -> list[np.ndarray]:
        """Consume this encoder's parameters from the front of the list."""
        rest = list(params)
        if self.point_mlp is not None:
            n = len(self.point_mlp.params())
            self.point_mlp = self.point_mlp.with_params(rest[:n])
            rest = rest[n:]
        if self.image_mlp is not None:
            n = len(self.image_mlp.params())
            self.image_mlp = self.image_mlp.with_params(rest[:n])
            rest = rest[n:]
        if self.task_embed is not None:
            self.task_embed = rest[0]
            rest = rest[1:]
        return rest

    # --- preprocessing ---

    def preprocess_arrays(self, channels: dict[str, np.ndarray]) -> EncoderInputs:
        """Normalize raw channel tensors [T, ...] into branch inputs."""
        out = EncoderInputs()
        if "proprio" in self.inputs:
            missing = [n for n in self.proprio_names if n not in channels]
            if missing:
                raise MissingChannel(f"missing channels {missing}")
            block = np.concatenate(
                [channels[n].reshape(len(channels[n]), -1).astype(np.float64)
                 for n in self.proprio_names], axis=1)
            out.proprio = (block - self.proprio_mean) / self.proprio_std
        if "image" in self.inputs:
            if "image" not in channels:
                raise MissingChannel("missing channel 'image'")
            out.image = pool_image(channels["image"])
        if "point_cloud" in self.inputs:
            if "point_cloud" not in channels:
                raise MissingChannel("missing channel 'point_cloud'")
            pts = channels["point_cloud"].astype(np.float64)
            out.point_cloud = (pts - self.point_mean) / self.point_std
        if "task_id" in self.inputs:
            if "task_id" not in channels:
                raise MissingChannel("missing channel 'task_id'")
            out.task_id = channels["task_id"].reshape(len(channels["task_id"]), -1)[:, 0].astype(int)
        return out

    def preprocess_observation(self, obs: Observation) -> EncoderInputs:
        batched = {k: v[None, ...] for k, v in obs.channels.items()}
        return self.preprocess_arrays(batched)

    # --- trainable forward/backward ---

    def forward(self, batch: EncoderInputs):
        parts = []
        cache: dict = {}
        if "proprio" in self.inputs:
            parts.append(batch.proprio)
        if "image" in self.inputs:
            feat, c = forward_cache(self.image_mlp, batch.image)
            cache["image"] = c
            parts.append(feat)
        if "point_cloud" in self.inputs:
            b, m, d = batch.point_cloud.shape
            flat = batch.point_cloud.reshape(b * m, d)
            per_point, c = forward_cache(self.point_mlp, flat)
            per_point = per_point.reshape(b, m, -1)
            argmax = per_point.argmax(axis=1)
            feat = np.take_along_axis(per_point, argmax[:, None, :], axis=1)[:, 0, :]
            cache["point"] = (c, argmax, b, m)
            parts.append(feat)
        if "task_id" in self.inputs:
            cache["task"] = batch.task_id
            parts.append(self.task_embed.astype(np.float64)[batch.task_id])
        return np.concatenate(parts, axis=1), cache

    def backward(self, d_feat: np.ndarray, cache: dict) -> list[np.ndarray]:
        """Gradients for this encoder's params, consuming d_feat blocks."""
        grads: list[np.ndarray] = []
        col = 0
        if "proprio" in self.inputs:
            col += len(self.proprio_mean)
        if "image" in self.inputs:
            width = self.cfg.image_branch[-1]
            _, g = backward(self.image_mlp, cache["image"], d_feat[:, col:col + width])
            grads += g
            col += width
        if "point_cloud" in self.inputs:
            width = self.cfg.point_branch[-1]
            c, argmax, b, m = cache["point"]
            d_pool = d_feat[:, col:col + width]
            d_points = np.zeros((b, m, width))
            np.put_along_axis(d_points, argmax[:, None, :], d_pool[:, None, :], axis=1)
            _, g = backward(self.point_mlp, c, d_points.reshape(b * m, width))
            grads += g
            col += width
        if "task_id" in self.inputs:
            width = self.cfg.task_embed_dim
            d_rows = d_feat[:, col:col + width]
            g = np.zeros_like(self.task_embed, dtype=np.float64)
            np.add.at(g, cache["task"], d_rows)
            grads.append(g)
            col += width
        return grads
