"""Policy zoo: per-step behavior cloning, chunked prediction with temporal
ensembling, and a diffusion policy over action chunks.

All three share the feature encoder and a single MSE objective. Training
consumes success-flagged episodes only. Chunk targets repeat the final
action past the episode end, so every timestep has a full-length target.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from ..core import Action, EnvSpec, Observation, clamp_action_values
from ..datastore import ACTION_CHANNEL, Dataset, NormStats, read_channels
from ..errors import EmptyDataset, NoSuccessfulEpisodes, NotTrained
from ..neuro import (AdamState, adam_step_params, backward, forward_cache,
                     init_mlp, load_params, mse_loss, save_params)
from ..rng import STREAM_DATA, make_rng
from .config import POLICY_KINDS, PolicyConfig
from .diffusion import NoiseSchedule, ancestral_sample, ddpm_forward, embed_timesteps
from .encoding import EncoderInputs, FeatureEncoder


@dataclass
class EnsembleBuffer:
    """Ring of the last chunk predictions with their emission steps."""

    capacity: int
    entries: list[tuple[int, np.ndarray]] = field(default_factory=list)
    step: int = 0

    def reset(self) -> None:
        self.entries.clear()
        self.step = 0

    def push(self, chunk: np.ndarray) -> None:
        self.entries.append((self.step, chunk))
        if len(self.entries) > self.capacity:
            self.entries.pop(0)

    def covering(self, t: int) -> list[tuple[int, np.ndarray]]:
        return [(e, c) for e, c in self.entries if 0 <= t - e < len(c)]


def ensemble_average(chunks: list[tuple[int, np.ndarray]], t: int,
                     decay: float) -> np.ndarray:
    """Weighted average of all chunk rows covering step t.

    Weight exp(-decay * i) with i = 0 for the oldest chunk, so the
    earliest commitment is weighted highest; weights normalize to 1.
    """
    weights = np.exp(-decay * np.arange(len(chunks)))
    weights = weights / weights.sum()
    rows = np.stack([chunk[t - emitted] for emitted, chunk in chunks])
    return weights @ rows


class PolicyCore:
    """Encoder plus head with a flat parameter list and MSE losses."""

    def __init__(self, kind: str, cfg: PolicyConfig, spec: EnvSpec,
                 stats: NormStats, zero: bool = False):
        if kind not in POLICY_KINDS:
            raise ValueError(f"unknown policy kind {kind!r}")
        self.kind = kind
        self.cfg = cfg
        self.spec = spec
        self.stats = stats
        self.encoder = FeatureEncoder(spec, stats, cfg, cfg.init_seed, zero=zero)
        self.schedule = NoiseSchedule.from_config(cfg)
        action_dim = spec.action_dim
        chunk_dim = cfg.chunk * action_dim
        feat = self.encoder.feature_dim
        if kind == "bc":
            widths = (feat,) + cfg.hidden + (action_dim,)
        elif kind == "act_lite":
            widths = (feat,) + cfg.hidden + (chunk_dim,)
        else:  # diffusion_lite: eps predictor on (features, x_t, t-embedding)
            widths = (feat + chunk_dim + cfg.t_embed_dim,) + cfg.hidden + (chunk_dim,)
        self.head = init_mlp(widths, cfg.activation, cfg.init_seed,
                             stream_index=0, zero=zero)

    # --- parameters ---

    def params(self) -> list[np.ndarray]:
        return self.encoder.params() + self.head.params()

    def set_params(self, params: list[np.ndarray]) -> None:
        rest = self.encoder.set_params(params)
        self.head = self.head.with_params(rest)

    # --- losses ---

    def loss_and_grads(self, batch: EncoderInputs, targets: np.ndarray,
                       t: Optional[np.ndarray] = None,
                       eps: Optional[np.ndarray] = None):
        """MSE loss and gradients aligned with :meth:`params`.

        For the diffusion head, ``targets`` is the clean chunk x0 and
        (t, eps) give the per-sample noising; the regression target is eps.
        """
        feat, cache = self.encoder.forward(batch)
        if self.kind == "diffusion_lite":
            x_t = ddpm_forward(targets, t, eps, self.schedule)
            head_in = np.concatenate(
                [feat, x_t, embed_timesteps(t, self.cfg.t_embed_dim)], axis=1)
            pred, head_cache = forward_cache(self.head, head_in)
            loss, d_out = mse_loss(pred, eps)
            d_in, head_grads = backward(self.head, head_cache, d_out)
            d_feat = d_in[:, :feat.shape[1]]
        else:
            pred, head_cache = forward_cache(self.head, feat)
            loss, d_out = mse_loss(pred, targets)
            d_feat, head_grads = backward(self.head, head_cache, d_out)
        enc_grads = self.encoder.backward(d_feat, cache)
        return loss, enc_grads + head_grads

    # --- inference primitives ---

    def features_for(self, obs: Observation) -> np.ndarray:
        batch = self.encoder.preprocess_observation(obs)
        feat, _ = self.encoder.forward(batch)
        return feat

    def denormalize_action(self, norm_values: np.ndarray) -> np.ndarray:
        mean, std = self.stats.action
        return norm_values * std + mean

    def normalize_action(self, values: np.ndarray) -> np.ndarray:
        mean, std = self.stats.action
        return (values - mean) / std


@dataclass
class PolicyModel:
    """Trained policy: core networks plus provenance for reproduction."""

    kind: str
    config: PolicyConfig
    env_spec: EnvSpec
    stats: NormStats
    core: PolicyCore
    loss_trace: list[float] = field(default_factory=list)
    trained: bool = False

    def make_buffer(self) -> EnsembleBuffer:
        return EnsembleBuffer(capacity=self.config.chunk)


def make_random_model(kind: str, cfg: PolicyConfig, spec: EnvSpec,
                      stats: NormStats) -> PolicyModel:
    """Untrained random-parameter model (evaluation baseline)."""
    core = PolicyCore(kind, cfg, spec, stats)
    return PolicyModel(kind, cfg, spec, stats, core, loss_trace=[], trained=True)


# --- training ---

def _chunk_targets(actions_norm: np.ndarray, chunk: int) -> np.ndarray:
    """[T, a] -> [T, chunk*a]; rows past the end repeat the final action."""
    t_len, action_dim = actions_norm.shape
    padded = np.concatenate(
        [actions_norm, np.repeat(actions_norm[-1:], chunk - 1, axis=0)], axis=0)
    out = np.empty((t_len, chunk * action_dim))
    for k in range(chunk):
        out[:, k * action_dim:(k + 1) * action_dim] = padded[k:k + t_len]
    return out


@dataclass
class TrainingData:
    inputs: EncoderInputs
    step_targets: np.ndarray   # [N, a] normalized actions
    chunk_targets: np.ndarray  # [N, chunk*a]

    @property
    def n(self) -> int:
        return len(self.step_targets)


def prepare_training_data(ds: Dataset, cfg: PolicyConfig, spec: EnvSpec,
                          stats: NormStats, core: PolicyCore) -> TrainingData:
    indices = ds.successful_indices()
    if len(ds) == 0:
        raise EmptyDataset(f"no episodes under {ds.root}")
    if not indices:
        raise NoSuccessfulEpisodes("training requires at least one successful episode")
    needed = set(core.encoder.proprio_names) if "proprio" in cfg.obs_inputs else set()
    needed |= {name for name in ("image", "point_cloud", "task_id")
               if name in cfg.obs_inputs}
    needed.add(ACTION_CHANNEL)

    blocks: list[EncoderInputs] = []
    step_t: list[np.ndarray] = []
    chunk_t: list[np.ndarray] = []
    for i in indices:
        channels = read_channels(ds.episode_path(i), needed)
        actions = channels.pop(ACTION_CHANNEL)
        blocks.append(core.encoder.preprocess_arrays(channels))
        norm = core.normalize_action(actions.astype(np.float64))
        step_t.append(norm)
        chunk_t.append(_chunk_targets(norm, cfg.chunk))

    def cat(key):
        vals = [getattr(b, key) for b in blocks]
        return None if vals[0] is None else np.concatenate(vals, axis=0)

    inputs = EncoderInputs(proprio=cat("proprio"), image=cat("image"),
                           point_cloud=cat("point_cloud"), task_id=cat("task_id"))
    return TrainingData(inputs, np.concatenate(step_t), np.concatenate(chunk_t))


def train(ds: Dataset, cfg: PolicyConfig, kind: str) -> PolicyModel:
    """Supervised training on the success-flagged episodes of a dataset."""
    stats = ds.stats()
    spec = ds.env_spec
    core = PolicyCore(kind, cfg, spec, stats)
    data = prepare_training_data(ds, cfg, spec, stats, core)

    params = core.params()
    adam = AdamState.for_params(params, lr=cfg.learning_rate)
    rng = make_rng(cfg.data_seed, STREAM_DATA)
    targets = data.step_targets if kind == "bc" else data.chunk_targets
    loss_trace: list[float] = []
    for _epoch in range(cfg.epochs):
        order = rng.permutation(data.n)
        losses = []
        for lo in range(0, data.n, cfg.batch_size):
            idx = order[lo:lo + cfg.batch_size]
            batch = data.inputs.gather(idx)
            y = targets[idx]
            if kind == "diffusion_lite":
                t = rng.integers(1, cfg.diffusion_steps + 1, size=len(idx))
                eps = rng.standard_normal(y.shape)
                loss, grads = core.loss_and_grads(batch, y, t=t, eps=eps)
            else:
                loss, grads = core.loss_and_grads(batch, y)
            params, adam = adam_step_params(params, grads, adam)
            core.set_params(params)
            losses.append(loss)
        loss_trace.append(float(np.mean(losses)))
    return PolicyModel(kind, cfg, spec, stats, core, loss_trace, trained=True)


# --- inference ---

def infer(model: PolicyModel, obs: Observation, ensemble: EnsembleBuffer,
          rng: np.random.Generator) -> Action:
    """One action for the current observation.

    bc predicts per step; act_lite predicts a chunk every step and
    temporal-ensembles all buffered chunks covering the current step;
    diffusion_lite samples a fresh chunk every `chunk` steps and plays it
    out. Outputs are denormalized, then clamped to the action bounds.
    """
    if not model.trained:
        raise NotTrained("policy has not been trained")
    core = model.core
    cfg = model.config
    t = ensemble.step

    if model.kind == "bc":
        feat = core.features_for(obs)
        norm = np.asarray(forward_cache(core.head, feat)[0][0])
    elif model.kind == "act_lite":
        feat = core.features_for(obs)
        flat = np.asarray(forward_cache(core.head, feat)[0][0])
        ensemble.push(flat.reshape(cfg.chunk, -1))
        norm = ensemble_average(ensemble.covering(t), t, cfg.ensemble_decay)
    else:  # diffusion_lite
        if not ensemble.covering(t):
            feat = core.features_for(obs)

            def predict_eps(x_t, step):
                head_in = np.concatenate(
                    [feat[0], x_t, embed_timesteps(np.array([step]), cfg.t_embed_dim)[0]])
                return np.asarray(forward_cache(core.head, head_in[None, :])[0][0])

            flat = ancestral_sample(predict_eps, cfg.chunk * model.env_spec.action_dim,
                                    core.schedule, rng)
            ensemble.entries.clear()
            ensemble.push(flat.reshape(cfg.chunk, -1))
        emitted, chunk = ensemble.covering(t)[0]
        norm = chunk[t - emitted]

    ensemble.step = t + 1
    values = core.denormalize_action(norm)
    return Action.for_spec(model.env_spec, clamp_action_values(values, model.env_spec))


# --- serialization ---

def save_policy(model: PolicyModel, path: str | Path,
                provenance: Optional[dict] = None) -> None:
    meta = {
        "kind": model.kind,
        "config": model.config.to_dict(),
        "env_spec": model.env_spec.to_dict(),
        "stats": model.stats.to_dict(),
        "loss_trace": model.loss_trace,
        "trained": model.trained,
        "provenance": provenance,
    }
    save_params(path, meta, model.core.params())


def load_policy(path: str | Path) -> PolicyModel:
    meta, params = load_params(path)
    cfg = PolicyConfig.from_dict(meta["config"])
    spec = EnvSpec.from_dict(meta["env_spec"])
    stats = NormStats.from_dict(meta["stats"])
    core = PolicyCore(meta["kind"], cfg, spec, stats)
    core.set_params(params)
    return PolicyModel(meta["kind"], cfg, spec, stats, core,
                       list(meta.get("loss_trace", [])), bool(meta["trained"]))
