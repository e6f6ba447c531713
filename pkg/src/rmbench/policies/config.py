"""Policy hyperparameters. All defaults are bench choices, recorded in
model files so any run can be reproduced from its artifact."""

from __future__ import annotations

from dataclasses import dataclass

POLICY_KINDS = ("bc", "act_lite", "diffusion_lite")

# feature concatenation order; also the branch-net order in parameter lists
INPUT_ORDER = ("proprio", "image", "point_cloud", "task_id")


@dataclass(frozen=True)
class PolicyConfig:
    chunk: int = 8                      # action chunk length H
    ensemble_decay: float = 0.1         # m in exp(-m * i) chunk weights
    obs_inputs: tuple[str, ...] = ("proprio", "point_cloud")
    hidden: tuple[int, ...] = (256, 256)
    epochs: int = 300
    batch_size: int = 64
    diffusion_steps: int = 50           # T_d
    beta_start: float = 1e-4
    beta_end: float = 0.02
    learning_rate: float = 1e-3
    init_seed: int = 0
    data_seed: int = 1
    activation: str = "tanh"
    t_embed_dim: int = 32
    image_branch: tuple[int, ...] = (64, 32)   # hidden widths -> 32-d feature
    point_branch: tuple[int, ...] = (32, 32)   # per-point widths -> 32-d feature
    task_embed_dim: int = 8
    n_tasks: int = 3

    def __post_init__(self):
        if self.chunk < 1:
            raise ValueError("chunk must be >= 1")
        if self.diffusion_steps < 1:
            raise ValueError("diffusion_steps must be >= 1")
        if not 0 < self.beta_start < self.beta_end < 1:
            raise ValueError("beta schedule must be increasing in (0, 1)")
        unknown = set(self.obs_inputs) - set(INPUT_ORDER)
        if unknown:
            raise ValueError(f"unknown obs inputs {sorted(unknown)}")
        object.__setattr__(self, "obs_inputs",
                           tuple(k for k in INPUT_ORDER if k in self.obs_inputs))
        object.__setattr__(self, "hidden", tuple(self.hidden))
        object.__setattr__(self, "image_branch", tuple(self.image_branch))
        object.__setattr__(self, "point_branch", tuple(self.point_branch))

    def to_dict(self) -> dict:
        return {
            "chunk": self.chunk,
            "ensemble_decay": self.ensemble_decay,
            "obs_inputs": list(self.obs_inputs),
            "hidden": list(self.hidden),
            "epochs": self.epochs,
            "batch_size": self.batch_size,
            "diffusion_steps": self.diffusion_steps,
            "beta_start": self.beta_start,
            "beta_end": self.beta_end,
            "learning_rate": self.learning_rate,
            "init_seed": self.init_seed,
            "data_seed": self.data_seed,
            "activation": self.activation,
            "t_embed_dim": self.t_embed_dim,
            "image_branch": list(self.image_branch),
            "point_branch": list(self.point_branch),
            "task_embed_dim": self.task_embed_dim,
            "n_tasks": self.n_tasks,
        }

    @staticmethod
    def from_dict(d: dict) -> "PolicyConfig":
        d = dict(d)
        for key in ("obs_inputs", "hidden", "image_branch", "point_branch"):
            if key in d:
                d[key] = tuple(d[key])
        return PolicyConfig(**d)
