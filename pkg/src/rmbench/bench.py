"""Rollout execution and success-rate benchmarking.

Rollouts are seeded and reproducible: the trace hash is a CRC over every
observation, so two runs of the same (model, seed) can be compared
bit-for-bit. Reports follow the mean +- std convention where std is the
per-rollout sample standard deviation of the binary outcomes.
"""

from __future__ import annotations

import csv
import json
import zlib
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from .core import Environment
from .errors import SpecMismatch
from .policies import PolicyModel, infer
from .rng import STREAM_POLICY, make_rng

# convention: training uses seeds < 10_000, evaluation starts here
EVAL_BASE_SEED = 10_000


@dataclass
class RolloutOutcome:
    success: bool
    steps: int
    trace_hash: int


@dataclass
class SuccessReport:
    env_id: str
    task: str
    policy_kind: str
    n_rollouts: int
    outcomes: list[bool]
    mean: float
    std: float
    seeds: list[int]
    steps: list[int]

    @staticmethod
    def from_outcomes(env_id: str, task: str, policy_kind: str,
                      outcomes: list[bool], seeds: list[int],
                      steps: list[int]) -> "SuccessReport":
        n = len(outcomes)
        x = np.asarray(outcomes, dtype=np.float64)
        mean = float(x.mean()) if n else 0.0
        std = float(np.sqrt(np.sum((x - mean) ** 2) / (n - 1))) if n > 1 else 0.0
        return SuccessReport(env_id, task, policy_kind, n, [bool(o) for o in outcomes],
                             mean, std, list(seeds), list(steps))

    @property
    def cell(self) -> str:
        return format_mean_std(self.mean, self.std)


def format_mean_std(mean: float, std: float) -> str:
    return f"{mean:.2f} ± {std:.2f}"


def _check_compatible(env: Environment, model: PolicyModel) -> None:
    a, b = env.spec, model.env_spec
    same = (a.env_id == b.env_id and a.embodiment == b.embodiment
            and a.link_lengths == b.link_lengths and a.action_dim == b.action_dim
            and [c.to_dict() for c in a.observation_channels]
            == [c.to_dict() for c in b.observation_channels])
    if not same:
        raise SpecMismatch(
            f"model trained for {b.env_id!r} does not match env {a.env_id!r}")


def _hash_observation(crc: int, obs) -> int:
    for name in sorted(obs.channels):
        crc = zlib.crc32(np.ascontiguousarray(obs.channels[name]).tobytes(), crc)
    return crc


def rollout(env: Environment, model: PolicyModel, seed: int,
            max_steps: Optional[int] = None) -> RolloutOutcome:
    """Run one seeded episode under the policy until done."""
    _check_compatible(env, model)
    limit = max_steps if max_steps is not None else env.spec.max_steps
    obs = env.reset(seed)
    buffer = model.make_buffer()
    buffer.reset()
    rng = make_rng(seed, STREAM_POLICY)
    crc = _hash_observation(0, obs)
    steps = 0
    success = False
    while not env.done and steps < limit:
        action = infer(model, obs, buffer, rng)
        result = env.step(action)
        obs = result.observation
        crc = _hash_observation(crc, obs)
        steps += 1
        success = success or result.success
    return RolloutOutcome(success, steps, crc)


def evaluate(env: Environment, model: PolicyModel, n: int,
             base_seed: int = EVAL_BASE_SEED) -> SuccessReport:
    """n rollouts with consecutive seeds, summarized as mean +- std."""
    if n < 1:
        raise ValueError("n must be >= 1")
    outcomes, steps, seeds = [], [], []
    for i in range(n):
        seed = base_seed + i
        out = rollout(env, model, seed)
        outcomes.append(out.success)
        steps.append(out.steps)
        seeds.append(seed)
    task = env.spec.task.kind
    return SuccessReport.from_outcomes(env.spec.env_id, task, model.kind,
                                       outcomes, seeds, steps)


# --- report emission ---

def report_table(reports: list[SuccessReport]) -> str:
    """Markdown table: one row per policy, one column per task."""
    if not reports:
        return ""
    tasks = list(dict.fromkeys(r.task for r in reports))
    policies = list(dict.fromkeys(r.policy_kind for r in reports))
    cells = {(r.policy_kind, r.task): r.cell for r in reports}
    lines = ["| Policy | " + " | ".join(tasks) + " |",
             "|---" * (len(tasks) + 1) + "|"]
    for p in policies:
        row = [cells.get((p, t), "-") for t in tasks]
        lines.append(f"| {p} | " + " | ".join(row) + " |")
    return "\n".join(lines) + "\n"


def reports_to_json(reports: list[SuccessReport],
                    config: Optional[dict] = None) -> dict:
    return {"config": config, "reports": [asdict(r) for r in reports]}


def reports_from_json(doc: dict) -> list[SuccessReport]:
    return [SuccessReport(**r) for r in doc["reports"]]


def _render_figure(reports: list[SuccessReport], path: Path) -> None:
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    tasks = list(dict.fromkeys(r.task for r in reports))
    policies = list(dict.fromkeys(r.policy_kind for r in reports))
    lookup = {(r.policy_kind, r.task): r for r in reports}
    width = 0.8 / max(len(policies), 1)
    fig, ax = plt.subplots(figsize=(1.8 + 1.4 * len(tasks), 3.2))
    x = np.arange(len(tasks))
    for i, p in enumerate(policies):
        means = [lookup[(p, t)].mean if (p, t) in lookup else np.nan for t in tasks]
        stds = [lookup[(p, t)].std if (p, t) in lookup else 0.0 for t in tasks]
        ax.bar(x + (i - (len(policies) - 1) / 2) * width, means, width,
               yerr=stds, capsize=3, label=p)
    ax.set_xticks(x)
    ax.set_xticklabels(tasks)
    ax.set_ylabel("success rate")
    ax.set_ylim(0, 1.05)
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def write_report(reports: list[SuccessReport], path: str | Path,
                 config: Optional[dict] = None) -> dict:
    """Emit <path> (JSON) plus .md / .csv / .png siblings.

    The JSON carries the resolved config so a run can be reproduced from
    its artifact alone; it contains no timestamps, so identical configs
    produce identical files.
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    doc = reports_to_json(reports, config)
    path.write_text(json.dumps(doc, indent=1))
    path.with_suffix(".md").write_text(report_table(reports))
    with open(path.with_suffix(".csv"), "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["env_id", "task", "policy", "n_rollouts", "mean",
                         "std", "successes"])
        for r in reports:
            writer.writerow([r.env_id, r.task, r.policy_kind, r.n_rollouts,
                             f"{r.mean:.6f}", f"{r.std:.6f}", sum(r.outcomes)])
    if reports:
        _render_figure(reports, path.with_suffix(".png"))
    return doc
