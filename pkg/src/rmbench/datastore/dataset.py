"""Dataset directory, normalization statistics, abs/rel conversion.

A dataset root holds ``episodes/ep_<idx:06>.rmbe``, ``manifest.json``
(env spec, episode list, success flags, collection config) and
``stats.json`` once statistics have been computed.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Iterator, Optional

import numpy as np

from ..core import EnvSpec
from ..errors import EmptyDataset
from .format import Episode, read_episode, write_episode

STD_FLOOR = 1e-6


def to_relative(abs_arr: np.ndarray) -> np.ndarray:
    """Per-step differences; row 0 is the zero vector."""
    abs64 = np.asarray(abs_arr, dtype=np.float64)
    rel = np.zeros_like(abs64)
    rel[1:] = np.diff(abs64, axis=0)
    return rel.astype(abs_arr.dtype)


def to_absolute(rel_arr: np.ndarray, first_abs_row: np.ndarray) -> np.ndarray:
    """Inverse of :func:`to_relative` given the first absolute row."""
    rel64 = np.asarray(rel_arr, dtype=np.float64)
    out = np.empty_like(rel64)
    out[0] = np.asarray(first_abs_row, dtype=np.float64)
    if len(rel64) > 1:
        out[1:] = out[0] + np.cumsum(rel64[1:], axis=0)
    return out.astype(rel_arr.dtype)


@dataclass
class NormStats:
    """Per-element mean/std for every channel and for actions."""

    channels: dict[str, tuple[np.ndarray, np.ndarray]]
    action: tuple[np.ndarray, np.ndarray]

    def pooled(self, name: str) -> tuple[np.ndarray, np.ndarray]:
        """Stats pooled over all leading axes, one value per trailing dim.

        Used where per-slot statistics would break permutation invariance
        (point sets). Exact population pooling of the per-slot moments.
        """
        mean, std = self.channels[name]
        mean = mean.reshape(-1, mean.shape[-1])
        var = (std.reshape(-1, std.shape[-1]) ** 2)
        g_mean = mean.mean(axis=0)
        g_var = (var + mean ** 2).mean(axis=0) - g_mean ** 2
        return g_mean, np.sqrt(np.maximum(g_var, STD_FLOOR ** 2))

    def to_dict(self) -> dict:
        return {
            "channels": {k: {"mean": m.tolist(), "std": s.tolist()}
                         for k, (m, s) in self.channels.items()},
            "action": {"mean": self.action[0].tolist(), "std": self.action[1].tolist()},
        }

    @staticmethod
    def from_dict(d: dict) -> "NormStats":
        chans = {k: (np.asarray(v["mean"], dtype=np.float64),
                     np.asarray(v["std"], dtype=np.float64))
                 for k, v in d["channels"].items()}
        act = (np.asarray(d["action"]["mean"], dtype=np.float64),
               np.asarray(d["action"]["std"], dtype=np.float64))
        return NormStats(chans, act)


class Dataset:
    """Ordered collection of episode files under one root."""

    def __init__(self, root: str | Path):
        self.root = Path(root)
        self._manifest = {"env_spec": None, "config": None, "episodes": []}
        self._stats: Optional[NormStats] = None
        manifest_path = self.root / "manifest.json"
        if manifest_path.exists():
            self._manifest = json.loads(manifest_path.read_text())

    # --- construction ---

    @staticmethod
    def create(root: str | Path, env_spec: EnvSpec, config: Optional[dict] = None) -> "Dataset":
        ds = Dataset(root)
        ds.root.mkdir(parents=True, exist_ok=True)
        (ds.root / "episodes").mkdir(exist_ok=True)
        ds._manifest = {"env_spec": env_spec.to_dict(), "config": config, "episodes": []}
        ds._save_manifest()
        return ds

    def add_episode(self, ep: Episode) -> Path:
        idx = len(self._manifest["episodes"])
        rel = f"episodes/ep_{idx:06d}.rmbe"
        write_episode(ep, self.root / rel)
        self._manifest["episodes"].append({
            "file": rel, "T": ep.length, "seed": int(ep.seed),
            "source": ep.source, "success": bool(ep.success)})
        self._save_manifest()
        self._stats = None
        return self.root / rel

    def _save_manifest(self) -> None:
        (self.root / "manifest.json").write_text(json.dumps(self._manifest, indent=1))

    # --- access ---

    def __len__(self) -> int:
        return len(self._manifest["episodes"])

    @property
    def env_spec(self) -> EnvSpec:
        if self._manifest["env_spec"] is None:
            raise EmptyDataset(f"no manifest at {self.root}")
        return EnvSpec.from_dict(self._manifest["env_spec"])

    @property
    def manifest(self) -> dict:
        return self._manifest

    def episode_path(self, index: int) -> Path:
        return self.root / self._manifest["episodes"][index]["file"]

    def episode_meta(self, index: int) -> dict:
        return self._manifest["episodes"][index]

    def read(self, index: int) -> Episode:
        return read_episode(self.episode_path(index))

    def episodes(self) -> Iterator[Episode]:
        for i in range(len(self)):
            yield self.read(i)

    def successful_indices(self) -> list[int]:
        return [i for i, e in enumerate(self._manifest["episodes"]) if e["success"]]

    # --- statistics ---

    def stats(self, recompute: bool = False) -> NormStats:
        stats_path = self.root / "stats.json"
        if self._stats is None and stats_path.exists() and not recompute:
            self._stats = NormStats.from_dict(json.loads(stats_path.read_text()))
        if self._stats is None or recompute:
            self._stats = compute_stats(self)
            stats_path.write_text(json.dumps(self._stats.to_dict()))
        return self._stats


def compute_stats(ds: Dataset) -> NormStats:
    """Exact population mean/std over all timesteps of all episodes.

    Streams one episode at a time; accumulation is f64. Standard
    deviations are floored at 1e-6 so normalization never divides by
    (near) zero on constant channels.
    """
    if len(ds) == 0:
        raise EmptyDataset(f"no episodes under {ds.root}")
    sums: dict[str, np.ndarray] = {}
    sqsums: dict[str, np.ndarray] = {}
    count = 0
    for ep in ds.episodes():
        arrays = dict(ep.channels)
        arrays["__action__"] = ep.actions
        for name, arr in arrays.items():
            arr = arr.astype(np.float64)
            if name not in sums:
                sums[name] = arr.sum(axis=0)
                sqsums[name] = (arr ** 2).sum(axis=0)
            else:
                sums[name] += arr.sum(axis=0)
                sqsums[name] += (arr ** 2).sum(axis=0)
        count += ep.length

    def finish(name: str) -> tuple[np.ndarray, np.ndarray]:
        mean = sums[name] / count
        var = np.maximum(sqsums[name] / count - mean ** 2, 0.0)
        return mean, np.maximum(np.sqrt(var), STD_FLOOR)

    channels = {name: finish(name) for name in sums if name != "__action__"}
    return NormStats(channels=channels, action=finish("__action__"))
