"""Deterministic random streams.

Every stochastic choice in the bench draws from a counter-based Philox
generator keyed by (seed, stream, index), so the same seed reproduces the
same bits on any platform and streams never collide.
"""

import numpy as np

# Stream ids. Keep these stable: they are part of reproducibility.
STREAM_RESET = 0        # object placement at env reset
STREAM_POINT_CLOUD = 1  # per-step point cloud sampling
STREAM_EXPERT = 2       # scripted expert command noise
STREAM_POLICY = 3       # policy-side sampling (diffusion) during rollout
STREAM_INIT = 4         # network parameter init
STREAM_DATA = 5         # training batch shuffling / noise draws


def make_rng(seed: int, stream: int, index: int = 0) -> np.random.Generator:
    """Generator for (seed, stream, index). Distinct triples are independent."""
    key = np.array([np.uint64(seed), np.uint64((stream << 32) | (index & 0xFFFFFFFF))],
                   dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))
