"""Keyed random substreams.

Every random draw in the package comes from a generator derived from a
run seed plus an integer key path, so that any sample's value is a pure
function of ``(seed, key...)`` no matter how work is split across calls
or workers.
"""
from __future__ import annotations

import numpy as np

# Key namespaces; appended as the first spawn-key element.
STREAM_STANDARD = 0
STREAM_IMPROVED = 1
STREAM_FACTOR = 2
STREAM_SINGLE_LEVEL = 3


def substream(seed: int, *key: int) -> np.random.Generator:
    """Counter-based (Philox) generator for the substream ``key`` of ``seed``."""
    if seed < 0 or seed >= 2**64:
        raise ValueError(f"seed must be an unsigned 64-bit integer, got {seed}")
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(int(k) for k in key))
    return np.random.Generator(np.random.Philox(ss))
