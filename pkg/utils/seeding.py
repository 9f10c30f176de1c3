"""
Seeded random streams.

Every random decision in the toolkit comes from a numpy ``Generator`` derived
from the global seed plus a tuple of stream keys, so a batch, an episode or a
fine-tuning epoch can be regenerated in isolation.
"""
from __future__ import annotations

import zlib
from typing import Union

import numpy as np
import torch

StreamKey = Union[int, str]


def _key_to_int(key: StreamKey) -> int:
    if isinstance(key, str):
        return zlib.crc32(key.encode("utf-8"))
    if key < 0:
        raise ValueError(f"stream keys must be non-negative, got {key}")
    return int(key)


def derive_rng(seed: int, *keys: StreamKey) -> np.random.Generator:
    """``Generator`` for the stream ``(seed, *keys)``; string keys are hashed with CRC32."""
    entropy = [int(seed)] + [_key_to_int(k) for k in keys]
    return np.random.default_rng(np.random.SeedSequence(entropy))


def derive_seed(seed: int, *keys: StreamKey) -> int:
    """63-bit integer seed for libraries that want a plain int (torch generators)."""
    return int(derive_rng(seed, *keys).integers(0, 2**63 - 1))


def torch_generator(seed: int, *keys: StreamKey) -> torch.Generator:
    gen = torch.Generator(device="cpu")
    gen.manual_seed(derive_seed(seed, *keys))
    return gen
