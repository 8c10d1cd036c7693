"""Keyed, splittable random streams.

Every random draw in the simulator comes from a stream derived from
(master_seed, purpose, *key parts) through a cryptographic hash.  Streams are
therefore independent of execution order and of how work is sliced across
workers: the same key always yields the same stream.
"""

from __future__ import annotations

import hashlib

import numpy as np


def _canonical(part: object) -> str:
    # Numbers canonicalize through float repr so that 6 and 6.0 key the
    # same stream; everything else must already be a string.
    if isinstance(part, bool):
        raise TypeError("bool is ambiguous as a stream key part")
    if isinstance(part, (int, float)):
        return repr(float(part))
    if isinstance(part, str):
        return part
    raise TypeError(f"unsupported stream key part: {part!r}")


def stream_seed(master_seed: int, purpose: str, *parts: object) -> int:
    """Derive a 256-bit seed integer for the stream named by the key."""
    payload = "|".join([repr(int(master_seed)), purpose, *(_canonical(p) for p in parts)])
    digest = hashlib.sha256(payload.encode("utf-8")).digest()
    return int.from_bytes(digest, "little")


def rng_for(master_seed: int, purpose: str, *parts: object) -> np.random.Generator:
    """Fresh generator for the keyed stream. Never share the result between
    negotiations; derive one per consumer."""
    return np.random.default_rng(stream_seed(master_seed, purpose, *parts))
