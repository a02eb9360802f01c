"""Reproducible counter-based random streams.

Every random draw in the library comes from a Philox 4x64 generator
addressed by the tuple ``(seed, pairing, trajectory, step)``:

- ``seed``      64-bit run seed (key word 0)
- ``pairing``   64-bit pairing key, 0 outside the benchmark pipeline (key word 1)
- ``trajectory``stream id (counter word 2): 0 = shared/initial noise,
                1 = reference trajectory, 2 = guide trajectory
- ``step``      diffusion step index (counter word 3)

Counter words 0-1 are left for Philox's own draw counter, so any single
stream can emit 2^128 values before colliding with a neighbour.  Because
streams are addressed rather than sequential, parallel workers can draw
from any (pairing, step) without coordination and still reproduce a
serial run exactly.
"""

from __future__ import annotations

import hashlib

import numpy as np

_MASK64 = (1 << 64) - 1

TRAJECTORY_SHARED = 0
TRAJECTORY_REFERENCE = 1
TRAJECTORY_GUIDE = 2


def stream(seed: int, pairing: int = 0, trajectory: int = 0, step: int = 0) -> np.random.Generator:
    """Return the generator for one addressed stream."""
    key = np.array([seed & _MASK64, pairing & _MASK64], dtype=np.uint64)
    counter = np.array([0, 0, trajectory & _MASK64, step & _MASK64], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key, counter=counter))


def pairing_key(pairing_id: str) -> int:
    """Stable 64-bit key for a pairing identifier."""
    digest = hashlib.blake2b(pairing_id.encode("utf-8"), digest_size=8).digest()
    return int.from_bytes(digest, "little")


def initial_noise(seed: int, dim: int, pairing: int = 0, step: int = 0) -> np.ndarray:
    """Draw the shared starting noise x_T for a sampling run."""
    return stream(seed, pairing, TRAJECTORY_SHARED, step).standard_normal(dim)
