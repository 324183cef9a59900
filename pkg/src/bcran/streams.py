"""Named random streams derived from one master seed.

Each module draws from its own stream so that enabling a feature in one place
does not shift the draws seen elsewhere. ``KeyedStream`` goes one step further
and maps an explicit key (e.g. a transaction id and attempt number) to a
uniform variate, which keeps paired runs aligned even when event orders drift.
"""
from __future__ import annotations

import hashlib
import math
import struct

import numpy as np

STREAM_IDS = {
    "topology": 1,
    "market": 2,
    "ledger-public": 3,
    "ledger-private": 4,
    "demands": 5,
    "arrivals": 6,
}

_TWO_POW_53 = float(2 ** 53)


def stream_rng(seed: int, name: str) -> np.random.Generator:
    return np.random.default_rng([int(seed), STREAM_IDS[name]])


class KeyedStream:
    def __init__(self, seed: int, name: str):
        self.seed = int(seed)
        self.name = name
        self._prefix = struct.pack("<qq", self.seed, STREAM_IDS[name])

    def uniform(self, *key: int) -> float:
        """Uniform on the open interval (0, 1), a pure function of (seed, stream, key)."""
        h = hashlib.blake2b(self._prefix + struct.pack(f"<{len(key)}q", *key), digest_size=8)
        bits = int.from_bytes(h.digest(), "little") >> 11
        return (bits + 0.5) / _TWO_POW_53

    def exponential(self, rate: float, *key: int) -> float:
        return -math.log(self.uniform(*key)) / rate
