"""FTP Model 3 traffic and per-node random streams."""
from __future__ import annotations

import random
from dataclasses import dataclass
from typing import Optional

import numpy as np

# purpose codes for stream splitting
BACKOFF, SENSING, TRAFFIC_DL, TRAFFIC_UL, MISC = range(5)


def node_stream(seed: int, node_class: int, index: int, purpose: int) -> random.Random:
    """Independent generator for one (node class, node index, purpose).

    The stream is a pure function of ``seed`` and the triple, so adding nodes
    never shifts the draws of existing ones.
    """
    ss = np.random.SeedSequence(seed, spawn_key=(node_class, index, purpose))
    return random.Random(int(ss.generate_state(1, dtype=np.uint64)[0]))


def ftp3_arrivals(rng: random.Random, lam: float, horizon: float) -> list[float]:
    """Poisson arrival times in [0, horizon) with rate ``lam``."""
    if lam < 0:
        raise ValueError("lam must be >= 0")
    out = []
    if lam == 0:
        return out
    t = rng.expovariate(lam)
    while t < horizon:
        out.append(t)
        t += rng.expovariate(lam)
    return out


@dataclass
class FileRecord:
    """One FTP file; ``completion_us`` stays None while in flight."""

    seq: int
    tech: str
    direction: str
    user: int
    size_bytes: int
    arrival_us: int
    unsent: int = 0
    delivered: int = 0
    completion_us: Optional[int] = None

    def __post_init__(self):
        self.unsent = self.size_bytes
