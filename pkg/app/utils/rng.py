"""
Deterministic random streams
PCG64 generators derived from one 64-bit seed, split by purpose and index
(the index is the OAM mode for per-mode streams)
"""

from dataclasses import dataclass

import numpy as np

# Stable purpose codes; changing one changes every stream derived from it
STREAM_PURPOSES = {
    "source": 1,
    "slots": 2,
    "codec": 3,
    "redundancy": 4,
    "whitener": 5,
    "mapping": 6,
    "channel": 7,
    "eve": 8,
    "calibration": 9,
    "pilot": 10,
    "message": 11,
    "impostor": 12,
    "check_channel": 13,
    "synthesis": 14,
}

MAX_SEED = 2**64 - 1


@dataclass(frozen=True)
class RngSeed:
    """64-bit unsigned experiment seed."""

    seed: int

    def __post_init__(self):
        if not isinstance(self.seed, (int, np.integer)) or not 0 <= int(self.seed) <= MAX_SEED:
            raise ValueError(f"seed must be an integer in [0, 2**64), got {self.seed!r}")

    def stream(self, purpose: str, index: int = 0) -> np.random.Generator:
        return make_stream(int(self.seed), purpose, index)


def make_stream(seed: int, purpose: str, index: int = 0) -> np.random.Generator:
    """
    Build the generator for one purpose.

    Args:
        seed: Experiment seed
        purpose: Key of STREAM_PURPOSES
        index: Sub-stream number, e.g. OAM mode index

    Returns:
        np.random.Generator on PCG64, independent of every other (purpose, index)
    """
    if purpose not in STREAM_PURPOSES:
        raise KeyError(f"unknown stream purpose {purpose!r}")
    sequence = np.random.SeedSequence(entropy=int(seed), spawn_key=(STREAM_PURPOSES[purpose], int(index)))
    return np.random.Generator(np.random.PCG64(sequence))
