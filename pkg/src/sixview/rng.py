"""Named random streams derived from a single 64-bit master seed.

Every source of randomness in the project draws from one of four named
streams ("dataset", "init", "train", "sample").  Streams are derived
statelessly via ``numpy.random.SeedSequence`` spawn keys, so any component
can be re-run in isolation and a training run can be resumed mid-phase
without serialized RNG state: the generator for step ``k`` only depends on
``(master_seed, stream, k)``.
"""

from __future__ import annotations

import numpy as np

STREAMS = {"dataset": 0, "init": 1, "train": 2, "sample": 3}


def stream(master_seed: int, label: str, *indices: int) -> np.random.Generator:
    """Return the deterministic generator for a named stream.

    Extra ``indices`` subdivide a stream (per-record, per-step, ...); the
    same tuple always yields the same generator.
    """
    if label not in STREAMS:
        raise ValueError(f"unknown stream {label!r}; expected one of {sorted(STREAMS)}")
    key = (STREAMS[label],) + tuple(int(i) for i in indices)
    return np.random.default_rng(np.random.SeedSequence(int(master_seed), spawn_key=key))


def substream_seed(master_seed: int, label: str, *indices: int) -> int:
    """Collapse a stream address to a plain integer seed (for APIs that take one)."""
    return int(stream(master_seed, label, *indices).integers(0, 2**63 - 1))
