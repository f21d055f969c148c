"""Seeded random streams.

All randomness goes through numpy's PCG64 bit generator. A master seed plus a
string key (and optional integer indices) selects an independent sub-stream via
``SeedSequence(entropy=seed, spawn_key=(crc32(key), *indices))``, so each generated
object (features, factors, sampling mask, split, trial) has its own stream and
adding a consumer never perturbs the others. Normal variates use numpy's
ziggurat sampler. Results are reproducible within a numpy major version.
"""

import zlib

import numpy as np

RNG_NAME = "numpy.PCG64/SeedSequence-v1"


def stream_key(key):
    return zlib.crc32(key.encode("utf-8"))


def make_rng(seed, key, *indices):
    seed = int(seed)
    if seed < 0:
        raise ValueError(f"seed must be non-negative, got {seed}")
    ss = np.random.SeedSequence(entropy=seed, spawn_key=(stream_key(key), *map(int, indices)))
    return np.random.Generator(np.random.PCG64(ss))


def child_seed(seed, key, *indices):
    """Derive a 63-bit integer seed for a sub-experiment (e.g. one trial)."""
    return int(make_rng(seed, key, *indices).integers(0, 2**63 - 1))
