"""Splittable seeding: replicate b of stream k gets its own PCG64 generator.

The generator for (seed, b, stream) is built from
``SeedSequence(seed, spawn_key=(stream, b))``, so any replicate can be
regenerated in isolation and results never depend on scheduling.
"""
import numpy as np

NOISE_STREAM = 0
SMOOTHING_STREAM = 1
DESIGN_STREAM = 2
SIGNAL_STREAM = 4
ESTIMATE_STREAM = 5


def replicate_rng(seed: int, b: int, stream: int = NOISE_STREAM) -> np.random.Generator:
    ss = np.random.SeedSequence(int(seed), spawn_key=(int(stream), int(b)))
    return np.random.Generator(np.random.PCG64(ss))
