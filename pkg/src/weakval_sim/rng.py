"""Deterministic random-stream layout.

Every Monte Carlo entry point consumes randomness in fixed-size trajectory
blocks of BLOCK trajectories. Block ``b`` of estimator stage ``label`` under
master seed ``seed`` draws from an independent Philox stream keyed by the
tuple (seed, label, b). Workers are handed whole blocks, so the mapping from
trajectory index to random draws is a pure function of the seed and the
layout, never of scheduling: the same seed gives byte-identical results for
any worker count.

Within a block each sampler documents its draw order. Stepped samplers draw
noise in panels of STEP_CHUNK steps at a time; the chunk size is part of the
stream layout, not a tuning knob.
"""

from __future__ import annotations

import numpy as np

BLOCK = 8192
STEP_CHUNK = 256

# Stage labels. Distinct labels decorrelate estimators that share a seed.
TRAJECTORY = 0
SELECTION = 1
AMPLIFIER = 2
CQED = 3
CONVERGENCE = 4


def block_stream(seed: int, label: int, block_index: int) -> np.random.Generator:
    """Philox generator for one trajectory block of one estimator stage."""
    if seed < 0:
        raise ValueError("seed must be a non-negative integer")
    ss = np.random.SeedSequence(entropy=(int(seed), int(label), int(block_index)))
    return np.random.Generator(np.random.Philox(ss))


def iter_blocks(n_total: int):
    """Yield (block_index, start, size) covering ``n_total`` trajectories."""
    if n_total < 1:
        raise ValueError("need at least one trajectory")
    full, rem = divmod(n_total, BLOCK)
    for b in range(full):
        yield b, b * BLOCK, BLOCK
    if rem:
        yield full, full * BLOCK, rem
