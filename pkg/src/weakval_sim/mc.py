"""Parallel execution and batch statistics for Monte Carlo estimators.

Work is split into the fixed trajectory blocks defined in rng.py. A worker
processes whole blocks only, and partial results are merged in block order,
so the floating-point accumulation sequence is identical for any worker
count. Batch statistics use 32 equal batches indexed by global trajectory
number, again independent of scheduling.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from multiprocessing import get_context

import numpy as np

from .errors import NoSelections
from .rng import BLOCK, iter_blocks

N_BATCHES = 32
MIN_SELECTED = 100


def resolve_workers(requested: int | None = None) -> int:
    """Worker count: explicit request capped by WEAKVAL_THREADS, default 1.

    With no explicit request the environment value (if set) is used directly,
    so deployments can scale a default-sequential run without touching config.
    """
    env = os.environ.get("WEAKVAL_THREADS")
    cap = None
    if env is not None:
        try:
            cap = max(1, int(env))
        except ValueError:
            raise ValueError(f"WEAKVAL_THREADS must be an integer, got {env!r}") from None
    if requested is None:
        return cap if cap is not None else 1
    n = max(1, int(requested))
    return min(n, cap) if cap is not None else n


def run_blocks(fn, args_list, workers: int | None = None) -> list:
    """Apply ``fn`` to each argument tuple, returning results in input order.

    ``fn`` must be a module-level function (workers are forked processes).
    Sequential when the resolved worker count is 1 or there is only one block.
    """
    nw = resolve_workers(workers)
    if nw <= 1 or len(args_list) <= 1:
        return [fn(a) for a in args_list]
    ctx = get_context("fork")
    with ProcessPoolExecutor(max_workers=min(nw, len(args_list)), mp_context=ctx) as ex:
        return list(ex.map(fn, args_list, chunksize=1))


def batch_ids(start: int, size: int, n_total: int) -> np.ndarray:
    """Batch index of global trajectories start..start+size-1 (32 equal batches)."""
    idx = np.arange(start, start + size, dtype=np.int64)
    return (idx * N_BATCHES) // n_total


@dataclass
class BlockPartial:
    """Per-block sums binned by batch: weighted and rejection estimators at once."""

    sum_xp: np.ndarray  # sum of record * selection probability
    sum_p: np.ndarray  # sum of selection probability
    sum_x_acc: np.ndarray  # sum of record over accepted trajectories
    n_acc: np.ndarray  # accepted count

    @classmethod
    def from_arrays(cls, x, p, accepted, bids) -> "BlockPartial":
        return cls(
            sum_xp=np.bincount(bids, weights=x * p, minlength=N_BATCHES),
            sum_p=np.bincount(bids, weights=p, minlength=N_BATCHES),
            sum_x_acc=np.bincount(bids, weights=np.where(accepted, x, 0.0), minlength=N_BATCHES),
            n_acc=np.bincount(bids, weights=accepted.astype(np.float64), minlength=N_BATCHES),
        )


def merge_partials(parts: list[BlockPartial]) -> BlockPartial:
    tot = BlockPartial(
        sum_xp=np.zeros(N_BATCHES),
        sum_p=np.zeros(N_BATCHES),
        sum_x_acc=np.zeros(N_BATCHES),
        n_acc=np.zeros(N_BATCHES),
    )
    for p in parts:
        tot.sum_xp += p.sum_xp
        tot.sum_p += p.sum_p
        tot.sum_x_acc += p.sum_x_acc
        tot.n_acc += p.n_acc
    return tot


def ratio_statistics(num: np.ndarray, den: np.ndarray):
    """Pooled ratio mean and its batch-scatter standard error.

    Batches with zero denominator are dropped from the scatter estimate; the
    pooled mean always uses every trajectory.
    """
    total_den = float(np.sum(den))
    if total_den == 0.0:
        return float("nan"), float("nan")
    mean = float(np.sum(num)) / total_den
    mask = den > 0.0
    k = int(np.count_nonzero(mask))
    if k < 2:
        return mean, float("nan")
    rb = num[mask] / den[mask]
    se = float(np.std(rb, ddof=1)) / math.sqrt(k)
    return mean, se


def require_selections(n_selected: int, n_total: int) -> None:
    if n_selected < MIN_SELECTED:
        raise NoSelections(n_selected, n_total)


__all__ = [
    "BLOCK",
    "N_BATCHES",
    "MIN_SELECTED",
    "BlockPartial",
    "batch_ids",
    "iter_blocks",
    "merge_partials",
    "ratio_statistics",
    "require_selections",
    "resolve_workers",
    "run_blocks",
]
