"""Parallel block-Gibbs chains over an ensemble of formula RBMs.

Each temperature (free-energy target) owns one batch of chains.  A step
counts the current assignments, samples all hidden units, refreshes the
moving-average conditional variances, then samples new assignments.  All
randomness is counter-based (see rng), so runs replay exactly and chain
results are independent of batch size and worker partitioning.
"""

from __future__ import annotations

import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace

import numpy as np

from . import rng
from .formula_rbm import (
    FormulaRbm,
    count_satisfied_batch,
    gather,
    hidden_logits,
    visible_logits,
)

DEFAULT_ALPHA = 0.1
DEFAULT_ROUNDS_PER_DISPATCH = 500


def _sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


@dataclass
class ChainBatch:
    """State of B chains at one temperature."""

    assignments: np.ndarray  # (B, N) uint8
    variance_avg: np.ndarray  # (B, N) float32, moving-average rho*(1-rho)
    best_count: np.ndarray  # (B,) int64, nondecreasing
    best_assignment: np.ndarray  # (B, N) uint8
    step: int
    stream_key: int

    @property
    def num_chains(self) -> int:
        return len(self.assignments)

    @property
    def chain_ids(self) -> np.ndarray:
        return np.arange(self.num_chains)


def init_chains(rbm: FormulaRbm, num_chains: int, seed: int) -> ChainBatch:
    """Uniform random assignments, variances at the Bernoulli(1/2) value."""
    if num_chains < 1:
        raise ValueError("need at least one chain")
    ids = np.arange(num_chains)
    u = rng.uniform_field(rng.fold(seed, rng.KIND_INIT), ids, rbm.num_variables)
    assignments = (u < 0.5).astype(np.uint8)
    counts = count_satisfied_batch(rbm, gather(rbm, assignments))
    return ChainBatch(
        assignments=assignments,
        variance_avg=np.full(assignments.shape, 0.25, dtype=np.float32),
        best_count=counts,
        best_assignment=assignments.copy(),
        step=0,
        stream_key=seed,
    )


def gibbs_step(rbm: FormulaRbm, batch: ChainBatch, alpha: float = DEFAULT_ALPHA) -> ChainBatch:
    """One block-Gibbs transition for every chain in the batch.

    The pre-step assignments are counted for best tracking before hidden and
    visible units are resampled.
    """
    if not 0.0 < alpha <= 1.0:
        raise ValueError("alpha must be in (0, 1]")
    step = batch.step + 1
    ids = batch.chain_ids

    gathered = gather(rbm, batch.assignments)
    counts = count_satisfied_batch(rbm, gathered)
    improved = counts > batch.best_count
    best_count = np.where(improved, counts, batch.best_count)
    best_assignment = np.where(
        improved[:, None], batch.assignments, batch.best_assignment
    )

    h_probs = _sigmoid(hidden_logits(rbm, gathered))
    hidden = rng.bernoulli_field(
        rng.fold(batch.stream_key, rng.KIND_HIDDEN, step), ids, h_probs
    )
    rho = _sigmoid(visible_logits(rbm, hidden))
    variance_avg = (1.0 - alpha) * batch.variance_avg + alpha * (rho * (1.0 - rho))
    assignments = rng.bernoulli_field(
        rng.fold(batch.stream_key, rng.KIND_VISIBLE, step), ids, rho
    )
    return ChainBatch(
        assignments=assignments,
        variance_avg=variance_avg.astype(np.float32, copy=False),
        best_count=best_count,
        best_assignment=best_assignment,
        step=step,
        stream_key=batch.stream_key,
    )


def merge_candidates(
    batch: ChainBatch,
    candidates: np.ndarray,
    rbm: FormulaRbm,
    provenance: np.ndarray | None = None,
) -> ChainBatch:
    """Keep the top-B rows of (chains ++ candidates) by satisfied count.

    Stable ascending sort keeps later rows on ties, so a candidate displaces
    an equally-good chain.  Candidate rows inherit the variance averages and
    best tracking of their source chains.
    """
    candidates = np.asarray(candidates, dtype=np.uint8)
    if candidates.size == 0:
        return batch
    if provenance is None:
        provenance = np.arange(len(candidates))
    if len(provenance) != len(candidates):
        raise ValueError("provenance length must match candidate count")

    num_chains = batch.num_chains
    all_v = np.vstack([batch.assignments, candidates])
    all_nu = np.vstack([batch.variance_avg, batch.variance_avg[provenance]])
    all_best = np.concatenate([batch.best_count, batch.best_count[provenance]])
    all_best_v = np.vstack([batch.best_assignment, batch.best_assignment[provenance]])

    counts = count_satisfied_batch(rbm, gather(rbm, all_v))
    keep = np.argsort(counts, kind="stable")[-num_chains:]

    kept_counts = counts[keep]
    best_count = all_best[keep]
    best_assignment = all_best_v[keep]
    improved = kept_counts > best_count
    best_count = np.where(improved, kept_counts, best_count)
    best_assignment = np.where(improved[:, None], all_v[keep], best_assignment)
    return ChainBatch(
        assignments=all_v[keep],
        variance_avg=all_nu[keep],
        best_count=best_count,
        best_assignment=best_assignment,
        step=batch.step,
        stream_key=batch.stream_key,
    )


@dataclass
class EnsembleState:
    """All temperatures' RBMs and chain batches plus the incumbent best."""

    rbms: list[FormulaRbm]
    batches: list[ChainBatch]
    rng_root: int
    global_best_count: int
    global_best_assignment: np.ndarray
    global_best_seconds: float
    clock_origin: float

    @property
    def num_temperatures(self) -> int:
        return len(self.rbms)


def init_ensemble(
    rbms: list[FormulaRbm], chains_per_temperature: int, seed: int
) -> EnsembleState:
    batches = [
        init_chains(rbm, chains_per_temperature, rng.fold(seed, idx))
        for idx, rbm in enumerate(rbms)
    ]
    state = EnsembleState(
        rbms=rbms,
        batches=batches,
        rng_root=seed,
        global_best_count=-1,
        global_best_assignment=batches[0].assignments[0].copy(),
        global_best_seconds=0.0,
        clock_origin=time.monotonic(),
    )
    refresh_global_best(state)
    return state


def refresh_global_best(state: EnsembleState) -> bool:
    """Reduce per-chain bests into the ensemble incumbent; True if improved."""
    improved = False
    for batch in state.batches:
        idx = int(np.argmax(batch.best_count))
        if int(batch.best_count[idx]) > state.global_best_count:
            state.global_best_count = int(batch.best_count[idx])
            state.global_best_assignment = batch.best_assignment[idx].copy()
            state.global_best_seconds = time.monotonic() - state.clock_origin
            improved = True
    return improved


def run_rounds(
    state: EnsembleState,
    rounds: int = DEFAULT_ROUNDS_PER_DISPATCH,
    alpha: float = DEFAULT_ALPHA,
    workers: int = 1,
) -> EnsembleState:
    """Advance every temperature's batch by `rounds` Gibbs steps.

    Temperatures are independent between global-best reductions, so they may
    run on worker threads; results are identical either way.
    """
    if rounds < 1:
        raise ValueError("rounds must be >= 1")

    def advance(idx: int) -> ChainBatch:
        batch = state.batches[idx]
        for _ in range(rounds):
            batch = gibbs_step(state.rbms[idx], batch, alpha)
        return batch

    indices = range(state.num_temperatures)
    if workers > 1 and state.num_temperatures > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            state.batches = list(pool.map(advance, indices))
    else:
        state.batches = [advance(i) for i in indices]
    refresh_global_best(state)
    return state
