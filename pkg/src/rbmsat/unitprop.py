"""Prioritised unit-propagation improvement for sampled assignments.

Partial assignments are int8 vectors with UNASSIGNED (-1) holes.  The heavy
entry point is improve_batch: freeze the high-variance half of each chain's
variables, drop the rest, extend by unit propagation, and refill whatever
stays open.  Conflicts do not abort: MaxSAT tolerates unsatisfied clauses,
so a fully falsified clause is simply left unsatisfied.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass

import numpy as np

from . import rng
from .cnf import Formula, clause_index_arrays

UNASSIGNED = -1
DEFAULT_FREEZE_FRACTION = 0.5


class OccurrenceIndex:
    """Per-literal occurrence lists for a formula, built once and reused."""

    def __init__(self, formula: Formula):
        self.formula = formula
        self.num_variables = formula.num_variables
        # Clause literals as (0-based var, wanted value) pairs.
        self.clauses: list[list[tuple[int, int]]] = [
            [(lit.variable - 1, 0 if lit.negated else 1) for lit in clause]
            for clause in formula.clauses
        ]
        self.occ_true: list[list[int]] = [[] for _ in range(self.num_variables)]
        self.occ_false: list[list[int]] = [[] for _ in range(self.num_variables)]
        for ci, lits in enumerate(self.clauses):
            for var, wanted in lits:
                (self.occ_true if wanted else self.occ_false)[var].append(ci)
        self.var_idx, self.positive = clause_index_arrays(formula)


def _as_index(formula) -> OccurrenceIndex:
    return formula if isinstance(formula, OccurrenceIndex) else OccurrenceIndex(formula)


def select_frozen(
    variance_row: np.ndarray, fraction: float = DEFAULT_FREEZE_FRACTION
) -> np.ndarray:
    """Mask of the floor(N * fraction) highest-variance variables.

    Ties freeze the lower variable index first (stable order).
    """
    row = np.asarray(variance_row)
    count = int(len(row) * fraction)
    mask = np.zeros(len(row), dtype=bool)
    mask[np.argsort(-row, kind="stable")[:count]] = True
    return mask


def propagate(formula, partial: np.ndarray, record_trail: bool = False):
    """Extend a partial assignment to its unit-propagation fixpoint.

    A clause forces a value when it is not yet satisfied and all of its open
    slots name one literal (the plain single-open-slot unit rule, plus the
    duplicated-literal case).  Newly implied variables are processed FIFO.
    Returns the extended vector, plus a (variable, value, clause) trail when
    requested.
    """
    index = _as_index(formula)
    values = np.array(partial, dtype=np.int8, copy=True)
    if values.shape != (index.num_variables,):
        raise ValueError("partial assignment length mismatch")
    satisfied = [False] * len(index.clauses)
    trail: list[tuple[int, int, int]] = []
    queue: deque[tuple[int, int]] = deque()

    def check_clause(ci: int) -> None:
        if satisfied[ci]:
            return
        forced: tuple[int, int] | None = None
        for var, wanted in index.clauses[ci]:
            val = values[var]
            if val == wanted:
                satisfied[ci] = True
                return
            if val == UNASSIGNED:
                if forced is None:
                    forced = (var, wanted)
                elif forced != (var, wanted):
                    return  # two distinct open literals: not a unit
        if forced is None:
            return  # conflict: clause stays unsatisfied
        var, wanted = forced
        values[var] = wanted
        satisfied[ci] = True
        trail.append((var, wanted, ci))
        queue.append((var, wanted))

    for ci in range(len(index.clauses)):
        check_clause(ci)
    while queue:
        var, val = queue.popleft()
        for ci in index.occ_true[var] if val else index.occ_false[var]:
            satisfied[ci] = True
        for ci in index.occ_false[var] if val else index.occ_true[var]:
            check_clause(ci)

    if record_trail:
        return values, trail
    return values


@dataclass(frozen=True)
class UpRequest:
    assignments: np.ndarray  # (B, N) uint8
    variance: np.ndarray  # (B, N)


@dataclass(frozen=True)
class UpResult:
    candidates: np.ndarray  # (B, N) uint8, complete assignments
    provenance: np.ndarray  # (B,) source chain per candidate


def improve_batch(
    formula,
    request: UpRequest,
    seed: int,
    fill: str = "original",
    freeze_fraction: float = DEFAULT_FREEZE_FRACTION,
) -> UpResult:
    """One unit-propagation pass over every chain in the request.

    Per chain: freeze the high-variance variables at their current values,
    unassign the rest, propagate, then fill any still-open variables with
    the chain's original bits (fill="original") or fresh coin flips
    (fill="random").  Frozen variables are never changed.
    """
    if fill not in ("original", "random"):
        raise ValueError(f"unknown fill policy {fill!r}")
    index = _as_index(formula)
    assignments = np.asarray(request.assignments, dtype=np.uint8)
    variance = np.asarray(request.variance)
    num_chains, num_vars = assignments.shape
    if variance.shape != assignments.shape:
        raise ValueError("variance shape must match assignments")

    count = int(num_vars * freeze_fraction)
    order = np.argsort(-variance, axis=1, kind="stable")[:, :count]
    frozen = np.zeros(assignments.shape, dtype=bool)
    np.put_along_axis(frozen, order, True, axis=1)

    if fill == "random":
        u = rng.uniform_field(
            rng.fold(seed, rng.KIND_FILL), np.arange(num_chains), num_vars
        )
        filler = (u < 0.5).astype(np.uint8)
    else:
        filler = assignments

    candidates = np.empty_like(assignments)
    for b in range(num_chains):
        partial = np.where(frozen[b], assignments[b], UNASSIGNED).astype(np.int8)
        extended = propagate(index, partial)
        open_vars = extended == UNASSIGNED
        extended[open_vars] = filler[b][open_vars]
        candidates[b] = extended.astype(np.uint8)
    return UpResult(candidates, np.arange(num_chains))
