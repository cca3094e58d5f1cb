"""Product-of-clause-RBMs for a CNF formula, with its batched kernels.

Assembly applies the polarity transform to one canonical OR gate per clause
and stores the per-clause weights contiguously; the full (N x C*L) weight
matrix is never materialised.  Gather and scatter-add use direct indexing
with a precomputed per-variable adjacency plan, which is the fast path on
CPUs (the one-hot matrix-product formulation lives only in the test
oracles).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .cnf import Formula
from .orgate import OrGateRbm

_kernel_calls: dict[str, int] = {}


def kernel_call_counts() -> dict[str, int]:
    """Snapshot of per-kernel invocation counters (for instrumentation)."""
    return dict(_kernel_calls)


def reset_kernel_call_counts() -> None:
    _kernel_calls.clear()


def _count_call(name: str) -> None:
    _kernel_calls[name] = _kernel_calls.get(name, 0) + 1


@dataclass(frozen=True)
class SignedIndexTable:
    """(K, C) signed 1-based variable indices; sign carries literal polarity."""

    entries: np.ndarray
    num_variables: int

    def __post_init__(self) -> None:
        if self.entries.ndim != 2:
            raise ValueError("index table must be 2-D (clause_size, num_clauses)")
        if (self.entries == 0).any():
            raise ValueError("index table has zero entries; pad clauses first")
        if np.abs(self.entries).max(initial=0) > self.num_variables:
            raise ValueError("index table entry exceeds variable count")

    @classmethod
    def from_formula(cls, formula: Formula) -> "SignedIndexTable":
        width = formula.max_clause_size
        entries = np.zeros((width, formula.num_clauses), dtype=np.int32)
        for c, clause in enumerate(formula.clauses):
            if len(clause) != width:
                raise ValueError("clause sizes differ; pad the formula first")
            entries[:, c] = [lit.signed for lit in clause]
        return cls(entries, formula.num_variables)


@dataclass(frozen=True)
class FormulaRbm:
    num_variables: int
    num_clauses: int
    clause_size: int
    hidden_per_clause: int
    table: SignedIndexTable
    weight_stack: np.ndarray  # (C, K, L), polarity-transformed
    bias_stack: np.ndarray  # (C, L)
    visible_bias: np.ndarray  # (N,), fixed zero
    target: float
    # Derived index plans (gather slots and per-variable scatter segments).
    gather_index: np.ndarray = field(repr=False, default=None)
    positive_mask: np.ndarray = field(repr=False, default=None)
    scatter_order: np.ndarray = field(repr=False, default=None)
    scatter_starts: np.ndarray = field(repr=False, default=None)
    scatter_vars: np.ndarray = field(repr=False, default=None)

    @property
    def num_hidden(self) -> int:
        return self.num_clauses * self.hidden_per_clause

    @property
    def dtype(self) -> np.dtype:
        return self.weight_stack.dtype


def assemble(formula: Formula, gate: OrGateRbm, dtype=np.float32) -> FormulaRbm:
    """Build the formula RBM from a padded formula and one canonical gate.

    Per clause c with polarity diagonal lam (+1 plain, -1 negated):
    weights become lam * W and hidden biases b + sum over negated rows of W,
    so the clause free energy equals the canonical gate's at the
    polarity-flipped input.
    """
    if formula.num_clauses == 0:
        raise ValueError("cannot assemble an RBM for a formula with no clauses")
    for clause in formula.clauses:
        if len(clause) != gate.clause_size:
            raise ValueError(
                f"clause size {len(clause)} does not match gate K={gate.clause_size}"
            )
    table = SignedIndexTable.from_formula(formula)
    polarity = np.sign(table.entries).astype(dtype)  # (K, C)
    weights = gate.weights.astype(dtype)
    bias = gate.hidden_bias.astype(dtype)

    weight_stack = polarity.T[:, :, None] * weights[None, :, :]
    bias_stack = bias[None, :] + ((1.0 - polarity.T) * 0.5) @ weights

    gather_index = (np.abs(table.entries).T - 1).astype(np.intp)  # (C, K)
    positive_mask = table.entries.T > 0

    flat_vars = gather_index.reshape(-1)
    order = np.argsort(flat_vars, kind="stable")
    sorted_vars = flat_vars[order]
    starts = np.flatnonzero(np.r_[True, sorted_vars[1:] != sorted_vars[:-1]])
    return FormulaRbm(
        num_variables=formula.num_variables,
        num_clauses=formula.num_clauses,
        clause_size=gate.clause_size,
        hidden_per_clause=gate.num_hidden,
        table=table,
        weight_stack=weight_stack,
        bias_stack=bias_stack,
        visible_bias=np.zeros(formula.num_variables, dtype=dtype),
        target=gate.target,
        gather_index=gather_index,
        positive_mask=positive_mask,
        scatter_order=order,
        scatter_starts=starts,
        scatter_vars=sorted_vars[starts],
    )


def gather(rbm: FormulaRbm, chains: np.ndarray) -> np.ndarray:
    """Clause-local views of the assignments: (B, C, K) bits.

    Polarity does not flip gathered bits; it acts in the transformed weights
    and in the satisfaction test.
    """
    _count_call("gather")
    chains = np.asarray(chains)
    if chains.ndim != 2 or chains.shape[1] != rbm.num_variables:
        raise ValueError("chain matrix must be (B, num_variables)")
    return chains[:, rbm.gather_index]


def count_satisfied_batch(rbm: FormulaRbm, gathered: np.ndarray) -> np.ndarray:
    """Per-chain count of clauses where some literal matches its polarity."""
    _count_call("count_satisfied_batch")
    hits = gathered.astype(bool) == rbm.positive_mask
    return hits.any(axis=2).sum(axis=1).astype(np.int64)


def hidden_logits(rbm: FormulaRbm, gathered: np.ndarray) -> np.ndarray:
    """Logits of the per-clause hidden conditionals: (B, C, L)."""
    _count_call("hidden_logits")
    g = gathered.astype(rbm.dtype, copy=False)
    return np.einsum("bck,ckl->bcl", g, rbm.weight_stack) + rbm.bias_stack


def visible_logits(rbm: FormulaRbm, hidden: np.ndarray) -> np.ndarray:
    """Logits of the visible conditionals: per-clause contributions
    scatter-added over the shared variables, plus the (zero) visible bias.

    Padded duplicate slots of a variable each contribute, following the
    conditional's slot-wise sum.
    """
    _count_call("visible_logits")
    h = hidden.astype(rbm.dtype, copy=False)
    contrib = np.einsum("bcl,ckl->bck", h, rbm.weight_stack)
    flat = contrib.reshape(len(contrib), -1)[:, rbm.scatter_order]
    sums = np.add.reduceat(flat, rbm.scatter_starts, axis=1)
    out = np.tile(rbm.visible_bias, (len(contrib), 1))
    out[:, rbm.scatter_vars] += sums
    return out


def free_energy_batch(rbm: FormulaRbm, chains: np.ndarray) -> np.ndarray:
    """Per-chain formula free energy: the sum of clause free energies."""
    _count_call("free_energy_batch")
    z = hidden_logits(rbm, gather(rbm, chains))
    return -np.logaddexp(0.0, z).sum(axis=(1, 2))


def dump_parameters(rbm: FormulaRbm, path: str) -> None:
    """Debug dump of the assembled per-clause parameters, bank-style text."""
    lines = [
        f"formula-rbm-dump 1 clauses {rbm.num_clauses} clause_size "
        f"{rbm.clause_size} hidden {rbm.hidden_per_clause} target {rbm.target!r}"
    ]
    for c in range(rbm.num_clauses):
        column = " ".join(str(int(x)) for x in rbm.table.entries[:, c])
        lines.append(f"clause {c} literals {column}")
        for row in rbm.weight_stack[c]:
            lines.append("w " + " ".join(repr(float(x)) for x in row))
        lines.append("b " + " ".join(repr(float(x)) for x in rbm.bias_stack[c]))
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")
