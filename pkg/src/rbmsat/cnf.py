"""CNF formulas: DIMACS parsing, evaluation, padding, and brute-force optima.

Variables are 1-based in files and in `Literal`, 0-based in the numpy
helpers; the conversion happens only here.  `count_satisfied` is the naive
reference evaluator that every batched kernel in the package is tested
against.
"""

from __future__ import annotations

import os
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

BRUTE_FORCE_MAX_VARS = 26


class DimacsError(ValueError):
    """Malformed DIMACS/WCNF input."""


@dataclass(frozen=True)
class Literal:
    variable: int  # 1-based
    negated: bool = False

    def __post_init__(self) -> None:
        if self.variable < 1:
            raise ValueError(f"variable index must be >= 1, got {self.variable}")

    @classmethod
    def from_signed(cls, lit: int) -> "Literal":
        if lit == 0:
            raise ValueError("0 is not a literal")
        return cls(abs(lit), lit < 0)

    @property
    def signed(self) -> int:
        return -self.variable if self.negated else self.variable


@dataclass(frozen=True)
class Clause:
    literals: tuple[Literal, ...]

    def __post_init__(self) -> None:
        if not self.literals:
            raise ValueError("empty clause")

    @classmethod
    def from_signed(cls, lits: Iterable[int]) -> "Clause":
        return cls(tuple(Literal.from_signed(l) for l in lits))

    def __len__(self) -> int:
        return len(self.literals)

    def __iter__(self):
        return iter(self.literals)


@dataclass(frozen=True)
class Formula:
    num_variables: int
    clauses: tuple[Clause, ...]
    max_clause_size: int = 0
    source_name: str = ""

    def __post_init__(self) -> None:
        if self.num_variables < 1:
            raise ValueError("formula needs at least one variable")
        widest = max((len(c) for c in self.clauses), default=0)
        if self.max_clause_size == 0:
            object.__setattr__(self, "max_clause_size", widest)
        elif self.max_clause_size < widest:
            raise ValueError("max_clause_size smaller than widest clause")
        for c in self.clauses:
            for lit in c:
                if lit.variable > self.num_variables:
                    raise ValueError(
                        f"literal {lit.signed} exceeds {self.num_variables} variables"
                    )

    @property
    def num_clauses(self) -> int:
        return len(self.clauses)


def parse_dimacs(text: str | bytes, source_name: str = "") -> Formula:
    """Parse DIMACS CNF or uniform-weight WCNF text into a Formula.

    Comment lines are skipped, clauses may span lines, and WCNF clause
    weights are stripped after checking they are all equal (the solver is
    unweighted, so non-uniform weights are rejected).
    """
    if isinstance(text, bytes):
        text = text.decode("ascii", errors="replace")

    tokens: list[str] = []
    header: list[str] | None = None
    for raw in text.splitlines():
        line = raw.strip()
        if not line or line.startswith("c"):
            continue
        if line.startswith("%"):
            break  # SATLIB-style trailer
        if line.startswith("p"):
            if header is not None:
                raise DimacsError("duplicate problem line")
            header = line.split()
            continue
        tokens.extend(line.split())

    if header is None:
        raise DimacsError("missing 'p cnf/wcnf' problem line")
    if len(header) < 4 or header[1] not in ("cnf", "wcnf"):
        raise DimacsError(f"malformed problem line: {' '.join(header)}")
    weighted = header[1] == "wcnf"
    allowed_len = (4, 5) if weighted else (4,)
    if len(header) not in allowed_len:
        raise DimacsError(f"malformed problem line: {' '.join(header)}")
    try:
        num_vars = int(header[2])
        num_clauses = int(header[3])
    except ValueError as exc:
        raise DimacsError(f"malformed problem line: {' '.join(header)}") from exc
    if num_vars < 1 or num_clauses < 0:
        raise DimacsError("problem line declares an empty problem")

    clauses: list[Clause] = []
    weight_seen: int | None = None
    lits: list[int] = []
    at_clause_start = True
    for tok in tokens:
        try:
            value = int(tok)
        except ValueError as exc:
            raise DimacsError(f"non-integer token {tok!r}") from exc
        if weighted and at_clause_start:
            if weight_seen is None:
                weight_seen = value
            elif value != weight_seen:
                raise DimacsError(
                    f"non-uniform WCNF weights ({weight_seen} vs {value}); "
                    "solver is unweighted"
                )
            at_clause_start = False
            continue
        if value == 0:
            if not lits:
                raise DimacsError("zero-length clause")
            clauses.append(Clause.from_signed(lits))
            lits = []
            at_clause_start = True
            continue
        if abs(value) > num_vars:
            raise DimacsError(f"literal {value} exceeds declared {num_vars} variables")
        lits.append(value)
        at_clause_start = False
    if not at_clause_start:
        raise DimacsError("unterminated clause at end of input")
    if len(clauses) != num_clauses:
        raise DimacsError(
            f"declared {num_clauses} clauses but found {len(clauses)}"
        )
    return Formula(num_vars, tuple(clauses), source_name=source_name)


def parse_dimacs_file(path: str) -> Formula:
    with open(path, "rb") as fh:
        return parse_dimacs(fh.read(), source_name=os.path.basename(path))


def to_dimacs(formula: Formula) -> str:
    """Canonical DIMACS text, one clause per line."""
    lines = [f"p cnf {formula.num_variables} {formula.num_clauses}"]
    for clause in formula.clauses:
        lines.append(" ".join(str(lit.signed) for lit in clause) + " 0")
    return "\n".join(lines) + "\n"


def count_satisfied(formula: Formula, assignment: Sequence[int]) -> int:
    """Number of clauses with at least one true literal (naive reference)."""
    if len(assignment) != formula.num_variables:
        raise ValueError("assignment length does not match variable count")
    count = 0
    for clause in formula.clauses:
        for lit in clause:
            value = assignment[lit.variable - 1]
            if bool(value) != lit.negated:
                count += 1
                break
    return count


def clause_index_arrays(formula: Formula) -> tuple[np.ndarray, np.ndarray]:
    """(C, Kmax) 0-based variable indices and positive-polarity mask.

    Ragged clauses are padded by repeating their first literal, which leaves
    satisfaction untouched.
    """
    width = max(formula.max_clause_size, 1)
    var_idx = np.zeros((formula.num_clauses, width), dtype=np.int32)
    positive = np.zeros((formula.num_clauses, width), dtype=bool)
    for i, clause in enumerate(formula.clauses):
        lits = list(clause.literals)
        lits += [lits[0]] * (width - len(lits))
        var_idx[i] = [lit.variable - 1 for lit in lits]
        positive[i] = [not lit.negated for lit in lits]
    return var_idx, positive


def count_satisfied_many(
    formula: Formula,
    bits: np.ndarray,
    arrays: tuple[np.ndarray, np.ndarray] | None = None,
) -> np.ndarray:
    """Vectorised satisfied-clause counts for a (B, N) bit matrix."""
    bits = np.asarray(bits)
    if bits.ndim != 2 or bits.shape[1] != formula.num_variables:
        raise ValueError("bit matrix must be (B, num_variables)")
    var_idx, positive = arrays if arrays is not None else clause_index_arrays(formula)
    gathered = bits[:, var_idx].astype(bool)  # (B, C, K)
    return (gathered == positive).any(axis=2).sum(axis=1).astype(np.int64)


def brute_force_optimum(formula: Formula) -> tuple[int, np.ndarray]:
    """Exhaustive MaxSAT optimum; the test oracle for everything else.

    Assignments are enumerated as integers with variable i (1-based) on bit
    i-1; ties are broken by the lowest such integer.
    """
    n = formula.num_variables
    if n > BRUTE_FORCE_MAX_VARS:
        raise ValueError(f"brute force capped at {BRUTE_FORCE_MAX_VARS} variables")
    codes = np.arange(1 << n, dtype=np.uint64)
    counts = np.zeros(1 << n, dtype=np.int32)
    for clause in formula.clauses:
        sat = np.zeros(1 << n, dtype=bool)
        for lit in clause:
            vals = (codes >> np.uint64(lit.variable - 1)) & np.uint64(1)
            sat |= (vals == 0) if lit.negated else (vals == 1)
        counts += sat
    best = int(counts.max())
    code = int(np.argmax(counts == best))
    witness = np.array([(code >> i) & 1 for i in range(n)], dtype=np.uint8)
    return best, witness


def pad_clauses(formula: Formula, width: int) -> Formula:
    """Pad every clause to exactly `width` literals by repeating its first
    literal; satisfied-clause counts are invariant under this."""
    padded = []
    for clause in formula.clauses:
        if len(clause) > width:
            raise ValueError(f"clause of size {len(clause)} exceeds width {width}")
        lits = clause.literals + (clause.literals[0],) * (width - len(clause))
        padded.append(Clause(lits))
    return Formula(
        formula.num_variables,
        tuple(padded),
        max_clause_size=width,
        source_name=formula.source_name,
    )


def random_ksat(
    num_variables: int, num_clauses: int, clause_size: int, seed: int
) -> Formula:
    """Uniform random k-SAT: distinct variables per clause, random polarity."""
    rng = np.random.default_rng(seed)
    clauses = []
    for _ in range(num_clauses):
        vars_ = rng.choice(num_variables, size=clause_size, replace=False) + 1
        negs = rng.integers(0, 2, size=clause_size)
        clauses.append(
            Clause(tuple(Literal(int(v), bool(s)) for v, s in zip(vars_, negs)))
        )
    return Formula(
        num_variables,
        tuple(clauses),
        source_name=f"random-{clause_size}sat-n{num_variables}-c{num_clauses}-s{seed}",
    )
