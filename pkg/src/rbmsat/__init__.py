"""Incomplete MaxSAT solving by block Gibbs sampling in clause-level RBMs."""

from .cnf import (
    Clause,
    Formula,
    Literal,
    brute_force_optimum,
    count_satisfied,
    pad_clauses,
    parse_dimacs,
    parse_dimacs_file,
    random_ksat,
    to_dimacs,
)
from .orgate import (
    ENSEMBLE_TARGETS_2,
    ENSEMBLE_TARGETS_8,
    ENSEMBLE_TARGETS_16,
    OrGateRbm,
    WeightBank,
    build_weight_bank,
    load_bank,
    save_bank,
    train_or_gate,
)
from .formula_rbm import FormulaRbm, assemble, free_energy_batch
from .sampler import ChainBatch, EnsembleState, gibbs_step, init_chains, run_rounds
from .solver import (
    ScoreReport,
    SolveResult,
    SolverConfig,
    emit_solution,
    incomplete_score,
    run_benchmark,
    solve,
)
from .unitprop import UpRequest, UpResult, improve_batch, propagate, select_frozen

__version__ = "0.1.0"

__all__ = [
    "Clause",
    "Formula",
    "Literal",
    "OrGateRbm",
    "WeightBank",
    "FormulaRbm",
    "ChainBatch",
    "EnsembleState",
    "SolverConfig",
    "SolveResult",
    "ScoreReport",
    "UpRequest",
    "UpResult",
    "ENSEMBLE_TARGETS_2",
    "ENSEMBLE_TARGETS_8",
    "ENSEMBLE_TARGETS_16",
    "assemble",
    "brute_force_optimum",
    "build_weight_bank",
    "count_satisfied",
    "emit_solution",
    "free_energy_batch",
    "gibbs_step",
    "improve_batch",
    "incomplete_score",
    "init_chains",
    "load_bank",
    "pad_clauses",
    "parse_dimacs",
    "parse_dimacs_file",
    "propagate",
    "random_ksat",
    "run_benchmark",
    "run_rounds",
    "save_bank",
    "select_frozen",
    "solve",
    "to_dimacs",
    "train_or_gate",
]
