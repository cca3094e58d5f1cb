"""Wall-clock-budgeted MaxSAT search plus the benchmark harness.

solve() drives the mode-selected pipeline: `full` couples the temperature
ensemble of Gibbs chains with prioritised unit propagation, `no_up` drops
the propagation, `random_sampling_up` replaces Gibbs sampling with uniform
proposals (and variance priorities with random ones), and `up_only` keeps
nothing but propagation over random assignments.  The two random modes
never touch the formula-RBM kernels.
"""

from __future__ import annotations

import os
import statistics
import time
import warnings
from concurrent.futures import Future, ThreadPoolExecutor
from dataclasses import dataclass, field, fields, replace
from typing import Callable, IO, Iterable, NamedTuple

import numpy as np

from . import rng
from .cnf import (
    Formula,
    clause_index_arrays,
    count_satisfied,
    count_satisfied_many,
    pad_clauses,
    parse_dimacs_file,
)
from .formula_rbm import assemble, count_satisfied_batch, gather
from .orgate import ENSEMBLE_TARGETS_16, MAX_CLAUSE_SIZE, WeightBank
from .sampler import EnsembleState, gibbs_step, init_ensemble, merge_candidates, refresh_global_best
from .unitprop import OccurrenceIndex, UpRequest, improve_batch

MODES = ("full", "no_up", "random_sampling_up", "up_only")
WARN_VARIABLES = 10_000
WARN_CLAUSES = 100_000
_UP_DOMAIN = 0x5550


class SolverError(RuntimeError):
    """Unusable instance or configuration (missing gates, oversize clauses)."""


@dataclass(frozen=True)
class SolverConfig:
    time_limit_seconds: float = 300.0
    chains_per_temperature: int = 128
    temperature_targets: tuple[float, ...] = ENSEMBLE_TARGETS_16
    up_interval_steps: int = 5000  # 0 disables unit propagation
    up_wait_steps: int = 500
    alpha: float = 0.1
    seed: int = 0
    rounds_per_dispatch: int = 500
    mode: str = "full"
    worker_count: int = 1
    up_async: bool = False
    up_fill: str = "original"
    freeze_fraction: float = 0.5
    max_steps: int | None = None  # optional deterministic step budget
    target_cost: int = 0  # stop once this many unsatisfied clauses is reached

    def __post_init__(self) -> None:
        if self.time_limit_seconds <= 0:
            raise ValueError("time limit must be positive")
        if self.chains_per_temperature < 1:
            raise ValueError("need at least one chain per temperature")
        if not self.temperature_targets:
            raise ValueError("need at least one temperature target")
        if self.up_interval_steps < 0:
            raise ValueError("up interval must be >= 0")
        if self.up_wait_steps < 1:
            raise ValueError("up wait must be >= 1")
        if not 0.0 < self.alpha <= 1.0:
            raise ValueError("alpha must be in (0, 1]")
        if self.rounds_per_dispatch < 1:
            raise ValueError("rounds per dispatch must be >= 1")
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}")
        if self.worker_count < 1:
            raise ValueError("worker count must be >= 1")
        if self.up_fill not in ("original", "random"):
            raise ValueError("up_fill must be 'original' or 'random'")
        if not 0.0 <= self.freeze_fraction <= 1.0:
            raise ValueError("freeze fraction must be in [0, 1]")
        if self.max_steps is not None and self.max_steps < 1:
            raise ValueError("max_steps must be >= 1 when given")
        if self.target_cost < 0:
            raise ValueError("target cost must be >= 0")


class TraceEntry(NamedTuple):
    step: int
    seconds: float
    satisfied: int


@dataclass
class SolveResult:
    best_assignment: np.ndarray
    satisfied: int
    unsatisfied_cost: int
    trace: list[TraceEntry]
    instance_name: str
    num_clauses: int
    stats: dict[str, int] = field(default_factory=dict)


def incomplete_score(cost: int, best_known_cost: int) -> float:
    """(best + 1) / (cost + 1), in (0, 1].

    A cost below best-known is rejected; the harness updates its table and
    rescores instead of ever producing a score above 1.
    """
    if best_known_cost < 0 or cost < 0:
        raise ValueError("costs must be nonnegative")
    if cost < best_known_cost:
        raise ValueError(
            "cost beats the best-known bound; update the table and rescore"
        )
    return (best_known_cost + 1) / (cost + 1)


def solve(formula: Formula, bank: WeightBank | None, config: SolverConfig) -> SolveResult:
    """Search for a maximally satisfying assignment until the deadline.

    The bank may be None only for the two modes that never assemble an RBM.
    The reported count always equals a naive recount of the returned
    assignment.
    """
    start = time.monotonic()
    if formula.num_clauses == 0:
        empty = np.zeros(formula.num_variables, dtype=np.uint8)
        return SolveResult(
            empty, 0, 0, [TraceEntry(0, 0.0, 0)], formula.source_name, 0
        )
    if formula.max_clause_size > MAX_CLAUSE_SIZE:
        raise SolverError(
            f"maximum clause size {formula.max_clause_size} exceeds "
            f"{MAX_CLAUSE_SIZE}; no OR gates exist beyond that"
        )
    if formula.num_variables > WARN_VARIABLES:
        warnings.warn(f"{formula.num_variables} variables exceeds the tuned range")
    if formula.num_clauses > WARN_CLAUSES:
        warnings.warn(f"{formula.num_clauses} clauses exceeds the tuned range")

    if config.mode in ("full", "no_up"):
        if bank is None:
            raise SolverError("modes full/no_up require a weight bank")
        result = _solve_ensemble(formula, bank, config, start)
    else:
        result = _solve_random(formula, config, start)

    recount = count_satisfied(formula, result.best_assignment)
    if recount != result.satisfied:
        raise AssertionError(
            f"kernel count {result.satisfied} disagrees with recount {recount}"
        )
    return result


def _solve_ensemble(
    formula: Formula, bank: WeightBank, config: SolverConfig, start: float
) -> SolveResult:
    width = max(3, formula.max_clause_size)
    padded = pad_clauses(formula, width)
    try:
        gates = [bank.get(width, t) for t in config.temperature_targets]
    except KeyError as exc:
        raise SolverError(str(exc)) from None
    rbms = [assemble(padded, gate) for gate in gates]
    state = init_ensemble(rbms, config.chains_per_temperature, config.seed)
    state.clock_origin = start
    state.global_best_seconds = time.monotonic() - start

    num_clauses = formula.num_clauses
    target_satisfied = num_clauses - config.target_cost
    deadline = start + config.time_limit_seconds
    use_up = config.mode == "full" and config.up_interval_steps > 0
    up_index = OccurrenceIndex(formula) if use_up else None

    pending: list = [None] * state.num_temperatures
    countdown = [-1] * state.num_temperatures
    stats = {"up_calls": 0, "up_merges": 0, "dispatches": 0}
    trace = [TraceEntry(0, state.global_best_seconds, state.global_best_count)]

    up_pool = (
        ThreadPoolExecutor(max_workers=max(1, config.worker_count))
        if use_up and config.up_async
        else None
    )
    temp_pool = (
        ThreadPoolExecutor(max_workers=config.worker_count)
        if config.worker_count > 1 and state.num_temperatures > 1
        else None
    )

    def advance(idx: int, rounds: int) -> tuple:
        batch = state.batches[idx]
        rbm = state.rbms[idx]
        pend, wait = pending[idx], countdown[idx]
        calls = merges = 0
        for _ in range(rounds):
            step = batch.step + 1
            if use_up:
                if wait == 0 and pend is not None:
                    result = pend.result() if isinstance(pend, Future) else pend
                    batch = merge_candidates(
                        batch, result.candidates, rbm, result.provenance
                    )
                    merges += 1
                    pend = None
                if step % config.up_interval_steps == 0 and pend is None:
                    request = UpRequest(batch.assignments, batch.variance_avg)
                    up_seed = rng.fold(config.seed, _UP_DOMAIN, idx, step)
                    args = (up_index, request, up_seed)
                    kwargs = {
                        "fill": config.up_fill,
                        "freeze_fraction": config.freeze_fraction,
                    }
                    pend = (
                        up_pool.submit(improve_batch, *args, **kwargs)
                        if up_pool is not None
                        else improve_batch(*args, **kwargs)
                    )
                    wait = config.up_wait_steps
                    calls += 1
            batch = gibbs_step(rbm, batch, config.alpha)
            wait = max(wait - 1, -1)
        return batch, pend, wait, calls, merges

    try:
        while True:
            if state.global_best_count >= target_satisfied:
                break
            if time.monotonic() >= deadline:
                break
            done = state.batches[0].step
            rounds = config.rounds_per_dispatch
            if config.max_steps is not None:
                if done >= config.max_steps:
                    break
                rounds = min(rounds, config.max_steps - done)
            if temp_pool is not None:
                results = list(
                    temp_pool.map(lambda i: advance(i, rounds), range(state.num_temperatures))
                )
            else:
                results = [advance(i, rounds) for i in range(state.num_temperatures)]
            for idx, (batch, pend, wait, calls, merges) in enumerate(results):
                state.batches[idx] = batch
                pending[idx] = pend
                countdown[idx] = wait
                stats["up_calls"] += calls
                stats["up_merges"] += merges
            stats["dispatches"] += 1
            if refresh_global_best(state):
                trace.append(
                    TraceEntry(
                        state.batches[0].step,
                        state.global_best_seconds,
                        state.global_best_count,
                    )
                )
    finally:
        if up_pool is not None:
            up_pool.shutdown(wait=False, cancel_futures=True)
        if temp_pool is not None:
            temp_pool.shutdown(wait=True)

    # The loop counts assignments before each resampling; fold in the final
    # post-loop assignments as well.
    for idx, batch in enumerate(state.batches):
        counts = count_satisfied_batch(state.rbms[idx], gather(state.rbms[idx], batch.assignments))
        improved = counts > batch.best_count
        batch.best_count = np.where(improved, counts, batch.best_count)
        batch.best_assignment = np.where(
            improved[:, None], batch.assignments, batch.best_assignment
        )
    if refresh_global_best(state):
        trace.append(
            TraceEntry(
                state.batches[0].step,
                state.global_best_seconds,
                state.global_best_count,
            )
        )

    stats["steps"] = state.batches[0].step
    return SolveResult(
        best_assignment=state.global_best_assignment,
        satisfied=state.global_best_count,
        unsatisfied_cost=num_clauses - state.global_best_count,
        trace=trace,
        instance_name=formula.source_name,
        num_clauses=num_clauses,
        stats=stats,
    )


def _solve_random(formula: Formula, config: SolverConfig, start: float) -> SolveResult:
    """`random_sampling_up` and `up_only`: no formula-RBM kernels at all."""
    arrays = clause_index_arrays(formula)
    index = OccurrenceIndex(formula)
    num_clauses = formula.num_clauses
    num_vars = formula.num_variables
    total_chains = config.chains_per_temperature * len(config.temperature_targets)
    ids = np.arange(total_chains)
    deadline = start + config.time_limit_seconds
    target_satisfied = num_clauses - config.target_cost
    use_up = config.mode == "random_sampling_up" and config.up_interval_steps > 0
    fill = "random" if config.mode == "up_only" else config.up_fill

    best_count = -1
    best_assignment = np.zeros(num_vars, dtype=np.uint8)
    trace: list[TraceEntry] = []
    stats = {"up_calls": 0, "up_merges": 0}

    def note_best(counts: np.ndarray, bits: np.ndarray, step: int) -> None:
        nonlocal best_count, best_assignment
        idx = int(np.argmax(counts))
        if int(counts[idx]) > best_count:
            best_count = int(counts[idx])
            best_assignment = bits[idx].copy()
            trace.append(TraceEntry(step, time.monotonic() - start, best_count))

    assignments = (
        rng.uniform_field(rng.fold(config.seed, rng.KIND_INIT), ids, num_vars) < 0.5
    ).astype(np.uint8)
    counts = count_satisfied_many(formula, assignments, arrays)
    note_best(counts, assignments, 0)

    step = 0
    pend = None
    wait = -1
    while True:
        if best_count >= target_satisfied:
            break
        if time.monotonic() >= deadline:
            break
        if config.max_steps is not None and step >= config.max_steps:
            break
        step += 1

        if config.mode == "up_only":
            assignments = (
                rng.uniform_field(
                    rng.fold(config.seed, rng.KIND_PROPOSAL, step), ids, num_vars
                )
                < 0.5
            ).astype(np.uint8)
            priorities = rng.uniform_field(
                rng.fold(config.seed, rng.KIND_PRIORITY, step), ids, num_vars
            )
            result = improve_batch(
                index,
                UpRequest(assignments, priorities),
                rng.fold(config.seed, _UP_DOMAIN, step),
                fill=fill,
                freeze_fraction=config.freeze_fraction,
            )
            stats["up_calls"] += 1
            counts = count_satisfied_many(formula, result.candidates, arrays)
            note_best(counts, result.candidates, step)
            continue

        # random_sampling_up: uniform proposals stand in for Gibbs sampling.
        if use_up:
            if wait == 0 and pend is not None:
                cand_counts = count_satisfied_many(formula, pend.candidates, arrays)
                note_best(cand_counts, pend.candidates, step)
                combined = np.vstack([assignments, pend.candidates])
                combined_counts = np.concatenate([counts, cand_counts])
                keep = np.argsort(combined_counts, kind="stable")[-total_chains:]
                assignments = combined[keep]
                counts = combined_counts[keep]
                stats["up_merges"] += 1
                pend = None
            if step % config.up_interval_steps == 0 and pend is None:
                priorities = rng.uniform_field(
                    rng.fold(config.seed, rng.KIND_PRIORITY, step), ids, num_vars
                )
                pend = improve_batch(
                    index,
                    UpRequest(assignments, priorities),
                    rng.fold(config.seed, _UP_DOMAIN, step),
                    fill=fill,
                    freeze_fraction=config.freeze_fraction,
                )
                stats["up_calls"] += 1
                wait = config.up_wait_steps
        assignments = (
            rng.uniform_field(
                rng.fold(config.seed, rng.KIND_PROPOSAL, step), ids, num_vars
            )
            < 0.5
        ).astype(np.uint8)
        counts = count_satisfied_many(formula, assignments, arrays)
        note_best(counts, assignments, step)
        wait = max(wait - 1, -1)

    stats["steps"] = step
    return SolveResult(
        best_assignment=best_assignment,
        satisfied=best_count,
        unsatisfied_cost=num_clauses - best_count,
        trace=trace,
        instance_name=formula.source_name,
        num_clauses=num_clauses,
        stats=stats,
    )


@dataclass
class ScoreReport:
    """Incomplete scores per solver label and instance, plus their means."""

    scores: dict[str, dict[str, float]]
    averages: dict[str, float]
    best_known: dict[str, int]
    failures: dict[str, str] = field(default_factory=dict)


def run_benchmark(
    instances: Iterable[str],
    bank: WeightBank | None,
    config: SolverConfig,
    best_known: dict[str, int] | None = None,
) -> ScoreReport:
    """Solve each instance under `config` and score against best-known costs.

    Instances the solver beats update the table before scoring, so every
    score lands in (0, 1].  Parse failures are recorded and skipped.
    """
    table = dict(best_known or {})
    costs: dict[str, int] = {}
    failures: dict[str, str] = {}
    for path in instances:
        name = os.path.basename(str(path))
        try:
            formula = parse_dimacs_file(str(path))
        except Exception as exc:  # noqa: BLE001 - recorded, run continues
            failures[name] = str(exc)
            continue
        result = solve(formula, bank, config)
        costs[name] = result.unsatisfied_cost
        if name not in table or result.unsatisfied_cost < table[name]:
            table[name] = result.unsatisfied_cost
    scores = {
        name: incomplete_score(cost, table[name]) for name, cost in costs.items()
    }
    average = statistics.fmean(scores.values()) if scores else 0.0
    return ScoreReport(
        scores={config.mode: scores},
        averages={config.mode: average},
        best_known=table,
        failures=failures,
    )


def run_ablation_grid(
    instances: Iterable[str],
    bank: WeightBank | None,
    config: SolverConfig,
    modes: Iterable[str],
    best_known: dict[str, int] | None = None,
) -> ScoreReport:
    """Solve every instance under every mode; score against the shared final
    best-known table so the grid is internally consistent."""
    paths = [str(p) for p in instances]
    table = dict(best_known or {})
    costs: dict[str, dict[str, int]] = {}
    failures: dict[str, str] = {}
    for mode in modes:
        mode_config = replace(config, mode=mode)
        costs[mode] = {}
        for path in paths:
            name = os.path.basename(path)
            if name in failures:
                continue
            try:
                formula = parse_dimacs_file(path)
            except Exception as exc:  # noqa: BLE001
                failures[name] = str(exc)
                continue
            result = solve(formula, bank, mode_config)
            costs[mode][name] = result.unsatisfied_cost
            if name not in table or result.unsatisfied_cost < table[name]:
                table[name] = result.unsatisfied_cost
    scores = {
        mode: {
            name: incomplete_score(cost, table[name])
            for name, cost in mode_costs.items()
        }
        for mode, mode_costs in costs.items()
    }
    averages = {
        mode: (statistics.fmean(vals.values()) if vals else 0.0)
        for mode, vals in scores.items()
    }
    return ScoreReport(scores, averages, table, failures)


def emit_solution(result: SolveResult, stream: IO[str]) -> None:
    """MaxSAT-Evaluation-style output: `o` per improvement, `s`, then `v`."""
    last_cost = None
    for entry in result.trace:
        cost = result.num_clauses - entry.satisfied
        if last_cost is None or cost < last_cost:
            print(f"o {cost}", file=stream)
            last_cost = cost
    print("s SATISFIABLE" if result.unsatisfied_cost == 0 else "s UNKNOWN", file=stream)
    literals = (
        str(i + 1) if v else str(-(i + 1))
        for i, v in enumerate(result.best_assignment)
    )
    print("v " + " ".join(literals), file=stream)


def write_trace(result: SolveResult, path: str) -> None:
    """Line-delimited improvement records: step, seconds, cost."""
    with open(path, "w") as fh:
        for entry in result.trace:
            cost = result.num_clauses - entry.satisfied
            fh.write(f"{entry.step} {entry.seconds:.6f} {cost}\n")


def load_best_known(path: str) -> dict[str, int]:
    """Best-known cost table: `instance-name cost` per line."""
    table: dict[str, int] = {}
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            name, cost = line.rsplit(None, 1)
            table[name] = int(cost)
    return table


def save_best_known(table: dict[str, int], path: str) -> None:
    with open(path, "w") as fh:
        for name in sorted(table):
            fh.write(f"{name} {table[name]}\n")


def load_config_file(path: str) -> dict[str, str]:
    """Flat `key value` (or `key=value`) solver settings; '#' comments."""
    mapping: dict[str, str] = {}
    with open(path) as fh:
        for line in fh:
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" in line:
                key, value = line.split("=", 1)
            else:
                key, value = line.split(None, 1)
            mapping[key.strip()] = value.strip()
    return mapping


def config_from_mapping(
    mapping: dict[str, str], base: SolverConfig | None = None
) -> SolverConfig:
    """Apply string-typed settings (config file or flags) over a base config."""
    base = base or SolverConfig()
    converted = {}
    by_name = {f.name: f for f in fields(SolverConfig)}
    for key, raw in mapping.items():
        if key not in by_name:
            raise ValueError(f"unknown config key {key!r}")
        if key == "temperature_targets":
            converted[key] = tuple(float(x) for x in raw.replace(",", " ").split())
        elif key in ("mode", "up_fill"):
            converted[key] = raw
        elif key == "up_async":
            converted[key] = raw.lower() in ("1", "true", "yes", "on")
        elif key == "max_steps":
            converted[key] = None if raw.lower() in ("none", "") else int(raw)
        elif key in ("time_limit_seconds", "alpha", "freeze_fraction"):
            converted[key] = float(raw)
        else:
            converted[key] = int(raw)
    return replace(base, **converted)
