"""Command-line entry points: solve one instance, train a gate bank, or
benchmark a directory of instances.

Exit codes: 0 ran to the deadline, 10 found a fully satisfying assignment,
20+ for errors (20 parse, 21 bank, 22 configuration, 23 internal).
"""

from __future__ import annotations

import argparse
import os
import sys

from . import orgate, solver
from .cnf import DimacsError, parse_dimacs_file
from .orgate import GateTrainingError, build_weight_bank, load_bank, save_bank

EXIT_OK = 0
EXIT_FULLY_SATISFIED = 10
EXIT_PARSE_ERROR = 20
EXIT_BANK_ERROR = 21
EXIT_CONFIG_ERROR = 22
EXIT_INTERNAL_ERROR = 23


def _add_solver_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--bank", help="path to a trained weight-bank file")
    p.add_argument("--config", help="flat key-value config file")
    p.add_argument("--time-limit", type=float, help="wall-clock budget in seconds")
    p.add_argument("--chains", type=int, help="Markov chains per temperature")
    p.add_argument(
        "--temps",
        help="comma-separated free-energy targets, or 'bank-default' for all "
        "targets in the bank",
    )
    p.add_argument("--upp", type=int, help="unit-propagation interval in Gibbs steps")
    p.add_argument("--upw", type=int, help="steps to wait before merging UP results")
    p.add_argument("--alpha", type=float, help="variance moving-average rate")
    p.add_argument("--seed", type=int, help="root random seed")
    p.add_argument("--mode", choices=solver.MODES, help="search pipeline variant")
    p.add_argument("--workers", help="worker threads, or 'auto'")
    p.add_argument("--rounds", type=int, help="Gibbs steps per dispatch")
    p.add_argument("--max-steps", type=int, help="optional step budget")
    p.add_argument("--target-cost", type=int, help="stop at this many unsatisfied")
    p.add_argument("--up-fill", choices=("original", "random"))
    p.add_argument("--up-async", action="store_true", default=None)
    p.add_argument("--freeze-fraction", type=float)


_FLAG_TO_FIELD = {
    "time_limit": "time_limit_seconds",
    "chains": "chains_per_temperature",
    "upp": "up_interval_steps",
    "upw": "up_wait_steps",
    "alpha": "alpha",
    "seed": "seed",
    "mode": "mode",
    "rounds": "rounds_per_dispatch",
    "max_steps": "max_steps",
    "target_cost": "target_cost",
    "up_fill": "up_fill",
    "freeze_fraction": "freeze_fraction",
}


def _build_config(args: argparse.Namespace, bank) -> solver.SolverConfig:
    config = solver.SolverConfig()
    if args.config:
        config = solver.config_from_mapping(solver.load_config_file(args.config), config)
    overrides: dict[str, str] = {}
    for flag, field_name in _FLAG_TO_FIELD.items():
        value = getattr(args, flag, None)
        if value is not None:
            overrides[field_name] = str(value)
    if args.up_async:
        overrides["up_async"] = "true"
    if args.temps is not None:
        if args.temps == "bank-default":
            if bank is None:
                raise ValueError("--temps bank-default requires --bank")
            overrides["temperature_targets"] = ",".join(str(t) for t in bank.targets)
        else:
            overrides["temperature_targets"] = args.temps
    if args.workers is not None:
        workers = os.cpu_count() or 1 if args.workers == "auto" else int(args.workers)
        overrides["worker_count"] = str(max(1, workers))
    return solver.config_from_mapping(overrides, config)


def _load_bank_if_needed(args: argparse.Namespace, mode_hint: str | None):
    if args.bank is None:
        return None
    return load_bank(args.bank)


def _cmd_solve(args: argparse.Namespace) -> int:
    try:
        bank = _load_bank_if_needed(args, args.mode)
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_BANK_ERROR
    try:
        config = _build_config(args, bank)
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG_ERROR
    try:
        formula = parse_dimacs_file(args.instance)
    except (OSError, DimacsError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PARSE_ERROR
    if config.mode in ("full", "no_up") and bank is None:
        print("error: --bank is required for modes full/no_up", file=sys.stderr)
        return EXIT_BANK_ERROR
    try:
        result = solver.solve(formula, bank, config)
    except solver.SolverError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_BANK_ERROR
    except Exception as exc:  # noqa: BLE001
        print(f"internal error: {exc}", file=sys.stderr)
        return EXIT_INTERNAL_ERROR
    solver.emit_solution(result, sys.stdout)
    if args.trace:
        solver.write_trace(result, args.trace)
    return EXIT_FULLY_SATISFIED if result.unsatisfied_cost == 0 else EXIT_OK


def _parse_sizes(spec: str) -> list[int]:
    if "-" in spec and "," not in spec:
        lo, hi = spec.split("-", 1)
        return list(range(int(lo), int(hi) + 1))
    return [int(x) for x in spec.replace(",", " ").split()]


def _cmd_train_bank(args: argparse.Namespace) -> int:
    targets = [float(x) for x in args.targets.replace(",", " ").split()]
    sizes = _parse_sizes(args.clause_sizes)
    try:
        bank = build_weight_bank(targets, sizes, args.seed, tolerance=args.tolerance)
    except (GateTrainingError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INTERNAL_ERROR
    save_bank(bank, args.out)
    print(f"trained {len(bank.gates)} gates -> {args.out}")
    return EXIT_OK


def _expand_instances(paths: list[str]) -> list[str]:
    out: list[str] = []
    for path in paths:
        if os.path.isdir(path):
            out.extend(
                os.path.join(path, name)
                for name in sorted(os.listdir(path))
                if name.endswith((".cnf", ".wcnf"))
            )
        else:
            out.append(path)
    return out


def _cmd_bench(args: argparse.Namespace) -> int:
    try:
        bank = _load_bank_if_needed(args, None)
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_BANK_ERROR
    try:
        config = _build_config(args, bank)
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG_ERROR
    modes = [m.strip() for m in args.modes.split(",") if m.strip()]
    for mode in modes:
        if mode not in solver.MODES:
            print(f"error: unknown mode {mode!r}", file=sys.stderr)
            return EXIT_CONFIG_ERROR
    if any(m in ("full", "no_up") for m in modes) and bank is None:
        print("error: --bank is required for modes full/no_up", file=sys.stderr)
        return EXIT_BANK_ERROR
    best_known = solver.load_best_known(args.best_known) if args.best_known else {}
    instances = _expand_instances(args.instances)
    report = solver.run_ablation_grid(instances, bank, config, modes, best_known)

    names = sorted({n for scores in report.scores.values() for n in scores})
    header = ["instance"] + modes
    print("  ".join(f"{h:>20}" for h in header))
    for name in names:
        row = [name] + [
            f"{report.scores[m].get(name, float('nan')):.4f}" for m in modes
        ]
        print("  ".join(f"{c:>20}" for c in row))
    print("  ".join(f"{c:>20}" for c in ["average"] + [f"{report.averages[m]:.4f}" for m in modes]))
    for name, msg in report.failures.items():
        print(f"failed: {name}: {msg}", file=sys.stderr)
    if args.save_best_known:
        solver.save_best_known(report.best_known, args.save_best_known)
    return EXIT_OK if report.scores and any(report.scores[m] for m in modes) else EXIT_PARSE_ERROR


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="rbmsat",
        description="Incomplete MaxSAT search with clause-RBM Gibbs sampling",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_solve = sub.add_parser("solve", help="solve one DIMACS instance")
    p_solve.add_argument("instance")
    _add_solver_flags(p_solve)
    p_solve.add_argument("--trace", help="write improvement records to this path")
    p_solve.set_defaults(func=_cmd_solve)

    p_train = sub.add_parser("train-bank", help="train and save an OR-gate bank")
    p_train.add_argument(
        "--targets",
        default=",".join(str(t) for t in orgate.ENSEMBLE_TARGETS_16),
        help="comma-separated free-energy depression magnitudes",
    )
    p_train.add_argument("--clause-sizes", default="3-7", help="e.g. 3-7 or 3,4,5")
    p_train.add_argument("--seed", type=int, default=0)
    p_train.add_argument("--out", required=True)
    p_train.add_argument("--tolerance", type=float, default=orgate.DEFAULT_TOLERANCE)
    p_train.set_defaults(func=_cmd_train_bank)

    p_bench = sub.add_parser("bench", help="score instances under one or more modes")
    p_bench.add_argument("instances", nargs="+", help="instance files or directories")
    _add_solver_flags(p_bench)
    p_bench.add_argument("--best-known", help="table of best-known costs")
    p_bench.add_argument("--save-best-known", help="write the updated table here")
    p_bench.add_argument(
        "--modes", default="full", help="comma-separated subset of " + ",".join(solver.MODES)
    )
    p_bench.set_defaults(func=_cmd_bench)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
