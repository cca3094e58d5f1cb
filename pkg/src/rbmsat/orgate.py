"""Canonical OR-gate RBMs fitted by free-energy regression.

A gate for clause size K is an RBM over K visible bits whose free energy is
driven to 0 on the all-zero (unsatisfying) input and to a negative target on
every other input, making satisfying inputs uniformly more probable.  The
target magnitude acts as an inverse temperature.  Gates are trained once per
(clause size, target) pair and reused across formulas via a weight bank.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import rng

MIN_CLAUSE_SIZE = 3
MAX_CLAUSE_SIZE = 7
DEFAULT_TOLERANCE = 1e-2
BANK_FORMAT_VERSION = "1"

# Free-energy depression magnitudes used for the temperature ensembles.
ENSEMBLE_TARGETS_16 = (
    0.068, 0.098, 0.128, 0.158, 0.188, 0.218, 0.248, 0.278,
    0.308, 0.338, 0.368, 0.398, 0.428, 0.458, 0.488, 0.518,
)
ENSEMBLE_TARGETS_8 = (0.068, 0.128, 0.188, 0.248, 0.308, 0.368, 0.428, 0.488)
ENSEMBLE_TARGETS_2 = (0.068, 0.528)


class GateTrainingError(RuntimeError):
    """Raised when regression cannot reach the required tolerance."""

    def __init__(self, clause_size: int, target: float, residual: float):
        self.clause_size = clause_size
        self.target = target
        self.residual = residual
        super().__init__(
            f"OR gate K={clause_size} target={target}: residual {residual:.3e} "
            "above tolerance"
        )


def hidden_units_for(clause_size: int) -> int:
    """3 hidden units for clause size 3, K+1 for sizes 4 through 7."""
    if not MIN_CLAUSE_SIZE <= clause_size <= MAX_CLAUSE_SIZE:
        raise ValueError(f"clause size must be in [3, 7], got {clause_size}")
    return 3 if clause_size == 3 else clause_size + 1


def enumerate_inputs(clause_size: int) -> np.ndarray:
    """All 2^K visible configurations, row i holding the bits of i (LSB first)."""
    codes = np.arange(1 << clause_size)
    return ((codes[:, None] >> np.arange(clause_size)[None, :]) & 1).astype(np.float64)


@dataclass(frozen=True)
class OrGateRbm:
    clause_size: int
    num_hidden: int
    weights: np.ndarray  # (K, L), visible-to-hidden
    hidden_bias: np.ndarray  # (L,)
    target: float  # magnitude of the satisfying free-energy depression
    seed: int = 0

    def __post_init__(self) -> None:
        if self.weights.shape != (self.clause_size, self.num_hidden):
            raise ValueError("weight matrix shape mismatch")
        if self.hidden_bias.shape != (self.num_hidden,):
            raise ValueError("hidden bias shape mismatch")
        if not (np.isfinite(self.weights).all() and np.isfinite(self.hidden_bias).all()):
            raise ValueError("non-finite gate parameters")

    @property
    def satisfying_free_energy(self) -> float:
        """The regression target for satisfying inputs (negative)."""
        return -self.target


def free_energy(gate: OrGateRbm, inputs: np.ndarray) -> np.ndarray:
    """Free energies of visible configurations; no visible biases.

    F(v) = -sum_j softplus(b_j + (W^T v)_j), evaluated in the dtype of
    `inputs` (float64 inputs give float64 energies).
    """
    inputs = np.atleast_2d(np.asarray(inputs))
    dtype = inputs.dtype if inputs.dtype.kind == "f" else np.float64
    w = gate.weights.astype(dtype, copy=False)
    b = gate.hidden_bias.astype(dtype, copy=False)
    z = inputs.astype(dtype) @ w + b
    return -np.logaddexp(0.0, z).sum(axis=1)


def gate_residuals(gate: OrGateRbm) -> tuple[float, float]:
    """(|F(0)|, max |F(v != 0) - F_s|) over the enumerated inputs."""
    inputs = enumerate_inputs(gate.clause_size)
    f = free_energy(gate, inputs)
    return float(abs(f[0])), float(np.max(np.abs(f[1:] + gate.target)))


def regression_loss_and_grad(
    weights: np.ndarray,
    hidden_bias: np.ndarray,
    inputs: np.ndarray,
    targets: np.ndarray,
) -> tuple[float, np.ndarray, np.ndarray, np.ndarray]:
    """Squared free-energy regression loss, its gradients, and residuals."""
    z = inputs @ weights + hidden_bias
    sig = 1.0 / (1.0 + np.exp(-np.abs(z)))
    sig = np.where(z >= 0, sig, 1.0 - sig)
    f = -np.logaddexp(0.0, z).sum(axis=1)
    residuals = f - targets
    loss = float(residuals @ residuals)
    dz = (-2.0 * residuals)[:, None] * sig
    return loss, inputs.T @ dz, dz.sum(axis=0), residuals


def train_or_gate(
    clause_size: int,
    target: float,
    seed: int,
    tolerance: float = DEFAULT_TOLERANCE,
    max_steps: int = 50_000,
    learning_rate: float = 1e-3,
) -> OrGateRbm:
    """Fit one canonical OR gate by full-batch Adam over all 2^K inputs.

    Stops early once the worst residual falls below tolerance/2; raises
    GateTrainingError if even `tolerance` is out of reach within the step
    budget.  Pure function of (clause_size, target, seed).
    """
    if target <= 0:
        raise ValueError("target must be a positive depression magnitude")
    num_hidden = hidden_units_for(clause_size)
    inputs = enumerate_inputs(clause_size)
    targets = np.full(len(inputs), -float(target))
    targets[0] = 0.0

    gen = np.random.default_rng(seed)
    weights = gen.normal(0.0, 0.1, size=(clause_size, num_hidden))
    bias = gen.normal(0.0, 0.1, size=num_hidden)

    beta1, beta2, eps = 0.9, 0.999, 1e-8
    m_w = np.zeros_like(weights)
    v_w = np.zeros_like(weights)
    m_b = np.zeros_like(bias)
    v_b = np.zeros_like(bias)
    stop_at = tolerance / 2.0

    worst = math.inf
    for step in range(1, max_steps + 1):
        _, grad_w, grad_b, residuals = regression_loss_and_grad(
            weights, bias, inputs, targets
        )
        worst = float(np.max(np.abs(residuals)))
        if worst <= stop_at:
            break
        m_w = beta1 * m_w + (1 - beta1) * grad_w
        v_w = beta2 * v_w + (1 - beta2) * grad_w**2
        m_b = beta1 * m_b + (1 - beta1) * grad_b
        v_b = beta2 * v_b + (1 - beta2) * grad_b**2
        scale = learning_rate * math.sqrt(1 - beta2**step) / (1 - beta1**step)
        weights -= scale * m_w / (np.sqrt(v_w) + eps)
        bias -= scale * m_b / (np.sqrt(v_b) + eps)

    gate = OrGateRbm(
        clause_size,
        num_hidden,
        weights.astype(np.float32),
        bias.astype(np.float32),
        float(target),
        seed,
    )
    err0, err_sat = gate_residuals(gate)
    if max(err0, err_sat) > tolerance:
        raise GateTrainingError(clause_size, target, max(err0, err_sat))
    return gate


@dataclass
class WeightBank:
    """Trained gates keyed by (clause size, target magnitude)."""

    gates: dict[tuple[int, float], OrGateRbm]
    version: str = BANK_FORMAT_VERSION

    @staticmethod
    def key(clause_size: int, target: float) -> tuple[int, float]:
        return clause_size, round(float(target), 9)

    def get(self, clause_size: int, target: float) -> OrGateRbm:
        try:
            return self.gates[self.key(clause_size, target)]
        except KeyError:
            raise KeyError(
                f"weight bank has no gate for K={clause_size}, target={target}"
            ) from None

    def add(self, gate: OrGateRbm) -> None:
        self.gates[self.key(gate.clause_size, gate.target)] = gate

    @property
    def clause_sizes(self) -> tuple[int, ...]:
        return tuple(sorted({k for k, _ in self.gates}))

    @property
    def targets(self) -> tuple[float, ...]:
        return tuple(sorted({t for _, t in self.gates}))


def build_weight_bank(
    targets: list[float] | tuple[float, ...],
    clause_sizes: list[int] | tuple[int, ...],
    seed: int,
    tolerance: float = DEFAULT_TOLERANCE,
    retries: int = 3,
) -> WeightBank:
    """Train one gate per (clause size, target); deterministic given seed.

    A gate whose seed fails to reach tolerance is retried on derived seeds
    (still deterministic); the last failure propagates, labelled by the
    offending (clause size, target) pair.
    """
    if not targets:
        raise ValueError("at least one free-energy target is required")
    if not clause_sizes:
        raise ValueError("at least one clause size is required")
    bank = WeightBank({})
    for k in clause_sizes:
        for i, target in enumerate(targets):
            for attempt in range(retries + 1):
                gate_seed = rng.fold(seed, k, i, attempt)
                try:
                    bank.add(train_or_gate(k, target, gate_seed, tolerance=tolerance))
                    break
                except GateTrainingError:
                    if attempt == retries:
                        raise
    return bank


def save_bank(bank: WeightBank, path: str) -> None:
    """Flat-text bank format: a header line, then one block per gate."""
    lines = [f"or-gate-bank {bank.version}", f"gates {len(bank.gates)}"]
    for (k, target), gate in sorted(bank.gates.items()):
        lines.append(f"gate {k} {gate.num_hidden} {target!r} {gate.seed}")
        for row in gate.weights:
            lines.append("w " + " ".join(repr(float(x)) for x in row))
        lines.append("b " + " ".join(repr(float(x)) for x in gate.hidden_bias))
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def load_bank(path: str) -> WeightBank:
    with open(path) as fh:
        lines = [ln.strip() for ln in fh if ln.strip()]
    if not lines or not lines[0].startswith("or-gate-bank "):
        raise ValueError(f"{path}: not a weight bank file")
    version = lines[0].split()[1]
    if version != BANK_FORMAT_VERSION:
        raise ValueError(
            f"{path}: bank format version {version} unsupported "
            f"(expected {BANK_FORMAT_VERSION})"
        )
    declared = int(lines[1].split()[1])
    bank = WeightBank({}, version=version)
    pos = 2
    for _ in range(declared):
        head = lines[pos].split()
        if head[0] != "gate":
            raise ValueError(f"{path}: expected gate block at line {pos + 1}")
        k, num_hidden = int(head[1]), int(head[2])
        target, seed = float(head[3]), int(head[4])
        rows = []
        for r in range(k):
            tok = lines[pos + 1 + r].split()
            if tok[0] != "w":
                raise ValueError(f"{path}: malformed weight row")
            rows.append([float(x) for x in tok[1:]])
        btok = lines[pos + 1 + k].split()
        if btok[0] != "b":
            raise ValueError(f"{path}: malformed bias row")
        weights = np.array(rows, dtype=np.float32)
        bias = np.array([float(x) for x in btok[1:]], dtype=np.float32)
        bank.add(OrGateRbm(k, num_hidden, weights, bias, target, seed))
        pos += 2 + k
    if len(bank.gates) != declared:
        raise ValueError(f"{path}: duplicate gate blocks")
    return bank
