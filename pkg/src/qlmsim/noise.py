"""Synthetic Pauli noise model shared by the noisy backends."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Optional, Sequence

import numpy as np

from .circuit import ROTATIONS, GateOp

__all__ = ["NoiseModel", "draw_pauli_fault", "PAULI_LABELS_1Q", "PAULI_LABELS_2Q"]

PAULI_LABELS_1Q = ("X", "Y", "Z")
#: Non-identity two-qubit Paulis, first letter on the lower qubit.
PAULI_LABELS_2Q = tuple(a + b for a in "IXYZ" for b in "IXYZ")[1:]


def _check_rate(name, p):
    if not 0.0 <= float(p) <= 1.0:
        raise ValueError(f"{name} must lie in [0, 1], got {p}")


@dataclass(frozen=True)
class NoiseModel:
    """Depolarizing gate faults plus symmetric readout flips.

    Overrides map a qubit (or a sorted qubit pair for CZ) to its own rate.
    ``weights_1q`` / ``weights_2q`` bias the fault distribution over the 3 / 15
    non-identity Paulis; ``None`` means uniform.  Twirl Paulis (X, Y, Z gates)
    are treated as merged into neighbouring pulses and never fault.
    """

    p2q: float = 0.005
    p1q: float = 0.0002
    p_ro: float = 0.01
    p2q_overrides: Mapping = field(default_factory=dict)
    p1q_overrides: Mapping = field(default_factory=dict)
    p_ro_overrides: Mapping = field(default_factory=dict)
    weights_1q: Optional[Sequence[float]] = None
    weights_2q: Optional[Sequence[float]] = None

    def __post_init__(self):
        _check_rate("p2q", self.p2q)
        _check_rate("p1q", self.p1q)
        _check_rate("p_ro", self.p_ro)
        pairs = {tuple(sorted(int(q) for q in k)): float(v) for k, v in dict(self.p2q_overrides).items()}
        object.__setattr__(self, "p2q_overrides", pairs)
        object.__setattr__(self, "p1q_overrides", {int(k): float(v) for k, v in dict(self.p1q_overrides).items()})
        object.__setattr__(self, "p_ro_overrides", {int(k): float(v) for k, v in dict(self.p_ro_overrides).items()})
        for table in (self.p2q_overrides, self.p1q_overrides, self.p_ro_overrides):
            for key, v in table.items():
                _check_rate(f"override {key}", v)
        for name, w, n in (("weights_1q", self.weights_1q, 3), ("weights_2q", self.weights_2q, 15)):
            if w is not None:
                w = np.asarray(w, dtype=float)
                if w.shape != (n,) or np.any(w < 0) or w.sum() <= 0:
                    raise ValueError(f"{name} needs {n} non-negative weights")

    @classmethod
    def noiseless(cls) -> "NoiseModel":
        return cls(0.0, 0.0, 0.0)

    def validate_for(self, n_qubits: int) -> None:
        for q in list(self.p1q_overrides) + list(self.p_ro_overrides):
            if not 1 <= q <= n_qubits:
                raise ValueError(f"override references qubit {q} outside [1, {n_qubits}]")
        for a, b in self.p2q_overrides:
            if b - a != 1 or a < 1 or b > n_qubits:
                raise ValueError(f"override references invalid link ({a}, {b})")

    def gate_rate(self, gate: GateOp) -> float:
        if gate.kind == "CZ":
            return self.p2q_overrides.get(tuple(sorted(gate.qubits)), self.p2q)
        if gate.kind in ROTATIONS:
            return self.p1q_overrides.get(gate.qubits[0], self.p1q)
        return 0.0

    def readout_rates(self, n_qubits: int) -> np.ndarray:
        return np.array([self.p_ro_overrides.get(q, self.p_ro) for q in range(1, n_qubits + 1)])

    def pauli_probs(self, n_qubits_gate: int) -> np.ndarray:
        w = self.weights_2q if n_qubits_gate == 2 else self.weights_1q
        n = 15 if n_qubits_gate == 2 else 3
        w = np.ones(n) if w is None else np.asarray(w, dtype=float)
        return w / w.sum()

    @property
    def is_noiseless(self) -> bool:
        return (self.p2q == self.p1q == self.p_ro == 0.0 and not any(self.p2q_overrides.values())
                and not any(self.p1q_overrides.values()) and not any(self.p_ro_overrides.values()))


def draw_pauli_fault(noise: NoiseModel, gate: GateOp, rng: np.random.Generator):
    """Random fault after ``gate``: ``None`` or a tuple of ``(qubit, pauli)`` pairs."""
    p = noise.gate_rate(gate)
    if p <= 0.0 or rng.random() >= p:
        return None
    k = len(gate.qubits)
    labels = PAULI_LABELS_2Q if k == 2 else PAULI_LABELS_1Q
    label = labels[rng.choice(len(labels), p=noise.pauli_probs(k))]
    return tuple((q, s) for q, s in zip(gate.qubits, label) if s != "I")
