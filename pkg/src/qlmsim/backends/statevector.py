"""Dense statevector backend: exact reference and noisy trajectory sampler."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..circuit import Circuit, GateOp
from ..counts import BitstringDistribution
from ..model import BasisState
from ..noise import NoiseModel
from . import _kernels as K

__all__ = [
    "StateVector",
    "gate_matrix",
    "statevector_evolve",
    "expectation_z",
    "sample",
    "noisy_trajectory_sample",
    "noisy_trajectory_sample_steps",
    "DEFAULT_MAX_QUBITS",
]

DEFAULT_MAX_QUBITS = 26

_PAULI = {
    "X": np.array([[0, 1], [1, 0]], dtype=complex),
    "Y": np.array([[0, -1j], [1j, 0]], dtype=complex),
    "Z": np.array([[1, 0], [0, -1]], dtype=complex),
}


def gate_matrix(gate: GateOp) -> np.ndarray:
    """2x2 matrix of a single-qubit gate."""
    if gate.kind == "RX":
        c, s = np.cos(gate.angle / 2), np.sin(gate.angle / 2)
        return np.array([[c, -1j * s], [-1j * s, c]])
    if gate.kind == "RZ":
        return np.diag([np.exp(-0.5j * gate.angle), np.exp(0.5j * gate.angle)])
    if gate.kind in _PAULI:
        return _PAULI[gate.kind]
    raise ValueError(f"{gate.kind} is not a single-qubit gate")


@dataclass
class StateVector:
    """Amplitudes with site 1 as the lowest-order bit."""

    amplitudes: np.ndarray
    n_qubits: int

    def probabilities(self) -> np.ndarray:
        p = np.abs(self.amplitudes) ** 2
        return p / p.sum()

    def norm(self) -> float:
        return float(np.linalg.norm(self.amplitudes))


def basis_vector(initial: BasisState) -> np.ndarray:
    psi = np.zeros(1 << initial.L, dtype=complex)
    psi[initial.index()] = 1.0
    return psi


def _compile(circuit: Circuit, noise: NoiseModel = None):
    gates = list(circuit.gates())
    n = len(gates)
    kinds = np.zeros(n, dtype=np.int64)
    q1 = np.zeros(n, dtype=np.int64)
    q2 = np.zeros(n, dtype=np.int64)
    mats = np.zeros((n, 2, 2), dtype=complex)
    rates = np.zeros(n)
    for i, g in enumerate(gates):
        if g.kind == "CZ":
            kinds[i] = K.CZ
            q1[i], q2[i] = g.qubits[0] - 1, g.qubits[1] - 1
        else:
            kinds[i] = K.ONE_QUBIT
            q1[i] = g.qubits[0] - 1
            mats[i] = gate_matrix(g)
        if noise is not None:
            rates[i] = noise.gate_rate(g)
    return kinds, q1, q2, mats, rates


def _check_size(n: int, max_qubits: int):
    if n > max_qubits:
        raise ValueError(f"{n} qubits exceed the statevector limit of {max_qubits}")


def statevector_evolve(circuit: Circuit, initial: BasisState,
                       max_qubits: int = DEFAULT_MAX_QUBITS) -> StateVector:
    if initial.L != circuit.qubit_count:
        raise ValueError("initial state and circuit differ in qubit count")
    _check_size(initial.L, max_qubits)
    psi = basis_vector(initial)
    kinds, q1, q2, mats, _ = _compile(circuit)
    if len(kinds):
        K.run_circuit(psi, kinds, q1, q2, mats)
    return StateVector(psi, initial.L)


def expectation_z(state: StateVector, site: int) -> float:
    if not 1 <= site <= state.n_qubits:
        raise ValueError(f"site {site} outside [1, {state.n_qubits}]")
    p = np.abs(state.amplitudes) ** 2
    bit = (np.arange(p.size) >> (site - 1)) & 1
    return float(np.sum(p * (1 - 2 * bit)) / p.sum())


def all_expectation_z(state: StateVector) -> np.ndarray:
    p = np.abs(state.amplitudes) ** 2
    p = p / p.sum()
    pt = p.reshape((2,) * state.n_qubits)  # axis 0 is the highest site
    out = np.empty(state.n_qubits)
    for j in range(state.n_qubits):
        axis = state.n_qubits - 1 - j
        m = pt.sum(axis=tuple(a for a in range(state.n_qubits) if a != axis))
        out[j] = m[0] - m[1]
    return out


def sample(state: StateVector, shots: int, seed) -> BitstringDistribution:
    if shots < 1:
        raise ValueError("shots must be >= 1")
    rng = np.random.default_rng(seed)
    counts = rng.multinomial(shots, state.probabilities())
    nz = np.flatnonzero(counts)
    return BitstringDistribution(state.n_qubits, nz, counts=counts[nz])


def _trajectory_seeds(seed, n: int) -> np.ndarray:
    ss = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    return ss.generate_state(n, dtype=np.uint32).astype(np.int64)


def _step_gate_counts(circuit: Circuit, steps) -> np.ndarray:
    ends = [0]
    total = 0
    for layer_end in circuit.step_marks:
        total = sum(len(layer) for layer in circuit.layers[:layer_end])
        ends.append(total)
    return np.array([ends[s] for s in steps], dtype=np.int64)


def _run_noisy(circuit, noise, shots, seed, initial, shots_per_trajectory, max_qubits, emit):
    if shots < 1:
        raise ValueError("shots must be >= 1")
    if shots_per_trajectory < 1 or shots % shots_per_trajectory:
        raise ValueError("shots must be a positive multiple of shots_per_trajectory")
    if initial.L != circuit.qubit_count:
        raise ValueError("initial state and circuit differ in qubit count")
    _check_size(initial.L, max_qubits)
    noise.validate_for(initial.L)
    kinds, q1, q2, mats, rates = _compile(circuit, noise)
    cum1 = np.cumsum(noise.pauli_probs(1))
    cum2 = np.cumsum(noise.pauli_probs(2))
    seeds = _trajectory_seeds(seed, shots // shots_per_trajectory)
    return K.run_trajectories(basis_vector(initial), kinds, q1, q2, mats, rates, cum1, cum2,
                              noise.readout_rates(initial.L), seeds, shots_per_trajectory, emit)


def noisy_trajectory_sample(circuit: Circuit, noise: NoiseModel, shots: int, seed,
                            initial: BasisState, shots_per_trajectory: int = 1,
                            max_qubits: int = DEFAULT_MAX_QUBITS) -> BitstringDistribution:
    """Sample the circuit with stochastic Pauli faults and readout flips.

    Each trajectory draws its own faults; ``shots_per_trajectory > 1`` reuses a
    trajectory for several shots (cheaper, same mean, correlated shots).
    """
    emit = np.array([circuit.gate_count], dtype=np.int64)
    out = _run_noisy(circuit, noise, shots, seed, initial, shots_per_trajectory, max_qubits, emit)
    return BitstringDistribution.from_samples(initial.L, out[0])


def noisy_trajectory_sample_steps(circuit: Circuit, noise: NoiseModel, shots: int, seed,
                                  initial: BasisState, steps, shots_per_trajectory: int = 1,
                                  max_qubits: int = DEFAULT_MAX_QUBITS) -> list:
    """Like ``noisy_trajectory_sample`` for every prefix ``circuit.prefix(s)``, ``s in steps``.

    Each trajectory is measured at the end of every requested step, so the
    per-step distributions are exact samples of the prefix circuits but shots
    at different steps share fault histories.
    """
    steps = sorted(int(s) for s in steps)
    if any(not 0 <= s <= circuit.n_steps for s in steps):
        raise ValueError(f"steps must lie in [0, {circuit.n_steps}]")
    emit = _step_gate_counts(circuit, steps)
    out = _run_noisy(circuit, noise, shots, seed, initial, shots_per_trajectory, max_qubits, emit)
    return [BitstringDistribution.from_samples(initial.L, row) for row in out]
