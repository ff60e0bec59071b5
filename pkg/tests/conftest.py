import numpy as np
import pytest

from qlmsim.backends.statevector import gate_matrix


def dense_unitary(gates, n):
    """Full 2^n matrix of a gate list (site 1 = lowest bit), built column by column."""
    dim = 1 << n
    U = np.eye(dim, dtype=complex)
    for g in gates:
        m = np.diag([1, 1, 1, -1]).astype(complex) if g.kind == "CZ" else gate_matrix(g)
        qs = [q - 1 for q in g.qubits]
        k = len(qs)
        full = np.zeros((dim, dim), dtype=complex)
        for col in range(dim):
            sub = sum(((col >> q) & 1) << i for i, q in enumerate(qs))
            rest = col & ~sum(1 << q for q in qs)
            for out in range(1 << k):
                amp = m[out, sub]
                if amp == 0:
                    continue
                row = rest | sum(((out >> i) & 1) << q for i, q in enumerate(qs))
                full[row, col] += amp
        U = full @ U
    return U


def equal_up_to_phase(A, B, atol=1e-12):
    k = np.unravel_index(np.argmax(np.abs(B)), B.shape)
    phase = A[k] / B[k]
    return abs(abs(phase) - 1) < atol and np.allclose(A, phase * B, atol=atol, rtol=0)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def random_clifford_circuit(L, n_layers, rng):
    """Alternating random quarter-turn rotation layers and random CZ layers."""
    from qlmsim.circuit import Circuit, GateOp
    layers = []
    for k in range(n_layers):
        if k % 2 == 0:
            layer = []
            for q in range(1, L + 1):
                kind = rng.choice(["RX", "RZ", "X", "Y", "Z", None])
                if kind in ("RX", "RZ"):
                    layer.append(GateOp(kind, (q,), float(rng.integers(-3, 4)) * np.pi / 2))
                elif kind is not None:
                    layer.append(GateOp(kind, (q,)))
        else:
            start = int(rng.integers(1, 3))
            layer = [GateOp("CZ", (q, q + 1)) for q in range(start, L, 2) if rng.random() < 0.7]
        if layer:
            layers.append(tuple(layer))
    return Circuit(L, tuple(layers))


def pytest_terminal_summary(terminalreporter):
    verdicts = getattr(__import__("sys").modules.get("test_acceptance"), "VERDICTS", None)
    if verdicts:
        terminalreporter.section("acceptance criteria")
        for n in sorted(verdicts):
            terminalreporter.write_line(verdicts[n])
