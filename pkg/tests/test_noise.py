import itertools

import numpy as np
import pytest

from qlmsim.backends.statevector import basis_vector, gate_matrix
from qlmsim.circuit import (GateOp, build_trotter_circuit, clifford_round, make_experiment,
                            twirl_circuit)
from qlmsim.model import ModelParams
from qlmsim.noise import PAULI_LABELS_2Q, NoiseModel, draw_pauli_fault

CZ = GateOp("CZ", (1, 2))
RX = GateOp("RX", (3,), 0.4)


def test_zero_rate_never_faults():
    rng = np.random.default_rng(0)
    noise = NoiseModel.noiseless()
    assert all(draw_pauli_fault(noise, CZ, rng) is None for _ in range(1000))
    assert noise.is_noiseless


def test_twirl_paulis_never_fault():
    rng = np.random.default_rng(0)
    noise = NoiseModel(1.0, 1.0, 0.0)
    assert draw_pauli_fault(noise, GateOp("X", (1,)), rng) is None


def test_fault_frequency_and_uniformity():
    p = 0.05
    noise = NoiseModel(p2q=p, p1q=0.0, p_ro=0.0)
    rng = np.random.default_rng(7)
    n = 10 ** 6
    hits = 0
    labels = {}
    for _ in range(n):
        f = draw_pauli_fault(noise, CZ, rng)
        if f is not None:
            hits += 1
            key = "".join(dict(f).get(q, "I") for q in (1, 2))
            labels[key] = labels.get(key, 0) + 1
    sigma = np.sqrt(n * p * (1 - p))
    assert abs(hits - n * p) < 5 * sigma
    assert set(labels) == set(PAULI_LABELS_2Q)
    expected = hits / 15
    for c in labels.values():
        assert abs(c - expected) < 5 * np.sqrt(expected)


def test_rate_validation_and_overrides():
    with pytest.raises(ValueError):
        NoiseModel(p2q=1.5)
    with pytest.raises(ValueError):
        NoiseModel(p_ro=-0.1)
    with pytest.raises(ValueError):
        NoiseModel(p1q_overrides={2: 2.0})
    n = NoiseModel(p2q_overrides={(2, 1): 0.2}, p_ro_overrides={3: 0.5})
    assert n.gate_rate(CZ) == 0.2
    assert n.gate_rate(GateOp("CZ", (2, 3))) == n.p2q
    assert list(n.readout_rates(3)) == [0.01, 0.01, 0.5]
    with pytest.raises(ValueError):
        n.validate_for(2)
    with pytest.raises(ValueError):
        NoiseModel(p2q_overrides={(1, 3): 0.1}).validate_for(4)
    with pytest.raises(ValueError):
        NoiseModel(weights_2q=[1.0] * 3)


def test_biased_weights():
    noise = NoiseModel(p2q=1.0, p1q=1.0, weights_1q=[0, 0, 1])
    rng = np.random.default_rng(1)
    draws = {draw_pauli_fault(noise, RX, rng) for _ in range(200)}
    assert draws == {((3, "Z"),)}


# -- end-to-end channel on a twirled circuit -------------------------------

_P1 = {"I": np.eye(2), "X": gate_matrix(GateOp("X", (1,))), "Y": gate_matrix(GateOp("Y", (1,))),
       "Z": gate_matrix(GateOp("Z", (1,)))}


def _apply(states, gate, n, mask=None):
    """Apply a gate to a batch of states (rows), optionally only where ``mask`` is set."""
    t = states.reshape((-1,) + (2,) * n)
    if gate.kind == "CZ":
        a, b = (n - q + 1 for q in gate.qubits)  # array axis of each site
        idx = [slice(None)] * (n + 1)
        idx[a], idx[b] = 1, 1
        sub = t[tuple(idx)]
        if mask is None:
            t[tuple(idx)] = -sub
        else:
            t[tuple(idx)] = np.where(mask.reshape((-1,) + (1,) * (n - 2)), -sub, sub)
        return t.reshape(states.shape)
    ax = n - gate.qubits[0] + 1
    m = gate_matrix(gate)
    new = np.moveaxis(np.tensordot(m, t, axes=([1], [ax])), 0, ax)
    if mask is not None:
        new = np.where(mask.reshape((-1,) + (1,) * n), new, t)
    return new.reshape(states.shape)


def _pauli_string(label):
    out = np.eye(1)
    for s in label[::-1]:
        out = np.kron(out, _P1[s])
    return out


def test_twirled_noise_is_pauli_channel():
    """Trajectory-averaged density matrix of a twirled Clifford circuit is a Pauli mixture.

    The 4^L conjugates ``P rho P`` of a pure state span all operators, so the
    fit itself is always exact.  A Pauli channel shows up as coefficients that
    form a probability vector.
    """
    L, T = 4, 100_000
    params = ModelParams(L, 2, m_initial=1.5, chi=0.0, dt=1.0)
    ex = make_experiment("vacuum_background", L)
    base = clifford_round(build_trotter_circuit(params, ex))
    noise = NoiseModel(p2q=0.02, p1q=0.002, p_ro=0.0)
    rng = np.random.default_rng(11)
    psi0 = basis_vector(ex.initial)
    states = np.tile(psi0, (T, 1))
    n_twirl = 50
    per = T // n_twirl
    for t in range(n_twirl):
        c = twirl_circuit(base, t)
        block = states[t * per:(t + 1) * per]
        for g in c.gates():
            block = _apply(block, g, L)
            p = noise.gate_rate(g)
            if p == 0:
                continue
            hit = rng.random(per) < p
            k = len(g.qubits)
            choice = rng.integers(0, 15 if k == 2 else 3, per)
            labels = PAULI_LABELS_2Q if k == 2 else ("X", "Y", "Z")
            for li, lab in enumerate(labels):
                mask = hit & (choice == li)
                if not mask.any():
                    continue
                for q, s in zip(g.qubits, lab):
                    if s != "I":
                        block = _apply(block, GateOp(s, (q,)), L, mask)
        states[t * per:(t + 1) * per] = block
    rho = states.T @ states.conj() / T
    ideal = base
    psi = psi0.copy()[None, :]
    for g in ideal.gates():
        psi = _apply(psi, g, L)
    rho0 = np.outer(psi[0], psi[0].conj())
    basis = []
    for lab in itertools.product("IXYZ", repeat=L):
        P = _pauli_string("".join(lab))
        basis.append((P @ rho0 @ P.conj().T).ravel())
    A = np.array(basis).T
    coef, *_ = np.linalg.lstsq(np.vstack([A.real, A.imag]),
                               np.concatenate([rho.ravel().real, rho.ravel().imag]), rcond=None)
    resid = np.linalg.norm(A @ coef - rho.ravel())
    assert resid <= 1e-3
    assert coef.min() >= -1e-9
    assert abs(coef.sum() - 1) < 1e-9
    # Paulis that fix the ideal state carry the fault-free weight (and possibly more)
    same = [i for i in range(A.shape[1]) if np.allclose(A[:, i], rho0.ravel(), atol=1e-12)]
    n_cz = base.cz_count
    n_rot = sum(g.kind in ("RX", "RZ") for g in base.gates())
    free = (1 - noise.p2q) ** n_cz * (1 - noise.p1q) ** n_rot
    assert coef[same].sum() >= free - 5 * np.sqrt(free * (1 - free) / T)
    assert abs(np.trace(rho) - 1) < 1e-12
