import time

import numpy as np
import pytest

from qlmsim.backends.stabilizer import (StabilizerTableau, pauli_frame_sample,
                                        pauli_frame_sample_steps, tableau_distribution,
                                        tableau_evolve, tableau_marginal, tableau_sample)
from qlmsim.backends.statevector import noisy_trajectory_sample, statevector_evolve
from qlmsim.circuit import (Circuit, GateOp, build_trotter_circuit, clifford_round,
                            make_experiment, twirl_circuit)
from qlmsim.counts import BitstringDistribution
from qlmsim.model import BasisState, ModelParams
from qlmsim.noise import NoiseModel

from conftest import random_clifford_circuit


def test_basis_state_stabilizers():
    tab = tableau_evolve(Circuit(4), BasisState.from_string("0101"))
    assert tab.stabilizers() == ["+ZIII", "-IZII", "+IIZI", "-IIIZ"]


def test_rejects_non_clifford():
    with pytest.raises(ValueError):
        tableau_evolve(Circuit(2, ((GateOp("RX", (1,), 0.3),),)), BasisState((0, 0)))


@pytest.mark.parametrize("seed", range(20))
def test_distribution_matches_statevector(seed):
    rng = np.random.default_rng(seed)
    L = int(rng.integers(2, 13))
    circ = random_clifford_circuit(L, 14, rng)
    init = BasisState(tuple(int(b) for b in rng.integers(0, 2, L)))
    exact = statevector_evolve(circ, init).probabilities()
    stab = tableau_distribution(tableau_evolve(circ, init))
    assert 0.5 * np.abs(exact - stab).sum() <= 1e-10


def test_product_window_is_point_mass():
    tab = tableau_evolve(Circuit(5), BasisState.from_string("01010"))
    m = tableau_marginal(tab, [2, 3])
    assert m.tolist() == [0.0, 1.0, 0.0, 0.0]  # site 2 = 1 is window bit 0


def ghz(n):
    # H = RZ(pi/2) RX(pi/2) RZ(pi/2) up to phase; H CZ H on the target is a CNOT
    h = lambda q: [(GateOp("RZ", (q,), np.pi / 2),), (GateOp("RX", (q,), np.pi / 2),),
                   (GateOp("RZ", (q,), np.pi / 2),)]
    layers = h(1)
    for q in range(2, n + 1):
        layers += h(q) + [(GateOp("CZ", (q - 1, q)),)] + h(q)
    return Circuit(n, tuple(layers))


def test_ghz_single_qubit_marginal():
    tab = tableau_evolve(ghz(5), BasisState((0,) * 5))
    full = tableau_distribution(tab)
    assert full[0] == pytest.approx(0.5) and full[31] == pytest.approx(0.5)
    for q in range(1, 6):
        assert tableau_marginal(tab, [q]).tolist() == [0.5, 0.5]


@pytest.mark.parametrize("seed", range(5))
def test_marginals_match_statevector_and_are_dyadic(seed):
    rng = np.random.default_rng(100 + seed)
    L = 10
    circ = random_clifford_circuit(L, 20, rng)
    init = BasisState((0,) * L)
    tab = tableau_evolve(circ, init)
    probs = statevector_evolve(circ, init).probabilities()
    dist = BitstringDistribution.from_probabilities(probs)
    for _ in range(5):
        w = sorted(rng.choice(np.arange(1, L + 1), size=int(rng.integers(1, 6)), replace=False))
        got = tableau_marginal(tab, w)
        assert np.max(np.abs(got - dist.marginal(w))) <= 1e-12
        nz = got[got > 0]
        k = -np.log2(nz)
        assert np.allclose(k, np.round(k), atol=1e-12)


def test_window_cap():
    tab = StabilizerTableau.from_basis_state(BasisState((0,) * 20))
    with pytest.raises(ValueError):
        tableau_marginal(tab, range(1, 21))
    with pytest.raises(ValueError):
        tableau_marginal(tab, [1, 1])


def test_sampling():
    tab = tableau_evolve(Circuit(4), BasisState.from_string("0110"))
    assert tableau_sample(tab, 50, seed=1).to_dict() == {"0110": 50}
    rng = np.random.default_rng(8)
    circ = random_clifford_circuit(8, 16, rng)
    tab = tableau_evolve(circ, BasisState((0,) * 8))
    shots = 40000
    d = tableau_sample(tab, shots, seed=3)
    assert d == tableau_sample(tab, shots, seed=3)
    for q in range(1, 9):
        p = tableau_marginal(tab, [q])[1]
        got = d.marginal([q])[1]
        assert abs(got - p) <= 5 * np.sqrt(p * (1 - p) / shots) + 1e-12
    with pytest.raises(ValueError):
        tableau_sample(tab, 0, seed=1)


def test_rounded_trotter_circuit_evolves():
    ex = make_experiment("ep_scatter", 12)
    circ = clifford_round(build_trotter_circuit(ModelParams(12, 10, wall_steps=9), ex))
    tab = tableau_evolve(circ, ex.initial)
    exact = statevector_evolve(circ, ex.initial).probabilities()
    assert np.abs(tableau_distribution(tab) - exact).max() < 1e-12


def test_polynomial_scaling():
    def cost(L):
        circ = random_clifford_circuit(L, 40, np.random.default_rng(L))
        init = BasisState((0,) * L)
        best = np.inf
        for _ in range(3):
            t0 = time.perf_counter()
            tableau_evolve(circ, init)
            best = min(best, time.perf_counter() - t0)
        return best
    assert cost(200) < 4 * cost(100)


def test_pauli_frame_matches_trajectories():
    ex = make_experiment("ep_scatter", 9)
    circ = clifford_round(twirl_circuit(build_trotter_circuit(ModelParams(9, 3), ex), 4))
    noise = NoiseModel(p2q=0.03, p1q=0.01, p_ro=0.05)
    shots = 30000
    frame = pauli_frame_sample(circ, noise, shots, seed=1, initial=ex.initial)
    traj = noisy_trajectory_sample(circ, noise, shots, seed=2, initial=ex.initial)
    zf, zt = frame.expectation_z(), traj.expectation_z()
    assert np.all(np.abs(zf - zt) < 5 * np.sqrt(2 / shots))
    for w in ([3, 4, 5], [1, 2], [8, 9]):
        assert 0.5 * np.abs(frame.marginal(w) - traj.marginal(w)).sum() < 0.02


def test_pauli_frame_noiseless_and_steps():
    ex = make_experiment("ep_scatter", 9)
    circ = clifford_round(build_trotter_circuit(ModelParams(9, 4), ex))
    d = pauli_frame_sample(circ, NoiseModel.noiseless(), 100, seed=0, initial=ex.initial)
    ideal = tableau_distribution(tableau_evolve(circ, ex.initial))
    assert all(ideal[o] > 0 for o in d.outcomes.astype(int))
    per = pauli_frame_sample_steps(circ, NoiseModel(), 2000, seed=5, initial=ex.initial,
                                   steps=[1, 4])
    assert [x.shots for x in per] == [2000, 2000]
    assert per[1] == pauli_frame_sample_steps(circ, NoiseModel(), 2000, seed=5,
                                              initial=ex.initial, steps=[1, 4])[1]
