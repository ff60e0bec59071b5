"""Stabilizer-tableau simulator for Clifford circuits (CHP-style).

The tableau holds ``n`` destabilizer rows followed by ``n`` stabilizer rows;
row ``i`` is the Pauli ``(-1)^r[i] prod_j X_j^x[i,j] Z_j^z[i,j]`` with the usual
``Y = iXZ`` bookkeeping of the rowsum rule.  Gate updates act on whole columns
at once, so a gate costs O(n).

Z-basis outcomes of a stabilizer state are uniform over an affine subspace.
Marginals and samples are read off that subspace directly rather than by
simulating measurements one qubit at a time.
"""

from __future__ import annotations

import numpy as np

from ..circuit import HALF_PI, Circuit, GateOp, is_clifford
from ..counts import BitstringDistribution
from ..model import BasisState
from ..noise import NoiseModel

__all__ = [
    "StabilizerTableau",
    "tableau_evolve",
    "tableau_marginal",
    "tableau_distribution",
    "tableau_sample",
    "pauli_frame_sample",
    "pauli_frame_sample_steps",
    "DEFAULT_WINDOW_CAP",
]

DEFAULT_WINDOW_CAP = 19


def _quarter_turns(gate: GateOp) -> int:
    return int(round(gate.angle / HALF_PI)) % 4


class StabilizerTableau:
    def __init__(self, n: int):
        self.n = n
        self.x = np.zeros((2 * n, n), dtype=bool)
        self.z = np.zeros((2 * n, n), dtype=bool)
        self.r = np.zeros(2 * n, dtype=bool)
        self.x[np.arange(n), np.arange(n)] = True
        self.z[n + np.arange(n), np.arange(n)] = True

    @classmethod
    def from_basis_state(cls, state: BasisState) -> "StabilizerTableau":
        t = cls(state.L)
        t.r[t.n:] = np.asarray(state.bits, dtype=bool)
        return t

    def copy(self) -> "StabilizerTableau":
        t = StabilizerTableau.__new__(StabilizerTableau)
        t.n, t.x, t.z, t.r = self.n, self.x.copy(), self.z.copy(), self.r.copy()
        return t

    # gates take 0-based qubit indices
    def h(self, a):
        self.r ^= self.x[:, a] & self.z[:, a]
        self.x[:, a], self.z[:, a] = self.z[:, a].copy(), self.x[:, a].copy()

    def s(self, a):
        self.r ^= self.x[:, a] & self.z[:, a]
        self.z[:, a] ^= self.x[:, a]

    def cz(self, a, b):
        xa, xb = self.x[:, a], self.x[:, b]
        self.r ^= xa & xb & (self.z[:, a] ^ self.z[:, b])
        self.z[:, a] ^= xb
        self.z[:, b] ^= xa

    def pauli(self, a, kind: str):
        if kind == "X":
            self.r ^= self.z[:, a]
        elif kind == "Z":
            self.r ^= self.x[:, a]
        else:
            self.r ^= self.x[:, a] ^ self.z[:, a]

    def apply(self, gate: GateOp):
        if not is_clifford(gate):
            raise ValueError(f"non-Clifford gate {gate.kind}({gate.angle}) on {gate.qubits}")
        if gate.kind == "CZ":
            self.cz(gate.qubits[0] - 1, gate.qubits[1] - 1)
            return
        a = gate.qubits[0] - 1
        if gate.kind in ("X", "Y", "Z"):
            self.pauli(a, gate.kind)
        elif gate.kind == "RZ":
            for _ in range(_quarter_turns(gate)):
                self.s(a)
        else:
            k = _quarter_turns(gate)
            if k:
                self.h(a)
                for _ in range(k):
                    self.s(a)
                self.h(a)

    def stabilizers(self) -> list:
        """Stabilizer generators as signed Pauli strings, e.g. ``'-ZIXY'``."""
        out = []
        for i in range(self.n, 2 * self.n):
            chars = "".join("IXZY"[int(a) + 2 * int(b)] for a, b in zip(self.x[i], self.z[i]))
            out.append(("-" if self.r[i] else "+") + chars)
        return out


def _rowsum_phase(xh, zh, rh, xi, zi, ri) -> bool:
    """Sign bit of (row i) * (row h) using the CHP exponent function."""
    x1, z1, x2, z2 = xi.astype(int), zi.astype(int), xh.astype(int), zh.astype(int)
    g = np.where(x1 & z1, z2 - x2,
                 np.where(x1 & (1 - z1), z2 * (2 * x2 - 1),
                          np.where((1 - x1) & z1, x2 * (1 - 2 * z2), 0)))
    total = (2 * int(rh) + 2 * int(ri) + int(g.sum())) % 4
    return total == 2


def _z_constraints(tab: StabilizerTableau, window) -> tuple:
    """Parity constraints ``s . b = r`` on the window bits implied by the stabilizers.

    Gaussian elimination over the columns [x (all) | z outside | z window];
    rows whose pivot falls in the last block are Z-type and supported on the
    window, and they generate every such element of the stabilizer group.
    """
    n = tab.n
    window = [w - 1 for w in window]
    outside = [j for j in range(n) if j not in set(window)]
    x = tab.x[n:].copy()
    z = tab.z[n:].copy()
    r = tab.r[n:].copy()
    cols = [("x", j) for j in range(n)] + [("z", j) for j in outside] + [("z", j) for j in window]
    row = 0
    pivots = []
    for kind, j in cols:
        col = x[:, j] if kind == "x" else z[:, j]
        hits = np.flatnonzero(col[row:]) + row
        if len(hits) == 0:
            continue
        p = hits[0]
        if p != row:
            x[[row, p]], z[[row, p]], r[[row, p]] = x[[p, row]], z[[p, row]], r[[p, row]]
        for h in np.flatnonzero(x[:, j] if kind == "x" else z[:, j]):
            if h == row:
                continue
            r[h] = _rowsum_phase(x[h], z[h], r[h], x[row], z[row], r[row])
            x[h] ^= x[row]
            z[h] ^= z[row]
        pivots.append((kind, j, row))
        row += 1
        if row == n:
            break
    wset = set(window)
    rows = [rw for kind, j, rw in pivots if kind == "z" and j in wset]
    masks = np.array([[z[rw, j] for j in window] for rw in rows], dtype=bool).reshape(len(rows), len(window))
    return masks, r[rows].astype(np.int64)


def tableau_evolve(circuit: Circuit, initial) -> StabilizerTableau:
    """Conjugate the stabilizers of ``initial`` (a ``BasisState`` or tableau) through ``circuit``."""
    tab = initial.copy() if isinstance(initial, StabilizerTableau) else StabilizerTableau.from_basis_state(initial)
    if tab.n != circuit.qubit_count:
        raise ValueError("initial state and circuit differ in qubit count")
    for g in circuit.gates():
        tab.apply(g)
    return tab


def tableau_marginal(tab: StabilizerTableau, window, cap: int = DEFAULT_WINDOW_CAP) -> np.ndarray:
    """Exact Z-basis marginal on ``window``; window position ``p`` is bit ``p`` of the index."""
    window = list(window)
    if len(window) > cap:
        raise ValueError(f"window of {len(window)} qubits exceeds the cap of {cap}")
    if len(set(window)) != len(window) or any(not 1 <= w <= tab.n for w in window):
        raise ValueError(f"invalid window {window}")
    masks, rhs = _z_constraints(tab, window)
    w = len(window)
    idx = np.arange(1 << w, dtype=np.int64)
    ok = np.ones(idx.size, dtype=bool)
    for m, rr in zip(masks, rhs):
        mask_int = int(sum(1 << p for p in np.flatnonzero(m)))
        par = np.zeros(idx.size, dtype=np.int64)
        v = idx & mask_int
        while np.any(v):
            par ^= v & 1
            v >>= 1
        ok &= par == rr
    out = ok.astype(float)
    return out / out.sum()


def tableau_distribution(tab: StabilizerTableau, cap: int = DEFAULT_WINDOW_CAP) -> np.ndarray:
    """Full outcome distribution (site 1 as lowest-order bit); small systems only."""
    return tableau_marginal(tab, range(1, tab.n + 1), cap)


def _affine_solver(tab: StabilizerTableau):
    """Reduced echelon form of the full-register constraints: (pivot cols, rows, rhs)."""
    masks, rhs = _z_constraints(tab, range(1, tab.n + 1))
    m = masks.astype(np.uint8)
    rhs = rhs.astype(np.uint8)
    pivots = []
    row = 0
    for col in range(tab.n):
        hits = np.flatnonzero(m[row:, col]) + row
        if len(hits) == 0:
            continue
        p = hits[0]
        m[[row, p]], rhs[[row, p]] = m[[p, row]], rhs[[p, row]]
        for h in np.flatnonzero(m[:, col]):
            if h != row:
                m[h] ^= m[row]
                rhs[h] ^= rhs[row]
        pivots.append(col)
        row += 1
        if row == len(m):
            break
    return pivots, m[:len(pivots)], rhs[:len(pivots)]


def _sample_bits(tab: StabilizerTableau, shots: int, rng: np.random.Generator) -> np.ndarray:
    pivots, m, rhs = _affine_solver(tab)
    bits = rng.integers(0, 2, size=(shots, tab.n), dtype=np.uint8)
    for p, row, rr in zip(pivots, m, rhs):
        others = row.copy()
        others[p] = 0
        bits[:, p] = (rr + bits @ others) & 1
    return bits


def _pack(bits: np.ndarray) -> np.ndarray:
    weights = np.uint64(1) << np.arange(bits.shape[1], dtype=np.uint64)
    return (bits.astype(np.uint64) * weights).sum(axis=1, dtype=np.uint64)


def tableau_sample(tab: StabilizerTableau, shots: int, seed) -> BitstringDistribution:
    if shots < 1:
        raise ValueError("shots must be >= 1")
    rng = np.random.default_rng(seed)
    return BitstringDistribution.from_samples(tab.n, _pack(_sample_bits(tab, shots, rng)))


# --- noisy Clifford sampling by Pauli-frame propagation -------------------

def _propagate_frame(fx, fz, gate: GateOp):
    """Conjugate per-shot Pauli frames (signs dropped) through one Clifford gate."""
    if gate.kind == "CZ":
        a, b = gate.qubits[0] - 1, gate.qubits[1] - 1
        fz[:, a] ^= fx[:, b]
        fz[:, b] ^= fx[:, a]
        return
    if gate.kind in ("X", "Y", "Z"):
        return
    a = gate.qubits[0] - 1
    k = _quarter_turns(gate)
    if k % 2 == 0:
        return  # identity or a Pauli: frame unchanged up to sign
    if gate.kind == "RZ":
        fz[:, a] ^= fx[:, a]
    else:
        fx[:, a] ^= fz[:, a]


_FAULT_XZ = {"I": (0, 0), "X": (1, 0), "Y": (1, 1), "Z": (0, 1)}


def _frame_run(circuit: Circuit, noise: NoiseModel, shots: int, seed, initial: BasisState,
               emit) -> list:
    if shots < 1:
        raise ValueError("shots must be >= 1")
    if initial.L != circuit.qubit_count:
        raise ValueError("initial state and circuit differ in qubit count")
    noise.validate_for(initial.L)
    n = initial.L
    ideal_rng, fault_rng = np.random.default_rng(seed).spawn(2)
    tab = StabilizerTableau.from_basis_state(initial)
    fx = np.zeros((shots, n), dtype=bool)
    fz = np.zeros((shots, n), dtype=bool)
    labels1 = np.array([_FAULT_XZ[c] for c in "XYZ"], dtype=bool)
    labels2 = np.array([_FAULT_XZ[a] + _FAULT_XZ[b] for a in "IXYZ" for b in "IXYZ"][1:], dtype=bool)
    probs1, probs2 = noise.pauli_probs(1), noise.pauli_probs(2)
    ro = noise.readout_rates(n)[None, :]
    out = []

    def measure():
        bits = _sample_bits(tab, shots, ideal_rng).astype(bool)
        flips = fault_rng.random((shots, n)) < ro
        out.append(BitstringDistribution.from_samples(n, _pack((bits ^ fx ^ flips).astype(np.uint8))))

    emit = list(emit)
    k = 0
    while k < len(emit) and emit[k] == 0:
        measure()
        k += 1
    for count, g in enumerate(circuit.gates(), 1):
        if k == len(emit):
            break
        tab.apply(g)
        _propagate_frame(fx, fz, g)
        p = noise.gate_rate(g)
        if p > 0.0:
            hit = np.flatnonzero(fault_rng.random(shots) < p)
            if len(hit) and g.kind == "CZ":
                lab = labels2[fault_rng.choice(15, size=len(hit), p=probs2)]
                a, b = g.qubits[0] - 1, g.qubits[1] - 1
                fx[hit, a] ^= lab[:, 0]
                fz[hit, a] ^= lab[:, 1]
                fx[hit, b] ^= lab[:, 2]
                fz[hit, b] ^= lab[:, 3]
            elif len(hit):
                lab = labels1[fault_rng.choice(3, size=len(hit), p=probs1)]
                a = g.qubits[0] - 1
                fx[hit, a] ^= lab[:, 0]
                fz[hit, a] ^= lab[:, 1]
        while k < len(emit) and emit[k] == count:
            measure()
            k += 1
    return out


def pauli_frame_sample(circuit: Circuit, noise: NoiseModel, shots: int, seed,
                       initial: BasisState) -> BitstringDistribution:
    """Samples of a noisy Clifford circuit.

    Faults are drawn per shot after each gate and commuted to the end through
    the remaining gates; the X part of the final frame flips the ideal
    outcome, followed by independent readout flips.
    """
    return _frame_run(circuit, noise, shots, seed, initial, [circuit.gate_count])[0]


def pauli_frame_sample_steps(circuit: Circuit, noise: NoiseModel, shots: int, seed,
                             initial: BasisState, steps) -> list:
    """``pauli_frame_sample`` of every prefix ``circuit.prefix(s)`` for ``s in steps``."""
    steps = sorted(int(s) for s in steps)
    if any(not 0 <= s <= circuit.n_steps for s in steps):
        raise ValueError(f"steps must lie in [0, {circuit.n_steps}]")
    ends = [0] + [sum(len(layer) for layer in circuit.layers[:m]) for m in circuit.step_marks]
    return _frame_run(circuit, noise, shots, seed, initial, [ends[s] for s in steps])
