"""Matrix-product-state simulator for nearest-neighbour circuits.

The state is kept in right-canonical form ``B[i]`` (shape ``(chi_l, 2, chi_r)``)
together with the Schmidt values ``S[i]`` on the bond left of site ``i``.  Two-qubit
gates follow the usual TEBD update: contract ``S B B``, apply the gate, SVD,
truncate, and rebuild the left tensor from the un-weighted contraction so no
division by small singular values is needed.
"""

from __future__ import annotations

import logging

import numpy as np
import scipy.linalg as sla

from ..circuit import Circuit
from ..counts import BitstringDistribution
from ..model import BasisState
from .statevector import gate_matrix

logger = logging.getLogger(__name__)

__all__ = ["MpsState", "mps_evolve", "mps_expectation_z", "mps_sample", "CHECKPOINT_VERSION"]

CHECKPOINT_VERSION = 1
#: ``norm``: discarded part has 2-norm <= tol; ``weight``: discarded squared sum <= tol.
CUTOFFS = ("norm", "weight")

_CZ = np.diag([1.0, 1.0, 1.0, -1.0]).astype(complex).reshape(2, 2, 2, 2)


def _svd(theta):
    try:
        return sla.svd(theta, full_matrices=False, lapack_driver="gesdd", check_finite=False)
    except np.linalg.LinAlgError:
        return sla.svd(theta, full_matrices=False, lapack_driver="gesvd", check_finite=False)


class MpsState:
    """Right-canonical MPS with a running truncation ledger.

    ``truncation_error`` accumulates the discarded (normalized) weight of every
    two-qubit update, which bounds the total infidelity to first order.  With
    the default ``cutoff="norm"`` each update moves the state by at most ``tol``
    in 2-norm, so the per-gate infidelity is at most ``tol**2``.
    """

    def __init__(self, B, S, tol: float = 1e-8, cutoff: str = "norm"):
        if cutoff not in CUTOFFS:
            raise ValueError(f"cutoff must be one of {CUTOFFS}, got {cutoff!r}")
        self.B = list(B)
        self.S = list(S)
        self.tol = float(tol)
        self.cutoff = cutoff
        self.truncation_error = 0.0
        self.two_qubit_gates = 0

    @classmethod
    def product(cls, state: BasisState, tol: float = 1e-8, cutoff: str = "norm") -> "MpsState":
        B = []
        for b in state.bits:
            t = np.zeros((1, 2, 1), dtype=complex)
            t[0, b, 0] = 1.0
            B.append(t)
        S = [np.ones(1) for _ in range(state.L + 1)]
        return cls(B, S, tol, cutoff)

    @property
    def L(self) -> int:
        return len(self.B)

    def bond_dimensions(self) -> list:
        return [b.shape[2] for b in self.B[:-1]]

    def apply_1q(self, site: int, u: np.ndarray):
        i = site - 1
        self.B[i] = np.einsum("ab,lbr->lar", u, self.B[i])

    def apply_2q(self, site: int, u4: np.ndarray):
        """Gate on ``(site, site+1)``; ``u4`` has axes ``(out_i, out_j, in_i, in_j)``."""
        i, j = site - 1, site
        chi_l, chi_r = self.B[i].shape[0], self.B[j].shape[2]
        c = np.tensordot(self.B[i], self.B[j], axes=(2, 0))           # l, si, sj, r
        c = np.tensordot(u4, c, axes=([2, 3], [1, 2])).transpose(2, 0, 1, 3)
        theta = (self.S[i][:, None, None, None] * c).reshape(chi_l * 2, 2 * chi_r)
        _, s, vh = _svd(theta)
        norm2 = np.sum(s * s)
        w = s * s / norm2
        # drop the smallest values while the discarded part stays below tol
        limit = self.tol * self.tol if self.cutoff == "norm" else self.tol
        tail = np.cumsum(w[::-1])
        n_drop = int(np.searchsorted(tail, limit, side="right"))
        keep = max(1, len(s) - n_drop)
        self.truncation_error += float(np.sum(w[keep:]))
        s = s[:keep] / np.sqrt(np.sum(s[:keep] ** 2))
        vh = vh[:keep]
        b_j = vh.reshape(keep, 2, chi_r)
        b_i = np.tensordot(c, b_j.conj(), axes=([2, 3], [1, 2]))      # l, si, keep
        # renormalize so that S_i B_i B_j stays a unit vector after truncation
        scale = np.sqrt(norm2 * np.sum(w[:keep]))
        self.B[i] = b_i / scale
        self.B[j] = b_j
        self.S[j] = s
        self.two_qubit_gates += 1

    def norm(self) -> float:
        """Norm from a full left-to-right contraction."""
        env = np.ones((1, 1), dtype=complex)
        for b in self.B:
            env = np.einsum("ab,asc,bsd->cd", env, b.conj(), b)
        return float(np.sqrt(abs(env[0, 0])))

    def to_statevector(self) -> np.ndarray:
        """Dense amplitudes (site 1 as lowest-order bit); small L only."""
        psi = self.B[0][0]                                           # s1, r
        for b in self.B[1:]:
            psi = np.tensordot(psi, b, axes=(-1, 0))
        psi = psi[..., 0]
        # axes are (s1, ..., sL); reverse so that site 1 is the fastest index
        return np.ascontiguousarray(psi.transpose(tuple(range(self.L - 1, -1, -1)))).ravel()

    def save(self, fh) -> None:
        """Write a versioned ``.npz`` checkpoint to a path or binary file handle."""
        arrays = {f"B{i}": b for i, b in enumerate(self.B)}
        arrays.update({f"S{i}": s for i, s in enumerate(self.S)})
        meta = np.array([CHECKPOINT_VERSION, self.L], dtype=np.int64)
        np.savez(fh, meta=meta, tol=np.array(self.tol), cutoff=np.array(self.cutoff), trunc=np.array(self.truncation_error),
                 ngates=np.array(self.two_qubit_gates), **arrays)

    @classmethod
    def load(cls, fh) -> "MpsState":
        data = np.load(fh)
        version, L = (int(v) for v in data["meta"])
        if version != CHECKPOINT_VERSION:
            raise ValueError(f"unsupported checkpoint version {version}")
        B = [data[f"B{i}"] for i in range(L)]
        S = [data[f"S{i}"] for i in range(L + 1)]
        for i, b in enumerate(B):
            if b.ndim != 3 or b.shape[1] != 2:
                raise ValueError(f"tensor {i} has bad shape {b.shape}")
        st = cls(B, S, float(data["tol"]), str(data["cutoff"]))
        st.truncation_error = float(data["trunc"])
        st.two_qubit_gates = int(data["ngates"])
        return st


def mps_evolve(circuit: Circuit, initial, tol: float = 1e-8, cutoff: str = "norm") -> MpsState:
    """Apply ``circuit`` to a basis state (or continue an existing ``MpsState``)."""
    if not tol > 0:
        raise ValueError(f"tolerance must be positive, got {tol}")
    if isinstance(initial, MpsState):
        state = initial
        state.tol = tol
        state.cutoff = cutoff
    else:
        state = MpsState.product(initial, tol, cutoff)
    if state.L != circuit.qubit_count:
        raise ValueError("initial state and circuit differ in qubit count")
    for g in circuit.gates():
        if g.kind == "CZ":
            a, b = g.qubits
            state.apply_2q(min(a, b), _CZ)
        else:
            state.apply_1q(g.qubits[0], gate_matrix(g))
    logger.debug("mps: max bond %d, truncation %.3g", max(state.bond_dimensions(), default=1),
                 state.truncation_error)
    return state


def mps_expectation_z(state: MpsState, site: int) -> float:
    if not 1 <= site <= state.L:
        raise ValueError(f"site {site} outside [1, {state.L}]")
    i = site - 1
    theta = state.S[i][:, None, None] * state.B[i]
    p = np.sum(np.abs(theta) ** 2, axis=(0, 2))
    return float((p[0] - p[1]) / (p[0] + p[1]))


def mps_all_expectation_z(state: MpsState) -> np.ndarray:
    return np.array([mps_expectation_z(state, j) for j in range(1, state.L + 1)])


def mps_sample(state: MpsState, shots: int, seed) -> BitstringDistribution:
    """Exact sampling, site by site, splitting shot counts over branches.

    Branches with equal prefixes share one environment vector, and the shot
    count of each branch is split binomially between the two outcomes.
    """
    if shots < 1:
        raise ValueError("shots must be >= 1")
    rng = np.random.default_rng(seed)
    envs = np.ones((1, 1), dtype=complex)
    prefixes = np.zeros(1, dtype=np.uint64)
    counts = np.array([shots], dtype=np.int64)
    for i, b in enumerate(state.B):
        w = np.einsum("nl,lsr->nsr", envs, b)
        p = np.sum(np.abs(w) ** 2, axis=2)
        p1 = p[:, 1] / p.sum(axis=1)
        n1 = rng.binomial(counts, np.clip(p1, 0.0, 1.0))
        n0 = counts - n1
        keep0, keep1 = n0 > 0, n1 > 0
        envs = np.concatenate([w[keep0, 0], w[keep1, 1]])
        envs /= np.linalg.norm(envs, axis=1)[:, None]
        prefixes = np.concatenate([prefixes[keep0], prefixes[keep1] | np.uint64(1 << i)])
        counts = np.concatenate([n0[keep0], n1[keep1]])
    return BitstringDistribution(state.L, prefixes, counts=counts)
