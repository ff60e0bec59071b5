"""Compiled statevector kernels.  Qubit arguments here are 0-based bit positions."""

import numpy as np
from numba import njit

# gate codes
ONE_QUBIT = 0
CZ = 1


@njit(cache=True)
def apply_1q(psi, q, m00, m01, m10, m11):
    step = 1 << q
    n = psi.shape[0]
    for base in range(0, n, 2 * step):
        for i in range(base, base + step):
            a = psi[i]
            b = psi[i + step]
            psi[i] = m00 * a + m01 * b
            psi[i + step] = m10 * a + m11 * b


@njit(cache=True)
def apply_cz(psi, a, b):
    mask = (1 << a) | (1 << b)
    for i in range(psi.shape[0]):
        if i & mask == mask:
            psi[i] = -psi[i]


@njit(cache=True)
def apply_pauli(psi, q, code):
    """code: 1 = X, 2 = Y, 3 = Z (global phases dropped)."""
    if code == 0:
        return
    step = 1 << q
    n = psi.shape[0]
    if code == 3:
        for base in range(0, n, 2 * step):
            for i in range(base + step, base + 2 * step):
                psi[i] = -psi[i]
        return
    for base in range(0, n, 2 * step):
        for i in range(base, base + step):
            a = psi[i]
            b = psi[i + step]
            if code == 1:
                psi[i] = b
                psi[i + step] = a
            else:
                psi[i] = -1j * b
                psi[i + step] = 1j * a


@njit(cache=True)
def run_circuit(psi, kinds, q1, q2, mats):
    for g in range(kinds.shape[0]):
        if kinds[g] == CZ:
            apply_cz(psi, q1[g], q2[g])
        else:
            m = mats[g]
            apply_1q(psi, q1[g], m[0, 0], m[0, 1], m[1, 0], m[1, 1])


@njit(cache=True)
def _pick(cum):
    r = np.random.random()
    for k in range(cum.shape[0]):
        if r < cum[k]:
            return k
    return cum.shape[0] - 1


@njit(cache=True)
def _measure(psi, p_ro, shots_per, out, row, col0):
    cum = np.cumsum(np.abs(psi) ** 2)
    cum /= cum[-1]
    n_q = p_ro.shape[0]
    for s in range(shots_per):
        idx = np.searchsorted(cum, np.random.random(), side="right")
        if idx >= cum.shape[0]:
            idx = cum.shape[0] - 1
        for q in range(n_q):
            if p_ro[q] > 0.0 and np.random.random() < p_ro[q]:
                idx ^= 1 << q
        out[row, col0 + s] = idx


@njit(cache=True)
def run_trajectories(psi0, kinds, q1, q2, mats, rates, cum1, cum2, p_ro, seeds, shots_per, emit):
    """One noisy trajectory per seed, measured after each gate count in ``emit``.

    After every gate with ``rates[g] > 0`` a fault drawn from ``cum1``/``cum2``
    is applied with that probability.  Row ``k`` of the result holds
    ``len(seeds) * shots_per`` outcomes taken once the first ``emit[k]`` gates
    have run (``emit`` sorted); outcomes get independent readout flips.
    """
    out = np.empty((emit.shape[0], seeds.shape[0] * shots_per), dtype=np.int64)
    psi = np.empty_like(psi0)
    for t in range(seeds.shape[0]):
        np.random.seed(seeds[t])
        psi[:] = psi0
        k = 0
        while k < emit.shape[0] and emit[k] == 0:
            _measure(psi, p_ro, shots_per, out, k, t * shots_per)
            k += 1
        for g in range(kinds.shape[0]):
            if k == emit.shape[0]:
                break
            if kinds[g] == CZ:
                apply_cz(psi, q1[g], q2[g])
            else:
                m = mats[g]
                apply_1q(psi, q1[g], m[0, 0], m[0, 1], m[1, 0], m[1, 1])
            if rates[g] > 0.0 and np.random.random() < rates[g]:
                if kinds[g] == CZ:
                    label = _pick(cum2) + 1
                    apply_pauli(psi, q1[g], label // 4)
                    apply_pauli(psi, q2[g], label % 4)
                else:
                    apply_pauli(psi, q1[g], _pick(cum1) + 1)
            while k < emit.shape[0] and emit[k] == g + 1:
                _measure(psi, p_ro, shots_per, out, k, t * shots_per)
                k += 1
    return out
