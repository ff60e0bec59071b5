"""Spin-1/2 quantum link model in its constrained spin-chain form.

Qubit ``j`` (1-based) carries the electric flux of link ``j``.  The qubit value
``0`` is the ``P = |0><0|`` eigenstate (``Z = +1``).  The flux on link ``j`` is

    E_j = (-1)**j * Z_j / 2

so both antiferromagnetic patterns ``0101...`` and ``1010...`` carry a uniform
field and no charge.  Matter site ``k`` sits between links ``k`` and ``k+1``
and carries the charge ``q_k = E_k - E_{k+1}``.  A pair ``00`` on qubits
``(k, k+1)`` is a particle: an electron (``-1``) on odd ``k`` and a positron
(``+1``) on even ``k``.  A pair ``11`` would need the opposite charge on that
matter site, which staggered fermions cannot host, hence the no-adjacent-ones
constraint.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

import numpy as np

__all__ = [
    "ModelParams",
    "BasisState",
    "derive_chi",
    "vacuum_state",
    "single_electron_state",
    "single_positron_state",
    "ep_pair_state",
    "meson_pair_state",
    "charge_profile",
    "gauss_check",
    "constrained_states",
    "M_CRITICAL",
]

#: Coleman critical mass of the spin-1/2 model at zero background field, units of kappa.
M_CRITICAL = 0.3275


@dataclass(frozen=True)
class ModelParams:
    """Physical and schedule parameters of one Trotterized run.

    Energies are in units of ``kappa`` and times in units of ``1/kappa``.
    ``quench_step=None`` means the mass never switches to ``m_final``.
    """

    L: int
    n_steps: int
    kappa: float = 1.0
    m_initial: float = 1.5
    m_final: Optional[float] = None
    chi: float = 0.0
    dt: float = 1.0
    wall_steps: int = 0
    quench_step: Optional[int] = None

    def __post_init__(self):
        if self.L < 3:
            raise ValueError(f"L must be >= 3, got {self.L}")
        if not self.dt > 0:
            raise ValueError(f"dt must be positive, got {self.dt}")
        if self.n_steps < 0:
            raise ValueError(f"n_steps must be >= 0, got {self.n_steps}")
        if not 0 <= self.wall_steps <= self.n_steps:
            raise ValueError(
                f"wall_steps must lie in [0, n_steps={self.n_steps}], got {self.wall_steps}")
        if self.quench_step is not None and not 1 <= self.quench_step <= max(self.n_steps, 1):
            raise ValueError(
                f"quench_step must lie in [1, n_steps={self.n_steps}], got {self.quench_step}")

    def mass_at(self, step: int) -> float:
        """Mass used in Trotter step ``step`` (1-based)."""
        if self.quench_step is not None and step >= self.quench_step:
            return self.m_initial if self.m_final is None else self.m_final
        return self.m_initial

    def walls_active(self, step: int) -> bool:
        return step <= self.wall_steps


@dataclass(frozen=True)
class BasisState:
    """Computational basis state; ``bits[0]`` is site 1."""

    bits: tuple = field()

    def __post_init__(self):
        bits = tuple(int(b) for b in self.bits)
        if any(b not in (0, 1) for b in bits):
            raise ValueError("bits must be 0 or 1")
        object.__setattr__(self, "bits", bits)

    @classmethod
    def from_string(cls, s: str) -> "BasisState":
        return cls(tuple(int(c) for c in s.strip()))

    @property
    def L(self) -> int:
        return len(self.bits)

    def __str__(self) -> str:
        return "".join(str(b) for b in self.bits)

    def __len__(self) -> int:
        return len(self.bits)

    def index(self) -> int:
        """Integer label with site 1 as the lowest-order bit."""
        return sum(b << j for j, b in enumerate(self.bits))

    @classmethod
    def from_index(cls, index: int, L: int) -> "BasisState":
        return cls(tuple((index >> j) & 1 for j in range(L)))

    def mirrored(self) -> "BasisState":
        return BasisState(self.bits[::-1])

    def z_values(self) -> np.ndarray:
        """Per-site ``<Z>`` of the basis state (+1 for bit 0)."""
        return 1.0 - 2.0 * np.asarray(self.bits, dtype=float)


def derive_chi(g: float, theta: float) -> float:
    """Background-field coupling ``chi`` from gauge coupling and topological angle."""
    return g * g * (theta - math.pi) / (2.0 * math.pi)


def _flux(bits: Sequence[int]) -> np.ndarray:
    j = np.arange(1, len(bits) + 1)
    return np.where(j % 2 == 0, 1.0, -1.0) * (0.5 - np.asarray(bits, dtype=float))


def charge_profile(state: BasisState) -> tuple:
    """Charges on the ``L-1`` matter sites between adjacent links."""
    e = _flux(state.bits)
    q = e[:-1] - e[1:]
    return tuple(int(round(v)) for v in q)


def gauss_check(state: BasisState) -> bool:
    bits = state.bits
    if any(a == 1 and b == 1 for a, b in zip(bits, bits[1:])):
        return False
    return all(q in (-1, 0, 1) for q in charge_profile(state))


def vacuum_state(L: int, parity: str = "A") -> BasisState:
    """Antiferromagnetic vacuum: ``A`` is ``0101...``, ``B`` is ``1010...``."""
    if L < 3:
        raise ValueError(f"L must be >= 3, got {L}")
    parity = parity.upper()
    if parity not in ("A", "B"):
        raise ValueError(f"parity must be 'A' or 'B', got {parity!r}")
    offset = 0 if parity == "A" else 1
    return BasisState(tuple((j + offset) % 2 for j in range(L)))


def _from_walls(L: int, walls: Iterable[int], left: str) -> BasisState:
    """Fill sites with alternating vacua separated by particles at matter sites ``walls``."""
    walls = sorted(walls)
    bits = []
    parity = 0 if left == "A" else 1
    w = iter(walls)
    nxt = next(w, None)
    for j in range(1, L + 1):
        # vacuum A puts 1 on even sites, B on odd sites
        bits.append(1 if (j % 2 == 0) == (parity == 0) else 0)
        if nxt is not None and j == nxt:
            parity ^= 1
            nxt = next(w, None)
    state = BasisState(tuple(bits))
    if not gauss_check(state):
        raise ValueError(f"walls {walls} do not give a gauge-invariant state at L={L}")
    return state


def single_electron_state(L: int, site: int) -> BasisState:
    """One electron on odd matter site ``site``: vacuum A to its left, B to its right.

    The chain carries net charge -1, so this is a building block rather than a
    physical initial state of the scattering runs.
    """
    if site % 2 != 1 or not 1 <= site <= L - 1:
        raise ValueError(f"electrons live on odd matter sites in [1, {L - 1}], got {site}")
    return _from_walls(L, [site], "A")


def single_positron_state(L: int, site: int) -> BasisState:
    """One positron on even matter site ``site``: vacuum B to its left, A to its right."""
    if site % 2 != 0 or not 1 <= site <= L - 1:
        raise ValueError(f"positrons live on even matter sites in [1, {L - 1}], got {site}")
    return _from_walls(L, [site], "B")


def _centered_start(L: int, span: int) -> int:
    """Odd left site ``k`` that centers a structure reaching up to matter site ``k + span``.

    Mirror symmetry of matter sites is ``k -> L - k``; it is exact when
    ``2k + span == L``.  Otherwise the nearest odd ``k`` below is used.
    """
    k = (L - span) // 2
    if k % 2 == 0:
        k -= 1
    return k


def ep_pair_state(L: int, separation: int = 2) -> BasisState:
    """Electron-positron pair, electron on the left.

    ``separation`` counts the matter sites strictly between the two charges.
    Electrons sit on odd and positrons on even matter sites, so it must be even.
    The pair is mirror symmetric about the chain center whenever
    ``(L - 1 - separation) / 2`` is odd (e.g. ``L=45, separation=2``).
    """
    if L < 5:
        raise ValueError(f"pair states need L >= 5, got {L}")
    if separation < 0 or separation % 2:
        raise ValueError(f"separation must be a non-negative even integer, got {separation}")
    k = _centered_start(L, separation + 1)
    kp = k + separation + 1
    if k < 1 or kp > L - 1:
        raise ValueError(f"separation {separation} does not fit into L={L}")
    return _from_walls(L, [k, kp], "A")


def meson_pair_state(L: int, separation: int = 12) -> BasisState:
    """Two mesons (electron then positron on adjacent matter sites) in vacuum A.

    ``separation`` is the distance between the electrons of the two mesons,
    a multiple of 2.  Charge pattern reads ``(-1, +1, ..., -1, +1)``.
    """
    if L < 5:
        raise ValueError(f"pair states need L >= 5, got {L}")
    if separation < 2 or separation % 2:
        raise ValueError(f"separation must be an even integer >= 2, got {separation}")
    k1 = _centered_start(L, separation + 1)
    k2 = k1 + separation
    if k1 < 1 or k2 + 1 > L - 1:
        raise ValueError(f"two mesons at separation {separation} do not fit into L={L}")
    return _from_walls(L, [k1, k1 + 1, k2, k2 + 1], "A")


def constrained_states(L: int) -> list:
    """All bitstrings of length ``L`` without adjacent ones (brute force)."""
    out = []
    for idx in range(1 << L):
        if idx & (idx >> 1) == 0:
            out.append(BasisState.from_index(idx, L))
    return out
