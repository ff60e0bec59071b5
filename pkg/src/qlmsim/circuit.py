"""First-order Trotter circuits for the constrained spin chain.

Conventions: ``RX(t) = exp(-i t X / 2)`` and ``RZ(t) = exp(-i t Z / 2)``.
Qubit indices are 1-based sites.  One Trotter step is

    [even-center coupling group: 4 CZ layers]
    [odd-center coupling group:  4 CZ layers]
    [RZ layer: mass and background field]

A coupling block centered at ``c`` realizes ``exp(-i 2 theta P_{c-1} X_c P_{c+1})``
as four ``RX(theta)`` and four CZ.  Writing ``4 P X P = X(1 + Z_l)(1 + Z_r)``,
each RX sits in a different CZ frame (I, CZ_l, CZ_l CZ_r, CZ_r) so the four
rotations pick up ``X``, ``Z_l X``, ``Z_l Z_r X`` and ``Z_r X``.  Edge blocks
have one projector and use two ``RX(2 theta)`` with two CZ.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Iterable, Iterator, Optional, Sequence

import numpy as np

from .model import (BasisState, ModelParams, charge_profile, ep_pair_state, gauss_check,
                    meson_pair_state, vacuum_state)

__all__ = [
    "GateOp",
    "Circuit",
    "ExperimentKind",
    "Experiment",
    "make_experiment",
    "coupling_block",
    "coupling_angle",
    "mass_field_layer",
    "build_trotter_circuit",
    "twirl_circuit",
    "clifford_round",
    "is_clifford",
    "export_gatelist",
    "parse_gatelist",
    "export_qasm",
]

ROTATIONS = ("RX", "RZ")
PAULIS = ("X", "Y", "Z")
KINDS = ROTATIONS + PAULIS + ("CZ",)
HALF_PI = math.pi / 2


@dataclass(frozen=True)
class GateOp:
    kind: str
    qubits: tuple
    angle: Optional[float] = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown gate kind {self.kind!r}")
        qubits = tuple(int(q) for q in self.qubits)
        object.__setattr__(self, "qubits", qubits)
        if self.kind == "CZ":
            if len(qubits) != 2 or abs(qubits[0] - qubits[1]) != 1:
                raise ValueError(f"CZ needs two adjacent qubits, got {qubits}")
        elif len(qubits) != 1:
            raise ValueError(f"{self.kind} acts on one qubit, got {qubits}")
        if self.kind in ROTATIONS:
            if self.angle is None or not math.isfinite(self.angle):
                raise ValueError(f"{self.kind} needs a finite angle")
            object.__setattr__(self, "angle", float(self.angle))
        elif self.angle is not None:
            raise ValueError(f"{self.kind} takes no angle")

    @property
    def is_two_qubit(self) -> bool:
        return self.kind == "CZ"


@dataclass(frozen=True)
class Circuit:
    """Layered gate list.

    ``step_marks[s]`` is the layer index one past the end of Trotter step ``s+1``.
    """

    qubit_count: int
    layers: tuple = ()
    step_marks: tuple = ()
    twirl_seed: Optional[int] = None

    def __post_init__(self):
        layers = tuple(tuple(layer) for layer in self.layers)
        object.__setattr__(self, "layers", layers)
        object.__setattr__(self, "step_marks", tuple(int(m) for m in self.step_marks))
        for layer in layers:
            used = [q for g in layer for q in g.qubits]
            if len(used) != len(set(used)):
                raise ValueError("gates within a layer must act on disjoint qubits")
            if any(not 1 <= q <= self.qubit_count for q in used):
                raise ValueError("gate qubit out of range")

    def gates(self) -> Iterator[GateOp]:
        for layer in self.layers:
            yield from layer

    @property
    def n_steps(self) -> int:
        return len(self.step_marks)

    @property
    def gate_count(self) -> int:
        return sum(len(layer) for layer in self.layers)

    @property
    def cz_count(self) -> int:
        return sum(g.is_two_qubit for g in self.gates())

    @property
    def two_qubit_depth(self) -> int:
        return sum(any(g.is_two_qubit for g in layer) for layer in self.layers)

    def prefix(self, steps: int) -> "Circuit":
        """The first ``steps`` Trotter steps."""
        if not 0 <= steps <= self.n_steps:
            raise ValueError(f"steps must lie in [0, {self.n_steps}]")
        end = self.step_marks[steps - 1] if steps else 0
        return replace(self, layers=self.layers[:end], step_marks=self.step_marks[:steps])


class ExperimentKind(str, Enum):
    EP_SCATTER = "ep_scatter"
    EP_QUENCH = "ep_quench"
    MESON_MESON = "meson_meson"
    VACUUM_BACKGROUND = "vacuum_background"


@dataclass(frozen=True)
class Experiment:
    """Initial state plus the coupling centers removed while walls are active."""

    kind: ExperimentKind
    initial: BasisState
    wall_centers: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "kind", ExperimentKind(self.kind))
        object.__setattr__(self, "wall_centers", tuple(int(c) for c in self.wall_centers))

    def background(self) -> "Experiment":
        """Vacuum run sharing this experiment's wall schedule."""
        return Experiment(ExperimentKind.VACUUM_BACKGROUND, vacuum_state(self.initial.L, "A"),
                          self.wall_centers)


def make_experiment(kind, L: int, separation: Optional[int] = None) -> Experiment:
    """Standard initial states with walls on the outward side of each particle.

    Each wall removes the coupling term whose flip would start the particle's
    motion away from the collision point.
    """
    kind = ExperimentKind(kind)
    if kind in (ExperimentKind.EP_SCATTER, ExperimentKind.EP_QUENCH):
        sep = 2 if separation is None else separation
        state = ep_pair_state(L, sep)
        electron = next(k for k, q in enumerate(charge_profile(state), 1) if q == -1)
        positron = next(k for k, q in enumerate(charge_profile(state), 1) if q == 1)
        walls = (electron - 1, positron + 2)
    elif kind == ExperimentKind.MESON_MESON:
        sep = 12 if separation is None else separation
        state = meson_pair_state(L, sep)
        electrons = [k for k, q in enumerate(charge_profile(state), 1) if q == -1]
        walls = (electrons[0] - 1, electrons[1] + 3)
    else:
        return Experiment(kind, vacuum_state(L, "A"), ())
    # on short chains a particle can sit at the edge, where there is no outward term to remove
    return Experiment(kind, state, tuple(w for w in walls if 1 <= w <= L))


def coupling_angle(params: ModelParams) -> float:
    """Per-rotation RX angle of an interior coupling block."""
    return params.kappa * params.dt / 4.0


def coupling_block(theta: float, left_projector: bool = True, right_projector: bool = True,
                   center: int = 2) -> list:
    """Gate sequence for ``exp(-i 2 theta P_{c-1} X_c P_{c+1})``, projectors per flags.

    Returned as a list of sub-layers (lists of gates) in time order, matching
    the slots used when blocks are interleaved: ``RX, CZ_l, RX, CZ_r, RX, CZ_l, RX, CZ_r``.
    Empty slots are empty lists.
    """
    c = center
    rx = lambda a: [GateOp("RX", (c,), a)]
    czl = [GateOp("CZ", (c - 1, c))]
    czr = [GateOp("CZ", (c, c + 1))]
    if left_projector and right_projector:
        return [rx(theta), czl, rx(theta), czr, rx(theta), czl, rx(theta), czr]
    if right_projector:
        return [rx(2 * theta), [], [], czr, rx(2 * theta), [], [], czr]
    if left_projector:
        return [rx(2 * theta), czl, rx(2 * theta), [], [], czl, [], []]
    return [rx(4 * theta), [], [], [], [], [], [], []]


def mass_field_layer(params: ModelParams, step: int) -> list:
    """RZ layer with angle ``[(-1)^j chi - 2 m] dt / 2`` on every site ``j``."""
    if not 1 <= step <= max(params.n_steps, 1):
        raise ValueError(f"step must lie in [1, {params.n_steps}]")
    m = params.mass_at(step)
    return [GateOp("RZ", (j,), ((-1) ** j * params.chi - 2.0 * m) * params.dt / 2.0)
            for j in range(1, params.L + 1)]


def _group_layers(L: int, centers: Iterable[int], theta: float) -> list:
    slots = [[] for _ in range(8)]
    for c in centers:
        block = coupling_block(theta, c > 1, c < L, center=c)
        for s, gates in zip(slots, block):
            s.extend(gates)
    return [s for s in slots if s]


def build_trotter_circuit(params: ModelParams, experiment: Experiment) -> Circuit:
    L = params.L
    if experiment.initial.L != L:
        raise ValueError(f"initial state has {experiment.initial.L} sites, params say {L}")
    if not gauss_check(experiment.initial):
        raise ValueError(f"initial state {experiment.initial} violates Gauss's law")
    for c in experiment.wall_centers:
        if not 1 <= c <= L:
            raise ValueError(f"wall center {c} outside [1, {L}]")
    theta = coupling_angle(params)
    layers, marks = [], []
    for step in range(1, params.n_steps + 1):
        removed = set(experiment.wall_centers) if params.walls_active(step) else set()
        for parity in (0, 1):
            centers = [c for c in range(1, L + 1) if c % 2 == parity and c not in removed]
            layers.extend(_group_layers(L, centers, theta))
        layers.append(mass_field_layer(params, step))
        marks.append(len(layers))
    return Circuit(L, tuple(layers), tuple(marks))


# --- Pauli twirling -------------------------------------------------------

_PAULI_XZ = {"I": (0, 0), "X": (1, 0), "Z": (0, 1), "Y": (1, 1)}
_XZ_PAULI = {v: k for k, v in _PAULI_XZ.items()}


def _cz_conjugate(pa: str, pb: str) -> tuple:
    """Paulis (up to sign) obtained by pushing ``pa (x) pb`` through a CZ."""
    xa, za = _PAULI_XZ[pa]
    xb, zb = _PAULI_XZ[pb]
    return _XZ_PAULI[(xa, za ^ xb)], _XZ_PAULI[(xb, zb ^ xa)]


def _is_single_qubit_layer(layer) -> bool:
    return bool(layer) and not any(g.is_two_qubit for g in layer)


def twirl_circuit(circuit: Circuit, seed) -> Circuit:
    """Dress every CZ with a uniformly random two-qubit Pauli and its compensation.

    Identity draws insert nothing.  Twirl Paulis go into the neighbouring
    single-qubit layer when their qubit is idle there, otherwise into a new
    Pauli layer next to the CZ layer.
    """
    rng = np.random.default_rng(seed)
    labels = "IXYZ"
    out = [list(layer) for layer in circuit.layers]
    new_layers, marks, mark_iter = [], [], iter(circuit.step_marks)
    next_mark = next(mark_iter, None)
    for idx, layer in enumerate(out):
        if any(g.is_two_qubit for g in layer):
            before, after = [], []
            for g in layer:
                if not g.is_two_qubit:
                    continue
                draw = rng.integers(0, 16)
                pa, pb = labels[draw // 4], labels[draw % 4]
                ca, cb = _cz_conjugate(pa, pb)
                a, b = g.qubits
                before += [GateOp(p, (q,)) for p, q in ((pa, a), (pb, b)) if p != "I"]
                after += [GateOp(p, (q,)) for p, q in ((ca, a), (cb, b)) if p != "I"]
            step_closed = bool(marks) and marks[-1] == len(new_layers)
            prev = new_layers[-1] if new_layers and not step_closed else None
            if before:
                if prev is not None and _is_single_qubit_layer(prev):
                    busy = {q for g in prev for q in g.qubits}
                    keep = [g for g in before if g.qubits[0] not in busy]
                    prev.extend(keep)
                    before = [g for g in before if g.qubits[0] in busy]
                if before:
                    new_layers.append(before)
            new_layers.append(list(layer))
            if after:
                nxt = out[idx + 1] if idx + 1 < len(out) else None
                crosses_mark = next_mark is not None and idx + 1 == next_mark
                if nxt is not None and _is_single_qubit_layer(nxt) and not crosses_mark:
                    busy = {q for g in nxt for q in g.qubits}
                    stay = [g for g in after if g.qubits[0] in busy]
                    # idle qubits of the next layer absorb their Pauli
                    out[idx + 1] = [g for g in after if g.qubits[0] not in busy] + nxt
                    after = stay
                if after:
                    new_layers.append(after)
        else:
            new_layers.append(list(layer))
        if next_mark is not None and idx + 1 == next_mark:
            marks.append(len(new_layers))
            next_mark = next(mark_iter, None)
    seed_val = int(seed) if isinstance(seed, (int, np.integer)) else None
    return Circuit(circuit.qubit_count, tuple(tuple(l) for l in new_layers), tuple(marks),
                   twirl_seed=seed_val)


# --- Clifford rounding ----------------------------------------------------

def _round_quarter_turns(angle: float) -> int:
    x = angle / HALF_PI
    return int(math.ceil(x - 0.5))


def clifford_round(circuit: Circuit) -> Circuit:
    """Snap every rotation to the nearest multiple of pi/2 (ties round down)."""
    layers = tuple(
        tuple(replace(g, angle=_round_quarter_turns(g.angle) * HALF_PI) if g.kind in ROTATIONS else g
              for g in layer)
        for layer in circuit.layers)
    return replace(circuit, layers=layers)


def is_clifford(gate: GateOp, atol: float = 1e-9) -> bool:
    if gate.kind not in ROTATIONS:
        return True
    x = gate.angle / HALF_PI
    return abs(x - round(x)) <= atol


# --- text formats ---------------------------------------------------------

def export_gatelist(circuit: Circuit) -> str:
    """Plain-text gate list, one gate per line after a ``#`` header."""
    lines = [
        f"# qubits {circuit.qubit_count}",
        "# step_marks " + " ".join(str(m) for m in circuit.step_marks),
        "# layers " + " ".join(str(len(layer)) for layer in circuit.layers),
        f"# twirl_seed {'none' if circuit.twirl_seed is None else circuit.twirl_seed}",
    ]
    for g in circuit.gates():
        q = ",".join(str(x) for x in g.qubits)
        lines.append(f"{g.kind} {q}" if g.angle is None else f"{g.kind} {q} {g.angle!r}")
    return "\n".join(lines) + "\n"


def parse_gatelist(text: str) -> Circuit:
    header, gates = {}, []
    for raw in text.splitlines():
        line = raw.strip()
        if not line:
            continue
        if line.startswith("#"):
            key, _, value = line[1:].strip().partition(" ")
            header[key] = value.split()
            continue
        parts = line.split()
        qubits = tuple(int(q) for q in parts[1].split(","))
        angle = float(parts[2]) if len(parts) > 2 else None
        gates.append(GateOp(parts[0], qubits, angle))
    try:
        n = int(header["qubits"][0])
    except (KeyError, IndexError) as exc:
        raise ValueError("gate list header lacks '# qubits N'") from exc
    sizes = [int(s) for s in header.get("layers", [])]
    if sum(sizes) != len(gates):
        raise ValueError(f"header announces {sum(sizes)} gates, found {len(gates)}")
    layers, pos = [], 0
    for s in sizes:
        layers.append(tuple(gates[pos:pos + s]))
        pos += s
    marks = tuple(int(m) for m in header.get("step_marks", []))
    seed = header.get("twirl_seed", ["none"])
    seed = None if not seed or seed[0] == "none" else int(seed[0])
    return Circuit(n, tuple(layers), marks, twirl_seed=seed)


def export_qasm(circuit: Circuit, initial: Optional[BasisState] = None) -> str:
    """OpenQASM 2.0 text; qubit ``j`` maps to ``q[j-1]``."""
    lines = ["OPENQASM 2.0;", 'include "qelib1.inc";', f"qreg q[{circuit.qubit_count}];",
             f"creg c[{circuit.qubit_count}];"]
    if initial is not None:
        lines += [f"x q[{j}];" for j, b in enumerate(initial.bits) if b]
    for g in circuit.gates():
        qs = ",".join(f"q[{q - 1}]" for q in g.qubits)
        name = g.kind.lower()
        lines.append(f"{name}({g.angle!r}) {qs};" if g.angle is not None else f"{name} {qs};")
    lines.append("measure q -> c;")
    return "\n".join(lines) + "\n"
