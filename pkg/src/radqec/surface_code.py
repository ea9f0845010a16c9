"""Rotated [[9,1,3]] surface code: chip layout, scheduled stabilizer cycle and checks.

Qubit numbering used throughout the package::

    0..8    data qubits, row-major on the 3x3 code patch (index = 3*row + col)
    9..12   X-parity ancillas, one per row of ``H_X``
    13..16  Z-parity ancillas, one per row of ``H_Z``

Plaquette frame: data qubit ``(col, row)`` sits at integer coordinates and each
ancilla at the centre of its plaquette.  On the chip the patch is rotated by 45
degrees so that all 17 qubits form a square lattice whose nearest-neighbour
(data-ancilla) pitch is ``1 mm * spacing_scale``.
"""

from __future__ import annotations

import hashlib
import warnings
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

N_DATA = 9
N_QUBITS = 17
DATA_QUBITS = tuple(range(0, 9))
X_ANCILLAS = tuple(range(9, 13))
Z_ANCILLAS = tuple(range(13, 17))

# Z-basis logical readout: top row. X_L (the bit-flip logical) is the left column.
LOGICAL_Z_SUPPORT = (0, 1, 2)
LOGICAL_X_SUPPORT = (0, 3, 6)

CX_NS = 40.0
H_NS = 30.0
READOUT_NS = 140.0
RESET_NS = 0.0
CYCLE_NS = 1000.0

BASE_PITCH_MM = 1.0
BASE_CHIP_MM = 10.0

_H_Z = np.array(
    [
        [1, 0, 0, 1, 0, 0, 0, 0, 0],
        [0, 1, 1, 0, 1, 1, 0, 0, 0],
        [0, 0, 0, 1, 1, 0, 1, 1, 0],
        [0, 0, 0, 0, 0, 1, 0, 0, 1],
    ],
    dtype=np.uint8,
)
_H_X = np.array(
    [
        [0, 1, 1, 0, 0, 0, 0, 0, 0],
        [1, 1, 0, 1, 1, 0, 0, 0, 0],
        [0, 0, 0, 0, 1, 1, 0, 1, 1],
        [0, 0, 0, 0, 0, 0, 1, 1, 0],
    ],
    dtype=np.uint8,
)

# plaquette centres (col, row) in H row order
_Z_CENTRES = ((-0.5, 0.5), (1.5, 0.5), (0.5, 1.5), (2.5, 1.5))
_X_CENTRES = ((1.5, -0.5), (0.5, 0.5), (1.5, 1.5), (0.5, 2.5))

# CX layer (1..4) of each plaquette corner.  X checks sweep row-wise so a
# mid-sequence ancilla fault leaves a horizontal data pair (orthogonal to X_L);
# Z checks sweep column-wise so Z hooks are vertical (orthogonal to Z_L).
_X_ORDER = {"NW": 0, "NE": 1, "SW": 2, "SE": 3}
_Z_ORDER = {"NW": 0, "SW": 1, "NE": 2, "SE": 3}
_CORNERS = {"NW": (-0.5, -0.5), "NE": (0.5, -0.5), "SW": (-0.5, 0.5), "SE": (0.5, 0.5)}


@dataclass(frozen=True)
class ParityMatrices:
    """Binary check matrices of the code (rows = stabilizers, columns = data)."""

    H_Z: np.ndarray
    H_X: np.ndarray

    def commute(self) -> bool:
        return not np.any((self.H_Z.astype(int) @ self.H_X.T.astype(int)) % 2)


def parity_matrices() -> ParityMatrices:
    """Return copies of the ZZZZ and XXXX matching matrices."""
    return ParityMatrices(H_Z=_H_Z.copy(), H_X=_H_X.copy())


@dataclass(frozen=True)
class CodeLayout:
    """Chip coordinates (mm) of the 17 qubits.

    ``positions[q]`` follows the package-wide qubit numbering.
    """

    positions: np.ndarray
    spacing_scale: float
    chip_width: float

    @property
    def data_positions(self) -> np.ndarray:
        return self.positions[list(DATA_QUBITS)]

    @property
    def x_ancilla_positions(self) -> np.ndarray:
        return self.positions[list(X_ANCILLAS)]

    @property
    def z_ancilla_positions(self) -> np.ndarray:
        return self.positions[list(Z_ANCILLAS)]

    @property
    def pitch(self) -> float:
        return BASE_PITCH_MM * self.spacing_scale

    @property
    def qubit_ids(self) -> tuple[str, ...]:
        return qubit_labels()

    def default_strike(self) -> tuple[float, float]:
        """Reference strike location, scaled with the chip from (1.7, 1.7) mm."""
        return (1.7 * self.spacing_scale, 1.7 * self.spacing_scale)

    def contains(self, point: Sequence[float]) -> bool:
        x, y = point
        return 0.0 <= x <= self.chip_width and 0.0 <= y <= self.chip_width


def qubit_labels() -> tuple[str, ...]:
    return tuple([f"D{i}" for i in range(9)] + [f"X{i}" for i in range(4)] + [f"Z{i}" for i in range(4)])


def _plaquette_to_chip(u: float, v: float) -> tuple[float, float]:
    # 45 degree rotation; data (1, 1) (the centre qubit) lands on the origin
    return (u - v, u + v - 2.0)


def build_layout(spacing_scale: float = 1.0) -> CodeLayout:
    """Place the 17 qubits on a ``10*scale`` mm square die.

    Every coordinate (qubits and chip) is proportional to ``spacing_scale``, so
    changing the scale is a similarity transform about the chip corner.
    """
    if spacing_scale <= 0:
        raise ValueError("spacing_scale must be positive")
    if spacing_scale not in (1, 2, 4):
        warnings.warn(f"spacing_scale={spacing_scale} has no reference configuration", stacklevel=2)
    pitch = BASE_PITCH_MM * spacing_scale
    chip = BASE_CHIP_MM * spacing_scale
    centre = chip / 2.0
    coords: list[tuple[float, float]] = []
    for q in DATA_QUBITS:
        coords.append(_plaquette_to_chip(q % 3, q // 3))
    for u, v in _X_CENTRES + _Z_CENTRES:
        coords.append(_plaquette_to_chip(u, v))
    pos = centre + pitch * np.array(coords, dtype=float)
    return CodeLayout(positions=pos, spacing_scale=float(spacing_scale), chip_width=chip)


@dataclass(frozen=True)
class Gate:
    name: str  # "H", "CX", "MEASURE", "RESET"
    qubits: tuple[int, ...]
    start_ns: float
    duration_ns: float

    @property
    def end_ns(self) -> float:
        return self.start_ns + self.duration_ns


@dataclass(frozen=True)
class StabilizerCircuit:
    """One syndrome-extraction cycle as a time-ordered gate list.

    ``z_measure_order`` / ``x_measure_order`` give the ancilla whose outcome is
    syndrome bit ``j`` (row ``j`` of ``H_Z`` / ``H_X``).
    """

    gates: tuple[Gate, ...]
    cycle_ns: float = CYCLE_NS
    n_qubits: int = N_QUBITS
    z_checks: tuple[tuple[int, ...], ...] = ()
    x_checks: tuple[tuple[int, ...], ...] = ()
    z_measure_order: tuple[int, ...] = Z_ANCILLAS
    x_measure_order: tuple[int, ...] = X_ANCILLAS
    layout: CodeLayout | None = field(default=None, compare=False)

    @property
    def span_ns(self) -> float:
        return max(g.end_ns for g in self.gates) - min(g.start_ns for g in self.gates)

    def busy_ns(self) -> np.ndarray:
        """Total gate time per qubit within one cycle."""
        busy = np.zeros(self.n_qubits)
        for g in self.gates:
            for q in g.qubits:
                busy[q] += g.duration_ns
        return busy

    def to_text(self) -> str:
        lines = ["# name qubits t_start_ns t_dur_ns"]
        for g in self.gates:
            qs = ",".join(str(q) for q in g.qubits)
            lines.append(f"{g.name} {qs} {g.start_ns:g} {g.duration_ns:g}")
        return "\n".join(lines) + "\n"

    def digest(self) -> str:
        return hashlib.sha256(self.to_text().encode()).hexdigest()[:16]


def circuit_from_text(text: str, cycle_ns: float = CYCLE_NS) -> list[Gate]:
    gates = []
    for line in text.splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        name, qs, t0, dt = line.split()
        gates.append(Gate(name, tuple(int(q) for q in qs.split(",")), float(t0), float(dt)))
    return gates


def _plaquette_cx(centre, ancilla: int, order: dict, kind: str) -> list[tuple[int, int, int]]:
    """(layer, control, target) triples for one plaquette."""
    out = []
    u, v = centre
    for corner, layer in order.items():
        du, dv = _CORNERS[corner]
        c, r = u + du, v + dv
        if 0 <= c <= 2 and 0 <= r <= 2:
            d = int(round(3 * r + c))
            out.append((layer, ancilla, d) if kind == "X" else (layer, d, ancilla))
    return out


def build_cycle_circuit(layout: CodeLayout | None = None) -> StabilizerCircuit:
    """Schedule one stabilizer round.

    Timeline (ns): H on X ancillas [0, 30); four CX layers from 30 to 190;
    Z-ancilla readout starts at 190 alongside the closing H on X ancillas, X
    readout starts at 220; ancillas are reset (ideal, zero duration) once read.
    """
    cx_layers: list[list[tuple[int, int]]] = [[] for _ in range(4)]
    z_checks, x_checks = [], []
    for j, centre in enumerate(_X_CENTRES):
        anc = X_ANCILLAS[j]
        triples = _plaquette_cx(centre, anc, _X_ORDER, "X")
        x_checks.append(tuple(sorted(t for _, _, t in triples)))
        for layer, c, t in triples:
            cx_layers[layer].append((c, t))
    for j, centre in enumerate(_Z_CENTRES):
        anc = Z_ANCILLAS[j]
        triples = _plaquette_cx(centre, anc, _Z_ORDER, "Z")
        z_checks.append(tuple(sorted(c for _, c, _ in triples)))
        for layer, c, t in triples:
            cx_layers[layer].append((c, t))

    gates: list[Gate] = []
    t = 0.0
    for a in X_ANCILLAS:
        gates.append(Gate("H", (a,), t, H_NS))
    t += H_NS
    for layer in cx_layers:
        for c, tg in sorted(layer):
            gates.append(Gate("CX", (c, tg), t, CX_NS))
        t += CX_NS
    for a in Z_ANCILLAS:
        gates.append(Gate("MEASURE", (a,), t, READOUT_NS))
    for a in X_ANCILLAS:
        gates.append(Gate("H", (a,), t, H_NS))
    for a in X_ANCILLAS:
        gates.append(Gate("MEASURE", (a,), t + H_NS, READOUT_NS))
    for a in Z_ANCILLAS:
        gates.append(Gate("RESET", (a,), t + READOUT_NS, RESET_NS))
    for a in X_ANCILLAS:
        gates.append(Gate("RESET", (a,), t + H_NS + READOUT_NS, RESET_NS))

    order = sorted(range(len(gates)), key=lambda i: (gates[i].start_ns, i))
    circuit = StabilizerCircuit(
        gates=tuple(gates[i] for i in order),
        z_checks=tuple(z_checks),
        x_checks=tuple(x_checks),
        layout=layout,
    )
    _check_schedule(circuit)
    return circuit


def _check_schedule(circuit: StabilizerCircuit) -> None:
    per_qubit: dict[int, list[Gate]] = {}
    for g in circuit.gates:
        for q in g.qubits:
            per_qubit.setdefault(q, []).append(g)
    for q, gs in per_qubit.items():
        gs = sorted(gs, key=lambda g: g.start_ns)
        for a, b in zip(gs, gs[1:]):
            if b.start_ns < a.end_ns - 1e-9:
                raise ValueError(f"overlapping gates on qubit {q}: {a} / {b}")
    if circuit.span_ns > circuit.cycle_ns:
        raise ValueError("schedule longer than the cycle")


def checks_as_matrix(checks: Sequence[Sequence[int]]) -> np.ndarray:
    m = np.zeros((len(checks), N_DATA), dtype=np.uint8)
    for i, supp in enumerate(checks):
        m[i, list(supp)] = 1
    return m


def mask_of(qubits: Sequence[int]) -> int:
    m = 0
    for q in qubits:
        m |= 1 << q
    return m


LOGICAL_Z_MASK = mask_of(LOGICAL_Z_SUPPORT)
