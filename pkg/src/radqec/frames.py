"""Pauli-frame propagation through a compiled stabilizer cycle.

A frame is a pair of boolean arrays ``x, z`` of shape ``(n_qubits, shots)``
holding the Pauli difference between a noisy shot and the noise-free
reference execution.  The reference outcomes are taken to be all zero, so a
recorded measurement bit *is* the frame's x-bit at the measurement.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .surface_code import (
    DATA_QUBITS,
    READOUT_NS,
    StabilizerCircuit,
)

OP_H, OP_CX, OP_MEAS, OP_RESET, OP_NOISE = range(5)
OP_NAMES = {"H": OP_H, "CX": OP_CX, "MEASURE": OP_MEAS, "RESET": OP_RESET}


@dataclass(frozen=True)
class CompiledCycle:
    """Flat op list for one cycle with explicit noise locations.

    ``ops`` rows are ``(code, a, b)``: for ``OP_NOISE`` ``a`` is the qubit and
    ``b`` the location index; for ``OP_MEAS`` ``b`` is the measurement slot.
    """

    ops: np.ndarray
    loc_qubit: np.ndarray
    loc_duration_ns: np.ndarray
    loc_kind: tuple[str, ...]
    meas_qubit: np.ndarray
    z_slots: np.ndarray  # measurement slot of Z-check row j
    x_slots: np.ndarray
    n_qubits: int

    @property
    def n_locations(self) -> int:
        return len(self.loc_qubit)

    @property
    def n_meas(self) -> int:
        return len(self.meas_qubit)


def compile_cycle(
    circuit: StabilizerCircuit, idle_noise: bool = False, reset_noise_ns: float = 0.0
) -> CompiledCycle:
    """Lower the gate list to ops, inserting a noise location after every gate
    on each participant and before every measurement (readout duration).

    Parameters
    ----------
    idle_noise : bool
        Add one location per qubit at the end of the cycle covering the time
        the qubit spends outside gates.
    reset_noise_ns : float
        If positive, RESET is followed by a noise location of this duration.
    """
    ops: list[tuple[int, int, int]] = []
    loc_q: list[int] = []
    loc_t: list[float] = []
    loc_kind: list[str] = []
    meas_q: list[int] = []

    def noise(q: int, dur: float, kind: str):
        ops.append((OP_NOISE, q, len(loc_q)))
        loc_q.append(q)
        loc_t.append(dur)
        loc_kind.append(kind)

    for g in circuit.gates:
        code = OP_NAMES[g.name]
        if code == OP_MEAS:
            (q,) = g.qubits
            noise(q, g.duration_ns, "readout")
            ops.append((OP_MEAS, q, len(meas_q)))
            meas_q.append(q)
        elif code == OP_RESET:
            (q,) = g.qubits
            ops.append((OP_RESET, q, -1))
            if reset_noise_ns > 0:
                noise(q, reset_noise_ns, "reset")
        elif code == OP_H:
            (q,) = g.qubits
            ops.append((OP_H, q, -1))
            noise(q, g.duration_ns, "gate")
        else:
            c, t = g.qubits
            ops.append((OP_CX, c, t))
            noise(c, g.duration_ns, "gate")
            noise(t, g.duration_ns, "gate")
    if idle_noise:
        busy = circuit.busy_ns()
        for q in range(circuit.n_qubits):
            idle = circuit.cycle_ns - busy[q]
            if idle > 0:
                noise(q, idle, "idle")

    meas_q_arr = np.array(meas_q)
    z_slots = np.array([int(np.flatnonzero(meas_q_arr == a)[0]) for a in circuit.z_measure_order])
    x_slots = np.array([int(np.flatnonzero(meas_q_arr == a)[0]) for a in circuit.x_measure_order])
    return CompiledCycle(
        ops=np.array(ops, dtype=np.int64),
        loc_qubit=np.array(loc_q, dtype=np.int64),
        loc_duration_ns=np.array(loc_t, dtype=float),
        loc_kind=tuple(loc_kind),
        meas_qubit=meas_q_arr,
        z_slots=z_slots,
        x_slots=x_slots,
        n_qubits=circuit.n_qubits,
    )


class FrameBatch:
    """Pauli frames for a batch of shots."""

    def __init__(self, n_qubits: int, shots: int):
        self.x = np.zeros((n_qubits, shots), dtype=bool)
        self.z = np.zeros((n_qubits, shots), dtype=bool)

    @property
    def shots(self) -> int:
        return self.x.shape[1]

    def randomize_z(self, rng: np.random.Generator) -> None:
        """Random Z gauge on every qubit; harmless on |0> preparations."""
        self.z[:] = rng.random(self.z.shape) < 0.5

    def copy(self) -> "FrameBatch":
        out = FrameBatch.__new__(FrameBatch)
        out.x = self.x.copy()
        out.z = self.z.copy()
        return out

    def run_cycle(
        self,
        cc: CompiledCycle,
        x_err: np.ndarray | None = None,
        z_err: np.ndarray | None = None,
    ) -> np.ndarray:
        """Propagate through one cycle; returns measurement flips ``(n_meas, shots)``.

        ``x_err``/``z_err`` have shape ``(n_locations, shots)``; ``None`` runs
        the cycle noise-free.
        """
        x, z = self.x, self.z
        meas = np.empty((cc.n_meas, self.shots), dtype=bool)
        noisy = x_err is not None
        for code, a, b in cc.ops:
            if code == OP_CX:
                x[b] ^= x[a]
                z[a] ^= z[b]
            elif code == OP_NOISE:
                if noisy:
                    x[a] ^= x_err[b]
                    z[a] ^= z_err[b]
            elif code == OP_H:
                tmp = x[a].copy()
                x[a] = z[a]
                z[a] = tmp
            elif code == OP_MEAS:
                meas[b] = x[a]
            else:  # reset
                x[a] = False
                z[a] = False
        return meas

    def data_flips(self) -> np.ndarray:
        return self.x[list(DATA_QUBITS)]


def sample_pauli_errors(
    u: np.ndarray, px: np.ndarray, pz: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    """Map uniforms ``u (L, S)`` to X/Z components with ``p_x = p_y = px``.

    ``[0, px)`` -> X, ``[px, 2px)`` -> Y, ``[2px, 2px+pz)`` -> Z.
    """
    px = px[:, None]
    pxy = 2 * px
    x_err = u < pxy
    z_err = (u >= px) & (u < pxy + pz[:, None])
    return x_err, z_err


def pack_rows(bits: np.ndarray) -> np.ndarray:
    """Pack ``(n_bits, shots)`` booleans into integers (bit j = row j)."""
    n = bits.shape[0]
    dtype = np.uint8 if n <= 8 else np.uint16 if n <= 16 else np.uint32
    out = np.zeros(bits.shape[1], dtype=dtype)
    for j in range(n):
        out |= bits[j].astype(dtype) << dtype(j)
    return out


def unpack_bits(values: np.ndarray, n_bits: int) -> np.ndarray:
    """Inverse of :func:`pack_rows` along a new trailing axis."""
    values = np.asarray(values).astype(np.int64)
    return ((values[..., None] >> np.arange(n_bits)) & 1).astype(np.uint8)


READOUT_DURATION_NS = READOUT_NS
