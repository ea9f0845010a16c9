"""Pauli-frame Monte Carlo of the noisy stabilizer cycle.

Every noise location draws an independent twirled error from the current
cycle's ``(T1, T2)`` of its qubit and the gate duration.  Shots are processed
in fixed blocks of ``SHOT_BLOCK``; each (block, cycle, stream) pair owns a
Philox counter range keyed by the run seed, so results do not depend on how
blocks are spread over worker threads.

Protocol I keeps one contiguous history per shot.  Instead of re-running the
first ``n`` cycles for every terminal length ``n``, the readout that would end
a length-``n`` run is sampled from the live frame after cycle ``n`` with its
own random stream; the history up to ``n`` is identical in distribution to a
dedicated length-``n`` run, so each terminal length sees the exact marginal.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from functools import lru_cache
from typing import Iterable

import numpy as np

from . import frames
from .channels import ptgad_probs
from .coherence import CoherenceSchedule
from .decoder import BatchDecoder, final_layer
from .records import SyndromeRecord
from .surface_code import DATA_QUBITS, READOUT_NS, LOGICAL_Z_SUPPORT, StabilizerCircuit, parity_matrices

SHOT_BLOCK = 1024
_STREAMS = {"prep": 1, "cycle": 2, "final": 3, "round_prep": 4, "round": 5, "round_final": 6, "traj": 7, "traj_final": 8}


@lru_cache(maxsize=256)
def _stream_key(seed: int, stream: str) -> tuple[int, int]:
    k = np.random.SeedSequence([int(seed), _STREAMS[stream]]).generate_state(2, np.uint64)
    return int(k[0]), int(k[1])


def keyed_rng(seed: int, stream: str, block: int, cycle: int) -> np.random.Generator:
    """Generator for one (block, cycle) cell of a named stream.

    The Philox key depends on ``(seed, stream)``; the block and cycle index
    occupy the high counter words, so cells never share random numbers.
    """
    key = np.array(_stream_key(seed, stream), dtype=np.uint64)
    counter = np.array([0, 0, cycle, block], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key, counter=counter))


@dataclass(frozen=True)
class NoiseTables:
    """Per-cycle error probabilities: ``px``/``pz`` ``(n_cycles, n_locations)``
    and ``readout_flip`` ``(n_cycles, 9)`` for the terminal data readout."""

    px: np.ndarray
    pz: np.ndarray
    readout_flip: np.ndarray


def noise_tables(cc: frames.CompiledCycle, schedule: CoherenceSchedule, n_cycles: int) -> NoiseTables:
    if schedule.n_cycles < n_cycles:
        raise ValueError(f"schedule covers {schedule.n_cycles} cycles, {n_cycles} requested")
    if schedule.n_qubits != cc.n_qubits:
        raise ValueError(f"schedule has {schedule.n_qubits} qubits, circuit {cc.n_qubits}")
    T1 = schedule.T1[:n_cycles]
    T2 = schedule.T2[:n_cycles]
    t = cc.loc_duration_ns * 1e-9
    px, _, pz = ptgad_probs(T1[:, cc.loc_qubit], T2[:, cc.loc_qubit], t[None, :])
    dq = list(DATA_QUBITS)
    rx, _, _ = ptgad_probs(T1[:, dq], T2[:, dq], READOUT_NS * 1e-9)
    return NoiseTables(np.asarray(px), np.asarray(pz), 2 * np.asarray(rx))


def _blocks(shots: int) -> list[tuple[int, int]]:
    if shots < 1:
        raise ValueError("need at least one shot")
    return [(b, min(SHOT_BLOCK, shots - b * SHOT_BLOCK)) for b in range((shots + SHOT_BLOCK - 1) // SHOT_BLOCK)]


def _map_blocks(fn, blocks, workers: int):
    if workers <= 1:
        return [fn(b) for b in blocks]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, blocks))


def _manifest(circuit, schedule, seed, shots, n_cycles, engine, extra=None) -> dict:
    m = {
        "seed": int(seed),
        "shots": int(shots),
        "n_cycles": int(n_cycles),
        "engine": engine,
        "circuit_hash": circuit.digest(),
        "schedule_hash": schedule[:n_cycles].digest(),
        "shot_block": SHOT_BLOCK,
    }
    if extra:
        m.update(extra)
    return m


def _prepare(fb: frames.FrameBatch, cc, seed, stream, block, cycle):
    fb.randomize_z(keyed_rng(seed, stream, block, cycle))
    meas = fb.run_cycle(cc)
    return meas


def run_protocol_I(
    circuit: StabilizerCircuit,
    schedule: CoherenceSchedule,
    n_cycles: int,
    shots: int,
    seed: int,
    terminal_lengths: Iterable[int] | None = None,
    idle_noise: bool = False,
    reset_noise_ns: float = 0.0,
    workers: int = 1,
) -> SyndromeRecord:
    """Chained multi-cycle run from the quiescent state.

    Parameters
    ----------
    terminal_lengths : iterable of int, optional
        Cycle counts after which a terminal data readout is recorded; default
        every ``1..n_cycles``.
    workers : int
        Threads over shot blocks; does not change the result.

    Returns
    -------
    SyndromeRecord
    """
    cc = frames.compile_cycle(circuit, idle_noise=idle_noise, reset_noise_ns=reset_noise_ns)
    tables = noise_tables(cc, schedule, n_cycles)
    terms = np.arange(1, n_cycles + 1) if terminal_lengths is None else np.unique(np.asarray(list(terminal_lengths)))
    if terms.size == 0 or terms[0] < 1 or terms[-1] > n_cycles:
        raise ValueError("terminal lengths must lie in 1..n_cycles")
    term_index = {int(n): i for i, n in enumerate(terms)}
    L = cc.n_locations

    def block(arg):
        b, ns = arg
        fb = frames.FrameBatch(cc.n_qubits, ns)
        meas = _prepare(fb, cc, seed, "prep", b, 0)
        prep_z = frames.pack_rows(meas[cc.z_slots])
        prep_x = frames.pack_rows(meas[cc.x_slots])
        zs = np.empty((ns, n_cycles), dtype=np.uint8)
        xs = np.empty((ns, n_cycles), dtype=np.uint8)
        td = np.empty((ns, len(terms)), dtype=np.uint16)
        for c in range(n_cycles):
            u = keyed_rng(seed, "cycle", b, c).random((L, ns))
            xe, ze = frames.sample_pauli_errors(u, tables.px[c], tables.pz[c])
            meas = fb.run_cycle(cc, xe, ze)
            zs[:, c] = frames.pack_rows(meas[cc.z_slots])
            xs[:, c] = frames.pack_rows(meas[cc.x_slots])
            ti = term_index.get(c + 1)
            if ti is not None:
                u = keyed_rng(seed, "final", b, c).random((9, ns))
                flips = fb.data_flips() ^ (u < tables.readout_flip[c][:, None])
                td[:, ti] = frames.pack_rows(flips)
        return zs, xs, prep_z, prep_x, td

    parts = _map_blocks(block, _blocks(shots), workers)
    return SyndromeRecord(
        "I",
        np.concatenate([p[0] for p in parts]),
        np.concatenate([p[1] for p in parts]),
        np.concatenate([p[2] for p in parts]),
        np.concatenate([p[3] for p in parts]),
        terms,
        np.concatenate([p[4] for p in parts]),
        0,
        _manifest(circuit, schedule, seed, shots, n_cycles, "pauli-frame",
                  {"idle_noise": idle_noise, "reset_noise_ns": reset_noise_ns}),
    )


@dataclass(frozen=True)
class RoundEstimates:
    """Unlinked single-round logical error rates ``epsilon[i]``."""

    epsilon: np.ndarray
    failures: np.ndarray
    uncorrected: np.ndarray
    shots: int
    manifest: dict

    @property
    def n_cycles(self) -> int:
        return len(self.epsilon)


def run_protocol_II(
    circuit: StabilizerCircuit,
    schedule: CoherenceSchedule,
    n_cycles: int,
    shots: int,
    seed: int,
    decoder: BatchDecoder | None = None,
    idle_noise: bool = False,
    reset_noise_ns: float = 0.0,
    workers: int = 1,
    readout_layer: bool = False,
) -> RoundEstimates:
    """Each cycle ``i`` simulated alone: quiescent prep, one noisy round with
    cycle ``i``'s noise, data readout, single-round decode.

    By default the round is decoded from its one syndrome-difference layer,
    which the matcher treats as final; the data readout only supplies the
    logical parity.  ``readout_layer=True`` also feeds the stabilizers
    recomputed from the readout to the decoder as a second layer.
    """
    cc = frames.compile_cycle(circuit, idle_noise=idle_noise, reset_noise_ns=reset_noise_ns)
    tables = noise_tables(cc, schedule, n_cycles)
    decoder = decoder or BatchDecoder()
    H = parity_matrices().H_Z
    L = cc.n_locations
    zl = list(LOGICAL_Z_SUPPORT)
    one = np.array([1])
    zero = np.array([0])

    def block(arg):
        b, ns = arg
        fails = np.zeros(n_cycles, dtype=np.int64)
        raw_fails = np.zeros(n_cycles, dtype=np.int64)
        for c in range(n_cycles):
            fb = frames.FrameBatch(cc.n_qubits, ns)
            prep = _prepare(fb, cc, seed, "round_prep", b, c)
            u = keyed_rng(seed, "round", b, c).random((L, ns))
            xe, ze = frames.sample_pauli_errors(u, tables.px[c], tables.pz[c])
            meas = fb.run_cycle(cc, xe, ze)
            s0 = meas[cc.z_slots]
            d0 = frames.pack_rows(s0 ^ prep[cc.z_slots])
            u = keyed_rng(seed, "round_final", b, c).random((9, ns))
            data = fb.data_flips() ^ (u < tables.readout_flip[c][:, None])
            f = final_layer(data.T, s0.T, H)
            f_packed = (f << np.arange(4, dtype=np.uint8)).sum(axis=1).astype(np.uint8)
            if readout_layer:
                par, _ = decoder.decode(d0[:, None], f_packed[:, None], one)
            else:
                par, _ = decoder.decode(np.zeros((ns, 0), np.uint8), d0[:, None], zero)
            raw = np.bitwise_xor.reduce(data[zl], axis=0).astype(np.uint8)
            fails[c] = int(np.sum(raw ^ par[:, 0]))
            raw_fails[c] = int(np.sum(raw))
        return fails, raw_fails

    parts = _map_blocks(block, _blocks(shots), workers)
    fails = sum(p[0] for p in parts)
    raw = sum(p[1] for p in parts)
    return RoundEstimates(
        fails / shots, fails, raw, shots,
        _manifest(circuit, schedule, seed, shots, n_cycles, "pauli-frame/unlinked",
                  {"readout_layer": readout_layer}),
    )

