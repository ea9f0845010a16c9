"""Kraus-trajectory statevector simulation with the exact GAD channel.

Qubits that are only ever CX targets, measured and reset (the Z-parity
ancillas) never need amplitudes of their own: their value is always an affine
function ``parity(mask & index) ^ const`` of the computational-basis index of
the remaining qubits.  Such qubits are kept as (mask, const) registers and the
statevector holds only the data and X-parity qubits (2^13 amplitudes instead
of 2^17).  ``compress=False`` simulates every qubit in the statevector.

The Kraus set of each noise location is the Choi eigendecomposition of the
GAD channel: two diagonal operators, one decay ``|0><1|`` and one excitation
``|1><0|`` (absent when ``p1 = 0``).
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from numba import njit

from . import frames
from .coherence import CoherenceSchedule
from .pauli_sim import _manifest, keyed_rng
from .records import SyndromeRecord
from .surface_code import DATA_QUBITS, READOUT_NS, StabilizerCircuit

MAX_QUBITS = 20
TRAJ_BLOCK = 256

K_H, K_CX, K_CXA, K_MEAS, K_MEASA, K_RESET, K_RESETA, K_NOISE, K_NOISEA = range(9)
ERR_OK, ERR_H_ON_REGISTER = 0, 1


class CapacityError(ValueError):
    pass


@dataclass(frozen=True)
class TrajectoryProgram:
    code: np.ndarray
    arg_a: np.ndarray
    arg_b: np.ndarray
    u_offset: np.ndarray
    n_uniforms: int
    n_state_qubits: int
    n_registers: int
    state_index: np.ndarray  # qubit -> statevector bit or -1
    register_index: np.ndarray  # qubit -> register or -1
    cycle: frames.CompiledCycle


def compile_program(circuit: StabilizerCircuit, compress: bool = True, idle_noise: bool = False,
                    reset_noise_ns: float = 0.0) -> TrajectoryProgram:
    cc = frames.compile_cycle(circuit, idle_noise=idle_noise, reset_noise_ns=reset_noise_ns)
    n = cc.n_qubits
    affine = np.zeros(n, dtype=bool)
    if compress:
        affine[:] = True
        for code, a, b in cc.ops:
            if code == frames.OP_H:
                affine[a] = False
            elif code == frames.OP_CX:
                affine[a] = False
    state_index = np.full(n, -1)
    register_index = np.full(n, -1)
    state_index[~affine] = np.arange((~affine).sum())
    register_index[affine] = np.arange(affine.sum())
    nstate = int((~affine).sum())
    if nstate > MAX_QUBITS:
        raise CapacityError(f"{nstate} statevector qubits exceed the {MAX_QUBITS}-qubit limit")
    code, aa, bb, uo = [], [], [], []
    nu = 0
    for c, a, b in cc.ops:
        if c == frames.OP_H:
            code.append(K_H); aa.append(state_index[a]); bb.append(-1); uo.append(-1)
        elif c == frames.OP_CX:
            if affine[b]:
                code.append(K_CXA); aa.append(state_index[a]); bb.append(register_index[b])
            else:
                code.append(K_CX); aa.append(state_index[a]); bb.append(state_index[b])
            uo.append(-1)
        elif c == frames.OP_MEAS:
            code.append(K_MEASA if affine[a] else K_MEAS)
            aa.append(register_index[a] if affine[a] else state_index[a]); bb.append(b); uo.append(nu); nu += 1
        elif c == frames.OP_RESET:
            code.append(K_RESETA if affine[a] else K_RESET)
            aa.append(register_index[a] if affine[a] else state_index[a]); bb.append(-1); uo.append(nu); nu += 1
        else:
            code.append(K_NOISEA if affine[a] else K_NOISE)
            aa.append(register_index[a] if affine[a] else state_index[a]); bb.append(b); uo.append(nu); nu += 1
    return TrajectoryProgram(
        np.array(code, np.int64), np.array(aa, np.int64), np.array(bb, np.int64), np.array(uo, np.int64),
        nu, nstate, int(affine.sum()), state_index, register_index, cc,
    )


def gad_kraus_params(T1, T2, t, p0: float = 1.0, p1: float = 0.0) -> np.ndarray:
    """Vectorised Kraus coefficients ``(a1, b1, a2, b2, decay, excite)``.

    ``diag(a_k, b_k)`` are the two diagonal Kraus operators.
    """
    T1 = np.asarray(T1, float)
    T2 = np.asarray(T2, float)
    t = np.broadcast_to(np.asarray(t, float), T1.shape)
    gamma = -np.expm1(-t / T1)
    coh = np.exp(-t / T2)
    blk = np.empty(T1.shape + (2, 2))
    blk[..., 0, 0] = 1 - p1 * gamma
    blk[..., 1, 1] = 1 - p0 * gamma
    blk[..., 0, 1] = blk[..., 1, 0] = coh
    w, v = np.linalg.eigh(blk)
    w = np.where(w < -1e-14, np.nan, np.maximum(w, 0.0))
    if np.any(np.isnan(w)):
        raise ValueError("non-physical GAD parameters")
    out = np.empty(T1.shape + (6,))
    s = np.sqrt(w)
    out[..., 0] = s[..., 0] * v[..., 0, 0]
    out[..., 1] = s[..., 0] * v[..., 1, 0]
    out[..., 2] = s[..., 1] * v[..., 0, 1]
    out[..., 3] = s[..., 1] * v[..., 1, 1]
    out[..., 4] = np.sqrt(p0 * gamma)
    out[..., 5] = np.sqrt(p1 * gamma)
    return out


# --- sparse statevector kernel ------------------------------------------------------------
#
# One shot is ``psi`` (dense amplitudes), ``mark`` (1 where an index is in the
# support) and ``idx[:n]`` (the support list).  Every pass walks the support
# only; the code state of the distance-3 patch never holds more than a few
# hundred nonzero amplitudes.

PRUNE = 1e-28


@njit(cache=True)
def _parity_table(dim):
    t = np.zeros(dim, np.uint8)
    for i in range(1, dim):
        t[i] = t[i >> 1] ^ (i & 1)
    return t


@njit(cache=True)
def _weight(z):
    return z.real * z.real + z.imag * z.imag


@njit(cache=True)
def _prob_bit(psi, idx, n, m):
    p1 = 0.0
    tot = 0.0
    for k in range(n):
        i = idx[k]
        a = _weight(psi[i])
        tot += a
        if i & m:
            p1 += a
    return p1, tot


@njit(cache=True)
def _prob_reg(psi, idx, n, A, c, par):
    p1 = 0.0
    tot = 0.0
    for k in range(n):
        i = idx[k]
        a = _weight(psi[i])
        tot += a
        if par[A & i] ^ c:
            p1 += a
    return p1, tot


@njit(cache=True)
def _value(i, is_reg, m, A, c, par):
    if is_reg:
        return par[A & i] ^ c
    return 1 if (i & m) else 0


@njit(cache=True)
def _project(psi, mark, idx, n, is_reg, m, A, c, par, val, f):
    """Keep the branch where the qubit (or register) equals ``val``, scaled by ``f``."""
    out = 0
    for k in range(n):
        i = idx[k]
        if _value(i, is_reg, m, A, c, par) == val:
            psi[i] *= f
            idx[out] = i
            out += 1
        else:
            psi[i] = 0.0
            mark[i] = 0
    return out


@njit(cache=True)
def _permute(psi, mark, idx, n, m, cond, buf):
    """Apply ``i -> i ^ m`` to every support index with ``i & cond`` (all if ``cond == 0``).

    The moved set is closed under the map, so a gather/scatter is exact.
    """
    for k in range(n):
        i = idx[k]
        if cond == 0 or (i & cond):
            buf[k] = psi[i]
            psi[i] = 0.0
            mark[i] = 0
    for k in range(n):
        i = idx[k]
        if cond == 0 or (i & cond):
            j = i ^ m
            psi[j] = buf[k]
            mark[j] = 1
            idx[k] = j


@njit(cache=True)
def _jump(psi, mark, idx, n, m, decay, f):
    """``|0><1|`` (decay) or ``|1><0|`` on statevector bit ``m``, scaled by ``f``."""
    out = 0
    for k in range(n):
        i = idx[k]
        if ((i & m) != 0) == decay:
            idx[out] = i
            out += 1
        else:
            psi[i] = 0.0
            mark[i] = 0
    for k in range(out):
        i = idx[k]
        j = i ^ m
        psi[j] = psi[i] * f
        psi[i] = 0.0
        mark[i] = 0
        mark[j] = 1
        idx[k] = j
    return out


@njit(cache=True)
def _hadamard(psi, mark, idx, n, m):
    n2 = n
    for k in range(n):
        j = idx[k] ^ m
        if mark[j] == 0:
            mark[j] = 1
            psi[j] = 0.0
            idx[n2] = j
            n2 += 1
    s = 1.0 / np.sqrt(2.0)
    for k in range(n2):
        i = idx[k]
        if not (i & m):
            x = psi[i]
            y = psi[i | m]
            psi[i] = (x + y) * s
            psi[i | m] = (x - y) * s
    out = 0
    for k in range(n2):
        i = idx[k]
        if _weight(psi[i]) > PRUNE:
            idx[out] = i
            out += 1
        else:
            psi[i] = 0.0
            mark[i] = 0
    return out


@njit(cache=True)
def _flip_regs(A, C, q):
    """Fold an X-type permutation of statevector bit ``q`` into the registers.

    Register values are parities of the *current* basis index, so any basis
    permutation on a statevector qubit must be compensated.
    """
    for r in range(A.shape[0]):
        C[r] ^= (A[r] >> q) & 1


@njit(cache=True)
def _run_ops(psi, mark, idx, n, A, C, code, qa, qb, uoff, kraus, u, inject, use_inject, noisy, meas, par, buf):
    """Run one compiled cycle on one shot; returns the new support size or -1."""
    nreg = A.shape[0]
    for k in range(code.shape[0]):
        op = code[k]
        a = qa[k]
        b = qb[k]
        if op == K_H:
            m = 1 << a
            for r in range(nreg):
                if A[r] & m:
                    return -ERR_H_ON_REGISTER
            n = _hadamard(psi, mark, idx, n, m)
        elif op == K_CX:
            mc = 1 << a
            mt = 1 << b
            _permute(psi, mark, idx, n, mt, mc, buf)
            for r in range(nreg):
                if A[r] & mt:
                    A[r] ^= mc
        elif op == K_CXA:
            A[b] ^= 1 << a
        elif op == K_MEAS or op == K_RESET or op == K_MEASA or op == K_RESETA:
            is_reg = op == K_MEASA or op == K_RESETA
            m = 0 if is_reg else 1 << a
            Ar = A[a] if is_reg else 0
            Cr = C[a] if is_reg else 0
            if is_reg:
                p1, tot = _prob_reg(psi, idx, n, Ar, Cr, par)
            else:
                p1, tot = _prob_bit(psi, idx, n, m)
            val = 1 if u[uoff[k]] * tot < p1 else 0
            w = p1 if val == 1 else tot - p1
            n = _project(psi, mark, idx, n, is_reg, m, Ar, Cr, par, val, 1.0 / np.sqrt(w))
            if op == K_MEAS or op == K_MEASA:
                meas[b] = val
            if is_reg:
                A[a] = 0
                C[a] = val if op == K_MEASA else 0
            elif op == K_RESET and val == 1:
                _permute(psi, mark, idx, n, m, 0, buf)
                _flip_regs(A, C, a)
        elif op == K_NOISE or op == K_NOISEA:
            is_reg = op == K_NOISEA
            m = 0 if is_reg else 1 << a
            if use_inject:
                p = inject[b]
                if p == 0:
                    continue
                if p >= 2:  # Z component of Y and Z
                    for kk in range(n):
                        i = idx[kk]
                        if _value(i, is_reg, m, A[a] if is_reg else 0, C[a] if is_reg else 0, par):
                            psi[i] = -psi[i]
                if p <= 2:  # X component of X and Y
                    if is_reg:
                        C[a] ^= 1
                    else:
                        _permute(psi, mark, idx, n, m, 0, buf)
                        _flip_regs(A, C, a)
                continue
            if not noisy:
                continue
            a1 = kraus[b, 0]
            b1 = kraus[b, 1]
            a2 = kraus[b, 2]
            b2 = kraus[b, 3]
            cd = kraus[b, 4]
            ce = kraus[b, 5]
            Ar = A[a] if is_reg else 0
            Cr = C[a] if is_reg else 0
            if is_reg:
                p1, tot = _prob_reg(psi, idx, n, Ar, Cr, par)
            else:
                p1, tot = _prob_bit(psi, idx, n, m)
            p0 = tot - p1
            w1 = a1 * a1 * p0 + b1 * b1 * p1
            w2 = a2 * a2 * p0 + b2 * b2 * p1
            w3 = cd * cd * p1
            w4 = ce * ce * p0
            x = u[uoff[k]] * (w1 + w2 + w3 + w4)
            if x < w1 + w2:
                if x < w1:
                    fa, fb, w = a1, b1, w1
                else:
                    fa, fb, w = a2, b2, w2
                fa /= np.sqrt(w)
                fb /= np.sqrt(w)
                out = 0
                for kk in range(n):
                    i = idx[kk]
                    psi[i] *= fb if _value(i, is_reg, m, Ar, Cr, par) else fa
                    if _weight(psi[i]) > PRUNE:
                        idx[out] = i
                        out += 1
                    else:
                        psi[i] = 0.0
                        mark[i] = 0
                n = out
            else:
                decay = x < w1 + w2 + w3
                f = (cd / np.sqrt(w3)) if decay else (ce / np.sqrt(w4))
                if is_reg:
                    n = _project(psi, mark, idx, n, True, 0, Ar, Cr, par, 1 if decay else 0, f)
                    A[a] = 0
                    C[a] = 0 if decay else 1
                else:
                    n = _jump(psi, mark, idx, n, m, decay, f)
                    _flip_regs(A, C, a)
    return n


@njit(cache=True)
def _run_block(psi, mark, idx, nsup, A, C, code, qa, qb, uoff, kraus, U, inject, use_inject, noisy, meas, par,
               buf):
    for s in range(psi.shape[0]):
        n = _run_ops(psi[s], mark[s], idx[s], nsup[s], A[s], C[s], code, qa, qb, uoff, kraus, U[s], inject[s],
                     use_inject, noisy, meas[s], par, buf)
        if n < 0:
            return -n
        nsup[s] = n
    return ERR_OK


@njit(cache=True)
def _sample_readout(psi, idx, nsup, data_bits, u, flip_to0, flip_to1, out):
    """Sample a Z-basis readout of the data bits (state untouched) followed by
    classical relaxation/excitation flips."""
    for s in range(psi.shape[0]):
        tot = 0.0
        for k in range(nsup[s]):
            tot += _weight(psi[s, idx[s, k]])
        x = u[s, 0] * tot
        acc = 0.0
        pick = idx[s, nsup[s] - 1]
        for k in range(nsup[s]):
            acc += _weight(psi[s, idx[s, k]])
            if x < acc:
                pick = idx[s, k]
                break
        word = 0
        for q in range(data_bits.shape[0]):
            bit = (pick >> data_bits[q]) & 1
            r = u[s, 1 + q]
            if bit == 1 and r < flip_to0[q]:
                bit = 0
            elif bit == 0 and r < flip_to1[q]:
                bit = 1
            word |= bit << q
        out[s] = word


@dataclass
class _ShotStates:
    psi: np.ndarray
    mark: np.ndarray
    idx: np.ndarray
    nsup: np.ndarray
    A: np.ndarray
    C: np.ndarray
    buf: np.ndarray

    @classmethod
    def ground(cls, shots: int, dim: int, n_registers: int) -> "_ShotStates":
        psi = np.zeros((shots, dim), np.complex128)
        psi[:, 0] = 1.0
        mark = np.zeros((shots, dim), np.uint8)
        mark[:, 0] = 1
        idx = np.zeros((shots, dim), np.int64)
        A = np.zeros((shots, max(n_registers, 1)), np.int64)
        return cls(psi, mark, idx, np.ones(shots, np.int64), A, np.zeros_like(A), np.empty(dim, np.complex128))

    def run(self, prog: "TrajectoryProgram", kraus, U, inject, use_inject, noisy, meas, par) -> None:
        err = _run_block(self.psi, self.mark, self.idx, self.nsup, self.A, self.C, prog.code, prog.arg_a,
                         prog.arg_b, prog.u_offset, kraus, U, inject, use_inject, noisy, meas, par, self.buf)
        if err == ERR_H_ON_REGISTER:
            raise RuntimeError("Hadamard on a qubit entangled with a classical register; reorder the schedule")


def block_size(dim: int) -> int:
    """Shots per block; bounded so a block stays within a few hundred MB."""
    return int(max(1, min(TRAJ_BLOCK, (1 << 22) // dim)))


def _pauli_code(x: np.ndarray, z: np.ndarray) -> np.ndarray:
    """0=I, 1=X, 2=Y, 3=Z from frame bits."""
    return np.where(x & z, 2, np.where(x, 1, np.where(z, 3, 0))).astype(np.int8)


def run_gad_protocol_I(
    circuit: StabilizerCircuit,
    schedule: CoherenceSchedule,
    n_cycles: int,
    shots: int,
    seed: int,
    p0: float = 1.0,
    p1: float = 0.0,
    compress: bool = True,
    injected: tuple[np.ndarray, np.ndarray] | None = None,
    workers: int = 1,
) -> SyndromeRecord:
    """Chained GAD trajectories with a terminal readout after every cycle.

    Each shot carries its state vector from cycle to cycle; the terminal
    readout after cycle ``n`` is sampled from the saved state without
    collapsing it.

    Parameters
    ----------
    p0, p1 : float
        GAD relaxation/excitation weights (``p0 + p1 = 1``).
    compress : bool
        Keep measure-only target qubits as classical affine registers.
    injected : (x, z) bool arrays of shape ``(n_cycles, n_locations, shots)``, optional
        Replace Kraus sampling by these deterministic Paulis at each noise
        location; the terminal readout is then noise-free.  Used to check the
        Pauli-frame engine bit for bit.

    Returns
    -------
    SyndromeRecord
    """
    if not np.isclose(p0 + p1, 1.0) or min(p0, p1) < 0:
        raise ValueError("p0 and p1 must be non-negative and sum to one")
    if schedule.n_cycles < n_cycles:
        raise ValueError(f"schedule covers {schedule.n_cycles} cycles, {n_cycles} requested")
    prog = compile_program(circuit, compress=compress)
    cc = prog.cycle
    T1 = schedule.T1[:n_cycles]
    T2 = schedule.T2[:n_cycles]
    dur = cc.loc_duration_ns * 1e-9
    kraus = gad_kraus_params(T1[:, cc.loc_qubit], T2[:, cc.loc_qubit], dur[None, :], p0, p1)
    dq = list(DATA_QUBITS)
    gam = -np.expm1(-READOUT_NS * 1e-9 / T1[:, dq])
    to0, to1 = p0 * gam, p1 * gam
    if injected is not None:
        to0 = np.zeros_like(to0)
        to1 = np.zeros_like(to1)
    dim = 1 << prog.n_state_qubits
    par = _parity_table(dim)
    data_bits = prog.state_index[dq].astype(np.int64)
    if np.any(data_bits < 0):
        raise CapacityError("data qubits must live in the statevector")
    L = cc.n_locations
    bs = block_size(dim)

    def block(arg):
        b, ns = arg
        lo = b * bs
        st = _ShotStates.ground(ns, dim, prog.n_registers)
        meas = np.zeros((ns, cc.n_meas), np.uint8)
        no_inj = np.zeros((ns, max(L, 1)), np.int8)
        U = keyed_rng(seed, "traj", b, 0).random((ns, prog.n_uniforms))
        st.run(prog, kraus[0], U, no_inj, False, False, meas, par)
        prep_z = _pack(meas[:, cc.z_slots])
        prep_x = _pack(meas[:, cc.x_slots])
        zs = np.empty((ns, n_cycles), np.uint8)
        xs = np.empty((ns, n_cycles), np.uint8)
        td = np.empty((ns, n_cycles), np.uint16)
        out = np.empty(ns, np.int64)
        for c in range(n_cycles):
            U = keyed_rng(seed, "traj", b, c + 1).random((ns, prog.n_uniforms))
            if injected is not None:
                inj = np.ascontiguousarray(
                    _pauli_code(injected[0][c][:, lo:lo + ns], injected[1][c][:, lo:lo + ns]).T)
                st.run(prog, kraus[c], U, inj, True, True, meas, par)
            else:
                st.run(prog, kraus[c], U, no_inj, False, True, meas, par)
            zs[:, c] = _pack(meas[:, cc.z_slots])
            xs[:, c] = _pack(meas[:, cc.x_slots])
            Uf = keyed_rng(seed, "traj_final", b, c).random((ns, 1 + len(dq)))
            _sample_readout(st.psi, st.idx, st.nsup, data_bits, Uf, to0[c], to1[c], out)
            td[:, c] = out
        return zs, xs, prep_z, prep_x, td

    blocks = [(b, min(bs, shots - b * bs)) for b in range((shots + bs - 1) // bs)]
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(block, blocks))
    else:
        parts = [block(b) for b in blocks]
    return SyndromeRecord(
        "I",
        np.concatenate([p[0] for p in parts]),
        np.concatenate([p[1] for p in parts]),
        np.concatenate([p[2] for p in parts]),
        np.concatenate([p[3] for p in parts]),
        np.arange(1, n_cycles + 1),
        np.concatenate([p[4] for p in parts]),
        0,
        _manifest(circuit, schedule, seed, shots, n_cycles, "gad-trajectory",
                  {"p0": p0, "p1": p1, "compress": compress, "injected": injected is not None}),
    )


def _pack(bits: np.ndarray) -> np.ndarray:
    return (bits.astype(np.uint8) << np.arange(bits.shape[1], dtype=np.uint8)).sum(axis=1).astype(np.uint8)


def single_qubit_ensemble(kraus_params: np.ndarray, initial, trajectories: int, seed: int,
                          steps: int = 1) -> np.ndarray:
    """Apply ``steps`` rounds of one GAD Kraus set to many copies of a one-qubit state.

    Parameters
    ----------
    kraus_params : array of 6 floats
        Output of :func:`gad_kraus_params` for a single location.
    initial : array of 2 complex
        Normalised starting state.

    Returns
    -------
    numpy.ndarray
        Final normalised states, shape ``(trajectories, 2)``.
    """
    rng = np.random.default_rng(seed)
    init = np.asarray(initial, np.complex128)
    st = _ShotStates.ground(trajectories, 2, 0)
    st.psi[:] = init
    st.mark[:] = (init != 0).astype(np.uint8)
    sup = np.flatnonzero(init)
    st.idx[:, : len(sup)] = sup
    st.nsup[:] = len(sup)
    prog = TrajectoryProgram(np.array([K_NOISE], np.int64), np.array([0], np.int64), np.array([0], np.int64),
                             np.array([0], np.int64), 1, 1, 0, np.array([0]), np.array([-1]), None)
    meas = np.zeros((trajectories, 1), np.uint8)
    inj = np.zeros((trajectories, 1), np.int8)
    par = _parity_table(2)
    kr = np.asarray(kraus_params, float).reshape(1, 6)
    for _ in range(steps):
        st.run(prog, kr, rng.random((trajectories, 1)), inj, False, True, meas, par)
    return st.psi / np.linalg.norm(st.psi, axis=1, keepdims=True)
