"""Generalized amplitude damping (GAD) and its Pauli twirl.

Choi convention: rows/columns are indexed by ``(input i, output k)`` flattened to
``2*i + k`` and ``Λ[(i,k),(j,l)] = <k| E(|i><j|) |l>``.  With
``γ = 1 - exp(-t/T1)`` the diagonal is ``[1 - p1 γ, p1 γ, p0 γ, 1 - p0 γ]`` and
the only coherence is ``Λ[0,3] = Λ[3,0] = exp(-t/T2)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

PAULIS = {
    "I": np.eye(2, dtype=complex),
    "X": np.array([[0, 1], [1, 0]], dtype=complex),
    "Y": np.array([[0, -1j], [1j, 0]]),
    "Z": np.array([[1, 0], [0, -1]], dtype=complex),
}

_EIG_CLIP = -1e-14


class NonPhysicalChannel(ValueError):
    """Raised for (T1, T2) combinations outside the physical region."""


@dataclass(frozen=True)
class PauliChannel:
    p_i: float
    p_x: float
    p_y: float
    p_z: float

    def __post_init__(self):
        probs = np.array([self.p_i, self.p_x, self.p_y, self.p_z])
        if np.any(probs < 0) or np.any(probs > 1) or abs(probs.sum() - 1) > 1e-12:
            raise ValueError(f"not a probability vector: {probs}")

    def as_array(self) -> np.ndarray:
        return np.array([self.p_i, self.p_x, self.p_y, self.p_z])


@dataclass(frozen=True)
class GadChannel:
    t_gate: float
    T1: float
    T2: float
    p0: float
    p1: float
    choi: np.ndarray = field(repr=False)
    kraus: tuple[np.ndarray, ...] = field(repr=False)

    def apply(self, rho: np.ndarray) -> np.ndarray:
        return sum(K @ rho @ K.conj().T for K in self.kraus)

    def completeness_error(self) -> float:
        s = sum(K.conj().T @ K for K in self.kraus)
        return float(np.max(np.abs(s - np.eye(2))))

    def to_dict(self) -> dict:
        return {"t_gate": self.t_gate, "T1": self.T1, "T2": self.T2, "p0": self.p0, "p1": self.p1}


def _check_times(T1, T2, t_gate):
    T1 = np.asarray(T1, dtype=float)
    T2 = np.asarray(T2, dtype=float)
    if np.any(T1 <= 0) or np.any(T2 <= 0):
        raise NonPhysicalChannel("T1 and T2 must be positive")
    if np.any(T2 > 2 * T1 * (1 + 1e-12)):
        raise NonPhysicalChannel("T2 > 2*T1 is not a physical channel")
    if np.any(np.asarray(t_gate) < 0):
        raise ValueError("gate time must be non-negative")


def gad_choi(T1: float, T2: float, t_gate: float, p0: float = 1.0, p1: float = 0.0) -> np.ndarray:
    gamma = -np.expm1(-t_gate / T1)
    coh = np.exp(-t_gate / T2)
    choi = np.diag([1 - p1 * gamma, p1 * gamma, p0 * gamma, 1 - p0 * gamma]).astype(float)
    choi[0, 3] = choi[3, 0] = coh
    return choi


def kraus_from_choi(choi: np.ndarray) -> tuple[np.ndarray, ...]:
    """Kraus operators from the Choi eigendecomposition, ``K[k, i] = sqrt(λ) v[(i,k)]``."""
    w, v = np.linalg.eigh(choi)
    if np.any(w < _EIG_CLIP):
        raise NonPhysicalChannel(f"Choi matrix not PSD (min eigenvalue {w.min():.3e})")
    ops = []
    for lam, vec in zip(w, v.T):
        if lam <= 0:
            continue
        K = np.sqrt(lam) * vec.reshape(2, 2).T
        ops.append(K.astype(complex))
    return tuple(ops)


def build_gad(T1: float, T2: float, t_gate: float, p0: float = 1.0, p1: float = 0.0) -> GadChannel:
    """Thermal relaxation channel for a gate of duration ``t_gate``.

    Parameters
    ----------
    T1, T2 : float
        Relaxation and coherence times (same unit as ``t_gate``).
    p0, p1 : float
        Ground/excited equilibrium populations; must sum to one.
    """
    _check_times(T1, T2, t_gate)
    if abs(p0 + p1 - 1) > 1e-12 or min(p0, p1) < 0:
        raise ValueError("p0, p1 must be populations summing to 1")
    choi = gad_choi(T1, T2, t_gate, p0, p1)
    return GadChannel(t_gate, T1, T2, p0, p1, choi, kraus_from_choi(choi))


def ptgad_probs(T1, T2, t_gate):
    """Vectorised twirled coefficients ``(p_x, p_y, p_z)``."""
    T1 = np.asarray(T1, dtype=float)
    T2 = np.asarray(T2, dtype=float)
    t_gate = np.asarray(t_gate, dtype=float)
    px = -np.expm1(-t_gate / T1) / 4.0
    pz = -np.expm1(-t_gate / T2) / 2.0 - px
    # T2 = 2 T1 gives pz = (1 - e^{-t/2T1})^2 / 4 >= 0; clamp rounding below it
    if np.any(pz < -1e-15):
        raise NonPhysicalChannel("negative Z probability: T2 > 2*T1")
    return px, px, np.maximum(pz, 0.0)


def pauli_twirl(channel: GadChannel) -> PauliChannel:
    px, py, pz = ptgad_probs(channel.T1, channel.T2, channel.t_gate)
    px, py, pz = float(px), float(py), float(pz)
    return PauliChannel(1.0 - px - py - pz, px, py, pz)


def twirl_choi_numerically(choi: np.ndarray) -> np.ndarray:
    """Average ``(P^T ⊗ P) Λ (P^T ⊗ P)^†`` over the Paulis and read off ``(p_i, p_x, p_y, p_z)``."""
    acc = np.zeros((4, 4), dtype=complex)
    for P in PAULIS.values():
        # conjugating the channel by P maps K -> P K P, i.e. the Choi vector
        # v[(i,k)] = K[k,i] by P^T on the input and P on the output
        U = np.kron(P.T, P)
        acc += U @ choi @ U.conj().T
    acc /= 4.0
    out = []
    for P in PAULIS.values():
        vec = P.T.reshape(4)  # vec[(i,k)] = P[k, i]
        out.append(np.real(vec.conj() @ acc @ vec) / 4.0)
    return np.array(out)


def apply_kraus(
    state: np.ndarray, channel: GadChannel, qubit: int, rng: np.random.Generator, max_restarts: int = 8
) -> np.ndarray:
    """One Monte Carlo trajectory step of ``channel`` on ``qubit`` of a statevector.

    Qubit ``q`` is bit ``q`` of the amplitude index.  A fresh normalised state
    is returned; the input is not modified.
    """
    n = int(np.log2(state.size))
    if 2**n != state.size:
        raise ValueError("state length is not a power of two")
    if not 0 <= qubit < n:
        raise IndexError(f"qubit {qubit} out of range for {n} qubits")
    psi = state.reshape((2,) * n)
    axis = n - 1 - qubit
    for _ in range(max_restarts):
        u = rng.random()
        acc = 0.0
        for K in channel.kraus:
            out = np.moveaxis(np.tensordot(K, psi, axes=([1], [axis])), 0, axis)
            w = float(np.vdot(out, out).real)
            acc += w
            if u < acc and w > 1e-300:
                return (out / np.sqrt(w)).reshape(-1)
    raise FloatingPointError(
        f"Kraus sampling failed after {max_restarts} restarts (cumulative weight {acc:.3e})"
    )
