"""Quasiparticle density to per-cycle (T1, T2).

Rates are in s⁻¹ and times in seconds.  The extra relaxation is linear in the
normalised density ``x``::

    ΔΓ1 = (x / π) sqrt(2 ω01 Δ / ħ)

and the extra dephasing, with ``W = W0(4π / x²)`` and the charging energy
taken as an angular rate ``E_C / ħ``::

    ΔΓφ = (E_C x² / 2π²) exp(W / 2) = (E_C x / π²) sqrt(π / W)

The right-hand form never exponentiates ``W``; ``W`` itself is computed from
``log(4π / x²)`` so tiny densities never overflow.
"""

from __future__ import annotations

import csv
import hashlib
import io
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy import constants as sc

from .qp_dynamics import QpDensity

_INV_E = math.exp(-1.0)
UEV = 1e-6 * sc.eV


@dataclass(frozen=True)
class TransmonParams:
    """Transmon parameters (defaults: reference device).

    Frequencies are stored in Hz (``E/h``) and converted where needed.
    """

    f01_hz: float = 5.0e9
    E_C_hz: float = 0.4e9
    E_J_hz: float = 9.234e9
    gap_ueV: float = 191.0
    T1_base: float = 100e-6
    T2_base: float = 200e-6
    Gamma_phi_base: float = 0.0

    def __post_init__(self):
        for name in ("f01_hz", "E_C_hz", "E_J_hz", "gap_ueV", "T1_base", "T2_base"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.Gamma_phi_base < 0:
            raise ValueError("Gamma_phi_base must be non-negative")
        if self.T2_base > 2 * self.T1_base * (1 + 1e-12):
            raise ValueError("T2_base exceeds 2*T1_base")

    @property
    def omega01(self) -> float:
        return 2 * math.pi * self.f01_hz

    @property
    def charging_rate(self) -> float:
        """``E_C / ħ`` in rad/s."""
        return 2 * math.pi * self.E_C_hz

    @property
    def E_C(self) -> float:
        return sc.h * self.E_C_hz

    @property
    def E_J(self) -> float:
        return sc.h * self.E_J_hz

    @property
    def ej_over_ec(self) -> float:
        return self.E_J_hz / self.E_C_hz

    @property
    def gap(self) -> float:
        return self.gap_ueV * UEV


# --- Lambert W, principal branch ------------------------------------------------------


def _halley(w, z, iters=60):
    for _ in range(iters):
        ew = np.exp(w)
        f = w * ew - z
        wp1 = w + 1.0
        with np.errstate(divide="ignore", invalid="ignore"):
            denom = ew * wp1 - (w + 2.0) * f / (2.0 * wp1)
        # at the branch point w = -1 the derivative vanishes; the guess is exact there
        safe = np.isfinite(denom) & (np.abs(denom) > 0)
        step = np.where(safe, f / np.where(safe, denom, 1.0), 0.0)
        w_new = w - step
        done = np.abs(w_new - w) <= 1e-15 * (1.0 + np.abs(w_new))
        w = w_new
        if np.all(done):
            break
    return w


def lambert_w0(z):
    """Principal branch ``W0(z)`` for real ``z >= -1/e`` (scalar or array).

    Halley iteration from a series guess near the branch point, ``log1p`` in the
    middle and the asymptotic ``L1 - L2 + L2/L1`` for large ``z``.
    """
    z_arr = np.asarray(z, dtype=float)
    if np.any(np.isnan(z_arr)):
        raise ValueError("lambert_w0 of NaN")
    if np.any(z_arr < -_INV_E * (1 + 1e-15)):
        raise ValueError("lambert_w0 is undefined below -1/e")
    zc = np.maximum(z_arr, -_INV_E)
    w = np.empty_like(zc)
    near = zc < -0.25
    mid = (~near) & (zc <= 3.0)
    far = zc > 3.0
    p = np.sqrt(np.maximum(2.0 * (math.e * zc[near] + 1.0), 0.0))
    w[near] = -1.0 + p - p * p / 3.0 + 11.0 / 72.0 * p**3
    w[mid] = np.log1p(zc[mid])
    l1 = np.log(zc[far])
    l2 = np.log(l1)
    w[far] = l1 - l2 + l2 / l1
    w = _halley(w, zc)
    w = np.where(zc == 0, 0.0, w)
    return float(w) if np.ndim(z) == 0 else w


def lambert_w0_log(log_z):
    """``W0(exp(log_z))`` for ``log_z > 1`` without forming ``exp(log_z)``.

    Solves ``w + log(w) = log_z`` by Halley iteration.
    """
    L = np.asarray(log_z, dtype=float)
    if np.any(L <= 1.0):
        raise ValueError("lambert_w0_log expects log_z > 1")
    w = L - np.log(L) + np.log(L) / L
    for _ in range(60):
        f = w + np.log(w) - L
        f1 = 1.0 + 1.0 / w
        f2 = -1.0 / (w * w)
        step = f / (f1 - f * f2 / (2.0 * f1))
        w = w - step
        if np.all(np.abs(step) <= 1e-15 * np.abs(w)):
            break
    return float(w) if np.ndim(log_z) == 0 else w


def _w_of_density(x: np.ndarray) -> np.ndarray:
    """``W0(4π/x²)`` for ``x > 0`` using the log form."""
    log_z = math.log(4 * math.pi) - 2.0 * np.log(x)
    return lambert_w0_log(log_z)


# --- temperature and rates -------------------------------------------------------------


def effective_temperature(x_qp, gap: float = 191.0):
    """Temperature (K) of the thermal distribution with normalised density ``x_qp``.

    ``gap`` in μeV.  Requires ``0 < x_qp < 1``.
    """
    x = np.asarray(x_qp, dtype=float)
    if np.any(x <= 0) or np.any(x >= 1):
        raise ValueError("effective temperature needs 0 < x_qp < 1")
    W = _w_of_density(x)
    T = 2.0 * gap * UEV / (sc.k * W)
    return float(T) if np.ndim(x_qp) == 0 else T


def density_at_temperature(T, gap: float = 191.0):
    """Equilibrium ``x_qp = sqrt(2π k T / Δ) exp(-Δ / k T)``."""
    T = np.asarray(T, dtype=float)
    if np.any(T <= 0):
        raise ValueError("temperature must be positive")
    r = sc.k * T / (gap * UEV)
    x = np.sqrt(2 * math.pi * r) * np.exp(-1.0 / r)
    return float(x) if x.ndim == 0 else x


def delta_gamma1(x_qp, params: TransmonParams = TransmonParams()):
    """Extra relaxation rate (s⁻¹); exactly linear in ``x_qp``."""
    x = np.asarray(x_qp, dtype=float)
    if np.any(x < 0):
        raise ValueError("x_qp must be non-negative")
    pref = math.sqrt(2 * params.omega01 * params.gap / sc.hbar) / math.pi
    out = pref * x
    return float(out) if np.ndim(x_qp) == 0 else out


def delta_gamma_phi(x_qp, params: TransmonParams = TransmonParams()):
    """Extra pure-dephasing rate (s⁻¹); zero at ``x_qp = 0``."""
    x = np.asarray(x_qp, dtype=float)
    if np.any(x < 0):
        raise ValueError("x_qp must be non-negative")
    out = np.zeros_like(x)
    pos = x > 0
    if np.any(pos):
        W = _w_of_density(x[pos])
        out[pos] = params.charging_rate * x[pos] / math.pi**2 * np.sqrt(math.pi / W)
    return float(out) if np.ndim(x_qp) == 0 else out


def delta_gamma_phi_direct(x_qp: float, params: TransmonParams = TransmonParams()) -> float:
    """Unsimplified form ``(E_C x²/2π²) exp(W/2)``; overflows for very small ``x``."""
    if x_qp == 0:
        return 0.0
    W = lambert_w0(4 * math.pi / x_qp**2)
    return params.charging_rate * x_qp**2 / (2 * math.pi**2) * math.exp(W / 2)


def delta_gamma_phi_from_temperature(T: float, params: TransmonParams = TransmonParams()) -> float:
    """Same rate expressed through the effective temperature, ``W = 2Δ / kT``."""
    W = 2 * params.gap / (sc.k * T)
    return 2 * params.charging_rate / (math.pi * W) * math.exp(-W / 2)


def coherence_times(x_qp, params: TransmonParams = TransmonParams()):
    """``(T1, T2)`` in seconds for density ``x_qp``."""
    x = np.asarray(x_qp, dtype=float)
    g1 = 1.0 / params.T1_base + delta_gamma1(x, params)
    T1 = 1.0 / g1
    T2 = 1.0 / (g1 / 2.0 + delta_gamma_phi(x, params) + params.Gamma_phi_base)
    return T1, T2


# --- schedules -------------------------------------------------------------------------


@dataclass
class CoherenceSchedule:
    """Per-cycle, per-qubit ``T1``/``T2`` (seconds).

    Arrays have shape ``(n_cycles, n_qubits)``.  ``x_qp`` keeps the sampled
    densities for diagnostics.
    """

    T1: np.ndarray
    T2: np.ndarray
    cycle_duration: float = 1e-6
    x_qp: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        self.T1 = np.atleast_2d(np.asarray(self.T1, dtype=float))
        self.T2 = np.atleast_2d(np.asarray(self.T2, dtype=float))
        if self.T1.shape != self.T2.shape:
            raise ValueError("T1 and T2 shapes differ")
        if np.any(self.T1 <= 0) or np.any(self.T2 <= 0):
            raise ValueError("coherence times must be positive")
        if np.any(self.T2 > 2 * self.T1 * (1 + 1e-12)):
            raise ValueError("schedule has T2 > 2*T1")

    @property
    def n_cycles(self) -> int:
        return self.T1.shape[0]

    @property
    def n_qubits(self) -> int:
        return self.T1.shape[1]

    def __getitem__(self, sl: slice) -> "CoherenceSchedule":
        x = None if self.x_qp is None else self.x_qp[sl]
        return CoherenceSchedule(self.T1[sl], self.T2[sl], self.cycle_duration, x)

    def to_csv(self, path: str | Path | None = None) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["cycle", "qubit", "T1_s", "T2_s"])
        for c in range(self.n_cycles):
            for q in range(self.n_qubits):
                w.writerow([c, q, "%.17g" % self.T1[c, q], "%.17g" % self.T2[c, q]])
        text = buf.getvalue()
        if path is not None:
            Path(path).write_text(text)
        return text

    def digest(self) -> str:
        h = hashlib.sha256()
        h.update(np.ascontiguousarray(self.T1).tobytes())
        h.update(np.ascontiguousarray(self.T2).tobytes())
        h.update(repr(self.cycle_duration).encode())
        return h.hexdigest()[:16]


def constant_schedule(
    n_cycles: int, n_qubits: int = 17, T1: float = 100e-6, T2: float = 200e-6, cycle: float = 1e-6
) -> CoherenceSchedule:
    return CoherenceSchedule(
        np.full((n_cycles, n_qubits), T1), np.full((n_cycles, n_qubits), T2), cycle, np.zeros((n_cycles, n_qubits))
    )


def baseline_schedule(n_cycles: int, params: TransmonParams | Sequence[TransmonParams] = TransmonParams(),
                      n_qubits: int = 17, cycle: float = 1e-6) -> CoherenceSchedule:
    """Schedule with no quasiparticle excess."""
    return _from_x(np.zeros((n_cycles, n_qubits)), params, cycle)


def _from_x(x: np.ndarray, params, cycle: float) -> CoherenceSchedule:
    nq = x.shape[1]
    plist = [params] * nq if isinstance(params, TransmonParams) else list(params)
    if len(plist) != nq:
        raise ValueError(f"{len(plist)} parameter sets for {nq} qubits")
    T1 = np.empty_like(x)
    T2 = np.empty_like(x)
    for q, p in enumerate(plist):
        T1[:, q], T2[:, q] = coherence_times(x[:, q], p)
    return CoherenceSchedule(T1, T2, cycle, x)


def sample_density(
    density: QpDensity,
    n_cycles: int | None = None,
    cycle: float = 1e-6,
    sampling: str = "start",
    resample: bool = False,
) -> np.ndarray:
    """Per-cycle densities ``(n_cycles, n_qubits)`` from a density on its grid.

    ``sampling='start'`` takes the value at each cycle's first instant;
    ``'average'`` the trapezoidal mean over the cycle.
    """
    t = density.time_grid - density.time_grid[0]
    dt = t[1] - t[0]
    ratio = cycle / dt
    aligned = abs(ratio - round(ratio)) < 1e-9 * max(1.0, ratio) and round(ratio) >= 1
    span = t[-1]
    max_cycles = int(math.floor(span / cycle + 1e-9)) if sampling == "average" else int(math.floor(span / cycle + 1e-9)) + 1
    if n_cycles is None:
        n_cycles = max_cycles
    if n_cycles > max_cycles:
        raise ValueError(f"density covers {max_cycles} cycles, {n_cycles} requested")
    if not aligned and not resample:
        raise ValueError(f"cycle {cycle:g} s is not a multiple of the grid step {dt:g} s; enable resampling")
    x = density.x_qp
    starts = np.arange(n_cycles) * cycle
    if sampling == "start":
        if aligned:
            idx = np.rint(starts / dt).astype(int)
            return x[:, idx].T.copy()
        return np.stack([np.interp(starts, t, row) for row in x], axis=1)
    if sampling != "average":
        raise ValueError(f"unknown sampling mode {sampling!r}")
    sub = max(int(round(ratio)), 1) if aligned else 16
    out = np.empty((n_cycles, x.shape[0]))
    for c, t0 in enumerate(starts):
        tt = np.linspace(t0, t0 + cycle, sub + 1)
        vals = np.stack([np.interp(tt, t, row) for row in x])
        out[c] = np.trapezoid(vals, tt, axis=1) / cycle
    return out


def build_schedule(
    density: QpDensity,
    params: TransmonParams | Sequence[TransmonParams] = TransmonParams(),
    cycle: float = 1e-6,
    n_cycles: int | None = None,
    sampling: str = "start",
    resample: bool = False,
) -> CoherenceSchedule:
    """Quasi-equilibrium schedule: one ``(T1, T2)`` per cycle and qubit."""
    x = sample_density(density, n_cycles, cycle, sampling, resample)
    return _from_x(x, params, cycle)


def concat_schedules(*parts: CoherenceSchedule) -> CoherenceSchedule:
    cyc = {p.cycle_duration for p in parts}
    if len(cyc) != 1:
        raise ValueError("schedules have different cycle durations")
    xs = [p.x_qp if p.x_qp is not None else np.full(p.T1.shape, np.nan) for p in parts]
    return CoherenceSchedule(
        np.concatenate([p.T1 for p in parts]), np.concatenate([p.T2 for p in parts]), cyc.pop(), np.concatenate(xs)
    )
