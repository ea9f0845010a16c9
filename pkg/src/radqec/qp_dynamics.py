"""Quasiparticle generation traces and the recombination/decay ODE.

Units inside this module: density in μm⁻³, time in μs, generation in
μm⁻³/μs.  ``QpTrace.time_grid`` is stored in seconds for interchange with the
rest of the package.

The ODE per qubit is ``dn/dt = -r n² - s n + g(t)`` with ``g`` piecewise
linear between trace samples; ``x = n / n_cp``.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy import constants as sc

from .surface_code import CodeLayout, build_layout, qubit_labels

US = 1e-6


class TraceFormatError(ValueError):
    """Malformed trace file; message carries the line/record context."""


class IntegrationError(RuntimeError):
    pass


@dataclass(frozen=True)
class QpRates:
    """``r`` in μm³/μs (recombination), ``s`` in 1/μs (trapping/decay)."""

    r: float = 25e-6
    s: float = 0.05

    def __post_init__(self):
        if self.r < 0 or self.s < 0:
            raise ValueError("rates must be non-negative")


@dataclass
class QpTrace:
    time_grid: np.ndarray  # seconds, uniform
    generation: np.ndarray  # (n_qubits, n_times), μm⁻³/μs
    qubit_ids: tuple[str, ...]
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        self.time_grid = np.asarray(self.time_grid, dtype=float)
        self.generation = np.atleast_2d(np.asarray(self.generation, dtype=float))
        self.qubit_ids = tuple(self.qubit_ids)
        self.validate()

    @property
    def dt(self) -> float:
        return float(self.time_grid[1] - self.time_grid[0]) if self.time_grid.size > 1 else 0.0

    @property
    def n_qubits(self) -> int:
        return self.generation.shape[0]

    def validate(self) -> None:
        t = self.time_grid
        if t.ndim != 1 or t.size < 2:
            raise TraceFormatError("time grid needs at least two samples")
        steps = np.diff(t)
        if np.any(steps <= 0):
            raise TraceFormatError("time grid is not strictly increasing")
        if np.max(np.abs(steps - steps[0])) > 1e-9 * max(abs(steps[0]), abs(t[-1])):
            raise TraceFormatError("time grid is not uniform")
        if self.generation.shape[1] != t.size:
            raise TraceFormatError(
                f"generation has {self.generation.shape[1]} samples per qubit, grid has {t.size}"
            )
        if len(self.qubit_ids) != self.generation.shape[0]:
            raise TraceFormatError("qubit id count does not match generation rows")
        bad = ~np.isfinite(self.generation)
        if bad.any():
            q, k = np.argwhere(bad)[0]
            raise TraceFormatError(f"non-finite generation for qubit {q} at t={t[k]:.6g} s")
        if np.any(self.generation < 0):
            q, k = np.argwhere(self.generation < 0)[0]
            raise TraceFormatError(f"negative generation for qubit {q} at t={t[k]:.6g} s")


@dataclass
class QpDensity:
    time_grid: np.ndarray  # seconds
    x_qp: np.ndarray  # (n_qubits, n_times)
    n_cp: float
    qubit_ids: tuple[str, ...] = ()

    def __post_init__(self):
        if np.any(self.x_qp < 0) or np.any(self.x_qp >= 1):
            raise IntegrationError("normalised density left [0, 1)")

    @property
    def n_qp(self) -> np.ndarray:
        return self.x_qp * self.n_cp


def compute_ncp(gap: float = 191.0, conduction_band: float = 11.3) -> float:
    """Cooper-pair density ``2 g1(0) Δ`` in μm⁻³.

    Parameters
    ----------
    gap : float
        Superconducting gap in μeV.
    conduction_band : float
        Conduction-band (Fermi) energy in eV; ``g1`` is the free-electron
        single-spin density of states ``sqrt(2 m³ E) / (2 π² ħ³)``.
    """
    if gap <= 0 or conduction_band <= 0:
        raise ValueError("gap and conduction band energy must be positive")
    e_f = conduction_band * sc.eV
    g1 = math.sqrt(2 * sc.m_e**3 * e_f) / (2 * math.pi**2 * sc.hbar**3)  # 1/(J m³)
    return 2 * g1 * gap * 1e-6 * sc.eV * 1e-18


# Dormand-Prince 5(4) tableau
_C = np.array([0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1, 1])
_A = [
    [],
    [1 / 5],
    [3 / 40, 9 / 40],
    [44 / 45, -56 / 15, 32 / 9],
    [19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729],
    [9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656],
    [35 / 384, 0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84],
]
_B5 = np.array([35 / 384, 0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0])
_B4 = np.array([5179 / 57600, 0, 7571 / 16695, 393 / 640, -92097 / 339200, 187 / 2100, 1 / 40])
_E = _B5 - _B4


def _dp_step(n, t0, h, g0, slope, r, s):
    k = np.empty((7,) + n.shape)
    for i in range(7):
        y = n.copy()
        for j, a in enumerate(_A[i]):
            if a:
                y += h * a * k[j]
        g = g0 + slope * (t0 + _C[i] * h)
        k[i] = -r * y * y - s * y + g
    y5 = n + h * np.tensordot(_B5, k, axes=1)
    err = h * np.tensordot(_E, k, axes=1)
    return y5, err


def integrate_qp(
    trace: QpTrace,
    rates: QpRates = QpRates(),
    n_cp: float | None = None,
    initial: float | Sequence[float] | np.ndarray = 0.0,
    atol: float = 1e-12,
    rtol: float = 1e-9,
    fixed_step: float | None = None,
) -> QpDensity:
    """Integrate every qubit's density on the trace grid.

    Parameters
    ----------
    initial : float or array
        Initial density ``n(0)`` in μm⁻³ per qubit.
    atol : float
        Absolute tolerance in normalised (``x``) units.
    fixed_step : float, optional
        Step in μs for a non-adaptive run (each grid interval is split into
        ``ceil(dt / fixed_step)`` equal steps); used for convergence checks.
    """
    n_cp = compute_ncp() if n_cp is None else float(n_cp)
    if n_cp <= 0:
        raise ValueError("n_cp must be positive")
    t_us = trace.time_grid / US
    g = trace.generation
    nq = trace.n_qubits
    n = np.broadcast_to(np.asarray(initial, dtype=float), (nq,)).copy()
    if np.any(n < 0) or not np.all(np.isfinite(n)):
        raise ValueError("initial density must be finite and non-negative")
    out = np.empty((nq, t_us.size))
    out[:, 0] = n
    abs_tol = atol * n_cp
    h = (t_us[1] - t_us[0]) if fixed_step is None else fixed_step
    step_no = 0
    for i in range(t_us.size - 1):
        ta, tb = t_us[i], t_us[i + 1]
        slope = (g[:, i + 1] - g[:, i]) / (tb - ta)
        g0 = g[:, i] - slope * ta
        t = ta
        if fixed_step is not None:
            m = max(1, math.ceil((tb - ta) / fixed_step - 1e-12))
            hh = (tb - ta) / m
            for _ in range(m):
                n, _ = _dp_step(n, t, hh, g0, slope, rates.r, rates.s)
                t += hh
                step_no += 1
                _check_step(n, abs_tol, step_no, t)
        else:
            while t < tb:
                h = min(h, tb - t)
                y, err = _dp_step(n, t, h, g0, slope, rates.r, rates.s)
                scale = abs_tol + rtol * np.maximum(np.abs(n), np.abs(y))
                e = float(np.max(np.abs(err) / scale))
                if e <= 1.0:
                    t = tb if tb - (t + h) < 1e-12 * max(1.0, tb) else t + h
                    n = y
                    step_no += 1
                    _check_step(n, abs_tol, step_no, t)
                fac = 5.0 if e == 0 else min(5.0, max(0.2, 0.9 * e ** -0.2))
                h *= fac
                if h < 1e-14 * max(1.0, tb):
                    raise IntegrationError(f"step size underflow at t={t:.6g} μs")
        n = np.maximum(n, 0.0)
        out[:, i + 1] = n
    return QpDensity(trace.time_grid.copy(), out / n_cp, n_cp, trace.qubit_ids)


def _check_step(n, abs_tol, step_no, t):
    if np.any(n < -abs_tol):
        q = int(np.argmin(n))
        raise IntegrationError(f"negative density {n[q]:.3e} for qubit {q} at step {step_no} (t={t:.6g} μs)")
    if not np.all(np.isfinite(n)):
        raise IntegrationError(f"non-finite density at step {step_no} (t={t:.6g} μs)")


def steady_state(g: float, rates: QpRates) -> float:
    """Positive root of ``r n² + s n = g``."""
    if rates.r == 0:
        return g / rates.s
    return (-rates.s + math.sqrt(rates.s**2 + 4 * rates.r * g)) / (2 * rates.r)


# --- synthetic generation traces -------------------------------------------------------


@dataclass(frozen=True)
class SyntheticProfile:
    """Parameters of the phenomenological stand-in for a phonon-transport run.

    Per-qubit peak generation::

        A * [(1-residual) * exp(-d/decay_length) * exp(-film_attn * t_film)
             + residual * exp(-d/residual_length) * exp(-residual_film_attn * t_film)]

    where ``d`` is the qubit-strike distance (mm) and ``t_film`` the
    down-converting film thickness (μm).  The first term is the phonon flux a
    thin film already removes; the second is a small, more local part that
    even thick films only remove slowly.  Time dependence::

        (1 - exp(-t/rise)) * [(1-slow) * exp(-t/fall) + slow * exp(-t/tail)]

    None of these numbers is physical; they are tuned so that the reference
    traces reproduce the qualitative burst behaviour (see the README).
    """

    amplitude: float = 150.0  # μm⁻³/μs
    decay_length: float = 20.0  # mm
    residual: float = 0.006
    residual_length: float = 4.0  # mm
    film_attn: float = 29.0  # 1/μm
    residual_film_attn: float = 0.045  # 1/μm
    rise: float = 0.3  # μs
    fall: float = 20.0  # μs
    slow: float = 0.05
    tail: float = 350.0  # μs
    jitter: float = 0.0  # relative per-qubit amplitude noise (seeded)

    def amplitudes(self, distances: np.ndarray, film: float) -> np.ndarray:
        d = np.asarray(distances, dtype=float)
        if math.isinf(film):
            return np.zeros_like(d)
        bulk = (1 - self.residual) * np.exp(-d / self.decay_length) * math.exp(-self.film_attn * film)
        res = self.residual * np.exp(-d / self.residual_length) * math.exp(-self.residual_film_attn * film)
        return self.amplitude * (bulk + res)

    def shape(self, t_us: np.ndarray) -> np.ndarray:
        t = np.asarray(t_us, dtype=float)
        rise = -np.expm1(-t / self.rise)
        return rise * ((1 - self.slow) * np.exp(-t / self.fall) + self.slow * np.exp(-t / self.tail))


def synthesize_trace(
    strike: Sequence[float] | None = None,
    chip: CodeLayout | None = None,
    mitigation: float = 0.0,
    profile: SyntheticProfile = SyntheticProfile(),
    duration_us: float = 1510.0,
    dt_us: float = 0.5,
    seed: int | None = None,
) -> QpTrace:
    """Phenomenological generation trace for a single strike.

    Parameters
    ----------
    strike : (x, y) in mm, default the layout's reference strike point.
    mitigation : float
        Film thickness in μm; ``inf`` suppresses all generation.
    seed : int, optional
        Only used when ``profile.jitter > 0``.
    """
    chip = chip or build_layout(1.0)
    strike = chip.default_strike() if strike is None else tuple(float(v) for v in strike)
    if not chip.contains(strike):
        raise ValueError(f"strike {strike} lies outside the {chip.chip_width} mm chip")
    if mitigation < 0:
        raise ValueError("mitigation strength must be non-negative")
    n = int(round(duration_us / dt_us)) + 1
    t_s = np.arange(n) * (dt_us * US)
    t_us = t_s / US
    dist = np.hypot(*(chip.positions - np.asarray(strike)).T)
    amp = profile.amplitudes(dist, mitigation)
    if profile.jitter > 0:
        rng = np.random.default_rng(seed)
        amp = amp * np.exp(profile.jitter * rng.standard_normal(amp.size))
    gen = amp[:, None] * profile.shape(t_us)[None, :]
    meta = {
        "synthetic": True,
        "strike_mm": list(strike),
        "chip_width_mm": chip.chip_width,
        "spacing_scale": chip.spacing_scale,
        "mitigation_um": mitigation,
        "profile": {k: getattr(profile, k) for k in profile.__dataclass_fields__},
        "seed": seed,
    }
    return QpTrace(t_s, gen, qubit_labels(), meta)


# --- trace files ----------------------------------------------------------------------

_FMT = "%.17g"


def save_trace(trace: QpTrace, path: str | Path) -> None:
    """Write the header-plus-records text format (``.csv`` selects the columnar variant)."""
    path = Path(path)
    if path.suffix == ".csv":
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["time_us", *trace.qubit_ids])
        for k, t in enumerate(trace.time_grid):
            w.writerow([_FMT % (t / US)] + [_FMT % v for v in trace.generation[:, k]])
        path.write_text(buf.getvalue())
        return
    header = {
        "format": "qp-trace/1",
        "t0_s": float(trace.time_grid[0]),
        "dt_s": trace.dt,
        "length": int(trace.time_grid.size),
        "qubit_ids": list(trace.qubit_ids),
        "units": "um^-3/us",
        "metadata": trace.metadata,
    }
    lines = [json.dumps(header, sort_keys=True)]
    for q, row in zip(trace.qubit_ids, trace.generation):
        lines.append(json.dumps({"qubit": q, "g": [float(_FMT % v) for v in row]}))
    path.write_text("\n".join(lines) + "\n")


def load_trace(path: str | Path) -> QpTrace:
    path = Path(path)
    text = path.read_text()
    if path.suffix == ".csv":
        return _load_csv(text, path)
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines:
        raise TraceFormatError(f"{path}: empty file")
    try:
        header = json.loads(lines[0])
    except json.JSONDecodeError as exc:
        raise TraceFormatError(f"{path}:1: header is not valid JSON ({exc.msg})") from None
    for key in ("t0_s", "dt_s", "length", "qubit_ids"):
        if key not in header:
            raise TraceFormatError(f"{path}:1: header missing '{key}'")
    length = int(header["length"])
    ids = header["qubit_ids"]
    rows = []
    for ln_no, ln in enumerate(lines[1:], start=2):
        try:
            rec = json.loads(ln)
            g = rec["g"]
        except (json.JSONDecodeError, KeyError, TypeError):
            raise TraceFormatError(f"{path}:{ln_no}: malformed qubit record") from None
        if len(g) != length:
            raise TraceFormatError(f"{path}:{ln_no}: record has {len(g)} samples, header says {length}")
        rows.append(g)
    if len(rows) != len(ids):
        raise TraceFormatError(f"{path}: {len(rows)} records for {len(ids)} qubit ids")
    t = header["t0_s"] + header["dt_s"] * np.arange(length)
    return QpTrace(t, np.array(rows, dtype=float), ids, header.get("metadata", {}))


def _load_csv(text: str, path: Path) -> QpTrace:
    reader = csv.reader(io.StringIO(text))
    try:
        head = next(reader)
    except StopIteration:
        raise TraceFormatError(f"{path}: empty file") from None
    ids = head[1:]
    t, cols = [], []
    for ln_no, row in enumerate(reader, start=2):
        if not row:
            continue
        if len(row) != len(head):
            raise TraceFormatError(f"{path}:{ln_no}: expected {len(head)} columns, got {len(row)}")
        try:
            vals = [float(v) for v in row]
        except ValueError:
            raise TraceFormatError(f"{path}:{ln_no}: non-numeric field") from None
        t.append(vals[0] * US)
        cols.append(vals[1:])
    return QpTrace(np.array(t), np.array(cols).T, ids, {})
