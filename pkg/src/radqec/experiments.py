"""End-to-end runs: trace -> density -> schedule -> protocol -> decode -> gap.

A run compares a radiated schedule (baseline for ``strike_offset`` cycles,
then the quasiparticle-driven schedule) against a pure baseline schedule.
Both use the same seed, so their shot noise is strongly correlated and the
performance gap converges much faster than with independent streams.
"""

from __future__ import annotations

import csv
import io
import itertools
import json
import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, fields, replace
from importlib import resources
from pathlib import Path
from typing import Any, Mapping, Sequence

import numpy as np
import tomli
from scipy import stats
from scipy.stats import qmc

from . import pauli_sim, trajectory
from .coherence import TransmonParams, baseline_schedule, build_schedule, concat_schedules, CoherenceSchedule
from .decoder import BatchDecoder
from .qp_dynamics import QpRates, QpTrace, integrate_qp, load_trace, save_trace, synthesize_trace
from .surface_code import CodeLayout, build_cycle_circuit, build_layout

REFERENCE_TRACES = {
    "unmitigated": 0.0,
    "cu-0.2um": 0.2,
    "cu-0.5um": 0.5,
    "cu-13um": 13.0,
}


class ConfigError(ValueError):
    pass


# --- statistics ----------------------------------------------------------------------------


def wilson_interval(failures, shots, confidence: float = 0.95) -> tuple[np.ndarray, np.ndarray]:
    """Wilson score interval for a binomial proportion (vectorised)."""
    k = np.asarray(failures, dtype=float)
    n = np.asarray(shots, dtype=float)
    if np.any(n <= 0):
        raise ValueError("need at least one shot per proportion")
    z = stats.norm.isf((1 - confidence) / 2)
    p = k / n
    den = 1 + z * z / n
    centre = (p + z * z / (2 * n)) / den
    half = z * np.sqrt(p * (1 - p) / n + z * z / (4 * n * n)) / den
    # the limits are exactly 0 and 1 at the ends; rounding would leave ~1e-18
    lo = np.where(k == 0, 0.0, np.clip(centre - half, 0, 1))
    hi = np.where(k == n, 1.0, np.clip(centre + half, 0, 1))
    return lo, hi


@dataclass(frozen=True)
class PlEstimate:
    """Per-terminal-length logical error probability with Wilson 95% limits."""

    cycles: np.ndarray
    p_L: np.ndarray
    ci_lo: np.ndarray
    ci_hi: np.ndarray
    failures: np.ndarray
    shots: int


def estimate_pl(verdicts: np.ndarray, cycles: Sequence[int] | None = None) -> PlEstimate:
    """Estimate ``p_L(n)`` from per-shot logical verdicts ``(shots, T)``."""
    v = np.asarray(verdicts)
    if v.ndim == 1:
        v = v[:, None]
    if v.shape[0] == 0:
        raise ValueError("no shots to estimate from")
    cycles = np.arange(1, v.shape[1] + 1) if cycles is None else np.asarray(cycles)
    k = v.sum(axis=0).astype(np.int64)
    lo, hi = wilson_interval(k, v.shape[0])
    return PlEstimate(cycles, k / v.shape[0], lo, hi, k, v.shape[0])


def compose_pl(epsilons) -> float:
    """Logical error after independent rounds with per-round error ``epsilons``."""
    e = np.asarray(epsilons, dtype=float)
    if np.any((e < 0) | (e > 0.5)) or np.any(np.isnan(e)):
        raise ValueError("per-round error rates must lie in [0, 0.5]")
    return float(0.5 * (1 - np.prod(1 - 2 * e)))


def compose_pl_cumulative(epsilons) -> np.ndarray:
    """``compose_pl(epsilons[:n])`` for every ``n``."""
    e = np.asarray(epsilons, dtype=float)
    if np.any((e < 0) | (e > 0.5)):
        raise ValueError("per-round error rates must lie in [0, 0.5]")
    return 0.5 * (1 - np.cumprod(1 - 2 * e))


def performance_gap(p_mu, p_nomu, cycles: Sequence[int] | None = None) -> float:
    """Cycle mean of ``p_mu - p_nomu``.

    When ``cycles`` is a sparse subset of ``1..N`` the difference is linearly
    interpolated onto every cycle first, so the mean stays a per-cycle mean.
    """
    a = np.asarray(p_mu, dtype=float)
    b = np.asarray(p_nomu, dtype=float)
    if a.shape != b.shape:
        raise ValueError(f"curves are on different grids ({a.shape} vs {b.shape})")
    diff = a - b
    if cycles is None:
        return float(diff.mean())
    c = np.asarray(cycles)
    if c.shape != a.shape:
        raise ValueError("cycle grid does not match the curves")
    full = np.arange(c[0], c[-1] + 1)
    if full.size == c.size:
        return float(diff.mean())
    return float(np.interp(full, c, diff).mean())


def relative_efficacy(zeta_by_level: Mapping[float, float]) -> dict[float, float]:
    """``(zeta(t) - zeta(0)) / zeta(0)`` for every mitigation level ``t``."""
    if 0 not in zeta_by_level and 0.0 not in zeta_by_level:
        raise ValueError("the unmitigated level 0 is required")
    z0 = zeta_by_level[0.0]
    if z0 == 0:
        raise ValueError("relative efficacy is undefined when the unmitigated gap is zero")
    return {t: (z - z0) / z0 for t, z in zeta_by_level.items()}


def sobol_strikes(count: int, chip: CodeLayout | float) -> np.ndarray:
    """First ``count`` points of the unscrambled 2-D Sobol sequence (origin
    skipped), scaled to the square chip, in mm."""
    if count < 1:
        raise ValueError("need at least one strike")
    width = chip.chip_width if isinstance(chip, CodeLayout) else float(chip)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", UserWarning)  # balance warning for non powers of two
        pts = qmc.Sobol(d=2, scramble=False).random(count + 1)[1:]
    return pts * width


def find_recovery_dip(p: np.ndarray, start: int, window: int = 15, margin: float = 0.0,
                      shots: int | None = None, sigmas: float = 3.0) -> int | None:
    """Index of a post-strike local minimum of a smoothed curve, or ``None``.

    The curve from ``start`` on is smoothed by a moving average of ``window``
    points.  The candidate minimum is the lowest point after the largest value
    of the first third of the smoothed curve.  It counts as a dip only when
    the curve falls by more than the threshold from that peak to the minimum
    and later rises by more than the threshold above it.  The threshold is
    ``margin``, plus ``sigmas`` binomial standard errors at the minimum when
    ``shots`` is given.
    """
    p = np.asarray(p, dtype=float)[start:]
    if p.size < 3 * window:
        return None
    sm = np.convolve(p, np.ones(window) / window, mode="valid")
    peak = int(np.argmax(sm[: max(1, sm.size // 3)]))
    tail = sm[peak:]
    m = int(np.argmin(tail))
    if m == 0 or m >= tail.size - 1:
        return None
    threshold = margin
    if shots is not None:
        threshold += sigmas * math.sqrt(tail[m] * (1 - tail[m]) / shots)
    if tail[0] - tail[m] <= threshold or tail[m + 1 :].max() - tail[m] <= threshold:
        return None
    return start + peak + m + window // 2


def geometric_lengths(n_cycles: int, count: int) -> np.ndarray:
    """About ``count`` distinct terminal lengths spread geometrically over ``1..n_cycles``."""
    return np.unique(np.concatenate([np.rint(np.geomspace(1, n_cycles, count)).astype(int), [n_cycles]]))


# --- configuration ---------------------------------------------------------------------------


@dataclass(frozen=True)
class RunConfig:
    """Everything that determines a run.  Keys mirror the TOML file and CLI flags."""

    seed: int = 0
    shots: int = 1024
    cycles: int = 1500
    protocol: int = 1
    engine: str = "pauli"  # "pauli" (PTGAD frames) or "gad" (trajectories)
    trace: str | None = None  # file path, "reference:<name>", or None for a synthetic trace
    mitigation_um: float = 0.0
    spacing_scale: float = 1.0
    strike_mm: tuple[float, float] | None = None
    strike_offset: int = 1
    terminals: str = "all"  # "all" or "geometric"
    n_terminals: int = 32
    cycle_ns: float = 1000.0
    sampling: str = "average"
    readout_layer: bool = False
    workers: int = 1
    f01_hz: float = 5e9
    E_C_hz: float = 0.4e9
    E_J_hz: float = 9.234e9
    gap_ueV: float = 191.0
    T1_base: float = 100e-6
    T2_base: float = 200e-6
    r_um3_per_us: float = 25e-6
    s_per_us: float = 0.05

    def __post_init__(self):
        if self.protocol not in (1, 2):
            raise ConfigError(f"protocol must be 1 or 2, got {self.protocol}")
        if self.engine not in ("pauli", "gad"):
            raise ConfigError(f"unknown engine {self.engine!r}")
        if self.engine == "gad" and self.protocol != 1:
            raise ConfigError("the trajectory engine only implements protocol 1")
        if self.shots < 1 or self.cycles < 1:
            raise ConfigError("shots and cycles must be positive")
        if not 0 <= self.strike_offset < self.cycles:
            raise ConfigError("strike_offset must lie inside the run window")
        if self.terminals not in ("all", "geometric"):
            raise ConfigError(f"terminals must be 'all' or 'geometric', got {self.terminals!r}")
        if self.mitigation_um < 0:
            raise ConfigError("mitigation_um must be non-negative")
        if self.strike_mm is not None:
            object.__setattr__(self, "strike_mm", tuple(float(v) for v in self.strike_mm))

    @property
    def params(self) -> TransmonParams:
        return TransmonParams(self.f01_hz, self.E_C_hz, self.E_J_hz, self.gap_ueV, self.T1_base, self.T2_base)

    @property
    def rates(self) -> QpRates:
        return QpRates(self.r_um3_per_us, self.s_per_us)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["strike_mm"] = None if self.strike_mm is None else list(self.strike_mm)
        return d

    def report_dict(self) -> dict:
        """Config as written to reports; the thread count is left out because
        it never changes results."""
        d = self.to_dict()
        d.pop("workers")
        return d

    @classmethod
    def from_mapping(cls, data: Mapping[str, Any]) -> "RunConfig":
        flat: dict[str, Any] = {}
        for k, v in data.items():
            if isinstance(v, Mapping):  # allow [transmon], [qp] style tables
                flat.update(v)
            else:
                flat[k] = v
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(flat) - known)
        if unknown:
            raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
        return cls(**flat)

    @classmethod
    def from_toml(cls, path: str | Path) -> "RunConfig":
        with open(path, "rb") as fh:
            try:
                data = tomli.load(fh)
            except tomli.TOMLDecodeError as exc:
                raise ConfigError(f"{path}: {exc}") from None
        return cls.from_mapping(data)


def reference_trace_path(name: str) -> Path:
    if name not in REFERENCE_TRACES:
        raise ConfigError(f"unknown reference trace {name!r}; choose from {', '.join(REFERENCE_TRACES)}")
    return Path(str(resources.files("radqec") / "data" / f"{name}.qptrace"))


def write_reference_traces(outdir: str | Path) -> list[Path]:
    """Regenerate the shipped reference family from the synthetic model.

    The files in the package were produced by this function with the default
    :class:`~radqec.qp_dynamics.SyntheticProfile` and are kept frozen.
    """
    out = Path(outdir)
    out.mkdir(parents=True, exist_ok=True)
    paths = []
    for name, level in REFERENCE_TRACES.items():
        trace = synthesize_trace(None, build_layout(1.0), level)
        trace.metadata["reference_name"] = name
        path = out / f"{name}.qptrace"
        save_trace(trace, path)
        paths.append(path)
    return paths


def load_reference_trace(name: str) -> QpTrace:
    return load_trace(reference_trace_path(name))


def resolve_trace(cfg: RunConfig) -> QpTrace:
    if cfg.trace is None:
        return synthesize_trace(cfg.strike_mm, build_layout(cfg.spacing_scale), cfg.mitigation_um)
    if cfg.trace.startswith("reference:"):
        return load_reference_trace(cfg.trace.split(":", 1)[1])
    return load_trace(cfg.trace)


# --- single runs ---------------------------------------------------------------------------


@dataclass
class GapReport:
    """Radiated and baseline ``p_L`` curves on a common terminal-length grid."""

    cycles: np.ndarray
    p_mu: np.ndarray
    p_nomu: np.ndarray
    ci_mu: np.ndarray  # (2, T)
    ci_nomu: np.ndarray
    shots: int
    protocol: int
    config: dict = field(default_factory=dict)
    manifest: dict = field(default_factory=dict)

    @property
    def zeta(self) -> float:
        return performance_gap(self.p_mu, self.p_nomu, self.cycles)

    def curves_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["cycle", "curve", "value", "ci_lo", "ci_hi"])
        for name, p, ci in (("p_L_mu", self.p_mu, self.ci_mu), ("p_L_nomu", self.p_nomu, self.ci_nomu)):
            for c, v, lo, hi in zip(self.cycles, p, ci[0], ci[1]):
                w.writerow([int(c), name, repr(float(v)), repr(float(lo)), repr(float(hi))])
        return buf.getvalue()

    def to_json(self) -> str:
        doc = {
            "zeta_c": self.zeta,
            "shots": self.shots,
            "protocol": self.protocol,
            "n_terminals": int(len(self.cycles)),
            "config": self.config,
            "manifest": self.manifest,
        }
        return json.dumps(doc, sort_keys=True, indent=2) + "\n"

    def write(self, outdir: str | Path) -> None:
        out = Path(outdir)
        out.mkdir(parents=True, exist_ok=True)
        (out / "curves.csv").write_text(self.curves_csv())
        (out / "report.json").write_text(self.to_json())


def load_curves(path: str | Path) -> GapReport:
    """Rebuild a report from a ``curves.csv`` file (for recomputing the gap)."""
    rows: dict[str, list] = {"p_L_mu": [], "p_L_nomu": []}
    with open(path, newline="") as fh:
        for r in csv.DictReader(fh):
            if r["curve"] not in rows:
                raise ValueError(f"{path}: unknown curve {r['curve']!r}")
            rows[r["curve"]].append((int(r["cycle"]), float(r["value"]), float(r["ci_lo"]), float(r["ci_hi"])))
    mu = np.array(rows["p_L_mu"])
    nomu = np.array(rows["p_L_nomu"])
    if mu.shape != nomu.shape or not np.array_equal(mu[:, 0], nomu[:, 0]):
        raise ValueError(f"{path}: radiated and baseline curves are on different grids")
    return GapReport(mu[:, 0].astype(int), mu[:, 1], nomu[:, 1], mu[:, 2:].T, nomu[:, 2:].T, 0, 0)


def radiated_schedule(cfg: RunConfig, trace: QpTrace | None = None) -> CoherenceSchedule:
    """Baseline for ``strike_offset`` cycles followed by the trace-driven schedule."""
    trace = resolve_trace(cfg) if trace is None else trace
    density = integrate_qp(trace, cfg.rates)
    cycle = cfg.cycle_ns * 1e-9
    n_after = cfg.cycles - cfg.strike_offset
    hot = build_schedule(density, cfg.params, cycle, n_after, cfg.sampling, resample=True)
    if cfg.strike_offset == 0:
        return hot
    return concat_schedules(baseline_schedule(cfg.strike_offset, cfg.params, hot.n_qubits, cycle), hot)


def run_curve(cfg: RunConfig, schedule: CoherenceSchedule, decoder: BatchDecoder | None = None,
              keep: list | None = None):
    """``(cycles, p, (lo, hi), manifest)`` for one schedule.

    The raw protocol output (record or round estimates) is appended to
    ``keep`` when given.
    """
    circuit = build_cycle_circuit(build_layout(cfg.spacing_scale))
    if cfg.protocol == 2:
        est = pauli_sim.run_protocol_II(circuit, schedule, cfg.cycles, cfg.shots, cfg.seed, decoder,
                                        workers=cfg.workers, readout_layer=cfg.readout_layer)
        if keep is not None:
            keep.append(est)
        lo, hi = wilson_interval(est.failures, est.shots)
        # a saturated round can estimate slightly above 0.5; 0.5 is its limit
        p = compose_pl_cumulative(np.minimum(est.epsilon, 0.5))
        ci = (compose_pl_cumulative(np.minimum(lo, 0.5)), compose_pl_cumulative(np.minimum(hi, 0.5)))
        return np.arange(1, cfg.cycles + 1), p, ci, est.manifest
    terms = None if cfg.terminals == "all" else geometric_lengths(cfg.cycles, cfg.n_terminals)
    if cfg.engine == "gad":
        rec = trajectory.run_gad_protocol_I(circuit, schedule, cfg.cycles, cfg.shots, cfg.seed, workers=cfg.workers)
    else:
        rec = pauli_sim.run_protocol_I(circuit, schedule, cfg.cycles, cfg.shots, cfg.seed, terms,
                                       workers=cfg.workers)
    if keep is not None:
        keep.append(rec)
    corrected, _ = rec.decode(decoder)
    cycles = rec.terminal_lengths
    if terms is not None and cfg.engine == "gad":  # trajectories record every length
        corrected, cycles = corrected[:, terms - 1], terms
    est = estimate_pl(corrected, cycles)
    return est.cycles, est.p_L, (est.ci_lo, est.ci_hi), rec.manifest


def simulate(cfg: RunConfig, trace: QpTrace | None = None, decoder: BatchDecoder | None = None,
             baseline: tuple | None = None, keep: dict | None = None) -> GapReport:
    """Radiated and baseline runs with a shared seed.

    ``baseline`` may carry a previously computed baseline curve for the same
    configuration (sweeps reuse it across strikes and mitigation levels).
    ``keep``, when given, receives the raw outputs under ``"radiated"`` and
    ``"baseline"``.
    """
    decoder = decoder or BatchDecoder()
    sched = radiated_schedule(cfg, trace)
    hot: list = []
    cold: list = []
    c_mu, p_mu, ci_mu, man_mu = run_curve(cfg, sched, decoder, hot)
    if baseline is None:
        baseline = run_curve(cfg, baseline_schedule(cfg.cycles, cfg.params, sched.n_qubits, cfg.cycle_ns * 1e-9),
                             decoder, cold)
    if keep is not None:
        keep["radiated"] = hot[0]
        if cold:
            keep["baseline"] = cold[0]
    c_no, p_no, ci_no, man_no = baseline
    if not np.array_equal(c_mu, c_no):
        raise ValueError("radiated and baseline curves are on different grids")
    manifest = {"radiated": man_mu, "baseline": man_no}
    return GapReport(c_mu, p_mu, p_no, np.array(ci_mu), np.array(ci_no), cfg.shots, cfg.protocol,
                     cfg.report_dict(), manifest)


def baseline_key(cfg: RunConfig) -> tuple:
    d = cfg.to_dict()
    for k in ("trace", "mitigation_um", "strike_mm", "strike_offset", "workers", "s_per_us", "r_um3_per_us"):
        d.pop(k)
    return tuple(sorted((k, json.dumps(v)) for k, v in d.items()))


# --- sweeps --------------------------------------------------------------------------------


@dataclass
class SweepCell:
    params: dict
    zetas: list[float]
    status: str = "ok"
    error: str = ""

    @property
    def zeta_mean(self) -> float:
        return float(np.mean(self.zetas)) if self.zetas else math.nan

    @property
    def zeta_std(self) -> float:
        return float(np.std(self.zetas, ddof=1)) if len(self.zetas) > 1 else 0.0


@dataclass
class SweepResult:
    axes: dict
    cells: list[SweepCell]
    base: dict
    strikes: list | None

    def delta_zeta(self, level_key: str = "mitigation_um") -> dict:
        """Relative efficacy per mitigation level within each group of other axes."""
        out = {}
        groups: dict[tuple, dict[float, float]] = {}
        for cell in self.cells:
            if cell.status != "ok" or level_key not in cell.params:
                continue
            rest = tuple(sorted((k, v) for k, v in cell.params.items() if k != level_key))
            groups.setdefault(rest, {})[float(cell.params[level_key])] = cell.zeta_mean
        for rest, zs in groups.items():
            try:
                out[rest] = relative_efficacy(zs)
            except ValueError:
                continue
        return out

    def to_csv(self) -> str:
        names = list(self.axes)
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(names + ["zeta_mean", "zeta_std", "n_strikes", "status", "error"])
        for c in self.cells:
            w.writerow([c.params[n] for n in names] + [repr(c.zeta_mean), repr(c.zeta_std), len(c.zetas),
                                                       c.status, c.error])
        return buf.getvalue()

    def to_json(self) -> str:
        doc = {
            "axes": self.axes,
            "base_config": self.base,
            "strikes_mm": self.strikes,
            "cells": [
                {"params": c.params, "zeta": c.zetas, "zeta_mean": c.zeta_mean, "zeta_std": c.zeta_std,
                 "status": c.status, "error": c.error}
                for c in self.cells
            ],
            "delta_zeta": [
                {"group": dict(k), "by_level": {repr(t): v for t, v in d.items()}} for k, d in self.delta_zeta().items()
            ],
        }
        return json.dumps(doc, sort_keys=True, indent=2) + "\n"

    def write(self, outdir: str | Path) -> None:
        out = Path(outdir)
        out.mkdir(parents=True, exist_ok=True)
        (out / "sweep.csv").write_text(self.to_csv())
        (out / "sweep.json").write_text(self.to_json())


def run_sweep(base: RunConfig, axes: Mapping[str, Sequence], n_strikes: int = 0, workers: int = 1) -> SweepResult:
    """Run every combination of ``axes`` values on top of ``base``.

    With ``n_strikes > 0`` each cell averages over that many Sobol strike
    positions (scaled to the cell's chip); otherwise the configured strike is
    used.  A failing cell is recorded with its error and the sweep goes on.
    """
    names = list(axes)
    combos = [dict(zip(names, vals)) for vals in itertools.product(*(axes[n] for n in names))]
    baselines: dict[tuple, tuple] = {}

    def cell(params: dict) -> SweepCell:
        try:
            cfg = replace(base, **params)
            strikes = (sobol_strikes(n_strikes, build_layout(cfg.spacing_scale)) if n_strikes > 0
                       else [cfg.strike_mm])
            zetas = []
            dec = BatchDecoder()
            for s in strikes:
                c = replace(cfg, strike_mm=None if s is None else tuple(float(v) for v in s))
                key = baseline_key(c)
                rep = simulate(c, decoder=dec, baseline=baselines.get(key))
                baselines.setdefault(key, (rep.cycles, rep.p_nomu, tuple(rep.ci_nomu), rep.manifest["baseline"]))
                zetas.append(rep.zeta)
            return SweepCell(params, zetas)
        except Exception as exc:  # isolate the failure to this cell
            return SweepCell(params, [], "failed", f"{type(exc).__name__}: {exc}")

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            cells = list(pool.map(cell, combos))
    else:
        cells = [cell(p) for p in combos]
    strikes = sobol_strikes(n_strikes, build_layout(base.spacing_scale)).tolist() if n_strikes > 0 else None
    return SweepResult({n: list(axes[n]) for n in names}, cells, base.report_dict(), strikes)
