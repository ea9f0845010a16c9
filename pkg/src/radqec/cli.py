"""Command-line interface: ``python -m radqec <command>``.

Every run flag mirrors a :class:`~radqec.experiments.RunConfig` key
(``--mitigation-um`` <-> ``mitigation_um``).  Values are resolved as
defaults, then the ``--config`` TOML file, then explicit flags.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from dataclasses import MISSING, fields
from pathlib import Path

from . import experiments as ex
from .qp_dynamics import TraceFormatError, load_trace, save_trace, synthesize_trace
from .records import RecordFormatError, SyndromeRecord, write_verdicts
from .surface_code import build_layout

log = logging.getLogger("radqec")

CI_REQUIRED = ("seed", "shots", "cycles", "protocol")
_CHOICES = {"protocol": [1, 2], "engine": ["pauli", "gad"], "terminals": ["all", "geometric"],
            "sampling": ["start", "average"]}


def _flag(name: str) -> str:
    return "--" + name.replace("_", "-")


def _add_config_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", type=Path, help="TOML file with RunConfig keys")
    g = p.add_argument_group("run configuration (each flag mirrors a config key)")
    for f in fields(ex.RunConfig):
        default = f.default if f.default is not MISSING else None
        kw = {"dest": f.name, "default": None, "help": f"config key '{f.name}' (default {default!r})"}
        if f.name == "strike_mm":
            g.add_argument(_flag(f.name), nargs=2, type=float, metavar=("X", "Y"), **kw)
        elif isinstance(default, bool):
            g.add_argument(_flag(f.name), action=argparse.BooleanOptionalAction, **kw)
        elif f.name == "trace":
            g.add_argument(_flag(f.name), type=str, **kw)
        else:
            typ = type(default) if default is not None else str
            g.add_argument(_flag(f.name), type=typ, choices=_CHOICES.get(f.name), **kw)


def config_from_args(args: argparse.Namespace) -> ex.RunConfig:
    data: dict = {}
    if args.config is not None:
        data = ex.RunConfig.from_toml(args.config).to_dict()
        explicit = set(_toml_keys(args.config))
    else:
        explicit = set()
    for f in fields(ex.RunConfig):
        v = getattr(args, f.name)
        if v is not None:
            data[f.name] = tuple(v) if f.name == "strike_mm" else v
            explicit.add(f.name)
    if os.environ.get("CI"):
        missing = [k for k in CI_REQUIRED if k not in explicit]
        if missing:
            raise ex.ConfigError("in CI runs these keys must be set explicitly: " + ", ".join(missing))
    return ex.RunConfig.from_mapping(data)


def _toml_keys(path: Path) -> list[str]:
    import tomli

    with open(path, "rb") as fh:
        data = tomli.load(fh)
    keys = []
    for k, v in data.items():
        keys.extend(v.keys() if isinstance(v, dict) else [k])
    return keys


# --- commands -----------------------------------------------------------------------------


def cmd_simulate(args) -> int:
    cfg = config_from_args(args)
    log.info("simulate: protocol %d, %d shots x %d cycles, seed %d", cfg.protocol, cfg.shots, cfg.cycles, cfg.seed)
    keep: dict = {}
    rep = ex.simulate(cfg, keep=keep)
    rep.write(args.out)
    if args.records and cfg.protocol == 1:
        for name in ("radiated", "baseline"):
            keep[name].save(Path(args.out) / f"{name}.rec")
    print(f"zeta_c = {rep.zeta:.6g}  ({args.out}/curves.csv, {args.out}/report.json)")
    return 0


def _parse_axis(text: str) -> tuple[str, list]:
    if "=" not in text:
        raise ex.ConfigError(f"axis must look like key=v1,v2,... (got {text!r})")
    key, vals = text.split("=", 1)
    key = key.strip().replace("-", "_")
    names = {f.name: f for f in fields(ex.RunConfig)}
    if key not in names:
        raise ex.ConfigError(f"unknown sweep axis {key!r}")
    typ = type(names[key].default) if names[key].default not in (None, MISSING) else str
    return key, [typ(v) for v in vals.split(",") if v.strip()]


def cmd_sweep(args) -> int:
    cfg = config_from_args(args)
    axes = dict(_parse_axis(a) for a in args.axis)
    if not axes:
        raise ex.ConfigError("give at least one --axis key=v1,v2")
    res = ex.run_sweep(cfg, axes, n_strikes=args.strikes, workers=args.sweep_workers)
    res.write(args.out)
    failed = [c for c in res.cells if c.status != "ok"]
    for c in res.cells:
        print(" ".join(f"{k}={v}" for k, v in c.params.items()), f"zeta={c.zeta_mean:.6g}", c.status, c.error)
    return 1 if failed else 0


def cmd_decode(args) -> int:
    rec = SyndromeRecord.load(args.record)
    corrected, raw = rec.decode()
    est = ex.estimate_pl(corrected, rec.terminal_lengths)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_verdicts(out / "verdicts.txt", rec.terminal_lengths, corrected, raw)
    lines = ["cycle,p_L,ci_lo,ci_hi,p_L_uncorrected"]
    for c, p, lo, hi, u in zip(est.cycles, est.p_L, est.ci_lo, est.ci_hi, raw.mean(axis=0)):
        lines.append(f"{int(c)},{float(p)!r},{float(lo)!r},{float(hi)!r},{float(u)!r}")
    (out / "p_L.csv").write_text("\n".join(lines) + "\n")
    print(f"decoded {rec.shots} shots x {len(rec.terminal_lengths)} terminal lengths -> {out}")
    return 0


def cmd_trace_synth(args) -> int:
    if args.reference_family:
        for p in ex.write_reference_traces(args.out):
            print(p)
        return 0
    chip = build_layout(args.spacing_scale)
    trace = synthesize_trace(args.strike_mm, chip, args.mitigation_um, duration_us=args.duration_us,
                             dt_us=args.dt_us)
    save_trace(trace, args.out)
    print(f"wrote {args.out}: {trace.n_qubits} qubits x {trace.time_grid.size} samples")
    return 0


def cmd_trace_validate(args) -> int:
    status = 0
    for path in args.paths:
        try:
            tr = load_trace(path)
        except (TraceFormatError, OSError) as exc:
            print(f"{path}: INVALID: {exc}")
            status = 1
            continue
        print(f"{path}: ok, {tr.n_qubits} qubits, {tr.time_grid.size} samples, dt={tr.dt:g} s, "
              f"peak g={tr.generation.max():.4g} um^-3/us")
    return status


def cmd_report(args) -> int:
    if args.levels and len(args.levels) != len(args.curves):
        raise ex.ConfigError("--levels needs one value per curves file")
    zetas = {}
    for i, path in enumerate(args.curves):
        rep = ex.load_curves(path)
        z = rep.zeta
        print(f"{path}: zeta_c = {z:.6g}")
        if args.levels:
            zetas[float(args.levels[i])] = z
    doc = {"zeta_c": {str(p): ex.load_curves(p).zeta for p in args.curves}}
    if zetas:
        eff = ex.relative_efficacy(zetas)
        for t, d in sorted(eff.items()):
            print(f"level {t:g}: delta_zeta = {d:.6g}  |delta_zeta| = {abs(d):.6g}")
        doc["delta_zeta"] = {repr(t): d for t, d in sorted(eff.items())}
    if args.out:
        Path(args.out).write_text(json.dumps(doc, sort_keys=True, indent=2) + "\n")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="python -m radqec", description="Radiation-burst surface-code simulations.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", help="one radiated run against its baseline")
    _add_config_flags(s)
    s.add_argument("--out", default="run", help="output directory")
    s.add_argument("--records", action="store_true", help="also save the syndrome records (protocol 1)")
    s.set_defaults(func=cmd_simulate)

    s = sub.add_parser("sweep", help="matrix of runs over config axes")
    _add_config_flags(s)
    s.add_argument("--axis", action="append", default=[], help="key=v1,v2,... (repeatable)")
    s.add_argument("--strikes", type=int, default=0, help="Sobol strike positions per cell (0: configured strike)")
    s.add_argument("--sweep-workers", type=int, default=1, help="cells run in parallel")
    s.add_argument("--out", default="sweep", help="output directory")
    s.set_defaults(func=cmd_sweep)

    s = sub.add_parser("decode", help="decode a stored syndrome record")
    s.add_argument("record", type=Path)
    s.add_argument("--out", default="decoded", help="output directory")
    s.set_defaults(func=cmd_decode)

    t = sub.add_parser("trace", help="trace tooling")
    tsub = t.add_subparsers(dest="trace_command", required=True)
    s = tsub.add_parser("synth", help="write a synthetic generation trace")
    s.add_argument("--mitigation-um", type=float, default=0.0)
    s.add_argument("--spacing-scale", type=float, default=1.0)
    s.add_argument("--strike-mm", nargs=2, type=float, metavar=("X", "Y"))
    s.add_argument("--duration-us", type=float, default=1510.0)
    s.add_argument("--dt-us", type=float, default=0.5)
    s.add_argument("--reference-family", action="store_true", help="write the shipped reference family into --out")
    s.add_argument("--out", required=True, help="trace file (directory with --reference-family)")
    s.set_defaults(func=cmd_trace_synth)
    s = tsub.add_parser("validate", help="check trace files")
    s.add_argument("paths", nargs="+", type=Path)
    s.set_defaults(func=cmd_trace_validate)

    s = sub.add_parser("report", help="recompute the performance gap from stored curves")
    s.add_argument("curves", nargs="+", type=Path, help="curves.csv files")
    s.add_argument("--levels", nargs="+", type=float, help="mitigation level of each file (enables delta_zeta)")
    s.add_argument("--out", help="write a JSON summary here")
    s.set_defaults(func=cmd_report)
    return p


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except (ex.ConfigError, TraceFormatError, RecordFormatError, ValueError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
