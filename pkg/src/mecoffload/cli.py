"""Configuration, experiment presets, sweep orchestration, and file output.

Configs are TOML files with [system], [run], [sweep], [output] and
[rootfind] sections; every leaf can also be set by a command-line flag
(flags win over the file, the file wins over defaults).  Omitted system
fields fall back to the standard operating point: 1000-bit tasks at 5900
cycles/byte, 2 ms slots and deadline, 1 MHz bandwidth, -40 dB path loss at
50 m, 12 mW harvesting, e_min = 0.02 mJ, e_max = 2 mJ, v = 1.6e-4.

Exit codes: 0 success, 2 configuration error, 3 certification failure,
4 runtime invariant breach.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import math
import os
import sys
import tempfile
from dataclasses import dataclass, replace
from typing import Optional, Sequence

import tomli

from . import engine, model, oracle
from .engine import RunMetrics, SweepTemplate, SimulationInvariantError
from .model import InvalidParameterError, SystemParams
from .policies import PolicyKind
from .solver import RootFindConfig

__all__ = [
    "ConfigError",
    "ExperimentConfig",
    "PRESET_NAMES",
    "load_config",
    "build_params",
    "preset",
    "emit",
    "emit_config",
    "main",
]

METRICS_SCHEMA = "metrics-v1"
TRACE_SCHEMA = "trace-v1"
SERIES_SCHEMA = "series-v1"

TRACE_COLUMNS = ("t", "zeta", "h", "e_h", "b", "mode", "f", "p", "e", "cost", "delay")
METRICS_COLUMNS = (
    "policy", "axis", "value", "rho", "seed", "slots", "requested", "executed",
    "dropped", "avg_cost", "avg_completion", "drop_ratio", "mode_share_mobile",
    "mode_share_server", "mode_share_drop", "battery_min", "battery_max", "theta",
)

_DEFAULT_POLICIES = ("lodco", "mobile-gd", "server-gd", "dynamic-gd")

# Bracketing grid for the control-parameter sweeps (the quoted operating
# point 1.6e-4 sits inside).
V_PRESET_GRID = (2e-5, 5e-5, 1e-4, 1.6e-4, 3e-4, 6e-4, 1e-3)

PRESET_NAMES = ("fig2", "fig3", "fig4", "fig5", "fig6", "fig7")


class ConfigError(ValueError):
    """Invalid configuration; carries the offending field path."""

    def __init__(self, path: str, message: str) -> None:
        super().__init__(f"{path}: {message}")
        self.path = path


@dataclass(frozen=True)
class ExperimentConfig:
    """Everything one invocation needs: physics, run controls, sweep, output."""

    # [system]
    rho: float = 0.6
    l_bits: float = 1000.0
    x_cycles: float = 5900.0
    tau: float = 2e-3
    tau_d: float = 2e-3
    phi: float = 2e-3
    kappa: float = 1e-28
    f_max: float = 1.5e9
    p_max: float = 1.0
    omega: float = 1e6
    sigma: float = 1e-13
    g0_db: Optional[float] = None      # exactly one of g0_db / g0_linear
    g0_linear: Optional[float] = None
    distance: float = 50.0
    p_h: float = 12e-3
    e_min: float = 2e-5
    e_max: float = 2e-3
    v: Optional[float] = None          # exactly one of v / c_b
    c_b: Optional[float] = None
    theta: Optional[float] = None      # default: the lower bound
    # [run]
    slots: int = 50_000
    seeds: tuple[int, ...] = tuple(range(10))
    warmup: int = 0
    workers: int = 1
    policies: tuple[str, ...] = _DEFAULT_POLICIES
    # [sweep]
    axis: Optional[str] = None
    values: tuple[float, ...] = ()
    rho_values: tuple[float, ...] = ()
    # [output]
    output: str = "out"
    format: str = "csv"
    trace: bool = False
    series: bool = False
    # [rootfind]
    abs_tol: float = 1e-12
    rel_tol: float = 1e-12
    max_iter: int = 200
    growth: float = 2.0

    def g0(self) -> float:
        """Linear path-loss constant."""
        if self.g0_linear is not None:
            return self.g0_linear
        return 10.0 ** (self.g0_db / 10.0)

    def policy_kinds(self) -> tuple[PolicyKind, ...]:
        return tuple(PolicyKind(name) for name in self.policies)

    def root_config(self) -> RootFindConfig:
        return RootFindConfig(abs_tol=self.abs_tol, rel_tol=self.rel_tol,
                              max_iter=self.max_iter, growth=self.growth)


_SECTIONS = {
    "system": ("rho", "l_bits", "x_cycles", "tau", "tau_d", "phi", "kappa",
               "f_max", "p_max", "omega", "sigma", "g0_db", "g0_linear",
               "distance", "p_h", "e_min", "e_max", "v", "c_b", "theta"),
    "run": ("slots", "seeds", "warmup", "workers", "policies"),
    "sweep": ("axis", "values", "rho_values"),
    "output": ("output", "format", "trace", "series"),
    "rootfind": ("abs_tol", "rel_tol", "max_iter", "growth"),
}
_FIELD_SECTION = {name: section for section, names in _SECTIONS.items() for name in names}
_INT_FIELDS = {"slots", "warmup", "workers", "max_iter"}
_FLOAT_FIELDS = {
    name for section in ("system", "rootfind") for name in _SECTIONS[section]
} - _INT_FIELDS


def _coerce(name: str, value):
    path = f"{_FIELD_SECTION[name]}.{name}"
    try:
        if name in _INT_FIELDS:
            if isinstance(value, bool) or int(value) != value:
                raise ValueError
            return int(value)
        if name in _FLOAT_FIELDS:
            return float(value)
        if name in ("seeds", "values", "rho_values", "policies"):
            if isinstance(value, str):  # a bare string would iterate per char
                raise ValueError
            if name == "seeds":
                return tuple(int(s) for s in value)
            if name == "policies":
                return tuple(str(p) for p in value)
            return tuple(float(x) for x in value)
        if name in ("trace", "series"):
            if not isinstance(value, bool):
                raise ValueError
            return value
        return str(value)
    except (TypeError, ValueError):
        raise ConfigError(path, f"cannot interpret {value!r}") from None


def _normalize(cfg: ExperimentConfig) -> ExperimentConfig:
    changes = {}
    if cfg.g0_db is None and cfg.g0_linear is None:
        changes["g0_db"] = -40.0
    if cfg.v is None and cfg.c_b is None:
        changes["v"] = 1.6e-4
    return replace(cfg, **changes) if changes else cfg


def _validate(cfg: ExperimentConfig) -> ExperimentConfig:
    if cfg.g0_db is not None and cfg.g0_linear is not None:
        raise ConfigError("system.g0_db", "give either g0_db or g0_linear, not both")
    if cfg.v is not None and cfg.c_b is not None:
        raise ConfigError("system.v", "give either v or c_b, not both")
    if not cfg.g0() > 0.0:
        raise ConfigError("system.g0_linear", "path-loss constant must be positive")
    if not cfg.distance > 0.0:
        raise ConfigError("system.distance", "distance must be positive")
    if not cfg.p_h > 0.0:
        raise ConfigError("system.p_h", "harvesting power must be positive")
    if cfg.tau_d > cfg.tau:
        raise ConfigError("system.tau_d", f"deadline {cfg.tau_d} exceeds the slot length {cfg.tau}")
    if cfg.e_min > cfg.e_max:
        raise ConfigError("system.e_min", f"e_min {cfg.e_min} exceeds e_max {cfg.e_max}")
    if cfg.slots < 1:
        raise ConfigError("run.slots", "need at least one slot")
    if not cfg.seeds:
        raise ConfigError("run.seeds", "need at least one seed")
    if not 0 <= cfg.warmup < cfg.slots:
        raise ConfigError("run.warmup", f"warmup must be in [0, slots), got {cfg.warmup}")
    if cfg.workers < 1:
        raise ConfigError("run.workers", "need at least one worker")
    if not cfg.policies:
        raise ConfigError("run.policies", "need at least one policy")
    valid = {kind.value for kind in PolicyKind}
    for name in cfg.policies:
        if name not in valid:
            raise ConfigError("run.policies",
                              f"unknown policy {name!r}; expected one of {sorted(valid)}")
    if cfg.axis is not None:
        if cfg.axis not in engine.SWEEP_AXES:
            raise ConfigError("sweep.axis",
                              f"unknown axis {cfg.axis!r}; expected one of {engine.SWEEP_AXES}")
        if not cfg.values:
            raise ConfigError("sweep.values", "sweep needs at least one axis value")
    if cfg.format not in ("csv", "json"):
        raise ConfigError("output.format", f"format must be csv or json, got {cfg.format!r}")
    # Exercise the full parameter validation now so errors surface before
    # any run starts (including every rho in a secondary rho grid).
    for rho in cfg.rho_values or (cfg.rho,):
        try:
            build_params(cfg, rho=rho)
        except InvalidParameterError as exc:
            raise ConfigError("system", str(exc)) from exc
    return cfg


def load_config(path: Optional[str] = None, overrides: Optional[dict] = None) -> ExperimentConfig:
    """Build a validated config from an optional TOML file plus overrides."""
    values: dict = {}
    if path is not None:
        try:
            with open(path, "rb") as fh:
                doc = tomli.load(fh)
        except FileNotFoundError:
            raise ConfigError("config", f"no such file: {path}") from None
        except tomli.TOMLDecodeError as exc:
            raise ConfigError("config", f"invalid TOML in {path}: {exc}") from None
        for section, content in doc.items():
            if section not in _SECTIONS:
                raise ConfigError(section, "unknown config section")
            if not isinstance(content, dict):
                raise ConfigError(section, "expected a table")
            for key, value in content.items():
                if key not in _SECTIONS[section]:
                    raise ConfigError(f"{section}.{key}", "unknown config key")
                values[key] = _coerce(key, value)
    ov = {k: v for k, v in (overrides or {}).items() if v is not None}
    # An explicit override of one member of an either-or pair displaces the
    # file's setting of the other member.
    for a, b in (("v", "c_b"), ("c_b", "v"), ("g0_db", "g0_linear"), ("g0_linear", "g0_db")):
        if a in ov and b not in ov:
            values.pop(b, None)
    for key, value in ov.items():
        if key not in _FIELD_SECTION:
            raise ConfigError(key, "unknown config key")
        values[key] = _coerce(key, value)
    return _validate(_normalize(ExperimentConfig(**values)))


def build_params(cfg: ExperimentConfig, rho: Optional[float] = None) -> SystemParams:
    """Resolve a config (plus an optional rho override) into SystemParams."""
    w = model.derive_workload(cfg.l_bits, cfg.x_cycles)
    e_tilde = min(max(cfg.kappa * w * cfg.f_max * cfg.f_max, cfg.p_max * cfg.tau), cfg.e_max)
    h_mean = cfg.g0() * cfg.distance ** -4.0
    eh_max = 2.0 * cfg.p_h * cfg.tau
    if cfg.c_b is not None:
        # Battery capacity c_b determines v; requires room above the largest
        # single-slot draw plus one harvest packet.
        if cfg.c_b <= e_tilde + eh_max:
            raise ConfigError(
                "system.c_b",
                f"battery capacity {cfg.c_b} must exceed e_tilde_max + eh_max = {e_tilde + eh_max}")
        v = (cfg.c_b - eh_max - e_tilde) * cfg.e_min / cfg.phi
    else:
        v = cfg.v
    theta = cfg.theta if cfg.theta is not None else e_tilde + v * cfg.phi / cfg.e_min
    return SystemParams(
        rho=cfg.rho if rho is None else rho,
        l_bits=cfg.l_bits, x_cycles=cfg.x_cycles, tau=cfg.tau, tau_d=cfg.tau_d,
        phi=cfg.phi, kappa=cfg.kappa, f_max=cfg.f_max, p_max=cfg.p_max,
        omega=cfg.omega, sigma=cfg.sigma, h_mean=h_mean, eh_max=eh_max,
        e_min=cfg.e_min, e_max=cfg.e_max, v=v, theta=theta)


def preset(name: str) -> ExperimentConfig:
    """Ready-made sweep configs bracketing the standard experiments."""
    base = _validate(_normalize(ExperimentConfig()))
    if name == "fig2":
        # Time evolution of the battery level and running-average cost.
        cfg = replace(base, axis="v", values=(2e-5, 1.6e-4, 1e-3),
                      policies=("lodco",), seeds=(0,), series=True)
    elif name == "fig3":
        # Cost and required battery capacity against the control parameter.
        cfg = replace(base, axis="v", values=V_PRESET_GRID)
    elif name == "fig4":
        # Performance against the task arrival probability.
        cfg = replace(base, axis="rho", values=(0.2, 0.4, 0.6, 0.8))
    elif name == "fig5":
        # Performance against the harvesting rate, at two arrival rates.
        cfg = replace(base, axis="p_h",
                      values=tuple(x * 1e-3 for x in (4, 6, 8, 10, 12, 14, 16)),
                      rho_values=(0.4, 0.6))
    elif name == "fig6":
        # Performance against the execution deadline, at two arrival rates.
        cfg = replace(base, axis="tau_d",
                      values=tuple(x * 1e-4 for x in range(2, 21, 2)),
                      rho_values=(0.4, 0.6))
    elif name == "fig7":
        # Performance against the device-server distance, at two arrival rates.
        cfg = replace(base, axis="d", values=(30.0, 40.0, 50.0, 60.0, 70.0, 80.0),
                      rho_values=(0.4, 0.6))
    else:
        raise ConfigError("preset", f"unknown preset {name!r}; valid names: {', '.join(PRESET_NAMES)}")
    return _validate(cfg)


# ---------------------------------------------------------------------------
# Emission


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return format(value, ".17g")
    return str(value)


def _toml_value(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, (int, float)):
        return repr(value)
    if isinstance(value, str):
        return json.dumps(value)
    if isinstance(value, (tuple, list)):
        return "[" + ", ".join(_toml_value(v) for v in value) + "]"
    raise TypeError(f"cannot serialize {value!r} to TOML")


def emit_config(cfg: ExperimentConfig, path: str) -> None:
    """Write a config as TOML; ``load_config`` reads it back unchanged."""
    lines = []
    for section, names in _SECTIONS.items():
        body = [f"{name} = {_toml_value(getattr(cfg, name))}"
                for name in names if getattr(cfg, name) is not None]
        if body:
            lines.append(f"[{section}]")
            lines.extend(body)
            lines.append("")
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines))


@dataclass
class CellRow:
    """One emitted result row."""

    policy: str
    axis: Optional[str]
    value: Optional[float]
    seed: int
    params: SystemParams
    metrics: RunMetrics

    def sort_key(self):
        return (self.policy, self.params.rho, self.value if self.value is not None else -math.inf,
                self.seed)


def _row_dict(row: CellRow) -> dict:
    out = {
        "policy": row.policy,
        "axis": row.axis,
        "value": row.value,
        "rho": row.params.rho,
        "seed": row.seed,
    }
    out.update(row.metrics.scalars())
    out["theta"] = row.params.theta
    return out


def emit(rows: Sequence[CellRow], fmt: str, path: str, cfg: ExperimentConfig) -> str:
    """Write the metrics file (CSV or JSON) and return its path.

    Rows are ordered by (policy, rho, axis value, seed), so identical inputs
    produce byte-identical files.  JSON rows for the "lodco" policy carry the
    analytical bound constants of their parameter cell.
    """
    ordered = sorted(rows, key=CellRow.sort_key)
    if fmt == "csv":
        target = os.path.join(path, "metrics.csv")
        lines = [f"# schema={METRICS_SCHEMA}", ",".join(METRICS_COLUMNS)]
        for row in ordered:
            data = _row_dict(row)
            lines.append(",".join(_fmt(data[col]) for col in METRICS_COLUMNS))
        with open(target, "w", encoding="utf-8", newline="\n") as fh:
            fh.write("\n".join(lines) + "\n")
        return target
    target = os.path.join(path, "metrics.json")
    cells = []
    for row in ordered:
        data = _row_dict(row)
        if row.policy == PolicyKind.LODCO.value:
            bounds = model.bound_constants(row.params)
            data["bounds"] = {"c": bounds.c, "nu": bounds.nu, "gap": bounds.gap}
        cells.append(data)
    doc = {"schema": METRICS_SCHEMA, "config": dataclasses.asdict(cfg), "cells": cells}
    with open(target, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return target


def _run_label(row_policy: str, axis: Optional[str], value: Optional[float],
               rho: Optional[float], seed: int) -> str:
    parts = [row_policy]
    if rho is not None:
        parts.append(f"rho{rho!r}")
    if axis is not None and value is not None:
        parts.append(f"{axis}{value!r}")
    parts.append(f"seed{seed}")
    return "_".join(parts)


def emit_trace(trace: engine.Trace, path: str, label: str) -> str:
    """Write one run's per-slot trace CSV."""
    target = os.path.join(path, f"trace_{label}.csv")
    lines = [f"# schema={TRACE_SCHEMA}", ",".join(TRACE_COLUMNS)]
    for t in range(trace.t_slots):
        lines.append(",".join((
            str(t), str(int(trace.zeta[t])), _fmt(float(trace.h[t])),
            _fmt(float(trace.e_h[t])), _fmt(float(trace.b[t])),
            trace.mode_at(t).value, _fmt(float(trace.f[t])), _fmt(float(trace.p[t])),
            _fmt(float(trace.e[t])), _fmt(float(trace.cost[t])), _fmt(float(trace.delay[t])),
        )))
    with open(target, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")
    return target


def emit_series(trace: engine.Trace, metrics: RunMetrics, path: str, label: str) -> str:
    """Write one run's battery level and running-average cost series."""
    target = os.path.join(path, f"series_{label}.csv")
    running = metrics.running_avg_cost
    lines = [f"# schema={SERIES_SCHEMA}", "t,b,running_avg_cost"]
    for t in range(trace.t_slots):
        lines.append(f"{t},{_fmt(float(trace.b[t]))},{_fmt(float(running[t]))}")
    with open(target, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")
    return target


def _prepare_output_dir(path: str) -> None:
    # Fail on unwritable output before any computation starts.
    try:
        os.makedirs(path, exist_ok=True)
        with tempfile.NamedTemporaryFile(dir=path, prefix=".writecheck"):
            pass
    except OSError as exc:
        raise ConfigError("output.path", f"cannot write to {path!r}: {exc}") from exc


# ---------------------------------------------------------------------------
# Experiment execution


def _execute(cfg: ExperimentConfig) -> list[CellRow]:
    """Run the configured experiment (single point or sweep) and emit files."""
    _prepare_output_dir(cfg.output)
    root_cfg = cfg.root_config()
    kinds = cfg.policy_kinds()
    rows: list[CellRow] = []
    want_files = cfg.trace or cfg.series
    rho_grid = cfg.rho_values or (None,)
    for rho in rho_grid:
        params = build_params(cfg, rho=rho)
        if cfg.axis is None:
            cell_specs = [(kind, None, None, params) for kind in kinds]
        else:
            template = SweepTemplate(base=params, g0=cfg.g0(), theta_override=cfg.theta)
            if not want_files:
                cells = engine.sweep(kinds, template, cfg.axis, cfg.values,
                                     cfg.slots, cfg.seeds, cfg=root_cfg,
                                     warmup=cfg.warmup, workers=cfg.workers)
                rows.extend(CellRow(c.kind.value, cfg.axis, c.value, c.seed,
                                    c.params, c.metrics) for c in cells)
                continue
            cell_specs = [(kind, cfg.axis, value, engine.apply_axis(template, cfg.axis, value))
                          for kind in kinds for value in cfg.values]
        for kind, axis, value, cell_params in cell_specs:
            for seed in cfg.seeds:
                trace = engine.run(kind, cell_params, cfg.slots, seed, cfg=root_cfg)
                metrics = engine.reduce(trace, cfg.warmup, keep_series=cfg.series)
                label = _run_label(kind.value, axis, value,
                                   rho if len(rho_grid) > 1 else None, seed)
                if cfg.trace:
                    emit_trace(trace, cfg.output, label)
                if cfg.series:
                    emit_series(trace, metrics, cfg.output, label)
                rows.append(CellRow(kind.value, axis, value, seed, cell_params, metrics))
    emit(rows, cfg.format, cfg.output, cfg)
    emit_config(cfg, os.path.join(cfg.output, "config.toml"))
    return rows


# ---------------------------------------------------------------------------
# Command line


def _add_override_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", metavar="FILE", help="TOML config file")
    group = parser.add_argument_group("parameter overrides")
    for name in _SECTIONS["system"]:
        group.add_argument(f"--{name.replace('_', '-')}", type=float, dest=name)
    group.add_argument("--slots", type=int)
    group.add_argument("--seed", type=int, help="single seed (shorthand for --seeds N)")
    group.add_argument("--seeds", type=str, help="comma-separated seed list")
    group.add_argument("--warmup", type=int)
    group.add_argument("--workers", type=int)
    group.add_argument("--policy", type=str,
                       help="comma-separated policies: lodco, mobile-gd, server-gd, dynamic-gd")
    group.add_argument("--output", type=str)
    group.add_argument("--format", choices=("csv", "json"))
    group.add_argument("--trace", action="store_true", default=None,
                       help="write per-slot trace CSVs")
    group.add_argument("--series", action="store_true", default=None,
                       help="write battery/running-cost series CSVs")
    group.add_argument("--abs-tol", type=float, dest="abs_tol")
    group.add_argument("--rel-tol", type=float, dest="rel_tol")
    group.add_argument("--max-iter", type=int, dest="max_iter")
    group.add_argument("--growth", type=float)


def _overrides_from_args(args: argparse.Namespace) -> dict:
    overrides: dict = {}
    for name in _FIELD_SECTION:
        if hasattr(args, name) and getattr(args, name) is not None:
            overrides[name] = getattr(args, name)
    if getattr(args, "seeds", None) is not None:
        overrides["seeds"] = tuple(int(s) for s in str(args.seeds).split(","))
    elif getattr(args, "seed", None) is not None:
        overrides["seeds"] = (int(args.seed),)
    if getattr(args, "policy", None) is not None:
        overrides["policies"] = tuple(p.strip() for p in args.policy.split(","))
    if getattr(args, "axis", None) is not None:
        overrides["axis"] = args.axis
    if getattr(args, "values", None) is not None:
        overrides["values"] = tuple(float(x) for x in str(args.values).split(","))
    if getattr(args, "rho_values", None) is not None:
        overrides["rho_values"] = tuple(float(x) for x in str(args.rho_values).split(","))
    return overrides


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mecoffload",
        description="Per-slot optimal computation offloading for an "
                    "energy-harvesting device, with greedy baselines and a "
                    "brute-force certifier.")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="simulate the configured policies at one operating point")
    _add_override_flags(p_run)

    p_sweep = sub.add_parser("sweep", help="sweep one parameter axis")
    p_sweep.add_argument("--axis", choices=engine.SWEEP_AXES)
    p_sweep.add_argument("--values", type=str, help="comma-separated axis values")
    p_sweep.add_argument("--rho-values", type=str, dest="rho_values",
                         help="optional secondary arrival-rate grid")
    _add_override_flags(p_sweep)

    p_preset = sub.add_parser("preset", help="run a ready-made experiment")
    p_preset.add_argument("name", help=f"one of: {', '.join(PRESET_NAMES)}")
    p_preset.add_argument("--rho-values", type=str, dest="rho_values")
    _add_override_flags(p_preset)

    p_cert = sub.add_parser("certify", help="brute-force check of per-slot optimality")
    p_cert.add_argument("--states", type=int, default=1000, help="number of sampled states")
    p_cert.add_argument("--grid", type=int, default=10_000,
                        help="grid points per mode window")
    p_cert.add_argument("--threshold", type=float, default=1e-3,
                        help="maximum allowed |relative objective gap|")
    _add_override_flags(p_cert)
    return parser


def _cmd_certify(args: argparse.Namespace) -> int:
    overrides = _overrides_from_args(args)
    overrides.setdefault("seeds", (0,))
    cfg = load_config(args.config, overrides)
    params = build_params(cfg)
    spec = oracle.GridSpec(n_f=args.grid, n_p=args.grid)
    report = oracle.certify(params, n_states=args.states, seed=cfg.seeds[0], spec=spec,
                            cfg=cfg.root_config(), threshold=args.threshold,
                            workers=cfg.workers)
    print(report.summary())
    if cfg.output:
        _prepare_output_dir(cfg.output)
        target = os.path.join(cfg.output, "certify.json")
        doc = {
            "passed": report.passed,
            "n_states": report.n_states,
            "grid": {"n_f": spec.n_f, "n_p": spec.n_p},
            "threshold": report.threshold,
            "seed": report.seed,
            "max_rel_gap": report.max_rel_gap,
            "mean_rel_gap": report.mean_rel_gap,
            "n_gap_failures": report.n_gap_failures,
            "n_solver_worse": report.n_solver_worse,
            "n_mode_mismatches": report.n_mode_mismatches,
            "failures": [dataclasses.asdict(rec) for rec in report.failures],
        }
        with open(target, "w", encoding="utf-8", newline="\n") as fh:
            json.dump(doc, fh, indent=2, sort_keys=True)
            fh.write("\n")
        print(f"wrote {target}")
    return 0 if report.passed else 3


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        if args.command == "certify":
            return _cmd_certify(args)
        if args.command == "preset":
            cfg = preset(args.name)
            overrides = _overrides_from_args(args)
            if overrides:
                merged = {**{f.name: getattr(cfg, f.name) for f in dataclasses.fields(cfg)}}
                for key, value in overrides.items():
                    merged[key] = _coerce(key, value)
                cfg = _validate(_normalize(ExperimentConfig(**merged)))
        else:
            cfg = load_config(args.config, _overrides_from_args(args))
            if args.command == "sweep" and cfg.axis is None:
                raise ConfigError("sweep.axis", "sweep requires an axis (flag --axis or [sweep] section)")
        rows = _execute(cfg)
        print(f"{len(rows)} cells -> {os.path.join(cfg.output, 'metrics.' + cfg.format)}")
        return 0
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except InvalidParameterError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except SimulationInvariantError as exc:
        print(f"invariant breach: {exc}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
