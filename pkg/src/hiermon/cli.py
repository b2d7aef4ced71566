"""Command-line front end: analytic tables, calibration, simulation, sweeps.

Four subcommands, all emitting CSV: `analyze` prints per-level propagation
and staleness bounds, `calibrate` benchmarks this host and writes a
coefficients file, `simulate` runs one deterministic simulation and exports
its traces, and `sweep` walks machine counts per hierarchy preset the way a
capacity-planning study would.

Exit codes: 0 success, 2 usage/config error, 3 calibration failure.
"""

from __future__ import annotations

import argparse
import math
import os
import sys
import warnings
from dataclasses import dataclass
from math import prod
from pathlib import Path
from typing import Sequence

from hiermon.loadmodel import (
    DEFAULT_COEFFICIENTS,
    CalibrationUnstableError,
    LoadCoefficients,
    fit,
    hierarchy_loads,
    hierarchy_timings,
    measure_costs,
    read_coefficients,
    write_coefficients,
    write_samples_csv,
)
from hiermon.model import (
    ChannelTimings,
    HierarchyConfig,
    LatencyBound,
    machines_total,
    propagation_time,
    staleness_time,
    validate,
)
from hiermon.sim import (
    SaturatedTopologyWarning,
    SimConfig,
    check_losslessness,
    run,
    verify_against_model,
    write_machines_csv,
    write_trace_csv,
)

#: Reports are sized in reference node-report units for all analytic tables.
NODE_REPORT_KB = 0.5


class UsageError(Exception):
    """Bad flags, bad files, or an impossible topology request."""


@dataclass(frozen=True)
class HierarchyPreset:
    """One named tree shape whose top-level width is the free axis."""

    name: str
    lower_fanout: tuple[int, ...]  # fanout below the varied top level
    hold_s: tuple[float, ...]
    service_period_s: float

    @property
    def depth(self) -> int:
        return len(self.lower_fanout)

    @property
    def machines_per_unit(self) -> int:
        """Monitored machines added by each extra top-level feeder."""
        return prod(self.lower_fanout[1:])

    def config(self, n_total: int) -> HierarchyConfig:
        unit = self.machines_per_unit
        if n_total <= 0 or n_total % unit:
            raise UsageError(
                f"preset {self.name} grows in steps of {unit} machines; "
                f"{n_total} is not a positive multiple"
            )
        return HierarchyConfig.from_seconds(
            self.depth,
            (*self.lower_fanout, n_total // unit),
            self.hold_s,
            self.service_period_s,
        )


PRESETS: dict[str, HierarchyPreset] = {
    p.name: p
    for p in (
        HierarchyPreset("single-level", (1,), (60.0, 60.0), 60.0),
        HierarchyPreset("two-level-50", (1, 50), (30.0, 30.0, 30.0), 30.0),
        HierarchyPreset("two-level-100", (1, 100), (30.0, 30.0, 30.0), 30.0),
        HierarchyPreset("three-level", (1, 10, 10), (10.0, 30.0, 30.0, 30.0), 10.0),
    )
}


@dataclass(frozen=True)
class SweepRow:
    n_total: int
    t_prop: LatencyBound
    root_utilization: float
    first_saturated_level: int | None


def sweep_preset(
    preset: HierarchyPreset,
    coeffs: LoadCoefficients,
    n_max: int,
    step: int,
) -> list[SweepRow]:
    """Analytic capacity curve: one row per machine count, past saturation."""
    unit = preset.machines_per_unit
    stride = max(1, round(step / unit))
    rows = []
    for m in range(stride, n_max // unit + 1, stride):
        config = preset.config(m * unit)
        loads = hierarchy_loads(config, coeffs, NODE_REPORT_KB)
        saturated = [lv for lv in range(1, config.depth + 1) if loads[lv].is_saturated]
        rows.append(
            SweepRow(
                n_total=m * unit,
                t_prop=propagation_time(
                    config, hierarchy_timings(config, coeffs, NODE_REPORT_KB), config.depth
                ),
                root_utilization=loads[config.depth].utilization,
                first_saturated_level=saturated[0] if saturated else None,
            )
        )
    return rows


def max_machines(preset: HierarchyPreset, coeffs: LoadCoefficients) -> int:
    """Largest machine count whose root utilization still stays below 1."""

    def root_ok(m: int) -> bool:
        config = preset.config(m * preset.machines_per_unit)
        loads = hierarchy_loads(config, coeffs, NODE_REPORT_KB)
        return loads[config.depth].utilization < 1.0

    if not root_ok(1):
        return 0
    hi = 1
    while root_ok(hi):
        hi *= 2
    lo = hi // 2  # invariant: root_ok(lo) and not root_ok(hi)
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if root_ok(mid):
            lo = mid
        else:
            hi = mid
    return lo * preset.machines_per_unit


# --- config and timings files -------------------------------------------------


def _read_kv(path: Path) -> dict[str, str]:
    if not path.is_file():
        raise UsageError(f"{path}: no such file")
    values: dict[str, str] = {}
    for lineno, raw in enumerate(path.read_text().splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise UsageError(f"{path}:{lineno}: expected key=value, got {raw!r}")
        values[key.strip()] = value.strip()
    return values


def read_config_file(path: Path | str) -> HierarchyConfig:
    """Read a flat `h, fanout.i, hold_s.i, service_period_s` description."""
    path = Path(path)
    values = _read_kv(path)
    try:
        depth = int(values["h"])
        fanout = [int(values[f"fanout.{i}"]) for i in range(depth + 1)]
        hold_s = [float(values[f"hold_s.{i}"]) for i in range(depth + 1)]
        period = float(values["service_period_s"])
    except KeyError as exc:
        raise UsageError(f"{path}: missing key {exc.args[0]}") from None
    except ValueError as exc:
        raise UsageError(f"{path}: {exc}") from None
    config = HierarchyConfig.from_seconds(depth, fanout, hold_s, period)
    problems = validate(config)
    if problems:
        raise UsageError(f"{path}: " + "; ".join(problems))
    return config


def write_config_file(path: Path | str, config: HierarchyConfig) -> None:
    lines = [f"h={config.depth}"]
    lines += [f"fanout.{i}={f}" for i, f in enumerate(config.fanout)]
    lines += [f"hold_s.{i}={h}" for i, h in enumerate(config.hold_seconds)]
    lines.append(f"service_period_s={config.service_period_seconds}")
    Path(path).write_text("\n".join(lines) + "\n")


def read_timings_file(path: Path | str, depth: int) -> ChannelTimings:
    """Read per-level delays: `t_in_s.i` (or `saturated`) and `t_out_s.i`."""
    path = Path(path)
    values = _read_kv(path)
    t_in: list[float] = []
    t_out: list[float] = []
    try:
        for level in range(1, depth + 1):
            raw = values[f"t_in_s.{level}"]
            t_in.append(math.inf if raw.lower() == "saturated" else float(raw))
            t_out.append(float(values[f"t_out_s.{level}"]))
    except KeyError as exc:
        raise UsageError(f"{path}: missing key {exc.args[0]}") from None
    except ValueError as exc:
        raise UsageError(f"{path}: {exc}") from None
    if any(v < 0 for v in t_in + t_out):
        raise UsageError(f"{path}: delays must be >= 0")
    return ChannelTimings.from_seconds(t_in, t_out)


# --- shared option handling -----------------------------------------------


def _load_coeffs(args: argparse.Namespace) -> LoadCoefficients:
    if args.coeffs is None:
        return DEFAULT_COEFFICIENTS
    try:
        return read_coefficients(args.coeffs)
    except (OSError, ValueError) as exc:
        raise UsageError(f"cannot read coefficients: {exc}") from None


def _coeffs_label(coeffs: LoadCoefficients, args: argparse.Namespace) -> str:
    if args.coeffs is None:
        return "synthetic defaults (uncalibrated)"
    state = "calibrated" if coeffs.calibrated else "uncalibrated"
    return f"{args.coeffs} ({state})"


def _resolve_config(args: argparse.Namespace, default_n: int = 400) -> HierarchyConfig:
    if args.config is not None:
        if args.n_total is not None:
            raise UsageError("--n-total only applies to --preset")
        return read_config_file(args.config)
    preset = PRESETS[args.preset]
    return preset.config(args.n_total if args.n_total is not None else default_n)


def _resolve_seed(args: argparse.Namespace) -> int:
    raw = os.environ.get("HIERMON_SEED")
    if raw is None:
        return args.seed
    try:
        return int(raw)
    except ValueError:
        raise UsageError(f"HIERMON_SEED must be an integer, got {raw!r}") from None


def _out_dir(args: argparse.Namespace) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _fmt_seconds(bound: LatencyBound) -> str:
    if bound.is_saturated:
        return "Saturated"
    return f"{bound.micros / 1e6:.6f}"


# --- subcommands ---------------------------------------------------------------


def cmd_analyze(args: argparse.Namespace) -> int:
    config = _resolve_config(args)
    coeffs = _load_coeffs(args)
    if args.timings is not None:
        timings = read_timings_file(args.timings, config.depth)
    else:
        timings = hierarchy_timings(config, coeffs, NODE_REPORT_KB)
        print(f"# coefficients: {_coeffs_label(coeffs, args)}", file=sys.stderr)
    print("level,t_prop_s,t_stale_s")
    for level in range(config.depth + 1):
        prop = propagation_time(config, timings, level)
        stale = staleness_time(config, timings, level)
        print(f"{level},{_fmt_seconds(prop)},{_fmt_seconds(stale)}")
    return 0


def cmd_calibrate(args: argparse.Namespace) -> int:
    sizes = args.sizes
    if len(set(sizes)) < 3:
        raise UsageError("calibration needs at least 3 distinct sizes")
    if args.reps < 30:
        raise UsageError("calibration needs at least 30 repetitions")
    out = _out_dir(args)
    samples_path = out / "samples.csv"
    coeffs_path = Path(args.coeffs) if args.coeffs is not None else out / "coefficients.txt"
    try:
        samples = measure_costs(sizes, args.reps)
    except CalibrationUnstableError as exc:
        write_samples_csv(samples_path, exc.samples)
        print(f"calibration unstable: {exc}", file=sys.stderr)
        print(f"kept {len(exc.samples)} samples in {samples_path}", file=sys.stderr)
        return 3
    write_samples_csv(samples_path, samples)
    coeffs, residuals = fit(samples)
    write_coefficients(coeffs_path, coeffs)
    print(f"samples: {samples_path}")
    print(f"coefficients: {coeffs_path}")
    print(f"fit residuals (max abs, s): parse={residuals.parse_residual_s:.3g} "
          f"serialize={residuals.serialize_residual_s:.3g} "
          f"aggregate={residuals.aggregate_residual_s:.3g}")
    return 0


def cmd_simulate(args: argparse.Namespace) -> int:
    config = _resolve_config(args)
    coeffs = _load_coeffs(args)
    seed = _resolve_seed(args)
    sim_config = SimConfig.build(
        config,
        coeffs=coeffs,
        duration_s=args.duration,
        seed=seed,
        jitter_fraction=args.jitter,
    )
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", SaturatedTopologyWarning)
        trace = run(sim_config)
    out = _out_dir(args)
    write_trace_csv(out / "trace.csv", trace)
    write_machines_csv(out / "machines.csv", trace)

    topology = args.preset if args.config is None else args.config
    print(f"topology: {topology}")
    print(f"machines: {machines_total(config)}")
    print(f"duration_s: {sim_config.duration_us / 1e6:.6f}")
    print(f"seed: {seed}")
    print(f"coefficients: {_coeffs_label(coeffs, args)}")
    print(f"deliveries: {len(trace.deliveries)}")
    print(f"max_observed_propagation_s: {trace.max_observed_prop_us / 1e6:.6f}")
    print(f"analytic_bound_s: {_fmt_seconds(trace.analytic_bound)}")
    if trace.analytic_bound.is_saturated:
        levels = ",".join(str(lv) for lv in trace.saturated_levels)
        print(f"saturated_levels: {levels}")
        print("tightness: not comparable (saturated)")
    else:
        check = verify_against_model(trace)
        print("saturated_levels: none")
        print(f"tightness: {check.tightness:.6f}")
        print(f"bound_respected: {'true' if check.bound_respected else 'false'}")
    loss = check_losslessness(trace)
    status = "ok" if loss.ok else "VIOLATED"
    print(
        f"losslessness: {status} (published={loss.published}, covered={loss.covered}, "
        f"missing={loss.missing}, duplicated={loss.duplicated})"
    )
    print(f"trace: {out / 'trace.csv'}")
    print(f"machines_csv: {out / 'machines.csv'}")
    return 0


def cmd_sweep(args: argparse.Namespace) -> int:
    coeffs = _load_coeffs(args)
    out = _out_dir(args)
    print(f"coefficients: {_coeffs_label(coeffs, args)}")
    limits = []
    for name in args.presets:
        preset = PRESETS[name]
        rows = sweep_preset(preset, coeffs, args.n_max, args.step)
        path = out / f"sweep_{name}.csv"
        with open(path, "w", newline="") as handle:
            handle.write("n_total,t_prop_s,root_utilization,first_saturated_level\n")
            for row in rows:
                level = "none" if row.first_saturated_level is None else str(row.first_saturated_level)
                handle.write(
                    f"{row.n_total},{_fmt_seconds(row.t_prop)},"
                    f"{row.root_utilization:.6f},{level}\n"
                )
        limit = max_machines(preset, coeffs)
        limits.append((name, limit))
        print(f"{name}: {len(rows)} rows -> {path}; max_machines={limit}")
    limits_path = out / "max_machines.csv"
    with open(limits_path, "w", newline="") as handle:
        handle.write("preset,max_machines\n")
        for name, limit in limits:
            handle.write(f"{name},{limit}\n")
    print(f"limits: {limits_path}")
    return 0


# --- argument parsing ----------------------------------------------------------


def _sizes_list(raw: str) -> list[float]:
    try:
        return [float(part) for part in raw.split(",") if part]
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad size list {raw!r}") from None


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--coeffs", default=argparse.SUPPRESS, metavar="FILE",
                        help="coefficients file (default: synthetic defaults)")
    parser.add_argument("--out", default=argparse.SUPPRESS, metavar="DIR",
                        help="output directory (default: current directory)")


def _add_topology(parser: argparse.ArgumentParser) -> None:
    group = parser.add_mutually_exclusive_group(required=True)
    group.add_argument("--preset", choices=sorted(PRESETS))
    group.add_argument("--config", metavar="FILE", help="hierarchy description file")
    parser.add_argument("--n-total", type=int, default=None, metavar="N",
                        help="monitored machines for --preset (default 400)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="hiermon",
        description="Latency and capacity analysis of hierarchical monitoring trees.",
    )
    parser.add_argument("--coeffs", default=None, metavar="FILE",
                        help="coefficients file (default: synthetic defaults)")
    parser.add_argument("--out", default=".", metavar="DIR",
                        help="output directory (default: current directory)")
    sub = parser.add_subparsers(dest="command", required=True)

    analyze = sub.add_parser("analyze", help="per-level propagation/staleness table")
    _add_topology(analyze)
    analyze.add_argument("--timings", metavar="FILE",
                         help="per-level delay file; otherwise the load model supplies delays")
    _add_common(analyze)
    analyze.set_defaults(func=cmd_analyze)

    calibrate = sub.add_parser("calibrate", help="benchmark this host and fit coefficients")
    calibrate.add_argument("--sizes", type=_sizes_list, default=[0.5, 5.0, 25.0, 50.0],
                           metavar="KB,KB,...", help="report sizes in kB (default 0.5,5,25,50)")
    calibrate.add_argument("--reps", type=int, default=50, metavar="N",
                           help="timing repetitions per operation (default 50)")
    _add_common(calibrate)
    calibrate.set_defaults(func=cmd_calibrate)

    simulate = sub.add_parser("simulate", help="run one deterministic simulation")
    _add_topology(simulate)
    simulate.add_argument("--duration", type=float, default=None, metavar="S",
                          help="simulated seconds (default: 3 stacked hold cycles)")
    simulate.add_argument("--seed", type=int, default=1,
                          help="simulation seed (HIERMON_SEED overrides)")
    simulate.add_argument("--jitter", type=float, default=0.0, metavar="F",
                          help="tick phase jitter as a fraction of the period (default 0)")
    _add_common(simulate)
    simulate.set_defaults(func=cmd_simulate)

    sweep = sub.add_parser("sweep", help="capacity sweep over hierarchy presets")
    sweep.add_argument("--presets", nargs="+", choices=sorted(PRESETS),
                       default=sorted(PRESETS), metavar="NAME",
                       help="presets to sweep (default: all)")
    sweep.add_argument("--n-max", type=int, default=6000, metavar="N",
                       help="largest machine count (default 6000)")
    sweep.add_argument("--step", type=int, default=50, metavar="N",
                       help="machine-count step (default 50)")
    _add_common(sweep)
    sweep.set_defaults(func=cmd_sweep)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 0 if exc.code in (0, None) else 2
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


def entrypoint() -> None:
    sys.exit(main())
