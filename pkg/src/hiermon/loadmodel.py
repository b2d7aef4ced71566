"""Parametric CPU/latency cost model for aggregation machines.

Each machine is a single server: utilization is the rate-weighted sum of
per-message parse and serialize costs, inbound delivery time inflates by
1/(1-U) as the CPU approaches saturation, and outbound time stays affine in
report size.  Coefficients either come from labeled synthetic defaults or are
calibrated by timing the real parse/serialize/aggregate implementations on
the current host.

The timed loops in :func:`measure_costs` must run on a single thread with no
concurrent benchmark in the same process.
"""

from __future__ import annotations

import csv
import math
import statistics
import time
import warnings
from dataclasses import dataclass
from pathlib import Path
from random import Random
from typing import Callable, Sequence

from hiermon.model import ChannelTimings, HierarchyConfig
from hiermon.report import LevelKind, aggregate, parse, report_of_size_kb, serialize


class CalibrationUnstableError(Exception):
    """Timer spread too large for the measured medians to be trusted.

    ``samples`` carries whatever complete measurements were taken before the
    unstable one, so callers can keep them.
    """

    def __init__(self, message: str, samples: "list[CostSample] | None" = None):
        super().__init__(message)
        self.samples = samples or []


@dataclass(frozen=True)
class LoadCoefficients:
    """Affine per-message costs, in seconds and seconds per kilobyte."""

    parse_s_per_kb: float
    parse_fixed_s: float
    serialize_s_per_kb: float
    serialize_fixed_s: float
    aggregate_s_per_kb: float
    net_latency_s: float
    calibrated: bool = False

    def __post_init__(self) -> None:
        for name in (
            "parse_s_per_kb",
            "parse_fixed_s",
            "serialize_s_per_kb",
            "serialize_fixed_s",
            "aggregate_s_per_kb",
            "net_latency_s",
        ):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")
        if self.parse_s_per_kb <= 0:
            raise ValueError("parse_s_per_kb must be > 0")


#: Synthetic defaults for uncalibrated runs; NOT measurements of any host.
DEFAULT_COEFFICIENTS = LoadCoefficients(
    parse_s_per_kb=0.008,
    parse_fixed_s=0.050,
    serialize_s_per_kb=0.002,
    serialize_fixed_s=0.010,
    aggregate_s_per_kb=0.001,
    net_latency_s=0.005,
    calibrated=False,
)


@dataclass(frozen=True)
class WorkloadSpec:
    """Steady-state message flow through one machine.

    ``inputs`` lists (rate_hz, size_kb) per feeder; ``output`` is the
    (rate_hz, size_kb) of the report the machine itself emits.
    """

    inputs: tuple[tuple[float, float], ...]
    output: tuple[float, float]

    def __post_init__(self) -> None:
        for rate, size in (*self.inputs, self.output):
            if rate <= 0:
                raise ValueError("rates must be > 0")
            if size <= 0:
                raise ValueError("sizes must be > 0")


@dataclass(frozen=True)
class MachineLoad:
    utilization: float
    t_in_s: float
    t_out_s: float

    @property
    def is_saturated(self) -> bool:
        return math.isinf(self.t_in_s)


def utilization(spec: WorkloadSpec, coeffs: LoadCoefficients) -> float:
    """Fraction of one CPU consumed by parsing inputs and emitting the output."""
    u = sum(
        rate * (coeffs.parse_fixed_s + coeffs.parse_s_per_kb * size)
        for rate, size in spec.inputs
    )
    out_rate, out_size = spec.output
    u += out_rate * (
        coeffs.serialize_fixed_s
        + (coeffs.serialize_s_per_kb + coeffs.aggregate_s_per_kb) * out_size
    )
    return u


def input_time(spec: WorkloadSpec, coeffs: LoadCoefficients) -> float:
    """Seconds to deliver one inbound report, or infinity once the CPU saturates.

    The probe message is the largest input; its service time stretches by
    1/(1-U) as utilization climbs.
    """
    if not spec.inputs:
        raise ValueError("input_time needs at least one input flow")
    u = utilization(spec, coeffs)
    if u >= 1.0:
        return math.inf
    probe_kb = max(size for _, size in spec.inputs)
    service = coeffs.parse_fixed_s + coeffs.parse_s_per_kb * probe_kb
    return coeffs.net_latency_s + service / (1.0 - u)


def output_time(output_size_kb: float, coeffs: LoadCoefficients) -> float:
    """Seconds to serialize and hand off one outbound report; affine in size."""
    if output_size_kb <= 0:
        raise ValueError("output size must be > 0")
    return (
        coeffs.net_latency_s
        + coeffs.serialize_fixed_s
        + coeffs.serialize_s_per_kb * output_size_kb
    )


# --- applying the model to a whole hierarchy --------------------------------


def level_report_sizes_kb(config: HierarchyConfig, node_size_kb: float) -> tuple[float, ...]:
    """Steady-state report size per level, indexed 0..depth.

    A level's report carries every child window accumulated during its hold,
    so size multiplies by fanout and by the hold-period ratio.
    """
    sizes = [node_size_kb]
    for level in range(1, config.depth + 1):
        ratio = config.hold_us[level] / config.hold_us[level - 1]
        sizes.append(config.fanout[level] * ratio * sizes[level - 1])
    return tuple(sizes)


def hierarchy_loads(
    config: HierarchyConfig, coeffs: LoadCoefficients, node_size_kb: float
) -> dict[int, MachineLoad]:
    """Per-level machine load, from sensor machines (0) up to the root channel."""
    sizes = level_report_sizes_kb(config, node_size_kb)
    loads: dict[int, MachineLoad] = {}
    for level in range(config.depth + 1):
        out_rate = 1.0 / (config.hold_us[level] / 1e6)
        if level == 0:
            spec = WorkloadSpec(inputs=(), output=(out_rate, sizes[0]))
            t_in = 0.0
        else:
            in_rate = 1.0 / (config.hold_us[level - 1] / 1e6)
            spec = WorkloadSpec(
                inputs=((in_rate, sizes[level - 1]),) * config.fanout[level],
                output=(out_rate, sizes[level]),
            )
            t_in = input_time(spec, coeffs)
        loads[level] = MachineLoad(
            utilization=utilization(spec, coeffs),
            t_in_s=t_in,
            t_out_s=output_time(sizes[level], coeffs),
        )
    return loads


def hierarchy_timings(
    config: HierarchyConfig, coeffs: LoadCoefficients, node_size_kb: float
) -> ChannelTimings:
    """Channel timings for the analytic bound, derived from the load model."""
    loads = hierarchy_loads(config, coeffs, node_size_kb)
    t_in = [loads[level].t_in_s for level in range(1, config.depth + 1)]
    t_out = [loads[level].t_out_s for level in range(1, config.depth + 1)]
    return ChannelTimings.from_seconds(t_in, t_out)


# --- on-host calibration -----------------------------------------------------


@dataclass(frozen=True)
class CostSample:
    """Median per-operation wall-clock costs at one report size."""

    size_kb: float
    parse_s: float
    serialize_s: float
    aggregate_s: float


@dataclass(frozen=True)
class FitReport:
    """Largest absolute fit residual per operation, in seconds."""

    parse_residual_s: float
    serialize_residual_s: float
    aggregate_residual_s: float


_TARGET_BATCH_S = 2e-4


def _time_operation(op: Callable[[], object], repetitions: int) -> float:
    """Median seconds per call, batching calls so each sample dwarfs timer noise."""
    op()  # warm caches before estimating
    probe_start = time.perf_counter_ns()
    op()
    probe = max(time.perf_counter_ns() - probe_start, 1)
    batch = max(1, math.ceil(_TARGET_BATCH_S * 1e9 / probe))
    samples = []
    for _ in range(repetitions):
        start = time.perf_counter_ns()
        for _ in range(batch):
            op()
        samples.append((time.perf_counter_ns() - start) / batch / 1e9)
    median = statistics.median(samples)
    q1, _, q3 = statistics.quantiles(samples, n=4)
    if median <= 0 or (q3 - q1) > 0.5 * median:
        raise CalibrationUnstableError(
            f"spread {q3 - q1:.3g}s exceeds half the median {median:.3g}s"
        )
    return median


def measure_costs(
    sizes_kb: Sequence[float], repetitions: int, rng: Random | None = None
) -> list[CostSample]:
    """Time parse/serialize/aggregate on real reports of the given sizes.

    Records the measured size of each generated report, so samples feed
    straight into :func:`fit`.
    """
    if len(set(sizes_kb)) < 3:
        raise ValueError("calibration needs at least 3 distinct sizes")
    if repetitions < 30:
        raise ValueError("calibration needs at least 30 repetitions")
    samples: list[CostSample] = []
    for size_kb in sorted(sizes_kb):
        report = report_of_size_kb(size_kb, rng=rng or Random(0))
        blob = serialize(report)
        children = report.children
        try:
            samples.append(
                CostSample(
                    size_kb=len(blob) / 1024,
                    parse_s=_time_operation(lambda: parse(blob), repetitions),
                    serialize_s=_time_operation(lambda: serialize(report), repetitions),
                    aggregate_s=_time_operation(
                        lambda: aggregate(children, LevelKind.INTERMEDIATE, "bench", 0),
                        repetitions,
                    ),
                )
            )
        except CalibrationUnstableError as exc:
            exc.samples = samples
            raise
    return samples


def _affine_fit(samples: Sequence[CostSample], cost: Callable[[CostSample], float], name: str):
    xs = [s.size_kb for s in samples]
    ys = [cost(s) for s in samples]
    slope, intercept = statistics.linear_regression(xs, ys)
    if slope < 0 or intercept < 0:
        warnings.warn(f"{name} fit produced a negative term; clamping to 0", stacklevel=3)
        slope = max(slope, 0.0)
        intercept = max(intercept, 0.0)
    residual = max(abs(y - (intercept + slope * x)) for x, y in zip(xs, ys))
    return slope, intercept, residual


def fit(samples: Sequence[CostSample]) -> tuple[LoadCoefficients, FitReport]:
    """Least-squares affine fit of the cost model to measured samples.

    The aggregate fit keeps only its per-kB slope; one-way network latency is
    not observable in-process, so the synthetic default is carried over.
    """
    if len({s.size_kb for s in samples}) < 3:
        raise ValueError("fit needs at least 3 samples with distinct sizes")
    parse_slope, parse_fixed, parse_res = _affine_fit(samples, lambda s: s.parse_s, "parse")
    ser_slope, ser_fixed, ser_res = _affine_fit(samples, lambda s: s.serialize_s, "serialize")
    agg_slope, _, agg_res = _affine_fit(samples, lambda s: s.aggregate_s, "aggregate")
    coeffs = LoadCoefficients(
        parse_s_per_kb=max(parse_slope, 1e-12),
        parse_fixed_s=parse_fixed,
        serialize_s_per_kb=ser_slope,
        serialize_fixed_s=ser_fixed,
        aggregate_s_per_kb=agg_slope,
        net_latency_s=DEFAULT_COEFFICIENTS.net_latency_s,
        calibrated=True,
    )
    return coeffs, FitReport(parse_res, ser_res, agg_res)


# --- persistence --------------------------------------------------------------

_COEFF_KEYS = (
    "parse_s_per_kb",
    "parse_fixed_s",
    "serialize_s_per_kb",
    "serialize_fixed_s",
    "aggregate_s_per_kb",
    "net_latency_s",
)


def write_coefficients(path: Path | str, coeffs: LoadCoefficients) -> None:
    lines = [f"{key}={getattr(coeffs, key)!r}" for key in _COEFF_KEYS]
    lines.append(f"calibrated={'true' if coeffs.calibrated else 'false'}")
    Path(path).write_text("\n".join(lines) + "\n")


def read_coefficients(path: Path | str) -> LoadCoefficients:
    values: dict[str, str] = {}
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise ValueError(f"{path}:{lineno}: expected key=value, got {raw!r}")
        values[key.strip()] = value.strip()
    missing = [k for k in (*_COEFF_KEYS, "calibrated") if k not in values]
    if missing:
        raise ValueError(f"{path}: missing keys: {', '.join(missing)}")
    kwargs: dict[str, object] = {key: float(values[key]) for key in _COEFF_KEYS}
    flag = values["calibrated"].lower()
    if flag not in ("true", "false"):
        raise ValueError(f"{path}: calibrated must be true or false, got {flag!r}")
    kwargs["calibrated"] = flag == "true"
    return LoadCoefficients(**kwargs)


def write_samples_csv(path: Path | str, samples: Sequence[CostSample]) -> None:
    with open(path, "w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(["size_kb", "parse_s", "serialize_s", "aggregate_s"])
        for s in samples:
            writer.writerow([f"{s.size_kb:.6f}", repr(s.parse_s), repr(s.serialize_s), repr(s.aggregate_s)])
