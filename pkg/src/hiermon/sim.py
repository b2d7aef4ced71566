"""Deterministic discrete-event simulation of a whole monitoring tree.

The event loop drives app-service ticks, sensor flushes, channel flushes,
and message deliveries on an integer-microsecond clock.  Delivery delays are
the load model's per-level input/output times, so every observed propagation
can be compared exactly against the analytic worst-case bound computed from
the same numbers.

Determinism contract: one `Random(seed)` instance feeds tick phases and
metric values in a fixed order, so identical configs produce identical
traces, byte for byte, when exported.
"""

from __future__ import annotations

import csv
import heapq
import warnings
from collections import Counter
from dataclasses import dataclass
from math import prod
from pathlib import Path
from random import Random

from hiermon.channel import (
    ChannelState,
    EventKind,
    SensorState,
    channel_flush,
    channel_on_publish,
    sensor_flush,
    sensor_on_app_tick,
)
from hiermon.loadmodel import (
    DEFAULT_COEFFICIENTS,
    LoadCoefficients,
    hierarchy_loads,
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
from hiermon.report import Report, iter_leaves, make_node_report, measure, synthetic_service_report


class NotComparableError(Exception):
    """The analytic bound is saturated, so tightness has no meaning."""


class SaturatedTopologyWarning(UserWarning):
    """Some channel's modeled utilization reached 1; delays are pinned, not real."""


#: Delay assigned to messages entering a saturated channel: ten top-level holds.
SATURATION_DELAY_HOLDS = 10

_PRIORITY = {
    EventKind.CHANNEL_FLUSH: 0,
    EventKind.SENSOR_FLUSH: 1,
    EventKind.APP_SERVICE_TICK: 2,
    EventKind.CHANNEL_ARRIVAL: 3,
    EventKind.FORWARD_DEPARTURE: 4,
}

_MIN_WINDOW_US = 1_000  # report timestamps are milliseconds; finer windows alias


@dataclass(frozen=True)
class SimConfig:
    hierarchy: HierarchyConfig
    coeffs: LoadCoefficients = DEFAULT_COEFFICIENTS
    duration_us: int = 0
    seed: int = 1
    jitter_fraction: float = 0.0

    @classmethod
    def build(
        cls,
        hierarchy: HierarchyConfig,
        coeffs: LoadCoefficients = DEFAULT_COEFFICIENTS,
        duration_s: float | None = None,
        seed: int = 1,
        jitter_fraction: float = 0.0,
    ) -> "SimConfig":
        if duration_s is None:
            duration_us = 3 * sum(hierarchy.hold_us)
        else:
            duration_us = round(duration_s * 1e6)
        return cls(hierarchy, coeffs, duration_us, seed, jitter_fraction)

    def __post_init__(self) -> None:
        problems = validate(self.hierarchy)
        if problems:
            raise ValueError("invalid hierarchy: " + "; ".join(problems))
        if self.duration_us < 3 * sum(self.hierarchy.hold_us):
            raise ValueError("duration must cover at least 3 runs of stacked hold windows")
        if not 0.0 <= self.jitter_fraction < 1.0:
            raise ValueError("jitter_fraction must be in [0, 1)")
        if self.hierarchy.service_period_us < _MIN_WINDOW_US:
            raise ValueError("service period below 1 ms aliases report timestamps")
        if min(self.hierarchy.hold_us) < _MIN_WINDOW_US:
            raise ValueError("hold windows below 1 ms alias report timestamps")


@dataclass(frozen=True)
class DeliveryRecord:
    service_id: str
    emitted_at_us: int
    arrived_root_at_us: int
    propagation_us: int
    level_path: tuple[str, ...]


@dataclass
class SimTrace:
    config: SimConfig
    deliveries: list[DeliveryRecord]
    machines: list[tuple[str, int, float]]  # (id, level, utilization)
    max_observed_prop_us: int
    analytic_bound: LatencyBound
    staleness_bound: LatencyBound
    saturated_levels: tuple[int, ...]
    system_reports: list[tuple[int, Report]]  # (flush time, report)
    root_flush_times_us: list[int]
    published: dict[tuple[str, int], int]  # (service_id, generated_at_ms) -> emitted us
    unmatched_leaves: int
    event_counts: Counter

    @property
    def per_machine_utilization(self) -> dict[str, float]:
        return {machine_id: u for machine_id, _, u in self.machines}

    @property
    def max_observed_prop_s(self) -> float:
        return self.max_observed_prop_us / 1e6

    @property
    def analytic_bound_s(self) -> float:
        return self.analytic_bound.seconds


@dataclass(frozen=True)
class ModelCheck:
    bound_respected: bool
    tightness: float


@dataclass(frozen=True)
class LosslessnessReport:
    published: int
    covered: int
    missing: int
    duplicated: int

    @property
    def ok(self) -> bool:
        return self.missing == 0 and self.duplicated == 0


def _machine_label(index: int, total: int) -> str:
    width = max(4, len(str(total)))
    return f"m-{index + 1:0{width}d}"


def run(config: SimConfig) -> SimTrace:
    """Execute one simulation; see the module docstring for the event rules."""
    hierarchy = config.hierarchy
    depth = hierarchy.depth
    n_machines = machines_total(hierarchy)
    period_us = hierarchy.service_period_us
    period_s = hierarchy.service_period_seconds
    rng = Random(config.seed)

    machine_ids = [_machine_label(i, n_machines) for i in range(n_machines)]
    # group[level] = machines under one level-`level` channel
    group = [prod(hierarchy.fanout[1 : level + 1]) for level in range(depth + 1)]
    channel_ids = [
        [f"ch-{level}-{j:03d}" for j in range(n_machines // group[level])]
        for level in range(depth + 1)
    ]

    # Size the steady-state load from a representative node report.
    probe_machine = machine_ids[0]
    probe = make_node_report(
        probe_machine,
        [
            synthetic_service_report(
                f"{probe_machine}.s{j}",
                probe_machine,
                period_s,
                hierarchy.hold_us[0] // 1000,
                rng=Random(0),
            )
            for j in range(hierarchy.fanout[0])
        ],
        hierarchy.hold_us[0] // 1000,
    )
    node_size_kb = measure(probe).bytes / 1024

    loads = hierarchy_loads(hierarchy, config.coeffs, node_size_kb)
    saturated_levels = tuple(
        level for level in range(1, depth + 1) if loads[level].is_saturated
    )
    if saturated_levels:
        warnings.warn(
            f"channel levels {saturated_levels} are saturated; "
            f"messages are pinned to {SATURATION_DELAY_HOLDS} top-level holds",
            SaturatedTopologyWarning,
            stacklevel=2,
        )
    pinned_us = SATURATION_DELAY_HOLDS * hierarchy.hold_us[depth]
    t_in_us = [0] * (depth + 1)
    t_out_us = [0] * (depth + 1)
    for level in range(1, depth + 1):
        load = loads[level]
        t_in_us[level] = pinned_us if load.is_saturated else round(load.t_in_s * 1e6)
        t_out_us[level] = round(load.t_out_s * 1e6)

    model_timings = ChannelTimings.from_seconds(
        [loads[level].t_in_s for level in range(1, depth + 1)],
        [loads[level].t_out_s for level in range(1, depth + 1)],
    )
    bound = propagation_time(hierarchy, model_timings, depth)
    stale_bound = staleness_time(hierarchy, model_timings, depth)

    sensors = [
        SensorState(
            machine_id=mid,
            app_services=tuple(
                (f"{mid}.s{j}", period_s) for j in range(hierarchy.fanout[0])
            ),
            hold_us=hierarchy.hold_us[0],
        )
        for mid in machine_ids
    ]
    channels: list[list[ChannelState]] = [[]]  # sensors live at level 0
    for level in range(1, depth + 1):
        channels.append(
            [
                ChannelState(
                    channel_id=channel_ids[level][j],
                    level=level,
                    hold_us=hierarchy.hold_us[level],
                    top_level=level == depth,
                )
                for j in range(len(channel_ids[level]))
            ]
        )
    level_paths = [
        tuple(channel_ids[level][m // group[level]] for level in range(1, depth + 1))
        for m in range(n_machines)
    ]

    heap: list[tuple[int, int, int, EventKind, tuple]] = []
    seq = 0

    def push(at: int, kind: EventKind, payload: tuple) -> None:
        nonlocal seq
        if at <= config.duration_us:
            heapq.heappush(heap, (at, _PRIORITY[kind], seq, kind, payload))
            seq += 1

    for m in range(n_machines):
        for j in range(hierarchy.fanout[0]):
            phase = round(rng.random() * config.jitter_fraction * period_us)
            push(phase, EventKind.APP_SERVICE_TICK, (m, j))
        push(hierarchy.hold_us[0], EventKind.SENSOR_FLUSH, (m,))
    for level in range(1, depth + 1):
        for j in range(len(channels[level])):
            push(hierarchy.hold_us[level], EventKind.CHANNEL_FLUSH, (level, j))

    deliveries: list[DeliveryRecord] = []
    published: dict[tuple[str, int], int] = {}
    pending_delivery: dict[tuple[str, int], int] = {}
    tick_at: dict[tuple[int, str], int] = {}
    system_reports: list[tuple[int, Report]] = []
    root_flush_times: list[int] = []
    unmatched = 0
    counts: Counter = Counter()
    machine_index = {mid: m for m, mid in enumerate(machine_ids)}

    while heap:
        now, _, _, kind, payload = heapq.heappop(heap)
        counts[kind] += 1

        if kind is EventKind.APP_SERVICE_TICK:
            m, j = payload
            service_id = sensors[m].app_services[j][0]
            sensor_on_app_tick(sensors[m], service_id, now, rng)
            tick_at[(m, service_id)] = now
            push(now + period_us, EventKind.APP_SERVICE_TICK, (m, j))

        elif kind is EventKind.SENSOR_FLUSH:
            (m,) = payload
            out = sensor_flush(sensors[m], now)
            push(now + hierarchy.hold_us[0], EventKind.SENSOR_FLUSH, (m,))
            if out is not None:
                for leaf in out.children:
                    key = (leaf.service_id, leaf.generated_at_ms)
                    emitted = tick_at[(m, leaf.service_id)]
                    published[key] = emitted
                    pending_delivery[key] = emitted
                parent = m // group[1]
                push(now + t_in_us[1], EventKind.CHANNEL_ARRIVAL, (1, parent, out))

        elif kind is EventKind.CHANNEL_FLUSH:
            level, j = payload
            out = channel_flush(channels[level][j], now)
            push(now + hierarchy.hold_us[level], EventKind.CHANNEL_FLUSH, (level, j))
            if level == depth:
                root_flush_times.append(now)
                if out is not None:
                    system_reports.append((now, out))
            elif out is not None:
                push(now + t_out_us[level], EventKind.FORWARD_DEPARTURE, (level, j, out))

        elif kind is EventKind.FORWARD_DEPARTURE:
            level, j, report = payload
            parent = j // hierarchy.fanout[level + 1]
            push(now + t_in_us[level + 1], EventKind.CHANNEL_ARRIVAL, (level + 1, parent, report))

        else:  # CHANNEL_ARRIVAL
            level, j, report = payload
            if level == depth:
                for leaf in iter_leaves(report):
                    key = (leaf.service_id, leaf.generated_at_ms)
                    emitted = pending_delivery.pop(key, None)
                    if emitted is None:
                        unmatched += 1
                        continue
                    deliveries.append(
                        DeliveryRecord(
                            service_id=leaf.service_id,
                            emitted_at_us=emitted,
                            arrived_root_at_us=now,
                            propagation_us=now - emitted,
                            level_path=level_paths[machine_index[leaf.source_machine]],
                        )
                    )
            channel_on_publish(channels[level][j], report, now)

    machines: list[tuple[str, int, float]] = [
        (mid, 0, loads[0].utilization) for mid in machine_ids
    ]
    for level in range(1, depth + 1):
        machines.extend(
            (cid, level, loads[level].utilization) for cid in channel_ids[level]
        )

    return SimTrace(
        config=config,
        deliveries=deliveries,
        machines=machines,
        max_observed_prop_us=max((d.propagation_us for d in deliveries), default=0),
        analytic_bound=bound,
        staleness_bound=stale_bound,
        saturated_levels=saturated_levels,
        system_reports=system_reports,
        root_flush_times_us=root_flush_times,
        published=published,
        unmatched_leaves=unmatched,
        event_counts=counts,
    )


def verify_against_model(trace: SimTrace) -> ModelCheck:
    """Compare the worst observed propagation against the analytic bound."""
    if trace.analytic_bound.is_saturated:
        raise NotComparableError("analytic bound is saturated")
    bound_us = trace.analytic_bound.micros
    assert bound_us is not None
    return ModelCheck(
        bound_respected=trace.max_observed_prop_us <= bound_us,
        tightness=trace.max_observed_prop_us / bound_us,
    )


def check_staleness(trace: SimTrace) -> bool:
    """Every delivered leaf's age on root arrival stays within the staleness bound."""
    if trace.staleness_bound.is_saturated:
        return True
    limit = trace.staleness_bound.micros
    period = trace.config.hierarchy.service_period_us
    return all(d.propagation_us + period <= limit for d in trace.deliveries)


def check_losslessness(trace: SimTrace) -> LosslessnessReport:
    """Published-vs-root-leaf multiset comparison over the covered window.

    A published service report is covered when a finite propagation bound plus
    one root hold still fits before the end of the run; covered reports must
    appear exactly once across all system reports, everything at most once.
    """
    counted: Counter = Counter()
    for _, report in trace.system_reports:
        counted.update(
            (leaf.service_id, leaf.generated_at_ms) for leaf in iter_leaves(report)
        )
    duplicated = sum(1 for c in counted.values() if c > 1)
    if trace.analytic_bound.is_saturated:
        return LosslessnessReport(len(trace.published), 0, 0, duplicated)
    horizon = (
        trace.config.duration_us
        - trace.analytic_bound.micros
        - trace.config.hierarchy.hold_us[trace.config.hierarchy.depth]
    )
    covered = [key for key, emitted in trace.published.items() if emitted <= horizon]
    missing = sum(1 for key in covered if counted[key] == 0)
    return LosslessnessReport(len(trace.published), len(covered), missing, duplicated)


def write_trace_csv(path: Path | str, trace: SimTrace) -> None:
    with open(path, "w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(["service_id", "emitted_at_us", "arrived_root_at_us", "propagation_us"])
        for d in trace.deliveries:
            writer.writerow([d.service_id, d.emitted_at_us, d.arrived_root_at_us, d.propagation_us])


def write_machines_csv(path: Path | str, trace: SimTrace) -> None:
    with open(path, "w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(["channel_id", "level", "utilization"])
        for machine_id, level, utilization in trace.machines:
            writer.writerow([machine_id, level, repr(utilization)])
