"""Publisher, aggregator, and forwarder state machines around event channels.

A Sensor collects service reports on one machine and publishes a node report
every hold window.  An aggregation channel buffers whatever its children
publish and, once per hold window, its interpreter merges the buffer into a
single report that the forwarder republishes one level up.  The top-level
channel emits system reports instead.

All state here is mutated solely by the simulator's event loop; instances
must never be shared mutably across threads.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from random import Random

from hiermon.report import (
    LevelKind,
    LevelMismatchError,
    Report,
    ServiceReport,
    aggregate,
    make_node_report,
    report_level,
    synthetic_service_report,
)


class EventKind(enum.Enum):
    APP_SERVICE_TICK = "app-service-tick"
    SENSOR_FLUSH = "sensor-flush"
    CHANNEL_ARRIVAL = "channel-arrival"
    CHANNEL_FLUSH = "channel-flush"
    FORWARD_DEPARTURE = "forward-departure"


@dataclass(frozen=True)
class RoleEvent:
    kind: EventKind
    at_us: int
    payload: Report | None = None


@dataclass
class SensorState:
    """Per-machine collector: holds the latest report per service until flush."""

    machine_id: str
    app_services: tuple[tuple[str, float], ...]
    hold_us: int
    pending: dict[str, ServiceReport] = field(default_factory=dict)
    next_flush_us: int = -1

    def __post_init__(self) -> None:
        if self.next_flush_us < 0:
            self.next_flush_us = self.hold_us
        self._periods = dict(self.app_services)


def sensor_on_app_tick(
    sensor: SensorState, service_id: str, now_us: int, rng: Random | None = None
) -> SensorState:
    """Record a fresh reading for one service; an unflushed older one is replaced."""
    period_s = sensor._periods.get(service_id)
    if period_s is None:
        raise ValueError(f"service {service_id!r} is not registered on {sensor.machine_id}")
    sensor.pending[service_id] = synthetic_service_report(
        service_id=service_id,
        source_machine=sensor.machine_id,
        period_s=period_s,
        generated_at_ms=now_us // 1000,
        rng=rng,
    )
    return sensor


def sensor_flush(sensor: SensorState, now_us: int) -> Report | None:
    """Publish everything collected this window as one node report.

    An empty window publishes nothing; either way the next flush is scheduled
    one hold period later.
    """
    if now_us != sensor.next_flush_us:
        raise ValueError(
            f"flush at {now_us}us but {sensor.machine_id} is scheduled for {sensor.next_flush_us}us"
        )
    sensor.next_flush_us += sensor.hold_us
    if not sensor.pending:
        return None
    window = list(sensor.pending.values())
    sensor.pending.clear()
    return make_node_report(sensor.machine_id, window, now_us // 1000)


@dataclass
class ChannelState:
    """One aggregation channel plus its bound interpreter and forwarder."""

    channel_id: str
    level: int
    hold_us: int
    subscribers: tuple[str, ...] = ()
    top_level: bool = False
    buffer: list[tuple[Report, int]] = field(default_factory=list)
    next_flush_us: int = -1

    def __post_init__(self) -> None:
        if self.level < 1:
            raise ValueError("channel level must be >= 1")
        if self.next_flush_us < 0:
            self.next_flush_us = self.hold_us


def channel_on_publish(channel: ChannelState, report: Report, now_us: int) -> ChannelState:
    """Buffer a report published by a lower level."""
    if report.level_kind is LevelKind.SYSTEM or report_level(report) >= channel.level:
        raise LevelMismatchError(
            f"level-{report_level(report)} {report.level_kind.value} report "
            f"cannot enter level-{channel.level} channel {channel.channel_id}"
        )
    if now_us >= channel.next_flush_us:
        raise RuntimeError(
            f"{channel.channel_id}: publish at {now_us}us but flush at "
            f"{channel.next_flush_us}us has not run"
        )
    channel.buffer.append((report, now_us))
    return channel


def channel_flush(channel: ChannelState, now_us: int) -> Report | None:
    """Merge the buffered window into one report for the forwarder.

    Arrivals stamped exactly at flush time are not in the buffer (the event
    loop runs flushes first), so they land in the next window.
    """
    if now_us != channel.next_flush_us:
        raise ValueError(
            f"flush at {now_us}us but {channel.channel_id} is scheduled for "
            f"{channel.next_flush_us}us"
        )
    channel.next_flush_us += channel.hold_us
    if not channel.buffer:
        return None
    window = [report for report, _ in channel.buffer]
    channel.buffer.clear()
    kind = LevelKind.SYSTEM if channel.top_level else LevelKind.INTERMEDIATE
    return aggregate(window, kind, channel.channel_id, now_us // 1000)
