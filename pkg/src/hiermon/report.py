"""Recursive XML monitoring reports and lossless aggregation.

A node report wraps the service reports one machine collected in a hold
window; intermediate reports wrap lower-level reports; the single system
report at the tree root transitively contains every service report.  The
wire format is plain single-line UTF-8 XML so serialized size is
deterministic and comparable.
"""

from __future__ import annotations

import enum
import xml.etree.ElementTree as ElementTree
from dataclasses import dataclass, field
from random import Random
from typing import Iterator, Sequence
from xml.sax.saxutils import escape

REFERENCE_NODE_REPORT_BYTES = 512

_ATTR_ENTITIES = {'"': "&quot;"}


class ReportError(Exception):
    """Base for all report construction and parsing failures."""


class EmptyWindowError(ReportError):
    """A hold window produced no reports, so there is nothing to emit."""


class SourceMismatchError(ReportError):
    """A node report may only contain service reports from its own machine."""


class LevelMismatchError(ReportError):
    """A report was offered to an aggregation level it cannot belong to."""


class MalformedXmlError(ReportError):
    """The input is not well-formed XML."""


class SchemaViolationError(ReportError):
    """Well-formed XML that does not describe a valid report tree."""


class LevelKind(enum.Enum):
    NODE = "node"
    INTERMEDIATE = "intermediate"
    SYSTEM = "system"


@dataclass(frozen=True)
class ServiceReport:
    """Performance data from a single application service."""

    service_id: str
    source_machine: str
    period_s: float
    generated_at_ms: int
    metrics: tuple[tuple[str, float], ...]

    def __post_init__(self) -> None:
        if not self.service_id:
            raise ValueError("service_id must be non-empty")
        if not self.source_machine:
            raise ValueError("source_machine must be non-empty")
        if self.period_s <= 0:
            raise ValueError("period_s must be > 0")
        names = [name for name, _ in self.metrics]
        if len(set(names)) != len(names):
            raise ValueError("metric names must be unique within a report")


@dataclass(frozen=True)
class Report:
    """One report in the aggregation tree.

    ``children`` holds :class:`ServiceReport` values for node reports and
    nested :class:`Report` values for intermediate and system reports.
    """

    level_kind: LevelKind
    source: str
    generated_at_ms: int
    children: tuple

    def __post_init__(self) -> None:
        if not self.source:
            raise ValueError("source must be non-empty")
        if not self.children:
            raise ValueError("a report must contain at least one child")
        if self.level_kind is LevelKind.NODE:
            if not all(isinstance(c, ServiceReport) for c in self.children):
                raise ValueError("node reports contain only service reports")
        else:
            if not all(isinstance(c, Report) for c in self.children):
                raise ValueError("aggregated reports contain only reports")
            if any(c.level_kind is LevelKind.SYSTEM for c in self.children):
                raise ValueError("a system report cannot be nested")


@dataclass(frozen=True)
class ReportSize:
    bytes: int
    node_report_units: float


def report_level(report: Report) -> int:
    """Aggregation height of a report: 0 for node reports."""
    if report.level_kind is LevelKind.NODE:
        return 0
    return 1 + max(report_level(child) for child in report.children)


def iter_leaves(report: Report) -> Iterator[ServiceReport]:
    for child in report.children:
        if isinstance(child, ServiceReport):
            yield child
        else:
            yield from iter_leaves(child)


def leaf_count(report: Report) -> int:
    return sum(1 for _ in iter_leaves(report))


def make_node_report(
    source: str, service_reports: Sequence[ServiceReport], now: int
) -> Report:
    """Assemble one machine's node report from a hold window of service reports.

    Only the freshest report per service survives; on equal timestamps the
    later-arriving one wins.
    """
    if not service_reports:
        raise EmptyWindowError(f"no service reports pending on {source}")
    latest: dict[str, ServiceReport] = {}
    for sr in service_reports:
        if sr.source_machine != source:
            raise SourceMismatchError(
                f"service report from {sr.source_machine} offered to sensor on {source}"
            )
        kept = latest.get(sr.service_id)
        if kept is None or sr.generated_at_ms >= kept.generated_at_ms:
            latest[sr.service_id] = sr
    return Report(LevelKind.NODE, source, now, tuple(latest.values()))


def aggregate(
    children: Sequence[Report], level_kind: LevelKind, source: str, now: int
) -> Report:
    """Merge a window of reports into one enclosing report, losing nothing.

    Exact re-deliveries — same source and same generation timestamp — are
    collapsed to a single copy; distinct windows from the same source are all
    kept, so the leaf multiset is preserved.
    """
    if not children:
        raise EmptyWindowError(f"no reports buffered on {source}")
    if level_kind is LevelKind.NODE:
        raise LevelMismatchError("aggregation cannot produce a node report")
    deduped: dict[tuple[str, int], Report] = {}
    for child in children:
        if child.level_kind is LevelKind.SYSTEM:
            raise LevelMismatchError("a system report cannot be aggregated further")
        deduped[(child.source, child.generated_at_ms)] = child
    return Report(level_kind, source, now, tuple(deduped.values()))


def _fmt(value: float) -> str:
    return repr(value)


def _attr(value: str) -> str:
    return escape(value, _ATTR_ENTITIES)


def _write_service_report(sr: ServiceReport, out: list[str]) -> None:
    out.append(
        f'<service-report service="{_attr(sr.service_id)}"'
        f' source="{_attr(sr.source_machine)}"'
        f' period-s="{_fmt(sr.period_s)}"'
        f' generated-at-ms="{sr.generated_at_ms}">'
    )
    for name, value in sr.metrics:
        out.append(f'<metric name="{_attr(name)}" value="{_fmt(value)}"/>')
    out.append("</service-report>")


def _write_report(report: Report, out: list[str]) -> None:
    out.append(
        f'<report kind="{report.level_kind.value}"'
        f' source="{_attr(report.source)}"'
        f' generated-at-ms="{report.generated_at_ms}">'
    )
    for child in report.children:
        if isinstance(child, ServiceReport):
            _write_service_report(child, out)
        else:
            _write_report(child, out)
    out.append("</report>")


def serialize(report: Report) -> bytes:
    """Render a report as one line of UTF-8 XML; same report, same bytes."""
    out: list[str] = []
    _write_report(report, out)
    return "".join(out).encode("utf-8")


def measure(report: Report) -> ReportSize:
    """Size a report in bytes and in reference node-report units."""
    n = len(serialize(report))
    return ReportSize(bytes=n, node_report_units=n / REFERENCE_NODE_REPORT_BYTES)


_REPORT_ATTRS = {"kind", "source", "generated-at-ms"}
_SERVICE_ATTRS = {"service", "source", "period-s", "generated-at-ms"}
_METRIC_ATTRS = {"name", "value"}


def _no_stray_text(elem: ElementTree.Element) -> None:
    if elem.text is not None and elem.text.strip():
        raise SchemaViolationError(f"unexpected text inside <{elem.tag}>")
    for child in elem:
        if child.tail is not None and child.tail.strip():
            raise SchemaViolationError(f"unexpected text after <{child.tag}>")


def _require_attrs(elem: ElementTree.Element, allowed: set[str]) -> None:
    present = set(elem.attrib)
    if present != allowed:
        missing = allowed - present
        extra = present - allowed
        detail = []
        if missing:
            detail.append("missing " + ", ".join(sorted(missing)))
        if extra:
            detail.append("unknown " + ", ".join(sorted(extra)))
        raise SchemaViolationError(f"<{elem.tag}>: " + "; ".join(detail))


def _parse_int(elem: ElementTree.Element, attr: str) -> int:
    try:
        return int(elem.attrib[attr])
    except ValueError:
        raise SchemaViolationError(
            f"<{elem.tag}> {attr}={elem.attrib[attr]!r} is not an integer"
        ) from None


def _parse_float(elem: ElementTree.Element, attr: str) -> float:
    try:
        return float(elem.attrib[attr])
    except ValueError:
        raise SchemaViolationError(
            f"<{elem.tag}> {attr}={elem.attrib[attr]!r} is not a number"
        ) from None


def _parse_service_report(elem: ElementTree.Element) -> ServiceReport:
    _require_attrs(elem, _SERVICE_ATTRS)
    _no_stray_text(elem)
    metrics = []
    for child in elem:
        if child.tag != "metric":
            raise SchemaViolationError(f"unknown element <{child.tag}> in <service-report>")
        _require_attrs(child, _METRIC_ATTRS)
        if len(child) or (child.text is not None and child.text.strip()):
            raise SchemaViolationError("<metric> must be empty")
        metrics.append((child.attrib["name"], _parse_float(child, "value")))
    try:
        return ServiceReport(
            service_id=elem.attrib["service"],
            source_machine=elem.attrib["source"],
            period_s=_parse_float(elem, "period-s"),
            generated_at_ms=_parse_int(elem, "generated-at-ms"),
            metrics=tuple(metrics),
        )
    except ValueError as exc:
        raise SchemaViolationError(str(exc)) from None


def _parse_report(elem: ElementTree.Element) -> Report:
    if elem.tag != "report":
        raise SchemaViolationError(f"unknown element <{elem.tag}>")
    _require_attrs(elem, _REPORT_ATTRS)
    _no_stray_text(elem)
    kind_value = elem.attrib["kind"]
    try:
        kind = LevelKind(kind_value)
    except ValueError:
        raise SchemaViolationError(f"unknown report kind {kind_value!r}") from None
    children: list = []
    for child in elem:
        if kind is LevelKind.NODE:
            if child.tag != "service-report":
                raise SchemaViolationError(
                    f"node reports contain only <service-report>, found <{child.tag}>"
                )
            children.append(_parse_service_report(child))
        else:
            if child.tag != "report":
                raise SchemaViolationError(
                    f"aggregated reports contain only <report>, found <{child.tag}>"
                )
            children.append(_parse_report(child))
    try:
        return Report(
            level_kind=kind,
            source=elem.attrib["source"],
            generated_at_ms=_parse_int(elem, "generated-at-ms"),
            children=tuple(children),
        )
    except ValueError as exc:
        raise SchemaViolationError(str(exc)) from None


def parse(data: bytes | str) -> Report:
    """Inverse of :func:`serialize`; rejects anything the schema forbids."""
    try:
        root = ElementTree.fromstring(data)
    except ElementTree.ParseError as exc:
        raise MalformedXmlError(str(exc)) from None
    return _parse_report(root)


# --- synthetic report generators -------------------------------------------

DEFAULT_METRIC_NAMES = (
    "cpu-user-pct",
    "cpu-sys-pct",
    "mem-rss-kb",
    "mem-vsz-kb",
    "disk-rd-kbps",
    "disk-wr-kbps",
    "net-rx-kbps",
    "net-tx-kbps",
)

_DEFAULT_EPOCH_MS = 1_700_000_000_000


def synthetic_service_report(
    service_id: str = "svc-00",
    source_machine: str = "m-0001",
    period_s: float = 60.0,
    generated_at_ms: int = _DEFAULT_EPOCH_MS,
    rng: Random | None = None,
) -> ServiceReport:
    """A service report with the standard eight-metric payload."""
    rng = rng or Random(0)
    metrics = tuple(
        (name, round(rng.uniform(0.0, 100.0), 2)) for name in DEFAULT_METRIC_NAMES
    )
    return ServiceReport(service_id, source_machine, period_s, generated_at_ms, metrics)


def default_node_report(
    source: str = "m-0001",
    generated_at_ms: int = _DEFAULT_EPOCH_MS,
    rng: Random | None = None,
) -> Report:
    """The reference node report: one service, eight metrics, ~512 bytes."""
    sr = synthetic_service_report(
        source_machine=source, generated_at_ms=generated_at_ms, rng=rng
    )
    return Report(LevelKind.NODE, source, generated_at_ms, (sr,))


def report_of_size_kb(
    size_kb: float,
    source: str = "agg-0001",
    generated_at_ms: int = _DEFAULT_EPOCH_MS,
    rng: Random | None = None,
) -> Report:
    """An intermediate report sized in half-kilobyte node-report steps."""
    rng = rng or Random(0)
    count = max(1, round(size_kb / 0.5))
    nodes = tuple(
        default_node_report(f"m-{i:04d}", generated_at_ms, rng) for i in range(count)
    )
    return Report(LevelKind.INTERMEDIATE, source, generated_at_ms, nodes)
