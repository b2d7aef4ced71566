"""Tests for report construction, aggregation, and the XML wire format."""

from __future__ import annotations

import random

import pytest
from hypothesis import given
from hypothesis import strategies as st

from hiermon.report import (
    EmptyWindowError,
    LevelKind,
    LevelMismatchError,
    MalformedXmlError,
    Report,
    SchemaViolationError,
    ServiceReport,
    SourceMismatchError,
    aggregate,
    default_node_report,
    iter_leaves,
    leaf_count,
    make_node_report,
    measure,
    parse,
    report_level,
    report_of_size_kb,
    serialize,
    synthetic_service_report,
)


def sr(service="svc-00", source="m-0001", period=60.0, at=1000, metrics=()):
    return ServiceReport(service, source, period, at, tuple(metrics))


class TestServiceReport:
    def test_empty_ids_rejected(self):
        with pytest.raises(ValueError):
            sr(service="")
        with pytest.raises(ValueError):
            sr(source="")

    def test_nonpositive_period_rejected(self):
        with pytest.raises(ValueError):
            sr(period=0.0)

    def test_duplicate_metric_names_rejected(self):
        with pytest.raises(ValueError):
            sr(metrics=[("cpu", 1.0), ("cpu", 2.0)])


class TestMakeNodeReport:
    def test_singleton(self):
        report = make_node_report("m-0001", [sr()], now=2000)
        assert report.level_kind is LevelKind.NODE
        assert leaf_count(report) == 1
        assert report.generated_at_ms == 2000

    @pytest.mark.parametrize("flip", [False, True])
    def test_latest_per_service_wins_in_either_order(self, flip):
        early = sr(at=1000)
        late = sr(at=5000)
        window = [late, early] if flip else [early, late]
        report = make_node_report("m-0001", window, now=6000)
        assert report.children == (late,)

    def test_timestamp_tie_keeps_later_arrival(self):
        a = sr(at=1000, metrics=[("cpu", 1.0)])
        b = sr(at=1000, metrics=[("cpu", 2.0)])
        report = make_node_report("m-0001", [a, b], now=2000)
        assert report.children == (b,)

    def test_distinct_services_all_kept(self):
        window = [sr(service=f"svc-{i:02d}") for i in range(10)]
        report = make_node_report("m-0001", window, now=2000)
        assert leaf_count(report) == 10

    def test_empty_window(self):
        with pytest.raises(EmptyWindowError):
            make_node_report("m-0001", [], now=2000)

    def test_mixed_sources(self):
        with pytest.raises(SourceMismatchError):
            make_node_report("m-0001", [sr(), sr(source="m-0002")], now=2000)


class TestAggregate:
    def test_single_child(self):
        node = default_node_report()
        agg = aggregate([node], LevelKind.INTERMEDIATE, "ch-1-01", now=3000)
        assert agg.children == (node,)
        assert report_level(agg) == 1

    def test_fifty_node_reports_carry_at_least_25_kb(self):
        nodes = [default_node_report(f"m-{i:04d}") for i in range(50)]
        agg = aggregate(nodes, LevelKind.INTERMEDIATE, "ch-1-01", now=3000)
        payload = sum(measure(n).bytes for n in agg.children)
        assert payload >= 25 * 1024
        assert measure(agg).bytes > payload

    def test_system_report_over_two_intermediates(self):
        def intermediate(tag):
            nodes = [default_node_report(f"m-{tag}{i:03d}") for i in range(10)]
            return aggregate(nodes, LevelKind.INTERMEDIATE, f"ch-1-{tag}", now=3000)

        system = aggregate(
            [intermediate("a"), intermediate("b")], LevelKind.SYSTEM, "root", now=4000
        )
        assert leaf_count(system) == 20
        assert report_level(system) == 2

    def test_exact_redelivery_collapsed(self):
        node = default_node_report("m-0001", generated_at_ms=1000)
        agg = aggregate([node, node], LevelKind.INTERMEDIATE, "ch", now=2000)
        assert agg.children == (node,)

    def test_distinct_windows_from_same_source_all_kept(self):
        # A feeder flushing faster than its parent contributes several windows;
        # none of them may be dropped.
        windows = [
            make_node_report("m-0001", [sr(at=t)], now=t + 1) for t in (1000, 2000, 3000)
        ]
        agg = aggregate(windows, LevelKind.INTERMEDIATE, "ch", now=4000)
        assert leaf_count(agg) == 3

    def test_empty_buffer(self):
        with pytest.raises(EmptyWindowError):
            aggregate([], LevelKind.INTERMEDIATE, "ch", now=1000)

    def test_cannot_aggregate_into_node(self):
        with pytest.raises(LevelMismatchError):
            aggregate([default_node_report()], LevelKind.NODE, "ch", now=1000)

    def test_system_child_rejected(self):
        system = aggregate([default_node_report()], LevelKind.SYSTEM, "root", now=1000)
        with pytest.raises(LevelMismatchError):
            aggregate([system], LevelKind.SYSTEM, "root2", now=2000)


class TestWireFormat:
    def test_single_line_and_attribute_order(self):
        report = make_node_report(
            "m-0001", [sr(metrics=[("cpu-user-pct", 37.25)])], now=1700000000000
        )
        text = serialize(report).decode()
        assert "\n" not in text
        assert text.startswith('<report kind="node" source="m-0001" generated-at-ms="1700000000000">')
        assert (
            '<service-report service="svc-00" source="m-0001" period-s="60.0"'
            ' generated-at-ms="1000">' in text
        )
        assert '<metric name="cpu-user-pct" value="37.25"/>' in text

    def test_serialize_is_deterministic(self):
        report = report_of_size_kb(5.0)
        assert serialize(report) == serialize(report)

    def test_serialize_injective_on_corpus(self):
        corpus = [default_node_report(f"m-{i:04d}", 1000 + i) for i in range(200)]
        corpus += [report_of_size_kb(kb) for kb in (0.5, 1.0, 5.0, 25.0)]
        blobs = {serialize(r) for r in corpus}
        assert len(blobs) == len(corpus)

    def test_attribute_values_are_escaped(self):
        tricky = 'm-"<&>\'-01'
        report = make_node_report(tricky, [sr(source=tricky)], now=1000)
        assert parse(serialize(report)) == report


class TestParse:
    def test_roundtrip_of_default_report(self):
        report = default_node_report()
        assert parse(serialize(report)) == report

    def test_truncated_document(self):
        blob = serialize(default_node_report())[:-5]
        with pytest.raises(MalformedXmlError):
            parse(blob)

    def test_not_xml_at_all(self):
        with pytest.raises(MalformedXmlError):
            parse(b"definitely not xml")

    def test_unknown_root_element(self):
        with pytest.raises(SchemaViolationError):
            parse(b'<bulletin kind="node" source="m" generated-at-ms="1"/>')

    def test_unknown_kind(self):
        with pytest.raises(SchemaViolationError):
            parse(b'<report kind="galactic" source="m" generated-at-ms="1"/>')

    def test_childless_report(self):
        with pytest.raises(SchemaViolationError):
            parse(b'<report kind="node" source="m" generated-at-ms="1"></report>')

    def test_node_nested_in_node(self):
        inner = (
            '<report kind="node" source="m" generated-at-ms="1">'
            '<service-report service="s" source="m" period-s="1.0" generated-at-ms="1">'
            "</service-report></report>"
        )
        doc = f'<report kind="node" source="m" generated-at-ms="2">{inner}</report>'
        with pytest.raises(SchemaViolationError):
            parse(doc.encode())

    def test_service_report_inside_intermediate(self):
        doc = (
            '<report kind="intermediate" source="c" generated-at-ms="2">'
            '<service-report service="s" source="m" period-s="1.0" generated-at-ms="1"/>'
            "</report>"
        )
        with pytest.raises(SchemaViolationError):
            parse(doc.encode())

    def test_nested_system_report(self):
        inner = (
            '<report kind="system" source="root" generated-at-ms="1">'
            '<report kind="node" source="m" generated-at-ms="1">'
            '<service-report service="s" source="m" period-s="1.0" generated-at-ms="1"/>'
            "</report></report>"
        )
        doc = f'<report kind="system" source="r2" generated-at-ms="2">{inner}</report>'
        with pytest.raises(SchemaViolationError):
            parse(doc.encode())

    def test_missing_and_unknown_attributes(self):
        with pytest.raises(SchemaViolationError):
            parse(b'<report kind="node" generated-at-ms="1"/>')
        with pytest.raises(SchemaViolationError):
            parse(
                b'<report kind="node" source="m" generated-at-ms="1" color="red">'
                b'<service-report service="s" source="m" period-s="1.0" generated-at-ms="1"/>'
                b"</report>"
            )

    def test_non_integer_timestamp(self):
        with pytest.raises(SchemaViolationError):
            parse(
                b'<report kind="node" source="m" generated-at-ms="later">'
                b'<service-report service="s" source="m" period-s="1.0" generated-at-ms="1"/>'
                b"</report>"
            )

    def test_stray_text_rejected(self):
        doc = (
            '<report kind="node" source="m" generated-at-ms="1">surprise'
            '<service-report service="s" source="m" period-s="1.0" generated-at-ms="1"/>'
            "</report>"
        )
        with pytest.raises(SchemaViolationError):
            parse(doc.encode())

    def test_metric_must_be_empty(self):
        doc = (
            '<report kind="node" source="m" generated-at-ms="1">'
            '<service-report service="s" source="m" period-s="1.0" generated-at-ms="1">'
            '<metric name="cpu" value="1.0"><metric name="x" value="2.0"/></metric>'
            "</service-report></report>"
        )
        with pytest.raises(SchemaViolationError):
            parse(doc.encode())


class TestMeasure:
    def test_default_node_report_is_about_one_unit(self):
        size = measure(default_node_report())
        assert 512 - 64 <= size.bytes <= 512 + 64
        assert size.node_report_units == pytest.approx(1.0, rel=0.13)

    def test_default_size_holds_across_sources_and_clocks(self):
        for i in range(100):
            report = default_node_report(
                f"m-{i:04d}", 1_700_000_000_000 + i * 60_000, random.Random(i)
            )
            assert 448 <= measure(report).bytes <= 576

    def test_thirty_node_reports_measure_about_thirty_units(self):
        report = report_of_size_kb(15.0)
        assert len(report.children) == 30
        assert measure(report).node_report_units == pytest.approx(30.0, rel=0.15)

    def test_minimum_report_has_positive_units(self):
        tiny = make_node_report("m", [sr(source="m", metrics=())], now=1)
        assert measure(tiny).node_report_units > 0

    def test_empty_metrics_still_well_formed(self):
        tiny = make_node_report("m", [sr(source="m", metrics=())], now=1)
        assert parse(serialize(tiny)) == tiny


# --- property-based checks ---------------------------------------------------

_id_text = st.text(
    alphabet="abcdefghijklmnopqrstuvwxyz0123456789-_.&<>\"' é",
    min_size=1,
    max_size=12,
)
_timestamps = st.integers(min_value=0, max_value=2**48)
_values = st.floats(allow_nan=False, allow_infinity=False)


@st.composite
def _service_reports(draw, source=None):
    names = draw(st.lists(_id_text, min_size=0, max_size=4, unique=True))
    metrics = tuple((name, draw(_values)) for name in names)
    return ServiceReport(
        service_id=draw(_id_text),
        source_machine=source if source is not None else draw(_id_text),
        period_s=draw(st.floats(min_value=0.001, max_value=1e6)),
        generated_at_ms=draw(_timestamps),
        metrics=metrics,
    )


@st.composite
def _node_reports(draw):
    source = draw(_id_text)
    kids = draw(st.lists(_service_reports(source=source), min_size=1, max_size=4))
    return Report(LevelKind.NODE, source, draw(_timestamps), tuple(kids))


def _wrap(children: st.SearchStrategy) -> st.SearchStrategy:
    @st.composite
    def intermediates(draw):
        kids = draw(st.lists(children, min_size=1, max_size=3))
        return Report(LevelKind.INTERMEDIATE, draw(_id_text), draw(_timestamps), tuple(kids))

    return intermediates()


_report_trees = st.recursive(_node_reports(), _wrap, max_leaves=8)


@st.composite
def _any_reports(draw):
    tree = draw(_report_trees)
    if draw(st.booleans()):
        return Report(LevelKind.SYSTEM, draw(_id_text), draw(_timestamps), (tree,))
    return tree


class TestReportProperties:
    @given(_any_reports())
    def test_parse_inverts_serialize(self, report):
        assert parse(serialize(report)) == report

    @given(st.lists(_node_reports(), min_size=1, max_size=6))
    def test_aggregation_preserves_leaf_multiset(self, nodes):
        distinct = {(n.source, n.generated_at_ms): n for n in nodes}
        agg = aggregate(nodes, LevelKind.INTERMEDIATE, "ch", now=0)
        expected = sorted(
            (leaf.service_id, leaf.generated_at_ms)
            for n in distinct.values()
            for leaf in iter_leaves(n)
        )
        got = sorted((leaf.service_id, leaf.generated_at_ms) for leaf in iter_leaves(agg))
        assert got == expected

    @given(st.lists(_node_reports(), min_size=1, max_size=6))
    def test_dedupe_is_idempotent(self, nodes):
        once = aggregate(nodes, LevelKind.INTERMEDIATE, "ch", now=0)
        twice = aggregate(once.children, LevelKind.INTERMEDIATE, "ch", now=0)
        assert twice.children == once.children

    @given(st.lists(_report_trees, min_size=1, max_size=5))
    def test_parent_is_larger_than_any_child_and_sum_of_payloads(self, children):
        agg = aggregate(children, LevelKind.INTERMEDIATE, "ch", now=0)
        sizes = [measure(c).bytes for c in agg.children]
        total = measure(agg).bytes
        assert total > max(sizes)
        assert total >= sum(sizes)

    @given(st.integers(0, 2**31), _timestamps)
    def test_generator_is_deterministic_per_seed(self, seed, at):
        a = default_node_report("m-0001", at, random.Random(seed))
        b = default_node_report("m-0001", at, random.Random(seed))
        assert serialize(a) == serialize(b)


def test_synthetic_service_report_has_eight_metrics():
    report = synthetic_service_report()
    assert len(report.metrics) == 8
    assert len({name for name, _ in report.metrics}) == 8
