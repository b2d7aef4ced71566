"""Follow monitoring data from raw metrics up to one system-wide document.

Each machine wraps its service reports into a node report; channels merge
node reports into intermediate reports and, at the root, into a system
report. Everything on the wire is a single-line XML document, and parsing
gives back exactly what was serialized.
"""

from hiermon.report import (
    LevelKind,
    aggregate,
    iter_leaves,
    make_node_report,
    measure,
    parse,
    serialize,
    synthetic_service_report,
)

# Two machines, each running two monitored services.
now = 1_700_000_120_000  # wall-clock milliseconds
node_reports = []
for machine in ("m-0001", "m-0002"):
    services = [
        synthetic_service_report(f"load-probe-{i}", machine, generated_at_ms=now - 500)
        for i in range(2)
    ]
    node_reports.append(make_node_report(machine, services, now))

print("node report sizes:", [measure(r).bytes for r in node_reports], "bytes")

# A first-level channel merges one holding window of node reports...
intermediate = aggregate(node_reports, LevelKind.INTERMEDIATE, "ch-1-000", now + 100)
# ...and the root merges intermediates into the system document.
system = aggregate([intermediate], LevelKind.SYSTEM, "root", now + 200)

blob = serialize(system)
print(f"system report: {measure(system).bytes} bytes, "
      f"{measure(system).node_report_units:.1f} node-report units")
print("wire format starts:", blob[:80].decode(), "...")

# The round trip is exact: same structure, same floats, same order.
assert parse(blob) == system
print("parse(serialize(system)) == system")

# No leaf is lost on the way up.
leaves = sorted((leaf.source_machine, leaf.service_id) for leaf in iter_leaves(system))
print(f"{len(leaves)} service reports reached the root:")
for source, service in leaves:
    print(f"  {source} / {service}")

# Re-delivered duplicates collapse; distinct windows from one source do not.
duplicated = aggregate(
    [intermediate, intermediate], LevelKind.SYSTEM, "root", now + 200
)
assert duplicated == system
later_window = aggregate(node_reports, LevelKind.INTERMEDIATE, "ch-1-000", now + 30_100)
two_windows = aggregate(
    [intermediate, later_window], LevelKind.SYSTEM, "root", now + 31_000
)
print(f"duplicate delivery kept {len(duplicated.children)} child; "
      f"two real windows kept {len(two_windows.children)}")
