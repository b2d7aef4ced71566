"""Worst-case propagation and staleness bounds for a three-level tree.

A report published by a monitored machine can wait out a full holding
window at every aggregation level, plus the delivery delays between
levels. This walks the bound level by level and shows the two independent
ways of computing it agree.
"""

from hiermon.model import (
    ChannelTimings,
    HierarchyConfig,
    propagation_time,
    propagation_time_recursive,
    staleness_time,
)

# 400 machines: 10 per first-level channel, 10 first-level channels per
# second-level channel, 4 second-level channels under the root.
config = HierarchyConfig.from_seconds(
    depth=3,
    fanout=[1, 10, 10, 4],
    hold_s=[10.0, 30.0, 30.0, 30.0],
    service_period_s=10.0,
)

# Delivery delays measured (or modelled) per level: into and out of each
# aggregator, in seconds.
timings = ChannelTimings.from_seconds(
    t_in_s=[0.06, 0.23, 1.93],
    t_out_s=[0.01, 0.05, 0.0],
)

print("level  t_prop      t_stale     (recursive check)")
for level in range(config.depth + 1):
    closed = propagation_time(config, timings, level)
    recursive = propagation_time_recursive(config, timings, level)
    stale = staleness_time(config, timings, level)
    agrees = "ok" if closed == recursive else "MISMATCH"
    print(f"{level:>5}  {closed.seconds:>9.3f}s  {stale.seconds:>9.3f}s  {agrees}")

# With all delivery delays at zero the bound is just the stacked windows.
idle = ChannelTimings.zero(config.depth)
floor = propagation_time(config, idle, config.depth)
print()
print(f"zero-delay floor: {floor.seconds:.0f}s = sum of holding windows "
      f"{[h / 1e6 for h in config.hold_us]}")

# A saturated level poisons every bound above it.
choked = ChannelTimings.from_seconds(
    t_in_s=[0.06, float("inf"), 1.93],
    t_out_s=[0.01, 0.05, 0.0],
)
for level in range(config.depth + 1):
    bound = propagation_time(config, choked, level)
    print(f"level {level} with level 2 saturated: {bound}")
