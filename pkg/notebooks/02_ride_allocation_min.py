# ---
# jupyter:
#   jupytext:
#     text_representation:
#       extension: .py
#       format_name: light
# ---

# # Ride allocation, basic stage
#
# Build the app graph and drive it with the discrete-event world simulator.

from collections import Counter

from ridefbp.engine import export_dot
from ridefbp.ride import build_app
from ridefbp.sim import SimConfig, run

graph = build_app("min")
print(export_dot(graph))

config = SimConfig(ticks=500, seed=42)
runlog = run(config, graph)
print(Counter(kind for kind, _ in runlog.records))

# Every allocation is the nearest free driver for the oldest pending request.

for allocation in runlog.of_type("allocation")[:5]:
    print(allocation.ride_id, allocation.driver_id, round(allocation.pickup_distance, 2), allocation.allocation_tick)

# Actual wait = ticks between allocation and pickup.

waits = [w.actual_wait for w in runlog.of_type("wait")]
print(f"{len(waits)} pickups, mean wait {sum(waits) / len(waits):.1f} ticks")
