# ---
# jupyter:
#   jupytext:
#     text_representation:
#       extension: .py
#       format_name: light
# ---

# # Training and hosting the wait-time model
#
# Drivers move in straight lines at `driver_speed`, so the true wait is
# `ceil(distance / speed)`. A least-squares line on distance should recover a
# slope close to `1 / speed`.

import numpy as np

from ridefbp import model
from ridefbp.dataset import install_collection
from ridefbp.ride import build_app
from ridefbp.sim import SimConfig, run

graph = build_app("data")
collector = install_collection(graph)
run(SimConfig(seed=42), graph, collector)
rows = collector.rows()

fitted = model.fit(rows)
print(fitted, "r2 =", round(model.r_squared(fitted, rows), 5))

# The ml stage adds one node and one output stream.

app = build_app("ml", fitted)
heldout = run(SimConfig(seed=7), app)
waits = {w.ride_id: w.actual_wait for w in heldout.of_type("wait")}
pairs = np.array([(e.estimate, waits[e.ride_id]) for e in heldout.of_type("estimate") if e.ride_id in waits])
print(f"held-out MAE {np.abs(pairs[:, 0] - pairs[:, 1]).mean():.3f} ticks over {len(pairs)} rides")
