# ---
# jupyter:
#   jupytext:
#     text_representation:
#       extension: .py
#       format_name: light
# ---

# # Collecting a training set with taps
#
# The data stage uses the exact same graph as the basic stage. Collection is
# bolted on from outside: find the allocation and wait streams by name, tap them,
# and join on ride id.

import tempfile
from pathlib import Path

from ridefbp.dataset import install_collection, read_csv, write_csv
from ridefbp.engine import export_dot
from ridefbp.ride import build_app
from ridefbp.sim import SimConfig, run

graph = build_app("data")
assert export_dot(graph) == export_dot(build_app("min"))
collector = install_collection(graph)

runlog = run(SimConfig(seed=42), graph, collector)
rows = collector.rows()
print(len(rows), "rows")
print(rows[0])

out = Path(tempfile.mkdtemp()) / "dataset.csv"
write_csv(rows, out)
print(out.read_text().splitlines()[:3])
assert read_csv(out) == rows
