"""Training-data collection by tapping the app's dataflow graph.

Nothing in the app's node code changes: :func:`install_collection` looks up
the allocation and wait-time streams by name and attaches two taps.  The
collector pairs the records by ride id as they arrive.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, fields
from pathlib import Path

from .engine import Graph

ALLOCATION_STREAM = "RideAllocationStream"
WAIT_STREAM = "RideWaitInfoStream"

HEADER = ("ride_id", "driver_id", "driver_x", "driver_y", "user_x", "user_y", "distance", "actual_wait")


class CollectionError(LookupError):
    pass


class DatasetFormatError(ValueError):
    def __init__(self, path, line: int, message: str):
        super().__init__(f"{path}:{line}: {message}")
        self.line = line


@dataclass(frozen=True)
class DatasetRow:
    ride_id: int
    driver_id: int
    driver_x: float
    driver_y: float
    user_x: float
    user_y: float
    distance: float
    actual_wait: int


class Collector:
    """Joins allocation and wait records on ride id."""

    def __init__(self):
        self.allocations: dict = {}  # insertion order == allocation order
        self.waits: dict = {}
        self._completed: dict[int, DatasetRow] = {}

    def on_allocation(self, allocation, tick: int) -> None:
        self.allocations.setdefault(allocation.ride_id, allocation)
        self._complete(allocation.ride_id)

    def on_wait(self, wait, tick: int) -> None:
        self.waits.setdefault(wait.ride_id, wait)
        self._complete(wait.ride_id)

    def _complete(self, ride_id) -> None:
        allocation = self.allocations.get(ride_id)
        wait = self.waits.get(ride_id)
        if allocation is None or wait is None or ride_id in self._completed:
            return
        driver = allocation.driver_location_at_allocation
        user = allocation.pickup_location
        self._completed[ride_id] = DatasetRow(
            ride_id=allocation.ride_id,
            driver_id=allocation.driver_id,
            driver_x=driver.x,
            driver_y=driver.y,
            user_x=user.x,
            user_y=user.y,
            distance=math.hypot(driver.x - user.x, driver.y - user.y),
            actual_wait=wait.actual_wait,
        )

    def rows(self) -> list[DatasetRow]:
        return [self._completed[r] for r in self.allocations if r in self._completed]


def install_collection(graph: Graph) -> Collector:
    streams = {name: graph.find_stream(name) for name in (ALLOCATION_STREAM, WAIT_STREAM)}
    missing = [name for name, handle in streams.items() if handle is None]
    if missing:
        raise CollectionError(f"graph lacks streams needed for collection: {', '.join(missing)}")
    collector = Collector()
    graph.attach_tap(ALLOCATION_STREAM, collector.on_allocation)
    graph.attach_tap(WAIT_STREAM, collector.on_wait)
    return collector


def rows(collector: Collector) -> list[DatasetRow]:
    return collector.rows()


def write_csv(rows, path) -> None:
    """Floats are written with ``repr`` so reading them back is exact."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(HEADER)
        for row in rows:
            writer.writerow([repr(getattr(row, name)) for name in HEADER])


_CONVERTERS = {f.name: (int if f.type in ("int", int) else float) for f in fields(DatasetRow)}


def read_csv(path) -> list[DatasetRow]:
    out = []
    with open(Path(path), newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            return out
        if tuple(header) != HEADER:
            raise DatasetFormatError(path, 1, f"expected header {','.join(HEADER)}")
        for line_no, values in enumerate(reader, start=2):
            if not values:
                continue
            if len(values) != len(HEADER):
                raise DatasetFormatError(path, line_no, f"expected {len(HEADER)} columns, got {len(values)}")
            try:
                parsed = {name: _CONVERTERS[name](v) for name, v in zip(HEADER, values)}
            except ValueError as exc:
                raise DatasetFormatError(path, line_no, str(exc)) from exc
            out.append(DatasetRow(**parsed))
    return out
