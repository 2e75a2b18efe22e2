"""Discrete-event world simulation driving the Ride Allocation app.

Each tick the world moves assigned drivers in straight lines at constant
speed, emits ride events and new requests, and takes back the allocations the
app produced on the previous tick.  Everything random goes through one seeded
``numpy.random.Generator``, so a run is a pure function of its config and
graph.
"""

from __future__ import annotations

import enum
import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np

from .engine import Graph, NodeExecutionError
from .ride import (
    ALLOCATION_OUTPUT,
    DRIVER_LOCATIONS,
    DRIVER_STATUS,
    ESTIMATED_WAIT,
    RIDE_EVENTS,
    RIDE_INFORMATION,
    RIDE_REQUESTS,
    RIDE_WAIT_INFO,
    DriverLocation,
    DriverStatus,
    EventKind,
    Location,
    RideAllocation,
    RideEvent,
    RideRequest,
)

log = logging.getLogger(__name__)

CANCEL_FUSE = 5  # ticks between a doomed request and its Cancelled event


class ConfigError(ValueError):
    pass


class TickError(RuntimeError):
    def __init__(self, tick: int, cause: BaseException):
        super().__init__(f"app failed at tick {tick}: {cause}")
        self.tick = tick


@dataclass(frozen=True)
class SimConfig:
    n_drivers: int = 10
    world_size: float = 100.0
    request_rate: float = 0.2
    driver_speed: float = 1.0
    cancel_probability: float = 0.05
    seed: int = 42
    ticks: int = 2000

    def check(self) -> None:
        if self.n_drivers < 1:
            raise ConfigError(f"n_drivers must be >= 1, got {self.n_drivers}")
        if not self.world_size > 0:
            raise ConfigError(f"world_size must be > 0, got {self.world_size}")
        if not self.driver_speed > 0:
            raise ConfigError(f"driver_speed must be > 0, got {self.driver_speed}")
        if not 0 <= self.cancel_probability < 1:
            raise ConfigError(f"cancel_probability must be in [0, 1), got {self.cancel_probability}")
        if self.request_rate < 0:
            raise ConfigError(f"request_rate must be >= 0, got {self.request_rate}")
        if self.ticks < 0:
            raise ConfigError(f"ticks must be >= 0, got {self.ticks}")


class Phase(enum.Enum):
    TO_PICKUP = "ToPickup"
    ON_TRIP = "OnTrip"


@dataclass
class Driver:
    driver_id: int
    position: Location
    ride: RideRequest | None = None
    phase: Phase | None = None

    @property
    def available(self) -> bool:
        return self.ride is None


@dataclass
class SimOutput:
    tick: int
    new_requests: list[RideRequest] = field(default_factory=list)
    status_changes: list[DriverStatus] = field(default_factory=list)
    location_updates: list[DriverLocation] = field(default_factory=list)
    events: list[RideEvent] = field(default_factory=list)

    def as_injection(self) -> dict[str, list]:
        return {
            RIDE_REQUESTS: self.new_requests,
            DRIVER_STATUS: self.status_changes,
            DRIVER_LOCATIONS: self.location_updates,
            RIDE_EVENTS: self.events,
        }


@dataclass
class WorldState:
    config: SimConfig
    rng: np.random.Generator
    drivers: list[Driver]
    tick: int = 0  # tick the next output will carry
    requests: dict[int, RideRequest] = field(default_factory=dict)
    doomed: set[int] = field(default_factory=set)
    started: set[int] = field(default_factory=set)
    closed: set[int] = field(default_factory=set)  # cancelled or finished
    assigned: set[int] = field(default_factory=set)
    next_ride_id: int = 0
    rejections: list[str] = field(default_factory=list)

    def counts(self) -> tuple[int, int]:
        busy = sum(1 for d in self.drivers if not d.available)
        return len(self.drivers) - busy, busy


def _uniform_location(rng: np.random.Generator, size: float) -> Location:
    x, y = rng.uniform(0.0, size, 2)
    return Location(float(x), float(y))


def init_world(config: SimConfig) -> tuple[WorldState, SimOutput]:
    config.check()
    rng = np.random.default_rng(config.seed)
    drivers = [Driver(i, _uniform_location(rng, config.world_size)) for i in range(config.n_drivers)]
    world = WorldState(config, rng, drivers)
    out = SimOutput(0)
    for d in drivers:
        out.status_changes.append(DriverStatus(d.driver_id, True, 0))
        out.location_updates.append(DriverLocation(d.driver_id, d.position, 0))
    world.tick = 1
    return world, out


def _move(position: Location, target: Location, speed: float) -> tuple[Location, bool]:
    dx, dy = target.x - position.x, target.y - position.y
    dist = math.hypot(dx, dy)
    if dist <= speed:
        return target, True
    f = speed / dist
    return Location(position.x + dx * f, position.y + dy * f), False


def _reject(world: WorldState, message: str) -> None:
    log.warning("tick %d: rejected allocation: %s", world.tick, message)
    world.rejections.append(f"tick {world.tick}: {message}")


def step(world: WorldState, allocations: list[RideAllocation] = ()) -> SimOutput:
    cfg = world.config
    tick = world.tick
    out = SimOutput(tick)

    for a in allocations:
        if not 0 <= a.driver_id < len(world.drivers):
            _reject(world, f"unknown driver {a.driver_id} for ride {a.ride_id}")
            continue
        driver = world.drivers[a.driver_id]
        request = world.requests.get(a.ride_id)
        if request is None:
            _reject(world, f"unknown ride {a.ride_id}")
        elif a.ride_id in world.assigned or a.ride_id in world.closed:
            _reject(world, f"ride {a.ride_id} is already assigned or closed")
        elif not driver.available:
            _reject(world, f"driver {a.driver_id} is busy with ride {driver.ride.ride_id}")
        else:
            driver.ride, driver.phase = request, Phase.TO_PICKUP
            world.assigned.add(a.ride_id)
            out.status_changes.append(DriverStatus(driver.driver_id, False, tick))

    for driver in world.drivers:
        if driver.ride is None:
            continue
        ride = driver.ride
        target = ride.from_location if driver.phase is Phase.TO_PICKUP else ride.to_location
        driver.position, arrived = _move(driver.position, target, cfg.driver_speed)
        out.location_updates.append(DriverLocation(driver.driver_id, driver.position, tick))
        out.events.append(RideEvent(ride.ride_id, EventKind.LOCATION_UPDATE, tick, driver.position))
        if not arrived:
            continue
        if driver.phase is Phase.TO_PICKUP:
            out.events.append(RideEvent(ride.ride_id, EventKind.STARTED, tick))
            world.started.add(ride.ride_id)
            driver.phase = Phase.ON_TRIP
        else:
            out.events.append(RideEvent(ride.ride_id, EventKind.FINISHED, tick))
            world.closed.add(ride.ride_id)
            driver.ride = driver.phase = None
            out.status_changes.append(DriverStatus(driver.driver_id, True, tick))

    for ride_id in sorted(world.doomed):
        request = world.requests[ride_id]
        if request.request_tick + CANCEL_FUSE != tick:
            continue
        world.doomed.discard(ride_id)
        if ride_id in world.started:
            continue
        out.events.append(RideEvent(ride_id, EventKind.CANCELLED, tick))
        world.closed.add(ride_id)
        for driver in world.drivers:
            if driver.ride is not None and driver.ride.ride_id == ride_id:
                driver.ride = driver.phase = None
                out.status_changes.append(DriverStatus(driver.driver_id, True, tick))

    rng = world.rng
    for _ in range(int(rng.poisson(cfg.request_rate))):
        origin = _uniform_location(rng, cfg.world_size)
        destination = _uniform_location(rng, cfg.world_size)
        while destination == origin:
            destination = _uniform_location(rng, cfg.world_size)
        user_id = int(rng.integers(0, 1000))
        request = RideRequest(world.next_ride_id, user_id, origin, destination, tick)
        world.next_ride_id += 1
        world.requests[request.ride_id] = request
        out.new_requests.append(request)
        if rng.random() < cfg.cancel_probability:
            world.doomed.add(request.ride_id)

    world.tick = tick + 1
    return out


# -- run loop and run log -------------------------------------------------


@dataclass
class RunLog:
    """Everything that crossed the app boundary, in order, plus the final tick."""

    records: list[tuple[str, Any]] = field(default_factory=list)
    final_tick: int | None = None
    collector: Any = None

    def of_type(self, kind: str) -> list:
        return [r for t, r in self.records if t == kind]

    def lines(self) -> list[str]:
        return [json.dumps(flatten(kind, rec), sort_keys=True) for kind, rec in self.records]

    def dump(self, path) -> None:
        text = "".join(line + "\n" for line in self.lines())
        Path(path).write_text(text, encoding="utf-8")


def _xy(prefix: str, loc: Location | None) -> dict:
    if loc is None:
        return {f"{prefix}x": None, f"{prefix}y": None}
    return {f"{prefix}x": loc.x, f"{prefix}y": loc.y}


def flatten(kind: str, rec) -> dict:
    """One flat key/value object per record, tagged with ``type``."""
    if kind == "request":
        body = {"ride_id": rec.ride_id, "user_id": rec.user_id, "tick": rec.request_tick,
                **_xy("from_", rec.from_location), **_xy("to_", rec.to_location)}
    elif kind == "status":
        body = {"driver_id": rec.driver_id, "available": rec.available, "tick": rec.tick}
    elif kind == "location":
        body = {"driver_id": rec.driver_id, "tick": rec.tick, **_xy("", rec.location)}
    elif kind == "event":
        body = {"ride_id": rec.ride_id, "kind": rec.kind.value, "tick": rec.tick, **_xy("", rec.location)}
    elif kind == "allocation":
        body = {"ride_id": rec.ride_id, "driver_id": rec.driver_id, "user_id": rec.user_id,
                "tick": rec.allocation_tick, **_xy("pickup_", rec.pickup_location),
                **_xy("driver_", rec.driver_location_at_allocation)}
    elif kind == "ride_info":
        body = {"ride_id": rec.ride_id, "user_id": rec.user_id, "driver_id": rec.driver_id,
                "state": rec.state.value, "tick": rec.last_update_tick, **_xy("", rec.last_known_location)}
    elif kind == "wait":
        body = {"ride_id": rec.ride_id, "actual_wait": rec.actual_wait}
    elif kind == "estimate":
        body = {"ride_id": rec.ride_id, "estimate": rec.estimate, "tick": rec.allocation_tick}
    else:
        raise ValueError(f"unknown record type {kind!r}")
    return {"type": kind, **body}


def read_runlog(path) -> list[dict]:
    with open(path, encoding="utf-8") as fh:
        return [json.loads(line) for line in fh if line.strip()]


_OUTPUT_TYPES = (
    (ALLOCATION_OUTPUT, "allocation"),
    (RIDE_INFORMATION, "ride_info"),
    (RIDE_WAIT_INFO, "wait"),
    (ESTIMATED_WAIT, "estimate"),
)


def run(config: SimConfig, graph: Graph, collector: Any = None) -> RunLog:
    """Alternate world steps and app ticks for ``config.ticks`` ticks.

    ``collector`` is carried on the returned log untouched; attach it to the
    graph before calling.
    """
    config.check()
    runlog = RunLog(collector=collector)
    if config.ticks == 0:
        return runlog
    world, out = init_world(config)
    allocations: list[RideAllocation] = []
    for i in range(config.ticks):
        if i > 0:
            out = step(world, allocations)
        runlog.records.extend(("status", r) for r in out.status_changes)
        runlog.records.extend(("location", r) for r in out.location_updates)
        runlog.records.extend(("request", r) for r in out.new_requests)
        runlog.records.extend(("event", r) for r in out.events)
        try:
            emitted = graph.execute_tick(out.as_injection())
        except NodeExecutionError as exc:
            raise TickError(out.tick, exc) from exc
        for stream, kind in _OUTPUT_TYPES:
            runlog.records.extend((kind, r) for r in emitted.get(stream, ()))
        allocations = emitted.get(ALLOCATION_OUTPUT, [])
    runlog.final_tick = out.tick
    return runlog


__all__ = [
    "CANCEL_FUSE",
    "ConfigError",
    "Driver",
    "Phase",
    "RunLog",
    "SimConfig",
    "SimOutput",
    "TickError",
    "WorldState",
    "flatten",
    "init_world",
    "read_runlog",
    "run",
    "step",
]
