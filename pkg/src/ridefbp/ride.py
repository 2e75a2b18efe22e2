"""Ride Allocation app: domain records, processing nodes and graph assembly.

The app is four stateless nodes (five with the wait-time model) wired over
streams::

    DriverStatusStream ──┐
    DriverLocationStream ┴─ CollateDriverInformation ─ DriverInformationStream
    RideRequestStream, DriverInformationStream, RideEventStream
        ─ AllocateRide ─ RideAllocationStream, RideAllocationOutputStream
    RideRequestStream, RideAllocationStream, RideEventStream
        ─ UpdateRideInformation ─ RideInformationStream
    RideAllocationStream, RideEventStream ─ ComputeWaitTime ─ RideWaitInfoStream
    RideAllocationStream, DriverInformationStream
        ─ EstimateRideWaitTime ─ EstimatedWaitTimeStream        (ml stage only)

Drivers and users are plain integer ids.
"""

from __future__ import annotations

import enum
import functools
import math
from dataclasses import dataclass, replace

from .engine import Category, Graph, GraphError, NodeInput
from .model import WaitModel, predict


@dataclass(frozen=True, slots=True)
class Location:
    x: float
    y: float

    def distance_to(self, other: Location) -> float:
        return math.hypot(self.x - other.x, self.y - other.y)


@dataclass(frozen=True, slots=True)
class RideRequest:
    ride_id: int
    user_id: int
    from_location: Location
    to_location: Location
    request_tick: int


@dataclass(frozen=True, slots=True)
class DriverStatus:
    driver_id: int
    available: bool
    tick: int


@dataclass(frozen=True, slots=True)
class DriverLocation:
    driver_id: int
    location: Location
    tick: int


@dataclass(frozen=True, slots=True)
class DriverInformation:
    driver_id: int
    location: Location
    available: bool
    tick: int


@dataclass(frozen=True, slots=True)
class RideAllocation:
    ride_id: int
    driver_id: int
    user_id: int
    pickup_location: Location
    driver_location_at_allocation: Location
    allocation_tick: int

    @property
    def pickup_distance(self) -> float:
        return self.driver_location_at_allocation.distance_to(self.pickup_location)


class EventKind(enum.Enum):
    STARTED = "Started"
    FINISHED = "Finished"
    LOCATION_UPDATE = "LocationUpdate"
    CANCELLED = "Cancelled"


@dataclass(frozen=True, slots=True)
class RideEvent:
    ride_id: int
    kind: EventKind
    tick: int
    location: Location | None = None

    def __post_init__(self):
        if (self.location is not None) != (self.kind is EventKind.LOCATION_UPDATE):
            raise ValueError("location is carried by LocationUpdate events only")


class RideState(enum.Enum):
    REQUESTED = "Requested"
    ALLOCATED = "Allocated"
    IN_PROGRESS = "InProgress"
    COMPLETED = "Completed"
    CANCELLED = "Cancelled"


TRANSITIONS = {
    RideState.REQUESTED: {RideState.ALLOCATED, RideState.CANCELLED},
    RideState.ALLOCATED: {RideState.IN_PROGRESS, RideState.CANCELLED},
    RideState.IN_PROGRESS: {RideState.COMPLETED},
    RideState.COMPLETED: set(),
    RideState.CANCELLED: set(),
}

ACTIVE_STATES = frozenset({RideState.ALLOCATED, RideState.IN_PROGRESS})


@dataclass(frozen=True, slots=True)
class RideInformation:
    ride_id: int
    user_id: int
    driver_id: int | None
    state: RideState
    last_known_location: Location | None
    last_update_tick: int


@dataclass(frozen=True, slots=True)
class RideWaitInfo:
    ride_id: int
    actual_wait: int


@dataclass(frozen=True, slots=True)
class EstimatedWaitTime:
    ride_id: int
    estimate: float
    allocation_tick: int


class Stage(enum.Enum):
    MIN = "min"
    DATA = "data"
    ML = "ml"


RIDE_REQUESTS = "RideRequestStream"
DRIVER_STATUS = "DriverStatusStream"
DRIVER_LOCATIONS = "DriverLocationStream"
RIDE_EVENTS = "RideEventStream"
DRIVER_INFORMATION = "DriverInformationStream"
RIDE_ALLOCATIONS = "RideAllocationStream"
ALLOCATION_OUTPUT = "RideAllocationOutputStream"
RIDE_INFORMATION = "RideInformationStream"
RIDE_WAIT_INFO = "RideWaitInfoStream"
ESTIMATED_WAIT = "EstimatedWaitTimeStream"


# Key extractors live at module level so the engine can index them incrementally.

def _driver_key(record) -> int:
    return record.driver_id


def _ride_key(record) -> int:
    return record.ride_id


def _cancelled_key(event: RideEvent) -> int | None:
    return event.ride_id if event.kind is EventKind.CANCELLED else None


def collate_driver_information(inp: NodeInput) -> dict[str, list]:
    statuses = inp[DRIVER_STATUS]
    locations = inp[DRIVER_LOCATIONS]
    touched = dict.fromkeys(r.driver_id for r in (*statuses.new, *locations.new))
    if not touched:
        return {}
    latest_status = statuses.latest_by_key(_driver_key)
    latest_location = locations.latest_by_key(_driver_key)
    out = []
    for driver_id in sorted(touched):
        status = latest_status.get(driver_id)
        location = latest_location.get(driver_id)
        if status is None or location is None:
            continue
        out.append(DriverInformation(driver_id, location.location, status.available, inp.tick))
    return {DRIVER_INFORMATION: out}


def pending_requests(requests, allocated, cancelled) -> list[RideRequest]:
    """Requests neither allocated nor cancelled, oldest first."""
    pending = [r for r in requests if r.ride_id not in allocated and r.ride_id not in cancelled]
    pending.sort(key=lambda r: (r.request_tick, r.ride_id))
    return pending


def match_greedy(pending, drivers: dict[int, Location], tick: int) -> list[RideAllocation]:
    """Give each request, in order, the nearest free driver; ties go to the lower driver id."""
    free = dict(drivers)
    out = []
    for request in pending:
        if not free:
            break
        pickup = request.from_location
        driver_id = min(free, key=lambda d: (free[d].distance_to(pickup), d))
        out.append(
            RideAllocation(request.ride_id, driver_id, request.user_id, pickup, free.pop(driver_id), tick)
        )
    return out


def allocate_rides(inp: NodeInput) -> dict[str, list]:
    requests = inp[RIDE_REQUESTS]
    info = inp[DRIVER_INFORMATION]
    if not requests.new and not info.new and not inp[RIDE_EVENTS].new:
        return {}
    allocated = inp.emitted[RIDE_ALLOCATIONS].latest_by_key(_ride_key)
    cancelled = inp[RIDE_EVENTS].latest_by_key(_cancelled_key)
    pending = pending_requests(requests.history, allocated, cancelled)
    if not pending:
        return {}
    # A driver's availability is stale until a DriverInformation newer than
    # its last allocation has come back from the outside world.
    last_allocation = inp.emitted[RIDE_ALLOCATIONS].latest_by_key(_driver_key)
    drivers = {
        d: rec.location
        for d, rec in info.latest_by_key(_driver_key).items()
        if rec.available and (d not in last_allocation or last_allocation[d].allocation_tick < rec.tick)
    }
    allocations = match_greedy(pending, drivers, inp.tick)
    return {RIDE_ALLOCATIONS: allocations, ALLOCATION_OUTPUT: list(allocations)}


def _advance(info: RideInformation, event: RideEvent) -> RideInformation:
    kind = event.kind
    if kind is EventKind.LOCATION_UPDATE:
        if info.state in ACTIVE_STATES:
            return replace(info, last_known_location=event.location, last_update_tick=event.tick)
        return info
    target = {
        EventKind.STARTED: RideState.IN_PROGRESS,
        EventKind.FINISHED: RideState.COMPLETED,
        EventKind.CANCELLED: RideState.CANCELLED,
    }[kind]
    if target not in TRANSITIONS[info.state]:
        return info
    return replace(info, state=target, last_update_tick=event.tick)


def update_ride_information(inp: NodeInput) -> dict[str, list]:
    new_requests = inp.new(RIDE_REQUESTS)
    new_allocations = inp.new(RIDE_ALLOCATIONS)
    new_events = inp.new(RIDE_EVENTS)
    if not (new_requests or new_allocations or new_events):
        return {}
    known = inp.emitted[RIDE_INFORMATION].latest_by_key(_ride_key)
    current = dict(known)
    for request in new_requests:
        current.setdefault(
            request.ride_id,
            RideInformation(request.ride_id, request.user_id, None, RideState.REQUESTED, None, inp.tick),
        )
    for allocation in new_allocations:
        info = current.get(allocation.ride_id)
        if info is None or RideState.ALLOCATED not in TRANSITIONS[info.state]:
            continue
        current[allocation.ride_id] = replace(
            info,
            driver_id=allocation.driver_id,
            state=RideState.ALLOCATED,
            last_known_location=allocation.driver_location_at_allocation,
            last_update_tick=inp.tick,
        )
    for event in new_events:
        info = current.get(event.ride_id)
        if info is not None:
            current[event.ride_id] = _advance(info, event)

    out = []
    for ride_id, info in current.items():
        before = known.get(ride_id)
        if before is None or (before.state, before.last_known_location) != (info.state, info.last_known_location):
            out.append(replace(info, last_update_tick=inp.tick))
    return {RIDE_INFORMATION: out} if out else {}


def compute_wait_time(inp: NodeInput) -> dict[str, list]:
    started = [e for e in inp.new(RIDE_EVENTS) if e.kind is EventKind.STARTED]
    if not started:
        return {}
    allocations = inp[RIDE_ALLOCATIONS].latest_by_key(_ride_key)
    out = []
    for event in started:
        allocation = allocations.get(event.ride_id)
        if allocation is not None:
            out.append(RideWaitInfo(event.ride_id, event.tick - allocation.allocation_tick))
    return {RIDE_WAIT_INFO: out}


def estimate_wait_time(inp: NodeInput, model: WaitModel) -> dict[str, list]:
    # Driver position comes from the allocation record; DriverInformationStream
    # is wired in for lineage only.
    out = [
        EstimatedWaitTime(a.ride_id, predict(model, a.pickup_distance), a.allocation_tick)
        for a in inp.new(RIDE_ALLOCATIONS)
    ]
    return {ESTIMATED_WAIT: out} if out else {}


def build_app(stage: Stage | str, model: WaitModel | None = None) -> Graph:
    stage = Stage(stage)
    if stage is Stage.ML and model is None:
        raise GraphError("the ml stage needs a trained WaitModel")
    if stage is not Stage.ML and model is not None:
        raise GraphError(f"the {stage.value} stage takes no model")

    g = Graph("RideAllocation")
    g.add_stream(RIDE_REQUESTS, Category.INPUT, RideRequest)
    g.add_stream(DRIVER_STATUS, Category.INPUT, DriverStatus)
    g.add_stream(DRIVER_LOCATIONS, Category.INPUT, DriverLocation)
    g.add_stream(RIDE_EVENTS, Category.INPUT, RideEvent)
    g.add_stream(DRIVER_INFORMATION, Category.INTERNAL, DriverInformation)
    g.add_stream(RIDE_ALLOCATIONS, Category.INTERNAL, RideAllocation)
    g.add_stream(ALLOCATION_OUTPUT, Category.OUTPUT, RideAllocation)
    g.add_stream(RIDE_INFORMATION, Category.OUTPUT, RideInformation)
    g.add_stream(RIDE_WAIT_INFO, Category.OUTPUT, RideWaitInfo)
    if stage is Stage.ML:
        g.add_stream(ESTIMATED_WAIT, Category.OUTPUT, EstimatedWaitTime)

    g.add_node(
        "CollateDriverInformation",
        [DRIVER_STATUS, DRIVER_LOCATIONS],
        [DRIVER_INFORMATION],
        collate_driver_information,
    )
    g.add_node(
        "AllocateRide",
        [RIDE_REQUESTS, DRIVER_INFORMATION, RIDE_EVENTS],
        [RIDE_ALLOCATIONS, ALLOCATION_OUTPUT],
        allocate_rides,
    )
    g.add_node(
        "UpdateRideInformation",
        [RIDE_REQUESTS, RIDE_ALLOCATIONS, RIDE_EVENTS],
        [RIDE_INFORMATION],
        update_ride_information,
    )
    g.add_node("ComputeWaitTime", [RIDE_ALLOCATIONS, RIDE_EVENTS], [RIDE_WAIT_INFO], compute_wait_time)
    if stage is Stage.ML:
        g.add_node(
            "EstimateRideWaitTime",
            [RIDE_ALLOCATIONS, DRIVER_INFORMATION],
            [ESTIMATED_WAIT],
            functools.partial(estimate_wait_time, model=model),
        )

    problems = g.validate()
    if problems:
        raise GraphError("; ".join(v.message for v in problems))
    return g
