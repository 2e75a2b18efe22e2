"""Flow-based programming runtime.

A :class:`Graph` holds named append-only streams and stateless processing
nodes wired between them.  Execution is tick based: every call to
:meth:`Graph.execute_tick` appends the injected records to input streams and
then runs each node exactly once, in topological order.

Nodes never hold state.  A transform receives a :class:`NodeInput` carrying,
for each input stream, the records that are new to this node plus a read-only
view of the full stream history.  Anything a node needs to remember has to
live on a stream.
"""

from __future__ import annotations

import enum
import weakref
from collections.abc import Callable, Hashable, Iterable, Iterator, Mapping, Sequence
from dataclasses import dataclass, field
from typing import Any

__all__ = [
    "Category",
    "DuplicateNameError",
    "GraphError",
    "Graph",
    "InjectionError",
    "NodeDescriptor",
    "NodeExecutionError",
    "NodeInput",
    "RecordsView",
    "StreamDescriptor",
    "StreamLog",
    "StreamView",
    "Tap",
    "UnknownStreamError",
    "Violation",
    "export_dot",
    "latest_by_key",
]


class Category(enum.Enum):
    INPUT = "Input"
    INTERNAL = "Internal"
    OUTPUT = "Output"


class GraphError(Exception):
    """Base class for graph construction and execution errors."""


class DuplicateNameError(GraphError):
    pass


class UnknownStreamError(GraphError):
    pass


class InjectionError(GraphError):
    pass


class NodeExecutionError(GraphError):
    def __init__(self, node: str, tick: int, cause: BaseException):
        super().__init__(f"node {node!r} failed at tick {tick}: {cause!r}")
        self.node = node
        self.tick = tick
        self.cause = cause


@dataclass(frozen=True)
class StreamDescriptor:
    name: str
    category: Category
    record_kind: Any = None


class RecordsView(Sequence):
    """Read-only window ``[start, stop)`` over a stream's record list."""

    __slots__ = ("_items", "_start", "_stop")

    def __init__(self, items: list, start: int = 0, stop: int | None = None):
        self._items = items
        self._start = start
        self._stop = len(items) if stop is None else stop

    def __len__(self) -> int:
        return self._stop - self._start

    def __getitem__(self, index):
        if isinstance(index, slice):
            return [self[i] for i in range(*index.indices(len(self)))]
        n = len(self)
        if index < 0:
            index += n
        if not 0 <= index < n:
            raise IndexError(index)
        return self._items[self._start + index]

    def __iter__(self) -> Iterator:
        items = self._items
        for i in range(self._start, self._stop):
            yield items[i]

    def __repr__(self) -> str:
        return f"RecordsView({list(self)!r})"


class StreamLog:
    """Append-only log of records, each stamped with the tick it arrived on.

    Only the owning :class:`Graph` appends; everything else gets read access.
    """

    def __init__(self, descriptor: StreamDescriptor):
        self.descriptor = descriptor
        self._records: list = []
        self._ticks: list[int] = []
        self._taps: list[Tap] = []
        # key extractor -> (records indexed so far, {key: record})
        self._latest: weakref.WeakKeyDictionary = weakref.WeakKeyDictionary()

    @property
    def name(self) -> str:
        return self.descriptor.name

    @property
    def category(self) -> Category:
        return self.descriptor.category

    @property
    def records(self) -> RecordsView:
        return RecordsView(self._records)

    def stamped(self) -> list[tuple[int, Any]]:
        return list(zip(self._ticks, self._records))

    def __len__(self) -> int:
        return len(self._records)

    def __repr__(self) -> str:
        return f"StreamLog({self.name!r}, {self.category.value}, {len(self)} records)"

    def latest_by_key(self, key: Callable[[Any], Hashable]) -> dict:
        """Most recent record per key.  Records whose key is ``None`` are skipped.

        The result is maintained incrementally per key extractor, so repeated
        calls with the same function object are cheap.
        """
        try:
            seen, index = self._latest[key]
        except (KeyError, TypeError):
            seen, index = 0, {}
        records = self._records
        for i in range(seen, len(records)):
            k = key(records[i])
            if k is not None:
                index[k] = records[i]
        try:
            self._latest[key] = (len(records), index)
        except TypeError:
            pass
        return dict(index)

    def _append(self, record: Any, tick: int) -> None:
        if self._ticks and tick < self._ticks[-1]:
            raise GraphError(f"tick stamps must not decrease on stream {self.name!r}")
        self._records.append(record)
        self._ticks.append(tick)
        for tap in tuple(self._taps):
            tap.sink(record, tick)


def latest_by_key(stream: StreamLog | StreamView, key: Callable[[Any], Hashable]) -> dict:
    return stream.latest_by_key(key)


@dataclass(frozen=True)
class StreamView:
    """What a node sees of one stream during a single invocation."""

    log: StreamLog
    new: RecordsView
    history: RecordsView

    @property
    def name(self) -> str:
        return self.log.name

    def latest_by_key(self, key: Callable[[Any], Hashable]) -> dict:
        return self.log.latest_by_key(key)


@dataclass(frozen=True)
class NodeInput:
    """Delivery for one node invocation.

    ``streams`` maps each input stream name to its view.  ``emitted`` maps each
    of the node's own output streams to a history-only view (``new`` is empty),
    so a node can see what it published earlier without keeping state.
    """

    tick: int
    streams: Mapping[str, StreamView]
    emitted: Mapping[str, StreamView] = field(default_factory=dict)

    def __getitem__(self, name: str) -> StreamView:
        return self.streams[name]

    def new(self, name: str) -> RecordsView:
        return self.streams[name].new

    def history(self, name: str) -> RecordsView:
        return self.streams[name].history


Transform = Callable[[NodeInput], "Mapping[str, Iterable[Any]] | None"]


@dataclass(frozen=True)
class NodeDescriptor:
    name: str
    inputs: tuple[str, ...]
    outputs: tuple[str, ...]
    transform: Transform


@dataclass(frozen=True, eq=False)
class Tap:
    stream_name: str
    sink: Callable[[Any, int], None]


@dataclass(frozen=True)
class Violation:
    kind: str  # "cycle" | "category" | "orphan" | "arity"
    message: str
    members: tuple[str, ...] = ()


class Graph:
    """A DAG of streams and stateless nodes."""

    def __init__(self, name: str = "fbp"):
        self.name = name
        self.tick = 0
        self._streams: dict[str, StreamLog] = {}
        self._nodes: dict[str, NodeDescriptor] = {}
        self._taps: list[Tap] = []
        self._cursors: dict[str, dict[str, int]] = {}
        self._order: list[str] | None = None

    # -- construction ---------------------------------------------------

    def add_stream(self, name: str, category: Category, record_kind: Any = None) -> StreamLog:
        if name in self._streams or name in self._nodes:
            raise DuplicateNameError(f"name {name!r} already present in graph")
        log = StreamLog(StreamDescriptor(name, Category(category), record_kind))
        self._streams[name] = log
        self._order = None
        return log

    def add_node(
        self,
        name: str,
        inputs: Sequence[str],
        outputs: Sequence[str],
        transform: Transform,
    ) -> NodeDescriptor:
        if name in self._nodes or name in self._streams:
            raise DuplicateNameError(f"name {name!r} already present in graph")
        missing = [s for s in (*inputs, *outputs) if s not in self._streams]
        if missing:
            raise UnknownStreamError(f"node {name!r} references unknown streams {missing}")
        node = NodeDescriptor(name, tuple(inputs), tuple(outputs), transform)
        self._nodes[name] = node
        self._cursors[name] = {s: 0 for s in node.inputs}
        self._order = None
        return node

    def attach_tap(self, stream_name: str, sink: Callable[[Any, int], None]) -> Tap:
        """Call ``sink(record, tick)`` for every later append to the stream."""
        log = self._streams.get(stream_name)
        if log is None:
            raise UnknownStreamError(f"no stream named {stream_name!r}")
        tap = Tap(stream_name, sink)
        log._taps.append(tap)
        self._taps.append(tap)
        return tap

    def detach_tap(self, tap: Tap) -> None:
        self._streams[tap.stream_name]._taps.remove(tap)
        self._taps.remove(tap)

    # -- introspection --------------------------------------------------

    @property
    def streams(self) -> dict[str, StreamLog]:
        return dict(self._streams)

    @property
    def nodes(self) -> dict[str, NodeDescriptor]:
        return dict(self._nodes)

    @property
    def taps(self) -> tuple[Tap, ...]:
        return tuple(self._taps)

    def find_stream(self, name: str) -> StreamLog | None:
        return self._streams.get(name)

    def producers(self, stream: str) -> list[str]:
        return [n.name for n in self._nodes.values() if stream in n.outputs]

    def consumers(self, stream: str) -> list[str]:
        return [n.name for n in self._nodes.values() if stream in n.inputs]

    def edges(self) -> list[tuple[str, str]]:
        """Every consume (stream -> node) and produce (node -> stream) relation."""
        out = []
        for node in self._nodes.values():
            out.extend((s, node.name) for s in node.inputs)
            out.extend((node.name, s) for s in node.outputs)
        return out

    # -- validation -----------------------------------------------------

    def validate(self) -> list[Violation]:
        violations: list[Violation] = []
        for node in self._nodes.values():
            if not node.inputs or not node.outputs:
                violations.append(
                    Violation("arity", f"node {node.name!r} needs at least one input and one output", (node.name,))
                )
        for log in self._streams.values():
            name, cat = log.name, log.category
            producers, consumers = self.producers(name), self.consumers(name)
            if cat is Category.INPUT and producers:
                violations.append(
                    Violation("category", f"Input stream {name!r} has producers {producers}", (name, *producers))
                )
            elif cat is Category.OUTPUT and consumers:
                violations.append(
                    Violation("category", f"Output stream {name!r} has consumers {consumers}", (name, *consumers))
                )
            elif cat is Category.INTERNAL and (not producers or not consumers):
                lacking = "producer" if not producers else "consumer"
                violations.append(Violation("orphan", f"Internal stream {name!r} has no {lacking}", (name,)))
        cycle = self._find_cycle()
        if cycle:
            violations.append(Violation("cycle", "cycle through " + " -> ".join(cycle), tuple(cycle)))
        return violations

    def is_valid(self) -> bool:
        return not self.validate()

    def _successors(self, vertex: str) -> list[str]:
        if vertex in self._nodes:
            return list(self._nodes[vertex].outputs)
        return self.consumers(vertex)

    def _find_cycle(self) -> list[str] | None:
        white, grey, black = 0, 1, 2
        colour = {v: white for v in (*self._streams, *self._nodes)}
        for root in colour:
            if colour[root] != white:
                continue
            path = [root]
            colour[root] = grey
            stack = [iter(self._successors(root))]
            while stack:
                nxt = next(stack[-1], None)
                if nxt is None:
                    stack.pop()
                    colour[path.pop()] = black
                elif colour[nxt] == grey:
                    return path[path.index(nxt):] + [nxt]
                elif colour[nxt] == white:
                    colour[nxt] = grey
                    path.append(nxt)
                    stack.append(iter(self._successors(nxt)))
        return None

    def topological_order(self) -> list[str]:
        """Node names in execution order; ties go to the earlier-added node."""
        if self._order is not None:
            return list(self._order)
        problems = self.validate()
        if problems:
            raise GraphError("invalid graph: " + "; ".join(v.message for v in problems))
        rank = {name: i for i, name in enumerate(self._nodes)}
        deps = {
            name: {p for s in node.inputs for p in self.producers(s)}
            for name, node in self._nodes.items()
        }
        order: list[str] = []
        done: set[str] = set()
        while len(order) < len(self._nodes):
            ready = [n for n in self._nodes if n not in done and deps[n] <= done]
            pick = min(ready, key=rank.__getitem__)
            order.append(pick)
            done.add(pick)
        self._order = order
        return list(order)

    # -- execution ------------------------------------------------------

    def execute_tick(self, external_inputs: Mapping[str, Iterable[Any]] | None = None) -> dict[str, list]:
        """Run one tick and return what each Output stream received.

        On a transform failure nothing from the failing node is appended, the
        error is raised as :class:`NodeExecutionError`, and the tick counter
        is left unchanged.
        """
        external_inputs = dict(external_inputs or {})
        for name in external_inputs:
            log = self._streams.get(name)
            if log is None:
                raise InjectionError(f"no stream named {name!r}")
            if log.category is not Category.INPUT:
                raise InjectionError(f"cannot inject into {log.category.value} stream {name!r}")
        order = self.topological_order()
        tick = self.tick

        emitted: dict[str, list] = {
            name: [] for name, log in self._streams.items() if log.category is Category.OUTPUT
        }
        for name, records in external_inputs.items():
            log = self._streams[name]
            for record in records:
                log._append(record, tick)

        for node_name in order:
            node = self._nodes[node_name]
            cursors = self._cursors[node_name]
            views = {}
            for s in node.inputs:
                log = self._streams[s]
                end = len(log._records)
                views[s] = StreamView(log, RecordsView(log._records, cursors[s], end), RecordsView(log._records, 0, end))
            own = {}
            for s in node.outputs:
                log = self._streams[s]
                end = len(log._records)
                own[s] = StreamView(log, RecordsView(log._records, end, end), RecordsView(log._records, 0, end))
            try:
                result = node.transform(NodeInput(tick, views, own)) or {}
                produced = {key: list(records) for key, records in result.items()}
                stray = [key for key in produced if key not in node.outputs]
                if stray:
                    raise GraphError(f"emitted to undeclared streams {stray}")
            except Exception as exc:
                raise NodeExecutionError(node_name, tick, exc) from exc

            for s in node.inputs:
                cursors[s] = len(views[s].history)
            for s in node.outputs:
                records = produced.get(s, ())
                log = self._streams[s]
                for record in records:
                    log._append(record, tick)
                if s in emitted:
                    emitted[s].extend(records)

        self.tick = tick + 1
        return emitted


def export_dot(graph: Graph) -> str:
    """Graphviz text: streams as filled boxes coloured by category, nodes as ellipses."""
    colours = {Category.INPUT: "red", Category.INTERNAL: "yellow", Category.OUTPUT: "green"}
    lines = [f'digraph "{graph.name}" {{', "  rankdir=LR;"]
    for log in graph.streams.values():
        lines.append(f'  "{log.name}" [shape=box, style=filled, fillcolor={colours[log.category]}];')
    for node in graph.nodes.values():
        lines.append(f'  "{node.name}" [shape=ellipse];')
    for src, dst in graph.edges():
        lines.append(f'  "{src}" -> "{dst}";')
    lines.append("}")
    return "\n".join(lines) + "\n"
