"""Dynamic heterogeneous object/event graph.

Objects are merged by key and keep their id for the life of the graph. Every
committed entry contributes one fresh event node and a star of edges to its
objects. Event ids are dense and follow commit order, which is what makes
windowed views cheap: a window is a contiguous range of event ids.
"""

from __future__ import annotations

import bisect
import enum
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .errors import DoubleCommit, InsufficientNegatives, StaleSubgraph
from .logmodel import LogEntry

SNAPSHOT_VERSION = 1
# Below this many candidate pairs we enumerate non-edges instead of rejection sampling.
EXHAUSTIVE_PAIR_LIMIT = 4096


class NodeKind(str, enum.Enum):
    OBJECT = "object"
    EVENT = "event"


@dataclass(frozen=True, order=True)
class NodeRef:
    kind: NodeKind
    id: int

    @classmethod
    def obj(cls, i: int) -> NodeRef:
        return cls(NodeKind.OBJECT, int(i))

    @classmethod
    def evt(cls, i: int) -> NodeRef:
        return cls(NodeKind.EVENT, int(i))


@dataclass(frozen=True)
class EventMeta:
    entry_index: int
    timestamp: int
    text: str
    object_count: int  # objects known when this event was committed


@dataclass(frozen=True)
class EntrySubgraph:
    """Star graph of one entry: a fresh event node joined to each object."""

    entry_index: int
    timestamp: int
    text: str
    event: NodeRef
    objects: tuple[NodeRef, ...]
    object_keys: tuple[str, ...]
    is_new_object: tuple[bool, ...]

    @property
    def edges(self) -> list[tuple[NodeRef, NodeRef, int]]:
        return [(o, self.event, self.timestamp) for o in self.objects]


class DynamicGraph:
    def __init__(self):
        self.object_keys: list[str] = []
        self.object_index: dict[str, int] = {}
        self.object_first_entry: list[int] = []
        self.events: list[EventMeta] = []
        self.event_of_entry: dict[int, int] = {}
        self.obj_adj: list[list[int]] = []
        self.evt_adj: list[tuple[int, ...]] = []
        self.edges: set[tuple[int, int]] = set()

    @property
    def num_objects(self) -> int:
        return len(self.object_keys)

    @property
    def num_events(self) -> int:
        return len(self.events)

    @property
    def num_edges(self) -> int:
        return len(self.edges)

    def has_edge(self, obj: int, evt: int) -> bool:
        return (obj, evt) in self.edges

    def object_ref(self, key: str) -> NodeRef:
        return NodeRef.obj(self.object_index[key])

    def subgraph_of(self, entry_index: int) -> EntrySubgraph:
        """Rebuild the committed star of an entry (used for epoch replay)."""
        eid = self.event_of_entry[entry_index]
        meta = self.events[eid]
        objs = self.evt_adj[eid]
        return EntrySubgraph(
            entry_index=entry_index,
            timestamp=meta.timestamp,
            text=meta.text,
            event=NodeRef.evt(eid),
            objects=tuple(NodeRef.obj(o) for o in objs),
            object_keys=tuple(self.object_keys[o] for o in objs),
            is_new_object=tuple(False for _ in objs),
        )

    # snapshot (de)serialisation ------------------------------------------------

    def to_snapshot(self) -> dict:
        return {
            "version": SNAPSHOT_VERSION,
            "objects": [
                {"key": k, "id": i, "first_entry": self.object_first_entry[i]}
                for i, k in enumerate(self.object_keys)
            ],
            "events": [
                {
                    "id": i,
                    "entry_index": m.entry_index,
                    "timestamp": m.timestamp,
                    "object_count": m.object_count,
                    "text": m.text,
                }
                for i, m in enumerate(self.events)
            ],
            "edges": [[o, e, self.events[e].timestamp] for e, objs in enumerate(self.evt_adj) for o in objs],
        }

    @classmethod
    def from_snapshot(cls, doc: dict) -> DynamicGraph:
        if doc.get("version") != SNAPSHOT_VERSION:
            raise ValueError(f"unsupported snapshot version {doc.get('version')}")
        g = cls()
        for rec in doc["objects"]:
            if rec["id"] != len(g.object_keys):
                raise ValueError("snapshot object ids must be dense and ascending")
            g.object_index[rec["key"]] = rec["id"]
            g.object_keys.append(rec["key"])
            g.object_first_entry.append(rec["first_entry"])
            g.obj_adj.append([])
        per_event: list[list[int]] = [[] for _ in doc["events"]]
        for o, e, _ts in doc["edges"]:
            per_event[e].append(o)
        for rec, objs in zip(doc["events"], per_event):
            if rec["id"] != len(g.events):
                raise ValueError("snapshot event ids must be dense and ascending")
            g.events.append(EventMeta(rec["entry_index"], rec["timestamp"], rec["text"], rec["object_count"]))
            g.event_of_entry[rec["entry_index"]] = rec["id"]
            g.evt_adj.append(tuple(objs))
            for o in objs:
                g.obj_adj[o].append(rec["id"])
                g.edges.add((o, rec["id"]))
        return g


def build_subgraph(entry: LogEntry, graph: DynamicGraph) -> EntrySubgraph:
    """Pure construction of g_n against the current graph state."""
    refs, fresh = [], []
    minted = graph.num_objects
    for key in entry.objects:
        known = graph.object_index.get(key)
        if known is None:
            refs.append(NodeRef.obj(minted))
            fresh.append(True)
            minted += 1
        else:
            refs.append(NodeRef.obj(known))
            fresh.append(False)
    return EntrySubgraph(
        entry_index=entry.index,
        timestamp=entry.timestamp,
        text=entry.event_text,
        event=NodeRef.evt(graph.num_events),
        objects=tuple(refs),
        object_keys=tuple(entry.objects),
        is_new_object=tuple(fresh),
    )


def merge_objects(graph: DynamicGraph, sub: EntrySubgraph) -> int:
    """Register the subgraph's new objects. Returns how many were added.

    Only objects are inserted here; the event and its edges wait for
    :func:`commit_entry` so they cannot take part in message passing.
    """
    added = 0
    for ref, key in zip(sub.objects, sub.object_keys):
        known = graph.object_index.get(key)
        if known is not None:
            if known != ref.id:
                raise StaleSubgraph(f"object {key!r} has id {known}, subgraph says {ref.id}")
            continue
        if ref.id != graph.num_objects:
            raise StaleSubgraph(f"new object {key!r} expected id {graph.num_objects}, subgraph says {ref.id}")
        graph.object_index[key] = ref.id
        graph.object_keys.append(key)
        graph.object_first_entry.append(sub.entry_index)
        graph.obj_adj.append([])
        added += 1
    return added


def commit_entry(graph: DynamicGraph, sub: EntrySubgraph, accepted: Iterable[NodeRef] | None = None) -> bool:
    """Insert the event node and its edges.

    ``accepted=None`` is training mode (insert everything). Otherwise only the
    listed objects' edges go in, and the event is inserted iff at least one
    edge is accepted. Returns whether the event was inserted.
    """
    if sub.entry_index in graph.event_of_entry:
        raise DoubleCommit(f"entry {sub.entry_index} already committed")
    if sub.event.id != graph.num_events:
        raise StaleSubgraph(f"event id {sub.event.id} is not the next id {graph.num_events}")
    for ref in sub.objects:
        if ref.id >= graph.num_objects:
            raise StaleSubgraph(f"object id {ref.id} not merged")
    if accepted is None:
        objs = [r.id for r in sub.objects]
    else:
        keep = {r.id for r in accepted}
        stray = keep - {r.id for r in sub.objects}
        if stray:
            raise ValueError(f"accepted objects {sorted(stray)} are not in the subgraph")
        objs = [r.id for r in sub.objects if r.id in keep]
        if not objs:
            return False
    eid = sub.event.id
    graph.events.append(EventMeta(sub.entry_index, sub.timestamp, sub.text, graph.num_objects))
    graph.event_of_entry[sub.entry_index] = eid
    graph.evt_adj.append(tuple(objs))
    for o in objs:
        graph.obj_adj[o].append(eid)
        graph.edges.add((o, eid))
    return True


@dataclass(frozen=True)
class WindowView:
    """Message-passing view: objects ``[0, n_objects)``, events ``[lo, hi)``.

    Because the graph only grows and edges only attach to the newest event,
    a view keeps describing the same subgraph after later commits.
    """

    graph: DynamicGraph
    lo: int
    hi: int
    n_objects: int

    @property
    def window_length(self) -> int:
        return self.hi - self.lo

    def object_ids(self) -> range:
        return range(self.n_objects)

    def event_ids(self) -> range:
        return range(self.lo, self.hi)

    def events_of(self, obj: int) -> list[int]:
        adj = self.graph.obj_adj[obj]
        a = bisect.bisect_left(adj, self.lo)
        b = bisect.bisect_left(adj, self.hi, lo=a)
        return adj[a:b]

    def objects_of(self, evt: int) -> tuple[int, ...]:
        return self.graph.evt_adj[evt]

    def num_edges(self) -> int:
        return sum(len(self.graph.evt_adj[e]) for e in self.event_ids())

    def has_edge(self, obj: int, evt: int) -> bool:
        return self.lo <= evt < self.hi and obj < self.n_objects and (obj, evt) in self.graph.edges


def window_view(graph: DynamicGraph, W: int, asof_event: int | None = None) -> WindowView:
    """Events of the most recent ``W`` committed entries plus all objects.

    ``asof_event`` rewinds the view to just before that event was committed
    (objects are then limited to those known at that point); training replay
    uses it so later epochs see the same context as the first.
    """
    if W < 1:
        raise ValueError("window length must be >= 1")
    if asof_event is None:
        hi, n_obj = graph.num_events, graph.num_objects
    else:
        hi, n_obj = asof_event, graph.events[asof_event].object_count
    return WindowView(graph, max(0, hi - W), hi, n_obj)


def count_non_edges(view: WindowView, pending: EntrySubgraph | None = None) -> int:
    n_e = view.window_length + (pending is not None)
    existing = view.num_edges() + (len(pending.objects) if pending is not None else 0)
    return view.n_objects * n_e - existing


def enumerate_non_edges(
    graph: DynamicGraph,
    view: WindowView,
    rng: np.random.Generator,
    count: int,
    pending: EntrySubgraph | None = None,
) -> list[tuple[NodeRef, NodeRef]]:
    """Uniformly sample ``count`` distinct unconnected (object, event) pairs.

    The pair space is the view's objects times its events; ``pending`` adds the
    uncommitted event of the current entry, whose own star counts as existing.
    """
    if count < 0:
        raise ValueError("count must be >= 0")
    if count == 0:
        return []
    events = list(view.event_ids())
    extra: set[tuple[int, int]] = set()
    if pending is not None:
        events.append(pending.event.id)
        extra = {(o.id, pending.event.id) for o in pending.objects}
    n_o, n_e = view.n_objects, len(events)
    available = count_non_edges(view, pending)
    if available < count:
        raise InsufficientNegatives(f"asked for {count} non-edges, only {available} exist")

    def taken(o: int, e: int) -> bool:
        return (o, e) in extra or view.has_edge(o, e)

    if n_o * n_e <= EXHAUSTIVE_PAIR_LIMIT or available <= 4 * count:
        return _sample_exhaustive(events, n_o, taken, rng, count)

    chosen: dict[tuple[int, int], None] = {}
    attempts = 0
    cap = 50 * count
    while len(chosen) < count and attempts < cap:
        batch = 2 * (count - len(chosen))
        os_ = rng.integers(0, n_o, size=batch)
        es_ = rng.integers(0, n_e, size=batch)
        for o, ei in zip(os_.tolist(), es_.tolist()):
            attempts += 1
            pair = (o, events[ei])
            if pair in chosen or taken(*pair):
                continue
            chosen[pair] = None
            if len(chosen) == count:
                break
    if len(chosen) < count:
        return _sample_exhaustive(events, n_o, taken, rng, count)
    return [(NodeRef.obj(o), NodeRef.evt(e)) for o, e in chosen]


def _sample_exhaustive(events: Sequence[int], n_o: int, taken, rng, count: int):
    pool = [(o, e) for e in events for o in range(n_o) if not taken(o, e)]
    picks = rng.choice(len(pool), size=count, replace=False)
    return [(NodeRef.obj(pool[i][0]), NodeRef.evt(pool[i][1])) for i in picks.tolist()]


def khop_layers(view: WindowView, seeds: Sequence[int], hops: int) -> list[list[int]]:
    """Breadth-first frontiers from seed objects over the view's bipartite graph.

    ``layers[h]`` holds the nodes first reached at distance ``h``; even ``h``
    are object ids, odd ``h`` are event ids.
    """
    seen_o = dict.fromkeys(seeds)
    seen_e: dict[int, None] = {}
    layers = [list(seen_o)]
    for h in range(1, hops + 1):
        nxt: dict[int, None] = {}
        if h % 2:
            for o in layers[-1]:
                for e in view.events_of(o):
                    if e not in seen_e:
                        seen_e[e] = None
                        nxt[e] = None
        else:
            for e in layers[-1]:
                for o in view.objects_of(e):
                    if o not in seen_o:
                        seen_o[o] = None
                        nxt[o] = None
        layers.append(list(nxt))
    return layers
