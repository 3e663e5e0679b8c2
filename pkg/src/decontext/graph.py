"""POS/NE-annotated AMR graphs of captions: data model, validation and JSON ingestion."""

from __future__ import annotations

import json
from bisect import insort
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Mapping


class GraphError(ValueError):
    """Base class for graph ingestion and lookup failures."""


class MalformedDocument(GraphError):
    pass


class DanglingEdge(GraphError):
    pass


class DuplicateNodeId(GraphError):
    pass


class UnknownNode(GraphError, KeyError):
    pass


class PosTag(str, Enum):
    NOUN = "Noun"
    NAMED_ENTITY = "NamedEntity"
    VERB = "Verb"
    PRONOUN = "Pronoun"
    ADJECTIVE = "Adjective"
    OTHER = "Other"

    @property
    def is_nominal(self) -> bool:
        return self in (PosTag.NOUN, PosTag.NAMED_ENTITY)


class NeType(str, Enum):
    PERSON = "Person"
    ORGANIZATION = "Organization"
    LOCATION = "Location"
    TIME = "Time"
    NONE = "None"


@dataclass(frozen=True)
class AmrNode:
    id: int
    surface: str
    pos: PosTag
    ne: NeType = NeType.NONE

    def __post_init__(self) -> None:
        if isinstance(self.id, bool) or not isinstance(self.id, int) or self.id < 0:
            raise MalformedDocument(f"node id must be a non-negative integer, got {self.id!r}")
        if not isinstance(self.surface, str) or not self.surface.strip():
            raise MalformedDocument(f"node {self.id}: surface text is empty")
        if self.ne is not NeType.NONE and not self.pos.is_nominal:
            raise MalformedDocument(
                f"node {self.id}: NE type {self.ne.value} requires pos Noun or NamedEntity"
            )


@dataclass(frozen=True)
class AmrEdge:
    src: int
    dst: int
    relation: str = ""

    def __post_init__(self) -> None:
        if self.src == self.dst:
            raise MalformedDocument(f"self-loop on node {self.src}")


@dataclass(frozen=True)
class AmrGraph:
    """Immutable caption graph. Nodes are kept in ascending-id order.

    Edges are stored directed (as produced by the parser) but neighbourhood
    queries treat them as undirected.
    """

    caption: str
    nodes: tuple[AmrNode, ...] = ()
    edges: tuple[AmrEdge, ...] = ()
    _index: dict[int, AmrNode] = field(init=False, repr=False, compare=False)
    _adjacency: dict[int, tuple[int, ...]] = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        nodes = tuple(sorted(self.nodes, key=lambda n: n.id))
        index: dict[int, AmrNode] = {}
        for node in nodes:
            if node.id in index:
                raise DuplicateNodeId(f"duplicate node id {node.id}")
            index[node.id] = node

        adjacency: dict[int, list[int]] = {nid: [] for nid in index}
        seen: set[tuple[int, int, str]] = set()
        for edge in self.edges:
            for endpoint in (edge.src, edge.dst):
                if endpoint not in index:
                    raise DanglingEdge(
                        f"edge ({edge.src}, {edge.dst}, {edge.relation!r}) references unknown node {endpoint}"
                    )
            key = (edge.src, edge.dst, edge.relation)
            if key in seen:
                raise MalformedDocument(f"duplicate edge {key}")
            seen.add(key)
            for a, b in ((edge.src, edge.dst), (edge.dst, edge.src)):
                if b not in adjacency[a]:
                    insort(adjacency[a], b)

        object.__setattr__(self, "nodes", nodes)
        object.__setattr__(self, "edges", tuple(self.edges))
        object.__setattr__(self, "_index", index)
        object.__setattr__(self, "_adjacency", {k: tuple(v) for k, v in adjacency.items()})

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, AmrGraph):
            return NotImplemented
        return (
            self.caption == other.caption
            and self.nodes == other.nodes
            and _edge_key(self.edges) == _edge_key(other.edges)
        )

    def __hash__(self) -> int:
        return hash((self.caption, self.nodes, _edge_key(self.edges)))

    def node(self, node_id: int) -> AmrNode:
        try:
            return self._index[node_id]
        except KeyError:
            raise UnknownNode(node_id) from None

    def __contains__(self, node_id: object) -> bool:
        return node_id in self._index

    def __len__(self) -> int:
        return len(self.nodes)


def _edge_key(edges: tuple[AmrEdge, ...]) -> tuple[tuple[int, int, str], ...]:
    return tuple(sorted((e.src, e.dst, e.relation) for e in edges))


def neighbors(g: AmrGraph, node_id: int) -> list[AmrNode]:
    """Nodes sharing an edge with ``node_id`` in either direction, ascending id, deduplicated."""
    if node_id not in g:
        raise UnknownNode(node_id)
    return [g.node(n) for n in g._adjacency[node_id]]


_DOC_KEYS = {"caption", "nodes", "edges"}
_NODE_KEYS = {"id", "surface", "pos", "ne"}
_EDGE_KEYS = {"src", "dst", "relation"}


def _check_keys(obj: Any, allowed: set[str], what: str) -> None:
    if not isinstance(obj, Mapping):
        raise MalformedDocument(f"{what} must be a JSON object")
    extra = set(obj) - allowed
    if extra:
        raise MalformedDocument(f"{what}: unknown keys {sorted(extra)}")
    missing = allowed - set(obj)
    if missing:
        raise MalformedDocument(f"{what}: missing keys {sorted(missing)}")


def _int(value: Any, what: str) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        raise MalformedDocument(f"{what} must be an integer, got {value!r}")
    return value


def parse_graph(doc: str | bytes | Mapping[str, Any]) -> AmrGraph:
    """Build a validated :class:`AmrGraph` from a graph document.

    ``doc`` may be the JSON text or an already-decoded mapping. Unknown keys
    anywhere in the document are rejected.
    """
    if isinstance(doc, (str, bytes)):
        try:
            doc = json.loads(doc)
        except json.JSONDecodeError as exc:
            raise MalformedDocument(f"invalid JSON: {exc}") from exc
    _check_keys(doc, _DOC_KEYS, "graph document")
    if not isinstance(doc["caption"], str):
        raise MalformedDocument("caption must be a string")
    if not isinstance(doc["nodes"], list) or not isinstance(doc["edges"], list):
        raise MalformedDocument("nodes and edges must be arrays")

    nodes = []
    for i, raw in enumerate(doc["nodes"]):
        _check_keys(raw, _NODE_KEYS, f"nodes[{i}]")
        try:
            pos, ne = PosTag(raw["pos"]), NeType(raw["ne"])
        except ValueError as exc:
            raise MalformedDocument(f"nodes[{i}]: {exc}") from exc
        nodes.append(AmrNode(_int(raw["id"], f"nodes[{i}].id"), raw["surface"], pos, ne))

    edges = []
    for i, raw in enumerate(doc["edges"]):
        _check_keys(raw, _EDGE_KEYS, f"edges[{i}]")
        if not isinstance(raw["relation"], str):
            raise MalformedDocument(f"edges[{i}].relation must be a string")
        edges.append(AmrEdge(_int(raw["src"], f"edges[{i}].src"), _int(raw["dst"], f"edges[{i}].dst"), raw["relation"]))

    return AmrGraph(doc["caption"], tuple(nodes), tuple(edges))


def graph_to_dict(g: AmrGraph) -> dict[str, Any]:
    """Serialise to the graph document layout; edges are written in canonical order."""
    return {
        "caption": g.caption,
        "nodes": [
            {"id": n.id, "surface": n.surface, "pos": n.pos.value, "ne": n.ne.value} for n in g.nodes
        ],
        "edges": [{"src": s, "dst": d, "relation": r} for s, d, r in _edge_key(g.edges)],
    }


def serialize_graph(g: AmrGraph) -> str:
    return json.dumps(graph_to_dict(g), ensure_ascii=False)
