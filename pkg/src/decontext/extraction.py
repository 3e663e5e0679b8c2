"""Neighbour-search extraction of elementary statements and their yes/no queries."""

from __future__ import annotations

import logging
from dataclasses import dataclass
from enum import Enum

from decontext.graph import AmrGraph, NeType, PosTag, neighbors

log = logging.getLogger(__name__)


class SlotMismatch(ValueError):
    pass


class StatementKind(str, Enum):
    OBJECT = "Object"
    SPATIAL_TEMPORAL = "SpatialTemporal"
    ACTIVITY = "Activity"
    RELATIONSHIP = "Relationship"
    ATTRIBUTE = "Attribute"


# number of filled slots (x, y, z) per kind
_ARITY = {
    StatementKind.OBJECT: 1,
    StatementKind.SPATIAL_TEMPORAL: 1,
    StatementKind.ACTIVITY: 2,
    StatementKind.ATTRIBUTE: 2,
    StatementKind.RELATIONSHIP: 3,
}

_TEMPLATES = {
    StatementKind.OBJECT: "Is the photo about {x}?",
    StatementKind.SPATIAL_TEMPORAL: "Is the photo taken in {x}?",
    StatementKind.ACTIVITY: "Is the photo about {x} {y}?",
    StatementKind.RELATIONSHIP: "Is the photo about {x} {y} {z}?",
    StatementKind.ATTRIBUTE: "In the photo, is {x} {y}?",
}


@dataclass(frozen=True)
class ElementaryStatement:
    kind: StatementKind
    x: str
    y: str | None = None
    z: str | None = None
    source_nodes: tuple[int, ...] = ()

    @property
    def slots(self) -> tuple[str, ...]:
        return tuple(s for s in (self.x, self.y, self.z) if s is not None)

    @property
    def key(self) -> tuple[StatementKind, str, str | None, str | None]:
        """Identity used for de-duplication (kind and slot surfaces)."""
        return (self.kind, self.x, self.y, self.z)

    def check(self) -> None:
        filled = [s is not None and s != "" for s in (self.x, self.y, self.z)]
        arity = _ARITY[self.kind]
        if filled != [True] * arity + [False] * (3 - arity):
            raise SlotMismatch(
                f"{self.kind.value} needs exactly {arity} slot(s), got x={self.x!r} y={self.y!r} z={self.z!r}"
            )


@dataclass(frozen=True)
class Query:
    statement: ElementaryStatement
    text: str
    index: int


def extract_statements(g: AmrGraph) -> list[ElementaryStatement]:
    """Walk nodes in ascending-id order and emit statements by neighbour search.

    Nouns and named entities yield an Object (or SpatialTemporal for Time and
    Location entities) plus one Attribute per adjective neighbour. Verbs with
    one nominal neighbour yield an Activity, with two a Relationship. Pronouns
    with exactly two nominal neighbours yield a Relationship. Repeated
    statements are kept once, in first-seen position.
    """
    out: list[ElementaryStatement] = []
    seen: set[tuple] = set()

    def emit(s: ElementaryStatement) -> None:
        if s.key not in seen:
            seen.add(s.key)
            out.append(s)

    for n in g.nodes:
        nbrs = neighbors(g, n.id)
        if n.pos.is_nominal:
            if n.ne in (NeType.TIME, NeType.LOCATION):
                emit(ElementaryStatement(StatementKind.SPATIAL_TEMPORAL, n.surface, source_nodes=(n.id,)))
            else:
                emit(ElementaryStatement(StatementKind.OBJECT, n.surface, source_nodes=(n.id,)))
            for a in nbrs:
                if a.pos is PosTag.ADJECTIVE:
                    emit(ElementaryStatement(StatementKind.ATTRIBUTE, n.surface, a.surface, source_nodes=(n.id, a.id)))
        elif n.pos in (PosTag.VERB, PosTag.PRONOUN):
            args = [m for m in nbrs if m.pos.is_nominal]
            if len(args) == 2:
                emit(
                    ElementaryStatement(
                        StatementKind.RELATIONSHIP,
                        args[0].surface,
                        n.surface,
                        args[1].surface,
                        source_nodes=(args[0].id, n.id, args[1].id),
                    )
                )
            elif len(args) == 1 and n.pos is PosTag.VERB:
                emit(ElementaryStatement(StatementKind.ACTIVITY, args[0].surface, n.surface, source_nodes=(args[0].id, n.id)))
            else:
                log.info("skip node %d (%s): %d nominal neighbours", n.id, n.pos.value, len(args))
    return out


def render_query(s: ElementaryStatement, index: int = 0) -> Query:
    s.check()
    return Query(s, _TEMPLATES[s.kind].format(x=s.x, y=s.y, z=s.z), index)


def extract_queries(g: AmrGraph) -> list[Query]:
    return [render_query(s, i) for i, s in enumerate(extract_statements(g))]
