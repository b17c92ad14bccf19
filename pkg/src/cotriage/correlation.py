"""Meta-incident correlation graph, per-outage incident graph (fixpoint
closure of the origin incident) and its projection onto services."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Callable, Iterable, Mapping, Sequence

import numpy as np

from cotriage import kernels
from cotriage.data_model import CorrelationLabel, Incident, ValidationError


def _pair(a, b):
    return (a, b) if a <= b else (b, a)


@dataclass(frozen=True)
class MetaGraph:
    nodes: frozenset = frozenset()
    edges: frozenset = frozenset()

    def __post_init__(self):
        for a, b in self.edges:
            if a not in self.nodes or b not in self.nodes:
                raise ValueError(f"edge ({a}, {b}) has an endpoint outside the node set")

    @classmethod
    def from_pairs(cls, pairs: Iterable[tuple[int, int]]) -> "MetaGraph":
        edges = frozenset(_pair(a, b) for a, b in pairs)
        nodes = frozenset(x for e in edges for x in e)
        return cls(nodes, edges)

    def adjacency(self) -> dict[int, set[int]]:
        adj: dict[int, set[int]] = {}
        for a, b in self.edges:
            adj.setdefault(a, set()).add(b)
            adj.setdefault(b, set()).add(a)
        return adj

    def has_edge(self, a, b) -> bool:
        return _pair(a, b) in self.edges

    def records(self) -> list[dict]:
        out = [{"kind": "meta", "record": "node", "id": n} for n in sorted(self.nodes)]
        out += [{"kind": "meta", "record": "edge", "source": a, "target": b} for a, b in sorted(self.edges)]
        return out

    @classmethod
    def from_records(cls, records: Iterable[Mapping]) -> "MetaGraph":
        nodes, edges = set(), set()
        for rec in records:
            if rec.get("kind") != "meta":
                continue
            if rec["record"] == "node":
                nodes.add(int(rec["id"]))
            elif rec["record"] == "edge":
                edges.add(_pair(int(rec["source"]), int(rec["target"])))
        return cls(frozenset(nodes), frozenset(edges))


@dataclass(frozen=True)
class IncidentGraph:
    origin: Incident
    incidents: Mapping[str, Incident]
    edges: frozenset

    @property
    def nodes(self) -> frozenset:
        return frozenset(self.incidents)

    def records(self, outage_id: str | None = None) -> list[dict]:
        out = []
        for iid in sorted(self.incidents):
            inc = self.incidents[iid]
            out.append({
                "kind": "incident", "record": "node", "id": iid, "outage_id": outage_id,
                "service": inc.owning_service, "origin": iid == self.origin.incident_id,
            })
        for a, b in sorted(self.edges):
            out.append({"kind": "incident", "record": "edge", "outage_id": outage_id, "source": a, "target": b})
        return out


@dataclass(frozen=True)
class ServiceGraph:
    nodes: frozenset
    edges: frozenset
    incident_count: Mapping[str, int] = field(default_factory=dict)

    def records(self, outage_id: str | None = None) -> list[dict]:
        out = [
            {"kind": "service", "record": "node", "outage_id": outage_id, "id": s, "incidents": self.incident_count[s]}
            for s in sorted(self.nodes)
        ]
        out += [
            {"kind": "service", "record": "edge", "outage_id": outage_id, "source": a, "target": b}
            for a, b in sorted(self.edges)
        ]
        return out


def dump_records(records: Iterable[Mapping], fh) -> None:
    for rec in records:
        fh.write(json.dumps(rec, sort_keys=True, separators=(",", ":")))
        fh.write("\n")


MetaOf = Callable[[Incident], object]


def build_gm(
    labels: Iterable[CorrelationLabel],
    incidents: Mapping[str, Incident],
    meta_of: MetaOf,
) -> MetaGraph:
    """Add one undirected meta-ID edge per correlation label.

    ``meta_of`` maps an incident to its meta-ID (typically a mining-mode
    registry lookup).
    """
    pairs = []
    for lab in labels:
        try:
            a, b = incidents[lab.incident_a], incidents[lab.incident_b]
        except KeyError as exc:
            raise ValidationError(f"correlation label references unknown incident {exc.args[0]!r}") from None
        ma, mb = meta_of(a), meta_of(b)
        if not isinstance(ma, int) or not isinstance(mb, int):
            raise ValidationError(f"no meta-ID for labelled pair ({lab.incident_a}, {lab.incident_b})")
        pairs.append((ma, mb))
    return MetaGraph.from_pairs(pairs)


def build_gi(
    gm: MetaGraph,
    window_incidents: Sequence[Incident],
    origin: Incident,
    meta_of: MetaOf,
) -> IncidentGraph:
    """Grow the incident graph from ``origin`` until no window incident can
    be linked to it through ``gm``.

    The result is the connected component of ``origin`` in the graph that
    links every two incidents whose meta-ID pair is a ``gm`` edge, with all
    such edges among admitted incidents. Incidents whose ``meta_of`` is not
    an int (unknown template) never join.
    """
    cand = [origin]
    seen = {origin.incident_id}
    for inc in window_incidents:
        if inc.incident_id not in seen:
            seen.add(inc.incident_id)
            cand.append(inc)

    raw = [meta_of(inc) for inc in cand]
    compact: dict[int, int] = {}
    meta = np.full(len(cand), -1, dtype=np.int64)
    for i, m in enumerate(raw):
        if isinstance(m, (int, np.integer)) and not isinstance(m, bool):
            meta[i] = compact.setdefault(int(m), len(compact))

    k = max(len(compact), 1)
    adj = np.zeros((k, k), dtype=np.bool_)
    if compact:
        gadj = gm.adjacency()
        for m, ci in compact.items():
            for other in gadj.get(m, ()):
                cj = compact.get(other)
                if cj is not None:
                    adj[ci, cj] = True

    mask = kernels.closure_mask(meta, adj)
    idx = np.flatnonzero(mask)
    members = {cand[i].incident_id: cand[i] for i in idx}

    edges = set()
    known = idx[meta[idx] >= 0]
    if len(known) > 1:
        sub = adj[np.ix_(meta[known], meta[known])]
        ii, jj = np.nonzero(np.triu(sub, k=1))
        for a, b in zip(known[ii], known[jj]):
            edges.add(_pair(cand[a].incident_id, cand[b].incident_id))
    return IncidentGraph(origin, members, frozenset(edges))


def build_gs(gi: IncidentGraph) -> ServiceGraph:
    counts: dict[str, int] = {}
    for inc in gi.incidents.values():
        counts[inc.owning_service] = counts.get(inc.owning_service, 0) + 1
    edges = frozenset(
        _pair(gi.incidents[a].owning_service, gi.incidents[b].owning_service) for a, b in gi.edges
    )
    return ServiceGraph(frozenset(counts), edges, dict(sorted(counts.items())))
