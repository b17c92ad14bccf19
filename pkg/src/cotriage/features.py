"""Fixed-length feature vectors from service correlation graphs.

Layout: one incident-count column per catalog service, followed by one 0/1
column per service pair that appeared as an edge in some training graph.
"""

from __future__ import annotations

import hashlib
import warnings
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from cotriage.correlation import ServiceGraph
from cotriage.data_model import ServiceCatalog, ValidationError

SCHEMA_HEADER = "# cotriage-schema v1"


class UnknownServiceWarning(UserWarning):
    """A graph mentions a service the schema has no column for."""


@dataclass(frozen=True)
class FeatureSchema:
    service_index: dict
    link_index: dict

    def __post_init__(self):
        n = len(self.service_index)
        if sorted(self.service_index.values()) != list(range(n)):
            raise ValueError("service columns must be dense from 0")
        if sorted(self.link_index.values()) != list(range(n, n + len(self.link_index))):
            raise ValueError("link columns must follow service columns densely")
        for a, b in self.link_index:
            if a not in self.service_index or b not in self.service_index:
                raise ValueError(f"link ({a}, {b}) uses an unindexed service")

    @property
    def n_services(self) -> int:
        return len(self.service_index)

    @property
    def n_links(self) -> int:
        return len(self.link_index)

    @property
    def total_dim(self) -> int:
        return self.n_services + self.n_links

    def dumps(self) -> str:
        lines = [f"{SCHEMA_HEADER} services={self.n_services} links={self.n_links}"]
        for svc, col in self.service_index.items():
            lines.append(f"{svc}\t{col}")
        for (a, b), col in self.link_index.items():
            lines.append(f"{a}\t{b}\t{col}")
        return "\n".join(lines) + "\n"

    def digest(self) -> str:
        return hashlib.sha256(self.dumps().encode("utf-8")).hexdigest()

    def dump(self, path) -> None:
        Path(path).write_text(self.dumps(), encoding="utf-8")

    @classmethod
    def loads(cls, text: str) -> "FeatureSchema":
        lines = text.split("\n")
        head = lines[0].split()
        if not lines[0].startswith(SCHEMA_HEADER):
            raise ValueError("not a v1 schema file")
        dims = dict(tok.split("=") for tok in head if "=" in tok)
        n_svc, n_link = int(dims["services"]), int(dims["links"])
        body = [ln for ln in lines[1:] if ln]
        if len(body) != n_svc + n_link:
            raise ValueError(f"schema header promises {n_svc + n_link} rows, found {len(body)}")
        services = {}
        for ln in body[:n_svc]:
            svc, col = ln.split("\t")
            services[svc] = int(col)
        links = {}
        for ln in body[n_svc:]:
            a, b, col = ln.split("\t")
            links[(a, b)] = int(col)
        return cls(services, links)

    @classmethod
    def load(cls, path) -> "FeatureSchema":
        return cls.loads(Path(path).read_text(encoding="utf-8"))


def build_schema(training_graphs: Sequence[ServiceGraph], catalog: ServiceCatalog) -> FeatureSchema:
    if not training_graphs:
        raise ValueError("need at least one training graph")
    service_index = {svc: i for i, svc in enumerate(catalog)}
    link_index: dict = {}
    col = len(service_index)
    for g in training_graphs:
        for svc in sorted(g.nodes):
            if svc not in service_index:
                raise ValidationError(f"service {svc!r} missing from catalog")
        for edge in sorted(g.edges):
            if edge not in link_index:
                link_index[edge] = col
                col += 1
    return FeatureSchema(service_index, link_index)


def featurize(graph: ServiceGraph, schema: FeatureSchema) -> np.ndarray:
    vec = np.zeros(schema.total_dim, dtype=np.float64)
    unknown = []
    for svc, count in graph.incident_count.items():
        col = schema.service_index.get(svc)
        if col is None:
            unknown.append(svc)
        else:
            vec[col] = count
    for edge in graph.edges:
        col = schema.link_index.get(edge)
        if col is not None:
            vec[col] = 1.0
    if unknown:
        warnings.warn(
            f"ignoring incidents from services outside the schema: {sorted(unknown)}",
            UnknownServiceWarning,
            stacklevel=2,
        )
    return vec


def featurize_many(graphs: Iterable[ServiceGraph], schema: FeatureSchema) -> np.ndarray:
    rows = [featurize(g, schema) for g in graphs]
    if not rows:
        return np.zeros((0, schema.total_dim))
    return np.vstack(rows)
