"""Incident, outage and correlation-label records, their line-delimited file
form, and the region/time-window fetcher.

Timestamps are integer UTC milliseconds in memory and ISO-8601 strings with a
zone on disk.
"""

from __future__ import annotations

import bisect
import json
from dataclasses import dataclass, field
from datetime import datetime, timedelta, timezone
from fractions import Fraction
from pathlib import Path
from typing import Iterable, Mapping, Sequence

CATEGORIES = ("Infrastructure", "Networking", "Storage", "Compute", "Application")

_EPOCH = datetime(1970, 1, 1, tzinfo=timezone.utc)
_MS = timedelta(milliseconds=1)
MINUTE_MS = 60_000


class CorpusError(ValueError):
    """Base class for ingestion failures. ``line`` is 1-based when known."""

    def __init__(self, message: str, path: str | None = None, line: int | None = None):
        self.path = path
        self.line = line
        where = ""
        if path is not None:
            where = f"{path}"
        if line is not None:
            where = f"{where}:{line}" if where else f"line {line}"
        super().__init__(f"{where}: {message}" if where else message)


class ParseError(CorpusError):
    pass


class ValidationError(CorpusError):
    pass


def parse_timestamp(text: str) -> int:
    """ISO-8601 string with zone -> UTC milliseconds."""
    if not isinstance(text, str):
        raise ValueError(f"timestamp must be a string, got {type(text).__name__}")
    s = text.strip()
    if s.endswith(("Z", "z")):
        s = s[:-1] + "+00:00"
    dt = datetime.fromisoformat(s)
    if dt.tzinfo is None:
        raise ValueError(f"timestamp {text!r} has no zone")
    return (dt - _EPOCH) // _MS


def format_timestamp(ms: int) -> str:
    dt = _EPOCH + timedelta(milliseconds=int(ms))
    return dt.strftime("%Y-%m-%dT%H:%M:%S.") + f"{dt.microsecond // 1000:03d}Z"


def normalize_region(region: str) -> str:
    return region.strip().lower()


@dataclass(frozen=True)
class Incident:
    incident_id: str
    title: str
    owning_service: str
    region: str
    severity: int
    created_at: int

    def __post_init__(self):
        if not self.incident_id:
            raise ValueError("incident_id must be nonempty")
        if not self.title or not self.title.strip():
            raise ValueError("title must be nonempty")
        if not 0 <= self.severity <= 4:
            raise ValueError(f"severity {self.severity} outside [0, 4]")

    def to_record(self) -> dict:
        return {
            "incident_id": self.incident_id,
            "title": self.title,
            "owning_service": self.owning_service,
            "region": self.region,
            "severity": self.severity,
            "created_at": format_timestamp(self.created_at),
        }

    @classmethod
    def from_record(cls, rec: Mapping) -> "Incident":
        return cls(
            incident_id=_req_str(rec, "incident_id"),
            title=_req_str(rec, "title"),
            owning_service=_req_str(rec, "owning_service"),
            region=_req_str(rec, "region"),
            severity=_req_int(rec, "severity"),
            created_at=parse_timestamp(_req(rec, "created_at")),
        )


@dataclass(frozen=True)
class Outage:
    outage_id: str
    origin_incident_id: str
    declaration_time: int
    region: str
    root_cause_service: str | None = None

    def to_record(self) -> dict:
        return {
            "outage_id": self.outage_id,
            "origin_incident_id": self.origin_incident_id,
            "declaration_time": format_timestamp(self.declaration_time),
            "region": self.region,
            "root_cause_service": self.root_cause_service,
        }

    @classmethod
    def from_record(cls, rec: Mapping) -> "Outage":
        rcs = rec.get("root_cause_service")
        if rcs is not None and not isinstance(rcs, str):
            raise ValueError("root_cause_service must be a string or null")
        return cls(
            outage_id=_req_str(rec, "outage_id"),
            origin_incident_id=_req_str(rec, "origin_incident_id"),
            declaration_time=parse_timestamp(_req(rec, "declaration_time")),
            region=_req_str(rec, "region"),
            root_cause_service=rcs or None,
        )


@dataclass(frozen=True)
class CorrelationLabel:
    incident_a: str
    incident_b: str
    outage_id: str

    def __post_init__(self):
        if self.incident_a == self.incident_b:
            raise ValueError("a correlation label needs two distinct incidents")

    def to_record(self) -> dict:
        return {"incident_a": self.incident_a, "incident_b": self.incident_b, "outage_id": self.outage_id}

    @classmethod
    def from_record(cls, rec: Mapping) -> "CorrelationLabel":
        return cls(
            incident_a=_req_str(rec, "incident_a"),
            incident_b=_req_str(rec, "incident_b"),
            outage_id=_req_str(rec, "outage_id"),
        )


@dataclass(frozen=True)
class TimeWindow:
    """Closed interval of offsets (ms) around an outage's declaration time."""

    start_offset: int
    end_offset: int

    def __post_init__(self):
        if not self.start_offset < self.end_offset:
            raise ValueError(f"window start {self.start_offset} must precede end {self.end_offset}")

    @classmethod
    def from_multiples(cls, start: Fraction | float | str, end: Fraction | float | str, T: int) -> "TimeWindow":
        """Offsets given as multiples of T (ms); fractions such as ``"1/3"`` are exact."""
        s = Fraction(start) * T
        e = Fraction(end) * T
        return cls(round(s), round(e))

    @classmethod
    def preset(cls, name: str, T: int) -> "TimeWindow":
        try:
            start, end = WINDOW_PRESETS[name]
        except KeyError:
            raise ValueError(f"unknown window preset {name!r}; choose from {sorted(WINDOW_PRESETS)}") from None
        return cls.from_multiples(start, end, T)

    def bounds(self, declaration_time: int) -> tuple[int, int]:
        return declaration_time + self.start_offset, declaration_time + self.end_offset


WINDOW_PRESETS = {
    "third": (Fraction(-2), Fraction(1, 3)),
    "two-thirds": (Fraction(-2), Fraction(2, 3)),
    "full": (Fraction(-2), Fraction(1)),
}


class ServiceCatalog:
    """Ordered service -> category map."""

    def __init__(self, entries: Iterable[tuple[str, str]] = ()):
        self._cat: dict[str, str] = {}
        for service, category in entries:
            self.add(service, category)

    def add(self, service: str, category: str) -> None:
        if category not in CATEGORIES:
            raise ValueError(f"unknown category {category!r} for service {service!r}")
        if service in self._cat:
            raise ValueError(f"service {service!r} listed twice")
        self._cat[service] = category

    def category(self, service: str) -> str:
        return self._cat[service]

    def __contains__(self, service) -> bool:
        return service in self._cat

    def __iter__(self):
        return iter(self._cat)

    def __len__(self) -> int:
        return len(self._cat)

    def items(self):
        return self._cat.items()

    def services(self) -> list[str]:
        return list(self._cat)

    def __eq__(self, other) -> bool:
        return isinstance(other, ServiceCatalog) and list(self._cat.items()) == list(other._cat.items())

    def __repr__(self) -> str:
        return f"ServiceCatalog({len(self)} services)"


# --------------------------------------------------------------------------
# file I/O
# --------------------------------------------------------------------------

KINDS = ("incidents", "outages", "correlations", "catalog")
_RECORD_TYPES = {"incidents": Incident, "outages": Outage, "correlations": CorrelationLabel}


def _req(rec: Mapping, key: str):
    if key not in rec or rec[key] is None:
        raise ValueError(f"missing field {key!r}")
    return rec[key]


def _req_str(rec: Mapping, key: str) -> str:
    v = _req(rec, key)
    if not isinstance(v, str):
        raise ValueError(f"field {key!r} must be a string")
    return v


def _req_int(rec: Mapping, key: str) -> int:
    v = _req(rec, key)
    if isinstance(v, bool) or not isinstance(v, int):
        raise ValueError(f"field {key!r} must be an integer")
    return v


def load_corpus(
    path,
    kind: str,
    *,
    incidents: Mapping[str, Incident] | None = None,
    outages: Mapping[str, Outage] | None = None,
    catalog: ServiceCatalog | None = None,
) -> list | ServiceCatalog:
    """Read one line-delimited file of ``kind`` records, in file order.

    Blank lines are skipped. References are checked against ``incidents`` /
    ``outages`` / ``catalog`` when those are given.
    """
    if kind not in KINDS:
        raise ValueError(f"kind must be one of {KINDS}, got {kind!r}")
    path = Path(path)
    if kind == "catalog":
        return _load_catalog(path)
    cls = _RECORD_TYPES[kind]
    records = []
    seen: dict[str, int] = {}
    with path.open(encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                raw = json.loads(line)
                if not isinstance(raw, dict):
                    raise ValueError("record is not an object")
                rec = cls.from_record(raw)
            except ValueError as exc:
                raise ParseError(str(exc), str(path), lineno) from exc
            _check_record(rec, kind, seen, lineno, str(path), incidents, outages, catalog)
            records.append(rec)
    return records


def _check_record(rec, kind, seen, lineno, path, incidents, outages, catalog):
    if kind == "incidents":
        if rec.incident_id in seen:
            raise ValidationError(
                f"duplicate incident_id {rec.incident_id!r} (first on line {seen[rec.incident_id]})", path, lineno
            )
        seen[rec.incident_id] = lineno
    elif kind == "outages":
        if rec.outage_id in seen:
            raise ValidationError(f"duplicate outage_id {rec.outage_id!r}", path, lineno)
        seen[rec.outage_id] = lineno
        if incidents is not None and rec.origin_incident_id not in incidents:
            raise ValidationError(f"origin incident {rec.origin_incident_id!r} not found", path, lineno)
        if catalog is not None and rec.root_cause_service is not None and rec.root_cause_service not in catalog:
            raise ValidationError(f"root-cause service {rec.root_cause_service!r} not in catalog", path, lineno)
    elif kind == "correlations":
        if incidents is not None:
            for ref in (rec.incident_a, rec.incident_b):
                if ref not in incidents:
                    raise ValidationError(f"incident {ref!r} not found", path, lineno)
        if outages is not None and rec.outage_id not in outages:
            raise ValidationError(f"outage {rec.outage_id!r} not found", path, lineno)


def _load_catalog(path: Path) -> ServiceCatalog:
    catalog = ServiceCatalog()
    with path.open(encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.rstrip("\n")
            if not line.strip() or line.startswith("#"):
                continue
            parts = line.split("\t")
            if len(parts) != 2 or not parts[0]:
                raise ParseError("expected 'service<TAB>category'", str(path), lineno)
            try:
                catalog.add(parts[0], parts[1].strip())
            except ValueError as exc:
                raise ValidationError(str(exc), str(path), lineno) from exc
    return catalog


def dump_corpus(records: Iterable, path) -> None:
    with Path(path).open("w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(json.dumps(rec.to_record(), ensure_ascii=False, separators=(",", ":")))
            fh.write("\n")


def dump_catalog(catalog: ServiceCatalog, path) -> None:
    with Path(path).open("w", encoding="utf-8") as fh:
        for service, category in catalog.items():
            fh.write(f"{service}\t{category}\n")


@dataclass
class Corpus:
    """One split's incidents, outages and labels, cross-validated."""

    incidents: list[Incident]
    outages: list[Outage]
    correlations: list[CorrelationLabel] = field(default_factory=list)

    def __post_init__(self):
        self.by_id = {inc.incident_id: inc for inc in self.incidents}
        self.outage_by_id = {o.outage_id: o for o in self.outages}

    @classmethod
    def load(cls, directory, catalog: ServiceCatalog | None = None) -> "Corpus":
        d = Path(directory)
        incidents = load_corpus(d / "incidents.jsonl", "incidents")
        by_id = {i.incident_id: i for i in incidents}
        outages = load_corpus(d / "outages.jsonl", "outages", incidents=by_id, catalog=catalog)
        corr_path = d / "correlations.jsonl"
        correlations = []
        if corr_path.exists():
            correlations = load_corpus(
                corr_path, "correlations", incidents=by_id, outages={o.outage_id: o for o in outages}
            )
        return cls(incidents, outages, correlations)

    def dump(self, directory) -> None:
        d = Path(directory)
        d.mkdir(parents=True, exist_ok=True)
        dump_corpus(self.incidents, d / "incidents.jsonl")
        dump_corpus(self.outages, d / "outages.jsonl")
        dump_corpus(self.correlations, d / "correlations.jsonl")


# --------------------------------------------------------------------------
# window fetching
# --------------------------------------------------------------------------


def _order_key(inc: Incident):
    return (inc.created_at, inc.incident_id)


def fetch_window(incidents: Iterable[Incident], outage: Outage, window: TimeWindow) -> list[Incident]:
    """Incidents in the outage's region whose creation time falls in the
    closed window, ordered by (created_at, incident_id)."""
    lo, hi = window.bounds(outage.declaration_time)
    region = normalize_region(outage.region)
    hits = {
        inc.incident_id: inc
        for inc in incidents
        if lo <= inc.created_at <= hi and normalize_region(inc.region) == region
    }
    return sorted(hits.values(), key=_order_key)


class WindowIndex:
    """Per-region, time-sorted view of a corpus for repeated window fetches.

    Same result as :func:`fetch_window`, in O(log n + k) per query.
    """

    def __init__(self, incidents: Sequence[Incident]):
        buckets: dict[str, list[Incident]] = {}
        for inc in incidents:
            buckets.setdefault(normalize_region(inc.region), []).append(inc)
        self._items = {}
        self._times = {}
        for region, items in buckets.items():
            items.sort(key=_order_key)
            self._items[region] = items
            self._times[region] = [inc.created_at for inc in items]

    def fetch(self, outage: Outage, window: TimeWindow) -> list[Incident]:
        region = normalize_region(outage.region)
        if region not in self._items:
            return []
        lo, hi = window.bounds(outage.declaration_time)
        times = self._times[region]
        a = bisect.bisect_left(times, lo)
        b = bisect.bisect_right(times, hi)
        return self._items[region][a:b]
