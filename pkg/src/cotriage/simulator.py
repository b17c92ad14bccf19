"""Seeded synthetic incident corpora.

A layered service topology is generated first. Each spreading pattern starts
at a root-cause service and walks up through its dependents to a user-facing
service, where the outage gets declared. Every outage replays one pattern with
fresh delays, fresh variable values in titles and occasionally a dropped step,
then buries the cascade under unrelated alarm noise from a disjoint pool of
symptom templates.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import asdict, dataclass, field
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from cotriage.data_model import (
    CATEGORIES,
    MINUTE_MS,
    CorrelationLabel,
    Corpus,
    Incident,
    Outage,
    ServiceCatalog,
    dump_catalog,
)

LEVEL = {cat: i for i, cat in enumerate(CATEGORIES)}

# Share of services per category, Infrastructure .. Application.
CATEGORY_SHARES = (0.15, 0.15, 0.15, 0.20, 0.35)

DEFAULT_REGIONS = ("West US 2", "East US", "North Europe", "Southeast Asia", "Japan East")

# Disjoint word pools; cascade templates use the first, noise templates the second.
CASCADE_WORDS = (
    "latency", "spike", "timeout", "errors", "elevated", "failure", "unhealthy", "degraded",
    "requests", "dependency", "connection", "refused", "saturation", "throttling", "unavailable",
    "dropped", "packets", "retries", "exhausted", "crash", "restart", "loop", "health", "probe",
    "failing", "allocation", "stuck", "replication", "partition", "lost",
)
NOISE_WORDS = (
    "disk", "usage", "certificate", "expiry", "warning", "backup", "job", "delayed", "quota",
    "approaching", "config", "drift", "detected", "slow", "query", "memory", "pressure", "log",
    "ingestion", "lag", "heartbeat", "missed", "cpu", "threshold", "audit", "scan", "pending",
    "rotation", "capacity", "forecast",
)

_START = int(datetime(2024, 1, 1, tzinfo=timezone.utc).timestamp() * 1000)


@dataclass
class ScenarioConfig:
    seed: int = 0
    n_services: int = 225
    n_patterns: int = 10
    outages_per_pattern: int = 50
    noise_ratio: float = 0.97
    split: float = 0.8
    T_minutes: float = 60.0
    regions: tuple = DEFAULT_REGIONS
    deps_per_service: int = 3
    cross_layer_fraction: float = 0.2
    reverse_edge_fraction: float = 0.05
    steps_min: int = 4
    steps_max: int = 10
    emissions_max: int = 2
    post_declaration_fraction: float = 0.35
    drop_probability: float = 0.1
    declare_on: str | int = "user-facing"
    symptoms_per_service: int = 2
    noise_templates_per_service: int = 3
    other_region_noise: float = 0.1
    shared_chain_fraction: float = 0.5
    outage_spacing_T: float = 4.0

    def __post_init__(self):
        if not 0.0 <= self.noise_ratio < 1.0:
            raise ValueError("noise_ratio must lie in [0, 1)")
        if not 0.0 < self.split < 1.0:
            raise ValueError("split must lie in (0, 1)")
        if self.T_minutes <= 0:
            raise ValueError("T must be positive")
        if not 1 <= self.steps_min <= self.steps_max:
            raise ValueError("need 1 <= steps_min <= steps_max")
        if not 0.0 <= self.drop_probability < 1.0:
            raise ValueError("drop_probability must lie in [0, 1)")
        if self.outage_spacing_T <= 3.0:
            raise ValueError("outage_spacing_T must exceed 3 so [-2T, T] windows never overlap")
        self.regions = tuple(self.regions)

    @property
    def T(self) -> int:
        return int(round(self.T_minutes * MINUTE_MS))


# --------------------------------------------------------------------------
# topology
# --------------------------------------------------------------------------


@dataclass
class Topology:
    catalog: ServiceCatalog
    dependencies: frozenset  # (dependent, dependency)
    symptoms: dict  # service -> tuple of cascade template part-lists
    noise_templates: dict  # service -> tuple of noise template part-lists

    def level(self, service: str) -> int:
        return LEVEL[self.catalog.category(service)]

    def dependents(self) -> dict:
        out = {s: [] for s in self.catalog}
        for a, b in sorted(self.dependencies):
            out[b].append(a)
        return out

    def by_category(self) -> dict:
        out = {c: [] for c in CATEGORIES}
        for s, c in self.catalog.items():
            out[c].append(s)
        return out


def _category_sizes(n: int) -> list[int]:
    sizes = [max(1, int(n * share)) for share in CATEGORY_SHARES]
    sizes[-1] += n - sum(sizes)
    # Trim from the largest buckets if the floors overshot.
    while sizes[-1] < 1:
        j = int(np.argmax(sizes[:-1]))
        sizes[j] -= 1
        sizes[-1] += 1
    return sizes


def _make_template(rng, words, n_words, with_slot: bool) -> tuple:
    picked = [str(w) for w in rng.choice(words, size=n_words, replace=False)]
    parts = ["{service}"] + picked
    if with_slot:
        parts += ["on", "{host}"]
    if rng.random() < 0.5:
        parts += ["count", "=", "{num}"]
    parts += ["in", "{region}"]
    return tuple(parts)


def generate_topology(config: ScenarioConfig, rng: np.random.Generator | None = None) -> Topology:
    n = config.n_services
    if n < 5:
        raise ValueError(f"need at least 5 services (one per category), got {n}")
    rng = rng if rng is not None else np.random.default_rng(config.seed)
    catalog = ServiceCatalog()
    by_level: list[list[str]] = []
    for cat, size in zip(CATEGORIES, _category_sizes(n)):
        names = [f"{cat.lower()}-{k:03d}" for k in range(size)]
        for name in names:
            catalog.add(name, cat)
        by_level.append(names)

    deps = set()
    for level, names in enumerate(by_level):
        for s in names:
            for _ in range(1 + int(rng.integers(config.deps_per_service))):
                u = rng.random()
                if level < len(by_level) - 1 and u < config.reverse_edge_fraction:
                    pool_level = int(rng.integers(level + 1, len(by_level)))
                elif level == 0:
                    pool_level = 0
                elif u < config.reverse_edge_fraction + config.cross_layer_fraction:
                    pool_level = int(rng.integers(0, level))
                else:
                    pool_level = level - 1
                pool = by_level[pool_level]
                t = pool[int(rng.integers(len(pool)))]
                if t != s:
                    deps.add((s, t))

    symptoms, noise = {}, {}
    for s in catalog:
        symptoms[s] = _distinct_templates(rng, CASCADE_WORDS, config.symptoms_per_service)
        noise[s] = _distinct_templates(rng, NOISE_WORDS, config.noise_templates_per_service)
    return Topology(catalog, frozenset(deps), symptoms, noise)


def _distinct_templates(rng, words, count) -> tuple:
    out = []
    while len(out) < count:
        tpl = _make_template(rng, words, int(rng.integers(2, 4)), bool(rng.random() < 0.7))
        if tpl not in out:
            out.append(tpl)
    return tuple(out)


# --------------------------------------------------------------------------
# spreading patterns
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class Step:
    service: str
    symptom: int
    parent: int  # -1 for the root-cause step
    delay_mean: float  # ms, from the parent step
    emissions: tuple  # (min, max) incidents emitted
    post_declaration: bool = False


@dataclass(frozen=True)
class SpreadPattern:
    root_cause_service: str
    steps: tuple
    declared_step: int

    def __post_init__(self):
        if self.steps[0].service != self.root_cause_service:
            raise ValueError("first step must be the root-cause service")
        if any(s.delay_mean < 0 for s in self.steps):
            raise ValueError("delays must be nonnegative")

    @property
    def correlation_pairs(self) -> tuple:
        return tuple((i, s.parent) for i, s in enumerate(self.steps) if s.parent >= 0)


def make_pattern(
    topology: Topology, root: str, config: ScenarioConfig, rng: np.random.Generator
) -> SpreadPattern:
    dependents = topology.dependents()
    by_cat = topology.by_category()
    T = config.T
    n_steps = int(rng.integers(config.steps_min, config.steps_max + 1))

    path = [root]
    used = {root}
    while len(path) < n_steps and (topology.catalog.category(path[-1]) != "Application" or len(path) < 2):
        cur = path[-1]
        ups = [s for s in dependents[cur] if s not in used and topology.level(s) >= topology.level(cur)]
        if not ups:
            lvl = min(topology.level(cur) + 1, len(CATEGORIES) - 1)
            ups = [s for s in by_cat[CATEGORIES[lvl]] if s not in used]
        if not ups:
            break
        nxt = ups[int(rng.integers(len(ups)))]
        path.append(nxt)
        used.add(nxt)
    if n_steps > 1 and topology.catalog.category(path[-1]) != "Application":
        apps = [s for s in by_cat["Application"] if s not in used]
        if apps:
            path.append(apps[int(rng.integers(len(apps)))])
            used.add(path[-1])

    gap_mean = 1.2 * T / max(len(path) - 1, 1)
    steps = []
    for i, svc in enumerate(path):
        steps.append(
            Step(
                service=svc,
                symptom=int(rng.integers(config.symptoms_per_service)),
                parent=i - 1,
                delay_mean=0.0 if i == 0 else gap_mean,
                emissions=(1, 1 + int(rng.integers(config.emissions_max))),
            )
        )
    if config.declare_on == "user-facing":
        declared = len(steps) - 1
    else:
        declared = int(config.declare_on) % len(steps)

    while len(steps) < n_steps:
        parent = int(rng.integers(len(steps)))
        cands = [s for s in dependents[steps[parent].service] if s not in used]
        if not cands:
            cands = [s for s in topology.catalog if s not in used]
        if not cands:
            break
        svc = cands[int(rng.integers(len(cands)))]
        used.add(svc)
        post = bool(rng.random() < config.post_declaration_fraction) or steps[parent].post_declaration
        post = post or parent == declared
        steps.append(
            Step(
                service=svc,
                symptom=int(rng.integers(config.symptoms_per_service)),
                parent=parent,
                delay_mean=0.3 * T,
                emissions=(1, 1 + int(rng.integers(config.emissions_max))),
                post_declaration=post,
            )
        )
    return SpreadPattern(root, tuple(steps), declared)


def _graft(pattern: SpreadPattern, root: str, config: ScenarioConfig, rng) -> SpreadPattern:
    """Same cascade as ``pattern`` above its root, fed by a different root."""
    first = Step(
        service=root,
        symptom=int(rng.integers(config.symptoms_per_service)),
        parent=-1,
        delay_mean=0.0,
        emissions=(1, 1 + int(rng.integers(config.emissions_max))),
    )
    return SpreadPattern(root, (first,) + pattern.steps[1:], pattern.declared_step)


def make_patterns(topology: Topology, config: ScenarioConfig, rng: np.random.Generator) -> list[SpreadPattern]:
    """One pattern per distinct root, roots cycling through the categories.

    With probability ``shared_chain_fraction`` a pattern reuses an earlier
    pattern's cascade above the root, so the two differ only at the root.
    """
    by_cat = topology.by_category()
    taken = set()
    patterns = []
    for p in range(config.n_patterns):
        pool = [s for s in by_cat[CATEGORIES[p % len(CATEGORIES)]] if s not in taken]
        if not pool:
            pool = [s for s in topology.catalog if s not in taken]
        root = pool[int(rng.integers(len(pool)))]
        taken.add(root)
        donors = [q for q in patterns if len(q.steps) > 1 and root not in {s.service for s in q.steps}]
        if donors and rng.random() < config.shared_chain_fraction:
            patterns.append(_graft(donors[int(rng.integers(len(donors)))], root, config, rng))
        else:
            patterns.append(make_pattern(topology, root, config, rng))
    return patterns


# --------------------------------------------------------------------------
# outages and noise
# --------------------------------------------------------------------------


class IdSource:
    def __init__(self, prefix: str = "INC", width: int = 7):
        self.prefix = prefix
        self.width = width
        self.n = 0

    def __call__(self) -> str:
        self.n += 1
        return f"{self.prefix}{self.n:0{self.width}d}"


def _hex_token(rng) -> str:
    digits = "0123456789abcdef"
    n = int(rng.integers(4, 9))
    s = "".join(digits[int(i)] for i in rng.integers(16, size=n))
    if not any(ch.isdigit() for ch in s):
        s = str(int(rng.integers(10))) + s[1:]
    return s


def render_title(parts, service: str, region: str, rng) -> str:
    out = []
    for part in parts:
        if part == "{service}":
            out.append(service)
        elif part == "{host}":
            out.append(f"node-{_hex_token(rng)}")
        elif part == "{num}":
            out.append(str(int(rng.integers(1, 5000))))
        elif part == "{region}":
            out.append(region)
        else:
            out.append(part)
    title = " ".join(out)
    return title.replace(" = ", "=")


@dataclass
class Cascade:
    outage: Outage
    incidents: list
    labels: list
    step_of: dict = field(default_factory=dict)  # incident_id -> step index


def generate_outage(
    topology: Topology,
    pattern: SpreadPattern,
    config: ScenarioConfig,
    rng: np.random.Generator,
    *,
    declaration_time: int = _START,
    region: str | None = None,
    outage_id: str = "OUT00001",
    ids: IdSource | None = None,
) -> Cascade:
    ids = ids or IdSource()
    region = region or config.regions[0]
    T = config.T
    lo, hi = declaration_time - int(1.5 * T), declaration_time + int(0.9 * T)
    steps = pattern.steps
    d = pattern.declared_step

    kept = [True] * len(steps)
    protected = {0, d}
    for i in range(len(steps)):
        if i not in protected and rng.random() < config.drop_probability:
            kept[i] = False

    # Pre-declaration chain root -> declared step, squeezed into 1.5T.
    chain = [d]
    while steps[chain[-1]].parent >= 0:
        chain.append(steps[chain[-1]].parent)
    chain.reverse()
    gaps = np.array([rng.exponential(steps[i].delay_mean) for i in chain[1:]], dtype=float)
    total = float(gaps.sum())
    if total > 1.5 * T:
        gaps *= 1.5 * T / total
    times = {chain[0]: declaration_time - int(round(float(gaps.sum())))}
    acc = times[chain[0]]
    for i, g in zip(chain[1:], gaps):
        acc += int(round(g))
        times[i] = acc
    times[d] = declaration_time

    for i, s in enumerate(steps):
        if i in times:
            continue
        tp = times[s.parent]
        if s.post_declaration or tp >= declaration_time:
            base = max(tp, declaration_time)
            t = base + 1 + int(rng.exponential(s.delay_mean))
        else:
            t = tp + 1 + int(rng.exponential(s.delay_mean))
            if t >= declaration_time:
                t = tp + int((declaration_time - tp) * rng.random())
        times[i] = min(max(t, lo), hi)

    incidents: list[Incident] = []
    first_of: dict[int, Incident] = {}
    members: dict[int, list[Incident]] = {}
    step_of = {}
    for i, s in enumerate(steps):
        if not kept[i]:
            continue
        n_emit = int(rng.integers(s.emissions[0], s.emissions[1] + 1))
        for e in range(n_emit):
            t = times[i] if e == 0 else min(hi, times[i] + int(rng.exponential(0.05 * T)))
            if i == d and e > 0:
                t = max(t, declaration_time)
            inc = Incident(
                incident_id=ids(),
                title=render_title(topology.symptoms[s.service][s.symptom], s.service, region, rng),
                owning_service=s.service,
                region=region,
                severity=int(rng.integers(1, 3)) if i != d else 1,
                created_at=int(t),
            )
            incidents.append(inc)
            members.setdefault(i, []).append(inc)
            step_of[inc.incident_id] = i
            if e == 0:
                first_of[i] = inc

    labels = []
    for i in sorted(members):
        p = steps[i].parent
        while p >= 0 and not kept[p]:
            p = steps[p].parent
        for inc in members[i]:
            if p >= 0:
                labels.append(CorrelationLabel(inc.incident_id, first_of[p].incident_id, outage_id))
            elif inc is not first_of[i]:
                labels.append(CorrelationLabel(inc.incident_id, first_of[i].incident_id, outage_id))

    outage = Outage(
        outage_id=outage_id,
        origin_incident_id=first_of[d].incident_id,
        declaration_time=declaration_time,
        region=region,
        root_cause_service=pattern.root_cause_service,
    )
    return Cascade(outage, incidents, labels, step_of)


def noise_count(related: int, noise_ratio: float) -> int:
    """Noise incidents needed so ``related`` makes up 1 - noise_ratio of the total."""
    if noise_ratio <= 0:
        return 0
    return int(round(related * noise_ratio / (1.0 - noise_ratio)))


def generate_noise(
    topology: Topology,
    span: tuple[int, int],
    config: ScenarioConfig,
    rng: np.random.Generator,
    *,
    related: int,
    region: str | None = None,
    ids: IdSource | None = None,
) -> list[Incident]:
    """Unrelated incidents uniformly over ``span`` in ``region`` sized against
    ``related`` cascade incidents, plus a share in other regions that never
    enters the outage's window."""
    lo, hi = span
    if not lo < hi:
        raise ValueError("noise span must be nonempty")
    ids = ids or IdSource("NZ")
    region = region or config.regions[0]
    services = topology.catalog.services()
    others = [r for r in config.regions if r != region]
    n_in = noise_count(related, config.noise_ratio)
    n_out = int(round(n_in * config.other_region_noise)) if others else 0
    out = []
    for k in range(n_in + n_out):
        reg = region if k < n_in else others[int(rng.integers(len(others)))]
        svc = services[int(rng.integers(len(services)))]
        pool = topology.noise_templates[svc]
        out.append(
            Incident(
                incident_id=ids(),
                title=render_title(pool[int(rng.integers(len(pool)))], svc, reg, rng),
                owning_service=svc,
                region=reg,
                severity=int(rng.integers(2, 5)),
                created_at=int(rng.integers(lo, hi + 1)),
            )
        )
    return out


# --------------------------------------------------------------------------
# datasets
# --------------------------------------------------------------------------


@dataclass
class GeneratedDataset:
    config: ScenarioConfig
    topology: Topology
    patterns: list
    train: Corpus
    test: Corpus
    catalog: ServiceCatalog
    lexicon: tuple
    single_class: bool = False

    def manifest(self) -> dict:
        cfg = asdict(self.config)
        cfg["regions"] = list(cfg["regions"])
        return {
            "generator": "cotriage.simulator",
            "config": cfg,
            "single_class": self.single_class,
            "counts": {
                "services": len(self.catalog),
                "patterns": len(self.patterns),
                "train_outages": len(self.train.outages),
                "test_outages": len(self.test.outages),
                "train_incidents": len(self.train.incidents),
                "test_incidents": len(self.test.incidents),
            },
            "patterns": [
                {
                    "root_cause_service": p.root_cause_service,
                    "steps": [s.service for s in p.steps],
                    "declared_step": p.declared_step,
                }
                for p in self.patterns
            ],
        }

    def write(self, out_dir) -> Path:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        self.train.dump(out / "train")
        self.test.dump(out / "test")
        dump_catalog(self.catalog, out / "catalog.tsv")
        (out / "lexicon.txt").write_text("".join(f"{p.lower()}\n" for p in self.lexicon), encoding="utf-8")
        manifest = out / "manifest.json"
        manifest.write_text(json.dumps(self.manifest(), indent=2, sort_keys=True) + "\n", encoding="utf-8")
        return manifest


def _sorted(incidents):
    return sorted(incidents, key=lambda i: (i.created_at, i.incident_id))


def generate_dataset(config: ScenarioConfig | None = None) -> GeneratedDataset:
    config = config or ScenarioConfig()
    if config.n_patterns < 1 or config.outages_per_pattern < 1:
        raise ValueError("need at least one pattern and one outage per pattern")
    rng = np.random.default_rng(config.seed)
    topology = generate_topology(config, rng)
    patterns = make_patterns(topology, config, rng)

    n_total = config.n_patterns * config.outages_per_pattern
    n_train = int(round(n_total * config.split))
    if n_train == 0 or n_train == n_total:
        raise ValueError(f"split {config.split} of {n_total} outages leaves one side empty")

    schedule = rng.permutation(np.repeat(np.arange(config.n_patterns), config.outages_per_pattern))
    T = config.T
    spacing = int(config.outage_spacing_T * T)
    inc_ids = IdSource("INC")
    sides = {"train": ([], [], []), "test": ([], [], [])}
    for k, p in enumerate(schedule):
        side = "train" if k < n_train else "test"
        incidents, outages, labels = sides[side]
        decl = _START + 2 * T + k * spacing + int(rng.integers(0, max(spacing - 3 * T, 1)))
        region = config.regions[int(rng.integers(len(config.regions)))]
        cascade = generate_outage(
            topology, patterns[int(p)], config, rng,
            declaration_time=decl, region=region, outage_id=f"OUT{k + 1:05d}", ids=inc_ids,
        )
        incidents += cascade.incidents
        incidents += generate_noise(
            topology, (decl - 2 * T, decl + T), config, rng,
            related=len(cascade.incidents), region=region, ids=inc_ids,
        )
        outages.append(cascade.outage)
        labels += cascade.labels

    single = config.n_patterns < 2
    if single:
        warnings.warn("only one spreading pattern: every outage has the same root cause", stacklevel=2)
    train = Corpus(_sorted(sides["train"][0]), sides["train"][1], sides["train"][2])
    test = Corpus(_sorted(sides["test"][0]), sides["test"][1], sides["test"][2])
    return GeneratedDataset(config, topology, patterns, train, test, topology.catalog, config.regions, single)
