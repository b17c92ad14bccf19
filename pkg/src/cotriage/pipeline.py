"""End-to-end wiring: mine templates, build G_M, per-outage graphs, features,
classifier; then predict and evaluate against a held-out split."""

from __future__ import annotations

import json
import logging
import time
from contextlib import contextmanager
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path

import numpy as np

from cotriage.correlation import MetaGraph, build_gi, build_gm, build_gs, dump_records
from cotriage.data_model import WINDOW_PRESETS, Corpus, Outage, ServiceCatalog, TimeWindow, WindowIndex
from cotriage.features import FeatureSchema, build_schema, featurize
from cotriage.model import (
    EvaluationReport,
    Prediction,
    SvmConfig,
    TrainingSet,
    TreeConfig,
    load_model,
    predict,
    save_model,
    score_predictions,
    train_svm,
    train_tree,
)
from cotriage.templates import LocationLexicon, TemplateParser, TemplateRegistry, Vocabulary, mine

log = logging.getLogger(__name__)

VOCAB_FILE = "vocabulary.tsv"
REGISTRY_FILE = "registry.tsv"
GM_FILE = "gm.jsonl"
SCHEMA_FILE = "schema.tsv"
MODEL_FILE = "model.cotm"
LEXICON_FILE = "lexicon.txt"


class StageError(RuntimeError):
    def __init__(self, stage: str, cause: BaseException):
        self.stage = stage
        self.cause = cause
        super().__init__(f"stage '{stage}' failed: {cause}")


@contextmanager
def stage(name: str, timings: dict | None = None):
    t0 = time.perf_counter()
    try:
        yield
    except StageError:
        raise
    except Exception as exc:
        raise StageError(name, exc) from exc
    finally:
        dt = time.perf_counter() - t0
        if timings is not None:
            timings[name] = timings.get(name, 0.0) + dt
        log.debug("stage %-10s %.3fs", name, dt)


@dataclass(frozen=True)
class WindowSpec:
    """Window as multiples of T, kept symbolic so it round-trips exactly."""

    start: Fraction
    end: Fraction
    name: str | None = None

    @classmethod
    def parse(cls, preset: str | None = None, start=None, end=None) -> "WindowSpec":
        if start is not None or end is not None:
            if start is None or end is None:
                raise ValueError("give both window start and end")
            return cls(Fraction(str(start)), Fraction(str(end)))
        preset = preset or "third"
        if preset not in WINDOW_PRESETS:
            raise ValueError(f"unknown window preset {preset!r}; choose from {sorted(WINDOW_PRESETS)}")
        s, e = WINDOW_PRESETS[preset]
        return cls(s, e, preset)

    def window(self, T: int) -> TimeWindow:
        return TimeWindow.from_multiples(self.start, self.end, T)

    def describe(self) -> str:
        return f"[{_mult(self.start)}, {_mult(self.end)}]"

    def to_dict(self, T: int) -> dict:
        w = self.window(T)
        return {
            "name": self.name,
            "start": str(self.start),
            "end": str(self.end),
            "label": self.describe(),
            "start_ms": w.start_offset,
            "end_ms": w.end_offset,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "WindowSpec":
        return cls(Fraction(d["start"]), Fraction(d["end"]), d.get("name"))


def _mult(f: Fraction) -> str:
    if f == 0:
        return "0"
    if f.denominator == 1:
        return f"{f.numerator}T" if abs(f.numerator) != 1 else ("-T" if f < 0 else "T")
    num = f.numerator
    head = "-" if num < 0 else ""
    num = abs(num)
    return f"{head}{'' if num == 1 else num}T/{f.denominator}"


@dataclass
class Artifacts:
    vocab: Vocabulary
    lexicon: LocationLexicon
    lexicon_lines: list
    registry: TemplateRegistry
    gm: MetaGraph
    schema: FeatureSchema
    model: object
    window: WindowSpec
    T: int

    @property
    def parser(self) -> TemplateParser:
        return TemplateParser(self.vocab, self.lexicon, self.registry)

    def save(self, directory) -> dict:
        d = Path(directory)
        d.mkdir(parents=True, exist_ok=True)
        paths = {
            "vocabulary": d / VOCAB_FILE,
            "registry": d / REGISTRY_FILE,
            "gm": d / GM_FILE,
            "schema": d / SCHEMA_FILE,
            "model": d / MODEL_FILE,
            "lexicon": d / LEXICON_FILE,
        }
        self.vocab.dump(paths["vocabulary"])
        self.registry.dump(paths["registry"])
        with paths["gm"].open("w", encoding="utf-8") as fh:
            dump_records(self.gm.records(), fh)
        self.schema.dump(paths["schema"])
        save_model(self.model, paths["model"])
        paths["lexicon"].write_text("".join(f"{p}\n" for p in self.lexicon_lines), encoding="utf-8")
        return paths

    @classmethod
    def load(cls, directory) -> "Artifacts":
        d = Path(directory)
        model = load_model(d / MODEL_FILE)
        schema = FeatureSchema.load(d / SCHEMA_FILE)
        if model.schema_digest and model.schema_digest != schema.digest():
            raise ValueError("model was trained against a different feature schema")
        with (d / GM_FILE).open(encoding="utf-8") as fh:
            gm = MetaGraph.from_records(json.loads(line) for line in fh if line.strip())
        lines = [ln.strip() for ln in (d / LEXICON_FILE).read_text(encoding="utf-8").splitlines() if ln.strip()]
        meta = model.metadata
        return cls(
            vocab=Vocabulary.load(d / VOCAB_FILE),
            lexicon=LocationLexicon(lines),
            lexicon_lines=lines,
            registry=TemplateRegistry.load(d / REGISTRY_FILE, mode="frozen"),
            gm=gm,
            schema=schema,
            model=model,
            window=WindowSpec.from_dict(meta["window"]),
            T=int(meta["T_ms"]),
        )


class GraphBuilder:
    """Per-outage G_I / G_S construction over one corpus."""

    def __init__(self, corpus: Corpus, gm: MetaGraph, parser: TemplateParser, meta_ids: dict | None = None):
        self.corpus = corpus
        self.gm = gm
        self.parser = parser
        self.index = WindowIndex(corpus.incidents)
        self._meta = meta_ids if meta_ids is not None else {}

    def meta_of(self, inc):
        m = self._meta.get(inc.incident_id, _MISSING)
        if m is _MISSING:
            m = self.parser.meta_id(inc.title, inc.owning_service)
            self._meta[inc.incident_id] = m
        return m

    def graphs(self, outage: Outage, window: TimeWindow, timings: dict | None = None):
        with stage("fetch", timings):
            incidents = self.index.fetch(outage, window)
            origin = self.corpus.by_id[outage.origin_incident_id]
        with stage("parse", timings):
            for inc in incidents:
                self.meta_of(inc)
            self.meta_of(origin)
        with stage("build_gi", timings):
            gi = build_gi(self.gm, incidents, origin, self.meta_of)
        with stage("build_gs", timings):
            gs = build_gs(gi)
        return gi, gs


_MISSING = object()


@dataclass
class TrainConfig:
    window: WindowSpec = field(default_factory=lambda: WindowSpec.parse("third"))
    T: int = 60 * 60_000
    model_kind: str = "tree"
    support_threshold: int = 2
    seed: int = 0
    tree: TreeConfig = field(default_factory=TreeConfig)
    svm: SvmConfig = field(default_factory=SvmConfig)


def train_pipeline(
    corpus: Corpus,
    catalog: ServiceCatalog,
    lexicon_lines: list,
    config: TrainConfig,
    timings: dict | None = None,
) -> Artifacts:
    if config.model_kind not in ("tree", "svm"):
        raise ValueError(f"model kind must be 'tree' or 'svm', got {config.model_kind!r}")
    lexicon = LocationLexicon(lexicon_lines)
    window = config.window.window(config.T)

    with stage("mine", timings):
        ordered = sorted(corpus.incidents, key=lambda i: (i.created_at, i.incident_id))
        vocab, registry, ids = mine(((i.title, i.owning_service) for i in ordered), lexicon, config.support_threshold)
        meta_ids = {inc.incident_id: mid for inc, mid in zip(ordered, ids)}
        registry.freeze()
    with stage("build_gm", timings):
        gm = build_gm(corpus.correlations, corpus.by_id, lambda inc: meta_ids[inc.incident_id])

    builder = GraphBuilder(corpus, gm, TemplateParser(vocab, lexicon, registry), meta_ids)
    labelled = [o for o in corpus.outages if o.root_cause_service is not None]
    if not labelled:
        raise StageError("graphs", ValueError("no labelled outages to train on"))
    graphs = []
    for outage in labelled:
        graphs.append(builder.graphs(outage, window, timings)[1])

    with stage("features", timings):
        schema = build_schema(graphs, catalog)
        X = np.vstack([featurize(g, schema) for g in graphs])
        data = TrainingSet(X, [o.root_cause_service for o in labelled], schema)
        data.check_catalog(catalog)
    with stage("train", timings):
        if config.model_kind == "tree":
            model = train_tree(data, TreeConfig(config.tree.max_depth, config.tree.min_samples_leaf, config.seed))
        else:
            svm_cfg = SvmConfig(config.svm.l2, config.svm.epochs, config.svm.learning_rate, config.seed)
            model = train_svm(data, svm_cfg)
    model.metadata = {
        "window": config.window.to_dict(config.T),
        "T_ms": config.T,
        "support_threshold": config.support_threshold,
        "training_outages": len(labelled),
    }
    return Artifacts(vocab, lexicon, list(lexicon_lines), registry, gm, schema, model, config.window, config.T)


@dataclass
class OutagePrediction:
    outage: Outage
    prediction: Prediction
    gi: object
    gs: object
    timings: dict

    @property
    def latency(self) -> float:
        return sum(self.timings.values())


def predict_outage(
    artifacts: Artifacts, builder: GraphBuilder, outage: Outage, window: TimeWindow | None = None
) -> OutagePrediction:
    window = window or artifacts.window.window(artifacts.T)
    timings: dict = {}
    gi, gs = builder.graphs(outage, window, timings)
    with stage("featurize", timings):
        vec = featurize(gs, artifacts.schema)
    with stage("predict", timings):
        pred = predict(artifacts.model, vec)
    if not gi.edges:
        pred = Prediction(pred.ranking, low_confidence=True)
    return OutagePrediction(outage, pred, gi, gs, timings)


def evaluate_pipeline(
    artifacts: Artifacts,
    corpus: Corpus,
    catalog: ServiceCatalog,
    window: TimeWindow | None = None,
) -> tuple[EvaluationReport, list[OutagePrediction]]:
    labelled = [o for o in corpus.outages if o.root_cause_service is not None]
    if not labelled:
        raise ValueError("test corpus has no labelled outages")
    builder = GraphBuilder(corpus, artifacts.gm, artifacts.parser)
    results = [predict_outage(artifacts, builder, o, window) for o in labelled]
    report = score_predictions(
        [o.root_cause_service for o in labelled], [r.prediction.service for r in results], catalog
    )
    report.mean_latency_s = float(np.mean([r.latency for r in results]))
    return report, results
