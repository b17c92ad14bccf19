"""Command-line front end.

Exit codes: 0 success, 1 usage, 2 data validation, 3 pipeline stage failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
import warnings
from pathlib import Path

from cotriage import _accel
from cotriage.correlation import build_gm, dump_records
from cotriage.data_model import MINUTE_MS, Corpus, CorpusError, load_corpus
from cotriage.model import SvmConfig, TreeConfig
from cotriage.pipeline import (
    Artifacts,
    GraphBuilder,
    StageError,
    TrainConfig,
    WindowSpec,
    evaluate_pipeline,
    predict_outage,
    stage,
    train_pipeline,
)
from cotriage.simulator import ScenarioConfig, generate_dataset
from cotriage.templates import LocationLexicon, TemplateParser, TemplateRegistry, Vocabulary, mine

log = logging.getLogger("cotriage")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_STAGE = 0, 1, 2, 3
REPORT_FILE = "report.jsonl"
TIMING_FILE = "timing.jsonl"


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


# --------------------------------------------------------------------------
# helpers
# --------------------------------------------------------------------------


def _window_spec(args, default: WindowSpec | None = None) -> WindowSpec | None:
    if args.window_start is not None or args.window_end is not None:
        return WindowSpec.parse(start=args.window_start, end=args.window_end)
    if args.window is not None:
        return WindowSpec.parse(args.window)
    return default


def _data_paths(args) -> tuple[Path, Path, Path]:
    data = Path(args.data)
    catalog = Path(args.catalog) if getattr(args, "catalog", None) else data / "catalog.tsv"
    lexicon = Path(args.lexicon) if getattr(args, "lexicon", None) else data / "lexicon.txt"
    return data, catalog, lexicon


def _load_split(data: Path, split: str, catalog_path: Path):
    with stage("load"):
        catalog = load_corpus(catalog_path, "catalog")
        corpus = Corpus.load(data / split, catalog)
    return catalog, corpus


def _read_lexicon(path: Path) -> list[str]:
    return [ln.strip() for ln in path.read_text(encoding="utf-8").splitlines() if ln.strip() and not ln.startswith("#")]


def _print_timings(timings: dict, out=sys.stderr) -> None:
    for name, secs in timings.items():
        print(f"  {name:<10} {secs * 1000:10.2f} ms", file=out)


# --------------------------------------------------------------------------
# commands
# --------------------------------------------------------------------------


def cmd_simulate(args) -> int:
    try:
        config = ScenarioConfig(
            seed=args.seed,
            n_services=args.services,
            n_patterns=args.patterns,
            outages_per_pattern=args.outages_per_pattern,
            noise_ratio=args.noise_ratio,
            split=args.split,
            T_minutes=args.T_minutes,
            drop_probability=args.drop_probability,
        )
    except ValueError as exc:
        print(f"bad scenario: {exc}", file=sys.stderr)
        return EXIT_USAGE
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        with stage("simulate"):
            dataset = generate_dataset(config)
            manifest = dataset.write(args.out)
    for w in caught:
        print(f"warning: {w.message}", file=sys.stderr)
    print(manifest)
    return EXIT_OK


def cmd_mine_templates(args) -> int:
    lexicon_lines = _read_lexicon(Path(args.lexicon)) if args.lexicon else []
    with stage("load"):
        incidents = load_corpus(args.incidents, "incidents")
    with stage("mine"):
        ordered = sorted(incidents, key=lambda i: (i.created_at, i.incident_id))
        vocab, registry, _ = mine(
            ((i.title, i.owning_service) for i in ordered), LocationLexicon(lexicon_lines), args.threshold
        )
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    vocab.dump(out / "vocabulary.tsv")
    registry.dump(out / "registry.tsv")
    (out / "lexicon.txt").write_text("".join(f"{p}\n" for p in lexicon_lines), encoding="utf-8")
    print(f"{len(vocab)} vocabulary words, {len(registry)} templates -> {out}")
    return EXIT_OK


def cmd_build_gm(args) -> int:
    tdir = Path(args.templates)
    with stage("load"):
        incidents = load_corpus(args.incidents, "incidents")
        by_id = {i.incident_id: i for i in incidents}
        labels = load_corpus(args.correlations, "correlations", incidents=by_id)
        vocab = Vocabulary.load(tdir / "vocabulary.tsv")
        registry = TemplateRegistry.load(tdir / "registry.tsv", mode="mining")
        lex_path = tdir / "lexicon.txt"
        lexicon = LocationLexicon(_read_lexicon(lex_path) if lex_path.exists() else [])
    before = len(registry)
    parser = TemplateParser(vocab, lexicon, registry)
    with stage("build_gm"):
        gm = build_gm(labels, by_id, lambda inc: parser.meta_id(inc.title, inc.owning_service))
    if len(registry) != before:
        registry.dump(tdir / "registry.tsv")
        print(f"registered {len(registry) - before} new templates", file=sys.stderr)
    out = open(args.out, "w", encoding="utf-8") if args.out else sys.stdout
    try:
        dump_records(gm.records(), out)
    finally:
        if args.out:
            out.close()
    print(f"G_M: {len(gm.nodes)} nodes, {len(gm.edges)} edges", file=sys.stderr)
    return EXIT_OK


def cmd_graph(args) -> int:
    data, catalog_path, _ = _data_paths(args)
    with stage("load"):
        artifacts = Artifacts.load(args.artifacts)
    _, corpus = _load_split(data, args.split, catalog_path)
    outage = corpus.outage_by_id.get(args.outage)
    if outage is None:
        print(f"unknown outage {args.outage!r}", file=sys.stderr)
        return EXIT_DATA
    spec = _window_spec(args, artifacts.window)
    builder = GraphBuilder(corpus, artifacts.gm, artifacts.parser)
    gi, gs = builder.graphs(outage, spec.window(artifacts.T))
    out = open(args.out, "w", encoding="utf-8") if args.out else sys.stdout
    try:
        dump_records(gi.records(outage.outage_id) + gs.records(outage.outage_id), out)
    finally:
        if args.out:
            out.close()
    return EXIT_OK


def cmd_train(args) -> int:
    data, catalog_path, lexicon_path = _data_paths(args)
    spec = _window_spec(args, WindowSpec.parse("third"))
    config = TrainConfig(
        window=spec,
        T=int(round(args.T_minutes * MINUTE_MS)),
        model_kind=args.model,
        support_threshold=args.threshold,
        seed=args.seed,
        tree=TreeConfig(max_depth=args.max_depth, min_samples_leaf=args.min_samples_leaf, seed=args.seed),
        svm=SvmConfig(l2=args.l2, epochs=args.epochs, learning_rate=args.learning_rate, seed=args.seed),
    )
    timings: dict = {}
    catalog, corpus = _load_split(data, args.split, catalog_path)
    with stage("load"):
        lexicon_lines = _read_lexicon(lexicon_path)
    artifacts = train_pipeline(corpus, catalog, lexicon_lines, config, timings)
    with stage("save"):
        paths = artifacts.save(args.artifacts)
    print(f"trained {args.model} on {artifacts.model.metadata['training_outages']} outages, "
          f"window {spec.describe()}, {artifacts.schema.total_dim} features ({_accel.backend()} kernels)")
    for name, path in paths.items():
        print(f"  {name:<10} {path}")
    print("stage timings:", file=sys.stderr)
    _print_timings(timings)
    return EXIT_OK


def cmd_predict(args) -> int:
    data, catalog_path, _ = _data_paths(args)
    with stage("load"):
        artifacts = Artifacts.load(args.artifacts)
    _, corpus = _load_split(data, args.split, catalog_path)
    outage = corpus.outage_by_id.get(args.outage)
    if outage is None:
        print(f"unknown outage {args.outage!r}", file=sys.stderr)
        return EXIT_DATA
    spec = _window_spec(args, artifacts.window)
    builder = GraphBuilder(corpus, artifacts.gm, artifacts.parser)
    result = predict_outage(artifacts, builder, outage, spec.window(artifacts.T))
    pred = result.prediction
    print(f"outage {outage.outage_id}  window {spec.describe()}  "
          f"G_I {len(result.gi.incidents)} incidents / {len(result.gi.edges)} edges  "
          f"G_S {len(result.gs.nodes)} services / {len(result.gs.edges)} edges")
    if pred.low_confidence:
        print("low confidence: no correlated incidents found in the window")
    for rank, (svc, score) in enumerate(pred.ranking[: args.top], 1):
        print(f"{rank:>3}  {svc:<24} {score: .6f}")
    print("stage timings:")
    _print_timings(result.timings, sys.stdout)
    print(f"  {'total':<10} {result.latency * 1000:10.2f} ms")
    return EXIT_OK


def cmd_evaluate(args) -> int:
    data, catalog_path, _ = _data_paths(args)
    with stage("load"):
        artifacts = Artifacts.load(args.artifacts)
    catalog, corpus = _load_split(data, args.split, catalog_path)
    spec = _window_spec(args, artifacts.window)
    with stage("evaluate"):
        report, results = evaluate_pipeline(artifacts, corpus, catalog, spec.window(artifacts.T))
    out_dir = Path(args.out) if args.out else Path(args.artifacts)
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / REPORT_FILE).write_text(report.to_jsonl(), encoding="utf-8")
    with (out_dir / TIMING_FILE).open("w", encoding="utf-8") as fh:
        for r in results:
            fh.write(json.dumps({"outage_id": r.outage.outage_id, "latency_s": r.latency, **r.timings}) + "\n")
    print(f"model {artifacts.model.kind}, window {spec.describe()}, {report.total} outages")
    print(report.to_table())
    print(f"report: {out_dir / REPORT_FILE}")
    return EXIT_OK


# --------------------------------------------------------------------------
# argument parsing
# --------------------------------------------------------------------------


def _add_window(p) -> None:
    p.add_argument("--window", choices=["third", "two-thirds", "full"], default=None,
                   help="window preset: [-2T,T/3], [-2T,2T/3] or [-2T,T]")
    p.add_argument("--window-start", default=None, help="window start as a multiple of T, e.g. -2")
    p.add_argument("--window-end", default=None, help="window end as a multiple of T, e.g. 1/3")


def _add_data(p, split_default: str) -> None:
    p.add_argument("--data", required=True, help="dataset directory (train/, test/, catalog.tsv, lexicon.txt)")
    p.add_argument("--split", default=split_default, help=f"split subdirectory (default {split_default})")
    p.add_argument("--catalog", default=None, help="catalog file (default DATA/catalog.tsv)")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="cotriage", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("simulate", help="generate a seeded synthetic dataset")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--patterns", type=int, default=10)
    p.add_argument("--outages-per-pattern", type=int, default=50)
    p.add_argument("--services", type=int, default=225)
    p.add_argument("--noise-ratio", type=float, default=0.97)
    p.add_argument("--split", type=float, default=0.8)
    p.add_argument("--T-minutes", type=float, default=60.0)
    p.add_argument("--drop-probability", type=float, default=0.1)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("mine-templates", help="build vocabulary and template registry from incident titles")
    p.add_argument("--incidents", required=True)
    p.add_argument("--lexicon", default=None)
    p.add_argument("--threshold", type=int, default=2)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_mine_templates)

    p = sub.add_parser("build-gm", help="build the meta-incident correlation graph from labels")
    p.add_argument("--incidents", required=True)
    p.add_argument("--correlations", required=True)
    p.add_argument("--templates", required=True, help="directory written by mine-templates")
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_build_gm)

    p = sub.add_parser("graph", help="export one outage's incident and service graphs")
    _add_data(p, "test")
    p.add_argument("--artifacts", required=True)
    p.add_argument("--outage", required=True)
    p.add_argument("--out", default=None)
    _add_window(p)
    p.set_defaults(func=cmd_graph)

    p = sub.add_parser("train", help="mine, build graphs and fit a classifier")
    _add_data(p, "train")
    p.add_argument("--lexicon", default=None)
    p.add_argument("--artifacts", required=True)
    p.add_argument("--model", choices=["tree", "svm"], default="tree")
    p.add_argument("--T-minutes", type=float, default=60.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--threshold", type=int, default=2, help="template support threshold")
    p.add_argument("--max-depth", type=int, default=20)
    p.add_argument("--min-samples-leaf", type=int, default=1)
    p.add_argument("--l2", type=float, default=1e-2)
    p.add_argument("--epochs", type=int, default=200)
    p.add_argument("--learning-rate", type=float, default=0.1)
    _add_window(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("predict", help="rank root-cause services for one outage")
    _add_data(p, "test")
    p.add_argument("--artifacts", required=True)
    p.add_argument("--outage", required=True)
    p.add_argument("--top", type=int, default=5)
    _add_window(p)
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("evaluate", help="accuracy over every labelled outage of a split")
    _add_data(p, "test")
    p.add_argument("--artifacts", required=True)
    p.add_argument("--out", default=None, help="report directory (default: the artifacts directory)")
    _add_window(p)
    p.set_defaults(func=cmd_evaluate)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose > 1 else logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return args.func(args)
    except StageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA if isinstance(exc.cause, CorpusError) else EXIT_STAGE
    except CorpusError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
