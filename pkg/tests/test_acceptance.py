"""Acceptance suite: one PASS/FAIL line per criterion, tolerances pinned below.

Run alone with ``pytest tests/test_acceptance.py -s`` to see the lines inline;
they are also collected into an "acceptance criteria" section of the summary.
"""

import random
import time

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cotriage.cli import main
from cotriage.correlation import build_gi, build_gs
from cotriage.model import SvmConfig, TrainingSet, TreeConfig, predict, train_svm, train_tree
from cotriage.pipeline import TrainConfig, WindowSpec, evaluate_pipeline, train_pipeline
from cotriage.simulator import ScenarioConfig, generate_dataset
from cotriage.templates import LocationLexicon, mine, parse

from graph_cases import component_oracle, random_instance

pytestmark = pytest.mark.slow

# pinned scenario and tolerances
SCENARIO = ScenarioConfig(seed=0)
N_INSTANCES = 1000
ORACLE_BUDGET_S = 10.0
TREE_MIN_ACC = 0.90
SVM_MIN_ACC = 0.85
GROWTH_BAND = (-0.05, 0.15)
LATENCY_MAX_S = 1.0
XOR_SVM_MAX = 0.75


@pytest.fixture(scope="module")
def instances():
    rng = random.Random(20240101)
    return [random_instance(rng, max_incidents=200, max_edges=100) for _ in range(N_INSTANCES)]


@pytest.fixture(scope="module")
def scenario():
    return generate_dataset(SCENARIO)


@pytest.fixture(scope="module")
def runs(scenario):
    """(model kind, window preset) -> (report, per-outage results)."""
    out = {}
    for kind in ("tree", "svm"):
        art = train_pipeline(
            scenario.train, scenario.catalog, list(scenario.lexicon),
            TrainConfig(window=WindowSpec.parse("third"), T=SCENARIO.T, model_kind=kind),
        )
        for preset in ("third", "full"):
            window = WindowSpec.parse(preset).window(SCENARIO.T)
            out[kind, preset] = evaluate_pipeline(art, scenario.test, scenario.catalog, window)
    return out


def test_criterion_1_production_figures_not_reproduced(criterion):
    # Production accuracy, the baseline margin and production latency come from a
    # private incident corpus. They are replaced by criteria 2-9 and not asserted.
    criterion(1, "production-scale figures replaced by the property suite", True, "documented, not measured")


def test_criterion_2_gi_oracle(instances, criterion):
    mismatches = 0
    build_s = oracle_s = 0.0
    for gm, window, origin, meta in instances:
        t0 = time.perf_counter()
        gi = build_gi(gm, window, origin, lambda i: meta[i.incident_id])
        t1 = time.perf_counter()
        expected = component_oracle(gm, window, origin, meta)
        oracle_s += time.perf_counter() - t1
        build_s += t1 - t0
        if (gi.nodes, set(gi.edges)) != expected:
            mismatches += 1
    ok = mismatches == 0 and build_s < ORACLE_BUDGET_S
    criterion(2, "G_I equals connected-component oracle", ok,
              f"{N_INSTANCES} instances, {mismatches} mismatches, build_gi {build_s:.2f}s (budget {ORACLE_BUDGET_S}s), "
              f"oracle {oracle_s:.2f}s")
    assert ok


def test_criterion_3_projection_conservation(instances, criterion):
    bad = 0
    for gm, window, origin, meta in instances:
        gi = build_gi(gm, window, origin, lambda i: meta[i.incident_id])
        gs = build_gs(gi)
        svc = {k: v.owning_service for k, v in gi.incidents.items()}
        preimages = {tuple(sorted((svc[a], svc[b]))) for a, b in gi.edges}
        if sum(gs.incident_count.values()) != len(gi.nodes) or not set(gs.edges) <= preimages:
            bad += 1
    criterion(3, "G_S conserves incidents and every edge has a preimage", bad == 0, f"{bad} violations")
    assert bad == 0


_failures_4 = []

_words = st.sampled_from(["disk", "full", "on", "node", "7", "0x1f", "in", "west", "us", "2", "=", "-", "x9", "up"])


@given(st.lists(st.tuples(st.lists(_words, min_size=1, max_size=8).map(" ".join), st.sampled_from("ab")),
                min_size=1, max_size=40))
@settings(max_examples=200, deadline=None)
def _mining_property(records):
    lex = LocationLexicon(["west us 2"])
    v1, r1, ids1 = mine(records, lex, 2)
    v2, r2, ids2 = mine(records, lex, 2)
    if r1.dumps() != r2.dumps() or ids1 != ids2:
        _failures_4.append(("replay", records))
    for title, svc in records:
        tpl = parse(title, v1, lex, svc)
        if parse(tpl.render(), v1, lex, svc) != tpl:
            _failures_4.append(("fixed point", title))


def test_criterion_4_mining_determinism(scenario, criterion):
    _mining_property()
    lex = LocationLexicon(scenario.lexicon)
    records = [(i.title, i.owning_service) for i in scenario.train.incidents]
    v1, r1, _ = mine(records, lex, 2)
    _, r2, _ = mine(records, lex, 2)
    same_bytes = r1.dumps() == r2.dumps()
    fixed = all(parse(r1.template(m).render(), v1, lex, r1.template(m).owning_service) == r1.template(m) for m in range(len(r1)))
    ok = same_bytes and fixed and not _failures_4
    criterion(4, "template mining replay and parse fixed point", ok,
              f"{len(r1)} scenario templates, {len(_failures_4)} property failures")
    assert ok


def test_criterion_5_end_to_end_accuracy(runs, criterion):
    tree = runs["tree", "third"][0].accuracy
    svm = runs["svm", "third"][0].accuracy
    ok = tree >= TREE_MIN_ACC and svm >= SVM_MIN_ACC
    criterion(5, "synthetic top-1 accuracy", ok,
              f"tree {tree:.3f} >= {TREE_MIN_ACC}, svm {svm:.3f} >= {SVM_MIN_ACC}, window [-2T, T/3]")
    assert ok


def test_criterion_6_window_growth(runs, criterion):
    deltas = {k: runs[k, "full"][0].accuracy - runs[k, "third"][0].accuracy for k in ("tree", "svm")}
    lo, hi = GROWTH_BAND
    ok = all(lo <= d <= hi for d in deltas.values())
    criterion(6, "accuracy gain from [-2T, T/3] to [-2T, T]", ok,
              ", ".join(f"{k} {d:+.3f}" for k, d in deltas.items()) + f" within [{lo}, {hi}]")
    assert ok


def test_criterion_7_latency(runs, criterion):
    lat = [r.latency for key in runs for r in runs[key][1]]
    mean = float(np.mean(lat))
    ok = mean < LATENCY_MAX_S
    criterion(7, "mean per-outage predict latency", ok,
              f"{mean * 1000:.1f} ms over {len(lat)} predictions, max {max(lat) * 1000:.1f} ms")
    assert ok


def test_criterion_8_cli_determinism(scenario, tmp_path, criterion):
    data = tmp_path / "data"
    scenario.write(data)
    outputs = []
    for run in ("a", "b"):
        art = tmp_path / run
        assert main(["train", "--data", str(data), "--artifacts", str(art), "--model", "svm"]) == 0
        assert main(["evaluate", "--data", str(data), "--artifacts", str(art)]) == 0
        outputs.append(((art / "model.cotm").read_bytes(), (art / "report.jsonl").read_bytes()))
    ok = outputs[0] == outputs[1]
    criterion(8, "train + evaluate twice gives identical bytes", ok, "model.cotm and report.jsonl")
    assert ok


def test_criterion_9_xor(criterion):
    X = np.array([[0.0, 0.0], [0.0, 1.0], [1.0, 0.0], [1.0, 1.0]])
    y = ["A", "B", "B", "A"]

    def acc(m):
        return float(np.mean([predict(m, x).service == t for x, t in zip(X, y)]))

    tree_accs = [acc(train_tree(TrainingSet(X, y), TreeConfig(max_depth=d))) for d in (2, 3, 5, 20)]
    svm_accs = [acc(train_svm(TrainingSet(X, y), SvmConfig(l2=l2, epochs=e)))
                for l2 in (1e-4, 1e-2, 1.0) for e in (10, 200, 2000)]
    # enumerated bound: every sign pattern of a linear rule on the four corners
    best_linear = 0.0
    for w0 in np.linspace(-2, 2, 41):
        for w1 in np.linspace(-2, 2, 41):
            for b in np.linspace(-2, 2, 41):
                s = X @ np.array([w0, w1]) + b
                pred = np.where(s > 0, "B", "A")
                best_linear = max(best_linear, float(np.mean(pred == np.array(y))))
    ok = all(a == 1.0 for a in tree_accs) and max(svm_accs) <= XOR_SVM_MAX and best_linear == XOR_SVM_MAX
    criterion(9, "XOR: tree 1.0 at depth >= 2, linear SVM <= 0.75", ok,
              f"tree {tree_accs}, svm max {max(svm_accs):.2f}, enumerated linear max {best_linear:.2f}")
    assert ok
