"""Root-cause service classifiers: a Gini decision tree and a one-vs-rest
linear SVM, plus prediction, evaluation and a versioned file format."""

from __future__ import annotations

import hashlib
import json
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from cotriage import kernels
from cotriage.data_model import CATEGORIES, ServiceCatalog
from cotriage.features import FeatureSchema

MAGIC = "COTRIAGE-MODEL"
FORMAT_VERSION = 1


class ModelFormatError(ValueError):
    pass


@dataclass
class TrainingSet:
    X: np.ndarray
    labels: list[str]
    schema: FeatureSchema | None = None

    def __post_init__(self):
        self.X = np.asarray(self.X, dtype=np.float64)
        if self.X.ndim != 2:
            raise ValueError("X must be 2-D")
        if len(self.labels) != self.X.shape[0]:
            raise ValueError(f"{self.X.shape[0]} rows but {len(self.labels)} labels")
        if self.schema is not None and self.X.shape[1] != self.schema.total_dim:
            raise ValueError(f"rows have {self.X.shape[1]} columns, schema expects {self.schema.total_dim}")

    def __len__(self) -> int:
        return len(self.labels)

    def check_catalog(self, catalog: ServiceCatalog) -> None:
        missing = sorted({lab for lab in self.labels if lab not in catalog})
        if missing:
            raise ValueError(f"labels missing from catalog: {missing}")

    def canonical(self):
        """Rows sorted by (features, label), labels encoded against the sorted
        class list. Makes training independent of input row order."""
        classes = sorted(set(self.labels))
        code = {c: i for i, c in enumerate(classes)}
        y = np.array([code[lab] for lab in self.labels], dtype=np.int64)
        keys = [y] + [self.X[:, j] for j in range(self.X.shape[1] - 1, -1, -1)]
        order = np.lexsort(keys) if len(y) else np.arange(0)
        return np.ascontiguousarray(self.X[order]), y[order], classes


@dataclass(frozen=True)
class Prediction:
    ranking: tuple
    low_confidence: bool = False

    @property
    def service(self) -> str:
        return self.ranking[0][0]

    @property
    def score(self) -> float:
        return self.ranking[0][1]


def _rank(classes: Sequence[str], scores: np.ndarray) -> tuple:
    pairs = [(c, float(s)) for c, s in zip(classes, scores)]
    pairs.sort(key=lambda p: (-p[1], p[0]))
    return tuple(pairs)


# --------------------------------------------------------------------------
# decision tree
# --------------------------------------------------------------------------


@dataclass
class TreeConfig:
    max_depth: int = 20
    min_samples_leaf: int = 1
    seed: int = 0


@dataclass
class DecisionTreeModel:
    classes: list[str]
    feature: np.ndarray  # -1 at leaves
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray  # (n_nodes, n_classes) training class counts
    n_features: int
    max_depth: int
    min_samples_leaf: int
    seed: int = 0
    schema_digest: str = ""
    metadata: dict = field(default_factory=dict)

    kind = "tree"

    @property
    def n_nodes(self) -> int:
        return len(self.feature)

    def depth(self) -> int:
        def rec(i):
            if self.feature[i] < 0:
                return 0
            return 1 + max(rec(self.left[i]), rec(self.right[i]))

        return rec(0)

    def leaf_of(self, x: np.ndarray) -> int:
        i = 0
        while self.feature[i] >= 0:
            i = self.left[i] if x[self.feature[i]] <= self.threshold[i] else self.right[i]
        return i

    def decision_scores(self, x: np.ndarray) -> np.ndarray:
        counts = self.value[self.leaf_of(x)]
        return counts / counts.sum()

    def params(self) -> dict:
        return {
            "classes": self.classes,
            "feature": self.feature.tolist(),
            "threshold": self.threshold.tolist(),
            "left": self.left.tolist(),
            "right": self.right.tolist(),
            "value": self.value.tolist(),
            "n_features": self.n_features,
            "max_depth": self.max_depth,
            "min_samples_leaf": self.min_samples_leaf,
            "seed": self.seed,
            "metadata": self.metadata,
        }

    @classmethod
    def from_params(cls, p: dict, schema_digest: str) -> "DecisionTreeModel":
        return cls(
            classes=list(p["classes"]),
            feature=np.array(p["feature"], dtype=np.int64),
            threshold=np.array(p["threshold"], dtype=np.float64),
            left=np.array(p["left"], dtype=np.int64),
            right=np.array(p["right"], dtype=np.int64),
            value=np.array(p["value"], dtype=np.int64).reshape(len(p["feature"]), len(p["classes"])),
            n_features=int(p["n_features"]),
            max_depth=int(p["max_depth"]),
            min_samples_leaf=int(p["min_samples_leaf"]),
            seed=int(p["seed"]),
            schema_digest=schema_digest,
            metadata=dict(p.get("metadata", {})),
        )


def train_tree(data: TrainingSet, config: TreeConfig | None = None) -> DecisionTreeModel:
    config = config or TreeConfig()
    if len(data) == 0:
        raise ValueError("cannot train on an empty training set")
    if config.max_depth < 0 or config.min_samples_leaf < 1:
        raise ValueError("max_depth must be >= 0 and min_samples_leaf >= 1")
    X, y, classes = data.canonical()
    n_classes = len(classes)

    feature, threshold, left, right, value = [], [], [], [], []

    def grow(rows: np.ndarray, depth: int) -> int:
        node = len(feature)
        counts = np.bincount(y[rows], minlength=n_classes)
        feature.append(-1)
        threshold.append(0.0)
        left.append(-1)
        right.append(-1)
        value.append(counts)
        if depth >= config.max_depth or np.count_nonzero(counts) <= 1 or len(rows) < 2 * config.min_samples_leaf:
            return node
        col, thr, _ = kernels.best_split(X[rows], y[rows], n_classes, config.min_samples_leaf)
        if col < 0:
            return node
        go_left = X[rows, col] <= thr
        feature[node] = col
        threshold[node] = thr
        left[node] = grow(rows[go_left], depth + 1)
        right[node] = grow(rows[~go_left], depth + 1)
        return node

    grow(np.arange(len(y)), 0)
    return DecisionTreeModel(
        classes=classes,
        feature=np.array(feature, dtype=np.int64),
        threshold=np.array(threshold, dtype=np.float64),
        left=np.array(left, dtype=np.int64),
        right=np.array(right, dtype=np.int64),
        value=np.array(value, dtype=np.int64).reshape(len(feature), n_classes),
        n_features=X.shape[1],
        max_depth=config.max_depth,
        min_samples_leaf=config.min_samples_leaf,
        seed=config.seed,
        schema_digest=data.schema.digest() if data.schema is not None else "",
    )


# --------------------------------------------------------------------------
# linear SVM
# --------------------------------------------------------------------------


@dataclass
class SvmConfig:
    l2: float = 1e-2
    epochs: int = 200
    learning_rate: float = 0.1
    seed: int = 0


@dataclass
class LinearSvmModel:
    classes: list[str]
    weights: np.ndarray  # (n_classes, n_features)
    bias: np.ndarray
    l2: float
    epochs: int
    learning_rate: float
    seed: int = 0
    schema_digest: str = ""
    metadata: dict = field(default_factory=dict)

    kind = "svm"

    @property
    def n_features(self) -> int:
        return self.weights.shape[1]

    def decision_scores(self, x: np.ndarray) -> np.ndarray:
        return self.weights @ x + self.bias

    def params(self) -> dict:
        return {
            "classes": self.classes,
            "weights": self.weights.tolist(),
            "bias": self.bias.tolist(),
            "n_features": self.n_features,
            "l2": self.l2,
            "epochs": self.epochs,
            "learning_rate": self.learning_rate,
            "seed": self.seed,
            "metadata": self.metadata,
        }

    @classmethod
    def from_params(cls, p: dict, schema_digest: str) -> "LinearSvmModel":
        w = np.array(p["weights"], dtype=np.float64).reshape(len(p["classes"]), int(p["n_features"]))
        return cls(
            classes=list(p["classes"]),
            weights=w,
            bias=np.array(p["bias"], dtype=np.float64),
            l2=float(p["l2"]),
            epochs=int(p["epochs"]),
            learning_rate=float(p["learning_rate"]),
            seed=int(p["seed"]),
            schema_digest=schema_digest,
            metadata=dict(p.get("metadata", {})),
        )


class SingleClassError(ValueError):
    pass


def train_svm(data: TrainingSet, config: SvmConfig | None = None) -> LinearSvmModel:
    """One-vs-rest hinge-loss SVMs by full-batch subgradient descent.

    Rows are put in canonical order first, so the result is reproducible
    bit-for-bit and does not depend on input row order. ``seed`` is recorded
    only; full-batch descent draws no random numbers.
    """
    config = config or SvmConfig()
    X, y, classes = data.canonical()
    if len(classes) < 2:
        raise SingleClassError(
            f"SVM needs at least two distinct labels, got {classes}; use a constant predictor instead"
        )
    Y = np.where(y[:, None] == np.arange(len(classes))[None, :], 1.0, -1.0)
    W, b = kernels.svm_fit(X, Y, config.l2, config.learning_rate, config.epochs)
    return LinearSvmModel(
        classes=classes,
        weights=np.asarray(W),
        bias=np.asarray(b),
        l2=config.l2,
        epochs=config.epochs,
        learning_rate=config.learning_rate,
        seed=config.seed,
        schema_digest=data.schema.digest() if data.schema is not None else "",
    )


# --------------------------------------------------------------------------
# prediction / evaluation
# --------------------------------------------------------------------------


def predict(model, vector) -> Prediction:
    x = np.asarray(vector, dtype=np.float64)
    if x.ndim != 1 or x.shape[0] != model.n_features:
        raise ValueError(f"vector has shape {x.shape}, model expects ({model.n_features},)")
    return Prediction(_rank(model.classes, model.decision_scores(x)))


@dataclass
class EvaluationReport:
    total: int
    correct: int
    per_category: dict  # category -> (correct, total); absent categories omitted
    confusion: dict  # (true, predicted) -> count, misses only
    mean_latency_s: float | None = None

    @property
    def accuracy(self) -> float:
        return self.correct / self.total

    def category_accuracy(self, category: str) -> float | None:
        if category not in self.per_category:
            return None
        c, t = self.per_category[category]
        return c / t

    def records(self) -> list[dict]:
        out = [{"record": "overall", "total": self.total, "correct": self.correct, "accuracy": self.accuracy}]
        for cat in CATEGORIES:
            if cat in self.per_category:
                c, t = self.per_category[cat]
                out.append({"record": "category", "category": cat, "total": t, "correct": c, "accuracy": c / t})
        for (true, pred), n in sorted(self.confusion.items()):
            out.append({"record": "miss", "true": true, "predicted": pred, "count": n})
        return out

    def to_jsonl(self) -> str:
        return "".join(json.dumps(r, sort_keys=True, separators=(",", ":")) + "\n" for r in self.records())

    def to_table(self) -> str:
        lines = [f"{'category':<16}{'outages':>8}{'correct':>9}{'accuracy':>10}"]
        for cat in CATEGORIES:
            if cat in self.per_category:
                c, t = self.per_category[cat]
                lines.append(f"{cat:<16}{t:>8}{c:>9}{c / t:>10.3f}")
        lines.append(f"{'overall':<16}{self.total:>8}{self.correct:>9}{self.accuracy:>10.3f}")
        if self.mean_latency_s is not None:
            lines.append(f"mean latency per outage: {self.mean_latency_s * 1000:.2f} ms")
        if self.confusion:
            lines.append("most common misroutes:")
            top = sorted(self.confusion.items(), key=lambda kv: (-kv[1], kv[0]))[:10]
            for (true, pred), n in top:
                lines.append(f"  {true} -> {pred}: {n}")
        return "\n".join(lines)


def score_predictions(
    truths: Sequence[str], predicted: Sequence[str], catalog: ServiceCatalog
) -> EvaluationReport:
    if not truths:
        raise ValueError("nothing to evaluate")
    per: dict[str, list[int]] = {}
    confusion: Counter = Counter()
    correct = 0
    for true, pred in zip(truths, predicted):
        cat = catalog.category(true)
        slot = per.setdefault(cat, [0, 0])
        slot[1] += 1
        if pred == true:
            correct += 1
            slot[0] += 1
        else:
            confusion[(true, pred)] += 1
    return EvaluationReport(
        total=len(truths),
        correct=correct,
        per_category={k: tuple(v) for k, v in per.items()},
        confusion=dict(confusion),
    )


def evaluate(model, test: TrainingSet, catalog: ServiceCatalog) -> EvaluationReport:
    preds = [predict(model, row).service for row in test.X]
    return score_predictions(test.labels, preds, catalog)


# --------------------------------------------------------------------------
# persistence
# --------------------------------------------------------------------------

_KINDS = {"tree": DecisionTreeModel, "svm": LinearSvmModel}


def dumps_model(model) -> str:
    body = json.dumps(model.params(), sort_keys=True, separators=(",", ":"))
    checksum = hashlib.sha256(body.encode("utf-8")).hexdigest()
    return (
        f"{MAGIC}\nversion {FORMAT_VERSION}\nkind {model.kind}\n"
        f"schema {model.schema_digest or '-'}\nparams {body}\nchecksum {checksum}\n"
    )


def save_model(model, path) -> None:
    Path(path).write_text(dumps_model(model), encoding="utf-8")


def loads_model(text: str):
    lines = text.split("\n")
    if len(lines) < 6 or lines[0] != MAGIC:
        raise ModelFormatError("not a model file or truncated")
    fields = {}
    for line in lines[1:6]:
        key, _, value = line.partition(" ")
        fields[key] = value
    try:
        version = int(fields["version"])
    except (KeyError, ValueError):
        raise ModelFormatError("missing format version") from None
    if version != FORMAT_VERSION:
        raise ModelFormatError(f"model format version {version}, this build reads {FORMAT_VERSION}")
    if "checksum" not in fields or "params" not in fields:
        raise ModelFormatError("truncated model file")
    body = fields["params"]
    if hashlib.sha256(body.encode("utf-8")).hexdigest() != fields["checksum"]:
        raise ModelFormatError("model checksum mismatch (corrupt or truncated file)")
    kind = fields.get("kind")
    if kind not in _KINDS:
        raise ModelFormatError(f"unknown model kind {kind!r}")
    schema = fields.get("schema", "-")
    return _KINDS[kind].from_params(json.loads(body), "" if schema == "-" else schema)


def load_model(path):
    return loads_model(Path(path).read_text(encoding="utf-8"))
