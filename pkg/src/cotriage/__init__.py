"""Outage triage from incident correlation graphs."""

from cotriage._accel import backend
from cotriage.correlation import IncidentGraph, MetaGraph, ServiceGraph, build_gi, build_gm, build_gs
from cotriage.data_model import (
    CorrelationLabel,
    Corpus,
    Incident,
    Outage,
    ServiceCatalog,
    TimeWindow,
    fetch_window,
    load_corpus,
)
from cotriage.features import FeatureSchema, build_schema, featurize
from cotriage.model import (
    DecisionTreeModel,
    LinearSvmModel,
    Prediction,
    TrainingSet,
    evaluate,
    load_model,
    predict,
    save_model,
    train_svm,
    train_tree,
)
from cotriage.templates import LocationLexicon, Template, TemplateRegistry, Vocabulary, build_vocabulary, parse, tokenize

__version__ = "0.1.0"
