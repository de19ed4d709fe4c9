"""Transformer fault-risk prediction with GBDT feature crossing and a
translation-based knowledge graph."""

from gbdtkg.records import (
    FEATURE_NAMES,
    Label,
    RecordSplit,
    TransformerRecord,
    generate_synthetic,
    load_records,
    split_records,
    write_records,
)
from gbdtkg.gbdt import GbdtModel, GbdtParams, cross_matrix, feature_cross, predict_raw, train_gbdt
from gbdtkg.triples import (
    Relation,
    Triple,
    TripleDataset,
    build_triples,
    corrupt_tail,
    split_triples,
)
from gbdtkg.kgmodel import (
    KgHyper,
    KgParams,
    evaluate_accuracy,
    predict_relation,
    train_kg,
)
from gbdtkg.tfr import MatchCounts, classify, count_matches, score_records, tfr

__version__ = "0.1.0"

__all__ = [
    "FEATURE_NAMES",
    "GbdtModel",
    "GbdtParams",
    "KgHyper",
    "KgParams",
    "Label",
    "MatchCounts",
    "RecordSplit",
    "Relation",
    "TransformerRecord",
    "Triple",
    "TripleDataset",
    "build_triples",
    "classify",
    "corrupt_tail",
    "count_matches",
    "cross_matrix",
    "evaluate_accuracy",
    "feature_cross",
    "generate_synthetic",
    "load_records",
    "predict_raw",
    "predict_relation",
    "score_records",
    "split_records",
    "split_triples",
    "tfr",
    "train_gbdt",
    "train_kg",
    "write_records",
]
