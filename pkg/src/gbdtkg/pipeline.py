"""End-to-end runs: records -> GBDT crosses -> triples -> KG models -> TFR.

Every stage computes in memory; files are written only after all stages
succeed, so a failed run leaves the output directory untouched.
"""

from __future__ import annotations

import json
import time
import zlib
from contextlib import contextmanager
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from gbdtkg import baselines as bl
from gbdtkg import fewshot as fs
from gbdtkg.config import PipelineConfig
from gbdtkg.errors import GbdtKgError, ShapeError
from gbdtkg.gbdt import GbdtModel, GbdtParams, cross_matrix, train_gbdt
from gbdtkg.kgmodel import KgHyper, KgParams, evaluate_accuracy, train_kg
from gbdtkg.records import (
    class_counts,
    generate_synthetic,
    load_records,
    records_to_csv,
    split_records,
)
from gbdtkg.tfr import report_csv, score_records
from gbdtkg.triples import build_triples, relation_counts, split_triples, triples_to_csv


class StageError(GbdtKgError):
    """Wraps the failure of one pipeline stage."""

    def __init__(self, stage: str, cause: BaseException):
        super().__init__(f"stage {stage!r} failed: {cause}")
        self.stage = stage
        self.cause = cause


@contextmanager
def stage(name: str):
    try:
        yield
    except StageError:
        raise
    except Exception as exc:
        raise StageError(name, exc) from exc


def stage_seed(seed: int, name: str) -> int:
    """Independent, reproducible sub-seed for a named stage."""
    return int(np.random.SeedSequence([seed, zlib.crc32(name.encode())]).generate_state(1)[0])


@dataclass
class RunResult:
    report: dict
    files: dict[str, str] = field(default_factory=dict)
    timing: dict[str, float] = field(default_factory=dict)

    def write(self, out_dir: str | Path) -> None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        for name, text in self.files.items():
            (out / name).write_text(text, encoding="utf-8")
        (out / "timing.json").write_text(json.dumps(self.timing, indent=1, sort_keys=True) + "\n")


def config_echo(config: PipelineConfig) -> dict:
    """Config as embedded in reports; the output location does not affect results."""
    doc = config.to_dict()
    doc.pop("output_dir")
    return doc


def dump_json(doc) -> str:
    return json.dumps(doc, indent=1, sort_keys=True) + "\n"


def obtain_records(config: PipelineConfig, seed: int):
    d = config.data
    if d.records_path:
        return load_records(d.records_path)
    return generate_synthetic(d.n_per_class, d.separation, stage_seed(seed, "data"))


def run_pipeline(config: PipelineConfig, seed: int | None = None) -> RunResult:
    seed = config.seed if seed is None else seed
    clock = {}
    t_start = time.perf_counter()

    def tick(name, t0):
        clock[name] = time.perf_counter() - t0

    t0 = time.perf_counter()
    with stage("data"):
        records = obtain_records(config, seed)
        split = split_records(records, config.data.n_test_per_class, stage_seed(seed, "split"))
        train_recs, test_recs = list(split.train), list(split.test)
        by_id = {r.id: r for r in train_recs}
    tick("data", t0)

    t0 = time.perf_counter()
    with stage("gbdt"):
        g = config.gbdt
        gbdt = train_gbdt(train_recs, GbdtParams(g.n_trees, g.max_depth, g.shrinkage, g.min_samples_leaf))
        crosses = dict(zip(by_id, cross_matrix(gbdt, train_recs)))
        raw = {r.id: r.x for r in train_recs}
    tick("gbdt", t0)

    t0 = time.perf_counter()
    with stage("triples"):
        t = config.triples
        triples = build_triples(train_recs, t.n_similar, t.n_nonsimilar, stage_seed(seed, "triples"))
        dataset = split_triples(triples, t.train_fraction, stage_seed(seed, "triple_split"), t.entity_disjoint)
    tick("triples", t0)

    k = config.kg
    hyper = KgHyper(k.learning_rate, k.epochs, k.batch_size, stage_seed(seed, "kg"), k.norm, k.margin)
    t0 = time.perf_counter()
    with stage("kg"):
        kg_fit = train_kg(dataset.train, crosses, hyper)
    tick("kg", t0)
    t0 = time.perf_counter()
    with stage("kg_only"):
        kg_only_fit = train_kg(dataset.train, raw, hyper)
    tick("kg_only", t0)

    t0 = time.perf_counter()
    with stage("baselines"):
        b = config.baselines
        bh = bl.BaselineHyper(b.learning_rate, b.epochs, stage_seed(seed, "baselines"), b.hidden, b.slope)
        train_pairs = bl.pairize(dataset.train, by_id)
        lr_model, lr_trace = bl.train_lr(train_pairs, bh)
        ann_model, ann_trace = bl.train_ann(train_pairs, bh)
    tick("baselines", t0)

    with stage("evaluate"):
        X_test, y_test = bl.to_arrays(bl.pairize(dataset.test, by_id))
        accuracies = {
            "gbdt_kg": evaluate_accuracy(kg_fit.params, dataset.test, crosses),
            "kg_only": evaluate_accuracy(kg_only_fit.params, dataset.test, raw),
            "lr": bl.accuracy(bl.lr_proba(lr_model, X_test), y_test),
            "ann": bl.accuracy(bl.ann_proba(ann_model, X_test), y_test),
        }

    t0 = time.perf_counter()
    with stage("tfr"):
        rows = score_records(kg_fit.params, gbdt, test_recs, train_recs, config.tfr.threshold)
        truth = {r.id: r.label for r in test_recs}
        tfr_rows = [
            {
                "id": row.id,
                "label": truth[row.id].value,
                "Ls": row.counts.Ls,
                "Ld": row.counts.Ld,
                "Ss": row.counts.Ss,
                "Sd": row.counts.Sd,
                "tfr": row.tfr,
                "verdict": row.verdict.value,
            }
            for row in rows
        ]
    tick("tfr", t0)

    report = {
        "seed": seed,
        "config": config_echo(config),
        "data": {"train": class_counts(train_recs), "test": class_counts(test_recs)},
        "triples": {"train": relation_counts(dataset.train), "test": relation_counts(dataset.test)},
        "gbdt": {"n_trees": len(gbdt.trees), "total_leaves": gbdt.total_leaves},
        "accuracy": accuracies,
        "loss_traces": {
            "gbdt_kg": list(kg_fit.loss_trace),
            "kg_only": list(kg_only_fit.loss_trace),
            "lr": list(lr_trace),
            "ann": list(ann_trace),
        },
        "tfr": {
            "threshold": config.tfr.threshold,
            "n_historical": len(train_recs),
            "rows": tfr_rows,
            "fault_flagged": sum(1 for r in tfr_rows if r["label"] == "fault" and r["verdict"] == "fault"),
            "stable_cleared": sum(1 for r in tfr_rows if r["label"] == "stable" and r["verdict"] == "stable"),
        },
    }
    files = {
        "report.json": dump_json(report),
        "tfr.csv": report_csv(rows),
        "gbdt.json": gbdt.to_json(),
        "kg.json": kg_fit.params.to_json(),
        "kg_only.json": kg_only_fit.params.to_json(),
        "lr.json": lr_model.to_json(),
        "ann.json": ann_model.to_json(),
        "historical.csv": records_to_csv(train_recs),
        "test_records.csv": records_to_csv(test_recs),
        "triples.csv": triples_to_csv(triples),
        "triples_train.csv": triples_to_csv(dataset.train),
        "triples_test.csv": triples_to_csv(dataset.test),
        "kg_loss.csv": kg_fit.trace_csv(),
        "kg_only_loss.csv": kg_only_fit.trace_csv(),
    }
    clock["total"] = time.perf_counter() - t_start
    return RunResult(report, files, clock)


def run_meta(config: PipelineConfig, seed: int | None = None) -> RunResult:
    """Few-shot meta-training on relation tasks drawn from the training records."""
    seed = config.seed if seed is None else seed
    f = config.fewshot
    t_start = time.perf_counter()
    with stage("data"):
        records = obtain_records(config, seed)
        train_recs = list(split_records(records, config.data.n_test_per_class, stage_seed(seed, "split")).train)
    with stage("triples"):
        triples = build_triples(train_recs, f.n_similar, f.n_nonsimilar, stage_seed(seed, "meta_triples"))
    entities = [r.id for r in train_recs]
    with stage("tasks"):
        tasks = fs.sample_tasks(triples, f.support_size, stage_seed(seed, "tasks"), entities)
    with stage("meta"):
        hyper = fs.MetaHyper(
            f.dim,
            None if f.hidden is None else tuple(f.hidden),
            f.slope,
            f.beta,
            f.gamma,
            f.learning_rate,
            f.epochs,
            stage_seed(seed, "meta"),
        )
        fit = fs.train_meta(tasks, hyper, entities)
    with stage("link_predict"):
        per_task = {}
        ranks = []
        for task in tasks:
            pred = fs.link_predict(fit.embeddings, fit.net, task, entities, f.beta, f.gamma)
            per_task[task.relation.value] = pred.metrics()
            ranks.extend(pred.ranks)
        overall = fs.LinkPrediction(tuple(ranks)).metrics()
    metrics = dict(overall)
    report = {
        "seed": seed,
        "config": config_echo(config),
        "metrics": metrics,
        "per_relation": per_task,
        "query_loss_trace": list(fit.loss_trace),
    }
    files = {"metrics.json": dump_json(metrics), "meta_report.json": dump_json(report)}
    for task in tasks:
        files[f"task_{task.relation.value}.json"] = task.to_json() + "\n"
    return RunResult(report, files, {"total": time.perf_counter() - t_start})


def predict_from_artifacts(model_dir: str | Path, records_path: str | Path, threshold: float) -> str:
    """Score records against the historical set saved by a previous run."""
    model_dir = Path(model_dir)
    gbdt = GbdtModel.from_json((model_dir / "gbdt.json").read_text(encoding="utf-8"))
    kg = KgParams.from_json((model_dir / "kg.json").read_text(encoding="utf-8"))
    if gbdt.total_leaves != kg.n:
        raise ShapeError(f"GBDT cross dimension {gbdt.total_leaves} does not match KG n={kg.n}")
    historical = load_records(model_dir / "historical.csv")
    records = load_records(records_path)
    return report_csv(score_records(kg, gbdt, records, historical, threshold))


def summarize(report: dict) -> str:
    """Human-readable summary of a run report."""
    lines = [f"seed {report['seed']}", "relation accuracy on the triple test set:"]
    for name, acc in report["accuracy"].items():
        lines.append(f"  {name:<8} {acc:.4f}")
    t = report["tfr"]
    lines.append(f"TFR (threshold {t['threshold']}, NS={t['n_historical']}):")
    lines.append(f"  {'id':<10}{'label':<8}{'Ls':>5}{'Ld':>5}{'Ss':>5}{'Sd':>5}{'tfr':>9}  verdict")
    for r in t["rows"]:
        lines.append(
            f"  {r['id']:<10}{r['label']:<8}{r['Ls']:>5}{r['Ld']:>5}{r['Ss']:>5}{r['Sd']:>5}{r['tfr']:>9.4f}  {r['verdict']}"
        )
    lines.append(f"  fault flagged {t['fault_flagged']}, stable cleared {t['stable_cleared']}")
    return "\n".join(lines)


__all__ = [
    "RunResult",
    "StageError",
    "predict_from_artifacts",
    "run_meta",
    "run_pipeline",
    "stage_seed",
    "summarize",
]
