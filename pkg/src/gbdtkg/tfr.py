"""Transformer failure rate (TFR): vote counting against historical records."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Sequence

import numpy as np

from gbdtkg.gbdt import GbdtModel, cross_matrix, feature_cross
from gbdtkg.kgmodel import KgParams, predict_similar
from gbdtkg.errors import ShapeError
from gbdtkg.records import Label, TransformerRecord

DEFAULT_THRESHOLD = 0.5
STRICT_THRESHOLD = 0.85
REPORT_HEADER = ("id", "Ls", "Ld", "Ss", "Sd", "tfr", "verdict")


@dataclass(frozen=True)
class MatchCounts:
    Ls: int  # similar to a fault record
    Ld: int  # non-similar to a fault record
    Ss: int  # similar to a stable record
    Sd: int  # non-similar to a stable record

    def __post_init__(self):
        if min(self.Ls, self.Ld, self.Ss, self.Sd) < 0:
            raise ValueError("match counts must be nonnegative")

    @property
    def total(self) -> int:
        return self.Ls + self.Ld + self.Ss + self.Sd


@dataclass(frozen=True)
class TfrRow:
    id: str
    counts: MatchCounts
    tfr: float
    verdict: Label
    threshold: float


def tfr(counts: MatchCounts, n_historical: int) -> float:
    """Share of directed comparisons voting fault: (Ls + Sd) / (2 NS)."""
    if n_historical <= 0:
        raise ValueError("number of historical records must be positive")
    if counts.total != 2 * n_historical:
        raise ValueError(f"counts sum to {counts.total}, expected 2*NS = {2 * n_historical}")
    return float(Fraction(counts.Ls + counts.Sd, 2 * n_historical))


def classify(tfr_value: float, threshold: float = DEFAULT_THRESHOLD) -> Label:
    if not 0.0 <= threshold <= 1.0:
        raise ValueError("threshold must lie in [0, 1]")
    return Label.FAULT if tfr_value > threshold else Label.STABLE


def counts_from_crosses(
    kg: KgParams, new_cross: np.ndarray, hist_crosses: np.ndarray, hist_fault: np.ndarray
) -> MatchCounts:
    """Vote counts given precomputed cross vectors of the historical set."""
    hist_crosses = np.atleast_2d(hist_crosses)
    if hist_crosses.shape[1] != kg.n or np.shape(new_cross) != (kg.n,):
        raise ShapeError(
            f"cross dimension {hist_crosses.shape[1]} / {np.shape(new_cross)} does not match model n={kg.n}"
        )
    hist_fault = np.asarray(hist_fault, dtype=bool)
    new_rows = np.broadcast_to(new_cross, hist_crosses.shape)
    sim_as_head = predict_similar(kg, new_rows, hist_crosses)
    sim_as_tail = predict_similar(kg, hist_crosses, new_rows)
    n_sim = sim_as_head.astype(int) + sim_as_tail.astype(int)
    Ls = int(n_sim[hist_fault].sum())
    Ss = int(n_sim[~hist_fault].sum())
    return MatchCounts(Ls, 2 * int(hist_fault.sum()) - Ls, Ss, 2 * int((~hist_fault).sum()) - Ss)


def count_matches(
    kg: KgParams, gbdt: GbdtModel, new_record: TransformerRecord, historical: Sequence[TransformerRecord]
) -> MatchCounts:
    """Pair the new record with every historical one, as head and as tail."""
    if not historical:
        raise ValueError("historical record set is empty")
    if not gbdt.trees:
        raise ValueError("GBDT model has no trees")
    hist = cross_matrix(gbdt, historical)
    fault = np.array([r.label is Label.FAULT for r in historical])
    return counts_from_crosses(kg, feature_cross(gbdt, new_record.features), hist, fault)


def score_records(
    kg: KgParams,
    gbdt: GbdtModel,
    records: Iterable[TransformerRecord],
    historical: Sequence[TransformerRecord],
    threshold: float = DEFAULT_THRESHOLD,
) -> list[TfrRow]:
    if not historical:
        raise ValueError("historical record set is empty")
    hist = cross_matrix(gbdt, historical)
    if hist.shape[1] != kg.n:
        raise ShapeError(f"GBDT cross dimension {hist.shape[1]} does not match KG n={kg.n}")
    fault = np.array([r.label is Label.FAULT for r in historical])
    rows = []
    for rec in records:
        counts = counts_from_crosses(kg, feature_cross(gbdt, rec.features), hist, fault)
        value = tfr(counts, len(historical))
        rows.append(TfrRow(rec.id, counts, value, classify(value, threshold), threshold))
    return rows


def report_csv(rows: Iterable[TfrRow]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(REPORT_HEADER)
    for row in rows:
        c = row.counts
        writer.writerow([row.id, c.Ls, c.Ld, c.Ss, c.Sd, f"{row.tfr:.6f}", row.verdict.value])
    return buf.getvalue()
