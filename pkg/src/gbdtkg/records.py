"""Equipment records: data model, CSV I/O, synthetic generation and splitting."""

from __future__ import annotations

import csv
import enum
import io
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from gbdtkg.errors import DataError, ParseError, SchemaError

FEATURE_NAMES = (
    "load_current",
    "oil_temperature",
    "oil_level",
    "gas",
    "oil_color",
    "sound",
    "appearance",
    "silicone",
)
N_FEATURES = len(FEATURE_NAMES)
CSV_HEADER = ("id", "label") + FEATURE_NAMES

# Direction in which a fault shifts each reading in the synthetic generator.
_FAULT_SHIFT = np.array([1.0, 1.0, -1.0, 1.0, 1.0, -1.0, -1.0, 1.0])
_SYNTH_CENTER = 0.5
_SYNTH_SPREAD = 0.1


class Label(enum.Enum):
    FAULT = "fault"
    STABLE = "stable"

    @classmethod
    def parse(cls, text: str) -> "Label":
        try:
            return cls(text.strip().lower())
        except ValueError:
            raise ValueError(f"unknown label {text!r}, expected fault or stable") from None

    @property
    def target(self) -> float:
        """Regression target used by the GBDT (Fault -> 1, Stable -> 0)."""
        return 1.0 if self is Label.FAULT else 0.0


@dataclass(frozen=True)
class TransformerRecord:
    id: str
    label: Label
    features: tuple[float, ...]

    def __post_init__(self):
        feats = tuple(float(v) for v in self.features)
        if len(feats) != N_FEATURES:
            raise DataError(f"record {self.id!r} has {len(feats)} features, expected {N_FEATURES}")
        if not all(math.isfinite(v) for v in feats):
            raise DataError(f"record {self.id!r} has non-finite features")
        object.__setattr__(self, "features", feats)

    @property
    def x(self) -> np.ndarray:
        return np.asarray(self.features, dtype=float)


@dataclass(frozen=True)
class RecordSplit:
    train: tuple[TransformerRecord, ...]
    test: tuple[TransformerRecord, ...]

    def counts(self) -> dict[str, dict[str, int]]:
        return {"train": class_counts(self.train), "test": class_counts(self.test)}


def class_counts(records: Iterable[TransformerRecord]) -> dict[str, int]:
    counts = {label.value: 0 for label in Label}
    for rec in records:
        counts[rec.label.value] += 1
    return counts


def feature_matrix(records: Sequence[TransformerRecord]) -> np.ndarray:
    if not records:
        return np.zeros((0, N_FEATURES))
    return np.array([rec.features for rec in records], dtype=float)


def label_vector(records: Sequence[TransformerRecord]) -> np.ndarray:
    return np.array([rec.label.target for rec in records], dtype=float)


def check_unique_ids(records: Iterable[TransformerRecord]) -> None:
    seen: set[str] = set()
    for rec in records:
        if rec.id in seen:
            raise DataError(f"duplicate record id {rec.id!r}")
        seen.add(rec.id)


def load_records(path: str | Path) -> list[TransformerRecord]:
    """Read a records CSV.

    Row numbers in error messages count the header as row 1.
    """
    with open(path, newline="", encoding="utf-8") as fh:
        return _parse_records(fh)


def _parse_records(fh) -> list[TransformerRecord]:
    reader = csv.reader(fh)
    header = next(reader, None)
    if header is None:
        raise SchemaError("empty file: missing header row")
    header = [h.strip() for h in header]
    for col in CSV_HEADER:
        if col not in header:
            raise SchemaError(f"missing column {col!r}")
    for col in header:
        if col not in CSV_HEADER:
            raise SchemaError(f"unexpected column {col!r}")
    if len(header) != len(set(header)):
        raise SchemaError("duplicate column in header")
    pos = {col: header.index(col) for col in CSV_HEADER}

    records = []
    seen: set[str] = set()
    for rowno, row in enumerate(reader, start=2):
        if not row:
            continue
        if len(row) != len(header):
            raise ParseError(f"row {rowno}: expected {len(header)} fields, got {len(row)}")
        rid = row[pos["id"]].strip()
        if rid in seen:
            raise DataError(f"row {rowno}: duplicate record id {rid!r}")
        seen.add(rid)
        try:
            label = Label.parse(row[pos["label"]])
        except ValueError as exc:
            raise ParseError(f"row {rowno}: {exc}") from None
        feats = []
        for name in FEATURE_NAMES:
            raw = row[pos[name]]
            try:
                val = float(raw)
            except ValueError:
                raise ParseError(f"row {rowno}: column {name!r} is not numeric: {raw!r}") from None
            if not math.isfinite(val):
                raise ParseError(f"row {rowno}: column {name!r} is not finite: {raw!r}")
            feats.append(val)
        records.append(TransformerRecord(rid, label, tuple(feats)))
    return records


def records_to_csv(records: Iterable[TransformerRecord]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_HEADER)
    for rec in records:
        writer.writerow([rec.id, rec.label.value, *(repr(v) for v in rec.features)])
    return buf.getvalue()


def write_records(records: Iterable[TransformerRecord], path: str | Path) -> None:
    Path(path).write_text(records_to_csv(records), encoding="utf-8")


def generate_synthetic(n_per_class: int, separation: float, seed: int) -> list[TransformerRecord]:
    """Draw a balanced synthetic dataset.

    Every feature is Gaussian with spread 0.1 around 0.5; fault records are
    shifted by ``separation`` spreads along a fixed per-feature direction.
    Fault records come first, ids are ``tr-0001`` onwards.
    """
    if n_per_class < 1:
        raise ValueError("n_per_class must be >= 1")
    if not separation >= 0:
        raise ValueError("separation must be >= 0")
    rng = np.random.default_rng(seed)
    half = 0.5 * separation * _SYNTH_SPREAD * _FAULT_SHIFT
    out = []
    for label, mean in ((Label.FAULT, _SYNTH_CENTER + half), (Label.STABLE, _SYNTH_CENTER - half)):
        x = rng.normal(mean, _SYNTH_SPREAD, size=(n_per_class, N_FEATURES))
        for row in x:
            out.append(TransformerRecord(f"tr-{len(out) + 1:04d}", label, tuple(row.tolist())))
    return out


def split_records(records: Sequence[TransformerRecord], n_test_per_class: int, seed: int) -> RecordSplit:
    """Hold out ``n_test_per_class`` records of each class; both sides keep input order."""
    if n_test_per_class < 0:
        raise ValueError("n_test_per_class must be >= 0")
    check_unique_ids(records)
    rng = np.random.default_rng(seed)
    test_idx: set[int] = set()
    for label in Label:
        idx = [i for i, rec in enumerate(records) if rec.label is label]
        if len(idx) <= n_test_per_class:
            raise DataError(
                f"class {label.value!r} has {len(idx)} records, need more than {n_test_per_class}"
            )
        chosen = rng.choice(len(idx), size=n_test_per_class, replace=False)
        test_idx.update(idx[int(j)] for j in chosen)
    train = tuple(rec for i, rec in enumerate(records) if i not in test_idx)
    test = tuple(rec for i, rec in enumerate(records) if i in test_idx)
    return RecordSplit(train, test)
