"""Similar / non-similar triple construction, splitting and negative sampling."""

from __future__ import annotations

import csv
import enum
import io
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from gbdtkg.errors import CapacityError, DataError, ExhaustionError, ParseError, SchemaError
from gbdtkg.records import Label, TransformerRecord, check_unique_ids


class Relation(enum.Enum):
    SIMILAR = "similar"
    NON_SIMILAR = "non_similar"

    @classmethod
    def between(cls, a: Label, b: Label) -> "Relation":
        return cls.SIMILAR if a is b else cls.NON_SIMILAR

    @property
    def other(self) -> "Relation":
        return Relation.NON_SIMILAR if self is Relation.SIMILAR else Relation.SIMILAR


@dataclass(frozen=True)
class Triple:
    head: str
    relation: Relation
    tail: str

    def __post_init__(self):
        if self.head == self.tail:
            raise ValueError(f"triple head and tail are both {self.head!r}")

    @property
    def key(self) -> tuple[str, str, str]:
        return (self.head, self.relation.value, self.tail)


@dataclass(frozen=True)
class TripleDataset:
    train: tuple[Triple, ...]
    test: tuple[Triple, ...]
    entity_ids: tuple[str, ...] = ()

    def relation_counts(self) -> dict[str, dict[str, int]]:
        return {"train": relation_counts(self.train), "test": relation_counts(self.test)}


def relation_counts(triples: Iterable[Triple]) -> dict[str, int]:
    counts = {rel.value: 0 for rel in Relation}
    for t in triples:
        counts[t.relation.value] += 1
    return counts


def _sample_pairs(groups_a, groups_b, n, rng, what):
    """Draw ``n`` distinct ordered (a, b) pairs, a != b, uniformly without replacement."""
    pairs = [(a, b) for a, b in _ordered_pairs(groups_a, groups_b)]
    if n > len(pairs):
        raise CapacityError(f"requested {n} {what} triples but only {len(pairs)} ordered pairs exist")
    idx = rng.choice(len(pairs), size=n, replace=False) if n else []
    return [pairs[int(i)] for i in idx]


def _ordered_pairs(groups_a, groups_b):
    for a_ids, b_ids in zip(groups_a, groups_b):
        for a in a_ids:
            for b in b_ids:
                if a != b:
                    yield a, b


def build_triples(
    records: Sequence[TransformerRecord], n_similar: int, n_nonsimilar: int, seed: int
) -> list[Triple]:
    """Sample same-class pairs as Similar and cross-class pairs as NonSimilar.

    Pairs are ordered, so (a, b) and (b, a) are different triples. Output lists
    the Similar triples first, each block in sampling order.
    """
    if n_similar < 0 or n_nonsimilar < 0:
        raise ValueError("triple counts must be >= 0")
    check_unique_ids(records)
    fault = [r.id for r in records if r.label is Label.FAULT]
    stable = [r.id for r in records if r.label is Label.STABLE]
    rng = np.random.default_rng(seed)
    same = _sample_pairs([fault, stable], [fault, stable], n_similar, rng, "similar")
    cross = _sample_pairs([fault, stable], [stable, fault], n_nonsimilar, rng, "non-similar")
    return [Triple(h, Relation.SIMILAR, t) for h, t in same] + [
        Triple(h, Relation.NON_SIMILAR, t) for h, t in cross
    ]


def split_triples(
    triples: Sequence[Triple],
    train_fraction: float,
    seed: int,
    entity_disjoint: bool = False,
) -> TripleDataset:
    """Split each relation independently so both sides stay balanced.

    ``round(train_fraction * len(triples))`` triples go to train, half from each
    relation; when that count is odd the two relations differ by one.

    With ``entity_disjoint`` the split is made over entities instead: a test
    triple never shares an entity with a train triple, and triples that
    straddle the two entity sets are dropped. Counts are then only
    approximately ``train_fraction`` and balance is restored by trimming.
    """
    if not 0.0 < train_fraction < 1.0:
        raise ValueError(f"train_fraction must lie in (0, 1), got {train_fraction}")
    groups = {rel: [t for t in triples if t.relation is rel] for rel in Relation}
    sizes = {len(g) for g in groups.values()}
    if len(sizes) != 1:
        raise DataError(f"unbalanced triples: {relation_counts(triples)}")
    rng = np.random.default_rng(seed)
    entities = tuple(sorted({t.head for t in triples} | {t.tail for t in triples}))
    if entity_disjoint:
        return _split_by_entity(groups, entities, train_fraction, rng)
    total = int(math.floor(train_fraction * len(triples) + 0.5))  # half-up, not banker's
    quota = {rel: total // 2 for rel in Relation}
    if total % 2:
        # odd total: one relation, picked by the seed, takes the extra triple
        quota[list(Relation)[int(rng.integers(2))]] += 1
    train, test = [], []
    for rel in Relation:
        g = groups[rel]
        perm = rng.permutation(len(g))
        train.extend(g[i] for i in perm[: quota[rel]])
        test.extend(g[i] for i in perm[quota[rel] :])
    return TripleDataset(tuple(train), tuple(test), entities)


def _split_by_entity(groups, entities, train_fraction, rng):
    perm = rng.permutation(len(entities))
    n_train_ent = int(math.floor(train_fraction * len(entities) + 0.5))
    train_ent = {entities[i] for i in perm[:n_train_ent]}
    sides = {"train": {}, "test": {}}
    for rel, g in groups.items():
        sides["train"][rel] = [t for t in g if t.head in train_ent and t.tail in train_ent]
        sides["test"][rel] = [t for t in g if t.head not in train_ent and t.tail not in train_ent]
    out = []
    for side in ("train", "test"):
        n = min(len(v) for v in sides[side].values())
        out.append(tuple(t for rel in Relation for t in sides[side][rel][:n]))
    return TripleDataset(out[0], out[1], entities)


def corrupt_tail(triple: Triple, entities: Sequence[str], known: Iterable[Triple], seed) -> Triple:
    """Replace the tail by an entity that yields a triple outside ``known``."""
    known_keys = {t.key for t in known}
    candidates = sorted(
        e
        for e in set(entities)
        if e != triple.tail
        and e != triple.head
        and (triple.head, triple.relation.value, e) not in known_keys
    )
    if not candidates:
        raise ExhaustionError(f"no valid tail corruption for {triple.key}")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    return Triple(triple.head, triple.relation, candidates[int(rng.integers(len(candidates)))])


def check_triple_labels(triples: Iterable[Triple], records: Mapping[str, TransformerRecord]) -> None:
    for t in triples:
        expected = Relation.between(records[t.head].label, records[t.tail].label)
        if t.relation is not expected:
            raise DataError(f"triple {t.key} contradicts record labels")


def triples_to_csv(triples: Iterable[Triple]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["head", "relation", "tail"])
    for t in triples:
        writer.writerow(t.key)
    return buf.getvalue()


def write_triples(triples: Iterable[Triple], path: str | Path) -> None:
    Path(path).write_text(triples_to_csv(triples), encoding="utf-8")


def load_triples(path: str | Path) -> list[Triple]:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header] != ["head", "relation", "tail"]:
            raise SchemaError(f"expected header head,relation,tail, got {header}")
        out = []
        for rowno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 3:
                raise ParseError(f"row {rowno}: expected 3 fields")
            try:
                rel = Relation(row[1].strip().lower())
            except ValueError:
                raise ParseError(f"row {rowno}: unknown relation {row[1]!r}") from None
            out.append(Triple(row[0].strip(), rel, row[2].strip()))
        return out
