#!/usr/bin/env python3
# Failure rate of new transformers, voted against every historical one.

from gbdtkg import (
    GbdtParams,
    KgHyper,
    MatchCounts,
    build_triples,
    cross_matrix,
    generate_synthetic,
    score_records,
    split_records,
    split_triples,
    tfr,
    train_gbdt,
    train_kg,
)
from gbdtkg.tfr import STRICT_THRESHOLD, report_csv

# the arithmetic first: sample 1 of the published table, NS = 242
print("published sample 1:", round(tfr(MatchCounts(82, 160, 2, 240), 242), 5))

split = split_records(generate_synthetic(131, 1.5, seed=2), 10, seed=2)
hist = list(split.train)
gbdt = train_gbdt(hist, GbdtParams())
crosses = dict(zip((r.id for r in hist), cross_matrix(gbdt, hist)))
data = split_triples(build_triples(hist, 3000, 3000, seed=2), 0.7, seed=2)
kg = train_kg(data.train, crosses, KgHyper(epochs=60, seed=2)).params

rows = score_records(kg, gbdt, split.test, hist)
print(report_csv(rows))

truth = {r.id: r.label for r in split.test}
hits = sum(row.verdict is truth[row.id] for row in rows)
print(f"correct verdicts at 0.5: {hits}/{len(rows)}")
strict = score_records(kg, gbdt, split.test, hist, STRICT_THRESHOLD)
print(f"flagged at {STRICT_THRESHOLD}: {sum(r.verdict.value == 'fault' for r in strict)}")
