import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from gbdtkg.errors import ShapeError
from gbdtkg.gbdt import GbdtParams, cross_matrix, train_gbdt
from gbdtkg.kgmodel import KgParams
from gbdtkg.records import Label, generate_synthetic, split_records
from gbdtkg.tfr import (
    REPORT_HEADER,
    STRICT_THRESHOLD,
    MatchCounts,
    classify,
    count_matches,
    counts_from_crosses,
    report_csv,
    score_records,
    tfr,
)

from conftest import make_record

NS = 242

# printed columns: Ls, Ld, Ss, Sd, TFR
PUBLISHED = [
    (82, 160, 2, 240, 0.6652),
    (180, 62, 2, 240, 0.8677),
    (184, 58, 10, 232, 0.8595),
    (197, 45, 14, 228, 0.8780),
    (179, 63, 1, 241, 0.8677),
    (177, 65, 1, 241, 0.8636),
    (189, 45, 14, 228, 0.8780),
    (180, 65, 1, 241, 0.8636),
    (29, 53, 9, 233, 0.8719),
    (27, 62, 3, 239, 0.8657),
    (65, 213, 221, 21, 0.1033),
    (65, 215, 232, 10, 0.0764),
    (49, 177, 222, 20, 0.1756),
    (25, 177, 222, 20, 0.1756),
    (26, 193, 228, 14, 0.1301),
    (25, 217, 230, 12, 0.0764),
    (26, 216, 228, 14, 0.0826),
    (25, 217, 230, 12, 0.0764),
    (25, 217, 229, 13, 0.0785),
    (26, 216, 232, 10, 0.0743),
]


def table_counts(row):
    _, ld, ss, sd, _ = row
    # several printed Ls cells break Ls + Ld = NS; the Ld column does not
    return MatchCounts(NS - ld, ld, ss, sd)


def test_tfr_spec_examples():
    assert tfr(MatchCounts(82, 160, 2, 240), NS) == pytest.approx(0.66529, abs=5e-6)
    assert tfr(MatchCounts(180, 62, 2, 240), NS) == pytest.approx(0.86777, abs=5e-6)
    assert tfr(MatchCounts(0, 2, 2, 0), 2) == 0.0


@pytest.mark.parametrize("idx", range(20))
def test_published_rows_reproduced(idx):
    row = PUBLISHED[idx]
    assert tfr(table_counts(row), NS) == pytest.approx(row[4], abs=5e-4)


def test_published_ls_consistent_rows():
    for idx in (0, 1, 2, 3, 4, 5):
        ls, ld, ss, sd, printed = PUBLISHED[idx]
        assert ls + ld == NS and ss + sd == NS
        assert tfr(MatchCounts(ls, ld, ss, sd), NS) == pytest.approx(printed, abs=5e-4)


def test_published_verdicts():
    verdicts = [classify(tfr(table_counts(r), NS)) for r in PUBLISHED]
    assert verdicts == [Label.FAULT] * 10 + [Label.STABLE] * 10
    strict = [classify(tfr(table_counts(r), NS), STRICT_THRESHOLD) for r in PUBLISHED[:10]]
    assert strict.count(Label.FAULT) == 9


def test_tfr_errors():
    with pytest.raises(ValueError):
        tfr(MatchCounts(0, 0, 0, 0), 0)
    with pytest.raises(ValueError, match="2\\*NS"):
        tfr(MatchCounts(1, 1, 1, 0), 2)
    with pytest.raises(ValueError):
        MatchCounts(-1, 0, 0, 0)


def test_classify_examples():
    assert classify(0.6652, 0.5) is Label.FAULT
    assert classify(0.5, 0.5) is Label.STABLE
    assert classify(0.0764, 0.5) is Label.STABLE
    with pytest.raises(ValueError):
        classify(0.3, 1.5)


@settings(max_examples=100, deadline=None)
@given(v=st.floats(0, 1), a=st.floats(0, 1), b=st.floats(0, 1))
def test_classify_monotone_in_threshold(v, a, b):
    lo, hi = sorted((a, b))
    if classify(v, lo) is Label.STABLE:
        assert classify(v, hi) is Label.STABLE


@settings(max_examples=100, deadline=None)
@given(nf=st.integers(0, 30), ns=st.integers(0, 30), data=st.data())
def test_tfr_monotone_and_bounded(nf, ns, data):
    if nf + ns == 0:
        return
    ls = data.draw(st.integers(0, 2 * nf))
    sd = data.draw(st.integers(0, 2 * ns))
    c = MatchCounts(ls, 2 * nf - ls, 2 * ns - sd, sd)
    v = tfr(c, nf + ns)
    assert 0.0 <= v <= 1.0
    if ls < 2 * nf:
        assert tfr(MatchCounts(ls + 1, 2 * nf - ls - 1, 2 * ns - sd, sd), nf + ns) > v


def constant_model(similar: bool, n: int) -> KgParams:
    # W = 0 turns the scores into the relation norms
    lo, hi = np.zeros(n), np.full(n, 1.0)
    return KgParams(np.zeros(n), lo, hi) if similar else KgParams(np.zeros(n), hi, lo)


def test_counts_constant_models():
    hist = np.eye(3)[:2]
    fault = np.array([True, False])
    new = np.array([0.0, 0.0, 1.0])
    assert counts_from_crosses(constant_model(True, 3), new, hist, fault) == MatchCounts(2, 0, 2, 0)
    assert counts_from_crosses(constant_model(False, 3), new, hist, fault) == MatchCounts(0, 2, 0, 2)


def test_counts_dimension_mismatch():
    with pytest.raises(ShapeError):
        counts_from_crosses(constant_model(True, 4), np.zeros(3), np.zeros((2, 3)), np.array([True, False]))


def test_counts_directional():
    # r_s pulls h toward t only along +x; the pair is Similar in exactly one direction
    kg = KgParams(np.ones(1), [1.0], [-1.0], norm=1)
    hist = np.array([[1.0]])
    c = counts_from_crosses(kg, np.array([0.0]), hist, np.array([True]))
    assert c == MatchCounts(1, 1, 0, 0)


@pytest.fixture(scope="module")
def fitted():
    split = split_records(generate_synthetic(20, 2.0, 3), 3, 1)
    train = list(split.train)
    gbdt = train_gbdt(train, GbdtParams(n_trees=4, max_depth=2))
    rng = np.random.default_rng(0)
    n = gbdt.total_leaves
    kg = KgParams(rng.uniform(0.5, 1.5, n), rng.normal(size=n) * 0.3, rng.normal(size=n) * 0.3, 1)
    return kg, gbdt, train, list(split.test)


def test_count_invariants(fitted):
    kg, gbdt, hist, test = fitted
    nf = sum(r.label is Label.FAULT for r in hist)
    for rec in test:
        c = count_matches(kg, gbdt, rec, hist)
        assert c.Ls + c.Ld == 2 * nf
        assert c.Ss + c.Sd == 2 * (len(hist) - nf)
        assert c.total == 2 * len(hist)


def test_count_matches_errors(fitted):
    kg, gbdt, hist, test = fitted
    with pytest.raises(ValueError):
        count_matches(kg, gbdt, test[0], [])
    with pytest.raises(ShapeError):
        score_records(KgParams(np.ones(2), np.zeros(2), np.ones(2)), gbdt, test, hist)


def test_score_records_matches_counting(fitted):
    kg, gbdt, hist, test = fitted
    rows = score_records(kg, gbdt, test, hist, 0.5)
    assert [r.id for r in rows] == [r.id for r in test]
    for row, rec in zip(rows, test):
        assert row.counts == count_matches(kg, gbdt, rec, hist)
        assert row.tfr == tfr(row.counts, len(hist))
        assert row.verdict is classify(row.tfr, 0.5)


def test_counts_agree_with_brute_force(fitted):
    from gbdtkg.kgmodel import predict_relation
    from gbdtkg.triples import Relation

    kg, gbdt, hist, test = fitted
    crosses = cross_matrix(gbdt, hist)
    new = cross_matrix(gbdt, test[:1])[0]
    tally = {"Ls": 0, "Ld": 0, "Ss": 0, "Sd": 0}
    for rec, c in zip(hist, crosses):
        for h, t in ((new, c), (c, new)):
            sim = predict_relation(kg, h, t)[0] is Relation.SIMILAR
            key = ("L" if rec.label is Label.FAULT else "S") + ("s" if sim else "d")
            tally[key] += 1
    assert count_matches(kg, gbdt, test[0], hist) == MatchCounts(**tally)


def test_report_csv(fitted):
    kg, gbdt, hist, test = fitted
    text = report_csv(score_records(kg, gbdt, test, hist))
    lines = text.splitlines()
    assert lines[0] == ",".join(REPORT_HEADER)
    assert len(lines) == len(test) + 1
    assert report_csv([]) == ",".join(REPORT_HEADER) + "\n"
