"""Ranking metrics against independent oracles and closed-form anchors."""

import csv
import json
import math

import numpy as np
import pytest

from hashscreen.codes import pack_bits
from hashscreen.errors import (
    InvalidInputError,
    ShapeError,
    UndefinedMetricError,
)
from hashscreen.metrics import (
    DEFAULT_ALPHA,
    auroc,
    bedroc,
    ef_column_names,
    enrichment_factor,
    evaluate_ranking,
    evaluate_screen,
    make_ranking,
    summarize_reports,
    write_report_csv,
    write_summary_json,
)


def _auroc_pairwise(scores, is_active):
    """O(n*m) oracle: count active-beats-inactive pairs, ties half credit."""
    pos = [s for s, a in zip(scores, is_active) if a]
    neg = [s for s, a in zip(scores, is_active) if not a]
    wins = 0.0
    for p in pos:
        for q in neg:
            if p > q:
                wins += 1.0
            elif p == q:
                wins += 0.5
    return wins / (len(pos) * len(neg))


def _bedroc_cosh_form(active_ranks, n, total, alpha):
    """Truchon-Bayly BEDROC via the cosh difference, no sinh identity."""
    ra = n / total
    sum_exp = sum(math.exp(-alpha * r / total) for r in active_ranks)
    random_sum = ra * (1.0 - math.exp(-alpha)) / (math.exp(alpha / total) - 1.0)
    rie = sum_exp / random_sum
    denom = math.cosh(alpha / 2.0) - math.cosh(alpha / 2.0 - alpha * ra)
    scale = ra * math.sinh(alpha / 2.0) / denom
    tail = 1.0 / (1.0 - math.exp(alpha * (1.0 - ra)))
    return rie * scale + tail


def test_auroc_matches_pairwise_oracle():
    rng = np.random.default_rng(17)
    for _ in range(200):
        total = int(rng.integers(5, 60))
        n = int(rng.integers(1, total))
        is_active = np.zeros(total, dtype=bool)
        is_active[rng.choice(total, size=n, replace=False)] = True
        # integer scores force plenty of ties
        scores = rng.integers(0, 8, size=total).astype(float)
        r = make_ranking(scores, is_active)
        assert auroc(r) == pytest.approx(
            _auroc_pairwise(scores, is_active), abs=1e-12
        )


def test_auroc_anchors():
    scores = np.arange(10, 0, -1, dtype=float)
    top = make_ranking(scores, np.r_[np.ones(3, bool), np.zeros(7, bool)])
    assert auroc(top) == 1.0
    bottom = make_ranking(scores, np.r_[np.zeros(7, bool), np.ones(3, bool)])
    assert auroc(bottom) == 0.0
    constant = make_ranking(np.ones(10), np.r_[np.ones(3, bool), np.zeros(7, bool)])
    assert auroc(constant) == 0.5


def test_auroc_reversal_symmetry():
    rng = np.random.default_rng(23)
    scores = rng.normal(size=40)  # continuous, no ties
    is_active = rng.random(40) < 0.3
    is_active[0] = True
    is_active[1] = False
    a = auroc(make_ranking(scores, is_active))
    b = auroc(make_ranking(-scores, is_active))
    assert a + b == pytest.approx(1.0, abs=1e-12)


def test_bedroc_matches_cosh_form_oracle():
    rng = np.random.default_rng(31)
    for alpha in (2.0, 20.0, DEFAULT_ALPHA):
        for _ in range(50):
            total = int(rng.integers(20, 400))
            n = int(rng.integers(1, max(2, total // 4)))
            is_active = np.zeros(total, dtype=bool)
            is_active[rng.choice(total, size=n, replace=False)] = True
            scores = rng.normal(size=total)
            r = make_ranking(scores, is_active)
            expected = _bedroc_cosh_form(r.active_ranks(), n, total, alpha)
            assert bedroc(r, alpha) == pytest.approx(expected, abs=1e-12)


def test_bedroc_limits_at_default_alpha():
    total, n = 10_000, 10
    scores = np.arange(total, 0, -1, dtype=float)
    perfect = np.zeros(total, dtype=bool)
    perfect[:n] = True
    assert bedroc(make_ranking(scores, perfect)) > 0.99
    worst = np.zeros(total, dtype=bool)
    worst[-n:] = True
    assert bedroc(make_ranking(scores, worst)) < 1e-6


def test_bedroc_stays_in_unit_interval():
    rng = np.random.default_rng(5)
    for _ in range(100):
        total = int(rng.integers(3, 50))
        n = int(rng.integers(1, total))
        is_active = np.zeros(total, dtype=bool)
        is_active[rng.choice(total, size=n, replace=False)] = True
        value = bedroc(make_ranking(rng.normal(size=total), is_active), 80.5)
        assert 0.0 <= value <= 1.0


def test_bedroc_exhaustive_monotonicity():
    # N=8, n=2: all 28 active placements; bedroc must order them exactly
    # like the sum of exp(-alpha r / N), its only rank-dependent part
    total, alpha = 8, 5.0
    scores = np.arange(total, 0, -1, dtype=float)
    placements = [(i, j) for i in range(total) for j in range(i + 1, total)]
    values, keys = [], []
    for i, j in placements:
        is_active = np.zeros(total, dtype=bool)
        is_active[[i, j]] = True
        values.append(bedroc(make_ranking(scores, is_active), alpha))
        keys.append(
            math.exp(-alpha * (i + 1) / total) + math.exp(-alpha * (j + 1) / total)
        )
    order_by_value = np.argsort(values)
    order_by_key = np.argsort(keys)
    assert np.array_equal(order_by_value, order_by_key)
    assert max(values) == values[placements.index((0, 1))]
    assert min(values) == values[placements.index((6, 7))]


def test_enrichment_factor_hand_computed():
    # 10 items, 2 actives at ranks 1 and 6
    scores = np.arange(10, 0, -1, dtype=float)
    is_active = np.zeros(10, dtype=bool)
    is_active[[0, 5]] = True
    r = make_ranking(scores, is_active)
    assert enrichment_factor(r, 10.0) == 5.0  # window 1, 1 hit
    assert enrichment_factor(r, 20.0) == 2.5  # window 2, 1 hit
    assert enrichment_factor(r, 15.0) == 2.5  # ceil(1.5) = 2
    assert enrichment_factor(r, 60.0) == pytest.approx(20.0 / 12.0)
    assert enrichment_factor(r, 100.0) == 1.0


def test_enrichment_factor_saturates_at_total_over_actives():
    # every window item active: EF = total / n exactly
    scores = np.arange(200, 0, -1, dtype=float)
    is_active = np.zeros(200, dtype=bool)
    is_active[:2] = True
    r = make_ranking(scores, is_active)
    assert enrichment_factor(r, 0.5) == 100.0  # window 1
    assert enrichment_factor(r, 1.0) == 100.0  # window 2, both hits


def test_enrichment_factor_guards():
    scores = np.arange(10, 0, -1, dtype=float)
    r_all = make_ranking(scores, np.ones(10, dtype=bool))
    assert enrichment_factor(r_all, 50.0) == 1.0
    r_none = make_ranking(scores, np.zeros(10, dtype=bool))
    with pytest.raises(UndefinedMetricError):
        enrichment_factor(r_none, 50.0)
    r = make_ranking(scores, np.r_[np.ones(2, bool), np.zeros(8, bool)])
    with pytest.raises(InvalidInputError):
        enrichment_factor(r, 0.0)
    with pytest.raises(InvalidInputError):
        enrichment_factor(r, 101.0)


def test_single_class_inputs_are_undefined():
    scores = np.arange(5, 0, -1, dtype=float)
    for labels in (np.ones(5, dtype=bool), np.zeros(5, dtype=bool)):
        r = make_ranking(scores, labels)
        with pytest.raises(UndefinedMetricError):
            auroc(r)
        with pytest.raises(UndefinedMetricError):
            bedroc(r)


def test_metrics_invariant_under_monotone_transform():
    rng = np.random.default_rng(41)
    scores = rng.normal(size=80)
    is_active = rng.random(80) < 0.2
    is_active[:2] = [True, False]
    base = evaluate_ranking(make_ranking(scores, is_active))
    for transform in (lambda s: 3.0 * s + 7.0, np.exp, lambda s: s**3):
        other = evaluate_ranking(make_ranking(transform(scores), is_active))
        assert other.auroc == pytest.approx(base.auroc, abs=1e-12)
        assert other.bedroc == pytest.approx(base.bedroc, abs=1e-12)
        for p, v in base.ef.items():
            assert other.ef[p] == v


def test_tie_break_is_ascending_id():
    # all scores equal: rank order must follow ids, so the active sitting
    # on the smallest id gets rank 1
    scores = np.zeros(6)
    ids = np.array(["z", "d", "a", "q", "m", "b"])
    is_active = np.array([False, False, True, False, False, False])
    r = make_ranking(scores, is_active, ids)
    assert r.active_ranks().tolist() == [1]
    is_active_z = np.array([True, False, False, False, False, False])
    assert make_ranking(scores, is_active_z, ids).active_ranks().tolist() == [6]


def test_make_ranking_guards():
    with pytest.raises(InvalidInputError):
        make_ranking(np.array([1.0, np.nan]), np.array([True, False]))
    with pytest.raises(InvalidInputError):
        make_ranking(np.empty(0), np.empty(0, dtype=bool))
    with pytest.raises(ShapeError):
        make_ranking(np.ones(3), np.array([True, False]))
    with pytest.raises(ShapeError):
        make_ranking(np.ones(3), np.ones(3, dtype=bool), ids=np.array(["a"]))


def test_evaluate_screen_modes_agree_on_sign_codes():
    rng = np.random.default_rng(53)
    signs = np.where(rng.random((60, 96)) > 0.5, 1.0, -1.0)
    qsigns = np.where(rng.random(96) > 0.5, 1.0, -1.0)
    labels = rng.random(60) < 0.25
    labels[:2] = [True, False]
    codes = [pack_bits(row) for row in signs]
    rep_h = evaluate_screen(pack_bits(qsigns), codes, labels, mode="hamming")
    rep_c = evaluate_screen(qsigns, signs, labels, mode="cosine")
    assert rep_h.auroc == rep_c.auroc
    assert rep_h.bedroc == rep_c.bedroc
    assert rep_h.ef == rep_c.ef


def test_evaluate_screen_matches_from_scratch_oracle():
    rng = np.random.default_rng(59)
    total, bits = 500, 64
    words = rng.integers(0, 2**64, size=(total, 1), dtype=np.uint64)
    labels = rng.random(total) < 0.1
    labels[:1] = True
    labels[1:2] = False
    qword = rng.integers(0, 2**64, size=1, dtype=np.uint64)

    dists = np.array(
        [bin(int(w[0] ^ qword[0])).count("1") for w in words], dtype=float
    )
    oracle_auroc = _auroc_pairwise(-dists, labels)
    order = np.lexsort((np.arange(total), dists))
    ranks = np.flatnonzero(labels[order]) + 1
    oracle_bedroc = _bedroc_cosh_form(ranks, int(labels.sum()), total, DEFAULT_ALPHA)
    window = math.ceil(total * 1.0 / 100.0)
    hits = int(labels[order[:window]].sum())
    oracle_ef1 = hits * total / (window * int(labels.sum()))

    from hashscreen.codes import BinaryCode

    codes = [BinaryCode(w.copy(), bits) for w in words]
    report = evaluate_screen(BinaryCode(qword.copy(), bits), codes, labels)
    assert report.auroc == pytest.approx(oracle_auroc, abs=1e-12)
    assert report.bedroc == pytest.approx(oracle_bedroc, abs=1e-12)
    assert report.ef[1.0] == pytest.approx(oracle_ef1, abs=1e-12)


def test_evaluate_screen_guards():
    rng = np.random.default_rng(3)
    signs = np.where(rng.random((5, 64)) > 0.5, 1.0, -1.0)
    codes = [pack_bits(row) for row in signs]
    q = pack_bits(signs[0])
    labels = np.array([True, False, True, False, True])
    with pytest.raises(InvalidInputError):
        evaluate_screen(signs[0], codes, labels, mode="hamming")
    with pytest.raises(ShapeError):
        evaluate_screen(pack_bits(np.ones(65)), codes, labels)
    with pytest.raises(ShapeError):
        evaluate_screen(q, codes, labels[:3])
    with pytest.raises(InvalidInputError):
        evaluate_screen(q, codes, labels, mode="dot")


def test_report_csv_and_summary(tmp_path):
    rng = np.random.default_rng(61)
    reports = []
    for qi in range(4):
        scores = rng.normal(size=30)
        labels = rng.random(30) < 0.3
        labels[:2] = [True, False]
        reports.append((f"q{qi}", evaluate_ranking(make_ranking(scores, labels))))

    csv_path = str(tmp_path / "per_query.csv")
    write_report_csv(csv_path, reports)
    with open(csv_path, newline="") as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["query_id", "auroc", "bedroc", "ef0.5", "ef1", "ef5"]
    assert len(rows) == 5
    # repr round-trips floats exactly
    assert float(rows[1][1]) == reports[0][1].auroc
    assert float(rows[1][2]) == reports[0][1].bedroc

    summary = summarize_reports([rep for _, rep in reports])
    assert summary["queries"] == 4
    assert summary["auroc_mean"] == pytest.approx(
        np.mean([rep.auroc for _, rep in reports])
    )
    json_path = str(tmp_path / "summary.json")
    write_summary_json(json_path, summary)
    with open(json_path) as fh:
        loaded = json.load(fh)
    assert loaded == summary

    assert ef_column_names((0.5, 1.0, 5.0)) == ["ef0.5", "ef1", "ef5"]
    with pytest.raises(InvalidInputError):
        summarize_reports([])
