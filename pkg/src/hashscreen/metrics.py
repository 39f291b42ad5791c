"""Screening metrics: AUROC, BEDROC, and enrichment factors.

All three are rank metrics over one query's scored database. Ranking
construction is deterministic: items sort by descending score, ties by
ascending item id. BEDROC and EF consume integer ranks from that order.
AUROC instead uses the Mann-Whitney convention where tied pairs count one
half, so a constant scorer lands at exactly 0.5 regardless of tie order.

BEDROC follows the standard Truchon-Bayly closed form

    RIE    = sum_i exp(-alpha r_i / N) / [Ra (1 - e^-alpha) / (e^(alpha/N) - 1)]
    BEDROC = RIE * Ra sinh(alpha/2) / (cosh(alpha/2) - cosh(alpha/2 - alpha Ra))
             + 1 / (1 - e^(alpha (1 - Ra)))

with Ra = n/N and 1-based active ranks r_i. The cosh difference is
evaluated as 2 sinh(alpha Ra / 2) sinh(alpha (1 - Ra) / 2) which is exact
and avoids cancellation for extreme alpha.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass

import numpy as np

from . import kernels
from .codes import BinaryCode, cosine_similarity
from .errors import InvalidInputError, ShapeError, UndefinedMetricError

DEFAULT_ALPHA = 80.5
DEFAULT_EF_PERCENTS = (0.5, 1.0, 5.0)


@dataclass(frozen=True)
class Ranking:
    """One query's scored database, frozen in deterministic rank order.

    ``order`` is the permutation putting items in rank order (rank 1 first);
    ``scores``/``is_active``/``ids`` stay in input order.
    """

    scores: np.ndarray
    is_active: np.ndarray
    ids: np.ndarray
    order: np.ndarray

    @property
    def total(self) -> int:
        return int(self.scores.shape[0])

    @property
    def n_actives(self) -> int:
        return int(np.count_nonzero(self.is_active))

    def active_ranks(self) -> np.ndarray:
        """1-based rank positions of the actives."""
        return np.flatnonzero(self.is_active[self.order]) + 1


def make_ranking(scores, is_active, ids=None) -> Ranking:
    """Build a Ranking from per-item scores (higher = better) and labels."""
    scores = np.asarray(scores)
    if scores.ndim != 1 or scores.shape[0] == 0:
        raise InvalidInputError(f"scores must be a non-empty vector, got shape {scores.shape}")
    if not np.all(np.isfinite(scores.astype(np.float64))):
        raise InvalidInputError("scores contain non-finite entries")
    is_active = np.asarray(is_active, dtype=bool)
    if is_active.shape != scores.shape:
        raise ShapeError(
            f"{is_active.shape[0] if is_active.ndim == 1 else is_active.shape} labels "
            f"for {scores.shape[0]} scores"
        )
    ids = np.arange(scores.shape[0]) if ids is None else np.asarray(ids)
    if ids.shape != scores.shape:
        raise ShapeError(f"{ids.shape[0]} ids for {scores.shape[0]} scores")
    order = np.lexsort((ids, -scores.astype(np.float64)))
    return Ranking(scores, is_active, ids, order)


def _require_both_classes(r: Ranking, metric: str) -> tuple[int, int]:
    n, total = r.n_actives, r.total
    if n == 0 or n == total:
        raise UndefinedMetricError(
            f"{metric} is undefined with {n} actives out of {total} items"
        )
    return n, total


def auroc(r: Ranking) -> float:
    """Probability a random active outscores a random inactive, ties = 1/2."""
    n, total = _require_both_classes(r, "auroc")
    scores = r.scores.astype(np.float64)
    # average 1-based ascending ranks per tie group (Mann-Whitney)
    _, inverse, counts = np.unique(scores, return_inverse=True, return_counts=True)
    group_start = np.concatenate(([0], np.cumsum(counts)[:-1]))
    avg_rank = group_start + (counts + 1) / 2.0
    ranks = avg_rank[inverse]
    rank_sum = float(ranks[r.is_active].sum())
    u = rank_sum - n * (n + 1) / 2.0
    return u / (n * (total - n))


def bedroc(r: Ranking, alpha: float = DEFAULT_ALPHA) -> float:
    """Early-recognition score in [0, 1], exponentially favoring top ranks."""
    if alpha <= 0:
        raise InvalidInputError(f"alpha must be positive, got {alpha}")
    n, total = _require_both_classes(r, "bedroc")
    ra = n / total
    ranks = r.active_ranks()
    sum_exp = float(np.sum(np.exp(-alpha * ranks / total)))
    random_sum = ra * (1.0 - math.exp(-alpha)) / (math.expm1(alpha / total))
    rie = sum_exp / random_sum
    # cosh(a/2) - cosh(a/2 - a Ra) = 2 sinh(a Ra / 2) sinh(a (1 - Ra) / 2)
    scale = ra * math.sinh(alpha / 2.0) / (
        2.0 * math.sinh(alpha * ra / 2.0) * math.sinh(alpha * (1.0 - ra) / 2.0)
    )
    tail_exponent = alpha * (1.0 - ra)
    tail = 0.0 if tail_exponent > 700 else 1.0 / (1.0 - math.exp(tail_exponent))
    # rounding can land a hair outside [0, 1] at the extremes
    return min(1.0, max(0.0, rie * scale + tail))


def enrichment_factor(r: Ranking, x_percent: float) -> float:
    """Active rate in the top x% window over the database-wide active rate.

    The window holds ceil(N x / 100) items so it is never empty.
    """
    if not 0 < x_percent <= 100:
        raise InvalidInputError(f"x_percent must be in (0, 100], got {x_percent}")
    total = r.total
    n = r.n_actives
    if n == 0:
        raise UndefinedMetricError("enrichment factor is undefined with no actives")
    window = math.ceil(total * x_percent / 100.0)
    hits = int(np.count_nonzero(r.is_active[r.order[:window]]))
    return (hits * total) / (window * n)


@dataclass(frozen=True)
class MetricReport:
    auroc: float
    bedroc: float
    ef: dict[float, float]

    def as_row(self) -> dict[str, float]:
        row = {"auroc": self.auroc, "bedroc": self.bedroc}
        for percent in sorted(self.ef):
            row[f"ef{percent:g}"] = self.ef[percent]
        return row


def evaluate_ranking(
    r: Ranking,
    alpha: float = DEFAULT_ALPHA,
    ef_percents=DEFAULT_EF_PERCENTS,
) -> MetricReport:
    return MetricReport(
        auroc=auroc(r),
        bedroc=bedroc(r, alpha),
        ef={float(p): enrichment_factor(r, p) for p in ef_percents},
    )


def evaluate_screen(
    query,
    database,
    labels,
    mode: str = "hamming",
    alpha: float = DEFAULT_ALPHA,
    ef_percents=DEFAULT_EF_PERCENTS,
    ids=None,
) -> MetricReport:
    """Rank the whole database for one query and score the ranking.

    mode "hamming": query is a BinaryCode, database a CodeDatabase or a
    sequence of BinaryCode; items score by negated Hamming distance.
    mode "cosine": query is a real vector, database a (C, F) real matrix.
    Both modes share ranking construction, so on sign codes and their ±1
    unpackings the two produce identical reports.
    """
    labels = np.asarray(labels, dtype=bool)
    if mode == "hamming":
        if isinstance(query, BinaryCode):
            qwords, n_bits = np.asarray(query.words), query.n_bits
        else:
            raise InvalidInputError("hamming mode needs a BinaryCode query")
        if hasattr(database, "words") and hasattr(database, "code_bits"):
            words, db_bits = database.words, database.code_bits
        else:
            items = list(database)
            if not items:
                raise InvalidInputError("empty database")
            db_bits = items[0].n_bits
            words = np.stack([np.asarray(c.words) for c in items])
        if db_bits != n_bits:
            raise ShapeError(f"query has {n_bits} bits, database stores {db_bits}")
        scores = -kernels.hamming_distances(words, qwords, n_bits)
    elif mode == "cosine":
        rows = np.atleast_2d(np.asarray(database, dtype=np.float64))
        query = np.asarray(query, dtype=np.float64).ravel()
        scores = np.array([cosine_similarity(row, query) for row in rows])
    else:
        raise InvalidInputError(f"mode must be hamming or cosine, got {mode!r}")
    if labels.shape[0] != scores.shape[0]:
        raise ShapeError(f"{labels.shape[0]} labels for {scores.shape[0]} database records")
    ranking = make_ranking(scores, labels, ids)
    return evaluate_ranking(ranking, alpha=alpha, ef_percents=ef_percents)


def ef_column_names(ef_percents=DEFAULT_EF_PERCENTS) -> list[str]:
    return [f"ef{float(p):g}" for p in ef_percents]


def write_report_csv(path: str, rows, ef_percents=DEFAULT_EF_PERCENTS) -> None:
    """Per-query CSV: one row per (query_id, MetricReport)."""
    columns = ["query_id", "auroc", "bedroc", *ef_column_names(ef_percents)]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(columns)
        for query_id, report in rows:
            writer.writerow(
                [query_id, repr(report.auroc), repr(report.bedroc)]
                + [repr(report.ef[float(p)]) for p in ef_percents]
            )


def summarize_reports(reports, ef_percents=DEFAULT_EF_PERCENTS) -> dict:
    """Mean of every metric across queries, JSON-ready."""
    reports = list(reports)
    if not reports:
        raise InvalidInputError("no reports to summarize")
    summary: dict = {"queries": len(reports)}
    summary["auroc_mean"] = float(np.mean([r.auroc for r in reports]))
    summary["bedroc_mean"] = float(np.mean([r.bedroc for r in reports]))
    for p in ef_percents:
        summary[f"ef{float(p):g}_mean"] = float(
            np.mean([r.ef[float(p)] for r in reports])
        )
    return summary


def write_summary_json(path: str, summary: dict) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
        fh.write("\n")
