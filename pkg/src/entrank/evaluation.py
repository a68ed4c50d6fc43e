"""Ranking metrics: average precision, reciprocal rank, MAP/MRR.

Candidates are ranked by descending score with stable tie-breaking
(candidates keep their input order when scores are equal).  Questions
without a single positive candidate are excluded from the averages, as
is conventional for answer-selection benchmarks.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import model as _model


class NoPositivesError(ValueError):
    """No question in the split has a positive candidate."""


def rank_candidates(scores) -> list[int]:
    """Indices of candidates sorted by descending score, stable on ties."""
    arr = np.asarray(scores, dtype=np.float64)
    if arr.ndim != 1:
        raise ValueError("scores must be a 1-d sequence")
    return list(np.argsort(-arr, kind="stable"))


def average_precision(ranked_labels) -> float:
    """AP of a ranked 0/1 label sequence (needs at least one positive)."""
    labels = list(ranked_labels)
    total = sum(labels)
    if total == 0:
        raise NoPositivesError("average precision needs a positive label")
    hits = 0
    ap = 0.0
    for rank, label in enumerate(labels, start=1):
        if label:
            hits += 1
            ap += hits / rank
    return ap / total


def reciprocal_rank(ranked_labels) -> float:
    """1 / rank of the first positive label."""
    for rank, label in enumerate(ranked_labels, start=1):
        if label:
            return 1.0 / rank
    raise NoPositivesError("reciprocal rank needs a positive label")


@dataclass(frozen=True)
class QuestionResult:
    qid: str
    average_precision: float
    reciprocal_rank: float
    ranking: tuple[int, ...]


@dataclass(frozen=True)
class EvalResult:
    mean_average_precision: float
    mean_reciprocal_rank: float
    per_question: tuple[QuestionResult, ...]
    num_skipped: int


def evaluate(params, records) -> EvalResult:
    """Score every candidate of every record and aggregate MAP/MRR.

    Records without positive candidates are skipped (and counted in
    ``num_skipped``); if nothing remains, :class:`NoPositivesError` is
    raised.
    """
    results = []
    skipped = 0
    for rec in records:
        if rec.num_positive == 0:
            skipped += 1
            continue
        scores = [
            _model.score_pair(params, rec.question, cand.token_ids)
            for cand in rec.candidates
        ]
        order = rank_candidates(scores)
        ranked_labels = [rec.candidates[i].label for i in order]
        results.append(
            QuestionResult(
                qid=rec.qid,
                average_precision=average_precision(ranked_labels),
                reciprocal_rank=reciprocal_rank(ranked_labels),
                ranking=tuple(order),
            )
        )
    if not results:
        raise NoPositivesError(
            "no question with a positive candidate to evaluate"
        )
    return EvalResult(
        mean_average_precision=float(
            np.mean([r.average_precision for r in results])
        ),
        mean_reciprocal_rank=float(
            np.mean([r.reciprocal_rank for r in results])
        ),
        per_question=tuple(results),
        num_skipped=skipped,
    )
