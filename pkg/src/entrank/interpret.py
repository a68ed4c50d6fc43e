"""Inspection of trained models via entanglement and state overlap.

The entanglement entropy of an n-gram state (across the bipartition
"first word vs rest" for bigrams, "first two words vs last" for
trigrams) quantifies how far the learned state is from a bare product
of word states: 0 for separable grams, up to ``ln(dim)`` for maximally
entangled ones.  Ranking a corpus's grams by this quantity surfaces the
collocations the model treats as units.  Fidelity (squared state
overlap) provides the matching notion of nearest neighbors.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

from . import model as _model
from . import quantum
from .data import QACorpus, QARecord, extract_ngrams


@dataclass(frozen=True)
class EntropyEntry:
    tokens: tuple[str, ...]
    entropy: float
    count: int


@dataclass(frozen=True)
class NeighborEntry:
    tokens: tuple[str, ...]
    fidelity: float


def default_split(n: int, dim: int) -> quantum.SchmidtSplit:
    """Bipartition used for n-gram entropies (leading words vs last)."""
    if n == 2:
        return quantum.SchmidtSplit(dim, dim)
    if n == 3:
        return quantum.SchmidtSplit(dim * dim, dim)
    raise ValueError(f"entanglement entropy needs n in (2, 3), got {n}")


def gram_entropy(params: _model.ModelParams, gram_ids) -> float:
    """Entanglement entropy of the model's state for one n-gram."""
    n = len(gram_ids)
    split = default_split(n, params.config.dim)
    state = quantum.pure_state(_model.gram_state(params, tuple(gram_ids)))
    return quantum.entanglement_entropy(state, split)


def _collect_grams(records, n: int, section: str) -> dict[tuple[int, ...], int]:
    if section not in ("questions", "answers", "both"):
        raise ValueError(
            f"section must be 'questions', 'answers' or 'both', got {section!r}"
        )
    counts: dict[tuple[int, ...], int] = {}
    for rec in records:
        sentences = []
        if section in ("questions", "both"):
            sentences.append(rec.question)
        if section in ("answers", "both"):
            sentences.extend(c.token_ids for c in rec.candidates)
        for ids in sentences:
            for gram in extract_ngrams(ids, n):
                counts[gram] = counts.get(gram, 0) + 1
    return counts


def rank_grams_by_entropy(
    params: _model.ModelParams,
    corpus: QACorpus,
    n: int = 2,
    split: str = "train",
    section: str = "answers",
    top: int = 20,
    bottom: int = 20,
) -> tuple[list[EntropyEntry], list[EntropyEntry]]:
    """Most- and least-entangled n-grams of a corpus split.

    Returns ``(top, bottom)``: ``top`` sorted by descending entropy,
    ``bottom`` by ascending.  Ties break on the gram's token ids so the
    ordering is fully deterministic.
    """
    if params.config.variant == "me":
        raise ValueError("the sentence-mixture variant has no n-gram states")
    records = corpus.splits[split]
    entries = [
        EntropyEntry(
            tokens=tuple(corpus.decode(gram)),
            entropy=gram_entropy(params, gram),
            count=count,
        )
        for gram, count in _collect_grams(records, n, section).items()
    ]
    entries.sort(key=lambda e: (-e.entropy, e.tokens))
    return entries[:top], list(reversed(entries[-bottom:])) if bottom else []


def sentence_entropy_profile(
    params: _model.ModelParams, token_ids, n: int = 2
) -> list[float]:
    """Entropy of each consecutive n-gram of one sentence, in order."""
    return [
        gram_entropy(params, gram) for gram in extract_ngrams(token_ids, n)
    ]


def _state_of(params, ids) -> quantum.PureState:
    ids = tuple(ids)
    if len(ids) == 1:
        vec = _model.word_state(params, ids[0])
    else:
        if params.config.variant == "me":
            raise ValueError(
                "the sentence-mixture variant has no n-gram states"
            )
        vec = _model.gram_state(params, ids)
    return quantum.pure_state(vec)


def nearest_by_fidelity(
    params: _model.ModelParams,
    query_ids,
    candidate_ids: list,
    id_to_token: list[str],
    k: int = 10,
) -> list[NeighborEntry]:
    """Candidates closest to the query in squared state overlap.

    Single-id queries compare raw word states; longer queries compare
    the full gram states (including entangling layers when present).
    Candidates identical to the query are skipped; duplicates keep
    their first occurrence.  Ties preserve candidate order.
    """
    query = tuple(query_ids)
    query_state = _state_of(params, query)
    seen = {query}
    entries = []
    for cand in candidate_ids:
        cand = tuple(cand)
        if cand in seen:
            continue
        seen.add(cand)
        if len(cand) != len(query):
            raise ValueError(
                f"candidate {cand} has length {len(cand)}, query has "
                f"{len(query)}"
            )
        entries.append(
            NeighborEntry(
                tokens=tuple(id_to_token[i] for i in cand),
                fidelity=quantum.fidelity(query_state, _state_of(params, cand)),
            )
        )
    entries.sort(key=lambda e: -e.fidelity)
    return entries[:k]


def write_entropy_csv(path, entries: list[EntropyEntry]) -> None:
    with open(Path(path), "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["tokens", "entropy", "count"])
        for e in entries:
            writer.writerow([" ".join(e.tokens), f"{e.entropy:.6f}", e.count])


def write_profile_csv(path, grams: list[tuple[str, ...]], values: list[float]) -> None:
    with open(Path(path), "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["tokens", "entropy"])
        for tokens, value in zip(grams, values):
            writer.writerow([" ".join(tokens), f"{value:.6f}"])


def write_neighbors_csv(path, entries: list[NeighborEntry]) -> None:
    with open(Path(path), "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["tokens", "fidelity"])
        for e in entries:
            writer.writerow([" ".join(e.tokens), f"{e.fidelity:.6f}"])
