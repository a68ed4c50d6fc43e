"""Corpus loading, tokenization, and ranking-pair sampling.

Corpus files are tab-separated with a mandatory header row and columns
``question_id<TAB>question<TAB>answer<TAB>label`` (label 0 or 1).  Rows
sharing a question id form one ranking problem; candidate order within
a question is preserved exactly as read.

Tokenization is deliberately simple and fully deterministic: lowercase,
split on whitespace, then peel trailing punctuation characters off each
token as separate tokens (``"cats."`` -> ``"cats"``, ``"."``).  The
vocabulary is built from the training split only, ordered by descending
frequency (ties alphabetical), with two reserved entries: padding at id
0 and the unknown token at id 1.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass
from pathlib import Path

import numpy as np

PAD_TOKEN = "<pad>"
UNK_TOKEN = "<unk>"
PAD_ID = 0
UNK_ID = 1

_TRAILING_PUNCT = frozenset(".,;:!?\"')")


class CorpusFormatError(ValueError):
    """A corpus file does not match the expected format."""


class SamplingError(ValueError):
    """Training pairs cannot be formed from the given records."""


def tokenize(text: str) -> list[str]:
    """Split ``text`` into lowercase tokens, peeling trailing punctuation."""
    tokens: list[str] = []
    for raw in text.lower().split():
        peeled: list[str] = []
        while len(raw) > 1 and raw[-1] in _TRAILING_PUNCT:
            peeled.append(raw[-1])
            raw = raw[:-1]
        tokens.append(raw)
        tokens.extend(reversed(peeled))
    return tokens


def build_vocab(token_lists) -> tuple[dict[str, int], list[str]]:
    """Frequency-ordered vocabulary over an iterable of token lists."""
    counts: Counter[str] = Counter()
    for tokens in token_lists:
        counts.update(tokens)
    id_to_token = [PAD_TOKEN, UNK_TOKEN]
    id_to_token.extend(
        tok for tok, _ in sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))
    )
    vocab = {tok: i for i, tok in enumerate(id_to_token)}
    return vocab, id_to_token


def encode(tokens: list[str], vocab: dict[str, int]) -> tuple[int, ...]:
    """Map tokens to ids, falling back to the unknown id."""
    return tuple(vocab.get(t, UNK_ID) for t in tokens)


def extract_ngrams(token_ids, n: int, pad_id: int = PAD_ID) -> list[tuple[int, ...]]:
    """All consecutive n-grams of a sentence.

    Sentences shorter than ``n`` are right-padded with ``pad_id`` so
    that every sentence yields at least one n-gram.
    """
    if n < 1:
        raise ValueError("n must be positive")
    ids = list(token_ids)
    if len(ids) < n:
        ids = ids + [pad_id] * (n - len(ids))
    return [tuple(ids[i : i + n]) for i in range(len(ids) - n + 1)]


@dataclass(frozen=True)
class Candidate:
    token_ids: tuple[int, ...]
    label: int


@dataclass(frozen=True)
class QARecord:
    """One ranking problem: a question and its ordered candidates."""

    qid: str
    question: tuple[int, ...]
    candidates: tuple[Candidate, ...]

    @property
    def num_positive(self) -> int:
        return sum(c.label for c in self.candidates)


@dataclass
class QACorpus:
    vocab: dict[str, int]
    id_to_token: list[str]
    train: tuple[QARecord, ...]
    dev: tuple[QARecord, ...] = ()
    test: tuple[QARecord, ...] = ()

    def decode(self, token_ids) -> list[str]:
        return [self.id_to_token[i] for i in token_ids]

    @property
    def splits(self) -> dict[str, tuple[QARecord, ...]]:
        return {"train": self.train, "dev": self.dev, "test": self.test}


def _read_tsv(path) -> list[tuple[str, str, str, int]]:
    rows: list[tuple[str, str, str, int]] = []
    saw_header = False
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line.strip():
                continue
            fields = line.split("\t")
            if len(fields) != 4:
                raise CorpusFormatError(
                    f"{path}:{lineno}: expected 4 tab-separated fields, "
                    f"got {len(fields)}"
                )
            if not saw_header:
                if fields[3].strip() in ("0", "1"):
                    raise CorpusFormatError(
                        f"{path}:1: first line looks like data; corpus "
                        f"files must start with a header row"
                    )
                saw_header = True
                continue
            label_text = fields[3].strip()
            if label_text not in ("0", "1"):
                raise CorpusFormatError(
                    f"{path}:{lineno}: label must be 0 or 1, got "
                    f"{fields[3]!r}"
                )
            rows.append((fields[0].strip(), fields[1], fields[2], int(label_text)))
    if not rows:
        raise CorpusFormatError(f"{path}: no data rows found")
    return rows


def _group_records(
    rows: list[tuple[str, str, str, int]], vocab: dict[str, int]
) -> tuple[QARecord, ...]:
    by_qid: dict[str, list[tuple[str, str, int]]] = {}
    for qid, question, answer, label in rows:
        by_qid.setdefault(qid, []).append((question, answer, label))
    records = []
    for qid, group in by_qid.items():
        question_ids = encode(tokenize(group[0][0]), vocab)
        candidates = tuple(
            Candidate(encode(tokenize(answer), vocab), label)
            for _, answer, label in group
        )
        records.append(QARecord(qid, question_ids, candidates))
    return tuple(records)


def load_split(path, vocab: dict[str, int]) -> tuple[QARecord, ...]:
    """Load one TSV split, encoding against an existing vocabulary."""
    return _group_records(_read_tsv(path), vocab)


def load_corpus(
    train_path,
    dev_path=None,
    test_path=None,
    fmt: str = "tsv",
) -> QACorpus:
    """Load a corpus; the vocabulary comes from the train split only."""
    if fmt != "tsv":
        raise CorpusFormatError(f"unsupported corpus format {fmt!r}")
    train_rows = _read_tsv(train_path)
    vocab, id_to_token = build_vocab(
        tokenize(text)
        for _, question, answer, _ in train_rows
        for text in (question, answer)
    )
    return QACorpus(
        vocab=vocab,
        id_to_token=id_to_token,
        train=_group_records(train_rows, vocab),
        dev=load_split(dev_path, vocab) if dev_path else (),
        test=load_split(test_path, vocab) if test_path else (),
    )


def write_qa_tsv(path, rows) -> None:
    """Write ``(qid, question, answer, label)`` rows with the header."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("question_id\tquestion\tanswer\tlabel\n")
        for qid, question, answer, label in rows:
            fh.write(f"{qid}\t{question}\t{answer}\t{label}\n")


@dataclass(frozen=True)
class Triplet:
    """A (question, positive answer, negative answer) training example."""

    qid: str
    question: tuple[int, ...]
    positive: tuple[int, ...]
    negative: tuple[int, ...]


def sample_triplets(
    records, rng: np.random.Generator, count: int | None = None
) -> list[Triplet]:
    """Sample ranking triplets from a split.

    Positives are enumerated in shuffled order (cycling if ``count``
    exceeds the number of positive pairs); each is matched with a
    negative answer drawn uniformly from the split's entire pool of
    negative candidates.
    """
    positives = [
        (rec.qid, rec.question, cand.token_ids)
        for rec in records
        for cand in rec.candidates
        if cand.label == 1
    ]
    negatives = [
        cand.token_ids
        for rec in records
        for cand in rec.candidates
        if cand.label == 0
    ]
    if not positives:
        raise SamplingError("split has no positive question/answer pairs")
    if not negatives:
        raise SamplingError("split has no negative candidates to sample")
    if count is None:
        count = len(positives)
    order = np.concatenate(
        [
            rng.permutation(len(positives))
            for _ in range(-(-count // len(positives)))
        ]
    )[:count]
    neg_idx = rng.integers(len(negatives), size=count)
    return [
        Triplet(*positives[i], negatives[j]) for i, j in zip(order, neg_idx)
    ]
