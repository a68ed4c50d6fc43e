"""Small bundled corpora for tests, demos, and smoke training.

Two families are shipped as TSV files next to this module:

``toy_*``
    A 10-question memorization task.  Every question asks what a
    creature eats; the four candidate answers differ only in the food
    word, so a model must learn the creature/food association.

``pairs_*``
    A correlation task where every answer uses the same sentence frame
    and each colour/tree word appears in positives and negatives alike;
    only the adjacent word pairing ("red oak", "blue fir", ...) versus
    a crossed combination ("red fir") separates correct from incorrect.
    It exists to probe whether a model can pick up joint word
    statistics that no bag-of-words summary exposes.

The generators are deterministic; ``regenerate()`` rewrites the bundled
files in place and is how they were produced.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from ..data import write_qa_tsv

FIXTURE_DIR = Path(__file__).parent

SUBJECTS = [
    "otters", "herons", "beavers", "foxes", "owls",
    "bears", "moles", "crows", "hares", "lynxes",
]
FOODS = [
    "crabs", "minnows", "bark", "voles", "mice",
    "berries", "grubs", "seeds", "clover", "grouse",
]

PAIR_LEFT = ("red", "blue", "green", "amber")
PAIR_RIGHT = ("oak", "fir", "elm", "ash")
PREFIXES = ("the", "a", "this", "that")
SUFFIXES = ("blend", "mix", "batch", "set")


def toy_path(split: str) -> Path:
    return FIXTURE_DIR / f"toy_{split}.tsv"


def pairs_path(split: str) -> Path:
    return FIXTURE_DIR / f"pairs_{split}.tsv"


def toy_rows() -> list[tuple[str, str, str, int]]:
    """10 questions x 4 candidates; one positive each, position rotating."""
    rows = []
    for i, subject in enumerate(SUBJECTS):
        question = f"what do {subject} eat ?"
        answers = [(f"{subject} eat {FOODS[i]} mostly .", 1)]
        for step in (1, 3, 6):
            answers.append(
                (f"{subject} eat {FOODS[(i + step) % len(FOODS)]} mostly .", 0)
            )
        # Rotate so the positive is not always the first candidate.
        shift = i % 4
        answers = answers[-shift:] + answers[:-shift]
        for answer, label in answers:
            rows.append((f"t{i:02d}", question, answer, label))
    return rows


def toy_test_rows() -> list[tuple[str, str, str, int]]:
    """Two held-out questions, one containing an out-of-vocabulary word."""
    rows = []
    for i in (0, 5):
        subject = SUBJECTS[i]
        question = f"what do {subject} eat ?"
        answers = [
            (f"{subject} eat {FOODS[(i + 3) % len(FOODS)]} mostly .", 0),
            (f"{subject} eat {FOODS[i]} mostly .", 1),
            (f"hungry {subject} eat {FOODS[(i + 6) % len(FOODS)]} mostly .", 0),
        ]
        for answer, label in answers:
            rows.append((f"tt{i:02d}", question, answer, label))
    return rows


def pair_rows(count: int, seed: int) -> list[tuple[str, str, str, int]]:
    """Correlation records: the matched pairing is positive, crossings negative.

    PAIR_LEFT[i] goes with PAIR_RIGHT[i].  Each question offers one
    matched candidate and three crossed ones, two of which reuse a word
    from the matched pair, so no single word identifies the positive.
    """
    rng = np.random.default_rng(seed)
    rows = []
    for q in range(count):
        prefix = PREFIXES[rng.integers(len(PREFIXES))]
        suffix = SUFFIXES[rng.integers(len(SUFFIXES))]
        question = f"which {suffix} holds together ?"
        i, j, k = rng.choice(len(PAIR_LEFT), size=3, replace=False)
        combos = [
            ((i, i), 1),  # matched
            ((i, j), 0),  # shares the positive's left word
            ((j, i), 0),  # shares the positive's right word
            ((j, k), 0),  # unrelated crossing
        ]
        for idx in rng.permutation(len(combos)):
            (left, right), label = combos[idx]
            answer = f"{prefix} {PAIR_LEFT[left]} {PAIR_RIGHT[right]} {suffix} ."
            rows.append((f"p{q:03d}", question, answer, label))
    return rows


def regenerate(directory=None) -> None:
    """Rewrite the bundled fixture files (deterministic)."""
    directory = Path(directory) if directory is not None else FIXTURE_DIR
    write_qa_tsv(directory / "toy_train.tsv", toy_rows())
    write_qa_tsv(directory / "toy_dev.tsv", toy_rows())
    write_qa_tsv(directory / "toy_test.tsv", toy_test_rows())
    write_qa_tsv(directory / "pairs_train.tsv", pair_rows(24, seed=7))
    write_qa_tsv(directory / "pairs_dev.tsv", pair_rows(12, seed=1007))
