"""Answer-ranking models built from complex word states.

Pipeline
--------
Each vocabulary entry owns a trainable amplitude row and phase row.  A
word's state is the L2-normalized amplitude row with phases attached:
``state_j = r_j * exp(1j * phi_j)``.  Consecutive n-grams become product
states via the tensor product; the ``ee`` variants then pass the product
state through one or more complex linear layers, renormalizing after
each, so the resulting state can carry correlations a bare product
cannot.  A bank of unit measurement vectors turns a state into a row of
projection probabilities ``p_i = |<m_i|state>|^2``; rows for all n-grams
in a sentence form the sentence's feature matrix.  Max-pooling over the
n-gram axis and concatenating across n-gram sizes yields one feature
vector per sentence, and a question/answer pair is scored by the cosine
similarity of the two vectors.

Variants
--------
``ee``
    Full model: product states are entangled by complex linear layers.
``se``
    Entangling layers skipped; the bank measures raw product states.
``me``
    Sentence-level mixture: the uniform mixture of the word states is
    measured directly (one feature row per sentence, no n-grams).
``ee-real``
    Like ``ee`` but confined to real arithmetic: phases are frozen at
    zero and every imaginary part stays structurally zero.

All forward functions accept parameter containers whose leaves are
either plain arrays or tape nodes, so the same code serves inference
and gradient training.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .data import PAD_ID, extract_ngrams
from .linalg import EPS_NORM

VARIANTS = ("ee", "se", "me", "ee-real")

#: Hinge margin used by the pairwise ranking loss.
RANK_MARGIN = 0.1


class ZeroFeatureError(ValueError):
    """A sentence produced an all-zero feature vector (cosine undefined)."""


@dataclass(frozen=True)
class ModelConfig:
    """Architecture hyperparameters.

    Parameters
    ----------
    dim:
        Dimension of a single word state.
    measurements:
        Number of measurement vectors per bank.
    gram_sizes:
        Which n-gram pipelines to run (subset of {1, 2, 3}); ignored by
        the sentence-level ``me`` variant.
    variant:
        One of ``ee``, ``se``, ``me``, ``ee-real``.
    ee_hidden:
        Widths of intermediate entangling layers.  Empty means a single
        layer mapping the product space to itself; ``(128,)`` inserts
        one hidden layer of width 128.
    """

    dim: int = 8
    measurements: int = 16
    gram_sizes: tuple[int, ...] = (2,)
    variant: str = "ee"
    ee_hidden: tuple[int, ...] = ()

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValueError(
                f"unknown variant {self.variant!r}; expected one of {VARIANTS}"
            )
        if self.dim < 2:
            raise ValueError("dim must be at least 2")
        if self.measurements < 1:
            raise ValueError("measurements must be positive")
        grams = tuple(sorted(set(int(n) for n in self.gram_sizes)))
        if not grams or any(n not in (1, 2, 3) for n in grams):
            raise ValueError(
                f"gram_sizes must be a non-empty subset of {{1, 2, 3}}, "
                f"got {self.gram_sizes!r}"
            )
        object.__setattr__(self, "gram_sizes", grams)
        hidden = tuple(int(h) for h in self.ee_hidden)
        if any(h < 1 for h in hidden):
            raise ValueError("ee_hidden widths must be positive")
        if hidden and self.variant not in ("ee", "ee-real"):
            raise ValueError(
                f"variant {self.variant!r} has no entangling layers"
            )
        object.__setattr__(self, "ee_hidden", hidden)

    @property
    def entangles(self) -> bool:
        return self.variant in ("ee", "ee-real")

    def layer_dims(self, n: int) -> list[tuple[int, int]]:
        """(rows, cols) of each entangling matrix for gram size ``n``."""
        d = self.dim**n
        chain = [d, *self.ee_hidden, d]
        return [(chain[i + 1], chain[i]) for i in range(len(chain) - 1)]

    def to_dict(self) -> dict:
        return {
            "dim": self.dim,
            "measurements": self.measurements,
            "gram_sizes": list(self.gram_sizes),
            "variant": self.variant,
            "ee_hidden": list(self.ee_hidden),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        return cls(
            dim=int(d["dim"]),
            measurements=int(d["measurements"]),
            gram_sizes=tuple(d["gram_sizes"]),
            variant=str(d["variant"]),
            ee_hidden=tuple(d.get("ee_hidden", ())),
        )


@dataclass
class ModelParams:
    """Trainable arrays for one model.

    ``entanglers`` maps gram size to the list of complex layer matrices
    (empty dict for variants without entangling layers).  ``banks`` maps
    gram size to its ``(measurements, dim**n)`` complex bank; the ``me``
    variant keeps a single word-level bank under key 1.
    """

    config: ModelConfig
    amplitudes: np.ndarray
    phases: np.ndarray
    entanglers: dict[int, list[np.ndarray]] = field(default_factory=dict)
    banks: dict[int, np.ndarray] = field(default_factory=dict)

    @property
    def vocab_size(self) -> int:
        return self.amplitudes.shape[0]

    def copy(self) -> "ModelParams":
        return ModelParams(
            config=self.config,
            amplitudes=self.amplitudes.copy(),
            phases=self.phases.copy(),
            entanglers={
                n: [w.copy() for w in ws] for n, ws in self.entanglers.items()
            },
            banks={n: b.copy() for n, b in self.banks.items()},
        )


def named_arrays(params: ModelParams) -> dict[str, np.ndarray]:
    """Stable name -> array view of every trainable tensor.

    The same naming is used by optimizer state and checkpoints:
    ``amplitudes``, ``phases``, ``entangler.<n>.<layer>``, ``bank.<n>``.
    """
    out: dict[str, np.ndarray] = {
        "amplitudes": params.amplitudes,
        "phases": params.phases,
    }
    for n in sorted(params.entanglers):
        for i, w in enumerate(params.entanglers[n]):
            out[f"entangler.{n}.{i}"] = w
    for n in sorted(params.banks):
        out[f"bank.{n}"] = params.banks[n]
    return out


@dataclass
class TracedParams:
    """Mirror of :class:`ModelParams` whose leaves are tape nodes."""

    config: ModelConfig
    amplitudes: ad.Node
    phases: ad.Node | np.ndarray
    entanglers: dict[int, list[ad.Node]]
    banks: dict[int, ad.Node]


def trace_params(tape: ad.Tape, params: ModelParams) -> TracedParams:
    """Register every trainable array of ``params`` on ``tape``.

    For the ``ee-real`` variant the phase table is intentionally left
    untracked: phases are frozen at zero, so no gradient should reach
    them.
    """
    real_only = params.config.variant == "ee-real"
    return TracedParams(
        config=params.config,
        amplitudes=tape.param(params.amplitudes),
        phases=params.phases if real_only else tape.param(params.phases),
        entanglers={
            n: [tape.param(w) for w in ws]
            for n, ws in params.entanglers.items()
        },
        banks={n: tape.param(b) for n, b in params.banks.items()},
    )


def _raw(x) -> np.ndarray:
    return x.value if isinstance(x, ad.Node) else x


def word_state(params, token_id: int):
    """Unit complex state for one vocabulary id."""
    amps = ad.take_row(params.amplitudes, token_id)
    unit = ad.l2_normalize(amps)
    phases = ad.take_row(params.phases, token_id)
    return ad.polar(unit, phases)


def gram_state(params, token_ids):
    """State for an n-gram: product of word states, entangled when the
    variant has entangling layers."""
    states = [word_state(params, t) for t in token_ids]
    psi = states[0]
    for s in states[1:]:
        psi = ad.kron(psi, s)
    if params.config.entangles:
        for w in params.entanglers[len(token_ids)]:
            psi = ad.l2_normalize(ad.matvec(w, psi))
    return psi


def _bank_probabilities(bank_conj, state):
    return ad.abs2(ad.matvec(bank_conj, state))


def _mixture_features(params, token_ids):
    """Measurement probabilities of the uniform word-state mixture."""
    ids = list(token_ids) or [PAD_ID]
    bank = params.banks[1]
    if isinstance(params.amplitudes, ad.Node):
        bank_conj = ad.conjugate(bank)
        rows = [
            _bank_probabilities(bank_conj, word_state(params, t)) for t in ids
        ]
        return ad.scale(ad.nsum(rows), 1.0 / len(ids))
    # Inference path: build the density matrix explicitly and measure it.
    from . import quantum

    states = [quantum.PureState(word_state(params, t)) for t in ids]
    rho = quantum.mixed_state(states)
    return quantum.measure_density_bank(rho, _raw(bank))


def sentence_features(params, token_ids, n: int) -> np.ndarray:
    """Feature matrix of a sentence for gram size ``n``.

    Returns one row of measurement probabilities per n-gram (a single
    mixture row for the ``me`` variant).  On the inference path entries
    are clipped to ``[0, 1]``; the traced path leaves the raw values so
    gradients are not flattened at the boundary.
    """
    if params.config.variant == "me":
        row = _mixture_features(params, token_ids)
        fm = ad.stack_rows([row])
    else:
        if n not in params.config.gram_sizes:
            raise ValueError(
                f"model has no gram-size-{n} pipeline "
                f"(configured: {params.config.gram_sizes})"
            )
        bank_conj = ad.conjugate(params.banks[n])
        rows = [
            _bank_probabilities(bank_conj, gram_state(params, gram))
            for gram in extract_ngrams(token_ids, n)
        ]
        fm = ad.stack_rows(rows)
    if isinstance(fm, ad.Node):
        return fm
    return np.clip(fm, 0.0, 1.0)


def pool(feature_matrix):
    """Collapse a feature matrix to one vector: max over the n-gram axis."""
    return ad.max_over_rows(feature_matrix)


def pooled_features(params, token_ids):
    """One feature vector per sentence (pooled, concatenated over sizes)."""
    if params.config.variant == "me":
        row = _mixture_features(params, token_ids)
        return row
    parts = [
        pool(sentence_features(params, token_ids, n))
        for n in params.config.gram_sizes
    ]
    return parts[0] if len(parts) == 1 else ad.concat(parts)


def cosine_similarity(u, v):
    """Cosine of two feature vectors; raises on an all-zero vector."""
    for vec, side in ((u, "left"), (v, "right")):
        if np.linalg.norm(_raw(vec)) <= EPS_NORM:
            raise ZeroFeatureError(
                f"{side} feature vector is numerically zero"
            )
    num = ad.rdot(u, v)
    nu = ad.sqrt(ad.rdot(u, u))
    nv = ad.sqrt(ad.rdot(v, v))
    return ad.divide(num, ad.mul(nu, nv))


def match_score(params, question_ids, answer_ids):
    """Cosine similarity between question and answer feature vectors."""
    qf = pooled_features(params, question_ids)
    af = pooled_features(params, answer_ids)
    return cosine_similarity(qf, af)


def score_pair(params: ModelParams, question_ids, answer_ids) -> float:
    """Inference-path score of one question/answer pair."""
    return float(_raw(match_score(params, question_ids, answer_ids)))


def hinge_loss(positive_score, negative_score, margin: float = RANK_MARGIN):
    """Pairwise ranking hinge ``max(0, margin - pos + neg)``."""
    gap = ad.sub(negative_score, positive_score)
    return ad.relu(ad.add(gap, np.asarray(float(margin))))


def triplet_loss(params, question_ids, positive_ids, negative_ids):
    """Hinge loss of one (question, positive, negative) triplet.

    The question's features are computed once and shared by both sides.
    """
    qf = pooled_features(params, question_ids)
    pos = cosine_similarity(qf, pooled_features(params, positive_ids))
    neg = cosine_similarity(qf, pooled_features(params, negative_ids))
    return hinge_loss(pos, neg)
