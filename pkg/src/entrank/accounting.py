"""Model-size and compute bookkeeping for the comparison tables.

``parameter_count`` counts *trainable real coordinates*: a complex
array of shape ``(a, b)`` contributes ``2*a*b``, a frozen array (the
zero phases and imaginary parts of the real-restricted variant)
contributes nothing.

``pair_flops`` counts complex multiply-accumulate operations for
scoring one question/answer pair at given sentence lengths.  Per
sentence of ``T`` tokens it charges:

* ``2*dim`` per token to build the word state (normalization scale and
  phase attachment),
* per n-gram: ``sum_{k=2..n} dim**k`` for the chained tensor product,
  ``rows*cols + 2*rows`` per entangling layer (matrix application plus
  renormalization), and ``measurements * (dim**n + 1)`` for the bank
  projection probabilities,
* mixture variant: ``T * dim**2`` to accumulate the density matrix and
  ``measurements * (dim**2 + dim)`` to measure it.

Real-valued postprocessing (pooling, cosine) is excluded; the
real-restricted variant is charged at the same complex-op rate so
counts stay comparable across variants.
"""

from __future__ import annotations

from .model import ModelConfig


def parameter_count(config: ModelConfig, vocab_size: int) -> int:
    """Trainable real coordinates of a model with this configuration."""
    v, d, m = vocab_size, config.dim, config.measurements
    if config.variant == "me":
        return 2 * v * d + 2 * m * d
    per_coord = 1 if config.variant == "ee-real" else 2
    total = per_coord * v * d  # amplitudes, plus phases unless frozen
    if config.entangles:
        for n in config.gram_sizes:
            for rows, cols in config.layer_dims(n):
                total += per_coord * rows * cols
    for n in config.gram_sizes:
        total += per_coord * m * d**n
    return total


def sentence_flops(config: ModelConfig, num_tokens: int) -> int:
    """Complex multiply-accumulates to featurize one sentence."""
    t, d, m = num_tokens, config.dim, config.measurements
    total = t * 2 * d
    if config.variant == "me":
        return total + t * d * d + m * (d * d + d)
    for n in config.gram_sizes:
        span = d**n
        grams = max(t - n + 1, 1)
        per_gram = sum(d**k for k in range(2, n + 1))
        if config.entangles:
            per_gram += sum(
                rows * cols + 2 * rows for rows, cols in config.layer_dims(n)
            )
        per_gram += m * (span + 1)
        total += grams * per_gram
    return total


def pair_flops(
    config: ModelConfig, question_len: int = 20, answer_len: int = 20
) -> int:
    """Complex multiply-accumulates to score one question/answer pair."""
    return sentence_flops(config, question_len) + sentence_flops(
        config, answer_len
    )
