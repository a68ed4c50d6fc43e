"""Parameter initialization and the pairwise-ranking training loop.

Training minimizes the hinge loss over (question, positive, negative)
triplets with plain SGD (or AdaGrad) on the real coordinates of every
trainable array.  Measurement-bank rows are re-normalized to unit norm
after each update so they remain valid measurement directions; rows
whose update was exactly zero are left untouched, making a zero-gradient
step a bitwise no-op.

Epoch semantics: one pass over the split's positive pairs in shuffled
order, each paired with a uniformly drawn negative from the split-wide
negative pool, resampled every epoch from a deterministic per-epoch
stream.  After each epoch the model is evaluated on the dev split (or
the train split when no dev data was given) and the best-MAP parameters
are retained; training stops early once the metric has not improved for
more than ``patience`` consecutive epochs.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import autodiff as ad
from . import evaluation
from .checkpoint import save_checkpoint
from .data import QACorpus, Triplet, sample_triplets
from .linalg import DegenerateStateError
from .model import ModelConfig, ModelParams, named_arrays, trace_params, triplet_loss

ADAGRAD_EPS = 1e-10


class TrainingDivergedError(RuntimeError):
    """The loss became non-finite during training."""


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 0.1
    batch_size: int = 32
    max_epochs: int = 50
    patience: int = 10
    optimizer: str = "sgd"
    seed: int = 0

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if self.batch_size < 1 or self.max_epochs < 1:
            raise ValueError("batch_size and max_epochs must be positive")
        if self.patience < 0:
            raise ValueError("patience must be non-negative")
        if self.optimizer not in ("sgd", "adagrad"):
            raise ValueError(
                f"optimizer must be 'sgd' or 'adagrad', got {self.optimizer!r}"
            )

    def to_dict(self) -> dict:
        return {
            "learning_rate": self.learning_rate,
            "batch_size": self.batch_size,
            "max_epochs": self.max_epochs,
            "patience": self.patience,
            "optimizer": self.optimizer,
            "seed": self.seed,
        }


def _complex_normal(rng: np.random.Generator, shape) -> np.ndarray:
    return rng.standard_normal(shape) + 1j * rng.standard_normal(shape)


def orthonormal_rows(
    rng: np.random.Generator, count: int, dim: int, real: bool = False
) -> np.ndarray:
    """``count`` unit rows of dimension ``dim``, orthogonal in blocks.

    Rows are drawn as columns of Haar-random unitaries (orthogonal
    matrices in the real case), one fresh matrix per block of ``dim``
    rows, so any ``dim`` consecutive rows are mutually orthogonal.
    """
    blocks = []
    produced = 0
    while produced < count:
        a = rng.standard_normal((dim, dim))
        if not real:
            a = a + 1j * rng.standard_normal((dim, dim))
        q, r = np.linalg.qr(a)
        d = np.diagonal(r)
        phase = np.where(np.abs(d) > 0, d / np.abs(np.where(d == 0, 1, d)), 1.0)
        q = q * phase[np.newaxis, :]
        blocks.append(q.T)
        produced += dim
    rows = np.vstack(blocks)[:count]
    return np.ascontiguousarray(rows, dtype=np.complex128)


def init_params(config: ModelConfig, vocab_size: int, seed: int = 0) -> ModelParams:
    """Fresh parameters: standard-normal embeddings and entangling
    layers, blockwise-orthonormal measurement banks."""
    if vocab_size < 2:
        raise ValueError("vocab_size must cover the reserved pad/unk ids")
    rng = np.random.default_rng(seed)
    real_only = config.variant == "ee-real"
    amplitudes = rng.standard_normal((vocab_size, config.dim))
    phases = (
        np.zeros((vocab_size, config.dim))
        if real_only
        else rng.standard_normal((vocab_size, config.dim))
    )
    entanglers: dict[int, list[np.ndarray]] = {}
    if config.entangles:
        for n in config.gram_sizes:
            layers = []
            for rows, cols in config.layer_dims(n):
                if real_only:
                    layers.append(
                        rng.standard_normal((rows, cols)).astype(np.complex128)
                    )
                else:
                    layers.append(_complex_normal(rng, (rows, cols)))
            entanglers[n] = layers
    if config.variant == "me":
        banks = {1: orthonormal_rows(rng, config.measurements, config.dim)}
    else:
        banks = {
            n: orthonormal_rows(
                rng, config.measurements, config.dim**n, real=real_only
            )
            for n in config.gram_sizes
        }
    return ModelParams(
        config=config,
        amplitudes=amplitudes,
        phases=phases,
        entanglers=entanglers,
        banks=banks,
    )


@dataclass
class OptimizerState:
    kind: str
    accumulators: dict[str, np.ndarray] = field(default_factory=dict)


def make_optimizer(train_config: TrainConfig, params: ModelParams) -> OptimizerState:
    state = OptimizerState(kind=train_config.optimizer)
    if train_config.optimizer == "adagrad":
        for name, arr in named_arrays(params).items():
            state.accumulators[name] = np.zeros_like(_real_view(arr))
    return state


def _real_view(arr: np.ndarray) -> np.ndarray:
    """Float view of an array's real coordinates (re/im interleaved)."""
    if np.issubdtype(arr.dtype, np.complexfloating):
        return arr.view(np.float64)
    return arr


def _node_names(traced) -> dict:
    names = {traced.amplitudes: "amplitudes"}
    if isinstance(traced.phases, ad.Node):
        names[traced.phases] = "phases"
    for n, layers in traced.entanglers.items():
        for i, w in enumerate(layers):
            names[w] = f"entangler.{n}.{i}"
    for n, b in traced.banks.items():
        names[b] = f"bank.{n}"
    return names


def _renormalize_rows(bank: np.ndarray, touched: np.ndarray) -> None:
    if not touched.any():
        return
    norms = np.linalg.norm(bank[touched], axis=1, keepdims=True)
    if np.any(norms <= 1e-300):
        raise DegenerateStateError("a measurement vector collapsed to zero")
    bank[touched] /= norms


def apply_gradients(
    params: ModelParams,
    grads: dict[str, np.ndarray],
    opt_state: OptimizerState,
    learning_rate: float,
) -> None:
    """In-place optimizer update over the real coordinates."""
    real_only = params.config.variant == "ee-real"
    for name, arr in named_arrays(params).items():
        g = grads.get(name)
        if g is None:
            continue
        if real_only and np.issubdtype(g.dtype, np.complexfloating):
            # Confine the step to the real subspace of the variant.
            g = g.real.astype(np.complex128)
        gv = _real_view(np.ascontiguousarray(g))
        if opt_state.kind == "adagrad":
            acc = opt_state.accumulators[name]
            acc += gv * gv
            step = learning_rate * gv / (np.sqrt(acc) + ADAGRAD_EPS)
        else:
            step = learning_rate * gv
        _real_view(arr)[...] -= step
        if name.startswith("bank."):
            touched = np.any(
                step.reshape(arr.shape[0], -1) != 0.0, axis=1
            )
            _renormalize_rows(arr, touched)


def train_step(
    params: ModelParams,
    batch: list[Triplet],
    train_config: TrainConfig,
    opt_state: OptimizerState,
) -> float:
    """One traced forward/backward pass and optimizer update.

    Returns the batch's mean hinge loss (value before the update).
    """
    if not batch:
        raise ValueError("batch must contain at least one triplet")
    tape = ad.Tape()
    traced = trace_params(tape, params)
    losses = [
        triplet_loss(traced, t.question, t.positive, t.negative) for t in batch
    ]
    mean = ad.divide(ad.nsum(losses), np.asarray(float(len(batch))))
    loss_value = float(mean.value)
    if not np.isfinite(loss_value):
        bad = [
            t.qid
            for t, node in zip(batch, losses)
            if not np.isfinite(float(node.value))
        ]
        raise TrainingDivergedError(
            f"non-finite loss (questions: {', '.join(bad) or 'unknown'})"
        )
    node_grads = tape.backward(mean)
    names = _node_names(traced)
    grads = {names[node]: g for node, g in node_grads.items()}
    apply_gradients(params, grads, opt_state, train_config.learning_rate)
    return loss_value


@dataclass
class FitResult:
    params: ModelParams
    best_epoch: int
    best_metric: float
    history: list[dict]
    checkpoint_path: Path | None = None


def fit(
    corpus: QACorpus,
    model_config: ModelConfig,
    train_config: TrainConfig,
    out_dir=None,
    log=None,
) -> FitResult:
    """Train a fresh model on ``corpus.train``; keep the best-MAP epoch.

    When ``out_dir`` is given, an append-only ``training_log.jsonl`` and
    the best checkpoint (``checkpoint.bin``) are written there.  ``log``
    is an optional callable receiving one progress line per epoch.
    """
    params = init_params(model_config, len(corpus.vocab), train_config.seed)
    opt_state = make_optimizer(train_config, params)
    monitor = corpus.dev if corpus.dev else corpus.train
    monitor_name = "dev" if corpus.dev else "train"

    out_path = Path(out_dir) if out_dir is not None else None
    checkpoint_path = None
    log_path = None
    if out_path is not None:
        out_path.mkdir(parents=True, exist_ok=True)
        checkpoint_path = out_path / "checkpoint.bin"
        log_path = out_path / "training_log.jsonl"

    best = params.copy()
    best_metric = -np.inf
    best_epoch = 0
    history: list[dict] = []
    for epoch in range(1, train_config.max_epochs + 1):
        started = time.perf_counter()
        rng = np.random.default_rng((train_config.seed, epoch))
        triplets = sample_triplets(corpus.train, rng)
        batch_losses = []
        for i in range(0, len(triplets), train_config.batch_size):
            batch = triplets[i : i + train_config.batch_size]
            batch_losses.append(
                train_step(params, batch, train_config, opt_state)
            )
        result = evaluation.evaluate(params, monitor)
        row = {
            "epoch": epoch,
            "train_loss": float(np.mean(batch_losses)),
            f"{monitor_name}_map": result.mean_average_precision,
            f"{monitor_name}_mrr": result.mean_reciprocal_rank,
            "seconds": time.perf_counter() - started,
        }
        history.append(row)
        if log_path is not None:
            with open(log_path, "a", encoding="utf-8") as fh:
                fh.write(json.dumps(row) + "\n")
        if log is not None:
            log(
                f"epoch {epoch}: loss {row['train_loss']:.4f} "
                f"{monitor_name} MAP {result.mean_average_precision:.4f} "
                f"MRR {result.mean_reciprocal_rank:.4f}"
            )
        if result.mean_average_precision > best_metric:
            best_metric = result.mean_average_precision
            best_epoch = epoch
            best = params.copy()
            if checkpoint_path is not None:
                save_checkpoint(
                    checkpoint_path,
                    best,
                    corpus.id_to_token,
                    meta={
                        "epoch": epoch,
                        f"{monitor_name}_map": best_metric,
                        "train_config": train_config.to_dict(),
                    },
                )
        elif epoch - best_epoch > train_config.patience:
            break
    return FitResult(
        params=best,
        best_epoch=best_epoch,
        best_metric=float(best_metric),
        history=history,
        checkpoint_path=checkpoint_path,
    )
