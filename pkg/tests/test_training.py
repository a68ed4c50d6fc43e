"""Initialization, end-to-end gradients, optimizer behavior, fit loop."""

import numpy as np
import pytest

from entrank import autodiff as ad
from entrank import model as m
from entrank.data import Triplet, load_corpus
from entrank.fixtures import toy_path
from entrank.model import ModelConfig, named_arrays, trace_params
from entrank.training import (
    FitResult,
    OptimizerState,
    TrainConfig,
    TrainingDivergedError,
    apply_gradients,
    fit,
    init_params,
    make_optimizer,
    orthonormal_rows,
    train_step,
)

V = 10


def tiny_params(variant="ee", seed=0, dim=3, measurements=4, gram_sizes=(1, 2)):
    if variant == "me":
        config = ModelConfig(dim=dim, measurements=measurements, variant="me")
    else:
        config = ModelConfig(
            dim=dim, measurements=measurements,
            gram_sizes=gram_sizes, variant=variant,
        )
    return init_params(config, V, seed=seed)


class TestInit:
    def test_shapes(self):
        params = tiny_params()
        assert params.amplitudes.shape == (V, 3)
        assert params.phases.shape == (V, 3)
        assert params.banks[1].shape == (4, 3)
        assert params.banks[2].shape == (4, 9)
        assert [w.shape for w in params.entanglers[2]] == [(9, 9)]

    def test_hidden_layer_shapes(self):
        config = ModelConfig(dim=3, measurements=4, gram_sizes=(2,), ee_hidden=(5,))
        params = init_params(config, V, seed=0)
        assert [w.shape for w in params.entanglers[2]] == [(5, 9), (9, 5)]

    def test_deterministic_per_seed(self):
        a, b = tiny_params(seed=11), tiny_params(seed=11)
        for name, arr in named_arrays(a).items():
            np.testing.assert_array_equal(arr, named_arrays(b)[name], err_msg=name)
        c = tiny_params(seed=12)
        assert not np.array_equal(a.amplitudes, c.amplitudes)

    def test_bank_rows_unit_and_blockwise_orthogonal(self):
        rng = np.random.default_rng(0)
        for dim, count in ((4, 4), (4, 7), (3, 11), (8, 8)):
            bank = orthonormal_rows(rng, count, dim)
            np.testing.assert_allclose(
                np.linalg.norm(bank, axis=1), 1.0, atol=1e-12
            )
            block = bank[:dim]
            gram = block.conj() @ block.T
            np.testing.assert_allclose(gram, np.eye(len(block)), atol=1e-10)

    def test_real_variant_is_real_with_frozen_phases(self):
        params = tiny_params(variant="ee-real")
        assert np.all(params.phases == 0.0)
        for name, arr in named_arrays(params).items():
            if np.issubdtype(arr.dtype, np.complexfloating):
                assert np.all(arr.imag == 0.0), name

    def test_mixture_variant_has_word_level_bank_only(self):
        params = tiny_params(variant="me", dim=5, measurements=6)
        assert set(params.banks) == {1}
        assert params.banks[1].shape == (6, 5)
        assert params.entanglers == {}


def pipeline_loss_value(params, triplet):
    tape = ad.Tape()
    traced = trace_params(tape, params)
    node = m.triplet_loss(traced, triplet.question, triplet.positive, triplet.negative)
    return float(node.value)


def numeric_grad_inplace(params, arr, triplet, h=1e-5):
    view = (
        arr.view(np.float64)
        if np.issubdtype(arr.dtype, np.complexfloating)
        else arr
    )
    g = np.zeros_like(arr)
    gview = (
        g.view(np.float64)
        if np.issubdtype(g.dtype, np.complexfloating)
        else g
    )
    for i in range(view.size):
        orig = view.flat[i]
        view.flat[i] = orig + h
        fp = pipeline_loss_value(params, triplet)
        view.flat[i] = orig - h
        fm = pipeline_loss_value(params, triplet)
        view.flat[i] = orig
        gview.flat[i] = (fp - fm) / (2 * h)
    return g


class TestEndToEndGradients:
    """Analytic gradients of the full ranking loss vs finite differences.

    Seeds are chosen so the hinge is active (loss > 0) and no pooling
    argmax sits within the finite-difference window.
    """

    TRIPLET = Triplet("q", (2, 3, 4), (5, 6, 7), (8, 9))

    @pytest.mark.parametrize(
        "variant,seed",
        [("ee", 0), ("se", 0), ("me", 0), ("ee-real", 6)],
    )
    def test_full_pipeline_matches_finite_differences(self, variant, seed):
        params = tiny_params(variant=variant, seed=seed)
        triplet = self.TRIPLET
        tape = ad.Tape()
        traced = trace_params(tape, params)
        loss = m.triplet_loss(
            traced, triplet.question, triplet.positive, triplet.negative
        )
        assert float(loss.value) > 1e-3, "hinge must be active for this check"
        grads = tape.backward(loss)

        names = {}
        names[traced.amplitudes] = "amplitudes"
        if isinstance(traced.phases, ad.Node):
            names[traced.phases] = "phases"
        for n, layers in traced.entanglers.items():
            for i, w in enumerate(layers):
                names[w] = f"entangler.{n}.{i}"
        for n, b in traced.banks.items():
            names[b] = f"bank.{n}"
        by_name = {names[node]: g for node, g in grads.items()}

        arrays = named_arrays(params)
        for name, g in by_name.items():
            fd = numeric_grad_inplace(params, arrays[name], triplet)
            ga = np.asarray(g).view(np.float64) if g.dtype == np.complex128 else g
            fda = fd.view(np.float64) if fd.dtype == np.complex128 else fd
            denom = max(np.linalg.norm(ga), np.linalg.norm(fda), 1e-8)
            err = np.linalg.norm(ga - fda) / denom
            assert err < 1e-4, f"{variant}/{name}: rel err {err:.2e}"


class TestOptimizerStep:
    def _batch(self):
        return [
            Triplet("a", (1, 2, 3), (4, 5), (6, 7)),
            Triplet("b", (2, 4), (3, 5, 6), (8, 9)),
            Triplet("c", (7, 1), (2, 9), (3, 4, 5)),
            Triplet("d", (5, 5, 6), (1, 8), (2, 3)),
            Triplet("e", (9, 2), (6, 4, 1), (7, 8)),
        ]

    def test_loss_trends_down_over_fifty_steps(self):
        params = tiny_params(seed=1, dim=4, measurements=6)
        tc = TrainConfig(learning_rate=0.1, max_epochs=1)
        opt = make_optimizer(tc, params)
        batch = self._batch()
        first = train_step(params, batch, tc, opt)
        last = first
        for _ in range(49):
            last = train_step(params, batch, tc, opt)
        assert last < first

    def test_adagrad_also_reduces_loss(self):
        params = tiny_params(seed=1, dim=4, measurements=6)
        tc = TrainConfig(learning_rate=0.1, optimizer="adagrad", max_epochs=1)
        opt = make_optimizer(tc, params)
        batch = self._batch()
        first = train_step(params, batch, tc, opt)
        for _ in range(49):
            last = train_step(params, batch, tc, opt)
        assert last < first

    def test_zero_gradient_step_is_bitwise_noop(self):
        for optimizer in ("sgd", "adagrad"):
            params = tiny_params(seed=2)
            tc = TrainConfig(learning_rate=0.5, optimizer=optimizer, max_epochs=1)
            opt = make_optimizer(tc, params)
            before = {k: v.copy() for k, v in named_arrays(params).items()}
            zero_grads = {
                k: np.zeros_like(v) for k, v in named_arrays(params).items()
            }
            apply_gradients(params, zero_grads, opt, tc.learning_rate)
            for name, arr in named_arrays(params).items():
                assert np.array_equal(
                    arr.view(np.float64), before[name].view(np.float64)
                ), f"{optimizer}/{name} changed"

    def test_bank_rows_stay_unit_after_updates(self):
        params = tiny_params(seed=3)
        tc = TrainConfig(learning_rate=0.3, max_epochs=1)
        opt = make_optimizer(tc, params)
        for _ in range(10):
            train_step(params, self._batch(), tc, opt)
        for n, bank in params.banks.items():
            np.testing.assert_allclose(
                np.linalg.norm(bank, axis=1), 1.0, atol=1e-9,
                err_msg=f"bank {n}",
            )

    def test_real_variant_stays_exactly_real_through_training(self):
        params = tiny_params(variant="ee-real", seed=4)
        tc = TrainConfig(learning_rate=0.2, max_epochs=1)
        opt = make_optimizer(tc, params)
        for _ in range(5):
            train_step(params, self._batch(), tc, opt)
        assert np.all(params.phases == 0.0)
        for name, arr in named_arrays(params).items():
            if np.issubdtype(arr.dtype, np.complexfloating):
                assert np.all(arr.imag == 0.0), name

    def test_non_finite_loss_raises_with_question_ids(self):
        params = tiny_params(seed=5)
        params.amplitudes[1] = np.nan
        tc = TrainConfig(learning_rate=0.1, max_epochs=1)
        opt = make_optimizer(tc, params)
        with np.errstate(invalid="ignore"):
            with pytest.raises(TrainingDivergedError, match="a"):
                train_step(params, self._batch(), tc, opt)

    def test_empty_batch_rejected(self):
        params = tiny_params()
        tc = TrainConfig(max_epochs=1)
        with pytest.raises(ValueError):
            train_step(params, [], tc, make_optimizer(tc, params))


class TestFit:
    def _corpus(self):
        return load_corpus(toy_path("train"))

    def test_runs_exactly_one_epoch_when_capped(self):
        result = fit(
            self._corpus(),
            ModelConfig(dim=3, measurements=4),
            TrainConfig(max_epochs=1, patience=0, batch_size=8),
        )
        assert isinstance(result, FitResult)
        assert len(result.history) == 1
        assert result.best_epoch == 1

    def test_early_stopping_respects_patience(self):
        result = fit(
            self._corpus(),
            ModelConfig(dim=3, measurements=4),
            TrainConfig(max_epochs=40, patience=2, learning_rate=1e-6, batch_size=8),
        )
        # With a vanishing learning rate the metric cannot improve after
        # epoch 1, so training must stop after exactly patience+1 stale
        # epochs.
        assert len(result.history) == 1 + 2 + 1

    def test_monitor_falls_back_to_train_split(self):
        result = fit(
            self._corpus(),
            ModelConfig(dim=3, measurements=4),
            TrainConfig(max_epochs=2, patience=5, batch_size=8),
        )
        assert "train_map" in result.history[0]

    def test_best_params_reproduce_best_metric(self):
        from entrank.evaluation import evaluate

        corpus = self._corpus()
        result = fit(
            corpus,
            ModelConfig(dim=3, measurements=6),
            TrainConfig(max_epochs=8, patience=8, batch_size=8, seed=1),
        )
        replay = evaluate(result.params, corpus.train)
        np.testing.assert_allclose(
            replay.mean_average_precision, result.best_metric, atol=1e-12
        )

    def test_writes_log_and_checkpoint(self, tmp_path):
        result = fit(
            self._corpus(),
            ModelConfig(dim=3, measurements=4),
            TrainConfig(max_epochs=2, patience=5, batch_size=8),
            out_dir=tmp_path,
        )
        assert (tmp_path / "training_log.jsonl").exists()
        assert result.checkpoint_path.exists()
        lines = (tmp_path / "training_log.jsonl").read_text().splitlines()
        assert len(lines) == len(result.history)

    def test_same_seed_same_history(self):
        config = ModelConfig(dim=3, measurements=4)
        tc = TrainConfig(max_epochs=3, patience=5, batch_size=8, seed=9)
        a = fit(self._corpus(), config, tc)
        b = fit(self._corpus(), config, tc)
        assert [h["train_loss"] for h in a.history] == [
            h["train_loss"] for h in b.history
        ]
