"""Classifier assembly tests: forward composition, prediction, parameter counts."""

import numpy as np
import pytest

from hierdoc.corpus import Document, segment
from hierdoc.model import (
    ClassDistribution,
    FlatBiLstmClassifier,
    GEOMETRY_PRESETS,
    GeometrySpec,
    HierarchicalClassifier,
    ModelConfig,
    build_model,
    build_vocab,
    count_params,
    load_tensors_into,
    predict,
)
from hierdoc.nncore import (
    CheckpointError,
    dense_forward,
    load_checkpoint,
    lstm_sequence_forward,
    save_checkpoint,
    softmax,
)

# The eight-way example distribution used throughout: peaked at position 6
# of 8 (index 5), which is "International" in canonical order.
EXAMPLE_VECTOR = np.array([
    8.74730467e-05,
    1.11537855e-04,
    1.27863220e-03,
    9.55423748e-04,
    5.19969326e-04,
    9.96643186e-01,
    5.63649974e-06,
    3.98051459e-04,
])


def _toy_config(version="ver_2", s=3, w=4, dim=8, hidden=4, dense=5, seed=21,
                pooling="concat"):
    return ModelConfig(
        version=version,
        geometry=GeometrySpec(s, w),
        embedding_dim=dim,
        hidden_words=hidden,
        hidden_sentences=hidden,
        dense_size=dense,
        sentence_pooling=pooling,
        init_seed=seed,
    )


class TestGeometry:
    def test_presets(self):
        assert GEOMETRY_PRESETS == {
            "DE_1": (1, 1),
            "DE_150": (15, 10),
            "DE_600": (30, 20),
            "DE_1000_A": (100, 10),
            "DE_1000_B": (10, 100),
        }
        for name, (s, w) in GEOMETRY_PRESETS.items():
            spec = GeometrySpec.parse(name)
            assert spec.shape == (s, w)

    def test_preset_row_counts(self):
        assert GeometrySpec.parse("DE_600").rows == 600
        assert GeometrySpec.parse("DE_1000_A").rows == 1000
        assert GeometrySpec.parse("DE_1000_B").rows == 1000

    def test_parse_dict_and_tuple(self):
        assert GeometrySpec.parse({"sentences": 3, "words": 7}).shape == (3, 7)
        assert GeometrySpec.parse((2, 9)).shape == (2, 9)

    def test_unknown_preset(self):
        with pytest.raises(ValueError, match="preset"):
            GeometrySpec.parse("DE_42")


class TestPredict:
    def test_worked_example_vector(self):
        label = predict(EXAMPLE_VECTOR)
        assert label.index == 5
        assert label.name == "International"
        assert abs(float(EXAMPLE_VECTOR.sum()) - 1.0) < 1e-6

    def test_uniform_tie_breaks_low(self):
        assert predict(np.full(8, 0.125)).index == 0

    def test_onehot_health(self):
        onehot = np.zeros(8)
        onehot[7] = 1.0
        assert predict(onehot).name == "Health"

    def test_class_distribution_wrapper(self):
        dist = ClassDistribution(probs=EXAMPLE_VECTOR)
        assert dist.argmax == 5
        assert dist.label.name == "International"

    def test_monotone_transform_invariance(self):
        rng = np.random.default_rng(0)
        for _ in range(50):
            logits = rng.normal(size=8)
            base = predict(softmax(logits))
            squeezed = predict(softmax(3.0 * logits + 1.5))
            assert base.index == squeezed.index


class TestHierarchicalForward:
    def test_matches_hand_assembled_composition_single_sentence(self):
        config = _toy_config(s=1, w=3, dim=4, hidden=3, dense=5)
        model = HierarchicalClassifier(config, dtype=np.float64)
        rng = np.random.default_rng(1)
        E = rng.normal(size=(3, 4))

        H = lstm_sequence_forward(E, model.word_lstm, "many_to_many")
        V0 = H.reshape(-1)
        D = lstm_sequence_forward(V0[None, :], model.sent_lstm, "many_to_one")
        a1 = dense_forward(D, model.dense1)
        probs_want = softmax(model.dense2.w @ a1 + model.dense2.b)

        probs, _ = model.forward_batch(E[None, :, :])
        assert np.allclose(probs[0], probs_want, atol=1e-12)

    def test_matches_hand_assembled_composition_multi_sentence(self):
        config = _toy_config(s=3, w=4, dim=8, hidden=4, dense=5)
        model = HierarchicalClassifier(config, dtype=np.float64)
        rng = np.random.default_rng(2)
        E = rng.normal(size=(12, 8))

        # Sentence k consumes rows [k*W, (k+1)*W); its vector is the concat
        # of all word-level hidden states.
        vs = []
        for k in range(3):
            H = lstm_sequence_forward(E[k * 4 : (k + 1) * 4], model.word_lstm,
                                      "many_to_many")
            vs.append(H.reshape(-1))
        D = lstm_sequence_forward(np.stack(vs), model.sent_lstm, "many_to_one")
        a1 = dense_forward(D, model.dense1)
        probs_want = softmax(model.dense2.w @ a1 + model.dense2.b)

        probs, _ = model.forward_batch(E[None, :, :])
        assert np.allclose(probs[0], probs_want, atol=1e-12)

    def test_degenerate_1x1_geometry(self):
        # DE_1: the sentence vector is the single word hidden state and the
        # document vector is one LSTM step over it.
        config = _toy_config(s=1, w=1, dim=4, hidden=3)
        model = HierarchicalClassifier(config, dtype=np.float64)
        E = np.random.default_rng(9).normal(size=(1, 4))
        h0 = lstm_sequence_forward(E, model.word_lstm, "many_to_many")
        assert h0.shape == (1, 3)
        D = lstm_sequence_forward(h0[0][None, :], model.sent_lstm, "many_to_one")
        a1 = dense_forward(D, model.dense1)
        probs_want = softmax(model.dense2.w @ a1 + model.dense2.b)
        probs, _ = model.forward_batch(E[None, :, :])
        assert np.allclose(probs[0], probs_want, atol=1e-12)

    def test_final_pooling_variant(self):
        config = _toy_config(s=2, w=3, dim=4, hidden=3, pooling="final")
        model = HierarchicalClassifier(config, dtype=np.float64)
        rng = np.random.default_rng(3)
        E = rng.normal(size=(6, 4))
        vs = []
        for k in range(2):
            vs.append(
                lstm_sequence_forward(E[k * 3 : (k + 1) * 3], model.word_lstm,
                                      "many_to_one")
            )
        D = lstm_sequence_forward(np.stack(vs), model.sent_lstm, "many_to_one")
        a1 = dense_forward(D, model.dense1)
        probs_want = softmax(model.dense2.w @ a1 + model.dense2.b)
        probs, _ = model.forward_batch(E[None, :, :])
        assert np.allclose(probs[0], probs_want, atol=1e-12)

    def test_zero_input_is_deterministic_valid_distribution(self):
        config = _toy_config()
        model = HierarchicalClassifier(config, dtype=np.float64)
        E = np.zeros((1, 12, 8))
        p1, _ = model.forward_batch(E)
        p2, _ = model.forward_batch(E)
        assert np.array_equal(p1, p2)
        assert abs(float(p1.sum()) - 1.0) < 1e-9

    def test_forward_purity_bit_identical(self):
        config = _toy_config()
        model = HierarchicalClassifier(config)
        rng = np.random.default_rng(4)
        E = rng.normal(size=(2, 12, 8)).astype(np.float32)
        p1, _ = model.forward_batch(E)
        p2, _ = model.forward_batch(E)
        assert np.array_equal(p1, p2)

    def test_distribution_invariants_random_inputs(self):
        config = _toy_config()
        model = HierarchicalClassifier(config)
        rng = np.random.default_rng(5)
        for _ in range(30):
            E = (rng.normal(size=(1, 12, 8)) * rng.uniform(0.1, 10)).astype(np.float32)
            probs, _ = model.forward_batch(E)
            assert np.all(probs > 0) and np.all(probs < 1)
            assert abs(float(probs.sum()) - 1.0) < 1e-6

    def test_geometry_mismatch_rejected(self):
        model = HierarchicalClassifier(_toy_config())
        with pytest.raises(ValueError, match="geometry"):
            model.forward_batch(np.zeros((1, 13, 8), dtype=np.float32))

    def test_dim_mismatch_rejected(self):
        model = HierarchicalClassifier(_toy_config())
        with pytest.raises(ValueError, match="dim"):
            model.forward_batch(np.zeros((1, 12, 9), dtype=np.float32))


class TestFlatBiLstm:
    def _model(self, s=2, w=3, dim=6, hidden=4):
        config = _toy_config(version="ver_0", s=s, w=w, dim=dim, hidden=hidden)
        docs = [Document("a", "一二三。四五。"), Document("b", "六七八。")]
        vocab = build_vocab(segment(d, (s, w)) for d in docs)
        return FlatBiLstmClassifier(config, vocab), docs

    def test_runs_full_flattened_sequence(self):
        model, docs = self._model()
        ids = model.encode(segment(docs[0], (2, 3)))
        assert ids.shape == (6,)
        probs, tape = model.forward_batch(ids[None, :])
        # one word-level tape entry per flattened slot, each direction
        assert len(tape[1]) == 6 and len(tape[2]) == 6
        assert abs(float(probs.sum()) - 1.0) < 1e-6

    def test_all_pad_grid_still_valid(self):
        model, _ = self._model()
        grid = segment(Document("e", ""), (2, 3))
        dist = model.forward_doc(grid)
        assert abs(float(dist.probs.sum()) - 1.0) < 1e-6

    def test_600_slot_grid_runs_600_steps(self):
        config = _toy_config(version="ver_0", s=30, w=20, dim=4, hidden=2)
        model = FlatBiLstmClassifier(config, {"字": 2})
        grid = segment(Document("d", "字字字。"), (30, 20))
        ids = model.encode(grid)[None, :]
        assert ids.shape == (1, 600)
        probs, tape = model.forward_batch(ids)
        assert len(tape[1]) == 600 and len(tape[2]) == 600
        assert abs(float(probs.sum()) - 1.0) < 1e-6

    def test_unknown_tokens_map_to_unk(self):
        model, _ = self._model()
        grid = segment(Document("x", "零零零。"), (2, 3))
        ids = model.encode(grid)
        assert list(ids[:3]) == [1, 1, 1]  # UNK
        assert list(ids[3:]) == [0, 0, 0]  # PAD

    def test_vocab_sorted_and_reserved_ids(self):
        _, docs = self._model()
        vocab = build_vocab(segment(d, (2, 3)) for d in docs)
        assert min(vocab.values()) == 2
        assert list(vocab.values()) == sorted(vocab.values())


class TestCountParams:
    def test_single_lstm_closed_form(self):
        from hierdoc.model import _lstm_param_count

        assert _lstm_param_count(3, 2) == 48

    def test_dense_closed_form(self):
        from hierdoc.model import _dense_param_count

        assert _dense_param_count(4, 8) == 40

    def test_ver2_matches_scripted_counter(self):
        config = _toy_config()
        model = HierarchicalClassifier(config)
        actual = sum(t.size for t in model.tensors().values())
        assert count_params(config) == actual

    def test_ver2_default_dims(self):
        config = ModelConfig(
            version="ver_2", geometry=GeometrySpec.parse("DE_600"),
            embedding_dim=768,
        )
        model = HierarchicalClassifier(config)
        actual = sum(t.size for t in model.tensors().values())
        assert count_params(config) == actual

    def test_ver0_matches_scripted_counter(self):
        config = _toy_config(version="ver_0")
        vocab = {"一": 2, "二": 3, "三": 4}
        model = FlatBiLstmClassifier(config, vocab)
        actual = sum(t.size for t in model.tensors().values())
        assert count_params(config, vocab_size=len(vocab) + 2) == actual

    def test_ver0_requires_vocab_size(self):
        with pytest.raises(ValueError, match="vocab"):
            count_params(_toy_config(version="ver_0"))


class TestCheckpointIntegration:
    def test_save_load_reproduces_outputs(self, tmp_path):
        config = _toy_config()
        model = HierarchicalClassifier(config)
        rng = np.random.default_rng(6)
        E = rng.normal(size=(1, 12, 8)).astype(np.float32)
        want, _ = model.forward_batch(E)

        path = tmp_path / "m.prm1"
        save_checkpoint(path, model.tensors())
        fresh = HierarchicalClassifier(_toy_config(seed=999))
        load_tensors_into(fresh, load_checkpoint(path))
        got, _ = fresh.forward_batch(E)
        assert np.array_equal(want, got)

    def test_shape_mismatch_rejected(self, tmp_path):
        model = HierarchicalClassifier(_toy_config())
        path = tmp_path / "m.prm1"
        save_checkpoint(path, model.tensors())
        other = HierarchicalClassifier(_toy_config(hidden=5))
        with pytest.raises(CheckpointError, match="shape"):
            load_tensors_into(other, load_checkpoint(path))

    def test_name_mismatch_rejected(self, tmp_path):
        model = HierarchicalClassifier(_toy_config())
        path = tmp_path / "m.prm1"
        save_checkpoint(path, model.tensors())
        vocab = {"一": 2}
        other = FlatBiLstmClassifier(_toy_config(version="ver_0"), vocab)
        with pytest.raises(CheckpointError, match="mismatch"):
            load_tensors_into(other, load_checkpoint(path))


class TestExhaustiveGradients:
    def test_ver0_every_coordinate_including_lookup(self):
        # Exhaustive central differences over all tensors; in particular the
        # lookup rows hit by repeated token ids (scatter-add accumulation).
        from hierdoc.cli import _gradcheck_config, run_gradcheck

        config = _gradcheck_config("ver_0")
        report = run_gradcheck(config, n_coords=10**6)
        assert report.max_error < 1e-4, report.worst
        assert "lookup.table" in report.per_tensor
        # n_coords above the parameter count means every coordinate ran
        assert report.coords_checked > 250


class TestBuildModel:
    def test_dispatch(self):
        assert isinstance(build_model(_toy_config("ver_1")), HierarchicalClassifier)
        assert isinstance(build_model(_toy_config("ver_2")), HierarchicalClassifier)
        assert isinstance(
            build_model(_toy_config("ver_0"), vocab={"x": 2}), FlatBiLstmClassifier
        )

    def test_ver0_needs_vocab(self):
        with pytest.raises(ValueError, match="vocab"):
            build_model(_toy_config("ver_0"))

    def test_version_binds_padding(self):
        assert _toy_config("ver_1").padding_strategy == "pad_before"
        assert _toy_config("ver_2").padding_strategy == "pad_after"
        assert _toy_config("ver_0").padding_strategy is None
