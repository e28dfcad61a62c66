import json

import numpy as np
import pytest

import oracles
from nnentail.corpus import EntailLabel, EntailmentPair
from nnentail.encoder import (
    DeskEncoder,
    EncoderConfig,
    Mode,
    ParameterSet,
    Vocabulary,
    freeze,
    load_params_json,
    save_params_json,
)

E = EntailLabel.ENTAILMENT


def tiny_encoder(d=4, embed_dim=3, dropout=0.0, seed=0, tokens=("alpha", "beta", "gamma")):
    config = EncoderConfig(d=d, vocab_size=len(tokens) + 1, embed_dim=embed_dim,
                           dropout_rate=dropout)
    return DeskEncoder(config, Vocabulary(tokens), seed=seed)


def pair(premise="alpha beta", hypothesis="beta gamma"):
    return EntailmentPair(premise, hypothesis, E)


class TestVocabulary:
    def test_unknown_maps_to_zero(self):
        v = Vocabulary(("alpha", "beta"))
        assert v.encode("alpha zzz beta") == [1, 0, 2]

    def test_fit_ranks_by_frequency(self):
        v = Vocabulary.fit(["b b b a a c"], max_size=3)
        assert v.tokens == ["b", "a"]

    def test_tokenize_lowercases(self):
        assert Vocabulary.tokenize("Alpha BETA") == ["alpha", "beta"]


class TestEncode:
    def test_eval_deterministic(self):
        enc = tiny_encoder(dropout=0.5)
        a = enc.encode(pair(), Mode.EVAL)
        b = enc.encode(pair(), Mode.EVAL)
        np.testing.assert_array_equal(a.data, b.data)

    def test_train_without_dropout_equals_eval(self):
        enc = tiny_encoder(dropout=0.0)
        a = enc.encode(pair(), Mode.TRAIN, rng=np.random.default_rng(0))
        b = enc.encode(pair(), Mode.EVAL)
        np.testing.assert_array_equal(a.data, b.data)

    def test_zero_weights_give_activation_of_zero(self):
        enc = tiny_encoder()
        for name in enc.params.names():
            enc.params[name].data[...] = 0.0
        out = enc.encode(pair(), Mode.EVAL)
        np.testing.assert_array_equal(out.data, np.zeros(4))  # tanh(0) = 0

    def test_matches_explicit_loop_oracle(self):
        enc = tiny_encoder(d=3, embed_dim=2, tokens=("cat", "dog"))
        rng = np.random.default_rng(5)
        enc.params["embedding.weight"].data[...] = rng.normal(size=(3, 2))
        enc.params["hidden.weight"].data[...] = rng.normal(size=(8, 3))
        enc.params["hidden.bias"].data[...] = rng.normal(size=3)
        p = EntailmentPair("cat dog cat", "dog dog", E)
        got = enc.encode(p, Mode.EVAL).data
        expected = oracles.encode_pair(
            enc.vocab.encode("cat dog cat"), enc.vocab.encode("dog dog"),
            enc.params["embedding.weight"].data.tolist(),
            enc.params["hidden.weight"].data.tolist(),
            enc.params["hidden.bias"].data.tolist())
        np.testing.assert_allclose(got, expected, atol=1e-12)

    def test_differing_hypotheses_give_different_vectors(self):
        enc = tiny_encoder()
        a = enc.encode(EntailmentPair("alpha", "beta", E), Mode.EVAL)
        b = enc.encode(EntailmentPair("alpha", "gamma", E), Mode.EVAL)
        assert not np.array_equal(a.data, b.data)

    def test_batch_equals_loop_exactly(self):
        enc = tiny_encoder()
        pairs = [EntailmentPair(f"alpha beta", f"gamma alpha beta"[: 5 + i], E)
                 for i in range(3)]
        batch = enc.encode_batch(pairs, Mode.EVAL).data
        for i, p in enumerate(pairs):
            np.testing.assert_array_equal(batch[i], enc.encode(p, Mode.EVAL).data)

    def test_batch_empty_and_order(self):
        enc = tiny_encoder()
        assert enc.encode_batch([], Mode.EVAL).data.shape == (0, 4)
        pairs = [EntailmentPair("alpha", "beta", E),
                 EntailmentPair("beta", "gamma", E)] * 11
        assert enc.encode_batch(pairs, Mode.EVAL).data.shape == (22, 4)


class TestFreeze:
    def test_freeze_marks_matching(self):
        enc = tiny_encoder()
        freeze(enc.params, "embedding.*")
        assert not enc.params.is_trainable("embedding.weight")
        assert enc.params.is_trainable("hidden.weight")

    def test_freeze_nothing_warns(self):
        enc = tiny_encoder()
        with pytest.warns(UserWarning, match="matched no parameters"):
            freeze(enc.params, "nosuch.*")

    def test_freeze_all_selector(self):
        enc = tiny_encoder()
        freeze(enc.params, "*")
        assert enc.params.trainable_items() == []


class TestCheckpoint:
    def test_roundtrip_bitwise(self, tmp_path):
        enc = tiny_encoder(seed=3)
        path = tmp_path / "params.json"
        save_params_json(enc.params, path, meta={"seed": 3})
        loaded, meta = load_params_json(path)
        assert meta == {"seed": 3}
        for name, t in enc.params.items():
            np.testing.assert_array_equal(loaded[name].data, t.data)
            assert loaded.is_trainable(name) == enc.params.is_trainable(name)

    def test_save_is_deterministic(self, tmp_path):
        enc = tiny_encoder(seed=3)
        p1, p2 = tmp_path / "a.json", tmp_path / "b.json"
        save_params_json(enc.params, p1)
        save_params_json(enc.params, p2)
        assert p1.read_bytes() == p2.read_bytes()


class TestGradients:
    def test_finite_difference_on_all_tensors(self):
        enc = tiny_encoder(d=3, embed_dim=2, tokens=("cat", "dog"))
        p = EntailmentPair("cat dog", "dog cat cat", E)

        def loss_value():
            out = enc.encode(p, Mode.EVAL)
            return float((out.data ** 2).sum())

        enc.params.zero_grads()
        out = enc.encode(p, Mode.EVAL)
        from nnentail import autodiff as ad
        ad.tsum(ad.mul(out, out)).backward()

        h = 1e-6
        for name, t in enc.params.items():
            flat = t.data.reshape(-1)
            grad = t.grad.reshape(-1) if t.grad is not None else np.zeros_like(flat)
            for i in range(flat.size):
                orig = flat[i]
                flat[i] = orig + h
                fp = loss_value()
                flat[i] = orig - h
                fm = loss_value()
                flat[i] = orig
                fd = (fp - fm) / (2 * h)
                assert abs(fd - grad[i]) < 1e-5, f"{name}[{i}]: {fd} vs {grad[i]}"
