import json

import numpy as np
import pytest

from slotlens.checkpoint import (
    FORMAT_VERSION,
    MAGIC,
    CheckpointCorruptError,
    CheckpointFormatError,
    CheckpointVersionError,
    load_checkpoint,
    model_from_checkpoint,
    save_checkpoint,
)
from slotlens.data import Vocab, build_label_maps, encode_batch
from slotlens.optim import adam_step
from slotlens.synth import generate_synthetic_corpus
from slotlens.tensor import backward
from slotlens.train import RunConfig, train_model


@pytest.fixture(scope="module")
def setting():
    corpus = generate_synthetic_corpus(seed=2, n=12)
    maps = build_label_maps(generate_synthetic_corpus(seed=2, n=300))
    vocab = Vocab.build(corpus)
    run = RunConfig(d=8, d_h=4, n_layers=1, n_heads=2, ffn_dim=12,
                    epochs=1, batch_size=4, seed=7)
    model = train_model(corpus, maps, vocab, run).model
    return corpus, maps, vocab, model


class TestRoundTrip:
    def test_parameters_bit_exact(self, setting, tmp_path):
        corpus, maps, vocab, model = setting
        path = save_checkpoint(tmp_path / "m.ckpt", model, maps, vocab,
                               metadata={"epoch": 1, "seed": 7})
        ckpt = load_checkpoint(path)
        assert set(ckpt.params) == set(model.params.names())
        for name, arr in ckpt.params.items():
            np.testing.assert_array_equal(arr, model.params[name].data)
            assert arr.dtype == model.params[name].data.dtype
        assert ckpt.metadata == {"epoch": 1, "seed": 7}

    def test_predictions_bit_exact_after_reload(self, setting, tmp_path):
        corpus, maps, vocab, model = setting
        path = save_checkpoint(tmp_path / "m.ckpt", model, maps, vocab)
        restored = model_from_checkpoint(load_checkpoint(path))
        batch = encode_batch(corpus, maps, vocab)
        before = model.forward(batch)
        after = restored.forward(batch)
        np.testing.assert_array_equal(before.intent_logits, after.intent_logits)
        np.testing.assert_array_equal(before.slot_logits, after.slot_logits)
        i_a, s_a = model.predict(batch)
        i_b, s_b = restored.predict(batch)
        np.testing.assert_array_equal(i_a, i_b)
        for a, b in zip(s_a, s_b):
            np.testing.assert_array_equal(a, b)

    def test_label_maps_and_vocab_roundtrip(self, setting, tmp_path):
        corpus, maps, vocab, model = setting
        ckpt = load_checkpoint(save_checkpoint(tmp_path / "m.ckpt", model, maps, vocab))
        assert ckpt.label_maps.intents == maps.intents
        assert ckpt.label_maps.bio_labels == maps.bio_labels
        assert ckpt.vocab.id_to_token == vocab.id_to_token
        assert ckpt.vocab.lookup("boston") == vocab.lookup("boston")

    def test_optimizer_state_roundtrip(self, setting, tmp_path):
        corpus, maps, vocab, model = setting
        batch = encode_batch(corpus[:4], maps, vocab)
        model.params.zero_grads()
        backward(model.forward(batch).loss_total)
        adam_step(model.params, lr=1e-4)
        path = save_checkpoint(tmp_path / "m.ckpt", model, maps, vocab,
                               include_optimizer=True)
        restored = model_from_checkpoint(load_checkpoint(path))
        want = model.params.optimizer_state()
        got = restored.params.optimizer_state()
        assert got["step_count"] == want["step_count"] > 0
        for name in want["m"]:
            np.testing.assert_array_equal(got["m"][name], want["m"][name])
            np.testing.assert_array_equal(got["v"][name], want["v"][name])

    def test_optimizer_names_stay_out_of_params(self, setting, tmp_path):
        corpus, maps, vocab, model = setting
        path = save_checkpoint(tmp_path / "m.ckpt", model, maps, vocab,
                               include_optimizer=True)
        ckpt = load_checkpoint(path)
        assert not any(n.startswith("adam.") for n in ckpt.params)


class TestDeterminism:
    def test_same_run_same_bytes(self, tmp_path):
        corpus = generate_synthetic_corpus(seed=4, n=10)
        maps = build_label_maps(generate_synthetic_corpus(seed=4, n=300))
        vocab = Vocab.build(corpus)
        run = RunConfig(d=8, d_h=4, n_layers=1, n_heads=2, ffn_dim=12,
                        epochs=2, batch_size=4, seed=11)
        paths = []
        for tag in ("a", "b"):
            model = train_model(corpus, maps, vocab, run).model
            paths.append(
                save_checkpoint(tmp_path / f"{tag}.ckpt", model, maps, vocab,
                                metadata={"seed": run.seed, "epoch": run.epochs})
            )
        assert paths[0].read_bytes() == paths[1].read_bytes()


class TestErrorKinds:
    def test_not_a_checkpoint(self, tmp_path):
        p = tmp_path / "x.ckpt"
        p.write_bytes(b"definitely not a checkpoint")
        with pytest.raises(CheckpointFormatError, match="not a checkpoint"):
            load_checkpoint(p)

    def test_truncated_blob(self, setting, tmp_path):
        corpus, maps, vocab, model = setting
        path = save_checkpoint(tmp_path / "m.ckpt", model, maps, vocab)
        data = path.read_bytes()
        path.write_bytes(data[: len(data) - 200])
        with pytest.raises(CheckpointCorruptError, match="past end"):
            load_checkpoint(path)

    def test_truncated_manifest(self, setting, tmp_path):
        corpus, maps, vocab, model = setting
        path = save_checkpoint(tmp_path / "m.ckpt", model, maps, vocab)
        path.write_bytes(path.read_bytes()[:20])
        with pytest.raises(CheckpointCorruptError, match="manifest"):
            load_checkpoint(path)

    def test_version_mismatch_names_both(self, setting, tmp_path):
        corpus, maps, vocab, model = setting
        path = save_checkpoint(tmp_path / "m.ckpt", model, maps, vocab)
        data = path.read_bytes()
        n = int(np.frombuffer(data[8:12], dtype="<u4")[0])
        manifest = json.loads(data[12 : 12 + n])
        manifest["format_version"] = 99
        enc = json.dumps(manifest, sort_keys=True, separators=(",", ":")).encode()
        path.write_bytes(
            MAGIC + np.array(len(enc), dtype="<u4").tobytes() + enc + data[12 + n :]
        )
        with pytest.raises(CheckpointVersionError, match="99") as e:
            load_checkpoint(path)
        assert str(FORMAT_VERSION) in str(e.value)

    def test_shape_manifest_disagreement(self, setting, tmp_path):
        corpus, maps, vocab, model = setting
        path = save_checkpoint(tmp_path / "m.ckpt", model, maps, vocab)
        data = path.read_bytes()
        n = int(np.frombuffer(data[8:12], dtype="<u4")[0])
        manifest = json.loads(data[12 : 12 + n])
        manifest["params"][0]["shape"] = [1, 1]
        enc = json.dumps(manifest, sort_keys=True, separators=(",", ":")).encode()
        path.write_bytes(
            MAGIC + np.array(len(enc), dtype="<u4").tobytes() + enc + data[12 + n :]
        )
        with pytest.raises(CheckpointFormatError, match="shape"):
            load_checkpoint(path)

    def test_config_param_mismatch_detected(self, setting, tmp_path):
        corpus, maps, vocab, model = setting
        path = save_checkpoint(tmp_path / "m.ckpt", model, maps, vocab)
        ckpt = load_checkpoint(path)
        ckpt.params.pop("slot.w")
        with pytest.raises(CheckpointFormatError, match="slot.w"):
            model_from_checkpoint(ckpt)
