"""End-to-end tests of the command-line surface via main()."""

import pytest

from slotlens.cli import main, parse_config_file
from slotlens.data import load_corpus, write_corpus, Utterance


TINY = [
    "--d", "8", "--d-h", "4", "--n-layers", "1", "--n-heads", "2",
    "--ffn-dim", "12", "--epochs", "2", "--batch-size", "4", "--lr", "1e-3",
]


@pytest.fixture(scope="module")
def corpus_dir(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    assert main(["synth", "--out", str(root / "train"), "--n", "24",
                 "--seed", "0"]) == 0
    assert main(["synth", "--out", str(root / "test"), "--n", "8",
                 "--seed", "1"]) == 0
    return root


@pytest.fixture(scope="module")
def trained_dir(corpus_dir):
    out = corpus_dir / "run"
    rc = main(["train", "--train", str(corpus_dir / "train"),
               "--test", str(corpus_dir / "test"), "--out", str(out), *TINY])
    assert rc == 0
    return out


class TestSynth:
    def test_writes_loadable_three_file_corpus(self, corpus_dir):
        corpus = load_corpus(corpus_dir / "train")
        assert len(corpus) == 24
        assert (corpus_dir / "train" / "seq.in").exists()
        assert (corpus_dir / "train" / "seq.out").exists()
        assert (corpus_dir / "train" / "label").exists()

    def test_same_seed_same_corpus(self, tmp_path):
        main(["synth", "--out", str(tmp_path / "a"), "--n", "10", "--seed", "7"])
        main(["synth", "--out", str(tmp_path / "b"), "--n", "10", "--seed", "7"])
        for name in ("seq.in", "seq.out", "label"):
            assert (tmp_path / "a" / name).read_bytes() == \
                (tmp_path / "b" / name).read_bytes()


class TestTrain:
    def test_writes_checkpoint_curve_and_metrics(self, trained_dir):
        assert (trained_dir / "checkpoint.ckpt").exists()
        curve = (trained_dir / "train_curve.tsv").read_text().splitlines()
        assert curve[0].startswith("epoch\t")
        assert len(curve) == 1 + 2
        metrics = (trained_dir / "train_metrics.tsv").read_text().splitlines()
        assert metrics[0] == "intent_accuracy\tslot_precision\tslot_recall\tslot_f1"
        assert (trained_dir / "test_metrics.tsv").exists()

    def test_prints_summary(self, corpus_dir, capsys, tmp_path):
        main(["train", "--train", str(corpus_dir / "train"),
              "--out", str(tmp_path / "r"), *TINY, "--epochs", "1"])
        out = capsys.readouterr().out
        assert "intent_accuracy=" in out
        assert "checkpoint:" in out

    def test_missing_corpus_is_categorized(self, capsys, tmp_path):
        rc = main(["train", "--train", str(tmp_path / "nope"),
                   "--out", str(tmp_path / "r"), *TINY])
        assert rc == 1
        err = capsys.readouterr().err
        assert err.startswith(("io error:", "data error:"))

    def test_missing_required_flag_exits_nonzero(self):
        with pytest.raises(SystemExit) as exc:
            main(["train"])
        assert exc.value.code != 0


class TestEval:
    def test_scores_checkpoint(self, corpus_dir, trained_dir, capsys, tmp_path):
        out_file = tmp_path / "m.tsv"
        rc = main(["eval", "--checkpoint", str(trained_dir / "checkpoint.ckpt"),
                   "--data", str(corpus_dir / "test"), "--out", str(out_file)])
        assert rc == 0
        lines = out_file.read_text().splitlines()
        assert lines[0] == "intent_accuracy\tslot_precision\tslot_recall\tslot_f1"
        assert lines[0] in capsys.readouterr().out

    def test_unseen_intent_is_a_data_error(self, trained_dir, capsys, tmp_path):
        bad = [Utterance(["hello"], "made_up_intent", ["O"])]
        write_corpus(bad, tmp_path / "bad")
        rc = main(["eval", "--checkpoint", str(trained_dir / "checkpoint.ckpt"),
                   "--data", str(tmp_path / "bad")])
        assert rc == 1
        err = capsys.readouterr().err
        assert err.startswith("data error:")
        assert "made_up_intent" in err

    def test_garbage_checkpoint_is_a_checkpoint_error(self, capsys, tmp_path,
                                                      corpus_dir):
        path = tmp_path / "junk.ckpt"
        path.write_bytes(b"not a checkpoint at all")
        rc = main(["eval", "--checkpoint", str(path),
                   "--data", str(corpus_dir / "test")])
        assert rc == 1
        assert capsys.readouterr().err.startswith("checkpoint error:")


class TestExplain:
    def test_writes_heatmaps_and_bundle(self, trained_dir, tmp_path):
        out = tmp_path / "ex"
        rc = main(["explain", "--checkpoint", str(trained_dir / "checkpoint.ckpt"),
                   "--text", "book a flight to boston", "--out", str(out)])
        assert rc == 0
        html_files = sorted(p.name for p in out.glob("attention_*.html"))
        assert len(html_files) == 5
        lines = (out / "bundle.tsv").read_text().splitlines()
        assert lines[0] == "type\ti\tj\tweight"
        assert len(lines) == 1 + 5 * 5 * 5

    def test_type_filter_limits_heatmaps(self, trained_dir, tmp_path):
        out = tmp_path / "one"
        rc = main(["explain", "--checkpoint", str(trained_dir / "checkpoint.ckpt"),
                   "--text", "fly to boston", "--types", "city",
                   "--out", str(out)])
        assert rc == 0
        assert [p.name for p in out.glob("attention_*.html")] == \
            ["attention_city.html"]
        # the dump still covers every type
        lines = (out / "bundle.tsv").read_text().splitlines()
        assert len(lines) == 1 + 5 * 3 * 3

    def test_unknown_type_lists_valid_ones(self, trained_dir, capsys, tmp_path):
        rc = main(["explain", "--checkpoint", str(trained_dir / "checkpoint.ckpt"),
                   "--text", "fly to boston", "--types", "bogus",
                   "--out", str(tmp_path / "x")])
        assert rc == 1
        err = capsys.readouterr().err
        assert err.startswith("usage error:")
        assert "bogus" in err and "city" in err

    def test_empty_text_is_an_error(self, trained_dir, capsys, tmp_path):
        rc = main(["explain", "--checkpoint", str(trained_dir / "checkpoint.ckpt"),
                   "--text", "   ", "--out", str(tmp_path / "x")])
        assert rc == 1
        assert capsys.readouterr().err.startswith("usage error:")


class TestAnalyze:
    def test_default_k_list_gives_three_rows(self, corpus_dir, trained_dir,
                                             capsys, tmp_path):
        out_file = tmp_path / "entropy.tsv"
        rc = main(["analyze", "--checkpoint", str(trained_dir / "checkpoint.ckpt"),
                   "--data", str(corpus_dir / "test"), "--out", str(out_file)])
        assert rc == 0
        lines = out_file.read_text().splitlines()
        assert lines[0] == "k\tpos_entropy\tneg_entropy\tdiff"
        assert len(lines) == 1 + 3
        assert [row.split("\t")[0] for row in lines[1:]] == ["5", "10", "100"]

    def test_custom_k_and_granularity(self, corpus_dir, trained_dir, tmp_path):
        out_file = tmp_path / "e.tsv"
        rc = main(["analyze", "--checkpoint", str(trained_dir / "checkpoint.ckpt"),
                   "--data", str(corpus_dir / "test"), "--k", "25", "50",
                   "--granularity", "rows", "--out", str(out_file)])
        assert rc == 0
        lines = out_file.read_text().splitlines()
        assert len(lines) == 1 + 2


class TestAblate:
    def test_two_mode_table(self, corpus_dir, capsys, tmp_path):
        out = tmp_path / "ab"
        rc = main(["ablate", "--train", str(corpus_dir / "train"),
                   "--out", str(out), *TINY, "--epochs", "1",
                   "--modes", "full", "no_aux_network"])
        assert rc == 0
        lines = (out / "ablation.tsv").read_text().splitlines()
        assert lines[0].startswith("mode\tintent_accuracy\tslot_f1\tn_params")
        assert len(lines) == 3
        full = lines[1].split("\t")
        cut = lines[2].split("\t")
        assert full[0] == "full" and cut[0] == "no_aux_network"
        assert int(cut[3]) < int(full[3])

    def test_unknown_mode_is_a_usage_error(self, corpus_dir, capsys, tmp_path):
        rc = main(["ablate", "--train", str(corpus_dir / "train"),
                   "--out", str(tmp_path / "x"), *TINY,
                   "--modes", "half_aux"])
        assert rc == 1
        err = capsys.readouterr().err
        assert err.startswith("usage error:")
        assert "half_aux" in err


class TestGradcheck:
    def test_passes_and_writes_report(self, capsys, tmp_path):
        out_file = tmp_path / "grad.txt"
        rc = main(["gradcheck", "--out", str(out_file)])
        assert rc == 0
        text = out_file.read_text()
        assert "result: PASS" in text
        assert "parameter" in text
        assert "PASS" in capsys.readouterr().out


class TestConfigFile:
    def test_parse_config_file(self, tmp_path):
        cfg = tmp_path / "run.cfg"
        cfg.write_text("# comment\n\nepochs=3\nbatch-size=4\nno-aux-loss=true\n")
        assert parse_config_file(cfg) == {
            "epochs": "3", "batch-size": "4", "no-aux-loss": "true"}

    def test_config_seeds_values_and_flags_override(self, corpus_dir, tmp_path):
        cfg = tmp_path / "run.cfg"
        cfg.write_text(
            "d=8\nd-h=4\nn-layers=1\nn-heads=2\nffn-dim=12\n"
            "epochs=5\nbatch-size=4\nlr=1e-3\n"
        )
        out = tmp_path / "r"
        rc = main(["train", "--train", str(corpus_dir / "train"),
                   "--out", str(out), "--config", str(cfg), "--epochs", "1"])
        assert rc == 0
        curve = (out / "train_curve.tsv").read_text().splitlines()
        # flag --epochs 1 beats config epochs=5; sizes come from the file
        assert len(curve) == 1 + 1

    def test_boolean_key(self, corpus_dir, tmp_path):
        cfg = tmp_path / "run.cfg"
        cfg.write_text("no-aux-network=true\nd=8\nd-h=4\nn-layers=1\n"
                       "n-heads=2\nffn-dim=12\nepochs=1\nbatch-size=4\n")
        out = tmp_path / "r"
        rc = main(["train", "--train", str(corpus_dir / "train"),
                   "--out", str(out), "--config", str(cfg)])
        assert rc == 0
        from slotlens.checkpoint import load_checkpoint
        ckpt = load_checkpoint(out / "checkpoint.ckpt")
        assert ckpt.config.no_aux_network is True

    def test_unknown_key_is_a_usage_error(self, corpus_dir, capsys, tmp_path):
        cfg = tmp_path / "run.cfg"
        cfg.write_text("learning-rate=0.1\n")
        rc = main(["train", "--train", str(corpus_dir / "train"),
                   "--out", str(tmp_path / "r"), "--config", str(cfg)])
        assert rc == 1
        err = capsys.readouterr().err
        assert err.startswith("usage error:")
        assert "learning-rate" in err

    def test_malformed_line_is_a_usage_error(self, corpus_dir, capsys, tmp_path):
        cfg = tmp_path / "run.cfg"
        cfg.write_text("epochs\n")
        rc = main(["train", "--train", str(corpus_dir / "train"),
                   "--out", str(tmp_path / "r"), "--config", str(cfg)])
        assert rc == 1
        assert capsys.readouterr().err.startswith("usage error:")
