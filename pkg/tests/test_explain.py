import numpy as np
import pytest

from slotlens.data import Utterance, Vocab, build_label_maps
from slotlens.explain import (
    AttentionBundle,
    ConsistencyReport,
    PairScore,
    compare_attention_consistency,
    consistency_analysis,
    entropy,
    entropy_report_from_bundles,
    extract_attentions,
    render_heatmap,
    topk_entropy_analysis,
    type_entropy,
)
from slotlens.model import JointModel, ModelConfig
from slotlens.synth import default_grammar, generate_synthetic_corpus, modification_pairs


def uniform_bundle(l=4, types=("city", "day"), positive=("city",)):
    m = np.full((l, l), 1.0 / l)
    return AttentionBundle(
        tokens=[f"w{i}" for i in range(l)],
        matrices={t: m.copy() for t in types},
        positive_types=frozenset(positive),
        negative_types=frozenset(types) - frozenset(positive),
    )


def point_mass_matrix(l, col=0):
    m = np.zeros((l, l))
    m[:, col] = 1.0
    return m


def small_setting(**config_kw):
    corpus = [
        Utterance(["fly", "to", "boston", "today"], "book_flight",
                  ["O", "O", "B-city", "B-day"]),
        Utterance(["hello", "there"], "greet", ["O", "O"]),
        Utterance(["rain", "in", "denver"], "get_weather", ["O", "O", "B-city"]),
    ]
    extra = [Utterance(["a", "b"], "greet", ["B-airline", "B-hotel"])]
    maps = build_label_maps(corpus + extra)
    vocab = Vocab.build(corpus)
    kw = dict(
        vocab_size=len(vocab), n_intents=maps.n_intents,
        n_slot_types=maps.n_slot_types, n_bio_labels=maps.n_bio_labels,
        d=8, d_h=4, n_layers=1, n_heads=2, ffn_dim=12, max_positions=10,
        dropout_rate=0.0,
    )
    kw.update(config_kw)
    model = JointModel(ModelConfig(**kw), rng=np.random.default_rng(0))
    return model, corpus, maps, vocab


class TestEntropy:
    def test_uniform_over_four(self):
        assert entropy([0.25] * 4) == pytest.approx(2.0)

    def test_point_mass(self):
        assert entropy([1, 0, 0]) == pytest.approx(0.0)

    def test_dyadic(self):
        assert entropy([2, 1, 1]) == pytest.approx(1.5)

    def test_scale_invariance(self):
        w = [0.3, 1.2, 0.01, 4.0]
        assert entropy(np.array(w) * 37.5) == pytest.approx(entropy(w))

    def test_permutation_invariance(self):
        w = [0.5, 0.2, 0.3]
        assert entropy(w[::-1]) == pytest.approx(entropy(w))

    def test_uniform_maximizes(self):
        rng = np.random.default_rng(0)
        for n in (2, 5, 9):
            assert entropy(np.ones(n)) == pytest.approx(np.log2(n))
            assert entropy(rng.random(n) + 0.01) <= np.log2(n) + 1e-12

    def test_errors(self):
        with pytest.raises(ValueError, match="all-zero"):
            entropy([0.0, 0.0])
        with pytest.raises(ValueError, match="non-negative"):
            entropy([0.5, -0.1])
        with pytest.raises(ValueError, match="empty"):
            entropy([])


class TestTypeEntropy:
    def test_full_matrix_at_k100(self):
        m = np.full((3, 3), 1.0 / 3)
        assert type_entropy(m, 100) == pytest.approx(np.log2(9))

    def test_topk_keeps_at_least_one(self):
        m = np.full((4, 4), 1.0 / 4)
        assert type_entropy(m, 5) == pytest.approx(0.0)  # floor(0.8) -> 1 element

    def test_topk_subset_size(self):
        m = np.arange(1, 26, dtype=float).reshape(5, 5)
        # floor(20*25/100) = 5 largest entries: 21..25
        top = np.sort(m.reshape(-1))[::-1][:5]
        assert type_entropy(m, 20) == pytest.approx(entropy(top))

    def test_rows_granularity(self):
        m = np.full((4, 4), 1.0 / 4)
        assert type_entropy(m, 100, "rows") == pytest.approx(np.log2(4))
        assert type_entropy(m, 100, "matrix") == pytest.approx(np.log2(16))

    def test_unknown_granularity(self):
        with pytest.raises(ValueError, match="granularity"):
            type_entropy(np.ones((2, 2)), 100, "columns")


class TestBundle:
    def test_partition_enforced(self):
        with pytest.raises(ValueError, match="overlap"):
            AttentionBundle(
                tokens=["a"], matrices={"city": np.ones((1, 1))},
                positive_types=frozenset({"city"}), negative_types=frozenset({"city"}),
            )

    def test_missing_matrix_rejected(self):
        with pytest.raises(ValueError, match="without attention"):
            AttentionBundle(
                tokens=["a"], matrices={},
                positive_types=frozenset({"city"}), negative_types=frozenset(),
            )

    def test_row_sums_validated(self):
        with pytest.raises(ValueError, match="sum to 1"):
            AttentionBundle(
                tokens=["a", "b"], matrices={"city": np.ones((2, 2))},
                positive_types=frozenset({"city"}), negative_types=frozenset(),
            )

    def test_extraction_partitions_types(self):
        model, corpus, maps, vocab = small_setting()
        b = extract_attentions(model, corpus[0], maps, vocab)
        assert b.positive_types == {"city", "day"}
        assert b.negative_types == {"airline", "hotel"}
        assert "O" in b.matrices and "O" not in b.analyzed_types

    def test_include_outside_flag(self):
        model, corpus, maps, vocab = small_setting()
        b = extract_attentions(model, corpus[0], maps, vocab, include_outside=True)
        assert "O" in b.negative_types

    def test_frozen_model_gives_uniform_matrices(self):
        model, corpus, maps, vocab = small_setting(frozen_uniform_type_attention=True)
        b = extract_attentions(model, corpus[0], maps, vocab)
        for m in b.matrices.values():
            np.testing.assert_allclose(m, 1.0 / 4, atol=1e-7)

    def test_extraction_deterministic(self):
        model, corpus, maps, vocab = small_setting()
        a = extract_attentions(model, corpus[0], maps, vocab)
        b = extract_attentions(model, corpus[0], maps, vocab)
        for t in a.matrices:
            np.testing.assert_array_equal(a.matrices[t], b.matrices[t])

    def test_all_outside_utterance_falls_back_to_predictions(self):
        model, corpus, maps, vocab = small_setting()
        b = extract_attentions(model, corpus[1], maps, vocab)
        assert b.positive_types | b.negative_types == {"airline", "city", "day", "hotel"}

    def test_no_aux_network_cannot_extract(self):
        model, corpus, maps, vocab = small_setting(no_aux_network=True)
        with pytest.raises(ValueError, match="without the slot-type attention"):
            extract_attentions(model, corpus[0], maps, vocab)


class TestEntropyReport:
    def test_frozen_uniform_null_case(self):
        bundles = [uniform_bundle(l) for l in (3, 4, 5)]
        report = entropy_report_from_bundles(bundles, [5, 10, 100])
        assert len(report.rows) == 3
        for row in report.rows:
            assert abs(row.diff) <= 1e-12
        k100 = report.rows[-1]
        want = np.mean([np.log2(l * l) for l in (3, 4, 5)])
        assert k100.pos_entropy == pytest.approx(want)

    def test_pointmass_positive_beats_uniform_negative(self):
        l = 4
        b = AttentionBundle(
            tokens=["w"] * l,
            matrices={"city": point_mass_matrix(l), "day": np.full((l, l), 1 / l)},
            positive_types=frozenset({"city"}),
            negative_types=frozenset({"day"}),
        )
        by_rows = entropy_report_from_bundles([b], [100], granularity="rows").rows[0]
        assert by_rows.pos_entropy == pytest.approx(0.0)
        assert by_rows.neg_entropy == pytest.approx(np.log2(l))
        flat = entropy_report_from_bundles([b], [100]).rows[0]
        assert flat.pos_entropy == pytest.approx(np.log2(l))  # l aligned point masses
        assert flat.neg_entropy == pytest.approx(np.log2(l * l))
        assert by_rows.diff > 0 and flat.diff > 0

    def test_no_positive_types_anywhere_errors(self):
        bundles = [uniform_bundle(positive=())]
        with pytest.raises(ValueError, match="no positive slot types"):
            entropy_report_from_bundles(bundles, [100])

    def test_empty_corpus_errors(self):
        with pytest.raises(ValueError, match="no utterances"):
            entropy_report_from_bundles([], [100])

    def test_model_level_analysis_row_structure(self):
        model, corpus, maps, vocab = small_setting()
        report = topk_entropy_analysis(model, corpus, [5, 10, 100], maps, vocab)
        assert [r.k for r in report.rows] == [5, 10, 100]
        assert report.n_utterances == len(corpus)
        for row in report.rows:
            assert row.diff == pytest.approx(row.neg_entropy - row.pos_entropy)

    def test_tsv_shape(self):
        report = entropy_report_from_bundles([uniform_bundle()], [10, 100])
        lines = report.to_tsv().strip().split("\n")
        assert lines[0] == "k\tpos_entropy\tneg_entropy\tdiff"
        assert len(lines) == 3
        k, pos, neg, diff = lines[1].split("\t")
        assert float(neg) - float(pos) == pytest.approx(float(diff))


class TestConsistency:
    def test_reflexive(self):
        b = uniform_bundle()
        assert compare_attention_consistency(b, b, "city") == 1.0

    def test_symmetric(self):
        rng = np.random.default_rng(0)
        def rand_bundle():
            m = rng.random((4, 4)) + 0.1
            m /= m.sum(-1, keepdims=True)
            return AttentionBundle(
                tokens=["w"] * 4, matrices={"city": m},
                positive_types=frozenset({"city"}), negative_types=frozenset(),
            )
        a, b = rand_bundle(), rand_bundle()
        assert compare_attention_consistency(a, b, "city") == pytest.approx(
            compare_attention_consistency(b, a, "city")
        )

    def test_disjoint_point_masses_score_zero(self):
        l = 4
        a = AttentionBundle(["w"] * l, {"city": point_mass_matrix(l, 0)},
                            frozenset({"city"}), frozenset())
        b = AttentionBundle(["w"] * l, {"city": point_mass_matrix(l, 1)},
                            frozenset({"city"}), frozenset())
        assert compare_attention_consistency(a, b, "city") == 0.0

    def test_uniform_vs_point_mass(self):
        l = 4
        a = uniform_bundle(l, types=("city",), positive=("city",))
        b = AttentionBundle(["w"] * l, {"city": point_mass_matrix(l, 0)},
                            frozenset({"city"}), frozenset())
        assert compare_attention_consistency(a, b, "city") == pytest.approx(1 / np.sqrt(l))

    def test_missing_type_errors(self):
        b = uniform_bundle(types=("city",), positive=("city",))
        with pytest.raises(ValueError, match="day"):
            compare_attention_consistency(b, b, "day")

    def test_length_mismatch_needs_alignment(self):
        a = uniform_bundle(3, types=("city",), positive=("city",))
        b = uniform_bundle(4, types=("city",), positive=("city",))
        with pytest.raises(ValueError, match="alignment"):
            compare_attention_consistency(a, b, "city")
        score = compare_attention_consistency(a, b, "city", alignment=[(0, 0), (2, 3)])
        assert 0.0 <= score <= 1.0

    def test_pair_analysis_over_synthetic_modifications(self):
        g = default_grammar()
        corpus = generate_synthetic_corpus(seed=3, n=12, grammar=g)
        maps = build_label_maps(generate_synthetic_corpus(seed=3, n=200, grammar=g))
        vocab = Vocab.build(corpus)
        model = JointModel(ModelConfig(
            vocab_size=len(vocab), n_intents=maps.n_intents,
            n_slot_types=maps.n_slot_types, n_bio_labels=maps.n_bio_labels,
            d=8, d_h=4, n_layers=1, n_heads=2, ffn_dim=12, max_positions=30,
        ), rng=np.random.default_rng(1))
        pairs = modification_pairs(corpus, g, seed=5)[:6]
        report = consistency_analysis(model, pairs, maps, vocab)
        assert len(report.pairs) == 6
        assert all(0.0 <= p.score <= 1.0 for p in report.pairs)
        for cat, mean in report.category_means.items():
            assert 0.0 <= mean <= 1.0

    def test_report_tsv_and_means(self):
        report = ConsistencyReport(pairs=[
            PairScore(0, "slot-only", 0.9),
            PairScore(1, "slot-only", 0.7),
            PairScore(2, "both", 0.5),
        ])
        assert report.category_means == {"both": 0.5, "slot-only": pytest.approx(0.8)}
        lines = report.to_tsv().strip().split("\n")
        assert lines[0] == "pair_id\tcategory\tscore"
        assert lines[1] == "0\tslot-only\t0.9"


class TestHeatmap:
    def test_uniform_matrix_equal_opacities(self, tmp_path):
        b = uniform_bundle(3, types=("city",), positive=("city",))
        out = render_heatmap(b, "city", tmp_path / "h.html")
        text = out.read_text(encoding="utf-8")
        opacities = {
            part.split('"')[0] for part in text.split("opacity:")[1:]
        }
        assert opacities == {"1.000000"}

    def test_identity_matrix_diagonal_only(self, tmp_path):
        l = 3
        b = AttentionBundle(["a", "b", "c"], {"city": np.eye(l)},
                            frozenset({"city"}), frozenset())
        text = render_heatmap(b, "city", tmp_path / "h.html").read_text(encoding="utf-8")
        assert text.count("opacity:1.000000") == l
        assert text.count("opacity:0.000000") == l * l - l

    def test_contains_every_token_escaped(self, tmp_path):
        b = AttentionBundle(["<laugh>", "b"], {"city": np.full((2, 2), 0.5)},
                            frozenset({"city"}), frozenset())
        text = render_heatmap(b, "city", tmp_path / "h.html").read_text(encoding="utf-8")
        assert "&lt;laugh&gt;" in text
        assert "<laugh>" not in text
        assert text.startswith("<!DOCTYPE html>")

    def test_no_network_resources(self, tmp_path):
        b = uniform_bundle(2, types=("city",), positive=("city",))
        text = render_heatmap(b, "city", tmp_path / "h.html").read_text(encoding="utf-8")
        assert "http" not in text and "src=" not in text

    def test_byte_deterministic(self, tmp_path):
        b = uniform_bundle(4)
        a = render_heatmap(b, "city", tmp_path / "a.html").read_bytes()
        c = render_heatmap(b, "city", tmp_path / "b.html").read_bytes()
        assert a == c

    def test_hover_titles_carry_values(self, tmp_path):
        m = np.array([[0.75, 0.25], [0.5, 0.5]])
        b = AttentionBundle(["a", "b"], {"city": m},
                            frozenset({"city"}), frozenset())
        text = render_heatmap(b, "city", tmp_path / "h.html").read_text(encoding="utf-8")
        assert 'title="0.750000"' in text
        assert 'title="0.250000"' in text

    def test_missing_type_errors(self, tmp_path):
        b = uniform_bundle()
        with pytest.raises(ValueError, match="hotel"):
            render_heatmap(b, "hotel", tmp_path / "h.html")
