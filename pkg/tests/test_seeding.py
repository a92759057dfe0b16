"""Corpus statistics, KL relevance scoring, and seeded extraction."""

import math

import numpy as np
import pytest

from kginfuse.embedding import DimensionModel
from kginfuse.errors import ValidationError
from kginfuse.kg import Concept, KnowledgeGraph, n_hop_neighborhood
from kginfuse.seeding import corpus_stats, extract_seeded_subkg, relevance_score
from kginfuse.text import tokenize


def brute_relevance(concept_label, dataset, target_class):
    """Independent recomputation straight from the raw documents."""
    tokens_per_doc = [(label, tokenize(text)) for label, text in dataset]
    vocab = sorted({t for _, toks in tokens_per_doc for t in toks})
    target_total = sum(len(toks) for label, toks in tokens_per_doc if label == target_class)
    all_total = sum(len(toks) for _, toks in tokens_per_doc)
    score = 0.0
    for token in tokenize(concept_label):
        c_target = sum(
            toks.count(token) for label, toks in tokens_per_doc if label == target_class
        )
        c_all = sum(toks.count(token) for _, toks in tokens_per_doc)
        p = (c_target + 1) / (target_total + len(vocab))
        q = (c_all + 1) / (all_total + len(vocab))
        score += p * math.log(p / q)
    return score


def zero_model(tokens, d_sub=2):
    vocab = {t: i for i, t in enumerate(sorted(tokens))}
    rng = np.random.default_rng(0)
    return DimensionModel("m", vocab, rng.normal(size=(len(vocab), d_sub)), d_sub)


class TestCorpusStats:
    def test_single_document_counts(self):
        stats = corpus_stats([("pos", "a a b")])
        assert stats.class_token_counts["pos"] == {"a": 2, "b": 1}
        assert stats.class_totals["pos"] == 3

    def test_classes_accumulate_disjointly(self):
        stats = corpus_stats([("pos", "a b"), ("neg", "b c c")])
        assert stats.class_token_counts["pos"] == {"a": 1, "b": 1}
        assert stats.class_token_counts["neg"] == {"b": 1, "c": 2}
        assert stats.overall_count("b") == 2

    def test_punctuation_only_document_is_harmless(self):
        stats = corpus_stats([("pos", "?!... ---"), ("pos", "a")])
        assert stats.class_totals["pos"] == 1

    def test_empty_dataset_rejected(self):
        with pytest.raises(ValidationError):
            corpus_stats([])


class TestRelevanceScore:
    def test_single_class_token_scores_zero(self):
        # With one class, target and background coincide, so p = q exactly.
        stats = corpus_stats([("pos", "a a b"), ("pos", "b a")])
        assert relevance_score(Concept("a", "a"), stats, "pos") == 0.0

    def test_hand_computed_smoothed_value(self):
        # Target tokens: a x9, b x1 (10 total). Other class: a x1, b x9.
        # Overall: a appears 10 of 20; vocab {a, b}.
        dataset = [("pos", " ".join(["a"] * 9 + ["b"])), ("neg", " ".join(["a"] + ["b"] * 9))]
        stats = corpus_stats(dataset)
        expected = (10 / 12) * math.log((10 / 12) / (1 / 2))
        got = relevance_score(Concept("a", "a"), stats, "pos")
        assert abs(got - expected) < 1e-15
        assert abs(brute_relevance("a", dataset, "pos") - expected) < 1e-15

    def test_absent_label_is_finite(self):
        stats = corpus_stats([("pos", "a b"), ("neg", "b c")])
        score = relevance_score(Concept("zzz", "zzz"), stats, "pos")
        assert math.isfinite(score)

    def test_multi_token_label_adds_up(self):
        dataset = [("pos", "red fox runs"), ("neg", "blue bird sits")]
        stats = corpus_stats(dataset)
        combined = relevance_score(Concept("red fox", "red fox"), stats, "pos")
        parts = relevance_score(Concept("red", "red"), stats, "pos") + relevance_score(
            Concept("fox", "fox"), stats, "pos"
        )
        assert abs(combined - parts) < 1e-15

    def test_unknown_target_class_rejected(self):
        stats = corpus_stats([("pos", "a")])
        with pytest.raises(ValidationError):
            relevance_score(Concept("a", "a"), stats, "nope")

    def test_matches_brute_force_on_random_corpora(self):
        rng = np.random.default_rng(23)
        words = [f"w{i}" for i in range(12)]
        for _ in range(10):
            dataset = []
            for _ in range(8):
                label = "pos" if rng.random() < 0.5 else "neg"
                doc = " ".join(rng.choice(words, size=rng.integers(1, 9)))
                dataset.append((label, doc))
            if not any(lbl == "pos" for lbl, _ in dataset):
                dataset.append(("pos", "w0"))
            stats = corpus_stats(dataset)
            for w in words:
                got = relevance_score(Concept(w, w), stats, "pos")
                want = brute_relevance(w, dataset, "pos")
                assert abs(got - want) < 1e-12


TOY_KG_ROWS = [
    ("jihad", "isa", "doctrine"),
    ("doctrine", "isa", "ideology"),
    ("banner", "related", "jihad"),
    ("garden", "isa", "place"),
    ("river", "related", "garden"),
]


class TestExtractSeededSubkg:
    def make_inputs(self):
        kg = KnowledgeGraph.from_labeled_triples(TOY_KG_ROWS)
        dataset = [
            ("pos", "jihad banner jihad march"),
            ("pos", "jihad doctrine spreads"),
            ("neg", "garden river walk"),
            ("neg", "river garden calm banner"),
        ]
        stats = corpus_stats(dataset)
        model = zero_model(sorted({t for _, text in dataset for t in tokenize(text)}
                                  | {"doctrine", "ideology", "place"}))
        return kg, dataset, stats, model

    def test_argmax_seed_confirmed_by_brute_force(self):
        kg, dataset, stats, model = self.make_inputs()
        seeded = extract_seeded_subkg(kg, stats, "pos", hops=2, top_m=1, models=[model])
        brute = {
            cid: brute_relevance(kg.concepts[cid].label, dataset, "pos")
            for cid in kg.concepts
            if all(t in stats.vocab for t in tokenize(kg.concepts[cid].label))
        }
        best = max(brute, key=lambda c: (brute[c], c))
        assert seeded.seeds == {best} == {"jihad"}
        expected = n_hop_neighborhood(kg, {"jihad"}, 2)
        assert seeded.subkg.triples == expected.triples

    def test_zero_hops_single_concept_self_triples(self):
        kg = KnowledgeGraph.from_labeled_triples([("solo", "related", "solo"),
                                                  ("solo", "related", "other")])
        stats = corpus_stats([("pos", "solo solo"), ("neg", "filler")])
        model = zero_model(["solo", "filler"])
        seeded = extract_seeded_subkg(kg, stats, "pos", hops=0, top_m=1, models=[model])
        assert seeded.seeds == {"solo"}
        assert {(t.subject, t.object) for t in seeded.subkg.triples} == {("solo", "solo")}

    def test_boundary_ties_are_included(self):
        kg = KnowledgeGraph.from_labeled_triples([
            ("x", "related", "pad1"), ("y", "related", "pad2"), ("z", "related", "pad3"),
        ])
        # x and y have identical pos-heavy counts; z is neutral.
        dataset = [("pos", "x y x y"), ("neg", "z z x y")]
        stats = corpus_stats(dataset)
        model = zero_model(["x", "y", "z"])
        seeded = extract_seeded_subkg(kg, stats, "pos", hops=0, top_m=1, models=[model])
        assert seeded.seeds == {"x", "y"}

    def test_document_order_never_changes_seeds(self):
        kg, dataset, stats, model = self.make_inputs()
        base = extract_seeded_subkg(kg, corpus_stats(dataset), "pos", 1, 2, [model])
        rng = np.random.default_rng(4)
        for _ in range(6):
            shuffled = list(dataset)
            rng.shuffle(shuffled)
            again = extract_seeded_subkg(kg, corpus_stats(shuffled), "pos", 1, 2, [model])
            assert again.seeds == base.seeds
            assert again.subkg.triples == base.subkg.triples

    def test_no_vocabulary_overlap_rejected(self):
        kg = KnowledgeGraph.from_labeled_triples([("qqq", "related", "www")])
        stats = corpus_stats([("pos", "alpha beta")])
        with pytest.raises(ValidationError):
            extract_seeded_subkg(kg, stats, "pos", 1, 1, [zero_model(["alpha"])])

    def test_matrix_columns_are_unit_norm(self):
        kg, dataset, stats, model = self.make_inputs()
        seeded = extract_seeded_subkg(kg, stats, "pos", hops=2, top_m=2, models=[model])
        assert seeded.embedding_matrix.shape[1] == len(seeded.embedded_concepts)
        assert seeded.embedding_matrix.shape[1] <= len(seeded.subkg.concepts())
        norms = np.linalg.norm(seeded.embedding_matrix, axis=0)
        np.testing.assert_allclose(norms, 1.0, atol=1e-12)
        assert set(seeded.relevance) <= seeded.subkg.concepts()
