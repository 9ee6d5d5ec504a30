import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from palqa.acquisition import (
    NoEligibleNeighborsError,
    euclidean,
    kmeans,
    knn,
    proportional_sample,
    restrict_renormalize,
    split_sentences,
    sym_kl,
)


class TestEuclidean:
    def test_identity(self):
        v = np.array([1.0, 2.0, 3.0])
        assert euclidean(v, v) == 0.0

    def test_three_four_five(self):
        assert euclidean(np.array([0.0, 0.0]), np.array([3.0, 4.0])) == pytest.approx(5.0)

    def test_matches_summation_oracle(self):
        rng = np.random.default_rng(11)
        for _ in range(20):
            a, b = rng.normal(size=64), rng.normal(size=64)
            oracle = math.sqrt(sum((x - y) ** 2 for x, y in zip(a, b)))
            assert euclidean(a, b) == pytest.approx(oracle, rel=1e-12)

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError, match="mismatch"):
            euclidean(np.zeros(3), np.zeros(4))


def brute_force_knn(query, corpus, k, excluded_context, contexts):
    eligible = [
        (float(np.linalg.norm(query - vec)), cid)
        for cid, vec in corpus
        if contexts[cid] != excluded_context
    ]
    eligible.sort()
    return [cid for _, cid in eligible[:k]]


class TestKnn:
    def _corpus(self, rng, n):
        corpus = [(f"n{i:03d}", rng.normal(size=8)) for i in range(n)]
        contexts = {cid: f"ctx {cid}" for cid, _ in corpus}
        return corpus, contexts

    def test_exact_context_duplicate_excluded(self):
        rng = np.random.default_rng(0)
        corpus, contexts = self._corpus(rng, 3)
        contexts["n000"] = "the query context"
        query = corpus[0][1] + 1e-9  # nearly identical to the excluded entry
        hood = knn(query, corpus, 1, "the query context", contexts)
        assert hood.ids() != ["n000"]
        assert len(hood.neighbors) == 1

    def test_k_larger_than_corpus(self):
        rng = np.random.default_rng(1)
        corpus, contexts = self._corpus(rng, 4)
        hood = knn(np.zeros(8), corpus, 10, "absent", contexts)
        assert len(hood.neighbors) == 4
        dists = [d for _, d in hood.neighbors]
        assert dists == sorted(dists)

    def test_empty_after_exclusion(self):
        corpus = [("a", np.ones(4))]
        with pytest.raises(NoEligibleNeighborsError):
            knn(np.zeros(4), corpus, 1, "same", {"a": "same"})

    def test_matches_brute_force(self):
        rng = np.random.default_rng(21)
        corpus, contexts = self._corpus(rng, 50)
        query = rng.normal(size=8)
        for k in (1, 5, 20):
            assert knn(query, corpus, k, "absent", contexts).ids() == brute_force_knn(
                query, corpus, k, "absent", contexts
            )

    @given(st.integers(min_value=1, max_value=200), st.integers(min_value=0, max_value=10_000))
    @settings(max_examples=25, deadline=None)
    def test_property_matches_brute_force(self, n, seed):
        rng = np.random.default_rng(seed)
        corpus = [(f"n{i:03d}", rng.normal(size=4)) for i in range(n)]
        contexts = {cid: ("dup" if i % 7 == 0 else f"ctx{i}") for i, (cid, _) in enumerate(corpus)}
        query = rng.normal(size=4)
        k = int(rng.integers(1, n + 1))
        try:
            got = knn(query, corpus, k, "dup", contexts).ids()
        except NoEligibleNeighborsError:
            assert all(c == "dup" for c in contexts.values())
            return
        assert got == brute_force_knn(query, corpus, k, "dup", contexts)


def best_two_partition(vectors):
    """Exhaustive minimum-distortion 2-partition, for <= 12 points."""
    n = len(vectors)
    best = None
    for mask in range(1, 2 ** (n - 1)):  # fix point 0 in group 0
        groups = [[], []]
        for i in range(n):
            groups[(mask >> i) & 1].append(vectors[i])
        cost = 0.0
        for g in groups:
            if not g:
                continue
            centroid = np.mean(g, axis=0)
            cost += sum(float(np.sum((v - centroid) ** 2)) for v in g)
        if best is None or cost < best[0]:
            best = (cost, mask)
    return best


class TestKMeans:
    def test_k_equals_n(self):
        rng = np.random.default_rng(2)
        points = [(f"p{i}", rng.normal(size=3)) for i in range(6)]
        assignments, centroids = kmeans(points, 6, rng_seed=0)
        assert len(set(assignments.values())) == 6
        distortion = sum(
            float(np.sum((dict(points)[pid] - centroids[c]) ** 2))
            for pid, c in assignments.items()
        )
        assert distortion == pytest.approx(0.0, abs=1e-24)

    def test_two_separated_blobs(self):
        rng = np.random.default_rng(3)
        blob_a = [(f"a{i}", rng.normal(size=2) * 0.1 + np.array([0.0, 0.0])) for i in range(6)]
        blob_b = [(f"b{i}", rng.normal(size=2) * 0.1 + np.array([50.0, 50.0])) for i in range(6)]
        points = blob_a + blob_b
        assignments, _ = kmeans(points, 2, rng_seed=7)
        groups = {}
        for pid, c in assignments.items():
            groups.setdefault(c, set()).add(pid[0])
        assert sorted(groups.values(), key=len) == [{"a"}, {"b"}] or sorted(
            groups.values(), key=len
        ) == [{"b"}, {"a"}]
        # distortion equals the exhaustive 2-partition optimum
        vectors = [v for _, v in points]
        optimal_cost, _ = best_two_partition(vectors)
        cost = 0.0
        by_cluster = {}
        for i, (pid, v) in enumerate(points):
            by_cluster.setdefault(assignments[pid], []).append(v)
        for group in by_cluster.values():
            centroid = np.mean(group, axis=0)
            cost += sum(float(np.sum((v - centroid) ** 2)) for v in group)
        assert cost == pytest.approx(optimal_cost, rel=1e-9)

    def test_same_seed_identical(self):
        rng = np.random.default_rng(4)
        points = [(f"p{i}", rng.normal(size=5)) for i in range(30)]
        a1, c1 = kmeans(points, 4, rng_seed=99)
        a2, c2 = kmeans(points, 4, rng_seed=99)
        assert a1 == a2
        assert np.array_equal(c1, c2)

    def test_k_out_of_range(self):
        points = [("p0", np.zeros(2))]
        with pytest.raises(ValueError):
            kmeans(points, 2, rng_seed=0)

    def test_duplicate_points_fill_all_clusters(self):
        points = [(f"p{i}", np.array([1.0, 1.0])) for i in range(5)]
        assignments, _ = kmeans(points, 3, rng_seed=5)
        assert len(set(assignments.values())) == 3


class TestProportionalSample:
    def test_single_cluster(self):
        assignments = {f"p{i}": 0 for i in range(10)}
        out = proportional_sample(assignments, 4, rng_seed=0)
        assert len(out) == len(set(out)) == 4

    def test_largest_remainder_60_30_10(self):
        assignments = {}
        for i in range(60):
            assignments[f"a{i:02d}"] = 0
        for i in range(30):
            assignments[f"b{i:02d}"] = 1
        for i in range(10):
            assignments[f"c{i:02d}"] = 2
        out = proportional_sample(assignments, 10, rng_seed=1)
        counts = {0: 0, 1: 0, 2: 0}
        for pid in out:
            counts[assignments[pid]] += 1
        assert counts == {0: 6, 1: 3, 2: 1}

    def test_equal_remainder_tie_goes_to_lower_cluster_id(self):
        assignments = {f"a{i}": 0 for i in range(5)} | {f"b{i}": 1 for i in range(5)}
        out = proportional_sample(assignments, 3, rng_seed=2)
        counts = {0: 0, 1: 0}
        for pid in out:
            counts[assignments[pid]] += 1
        assert counts == {0: 2, 1: 1}

    def test_exact_size_and_seeded(self):
        rng = np.random.default_rng(6)
        assignments = {f"p{i:03d}": int(rng.integers(0, 4)) for i in range(57)}
        out1 = proportional_sample(assignments, 13, rng_seed=42)
        out2 = proportional_sample(assignments, 13, rng_seed=42)
        assert out1 == out2
        assert len(out1) == len(set(out1)) == 13


class TestSplitSentences:
    def test_basic_rule(self):
        assert split_sentences("A b. C d.") == ["A b.", "C d."]

    def test_abbreviation_splits_before_uppercase(self):
        assert split_sentences("Dr. Smith arrived.") == ["Dr.", "Smith arrived."]

    def test_no_terminal_punctuation(self):
        assert split_sentences("  just one chunk here  ") == ["just one chunk here"]

    def test_lowercase_follower_keeps_sentence_together(self):
        assert split_sentences("He said no. then left. Then came back.") == [
            "He said no. then left.",
            "Then came back.",
        ]

    def test_question_and_exclamation(self):
        assert split_sentences("Really? Yes! Sure.") == ["Really?", "Yes!", "Sure."]

    def test_join_loses_only_whitespace(self):
        text = "First bit.   Second bit!  Third?"
        assert " ".join(split_sentences(text)) == "First bit. Second bit! Third?"


class TestRestrictRenormalize:
    def test_identity_when_full_length(self):
        v = np.array([0.25, 0.25, 0.5])
        out = restrict_renormalize(v, 3)
        assert np.allclose(out, v, atol=1e-12)

    def test_arithmetic_example(self):
        out = restrict_renormalize(np.array([0.4, 0.2, 0.2, 0.2]), 3)
        assert out == pytest.approx([0.5, 0.25, 0.25])

    def test_zero_prefix_becomes_uniform(self):
        out = restrict_renormalize(np.array([0.0, 0.0, 1.0]), 2)
        assert out == pytest.approx([0.5, 0.5])

    @given(st.lists(st.floats(min_value=0.0, max_value=1.0), min_size=1, max_size=30), st.data())
    @settings(max_examples=50, deadline=None)
    def test_always_sums_to_one(self, values, data):
        v = np.array(values)
        total = v.sum()
        if total > 0:
            v = v / total
        n = data.draw(st.integers(min_value=1, max_value=len(values)))
        out = restrict_renormalize(v, n)
        assert abs(out.sum() - 1.0) < 1e-9
        assert np.all(out >= 0)

    def test_out_of_range(self):
        with pytest.raises(ValueError):
            restrict_renormalize(np.array([1.0]), 2)


class TestSymKL:
    def test_identical_is_zero(self):
        p = np.array([0.2, 0.3, 0.5])
        assert sym_kl(p, p) == 0.0

    def test_hand_derived_value(self):
        # 0.5*ln(0.5/0.9)+0.5*ln(0.5/0.1) + 0.9*ln(0.9/0.5)+0.1*ln(0.1/0.5)
        got = sym_kl(np.array([0.5, 0.5]), np.array([0.9, 0.1]))
        assert got == pytest.approx(0.8789, abs=1e-3)

    def test_exact_symmetry_on_random_pairs(self):
        rng = np.random.default_rng(17)
        for _ in range(200):
            n = int(rng.integers(2, 30))
            p = rng.random(n) + 1e-12
            q = rng.random(n) + 1e-12
            p, q = p / p.sum(), q / q.sum()
            assert sym_kl(p, q) == sym_kl(q, p)

    def test_nonnegative_zero_iff_equal(self):
        rng = np.random.default_rng(19)
        for _ in range(100):
            p = rng.random(8) + 1e-12
            q = rng.random(8) + 1e-12
            p, q = p / p.sum(), q / q.sum()
            assert sym_kl(p, q) > 0.0

    def test_length_mismatch(self):
        with pytest.raises(ValueError):
            sym_kl(np.array([1.0]), np.array([0.5, 0.5]))
