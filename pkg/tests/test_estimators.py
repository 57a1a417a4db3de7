"""Influence rankings: gradient similarity, BM25 overlap, external files."""

import math

import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from selrel.errors import ContractError, CoverageError
from selrel.estimators import (
    BM25Estimator,
    GradientSimilarityEstimator,
    InfluenceRanking,
    TokenizedCorpus,
    bm25_scores,
    gradient_similarity_scores,
    load_external_scores,
    tokenize,
)
from selrel.gradstore import GradientMatrix, normalize_rows


def _normalized_matrix(rows, ids=None):
    rows = np.asarray(rows, dtype=np.float64)
    m = GradientMatrix(
        ids=ids or [f"tr{i}" for i in range(rows.shape[0])],
        rows=rows,
        layer_segments=[("w", rows.shape[1])],
    )
    return normalize_rows(m)


class TestInfluenceRanking:
    def test_training_ids_in_insertion_order(self):
        r = InfluenceRanking(test_id="t", estimator="x", scores={"b": 1.0, "a": -2.0})
        assert r.training_ids == ["b", "a"]

    def test_rejects_non_finite_scores(self):
        with pytest.raises(ValueError):
            InfluenceRanking(test_id="t", estimator="x", scores={"a": float("nan")})


class TestGradientSimilarity:
    def test_scores_are_negated_cosines(self):
        train = _normalized_matrix([[1.0, 0.0], [0.0, 1.0], [-1.0, 0.0], [1.0, 1.0]])
        g = np.array([1.0, 0.0])
        r = gradient_similarity_scores(g, train)
        np.testing.assert_allclose(r.scores["tr0"], -1.0, atol=1e-12)
        np.testing.assert_allclose(r.scores["tr1"], 0.0, atol=1e-12)
        np.testing.assert_allclose(r.scores["tr2"], 1.0, atol=1e-12)
        np.testing.assert_allclose(r.scores["tr3"], -1.0 / math.sqrt(2), atol=1e-12)

    def test_most_similar_is_most_negative(self):
        rng = np.random.default_rng(0)
        for _ in range(10):
            rows = rng.normal(size=(20, 6))
            train = _normalized_matrix(rows)
            g = rng.normal(size=6)
            g /= np.linalg.norm(g)
            r = gradient_similarity_scores(g, train)
            cosines = train.rows @ g
            best = train.ids[int(np.argmax(cosines))]
            assert min(r.scores, key=r.scores.get) == best

    def test_values_clipped_to_unit_interval(self):
        rng = np.random.default_rng(1)
        rows = rng.normal(size=(50, 4))
        train = _normalized_matrix(rows)
        g = train.rows[0]
        r = gradient_similarity_scores(g, train)
        assert all(-1.0 <= v <= 1.0 for v in r.scores.values())

    def test_requires_normalized_inputs(self):
        train = _normalized_matrix([[1.0, 0.0], [0.0, 1.0]])
        with pytest.raises(ContractError, match="norm"):
            gradient_similarity_scores(np.array([2.0, 0.0]), train)
        raw = GradientMatrix(ids=["a"], rows=np.array([[2.0, 0.0]]),
                             layer_segments=[("w", 2)])
        with pytest.raises(ContractError, match="normalized"):
            gradient_similarity_scores(np.array([1.0, 0.0]), raw)

    def test_dimension_mismatch(self):
        train = _normalized_matrix([[1.0, 0.0]])
        with pytest.raises(ValueError, match="mismatch"):
            gradient_similarity_scores(np.array([1.0, 0.0, 0.0]), train)


class TestTokenize:
    def test_lowercases_and_splits_punctuation(self):
        assert tokenize("Alpha, beta! ALPHA?") == {"alpha": 2, "beta": 1}

    def test_underscore_is_a_separator(self):
        assert tokenize("f3_b2 f3b2") == {"f3": 1, "b2": 1, "f3b2": 1}


class TestBM25:
    """Hand-computed Okapi scores on a three-document corpus.

    Documents: d1 = "alpha beta beta" (len 3), d2 = "alpha gamma" (len 2),
    d3 = "delta delta delta delta" (len 4); average length 3. Query
    "alpha beta beta delta" has term frequencies {alpha: 1, beta: 2,
    delta: 1}. With k1 = 1.2, b = 0.75:

      idf(alpha) = ln(1.6), idf(beta) = idf(delta) = ln(8/3)
      raw(d1) = ln(1.6) + 2.75 ln(8/3)
      raw(d2) = (2.2 / 1.9) ln(1.6)
      raw(d3) = 1.6 ln(8/3)
    """

    DOCS = {
        "d1": "alpha beta beta",
        "d2": "alpha gamma",
        "d3": "delta delta delta delta",
    }
    QUERY = "alpha beta beta delta"
    EXPECTED_RAW = {
        "d1": math.log(1.6) + 2.75 * math.log(8.0 / 3.0),
        "d2": (2.2 / 1.9) * math.log(1.6),
        "d3": 1.6 * math.log(8.0 / 3.0),
    }

    def test_hand_computed_scores(self):
        corpus = TokenizedCorpus.from_texts(self.DOCS)
        r = bm25_scores(tokenize(self.QUERY), corpus)
        assert r.estimator == "bm25"
        for doc_id, raw in self.EXPECTED_RAW.items():
            np.testing.assert_allclose(r.scores[doc_id], -raw, rtol=1e-12)

    def test_frozen_values(self):
        corpus = TokenizedCorpus.from_texts(self.DOCS)
        r = bm25_scores(tokenize(self.QUERY), corpus)
        np.testing.assert_allclose(r.scores["d1"], -3.1672842752, atol=1e-9)
        np.testing.assert_allclose(r.scores["d2"], -0.5442147286, atol=1e-9)
        np.testing.assert_allclose(r.scores["d3"], -1.5693268048, atol=1e-9)

    def test_scores_are_never_positive(self):
        rng = np.random.default_rng(2)
        vocab = [f"w{i}" for i in range(30)]
        for _ in range(20):
            texts = {
                f"d{j}": " ".join(rng.choice(vocab, size=rng.integers(1, 15)))
                for j in range(8)
            }
            query = " ".join(rng.choice(vocab, size=5))
            r = bm25_scores(tokenize(query), TokenizedCorpus.from_texts(texts))
            assert all(v <= 0.0 for v in r.scores.values())

    def test_disjoint_query_scores_zero(self):
        corpus = TokenizedCorpus.from_texts(self.DOCS)
        r = bm25_scores(tokenize("omega phi"), corpus)
        assert all(v == 0.0 for v in r.scores.values())

    def test_term_everywhere_still_counts(self):
        # df == N keeps a positive idf under the +1 smoothing
        corpus = TokenizedCorpus.from_texts({"a": "x", "b": "x"})
        r = bm25_scores(tokenize("x"), corpus)
        assert r.scores["a"] < 0.0

    def test_empty_corpus_rejected(self):
        with pytest.raises(ValueError, match="empty"):
            bm25_scores(tokenize("x"), TokenizedCorpus(docs={}))


class TestExternalScores:
    def _write(self, path, rows, header="id,score"):
        path.write_text(header + "\n" + "\n".join(rows) + "\n", encoding="utf-8")

    def test_passes_values_through(self, tmp_path):
        path = tmp_path / "scores.csv"
        self._write(path, ["a,-1.5", "b,0.25", "c,3.0"])
        r = load_external_scores(path, ["a", "b", "c"], name="trak")
        assert r.estimator == "external:trak"
        assert r.scores == {"a": -1.5, "b": 0.25, "c": 3.0}

    def test_missing_id_raises_coverage_error(self, tmp_path):
        path = tmp_path / "scores.csv"
        self._write(path, ["a,1.0"])
        with pytest.raises(CoverageError, match="missing ids.*'b'"):
            load_external_scores(path, ["a", "b"])

    def test_unknown_and_duplicate_ids(self, tmp_path):
        path = tmp_path / "scores.csv"
        self._write(path, ["a,1.0", "a,2.0", "z,0.0"])
        with pytest.raises(CoverageError, match="duplicate"):
            load_external_scores(path, ["a"])

    def test_header_is_checked(self, tmp_path):
        path = tmp_path / "scores.csv"
        self._write(path, ["a,1.0"], header="example,value")
        with pytest.raises(ValueError, match="header"):
            load_external_scores(path, ["a"])


class TestEstimatorApi:
    """The ranking classes follow the fit/params estimator conventions."""

    def test_gradient_estimator_fit_rank(self):
        rng = np.random.default_rng(3)
        train = _normalized_matrix(rng.normal(size=(10, 4)))
        est = GradientSimilarityEstimator().fit(train)
        g = train.rows[2]
        r = est.rank(g, test_id="q")
        assert r.test_id == "q"
        np.testing.assert_allclose(r.scores["tr2"], -1.0, atol=1e-9)

    def test_unfitted_rank_raises(self):
        with pytest.raises(NotFittedError):
            GradientSimilarityEstimator().rank(np.array([1.0, 0.0]))
        with pytest.raises(NotFittedError):
            BM25Estimator().rank("query")

    def test_fit_requires_normalized_matrix(self):
        raw = GradientMatrix(ids=["a"], rows=np.array([[2.0, 0.0]]),
                             layer_segments=[("w", 2)])
        with pytest.raises(ContractError):
            GradientSimilarityEstimator().fit(raw)

    def test_bm25_params_round_trip(self):
        est = BM25Estimator(k1=2.0, b=0.5)
        assert est.get_params() == {"k1": 2.0, "b": 0.5}
        est.set_params(b=0.9)
        cloned = clone(est)
        assert cloned.get_params() == {"k1": 2.0, "b": 0.9}

    def test_bm25_estimator_matches_function(self):
        est = BM25Estimator(k1=1.2, b=0.75).fit(TestBM25.DOCS)
        r = est.rank(TestBM25.QUERY)
        direct = bm25_scores(tokenize(TestBM25.QUERY),
                             TokenizedCorpus.from_texts(TestBM25.DOCS))
        assert r.scores == direct.scores
