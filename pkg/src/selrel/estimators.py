"""Per-test-instance influence rankings over the training set.

Three sources produce rankings under one shared sign convention
("more negative = more helpful, more positive = more harmful"):
gradient similarity (negated cosine on normalized gradients), Okapi BM25
token overlap (negated, since raw BM25 is non-negative), and externally
computed score files passed through unchanged.
"""

import csv
import math
import re
from collections import Counter
from dataclasses import dataclass, field

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.exceptions import NotFittedError

from .gradstore import GradientMatrix
from .errors import ContractError, CoverageError

SIGN_CONVENTION = "more negative = more helpful, more positive = more harmful"

_TOKEN_RE = re.compile(r"[^\W_]+", re.UNICODE)


@dataclass(eq=False)
class InfluenceRanking:
    """One influence score per training id for a single test instance."""

    test_id: str
    estimator: str
    scores: dict[str, float]
    sign_convention: str = SIGN_CONVENTION

    def __post_init__(self):
        if not self.scores:
            raise ValueError("ranking must cover at least one training id")
        self.scores = {str(k): float(v) for k, v in self.scores.items()}
        bad = [k for k, v in self.scores.items() if not math.isfinite(v)]
        if bad:
            raise ValueError(f"non-finite influence scores for ids {bad[:5]}")

    @property
    def training_ids(self) -> list[str]:
        return list(self.scores)


@dataclass(eq=False)
class TokenizedCorpus:
    """Token statistics of the training documents for BM25 scoring."""

    docs: dict[str, Counter]
    doc_lengths: dict[str, int] = field(init=False)
    avg_doc_length: float = field(init=False)
    document_frequencies: Counter = field(init=False)

    def __post_init__(self):
        self.doc_lengths = {d: sum(toks.values()) for d, toks in self.docs.items()}
        n = len(self.docs)
        self.avg_doc_length = (sum(self.doc_lengths.values()) / n) if n else 0.0
        self.document_frequencies = Counter()
        for toks in self.docs.values():
            self.document_frequencies.update(set(toks))

    @classmethod
    def from_texts(cls, texts: dict[str, str]) -> "TokenizedCorpus":
        return cls(docs={str(d): tokenize(t) for d, t in texts.items()})


def tokenize(text: str) -> Counter:
    """Lowercase, split on non-alphanumeric runs, return a token multiset."""
    return Counter(_TOKEN_RE.findall(text.lower()))


def gradient_similarity_scores(
    test_gradient, train: GradientMatrix, test_id: str = "test"
) -> InfluenceRanking:
    """score(i) = -cos(g_test, g_i); both inputs must be normalized.

    Values lie in [-1, 1]; the most similar training gradients come out most
    negative (most helpful).
    """
    g = np.asarray(test_gradient, dtype=np.float64)
    if g.ndim != 1:
        raise ValueError(f"test gradient must be a vector, got shape {g.shape}")
    if g.shape[0] != train.dim:
        raise ValueError(
            f"dimension mismatch: test gradient {g.shape[0]}, train {train.dim}"
        )
    if not train.normalized:
        raise ContractError("training matrix must be normalized for similarity")
    norm = float(np.linalg.norm(g))
    if abs(norm - 1.0) > 1e-6:
        raise ContractError(f"test gradient norm {norm!r} is not 1 within 1e-6")
    sims = train.rows.astype(np.float64) @ g
    np.clip(sims, -1.0, 1.0, out=sims)
    scores = {eid: -float(s) for eid, s in zip(train.ids, sims)}
    return InfluenceRanking(test_id=test_id, estimator="gradient_similarity", scores=scores)


def bm25_scores(
    query_tokens: Counter,
    corpus: TokenizedCorpus,
    test_id: str = "test",
    k1: float = 1.2,
    b: float = 0.75,
) -> InfluenceRanking:
    """Okapi BM25 per document, negated to fit the sign convention.

    idf(t) = ln(1 + (N - df + 0.5)/(df + 0.5)) is non-negative, so raw scores
    are >= 0 and returned scores are <= 0. Query term frequencies weight each
    term's contribution.
    """
    if not corpus.docs:
        raise ValueError("corpus is empty")
    n_docs = len(corpus.docs)
    idf = {}
    for tok in query_tokens:
        df = corpus.document_frequencies.get(tok, 0)
        if df:
            idf[tok] = np.log(1.0 + (n_docs - df + 0.5) / (df + 0.5))
    scores = {}
    for doc_id, toks in corpus.docs.items():
        raw = 0.0
        if idf:
            dl = corpus.doc_lengths[doc_id]
            norm = k1 * (1.0 - b + b * dl / corpus.avg_doc_length)
            for tok, w in idf.items():
                tf = toks.get(tok, 0)
                if tf:
                    raw += query_tokens[tok] * w * tf * (k1 + 1.0) / (tf + norm)
        scores[doc_id] = -raw
    return InfluenceRanking(test_id=test_id, estimator="bm25", scores=scores)


def load_external_scores(
    path, training_ids, test_id: str = "test", name: str = "external"
) -> InfluenceRanking:
    """Read an "id,score" CSV covering the training set exactly.

    Values pass through unchanged; the caller attests that they follow the
    sign convention. Missing or duplicate ids raise CoverageError listing the
    discrepancies.
    """
    scores = {}
    duplicates = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header[:2]] != ["id", "score"]:
            raise ValueError(f"expected 'id,score' header in {path}, got {header!r}")
        for row in reader:
            if not row:
                continue
            eid, value = row[0], float(row[1])
            if eid in scores:
                duplicates.append(eid)
            scores[eid] = value
    wanted = [str(i) for i in training_ids]
    missing = sorted(set(wanted) - set(scores))
    extra = sorted(set(scores) - set(wanted))
    if duplicates or missing or extra:
        parts = []
        if duplicates:
            parts.append(f"duplicate ids {sorted(set(duplicates))}")
        if missing:
            parts.append(f"missing ids {missing}")
        if extra:
            parts.append(f"unknown ids {extra}")
        raise CoverageError(f"{path}: " + "; ".join(parts))
    return InfluenceRanking(
        test_id=test_id,
        estimator=f"external:{name}",
        scores={i: scores[i] for i in wanted},
    )


class GradientSimilarityEstimator(BaseEstimator):
    """Ranks training examples by negated cosine to a test gradient."""

    def fit(self, train: GradientMatrix, y=None):
        if not train.normalized:
            raise ContractError("fit requires a normalized gradient matrix")
        self.train_ = train
        return self

    def rank(self, test_gradient, test_id: str = "test") -> InfluenceRanking:
        if not hasattr(self, "train_"):
            raise NotFittedError("call fit with a training gradient matrix first")
        return gradient_similarity_scores(test_gradient, self.train_, test_id=test_id)


class BM25Estimator(BaseEstimator):
    """Ranks training documents by negated Okapi BM25 overlap with a query."""

    def __init__(self, k1: float = 1.2, b: float = 0.75):
        self.k1 = k1
        self.b = b

    def fit(self, texts: dict[str, str], y=None):
        self.corpus_ = TokenizedCorpus.from_texts(texts)
        return self

    def rank(self, query_text: str, test_id: str = "test") -> InfluenceRanking:
        if not hasattr(self, "corpus_"):
            raise NotFittedError("call fit with training texts first")
        return bm25_scores(
            tokenize(query_text), self.corpus_, test_id=test_id, k1=self.k1, b=self.b
        )
