"""Vocabulary fitting and TF-IDF sparse vectors."""
from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np


class FeatureError(ValueError):
    pass


@dataclass(frozen=True)
class SparseVector:
    """(index, weight) pairs sorted by index, over ``dim`` features."""

    indices: tuple
    weights: tuple
    dim: int
    normalized: bool = False

    def __post_init__(self):
        if len(self.indices) != len(self.weights):
            raise FeatureError("indices and weights differ in length")
        prev = -1
        for i in self.indices:
            if i <= prev or i >= self.dim:
                raise FeatureError("indices must be strictly increasing and < dim")
            prev = i
        if not all(math.isfinite(w) for w in self.weights):
            raise FeatureError("non-finite weight")
        if self.normalized and self.weights and abs(self.norm() - 1.0) > 1e-9:
            raise FeatureError("vector flagged l2-normalised but its norm is not 1")

    @classmethod
    def from_dense(cls, row, normalized: bool = False) -> "SparseVector":
        row = np.asarray(row, dtype=float)
        nz = np.flatnonzero(row)
        return cls(tuple(int(i) for i in nz), tuple(float(row[i]) for i in nz),
                   int(row.shape[0]), normalized)

    def to_dense(self) -> np.ndarray:
        out = np.zeros(self.dim)
        if self.indices:
            out[list(self.indices)] = self.weights
        return out

    def norm(self) -> float:
        return math.sqrt(math.fsum(w * w for w in self.weights))

    def to_json(self) -> list:
        return [list(self.indices), list(self.weights)]

    @classmethod
    def from_json(cls, obj, dim: int) -> "SparseVector":
        return cls(tuple(int(i) for i in obj[0]), tuple(float(w) for w in obj[1]), dim)


def to_matrix(vectors: Sequence[SparseVector], dim: int | None = None) -> np.ndarray:
    """Stack sparse vectors into a dense C-contiguous float64 matrix."""
    if dim is None:
        if not vectors:
            raise FeatureError("cannot infer dimension of an empty batch")
        dim = vectors[0].dim
    X = np.zeros((len(vectors), dim))
    for r, v in enumerate(vectors):
        if v.dim != dim:
            raise FeatureError(f"vector dimension {v.dim} != {dim}")
        if v.indices:
            X[r, list(v.indices)] = v.weights
    return X


@dataclass(frozen=True)
class Vocabulary:
    terms: tuple  # sorted lexicographically; position is the feature index
    df: tuple
    n_docs: int
    min_df: int = 2
    max_df_ratio: float = 0.95
    index: dict = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if list(self.terms) != sorted(self.terms) or len(set(self.terms)) != len(self.terms):
            raise FeatureError("vocabulary terms must be unique and sorted")
        object.__setattr__(self, "index", {t: i for i, t in enumerate(self.terms)})

    def __len__(self):
        return len(self.terms)

    def idf(self, i: int) -> float:
        return math.log((1 + self.n_docs) / (1 + self.df[i])) + 1.0

    def to_json(self) -> dict:
        return {"terms": list(self.terms), "df": list(self.df), "n_docs": self.n_docs,
                "min_df": self.min_df, "max_df_ratio": self.max_df_ratio,
                "tf": "raw", "idf": "smooth", "norm": "l2"}

    @classmethod
    def from_json(cls, obj: dict) -> "Vocabulary":
        return cls(tuple(obj["terms"]), tuple(int(d) for d in obj["df"]), int(obj["n_docs"]),
                   int(obj["min_df"]), float(obj["max_df_ratio"]))


def build_vocabulary(docs, min_df: int = 2, max_df_ratio: float = 0.95) -> Vocabulary:
    """Keep terms with ``min_df <= df`` and ``df / n_docs <= max_df_ratio``.

    ``docs`` holds Documents or plain token sequences; fit on training
    documents only.
    """
    docs = [getattr(d, "tokens", d) for d in docs]
    if not docs:
        raise FeatureError("cannot build a vocabulary from zero documents")
    n = len(docs)
    df = Counter()
    for toks in docs:
        df.update(set(toks))
    kept = sorted(t for t, c in df.items() if c >= min_df and c / n <= max_df_ratio)
    if not kept:
        raise FeatureError("every term was filtered out by the df thresholds")
    return Vocabulary(tuple(kept), tuple(df[t] for t in kept), n, min_df, max_df_ratio)


def vectorize(doc, vocab: Vocabulary) -> SparseVector:
    """Raw tf times smoothed idf, then l2 normalisation; OOV tokens are ignored."""
    tokens = getattr(doc, "tokens", doc)
    tf = Counter(vocab.index[t] for t in tokens if t in vocab.index)
    idx = sorted(tf)
    weights = [tf[i] * vocab.idf(i) for i in idx]
    norm = math.sqrt(math.fsum(w * w for w in weights))
    if norm > 0:
        weights = [w / norm for w in weights]
    return SparseVector(tuple(idx), tuple(weights), len(vocab), normalized=True)


def vectorize_all(docs, vocab: Vocabulary) -> list:
    return [vectorize(d, vocab) for d in docs]
