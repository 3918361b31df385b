"""Stratified splitting and minority oversampling (random duplication, SMOTE)."""
from __future__ import annotations

import json
from collections import Counter
from dataclasses import dataclass
from decimal import ROUND_HALF_UP, Decimal
from typing import Optional, Sequence

import numpy as np

from .features import SparseVector, to_matrix


class ResampleError(ValueError):
    pass


def round_half_up(x) -> int:
    return int(Decimal(str(x)).quantize(Decimal(1), rounding=ROUND_HALF_UP))


def class_test_count(n_class: int, test_fraction: float) -> int:
    return round_half_up(Decimal(str(test_fraction)) * n_class)


@dataclass(frozen=True)
class Split:
    train: tuple
    test: tuple
    seed: int
    test_fraction: float

    def to_json(self) -> str:
        return json.dumps({"seed": self.seed, "test_fraction": self.test_fraction,
                           "train": list(self.train), "test": list(self.test)})

    @classmethod
    def from_json(cls, text: str) -> "Split":
        obj = json.loads(text)
        return cls(tuple(obj["train"]), tuple(obj["test"]), int(obj["seed"]),
                   float(obj["test_fraction"]))


def _labels_of(data) -> list:
    return list(data.labels) if hasattr(data, "labels") else list(data)


def stratified_split(data, test_fraction: float = 0.30, seed: int = 0) -> Split:
    """Per-class seeded shuffle, then the first round-half-up(fraction * n_c) go to test.

    ``data`` is a Corpus or a plain label sequence.
    """
    if not 0 < test_fraction < 1:
        raise ResampleError("test_fraction must lie in (0, 1)")
    labels = _labels_of(data)
    counts = Counter(labels)
    if any(c < 2 for c in counts.values()):
        raise ResampleError("every class needs at least 2 members to split")
    rng = np.random.default_rng(seed)
    test = []
    for cls in sorted(counts):
        members = np.array([i for i, lab in enumerate(labels) if lab == cls])
        rng.shuffle(members)
        test.extend(members[: class_test_count(len(members), test_fraction)].tolist())
    test_set = set(test)
    train = [i for i in range(len(labels)) if i not in test_set]
    return Split(tuple(train), tuple(sorted(test)), int(seed), float(test_fraction))


@dataclass(frozen=True)
class Provenance:
    source: int
    neighbor: Optional[int] = None
    lam: Optional[float] = None


@dataclass(frozen=True)
class ResampledSet:
    vectors: tuple
    labels: tuple
    provenance: tuple  # one entry per appended row

    @property
    def n_original(self) -> int:
        return len(self.vectors) - len(self.provenance)


def _minority(labels) -> tuple:
    counts = Counter(labels)
    if len(counts) != 2:
        raise ResampleError(f"oversampling needs exactly two classes, got {len(counts)}")
    (a, ca), (b, cb) = sorted(counts.items())
    # on a tie nothing is appended, so which class is "minority" is moot
    return (a, b, cb - ca) if ca <= cb else (b, a, ca - cb)


def random_oversample(vectors: Sequence[SparseVector], labels: Sequence, seed: int = 0) -> ResampledSet:
    """Append uniformly drawn (with replacement) minority duplicates until parity."""
    labels = list(labels)
    minority, _, need = _minority(labels)
    pool = [i for i, lab in enumerate(labels) if lab == minority]
    rng = np.random.default_rng(seed)
    picks = rng.integers(0, len(pool), size=need) if need else []
    prov = tuple(Provenance(pool[int(p)]) for p in picks)
    return ResampledSet(tuple(vectors) + tuple(vectors[p.source] for p in prov),
                        tuple(labels) + (minority,) * need, prov)


def pairwise_sq_dists(X: np.ndarray) -> np.ndarray:
    """Exact squared Euclidean distances via explicit differences (no Gram trick)."""
    n = X.shape[0]
    D = np.empty((n, n))
    for i in range(n):
        diff = X - X[i]
        D[i] = np.einsum("ij,ij->i", diff, diff)
    return D


def nearest_neighbors(X: np.ndarray, k: int) -> np.ndarray:
    """k nearest other rows of ``X``; distance ties go to the lower index."""
    D = pairwise_sq_dists(X)
    np.fill_diagonal(D, np.inf)
    return np.argsort(D, axis=1, kind="stable")[:, :k]


def smote(vectors: Sequence[SparseVector], labels: Sequence, k: int = 5, seed: int = 0) -> ResampledSet:
    """SMOTE up to class parity.

    Sources cycle round-robin through a seeded shuffle of the minority rows;
    each synthetic row is ``x + lam * (z - x)`` with ``z`` drawn uniformly from
    the ``k`` nearest minority neighbours of ``x`` (``k`` capped at
    minority size - 1) and ``lam ~ U[0, 1)``.
    """
    labels = list(labels)
    minority, _, need = _minority(labels)
    pool = np.array([i for i, lab in enumerate(labels) if lab == minority])
    if len(pool) < 2:
        raise ResampleError("SMOTE needs at least 2 minority samples")
    if need == 0:
        return ResampledSet(tuple(vectors), tuple(labels), ())
    k = min(k, len(pool) - 1)
    if k < 1:
        raise ResampleError("k must be >= 1")
    dim = vectors[0].dim
    Xmin = to_matrix([vectors[i] for i in pool], dim)
    nbrs = nearest_neighbors(Xmin, k)
    rng = np.random.default_rng(seed)
    order = rng.permutation(len(pool))
    new_vecs, prov = [], []
    for t in range(need):
        a = int(order[t % len(pool)])
        b = int(nbrs[a, rng.integers(0, k)])
        lam = float(rng.random())
        x, z = Xmin[a], Xmin[b]
        new_vecs.append(SparseVector.from_dense(x + lam * (z - x)))
        prov.append(Provenance(int(pool[a]), int(pool[b]), lam))
    return ResampledSet(tuple(vectors) + tuple(new_vecs),
                        tuple(labels) + (minority,) * need, tuple(prov))


OVERSAMPLERS = {
    "none": None,
    "random": random_oversample,
    "smote": smote,
}


def oversample(name: str, vectors, labels, seed: int) -> ResampledSet:
    if name not in OVERSAMPLERS:
        raise ResampleError(f"unknown oversampler {name!r}")
    fn = OVERSAMPLERS[name]
    if fn is None:
        return ResampledSet(tuple(vectors), tuple(labels), ())
    return fn(vectors, labels, seed=seed)
