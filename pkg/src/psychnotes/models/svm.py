"""Soft-margin kernel SVM trained by simplified SMO."""
from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass
from typing import Optional, Union

import numpy as np

from .. import _kernels
from .tree import as_matrix

log = logging.getLogger(__name__)

KERNELS = ("linear", "rbf", "poly", "sigmoid")
ALPHA_KEEP = 1e-12


def kernel(u, v, kind: str, gamma: float = 1.0, degree: int = 3, coef0: float = 0.0) -> float:
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    if u.shape != v.shape:
        raise ValueError("kernel arguments differ in dimension")
    if kind == "linear":
        return float(u @ v)
    if kind == "rbf":
        d = u - v
        return math.exp(-gamma * float(d @ d))
    if kind == "poly":
        return (gamma * float(u @ v) + coef0) ** degree
    if kind == "sigmoid":
        return math.tanh(gamma * float(u @ v) + coef0)
    raise ValueError(f"unknown kernel {kind!r}")


def gram(A: np.ndarray, B: np.ndarray, kind: str, gamma: float = 1.0, degree: int = 3,
         coef0: float = 0.0) -> np.ndarray:
    """Kernel matrix K[i, j] = k(A[i], B[j])."""
    if kind == "rbf":
        # explicit differences keep k(x, x) exactly 1
        D = np.empty((A.shape[0], B.shape[0]))
        for i in range(A.shape[0]):
            diff = B - A[i]
            D[i] = np.einsum("ij,ij->i", diff, diff)
        return np.exp(-gamma * D)
    dot = A @ B.T
    if kind == "linear":
        return dot
    if kind == "poly":
        return (gamma * dot + coef0) ** degree
    if kind == "sigmoid":
        return np.tanh(gamma * dot + coef0)
    raise ValueError(f"unknown kernel {kind!r}")


def to_signs(y) -> np.ndarray:
    """Map labels to +1/-1: class index 1 (or +1) becomes +1."""
    y = np.asarray([int(v) for v in y])
    vals = set(np.unique(y).tolist())
    if vals <= {-1, 1} and -1 in vals:
        return y.astype(np.float64)
    if vals <= {0, 1}:
        return np.where(y == 1, 1.0, -1.0)
    raise ValueError(f"labels must be 0/1 or -1/+1, got {sorted(vals)}")


@dataclass(frozen=True)
class SvmParams:
    C: float = 1.0
    kernel: str = "rbf"
    gamma: Union[float, str] = "scale"
    degree: int = 3
    coef0: float = 0.0
    tol: float = 1e-3
    max_passes: int = 10
    max_iter: int = 10000
    seed: int = 0

    def __post_init__(self):
        if self.kernel not in KERNELS:
            raise ValueError(f"unknown kernel {self.kernel!r}")
        if not self.C > 0:
            raise ValueError("C must be positive")
        if isinstance(self.gamma, str) and self.gamma != "scale":
            raise ValueError("gamma must be a number or 'scale'")

    def resolve_gamma(self, X: np.ndarray) -> float:
        if self.gamma == "scale":
            var = float(X.var())
            return 1.0 / (X.shape[1] * var) if var > 0 else 1.0
        return float(self.gamma)

    @classmethod
    def from_dict(cls, d: dict) -> "SvmParams":
        d = dict(d)
        if "random_state" in d:
            d["seed"] = d.pop("random_state")
        return cls(**d)

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class SvmModel:
    support_vectors: np.ndarray
    alpha: np.ndarray
    dual_coef: np.ndarray  # alpha_i * y_i
    bias: float
    kernel: str
    gamma: float
    degree: int
    coef0: float
    C: float
    w: Optional[np.ndarray] = None  # collapsed primal weights, linear kernel only
    support: Optional[np.ndarray] = None  # training-row index of each support vector
    params: Optional[SvmParams] = None
    converged: bool = True
    sweeps: int = 0

    family = "svm"

    @property
    def n_features(self) -> int:
        return int(self.support_vectors.shape[1])

    def decision_function(self, X) -> np.ndarray:
        X = as_matrix(X)
        if self.support_vectors.shape[0] == 0:
            return np.full(X.shape[0], self.bias)
        K = gram(X, self.support_vectors, self.kernel, self.gamma, self.degree, self.coef0)
        return K @ self.dual_coef + self.bias

    def primal_decision(self, X) -> np.ndarray:
        if self.w is None:
            raise ValueError("primal form exists only for the linear kernel")
        return as_matrix(X) @ self.w + self.bias

    def predict(self, X) -> np.ndarray:
        return (self.decision_function(X) >= 0.0).astype(np.intp)

    def decision_scores(self, X) -> np.ndarray:
        return self.decision_function(X)

    def to_payload(self) -> dict:
        return {
            "support_vectors": self.support_vectors.tolist(),
            "alpha": self.alpha.tolist(),
            "dual_coef": self.dual_coef.tolist(),
            "bias": self.bias,
            "kernel": self.kernel,
            "gamma": self.gamma,
            "degree": self.degree,
            "coef0": self.coef0,
            "C": self.C,
            "w": None if self.w is None else self.w.tolist(),
            "support": None if self.support is None else self.support.tolist(),
            "n_features": self.n_features,
            "converged": self.converged,
            "sweeps": self.sweeps,
        }

    @classmethod
    def from_payload(cls, payload: dict, params: Optional[SvmParams] = None) -> "SvmModel":
        sv = np.asarray(payload["support_vectors"], dtype=np.float64)
        return cls(
            support_vectors=sv.reshape(-1, int(payload["n_features"])),
            alpha=np.asarray(payload["alpha"], dtype=np.float64),
            dual_coef=np.asarray(payload["dual_coef"], dtype=np.float64),
            bias=float(payload["bias"]),
            kernel=payload["kernel"],
            gamma=float(payload["gamma"]),
            degree=int(payload["degree"]),
            coef0=float(payload["coef0"]),
            C=float(payload["C"]),
            w=None if payload["w"] is None else np.asarray(payload["w"], dtype=np.float64),
            support=None if payload.get("support") is None
            else np.asarray(payload["support"], dtype=np.intp),
            params=params,
            converged=bool(payload["converged"]),
            sweeps=int(payload["sweeps"]),
        )


@dataclass(frozen=True)
class SmoResult:
    """Full dual solution over the training set (before support-vector pruning)."""

    alpha: np.ndarray
    bias: float
    sweeps: int
    converged: bool


def solve_dual(K: np.ndarray, ys: np.ndarray, params: SvmParams) -> SmoResult:
    alpha, b, sweeps, converged = _kernels.smo(
        np.ascontiguousarray(K, dtype=np.float64), np.ascontiguousarray(ys, dtype=np.float64),
        float(params.C), float(params.tol), int(params.max_passes), int(params.max_iter),
        int(params.seed) & 0xFFFFFFFFFFFFFFFF)
    return SmoResult(np.asarray(alpha), float(b), int(sweeps), bool(converged))


def train_svm(X, y, params: SvmParams = SvmParams()) -> SvmModel:
    X = as_matrix(X)
    ys = to_signs(y)
    if X.shape[0] != ys.shape[0]:
        raise ValueError("X and y must be aligned")
    if len(set(ys.tolist())) < 2:
        raise ValueError("SVM training needs both classes present")
    gamma = params.resolve_gamma(X)
    K = gram(X, X, params.kernel, gamma, params.degree, params.coef0)
    res = solve_dual(K, ys, params)
    if not res.converged:
        log.warning("SMO stopped at the iteration cap (%d sweeps) before converging", res.sweeps)
    keep = np.flatnonzero(res.alpha > ALPHA_KEEP)
    alpha = res.alpha[keep]
    coef = alpha * ys[keep]
    sv = X[keep]
    w = coef @ sv if params.kernel == "linear" else None
    if w is not None and sv.shape[0] == 0:
        w = np.zeros(X.shape[1])
    return SvmModel(sv.copy(), alpha, coef, res.bias, params.kernel, gamma, params.degree,
                    params.coef0, float(params.C), w, keep, params, res.converged, res.sweeps)


def decision_function(model: SvmModel, x):
    out = model.decision_function(as_matrix(x))
    return float(out[0]) if np.ndim(x) == 1 or hasattr(x, "indices") else out


def dual_objective(alpha: np.ndarray, ys: np.ndarray, K: np.ndarray) -> float:
    """W(alpha) = sum(alpha) - 1/2 sum_ij alpha_i alpha_j y_i y_j K_ij."""
    ay = alpha * ys
    return float(alpha.sum() - 0.5 * ay @ K @ ay)


def kkt_violations(model: SvmModel, X, y) -> np.ndarray:
    """Per-sample KKT violation at the model's solution on its training set.

    With r = y f(x): alpha = 0 needs r >= 1, 0 < alpha < C needs r = 1,
    alpha = C needs r <= 1.
    """
    X = as_matrix(X)
    ys = to_signs(y)
    if model.support is None:
        raise ValueError("model carries no training-row support indices")
    r = ys * model.decision_function(X)
    alpha = np.zeros(X.shape[0])
    alpha[model.support] = model.alpha
    at_zero = alpha <= ALPHA_KEEP
    at_c = alpha >= model.C - 1e-9
    free = ~at_zero & ~at_c
    out = np.zeros(X.shape[0])
    out[at_zero] = np.maximum(0.0, 1.0 - r[at_zero])
    out[at_c] = np.maximum(0.0, r[at_c] - 1.0)
    out[free] = np.abs(r[free] - 1.0)
    return out
