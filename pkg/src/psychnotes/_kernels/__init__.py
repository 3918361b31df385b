"""Hot training kernels with a compiled core and a pure-Python fallback.

The compiled extension is used when it imports; set ``PSYCHNOTES_PURE_PYTHON=1``
to force the numpy fallback. Both backends expose the same four functions.
"""
import os

from . import _fallback
from ._fallback import ENTROPY, GINI, LOG_LOSS, TIE_EPS, SplitMix64, binary_impurity

try:
    from . import _ckernels
except ImportError:  # extension not built
    _ckernels = None

if _ckernels is not None and not os.environ.get("PSYCHNOTES_PURE_PYTHON"):
    _impl, BACKEND = _ckernels, "cython"
else:
    _impl, BACKEND = _fallback, "python"

best_split_classif = _impl.best_split_classif
best_split_gbt = _impl.best_split_gbt
smo = _impl.smo


def backends():
    """Mapping of available backend name to module (used by tests and benchmarks)."""
    out = {"python": _fallback}
    if _ckernels is not None:
        out["cython"] = _ckernels
    return out


__all__ = [
    "BACKEND", "ENTROPY", "GINI", "LOG_LOSS", "TIE_EPS", "SplitMix64",
    "backends", "best_split_classif", "best_split_gbt", "binary_impurity", "smo",
]
