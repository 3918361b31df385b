"""Model file: one JSON document holding family, params, vocabulary and payload.

Floats are written with Python's shortest round-trip repr, so every value
reads back bit-identically.
"""
from __future__ import annotations

import json
from pathlib import Path
from typing import Optional

from ..features import Vocabulary
from .forest import ForestModel
from .gbt import GbtModel, GbtParams
from .svm import SvmModel, SvmParams
from .tree import TreeModel, TreeParams

FORMAT_VERSION = 1


class ModelFileError(ValueError):
    pass


def _params_dict(model) -> dict:
    if isinstance(model, ForestModel):
        return {"n_estimators": len(model.trees), "bootstrap": model.bootstrap,
                "tree": model.params.to_dict()}
    return model.params.to_dict() if model.params is not None else {}


def model_document(model, vocabulary: Optional[Vocabulary] = None,
                   metadata: Optional[dict] = None) -> dict:
    doc = {
        "format_version": FORMAT_VERSION,
        "family": model.family,
        "params": _params_dict(model),
        "vocabulary": vocabulary.to_json() if vocabulary is not None else None,
        "payload": model.to_payload(),
    }
    if metadata:
        doc["metadata"] = metadata
    return doc


def dumps_model(model, vocabulary=None, metadata=None) -> str:
    return json.dumps(model_document(model, vocabulary, metadata), sort_keys=True,
                      allow_nan=False) + "\n"


def save_model(path, model, vocabulary=None, metadata=None) -> None:
    Path(path).write_text(dumps_model(model, vocabulary, metadata), encoding="utf-8")


def model_from_document(doc: dict):
    """Return ``(model, vocabulary or None, metadata dict)``."""
    if not isinstance(doc, dict) or "format_version" not in doc:
        raise ModelFileError("not a model file")
    if doc["format_version"] != FORMAT_VERSION:
        raise ModelFileError(f"unsupported format_version {doc['format_version']!r}")
    family, params, payload = doc.get("family"), doc.get("params", {}), doc.get("payload")
    if payload is None:
        raise ModelFileError("model file has no payload")
    if family == "tree":
        model = TreeModel.from_payload(payload, TreeParams.from_dict(params))
    elif family == "forest":
        model = ForestModel.from_payload(payload, TreeParams.from_dict(params["tree"]))
    elif family == "svm":
        model = SvmModel.from_payload(payload, SvmParams.from_dict(params))
    elif family == "gbt":
        model = GbtModel.from_payload(payload, GbtParams.from_dict(params))
    else:
        raise ModelFileError(f"unknown model family {family!r}")
    vocab = doc.get("vocabulary")
    return model, (Vocabulary.from_json(vocab) if vocab else None), doc.get("metadata", {})


def loads_model(text: str):
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ModelFileError(f"model file is not valid JSON: {exc}") from exc
    return model_from_document(doc)


def load_model(path):
    return loads_model(Path(path).read_text(encoding="utf-8"))
