"""Run configuration: INI file sections merged with command-line flags."""
from __future__ import annotations

import configparser
import hashlib
import json
from dataclasses import asdict, dataclass, fields
from pathlib import Path
from typing import Optional

from .models import FAMILY_ALIASES, UNSUPPORTED_FAMILIES
from .resample import OVERSAMPLERS
from .tune import METRICS

DEFAULT_SEED = 0

# keys whose values are input files; the config hash uses their contents
PATH_KEYS = ("corpus", "prepared", "grid", "model", "notes", "stopwords", "retained",
             "lexicon", "rules", "prompt", "stub", "params_file")
# keys that do not change results
VOLATILE_KEYS = ("out", "jobs")


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    out: str = "out"
    seed: int = DEFAULT_SEED
    jobs: int = 1
    corpus: Optional[str] = None
    prepared: Optional[str] = None
    model: Optional[str] = None
    notes: Optional[str] = None
    min_chars: int = 600
    test_fraction: float = 0.30
    oversampler: str = "none"
    family: str = "decision_tree"
    params: Optional[str] = None  # JSON object of hyperparameters for train
    params_file: Optional[str] = None
    grid: Optional[str] = None
    select_metric: str = "accuracy"
    folds: int = 3
    min_df: int = 2
    max_df_ratio: float = 0.95
    stopwords: Optional[str] = None
    retained: Optional[str] = None
    lexicon: Optional[str] = None
    rules: Optional[str] = None
    prompt: Optional[str] = None
    transport: str = "stub"
    stub: Optional[str] = None
    n_f43: int = 82
    n_f41: int = 146

    def validate(self) -> "RunConfig":
        if self.oversampler not in OVERSAMPLERS:
            raise ConfigError(f"oversampler must be one of {sorted(OVERSAMPLERS)}")
        fam = self.family.lower()
        if fam not in FAMILY_ALIASES and fam not in UNSUPPORTED_FAMILIES:
            raise ConfigError(f"unknown family {self.family!r}")
        if self.select_metric not in METRICS:
            raise ConfigError(f"select_metric must be one of {list(METRICS)}")
        if self.transport not in ("stub", "none"):
            raise ConfigError("transport must be 'stub' or 'none'")
        if not 0 < self.test_fraction < 1:
            raise ConfigError("test_fraction must lie in (0, 1)")
        if self.jobs < 1:
            raise ConfigError("jobs must be >= 1")
        if self.folds < 2:
            raise ConfigError("folds must be >= 2")
        return self

    def resolve_paths(self, base: Path = Path(".")) -> "RunConfig":
        """Make every input path absolute and check it exists."""
        for key in PATH_KEYS:
            value = getattr(self, key)
            if value is None:
                continue
            p = Path(value)
            if not p.is_absolute():
                p = (base / p).resolve()
            if key == "grid" and not p.exists() and "/" not in value and not value.endswith(".json"):
                continue  # bundled grid name
            if not p.exists():
                raise ConfigError(f"{key}: no such file {value!r}")
            setattr(self, key, str(p))
        return self

    def hyperparams(self) -> dict:
        if self.params_file:
            text = Path(self.params_file).read_text(encoding="utf-8")
        elif self.params:
            text = self.params
        else:
            return {}
        try:
            obj = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"params is not valid JSON: {exc}") from exc
        if not isinstance(obj, dict):
            raise ConfigError("params must be a JSON object")
        return obj

    def fingerprint(self) -> str:
        """sha256 over the resolved config, with input files hashed by content."""
        d = asdict(self)
        for key in VOLATILE_KEYS:
            d.pop(key)
        for key in PATH_KEYS:
            if d[key] is not None and Path(d[key]).is_file():
                d[key] = "sha256:" + hashlib.sha256(Path(d[key]).read_bytes()).hexdigest()
        blob = json.dumps(d, sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()


_FIELD_TYPES = {f.name: f.type for f in fields(RunConfig)}


def _coerce(key: str, value: str):
    kind = _FIELD_TYPES[key]
    try:
        if kind == "int":
            return int(value)
        if kind == "float":
            return float(value)
    except ValueError:
        raise ConfigError(f"{key}: expected {kind}, got {value!r}") from None
    return value


def read_config_file(path) -> dict:
    """Flatten every section of an INI file into one key -> value mapping.

    Relative paths inside the file are taken relative to the file itself.
    """
    parser = configparser.ConfigParser(interpolation=None)
    try:
        with open(path, encoding="utf-8") as fh:
            parser.read_file(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    except configparser.Error as exc:
        raise ConfigError(f"{path}: {exc}") from None
    out = {}
    base = Path(path).resolve().parent
    for section in parser.sections():
        for key, value in parser.items(section):
            key = key.replace("-", "_")
            if key not in _FIELD_TYPES:
                raise ConfigError(f"{path}: unknown key {key!r} in [{section}]")
            value = _coerce(key, value)
            if key in PATH_KEYS and not Path(value).is_absolute():
                candidate = base / value
                if candidate.exists() or key != "grid":
                    value = str(candidate)
            out[key] = value
    return out


def build_config(file_values: dict, flag_values: dict) -> RunConfig:
    """Defaults, then file values, then flags (flags win)."""
    merged = {**file_values, **{k: v for k, v in flag_values.items() if v is not None}}
    unknown = set(merged) - set(_FIELD_TYPES)
    if unknown:
        raise ConfigError(f"unknown settings {sorted(unknown)}")
    return RunConfig(**merged).validate()
