"""Text normalisation, stopword removal and lemmatisation for Spanish notes."""
from __future__ import annotations

import hashlib
import unicodedata
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Iterable, Optional

from .corpus import ClinicalNote

_DIGITS = frozenset("0123456789")
_LETTERS = frozenset("abcdefghijklmnopqrstuvwxyzñ")
_ALLOWED = _LETTERS | _DIGITS

# a suffix rule only fires if at least this many characters precede the suffix
MIN_STEM = 3


def _fold_char(ch: str) -> str:
    low = ch.lower()
    if low == "ñ":
        return "ñ"
    base = "".join(c for c in unicodedata.normalize("NFD", low)
                   if not unicodedata.combining(c))
    return base if len(base) == 1 and base in _ALLOWED else " "


def normalize(text: str) -> str:
    """Lowercase, strip accents (keeping ñ), blank out everything except
    Spanish letters and digits, and collapse whitespace.

    >>> normalize("El paciente ACUDE  por ansiedad.")
    'el paciente acude por ansiedad'
    """
    return " ".join("".join(_fold_char(ch) for ch in text).split())


def tokenize(text: str) -> list:
    return text.split()


@dataclass(frozen=True)
class StopwordList:
    entries: frozenset
    retained_overrides: frozenset = frozenset()
    source: str = "inline"
    digest: str = ""

    def __post_init__(self):
        # overrides always win, so keep the two sets disjoint
        object.__setattr__(self, "entries", frozenset(self.entries) - frozenset(self.retained_overrides))
        object.__setattr__(self, "retained_overrides", frozenset(self.retained_overrides))

    def __contains__(self, token: str) -> bool:
        return token in self.entries


@dataclass(frozen=True)
class LemmaLexicon:
    table: dict
    suffix_rules: tuple = ()
    source: str = "inline"
    digest: str = ""

    def lemma(self, token: str) -> str:
        hit = self.table.get(token)
        if hit is not None:
            return hit
        for suffix, repl in self.suffix_rules:
            if token.endswith(suffix) and len(token) - len(suffix) >= MIN_STEM:
                return token[: len(token) - len(suffix)] + repl
        return token


def _data_text(name: str) -> str:
    return resources.files("psychnotes").joinpath("data", name).read_text(encoding="utf-8")


def _read(path: Optional[Path], bundled: str):
    if path is None:
        text = _data_text(bundled)
        source = f"bundled:{bundled}"
    else:
        text = Path(path).read_text(encoding="utf-8")
        source = str(path)
    return text, source, hashlib.sha256(text.encode("utf-8")).hexdigest()


def _lines(text: str) -> Iterable[str]:
    for raw in text.splitlines():
        line = raw.split("#", 1)[0].strip()
        if line:
            yield line


def parse_wordlist(text: str) -> frozenset:
    return frozenset(normalize(line) for line in _lines(text) if normalize(line))


def load_stopwords(path=None, retained_path=None) -> StopwordList:
    """Load the stopword file and its clinical retention list (bundled by default)."""
    text, source, digest = _read(path, "stopwords_es.txt")
    kept_text, _, kept_digest = _read(retained_path, "stopwords_retained_es.txt")
    combined = hashlib.sha256((digest + kept_digest).encode()).hexdigest()
    return StopwordList(parse_wordlist(text), parse_wordlist(kept_text), source, combined)


def parse_lexicon(text: str):
    table, rules = {}, []
    for lineno, line in enumerate(_lines(text), 1):
        parts = line.split("\t")
        if len(parts) != 2:
            raise ValueError(f"lexicon line {lineno}: expected two tab-separated fields")
        left, right = parts[0].strip(), normalize(parts[1])
        if left.startswith("-"):
            rules.append((normalize(left[1:]), right))
        else:
            table[normalize(left)] = right
    for lemma in set(table.values()):
        # lemmas are fixed points of the lookup
        table.setdefault(lemma, lemma)
    return table, tuple(rules)


def load_lexicon(path=None) -> LemmaLexicon:
    text, source, digest = _read(path, "lemmas_es.tsv")
    table, rules = parse_lexicon(text)
    return LemmaLexicon(table, rules, source, digest)


def remove_stopwords(tokens: Iterable[str], stopwords: StopwordList) -> list:
    return [t for t in tokens if t not in stopwords.entries]


def lemmatize(tokens: Iterable[str], lexicon: LemmaLexicon) -> list:
    return [lexicon.lemma(t) for t in tokens]


@dataclass(frozen=True)
class Document:
    note_id: str
    tokens: tuple

    def text(self) -> str:
        return " ".join(self.tokens)


def preprocess_text(text: str, stopwords: StopwordList, lexicon: LemmaLexicon) -> list:
    tokens = remove_stopwords(tokenize(normalize(text)), stopwords)
    # a lemma that is itself a stopword would survive one pass but not a second
    return remove_stopwords(lemmatize(tokens, lexicon), stopwords)


def preprocess_pipeline(note: ClinicalNote, stopwords: StopwordList,
                        lexicon: LemmaLexicon) -> Document:
    return Document(note.id, tuple(preprocess_text(note.text, stopwords, lexicon)))
