"""Clinical-note records, corpus I/O, length filtering and demographics."""
from __future__ import annotations

import csv
import enum
import json
import math
import re
import unicodedata
from collections import Counter
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Optional


class CorpusError(ValueError):
    """Malformed corpus input; ``line`` is 1-based when known."""

    def __init__(self, message: str, line: Optional[int] = None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line is not None else message)


class Label(enum.IntEnum):
    # ordinal order is the global tie-break order
    F41_ANXIETY = 0
    F43_ADJUSTMENT = 1

    @property
    def code(self) -> str:
        return "F41" if self is Label.F41_ANXIETY else "F43"

    @classmethod
    def parse(cls, value: str) -> "Label":
        key = str(value).strip().upper()
        if key.startswith("F41"):
            return cls.F41_ANXIETY
        if key.startswith("F43"):
            return cls.F43_ADJUSTMENT
        raise ValueError(f"unknown label {value!r}")


class Gender(str, enum.Enum):
    MALE = "V"
    FEMALE = "M"
    UNKNOWN = "D"


@dataclass(frozen=True)
class ClinicalNote:
    id: str
    text: str

    @property
    def char_length(self) -> int:
        return len(self.text)


@dataclass(frozen=True)
class Demographics:
    gender: Gender = Gender.UNKNOWN
    age: Optional[int] = None

    def __post_init__(self):
        if self.age is not None and not 0 <= self.age <= 120:
            raise ValueError(f"age {self.age} outside [0, 120]")


@dataclass(frozen=True)
class LabeledNote:
    note: ClinicalNote
    demographics: Demographics = field(default_factory=Demographics)
    label: Optional[Label] = None


@dataclass(frozen=True)
class Corpus:
    notes: tuple

    def __post_init__(self):
        seen = set()
        for ln in self.notes:
            if not ln.note.id:
                raise CorpusError("empty note id")
            if ln.note.id in seen:
                raise CorpusError(f"duplicate note id {ln.note.id!r}")
            seen.add(ln.note.id)

    def __len__(self):
        return len(self.notes)

    def __iter__(self):
        return iter(self.notes)

    @property
    def class_counts(self) -> dict:
        counts = Counter(ln.label for ln in self.notes if ln.label is not None)
        return {lab: counts[lab] for lab in Label if counts[lab]}

    @property
    def labels(self) -> list:
        return [ln.label for ln in self.notes]


# --------------------------------------------------------------------- I/O

FIELDS = ("id", "text", "label", "age", "gender")


def _record_to_note(rec: dict, line: int, require_label: bool) -> LabeledNote:
    if not isinstance(rec, dict):
        raise CorpusError("record is not an object", line)
    for key in ("id", "text"):
        if rec.get(key) in (None, ""):
            if key == "text" and rec.get(key) == "":
                continue
            raise CorpusError(f"missing field {key!r}", line)
    if "label" not in rec and require_label:
        raise CorpusError("missing field 'label'", line)
    raw_label = rec.get("label")
    if raw_label in (None, ""):
        if require_label:
            raise CorpusError("missing label", line)
        label = None
    else:
        try:
            label = Label.parse(raw_label)
        except ValueError as exc:
            raise CorpusError(str(exc), line) from None
    age = rec.get("age")
    if age in (None, ""):
        age = None
    else:
        try:
            age = int(age)
        except (TypeError, ValueError):
            raise CorpusError(f"bad age {age!r}", line) from None
        if not 0 <= age <= 120:
            raise CorpusError(f"age {age} outside [0, 120]", line)
    gender = rec.get("gender")
    try:
        gender = Gender(gender) if gender not in (None, "") else Gender.UNKNOWN
    except ValueError:
        raise CorpusError(f"bad gender {gender!r}", line) from None
    note = ClinicalNote(id=str(rec["id"]), text=str(rec["text"]))
    return LabeledNote(note, Demographics(gender, age), label)


def load_corpus(path, format: Optional[str] = None, require_label: bool = True) -> Corpus:
    """Read a JSONL or CSV corpus, preserving record order.

    ``format`` defaults to the file extension. JSONL lines carrying a
    ``_meta`` key (provenance headers written by the CLI) are skipped.
    """
    path = Path(path)
    fmt = (format or path.suffix.lstrip(".")).lower()
    notes = []
    if fmt == "jsonl":
        with path.open(encoding="utf-8") as fh:
            for lineno, raw in enumerate(fh, 1):
                if not raw.strip():
                    continue
                try:
                    rec = json.loads(raw)
                except json.JSONDecodeError as exc:
                    raise CorpusError(f"invalid JSON ({exc.msg})", lineno) from None
                if isinstance(rec, dict) and "_meta" in rec:
                    continue
                notes.append(_record_to_note(rec, lineno, require_label))
    elif fmt == "csv":
        with path.open(encoding="utf-8", newline="") as fh:
            reader = csv.DictReader(fh)
            missing = {"id", "text", "label"} - set(reader.fieldnames or ())
            if missing:
                raise CorpusError(f"CSV header lacks {sorted(missing)}", 1)
            for rec in reader:
                notes.append(_record_to_note(rec, reader.line_num, require_label))
    else:
        raise CorpusError(f"unsupported corpus format {fmt!r}")
    try:
        return Corpus(tuple(notes))
    except CorpusError as exc:
        raise CorpusError(str(exc)) from None


def note_record(ln: LabeledNote) -> dict:
    return {
        "id": ln.note.id,
        "text": ln.note.text,
        "label": ln.label.code if ln.label is not None else None,
        "age": ln.demographics.age,
        "gender": ln.demographics.gender.value,
    }


def save_corpus(corpus: Corpus, path, format: Optional[str] = None) -> None:
    path = Path(path)
    fmt = (format or path.suffix.lstrip(".")).lower()
    records = [note_record(ln) for ln in corpus]
    if fmt == "jsonl":
        with path.open("w", encoding="utf-8", newline="\n") as fh:
            for rec in records:
                fh.write(json.dumps(rec, ensure_ascii=False) + "\n")
    elif fmt == "csv":
        with path.open("w", encoding="utf-8", newline="") as fh:
            writer = csv.DictWriter(fh, fieldnames=FIELDS)
            writer.writeheader()
            for rec in records:
                writer.writerow({k: ("" if v is None else v) for k, v in rec.items()})
    else:
        raise CorpusError(f"unsupported corpus format {fmt!r}")


def filter_by_length(corpus: Corpus, min_chars: int = 600) -> Corpus:
    if min_chars < 0:
        raise ValueError("min_chars must be >= 0")
    return Corpus(tuple(ln for ln in corpus if ln.note.char_length >= min_chars))


# ------------------------------------------------------------ demographics

def _fold(text: str) -> str:
    """Lowercase and strip diacritics one character at a time (length-preserving)."""
    out = []
    for ch in text.lower():
        base = unicodedata.normalize("NFD", ch)[:1]
        out.append(base if base else ch)
    return "".join(out)


# "anos", "a nos", "anios", "anyos", "aos", "a." (accents already folded)
_AGE = r"(\d{1,3})\s*-?\s*(?:a\s?n\s?[iy]?\s?os?|aos|a\.)(?![a-z])"

# tier 1: "varon de 20 anos", "mujer 30 anos", "hombre soltero de 52 anos"
_TIER1 = re.compile(
    r"\b(varon|varn|hombre|mujer|mujr|muger)\b[\s,]*(?:[a-z]+[\s,]+){0,3}?(?:de\s*)?" + _AGE
)
_TIER1_MALE = {"varon", "varn", "hombre"}
# tier 2: "paciente de 45 anos"
_TIER2 = re.compile(r"\b(?:paciente|pcte|pte)\b[\s,]*(?:de\s*)?" + _AGE)
_SENTENCE_END = re.compile(r"[.;\n]")

# stems whose -o/-a ending marks grammatical gender in describing the patient
_PARTICIPLE_STEMS = (
    "acompanad", "derivad", "remitid", "traid", "trasladad", "ingresad",
    "preocupad", "angustiad", "agobiad", "nervios", "ansios", "tranquil",
    "orientad", "abordad", "valorad", "atendid", "conocid", "diagnosticad",
    "medicad", "tratad", "colaborador", "abatid", "desbordad", "bloquead",
    "asustad", "cansad", "enfadad", "afectad", "jubilad", "empleado",
    "contratad", "despedid", "separad", "emancipad", "independizad",
)
_PARTICIPLE = re.compile(
    r"\b(" + "|".join(_PARTICIPLE_STEMS) + r")(o|a|os|as)\b"
)
_MARITAL = re.compile(r"\b(solter|casad|viud|divorciad)(o|a)\b")


def _gender_from_suffix(suffix: str) -> Gender:
    return Gender.MALE if suffix.startswith("o") else Gender.FEMALE


def _valid_age(token: str) -> Optional[int]:
    age = int(token)
    return age if 0 <= age <= 120 else None


def extract_demographics(text: str) -> Demographics:
    """Infer (gender, age) from narrative text with three pattern tiers.

    Tier 1 catches explicit "<gender word> de N anos" phrases, tier 2
    "paciente de N anos" plus gendered participles in the same sentence,
    tier 3 gendered marital-status words anywhere. Earlier tiers win; within
    a tier the first match in document order wins. Out-of-range ages are
    skipped.
    """
    folded = _fold(text)
    gender, age = Gender.UNKNOWN, None

    for m in _TIER1.finditer(folded):
        a = _valid_age(m.group(2))
        if a is None:
            continue
        male = m.group(1) in _TIER1_MALE
        return Demographics(Gender.MALE if male else Gender.FEMALE, a)

    for m in _TIER2.finditer(folded):
        a = _valid_age(m.group(1))
        if a is None:
            continue
        age = a
        start = max((s.end() for s in _SENTENCE_END.finditer(folded, 0, m.start())), default=0)
        stop = _SENTENCE_END.search(folded, m.end())
        sentence = folded[start: stop.start() if stop else len(folded)]
        p = _PARTICIPLE.search(sentence)
        if p:
            gender = _gender_from_suffix(p.group(2))
        break

    if gender is Gender.UNKNOWN:
        m = _MARITAL.search(folded)
        if m:
            gender = _gender_from_suffix(m.group(2))
    return Demographics(gender, age)


def with_extracted_demographics(ln: LabeledNote) -> LabeledNote:
    """Fill missing age/gender from the note text; recorded values win."""
    found = extract_demographics(ln.note.text)
    demo = ln.demographics
    gender = demo.gender if demo.gender is not Gender.UNKNOWN else found.gender
    age = demo.age if demo.age is not None else found.age
    return replace(ln, demographics=Demographics(gender, age))


# ------------------------------------------------------------------ report

@dataclass(frozen=True)
class DemographicRow:
    label: Label
    n: int
    man_pct: float
    unknown_pct: float
    woman_pct: float
    n_with_age: int
    age_mean: Optional[float]
    age_std: Optional[float]


@dataclass(frozen=True)
class DemographicReport:
    rows: tuple

    header = "Gender shares in percent; age std is the population standard deviation (divide by n)."

    def row(self, label: Label) -> DemographicRow:
        for r in self.rows:
            if r.label is label:
                return r
        raise KeyError(label)

    def to_dict(self) -> dict:
        return {
            "note": self.header,
            "rows": [
                {"dx": r.label.code, "n": r.n, "man_pct": r.man_pct,
                 "unknown_pct": r.unknown_pct, "woman_pct": r.woman_pct,
                 "n_with_age": r.n_with_age, "age_mean": r.age_mean, "age_std": r.age_std}
                for r in self.rows
            ],
        }

    def render(self) -> str:
        names = {Label.F43_ADJUSTMENT: "Adjustment D.", Label.F41_ANXIETY: "Anxiety D."}
        lines = [f"# {self.header}",
                 f"{'DX':<15}{'N':>5}{'Man(%)':>9}{'Unknown(%)':>12}{'Woman(%)':>10}"
                 f"{'Mean (Years)':>14}{'Std (Years)':>13}"]
        for r in self.rows:
            mean = f"{r.age_mean:.1f}" if r.age_mean is not None else "-"
            std = f"{r.age_std:.1f}" if r.age_std is not None else "-"
            lines.append(f"{names[r.label]:<15}{r.n:>5}{r.man_pct:>9.1f}{r.unknown_pct:>12.1f}"
                         f"{r.woman_pct:>10.1f}{mean:>14}{std:>13}")
        return "\n".join(lines) + "\n"


def _pop_mean_std(values: Iterable[int]):
    values = list(values)
    if not values:
        return None, None
    mean = math.fsum(values) / len(values)
    var = math.fsum((v - mean) ** 2 for v in values) / len(values)
    return mean, math.sqrt(var)


def corpus_stats(corpus: Corpus) -> DemographicReport:
    if len(corpus) == 0:
        raise CorpusError("cannot summarise an empty corpus")
    rows = []
    # F43 first, mirroring the published table layout
    for label in (Label.F43_ADJUSTMENT, Label.F41_ANXIETY):
        group = [ln for ln in corpus if ln.label is label]
        if not group:
            continue
        n = len(group)
        counts = Counter(ln.demographics.gender for ln in group)
        ages = [ln.demographics.age for ln in group if ln.demographics.age is not None]
        mean, std = _pop_mean_std(ages)
        rows.append(DemographicRow(
            label=label, n=n,
            man_pct=100.0 * counts[Gender.MALE] / n,
            unknown_pct=100.0 * counts[Gender.UNKNOWN] / n,
            woman_pct=100.0 * counts[Gender.FEMALE] / n,
            n_with_age=len(ages), age_mean=mean, age_std=std,
        ))
    return DemographicReport(tuple(rows))
