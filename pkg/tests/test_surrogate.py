from collections import Counter

import numpy as np
import pytest

from psychnotes.corpus import Gender, Label, extract_demographics
from psychnotes.surrogate import KEYWORDS, SurrogateSpec, generate_corpus, generate_note


def test_counts_lengths_and_ids(surrogate_corpus):
    labels = Counter(ln.label for ln in surrogate_corpus)
    assert labels == {Label.F43_ADJUSTMENT: 82, Label.F41_ANXIETY: 146}
    assert min(len(ln.note.text) for ln in surrogate_corpus) >= 600
    ids = [ln.note.id for ln in surrogate_corpus]
    assert ids[0] == "note_0001" and len(set(ids)) == 228


def test_seeded(surrogate_corpus):
    again = generate_corpus(0)
    assert [ln.note.text for ln in again] == [ln.note.text for ln in surrogate_corpus]
    other = generate_corpus(1)
    assert [ln.note.text for ln in other] != [ln.note.text for ln in surrogate_corpus]


@pytest.mark.parametrize("fidelity", [1.0, 0.5])
def test_keyword_fidelity(fidelity):
    spec = SurrogateSpec(n_f43=40, n_f41=40, fidelity=fidelity)
    own = total = 0
    for ln in generate_corpus(3, spec):
        text = ln.note.text
        mine = sum(text.count(k) for k in KEYWORDS[ln.label])
        theirs = sum(text.count(k) for k in KEYWORDS[Label(1 - int(ln.label))])
        own += mine
        total += mine + theirs
    assert total == 80 * spec.mentions
    assert abs(own / total - fidelity) < 0.05


def test_planted_demographics_are_recoverable():
    rng = np.random.default_rng(1)
    seen = Counter()
    for i in range(300):
        note, planted = generate_note(rng, Label(i % 2), f"n{i}")
        assert note.demographics.gender is Gender.UNKNOWN
        assert extract_demographics(note.note.text) == planted
        seen[planted.gender] += 1
    assert set(seen) == {Gender.MALE, Gender.FEMALE, Gender.UNKNOWN}
