"""Synthetic Spanish psychiatric notes with class-correlated vocabulary.

Stands in for the private clinical corpus: the class sizes, the note length
floor and the demographic phrasing follow the real data, the text does not.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .corpus import ClinicalNote, Corpus, Demographics, Gender, Label, LabeledNote

N_F43 = 82
N_F41 = 146
MIN_CHARS = 600

# planted vocabulary; each mention comes from the note's own class with
# probability ``fidelity`` and from the other class otherwise
KEYWORDS = {
    Label.F41_ANXIETY: ("palpitaciones", "hiperventilacion"),
    Label.F43_ADJUSTMENT: ("despido", "divorcio"),
}

_KEYWORD_FRAMES = (
    "Refiere {kw} desde hace varias semanas.",
    "Comenta episodios de {kw} que le generan malestar.",
    "La familia describe {kw} en el contexto actual.",
    "Se explora {kw} durante la entrevista.",
    "Destaca {kw} como motivo principal de preocupacion.",
    "Relata {kw} con empeoramiento reciente.",
    "Menciona {kw} al ser preguntado por su situacion.",
    "En la valoracion previa ya constaba {kw}.",
)

_FILLER = (
    "Acude acompañado a la consulta de psiquiatria derivado por su medico de atencion primaria.",
    "Niega consumo de toxicos y no presenta antecedentes somaticos de interes.",
    "Vive con su familia y mantiene una red de apoyo social adecuada.",
    "Se muestra colaborador, consciente y orientado en las tres esferas.",
    "Discurso coherente y fluido, sin alteraciones formales del pensamiento.",
    "No se objetivan alteraciones sensoperceptivas ni ideacion autolitica estructurada.",
    "Refiere insomnio de conciliacion y cansancio durante el dia.",
    "Apetito conservado, sin perdida de peso significativa en los ultimos meses.",
    "Se pauta seguimiento ambulatorio y se revisa el tratamiento actual.",
    "Se ofrece psicoeducacion y pautas de higiene del sueño.",
    "Buen contacto con la realidad y juicio de realidad conservado.",
    "Trabaja a tiempo parcial y refiere dificultades de concentracion.",
    "Se recomienda actividad fisica regular y control en cuatro semanas.",
    "Animo ligeramente bajo, reactivo, con capacidad hedonica parcialmente conservada.",
    "No presenta antecedentes psiquiatricos familiares conocidos.",
    "Buena adherencia a la medicacion pautada en la visita anterior.",
    "Exploracion fisica sin hallazgos relevantes y constantes dentro de la normalidad.",
    "Expresa deseo de mejorar y acepta la propuesta terapeutica.",
)

_OPENINGS_MALE = (
    "Varón de {age} años que acude a consulta.",
    "Hombre de {age} años, sin antecedentes de interes, que acude a valoracion.",
    "Paciente de {age} años, casado, que acude por malestar.",
    "Paciente de {age} años que refiere sentirse preocupado y agotado.",
)
_OPENINGS_FEMALE = (
    "Mujer de {age} años que acude a consulta.",
    "Mujer de {age} años, sin antecedentes de interes, que acude a valoracion.",
    "Paciente de {age} años, soltera, que acude por malestar.",
    "Paciente de {age} años que refiere sentirse preocupada y agotada.",
)
_OPENINGS_UNKNOWN = (
    "Acude a consulta para valoracion.",
    "Se realiza valoracion en consulta externa.",
)


@dataclass(frozen=True)
class SurrogateSpec:
    n_f43: int = N_F43
    n_f41: int = N_F41
    mentions: int = 8
    fidelity: float = 0.85
    min_chars: int = MIN_CHARS
    unknown_share: float = 0.1


def _opening(rng: np.random.Generator, unknown_share: float):
    u = rng.random()
    if u < unknown_share:
        return _OPENINGS_UNKNOWN[rng.integers(len(_OPENINGS_UNKNOWN))], Demographics(Gender.UNKNOWN)
    age = int(rng.integers(18, 80))
    if rng.random() < 0.5:
        frames, gender = _OPENINGS_MALE, Gender.MALE
    else:
        frames, gender = _OPENINGS_FEMALE, Gender.FEMALE
    return frames[rng.integers(len(frames))].format(age=age), Demographics(gender, age)


def generate_note(rng: np.random.Generator, label: Label, note_id: str,
                  spec: SurrogateSpec = SurrogateSpec()) -> tuple:
    """Return ``(LabeledNote, planted_demographics)``; the note's own
    demographics are left unknown so extraction has something to do."""
    opening, demo = _opening(rng, spec.unknown_share)
    other = Label(1 - int(label))
    planted = []
    for _ in range(spec.mentions):
        pool = KEYWORDS[label] if rng.random() < spec.fidelity else KEYWORDS[other]
        kw = pool[rng.integers(len(pool))]
        planted.append(_KEYWORD_FRAMES[rng.integers(len(_KEYWORD_FRAMES))].format(kw=kw))
    body = list(planted)
    while True:
        body.insert(int(rng.integers(len(body) + 1)), _FILLER[rng.integers(len(_FILLER))])
        text = " ".join([opening, *body])
        if len(text) >= spec.min_chars and rng.random() < 0.5:
            break
    note = LabeledNote(ClinicalNote(note_id, text), Demographics(Gender.UNKNOWN), label)
    return note, demo


def generate_corpus(seed: int = 0, spec: SurrogateSpec = SurrogateSpec()) -> Corpus:
    rng = np.random.default_rng(seed)
    labels = [Label.F43_ADJUSTMENT] * spec.n_f43 + [Label.F41_ANXIETY] * spec.n_f41
    order = rng.permutation(len(labels))
    notes = []
    for k, idx in enumerate(order.tolist()):
        note, _ = generate_note(rng, labels[idx], f"note_{k + 1:04d}", spec)
        notes.append(note)
    return Corpus(tuple(notes))
