import pytest
from hypothesis import given
from hypothesis import strategies as st

from psychnotes.dxextract import (ContextBudgetError, DiagnosisClass, MalformedAnnotationError,
                                  StubTransport, TransientTransportError, TransportError,
                                  build_prompt, estimate_tokens, extract_with_transport,
                                  format_dx_answer, load_prompt_defaults, normalize_diagnosis,
                                  parse_dx_response, parse_rules)

EX_NOTE = "Paciente de 30 anos con ansiedad."
EX_ANSWER = "DX @@ ansiedad ##"


def _prompt(query="Nota nueva.", note_id="n1", **kw):
    return build_prompt(EX_NOTE, EX_ANSWER, query, note_id=note_id, **kw)


def test_prompt_order_and_roles():
    p = _prompt()
    assert [m.role for m in p.messages] == ["system", "user", "user", "assistant", "user"]
    assert p.messages[0].content.startswith(
        "You are an assistant and a linguist specialized in identifying entities")
    assert p.messages[2].content == EX_NOTE
    assert p.messages[3].content == EX_ANSWER
    assert p.messages[4].content == "Nota nueva."
    assert p.to_json()["messages"][3] == {"role": "assistant", "content": EX_ANSWER}


def test_prompt_is_pure():
    assert _prompt() == _prompt()
    custom = _prompt(role_text="Role.", task_text="Task.")
    assert custom.messages[0].content == "Role." and custom.messages[1].content == "Task."


def test_prompt_budget_and_empty_parts():
    assert estimate_tokens("abcde") == 2
    with pytest.raises(ContextBudgetError) as err:
        _prompt(query="x" * 4000, budget=1000)
    assert err.value.budget == 1000 and err.value.estimated > 1000
    with pytest.raises(ValueError):
        _prompt(query="   ")


def test_bundled_prompt_example():
    d = load_prompt_defaults()
    answer = "DX @@ Ansiedad reactiva, Síndrome ansioso-depresivo ##"
    p = build_prompt(d.example_note, d.example_answer, "Nota.")
    assert p.messages[3].content == answer
    assert parse_dx_response(answer).raw_spans == ("Ansiedad reactiva, Síndrome ansioso-depresivo",)


@pytest.mark.parametrize("text, spans", [
    ("no diagnosis found", ()),
    ("", ()),
    ("DX @@ a ## text DX @@ b ##", ("a", "b")),
    ("DX @@   Trastorno adaptativo mixto  ##", ("Trastorno adaptativo mixto",)),
    ("@@ untagged ## DX @@ kept ##", ("kept",)),
    ("DX @@ ##", ()),
    ("DX@@ansiedad##", ("ansiedad",)),
])
def test_parse_examples(text, spans):
    assert parse_dx_response(text).raw_spans == spans


def test_malformed_span_reports_offset():
    with pytest.raises(MalformedAnnotationError) as err:
        parse_dx_response("DX @@ ok ## then @@ x")
    assert err.value.offset == 17
    with pytest.raises(MalformedAnnotationError) as err:
        parse_dx_response("ñ DX @@ a")
    assert err.value.offset == 6  # bytes, not characters
    with pytest.raises(MalformedAnnotationError):
        parse_dx_response("DX @@ a @@ b ##")


span_text = st.text(st.characters(blacklist_characters="@#", blacklist_categories=("Cs",)),
                    min_size=1).map(str.strip).filter(bool)


@given(st.lists(span_text, max_size=6))
def test_format_parse_round_trip(spans):
    assert parse_dx_response(format_dx_answer(spans)).raw_spans == tuple(spans)


@pytest.mark.parametrize("span, cls", [
    ("Trastorno de ansiedad generalizada", DiagnosisClass.F41_ANXIETY),
    ("trastorno adaptativo", DiagnosisClass.F43_ADJUSTMENT),
    ("TRASTORNO ADAPTATIVO MIXTO", DiagnosisClass.F43_ADJUSTMENT),
    ("trastorno de adaptación", DiagnosisClass.F43_ADJUSTMENT),
    ("Ansiedad", DiagnosisClass.F41_ANXIETY),
    ("esquizofrenia", DiagnosisClass.OTHER),
    ("", DiagnosisClass.OTHER),
])
def test_normalize_diagnosis(span, cls):
    assert normalize_diagnosis(span) is cls


def test_custom_rules():
    rules = parse_rules([{"pattern": "Esquizofrenia", "class": "Other"},
                         {"pattern": "panico", "class": "F41"}])
    assert normalize_diagnosis("crisis de pánico", rules) is DiagnosisClass.F41_ANXIETY
    assert normalize_diagnosis("trastorno adaptativo", rules) is DiagnosisClass.OTHER
    for bad in ([{"pattern": "x", "class": "F99"}], [{"class": "F41"}], [{"pattern": " ", "class": "F41"}]):
        with pytest.raises(ValueError):
            parse_rules(bad)


class Flaky:
    def __init__(self, failures, reply="DX @@ ansiedad ##"):
        self.failures = failures
        self.reply = reply
        self.calls = 0

    def send(self, prompt):
        self.calls += 1
        if self.calls <= self.failures:
            raise TransientTransportError("timeout")
        return self.reply


def test_retry_then_success():
    waits = []
    ann = extract_with_transport(Flaky(2), _prompt(), max_retries=3, backoff=0.5,
                                 sleep=waits.append)
    assert ann.retries == 2 and ann.raw_spans == ("ansiedad",) and ann.note_id == "n1"
    assert waits == [0.5, 1.0]


def test_retry_gives_up():
    waits = []
    flaky = Flaky(10)
    with pytest.raises(TransportError, match="giving up after 2"):
        extract_with_transport(flaky, _prompt(), max_retries=2, sleep=waits.append)
    assert flaky.calls == 3 and len(waits) == 2


def test_stub_transport(tmp_path):
    stub = StubTransport({"n1": "DX @@ estrés ##"})
    assert extract_with_transport(stub, _prompt()).raw_spans == ("estrés",)
    with pytest.raises(TransportError, match="no response"):
        extract_with_transport(stub, _prompt(note_id="missing"), sleep=lambda s: None)
    assert stub.calls == ["n1", "missing"]
    path = tmp_path / "stub.json"
    path.write_text('["not", "a", "map"]')
    with pytest.raises(ValueError):
        StubTransport.from_file(path)
