import pytest

from mtjudge.data import (CategoryLabel, ErrorAnnotation, LanguagePair,
                          Segment)
from mtjudge.parsing import align_span


def make_error(severity, category, span, translation=None):
    """Build an annotation, aligning the span against the translation when
    one is given."""
    word_span = align_span(translation, span) if translation else frozenset()
    return ErrorAnnotation(severity=severity,
                           category=CategoryLabel.from_raw(category),
                           span_text=span, word_span=word_span)


def make_segment(seg_id=1, system="sysA", source="The weather is nice today.",
                 reference="Das Wetter ist heute schön.",
                 translation="Das Wetter ist heute gut.",
                 errors=(), lp="en-de", doc="doc1"):
    translation_errors = [
        make_error(sev, cat, span, translation) for sev, cat, span in errors
    ]
    return Segment(
        lp=LanguagePair.from_code(lp), system_id=system, doc_id=doc,
        seg_id=seg_id, source=source, reference=reference,
        translation=translation, gold_errors=translation_errors,
        gold_score=sum(-5.0 if s == "major" else (-1.0 if s == "minor" else 0.0)
                       for s, _, _ in errors),
    )


@pytest.fixture
def fixture_segment():
    return make_segment(errors=[("minor", "accuracy", "gut")])


@pytest.fixture
def fixture_demos():
    return [
        make_segment(seg_id=11, source="The dog runs fast.",
                     reference="Der Hund rennt schnell.",
                     translation="Der Hund läuft schnell."),
        make_segment(seg_id=12, source="She bought three apples.",
                     reference="Sie kaufte drei Äpfel.",
                     translation="Sie kaufte drei Apfel.",
                     errors=[("minor", "fluency", "Apfel")]),
        make_segment(seg_id=13, source="He did not come home.",
                     reference="Er kam nicht nach Hause.",
                     translation="Er kam nach Hause.",
                     errors=[("major", "accuracy", "kam nach Hause")]),
        make_segment(seg_id=14, source="The meeting starts at noon.",
                     reference="Das Treffen beginnt am Mittag.",
                     translation="Das Treffen beginnt am Morgen um zwölf.",
                     errors=[("major", "accuracy", "am Morgen"),
                             ("minor", "style", "um zwölf")]),
    ]
