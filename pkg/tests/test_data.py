import json

import pytest

from mtjudge.corpus import load_corpus
from mtjudge.data import (CategoryLabel, ErrorAnnotation, InputMode,
                          LanguagePair, Segment, canonical_category, tokenize,
                          word_count)

from conftest import make_segment


class TestInputMode:
    def test_four_values(self):
        assert [m.value for m in InputMode] == ["T", "S-T", "R-T", "S-R-T"]

    @pytest.mark.parametrize("mode,src,ref", [
        (InputMode.T, False, False),
        (InputMode.ST, True, False),
        (InputMode.RT, False, True),
        (InputMode.SRT, True, True),
    ])
    def test_field_flags(self, mode, src, ref):
        assert mode.includes_source is src
        assert mode.includes_reference is ref

    def test_from_string(self):
        assert InputMode.from_string("s-r-t") is InputMode.SRT
        assert InputMode.from_string(" T ") is InputMode.T
        with pytest.raises(ValueError):
            InputMode.from_string("S+T")


class TestLanguagePair:
    def test_from_code(self):
        lp = LanguagePair.from_code("en-de")
        assert lp.source_lang == "English"
        assert lp.target_lang == "German"
        assert lp.code == "en-de"

    def test_zh_en(self):
        lp = LanguagePair.from_code("zh-en")
        assert (lp.source_lang, lp.target_lang) == ("Chinese", "English")

    def test_same_language_rejected(self):
        with pytest.raises(ValueError):
            LanguagePair.from_code("en-en")

    def test_unknown_code_rejected(self):
        with pytest.raises(ValueError):
            LanguagePair.from_code("en-xx")

    def test_uppercase_code_rejected(self):
        with pytest.raises(ValueError):
            LanguagePair("English", "German", "EN-DE")


class TestCanonicalCategory:
    @pytest.mark.parametrize("raw,want", [
        ("Accuracy/Mistranslation", "accuracy"),
        ("accuracy", "accuracy"),
        ("Fluency/Grammar", "fluency"),
        ("Terminology/Inappropriate for context", "terminology"),
        ("Style/Awkward", "style"),
        ("Locale convention/Date format", "locale-convention"),
        ("locale-convention", "locale-convention"),
        ("No-error", "no-error"),
        ("no error", "no-error"),
        ("Non-translation!", "other"),
        ("Source error", "other"),
        ("", "other"),
    ])
    def test_mapping(self, raw, want):
        assert canonical_category(raw) == want

    def test_label_keeps_raw(self):
        label = CategoryLabel.from_raw("Accuracy/Omission")
        assert label.canonical == "accuracy"
        assert label.raw == "Accuracy/Omission"

    def test_non_canonical_rejected(self):
        with pytest.raises(ValueError):
            CategoryLabel(canonical="Accuracy", raw="Accuracy")


class TestErrorAnnotation:
    def test_aligned_iff_word_span(self):
        label = CategoryLabel.from_raw("accuracy")
        with_span = ErrorAnnotation("major", label, "x", frozenset({1}))
        without = ErrorAnnotation("major", label, "x", frozenset())
        assert with_span.aligned
        assert not without.aligned

    def test_zero_index_rejected(self):
        label = CategoryLabel.from_raw("accuracy")
        with pytest.raises(ValueError):
            ErrorAnnotation("major", label, "x", frozenset({0}))

    def test_unknown_severity_rejected(self):
        label = CategoryLabel.from_raw("accuracy")
        with pytest.raises(ValueError):
            ErrorAnnotation("critical", label, "x")


class TestSegment:
    def test_empty_translation_rejected(self):
        with pytest.raises(ValueError):
            make_segment(translation="")

    def test_negative_seg_id_rejected(self):
        with pytest.raises(ValueError):
            make_segment(seg_id=-1)

    def test_severity_profile(self):
        assert make_segment().severity_profile() == "no-error"
        minor = make_segment(errors=[("minor", "style", "gut")])
        assert minor.severity_profile() == "minor-only"
        major = make_segment(errors=[("minor", "style", "gut"),
                                     ("major", "accuracy", "Wetter")])
        assert major.severity_profile() == "has-major"

    def test_word_count(self):
        assert make_segment(translation="Ein  Satz mit\tvier Worten"
                            ).word_count() == 5


class TestTokenize:
    def test_unicode_whitespace(self):
        assert tokenize("a b c") == ["a", "b", "c"]
        assert word_count("ein zwei  drei") == 3

    def test_empty(self):
        assert tokenize("") == []


class TestNoErrorCoOccurrence:
    def test_mixed_no_error_entry_dropped(self, tmp_path):
        row = {
            "lp": "en-de", "system": "s", "doc": "d", "seg_id": 0,
            "source": "src", "reference": "ref",
            "translation": "Das ist gut.",
            "errors": [
                {"severity": "minor", "category": "accuracy", "span": "gut"},
                {"severity": "neutral", "category": "No-error", "span": ""},
            ],
        }
        path = tmp_path / "c.jsonl"
        path.write_text(json.dumps(row) + "\n", encoding="utf-8")
        segment = load_corpus(path).segments()[0]
        assert len(segment.gold_errors) == 1
        assert segment.gold_errors[0].category.canonical == "accuracy"
