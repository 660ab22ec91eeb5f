"""Core domain types shared across the toolkit.

A corpus is a collection of segments; each segment is one
(source, reference, translation) triple produced by one MT system for one
language pair, optionally carrying human MQM error annotations.
"""

from __future__ import annotations

import enum
import re
from dataclasses import dataclass, field

SEVERITIES = ("major", "minor", "neutral")

CANONICAL_CATEGORIES = (
    "accuracy",
    "fluency",
    "terminology",
    "style",
    "locale-convention",
    "other",
    "no-error",
)

# English exonyms for the language codes we expect to encounter.
LANGUAGE_NAMES = {
    "en": "English",
    "de": "German",
    "zh": "Chinese",
    "ru": "Russian",
    "fr": "French",
    "es": "Spanish",
    "ja": "Japanese",
    "cs": "Czech",
    "uk": "Ukrainian",
    "he": "Hebrew",
}

_WORD_RE = re.compile(r"\S+")


def tokenize(text: str) -> list[str]:
    """Split on Unicode whitespace. Word indices elsewhere are 1-based."""
    return _WORD_RE.findall(text)


def word_count(text: str) -> int:
    return len(tokenize(text))


class InputMode(enum.Enum):
    """Which fields accompany the translation in a prompt."""

    T = "T"
    ST = "S-T"
    RT = "R-T"
    SRT = "S-R-T"

    @property
    def includes_source(self) -> bool:
        return self in (InputMode.ST, InputMode.SRT)

    @property
    def includes_reference(self) -> bool:
        return self in (InputMode.RT, InputMode.SRT)

    @classmethod
    def from_string(cls, value: str) -> "InputMode":
        normalized = value.strip().upper()
        for mode in cls:
            if mode.value == normalized:
                return mode
        raise ValueError(f"unknown input mode {value!r}; expected one of "
                         f"{[m.value for m in cls]}")

    def __str__(self) -> str:
        return self.value


def canonical_category(raw: str) -> str:
    """Map a free-form category label onto the canonical label set.

    WMT-style subcategories ("accuracy/mistranslation") collapse onto their
    top-level category; anything unrecognized becomes "other".
    """
    s = raw.strip().lower().replace("_", " ")
    s = s.split("/")[0].strip()
    if not s:
        return "other"
    compact = s.replace("-", " ")
    if compact in ("no error", "no errors", "noerror", "none"):
        return "no-error"
    if s.startswith("accuracy"):
        return "accuracy"
    if s.startswith("fluency"):
        return "fluency"
    if s.startswith("terminolog"):
        return "terminology"
    if s.startswith("style"):
        return "style"
    if s.startswith("locale"):
        return "locale-convention"
    if s in CANONICAL_CATEGORIES:
        return s
    return "other"


@dataclass(frozen=True)
class LanguagePair:
    """A translation direction, e.g. English -> German ("en-de")."""

    source_lang: str
    target_lang: str
    code: str

    def __post_init__(self):
        if self.source_lang == self.target_lang:
            raise ValueError(f"degenerate language pair {self.code!r}")
        if self.code != self.code.lower() or "-" not in self.code:
            raise ValueError(f"language pair code must be lowercase "
                             f"hyphen-separated, got {self.code!r}")

    @classmethod
    def from_code(cls, code: str) -> "LanguagePair":
        code = code.strip().lower()
        try:
            src, tgt = code.split("-")
        except ValueError:
            raise ValueError(f"bad language pair code {code!r}") from None
        names = []
        for part in (src, tgt):
            if part not in LANGUAGE_NAMES:
                raise ValueError(f"no language name known for {part!r} "
                                 f"in pair {code!r}")
            names.append(LANGUAGE_NAMES[part])
        return cls(source_lang=names[0], target_lang=names[1], code=code)


@dataclass(frozen=True)
class CategoryLabel:
    """An error category: canonical form plus the text it came from."""

    canonical: str
    raw: str

    def __post_init__(self):
        if self.canonical not in CANONICAL_CATEGORIES:
            raise ValueError(f"non-canonical category {self.canonical!r}")

    @classmethod
    def from_raw(cls, raw: str) -> "CategoryLabel":
        return cls(canonical=canonical_category(raw), raw=raw)


@dataclass(frozen=True)
class ErrorAnnotation:
    """One marked error: severity, category, and the quoted span.

    ``word_span`` holds 1-based indices into the whitespace tokenization of
    the translation; it is empty when the span could not be located.
    """

    severity: str
    category: CategoryLabel
    span_text: str
    word_span: frozenset[int] = frozenset()

    def __post_init__(self):
        if self.severity not in SEVERITIES:
            raise ValueError(f"unknown severity {self.severity!r}")
        if any(i < 1 for i in self.word_span):
            raise ValueError("word_span indices are 1-based")

    @property
    def aligned(self) -> bool:
        return bool(self.word_span)


@dataclass
class Segment:
    """One system translation of one source sentence, with gold annotations."""

    lp: LanguagePair
    system_id: str
    doc_id: str
    seg_id: int
    source: str
    translation: str
    reference: str | None = None
    gold_errors: list[ErrorAnnotation] = field(default_factory=list)
    gold_score: float = 0.0

    def __post_init__(self):
        if not self.translation:
            raise ValueError(f"segment {self.key} has an empty translation")
        if self.seg_id < 0:
            raise ValueError(f"negative seg_id {self.seg_id}")

    @property
    def key(self) -> tuple[str, str, int]:
        return (self.lp.code, self.system_id, self.seg_id)

    @property
    def source_unit(self) -> tuple[str, str, int]:
        """Identity of the underlying source sentence, shared across systems."""
        return (self.lp.code, self.doc_id, self.seg_id)

    def word_count(self) -> int:
        return word_count(self.translation)

    def severity_profile(self) -> str:
        """Stratum label: no-error, minor-only, or has-major."""
        if not self.gold_errors:
            return "no-error"
        if any(e.severity == "major" for e in self.gold_errors):
            return "has-major"
        return "minor-only"
