"""Parse free-text model outputs into scores and error annotations.

The error grammar accepted here is a documented superset of what the prompt
templates ask for: the canonical inline encoding produced by
``prompting.render_error_line`` plus common line-per-error shapes that models
fall back to. Parse failures are ordinary data for the meta-evaluation, so the
resolver converts them into diagnostics rather than letting them propagate.
"""

from __future__ import annotations

import json
import logging
import re
import statistics
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Iterable, Mapping

from .data import CategoryLabel, ErrorAnnotation, tokenize

logger = logging.getLogger(__name__)


class ParseError(Exception):
    """A model output that could not be interpreted. Carries the raw text."""

    def __init__(self, message: str, raw: str):
        super().__init__(message)
        self.raw = raw


class ScoreParseError(ParseError):
    pass


class ErrorParseError(ParseError):
    pass


@dataclass(frozen=True)
class ParsedScore:
    value: float
    raw: str
    diagnostic: str | None = None

    def __post_init__(self):
        if not 0 <= self.value <= 100:
            raise ValueError("scores lie in [0, 100]")


@dataclass
class ParseDiagnostics:
    total: int = 0
    parsed: int = 0
    failed: int = 0
    unaligned_spans: int = 0


_RANGE_HINT = re.compile(r"\(?\s*0\s*-\s*100\s*\)?")
_NUMBER = re.compile(r"-?\d+(?:\.\d+)?")

# severity/category: 'span', entries joined by "; "
_INLINE_ENTRY = re.compile(
    r"([A-Za-z]+)\s*/\s*([A-Za-z][\w /-]*?)\s*:\s*'(.*?)'(?=\s*;|\s*$)",
    re.DOTALL,
)
# severity: category - 'span'
_LINE_CAT_SPAN = re.compile(
    r"^\s*([A-Za-z]+)\s*:\s*([A-Za-z][\w /-]*?)\s*[-–—]\s*'(.*?)'\s*$")
# severity: span - category
_LINE_SPAN_CAT = re.compile(
    r"^\s*([A-Za-z]+)\s*:\s*(.+?)\s*[-–—]\s*([A-Za-z][\w-]*)\s*$")

_NO_ERROR_MARKERS = {"no-error", "no error", "no errors", "none", "noerror"}


def parse_sqm_score(text: str) -> ParsedScore:
    """Extract the first numeric literal from a direct-assessment answer.

    Range hints such as "(0-100)" are ignored; the literal must itself lie in
    [0, 100]. Raises ScoreParseError otherwise, keeping the raw text.
    """
    cleaned = _RANGE_HINT.sub(" ", text)
    match = _NUMBER.search(cleaned)
    if match is None:
        raise ScoreParseError("no numeric literal in model output", raw=text)
    value = float(match.group(0))
    if not 0 <= value <= 100:
        raise ScoreParseError(f"score {value} outside [0, 100]", raw=text)
    return ParsedScore(value=value, raw=text)


def _normalize_severity(word: str) -> str:
    lowered = word.lower()
    if lowered in ("major", "minor", "neutral"):
        return lowered
    logger.debug("coercing unknown severity %r to minor", word)
    return "minor"


def _is_no_error(text: str) -> bool:
    stripped = re.sub(r"^\s*errors?\s*:\s*", "", text, flags=re.IGNORECASE)
    stripped = re.sub(r"[\s.!]+$", "", stripped).strip().lower()
    return stripped in _NO_ERROR_MARKERS


def parse_automqm_errors(text: str) -> list[tuple[str, str, str]]:
    """Parse an error listing into (severity, raw category, span text) triples.

    Recognizes the canonical inline encoding, two line-per-error variants, and
    the no-error markers ("no-error", "no errors", "none"). Severity words
    other than major/minor/neutral are coerced to minor with a diagnostic.
    Raises ErrorParseError when nothing interpretable is found.
    """
    if _is_no_error(text):
        return []

    entries = [
        (_normalize_severity(sev), cat.strip(), span)
        for sev, cat, span in _INLINE_ENTRY.findall(text)
    ]
    if entries:
        return entries

    for line in text.splitlines():
        if not line.strip() or _is_no_error(line):
            continue
        match = _LINE_CAT_SPAN.match(line)
        if match:
            sev, cat, span = match.groups()
            entries.append((_normalize_severity(sev), cat.strip(), span))
            continue
        match = _LINE_SPAN_CAT.match(line)
        if match:
            sev, span, cat = match.groups()
            entries.append((_normalize_severity(sev), cat.strip(),
                            span.strip()))
    if not entries:
        raise ErrorParseError("no error entries or no-error marker found",
                              raw=text)
    return entries


def align_span(translation: str, span_text: str) -> frozenset[int]:
    """Locate a quoted span and return the 1-based indices of the words whose
    character range overlaps its first case-insensitive occurrence.

    The span is whitespace-normalized before matching. Returns an empty set
    when the span is empty or does not occur.
    """
    if not translation:
        raise ValueError("translation must be non-empty")
    parts = span_text.split()
    if not parts:
        logger.debug("empty span text cannot be aligned")
        return frozenset()
    pattern = r"\s+".join(re.escape(p) for p in parts)
    match = re.search(pattern, translation, re.IGNORECASE)
    if match is None:
        return frozenset()
    words = list(re.finditer(r"\S+", translation))
    return frozenset(
        i + 1
        for i, w in enumerate(words)
        if w.start() < match.end() and w.end() > match.start()
    )


def annotation_from_triple(triple: tuple[str, str, str],
                           translation: str) -> ErrorAnnotation:
    severity, raw_category, span = triple
    return ErrorAnnotation(
        severity=severity,
        category=CategoryLabel.from_raw(raw_category),
        span_text=span,
        word_span=align_span(translation, span),
    )


@dataclass(frozen=True)
class EvalRecord:
    """One raw model answer for one (segment, mode, template) evaluation."""

    lp: str
    system: str
    seg_id: int
    mode: str
    template: str
    raw_output: str

    @property
    def key(self) -> tuple[str, str, int]:
        return (self.lp, self.system, self.seg_id)


@dataclass
class ResolvedPrediction:
    record: EvalRecord
    ok: bool
    score: float | None = None
    errors: list[ErrorAnnotation] | None = None

    @property
    def key(self) -> tuple[str, str, int]:
        return self.record.key


def resolve_predictions(
    records: Iterable[EvalRecord],
    translation_for: Mapping[tuple[str, str, int], str] | Callable[[tuple], str],
) -> tuple[list[ResolvedPrediction], ParseDiagnostics]:
    """Parse every record, aligning error spans against its translation.

    Score templates yield a numeric score; error templates a list of aligned
    annotations. Failures become ``ok=False`` predictions and are counted in
    the returned diagnostics, never raised.
    """
    lookup = (translation_for.__getitem__
              if isinstance(translation_for, Mapping) else translation_for)
    resolved: list[ResolvedPrediction] = []
    diags = ParseDiagnostics()
    for record in records:
        diags.total += 1
        try:
            if record.template == "automqm":
                translation = lookup(record.key)
                errors = []
                for triple in parse_automqm_errors(record.raw_output):
                    ann = annotation_from_triple(triple, translation)
                    if not ann.aligned:
                        diags.unaligned_spans += 1
                    errors.append(ann)
                resolved.append(ResolvedPrediction(record, ok=True,
                                                   errors=errors))
            else:
                score = parse_sqm_score(record.raw_output)
                resolved.append(ResolvedPrediction(record, ok=True,
                                                   score=score.value))
            diags.parsed += 1
        except ParseError as exc:
            logger.debug("parse failure for %s: %s", record.key, exc)
            resolved.append(ResolvedPrediction(record, ok=False))
            diags.failed += 1
    return resolved, diags


def apply_score_policy(predictions: list[ResolvedPrediction],
                       policy: str = "median") -> dict[tuple, float]:
    """Turn resolved score predictions into a per-segment score map.

    Failed parses are assigned the median of the parsed scores in this group
    ("median"), dropped ("drop"), or scored zero ("zero").
    """
    if policy not in ("median", "drop", "zero"):
        raise ValueError(f"unknown score policy {policy!r}")
    parsed = [p.score for p in predictions if p.ok]
    fallback = None
    if policy == "median" and parsed:
        fallback = statistics.median(parsed)
    elif policy == "zero":
        fallback = 0.0
    out: dict[tuple, float] = {}
    for p in predictions:
        if p.ok:
            out[p.key] = p.score
        elif policy != "drop" and fallback is not None:
            out[p.key] = fallback
    return out


def apply_error_policy(predictions: list[ResolvedPrediction],
                       policy: str = "no-error",
                       ) -> dict[tuple, list[ErrorAnnotation]]:
    """Per-segment predicted error lists; failed parses become no-error
    predictions ("no-error") or are dropped ("drop")."""
    if policy not in ("no-error", "drop"):
        raise ValueError(f"unknown error policy {policy!r}")
    out: dict[tuple, list[ErrorAnnotation]] = {}
    for p in predictions:
        if p.ok:
            out[p.key] = list(p.errors or [])
        elif policy == "no-error":
            out[p.key] = []
    return out


def word_counts_for(
    translations: Mapping[tuple, str],
) -> dict[tuple, int]:
    """Word counts under the same tokenizer used for span alignment."""
    return {key: len(tokenize(text)) for key, text in translations.items()}


def write_records(path: str | Path, records: Iterable[EvalRecord]) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for r in records:
            f.write(json.dumps({
                "lp": r.lp, "system": r.system, "seg_id": r.seg_id,
                "mode": r.mode, "template": r.template,
                "raw_output": r.raw_output,
            }, ensure_ascii=False) + "\n")


def read_records(path: str | Path) -> list[EvalRecord]:
    out = []
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, 1):
            if not line.strip():
                continue
            try:
                row = json.loads(line)
                out.append(EvalRecord(
                    lp=row["lp"], system=row["system"],
                    seg_id=int(row["seg_id"]), mode=row["mode"],
                    template=row["template"], raw_output=row["raw_output"]))
            except (KeyError, ValueError, json.JSONDecodeError) as exc:
                raise ParseError(f"{path}:{lineno}: bad record: {exc}",
                                 raw=line)
    return out
