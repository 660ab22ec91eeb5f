"""Load, sample, and filter MQM-annotated corpora; build SFT datasets.

Two interchange formats: a native JSONL with one segment per line, and the
public WMT MQM ratings TSV (one row per rated error, spans marked inline with
<v>...</v> in the target column). Corpora are immutable after load; every
sampling operation is deterministic under its seed.
"""

from __future__ import annotations

import csv
import json
import logging
import random
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator

from . import prompting
from .data import (CategoryLabel, ErrorAnnotation, InputMode, LanguagePair,
                   Segment, canonical_category)
from .parsing import align_span
from .scoring import DEFAULT_WEIGHTS, WeightTable, mqm_score

logger = logging.getLogger(__name__)

FORMATS = ("native-jsonl", "wmt-mqm-tsv")
STRATA = ("no-error", "minor-only", "has-major")

# Demonstration rejection limits: keep prompts short and machine-checkable.
DEMO_MAX_WORDS = 60
DEMO_MAX_ERRORS = 5


class CorpusError(Exception):
    pass


class Corpus:
    """Segments keyed by (lp code, system id, seg id), in load order."""

    def __init__(self, segments: Iterable[Segment] = ()):
        self._segments: dict[tuple[str, str, int], Segment] = {}
        for seg in segments:
            self.add(seg)

    def add(self, segment: Segment) -> None:
        if segment.key in self._segments:
            logger.warning("duplicate segment key %s: keeping the first",
                           segment.key)
            return
        self._segments[segment.key] = segment

    def __len__(self) -> int:
        return len(self._segments)

    def __iter__(self) -> Iterator[Segment]:
        return iter(self._segments.values())

    def __contains__(self, key: tuple[str, str, int]) -> bool:
        return key in self._segments

    def get(self, key: tuple[str, str, int]) -> Segment:
        return self._segments[key]

    def keys(self) -> list[tuple[str, str, int]]:
        return list(self._segments)

    def segments(self) -> list[Segment]:
        return list(self._segments.values())

    def lps(self) -> list[str]:
        return sorted({s.lp.code for s in self})

    def source_units(self) -> list[tuple[str, str, int]]:
        return sorted({s.source_unit for s in self})

    def translations(self) -> dict[tuple[str, str, int], str]:
        return {s.key: s.translation for s in self}

    def gold_scores(self) -> dict[tuple[str, str, int], float]:
        return {s.key: s.gold_score for s in self}

    def gold_errors(self) -> dict[tuple[str, str, int], list[ErrorAnnotation]]:
        return {s.key: list(s.gold_errors) for s in self}


def _annotation(severity: str, category: str, span: str,
                translation: str) -> ErrorAnnotation:
    word_span = align_span(translation, span)
    if span.strip() and not word_span:
        logger.warning("span %r not found in translation; kept unaligned",
                       span)
    return ErrorAnnotation(severity=severity,
                           category=CategoryLabel.from_raw(category),
                           span_text=span, word_span=word_span)


def _segment_from_row(row: dict, lineno: int,
                      weights: WeightTable) -> Segment:
    try:
        lp = LanguagePair.from_code(row["lp"])
        translation = row["translation"]
        errors = []
        for e in row.get("errors", []):
            severity = e["severity"].strip().lower()
            if severity not in ("major", "minor", "neutral"):
                raise CorpusError(
                    f"line {lineno}: unknown severity {e['severity']!r}")
            if canonical_category(e["category"]) == "no-error":
                if len(row["errors"]) > 1:
                    logger.warning(
                        "line %d: dropping no-error entry listed alongside "
                        "errors", lineno)
                continue
            errors.append(_annotation(severity, e["category"], e["span"],
                                      translation))
        segment = Segment(
            lp=lp,
            system_id=row["system"],
            doc_id=row["doc"],
            seg_id=int(row["seg_id"]),
            source=row["source"],
            reference=row.get("reference") or None,
            translation=translation,
            gold_errors=errors,
            gold_score=mqm_score(errors, weights),
        )
        stored = row.get("gold_score")
        if stored is not None and abs(stored - segment.gold_score) > 1e-9:
            logger.warning(
                "line %d: stored gold_score %s differs from recomputed %s; "
                "using the recomputed value", lineno, stored,
                segment.gold_score)
        return segment
    except CorpusError:
        raise
    except (KeyError, TypeError, ValueError) as exc:
        raise CorpusError(f"line {lineno}: malformed segment record: {exc}")


def _load_native(path: Path, weights: WeightTable) -> Corpus:
    corpus = Corpus()
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, 1):
            if not line.strip():
                continue
            try:
                row = json.loads(line)
            except json.JSONDecodeError as exc:
                raise CorpusError(f"line {lineno}: invalid JSON: {exc}")
            corpus.add(_segment_from_row(row, lineno, weights))
    return corpus


_MARKER_RE = re.compile(r"<v>(.*?)</v>", re.DOTALL)
_TSV_COLUMNS = ("system", "doc", "doc_id", "seg_id", "rater", "source",
                "target", "category", "severity")


def _strip_markers(text: str) -> str:
    return _MARKER_RE.sub(lambda m: m.group(1), text)


def _load_wmt_tsv(path: Path, lp_code: str, weights: WeightTable) -> Corpus:
    lp = LanguagePair.from_code(lp_code)
    # (system, doc, seg_id) -> rater -> list of (severity, category, span|None)
    grouped: dict[tuple, dict[str, list]] = {}
    meta: dict[tuple, dict] = {}
    with open(path, encoding="utf-8", newline="") as f:
        reader = csv.DictReader(f, delimiter="\t", quoting=csv.QUOTE_NONE)
        missing = set(_TSV_COLUMNS) - set(reader.fieldnames or ())
        if missing:
            raise CorpusError(f"{path}: missing TSV columns {sorted(missing)}")
        for lineno, row in enumerate(reader, 2):
            try:
                key = (row["system"], row["doc"], int(row["seg_id"]))
                severity = row["severity"].strip().lower()
                category = row["category"].strip()
                if severity not in ("major", "minor", "neutral", "no-error"):
                    raise CorpusError(
                        f"line {lineno}: unknown severity {row['severity']!r}")
                target = row["target"]
                span_match = _MARKER_RE.search(target)
                translation = _strip_markers(target)
                if key not in meta:
                    meta[key] = {
                        "source": _strip_markers(row["source"]),
                        "translation": translation,
                    }
                rater_rows = grouped.setdefault(key, {})
                annotations = rater_rows.setdefault(row["rater"], [])
                if (severity == "no-error"
                        or canonical_category(category) == "no-error"):
                    continue
                if span_match is not None:
                    span = span_match.group(1)
                else:
                    # Spans for omissions are marked in the source instead;
                    # they cannot be aligned against the translation.
                    src_match = _MARKER_RE.search(row["source"])
                    span = src_match.group(1) if src_match else ""
                annotations.append((severity, category, span))
            except CorpusError:
                raise
            except (KeyError, TypeError, ValueError) as exc:
                raise CorpusError(f"line {lineno}: malformed TSV row: {exc}")

    corpus = Corpus()
    for key in grouped:
        system, doc, seg_id = key
        info = meta[key]
        raters = grouped[key]
        first_rater = next(iter(raters))
        errors = [
            _annotation(sev, cat, span, info["translation"])
            for sev, cat, span in raters[first_rater]
        ]
        rater_scores = [
            mqm_score([_annotation(sev, cat, span, info["translation"])
                       for sev, cat, span in anns], weights)
            for anns in raters.values()
        ]
        corpus.add(Segment(
            lp=lp, system_id=system, doc_id=doc, seg_id=seg_id,
            source=info["source"], translation=info["translation"],
            reference=None, gold_errors=errors,
            gold_score=sum(rater_scores) / len(rater_scores),
        ))
    return corpus


def load_corpus(path: str | Path, format: str = "native-jsonl", *,
                lp: str | None = None,
                weights: WeightTable = DEFAULT_WEIGHTS) -> Corpus:
    """Load a corpus file. The WMT TSV carries no language column, so ``lp``
    is required for that format."""
    path = Path(path)
    if not path.exists():
        raise CorpusError(f"corpus file not found: {path}")
    if format == "native-jsonl":
        return _load_native(path, weights)
    if format == "wmt-mqm-tsv":
        if lp is None:
            raise CorpusError("wmt-mqm-tsv format needs an explicit lp code")
        return _load_wmt_tsv(path, lp, weights)
    raise CorpusError(f"unknown corpus format {format!r}")


def write_corpus(path: str | Path, corpus: Corpus) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for s in corpus:
            row = {
                "lp": s.lp.code, "system": s.system_id, "doc": s.doc_id,
                "seg_id": s.seg_id, "source": s.source,
                "reference": s.reference, "translation": s.translation,
                "errors": [
                    {"severity": e.severity, "category": e.category.raw,
                     "span": e.span_text}
                    for e in s.gold_errors
                ],
                "gold_score": s.gold_score,
            }
            f.write(json.dumps(row, ensure_ascii=False) + "\n")


def sample_test_subset(corpus: Corpus, n_sources: int, seed: int) -> Corpus:
    """Uniformly sample source sentences (without replacement) and keep all
    system outputs for each selected source."""
    units = corpus.source_units()
    if n_sources > len(units):
        raise CorpusError(
            f"asked for {n_sources} sources but corpus has {len(units)}")
    rng = random.Random(seed)
    chosen = set(rng.sample(units, n_sources))
    return Corpus(s for s in corpus if s.source_unit in chosen)


def _demo_acceptable(segment: Segment) -> bool:
    if any(not e.aligned for e in segment.gold_errors):
        return False
    if segment.word_count() > DEMO_MAX_WORDS:
        return False
    if len(segment.gold_errors) > DEMO_MAX_ERRORS:
        return False
    return True


def sample_demonstrations(pool: Corpus, k: int, seed: int) -> list[Segment]:
    """Stratified demonstration sampling over error-severity profiles.

    Strata (no-error, minor-only, has-major) are visited round-robin; strata
    with no members in the pool sit out the rotation. Candidates with
    unaligned gold spans, more than DEMO_MAX_WORDS words, or more than
    DEMO_MAX_ERRORS errors are rejected. A populated stratum that cannot
    supply a demonstration on its turn is an error.
    """
    if not len(pool):
        raise CorpusError("demonstration pool is empty")
    if k < 1:
        raise CorpusError("k must be >= 1")
    rng = random.Random(seed)
    candidates: dict[str, list[Segment]] = {name: [] for name in STRATA}
    for segment in sorted(pool, key=lambda s: s.key):
        candidates[segment.severity_profile()].append(segment)
    for stratum in candidates.values():
        rng.shuffle(stratum)

    rotation = [name for name in STRATA if candidates[name]]
    demos: list[Segment] = []
    for turn in range(k):
        stratum = rotation[turn % len(rotation)]
        picked = None
        while candidates[stratum]:
            candidate = candidates[stratum].pop()
            if _demo_acceptable(candidate):
                picked = candidate
                break
        if picked is None:
            exhausted = sorted(name for name in STRATA
                               if not candidates[name])
            raise CorpusError(
                f"cannot sample {k} demonstrations; exhausted strata: "
                f"{exhausted}")
        demos.append(picked)
    return demos


def filter_low_quality_ref(corpus: Corpus, ref_annotations: Corpus,
                           threshold: float) -> Corpus:
    """Keep the segments whose reference's own MQM score is <= threshold.

    ``ref_annotations`` holds the reference-as-system segments; segments whose
    source has no reference annotation are dropped with a diagnostic.
    """
    ref_scores = {(s.lp.code, s.seg_id): s.gold_score
                  for s in ref_annotations}
    kept = []
    for segment in corpus:
        score = ref_scores.get((segment.lp.code, segment.seg_id))
        if score is None:
            logger.warning("no reference annotation for %s; dropping",
                           segment.key)
            continue
        if score <= threshold:
            kept.append(segment)
    return Corpus(kept)


SFT_MODES = (InputMode.ST, InputMode.RT, InputMode.SRT)


@dataclass(frozen=True)
class SftRecord:
    """One Alpaca-style training record."""

    instruction: str
    input: str
    output: str
    mode: InputMode
    lp: LanguagePair
    key: tuple[str, str, int]

    def __post_init__(self):
        if self.mode not in SFT_MODES:
            raise ValueError(
                f"mode {self.mode.value} is not a training mode")


@dataclass
class DatasetStats:
    """Per-direction composition of a built training set."""

    mode_counts: dict[str, dict[str, int]] = field(default_factory=dict)
    totals: dict[str, int] = field(default_factory=dict)
    no_error_counts: dict[str, int] = field(default_factory=dict)

    def no_error_rate(self, lp: str) -> float:
        total = self.totals.get(lp, 0)
        return self.no_error_counts.get(lp, 0) / total if total else 0.0

    def rows(self) -> list[dict]:
        out = []
        for lp in sorted(self.totals):
            row = {"lp": lp}
            for mode in SFT_MODES:
                row[f"#{mode.value}"] = self.mode_counts[lp].get(mode.value, 0)
            row["total"] = self.totals[lp]
            row["no_error_pct"] = 100.0 * self.no_error_rate(lp)
            out.append(row)
        return out


def build_sft_dataset(corpus: Corpus, seed: int, no_error_target: float,
                      modes: list[InputMode],
                      ) -> tuple[list[SftRecord], DatasetStats]:
    """Build an instruction-tuning dataset from an annotated corpus.

    Each retained segment is assigned one input mode uniformly at random;
    error-free segments are down-sampled (never up-sampled) toward the target
    fraction. The instruction/input render through the zero-demonstration
    error prompt, the output through the inline error encoding, so every
    record round-trips through the output parser.
    """
    if not modes:
        raise CorpusError("modes must be non-empty")
    bad = [m for m in modes if m not in SFT_MODES]
    if bad:
        raise CorpusError(
            f"modes {[m.value for m in bad]} are not training modes")
    if not 0 < no_error_target <= 1:
        raise CorpusError("no_error_target must lie in (0, 1]")

    ordered = sorted(corpus, key=lambda s: s.key)
    with_errors = [s for s in ordered if s.gold_errors]
    no_error = [s for s in ordered if not s.gold_errors]
    if not with_errors and no_error_target < 1 and no_error:
        raise CorpusError(
            "corpus has no error-bearing samples; the no-error target is "
            "unreachable")

    rng = random.Random(seed)
    current = len(no_error) / len(ordered) if ordered else 0.0
    if no_error and no_error_target < 1 and current > no_error_target:
        n_keep = round(no_error_target * len(with_errors)
                       / (1 - no_error_target))
        n_keep = min(n_keep, len(no_error))
        kept_no_error = set()
        if n_keep:
            kept_no_error = {s.key for s in rng.sample(no_error, n_keep)}
        retained = [s for s in ordered
                    if s.gold_errors or s.key in kept_no_error]
    else:
        retained = ordered

    records = []
    stats = DatasetStats()
    for segment in retained:
        mode = rng.choice(modes)
        if mode.includes_reference and not segment.reference:
            raise CorpusError(
                f"segment {segment.key} lacks a reference but drew mode "
                f"{mode.value}")
        records.append(SftRecord(
            instruction=prompting.automqm_instruction(mode),
            input=prompting.automqm_answer_block(segment, mode),
            output=prompting.render_error_line(segment.gold_errors),
            mode=mode,
            lp=segment.lp,
            key=segment.key,
        ))
        lp = segment.lp.code
        stats.totals[lp] = stats.totals.get(lp, 0) + 1
        counts = stats.mode_counts.setdefault(lp, {})
        counts[mode.value] = counts.get(mode.value, 0) + 1
        if not segment.gold_errors:
            stats.no_error_counts[lp] = stats.no_error_counts.get(lp, 0) + 1
    return records, stats


def write_sft_records(path: str | Path,
                      records: Iterable[SftRecord]) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for r in records:
            f.write(json.dumps({"instruction": r.instruction,
                                "input": r.input, "output": r.output},
                               ensure_ascii=False) + "\n")
