"""Turn error annotations or token log-probabilities into quality scores."""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping

from .data import ErrorAnnotation

logger = logging.getLogger(__name__)

SCORE_KINDS = ("mqm", "sqm", "logprob")


class ScoringError(Exception):
    pass


@dataclass(frozen=True)
class WeightTable:
    """Severity weights for MQM scoring. All weights are penalties (<= 0).

    ``non_translation`` optionally overrides the severity weight for errors
    whose raw category marks the output as a non-translation; ``floor``
    optionally clips the total per-segment score from below.
    """

    major: float = -5.0
    minor: float = -1.0
    neutral: float = 0.0
    non_translation: float | None = None
    floor: float | None = None

    def __post_init__(self):
        weights = [self.major, self.minor, self.neutral]
        if self.non_translation is not None:
            weights.append(self.non_translation)
        if any(w > 0 for w in weights):
            raise ValueError("severity weights must be <= 0")
        if self.floor is not None and any(self.floor > w for w in weights):
            raise ValueError("floor must not exceed any weight")

    def weight_for(self, error: ErrorAnnotation) -> float:
        if (self.non_translation is not None
                and "non-translation" in error.category.raw.lower()):
            return self.non_translation
        return getattr(self, error.severity)


DEFAULT_WEIGHTS = WeightTable()


def mqm_score(errors: Iterable[ErrorAnnotation],
              weights: WeightTable = DEFAULT_WEIGHTS) -> float:
    """Sum of severity weights over the errors, clipped at the floor if set."""
    total = sum(weights.weight_for(e) for e in errors)
    if weights.floor is not None:
        total = max(total, weights.floor)
    return total


def logprob_score(tokens: list[tuple[str, float]],
                  normalize: str = "sum") -> float:
    """Aggregate per-token log-probabilities into a segment score."""
    if not tokens:
        raise ScoringError("cannot score an empty token list")
    if normalize not in ("sum", "mean"):
        raise ScoringError(f"unknown normalization {normalize!r}")
    total = sum(lp for _, lp in tokens)
    return total / len(tokens) if normalize == "mean" else total


@dataclass(frozen=True)
class SegmentScore:
    lp: str
    system: str
    seg_id: int
    kind: str
    value: float

    def __post_init__(self):
        if self.kind not in SCORE_KINDS:
            raise ValueError(f"unknown score kind {self.kind!r}")
        if self.kind == "mqm" and self.value > 0:
            raise ValueError("mqm scores are non-positive")
        if self.kind == "sqm" and not 0 <= self.value <= 100:
            raise ValueError("sqm scores lie in [0, 100]")

    @property
    def key(self) -> tuple[str, str, int]:
        return (self.lp, self.system, self.seg_id)


def system_scores(
    seg_scores: Mapping[tuple[str, str, int], float],
) -> dict[str, dict[str, float]]:
    """Average per-segment scores to system level, per language pair.

    Systems within a language pair must cover the same segments; when they do
    not, the mean is taken over the common segment intersection and a
    diagnostic is logged.
    """
    per_lp: dict[str, dict[str, dict[int, float]]] = {}
    for (lp, system, seg_id), value in seg_scores.items():
        per_lp.setdefault(lp, {}).setdefault(system, {})[seg_id] = value

    result: dict[str, dict[str, float]] = {}
    for lp in sorted(per_lp):
        systems = per_lp[lp]
        seg_sets = {sys: set(scores) for sys, scores in systems.items()}
        common = set.intersection(*seg_sets.values())
        if not common:
            raise ScoringError(
                f"{lp}: systems share no segments, cannot aggregate")
        if any(s != common for s in seg_sets.values()):
            logger.warning(
                "%s: mismatched segment coverage, restricting to the %d "
                "common segments", lp, len(common))
        result[lp] = {
            sys: sum(scores[i] for i in common) / len(common)
            for sys, scores in sorted(systems.items())
        }
    return result


def write_scores(path: str | Path, scores: Iterable[SegmentScore]) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for s in scores:
            f.write(json.dumps({"lp": s.lp, "system": s.system,
                                "seg_id": s.seg_id, "kind": s.kind,
                                "value": s.value}, ensure_ascii=False) + "\n")


def read_scores(path: str | Path) -> list[SegmentScore]:
    out = []
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, 1):
            if not line.strip():
                continue
            try:
                row = json.loads(line)
                out.append(SegmentScore(lp=row["lp"], system=row["system"],
                                        seg_id=int(row["seg_id"]),
                                        kind=row["kind"],
                                        value=float(row["value"])))
            except (KeyError, ValueError, json.JSONDecodeError) as exc:
                raise ScoringError(f"{path}:{lineno}: bad score row: {exc}")
    return out
