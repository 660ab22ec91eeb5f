#!/usr/bin/env python3
"""Build the bundled end-to-end replay fixture.

Produces a 40-segment annotated corpus (10 sources x 4 systems, en-de), a
demonstration pool, and a primed transcript store answering every
(segment, mode) error-detection prompt with a synthetic judge whose fidelity
depends on the input mode (reference-fed modes see the gold errors more
clearly). Rerun this script whenever prompt templates or the request format
change, then commit the refreshed fixture.

Usage: python3 scripts/make_e2e_fixture.py [out_dir]
"""

import random
import sys
from pathlib import Path

from mtjudge.corpus import Corpus, sample_demonstrations, write_corpus
from mtjudge.data import (CategoryLabel, ErrorAnnotation, InputMode,
                          LanguagePair, Segment)
from mtjudge.gateway import (DecodingParams, Gateway, ModelSpec,
                             TranscriptStore)
from mtjudge.parsing import align_span
from mtjudge.prompting import render_automqm, render_error_line
from mtjudge.scoring import mqm_score

SEED = 7
MODES = list(InputMode)
SYSTEMS = ("sysA", "sysB", "sysC", "sysD")

# (source, reference) bank; system translations corrupt the reference.
SENTENCES = [
    ("The weather is nice today.", "Das Wetter ist heute schön."),
    ("She bought three apples at the market.",
     "Sie kaufte drei Äpfel auf dem Markt."),
    ("He did not come home last night.",
     "Er kam letzte Nacht nicht nach Hause."),
    ("The meeting starts at noon on Friday.",
     "Das Treffen beginnt am Freitag um zwölf Uhr."),
    ("Our train leaves from platform two.",
     "Unser Zug fährt von Gleis zwei ab."),
    ("The report was published on Monday.",
     "Der Bericht wurde am Montag veröffentlicht."),
    ("They painted the old house green.",
     "Sie strichen das alte Haus grün."),
    ("I forgot my umbrella in the office.",
     "Ich habe meinen Regenschirm im Büro vergessen."),
    ("The museum is closed during the winter.",
     "Das Museum ist im Winter geschlossen."),
    ("A new bridge will connect the two villages.",
     "Eine neue Brücke wird die beiden Dörfer verbinden."),
]

# Plausible wrong words used to corrupt references.
WRONG_WORDS = ["Katze", "gestern", "niemals", "blau", "langsam", "vielleicht",
               "Fenster", "kaufen", "dort", "oben"]

FIDELITY = {
    InputMode.T: dict(drop=0.50, add=0.35, flip=0.30),
    InputMode.ST: dict(drop=0.40, add=0.30, flip=0.20),
    InputMode.RT: dict(drop=0.08, add=0.05, flip=0.05),
    InputMode.SRT: dict(drop=0.20, add=0.15, flip=0.10),
}

CATEGORIES = ["accuracy", "fluency", "style", "terminology"]


def build_corpus() -> Corpus:
    lp = LanguagePair.from_code("en-de")
    rng = random.Random(SEED)
    segments = []
    for seg_id, (source, reference) in enumerate(SENTENCES):
        ref_words = reference.split()
        for quality, system in enumerate(SYSTEMS):
            words = list(ref_words)
            errors = []
            positions = rng.sample(range(len(words)), min(quality,
                                                          len(words)))
            for rank, pos in enumerate(sorted(positions)):
                wrong = rng.choice(WRONG_WORDS)
                words[pos] = wrong
                severity = "major" if rank == 0 and quality >= 2 else "minor"
                category = rng.choice(CATEGORIES)
                errors.append((severity, category, wrong))
            translation = " ".join(words)
            annotations = [
                ErrorAnnotation(severity=sev,
                                category=CategoryLabel.from_raw(cat),
                                span_text=span,
                                word_span=align_span(translation, span))
                for sev, cat, span in errors
            ]
            segments.append(Segment(
                lp=lp, system_id=system, doc_id=f"doc{seg_id // 2}",
                seg_id=seg_id, source=source, reference=reference,
                translation=translation, gold_errors=annotations,
                gold_score=mqm_score(annotations)))
    return Corpus(segments)


def build_demo_pool() -> Corpus:
    lp = LanguagePair.from_code("en-de")
    base = [
        ("The dog runs fast.", "Der Hund rennt schnell.",
         "Der Hund rennt schnell.", []),
        ("The soup is too salty.", "Die Suppe ist zu salzig.",
         "Die Suppe ist zu salzig.", []),
        ("We will arrive tomorrow.", "Wir kommen morgen an.",
         "Wir kommen morgen an.", []),
        ("She bought three apples.", "Sie kaufte drei Äpfel.",
         "Sie kaufte drei Apfel.", [("minor", "fluency", "Apfel")]),
        ("The door was open.", "Die Tür war offen.",
         "Die Türe war offen.", [("minor", "style", "Türe")]),
        ("He reads the newspaper.", "Er liest die Zeitung.",
         "Er liest der Zeitung.", [("minor", "fluency", "der")]),
        ("He did not come home.", "Er kam nicht nach Hause.",
         "Er kam nach Hause.", [("major", "accuracy", "kam nach Hause")]),
        ("The bank rejected the loan.", "Die Bank lehnte den Kredit ab.",
         "Die Bank nahm den Kredit an.",
         [("major", "accuracy", "nahm den Kredit an")]),
        ("Turn left at the church.", "Biegen Sie an der Kirche links ab.",
         "Biegen Sie an der Kirche rechts ab.",
         [("major", "accuracy", "rechts")]),
    ]
    segments = []
    for i, (source, reference, translation, errors) in enumerate(base):
        annotations = [
            ErrorAnnotation(severity=sev,
                            category=CategoryLabel.from_raw(cat),
                            span_text=span,
                            word_span=align_span(translation, span))
            for sev, cat, span in errors
        ]
        segments.append(Segment(
            lp=lp, system_id="pool", doc_id="pool", seg_id=100 + i,
            source=source, reference=reference, translation=translation,
            gold_errors=annotations, gold_score=mqm_score(annotations)))
    return Corpus(segments)


def synth_output(segment: Segment, mode: InputMode, index: int) -> str:
    """Deterministic synthetic judge answer for one (segment, mode)."""
    if index % 13 == 5:
        return "The translation reads acceptably to me overall."
    rng = random.Random(f"{segment.key}:{mode.value}:{SEED}")
    fidelity = FIDELITY[mode]
    predicted = []
    for error in segment.gold_errors:
        if rng.random() < fidelity["drop"]:
            continue
        severity = error.severity
        if rng.random() < fidelity["flip"]:
            severity = "minor" if severity == "major" else "major"
        predicted.append(ErrorAnnotation(
            severity=severity, category=error.category,
            span_text=error.span_text, word_span=error.word_span))
    if rng.random() < fidelity["add"]:
        words = segment.translation.split()
        span = rng.choice(words)
        predicted.append(ErrorAnnotation(
            severity=rng.choice(["minor", "minor", "major"]),
            category=CategoryLabel.from_raw(rng.choice(CATEGORIES)),
            span_text=span,
            word_span=align_span(segment.translation, span)))
    line = render_error_line(predicted)
    if index % 7 == 3 and predicted:
        # exercise the tolerant line-per-error grammar
        return "\n".join(
            f"{e.severity.capitalize()}: {e.span_text} - "
            f"{e.category.canonical}" for e in predicted)
    return line


def main(out_dir: Path) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    corpus = build_corpus()
    pool = build_demo_pool()
    write_corpus(out_dir / "corpus40.jsonl", corpus)
    write_corpus(out_dir / "demo_pool.jsonl", pool)

    demos = sample_demonstrations(pool, k=2, seed=SEED)
    answers = {}
    prompts = []
    for index, segment in enumerate(corpus):
        for mode in MODES:
            text = render_automqm(segment, mode, demos).text
            answers[text] = synth_output(segment, mode, index)
            prompts.append(text)

    def transport(url, payload, headers, timeout):
        content = payload["messages"][0]["content"]
        reply = answers[content]
        return 200, {
            "choices": [{"message": {"content": reply}}],
            "usage": {"prompt_tokens": len(content) // 4,
                      "completion_tokens": max(len(reply) // 4, 1)},
        }

    store = TranscriptStore(out_dir / "store")
    gw = Gateway(store=store, mode="record", transport=transport, backoff=())
    spec = ModelSpec(name="fixture-judge", kind="chat",
                     endpoint="http://replay.invalid/v1/chat",
                     decoding=DecodingParams())
    for text in prompts:
        gw.complete(spec, text)
    print(f"fixture: {len(corpus)} segments, {len(pool)} pool segments, "
          f"{len(store)} transcripts -> {out_dir}")


if __name__ == "__main__":
    target = Path(sys.argv[1]) if len(sys.argv) > 1 else (
        Path(__file__).resolve().parent.parent / "tests" / "fixtures" / "e2e")
    main(target)
