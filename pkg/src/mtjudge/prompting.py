"""Render prompt texts for LLM translation evaluators.

Two prompt families are supported: a direct 0-100 scoring prompt and an
error-listing prompt with optional in-context demonstrations, each in four
input modes (translation only, plus source and/or reference). Rendering is a
pure function of its arguments; downstream golden-file tests pin the exact
bytes, so edit the templates here with care.
"""

from __future__ import annotations

from dataclasses import dataclass

from .data import ErrorAnnotation, InputMode, Segment

TEMPLATES = ("gemba-sqm", "automqm", "logprob-chat", "logprob-base")


class PromptError(Exception):
    pass


@dataclass(frozen=True)
class RenderedPrompt:
    """A prompt ready to send, plus enough metadata to account for it.

    For log-probability templates, ``text`` is context + continuation and the
    ``context`` property recovers the conditioning prefix.
    """

    text: str
    mode: InputMode
    template: str
    demo_count: int = 0
    continuation: str | None = None

    def __post_init__(self):
        if not self.text:
            raise ValueError("prompt text must be non-empty")
        if self.template not in TEMPLATES:
            raise ValueError(f"unknown template {self.template!r}")
        if self.demo_count and self.template != "automqm":
            raise ValueError("only automqm prompts carry demonstrations")
        if (self.continuation is not None) != self.template.startswith("logprob"):
            raise ValueError("continuation present iff logprob template")

    @property
    def context(self) -> str:
        if self.continuation is None:
            return self.text
        return self.text[: len(self.text) - len(self.continuation)]


def _require(segment: Segment, mode: InputMode, role: str) -> None:
    if mode.includes_reference and not segment.reference:
        raise PromptError(
            f"mode {mode.value} needs a reference but {role} "
            f"{segment.key} has none")


def _segment_lines(segment: Segment, mode: InputMode) -> list[str]:
    lp = segment.lp
    lines = []
    if mode.includes_source:
        lines.append(f'{lp.source_lang} source: "{segment.source}"')
    if mode.includes_reference:
        lines.append(f'{lp.target_lang} human reference: "{segment.reference}"')
    lines.append(f'{lp.target_lang} translation: "{segment.translation}"')
    return lines


def gemba_sqm_instruction(segment: Segment, mode: InputMode) -> str:
    ref_clause = (" with respect to the human reference"
                  if mode.includes_reference else "")
    return (
        f"Score the following translation from {segment.lp.source_lang} to "
        f"{segment.lp.target_lang}{ref_clause} on a continuous scale from 0 "
        f'to 100 that starts on "No meaning preserved", goes through "Some '
        f'meaning preserved", then "Most meaning preserved and few grammar '
        f'mistakes", up to "Perfect meaning and grammar".'
    )


def render_gemba_sqm(segment: Segment, mode: InputMode) -> RenderedPrompt:
    """Direct 0-100 quality scoring prompt for one segment."""
    _require(segment, mode, "segment")
    text = (gemba_sqm_instruction(segment, mode) + "\n\n"
            + "\n".join(_segment_lines(segment, mode))
            + "\nScore (0-100):")
    return RenderedPrompt(text=text, mode=mode, template="gemba-sqm")


_AUTOMQM_LEAD = {
    InputMode.T: "Identify the major and minor errors in this translation.",
    InputMode.ST: ("Based on the given source, identify the major and minor "
                   "errors in this translation."),
    InputMode.RT: ("Based on the given reference, identify the major and "
                   "minor errors in this translation."),
    InputMode.SRT: ("Based on the given source and reference, identify the "
                    "major and minor errors in this translation."),
}

_AUTOMQM_NOTE = (
    "Note that Major errors refer to actual translation or grammatical "
    "errors, and Minor errors refer to smaller imperfections, and purely "
    "subjective opinions about the translation."
)


def automqm_instruction(mode: InputMode) -> str:
    return f"{_AUTOMQM_LEAD[mode]} {_AUTOMQM_NOTE}"


def render_error_line(errors: list[ErrorAnnotation]) -> str:
    """Deterministic inline encoding of an error list.

    Empty list renders as "no-error"; entries render in order as
    severity/category: 'span' joined by "; ". The parsing module inverts this
    for any span text that does not contain a single quote directly followed
    by a semicolon (the one sequence this encoding cannot delimit).
    """
    if not errors:
        return "no-error"
    return "; ".join(
        f"{e.severity}/{e.category.canonical}: '{e.span_text}'"
        for e in errors
    )


def automqm_answer_block(segment: Segment, mode: InputMode) -> str:
    """The per-segment block of an error prompt, ending with "Errors:"."""
    _require(segment, mode, "segment")
    return "\n".join(_segment_lines(segment, mode)) + "\nErrors:"


def render_automqm(segment: Segment, mode: InputMode,
                   demos: list[Segment] | None = None) -> RenderedPrompt:
    """Error-listing prompt: instruction, demonstrations, then the segment."""
    demos = demos or []
    blocks = [automqm_instruction(mode)]
    for i, demo in enumerate(demos):
        if mode.includes_reference and not demo.reference:
            raise PromptError(
                f"mode {mode.value} needs a reference but demonstration "
                f"{i} ({demo.key}) has none")
        blocks.append(
            "\n".join(_segment_lines(demo, mode))
            + f"\nErrors: {render_error_line(demo.gold_errors)}")
    blocks.append(automqm_answer_block(segment, mode))
    return RenderedPrompt(text="\n\n".join(blocks), mode=mode,
                          template="automqm", demo_count=len(demos))


def render_logprob_context(segment: Segment, mode: InputMode,
                           model_kind: str) -> RenderedPrompt:
    """Context/continuation pair for scoring the translation by its
    log-probability.

    Base models get the mode's fields joined by " = " with the translation
    last; chat models reuse the scoring prompt as context. In both cases the
    continuation is the translation itself.
    """
    if model_kind not in ("chat", "base"):
        raise ValueError(f"unknown model kind {model_kind!r}")
    _require(segment, mode, "segment")
    continuation = segment.translation
    if model_kind == "chat":
        context = render_gemba_sqm(segment, mode).text
        template = "logprob-chat"
    else:
        fields = []
        if mode.includes_source:
            fields.append(segment.source)
        if mode.includes_reference:
            fields.append(segment.reference)
        context = "".join(f"{f} = " for f in fields)
        template = "logprob-base"
    return RenderedPrompt(text=context + continuation, mode=mode,
                          template=template, continuation=continuation)
