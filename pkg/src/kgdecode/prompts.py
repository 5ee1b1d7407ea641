"""Prompt construction: the original prompt and its masked counterpart.

Both prompts share one template (INSTRUCTION block plus question, topic
entities, and one path per line). The masked variant replaces each plus-set
path line with the mask surface form and is byte-identical elsewhere, which
is what makes the two LM branches contrastable. Similarity scores never
appear in either prompt.
"""

from __future__ import annotations

from dataclasses import dataclass
from importlib import resources

from .errors import TemplateError
from .scoring import QuestionInstance, ScoredPathSet

PLACEHOLDERS = ("{INSTRUCTION}", "{QUESTION}", "{TOPIC_ENTITIES}", "{PATHS}")

DEFAULT_MASK_FORM = "[MASK]"

DEFAULT_INSTRUCTION = (
    "You are a knowledge graph reasoning assistant. Answer the question using "
    "only the knowledge graph paths listed below. Reply with exactly one "
    "complete path, connecting entities and relations with the → delimiter; "
    "the final entity of your path is the answer."
)


def default_template() -> str:
    return (
        resources.files("kgdecode").joinpath("templates/default_prompt.txt").read_text("utf-8")
    )


def load_template(path: str) -> str:
    with open(path, "r", encoding="utf-8") as fh:
        return fh.read()


@dataclass(frozen=True)
class PromptPair:
    """The two LM branches plus the byte spans that differ.

    masked_spans lists (start_byte, end_byte, entry_index) ranges in
    `original` (UTF-8 offsets), one per plus-set path, each replaced by the
    mask form in `masked`.
    """

    original: str
    masked: str
    masked_spans: tuple[tuple[int, int, int], ...]


def build_prompts(
    template: str,
    q: QuestionInstance,
    sps: ScoredPathSet,
    mask_form: str = DEFAULT_MASK_FORM,
    instruction: str = DEFAULT_INSTRUCTION,
) -> PromptPair:
    """Render the original and masked prompts from one template.

    The template must contain each placeholder exactly once. Path lines
    appear in ScoredPathSet entry order (score descending, text ascending).
    """
    for placeholder in PLACEHOLDERS:
        count = template.count(placeholder)
        if count == 0:
            raise TemplateError(f"template is missing required placeholder {placeholder}")
        if count > 1:
            raise TemplateError(f"template repeats placeholder {placeholder}")

    partial = template.replace("{INSTRUCTION}", instruction)
    partial = partial.replace("{QUESTION}", q.question)
    partial = partial.replace("{TOPIC_ENTITIES}", ", ".join(q.topic_entities))

    head, tail = partial.split("{PATHS}")
    plus = set(sps.plus_set)

    original_parts: list[str] = [head]
    masked_parts: list[str] = [head]
    spans: list[tuple[int, int, int]] = []
    offset = len(head.encode("utf-8"))
    for index, entry in enumerate(sps.entries):
        if index > 0:
            original_parts.append("\n")
            masked_parts.append("\n")
            offset += 1
        text_bytes = len(entry.text.encode("utf-8"))
        if index in plus:
            spans.append((offset, offset + text_bytes, index))
            masked_parts.append(mask_form)
        else:
            masked_parts.append(entry.text)
        original_parts.append(entry.text)
        offset += text_bytes
    original_parts.append(tail)
    masked_parts.append(tail)

    return PromptPair(
        original="".join(original_parts),
        masked="".join(masked_parts),
        masked_spans=tuple(spans),
    )
