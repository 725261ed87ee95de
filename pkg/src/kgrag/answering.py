"""Grounded answer generation from retrieved path chains."""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Sequence

from .explore import FAILURE_MESSAGE, Failure, NodeElement, PathElement, RetrievalResult
from .llm import TAG_ANSWER, ChatMessage, LmRequest, ProviderError
from .prompts import ANSWER_SYSTEM
from .triples import escape_label

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class AnswerContext:
    """What the answer was produced from. ``grounded`` is True only when the
    answer came from an LM call over retrieved paths."""

    question: str
    paths: str
    answer: str
    grounded: bool


def format_paths(chains: Sequence[Sequence[PathElement]]) -> str:
    """Render chains in triple syntax, one chain per line:
    ``(A)-[r]->(B)-[s]->(C)``; a single-node chain renders as ``(A)``."""
    if not chains:
        raise ValueError("no chains to format")
    lines = []
    for chain in chains:
        parts = []
        for element in chain:
            if isinstance(element, NodeElement):
                parts.append(f"({escape_label(element.label)})")
            else:
                parts.append(f"-[{escape_label(element.label)}]->")
        lines.append("".join(parts))
    return "\n".join(lines)


def generate_answer(provider, question: str, result: RetrievalResult) -> AnswerContext:
    """Failure passes straight through (no LM call, not grounded); paths are
    formatted and handed to the LM with the question."""
    if isinstance(result, Failure):
        return AnswerContext(question, "", result.message, grounded=False)
    if not result.chains:
        # The evaluator said respond, but nothing connected a start node to a
        # current node; degrade to the failure message rather than invent.
        logger.warning("respond verdict with no connected chains; failing the question")
        return AnswerContext(question, "", FAILURE_MESSAGE, grounded=False)
    paths_text = format_paths(result.chains)
    request = LmRequest(
        [ChatMessage("system", ANSWER_SYSTEM),
         ChatMessage("user", f"Question: {question}\nPaths:\n{paths_text}")],
        tag=TAG_ANSWER,
    )
    try:
        response = provider.complete(request)
    except ProviderError as exc:
        logger.error("answer generation failed: %s", exc)
        return AnswerContext(question, paths_text, FAILURE_MESSAGE, grounded=False)
    return AnswerContext(question, paths_text, response.content.strip(), grounded=True)
