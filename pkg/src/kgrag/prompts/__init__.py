"""Prompt templates, kept in one place so wording changes are reviewable."""

from .answering import ANSWER_SYSTEM
from .extraction import EXTRACTION_EXAMPLES, EXTRACTION_SYSTEM
from .traversal import (
    EVALUATE_SYSTEM,
    PLAN_EXAMPLES,
    PLAN_SYSTEM,
    REFINE_PREAMBLE,
    SELECT_NODES_SYSTEM,
    SELECT_RELS_SYSTEM,
)

__all__ = [
    "ANSWER_SYSTEM",
    "EXTRACTION_EXAMPLES",
    "EXTRACTION_SYSTEM",
    "EVALUATE_SYSTEM",
    "PLAN_EXAMPLES",
    "PLAN_SYSTEM",
    "REFINE_PREAMBLE",
    "SELECT_NODES_SYSTEM",
    "SELECT_RELS_SYSTEM",
]
