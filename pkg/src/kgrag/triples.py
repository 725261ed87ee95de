"""Parsing and serialization of the nested triple line syntax.

A statement is ``(subject)-[predicate]->(object)``. Either side may itself
be a parenthesized statement, which nests the fact::

    ((Seth MacFarlane)-[created]->(Family Guy))-[in]->(1999)

Disambiguation after ``(`` is statement-first: a full statement parse is
attempted and entity-label scanning is the fallback, so unescaped structural
characters never hide inside labels.
"""

from __future__ import annotations

import unicodedata
from dataclasses import dataclass
from typing import Union

DEFAULT_MAX_DEPTH = 4

# Characters that may be backslash-escaped inside a label.
ESCAPABLE = frozenset("()[]-\\")
# Escapes the serializer actually emits. "-" is accepted escaped on input
# but left raw on output; it is unambiguous because "[" and "]" never are.
_SERIALIZE_ESCAPED = frozenset("()[]\\")

# Typographic variants tolerated at delimiter positions only; label content
# keeps these characters untouched.
_MINUS = "-−"          # hyphen-minus, minus sign
_RIGHT_ARROW = "→"     # single-character form of "->"


class TripleSyntaxError(ValueError):
    """Malformed triple text.

    ``offset`` is the byte offset into the UTF-8 encoding of the input,
    ``position`` the character index. ``line`` is filled in by
    :func:`parse_extraction_block` (1-based), otherwise None.
    """

    def __init__(self, message: str, text: str = "", position: int = 0):
        self.position = position
        self.offset = len(text[:position].encode("utf-8"))
        self.line: int | None = None
        super().__init__(f"{message} (byte offset {self.offset})")


@dataclass(frozen=True)
class Entity:
    """Leaf term: a plain label."""

    label: str


@dataclass(frozen=True)
class TripleStatement:
    """One ``subject -[predicate]-> object`` statement; terms may nest."""

    subject: "TripleTerm"
    predicate: str
    object: "TripleTerm"


TripleTerm = Union[Entity, TripleStatement]


def statement_depth(statement: TripleStatement) -> int:
    """Nesting depth: 1 for a flat triple, +1 per level of nesting."""

    def term_depth(term: TripleTerm) -> int:
        if isinstance(term, Entity):
            return 0
        return statement_depth(term)

    return 1 + max(term_depth(statement.subject), term_depth(statement.object))


class _Parser:
    def __init__(self, text: str, max_depth: int):
        self.text = text
        self.pos = 0
        self.max_depth = max_depth

    def error(self, message: str, position: int | None = None) -> TripleSyntaxError:
        pos = self.pos if position is None else position
        return TripleSyntaxError(message, self.text, pos)

    def at_end(self) -> bool:
        return self.pos >= len(self.text)

    def peek(self) -> str:
        return "" if self.at_end() else self.text[self.pos]

    def skip_ws(self) -> None:
        while not self.at_end() and self.text[self.pos].isspace():
            self.pos += 1

    def parse_statement(self, level: int) -> TripleStatement:
        if level > self.max_depth:
            raise self.error(f"nesting depth exceeds {self.max_depth}")
        subject = self.parse_node(level)
        self.skip_ws()
        if self.peek() not in _MINUS:
            raise self.error("expected '-[' after subject")
        self.pos += 1
        self.skip_ws()
        if self.peek() != "[":
            raise self.error("expected '[' to open the predicate")
        self.pos += 1
        predicate = self.scan_label("]")
        self.skip_ws()
        self.expect_arrow_tail()
        self.skip_ws()
        obj = self.parse_node(level)
        return TripleStatement(subject, predicate, obj)

    def expect_arrow_tail(self) -> None:
        # "]" was consumed by scan_label; now "->" (or the arrow character).
        c = self.peek()
        if c == _RIGHT_ARROW:
            self.pos += 1
            return
        if c in _MINUS and self.pos + 1 < len(self.text) and self.text[self.pos + 1] == ">":
            self.pos += 2
            return
        raise self.error("expected '->' after predicate")

    def parse_node(self, level: int) -> TripleTerm:
        self.skip_ws()
        if self.peek() != "(":
            raise self.error("expected '(' to open a node")
        self.pos += 1
        saved = self.pos
        statement_error: TripleSyntaxError | None = None
        try:
            inner = self.parse_statement(level + 1)
            self.skip_ws()
            if self.peek() != ")":
                raise self.error("expected ')' to close the nested statement")
            self.pos += 1
            return inner
        except TripleSyntaxError as exc:
            statement_error = exc
            self.pos = saved
        try:
            label = self.scan_label(")")
        except TripleSyntaxError as entity_error:
            # Surface whichever attempt got further; the statement error wins
            # ties so depth violations are reported as such.
            if statement_error is not None and statement_error.position >= entity_error.position:
                raise statement_error from None
            raise
        return Entity(label)

    def scan_label(self, closing: str) -> str:
        start = self.pos
        chars: list[str] = []
        while True:
            if self.at_end():
                raise self.error(f"unterminated label, expected '{closing}'", start)
            c = self.text[self.pos]
            if c == "\\":
                if self.pos + 1 >= len(self.text):
                    raise self.error("dangling escape at end of input")
                nxt = self.text[self.pos + 1]
                if nxt not in ESCAPABLE:
                    raise self.error(f"invalid escape '\\{nxt}'")
                chars.append(nxt)
                self.pos += 2
                continue
            if c == closing:
                self.pos += 1
                break
            if c in "()[]":
                raise self.error(f"unescaped '{c}' inside a label")
            chars.append(c)
            self.pos += 1
        label = unicodedata.normalize("NFC", "".join(chars)).strip()
        if not label:
            raise self.error("empty label", start)
        return label


def parse_triple(text: str, max_depth: int = DEFAULT_MAX_DEPTH) -> TripleStatement:
    """Parse one statement; raises :class:`TripleSyntaxError` on any defect.

    Labels come out NFC-normalized and stripped of surrounding whitespace.
    Trailing non-whitespace after the statement is an error.
    """
    parser = _Parser(text, max_depth)
    parser.skip_ws()
    statement = parser.parse_statement(1)
    parser.skip_ws()
    if not parser.at_end():
        raise parser.error("trailing text after statement")
    return statement


def escape_label(label: str) -> str:
    """Escape structural characters so the label survives a round trip."""
    return "".join("\\" + c if c in _SERIALIZE_ESCAPED else c for c in label)


def serialize_triple(statement: TripleStatement) -> str:
    """Canonical single-line form: no padding around delimiters."""

    def term(t: TripleTerm) -> str:
        if isinstance(t, Entity):
            return f"({escape_label(t.label)})"
        return f"({serialize_triple(t)})"

    return (
        f"{term(statement.subject)}-[{escape_label(statement.predicate)}]->"
        f"{term(statement.object)}"
    )


def parse_extraction_block(
    text: str, max_depth: int = DEFAULT_MAX_DEPTH
) -> tuple[list[TripleStatement], list[TripleSyntaxError]]:
    """Parse model output line by line: one statement per non-empty line.

    Bad lines are collected (with their 1-based line number) rather than
    aborting the batch, so one garbled line cannot sink a whole chunk.
    """
    statements: list[TripleStatement] = []
    errors: list[TripleSyntaxError] = []
    for lineno, raw_line in enumerate(text.splitlines(), 1):
        line = raw_line.strip()
        if not line:
            continue
        try:
            statements.append(parse_triple(line, max_depth))
        except TripleSyntaxError as exc:
            exc.line = lineno
            errors.append(exc)
    return statements, errors
