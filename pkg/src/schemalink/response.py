"""The policy/scorer wire format.

A well-formed response is exactly::

    <think>REASONING</think><answer>###table: t1, t2
    ###columns: t1.a, t2.b</answer>

with only whitespace allowed outside the two blocks.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Callable, Optional

from .schema import DbSchema, SchemaError, SchemaLinkSet, normalize_identifier, qualify_column

TABLE_MARKER = "###table:"
COLUMNS_MARKER = "###columns:"
# Spelling used once in prose; only accepted when ``accept_singular`` is set.
COLUMN_MARKER_SINGULAR = "###column:"
UNRESOLVED = "?"

_TAGS = ("<think>", "</think>", "<answer>", "</answer>")
_LAYOUT = re.compile(r"\s*<think>(.*?)</think>\s*<answer>(.*?)</answer>\s*", re.DOTALL)

TokenCounter = Callable[[str], int]


class AnswerParseError(ValueError):
    pass


def token_count(raw: str) -> int:
    """Number of maximal non-whitespace runs."""
    return len(raw.split())


def validate_format(raw: str) -> tuple[bool, Optional[str], Optional[str]]:
    """Return ``(ok, think_text, answer_text)``; never raises."""
    if any(raw.count(tag) != 1 for tag in _TAGS):
        return False, None, None
    m = _LAYOUT.fullmatch(raw)
    if m is None:
        return False, None, None
    return True, m.group(1), m.group(2)


def count_markers(answer_text: str, accept_singular: bool = False) -> tuple[int, int]:
    tables = answer_text.count(TABLE_MARKER)
    columns = answer_text.count(COLUMNS_MARKER)
    if accept_singular:
        columns += answer_text.count(COLUMN_MARKER_SINGULAR)
    return tables, columns


def _entries(text: str) -> list[str]:
    out = []
    for piece in text.split(","):
        piece = piece.strip()
        if not piece:
            continue
        try:
            out.append(normalize_identifier(piece))
        except SchemaError:
            continue
    return out


def parse_answer(answer_text: str, schema: DbSchema, accept_singular: bool = False) -> SchemaLinkSet:
    """Read the predicted tables and columns out of an answer block.

    Unqualified column entries are attached to the single predicted table that
    owns them; otherwise they become ``"?.column"`` and can never match.
    """
    counts = count_markers(answer_text, accept_singular)
    if counts != (1, 1):
        raise AnswerParseError(f"expected one table and one columns marker, found {counts}")
    col_marker = COLUMNS_MARKER
    if COLUMNS_MARKER not in answer_text:
        col_marker = COLUMN_MARKER_SINGULAR
    t_at = answer_text.index(TABLE_MARKER)
    c_at = answer_text.index(col_marker)
    if c_at < t_at:
        raise AnswerParseError("columns marker precedes table marker")

    tables = _entries(answer_text[t_at + len(TABLE_MARKER):c_at])
    table_set = set(tables)
    columns = set()
    for entry in _entries(answer_text[c_at + len(col_marker):]):
        table, dot, column = entry.partition(".")
        if dot and table and column:
            columns.add(qualify_column(table.strip(), column.strip()))
            continue
        owners = schema.owners(entry, among=sorted(table_set))
        columns.add(qualify_column(owners[0] if len(owners) == 1 else UNRESOLVED, entry))
    return SchemaLinkSet.of(table_set, columns)


def render_answer(link: SchemaLinkSet) -> str:
    return f"{TABLE_MARKER} {', '.join(sorted(link.tables))}\n{COLUMNS_MARKER} {', '.join(sorted(link.columns))}"


def render_response(think_text: str, link: SchemaLinkSet) -> str:
    return f"<think>{think_text}</think><answer>{render_answer(link)}</answer>"


@dataclass(frozen=True)
class ParsedResponse:
    raw: str
    think_text: Optional[str]
    answer_text: Optional[str]
    predicted: Optional[SchemaLinkSet]
    token_len: int
    format_ok: bool
    marker_table_count: int
    marker_columns_count: int

    @property
    def parse_failed(self) -> bool:
        return self.predicted is None


def parse_response(
    raw: str,
    schema: DbSchema,
    counter: TokenCounter = token_count,
    accept_singular: bool = False,
) -> ParsedResponse:
    """Decompose ``raw`` into everything the reward functions need.

    Marker counts come from the answer block when the layout is valid and from
    the whole text otherwise, so a malformed response can still earn the
    marker reward.
    """
    ok, think, answer = validate_format(raw)
    t_count, c_count = count_markers(answer if ok else raw, accept_singular)
    predicted = None
    if ok:
        try:
            predicted = parse_answer(answer, schema, accept_singular)
        except AnswerParseError:
            predicted = None
    return ParsedResponse(
        raw=raw,
        think_text=think,
        answer_text=answer,
        predicted=predicted,
        token_len=counter(raw),
        format_ok=ok,
        marker_table_count=t_count,
        marker_columns_count=c_count,
    )
