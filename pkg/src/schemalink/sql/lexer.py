from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Optional


class SqlError(ValueError):
    """Base class for every SQL lexing, parsing and resolution failure."""

    def __init__(self, message: str, position: Optional[int] = None):
        self.position = position
        if position is not None:
            message = f"{message} (at offset {position})"
        super().__init__(message)


class LexError(SqlError):
    pass


KEYWORDS = frozenset(
    """
    select from where group by having order asc desc limit offset union intersect
    except all distinct as join inner left right outer cross natural on and or not
    in like glob between is null exists case when then else end using with insert
    update delete create drop alter values set into over partition cast
    """.split()
)

# Ordered so that two-character operators win over their one-character prefixes.
_OPERATORS = ("<>", "!=", "<=", ">=", "==", "||", "=", "<", ">", "+", "-", "/", "%")
_PUNCT = "(),.;"

_NUMBER = re.compile(r"(?:\d+\.\d*|\.\d+|\d+)(?:[eE][+-]?\d+)?")
_WORD = re.compile(r"[A-Za-z_][A-Za-z0-9_$]*")


@dataclass(frozen=True)
class SqlToken:
    kind: str  # keyword | identifier | number | string | operator | punctuation | star
    text: str
    position: int

    @property
    def value(self) -> str:
        """Text with quoting removed (and lowercased, for keywords)."""
        if self.kind == "keyword":
            return self.text.lower()
        if self.kind == "string":
            q = self.text[0]
            return self.text[1:-1].replace(q + q, q)
        if self.kind == "identifier" and self.text[0] in "`[":
            return self.text[1:-1]
        return self.text

    @property
    def quote(self) -> Optional[str]:
        if self.kind in ("string", "identifier") and self.text[0] in "'\"`[":
            return self.text[0]
        return None

    def is_keyword(self, *words: str) -> bool:
        return self.kind == "keyword" and self.text.lower() in words

    def is_punct(self, char: str) -> bool:
        return self.kind == "punctuation" and self.text == char


def _scan_quoted(sql: str, start: int, close: str, doubling: bool) -> int:
    """Index one past the closing quote starting from the opener at ``start``."""
    i = start + 1
    while True:
        j = sql.find(close, i)
        if j < 0:
            raise LexError(f"unterminated quote {sql[start]!r}", start)
        if doubling and sql.startswith(close * 2, j):
            i = j + 2
            continue
        return j + 1


def tokenize_sql(sql: str) -> list[SqlToken]:
    """Split ``sql`` into tokens; whitespace is the only text not covered.

    Single- and double-quoted text lexes as ``string`` tokens (Spider writes
    literals in double quotes); backtick and bracket quoting yields identifiers.
    """
    if not sql or not sql.strip():
        raise LexError("empty SQL text", 0)
    tokens: list[SqlToken] = []
    i, n = 0, len(sql)
    while i < n:
        ch = sql[i]
        if ch.isspace():
            i += 1
            continue
        if ch in "'\"":
            end = _scan_quoted(sql, i, ch, doubling=True)
            tokens.append(SqlToken("string", sql[i:end], i))
        elif ch == "`":
            end = _scan_quoted(sql, i, "`", doubling=True)
            tokens.append(SqlToken("identifier", sql[i:end], i))
        elif ch == "[":
            end = _scan_quoted(sql, i, "]", doubling=False)
            tokens.append(SqlToken("identifier", sql[i:end], i))
        elif ch.isdigit() or (ch == "." and i + 1 < n and sql[i + 1].isdigit()):
            m = _NUMBER.match(sql, i)
            end = m.end()
            tokens.append(SqlToken("number", sql[i:end], i))
        elif ch.isalpha() or ch == "_":
            end = _WORD.match(sql, i).end()
            word = sql[i:end]
            kind = "keyword" if word.lower() in KEYWORDS else "identifier"
            tokens.append(SqlToken(kind, word, i))
        elif ch == "*":
            end = i + 1
            tokens.append(SqlToken("star", "*", i))
        elif ch in _PUNCT:
            end = i + 1
            tokens.append(SqlToken("punctuation", ch, i))
        else:
            for op in _OPERATORS:
                if sql.startswith(op, i):
                    end = i + len(op)
                    tokens.append(SqlToken("operator", op, i))
                    break
            else:
                raise LexError(f"unexpected character {ch!r}", i)
        i = end
    return tokens
