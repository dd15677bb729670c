"""Databases, schema-linking sets and linked examples.

Every identifier that crosses a module boundary goes through
:func:`normalize_identifier`, and every column is stored table-qualified
(``"table.column"``).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Optional

STAR = "*"

_QUOTE_PAIRS = {'"': '"', "`": "`", "[": "]", "'": "'"}


class SchemaError(ValueError):
    """Raised for invalid identifiers, schemas or ground-truth sets."""


def normalize_identifier(raw: str) -> str:
    """Lowercase ``raw`` and strip one layer of surrounding quotes.

    Internal characters (including whitespace) are kept verbatim.
    """
    text = raw.strip()
    while len(text) >= 2 and text[0] in _QUOTE_PAIRS and text[-1] == _QUOTE_PAIRS[text[0]]:
        text = text[1:-1].strip()
    if not text:
        raise SchemaError(f"invalid identifier: {raw!r}")
    return text.lower()


def qualify_column(table: str, column: str) -> str:
    return f"{table}.{column}"


def split_qualified(qualified: str) -> tuple[str, str]:
    table, sep, column = qualified.partition(".")
    if not sep or not table or not column:
        raise SchemaError(f"not a qualified column: {qualified!r}")
    return table, column


@dataclass(frozen=True)
class TableDef:
    name: str
    columns: tuple[str, ...]

    def __post_init__(self):
        name = normalize_identifier(self.name)
        cols = tuple(normalize_identifier(c) for c in self.columns)
        if not cols:
            raise SchemaError(f"table {name!r} has no columns")
        if len(set(cols)) != len(cols):
            raise SchemaError(f"duplicate column in table {name!r}")
        object.__setattr__(self, "name", name)
        object.__setattr__(self, "columns", cols)


@dataclass(frozen=True)
class DbSchema:
    db_id: str
    tables: tuple[TableDef, ...]
    _index: dict = field(init=False, repr=False, compare=False, hash=False)

    def __post_init__(self):
        tables = tuple(self.tables)
        if not tables:
            raise SchemaError(f"database {self.db_id!r} has no tables")
        index: dict[str, TableDef] = {}
        for table in tables:
            if table.name in index:
                raise SchemaError(f"duplicate table {table.name!r} in {self.db_id!r}")
            index[table.name] = table
        object.__setattr__(self, "tables", tables)
        object.__setattr__(self, "_index", index)

    @classmethod
    def from_mapping(cls, db_id: str, tables: dict[str, Iterable[str]]) -> "DbSchema":
        return cls(db_id, tuple(TableDef(name, tuple(cols)) for name, cols in tables.items()))

    @property
    def table_names(self) -> list[str]:
        return [t.name for t in self.tables]

    def has_table(self, name: str) -> bool:
        return name in self._index

    def table(self, name: str) -> TableDef:
        try:
            return self._index[name]
        except KeyError:
            raise SchemaError(f"unknown table {name!r} in {self.db_id!r}") from None

    def qualified_columns(self) -> list[str]:
        return [qualify_column(t.name, c) for t in self.tables for c in t.columns]

    def has_column(self, qualified: str) -> bool:
        table, column = split_qualified(qualified)
        return table in self._index and column in self._index[table].columns

    def owners(self, column: str, among: Optional[Iterable[str]] = None) -> list[str]:
        """Tables (optionally restricted to ``among``) that own ``column``."""
        names = self.table_names if among is None else list(among)
        return [n for n in names if n in self._index and column in self._index[n].columns]


def _normalize_column(entry: str) -> str:
    table, sep, column = entry.partition(".")
    if not sep:
        return normalize_identifier(entry)
    return qualify_column(normalize_identifier(table), normalize_identifier(column))


@dataclass(frozen=True)
class SchemaLinkSet:
    """Tables and qualified columns; order and duplicates are never observable."""

    tables: frozenset[str] = frozenset()
    columns: frozenset[str] = frozenset()

    def __post_init__(self):
        object.__setattr__(self, "tables", frozenset(normalize_identifier(t) for t in self.tables))
        object.__setattr__(self, "columns", frozenset(_normalize_column(c) for c in self.columns))

    @classmethod
    def of(cls, tables: Iterable[str] = (), columns: Iterable[str] = ()) -> "SchemaLinkSet":
        return cls(frozenset(tables), frozenset(columns))

    def is_consistent(self) -> bool:
        return all(c.partition(".")[0] in self.tables for c in self.columns)

    def validate_truth(self, schema: Optional[DbSchema] = None) -> None:
        """Check the invariants a ground-truth set must satisfy."""
        if not self.tables:
            raise SchemaError("ground truth has no tables")
        for col in sorted(self.columns):
            table, _ = split_qualified(col)
            if table not in self.tables:
                raise SchemaError(f"column {col!r} references table outside the set")
        if schema is not None:
            for t in sorted(self.tables):
                schema.table(t)
            for col in sorted(self.columns):
                if not schema.has_column(col):
                    raise SchemaError(f"unknown column {col!r} in {schema.db_id!r}")

    def to_json(self) -> dict:
        return {"tables": sorted(self.tables), "columns": sorted(self.columns)}

    @classmethod
    def from_json(cls, data: dict) -> "SchemaLinkSet":
        return cls.of(data.get("tables", ()), data.get("columns", ()))


@dataclass(frozen=True)
class LinkedExample:
    id: str
    db_id: str
    question: str
    sql: str
    truth: SchemaLinkSet
    cot: Optional[str] = None

    def __post_init__(self):
        if not self.truth.tables:
            raise SchemaError(f"example {self.id!r}: ground truth has no tables")

    def to_json(self) -> dict:
        record = {
            "id": self.id,
            "db_id": self.db_id,
            "question": self.question,
            "query": self.sql,
            **self.truth.to_json(),
        }
        if self.cot is not None:
            record["cot"] = self.cot
        return record

    @classmethod
    def from_json(cls, data: dict) -> "LinkedExample":
        return cls(
            id=str(data["id"]),
            db_id=data["db_id"],
            question=data["question"],
            sql=data["query"],
            truth=SchemaLinkSet.from_json(data),
            cot=data.get("cot"),
        )
