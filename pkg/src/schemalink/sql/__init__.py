from .extract import (
    AmbiguousColumnError,
    ResolutionError,
    UnknownColumnError,
    UnknownTableError,
    build_ground_truth,
    extract_refs,
)
from .lexer import LexError, SqlError, SqlToken, tokenize_sql
from .parser import ParseError, SelectAst, UnsupportedSqlError, parse_select, parse_sql

__all__ = [
    "AmbiguousColumnError",
    "LexError",
    "ParseError",
    "ResolutionError",
    "SelectAst",
    "SqlError",
    "SqlToken",
    "UnknownColumnError",
    "UnknownTableError",
    "UnsupportedSqlError",
    "build_ground_truth",
    "extract_refs",
    "parse_select",
    "parse_sql",
    "tokenize_sql",
]
