"""Recursive-descent parser for the Spider subset of SQLite SELECT syntax."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Union

from .lexer import SqlError, SqlToken, tokenize_sql


class ParseError(SqlError):
    pass


class UnsupportedSqlError(SqlError):
    """A recognised SQL construct that falls outside the supported subset."""

    def __init__(self, construct: str, position: Optional[int] = None):
        self.construct = construct
        super().__init__(f"unsupported SQL construct: {construct}", position)


AGGREGATES = frozenset({"count", "sum", "avg", "min", "max"})
SCALAR_FUNCTIONS = frozenset(
    {"abs", "lower", "upper", "length", "round", "substr", "coalesce", "ifnull", "strftime", "julianday"}
)


# --- expressions -----------------------------------------------------------


@dataclass(frozen=True)
class ColumnRef:
    name: str
    qualifier: Optional[str] = None
    position: int = 0


@dataclass(frozen=True)
class Star:
    qualifier: Optional[str] = None
    position: int = 0


@dataclass(frozen=True)
class Literal:
    value: str
    # Double-quoted text is an identifier in SQLite when it names a column.
    double_quoted: bool = False
    position: int = 0


@dataclass(frozen=True)
class FuncCall:
    name: str
    args: tuple
    distinct: bool = False


@dataclass(frozen=True)
class UnaryOp:
    op: str
    operand: "Expr"


@dataclass(frozen=True)
class BinaryOp:
    op: str
    left: "Expr"
    right: "Expr"


@dataclass(frozen=True)
class Between:
    expr: "Expr"
    low: "Expr"
    high: "Expr"
    negated: bool = False


@dataclass(frozen=True)
class InExpr:
    expr: "Expr"
    items: Union[tuple, "SelectAst"]
    negated: bool = False


@dataclass(frozen=True)
class IsNull:
    expr: "Expr"
    negated: bool = False


@dataclass(frozen=True)
class Exists:
    query: "SelectAst"
    negated: bool = False


@dataclass(frozen=True)
class Subquery:
    query: "SelectAst"


@dataclass(frozen=True)
class Case:
    operand: Optional["Expr"]
    whens: tuple  # of (condition, result)
    default: Optional["Expr"] = None


Expr = Union[ColumnRef, Star, Literal, FuncCall, UnaryOp, BinaryOp, Between, InExpr, IsNull, Exists, Subquery, Case]


# --- query structure -------------------------------------------------------


@dataclass(frozen=True)
class TableRef:
    name: str
    alias: Optional[str] = None
    position: int = 0


@dataclass(frozen=True)
class DerivedTable:
    query: "SelectAst"
    alias: Optional[str] = None


@dataclass(frozen=True)
class Join:
    kind: str  # "comma", "inner", "left", "right", "cross"
    source: Union[TableRef, DerivedTable]
    on: Optional[Expr] = None


@dataclass(frozen=True)
class SelectItem:
    expr: Expr
    alias: Optional[str] = None


@dataclass(frozen=True)
class OrderItem:
    expr: Expr
    descending: bool = False


@dataclass(frozen=True)
class SetOp:
    op: str  # "union", "union all", "intersect", "except"
    right: "SelectAst"


@dataclass(frozen=True)
class SelectAst:
    items: tuple
    source: Optional[Union[TableRef, DerivedTable]] = None
    joins: tuple = ()
    distinct: bool = False
    where: Optional[Expr] = None
    group_by: tuple = ()
    having: Optional[Expr] = None
    order_by: tuple = ()
    limit: Optional[Expr] = None
    set_op: Optional[SetOp] = None

    @property
    def sources(self) -> list:
        if self.source is None:
            return []
        return [self.source] + [j.source for j in self.joins]


# --- parser ----------------------------------------------------------------

_COMPARISON = ("=", "==", "!=", "<>", "<", ">", "<=", ">=")
_UNSUPPORTED_EXPR_KEYWORDS = ("over", "partition", "values", "set", "into")
_UNSUPPORTED_LEADING = ("with", "insert", "update", "delete", "create", "drop", "alter", "values")


@dataclass
class _Parser:
    tokens: list
    pos: int = 0
    _eof: SqlToken = field(init=False)

    def __post_init__(self):
        end = self.tokens[-1].position + len(self.tokens[-1].text) if self.tokens else 0
        self._eof = SqlToken("eof", "", end)

    # token helpers
    def peek(self, offset: int = 0) -> SqlToken:
        i = self.pos + offset
        return self.tokens[i] if i < len(self.tokens) else self._eof

    def advance(self) -> SqlToken:
        tok = self.peek()
        self.pos += 1
        return tok

    def error(self, expected: str) -> ParseError:
        tok = self.peek()
        shown = tok.text if tok.kind != "eof" else "end of input"
        return ParseError(f"expected {expected}, found {shown!r}", tok.position)

    def accept_keyword(self, *words: str) -> Optional[SqlToken]:
        if self.peek().is_keyword(*words):
            return self.advance()
        return None

    def expect_keyword(self, word: str) -> SqlToken:
        tok = self.accept_keyword(word)
        if tok is None:
            raise self.error(word.upper())
        return tok

    def accept_punct(self, char: str) -> bool:
        if self.peek().is_punct(char):
            self.pos += 1
            return True
        return False

    def expect_punct(self, char: str) -> None:
        if not self.accept_punct(char):
            raise self.error(repr(char))

    def expect_name(self, what: str) -> SqlToken:
        tok = self.peek()
        if tok.kind == "identifier" or (tok.kind == "string" and tok.quote == '"'):
            return self.advance()
        raise self.error(what)

    # statements
    def parse_statement(self) -> SelectAst:
        tok = self.peek()
        if tok.is_keyword(*_UNSUPPORTED_LEADING):
            raise UnsupportedSqlError(tok.text.upper(), tok.position)
        query = self.parse_query()
        self.accept_punct(";")
        if self.peek().kind != "eof":
            raise self.error("end of query")
        return query

    def parse_query(self) -> SelectAst:
        if self.peek().is_punct("(") and self.peek(1).is_keyword("select"):
            self.advance()
            core = self.parse_query()
            self.expect_punct(")")
        else:
            core = self.parse_select_core()
        op_tok = self.accept_keyword("union", "intersect", "except")
        if op_tok is None:
            return core
        op = op_tok.value
        if self.accept_keyword("all"):
            if op != "union":
                raise UnsupportedSqlError(f"{op.upper()} ALL", op_tok.position)
            op = "union all"
        right = self.parse_query()
        return _with_set_op(core, SetOp(op, right))

    def parse_select_core(self) -> SelectAst:
        self.expect_keyword("select")
        distinct = bool(self.accept_keyword("distinct"))
        self.accept_keyword("all")
        items = [self.parse_select_item()]
        while self.accept_punct(","):
            items.append(self.parse_select_item())

        source, joins = None, []
        if self.accept_keyword("from"):
            source = self.parse_table_source()
            joins = self.parse_joins()

        where = self.parse_expr() if self.accept_keyword("where") else None
        group_by: list = []
        having = None
        if self.accept_keyword("group"):
            self.expect_keyword("by")
            group_by.append(self.parse_expr())
            while self.accept_punct(","):
                group_by.append(self.parse_expr())
        if self.accept_keyword("having"):
            having = self.parse_expr()
        order_by: list = []
        if self.accept_keyword("order"):
            self.expect_keyword("by")
            order_by.append(self.parse_order_item())
            while self.accept_punct(","):
                order_by.append(self.parse_order_item())
        limit = None
        if self.accept_keyword("limit"):
            limit = self.parse_expr()
            if self.accept_keyword("offset") or self.accept_punct(","):
                self.parse_expr()
        return SelectAst(
            items=tuple(items),
            source=source,
            joins=tuple(joins),
            distinct=distinct,
            where=where,
            group_by=tuple(group_by),
            having=having,
            order_by=tuple(order_by),
            limit=limit,
        )

    def parse_select_item(self) -> SelectItem:
        tok = self.peek()
        if tok.kind == "star":
            self.advance()
            return SelectItem(Star(position=tok.position))
        expr = self.parse_expr()
        return SelectItem(expr, self.parse_alias())

    def parse_alias(self) -> Optional[str]:
        if self.accept_keyword("as"):
            return self.expect_name("alias").value
        tok = self.peek()
        if tok.kind == "identifier":
            self.advance()
            return tok.value
        return None

    def parse_order_item(self) -> OrderItem:
        expr = self.parse_expr()
        if self.accept_keyword("desc"):
            return OrderItem(expr, True)
        self.accept_keyword("asc")
        return OrderItem(expr, False)

    def parse_table_source(self):
        tok = self.peek()
        if tok.is_punct("("):
            self.advance()
            if not self.peek().is_keyword("select"):
                raise UnsupportedSqlError("parenthesised join", tok.position)
            query = self.parse_query()
            self.expect_punct(")")
            return DerivedTable(query, self.parse_alias())
        name = self.expect_name("table name")
        if self.peek().is_punct("."):
            raise UnsupportedSqlError("schema-qualified table name", name.position)
        return TableRef(name.value, self.parse_alias(), name.position)

    def parse_joins(self) -> list:
        joins = []
        while True:
            tok = self.peek()
            if tok.is_punct(","):
                self.advance()
                joins.append(Join("comma", self.parse_table_source()))
                continue
            if tok.is_keyword("natural"):
                raise UnsupportedSqlError("NATURAL JOIN", tok.position)
            kind = None
            if tok.is_keyword("join"):
                kind = "inner"
            elif tok.is_keyword("inner", "cross"):
                kind = tok.value
                self.advance()
            elif tok.is_keyword("left", "right"):
                kind = tok.value
                self.advance()
                self.accept_keyword("outer")
            if kind is None:
                return joins
            self.expect_keyword("join")
            source = self.parse_table_source()
            on = None
            if self.accept_keyword("on"):
                on = self.parse_expr()
            elif self.peek().is_keyword("using"):
                raise UnsupportedSqlError("JOIN ... USING", self.peek().position)
            joins.append(Join(kind, source, on))

    # expressions, lowest precedence first
    def parse_expr(self) -> Expr:
        left = self.parse_and()
        while self.accept_keyword("or"):
            left = BinaryOp("or", left, self.parse_and())
        return left

    def parse_and(self) -> Expr:
        left = self.parse_not()
        while self.accept_keyword("and"):
            left = BinaryOp("and", left, self.parse_not())
        return left

    def parse_not(self) -> Expr:
        if self.peek().is_keyword("not") and not self.peek(1).is_keyword("exists"):
            self.advance()
            return UnaryOp("not", self.parse_not())
        return self.parse_predicate()

    def parse_predicate(self) -> Expr:
        left = self.parse_additive()
        while True:
            tok = self.peek()
            if tok.kind == "operator" and tok.text in _COMPARISON:
                self.advance()
                left = BinaryOp(tok.text, left, self.parse_additive())
                continue
            negated = False
            if tok.is_keyword("not") and self.peek(1).is_keyword("in", "like", "between", "glob"):
                self.advance()
                negated = True
                tok = self.peek()
            if tok.is_keyword("between"):
                self.advance()
                low = self.parse_additive()
                self.expect_keyword("and")
                left = Between(left, low, self.parse_additive(), negated)
            elif tok.is_keyword("in"):
                self.advance()
                left = InExpr(left, self.parse_in_items(), negated)
            elif tok.is_keyword("like", "glob"):
                self.advance()
                left = BinaryOp(("not " if negated else "") + tok.value, left, self.parse_additive())
            elif tok.is_keyword("is"):
                self.advance()
                neg = bool(self.accept_keyword("not"))
                self.expect_keyword("null")
                left = IsNull(left, neg)
            else:
                return left

    def parse_in_items(self):
        self.expect_punct("(")
        if self.peek().is_keyword("select"):
            query = self.parse_query()
            self.expect_punct(")")
            return query
        items = [self.parse_expr()]
        while self.accept_punct(","):
            items.append(self.parse_expr())
        self.expect_punct(")")
        return tuple(items)

    def parse_additive(self) -> Expr:
        left = self.parse_multiplicative()
        while self.peek().kind == "operator" and self.peek().text in ("+", "-", "||"):
            op = self.advance().text
            left = BinaryOp(op, left, self.parse_multiplicative())
        return left

    def parse_multiplicative(self) -> Expr:
        left = self.parse_unary()
        while self.peek().kind == "star" or (self.peek().kind == "operator" and self.peek().text in ("/", "%")):
            op = self.advance().text
            left = BinaryOp(op, left, self.parse_unary())
        return left

    def parse_unary(self) -> Expr:
        tok = self.peek()
        if tok.kind == "operator" and tok.text in ("-", "+"):
            self.advance()
            return UnaryOp(tok.text, self.parse_unary())
        return self.parse_primary()

    def parse_primary(self) -> Expr:
        tok = self.peek()
        if tok.kind == "number":
            self.advance()
            return Literal(tok.text, position=tok.position)
        if tok.kind == "string":
            self.advance()
            return Literal(tok.value, double_quoted=tok.quote == '"', position=tok.position)
        if tok.is_keyword("null"):
            self.advance()
            return Literal("null", position=tok.position)
        if tok.is_keyword("exists") or (tok.is_keyword("not") and self.peek(1).is_keyword("exists")):
            negated = bool(self.accept_keyword("not"))
            self.expect_keyword("exists")
            self.expect_punct("(")
            query = self.parse_query()
            self.expect_punct(")")
            return Exists(query, negated)
        if tok.is_keyword("case"):
            return self.parse_case()
        if tok.is_keyword("cast"):
            raise UnsupportedSqlError("CAST", tok.position)
        if tok.is_punct("("):
            self.advance()
            if self.peek().is_keyword("select"):
                query = self.parse_query()
                self.expect_punct(")")
                return Subquery(query)
            expr = self.parse_expr()
            if self.peek().is_punct(","):
                raise UnsupportedSqlError("row value", self.peek().position)
            self.expect_punct(")")
            return expr
        if tok.kind == "identifier":
            self.advance()
            if self.peek().is_punct("("):
                return self.parse_call(tok)
            if self.accept_punct("."):
                nxt = self.peek()
                if nxt.kind == "star":
                    self.advance()
                    return Star(tok.value, tok.position)
                col = self.expect_name("column name")
                return ColumnRef(col.value, tok.value, tok.position)
            return ColumnRef(tok.value, None, tok.position)
        if tok.is_keyword(*_UNSUPPORTED_EXPR_KEYWORDS):
            raise UnsupportedSqlError(f"keyword {tok.text.upper()} in expression", tok.position)
        raise self.error("expression")

    def parse_call(self, name_tok: SqlToken) -> Expr:
        name = name_tok.value.lower()
        if name not in AGGREGATES and name not in SCALAR_FUNCTIONS:
            raise UnsupportedSqlError(f"function {name}()", name_tok.position)
        self.expect_punct("(")
        distinct = bool(self.accept_keyword("distinct"))
        args: list = []
        if self.peek().kind == "star":
            star = self.advance()
            args.append(Star(position=star.position))
        elif not self.peek().is_punct(")"):
            args.append(self.parse_expr())
            while self.accept_punct(","):
                args.append(self.parse_expr())
        self.expect_punct(")")
        if self.peek().is_keyword("over"):
            raise UnsupportedSqlError("window function", self.peek().position)
        return FuncCall(name, tuple(args), distinct)

    def parse_case(self) -> Expr:
        self.expect_keyword("case")
        operand = None if self.peek().is_keyword("when") else self.parse_expr()
        whens = []
        while self.accept_keyword("when"):
            cond = self.parse_expr()
            self.expect_keyword("then")
            whens.append((cond, self.parse_expr()))
        if not whens:
            raise self.error("WHEN")
        default = self.parse_expr() if self.accept_keyword("else") else None
        self.expect_keyword("end")
        return Case(operand, tuple(whens), default)


def _with_set_op(query: SelectAst, set_op: SetOp) -> SelectAst:
    if query.set_op is None:
        return SelectAst(**{**query.__dict__, "set_op": set_op})
    return SelectAst(**{**query.__dict__, "set_op": SetOp(query.set_op.op, _with_set_op(query.set_op.right, set_op))})


def parse_select(tokens: list) -> SelectAst:
    if not tokens:
        raise ParseError("no tokens to parse", 0)
    return _Parser(list(tokens)).parse_statement()


def parse_sql(sql: str) -> SelectAst:
    return parse_select(tokenize_sql(sql))
