"""Ground-truth table/column extraction from gold SQL."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

from ..schema import DbSchema, SchemaLinkSet, normalize_identifier, qualify_column
from .lexer import SqlError
from .parser import (
    Between,
    Case,
    ColumnRef,
    Exists,
    FuncCall,
    InExpr,
    IsNull,
    Literal,
    SelectAst,
    Star,
    Subquery,
    TableRef,
    UnaryOp,
    BinaryOp,
    parse_select,
)
from .lexer import tokenize_sql


class ResolutionError(SqlError):
    pass


class UnknownTableError(ResolutionError):
    pass


class UnknownColumnError(ResolutionError):
    pass


class AmbiguousColumnError(ResolutionError):
    pass


@dataclass
class _Binding:
    table: Optional[str]  # base table name, None for derived tables
    outputs: frozenset = frozenset()  # output columns of a derived table

    def owns(self, schema: DbSchema, column: str) -> bool:
        if self.table is not None:
            return column in schema.table(self.table).columns
        return column in self.outputs


@dataclass
class _Scope:
    bindings: dict
    parent: Optional["_Scope"] = None
    select_aliases: frozenset = frozenset()


@dataclass
class _Collector:
    schema: DbSchema
    tables: set = field(default_factory=set)
    columns: set = field(default_factory=set)
    join_columns: set = field(default_factory=set)

    # query level -----------------------------------------------------------

    def query(self, ast: SelectAst, parent: Optional[_Scope]) -> frozenset:
        """Walk ``ast`` (and its set-op chain); return its output column names."""
        outputs = self._select(ast, parent)
        node = ast.set_op
        while node is not None:
            self._select(node.right, parent)
            node = node.right.set_op
        return outputs

    def _select(self, ast: SelectAst, parent: Optional[_Scope]) -> frozenset:
        bindings: dict = {}
        for src in ast.sources:
            if isinstance(src, TableRef):
                name = normalize_identifier(src.name)
                if not self.schema.has_table(name):
                    raise UnknownTableError(f"unknown table {src.name!r}", src.position)
                self.tables.add(name)
                key = normalize_identifier(src.alias) if src.alias else name
                binding = _Binding(name)
            else:
                # Derived tables cannot see the enclosing FROM clause.
                outs = self.query(src.query, parent)
                key = normalize_identifier(src.alias) if src.alias else f"<derived{len(bindings)}>"
                binding = _Binding(None, outs)
            if key in bindings:
                raise ResolutionError(f"alias {key!r} bound twice")
            bindings[key] = binding

        aliases = frozenset(normalize_identifier(i.alias) for i in ast.items if i.alias)
        scope = _Scope(bindings, parent, aliases)

        for item in ast.items:
            self.expr(item.expr, scope)
        for join in ast.joins:
            if join.on is not None:
                self.expr(join.on, scope, target=self.join_columns)
        for expr in (ast.where, ast.having, ast.limit):
            if expr is not None:
                self.expr(expr, scope)
        for expr in ast.group_by:
            self.expr(expr, scope)
        for item in ast.order_by:
            self.expr(item.expr, scope)
        return self._outputs(ast, scope)

    def _outputs(self, ast: SelectAst, scope: _Scope) -> frozenset:
        names = set()
        for item in ast.items:
            if item.alias:
                names.add(normalize_identifier(item.alias))
            elif isinstance(item.expr, ColumnRef):
                names.add(normalize_identifier(item.expr.name))
            elif isinstance(item.expr, Star):
                for key, b in scope.bindings.items():
                    if item.expr.qualifier and normalize_identifier(item.expr.qualifier) != key:
                        continue
                    names.update(self.schema.table(b.table).columns if b.table else b.outputs)
        return frozenset(names)

    # expressions -----------------------------------------------------------

    def expr(self, node, scope: _Scope, target: Optional[set] = None) -> None:
        target = self.columns if target is None else target
        if isinstance(node, ColumnRef):
            self._column(node, scope, target)
        elif isinstance(node, Star):
            if node.qualifier is not None:
                self._lookup_binding(normalize_identifier(node.qualifier), scope, node.position)
        elif isinstance(node, Literal):
            if node.double_quoted:
                self._double_quoted(node, scope, target)
        elif isinstance(node, FuncCall):
            for arg in node.args:
                self.expr(arg, scope, target)
        elif isinstance(node, UnaryOp):
            self.expr(node.operand, scope, target)
        elif isinstance(node, BinaryOp):
            self.expr(node.left, scope, target)
            self.expr(node.right, scope, target)
        elif isinstance(node, Between):
            for sub in (node.expr, node.low, node.high):
                self.expr(sub, scope, target)
        elif isinstance(node, InExpr):
            self.expr(node.expr, scope, target)
            if isinstance(node.items, SelectAst):
                self.query(node.items, scope)
            else:
                for item in node.items:
                    self.expr(item, scope, target)
        elif isinstance(node, IsNull):
            self.expr(node.expr, scope, target)
        elif isinstance(node, (Exists, Subquery)):
            self.query(node.query, scope)
        elif isinstance(node, Case):
            parts = [node.operand, node.default] + [x for pair in node.whens for x in pair]
            for sub in parts:
                if sub is not None:
                    self.expr(sub, scope, target)
        else:
            raise SqlError(f"unexpected AST node {type(node).__name__}")

    def _lookup_binding(self, key: str, scope: _Scope, position: int) -> _Binding:
        s: Optional[_Scope] = scope
        while s is not None:
            if key in s.bindings:
                return s.bindings[key]
            s = s.parent
        raise UnknownTableError(f"unknown table or alias {key!r}", position)

    def _column(self, ref: ColumnRef, scope: _Scope, target: set) -> None:
        column = normalize_identifier(ref.name)
        if ref.qualifier is not None:
            binding = self._lookup_binding(normalize_identifier(ref.qualifier), scope, ref.position)
            if not binding.owns(self.schema, column):
                raise UnknownColumnError(f"unknown column {ref.qualifier}.{ref.name}", ref.position)
            if binding.table is not None:
                target.add(qualify_column(binding.table, column))
            return
        binding = self._resolve_unqualified(column, scope, ref.position)
        if binding is None:
            if column in scope.select_aliases:
                return
            raise UnknownColumnError(f"column {ref.name!r} matches no table in scope", ref.position)
        if binding.table is not None:
            target.add(qualify_column(binding.table, column))

    def _resolve_unqualified(self, column: str, scope: _Scope, position: int) -> Optional[_Binding]:
        s: Optional[_Scope] = scope
        while s is not None:
            owners = [b for b in s.bindings.values() if b.owns(self.schema, column)]
            if len(owners) == 1:
                return owners[0]
            if len(owners) > 1:
                names = sorted(b.table or "<derived>" for b in owners)
                raise AmbiguousColumnError(f"column {column!r} is ambiguous between {names}", position)
            s = s.parent
        return None

    def _double_quoted(self, lit: Literal, scope: _Scope, target: set) -> None:
        try:
            column = normalize_identifier(lit.value)
        except ValueError:
            return
        binding = self._resolve_unqualified(column, scope, lit.position)
        if binding is not None and binding.table is not None:
            target.add(qualify_column(binding.table, column))


def extract_refs(ast: SelectAst, schema: DbSchema, exclude_join_columns: bool = False) -> SchemaLinkSet:
    """Union of base tables and qualified columns referenced anywhere in ``ast``."""
    collector = _Collector(schema)
    collector.query(ast, None)
    columns = set(collector.columns)
    if not exclude_join_columns:
        columns |= collector.join_columns
    return SchemaLinkSet.of(collector.tables, columns)


def build_ground_truth(sql: str, schema: DbSchema, exclude_join_columns: bool = False) -> SchemaLinkSet:
    link = extract_refs(parse_select(tokenize_sql(sql)), schema, exclude_join_columns)
    link.validate_truth(schema)
    return link
