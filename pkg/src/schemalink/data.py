"""Spider-format ingestion, linked-dataset files and CoT prompt rendering."""

from __future__ import annotations

import json
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Iterable, Mapping, Sequence, Union

from .response import render_answer
from .schema import DbSchema, LinkedExample, SchemaError, TableDef
from .sql import SqlError, build_ground_truth

PathLike = Union[str, Path]

COT_TEMPLATE_NAME = "cot_prompt_v1.txt"


class DatasetError(ValueError):
    pass


def fixture_path(name: str) -> Path:
    """Path to a bundled toy fixture (``toy_tables.json``, ``toy_examples.json``)."""
    return Path(str(resources.files("schemalink") / "fixtures" / name))


def read_records(path: PathLike) -> list:
    """Read a JSON array file or a line-delimited JSON file."""
    text = Path(path).read_text(encoding="utf-8")
    if text.lstrip().startswith("["):
        data = json.loads(text)
    else:
        data = [json.loads(line) for line in text.splitlines() if line.strip()]
    if not all(isinstance(r, dict) for r in data):
        raise DatasetError(f"{path}: every record must be an object")
    return data


def write_jsonl(records: Iterable[dict], path: PathLike) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for record in records:
            fh.write(json.dumps(record, ensure_ascii=False) + "\n")


def parse_spider_schema(record: dict, index: int = 0) -> DbSchema:
    try:
        db_id = record["db_id"]
        table_names = record["table_names_original"]
        column_names = record["column_names_original"]
    except (KeyError, TypeError) as err:
        raise DatasetError(f"schema record {index}: missing field {err}") from None
    columns: list = [[] for _ in table_names]
    for entry in column_names:
        if not isinstance(entry, (list, tuple)) or len(entry) != 2:
            raise DatasetError(f"schema record {index} ({db_id}): malformed column entry {entry!r}")
        t_idx, name = entry
        if t_idx == -1:
            continue
        if not isinstance(t_idx, int) or not 0 <= t_idx < len(table_names):
            raise DatasetError(f"schema record {index} ({db_id}): column {name!r} has table index {t_idx} out of range")
        columns[t_idx].append(name)
    try:
        return DbSchema(db_id, tuple(TableDef(t, tuple(cols)) for t, cols in zip(table_names, columns)))
    except SchemaError as err:
        raise DatasetError(f"schema record {index} ({db_id}): {err}") from None


def load_spider_schemas(path: PathLike) -> dict:
    records = read_records(path)
    schemas: dict = {}
    for i, record in enumerate(records):
        schema = parse_spider_schema(record, i)
        if schema.db_id in schemas:
            raise DatasetError(f"schema record {i}: duplicate db_id {schema.db_id!r}")
        schemas[schema.db_id] = schema
    return schemas


@dataclass(frozen=True)
class Rejection:
    index: int
    db_id: str
    query: str
    reason: str

    def to_json(self) -> dict:
        return {"index": self.index, "db_id": self.db_id, "query": self.query, "reason": self.reason}


def link_records(
    records: Sequence[dict],
    schemas: Mapping[str, DbSchema],
    exclude_join_columns: bool = False,
) -> tuple[list, list]:
    """Attach ground truth to raw ``{db_id, question, query}`` records.

    Returns ``(examples, rejections)`` in input order; a record that fails
    extraction is rejected with its reason instead of aborting the run.
    """
    examples, rejections = [], []
    for i, rec in enumerate(records):
        db_id = str(rec.get("db_id", ""))
        query = rec.get("query", "")
        try:
            if "question" not in rec or not query:
                raise DatasetError("record needs db_id, question and query")
            if db_id not in schemas:
                raise DatasetError(f"unknown db_id {db_id!r}")
            truth = build_ground_truth(query, schemas[db_id], exclude_join_columns)
        except (SqlError, SchemaError, DatasetError) as err:
            rejections.append(Rejection(i, db_id, query, f"{type(err).__name__}: {err}"))
            continue
        ex_id = str(rec.get("id", f"{i:05d}"))
        examples.append(LinkedExample(ex_id, db_id, rec["question"], query, truth, rec.get("cot")))
    return examples, rejections


def load_examples(path: PathLike, schemas: Mapping[str, DbSchema], exclude_join_columns: bool = False):
    return link_records(read_records(path), schemas, exclude_join_columns)


def load_linked_dataset(path: PathLike) -> list:
    return [LinkedExample.from_json(r) for r in read_records(path)]


def save_linked_dataset(examples: Iterable[LinkedExample], path: PathLike) -> None:
    write_jsonl((ex.to_json() for ex in examples), path)


def load_predictions(path: PathLike) -> list:
    out = []
    for i, rec in enumerate(read_records(path)):
        if "id" not in rec or not isinstance(rec.get("response"), str):
            raise DatasetError(f"prediction record {i}: needs string fields id and response")
        out.append((str(rec["id"]), rec["response"]))
    return out


def cot_template() -> str:
    return (resources.files("schemalink") / "assets" / COT_TEMPLATE_NAME).read_text(encoding="utf-8")


def render_schema(schema: DbSchema) -> str:
    return "\n".join(f"{t.name}({', '.join(t.columns)})" for t in schema.tables)


def build_cot_prompt(example: LinkedExample, schema: DbSchema, template: str = None) -> str:
    """Prompt asking an external model to reconstruct the reasoning behind known links."""
    template = cot_template() if template is None else template
    return template.format(
        db_id=schema.db_id,
        schema=render_schema(schema),
        question=example.question,
        answer=render_answer(example.truth),
    )


def schema_for(example: LinkedExample, schemas: Mapping[str, DbSchema]) -> DbSchema:
    try:
        return schemas[example.db_id]
    except KeyError:
        raise DatasetError(f"example {example.id}: unknown db_id {example.db_id!r}") from None


__all__ = [
    "DatasetError",
    "Rejection",
    "build_cot_prompt",
    "cot_template",
    "fixture_path",
    "link_records",
    "load_examples",
    "load_linked_dataset",
    "load_predictions",
    "load_spider_schemas",
    "read_records",
    "save_linked_dataset",
    "write_jsonl",
]
