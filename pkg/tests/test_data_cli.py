import csv
import json

import pytest
from hypothesis import given, strategies as st

from schemalink import cli
from schemalink.config import ConfigError, RunConfig
from schemalink.data import (
    DatasetError,
    build_cot_prompt,
    fixture_path,
    link_records,
    load_linked_dataset,
    load_predictions,
    load_spider_schemas,
    parse_spider_schema,
    read_records,
    save_linked_dataset,
)
from schemalink.response import parse_answer, render_response
from schemalink.rewards import RewardConfig
from schemalink.schema import LinkedExample, SchemaLinkSet

SPIDER_RECORD = {
    "db_id": "shop",
    "table_names_original": ["Item", "Sale"],
    "column_names_original": [[-1, "*"], [0, "ItemId"], [0, "Price"], [1, "ItemId"], [1, "Qty"]],
}


def test_parse_spider_schema():
    schema = parse_spider_schema(SPIDER_RECORD)
    assert schema.table_names == ["item", "sale"]
    assert schema.qualified_columns() == ["item.itemid", "item.price", "sale.itemid", "sale.qty"]


@pytest.mark.parametrize(
    "mutate, message",
    [
        (lambda r: r.pop("table_names_original"), "missing field"),
        (lambda r: r["column_names_original"].append([5, "x"]), "out of range"),
        (lambda r: r["column_names_original"].append(["x"]), "malformed column"),
        (lambda r: r["column_names_original"].append([0, "price"]), "shop"),
    ],
)
def test_schema_errors_name_the_record(mutate, message):
    record = json.loads(json.dumps(SPIDER_RECORD))
    mutate(record)
    with pytest.raises(DatasetError, match=message):
        parse_spider_schema(record, 3)


def test_duplicate_db_id(tmp_path):
    path = tmp_path / "tables.json"
    path.write_text(json.dumps([SPIDER_RECORD, SPIDER_RECORD]))
    with pytest.raises(DatasetError, match="duplicate"):
        load_spider_schemas(path)


def test_toy_fixture_shape(toy_schemas, toy_examples):
    assert sorted(toy_schemas) == ["concert_singer", "flight_2", "pets_1"]
    for schema in toy_schemas.values():
        assert len(schema.tables) <= 6 and len(schema.qualified_columns()) <= 20
    assert len(toy_examples) == 20
    assert all(ex.truth.tables for ex in toy_examples)


def test_rejections_are_logged_not_fatal(toy_schemas):
    records = [
        {"db_id": "pets_1", "question": "ok", "query": "SELECT petid FROM pets"},
        {"db_id": "pets_1", "question": "bad column", "query": "SELECT nope FROM pets"},
        {"db_id": "missing", "question": "bad db", "query": "SELECT 1"},
        {"db_id": "pets_1", "question": "syntax", "query": "SELECT FROM"},
        {"db_id": "pets_1", "query": "SELECT petid FROM pets"},
        {"db_id": "pets_1", "question": "window", "query": "SELECT rank() OVER (ORDER BY weight) FROM pets"},
    ]
    examples, rejections = link_records(records, toy_schemas)
    assert len(examples) + len(rejections) == len(records)
    assert [ex.id for ex in examples] == ["00000"]
    assert [r.index for r in rejections] == [1, 2, 3, 4, 5]
    assert "UnknownColumnError" in rejections[0].reason
    assert "unknown db_id" in rejections[1].reason
    assert "UnsupportedSqlError" in rejections[4].reason


def test_linked_dataset_round_trip(tmp_path, toy_examples):
    save_linked_dataset(toy_examples, tmp_path / "d.jsonl")
    assert load_linked_dataset(tmp_path / "d.jsonl") == toy_examples


def test_read_records_accepts_array_and_lines(tmp_path):
    (tmp_path / "a.json").write_text('[{"x": 1}, {"x": 2}]')
    (tmp_path / "b.jsonl").write_text('{"x": 1}\n\n{"x": 2}\n')
    assert read_records(tmp_path / "a.json") == read_records(tmp_path / "b.jsonl")
    (tmp_path / "c.jsonl").write_text("[1, 2]")
    with pytest.raises(DatasetError):
        read_records(tmp_path / "c.jsonl")


def test_predictions_need_id_and_response(tmp_path):
    (tmp_path / "p.jsonl").write_text('{"id": "1", "response": "x"}\n{"id": "2"}\n')
    with pytest.raises(DatasetError, match="record 1"):
        load_predictions(tmp_path / "p.jsonl")


def known_links(prompt):
    return prompt.split("### Known schema links\n", 1)[1].split("\n\n### Output format", 1)[0]


def test_prompt_laws(toy_examples, toy_schemas):
    for ex in toy_examples:
        schema = toy_schemas[ex.db_id]
        prompt = build_cot_prompt(ex, schema)
        assert prompt.count(ex.question) == 1
        for table in schema.tables:
            assert f"{table.name}(" in prompt
        assert parse_answer(known_links(prompt), schema) == ex.truth


@given(st.text(alphabet=st.characters(blacklist_categories=("Cs",)), min_size=1).map(lambda s: "Q7x " + s))
def test_prompt_keeps_question_verbatim(question):
    schemas = load_spider_schemas(fixture_path("toy_tables.json"))
    ex = LinkedExample("1", "pets_1", question, "SELECT petid FROM pets", SchemaLinkSet.of(["pets"], ["pets.petid"]))
    assert question in build_cot_prompt(ex, schemas["pets_1"])


def test_config_round_trip(tmp_path):
    cfg = RunConfig(schemas="s.json", count=5, sim={"iterations": 3, "seed": 11})
    cfg.save(tmp_path / "c.json")
    loaded = RunConfig.load(tmp_path / "c.json")
    assert loaded == cfg and loaded.sim_config().iterations == 3


@pytest.mark.parametrize(
    "payload",
    [{"bogus": 1}, {"sim": {"nope": 1}}, {"reward": {"r_tmax": 0.5}}, {"grpo": {"group_size": 1}},
     {"sim": {"iterations": -1}}, [1]],
)
def test_bad_config_rejected(tmp_path, payload):
    (tmp_path / "c.json").write_text(json.dumps(payload))
    with pytest.raises(ConfigError):
        RunConfig.load(tmp_path / "c.json")


# --- command line ---------------------------------------------------------


def run(*argv):
    return cli.main([str(a) for a in argv])


def test_extract_then_score_echo_is_perfect(tmp_path, capsys):
    out = tmp_path / "ex"
    assert run("extract", "--schemas", fixture_path("toy_tables.json"),
               "--examples", fixture_path("toy_examples.json"), "--out", out) == 0
    assert "linked 20 examples, rejected 0" in capsys.readouterr().err
    assert (out / "rejections.jsonl").read_text() == ""
    dataset = load_linked_dataset(out / "dataset.jsonl")
    preds = tmp_path / "preds.jsonl"
    preds.write_text("".join(
        json.dumps({"id": ex.id, "response": render_response("because", ex.truth)}) + "\n" for ex in dataset))
    assert run("score", "--dataset", out / "dataset.jsonl", "--predictions", preds, "--out", tmp_path / "sc") == 0
    report = json.loads((tmp_path / "sc" / "report.json").read_text())
    assert report["table"]["em"] == report["column"]["em"] == 100.0
    rows = [json.loads(line) for line in (tmp_path / "sc" / "rewards.jsonl").read_text().splitlines()]
    assert len(rows) == 20 and all(r["r_st"] == 2.0 and not r["parse_failed"] for r in rows)
    assert run("eval", "--dataset", out / "dataset.jsonl", "--predictions", preds, "--out", tmp_path / "r.json") == 0
    assert json.loads((tmp_path / "r.json").read_text()) == report


def test_prompts_count(tmp_path):
    assert run("prompts", "--count", 3, "--out", tmp_path / "p.jsonl") == 0
    lines = (tmp_path / "p.jsonl").read_text().splitlines()
    assert len(lines) == 3 and "### Question" in json.loads(lines[0])["prompt"]


def test_train_sim_and_report(tmp_path):
    for name in ("a", "b"):
        assert run("train-sim", "--iterations", 12, "--seed", 5, "--out", tmp_path / name) == 0
    log_a = (tmp_path / "a" / "run_log.jsonl").read_bytes()
    assert log_a == (tmp_path / "b" / "run_log.jsonl").read_bytes()
    assert json.loads((tmp_path / "a" / "policy.json").read_text())["questions"]
    assert run("report", "--log", tmp_path / "a" / "run_log.jsonl", "--out", tmp_path / "curve.csv") == 0
    with open(tmp_path / "curve.csv") as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == 13 and rows[3]["table_em"] == "" and rows[10]["table_em"] != ""


def test_config_file_drives_run(tmp_path):
    RunConfig(sim={"iterations": 2}, reward=RewardConfig(r_tmax=3.0)).save(tmp_path / "c.json")
    assert run("train-sim", "--config", tmp_path / "c.json", "--out", tmp_path / "o") == 0
    assert len((tmp_path / "o" / "run_log.jsonl").read_text().splitlines()) == 3


@pytest.mark.parametrize(
    "argv",
    [
        ("extract",),
        ("extract", "--schemas", "/nonexistent/tables.json", "--examples", "x.json"),
        ("score",),
        ("report",),
    ],
)
def test_invalid_input_exits_1(argv, tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    assert run(*argv) == 1


def test_bad_config_exits_1(tmp_path):
    (tmp_path / "c.json").write_text('{"reward": {"p_tmax": 0.5}}')
    assert run("train-sim", "--config", tmp_path / "c.json", "--out", tmp_path / "o") == 1


def test_unknown_prediction_id_exits_1(tmp_path):
    (tmp_path / "p.jsonl").write_text('{"id": "zzz", "response": "x"}\n')
    assert run("score", "--predictions", tmp_path / "p.jsonl", "--out", tmp_path / "o") == 1


def test_runtime_failure_exits_2(tmp_path, monkeypatch):
    from schemalink.sim import SimulationError, ToyPolicy

    def boom(sim, examples, schemas):
        raise SimulationError("diverged", ToyPolicy.for_dataset(examples, schemas), [])

    monkeypatch.setattr(cli, "train_loop", boom)
    assert run("train-sim", "--out", tmp_path / "o") == 2
    assert (tmp_path / "o" / "policy.json").exists()
