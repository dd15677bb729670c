import itertools

import pytest
from hypothesis import given, strategies as st

from schemalink.response import parse_response, render_response
from schemalink.rewards import (
    RewardConfig,
    RewardConfigError,
    RewardWeights,
    column_reward,
    format_reward,
    length_reward,
    marker_reward,
    max_total_reward,
    table_reward,
    total_reward,
)
from schemalink.schema import SchemaLinkSet

CFG = RewardConfig()
THINK = " ".join(["w"] * 80)


def parsed(raw, schema):
    return parse_response(raw, schema)


def test_defaults():
    assert (CFG.r_tmax, CFG.p_tmax, CFG.r_cmax, CFG.p_cmax) == (2, 2, 1, 1)
    assert (CFG.lower_len, CFG.upper_len) == (64, 512)


def test_format_reward(singer_schema):
    assert format_reward(parsed("<think>r</think><answer>###table: singer\n###columns: singer.name</answer>", singer_schema)) == 1
    assert format_reward(parsed("<think>r<answer>x</answer>", singer_schema)) == 0
    assert format_reward(parsed("", singer_schema)) == 0


@pytest.mark.parametrize(
    "answer, expected",
    [("###table: a\n###columns: a.b", 2), ("###table: a ###table: b ###columns: x", 1), ("", 0)],
)
def test_marker_reward(answer, expected, singer_schema):
    assert marker_reward(parsed(f"<think>t</think><answer>{answer}</answer>", singer_schema)) == expected


@pytest.mark.parametrize("n, expected", [(64, 1), (63, 0), (511, 1), (512, 0), (10, 0), (0, 0)])
def test_length_reward_half_open(n, expected):
    assert length_reward(n, CFG) == expected


@pytest.mark.parametrize(
    "truth, pred, expected",
    [({"a", "b"}, {"a", "b"}, 2.0), ({"a", "b"}, {"a", "c"}, 0.0), ({"a", "b"}, set(), 0.0), ({"a"}, {"b"}, -2.0)],
)
def test_table_reward_examples(truth, pred, expected):
    assert table_reward(truth, pred, CFG) == pytest.approx(expected)


def test_table_reward_needs_truth():
    with pytest.raises(ValueError):
        table_reward(set(), {"a"}, CFG)


@pytest.mark.parametrize(
    "truth, pred, expected",
    [({"a.x"}, {"a.x"}, 1.0), ({"a.x", "a.y"}, {"a.x", "b.z"}, 0.0), (set(), {"a.x"}, -1.0), (set(), set(), 0.0)],
)
def test_column_reward_examples(truth, pred, expected):
    assert column_reward(truth, pred, CFG) == pytest.approx(expected)


def test_literal_mode_rewards_missing_items():
    literal = RewardConfig(literal_set_difference_mode=True)
    # The typeset formula scores an empty prediction at the maximum.
    assert table_reward({"a", "b"}, set(), literal) == pytest.approx(2.0)
    assert table_reward({"a", "b"}, {"a", "b"}, literal) == pytest.approx(0.0)


def test_total_canonical_is_seven(singer_schema):
    truth = SchemaLinkSet.of(["singer"], ["singer.name"])
    b = total_reward(parsed(render_response(THINK, truth), singer_schema), truth, CFG)
    assert (b.r_f, b.r_c, b.r_l, b.r_st, b.r_sc) == (1, 2, 1, 2, 1)
    assert b.total == pytest.approx(7.0) == max_total_reward(truth, CFG)
    assert b.r_s == b.r_st + b.r_sc and not b.parse_failed


def test_total_malformed_zero_schema_terms(singer_schema):
    truth = SchemaLinkSet.of(["singer"], ["singer.name"])
    raw = render_response(THINK, truth).replace("</think>", "")
    b = total_reward(parsed(raw, singer_schema), truth, CFG)
    assert b.parse_failed and b.r_f == 0 and b.r_st == b.r_sc == 0
    assert b.total == pytest.approx(b.r_c + b.r_l) == pytest.approx(3.0)


def test_total_fully_wrong(singer_schema):
    truth = SchemaLinkSet.of(["singer"], ["singer.name"])
    wrong = SchemaLinkSet.of(["band"], ["band.genre"])
    b = total_reward(parsed(render_response("short", wrong), singer_schema), truth, CFG)
    assert b.total == pytest.approx(1 + 2 + 0 - 2 - 1)


def test_weights_scale_components(singer_schema):
    truth = SchemaLinkSet.of(["singer"], ["singer.name"])
    cfg = RewardConfig(weights=RewardWeights(format=2, marker=0, length=0.5, schema=3))
    b = total_reward(parsed(render_response(THINK, truth), singer_schema), truth, cfg)
    assert b.total == pytest.approx(2 + 0 + 0.5 + 9) == max_total_reward(truth, cfg)


@pytest.mark.parametrize(
    "kwargs",
    [dict(r_tmax=1, r_cmax=1), dict(r_tmax=1, r_cmax=2), dict(p_tmax=1, p_cmax=1), dict(r_cmax=0),
     dict(lower_len=512, upper_len=64), dict(lower_len=0)],
)
def test_config_validation(kwargs):
    with pytest.raises(RewardConfigError):
        RewardConfig(**kwargs)


def test_config_dict_round_trip():
    cfg = RewardConfig(r_tmax=3, weights=RewardWeights(schema=2), literal_set_difference_mode=True)
    assert RewardConfig.from_dict(cfg.to_dict()) == cfg


items = st.sets(st.sampled_from("abcdefgh"), max_size=8)


@given(items.filter(bool), items)
def test_range_and_maximality(truth, pred):
    r = table_reward(truth, pred, CFG)
    assert -CFG.p_tmax - 1e-12 <= r <= CFG.r_tmax + 1e-12
    assert (abs(r - CFG.r_tmax) < 1e-12) == (pred == truth)


@given(items.filter(bool), items, st.sampled_from("abcdefghijkl"))
def test_monotonicity(truth, pred, item):
    before = table_reward(truth, pred, CFG)
    after = table_reward(truth, pred | {item}, CFG)
    if item in pred:
        assert after == before
    elif item in truth:
        assert after >= before - 1e-12
    else:
        assert after <= before + 1e-12


@given(st.lists(st.sampled_from("abcdef"), min_size=1), st.lists(st.sampled_from("abcdef")), st.randoms())
def test_permutation_invariance(truth, pred, rnd):
    shuffled = list(pred)
    rnd.shuffle(shuffled)
    assert table_reward(set(truth), set(pred), CFG) == table_reward(set(reversed(truth)), set(shuffled), CFG)


def test_exhaustive_small_universe_column_bounds():
    universe = ["a.x", "a.y", "b.z"]
    subsets = [set(c) for n in range(4) for c in itertools.combinations(universe, n)]
    for truth in subsets:
        for pred in subsets:
            r = column_reward(truth, pred, CFG)
            assert -CFG.p_cmax <= r <= CFG.r_cmax
            if truth:
                assert (r == CFG.r_cmax) == (pred == truth)
