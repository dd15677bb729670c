"""A factorised toy schema-selection policy trained with GRPO.

The policy stands in for the language model: for every question it holds one
logit per table and per qualified column of the question's database, an
optional "malformed output" logit, and an integer reasoning length.  Sampling
draws an independent Bernoulli per element and renders the result through the
real response format, so the real parser and reward functions score it.
"""

from __future__ import annotations

import json
import logging
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Mapping, Optional, Sequence

import numpy as np

from .grpo import GrpoConfig, GrpoError, Trajectory, TrajectoryGroup, policy_update
from .metrics import MetricReport, aggregate_report
from .response import parse_response, render_response
from .rewards import RewardConfig, total_reward
from .schema import DbSchema, LinkedExample, SchemaLinkSet

log = logging.getLogger(__name__)

FILLER_WORD = "step"
LOG_FIELDS = (
    "iteration",
    "mean_reward",
    "mean_len",
    "table_em",
    "table_filtered",
    "table_rec",
    "col_em",
    "col_filtered",
    "col_rec",
)


class SimulationError(RuntimeError):
    def __init__(self, message: str, policy: "ToyPolicy", records: list):
        super().__init__(message)
        self.policy = policy
        self.records = records


def _log_sigmoid(x: np.ndarray) -> np.ndarray:
    return -np.logaddexp(0.0, -x)


def _sigmoid(x: np.ndarray) -> np.ndarray:
    return np.exp(_log_sigmoid(x))


@dataclass(frozen=True)
class _Slot:
    offset: int
    tables: tuple
    columns: tuple
    has_malform: bool

    @property
    def size(self) -> int:
        return len(self.tables) + len(self.columns) + int(self.has_malform)


class ToyPolicy:
    """Independent-Bernoulli schema selection, one parameter per decision."""

    def __init__(
        self,
        question_ids: Sequence[str],
        slots: Sequence[_Slot],
        params: np.ndarray,
        think_len: np.ndarray,
        temperature: float = 1.0,
    ):
        if temperature <= 0:
            raise ValueError("temperature must be positive")
        self.question_ids = list(question_ids)
        self.slots = list(slots)
        self.params = np.asarray(params, dtype=float)
        self.think_len = np.asarray(think_len, dtype=int)
        self.temperature = float(temperature)
        self._index = {qid: i for i, qid in enumerate(self.question_ids)}

    @classmethod
    def for_dataset(
        cls,
        examples: Sequence[LinkedExample],
        schemas: Mapping[str, DbSchema],
        temperature: float = 1.0,
        malform_prob: float = 0.0,
        init_logit: float = 0.0,
        init_think_len: int = 48,
    ) -> "ToyPolicy":
        if not 0.0 <= malform_prob < 1.0:
            raise ValueError("malform_prob must lie in [0, 1)")
        slots, chunks, offset = [], [], 0
        for ex in examples:
            schema = schemas[ex.db_id]
            slot = _Slot(offset, tuple(schema.table_names), tuple(schema.qualified_columns()), malform_prob > 0)
            block = np.full(slot.size, float(init_logit))
            if slot.has_malform:
                # Stored pre-temperature so that sigmoid(logit / T) == malform_prob.
                block[-1] = temperature * np.log(malform_prob / (1.0 - malform_prob))
            slots.append(slot)
            chunks.append(block)
            offset += slot.size
        params = np.concatenate(chunks) if chunks else np.zeros(0)
        think = np.full(len(examples), int(init_think_len))
        return cls([ex.id for ex in examples], slots, params, think, temperature)

    def copy(self) -> "ToyPolicy":
        return ToyPolicy(self.question_ids, self.slots, self.params.copy(), self.think_len.copy(), self.temperature)

    def slot(self, q: int) -> _Slot:
        return self.slots[q]

    def index_of(self, question_id: str) -> int:
        return self._index[question_id]

    def probabilities(self, q: int) -> np.ndarray:
        s = self.slots[q]
        return _sigmoid(self.params[s.offset:s.offset + s.size] / self.temperature)

    def decision_logprobs(self, traj: Trajectory):
        s = self.slots[traj.meta["q"]]
        idx = np.arange(s.offset, s.offset + s.size)
        x = self.params[idx] / self.temperature
        d = traj.decisions
        logp = np.where(d == 1, _log_sigmoid(x), _log_sigmoid(-x))
        dlogp = (d - _sigmoid(x)) / self.temperature
        return logp, idx, dlogp

    def link_from_decisions(self, q: int, decisions: np.ndarray) -> SchemaLinkSet:
        s = self.slots[q]
        nt, nc = len(s.tables), len(s.columns)
        tables = [t for t, d in zip(s.tables, decisions[:nt]) if d]
        columns = [c for c, d in zip(s.columns, decisions[nt:nt + nc]) if d]
        return SchemaLinkSet.of(tables, columns)

    def greedy_decisions(self, q: int) -> np.ndarray:
        return (self.probabilities(q) > 0.5).astype(np.int8)

    def to_json(self) -> dict:
        return {
            "temperature": self.temperature,
            "questions": [
                {
                    "id": qid,
                    "tables": list(s.tables),
                    "columns": list(s.columns),
                    "has_malform": s.has_malform,
                    "logits": self.params[s.offset:s.offset + s.size].tolist(),
                    "think_len": int(self.think_len[i]),
                }
                for i, (qid, s) in enumerate(zip(self.question_ids, self.slots))
            ],
        }

    @classmethod
    def from_json(cls, data: dict) -> "ToyPolicy":
        slots, chunks, ids, think, offset = [], [], [], [], 0
        for q in data["questions"]:
            slot = _Slot(offset, tuple(q["tables"]), tuple(q["columns"]), q["has_malform"])
            slots.append(slot)
            chunks.append(np.asarray(q["logits"], dtype=float))
            ids.append(q["id"])
            think.append(q["think_len"])
            offset += slot.size
        params = np.concatenate(chunks) if chunks else np.zeros(0)
        return cls(ids, slots, params, np.asarray(think), data["temperature"])


def filler_text(n_tokens: int) -> str:
    return " ".join([FILLER_WORD] * max(int(n_tokens), 1))


def _corrupt(response: str, variant: int) -> str:
    if variant == 0:
        return response.replace("</think>", "", 1)
    if variant == 1:
        think, _, answer = response.partition("<answer>")
        return "<answer>" + answer + think
    return response.replace("<answer>", "", 1)


def sample_group(
    policy: ToyPolicy,
    q: int,
    group_size: int,
    rng: np.random.Generator,
    reference: Optional[ToyPolicy] = None,
    length_jitter: int = 16,
) -> TrajectoryGroup:
    """Draw ``group_size`` rendered responses for question ``q``.

    Each trajectory's meta carries the reasoning-length offset it used, which
    the length update later correlates with the length reward.
    """
    s = policy.slot(q)
    probs = policy.probabilities(q)
    draws = rng.random((group_size, s.size))
    offsets = rng.integers(-length_jitter, length_jitter + 1, size=group_size)
    variants = rng.integers(0, 3, size=group_size)
    trajectories = []
    for i in range(group_size):
        decisions = (draws[i] < probs).astype(np.int8)
        think_n = max(int(policy.think_len[q]) + int(offsets[i]), 1)
        text = render_response(filler_text(think_n), policy.link_from_decisions(q, decisions))
        if s.has_malform and decisions[-1]:
            text = _corrupt(text, int(variants[i]))
        traj = Trajectory(
            decisions=decisions,
            logp=np.empty(0),
            logp_old=np.empty(0),
            logp_ref=np.empty(0),
            response=text,
            meta={"q": q, "length_offset": int(offsets[i])},
        )
        logp = policy.decision_logprobs(traj)[0]
        traj.logp = logp
        traj.logp_old = logp.copy()
        traj.logp_ref = (reference or policy).decision_logprobs(traj)[0]
        trajectories.append(traj)
    return TrajectoryGroup(policy.question_ids[q], trajectories)


def trajectory_logprob(policy: ToyPolicy, traj: Trajectory) -> float:
    return float(policy.decision_logprobs(traj)[0].sum())


def score_group(group: TrajectoryGroup, example: LinkedExample, schema: DbSchema, cfg: RewardConfig) -> None:
    for traj in group.trajectories:
        parsed = parse_response(traj.response, schema, accept_singular=cfg.accept_singular_marker)
        breakdown = total_reward(parsed, example.truth, cfg)
        traj.reward = breakdown.total
        traj.meta["token_len"] = parsed.token_len
        traj.meta["r_l"] = breakdown.r_l


def greedy_response(policy: ToyPolicy, q: int) -> str:
    decisions = policy.greedy_decisions(q)
    text = render_response(filler_text(policy.think_len[q]), policy.link_from_decisions(q, decisions))
    if policy.slot(q).has_malform and decisions[-1]:
        text = _corrupt(text, 0)
    return text


def evaluate_policy(
    policy: ToyPolicy,
    examples: Sequence[LinkedExample],
    schemas: Mapping[str, DbSchema],
) -> MetricReport:
    """Greedy decoding (include iff probability > 0.5) scored per task."""
    pairs = []
    for ex in examples:
        q = policy.index_of(ex.id)
        parsed = parse_response(greedy_response(policy, q), schemas[ex.db_id])
        pred = parsed.predicted if parsed.predicted is not None else SchemaLinkSet()
        pairs.append((pred, ex.truth))
    return aggregate_report(pairs)


def update_think_length(policy: ToyPolicy, group: TrajectoryGroup, step: int) -> None:
    """Sign of the perturbation estimate of d(length reward)/d(length)."""
    q = group.trajectories[0].meta["q"]
    r_l = np.array([t.meta["r_l"] for t in group.trajectories], dtype=float)
    offsets = np.array([t.meta["length_offset"] for t in group.trajectories], dtype=float)
    slope = float(np.dot(r_l - r_l.mean(), offsets))
    if slope != 0.0:
        policy.think_len[q] = max(1, int(policy.think_len[q] + step * np.sign(slope)))


@dataclass
class SimConfig:
    grpo: GrpoConfig = field(default_factory=GrpoConfig)
    reward: RewardConfig = field(default_factory=RewardConfig)
    iterations: int = 300
    batch_size: int = 10
    eval_every: int = 10
    seed: int = 7
    temperature: float = 1.0
    malform_prob: float = 0.0
    init_think_len: int = 48
    length_jitter: int = 16
    length_step: int = 4
    log_path: Optional[str] = None

    def __post_init__(self):
        if self.iterations < 0:
            raise ValueError("iterations must be non-negative")
        if self.batch_size < 1:
            raise ValueError("batch_size must be positive")
        if self.eval_every < 1:
            raise ValueError("eval_every must be positive")
        if self.temperature <= 0:
            raise ValueError("temperature must be positive")
        if self.length_jitter < 0 or self.length_step < 0:
            raise ValueError("length_jitter and length_step must be non-negative")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "SimConfig":
        data = dict(data)
        if "grpo" in data:
            data["grpo"] = GrpoConfig(**data["grpo"])
        if "reward" in data:
            data["reward"] = RewardConfig.from_dict(data["reward"])
        return cls(**data)


def _metric_fields(report: Optional[MetricReport]) -> dict:
    if report is None:
        return {k: None for k in LOG_FIELDS[3:]}
    return {
        "table_em": report.table.em / 100,
        "table_filtered": report.table.filtered_acc / 100,
        "table_rec": report.table.recall / 100,
        "col_em": report.column.em / 100,
        "col_filtered": report.column.filtered_acc / 100,
        "col_rec": report.column.recall / 100,
    }


def format_record(record: dict) -> str:
    return json.dumps({k: record[k] for k in LOG_FIELDS})


def train_loop(
    sim: SimConfig,
    examples: Sequence[LinkedExample],
    schemas: Mapping[str, DbSchema],
    policy: Optional[ToyPolicy] = None,
):
    """Run GRPO on the toy policy; returns ``(policy, records)``.

    Record 0 is the initial evaluation; record ``k`` holds the batch statistics
    of iteration ``k`` and, every ``eval_every`` iterations and at the end, the
    greedy metrics after its update.
    """
    if not examples:
        raise ValueError("training needs at least one example")
    if policy is None:
        policy = ToyPolicy.for_dataset(
            examples, schemas, sim.temperature, sim.malform_prob, init_think_len=sim.init_think_len
        )
    reference = policy.copy()
    G = sim.grpo.group_size
    records: list = []
    sink = open(sim.log_path, "w") if sim.log_path else None

    def emit(record: dict) -> None:
        records.append(record)
        if sink is not None:
            sink.write(format_record(record) + "\n")
            sink.flush()

    def run_groups(iteration: int, batch: Sequence[int]) -> list:
        groups = []
        for q in batch:
            rng = np.random.default_rng([sim.seed, iteration, int(q)])
            group = sample_group(policy, int(q), G, rng, reference, sim.length_jitter)
            ex = examples[q]
            score_group(group, ex, schemas[ex.db_id], sim.reward)
            group.assign_advantages(sim.grpo.std_floor)
            groups.append(group)
        return groups

    def batch_stats(groups: list) -> dict:
        trajs = [t for g in groups for t in g.trajectories]
        return {
            "mean_reward": float(np.mean([t.reward for t in trajs])),
            "mean_len": float(np.mean([t.meta["token_len"] for t in trajs])),
        }

    try:
        init_groups = run_groups(0, range(len(examples)))
        emit({"iteration": 0, **batch_stats(init_groups),
              **_metric_fields(evaluate_policy(policy, examples, schemas))})

        batch_size = min(sim.batch_size, len(examples))
        for it in range(1, sim.iterations + 1):
            batch = np.random.default_rng([sim.seed, it]).choice(len(examples), batch_size, replace=False)
            groups = run_groups(it, sorted(batch.tolist()))
            stats = batch_stats(groups)
            last_good = policy.params.copy()
            try:
                policy_update(policy, groups, sim.grpo)
            except GrpoError as err:
                policy.params = last_good
                raise SimulationError(f"iteration {it}: {err}", policy, records) from err
            for group in groups:
                update_think_length(policy, group, sim.length_step)
            report = None
            if it % sim.eval_every == 0 or it == sim.iterations:
                report = evaluate_policy(policy, examples, schemas)
                log.debug("iteration %d mean reward %.3f", it, stats["mean_reward"])
            emit({"iteration": it, **stats, **_metric_fields(report)})
    finally:
        if sink is not None:
            sink.close()
    return policy, records


def write_run_log(records: Sequence[dict], path) -> None:
    Path(path).write_text("".join(format_record(r) + "\n" for r in records))


def read_run_log(path) -> list:
    with open(path) as fh:
        return [json.loads(line) for line in fh if line.strip()]
