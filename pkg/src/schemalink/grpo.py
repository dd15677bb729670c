"""Group-relative policy optimisation for factorised decision policies.

Each trajectory is a sequence of decisions with one log-probability per
decision under three policies: the current policy being optimised, the
sampling policy that produced it (``old``) and a frozen reference.  The
objective maximised is, per group of size G,

    (1/G) sum_i (1/|o_i|) sum_t [ min(r_it A_i, clip(r_it, 1-eps, 1+eps) A_i) - beta k_it ]

with ``r_it = exp(logp_it - logp_old_it)`` and ``k_it`` the non-negative
estimator ``exp(ref - cur) - (ref - cur) - 1``; groups are averaged.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field
from typing import Protocol, Sequence

import numpy as np


class GrpoError(RuntimeError):
    pass


@dataclass(frozen=True)
class GrpoConfig:
    group_size: int = 10
    clip_eps: float = 0.2
    kl_coef: float = 0.01
    # Plain SGD on a batch-averaged objective; the toy policy needs a large step.
    learning_rate: float = 80.0
    std_floor: float = 1e-8

    def __post_init__(self):
        if self.group_size < 2:
            raise ValueError("group_size must be at least 2")
        if not 0 < self.clip_eps < 1:
            raise ValueError("clip_eps must lie in (0, 1)")
        if self.kl_coef < 0:
            raise ValueError("kl_coef must be non-negative")
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be positive")
        if not self.std_floor > 0:
            raise ValueError("std_floor must be positive")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class Trajectory:
    """One sampled response and its per-decision log-probabilities."""

    decisions: np.ndarray  # taken actions, one entry per decision
    logp: np.ndarray  # under the current policy
    logp_old: np.ndarray
    logp_ref: np.ndarray
    reward: float = 0.0
    advantage: float = 0.0
    response: str = ""
    meta: dict = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.decisions)


@dataclass
class TrajectoryGroup:
    question_id: str
    trajectories: list

    @property
    def rewards(self) -> np.ndarray:
        return np.array([t.reward for t in self.trajectories], dtype=float)

    @property
    def advantages(self) -> np.ndarray:
        return np.array([t.advantage for t in self.trajectories], dtype=float)

    def assign_advantages(self, std_floor: float = 1e-8) -> None:
        for traj, adv in zip(self.trajectories, group_advantages(self.rewards, std_floor)):
            traj.advantage = float(adv)


class FactorizedPolicy(Protocol):
    """A policy in which every decision depends on exactly one parameter."""

    params: np.ndarray

    def decision_logprobs(self, traj: Trajectory) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Return ``(logp, param_index, dlogp_dparam)``, each of length ``len(traj)``."""
        ...


def group_advantages(rewards: Sequence[float], std_floor: float = 1e-8) -> np.ndarray:
    r = np.asarray(rewards, dtype=float)
    if r.ndim != 1 or len(r) < 2:
        raise ValueError("a reward group needs at least two entries")
    centred = r - r.mean()
    std = np.sqrt(np.mean(centred**2))
    if std < std_floor:
        return np.zeros_like(r)
    return centred / std


def clipped_term(ratio, advantage, eps: float):
    ratio = np.asarray(ratio, dtype=float)
    advantage = np.asarray(advantage, dtype=float)
    out = np.minimum(ratio * advantage, np.clip(ratio, 1 - eps, 1 + eps) * advantage)
    return float(out) if out.ndim == 0 else out


def kl_estimate(logp_current, logp_ref):
    delta = np.asarray(logp_ref, dtype=float) - np.asarray(logp_current, dtype=float)
    # expm1(d) - d equals exp(d) - d - 1 without cancellation near d = 0.
    out = np.maximum(np.expm1(delta) - delta, 0.0)
    return float(out) if out.ndim == 0 else out


def _decision_terms(logp, logp_old, logp_ref, advantage, cfg: GrpoConfig):
    """Per-decision objective values and their derivative w.r.t. ``logp``."""
    ratio = np.exp(logp - logp_old)
    unclipped = ratio * advantage
    clipped = np.clip(ratio, 1 - cfg.clip_eps, 1 + cfg.clip_eps) * advantage
    surrogate = np.minimum(unclipped, clipped)
    d_surrogate = np.where(unclipped <= clipped, unclipped, 0.0)
    delta = logp_ref - logp
    value = surrogate - cfg.kl_coef * np.maximum(np.expm1(delta) - delta, 0.0)
    deriv = d_surrogate - cfg.kl_coef * (1.0 - np.exp(delta))
    return value, deriv


def grpo_objective(groups: Sequence[TrajectoryGroup], cfg: GrpoConfig) -> float:
    """Objective from the log-probabilities stored on each trajectory."""
    if not groups:
        return 0.0
    total = 0.0
    for group in groups:
        g_sum = 0.0
        for traj in group.trajectories:
            if len(traj) == 0:
                continue
            value, _ = _decision_terms(traj.logp, traj.logp_old, traj.logp_ref, traj.advantage, cfg)
            g_sum += value.mean()
        total += g_sum / len(group.trajectories)
    return total / len(groups)


def refresh_logprobs(policy: FactorizedPolicy, groups: Sequence[TrajectoryGroup]) -> None:
    for group in groups:
        for traj in group.trajectories:
            traj.logp = policy.decision_logprobs(traj)[0]


def objective_and_grad(policy: FactorizedPolicy, groups: Sequence[TrajectoryGroup], cfg: GrpoConfig):
    """Objective at the policy's current parameters and its analytic gradient."""
    grad = np.zeros_like(policy.params, dtype=float)
    if not groups:
        return 0.0, grad
    total = 0.0
    for group in groups:
        scale = 1.0 / (len(groups) * len(group.trajectories))
        for traj in group.trajectories:
            n = len(traj)
            if n == 0:
                continue
            logp, idx, dlogp = policy.decision_logprobs(traj)
            value, deriv = _decision_terms(logp, traj.logp_old, traj.logp_ref, traj.advantage, cfg)
            total += scale * value.sum() / n
            np.add.at(grad, idx, scale / n * deriv * dlogp)
    return total, grad


def policy_update(policy: FactorizedPolicy, groups: Sequence[TrajectoryGroup], cfg: GrpoConfig):
    """One gradient-ascent step; old and reference log-probs are constants."""
    value, grad = objective_and_grad(policy, groups, cfg)
    if not np.all(np.isfinite(grad)) or not np.isfinite(value):
        bad = np.flatnonzero(~np.isfinite(grad))
        raise GrpoError(f"non-finite GRPO gradient (objective={value}, bad parameter indices={bad[:10].tolist()})")
    policy.params += cfg.learning_rate * grad
    return policy
