"""Reward terms, exposure/novelty dynamics and the sensing surrogates."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, fields, replace

import numpy as np

from ._validation import ConfigurationError, check_scalar
from .threat_models import expected_observation, exposure_probability


@dataclass(frozen=True)
class RewardConfig:
    """Reward weights and dynamics parameters. Defaults are the Experiment-1 values."""

    gamma: float = 0.98
    c_move: float = 1.0
    c_sense: tuple[float, ...] = (1.0, 1.0, 1.0, 0.1)
    lambda_imm: float = 50.0
    lambda_pers: float = 0.1
    lambda_cum: float = 0.0005
    lambda_nov: float = 1.0
    alpha: float = 0.95
    beta: float = 0.8
    tau_eta: float = 0.5
    # "sample": the realized observation enters the reward; "expected": E[o | a, theta]
    obs_reward: str = "sample"

    def __post_init__(self):
        check_scalar(self.gamma, "gamma", 0.0, 1.0, include_low=False, include_high=False)
        check_scalar(self.alpha, "alpha", 0.0, 1.0, include_low=False, include_high=False)
        check_scalar(self.beta, "beta", 0.0, 1.0, include_low=False, include_high=False)
        check_scalar(self.tau_eta, "tau_eta")
        for name in ("c_move", "lambda_imm", "lambda_pers", "lambda_cum", "lambda_nov"):
            check_scalar(getattr(self, name), name, low=0.0)
        object.__setattr__(self, "c_sense", tuple(float(c) for c in self.c_sense))
        for c in self.c_sense:
            check_scalar(c, "c_sense", low=0.0)
        if self.obs_reward not in ("sample", "expected"):
            raise ConfigurationError("must be 'sample' or 'expected'", key="obs_reward")

    def sense_cost(self, protos, a):
        return self.c_sense[protos.action_index(a)]

    def replace(self, **changes):
        return replace(self, **changes)

    def as_dict(self):
        return {f.name: getattr(self, f.name) for f in fields(self)}


@dataclass(frozen=True)
class ExposureState:
    e: float = 0.0
    d: int = 0


def update_exposure(state, eta, alpha):
    return ExposureState(max(alpha * state.e, float(eta)), state.d + int(eta))


@dataclass
class NoveltyMap:
    values: np.ndarray
    t_last: np.ndarray = field(default=None)

    @classmethod
    def zeros(cls, n_nodes):
        return cls(np.zeros(n_nodes), np.zeros(n_nodes, dtype=np.int64))

    def copy(self):
        return NoveltyMap(self.values.copy(), self.t_last.copy())


def update_novelty(novelty, t, visited, beta):
    """EMA of time since last visit, applied to every node.

    The visit is recorded first, so the visited node's gap at this update is 0.
    ``visited`` may be a single node or a sequence of nodes.
    """
    out = novelty.copy()
    out.t_last[visited] = t
    out.values = beta * out.values + (1.0 - beta) * (t - out.t_last)
    return out


def hazard_penalty(eta, exposure, cfg):
    return (
        cfg.lambda_imm * eta
        + cfg.lambda_pers * exposure.e
        + cfg.lambda_cum * math.log1p(exposure.d)
    )


def realized_sense_reward(o, eta, exposure, n_v, c_sense, cfg):
    """``u(o) + lambda_nov*n - hazard - c_sense`` with ``u`` the identity."""
    return o + cfg.lambda_nov * n_v - hazard_penalty(eta, exposure, cfg) - c_sense


def move_reward(exposure, n_target, cfg):
    return (
        -cfg.c_move
        + cfg.lambda_nov * n_target
        - cfg.lambda_pers * exposure.e
        - cfg.lambda_cum * math.log1p(exposure.d)
    )


def stage_value(proto, a, cfg):
    """``E[o] - lambda_imm * P(exposure)`` for one (threat, action) pair."""
    return expected_observation(proto, a) - cfg.lambda_imm * exposure_probability(
        proto, a, cfg.tau_eta
    )


def nominal_sense_surrogate(a, theta, protos, cfg):
    return stage_value(protos[theta], a, cfg) - cfg.sense_cost(protos, a)


def robust_sense_surrogate(a, U_v, protos, cfg):
    """Worst case over the credible set ``U_v`` of the nominal surrogate."""
    if not U_v:
        raise ValueError("credible set must be nonempty")
    return min(stage_value(protos[theta], a, cfg) for theta in U_v) - cfg.sense_cost(protos, a)


def stage_table(protos, cfg):
    """``(n_types, n_actions)`` table of ``E[o] - lambda_imm * P(exposure)``."""
    return protos.expected_observation_table() - cfg.lambda_imm * protos.exposure_probability_table(
        cfg.tau_eta
    )


def robust_sense_rewards(table, c_sense, members):
    """Per-node robust surrogate for every action, shape ``(S, n_actions)``.

    ``members`` is the boolean ``(S, n_types)`` credible-set mask.
    """
    members = np.asarray(members, dtype=bool)
    if not members.any(axis=1).all():
        raise ValueError("every credible set must be nonempty")
    masked = np.where(members[:, :, None], table[None, :, :], np.inf)
    return masked.min(axis=1) - np.asarray(c_sense)[None, :]


def nominal_sense_rewards(table, c_sense, theta_hat):
    """Per-node nominal surrogate under 1-based estimated types ``theta_hat``."""
    idx = np.asarray(theta_hat, dtype=np.int64) - 1
    return table[idx] - np.asarray(c_sense)[None, :]


def reward_bound(protos, cfg, horizon):
    """Upper bound ``R_max`` on any expected one-step reward over a mission.

    Within ``horizon`` steps both the novelty values and the exposure count
    are at most ``horizon``.
    """
    table = stage_table(protos, cfg)
    sense = np.max(np.abs(table - np.asarray(cfg.c_sense)[None, :]))
    hazard = cfg.lambda_pers + cfg.lambda_cum * math.log1p(horizon)
    return float(max(sense, cfg.c_move) + cfg.lambda_nov * horizon + hazard)
