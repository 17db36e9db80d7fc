"""Robust and nominal Bellman operators, value iteration and the planner estimator.

Value functions are ``(S, 2)`` arrays: column 0 holds ``V(v, Sense)`` and
column 1 holds ``V(v, Move)``. Sense transitions go deterministically to the
move phase at the same node, and move transitions to the sense phase at the
chosen neighbor, so the ambiguity only enters through the sense reward.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from ._kernels import value_iteration_kernel
from ._validation import ConvergenceError, check_int, check_scalar, check_value_function
from .graph_env import MOVE, SENSE
from .reward import nominal_sense_rewards, robust_sense_rewards, stage_table


class PlannerKind(str, Enum):
    ADAPTIVE = "adaptive"
    STATIC = "static"
    NOMINAL = "nominal"


PLANNER_LABELS = {
    PlannerKind.ADAPTIVE: "Adaptive Robust",
    PlannerKind.STATIC: "Static Robust",
    PlannerKind.NOMINAL: "Nominal",
}


@dataclass
class PlanningProblem:
    """Everything one replan sees, frozen at the current time step.

    ``members`` is the boolean credible-set mask (robust kinds) and
    ``theta_hat`` the 1-based MAP types (nominal kind).
    """

    env: object
    table: np.ndarray
    c_sense: tuple
    actions: tuple
    cfg: object
    novelty: np.ndarray
    members: np.ndarray | None = None
    theta_hat: np.ndarray | None = None

    @classmethod
    def from_prototypes(cls, env, protos, cfg, novelty, members=None, theta_hat=None):
        return cls(
            env,
            stage_table(protos, cfg),
            cfg.c_sense,
            protos.actions,
            cfg,
            np.asarray(novelty, dtype=float),
            members,
            theta_hat,
        )

    def sense_rewards(self, kind):
        kind = PlannerKind(kind)
        if kind is PlannerKind.NOMINAL:
            if self.theta_hat is None:
                raise ValueError("the nominal planner needs theta_hat")
            return nominal_sense_rewards(self.table, self.c_sense, self.theta_hat)
        if kind is PlannerKind.STATIC or self.members is None:
            members = np.ones((self.env.n_nodes, self.table.shape[0]), dtype=bool)
        else:
            members = self.members
        return robust_sense_rewards(self.table, self.c_sense, members)


def bellman_backup(V, env, sense_rewards, novelty, cfg):
    """One synchronous sweep of the two-phase operator with given sense rewards."""
    V = check_value_function(V, env.n_nodes)
    novelty = np.asarray(novelty, dtype=float)
    bonus = cfg.lambda_nov * novelty
    out = np.empty_like(V)
    sense_q = (sense_rewards + bonus[:, None]) + cfg.gamma * V[:, MOVE][:, None]
    out[:, SENSE] = sense_q.max(axis=1)
    for v, targets in enumerate(env.move_targets):
        t = np.asarray(targets)
        out[v, MOVE] = np.max((-cfg.c_move + bonus[t]) + cfg.gamma * V[t, SENSE])
    return out


def robust_bellman_backup(V, env, members, novelty, protos, cfg):
    """Worst case over each node's credible set (boolean ``(S, n_types)`` mask)."""
    members = getattr(members, "members", members)
    rewards = robust_sense_rewards(stage_table(protos, cfg), cfg.c_sense, members)
    return bellman_backup(V, env, rewards, novelty, cfg)


def nominal_bellman_backup(V, env, theta_hat, novelty, protos, cfg):
    rewards = nominal_sense_rewards(stage_table(protos, cfg), cfg.c_sense, theta_hat)
    return bellman_backup(V, env, rewards, novelty, cfg)


def planning_reward_bound(sense_rewards, novelty, cfg):
    """Largest one-step reward magnitude in the planning problem, ``R_max``."""
    bonus = cfg.lambda_nov * np.asarray(novelty, dtype=float)
    sense = np.abs(sense_rewards + bonus[:, None]).max()
    move = np.abs(-cfg.c_move + bonus).max()
    return float(max(sense, move))


def iteration_bound(r_max, gamma, tol):
    """Sweeps from ``V0 = 0`` guaranteed to bring the update below ``tol``.

    ``ceil(log(R_max / ((1 - gamma)^2 * tol)) / log(1 / gamma)) + 1``, at least 1.
    """
    if r_max <= 0:
        return 1
    k = math.ceil(math.log(r_max / ((1.0 - gamma) ** 2 * tol)) / math.log(1.0 / gamma)) + 1
    return max(k, 1)


def solve(env, sense_rewards, novelty, cfg, tol=1e-6, max_iter=10_000, V0=None):
    """Value iteration on precomputed sense rewards. Returns ``(V, n_iter, residual)``."""
    tol = check_scalar(tol, "tol", low=0.0, include_low=False)
    max_iter = check_int(max_iter, "max_iter", min_value=1)
    bonus = cfg.lambda_nov * np.asarray(novelty, dtype=float)
    sense_best = np.max(sense_rewards + bonus[:, None], axis=1)
    move_gain = -cfg.c_move + bonus
    targets, counts = env.move_table
    if V0 is None:
        V0 = np.zeros((env.n_nodes, 2))
    V, n_iter, residual = value_iteration_kernel(
        sense_best, move_gain, targets, counts, cfg.gamma, tol, max_iter, np.asarray(V0, dtype=float)
    )
    if not residual < tol:
        raise ConvergenceError(
            f"value iteration did not reach tol={tol} in {max_iter} sweeps (residual {residual:.3e})",
            residual=residual,
            n_iter=n_iter,
        )
    return V, int(n_iter), float(residual)


def value_iteration(kind, problem, tol=1e-6, max_iter=10_000, V0=None):
    """Iterate the operator of ``kind`` from ``V0`` (zeros by default).

    Returns ``(V, n_iter)``; raises ConvergenceError carrying the residual.
    """
    V, n_iter, _ = solve(
        problem.env, problem.sense_rewards(kind), problem.novelty, problem.cfg, tol, max_iter, V0
    )
    return V, n_iter


def value_function_csv(V, path=None):
    """Dump ``V`` as ``node,phase,value`` rows; returns the text."""
    V = np.asarray(V, dtype=float)
    lines = ["node,phase,value"]
    for v in range(V.shape[0]):
        lines.append(f"{v},sense,{float(V[v, SENSE])!r}")
        lines.append(f"{v},move,{float(V[v, MOVE])!r}")
    text = "\n".join(lines) + "\n"
    if path is not None:
        with open(path, "w") as fh:
            fh.write(text)
    return text


@dataclass(frozen=True)
class Policy:
    """Per node: a sense-action index and a move target."""

    sense: np.ndarray
    move: np.ndarray
    actions: tuple

    def sense_action(self, v):
        return self.actions[self.sense[v]]


def greedy_policy_from_rewards(V, env, sense_rewards, novelty, cfg):
    # np.argmax returns the first maximizer: lowest action index, lowest node id
    # padding repeats the last (largest) target, so it never wins a tie
    bonus = cfg.lambda_nov * np.asarray(novelty, dtype=float)
    sense = np.argmax(sense_rewards, axis=1)
    targets, _ = env.move_table
    q = (-cfg.c_move + bonus[targets]) + cfg.gamma * V[targets, SENSE]
    move = targets[np.arange(env.n_nodes), np.argmax(q, axis=1)]
    return sense, move


def greedy_policy(V, kind, problem):
    sense, move = greedy_policy_from_rewards(
        V, problem.env, problem.sense_rewards(kind), problem.novelty, problem.cfg
    )
    return Policy(sense, move, problem.actions)


class RobustPlanner(BaseEstimator):
    """Value-iteration planner over the two-phase surveillance graph.

    Parameters
    ----------
    kind : {"adaptive", "static", "nominal"}
        ``adaptive`` takes the worst case over the current credible sets,
        ``static`` over every threat type, ``nominal`` plans for the MAP types.
    tol : float
        Stop once the sup-norm change between sweeps is below ``tol``.
    max_iter : int
        Sweep budget; exceeding it raises ``ConvergenceError``.
    warm_start : bool
        Start from the previous fit's value function instead of zeros.

    Attributes
    ----------
    value_ : ndarray of shape (n_nodes, 2)
    n_iter_ : int
    residual_ : float
    policy_ : Policy
    r_max_ : float
        Largest one-step planning reward magnitude of the last problem.
    """

    def __init__(self, kind="adaptive", tol=1e-6, max_iter=10_000, warm_start=False):
        self.kind = kind
        self.tol = tol
        self.max_iter = max_iter
        self.warm_start = warm_start

    def fit(self, problem):
        kind = PlannerKind(self.kind)
        rewards = problem.sense_rewards(kind)
        V0 = None
        if self.warm_start and getattr(self, "value_", None) is not None:
            if self.value_.shape == (problem.env.n_nodes, 2):
                V0 = self.value_
        V, n_iter, residual = solve(
            problem.env, rewards, problem.novelty, problem.cfg, self.tol, self.max_iter, V0
        )
        sense, move = greedy_policy_from_rewards(V, problem.env, rewards, problem.novelty, problem.cfg)
        self.value_ = V
        self.n_iter_ = n_iter
        self.residual_ = residual
        self.r_max_ = planning_reward_bound(rewards, problem.novelty, problem.cfg)
        self.policy_ = Policy(sense, move, problem.actions)
        return self

    def predict(self, nodes):
        """Sense-action labels chosen at ``nodes``."""
        check_is_fitted(self, "policy_")
        nodes = np.atleast_1d(nodes)
        return np.array([self.policy_.actions[i] for i in self.policy_.sense[nodes]])

    def predict_move(self, nodes):
        check_is_fitted(self, "policy_")
        return self.policy_.move[np.atleast_1d(nodes)]
