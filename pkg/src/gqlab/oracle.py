"""Exact action values on finite MDPs, used as ground truth for the learner."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.typing import ArrayLike, NDArray

from .core import QuestionFunctions
from .mdp import FeatureMap, FiniteMdp


class ConvergenceError(RuntimeError):
    """Policy evaluation did not reach the requested tolerance."""


@dataclass(frozen=True)
class QTable:
    values: NDArray[np.float64]  # shape (num_states, num_actions)
    residual: float

    def greedy_policy(self, tol: float = 1e-9) -> NDArray[np.float64]:
        """Per-state uniform distribution over actions within ``tol`` of the best."""
        best = self.values >= self.values.max(axis=1, keepdims=True) - tol
        return best / best.sum(axis=1, keepdims=True)


def tabulate(mdp: FiniteMdp, q: QuestionFunctions):
    """Arrays (pi[s, a], gamma[s], r[s, a, s']) of the question functions."""
    S, A = mdp.num_states, mdp.num_actions
    pi = np.array([[q.target_policy(s, a) for a in range(A)] for s in range(S)], dtype=np.float64)
    gamma = np.array([q.discount(s) for s in range(S)], dtype=np.float64)
    reward = np.array(
        [[[q.reward(s, a, s2) for s2 in range(S)] for a in range(A)] for s in range(S)], dtype=np.float64
    )
    return pi, gamma, reward


def _iterate(mdp, gamma, expected_reward, next_value, tol, max_iters):
    values = np.zeros((mdp.num_states, mdp.num_actions))
    terminal = list(mdp.terminal)
    for _ in range(max_iters):
        new = expected_reward + mdp.transition @ (gamma * next_value(values))
        new[terminal] = 0.0
        change = float(np.max(np.abs(new - values)))
        values = new
        if change < tol:
            return QTable(values, change)
    raise ConvergenceError(
        f"no convergence to tol={tol} in {max_iters} sweeps (last change {change:.3e}); "
        "is gamma = 1 on a recurrent set of states?"
    )


def evaluate_q_pi(
    mdp: FiniteMdp, q: QuestionFunctions, tol: float = 1e-12, max_iters: int = 100_000
) -> QTable:
    """Q^pi by synchronous expected Bellman backups starting from Q = 0.

    Stops when the max-norm change between sweeps drops below ``tol``;
    ``residual`` is that last change.

    Raises:
        ConvergenceError: if ``max_iters`` sweeps are not enough.
    """
    if not tol > 0:
        raise ValueError(f"tol must be positive, got {tol}")
    pi, gamma, reward = tabulate(mdp, q)
    expected_reward = np.einsum("ijk,ijk->ij", mdp.transition, reward)
    return _iterate(mdp, gamma, expected_reward, lambda v: (pi * v).sum(axis=1), tol, max_iters)


def optimal_q(
    mdp: FiniteMdp, q: QuestionFunctions, tol: float = 1e-12, max_iters: int = 100_000
) -> QTable:
    """Q* by value iteration: the same backup with a max over next actions.

    The target policy in ``q`` is ignored.
    """
    if not tol > 0:
        raise ValueError(f"tol must be positive, got {tol}")
    _, gamma, reward = tabulate(mdp, q)
    expected_reward = np.einsum("ijk,ijk->ij", mdp.transition, reward)
    return _iterate(mdp, gamma, expected_reward, lambda v: v.max(axis=1), tol, max_iters)


def learned_values(theta: ArrayLike, features: FeatureMap) -> NDArray[np.float64]:
    return features.table @ np.asarray(theta, dtype=np.float64)


def rmse_vs_oracle(theta: ArrayLike, features: FeatureMap, oracle: QTable, mdp: FiniteMdp) -> float:
    """Root-mean-square of theta.phi(s, a) - Q(s, a) over non-terminal pairs, equally weighted."""
    err = learned_values(theta, features) - oracle.values
    rows = mdp.nonterminal_states()
    return float(np.sqrt(np.mean(err[rows] ** 2)))
