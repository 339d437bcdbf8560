"""Question/answer functions and the pure helpers GQ(lambda) is built from.

States and actions are integer indices. Every function here is pure: the
question and answer functions are treated as fixed mappings, and nothing
below mutates its arguments.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from numpy.typing import ArrayLike, NDArray

FeatureVector = NDArray[np.float64]

PolicyFn = Callable[[int, int], float]
StateFn = Callable[[int], float]
RewardFn = Callable[[int, int, int], float]
FeatureFn = Callable[[int, int], FeatureVector]


class DimensionError(ValueError):
    """Vectors exchanged with a learner disagree in length or shape."""


class CoverageError(ValueError):
    """The behavior policy gives zero probability to an action it is asked to explain."""

    def __init__(self, message: str, step: int | None = None):
        super().__init__(message if step is None else f"{message} (step {step})")
        self.step = step


def as_feature_vector(values: ArrayLike, n: int | None = None) -> FeatureVector:
    """Coerce ``values`` to a finite 1-D float64 array, optionally of length ``n``."""
    vec = np.asarray(values, dtype=np.float64)
    if vec.ndim != 1:
        raise DimensionError(f"feature vector must be 1-D, got shape {vec.shape}")
    if n is not None and vec.shape[0] != n:
        raise DimensionError(f"expected dimension {n}, got {vec.shape[0]}")
    if not np.all(np.isfinite(vec)):
        raise ValueError("feature vector has non-finite entries")
    return vec


def constant(value: float) -> Callable[..., float]:
    """Wrap a scalar as a function of any arguments, e.g. ``gamma = constant(0.9)``."""
    value = float(value)

    def fn(*_args: int) -> float:
        return value

    fn.__name__ = f"constant_{value:g}"
    return fn


def from_table(table: ArrayLike) -> Callable[..., float]:
    """Look-up function over an array indexed by ``(s,)``, ``(s, a)`` or ``(s, a, s')``."""
    arr = np.array(table, dtype=np.float64)
    arr.flags.writeable = False

    def fn(*idx: int) -> float:
        return float(arr[idx])

    fn.table = arr  # type: ignore[attr-defined]
    return fn


@dataclass(frozen=True)
class QuestionFunctions:
    """What is being predicted: target policy, discount/termination and reward."""

    target_policy: PolicyFn
    discount: StateFn
    reward: RewardFn

    def validate(self, num_states: int, num_actions: int, terminal: Sequence[int] = ()) -> None:
        """Check the distribution/range invariants over a finite state-action space."""
        for s in range(num_states):
            probs = np.array([self.target_policy(s, a) for a in range(num_actions)])
            _check_distribution(probs, f"target policy at state {s}")
            g = self.discount(s)
            if not 0.0 <= g <= 1.0:
                raise ValueError(f"discount at state {s} is {g}, outside [0, 1]")
        for s in terminal:
            if self.discount(s) != 0.0:
                raise ValueError(f"discount at terminal state {s} must be 0, got {self.discount(s)}")


@dataclass(frozen=True)
class AnswerFunctions:
    """How the answer is approximated: behavior policy, interest, features, bootstrapping."""

    behavior_policy: PolicyFn
    interest: PolicyFn
    features: FeatureFn
    bootstrap: StateFn

    def validate(
        self, num_states: int, num_actions: int, target_policy: PolicyFn | None = None
    ) -> None:
        n = None
        for s in range(num_states):
            probs = np.array([self.behavior_policy(s, a) for a in range(num_actions)])
            _check_distribution(probs, f"behavior policy at state {s}")
            lam = self.bootstrap(s)
            if not 0.0 <= lam <= 1.0:
                raise ValueError(f"bootstrap at state {s} is {lam}, outside [0, 1]")
            for a in range(num_actions):
                i = self.interest(s, a)
                if not 0.0 <= i <= 1.0:
                    raise ValueError(f"interest at ({s}, {a}) is {i}, outside [0, 1]")
                phi = as_feature_vector(self.features(s, a), n)
                n = phi.shape[0]
                if target_policy is not None and target_policy(s, a) > 0.0 and probs[a] <= 0.0:
                    raise CoverageError(
                        f"target policy takes action {a} in state {s} but the behavior policy never does"
                    )


def _check_distribution(probs: NDArray[np.float64], what: str) -> None:
    if np.any(probs < 0.0) or np.any(probs > 1.0):
        raise ValueError(f"{what} has entries outside [0, 1]: {probs}")
    if abs(probs.sum() - 1.0) > 1e-12:
        raise ValueError(f"{what} sums to {probs.sum()!r}, not 1")


def importance_ratio(q: QuestionFunctions, a: AnswerFunctions, s: int, act: int) -> float:
    """pi(s, act) / b(s, act); raises CoverageError when b(s, act) = 0."""
    b = a.behavior_policy(s, act)
    if b <= 0.0:
        raise CoverageError(f"behavior policy has b({s}, {act}) = {b}; action cannot have been sampled")
    return q.target_policy(s, act) / b


def expected_next_features(
    q: QuestionFunctions, a: AnswerFunctions, s: int, action_set: Sequence[int]
) -> FeatureVector:
    """Target-policy average of the feature vectors available in ``s``."""
    return policy_average(a.features, s, action_set, [q.target_policy(s, act) for act in action_set])


def policy_average(
    features: FeatureFn, s: int, action_set: Sequence[int], probs: Sequence[float]
) -> FeatureVector:
    total = None
    for act, p in zip(action_set, probs):
        phi = np.asarray(features(s, act), dtype=np.float64)
        if total is None:
            total = np.zeros_like(phi)
        elif phi.shape != total.shape:
            raise DimensionError(f"phi({s}, {act}) has shape {phi.shape}, expected {total.shape}")
        total += p * phi
    if total is None:
        raise ValueError("action_set is empty")
    return total


def q_value(theta: ArrayLike, phi: ArrayLike) -> float:
    """Linear action value theta . phi."""
    theta = np.asarray(theta, dtype=np.float64)
    phi = np.asarray(phi, dtype=np.float64)
    if theta.shape != phi.shape:
        raise DimensionError(f"theta has shape {theta.shape}, phi has shape {phi.shape}")
    return float(theta @ phi)


def greedy_distribution(values: ArrayLike) -> NDArray[np.float64]:
    """Uniform distribution over the maximizers of ``values``."""
    values = np.asarray(values, dtype=np.float64)
    best = values == values.max()
    return best / best.sum()


def greedy_target_policy(
    theta: ArrayLike, a: AnswerFunctions, s: int, action_set: Sequence[int]
) -> NDArray[np.float64]:
    """Greedy policy in ``s`` with respect to theta, ties split evenly.

    Returns a probability vector aligned with ``action_set``.
    """
    if len(action_set) == 0:
        raise ValueError("action_set is empty")
    return greedy_distribution([q_value(theta, a.features(s, act)) for act in action_set])


def fold_terminal_reward(
    r_base: RewardFn, z: Callable[[int], float], q: QuestionFunctions
) -> RewardFn:
    """Add a terminal payout z(s') to ``r_base``, weighted by (1 - gamma(s'))."""
    discount = q.discount

    def reward(s: int, act: int, s_next: int) -> float:
        return r_base(s, act, s_next) + (1.0 - discount(s_next)) * z(s_next)

    return reward
