"""Finite MDPs, feature maps and the episode driver.

Randomness is split into independent substreams of one root seed (see
:func:`substreams`), so that e.g. changing how actions are drawn never
perturbs the environment's transition draws.
"""

from __future__ import annotations

import bisect
from dataclasses import dataclass, field
from typing import Callable, Literal

import numpy as np
from numpy.typing import ArrayLike, NDArray

from .core import (
    AnswerFunctions,
    CoverageError,
    FeatureVector,
    QuestionFunctions,
    constant,
    expected_next_features,
    from_table,
    greedy_distribution,
    importance_ratio,
)
from .learner import DivergenceError, GqStepInput, GqStepReport, LearnerState, gq_learn, reset_traces

_STREAMS = {"transitions": 0, "behavior": 1, "generation": 2}


def substreams(seed: int) -> dict[str, np.random.Generator]:
    """Named, mutually independent generators derived from one root seed."""
    children = np.random.SeedSequence(seed).spawn(len(_STREAMS))
    return {name: np.random.default_rng(children[i]) for name, i in _STREAMS.items()}


@dataclass(frozen=True)
class FiniteMdp:
    """Tabular environment.

    ``transition[s, a, s2]`` is P(s2 | s, a) and ``reward[s, a, s2]`` the
    environment's own reward table (zeros unless the generator sets one).
    """

    transition: NDArray[np.float64]
    terminal: frozenset[int]
    initial_distribution: NDArray[np.float64]
    reward: NDArray[np.float64] = field(default=None)  # type: ignore[assignment]

    def __post_init__(self):
        P = np.array(self.transition, dtype=np.float64)
        if P.ndim != 3 or P.shape[0] != P.shape[2]:
            raise ValueError(f"transition must have shape (S, A, S), got {P.shape}")
        S, A, _ = P.shape
        if S < 1 or A < 1:
            raise ValueError("need at least one state and one action")
        if np.any(P < 0.0) or np.any(np.abs(P.sum(axis=2) - 1.0) > 1e-12):
            raise ValueError("every transition row must be a probability distribution")
        terminal = frozenset(int(s) for s in self.terminal)
        if any(not 0 <= s < S for s in terminal):
            raise ValueError(f"terminal states {sorted(terminal)} out of range")
        d0 = np.array(self.initial_distribution, dtype=np.float64)
        if d0.shape != (S,) or np.any(d0 < 0.0) or abs(d0.sum() - 1.0) > 1e-12:
            raise ValueError("initial_distribution must be a distribution over states")
        if any(d0[s] != 0.0 for s in terminal):
            raise ValueError("initial_distribution must give zero mass to terminal states")
        R = np.zeros((S, A, S)) if self.reward is None else np.array(self.reward, dtype=np.float64)
        if R.shape != P.shape or not np.all(np.isfinite(R)):
            raise ValueError("reward table must be finite with the same shape as transition")
        for arr in (P, d0, R):
            arr.flags.writeable = False
        object.__setattr__(self, "transition", P)
        object.__setattr__(self, "terminal", terminal)
        object.__setattr__(self, "initial_distribution", d0)
        object.__setattr__(self, "reward", R)

    @property
    def num_states(self) -> int:
        return self.transition.shape[0]

    @property
    def num_actions(self) -> int:
        return self.transition.shape[1]

    @property
    def actions(self) -> range:
        return range(self.num_actions)

    def nonterminal_states(self) -> list[int]:
        return [s for s in range(self.num_states) if s not in self.terminal]

    def reward_function(self) -> Callable[[int, int, int], float]:
        return from_table(self.reward)

    def discount_function(self, gamma: float | ArrayLike) -> Callable[[int], float]:
        """gamma as a state function, forced to zero on terminal states."""
        g = np.broadcast_to(np.asarray(gamma, dtype=np.float64), (self.num_states,)).copy()
        g[list(self.terminal)] = 0.0
        return from_table(g)


@dataclass(frozen=True)
class Transition:
    state: int
    action: int
    next_state: int
    reward: float
    terminal: bool


@dataclass(frozen=True)
class FeatureMap:
    """Feature vectors stored per (state, action); callable as phi(s, a)."""

    kind: Literal["tabular", "dense-random", "custom"]
    table: NDArray[np.float64]

    def __post_init__(self):
        table = np.array(self.table, dtype=np.float64)
        if table.ndim != 3:
            raise ValueError(f"feature table must have shape (S, A, n), got {table.shape}")
        if not np.all(np.isfinite(table)):
            raise ValueError("feature table has non-finite entries")
        table.flags.writeable = False
        object.__setattr__(self, "table", table)

    @property
    def n(self) -> int:
        return self.table.shape[2]

    def __call__(self, s: int, a: int) -> FeatureVector:
        return self.table[s, a]


def tabular_features(mdp: FiniteMdp) -> FeatureMap:
    """One-hot features, coordinate s * num_actions + a."""
    S, A = mdp.num_states, mdp.num_actions
    return FeatureMap("tabular", np.eye(S * A).reshape(S, A, S * A))


def dense_random_features(mdp: FiniteMdp, n: int, seed: int) -> FeatureMap:
    """Gaussian features scaled by 1/sqrt(n), drawn once from ``seed``."""
    rng = substreams(seed)["generation"]
    table = rng.standard_normal((mdp.num_states, mdp.num_actions, n)) / np.sqrt(n)
    return FeatureMap("dense-random", table)


def random_mdp(seed: int, num_states: int, num_actions: int, terminal_prob: float = 0.0) -> FiniteMdp:
    """Seeded random MDP whose non-terminal rows have full support.

    With ``terminal_prob > 0`` the last state is terminal and every
    non-terminal row sends exactly ``terminal_prob`` of its mass there.
    Rewards are uniform on [-1, 1].
    """
    if num_states < 2 or num_actions < 1:
        raise ValueError(f"need num_states >= 2 and num_actions >= 1, got {num_states}, {num_actions}")
    if not 0.0 <= terminal_prob < 1.0:
        raise ValueError(f"terminal_prob must lie in [0, 1), got {terminal_prob}")
    rng = substreams(seed)["generation"]
    S, A = num_states, num_actions
    episodic = terminal_prob > 0.0
    live = S - 1 if episodic else S

    draws = rng.standard_exponential(size=(S, A, live))  # symmetric Dirichlet(1) rows
    P = np.zeros((S, A, S))
    P[:, :, :live] = draws / draws.sum(axis=2, keepdims=True) * (1.0 - terminal_prob)
    if episodic:
        P[:, :, S - 1] = terminal_prob
        P[S - 1] = 0.0
        P[S - 1, :, S - 1] = 1.0
    P /= P.sum(axis=2, keepdims=True)
    reward = rng.uniform(-1.0, 1.0, size=(S, A, S))

    d0 = np.zeros(S)
    d0[:live] = 1.0 / live
    return FiniteMdp(P, frozenset({S - 1}) if episodic else frozenset(), d0, reward)


def goal_mdp(seed: int, num_states: int = 4, num_actions: int = 2, terminal_prob: float = 0.2) -> FiniteMdp:
    """Episodic random MDP whose only reward is 1 on one (s, a) -> terminal transition.

    The rewarding pair is picked from the same seed as the dynamics and
    always terminates, so choosing it is a real decision; every other pair
    keeps the :func:`random_mdp` dynamics.
    """
    base = random_mdp(seed, num_states, num_actions, terminal_prob)
    if not base.terminal:
        raise ValueError("goal_mdp needs terminal_prob > 0")
    rng = np.random.default_rng(np.random.SeedSequence(seed).spawn(len(_STREAMS) + 1)[-1])
    terminal = next(iter(base.terminal))
    s_goal = int(rng.integers(len(base.nonterminal_states())))
    a_goal = int(rng.integers(num_actions))
    transition = base.transition.copy()
    transition[s_goal, a_goal] = 0.0
    transition[s_goal, a_goal, terminal] = 1.0
    reward = np.zeros_like(base.reward)
    reward[s_goal, a_goal, terminal] = 1.0
    return FiniteMdp(transition, base.terminal, base.initial_distribution, reward)


SOLID, DASHED = 0, 1


def star_counterexample() -> tuple[FiniteMdp, FeatureMap, QuestionFunctions, AnswerFunctions]:
    """Seven-state star MDP on which off-policy TD diverges.

    The solid action always leads to the centre state (index 6); the dashed
    action leads uniformly to one of the six outer states. The target
    policy is always-solid, the behavior policy picks solid with
    probability 1/7. State i < 6 has feature 2 at component i and 1 on the
    shared component 7; the centre state has 1 at component 6 and 2 on the
    shared component. Those are the features of the solid action; dashed
    actions have the zero vector, so only solid transitions move theta.
    """
    S, A, n = 7, 2, 8
    P = np.zeros((S, A, S))
    P[:, SOLID, 6] = 1.0
    P[:, DASHED, :6] = 1.0 / 6.0
    mdp = FiniteMdp(P, frozenset(), np.full(S, 1.0 / S))

    table = np.zeros((S, A, n))
    for s in range(6):
        table[s, SOLID, s] = 2.0
        table[s, SOLID, 7] = 1.0
    table[6, SOLID, 6] = 1.0
    table[6, SOLID, 7] = 2.0
    features = FeatureMap("custom", table)

    target = np.zeros((S, A))
    target[:, SOLID] = 1.0
    behavior = np.zeros((S, A))
    behavior[:, SOLID] = 1.0 / 7.0
    behavior[:, DASHED] = 6.0 / 7.0
    q = QuestionFunctions(from_table(target), constant(0.99), mdp.reward_function())
    a = AnswerFunctions(from_table(behavior), constant(1.0), features, constant(0.0))
    return mdp, features, q, a


STAR_THETA_INIT = np.array([1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 10.0, 1.0])


@dataclass(frozen=True)
class RunConfig:
    """Settings for one driver run.

    ``alpha``/``eta`` must agree with the learner the run is handed. A
    non-``None`` ``lambda_value`` replaces the answer functions' bootstrap
    with that constant. ``correction=False`` drops the gradient-correction
    term (plain off-policy TD).
    """

    seed: int
    num_steps: int
    alpha: float
    eta: float = 1.0
    lambda_value: float | None = None
    algorithm: Literal["gq", "greedy-gq"] = "gq"
    report_every: int = 1
    correction: bool = True

    def __post_init__(self):
        if not 0 <= self.seed < 2**64:
            raise ValueError(f"seed must be a 64-bit unsigned integer, got {self.seed}")
        if self.num_steps < 0:
            raise ValueError(f"num_steps must be non-negative, got {self.num_steps}")
        if self.report_every < 1:
            raise ValueError(f"report_every must be positive, got {self.report_every}")
        if not self.alpha > 0.0:
            raise ValueError(f"alpha must be positive, got {self.alpha}")
        if not 0.0 <= self.eta <= 1.0:
            raise ValueError(f"eta must lie in [0, 1], got {self.eta}")
        if self.lambda_value is not None and not 0.0 <= self.lambda_value <= 1.0:
            raise ValueError(f"lambda_value must lie in [0, 1], got {self.lambda_value}")
        if self.algorithm not in ("gq", "greedy-gq"):
            raise ValueError(f"unknown algorithm {self.algorithm!r}")


@dataclass(frozen=True)
class StepRecord:
    """Everything the driver did on one step, for observers."""

    step: int
    episode: int
    transition: Transition
    inputs: GqStepInput
    report: GqStepReport
    learner: LearnerState
    trace_before: FeatureVector  # trace entering the step (already decayed)


class _Sampler:
    """Inverse-CDF sampling over fixed rows using bisection on cumulative sums."""

    def __init__(self, rows: NDArray[np.float64]):
        self._cum = [list(np.cumsum(row)) for row in rows.reshape(-1, rows.shape[-1])]
        self._last = [int(np.flatnonzero(row > 0)[-1]) if np.any(row > 0) else 0
                      for row in rows.reshape(-1, rows.shape[-1])]

    def __call__(self, row: int, u: float) -> int:
        i = bisect.bisect_right(self._cum[row], u)
        return min(i, self._last[row])


def run_driver(
    mdp: FiniteMdp,
    q: QuestionFunctions,
    a: AnswerFunctions,
    learner: LearnerState,
    config: RunConfig,
    sink: Callable[[int, GqStepReport, LearnerState], None] | None = None,
    observer: Callable[[StepRecord], None] | None = None,
) -> LearnerState:
    """Run GQ(lambda) (or Greedy-GQ) on ``mdp`` for ``config.num_steps`` steps.

    Each episode resets the trace and draws its start state from the
    initial distribution; it ends when a terminal state is entered or the
    step budget runs out. ``sink(step, report, learner)`` is called
    every ``report_every`` steps and after the final step. ``observer`` receives
    a :class:`StepRecord` after every step.

    The question and answer functions are tabulated once at the start, so
    they must be deterministic.
    """
    if (learner.alpha, learner.eta) != (config.alpha, config.eta):
        raise ValueError(
            f"learner has alpha={learner.alpha}, eta={learner.eta} but config has "
            f"alpha={config.alpha}, eta={config.eta}"
        )
    S, A = mdp.num_states, mdp.num_actions
    actions = list(mdp.actions)
    greedy = config.algorithm == "greedy-gq"
    bootstrap = a.bootstrap if config.lambda_value is None else constant(config.lambda_value)

    behavior = np.array([[a.behavior_policy(s, act) for act in actions] for s in range(S)])
    phi = np.array([[np.asarray(a.features(s, act), dtype=np.float64) for act in actions] for s in range(S)])
    if phi.shape[2] != learner.n:
        raise ValueError(f"features have dimension {phi.shape[2]}, learner has {learner.n}")
    gammas = [float(q.discount(s)) for s in range(S)]
    lambdas = [float(bootstrap(s)) for s in range(S)]
    interest = [[float(a.interest(s, act)) for act in actions] for s in range(S)]
    q.validate(S, A, sorted(mdp.terminal))
    a.validate(S, A, None if greedy else q.target_policy)
    if greedy and np.any(behavior[mdp.nonterminal_states()] <= 0.0):
        raise CoverageError("greedy-gq needs a behavior policy with full support", step=0)
    zero = np.zeros(learner.n)
    zero.flags.writeable = False

    if not greedy:
        # Fixed target policy: phi_bar and rho depend only on (s, a).
        phi_bar = [zero if s in mdp.terminal else expected_next_features(q, a, s, actions) for s in range(S)]
        rho = [[importance_ratio(q, a, s, act) if behavior[s, act] > 0 else float("nan") for act in actions]
               for s in range(S)]

    rngs = substreams(config.seed)
    env_rng, act_rng = rngs["transitions"], rngs["behavior"]
    start = _Sampler(mdp.initial_distribution[None, :])
    pick_action = _Sampler(behavior)
    pick_next = _Sampler(mdp.transition)
    terminal = [s in mdp.terminal for s in range(S)]

    step = 0
    episode = 0
    while step < config.num_steps:
        learner = reset_traces(learner)
        s = start(0, env_rng.random())
        while step < config.num_steps:
            act = pick_action(s, act_rng.random())
            s_next = pick_next(s * A + act, env_rng.random())
            done = terminal[s_next]
            if greedy:
                # same rule as greedy_target_policy, on the tabulated features
                theta = learner.theta
                ratio = greedy_distribution(phi[s] @ theta)[act] / behavior[s, act]
                bar = zero if done else greedy_distribution(phi[s_next] @ theta) @ phi[s_next]
            else:
                ratio = rho[s][act]
                bar = phi_bar[s_next]
            reward = float(q.reward(s, act, s_next))
            inputs = GqStepInput(
                phi=phi[s, act],
                phi_bar=bar,
                lambda_next=lambdas[s_next],
                gamma_next=gammas[s_next],
                reward=reward,
                rho=ratio,
                interest=interest[s][act],
            )
            trace_before = learner.e
            try:
                learner, report = gq_learn(learner, inputs, correction=config.correction)
            except DivergenceError as exc:
                raise DivergenceError(step + 1) from exc
            step += 1
            if observer is not None:
                observer(StepRecord(step, episode, Transition(s, act, s_next, reward, done),
                                    inputs, report, learner, trace_before))
            if sink is not None and (step % config.report_every == 0 or step == config.num_steps):
                sink(step, report, learner)
            if done:
                break
            s = s_next
        episode += 1
    return learner
