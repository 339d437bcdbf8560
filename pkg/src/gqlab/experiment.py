"""Config parsing and seeded multi-run experiments.

A config is a flat list of dotted ``key = value`` lines (valid TOML)::

    environment.kind = "random-mdp"
    environment.num_states = 5
    learner.alpha = 0.05
    run.seeds = [1, 2, 3]
    run.num_steps = 200000

See README.md for the full key list and defaults.
"""

from __future__ import annotations

import math
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np

from .core import AnswerFunctions, CoverageError, QuestionFunctions, constant, fold_terminal_reward, from_table
from .learner import DivergenceError, GqStepReport, init_learner
from .mdp import (
    STAR_THETA_INIT,
    FeatureMap,
    FiniteMdp,
    RunConfig,
    dense_random_features,
    goal_mdp,
    random_mdp,
    run_driver,
    star_counterexample,
    tabular_features,
)
from .oracle import QTable, evaluate_q_pi, optimal_q, rmse_vs_oracle

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

CURVE_HEADER = "seed,step,delta,theta_norm,trace_norm,rmse"


class ConfigError(ValueError):
    """Invalid experiment configuration; ``key`` is the dotted path at fault."""

    def __init__(self, key: str, message: str):
        super().__init__(f"{key}: {message}")
        self.key = key


# key -> default; _REQUIRED marks keys without one.
_REQUIRED = object()
_SCHEMA: dict[str, Any] = {
    "environment.kind": _REQUIRED,
    "environment.seed": 0,
    "environment.num_states": 5,
    "environment.num_actions": 2,
    "environment.terminal_prob": 0.0,
    "environment.goal": False,
    "question.gamma": None,  # 0.9, or 0.99 on the star counterexample
    "question.reward": "environment",
    "question.terminal_reward": None,
    "question.target_policy": None,  # "uniform", or always-solid on the star
    "answer.behavior_policy": None,  # "uniform", or solid w.p. 1/7 on the star
    "answer.interest": 1.0,
    "answer.features": None,  # "tabular", or the star's own features
    "answer.feature_dim": None,
    "answer.feature_seed": None,
    "answer.lambda": 0.0,
    "learner.alpha": _REQUIRED,
    "learner.eta": 1.0,
    "learner.theta_init": "zeros",
    "learner.correction": True,
    "run.seeds": _REQUIRED,
    "run.num_steps": _REQUIRED,
    "run.report_every": 1000,
    "run.algorithm": None,  # follows question.target_policy
    "output.directory": "gqlab-out",
    "oracle.tol": 1e-12,
    "oracle.max_iters": 100_000,
}


@dataclass(frozen=True)
class ExperimentSpec:
    """A validated experiment; ``values`` holds every schema key with defaults applied."""

    values: dict[str, Any]
    mdp: FiniteMdp = field(repr=False)
    features: FeatureMap = field(repr=False)
    question: QuestionFunctions = field(repr=False)
    answer: AnswerFunctions = field(repr=False)
    theta_init: np.ndarray = field(repr=False)

    def __getitem__(self, key: str) -> Any:
        return self.values[key]

    @property
    def seeds(self) -> list[int]:
        return list(self.values["run.seeds"])

    @property
    def algorithm(self) -> str:
        return self.values["run.algorithm"]

    def run_config(self, seed: int) -> RunConfig:
        v = self.values
        return RunConfig(
            seed=seed,
            num_steps=v["run.num_steps"],
            alpha=v["learner.alpha"],
            eta=v["learner.eta"],
            algorithm=self.algorithm,
            report_every=v["run.report_every"],
            correction=v["learner.correction"],
        )

    def with_overrides(self, **overrides: Any) -> "ExperimentSpec":
        """Re-validate with some dotted keys replaced, e.g. ``{"run.seeds": [4]}``."""
        values = dict(self.values)
        values.update(overrides)
        return build_spec(values)


def _flatten(tree: dict[str, Any], prefix: str = "") -> dict[str, Any]:
    out = {}
    for key, value in tree.items():
        path = f"{prefix}{key}"
        if isinstance(value, dict):
            out.update(_flatten(value, path + "."))
        else:
            out[path] = value
    return out


def parse_config(text: str) -> ExperimentSpec:
    try:
        tree = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError("<document>", f"malformed config: {exc}") from exc
    return build_spec(_flatten(tree))


def load_config(path: str | os.PathLike) -> ExperimentSpec:
    return parse_config(Path(path).read_text())


def _number(values, key, lo=-math.inf, hi=math.inf, integer=False, lo_open=False):
    x = values[key]
    if isinstance(x, bool) or not isinstance(x, (int, float)) or (integer and not isinstance(x, int)):
        raise ConfigError(key, f"expected {'an integer' if integer else 'a number'}, got {x!r}")
    if not math.isfinite(x) or x < lo or x > hi or (lo_open and x == lo):
        bound = f"({lo}, {hi}]" if lo_open else f"[{lo}, {hi}]"
        raise ConfigError(key, f"must lie in {bound}, got {x!r}")
    return x


def _array(values, key, shape, lo=-math.inf, hi=math.inf):
    try:
        arr = np.array(values[key], dtype=np.float64)
    except (TypeError, ValueError) as exc:
        raise ConfigError(key, f"expected a numeric array: {exc}") from exc
    if arr.shape != shape:
        raise ConfigError(key, f"expected shape {shape}, got {arr.shape}")
    if not np.all(np.isfinite(arr)) or np.any(arr < lo) or np.any(arr > hi):
        raise ConfigError(key, f"entries must be finite and lie in [{lo}, {hi}]")
    return arr


def _per_state(values, key, S, lo, hi):
    if isinstance(values[key], list):
        return _array(values, key, (S,), lo, hi)
    return np.full(S, _number(values, key, lo, hi), dtype=np.float64)


def _policy(values, key, S, A, nonterminal):
    spec = values[key]
    if spec == "uniform":
        return np.full((S, A), 1.0 / A)
    if isinstance(spec, str):
        raise ConfigError(key, f"expected \"uniform\" or a table of rows, got {spec!r}")
    table = _array(values, key, (S, A), 0.0, 1.0)
    for s in nonterminal:
        if abs(table[s].sum() - 1.0) > 1e-12:
            raise ConfigError(key, f"row {s} sums to {table[s].sum()!r}, not 1")
    return table


def build_spec(flat: dict[str, Any]) -> ExperimentSpec:
    """Validate dotted-key values, apply defaults and construct the environment."""
    unknown = sorted(set(flat) - set(_SCHEMA))
    if unknown:
        raise ConfigError(unknown[0], "unknown key")
    v = {key: flat.get(key, default) for key, default in _SCHEMA.items()}
    for key, value in v.items():
        if value is _REQUIRED:
            raise ConfigError(key, "required key is missing")

    kind = v["environment.kind"]
    if kind == "random-mdp":
        S = _number(v, "environment.num_states", 2, integer=True)
        A = _number(v, "environment.num_actions", 1, integer=True)
        tp = _number(v, "environment.terminal_prob", 0.0, 1.0)
        if tp >= 1.0:
            raise ConfigError("environment.terminal_prob", f"must be below 1, got {tp}")
        seed = _number(v, "environment.seed", 0, 2**64 - 1, integer=True)
        if not isinstance(v["environment.goal"], bool):
            raise ConfigError("environment.goal", f"expected true or false, got {v['environment.goal']!r}")
        if v["environment.goal"]:
            if tp == 0.0:
                raise ConfigError("environment.goal", "needs environment.terminal_prob > 0")
            mdp = goal_mdp(seed, S, A, tp)
        else:
            mdp = random_mdp(seed, S, A, tp)
        star = None
    elif kind == "star-counterexample":
        star = star_counterexample()
        mdp = star[0]
        S, A = mdp.num_states, mdp.num_actions
    else:
        raise ConfigError("environment.kind", f"expected \"random-mdp\" or \"star-counterexample\", got {kind!r}")
    nonterminal = mdp.nonterminal_states()

    # question
    if v["question.gamma"] is None:
        v["question.gamma"] = 0.99 if star else 0.9
    gamma = mdp.discount_function(_per_state(v, "question.gamma", S, 0.0, 1.0))
    reward_src = v["question.reward"]
    if reward_src == "environment":
        reward = mdp.reward_function()
    elif reward_src == "zero":
        reward = constant(0.0)
    else:
        raise ConfigError("question.reward", f"expected \"environment\" or \"zero\", got {reward_src!r}")
    if v["question.target_policy"] is None:
        v["question.target_policy"] = star[2].target_policy.table.tolist() if star else "uniform"
    if v["answer.behavior_policy"] is None:
        v["answer.behavior_policy"] = star[3].behavior_policy.table.tolist() if star else "uniform"
    behavior = _policy(v, "answer.behavior_policy", S, A, nonterminal)
    target_spec = v["question.target_policy"]
    if target_spec == "greedy":
        target = behavior  # placeholder; the driver re-derives pi from theta every step
    elif target_spec == "behavior":
        target = behavior
    else:
        target = _policy(v, "question.target_policy", S, A, nonterminal)
    if v["run.algorithm"] is None:
        v["run.algorithm"] = "greedy-gq" if target_spec == "greedy" else "gq"
    if v["run.algorithm"] not in ("gq", "greedy-gq"):
        raise ConfigError("run.algorithm", f"expected \"gq\" or \"greedy-gq\", got {v['run.algorithm']!r}")
    if (v["run.algorithm"] == "greedy-gq") != (target_spec == "greedy"):
        raise ConfigError("run.algorithm", "greedy-gq goes with question.target_policy = \"greedy\" and vice versa")
    for s in nonterminal:
        for a in range(A):
            if target_spec != "greedy" and target[s, a] > 0 and behavior[s, a] <= 0:
                raise ConfigError("answer.behavior_policy", f"no coverage of target action {a} in state {s}")
            if target_spec == "greedy" and behavior[s, a] <= 0:
                raise ConfigError("answer.behavior_policy", "greedy target needs full support")
    q = QuestionFunctions(from_table(target), gamma, reward)
    if v["question.terminal_reward"] is not None:
        z = _array(v, "question.terminal_reward", (S,))
        q = QuestionFunctions(q.target_policy, q.discount, fold_terminal_reward(q.reward, from_table(z), q))

    # answer
    if v["answer.features"] is None:
        v["answer.features"] = "star" if star else "tabular"
    feat_kind = v["answer.features"]
    if feat_kind == "tabular":
        features = tabular_features(mdp)
    elif feat_kind == "dense-random":
        if v["answer.feature_dim"] is None:
            raise ConfigError("answer.feature_dim", "required when answer.features = \"dense-random\"")
        n = _number(v, "answer.feature_dim", 1, integer=True)
        if v["answer.feature_seed"] is None:
            v["answer.feature_seed"] = v["environment.seed"]
        fseed = _number(v, "answer.feature_seed", 0, 2**64 - 1, integer=True)
        features = dense_random_features(mdp, n, fseed)
    elif feat_kind == "star" and star:
        features = star[1]
    else:
        allowed = "\"tabular\", \"dense-random\"" + (" or \"star\"" if star else "")
        raise ConfigError("answer.features", f"expected {allowed}, got {feat_kind!r}")
    if isinstance(v["answer.interest"], list):
        interest = from_table(_array(v, "answer.interest", (S, A), 0.0, 1.0))
    else:
        interest = constant(_number(v, "answer.interest", 0.0, 1.0))
    lam = from_table(_per_state(v, "answer.lambda", S, 0.0, 1.0))
    answer = AnswerFunctions(from_table(behavior), interest, features, lam)

    # learner / run / output
    _number(v, "learner.alpha", 0.0, lo_open=True)
    _number(v, "learner.eta", 0.0, 1.0)
    if not isinstance(v["learner.correction"], bool):
        raise ConfigError("learner.correction", f"expected true or false, got {v['learner.correction']!r}")
    ti = v["learner.theta_init"]
    if ti == "zeros":
        theta_init = np.zeros(features.n)
    elif ti == "classic" and star:
        theta_init = STAR_THETA_INIT.copy()
    elif isinstance(ti, str):
        allowed = '"zeros", "classic"' if star else '"zeros"'
        raise ConfigError("learner.theta_init", f"expected {allowed} or a list, got {ti!r}")
    else:
        theta_init = _array(v, "learner.theta_init", (features.n,))
    seeds = v["run.seeds"]
    if (not isinstance(seeds, list) or not seeds
            or any(isinstance(x, bool) or not isinstance(x, int) or not 0 <= x < 2**64 for x in seeds)):
        raise ConfigError("run.seeds", f"expected a non-empty list of unsigned 64-bit integers, got {seeds!r}")
    if len(set(seeds)) != len(seeds):
        raise ConfigError("run.seeds", "seeds must be distinct")
    _number(v, "run.num_steps", 1, integer=True)
    _number(v, "run.report_every", 1, integer=True)
    if not isinstance(v["output.directory"], str) or not v["output.directory"]:
        raise ConfigError("output.directory", "expected a non-empty path string")
    _number(v, "oracle.tol", 0.0, lo_open=True)
    _number(v, "oracle.max_iters", 1, integer=True)
    return ExperimentSpec(v, mdp, features, q, answer, theta_init)


def compute_oracle(spec: ExperimentSpec) -> QTable:
    """Q^pi for a fixed target policy, Q* when the target is greedy."""
    solve = optimal_q if spec.algorithm == "greedy-gq" else evaluate_q_pi
    return solve(spec.mdp, spec.question, spec["oracle.tol"], spec["oracle.max_iters"])


def fmt(x: float) -> str:
    """Lossless 17-significant-digit float formatting."""
    return format(float(x), ".17g")


@dataclass(frozen=True)
class SeedResult:
    seed: int
    final_rmse: float
    diverged: bool = False
    diverged_at_step: int | None = None
    error: str | None = None
    rows: int = 0


def run_seed(spec: ExperimentSpec, oracle: QTable, seed: int, out_dir: Path) -> SeedResult:
    """One seeded run; writes ``curve_seed<seed>.csv`` and never raises on learner failure."""
    config = spec.run_config(seed)
    learner = init_learner(spec.features.n, config.alpha, config.eta, spec.theta_init)
    lines = [CURVE_HEADER]
    last = [math.nan]

    def sink(step: int, report: GqStepReport, state) -> None:
        rmse = rmse_vs_oracle(state.theta, spec.features, oracle, spec.mdp)
        last[0] = rmse
        lines.append(",".join([str(seed), str(step), fmt(report.delta), fmt(report.theta_norm),
                               fmt(report.trace_norm), fmt(rmse)]))

    diverged, at, error = False, None, None
    try:
        run_driver(spec.mdp, spec.question, spec.answer, learner, config, sink=sink)
    except DivergenceError as exc:
        diverged, at = True, exc.step
    except CoverageError as exc:
        error = str(exc)
    (out_dir / f"curve_seed{seed}.csv").write_text("\n".join(lines) + "\n")
    return SeedResult(seed, last[0], diverged, at, error, len(lines) - 1)


def _toml_value(x: Any) -> str:
    if isinstance(x, bool):
        return "true" if x else "false"
    if isinstance(x, int):
        return str(x)
    if isinstance(x, float):
        return fmt(x)
    if isinstance(x, str):
        return '"' + x.replace("\\", "\\\\").replace('"', '\\"') + '"'
    if isinstance(x, (list, tuple)):
        return "[" + ", ".join(_toml_value(y) for y in x) + "]"
    raise TypeError(f"cannot serialize {x!r}")


def run_experiment(spec: ExperimentSpec, workers: int = 1) -> dict[str, Any]:
    """Run every seed, write curve files plus ``summary.txt``, return the summary.

    The oracle is solved once and shared. Seeds may run on ``workers``
    threads; output bytes do not depend on it.
    """
    out_dir = Path(spec["output.directory"])
    out_dir.mkdir(parents=True, exist_ok=True)
    oracle = compute_oracle(spec)
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(lambda s: run_seed(spec, oracle, s, out_dir), spec.seeds))
    else:
        results = [run_seed(spec, oracle, s, out_dir) for s in spec.seeds]

    completed = [r.final_rmse for r in results if not r.diverged and r.error is None]
    summary: dict[str, Any] = {
        "environment.kind": spec["environment.kind"],
        "run.algorithm": spec.algorithm,
        "run.seeds": spec.seeds,
        "run.num_steps": spec["run.num_steps"],
        "oracle.residual": oracle.residual,
    }
    for r in results:
        summary[f"seed.{r.seed}.final_rmse"] = r.final_rmse
        summary[f"seed.{r.seed}.diverged"] = r.diverged
        if r.diverged_at_step is not None:
            summary[f"seed.{r.seed}.diverged_at_step"] = r.diverged_at_step
        if r.error is not None:
            summary[f"seed.{r.seed}.error"] = r.error
    summary["summary.mean_final_rmse"] = float(np.mean(completed)) if completed else math.nan
    summary["summary.diverged_seeds"] = [r.seed for r in results if r.diverged]
    summary["summary.failed_seeds"] = [r.seed for r in results if r.error is not None]

    text = "".join(f"{key} = {_toml_value(value)}\n" for key, value in summary.items())
    (out_dir / "summary.txt").write_text(text)
    return summary
