"""Linear GQ(lambda): off-policy gradient TD learning with eligibility traces.

Submodules:

- :mod:`gqlab.core` question/answer functions and pure helpers
- :mod:`gqlab.learner` the update kernel
- :mod:`gqlab.mdp` finite MDPs, feature maps and the episode driver
- :mod:`gqlab.oracle` exact action values by dynamic programming
- :mod:`gqlab.experiment` config files and seeded multi-run experiments
"""

from .core import (
    AnswerFunctions,
    CoverageError,
    DimensionError,
    QuestionFunctions,
    constant,
    expected_next_features,
    fold_terminal_reward,
    from_table,
    greedy_target_policy,
    importance_ratio,
    q_value,
)
from .learner import (
    DivergenceError,
    GqStepInput,
    GqStepReport,
    LearnerState,
    gq_learn,
    init_learner,
    reset_traces,
)
from .mdp import (
    FeatureMap,
    FiniteMdp,
    RunConfig,
    StepRecord,
    Transition,
    dense_random_features,
    goal_mdp,
    random_mdp,
    run_driver,
    star_counterexample,
    tabular_features,
)
from .oracle import ConvergenceError, QTable, evaluate_q_pi, optimal_q, rmse_vs_oracle

__version__ = "0.1.0"
