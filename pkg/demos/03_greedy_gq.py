"""Greedy-GQ on small episodic goal problems.

The target policy is greedy in the current weights and is recomputed every
step. At the end we compare the learned greedy policy with value iteration.
Seeds where the optimal action gaps are tiny are the hard ones: the
constant step size leaves enough noise in theta to flip near-ties.
"""

import numpy as np

from gqlab import (
    AnswerFunctions,
    QuestionFunctions,
    RunConfig,
    constant,
    from_table,
    goal_mdp,
    greedy_target_policy,
    init_learner,
    optimal_q,
    run_driver,
    tabular_features,
)

for seed in range(10):
    mdp = goal_mdp(seed)
    features = tabular_features(mdp)
    uniform = from_table(np.full((4, 2), 0.5))
    question = QuestionFunctions(uniform, mdp.discount_function(0.9), mdp.reward_function())
    answer = AnswerFunctions(uniform, constant(1.0), features, constant(0.0))

    config = RunConfig(seed=seed, num_steps=50_000, alpha=0.05, algorithm="greedy-gq")
    final = run_driver(mdp, question, answer, init_learner(features.n, 0.05), config)

    qstar = optimal_q(mdp, question)
    live = mdp.nonterminal_states()
    learned = np.array([greedy_target_policy(final.theta, answer, s, range(2)) for s in live])
    match = np.array_equal(learned, qstar.greedy_policy()[live])
    gap = np.abs(np.diff(qstar.values[live], axis=1)).min()
    print(f"seed {seed}: {'match   ' if match else 'mismatch'}  smallest optimal action gap {gap:.4f}")
