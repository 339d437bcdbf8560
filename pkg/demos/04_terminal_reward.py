"""Encoding a payout on termination through the reward function.

Rewards are zero everywhere; the question asks for the value of reaching
the terminal state, which pays z = 5. Folding gives
r(s, a, s') = (1 - gamma(s')) z(s'), which is 5 exactly on terminal entries.
Every non-terminal row of this MDP sends the same mass to the terminal
state, so the exact values come out equal across pairs.
"""

import numpy as np

from gqlab import (
    AnswerFunctions,
    QuestionFunctions,
    RunConfig,
    constant,
    evaluate_q_pi,
    fold_terminal_reward,
    from_table,
    init_learner,
    random_mdp,
    rmse_vs_oracle,
    run_driver,
    tabular_features,
)

mdp = random_mdp(seed=3, num_states=4, num_actions=2, terminal_prob=0.25)
features = tabular_features(mdp)
uniform = from_table(np.full((4, 2), 0.5))
gamma = mdp.discount_function(0.95)

payout = np.zeros(4)
payout[list(mdp.terminal)] = 5.0
base = QuestionFunctions(uniform, gamma, constant(0.0))
question = QuestionFunctions(uniform, gamma, fold_terminal_reward(constant(0.0), from_table(payout), base))
answer = AnswerFunctions(uniform, constant(1.0), features, constant(0.7))

oracle = evaluate_q_pi(mdp, question)
final = run_driver(mdp, question, answer, init_learner(features.n, 0.02),
                   RunConfig(seed=1, num_steps=100_000, alpha=0.02))
print("exact Q:\n", np.round(oracle.values, 3))
print("learned Q:\n", np.round(final.theta.reshape(4, 2), 3))
print(f"rmse {rmse_vs_oracle(final.theta, features, oracle, mdp):.4f}")
