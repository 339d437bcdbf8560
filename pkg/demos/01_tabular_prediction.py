"""Off-policy prediction on a small random MDP, checked against the exact answer.

The behavior policy picks actions uniformly while the target policy leans
toward one action per state. With one-hot features the learner can
represent Q exactly, so the dynamic-programming values are the target.

Run with ``python demos/01_tabular_prediction.py``.
"""

import numpy as np

from gqlab import (
    AnswerFunctions,
    QuestionFunctions,
    RunConfig,
    constant,
    evaluate_q_pi,
    from_table,
    init_learner,
    random_mdp,
    rmse_vs_oracle,
    run_driver,
    tabular_features,
)

mdp = random_mdp(seed=0, num_states=5, num_actions=2)
features = tabular_features(mdp)

target = np.array([[0.75, 0.25] if s % 2 == 0 else [0.25, 0.75] for s in range(5)])
behavior = np.full((5, 2), 0.5)

question = QuestionFunctions(from_table(target), mdp.discount_function(0.9), mdp.reward_function())
answer = AnswerFunctions(from_table(behavior), constant(1.0), features, constant(0.5))
oracle = evaluate_q_pi(mdp, question)

# Report the error of the current weights and of their running average.
# With a constant step size the last iterate jitters around the fixed point;
# the average shows where it is jittering around.
total, count = np.zeros(features.n), 0


def report(step, rep, learner):
    global total, count
    if step > 50_000:
        total += learner.theta
        count += 1
    if step % 25_000 == 0:
        last = rmse_vs_oracle(learner.theta, features, oracle, mdp)
        avg = f"{rmse_vs_oracle(total / count, features, oracle, mdp):.4f}" if count else "-"
        print(f"step {step:>7}  rmse(last) {last:.4f}  rmse(avg after 50k) {avg}")


config = RunConfig(seed=0, num_steps=200_000, alpha=0.05)
final = run_driver(mdp, question, answer, init_learner(features.n, 0.05), config, sink=report)

print("\naveraged Q vs exact Q:")
averaged = total / count
for s in range(5):
    learned = [averaged[s * 2 + a] for a in range(2)]
    print(f"  state {s}: {np.round(learned, 3)}  exact {np.round(oracle.values[s], 3)}")
