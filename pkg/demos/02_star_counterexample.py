"""The seven-state star problem: naive off-policy TD blows up, GQ(0) does not.

Both runs use the same driver, seed and step size. The only difference is
whether the gradient-correction term (the secondary weights w) is active.
The true action values are all zero.
"""

import numpy as np

from gqlab import DivergenceError, RunConfig, evaluate_q_pi, init_learner, rmse_vs_oracle, run_driver
from gqlab.mdp import STAR_THETA_INIT, star_counterexample

mdp, features, question, answer = star_counterexample()
oracle = evaluate_q_pi(mdp, question)
alpha = 0.005

for correction in (True, False):
    label = "GQ(0)" if correction else "naive TD(0)"
    config = RunConfig(seed=0, num_steps=100_000, alpha=alpha, lambda_value=0.0,
                       report_every=10_000, correction=correction)

    def report(step, rep, learner):
        print(f"  {label:12s} step {step:>6}  max|theta| {rep.theta_norm:11.4g}  "
              f"rmse {rmse_vs_oracle(learner.theta, features, oracle, mdp):.4g}")

    print(label)
    with np.errstate(over="ignore", invalid="ignore"):
        try:
            run_driver(mdp, question, answer, init_learner(features.n, alpha, theta_init=STAR_THETA_INIT),
                       config, sink=report)
        except DivergenceError as err:
            print(f"  diverged to non-finite values at step {err.step}")
