import numpy as np
import pytest

from gqlab.core import QuestionFunctions, constant, from_table
from gqlab.mdp import FiniteMdp, random_mdp, tabular_features
from gqlab.oracle import ConvergenceError, QTable, evaluate_q_pi, optimal_q, rmse_vs_oracle

from oracles import loop_residual, mc_estimate


def problem(seed, S=3, A=2, terminal_prob=0.0, gamma=0.9):
    mdp = random_mdp(seed, S, A, terminal_prob)
    pi = np.random.default_rng(seed).dirichlet(np.ones(A), size=S)
    q = QuestionFunctions(from_table(pi), mdp.discount_function(gamma), mdp.reward_function())
    return mdp, q, pi


def test_myopic_case_is_one_sweep():
    mdp, q, _ = problem(1, gamma=0.0)
    table = evaluate_q_pi(mdp, q, tol=1e-14)
    expected = np.einsum("ijk,ijk->ij", mdp.transition, mdp.reward)
    np.testing.assert_allclose(table.values, expected, rtol=0, atol=1e-15)


def test_zero_reward_gives_zero():
    mdp, _, pi = problem(2)
    q = QuestionFunctions(from_table(pi), constant(0.9), constant(0.0))
    assert not np.any(evaluate_q_pi(mdp, q).values)


def test_self_loop_matches_truncated_series():
    mdp = FiniteMdp(np.ones((1, 1, 1)), frozenset(), np.ones(1), np.ones((1, 1, 1)))
    q = QuestionFunctions(constant(1.0), constant(0.5), mdp.reward_function())
    brute = sum(0.5**k for k in range(50))
    table = evaluate_q_pi(mdp, q, tol=1e-14)
    assert table.values[0, 0] == pytest.approx(brute, abs=1e-13)
    assert table.values[0, 0] == pytest.approx(2.0, abs=1e-13)


def test_terminal_rows_are_zero():
    mdp, q, _ = problem(4, S=4, terminal_prob=0.3)
    table = evaluate_q_pi(mdp, q)
    assert not np.any(table.values[list(mdp.terminal)])


def test_nonconvergence_raises():
    mdp = FiniteMdp(np.ones((1, 1, 1)), frozenset(), np.ones(1), np.ones((1, 1, 1)))
    q = QuestionFunctions(constant(1.0), constant(1.0), mdp.reward_function())
    with pytest.raises(ConvergenceError):
        evaluate_q_pi(mdp, q, tol=1e-8, max_iters=500)


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_residual_recheck(seed):
    mdp, q, _ = problem(seed, S=4, A=3, terminal_prob=0.1 * seed)
    table = evaluate_q_pi(mdp, q, tol=1e-11)
    assert table.residual < 1e-11
    assert loop_residual(mdp, q, table.values) < 1e-10


def test_monte_carlo_agreement():
    mdp, q, pi = problem(7, S=3, A=2)
    gamma = np.array([q.discount(s) for s in range(3)])
    table = evaluate_q_pi(mdp, q)
    rng = np.random.default_rng(2024)
    for s in range(3):
        for a in range(2):
            mean, se = mc_estimate(mdp, pi, gamma, s, a, 200_000, 100, rng)
            assert abs(mean - table.values[s, a]) < 3 * se, (s, a, mean, table.values[s, a], se)


def test_optimal_q_dominates_any_policy():
    mdp, q, _ = problem(3, S=4, A=3, terminal_prob=0.2)
    star = optimal_q(mdp, q)
    for seed in range(5):
        pi = np.random.default_rng(seed).dirichlet(np.ones(3), size=4)
        qp = QuestionFunctions(from_table(pi), q.discount, q.reward)
        assert np.all(evaluate_q_pi(mdp, qp).values <= star.values + 1e-9)
    greedy = star.greedy_policy()
    qg = QuestionFunctions(from_table(greedy), q.discount, q.reward)
    np.testing.assert_allclose(evaluate_q_pi(mdp, qg).values, star.values, atol=1e-9)


def test_rmse_examples():
    mdp, q, _ = problem(5, S=4, terminal_prob=0.2)
    fm = tabular_features(mdp)
    table = evaluate_q_pi(mdp, q)
    exact_theta = table.values.reshape(-1)
    assert rmse_vs_oracle(exact_theta, fm, table, mdp) <= 1e-12
    live = table.values[mdp.nonterminal_states()]
    assert rmse_vs_oracle(np.zeros(fm.n), fm, table, mdp) == pytest.approx(np.sqrt(np.mean(live**2)), rel=1e-15)

    zero = QTable(np.zeros((4, 2)), 0.0)
    theta = np.zeros(fm.n)
    theta[2] = -3.0
    assert rmse_vs_oracle(theta, fm, zero, mdp) == pytest.approx(3.0 / np.sqrt(6), rel=1e-15)
