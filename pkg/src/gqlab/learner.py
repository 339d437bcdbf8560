"""Linear GQ(lambda) update kernel.

The learner is a plain value: :func:`gq_learn` never mutates the state it
is given and returns a fresh one. Arrays held by a :class:`LearnerState`
are marked read-only so a state can be shared safely.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np
from numpy.typing import ArrayLike

from .core import DimensionError, FeatureVector, as_feature_vector


class DivergenceError(ArithmeticError):
    """An update produced a non-finite entry in theta, w or e."""

    def __init__(self, step: int, message: str = "learner diverged"):
        super().__init__(f"{message} at step {step}")
        self.step = step


def _frozen(x: np.ndarray) -> np.ndarray:
    x.flags.writeable = False
    return x


@dataclass(frozen=True)
class LearnerState:
    theta: FeatureVector
    w: FeatureVector
    e: FeatureVector
    alpha: float
    eta: float
    step: int = 0  # number of updates applied so far

    @property
    def n(self) -> int:
        return self.theta.shape[0]


@dataclass(frozen=True)
class GqStepInput:
    """Arguments of one GQ(lambda) update, in the order the algorithm takes them.

    ``lambda_next`` and ``gamma_next`` are evaluated at the next state;
    ``interest`` at the pair that was just taken.
    """

    phi: FeatureVector
    phi_bar: FeatureVector
    lambda_next: float
    gamma_next: float
    reward: float
    rho: float
    interest: float = 1.0


@dataclass(frozen=True)
class GqStepReport:
    """Diagnostics of one update.

    ``trace`` is the eligibility trace the weights were updated with (after
    the new features were accumulated, before the gamma*lambda decay) and
    ``trace_norm`` is its Euclidean norm.
    """

    delta: float
    trace_norm: float
    theta_norm: float
    trace: FeatureVector


def init_learner(
    n: int, alpha: float, eta: float = 1.0, theta_init: ArrayLike | None = None
) -> LearnerState:
    if n <= 0:
        raise ValueError(f"feature dimension must be positive, got {n}")
    if not alpha > 0.0 or not math.isfinite(alpha):
        raise ValueError(f"alpha must be a positive finite number, got {alpha}")
    if not 0.0 <= eta <= 1.0:
        raise ValueError(f"eta must lie in [0, 1], got {eta}")
    theta = np.zeros(n) if theta_init is None else as_feature_vector(theta_init, n).copy()
    return LearnerState(
        theta=_frozen(theta),
        w=_frozen(np.zeros(n)),
        e=_frozen(np.zeros(n)),
        alpha=float(alpha),
        eta=float(eta),
    )


def reset_traces(state: LearnerState) -> LearnerState:
    """Zero the eligibility trace, keeping theta and w."""
    return replace(state, e=_frozen(np.zeros_like(state.e)))


def gq_learn(
    state: LearnerState, inp: GqStepInput, *, correction: bool = True
) -> tuple[LearnerState, GqStepReport]:
    """Apply one GQ(lambda) update.

    Order of operations::

        delta <- R + gamma * theta.phi_bar - theta.phi
        e     <- rho * e + I * phi
        theta <- theta + alpha * (delta * e - gamma * (1 - lambda) * (w.e) * phi_bar)
        w     <- w + alpha * eta * (delta * e - (w.phi) * phi)
        e     <- gamma * lambda * e

    With ``correction=False`` the ``(w.e) * phi_bar`` term is dropped and w
    is held at zero, which turns the update into plain off-policy TD(lambda).

    Raises:
        DimensionError: if phi or phi_bar do not match the learner dimension.
        DivergenceError: if any entry of theta, w or e becomes non-finite.
    """
    theta, w, e = state.theta, state.w, state.e
    phi, phi_bar = inp.phi, inp.phi_bar
    if phi.shape != theta.shape or phi_bar.shape != theta.shape:
        raise DimensionError(
            f"learner has dimension {theta.shape[0]}, got phi {phi.shape} and phi_bar {phi_bar.shape}"
        )
    gamma, lam, alpha = inp.gamma_next, inp.lambda_next, state.alpha

    delta = inp.reward + gamma * float(theta @ phi_bar) - float(theta @ phi)
    e_acc = inp.rho * e + inp.interest * phi
    # scalar factors are folded before touching the vectors
    theta_new = theta + (alpha * delta) * e_acc
    if correction:
        theta_new -= (alpha * gamma * (1.0 - lam) * float(w @ e_acc)) * phi_bar
        beta = alpha * state.eta
        w_new = w + (beta * delta) * e_acc
        w_new -= (beta * float(w @ phi)) * phi
    else:
        w_new = w
    e_new = (gamma * lam) * e_acc

    step = state.step + 1
    theta_sq = float(theta_new @ theta_new)
    trace_sq = float(e_acc @ e_acc)
    # A NaN/inf entry always makes the squared norm non-finite; the reverse
    # can also happen through overflow, so confirm before raising.
    probe = delta + theta_sq + trace_sq + float(w_new @ w_new)
    if not math.isfinite(probe):
        if not (
            math.isfinite(delta)
            and np.isfinite(theta_new).all()
            and np.isfinite(w_new).all()
            and np.isfinite(e_new).all()
        ):
            raise DivergenceError(step)

    new_state = LearnerState(
        theta=_frozen(theta_new),
        w=w_new if w_new is w else _frozen(w_new),
        e=_frozen(e_new),
        alpha=alpha,
        eta=state.eta,
        step=step,
    )
    return new_state, GqStepReport(
        delta=delta,
        trace_norm=math.sqrt(trace_sq),
        theta_norm=math.sqrt(theta_sq),
        trace=_frozen(e_acc),
    )
