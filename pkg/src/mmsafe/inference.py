"""Goal inference: Boltzmann-rational likelihood of observed human controls
under each candidate goal, with the closed-form Gaussian-integral
normalizer, and the recursive Bayes belief update (log-space)."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .allocation import validate_belief
from .dynamics import HumanModel
from .numerics import discretize_zoh, solve_dare

log = logging.getLogger(__name__)


@dataclass
class BoltzmannModel:
    """Discrete-time quadratic action-value model of the human.

    The candidate goals share Q, R and the dynamics, so the DARE solution P
    and the goal-independent part of the log normalizer are precomputed
    once. Requires beta > 0 and R + Bd' P Bd positive definite.
    """

    beta: float
    a_d: np.ndarray           # (4, 4) discretized human dynamics
    b_d: np.ndarray           # (4, 2)
    q: np.ndarray             # (4, 4)
    r: np.ndarray             # (2, 2)
    p: np.ndarray             # (4, 4) DARE solution
    m: np.ndarray = field(init=False)          # R + Bd' P Bd
    log_z_const: float = field(init=False)     # goal-independent normalizer part

    def __post_init__(self):
        if self.beta <= 0:
            raise ValueError(f"beta must be positive, got {self.beta!r}")
        self.m = self.r + self.b_d.T @ self.p @ self.b_d
        if np.linalg.eigvalsh(self.m).min() <= 0:
            raise ValueError("R + Bd' P Bd must be positive definite")
        m_u = self.b_d.shape[1]
        sign, logdet = np.linalg.slogdet(2.0 * self.beta * self.m)
        assert sign > 0
        self.log_z_const = 0.5 * (m_u * np.log(2.0 * np.pi) - logdet)

    @classmethod
    def build(cls, model: HumanModel, dt: float, beta: float = 0.5) -> "BoltzmannModel":
        a_d, b_d = discretize_zoh(model.a, model.b, dt)
        p = solve_dare(a_d, b_d, model.q, model.r)
        return cls(beta=float(beta), a_d=a_d, b_d=b_d, q=model.q, r=model.r, p=p)


def q_value(x_h: np.ndarray, u_h: np.ndarray, theta: np.ndarray, m: BoltzmannModel) -> float:
    """Action value: instantaneous quadratic reward plus the negative
    optimal cost-to-go from the successor state. Always <= 0."""
    e = x_h - theta
    x_next = m.a_d @ x_h + m.b_d @ u_h
    e_next = x_next - theta
    reward = -float(e @ m.q @ e) - float(u_h @ m.r @ u_h)
    return reward - float(e_next @ m.p @ e_next)


def optimal_action(x_h: np.ndarray, theta: np.ndarray, m: BoltzmannModel) -> np.ndarray:
    """argmax_u q_value: the discrete-time LQR feedback toward theta."""
    return -np.linalg.solve(m.m, m.b_d.T @ m.p @ m.a_d @ (x_h - theta))


def log_normalizer(x_h: np.ndarray, theta: np.ndarray, m: BoltzmannModel) -> float:
    """log integral of exp(beta * q_value) over the control plane.

    Closed form: the integrand is an unnormalized Gaussian in u, so
    log Z = -beta (x-theta)' P (x-theta) + const, the constant being the
    precomputed determinant term.
    """
    e = x_h - theta
    return -m.beta * float(e @ m.p @ e) + m.log_z_const


def log_likelihood(
    u_h: np.ndarray, x_h: np.ndarray, theta: np.ndarray, m: BoltzmannModel
) -> float:
    """log p(u_H | x_H; theta) = beta * Q - log Z."""
    return m.beta * q_value(x_h, u_h, theta, m) - log_normalizer(x_h, theta, m)


def bayes_update(
    belief: np.ndarray,
    x_h: np.ndarray,
    u_h: np.ndarray,
    goals: np.ndarray,
    m: BoltzmannModel,
) -> np.ndarray:
    """Posterior over goals given one observed (x_H, u_H) pair.

    Computed in log space with max-subtraction; if every posterior weight
    underflows to zero the prior is returned unchanged (with a warning).
    """
    belief = validate_belief(belief)
    if goals.shape[0] != belief.size:
        raise ValueError("belief length must match the number of goals")
    with np.errstate(divide="ignore"):
        log_post = np.log(belief)
    for i in range(belief.size):
        if belief[i] > 0.0:
            log_post[i] += log_likelihood(u_h, x_h, goals[i], m)
    finite = np.isfinite(log_post)
    if not finite.any():
        log.warning("bayes_update: posterior underflowed; keeping prior")
        return belief.copy()
    w = np.zeros_like(belief)
    w[finite] = np.exp(log_post[finite] - log_post[finite].max())
    total = w.sum()
    if total <= 0.0 or not np.isfinite(total):
        log.warning("bayes_update: posterior underflowed; keeping prior")
        return belief.copy()
    return w / total
