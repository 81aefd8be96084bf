"""Per-mode robustness multipliers k_1..k_N under the mixture chance
constraint sum_i P(theta_i) Phi(k_i) >= 1 - eps: the uniform (naive)
selection and the spread-minimizing constrained program."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize
from scipy.stats import norm

from .numerics import std_normal_cdf, std_normal_cdf_inv

log = logging.getLogger(__name__)

# Modes with belief mass below this are pinned to k = 0 and dropped from
# the optimizer so the constraint Jacobian stays well-scaled.
PROB_FLOOR = 1e-12

K_MAX_DEFAULT = 6.0  # Phi(6) is within 1e-9 of 1; larger k is meaningless


def validate_belief(belief: np.ndarray) -> np.ndarray:
    belief = np.asarray(belief, dtype=float)
    if belief.ndim != 1 or belief.size < 1:
        raise ValueError("belief must be a non-empty 1-D probability vector")
    if belief.min() < 0 or abs(belief.sum() - 1.0) > 1e-9:
        raise ValueError(f"belief is not a probability vector: {belief!r}")
    return belief


@dataclass
class KAllocation:
    """Sigma-multipliers per mode plus the chance-constraint slack
    sum_i p_i Phi(k_i) - (1 - eps) actually achieved.

    Allocations produced by naive_allocate / optimal_allocate always have
    slack >= -1e-8; the SEA assembler reuses this container for its
    one-hot selection, whose slack records the (possibly negative) chance
    level that selection actually attains.
    """

    k: np.ndarray
    feasibility_slack: float


def chance_level(belief: np.ndarray, k: np.ndarray) -> float:
    """Mixture probability mass covered: sum_i p_i Phi(k_i)."""
    belief = validate_belief(belief)
    k = np.asarray(k, dtype=float)
    return float(sum(p * std_normal_cdf(ki) for p, ki in zip(belief, k)))


def select_k(eps: float, round_up: bool = False) -> float:
    """Uniform sigma level with Phi(k) >= 1 - eps.

    round_up lifts the exact quantile to the next integer (the hard-coded
    whole-sigma convention, e.g. k = 3 at eps = 0.003).
    """
    if not (0.0 < eps < 0.5):
        raise ValueError(f"eps must lie in (0, 0.5), got {eps!r}")
    k = std_normal_cdf_inv(1.0 - eps)
    if round_up:
        k = math.ceil(k)
    return float(k)


def naive_allocate(belief: np.ndarray, eps: float, round_up: bool = False) -> KAllocation:
    """Uniform allocation k_i = Phi^-1(1 - eps) for every mode.

    Feasible by construction since the belief sums to one.
    """
    belief = validate_belief(belief)
    k = np.full(belief.size, select_k(eps, round_up))
    return KAllocation(k=k, feasibility_slack=chance_level(belief, k) - (1.0 - eps))


def _objective(k, drift, gamma, w_k):
    mu = drift + k * gamma
    return (mu.max() - mu.min()) + w_k * float(np.linalg.norm(k))


def optimal_allocate(
    mode_means: np.ndarray,
    gammas: np.ndarray,
    belief: np.ndarray,
    eps: float,
    k_max: float = K_MAX_DEFAULT,
    w_k: float = 1.0,
    round_up: bool = False,
) -> KAllocation:
    """Spread-minimizing allocation.

    Minimizes max_{i,j} (mu_i - mu_j) + w_k ||k||_2 with
    mu_i = mode_means[i] + k_i * gammas[i], subject to the chance
    constraint, 0 <= k_i <= k_max. Solved by SLSQP from the (always
    feasible) naive point; if the solver fails, returns a point worse than
    naive, or lands infeasible, the naive allocation is returned instead so
    safety is never degraded.
    """
    belief = validate_belief(belief)
    drift = np.asarray(mode_means, dtype=float)
    gamma = np.asarray(gammas, dtype=float)
    if gamma.min() < 0:
        raise ValueError("gammas must be non-negative")

    naive = naive_allocate(belief, eps, round_up)
    naive.k = np.minimum(naive.k, k_max)
    naive.feasibility_slack = chance_level(belief, naive.k) - (1.0 - eps)

    active = belief >= PROB_FLOOR
    if not active.any():
        return naive
    p_act = belief[active]
    d_act = drift[active]
    g_act = gamma[active]
    target = 1.0 - eps

    def cons(k):
        return float(p_act @ norm.cdf(k)) - target

    def cons_jac(k):
        return p_act * norm.pdf(k)

    x0 = np.minimum(np.full(p_act.size, select_k(eps, round_up)), k_max)
    res = minimize(
        _objective,
        x0,
        args=(d_act, g_act, w_k),
        method="SLSQP",
        bounds=[(0.0, k_max)] * p_act.size,
        constraints=[{"type": "ineq", "fun": cons, "jac": cons_jac}],
        options={"maxiter": 200, "ftol": 1e-10},
    )

    k_full = np.zeros(belief.size)
    k_full[active] = np.clip(res.x, 0.0, k_max)
    slack = chance_level(belief, k_full) - target

    # mu spread must be judged on the full mode set the constraint uses
    obj_opt = _objective(k_full, drift, gamma, w_k)
    obj_naive = _objective(naive.k, drift, gamma, w_k)
    if slack < -1e-8 or not np.all(np.isfinite(k_full)):
        log.warning("optimal_allocate: SLSQP point infeasible (slack=%.3e); using naive", slack)
        return naive
    if obj_opt > obj_naive + 1e-12:
        log.debug("optimal_allocate: SLSQP did not improve on naive; using naive")
        return naive
    return KAllocation(k=k_full, feasibility_slack=slack)
