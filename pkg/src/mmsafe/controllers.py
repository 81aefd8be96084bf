"""Robot control: nominal Lyapunov goal seeking, the three safe-control
constraint assemblers (SEA / N-MMSSA / O-MMSSA), exact QP projection onto
the clipped safe set, the phi-switching law, and the safe-set-area metric."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .allocation import KAllocation, chance_level, naive_allocate, optimal_allocate, select_k
from .dynamics import HumanModel, JointState
from .safety import HalfspaceConstraint, ModeTerms, SafetyParams, mode_terms, phi

METHODS = ("sea", "nmmssa", "ommssa")


@dataclass
class SafeControlResult:
    u: np.ndarray                     # applied control, ||u||_inf <= u_max
    active: bool                      # safety layer engaged (phi >= 0)
    constraint: HalfspaceConstraint
    allocation: KAllocation
    area: float                       # area of the clipped safe set
    feasible: bool                    # clipped safe set non-empty
    phi: float


def wrap_angle(a: float) -> float:
    """Wrap to (-pi, pi]."""
    a = (a + math.pi) % (2.0 * math.pi) - math.pi
    if a <= -math.pi:
        a += 2.0 * math.pi
    return a


def nominal_control(
    x_r: np.ndarray, goal: np.ndarray, k_v: float = 1.0, k_psi: float = 2.0
) -> np.ndarray:
    """Lyapunov goal-seeking reference for the unicycle.

    Accelerates along the projection of the goal offset onto the heading
    (with speed damping) and steers toward the goal bearing, heading error
    wrapped to (-pi, pi]. Exactly at the goal the control is zero.
    """
    dx = x_r[0] - goal[0]
    dy = x_r[1] - goal[1]
    if dx == 0.0 and dy == 0.0:
        return np.zeros(2)
    psi = x_r[3]
    accel = -(dx * math.cos(psi) + dy * math.sin(psi)) - k_v * x_r[2]
    bearing = math.atan2(-dy, -dx)  # direction from robot to goal
    steer = k_psi * wrap_angle(bearing - psi)
    return np.array([accel, steer])


def _assemble(l: np.ndarray, s_values: np.ndarray) -> HalfspaceConstraint:
    return HalfspaceConstraint(l=l, s=float(s_values.min()))


def _mode_bounds(terms: ModeTerms, k: np.ndarray, eta0: float) -> np.ndarray:
    return -eta0 - (terms.drift + k * terms.gamma)


def sea_constraint(
    x: JointState,
    belief: np.ndarray,
    goals: np.ndarray,
    model: HumanModel,
    p: SafetyParams,
    eps: float,
    round_up: bool = True,
) -> tuple[HalfspaceConstraint, KAllocation]:
    """Unimodal baseline: robustify only the most-likely mode (ties break
    to the lowest index); every other mode is ignored outright."""
    terms = mode_terms(x, goals, model, p)
    i_star = int(np.argmax(belief))
    k = np.zeros(belief.size)
    k[i_star] = select_k(eps, round_up)
    s = _mode_bounds(terms, k, p.eta0)[i_star]
    alloc = KAllocation(k=k, feasibility_slack=chance_level(belief, k) - (1.0 - eps))
    return HalfspaceConstraint(l=terms.l, s=float(s)), alloc


def nmmssa_constraint(
    x: JointState,
    belief: np.ndarray,
    goals: np.ndarray,
    model: HumanModel,
    p: SafetyParams,
    eps: float,
    round_up: bool = True,
) -> tuple[HalfspaceConstraint, KAllocation]:
    """Uniform-k mode bounds; the binding constraint is the smallest S_i
    (all constraints share L, so they are parallel in control space)."""
    terms = mode_terms(x, goals, model, p)
    alloc = naive_allocate(belief, eps, round_up)
    s = _mode_bounds(terms, alloc.k, p.eta0)
    return _assemble(terms.l, s), alloc


def ommssa_constraint(
    x: JointState,
    belief: np.ndarray,
    goals: np.ndarray,
    model: HumanModel,
    p: SafetyParams,
    eps: float,
    round_up: bool = True,
    k_max: float = 6.0,
    w_k: float = 1.0,
) -> tuple[HalfspaceConstraint, KAllocation]:
    """Spread-minimizing per-mode k (falls back to the naive allocation
    inside optimal_allocate if the program fails), then the binding S_i."""
    terms = mode_terms(x, goals, model, p)
    alloc = optimal_allocate(
        terms.drift, terms.gamma, belief, eps, k_max=k_max, w_k=w_k, round_up=round_up
    )
    s = _mode_bounds(terms, alloc.k, p.eta0)
    return _assemble(terms.l, s), alloc


_ASSEMBLERS = {
    "sea": sea_constraint,
    "nmmssa": nmmssa_constraint,
    "ommssa": ommssa_constraint,
}


def project_to_safe(
    u_ref: np.ndarray, c: HalfspaceConstraint, u_max: float
) -> tuple[np.ndarray, bool]:
    """Exact Euclidean projection of u_ref onto {u : L u <= S} within the
    actuation box [-u_max, u_max]^2.

    The box is clipped by the half space into a convex polygon (<= 5
    vertices) and the projection lands on it exactly. If the intersection
    is empty, returns the box point minimizing L u (maximum effort against
    the constraint direction) flagged infeasible.
    """
    u = np.asarray(u_ref, dtype=float)
    l0, l1, s = float(c.l[0]), float(c.l[1]), float(c.s)
    in_box = abs(u[0]) <= u_max and abs(u[1]) <= u_max
    if in_box and l0 * u[0] + l1 * u[1] <= s:
        return u.copy(), True
    poly = _kernels.halfspace_box_polygon(l0, l1, s, u_max)
    if poly.shape[0] == 0:
        fallback = np.array(
            [
                -u_max if l0 > 0 else (u_max if l0 < 0 else min(max(u[0], -u_max), u_max)),
                -u_max if l1 > 0 else (u_max if l1 < 0 else min(max(u[1], -u_max), u_max)),
            ]
        )
        return fallback, False
    qx, qy = _kernels.project_to_polygon(float(u[0]), float(u[1]), poly)
    return np.array([qx, qy]), True


def safe_set_area(c: HalfspaceConstraint, u_max: float) -> float:
    """Exact area of {u : L u <= S} within the actuation box (shoelace on
    the clipped polygon)."""
    poly = _kernels.halfspace_box_polygon(float(c.l[0]), float(c.l[1]), float(c.s), u_max)
    return float(_kernels.polygon_area(poly))


def safe_control(
    x: JointState,
    belief: np.ndarray,
    goals: np.ndarray,
    u_ref: np.ndarray,
    method: str,
    model: HumanModel,
    p: SafetyParams,
    eps: float,
    u_max: float,
    round_up: bool = True,
    k_max: float = 6.0,
    w_k: float = 1.0,
) -> SafeControlResult:
    """Apply the switching law: project onto the method's safe set when
    phi >= 0, otherwise pass the clamped reference through. The constraint
    and its clipped area are evaluated (and reported) either way."""
    if method not in _ASSEMBLERS:
        raise ValueError(f"unknown method {method!r}; expected one of {METHODS}")
    if method == "ommssa":
        constraint, alloc = ommssa_constraint(
            x, belief, goals, model, p, eps, round_up, k_max, w_k
        )
    else:
        constraint, alloc = _ASSEMBLERS[method](x, belief, goals, model, p, eps, round_up)
    phi_val = phi(x, p)
    area = safe_set_area(constraint, u_max)
    if phi_val >= 0.0:
        u, feasible = project_to_safe(u_ref, constraint, u_max)
        active = True
    else:
        u = np.clip(np.asarray(u_ref, dtype=float), -u_max, u_max)
        feasible = True
        active = False
    return SafeControlResult(
        u=u,
        active=active,
        constraint=constraint,
        allocation=alloc,
        area=area,
        feasible=feasible,
        phi=phi_val,
    )
