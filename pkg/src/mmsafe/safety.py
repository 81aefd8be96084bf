"""Safety index phi = d_min^2 - d^2 - k_phi * d_dot over the joint state,
its analytic gradients with respect to both agents, the half-space
constraint pieces L(x)/S(x), and the per-mode robustness radius."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _kernels
from .dynamics import DegenerateStateError, HumanModel, JointState, joint_mode_mean, robot_drift


@dataclass
class SafetyParams:
    d_min: float = 1.0   # minimum allowed inter-agent distance (m)
    k_phi: float = 1.0   # weight of the closing-rate term (s)
    eta0: float = 0.5    # constant decrease-rate margin; eta(phi) = -eta0

    def __post_init__(self):
        if self.d_min <= 0 or self.k_phi <= 0 or self.eta0 < 0:
            raise ValueError("SafetyParams require d_min > 0, k_phi > 0, eta0 >= 0")


@dataclass
class HalfspaceConstraint:
    """The safe-control half space {u : L u <= S}.

    L == 0 marks the degenerate cases: S >= 0 vacuous (every control safe),
    S < 0 infeasible.
    """

    l: np.ndarray  # (2,)
    s: float


def _terms(x: JointState, p: SafetyParams):
    d, ddot, grad_r, grad_h = _kernels.phi_terms(x.robot, x.human, p.k_phi)
    if d == 0.0:
        raise DegenerateStateError("agents coincide: phi is undefined at d = 0")
    return d, ddot, grad_r, grad_h


def phi(x: JointState, p: SafetyParams) -> float:
    """Safety index; phi <= 0 is the safe set."""
    d, ddot, _, _ = _terms(x, p)
    return p.d_min**2 - d * d - p.k_phi * ddot


def grad_phi_robot(x: JointState, p: SafetyParams) -> np.ndarray:
    """Row vector d(phi)/d(x_R)."""
    return _terms(x, p)[2]


def grad_phi_human(x: JointState, p: SafetyParams) -> np.ndarray:
    """Row vector d(phi)/d(x_H)."""
    return _terms(x, p)[3]


def grad_phi_joint(x: JointState, p: SafetyParams) -> np.ndarray:
    """Full gradient row [d(phi)/d(x_R), d(phi)/d(x_H)]."""
    _, _, grad_r, grad_h = _terms(x, p)
    return np.concatenate([grad_r, grad_h])


def constraint_row(x: JointState, p: SafetyParams) -> np.ndarray:
    """L(x) = grad(phi)' g(x); only the robot's (v_r, psi_r) rows couple."""
    return _terms(x, p)[2][2:].copy()


def support_radius(grad: np.ndarray, sigma: np.ndarray) -> float:
    """Support function of the 1-sigma ellipsoid along ``grad``.

    max { grad . delta : delta' Sigma^-1 delta <= 1 } = sqrt(grad' Sigma grad),
    valid for singular PSD Sigma as well (no inversion performed).
    """
    val = float(grad @ sigma @ grad)
    return float(np.sqrt(max(val, 0.0)))


def gamma_robust(
    x: JointState, theta: np.ndarray, model: HumanModel, p: SafetyParams
) -> float:
    """Worst-case 1-sigma excursion of grad(phi)' f around the mode mean."""
    _, _, _, grad_h = _terms(x, p)
    return support_radius(grad_h, model.sigma)


def mode_mu(
    x: JointState, theta: np.ndarray, k: float, model: HumanModel, p: SafetyParams
) -> float:
    """mu(x, theta, k) = grad(phi)' m(x, theta) + k * gamma(x, theta)."""
    _, _, grad_r, grad_h = _terms(x, p)
    drift = float(grad_r @ robot_drift(x.robot)) + float(
        grad_h @ joint_mode_mean(x, theta, model)[4:]
    )
    return drift + k * support_radius(grad_h, model.sigma)


def mode_bound(
    x: JointState, theta: np.ndarray, k: float, model: HumanModel, p: SafetyParams
) -> float:
    """Per-mode bound S_i = eta(phi) - mu(x, theta_i, k_i); S_i + mu_i = eta."""
    if k < 0:
        raise ValueError(f"mode_bound: k must be non-negative, got {k!r}")
    return -p.eta0 - mode_mu(x, theta, k, model, p)


@dataclass
class ModeTerms:
    """Per-state safety quantities shared by every constraint assembler."""

    phi: float
    d: float
    l: np.ndarray        # (2,) constraint row
    drift: np.ndarray    # (N,) grad(phi)' m(x, theta_i) per mode
    gamma: np.ndarray    # (N,) robustness radius per mode


def mode_terms(
    x: JointState, goals: np.ndarray, model: HumanModel, p: SafetyParams
) -> ModeTerms:
    """Evaluate phi, L and the per-mode (drift, gamma) pairs in one pass.

    This is the hot path of every controller: the gradients are computed
    once and reused across all N modes.
    """
    d, ddot, grad_r, grad_h = _terms(x, p)
    phi_val = p.d_min**2 - d * d - p.k_phi * ddot
    robot_part = grad_r[0] * x.robot[2] * np.cos(x.robot[3]) + grad_r[1] * x.robot[2] * np.sin(
        x.robot[3]
    )
    n = goals.shape[0]
    drift = np.empty(n)
    for i in range(n):
        mh = _kernels.joint_mean_deriv(
            x.as_vector(),
            np.zeros(2),
            np.ascontiguousarray(goals[i], dtype=float),
            model.gain,
            model.gamma_rep,
            model.d_floor,
        )[4:]
        drift[i] = robot_part + float(grad_h @ mh)
    gamma = np.full(n, support_radius(grad_h, model.sigma))
    return ModeTerms(phi=phi_val, d=d, l=grad_r[2:].copy(), drift=drift, gamma=gamma)
