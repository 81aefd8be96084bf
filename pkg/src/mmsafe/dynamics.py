"""Plant models: deterministic unicycle robot, noisy double-integrator human
driven by LQR-plus-repulsion, and the assembled joint multimodal system
(per-mode mean drift and covariance, stochastic time stepping).

State layouts:
    robot  [r_x, r_y, v_r, psi_r]
    human  [h_x, v_x, h_y, v_y]   (interleaved position/velocity per axis)
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .numerics import IntegrationError, solve_care_gain

# Human LTI matrices and the position-selector matrices for both agents.
HUMAN_A = np.array(
    [
        [0.0, 1.0, 0.0, 0.0],
        [0.0, 0.0, 0.0, 0.0],
        [0.0, 0.0, 0.0, 1.0],
        [0.0, 0.0, 0.0, 0.0],
    ]
)
HUMAN_B = np.array(
    [
        [0.0, 0.0],
        [1.0, 0.0],
        [0.0, 0.0],
        [0.0, 1.0],
    ]
)
C_H = np.array([[1.0, 0.0, 0.0, 0.0], [0.0, 0.0, 1.0, 0.0]])
C_R = np.array([[1.0, 0.0, 0.0, 0.0], [0.0, 1.0, 0.0, 0.0]])

ROBOT_INPUT = np.array(
    [
        [0.0, 0.0],
        [0.0, 0.0],
        [1.0, 0.0],
        [0.0, 1.0],
    ]
)


class DegenerateStateError(RuntimeError):
    """Agents exactly coincide (d = 0); the safety index is undefined."""


def _check_finite(name: str, arr: np.ndarray) -> np.ndarray:
    arr = np.asarray(arr, dtype=float)
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite entries: {arr!r}")
    return arr


@dataclass
class JointState:
    """Concatenated robot and human state; the x of all safety expressions."""

    robot: np.ndarray
    human: np.ndarray

    def __post_init__(self):
        self.robot = _check_finite("robot state", self.robot).copy()
        self.human = _check_finite("human state", self.human).copy()
        if self.robot.shape != (4,) or self.human.shape != (4,):
            raise ValueError("JointState expects two length-4 state vectors")

    def as_vector(self) -> np.ndarray:
        return np.concatenate([self.robot, self.human])

    @classmethod
    def from_vector(cls, x: np.ndarray) -> "JointState":
        x = np.asarray(x, dtype=float)
        return cls(robot=x[:4], human=x[4:])

    def distance(self) -> float:
        """Cartesian inter-agent distance ||C_R x_R - C_H x_H||."""
        return float(
            np.hypot(self.robot[0] - self.human[0], self.robot[1] - self.human[2])
        )


@dataclass
class GoalSet:
    """Candidate human intentions: full-state targets with zero velocity."""

    states: np.ndarray  # (N, 4)

    def __post_init__(self):
        self.states = _check_finite("goal states", self.states)
        if self.states.ndim != 2 or self.states.shape[1] != 4 or self.states.shape[0] < 1:
            raise ValueError("GoalSet expects an (N, 4) array with N >= 1")

    @classmethod
    def from_positions(cls, positions: np.ndarray) -> "GoalSet":
        positions = np.asarray(positions, dtype=float)
        states = np.zeros((positions.shape[0], 4))
        states[:, 0] = positions[:, 0]
        states[:, 2] = positions[:, 1]
        return cls(states=states)

    @property
    def n(self) -> int:
        return self.states.shape[0]

    def positions(self) -> np.ndarray:
        return self.states[:, [0, 2]]


@dataclass
class HumanModel:
    """LTI human with LQR goal pursuit, inverse-square robot repulsion and
    Gaussian process noise on the velocity states."""

    gain: np.ndarray                 # (2, 4) LQR gain for (HUMAN_A, HUMAN_B)
    q: np.ndarray                    # (4, 4) LQR state weight
    r: np.ndarray                    # (2, 2) LQR control weight
    sigma: np.ndarray                # (4, 4) process-noise covariance, PSD
    gamma_rep: float = 2.0
    d_floor: float = 1e-3
    a: np.ndarray = field(default_factory=lambda: HUMAN_A.copy())
    b: np.ndarray = field(default_factory=lambda: HUMAN_B.copy())
    noise_factor: np.ndarray = field(init=False)

    def __post_init__(self):
        self.sigma = _check_finite("sigma", self.sigma)
        if not np.allclose(self.sigma, self.sigma.T):
            raise ValueError("process-noise covariance must be symmetric")
        w, v = np.linalg.eigh(self.sigma)
        if w.min() < -1e-12:
            raise ValueError("process-noise covariance must be PSD")
        self.noise_factor = v @ np.diag(np.sqrt(np.clip(w, 0.0, None)))
        cl = np.linalg.eigvals(self.a - self.b @ self.gain)
        if cl.real.max() >= 0.0:
            raise ValueError("human gain does not stabilize the LTI model")

    @classmethod
    def from_weights(
        cls,
        q_diag=(1.0, 0.1, 1.0, 0.1),
        r_diag=(0.1, 0.1),
        sigma_diag=(0.0, 0.1, 0.0, 0.1),
        gamma_rep: float = 2.0,
        d_floor: float = 1e-3,
    ) -> "HumanModel":
        q = np.diag(np.asarray(q_diag, dtype=float))
        r = np.diag(np.asarray(r_diag, dtype=float))
        gain = solve_care_gain(HUMAN_A, HUMAN_B, q, r)
        return cls(
            gain=gain,
            q=q,
            r=r,
            sigma=np.diag(np.asarray(sigma_diag, dtype=float)),
            gamma_rep=float(gamma_rep),
            d_floor=float(d_floor),
        )


def robot_drift(x_r: np.ndarray) -> np.ndarray:
    """Unicycle drift [v cos(psi), v sin(psi), 0, 0]."""
    return np.array(
        [x_r[2] * np.cos(x_r[3]), x_r[2] * np.sin(x_r[3]), 0.0, 0.0]
    )


def robot_input_matrix(x_r: np.ndarray) -> np.ndarray:
    """Constant input coupling: controls act on (v_r, psi_r) directly."""
    return ROBOT_INPUT.copy()


def human_control(
    x_h: np.ndarray, x_r: np.ndarray, theta: np.ndarray, model: HumanModel
) -> np.ndarray:
    """u_H = -K (x_H - theta) + gamma/d^2 (C_H x_H - C_R x_R).

    The repulsion distance is clamped at model.d_floor rather than raising,
    so pathological near-coincident samples keep integrating.
    """
    return _kernels.human_control(
        np.ascontiguousarray(x_h, dtype=float),
        np.ascontiguousarray(x_r, dtype=float),
        np.ascontiguousarray(theta, dtype=float),
        model.gain,
        model.gamma_rep,
        model.d_floor,
    )


def human_mean_drift(
    x_h: np.ndarray, x_r: np.ndarray, theta: np.ndarray, model: HumanModel
) -> np.ndarray:
    """Noise-free human dynamics A x_H + B u_H."""
    return HUMAN_A @ x_h + HUMAN_B @ human_control(x_h, x_r, theta, model)


def joint_mode_mean(x: JointState, theta: np.ndarray, model: HumanModel) -> np.ndarray:
    """Mean drift of the joint system under one intention hypothesis.

    The robot block is theta-independent (its dynamics are deterministic).
    """
    return _kernels.joint_mean_deriv(
        x.as_vector(),
        np.zeros(2),
        np.ascontiguousarray(theta, dtype=float),
        model.gain,
        model.gamma_rep,
        model.d_floor,
    )


def joint_mode_covariance(x: JointState, theta: np.ndarray, model: HumanModel) -> np.ndarray:
    """Block-diagonal joint covariance: zero robot block over sigma_H."""
    out = np.zeros((8, 8))
    out[4:, 4:] = model.sigma
    return out


def step_joint(
    x: JointState,
    u_r: np.ndarray,
    theta_true: np.ndarray,
    model: HumanModel,
    dt: float,
    rng: np.random.Generator,
) -> JointState:
    """Advance the joint state one step.

    RK4 on the mean dynamics with u_r held constant, then an
    Euler-Maruyama noise increment N(0, sigma_H * dt) on the human block.
    Four standard normals are always drawn so the noise stream stays
    aligned across configurations sharing a seed.
    """
    if dt <= 0.0:
        raise ValueError(f"step_joint: dt must be positive, got {dt!r}")
    y = _kernels.rk4_joint_mean(
        x.as_vector(),
        np.ascontiguousarray(u_r, dtype=float),
        np.ascontiguousarray(theta_true, dtype=float),
        model.gain,
        model.gamma_rep,
        model.d_floor,
        dt,
    )
    noise = model.noise_factor @ rng.standard_normal(4)
    y[4:] += np.sqrt(dt) * noise
    if not np.all(np.isfinite(y)):
        raise IntegrationError("step_joint produced a non-finite state")
    return JointState.from_vector(y)
