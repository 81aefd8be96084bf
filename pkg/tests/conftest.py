import numpy as np
import pytest

from mmsafe.dynamics import GoalSet, HumanModel, JointState
from mmsafe.safety import SafetyParams


@pytest.fixture(scope="session")
def human_model() -> HumanModel:
    return HumanModel.from_weights()


@pytest.fixture(scope="session")
def quiet_model() -> HumanModel:
    """Noise-free, repulsion-free human."""
    return HumanModel.from_weights(sigma_diag=(0.0, 0.0, 0.0, 0.0), gamma_rep=0.0)


@pytest.fixture
def params() -> SafetyParams:
    return SafetyParams()


def random_joint_state(rng: np.random.Generator, min_d: float = 0.1) -> JointState:
    """Random non-degenerate joint state: positions in a 10 m box,
    velocities up to 3 m/s, any heading, inter-agent distance >= min_d."""
    while True:
        robot = np.array(
            [
                rng.uniform(-5, 5),
                rng.uniform(-5, 5),
                rng.uniform(-3, 3),
                rng.uniform(-np.pi, np.pi),
            ]
        )
        human = np.array(
            [
                rng.uniform(-5, 5),
                rng.uniform(-3, 3),
                rng.uniform(-5, 5),
                rng.uniform(-3, 3),
            ]
        )
        x = JointState(robot=robot, human=human)
        if x.distance() >= min_d:
            return x


def random_goal_set(rng: np.random.Generator, n: int = 4) -> GoalSet:
    return GoalSet.from_positions(rng.uniform(-5, 5, (n, 2)))
