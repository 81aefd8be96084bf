"""Scenario sampling, rollout execution (plant + inference + controller
loop), goal lifecycle, per-rollout metrics, and the seed-matched batch
protocol used for the controller comparison."""

from __future__ import annotations

import hashlib
import json
import logging
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from typing import Optional

import numpy as np

from .controllers import METHODS, nominal_control, safe_control
from .dynamics import (
    DegenerateStateError,
    GoalSet,
    HumanModel,
    JointState,
    human_control,
    step_joint,
)
from .inference import BoltzmannModel, bayes_update
from .numerics import IntegrationError
from .safety import SafetyParams


class ConfigError(ValueError):
    """Invalid or unreadable configuration; maps to CLI exit code 2."""


@dataclass
class ScenarioConfig:
    """Every knob of a rollout. Defaults reproduce the benchmark protocol;
    all of them may be overridden from the config file or CLI flags."""

    seed: int = 0
    method: str = "ommssa"
    horizon: float = 25.0
    t_s: float = 0.1
    n_goals: int = 4
    arena_half_width: float = 5.0
    r_reach: float = 0.5
    d_min: float = 1.0
    eps: float = 0.003
    u_max: float = 30.0
    k_phi: float = 1.0
    eta0: float = 0.5
    q_diag: tuple = (1.0, 0.1, 1.0, 0.1)
    r_diag: tuple = (0.1, 0.1)
    gamma_rep: float = 2.0
    sigma_diag: tuple = (0.0, 0.1, 0.0, 0.1)
    d_floor: float = 1e-3
    beta: float = 0.5
    k_max: float = 6.0
    w_k: float = 1.0
    k_round_up: bool = True
    k_v: float = 1.0
    k_psi: float = 2.0

    def __post_init__(self):
        if self.t_s <= 0:
            raise ConfigError(f"t_s must be positive, got {self.t_s!r}")
        if self.horizon < self.t_s:
            raise ConfigError("horizon must be at least one sampling period")
        if not (0.0 < self.eps < 0.5):
            raise ConfigError(f"eps must lie in (0, 0.5), got {self.eps!r}")
        if self.d_min <= 0:
            raise ConfigError(f"d_min must be positive, got {self.d_min!r}")
        if self.method not in METHODS:
            raise ConfigError(
                f"unknown method {self.method!r}; valid methods: {', '.join(METHODS)}"
            )
        if self.n_goals < 1:
            raise ConfigError("n_goals must be >= 1")

    @property
    def n_steps(self) -> int:
        return math.ceil(self.horizon / self.t_s)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["q_diag"] = list(d["q_diag"])
        d["r_diag"] = list(d["r_diag"])
        d["sigma_diag"] = list(d["sigma_diag"])
        return d

    def fingerprint(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]

    def build_human_model(self) -> HumanModel:
        return HumanModel.from_weights(
            q_diag=self.q_diag,
            r_diag=self.r_diag,
            sigma_diag=self.sigma_diag,
            gamma_rep=self.gamma_rep,
            d_floor=self.d_floor,
        )

    def build_safety_params(self) -> SafetyParams:
        return SafetyParams(d_min=self.d_min, k_phi=self.k_phi, eta0=self.eta0)


_FIELD_SECTIONS = {
    "sim": ("horizon", "t_s", "n_goals", "arena_half_width", "r_reach"),
    "safety": ("d_min", "eps", "u_max", "k_phi", "eta0"),
    "human": ("q_diag", "r_diag", "gamma_rep", "sigma_diag", "d_floor"),
    "inference": ("beta",),
    "allocation": ("k_max", "w_k", "k_round_up"),
    "nominal": ("k_v", "k_psi"),
}
_TOP_LEVEL = ("seed", "method")
_SEQ_FIELDS = ("q_diag", "r_diag", "sigma_diag")


def config_from_mapping(mapping: dict) -> ScenarioConfig:
    """Build a ScenarioConfig from a (possibly nested) mapping, rejecting
    unknown keys by name."""
    if not isinstance(mapping, dict):
        raise ConfigError("config root must be a mapping")
    flat: dict = {}
    known_flat = {f for fields in _FIELD_SECTIONS.values() for f in fields}
    for key, value in mapping.items():
        if key in _FIELD_SECTIONS:
            if not isinstance(value, dict):
                raise ConfigError(f"config section {key!r} must be a mapping")
            for sub, subval in value.items():
                if sub not in _FIELD_SECTIONS[key]:
                    raise ConfigError(f"unknown config key {key}.{sub!r}")
                flat[sub] = subval
        elif key in _TOP_LEVEL or key in known_flat:
            flat[key] = value
        else:
            raise ConfigError(f"unknown config key {key!r}")
    for name in _SEQ_FIELDS:
        if name in flat:
            try:
                flat[name] = tuple(float(v) for v in flat[name])
            except (TypeError, ValueError) as exc:
                raise ConfigError(f"config key {name!r} must be a list of numbers") from exc
    try:
        return ScenarioConfig(**flat)
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc


def config_to_nested(config: ScenarioConfig) -> dict:
    flat = config.to_dict()
    out: dict = {k: flat[k] for k in _TOP_LEVEL}
    for section, names in _FIELD_SECTIONS.items():
        out[section] = {n: flat[n] for n in names}
    return out


@dataclass
class Scenario:
    x0: JointState
    goals: GoalSet
    robot_goal: np.ndarray   # (2,)
    true_goal: int


@dataclass
class StepRecord:
    t: float
    state: JointState
    belief: np.ndarray
    u_ref: np.ndarray
    u: np.ndarray
    phi: float
    d: float
    active: bool
    l: np.ndarray
    s: float
    area: float
    k: np.ndarray
    true_goal: int
    violation: bool
    feasible: bool


@dataclass
class RolloutLog:
    config: ScenarioConfig
    scenario: Scenario
    records: list
    goals_reached: int
    aborted: Optional[str] = None
    aborted_step: Optional[int] = None


@dataclass
class RolloutMetrics:
    violations: int
    goals: int
    area_mean: float
    area_active_mean: float
    aborted: bool


@dataclass
class BatchMetrics:
    method: str
    n_rollouts: int
    mean_violations: float
    mean_goals: float
    mean_area: float
    per_rollout: dict
    aborts: int
    config_fingerprint: str


def _rng_stream(seed: int, stream: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=(stream,)))


def sample_scenario(seed: int, config: ScenarioConfig) -> Scenario:
    """Rejection-sample initial conditions: agents at least 2 d_min apart,
    goals pairwise separated by at least 0.5 m, everything inside the
    arena, all zero initial velocities. Deterministic in the seed."""
    rng = _rng_stream(seed, 0)
    half = config.arena_half_width
    for _ in range(1000):
        r_pos = rng.uniform(-half, half, 2)
        h_pos = rng.uniform(-half, half, 2)
        if np.hypot(*(r_pos - h_pos)) < 2.0 * config.d_min:
            continue
        goals = rng.uniform(-half, half, (config.n_goals, 2))
        dists = np.linalg.norm(goals[:, None, :] - goals[None, :, :], axis=-1)
        iu = np.triu_indices(config.n_goals, k=1)
        if config.n_goals > 1 and dists[iu].min() < 0.5:
            continue
        heading = rng.uniform(-np.pi, np.pi)
        robot = np.array([r_pos[0], r_pos[1], 0.0, heading])
        human = np.array([h_pos[0], 0.0, h_pos[1], 0.0])
        true_goal = int(rng.integers(config.n_goals))
        robot_goal = rng.uniform(-half, half, 2)
        return Scenario(
            x0=JointState(robot=robot, human=human),
            goals=GoalSet.from_positions(goals),
            robot_goal=robot_goal,
            true_goal=true_goal,
        )
    raise ConfigError("sample_scenario: rejection sampling exceeded 1000 attempts")


def run_rollout(config: ScenarioConfig, scenario: Optional[Scenario] = None) -> RolloutLog:
    """Execute one closed-loop rollout.

    Per step: Bayes update from the previous step's observation, nominal
    control, safety filtering by the configured method, RK4+noise stepping,
    then goal lifecycle for both agents (reach radius r_reach; the human
    redraws its intention from the goal set, the robot gets a fresh goal
    anywhere in the arena). Bit-reproducible given the config.
    """
    model = config.build_human_model()
    params = config.build_safety_params()
    bmodel = BoltzmannModel.build(model, config.t_s, config.beta)
    if scenario is None:
        scenario = sample_scenario(config.seed, config)

    noise_rng = _rng_stream(config.seed, 1)
    hgoal_rng = _rng_stream(config.seed, 2)
    rgoal_rng = _rng_stream(config.seed, 3)

    x = scenario.x0
    goals = scenario.goals
    true_goal = scenario.true_goal
    robot_goal = np.asarray(scenario.robot_goal, dtype=float).copy()
    belief = np.full(goals.n, 1.0 / goals.n)
    prev_obs: Optional[tuple] = None

    records: list = []
    goals_reached = 0
    aborted = None
    aborted_step = None
    half = config.arena_half_width

    for n in range(config.n_steps):
        t = n * config.t_s
        if prev_obs is not None:
            belief = bayes_update(belief, prev_obs[0], prev_obs[1], goals.states, bmodel)
        u_ref = nominal_control(x.robot, robot_goal, config.k_v, config.k_psi)
        try:
            res = safe_control(
                x,
                belief,
                goals.states,
                u_ref,
                config.method,
                model,
                params,
                config.eps,
                config.u_max,
                round_up=config.k_round_up,
                k_max=config.k_max,
                w_k=config.w_k,
            )
        except DegenerateStateError as exc:
            aborted, aborted_step = str(exc), n
            break
        theta_true = goals.states[true_goal]
        u_h_obs = human_control(x.human, x.robot, theta_true, model)
        d = x.distance()
        records.append(
            StepRecord(
                t=t,
                state=x,
                belief=belief.copy(),
                u_ref=np.asarray(u_ref, dtype=float),
                u=res.u,
                phi=res.phi,
                d=d,
                active=res.active,
                l=res.constraint.l.copy(),
                s=res.constraint.s,
                area=res.area,
                k=res.allocation.k.copy(),
                true_goal=true_goal,
                violation=d < config.d_min,
                feasible=res.feasible,
            )
        )
        try:
            x_next = step_joint(x, res.u, theta_true, model, config.t_s, noise_rng)
        except IntegrationError as exc:
            aborted, aborted_step = str(exc), n
            break
        prev_obs = (x.human.copy(), u_h_obs)
        x = x_next

        # goal lifecycle: the human redraws its intention on reach, the
        # robot scores a reach event and receives a fresh goal
        h_pos = np.array([x.human[0], x.human[2]])
        if np.hypot(*(h_pos - goals.positions()[true_goal])) < config.r_reach:
            true_goal = int(hgoal_rng.integers(goals.n))
        r_pos = x.robot[:2]
        if np.hypot(*(r_pos - robot_goal)) < config.r_reach:
            goals_reached += 1
            robot_goal = rgoal_rng.uniform(-half, half, 2)

    return RolloutLog(
        config=config,
        scenario=scenario,
        records=records,
        goals_reached=goals_reached,
        aborted=aborted,
        aborted_step=aborted_step,
    )


def compute_metrics(log: RolloutLog) -> RolloutMetrics:
    """violations = steps with d < d_min; goals = robot reach events;
    area = per-step mean of the clipped safe-set area (and the mean over
    safety-active steps separately)."""
    violations = sum(1 for r in log.records if r.violation)
    areas = [r.area for r in log.records]
    active_areas = [r.area for r in log.records if r.active]
    return RolloutMetrics(
        violations=violations,
        goals=log.goals_reached,
        area_mean=float(np.mean(areas)) if areas else float("nan"),
        area_active_mean=float(np.mean(active_areas)) if active_areas else float("nan"),
        aborted=log.aborted is not None,
    )


def _batch_worker(config: ScenarioConfig) -> RolloutMetrics:
    return compute_metrics(run_rollout(config))


def _batch_threads() -> int:
    env = os.environ.get("MMSAFE_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise ConfigError(f"MMSAFE_THREADS must be an integer, got {env!r}") from None
    return os.cpu_count() or 1


def run_batch(
    base_config: ScenarioConfig, n_rollouts: int, methods: tuple = METHODS
) -> dict:
    """Seed-matched batch: rollout i of every method uses seed_base + i, so
    all methods replay identical initial conditions and human noise
    streams. Aborted rollouts are excluded from the means but reported.
    Returns {method: BatchMetrics}, deterministic in the base config.
    """
    if n_rollouts < 1:
        raise ConfigError("n_rollouts must be >= 1")
    for m in methods:
        if m not in METHODS:
            raise ConfigError(f"unknown method {m!r}; valid methods: {', '.join(METHODS)}")
    seeds = [base_config.seed + i for i in range(n_rollouts)]
    jobs = [
        replace(base_config, seed=s, method=m) for m in methods for s in seeds
    ]
    workers = min(_batch_threads(), len(jobs))
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_batch_worker, jobs, chunksize=4))
    else:
        results = [_batch_worker(job) for job in jobs]

    out: dict = {}
    for mi, method in enumerate(methods):
        chunk = results[mi * n_rollouts : (mi + 1) * n_rollouts]
        kept = [r for r in chunk if not r.aborted]
        aborts = sum(1 for r in chunk if r.aborted)
        if aborts > 0.05 * n_rollouts:
            logging.getLogger(__name__).warning(
                "run_batch: %d/%d rollouts aborted for method %s", aborts, n_rollouts, method
            )
        out[method] = BatchMetrics(
            method=method,
            n_rollouts=n_rollouts,
            mean_violations=float(np.mean([r.violations for r in kept])) if kept else float("nan"),
            mean_goals=float(np.mean([r.goals for r in kept])) if kept else float("nan"),
            mean_area=float(np.mean([r.area_mean for r in kept])) if kept else float("nan"),
            per_rollout={
                "seeds": seeds,
                "violations": [r.violations for r in chunk],
                "goals": [r.goals for r in chunk],
                "area": [r.area_mean for r in chunk],
                "area_active": [r.area_active_mean for r in chunk],
                "aborted": [r.aborted for r in chunk],
            },
            aborts=aborts,
            config_fingerprint=base_config.fingerprint(),
        )
    return out


def run_inference_demo(config: ScenarioConfig, goals: Optional[GoalSet] = None,
                       true_goal: int = 0) -> tuple:
    """No-interference rollout for the belief-convergence figure: the robot
    is parked far away and repulsion is disabled, so the observed controls
    are exactly the human's goal-seeking feedback. Returns (times, belief
    history array, goal set)."""
    demo_cfg = replace(config, gamma_rep=0.0)
    model = demo_cfg.build_human_model()
    bmodel = BoltzmannModel.build(model, demo_cfg.t_s, demo_cfg.beta)
    if goals is None:
        # two nearly-aligned goals ahead of the human plus one behind it,
        # so the filter has to separate close hypotheses over many steps
        goals = GoalSet.from_positions(np.array([[4.0, 0.26], [4.0, -0.26], [-2.0, 0.0]]))
    robot = np.array([100.0, 100.0, 0.0, 0.0])
    x = JointState(robot=robot, human=np.zeros(4))
    noise_rng = _rng_stream(demo_cfg.seed, 1)
    belief = np.full(goals.n, 1.0 / goals.n)
    theta = goals.states[true_goal]

    times = [0.0]
    history = [belief.copy()]
    for n in range(demo_cfg.n_steps):
        xh_obs = x.human.copy()
        u_h = human_control(x.human, x.robot, theta, model)
        x = step_joint(x, np.zeros(2), theta, model, demo_cfg.t_s, noise_rng)
        belief = bayes_update(belief, xh_obs, u_h, goals.states, bmodel)
        times.append((n + 1) * demo_cfg.t_s)
        history.append(belief.copy())
    return np.array(times), np.array(history), goals
