import math

import numpy as np
import pytest

from mmsafe import controllers as ctl
from mmsafe.allocation import chance_level, select_k
from mmsafe.dynamics import GoalSet, HumanModel, JointState
from mmsafe.safety import HalfspaceConstraint, SafetyParams, phi

from conftest import random_goal_set, random_joint_state


def grid_project_oracle(u_ref, c, u_max, h=0.01):
    """Brute-force projection: scan the 0.01 grid over the box for the
    feasible point closest to u_ref. Chunked to bound memory."""
    axis = np.arange(-u_max, u_max + h / 2, h)
    best = None
    best_d = np.inf
    for lo in range(0, axis.size, 500):
        u1 = axis[lo : lo + 500][:, None]
        u2 = axis[None, :]
        feas = c.l[0] * u1 + c.l[1] * u2 <= c.s
        if not feas.any():
            continue
        d2 = (u1 - u_ref[0]) ** 2 + (u2 - u_ref[1]) ** 2
        d2 = np.where(feas, d2, np.inf)
        idx = np.unravel_index(np.argmin(d2), d2.shape)
        if d2[idx] < best_d:
            best_d = d2[idx]
            best = np.array([u1[idx[0], 0], axis[idx[1]]])
    return best


class TestNominalControl:
    def test_zero_at_goal(self):
        u = ctl.nominal_control(np.array([1.0, 2.0, 0.0, 0.5]), np.array([1.0, 2.0]))
        assert np.array_equal(u, np.zeros(2))

    def test_goal_dead_ahead(self):
        # heading already points at the goal: no steering, accelerate
        x_r = np.array([0.0, 0.0, 0.5, 0.0])
        u = ctl.nominal_control(x_r, np.array([3.0, 0.0]), k_v=1.0, k_psi=2.0)
        assert u[1] == pytest.approx(0.0, abs=1e-12)
        assert u[0] == pytest.approx(3.0 - 0.5, abs=1e-12)  # -(dx cos) - k_v v

    def test_wrap_angle_range(self):
        for a in np.linspace(-15, 15, 101):
            w = ctl.wrap_angle(a)
            assert -math.pi < w <= math.pi
            assert abs(math.sin(w) - math.sin(a)) < 1e-12

    def test_closed_loop_convergence(self):
        # robot reaches within 0.2 m of the goal from random starts in 25 s
        from mmsafe.dynamics import ROBOT_INPUT, robot_drift

        rng = np.random.default_rng(40)
        for _ in range(20):
            x = np.array(
                [rng.uniform(-5, 5), rng.uniform(-5, 5), 0.0, rng.uniform(-np.pi, np.pi)]
            )
            goal = rng.uniform(-5, 5, 2)
            dt = 0.1
            for _ in range(250):
                u = np.clip(ctl.nominal_control(x, goal), -30, 30)
                # unicycle RK4 with held input
                def f(y):
                    return robot_drift(y) + ROBOT_INPUT @ u

                k1 = f(x)
                k2 = f(x + 0.5 * dt * k1)
                k3 = f(x + 0.5 * dt * k2)
                k4 = f(x + dt * k3)
                x = x + dt / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
                if np.hypot(*(x[:2] - goal)) < 0.2:
                    break
            assert np.hypot(*(x[:2] - goal)) < 0.2


class TestProjectToSafe:
    def test_identity_when_feasible(self):
        c = HalfspaceConstraint(l=np.array([1.0, 0.0]), s=5.0)
        u, feasible = ctl.project_to_safe(np.array([1.0, 2.0]), c, 30.0)
        assert feasible and np.array_equal(u, [1.0, 2.0])

    def test_face_projection(self):
        c = HalfspaceConstraint(l=np.array([1.0, 0.0]), s=-1.0)
        u, feasible = ctl.project_to_safe(np.zeros(2), c, 30.0)
        assert feasible
        assert np.allclose(u, [-1.0, 0.0], atol=1e-12)

    def test_empty_set_fallback(self):
        # halfspace excludes the whole box: maximum effort against L
        c = HalfspaceConstraint(l=np.array([1.0, 1.0]), s=-100.0)
        u, feasible = ctl.project_to_safe(np.zeros(2), c, 30.0)
        assert not feasible
        assert np.array_equal(u, [-30.0, -30.0])

    def test_grid_oracle(self):
        # optimality against brute force: the returned point is feasible,
        # no feasible grid point beats it, and it beats the best grid point
        # by at most the grid resolution slack
        rng = np.random.default_rng(41)
        for _ in range(100):
            l = rng.normal(size=2)
            s = rng.normal(scale=20.0)
            c = HalfspaceConstraint(l=l, s=s)
            u_ref = rng.uniform(-45, 45, 2)
            u, feasible = ctl.project_to_safe(u_ref, c, 30.0)
            oracle = grid_project_oracle(u_ref, c, 30.0)
            if oracle is None:
                assert not feasible
                continue
            assert feasible
            assert float(l @ u) <= s + 1e-9
            assert np.max(np.abs(u)) <= 30.0 + 1e-12
            d_exact = np.linalg.norm(u - u_ref)
            d_grid = np.linalg.norm(oracle - u_ref)
            assert d_exact <= d_grid + 1e-9           # no grid point is closer
            assert d_grid <= d_exact + 0.02           # and the gap is grid-sized


class TestSafeSetArea:
    def test_vacuous_full_box(self):
        c = HalfspaceConstraint(l=np.zeros(2), s=1.0)
        assert ctl.safe_set_area(c, 30.0) == 3600.0

    def test_contains_box(self):
        c = HalfspaceConstraint(l=np.array([1.0, 0.0]), s=100.0)
        assert ctl.safe_set_area(c, 30.0) == 3600.0

    def test_half_box(self):
        c = HalfspaceConstraint(l=np.array([1.0, 0.0]), s=0.0)
        assert ctl.safe_set_area(c, 30.0) == pytest.approx(1800.0, abs=1e-9)

    def test_empty(self):
        c = HalfspaceConstraint(l=np.array([1.0, 0.0]), s=-100.0)
        assert ctl.safe_set_area(c, 30.0) == 0.0

    def test_monte_carlo_membership(self):
        rng = np.random.default_rng(42)
        for _ in range(10):
            l = rng.normal(size=2)
            s = rng.normal(scale=15.0)
            c = HalfspaceConstraint(l=l, s=s)
            area = ctl.safe_set_area(c, 30.0)
            pts = rng.uniform(-30, 30, (1_000_000, 2))
            frac = np.mean(pts @ l <= s)
            mc = frac * 3600.0
            assert abs(area - mc) <= 0.01 * 3600.0


def _constraint_inputs(seed=50, n_goals=4):
    rng = np.random.default_rng(seed)
    x = random_joint_state(rng, min_d=1.0)
    goals = random_goal_set(rng, n_goals)
    belief = rng.dirichlet(np.ones(n_goals))
    return x, goals, belief


class TestConstraintAssemblers:
    def test_unimodal_sea_equals_nmmssa(self, human_model, params):
        x, goals, _ = _constraint_inputs(n_goals=1)
        belief = np.array([1.0])
        c_sea, a_sea = ctl.sea_constraint(x, belief, goals.states, human_model, params, 0.003)
        c_n, a_n = ctl.nmmssa_constraint(x, belief, goals.states, human_model, params, 0.003)
        assert np.array_equal(c_sea.l, c_n.l)
        assert c_sea.s == c_n.s
        assert np.array_equal(a_sea.k, a_n.k)

    def test_sea_uses_argmax_mode(self, human_model, params):
        x, goals, _ = _constraint_inputs(seed=51)
        belief = np.array([0.6, 0.4, 0.0, 0.0])
        c, alloc = ctl.sea_constraint(x, belief, goals.states, human_model, params, 0.003)
        from mmsafe.safety import mode_bound

        k = select_k(0.003, round_up=True)
        assert alloc.k[0] == k and np.all(alloc.k[1:] == 0.0)
        assert c.s == pytest.approx(
            mode_bound(x, goals.states[0], k, human_model, params), abs=1e-9
        )

    def test_parallel_constraints(self, human_model, params):
        # all three methods share L at a fixed state
        x, goals, belief = _constraint_inputs(seed=52)
        cs = [
            f(x, belief, goals.states, human_model, params, 0.003)[0]
            for f in (ctl.sea_constraint, ctl.nmmssa_constraint, ctl.ommssa_constraint)
        ]
        for c in cs[1:]:
            assert np.array_equal(c.l, cs[0].l)

    def test_nmmssa_is_min_over_modes(self, human_model, params):
        from mmsafe.safety import mode_bound

        x, goals, belief = _constraint_inputs(seed=53)
        c, alloc = ctl.nmmssa_constraint(x, belief, goals.states, human_model, params, 0.003)
        bounds = [
            mode_bound(x, goals.states[i], alloc.k[i], human_model, params)
            for i in range(goals.n)
        ]
        assert c.s == pytest.approx(min(bounds), abs=1e-9)

    def test_nmmssa_not_less_conservative_than_sea(self, human_model, params):
        # when SEA's chosen mode attains the N-MMSSA min (same k), the
        # extra modes can only tighten the bound
        rng = np.random.default_rng(54)
        hits = 0
        for seed in range(200):
            x, goals, belief = _constraint_inputs(seed=100 + seed)
            c_sea, _ = ctl.sea_constraint(x, belief, goals.states, human_model, params, 0.003)
            c_n, _ = ctl.nmmssa_constraint(x, belief, goals.states, human_model, params, 0.003)
            assert c_n.s <= c_sea.s + 1e-9
            hits += 1
        assert hits == 200

    def test_tie_breaks_to_lowest_index(self, human_model, params):
        x, goals, _ = _constraint_inputs(seed=55)
        belief = np.array([0.5, 0.5, 0.0, 0.0])
        _, alloc = ctl.sea_constraint(x, belief, goals.states, human_model, params, 0.003)
        assert alloc.k[0] > 0 and alloc.k[1] == 0.0

    def test_identical_modes_tie(self, human_model, params):
        x, _, _ = _constraint_inputs(seed=56)
        goals = np.tile(np.array([2.0, 0.0, 1.0, 0.0]), (2, 1))
        belief = np.array([0.5, 0.5])
        c, alloc = ctl.nmmssa_constraint(x, belief, goals, human_model, params, 0.003)
        from mmsafe.safety import mode_bound

        s0 = mode_bound(x, goals[0], alloc.k[0], human_model, params)
        assert c.s == pytest.approx(s0, abs=1e-9)

    def test_sea_least_conservative_on_crafted_bimodal(self, human_model, params):
        # mode 1 (likelier) pulls the human away from the robot, mode 2
        # sends it straight through: SEA ignores mode 2 entirely and ends
        # up with the loosest bound of the three
        x = JointState(
            robot=np.array([2.0, 0.0, -0.5, 0.0]),
            human=np.array([0.0, 0.5, 0.0, 0.0]),
        )
        goals = GoalSet.from_positions(np.array([[-6.0, 0.0], [6.0, 0.0]]))
        belief = np.array([0.6, 0.4])
        c_sea, _ = ctl.sea_constraint(x, belief, goals.states, human_model, params, 0.003)
        c_n, _ = ctl.nmmssa_constraint(x, belief, goals.states, human_model, params, 0.003)
        c_o, _ = ctl.ommssa_constraint(x, belief, goals.states, human_model, params, 0.003)
        assert c_sea.s > c_n.s
        assert c_sea.s > c_o.s

    def test_ommssa_average_bound_dominates_naive(self, human_model, params):
        # spread balancing raises the binding minimum on average
        diffs = []
        for seed in range(500):
            x, goals, belief = _constraint_inputs(seed=1000 + seed)
            c_n, _ = ctl.nmmssa_constraint(x, belief, goals.states, human_model, params, 0.003)
            c_o, _ = ctl.ommssa_constraint(x, belief, goals.states, human_model, params, 0.003)
            diffs.append(c_o.s - c_n.s)
        assert np.mean(diffs) > 0.0

    def test_ommssa_feasibility_always(self, human_model, params):
        for seed in range(50):
            x, goals, belief = _constraint_inputs(seed=2000 + seed)
            _, alloc = ctl.ommssa_constraint(x, belief, goals.states, human_model, params, 0.003)
            assert alloc.feasibility_slack >= -1e-8
            assert chance_level(belief, alloc.k) >= 1 - 0.003 - 1e-8


class TestSafeControl:
    def test_inactive_far_apart(self, human_model, params):
        x = JointState(robot=np.array([5.0, 5.0, 0.0, 0.0]), human=np.zeros(4))
        goals = GoalSet.from_positions(np.array([[1.0, 1.0]]))
        res = ctl.safe_control(
            x, np.array([1.0]), goals.states, np.array([2.0, 1.0]),
            "nmmssa", human_model, params, 0.003, 30.0,
        )
        assert not res.active
        assert np.array_equal(res.u, [2.0, 1.0])
        assert res.phi < 0

    def test_switching_is_exactly_phi_sign(self, human_model, params):
        # head-on approach states at varying range so both branches fire
        rng = np.random.default_rng(60)
        seen_active = seen_inactive = False
        for _ in range(80):
            d0 = rng.uniform(0.8, 4.0)
            x = JointState(
                robot=np.array([d0, 0.0, rng.uniform(0, 3), np.pi]),
                human=np.array([0.0, rng.uniform(0, 2), 0.0, 0.0]),
            )
            goals = random_goal_set(rng, 4)
            belief = rng.dirichlet(np.ones(4))
            res = ctl.safe_control(
                x, belief, goals.states, rng.uniform(-10, 10, 2),
                "nmmssa", human_model, params, 0.003, 30.0,
            )
            assert res.active == (phi(x, params) >= 0.0)
            seen_active |= res.active
            seen_inactive |= not res.active
        assert seen_active and seen_inactive

    def test_active_projection_on_face(self, human_model, params):
        # choose a state with phi >= 0 and a violating reference: the
        # projected control lands on the constraint face
        for seed in range(200):
            x, goals, belief = _constraint_inputs(seed=4000 + seed)
            if phi(x, params) < 0:
                continue
            res = ctl.safe_control(
                x, belief, goals.states, np.array([25.0, 25.0]),
                "nmmssa", human_model, params, 0.003, 30.0,
            )
            if not res.feasible:
                continue
            c = res.constraint
            assert float(c.l @ res.u) <= c.s + 1e-9
            if float(c.l @ np.array([25.0, 25.0])) > c.s and np.max(np.abs(res.u)) < 30.0:
                assert float(c.l @ res.u) == pytest.approx(c.s, abs=1e-6)
                return
        pytest.fail("no active state with violating reference found")

    def test_sea_nmmssa_bit_compatible_unimodal(self, human_model, params):
        x, goals, _ = _constraint_inputs(seed=61, n_goals=1)
        belief = np.array([1.0])
        u_ref = np.array([5.0, -3.0])
        r1 = ctl.safe_control(x, belief, goals.states, u_ref, "sea",
                              human_model, params, 0.003, 30.0)
        r2 = ctl.safe_control(x, belief, goals.states, u_ref, "nmmssa",
                              human_model, params, 0.003, 30.0)
        assert np.array_equal(r1.u, r2.u)
        assert r1.constraint.s == r2.constraint.s
        assert r1.area == r2.area

    def test_clamps_reference_when_inactive(self, human_model, params):
        x = JointState(robot=np.array([5.0, 5.0, 0.0, 0.0]), human=np.zeros(4))
        goals = GoalSet.from_positions(np.array([[1.0, 1.0]]))
        res = ctl.safe_control(
            x, np.array([1.0]), goals.states, np.array([100.0, -100.0]),
            "sea", human_model, params, 0.003, 30.0,
        )
        assert np.array_equal(res.u, [30.0, -30.0])

    def test_unknown_method(self, human_model, params):
        x, goals, belief = _constraint_inputs(seed=62)
        with pytest.raises(ValueError):
            ctl.safe_control(x, belief, goals.states, np.zeros(2), "mpc",
                             human_model, params, 0.003, 30.0)
