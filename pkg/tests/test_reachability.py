import math

import numpy as np
import pytest

from hknoise import BudgetError, DomainError, NoiseModel, Population, PreconditionError, step_comm, step_env, tilde_x
from hknoise.core import edges
from hknoise.metrics import h_matrix
from hknoise.reachability import (
    CommBand,
    CommCenter,
    CommGlobalCenter,
    CommPairSpread,
    CommPairTwoStep,
    CommSplit,
    Controls,
    DriveToBall,
    ReachTask,
    SplitExtreme,
    SpreadGlobal,
    SpreadOnce,
    TargetSet,
    adversary_move,
    adversary_names,
    certify,
    control_step,
    law_drive_to_ball,
    law_split_extreme,
    roll_out,
    split_extreme_k_bound,
)

from . import oracles

POP5 = Population(np.linspace(0.1, 0.5, 5))
SPLIT_POP = Population([0.05, 0.3, 0.3, 0.45])
HOMO4 = Population([1 / 3] * 4)


def random_states(n, k, seed=0):
    rng = np.random.default_rng(seed)
    return [rng.random(n) for _ in range(k)]


class TestTargetSet:
    def test_ball_is_open(self):
        t = TargetSet.ball(0.5, 0.1)
        assert t.contains([0.45, 0.55, 0.5])
        assert not t.contains([0.39, 0.5])
        assert not TargetSet.ball(0.5, 0.25).contains([0.75, 0.5])

    def test_spread(self):
        t = TargetSet.spread(0.3)
        assert t.contains([0.0, 0.3]) and not t.contains([0.0, 0.29])
        assert not TargetSet.spread(0.3, upper=0.5).contains([0.0, 0.6])

    @pytest.mark.parametrize("kw", [dict(kind="ball", z=1.5, alpha=0.1), dict(kind="ball", z=0.5, alpha=0.0), dict(kind="spread", beta=1.5), dict(kind="wedge")])
    def test_invalid(self, kw):
        with pytest.raises(DomainError):
            TargetSet(**kw)


class TestControlStep:
    X = np.array([0.0, 0.1, 0.5])
    POP = Population([0.15, 0.2, 0.2])

    def test_zero_inputs_reduce_to_noiseless_step(self):
        c = Controls(np.zeros(3), np.full(3, 0.01))
        out = control_step(self.X, self.POP, "EnvNoise", c, np.zeros(3), 0.1)
        np.testing.assert_array_equal(out, step_env(self.X, self.POP, "EnvNoise", np.zeros(3), 0.1))

    def test_feasible_middle_branch_lands_on_target(self):
        z = 0.3
        tx = tilde_x(self.X, self.POP, "EnvNoise")
        c = Controls(z - tx, np.full(3, 1e-3))
        eta = float(np.abs(z - tx).max()) + 2e-3
        out = control_step(self.X, self.POP, "EnvNoise", c, np.zeros(3), eta)
        np.testing.assert_allclose(out, z, atol=1e-15)

    def test_comm_isolated_agent_unchanged(self):
        x = np.array([0.0, 0.5, 0.55])
        pop = Population([0.1, 0.1, 0.1])
        u = np.full((3, 3), 0.05)
        out = control_step(x, pop, "CommNoise", Controls(u, np.full(3, 0.05)), np.full((3, 3), 0.05), 0.1)
        assert out[0] == 0.0

    def test_comm_matches_noisy_step(self):
        rng = np.random.default_rng(0)
        pop = Population([0.3, 0.4, 0.5, 0.6], [0.2, 0.4, 0.6, 0.8])
        for variant in ("CommNoise", "CommNoiseGlobal"):
            x = rng.random(4)
            delta = np.full(4, 0.02)
            u = rng.uniform(-0.08, 0.08, (4, 4))
            b = rng.uniform(-0.02, 0.02, (4, 4))
            zeta = {(j, i): float(u[j, i] + b[j, i]) for j, i in edges(x, pop)}
            np.testing.assert_allclose(
                control_step(x, pop, variant, Controls(u, delta), b, 0.1), step_comm(x, pop, variant, zeta, 0.1), atol=1e-15
            )

    def test_budget_violations(self):
        c = Controls(np.array([0.095, 0.0, 0.0]), np.full(3, 0.01))
        with pytest.raises(BudgetError):
            control_step(self.X, self.POP, "EnvNoise", c, np.zeros(3), 0.1)
        c = Controls(np.zeros(3), np.full(3, 0.01))
        with pytest.raises(BudgetError):
            control_step(self.X, self.POP, "EnvNoise", c, np.array([0.02, 0, 0]), 0.1)
        c = Controls(np.zeros(3), np.array([0.1, 0.01, 0.01]))
        with pytest.raises(BudgetError):
            control_step(self.X, self.POP, "EnvNoise", c, np.zeros(3), 0.1)

    def test_comm_budget_checked_on_edges_only(self):
        x = np.array([0.0, 0.5, 0.55])
        pop = Population([0.1, 0.1, 0.1])
        u = np.zeros((3, 3))
        u[0, 1] = 5.0  # not an edge: ignored
        control_step(x, pop, "CommNoise", Controls(u, np.full(3, 0.01)), np.zeros((3, 3)), 0.1)
        u[2, 1] = 0.095
        with pytest.raises(BudgetError):
            control_step(x, pop, "CommNoise", Controls(u, np.full(3, 0.01)), np.zeros((3, 3)), 0.1)

    def test_shape_checks(self):
        with pytest.raises(DomainError):
            control_step(self.X, self.POP, "CommNoise", Controls(np.zeros(3), np.full(3, 0.01)), np.zeros(3), 0.1)


class TestDriveToBall:
    def test_centered_gives_zero(self):
        x = np.full(5, 0.7)
        c = law_drive_to_ball(x, POP5, "EnvNoise", 0.7, 0.02, 0.1)
        assert np.all(c.u == 0) and np.all(c.delta == 0.02)

    def test_first_branch(self):
        c = law_drive_to_ball(np.ones(5), POP5, "EnvNoise", 0.5, 0.02, 0.1)
        np.testing.assert_allclose(c.u, -0.08)

    def test_third_branch(self):
        c = law_drive_to_ball(np.zeros(5), POP5, "EnvNoise", 0.5, 0.02, 0.1)
        np.testing.assert_allclose(c.u, 0.08)

    @pytest.mark.parametrize("alpha", [0.0, 0.05, 0.2, -0.01])
    def test_alpha_guard(self, alpha):
        with pytest.raises(PreconditionError):
            law_drive_to_ball(np.zeros(5), POP5, "EnvNoise", 0.5, alpha, 0.1)

    def test_comm_variant_rejected(self):
        with pytest.raises(PreconditionError):
            law_drive_to_ball(np.zeros(5), POP5, "CommNoise", 0.5, 0.02, 0.1)

    def test_reaches_closed_ball_within_bound(self):
        eta, alpha, z = 0.1, 0.02, 0.7
        ctl = DriveToBall(POP5, "EnvNoise", eta, z, alpha, target_alpha=alpha + 1e-9)
        bound = math.ceil(1 / (eta - 2 * alpha)) + 1
        assert bound == 18
        for x0 in random_states(5, 10) + [np.zeros(5), np.ones(5)]:
            for adv in adversary_names(5):
                run = roll_out(ctl, POP5, eta, x0, adv, bound)
                assert run.reached and run.hit_time <= bound

    def test_monotone_contraction(self):
        eta, alpha, z = 0.1, 0.02, 0.3
        ctl = DriveToBall(POP5, "EnvNoise", eta, z, alpha)
        for x0 in random_states(5, 10, seed=3):
            for adv in adversary_names(5):
                run = roll_out(ctl, POP5, eta, x0, adv, 30)
                dist = [np.abs(s - z).max() for s in run.states]
                for a, b in zip(dist, dist[1:]):
                    if a > eta - alpha:  # outside the band the step is guaranteed
                        assert b <= a - (eta - 2 * alpha) + 1e-12 or b <= alpha + 1e-12

    def test_smaller_delta_never_hurts(self):
        x0s = random_states(5, 5, seed=9)
        for alpha in (0.04, 0.02, 0.01, 0.001):
            rep = certify(ReachTask(POP5, "EnvNoise", 0.1, "drive_to_ball", dict(z=0.2, alpha=0.05, law_alpha=alpha), x0s, adversary_names(5)))
            assert rep.reached


class TestSplitExtreme:
    def test_k_bound_default(self):
        bound = split_extreme_k_bound(SPLIT_POP, 0.12)
        assert bound == pytest.approx(32.0)
        assert SplitExtreme(SPLIT_POP, 0.12).K == math.ceil(4 * bound)

    def test_certifies_one_agent_at_one(self):
        rep = certify(ReachTask(SPLIT_POP, "EnvNoise", 0.12, "split_extreme", {}, random_states(4, 5), adversary_names(5)))
        assert rep.reached
        for run in rep.runs:
            final = run.states[-1]
            assert sorted(final) == [0.0, 0.0, 0.0, 1.0] and final[0] == 1.0
            assert oracles.budget_ok(run, 0.12, SPLIT_POP, False)

    def test_small_k_rejected(self):
        with pytest.raises(PreconditionError):
            SplitExtreme(SPLIT_POP, 0.12, K=5)

    def test_low_noise_rejected(self):
        with pytest.raises(PreconditionError):
            certify(ReachTask(SPLIT_POP, "EnvNoise", 0.02, "split_extreme", {}, random_states(4, 1), ["plus"]))

    def test_requires_prepositioned_state(self):
        with pytest.raises(PreconditionError):
            law_split_extreme(np.array([0.0, 0.5, 0.5, 1.0]), SPLIT_POP, 128, 0.12)
        x = np.full(4, 0.025 + 0.05 / 128)
        c = law_split_extreme(x, SPLIT_POP, 128, 0.12)
        assert c.u[0] > 0 and np.all(c.u[1:] < 0)

    def test_phases_recorded(self):
        run = roll_out(SplitExtreme(SPLIT_POP, 0.12), SPLIT_POP, 0.12, np.array([0.9, 0.1, 0.5, 0.7]), "oppose", 100)
        assert run.phases[0] == "center" and run.phases[-1] == "split"


class TestSpreadLaws:
    def test_spread_once(self):
        ctl = SpreadOnce(POP5, "EnvNoise", 0.2, 0.01)
        assert ctl.target.beta == pytest.approx(0.38)
        rep = certify(ReachTask(POP5, "EnvNoise", 0.2, "spread_once", dict(epsilon=0.01), random_states(5, 5), adversary_names(10)))
        assert rep.reached

    def test_spread_once_global_variant(self):
        pop = Population(np.linspace(0.1, 0.5, 5), 0.3)
        rep = certify(ReachTask(pop, "EnvNoiseGlobal", 0.2, "spread_once", dict(epsilon=0.01), random_states(5, 5), adversary_names(5)))
        assert rep.reached

    def test_spread_once_guard(self):
        with pytest.raises(PreconditionError):
            SpreadOnce(POP5, "EnvNoise", 0.2, 0.3)

    def test_spread_global(self):
        pop = Population(np.linspace(0.05, 0.45, 5), 0.1)
        ctl = SpreadGlobal(pop, 0.1, 0.01)
        assert ctl.target.beta == pytest.approx(min(5 * 0.1 / (4 * 0.1) - 0.01, 0.5 - 0.01, 1.0))
        rep = certify(ReachTask(pop, "EnvNoiseGlobal", 0.1, "spread_global", dict(epsilon=0.01), random_states(5, 5), adversary_names(5)))
        assert rep.reached
        assert all(oracles.budget_ok(r, 0.1, pop, False) for r in rep.runs)

    def test_spread_global_guard(self):
        with pytest.raises(PreconditionError):
            SpreadGlobal(Population(np.linspace(0.05, 0.45, 5), 0.1), 0.02, 0.01)


class TestCommLaws:
    P3 = Population([0.5, 0.6, 0.7], [0.1, 0.2, 0.3])

    def test_global_center(self):
        ctl = CommGlobalCenter(self.P3, 0.3, 0.4, 0.05)
        for x0 in random_states(3, 5):
            for adv in adversary_names(3):
                assert roll_out(ctl, self.P3, 0.3, x0, adv, ctl.horizon).reached

    def test_pair_spread_target(self):
        ctl = CommPairSpread(self.P3, 0.3, 0.01)
        assert ctl.target.beta == pytest.approx(0.34 - 0.02)
        x0s = [np.full(3, v) for v in (0.0, 0.5, 1.0)] + random_states(3, 3)
        rep = certify(ReachTask(self.P3, "CommNoiseGlobal", 0.3, "comm_spread", dict(epsilon=0.01, construction="pair"), x0s, adversary_names(10)))
        assert rep.reached
        assert all(oracles.budget_ok(r, 0.3, self.P3, True) for r in rep.runs)

    @pytest.mark.parametrize("r", [[0.5, 0.6, 0.7], [0.1, 0.15, 0.2], [0.2, 0.3, 0.5]])
    def test_two_step_spread(self, r):
        pop = Population(r, [0.1, 0.2, 0.3])
        pc = h_matrix(0.3, pop)
        x0s = [np.full(3, v) for v in (0.1, 0.5, 0.9)]
        rep = certify(ReachTask(pop, "CommNoiseGlobal", 0.3, "comm_spread", dict(epsilon=0.01, construction="two_step"), x0s, adversary_names(5)))
        assert rep.reached
        assert rep.target.beta == pytest.approx(min(np.nanmax(pc.C) - 0.01, 1.0))
        assert all(r.hit_time > 0 for r in rep.runs)

    def test_homogeneous_center(self):
        ctl = CommCenter(HOMO4, 0.1, 0.8, 0.02)
        for x0 in random_states(4, 5) + [np.array([0.0, 0.0, 1.0, 1.0]), np.array([0.0, 1 / 3, 2 / 3, 1.0])]:
            for adv in adversary_names(3):
                run = roll_out(ctl, HOMO4, 0.1, x0, adv, ctl.horizon)
                assert run.reached, (x0, adv, run.phase)
                assert oracles.budget_ok(run, 0.1, HOMO4, True)

    def test_homogeneous_split(self):
        rep = certify(ReachTask(HOMO4, "CommNoise", 0.25, "comm_spread", dict(epsilon=0.01), random_states(4, 5), adversary_names(5)))
        assert rep.reached
        for run in rep.runs:
            final = run.states[-1]
            assert final.min() == 0.0 and final.max() == 1.0
        assert isinstance(CommSplit(HOMO4, 0.25), CommSplit)

    def test_homogeneous_band(self):
        ctl = CommBand(HOMO4, 0.1, 0.01)
        assert ctl.target.upper == pytest.approx(0.15) and ctl.target.beta == pytest.approx(0.14)
        rep = certify(ReachTask(HOMO4, "CommNoise", 0.1, "comm_spread", dict(epsilon=0.01), random_states(4, 5), adversary_names(5)))
        assert rep.reached

    def test_homogeneous_guards(self):
        with pytest.raises(PreconditionError):
            CommSplit(HOMO4, 0.1)
        with pytest.raises(PreconditionError):
            CommBand(HOMO4, 0.25, 0.01)
        with pytest.raises(PreconditionError):
            CommSplit(Population([0.2] * 4), 0.25)
        with pytest.raises(PreconditionError):
            CommSplit(SPLIT_POP, 0.25)

    def test_two_step_guards(self):
        with pytest.raises(PreconditionError):
            CommPairTwoStep(self.P3, 0.3, 0.01, K=2)


class TestCertify:
    def test_already_inside(self):
        rep = certify(ReachTask(POP5, "EnvNoise", 0.1, "drive_to_ball", dict(z=0.5, alpha=0.05), [np.full(5, 0.5)], adversary_names(2)))
        assert rep.reached and rep.hit_time == 0

    def test_failure_is_a_report(self):
        rep = certify(ReachTask(POP5, "EnvNoise", 0.1, "drive_to_ball", dict(z=0.7, alpha=0.02), [np.zeros(5)], ["plus"], horizon=2))
        assert not rep.reached and rep.hit_time is None and rep.adversary == "plus"
        assert rep.trace.phase == "center"

    def test_monotone_in_horizon(self):
        x0s = random_states(5, 3, seed=4)
        results = [certify(ReachTask(POP5, "EnvNoise", 0.1, "drive_to_ball", dict(z=0.7, alpha=0.02), x0s, adversary_names(3), horizon=h)).reached for h in range(0, 16)]
        assert results == sorted(results)

    def test_noiseless_reduction(self):
        pop = Population(np.linspace(0.1, 0.5, 6))
        x0 = np.linspace(0, 1, 6)
        for variant in ("EnvNoise", "EnvNoiseGlobal", "CommNoise", "CommNoiseGlobal"):
            rep = certify(ReachTask(pop, variant, 0.1, "zero", dict(horizon=20), [x0], adversary_names(2)))
            run = rep.runs[0]
            x = x0.copy()
            for t in range(1, len(run.states)):
                if variant.startswith("Comm"):
                    x = step_comm(x, pop, variant, {e: 0.0 for e in edges(x, pop)}, 0.1)
                else:
                    x = step_env(x, pop, variant, np.zeros(6), 0.1)
                np.testing.assert_allclose(run.states[t], x, atol=1e-250)

    def test_random_adversary_deterministic(self):
        c = Controls(np.zeros(4), np.full(4, 0.01))
        a = adversary_move("random:3", c, 5, seed=1)
        assert np.array_equal(a, adversary_move("random:3", c, 5, seed=1))
        assert np.all(np.abs(a) <= 0.01)
        assert not np.array_equal(a, adversary_move("random:4", c, 5, seed=1))

    def test_oppose(self):
        c = Controls(np.array([0.05, -0.05, 0.0]), np.full(3, 0.01))
        np.testing.assert_array_equal(adversary_move("oppose", c, 0), [-0.01, 0.01, 0.01])

    def test_unknown_law_and_adversary(self):
        with pytest.raises(PreconditionError):
            certify(ReachTask(POP5, "EnvNoise", 0.1, "teleport", {}, [np.zeros(5)], ["plus"]))
        with pytest.raises(DomainError):
            adversary_move("sideways", Controls(np.zeros(3), np.full(3, 0.01)), 0)

    def test_report_trace_invariant(self):
        rep = certify(ReachTask(POP5, "EnvNoise", 0.1, "drive_to_ball", dict(z=0.7, alpha=0.02), random_states(5, 4), adversary_names(4)))
        for run in rep.runs:
            assert TargetSet.ball(0.7, 0.02).contains(run.states[run.hit_time])
            assert 0 <= run.hit_time <= rep.horizon


def test_noise_model_unused_by_controls():
    # control traces live inside the noise support of the matching noise model
    eta = 0.12
    rep = certify(ReachTask(SPLIT_POP, "EnvNoise", eta, "split_extreme", {}, random_states(4, 2), adversary_names(2)))
    support = NoiseModel(eta).eta
    for run in rep.runs:
        for c, b in zip(run.controls, run.uncertainties):
            assert np.all(np.abs(c.u + b) <= support + 1e-15)
