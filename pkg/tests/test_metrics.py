import math

import numpy as np
import pytest

from skillgraph import (AlignmentError, DimensionMismatch, EmptyInput, EpisodeRecord,
                        RewardWeights, SchedulerEvent, fgr, nr, ssr, tracking_errors)
from skillgraph.metrics import episode_switch_failed, relative_error_series
from skillgraph.tracker import RobotState, TickRecord


def state_from(frame, p_offset=(0.0, 0.0, 0.0), q_offset=0.0) -> RobotState:
    return RobotState(
        q=frame.q + q_offset, dq=frame.dq.copy(),
        p=frame.p_hat + np.asarray(p_offset)[None, :],
        root_xy=np.zeros(2), root_yaw=0.0,
        root_angvel=frame.root_angvel.copy(), contacts=frame.contacts.copy(),
    )


def make_episode(graph, skill, n, state_fn, events_at=None, commanded=None):
    """Episode whose tick t tracks reference frame t of a skill."""
    events_at = events_at or {}
    commanded = commanded or skill
    ticks = []
    for t in range(n):
        frame = graph.frames[graph.skill_nodes[skill][t]]
        ticks.append(TickRecord(
            tick=t, mode="tracking", commanded=commanded, directive="guidance",
            node_id=t, node_label=f"{skill}:{t}", skill=skill, kappa=0,
            state=state_fn(frame, t), target=frame,
            events=events_at.get(t, [])))
    return EpisodeRecord(meta={"feet_indices": list(graph.feet_indices)}, ticks=ticks)


class TestTrackingErrors:
    def test_perfect_tracking_all_zero(self, tiny_graph):
        ep = make_episode(tiny_graph, "s0", 30, lambda f, t: state_from(f))
        errors = tracking_errors(ep)
        assert errors.e_g_mpbpe == 0.0
        assert errors.e_mpbpe == 0.0
        assert errors.e_mpjpe == 0.0
        assert errors.e_mpjve == 0.0
        assert errors.e_mpbve == 0.0
        assert errors.e_mpbae == 0.0

    def test_constant_global_offset(self, tiny_graph):
        ep = make_episode(tiny_graph, "s0", 30,
                          lambda f, t: state_from(f, p_offset=(0.1, 0.0, 0.0)))
        errors = tracking_errors(ep)
        assert errors.e_g_mpbpe == pytest.approx(0.1, abs=1e-12)
        assert errors.e_mpbve == pytest.approx(0.0, abs=1e-12)
        assert errors.e_mpbae == pytest.approx(0.0, abs=1e-12)

    def test_root_translation_cancels_in_relative(self, tiny_graph):
        ep = make_episode(tiny_graph, "s0", 30,
                          lambda f, t: state_from(f, p_offset=(0.3, -0.2, 0.15)))
        errors = tracking_errors(ep)
        assert errors.e_mpbpe == pytest.approx(0.0, abs=1e-12)
        assert errors.e_g_mpbpe > 0.0

    def test_joint_offset(self, tiny_graph):
        ep = make_episode(tiny_graph, "s0", 30, lambda f, t: state_from(f, q_offset=0.05))
        errors = tracking_errors(ep)
        assert errors.e_mpjpe == pytest.approx(0.05, abs=1e-12)
        assert errors.e_mpjve == pytest.approx(0.0, abs=1e-12)

    def test_velocity_errors_ignore_constant_offsets(self, tiny_graph):
        off = make_episode(tiny_graph, "s0", 25,
                           lambda f, t: state_from(f, p_offset=(0.4, 0.4, 0.0), q_offset=0.2))
        errors = tracking_errors(off)
        assert errors.e_mpjve == pytest.approx(0.0, abs=1e-12)
        assert errors.e_mpbve == pytest.approx(0.0, abs=1e-12)

    def test_damping_gaps_do_not_create_derivatives(self, tiny_graph):
        ep = make_episode(tiny_graph, "s0", 20, lambda f, t: state_from(f))
        # carve a damping gap: ticks 8..11 lose their reference
        for t in range(8, 12):
            tr = ep.ticks[t]
            ep.ticks[t] = TickRecord(tr.tick, "estop", tr.commanded, "damping",
                                     None, None, None, 0, tr.state, None, [])
        errors = tracking_errors(ep)
        assert errors.e_mpbve == pytest.approx(0.0, abs=1e-12)

    def test_empty_raises(self):
        with pytest.raises(AlignmentError):
            tracking_errors(EpisodeRecord(meta={}, ticks=[]))


class TestSSR:
    def command_events(self, tick, skill):
        return [SchedulerEvent(tick, "command_change", {"skill": skill}),
                SchedulerEvent(tick, "switch_completed", {"skill": skill})]

    def episode_with_spike(self, graph, spike, at_tick=15, n=30):
        ep = make_episode(graph, "s0", n, lambda f, t: state_from(f),
                          events_at={5: self.command_events(5, "s0")})
        f = graph.frames[graph.skill_nodes["s0"][at_tick]]
        bad = RobotState(q=f.q.copy(), dq=f.dq.copy(),
                         p=f.p_hat + np.array([[0.0, 0.0, 0.0]]), root_xy=np.zeros(2),
                         root_yaw=0.0, root_angvel=f.root_angvel.copy(),
                         contacts=f.contacts.copy())
        # displace every non-root body by `spike` along x; root stays, so the
        # mean root-relative error is spike * (B-1)/B
        scale = spike * f.p_hat.shape[0] / (f.p_hat.shape[0] - 1)
        bad.p[1:, 0] += scale
        tr = ep.ticks[at_tick]
        ep.ticks[at_tick] = TickRecord(tr.tick, tr.mode, tr.commanded, tr.directive,
                                       tr.node_id, tr.node_label, tr.skill, tr.kappa,
                                       bad, tr.target, tr.events)
        return ep

    def test_all_clean_is_one(self, tiny_graph):
        eps = [make_episode(tiny_graph, "s0", 20, lambda f, t: state_from(f),
                            events_at={3: self.command_events(3, "s0")})
               for _ in range(3)]
        assert ssr(eps) == 1.0

    def test_single_bad_tick_fails_episode(self, tiny_graph):
        good = self.episode_with_spike(tiny_graph, 0.4)
        bad = self.episode_with_spike(tiny_graph, 0.6)
        assert ssr([good, bad]) == 0.5

    def test_threshold_is_strict(self, tiny_graph):
        eps = 1e-6
        over = self.episode_with_spike(tiny_graph, 0.5 + eps)
        under = self.episode_with_spike(tiny_graph, 0.5 - eps)
        assert episode_switch_failed(over)
        assert not episode_switch_failed(under)

    def test_monotone_in_threshold(self, tiny_graph):
        eps = [self.episode_with_spike(tiny_graph, s) for s in (0.2, 0.45, 0.7, 1.0)]
        rates = [ssr(eps, threshold=thr) for thr in (1.2, 0.6, 0.3, 0.1)]
        assert all(a >= b for a, b in zip(rates, rates[1:]))

    def test_error_before_command_ignored(self, tiny_graph):
        ep = self.episode_with_spike(tiny_graph, 0.8, at_tick=2)
        # spike happens before the command at tick 5
        ep.ticks[5] = TickRecord(5, "tracking", "s0", "guidance", 5, "s0:5", "s0", 0,
                                 ep.ticks[5].state, ep.ticks[5].target,
                                 self.command_events(5, "s0"))
        assert not episode_switch_failed(ep)

    def test_uncompleted_switch_fails(self, tiny_graph):
        ep = make_episode(tiny_graph, "s0", 20, lambda f, t: state_from(f),
                          events_at={4: [SchedulerEvent(4, "command_change",
                                                        {"skill": "s1"})]})
        assert episode_switch_failed(ep)

    def test_empty_input(self):
        with pytest.raises(EmptyInput):
            ssr([])


class TestFGR:
    def test_all_match(self):
        c = np.array([[1, 0], [0, 0], [1, 1]])
        assert np.array_equal(fgr(c, c, 1.0), np.ones(3))

    def test_one_mismatch(self):
        a = np.array([[1, 0]])
        b = np.array([[0, 0]])
        assert fgr(a, b, 1.0)[0] == pytest.approx(math.exp(-1.0), abs=1e-15)

    def test_two_mismatches(self):
        a = np.array([[1, 0]])
        b = np.array([[0, 1]])
        assert fgr(a, b, 1.0)[0] == pytest.approx(math.exp(-2.0), abs=1e-15)

    def test_range(self):
        rng = np.random.default_rng(0)
        a = rng.integers(0, 2, size=(50, 4))
        b = rng.integers(0, 2, size=(50, 4))
        values = fgr(a, b, 0.7)
        assert np.all(values > 0) and np.all(values <= 1)
        assert np.all((values == 1.0) == (np.abs(a - b).sum(axis=1) == 0))

    def test_dimension_mismatch(self):
        with pytest.raises(DimensionMismatch):
            fgr(np.zeros((3, 2)), np.zeros((3, 3)))


class TestNR:
    def test_perfect_tracking_is_one(self, tiny_graph):
        ep = make_episode(tiny_graph, "s0", 25, lambda f, t: state_from(f))
        assert nr(ep) == 1.0

    def test_range(self, tiny_graph):
        ep = make_episode(tiny_graph, "s0", 25,
                          lambda f, t: state_from(f, p_offset=(0.2, 0, 0), q_offset=0.1))
        value = nr(ep)
        assert 0.0 < value < 1.0

    def test_fgr_only_reduction(self, tiny_graph):
        weights = RewardWeights(body_position=0, body_position_feet=0, vr_3point=0,
                                body_rotation=0, body_angular_velocity=0,
                                body_velocity=0, dof_position=0, dof_velocity=0,
                                fgr=1.8)

        def flipped(f, t):
            s = state_from(f)
            return RobotState(q=s.q, dq=s.dq, p=s.p, root_xy=s.root_xy,
                              root_yaw=s.root_yaw, root_angvel=s.root_angvel,
                              contacts=~f.contacts[:1].repeat(len(f.contacts)))

        def one_mismatch(f, t):
            s = state_from(f)
            c = f.contacts.copy()
            c[0] = ~c[0]
            return RobotState(q=s.q, dq=s.dq, p=s.p, root_xy=s.root_xy,
                              root_yaw=s.root_yaw, root_angvel=s.root_angvel,
                              contacts=c)

        ep = make_episode(tiny_graph, "s0", 20, one_mismatch)
        assert nr(ep, weights) == pytest.approx(math.exp(-1.0), abs=1e-12)

    def test_vr_bodies_included_when_declared(self, tiny_graph):
        ep = make_episode(tiny_graph, "s0", 20, lambda f, t: state_from(f))
        weights = RewardWeights(vr_bodies=(1, 2, 3))
        assert nr(ep, weights) == 1.0
        assert "vr_3point" not in weights.excluded_terms()
        assert "vr_3point" in RewardWeights().excluded_terms()


def test_relative_error_series_skips_damping(tiny_graph):
    ep = make_episode(tiny_graph, "s0", 10, lambda f, t: state_from(f))
    tr = ep.ticks[4]
    ep.ticks[4] = TickRecord(4, "estop", tr.commanded, "damping", None, None,
                             None, 0, tr.state, None, [])
    ticks, errors = relative_error_series(ep)
    assert 4 not in ticks
    assert len(ticks) == 9
