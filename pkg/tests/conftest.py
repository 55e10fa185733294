"""Shared fixtures: small unit datasets, the benchmark fixture, and the
disturbance-recovery fixture."""

from __future__ import annotations

import numpy as np
import pytest

from skillgraph import (Dataset, Disturbance, Frame, GraphConfig, SchedulerConfig,
                        SkillSequence, SynthesisConfig, TrackerConfig, build_graph,
                        label_contacts, synthesize_dataset)

# ---------------------------------------------------------------------------
# hand-built petal datasets
# ---------------------------------------------------------------------------

J, B, FPS = 10, 6, 30.0
Q_HOME = np.full(J, 0.1)
FEET = [4, 5]


def base_bodies() -> np.ndarray:
    base = np.zeros((B, 3))
    base[:, 0] = np.linspace(-0.3, 0.3, B)
    base[:, 2] = [0.8, 1.0, 1.2, 0.9, 0.02, 0.02]
    base[0] = (0.0, 0.0, 0.8)
    return base


def make_sequence(name: str, n_frames: int, envelope, amp_q: float, dir_q: np.ndarray,
                  amp_p: float, dir_p: np.ndarray, fps: float = FPS) -> SkillSequence:
    """One skill: q and body positions scale a direction by a time envelope."""
    base = base_bodies()
    s = np.linspace(0.0, 1.0, n_frames)
    g = envelope(s)
    q = Q_HOME[None, :] + amp_q * g[:, None] * dir_q[None, :]
    p = base[None, :, :] + amp_p * g[:, None, None] * dir_p[None, :, :]
    p[:, FEET, 2] = 0.02 + np.abs(p[:, FEET, 2] - 0.02)
    dq = np.empty_like(q)
    dq[1:-1] = (q[2:] - q[:-2]) * (fps / 2.0)
    dq[0] = (q[1] - q[0]) * fps
    dq[-1] = (q[-1] - q[-2]) * fps
    frames = [Frame(q[t].copy(), dq[t].copy(), p[t].copy(), np.zeros(2), 0.0,
                    np.zeros(3), np.zeros(len(FEET), dtype=bool))
              for t in range(n_frames)]
    return label_contacts(SkillSequence(name, fps, frames), 0.05, 0.3, FEET)


def loop_envelope(hold: int):
    """Out-and-back excursion, pinned to the rest pose at both ends."""
    def env(s):
        g = np.sin(np.pi * s) ** 2
        g[:hold] = 0.0
        g[len(s) - hold:] = 0.0
        return g
    return env


def getup_envelope(hold_start: int, hold_end: int):
    """Starts at full excursion (lying still), descends to rest."""
    def env(s):
        n = len(s)
        g = np.ones(n)
        rise = np.linspace(0.0, 1.0, n - hold_start - hold_end)
        g[hold_start:n - hold_end] = (1.0 - rise) ** 2
        g[n - hold_end:] = 0.0
        return g
    return env


def unit_dirs(rng: np.random.Generator, n: int) -> np.ndarray:
    v = rng.normal(size=n)
    return v / np.abs(v).max()


def body_dirs(rng: np.random.Generator) -> np.ndarray:
    m = rng.normal(size=(B, 3))
    m /= np.linalg.norm(m, axis=1, keepdims=True)
    m[0] = 0.0
    return m


def small_dataset(n_frames: int = 41, n_skills: int = 2, seed: int = 3) -> Dataset:
    """Tiny petal dataset for unit tests."""
    rng = np.random.default_rng(seed)
    skills = [make_sequence(f"s{k}", n_frames, loop_envelope(2), 1.0 + 0.2 * k,
                            unit_dirs(rng, J), 0.3, body_dirs(rng))
              for k in range(n_skills)]
    ds = Dataset(skills, FEET)
    ds.validate()
    return ds


@pytest.fixture(scope="session")
def tiny_dataset() -> Dataset:
    return small_dataset()


@pytest.fixture(scope="session")
def tiny_graph(tiny_dataset):
    return build_graph(tiny_dataset, GraphConfig(cross_stride=10, delta_buf=0.4,
                                                 n_max=30, lambda_sw=0.5))


# ---------------------------------------------------------------------------
# disturbance-recovery fixture: a kick loop, a get-up skill holding a fallen
# pose, and a filler loop
# ---------------------------------------------------------------------------

def recovery_dataset() -> Dataset:
    rng = np.random.default_rng(42)
    d_kick, d_fall, d_wave = (unit_dirs(rng, J) for _ in range(3))
    p_kick, p_wave, p_get = (body_dirs(rng) for _ in range(3))
    skills = [
        make_sequence("kick", 121, loop_envelope(2), 1.2, d_kick, 0.25, p_kick),
        make_sequence("getup", 61, getup_envelope(3, 2), 3.0, d_fall, 0.2, p_get),
        make_sequence("wave", 121, loop_envelope(2), 1.0, d_wave, 0.25, p_wave),
    ]
    ds = Dataset(skills, FEET)
    ds.validate()
    return ds


RECOVERY_GRAPH_CONFIG = GraphConfig(cross_stride=10, d_max=2.0, delta_buf=0.4,
                                    n_max=30, lambda_sw=0.5, w_dq=0.25)


def recovery_scheduler_config(planner: str = "graph") -> SchedulerConfig:
    return SchedulerConfig(A=1.5, B=6.0, tau=0.25, k=5, lambda_cost=10.0,
                           planner=planner, omega_thresh=0.1, h=10,
                           recovery_skill="getup")


def recovery_tracker_config() -> TrackerConfig:
    return TrackerConfig(alpha=0.6, noise_std=0.0, damping_rate=0.5, dt=1.0 / 30.0)


def recovery_disturbance(graph, at_tick: int = 60) -> Disturbance:
    """Kinematic stand-in for a large push: jump the joints to the fallen pose
    and spin the root."""
    tracked = graph.frames[graph.skill_nodes["kick"][at_tick]]
    fallen = graph.frames[graph.skill_nodes["getup"][2]]
    return Disturbance(at_tick=at_tick, q_delta=fallen.q - tracked.q,
                       dq_delta=-tracked.dq,
                       root_angvel_delta=np.array([0.5, 0.5, 4.0]))


@pytest.fixture(scope="session")
def recovery_graph():
    return build_graph(recovery_dataset(), RECOVERY_GRAPH_CONFIG)


# ---------------------------------------------------------------------------
# benchmark fixture: 4 synthetic skills sharing an exact rest window
# ---------------------------------------------------------------------------

BENCH_SYNTH = SynthesisConfig(walk_speed=0.0, yaw_amp=0.0)
BENCH_SEED = 7
BENCH_GRAPH_CONFIG = GraphConfig(cross_stride=10, d_max=2.0, delta_buf=0.4,
                                 n_max=30, lambda_sw=0.5)
# B is effectively disabled: the protocol wants every switch attempted, and
# lambda_cost is high enough that routed plans always beat direct jumps.
BENCH_SCHEDULER = SchedulerConfig(A=2.0, B=1e9, tau=0.25, k=5, lambda_cost=50.0,
                                  planner="graph", omega_thresh=0.1, h=10)
BENCH_TRACKER = TrackerConfig(alpha=0.6, noise_std=0.0, damping_rate=0.5, dt=1.0 / 30.0)


@pytest.fixture(scope="session")
def bench_dataset():
    return synthesize_dataset(BENCH_SYNTH, BENCH_SEED)


@pytest.fixture(scope="session")
def bench_graph(bench_dataset):
    return build_graph(bench_dataset, BENCH_GRAPH_CONFIG)
