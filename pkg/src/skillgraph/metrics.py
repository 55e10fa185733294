"""Evaluation metrics over episode records.

All position errors are means of per-body Euclidean norms (or per-joint
absolute differences); velocity and acceleration errors are first and second
finite differences per frame, taken only within contiguous guided tick runs
so damping gaps never produce spurious derivatives. "Root-relative" subtracts
the root body position from both sides in the canonical (heading-stripped)
frame.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import AlignmentError, DimensionMismatch, EmptyInput
from .tracker import EpisodeRecord, TickRecord

SSR_THRESHOLD = 0.5  # meters of mean root-relative body error


@dataclass(frozen=True)
class TrackingErrors:
    e_g_mpbpe: float   # global mean per-body position error, m
    e_mpbpe: float     # root-relative mean per-body position error, m
    e_mpjpe: float     # mean per-joint position error, rad
    e_mpjve: float     # mean per-joint velocity error, rad/frame
    e_mpbve: float     # mean per-body velocity error, m/frame
    e_mpbae: float     # mean per-body acceleration error, m/frame^2

    def as_dict(self) -> dict:
        return {
            "e_g_mpbpe": self.e_g_mpbpe, "e_mpbpe": self.e_mpbpe,
            "e_mpjpe": self.e_mpjpe, "e_mpjve": self.e_mpjve,
            "e_mpbve": self.e_mpbve, "e_mpbae": self.e_mpbae,
        }


def _guided_runs(episode: EpisodeRecord, resolver=None) -> list[list[tuple[TickRecord, object]]]:
    """Contiguous runs of ticks that have a resolvable reference frame."""
    runs: list[list[tuple[TickRecord, object]]] = []
    current: list[tuple[TickRecord, object]] = []
    prev_tick = None
    for tr in episode.ticks:
        ref = resolver(tr) if resolver is not None else tr.target
        if ref is None:
            if current:
                runs.append(current)
                current = []
            prev_tick = None
            continue
        if prev_tick is not None and tr.tick != prev_tick + 1 and current:
            runs.append(current)
            current = []
        current.append((tr, ref))
        prev_tick = tr.tick
    if current:
        runs.append(current)
    return runs


def _relative(p: np.ndarray) -> np.ndarray:
    return p - p[:, :1, :]


def tracking_errors(episode: EpisodeRecord, resolver=None) -> TrackingErrors:
    """Six imitation error metrics averaged over the guided ticks."""
    runs = _guided_runs(episode, resolver)
    if not runs:
        raise AlignmentError("episode has no guided ticks with resolvable references")
    g_pos, rel_pos, joint_pos = [], [], []
    joint_vel, body_vel, body_acc = [], [], []
    for run in runs:
        rob_p = np.stack([tr.state.p for tr, _ in run])
        rob_rel = _relative(np.stack([tr.state.canonical().p_hat for tr, _ in run]))
        rob_q = np.stack([tr.state.q for tr, _ in run])
        ref_p = np.stack([ref.p_hat for _, ref in run])
        ref_rel = _relative(ref_p)
        ref_q = np.stack([ref.q for _, ref in run])

        g_pos.append(np.linalg.norm(rob_p - ref_p, axis=2))
        rel_pos.append(np.linalg.norm(rob_rel - ref_rel, axis=2))
        joint_pos.append(np.abs(rob_q - ref_q))
        if len(run) >= 2:
            joint_vel.append(np.abs(np.diff(rob_q, axis=0) - np.diff(ref_q, axis=0)))
            body_vel.append(np.linalg.norm(np.diff(rob_p, axis=0) - np.diff(ref_p, axis=0), axis=2))
        if len(run) >= 3:
            acc_rob = rob_p[2:] - 2 * rob_p[1:-1] + rob_p[:-2]
            acc_ref = ref_p[2:] - 2 * ref_p[1:-1] + ref_p[:-2]
            body_acc.append(np.linalg.norm(acc_rob - acc_ref, axis=2))

    def _mean(parts: list[np.ndarray]) -> float:
        if not parts:
            return 0.0
        return float(np.concatenate([p.ravel() for p in parts]).mean())

    return TrackingErrors(
        e_g_mpbpe=_mean(g_pos), e_mpbpe=_mean(rel_pos), e_mpjpe=_mean(joint_pos),
        e_mpjve=_mean(joint_vel), e_mpbve=_mean(body_vel), e_mpbae=_mean(body_acc),
    )


def relative_error_series(episode: EpisodeRecord) -> tuple[np.ndarray, np.ndarray]:
    """(ticks, mean root-relative body error) over guided ticks."""
    ticks, errors = [], []
    for tr in episode.ticks:
        if tr.target is None:
            continue
        rob = tr.state.canonical().p_hat
        ref = tr.target.p_hat
        diff = (rob - rob[:1]) - (ref - ref[:1])
        ticks.append(tr.tick)
        errors.append(float(np.linalg.norm(diff, axis=1).mean()))
    return np.array(ticks), np.array(errors)


def episode_switch_failed(episode: EpisodeRecord, threshold: float = SSR_THRESHOLD) -> bool:
    """Failure rule for one episode of the switching protocol.

    An episode fails when the mean root-relative body position error exceeds
    the threshold at any guided tick after the first command, or when some
    commanded switch never completed (the target prefix was never reached, as
    happens when the scheduler dead-ends in an emergency stop).
    """
    commands = episode.command_ticks()
    start = commands[0][0] if commands else 0
    ticks, errors = relative_error_series(episode)
    if len(ticks) and bool((errors[ticks >= start] > threshold).any()):
        return True
    completed = episode.completed_switches()
    pos = 0
    for cmd_tick, skill in commands:
        while pos < len(completed) and not (completed[pos][0] >= cmd_tick
                                            and completed[pos][1] == skill):
            pos += 1
        if pos == len(completed):
            return True
        pos += 1
    return False


def ssr(episodes: list[EpisodeRecord], threshold: float = SSR_THRESHOLD) -> float:
    """Skill switching success rate across episodes."""
    if not episodes:
        raise EmptyInput("ssr needs at least one episode")
    failures = sum(episode_switch_failed(ep, threshold) for ep in episodes)
    return 1.0 - failures / len(episodes)


def fgr(contacts: np.ndarray, ref_contacts: np.ndarray, lambda_c: float = 1.0) -> np.ndarray:
    """Per-tick foot-ground contact reward: exp(-lambda_c * mismatch count)."""
    measured = np.asarray(contacts, dtype=float)
    reference = np.asarray(ref_contacts, dtype=float)
    if measured.shape != reference.shape:
        raise DimensionMismatch(f"contact shapes differ: {measured.shape} vs {reference.shape}")
    mismatches = np.abs(measured - reference).sum(axis=-1)
    return np.exp(-lambda_c * mismatches)


@dataclass
class RewardWeights:
    """Per-term weights and exponential kernel scales for the reward mix.

    Terms that need quantities the kinematic state does not carry (per-body
    orientations, torques) are excluded from both the sum and the
    normalization; the report notes the exclusions.
    """

    body_position: float = 1.125
    body_position_feet: float = 2.3625
    vr_3point: float = 1.8
    body_rotation: float = 0.5          # excluded: no per-body orientations
    body_angular_velocity: float = 0.5  # measured on the root
    body_velocity: float = 0.5
    dof_position: float = 0.75
    dof_velocity: float = 0.5
    fgr: float = 1.8
    scales: dict = field(default_factory=lambda: {
        "body_position": 2.0, "body_position_feet": 2.0, "vr_3point": 2.0,
        "body_angular_velocity": 0.5, "body_velocity": 1.0,
        "dof_position": 0.5, "dof_velocity": 0.25, "fgr": 1.0,
    })
    vr_bodies: tuple[int, ...] | None = None  # head + wrists when the dataset declares them

    def excluded_terms(self) -> list[str]:
        out = ["body_rotation"]
        if self.vr_bodies is None:
            out.append("vr_3point")
        return out


def nr(episode: EpisodeRecord, weights: RewardWeights | None = None,
       feet_indices: list[int] | None = None) -> float:
    """Normalized reward: mean per-tick weighted exponential-kernel reward.

    Each included term contributes weight * exp(-scale * error); the sum is
    normalized by the included weights so perfect tracking scores exactly 1.
    Velocity terms need a predecessor tick, so the first tick of each guided
    run is skipped.
    """
    weights = weights or RewardWeights()
    if feet_indices is None:
        feet_indices = list(episode.meta.get("feet_indices", []))
    runs = _guided_runs(episode)
    if not runs:
        raise AlignmentError("episode has no guided ticks")

    terms: list[tuple[str, float, float]] = [
        ("body_position", weights.body_position, weights.scales["body_position"]),
        ("dof_position", weights.dof_position, weights.scales["dof_position"]),
        ("dof_velocity", weights.dof_velocity, weights.scales["dof_velocity"]),
        ("body_velocity", weights.body_velocity, weights.scales["body_velocity"]),
        ("body_angular_velocity", weights.body_angular_velocity,
         weights.scales["body_angular_velocity"]),
        ("fgr", weights.fgr, weights.scales["fgr"]),
    ]
    if feet_indices:
        terms.append(("body_position_feet", weights.body_position_feet,
                      weights.scales["body_position_feet"]))
    if weights.vr_bodies is not None:
        terms.append(("vr_3point", weights.vr_3point, weights.scales["vr_3point"]))
    total_weight = sum(w for _, w, _ in terms)

    rewards: list[float] = []
    for run in runs:
        if len(run) < 2:
            continue
        rob_rel = _relative(np.stack([tr.state.canonical().p_hat for tr, _ in run]))
        ref_rel = _relative(np.stack([ref.p_hat for _, ref in run]))
        rob_q = np.stack([tr.state.q for tr, _ in run])
        ref_q = np.stack([ref.q for _, ref in run])
        rob_p = np.stack([tr.state.p for tr, _ in run])
        ref_p = np.stack([ref.p_hat for _, ref in run])
        rob_w = np.stack([tr.state.root_angvel for tr, _ in run])
        ref_w = np.stack([ref.root_angvel for _, ref in run])
        mism = fgr(np.stack([tr.state.contacts for tr, _ in run]),
                   np.stack([ref.contacts for _, ref in run]), weights.scales["fgr"])

        pos_err = np.linalg.norm(rob_rel - ref_rel, axis=2).mean(axis=1)
        dof_err = np.abs(rob_q - ref_q).mean(axis=1)
        dof_vel_err = np.abs(np.diff(rob_q, axis=0) - np.diff(ref_q, axis=0)).mean(axis=1)
        body_vel_err = np.linalg.norm(np.diff(rob_p, axis=0) - np.diff(ref_p, axis=0),
                                      axis=2).mean(axis=1)
        angvel_err = np.linalg.norm(rob_w - ref_w, axis=1)

        for i in range(1, len(run)):
            value = 0.0
            for name, w, scale in terms:
                if name == "body_position":
                    err = pos_err[i]
                elif name == "body_position_feet":
                    rel_diff = (rob_rel[i] - ref_rel[i])[feet_indices]
                    err = float(np.linalg.norm(rel_diff, axis=1).mean())
                elif name == "vr_3point":
                    rel_diff = (rob_rel[i] - ref_rel[i])[list(weights.vr_bodies)]
                    err = float(np.linalg.norm(rel_diff, axis=1).mean())
                elif name == "dof_position":
                    err = dof_err[i]
                elif name == "dof_velocity":
                    err = dof_vel_err[i - 1]
                elif name == "body_velocity":
                    err = body_vel_err[i - 1]
                elif name == "body_angular_velocity":
                    err = angvel_err[i]
                elif name == "fgr":
                    value += w * mism[i]
                    continue
                value += w * math.exp(-scale * err)
            rewards.append(value / total_weight)
    if not rewards:
        raise AlignmentError("no guided run long enough for velocity terms")
    return float(np.mean(rewards))
