"""Multi-skill motion datasets: loading, validation, canonicalization, synthesis.

Conventions
-----------
* Body positions ``p`` are stored world-frame on disk, together with the root
  ground position ``root_xy`` and heading ``root_yaw``; body 0 is the root.
* Canonicalization removes the global x-y translation and the heading by a
  z-axis rotation, leaving ``p_hat`` with the root at x = y = 0.
* Joint velocities in synthetic data are central finite differences of the
  joint positions at the sequence fps.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .errors import ConfigError, EmptySkill, SchemaError
from .serialization import digest, dump_document, read_document, write_text
from .validation import as_bool_array, as_float_array, check_positive

DATA_SCHEMA = "sgdata/1"


@dataclass(frozen=True)
class Frame:
    """One reference or robot state in world frame."""

    q: np.ndarray            # joint positions, radians, (J,)
    dq: np.ndarray           # joint velocities, rad/s, (J,)
    p: np.ndarray            # body positions, meters, (B, 3), world frame
    root_xy: np.ndarray      # root ground position, meters, (2,)
    root_yaw: float          # heading, radians
    root_angvel: np.ndarray  # root angular velocity, rad/s, (3,)
    contacts: np.ndarray     # per-foot contact flags, (|feet|,), bool

    @property
    def n_joints(self) -> int:
        return self.q.shape[0]

    @property
    def n_bodies(self) -> int:
        return self.p.shape[0]


@dataclass(frozen=True)
class CanonicalFrame:
    """A frame with global x-y translation and heading removed.

    ``q``, ``dq``, ``root_angvel`` and ``contacts`` are carried over unchanged;
    ``p_hat`` holds the de-translated, de-rotated body positions.
    """

    q: np.ndarray
    dq: np.ndarray
    p_hat: np.ndarray
    root_angvel: np.ndarray
    contacts: np.ndarray


@dataclass
class SkillSequence:
    """An ordered reference sequence for one named skill."""

    skill_id: str
    fps: float
    frames: list[Frame]

    def __len__(self) -> int:
        return len(self.frames)

    def validate(self) -> None:
        if len(self.frames) < 2:
            raise EmptySkill(f"skill {self.skill_id!r}: needs >= 2 frames, has {len(self.frames)}")
        check_positive(self.fps, f"skill {self.skill_id!r}: fps")
        j = self.frames[0].n_joints
        b = self.frames[0].n_bodies
        g = self.frames[0].contacts.shape[0]
        for t, f in enumerate(self.frames):
            if f.n_joints != j or f.dq.shape[0] != j:
                raise SchemaError(f"skill {self.skill_id!r} frame {t}: joint count varies")
            if f.n_bodies != b:
                raise SchemaError(f"skill {self.skill_id!r} frame {t}: body count varies")
            if f.contacts.shape[0] != g:
                raise SchemaError(f"skill {self.skill_id!r} frame {t}: contact count varies")
            values = np.concatenate([f.q, f.dq, f.p.ravel(), f.root_xy,
                                     [f.root_yaw], f.root_angvel])
            if not np.all(np.isfinite(values)):
                raise SchemaError(f"skill {self.skill_id!r} frame {t}: non-finite values")


@dataclass
class Dataset:
    """A validated collection of skill sequences sharing one skeleton."""

    skills: list[SkillSequence]
    feet_indices: list[int] = field(default_factory=list)

    def validate(self) -> None:
        if not self.skills:
            raise SchemaError("dataset has no skills")
        ids = [s.skill_id for s in self.skills]
        if len(set(ids)) != len(ids):
            raise SchemaError(f"duplicate skill ids: {ids}")
        for seq in self.skills:
            seq.validate()
        j = self.skills[0].frames[0].n_joints
        b = self.skills[0].frames[0].n_bodies
        fps = self.skills[0].fps
        for seq in self.skills:
            f0 = seq.frames[0]
            if f0.n_joints != j or f0.n_bodies != b:
                raise SchemaError(f"skill {seq.skill_id!r}: skeleton differs from {self.skills[0].skill_id!r}")
            if seq.fps != fps:
                raise SchemaError(f"skill {seq.skill_id!r}: fps {seq.fps} differs from {fps}")
            if any(f.contacts.shape[0] != len(self.feet_indices) for f in seq.frames):
                raise SchemaError(f"skill {seq.skill_id!r}: contacts do not match feet_indices")
        for i in self.feet_indices:
            if not 0 <= i < b:
                raise SchemaError(f"feet index {i} outside body range 0..{b - 1}")

    @property
    def skill_ids(self) -> list[str]:
        return [s.skill_id for s in self.skills]

    @property
    def n_joints(self) -> int:
        return self.skills[0].frames[0].n_joints

    @property
    def n_bodies(self) -> int:
        return self.skills[0].frames[0].n_bodies

    @property
    def fps(self) -> float:
        return self.skills[0].fps

    def sequence(self, skill_id: str) -> SkillSequence:
        for seq in self.skills:
            if seq.skill_id == skill_id:
                return seq
        raise KeyError(skill_id)

    def content_digest(self) -> str:
        return digest([_frame_record(s.skill_id, s.fps, f) for s in self.skills for f in s.frames])


def yaw_rotation(yaw: float) -> np.ndarray:
    """Rotation matrix about the vertical axis."""
    c, s = np.cos(yaw), np.sin(yaw)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def canonicalize(frame: Frame) -> CanonicalFrame:
    """Strip global x-y translation and heading from a frame.

    p_hat = R(-root_yaw) @ (p - [root_xy, 0]); q and dq pass through.
    """
    shifted = frame.p.copy()
    shifted[:, 0] -= frame.root_xy[0]
    shifted[:, 1] -= frame.root_xy[1]
    p_hat = shifted @ yaw_rotation(-frame.root_yaw).T
    return CanonicalFrame(
        q=frame.q,
        dq=frame.dq,
        p_hat=p_hat,
        root_angvel=frame.root_angvel,
        contacts=frame.contacts,
    )


def label_contacts(seq: SkillSequence, h_c: float = 0.05, v_c: float = 0.3,
                   feet_indices: list[int] | None = None) -> SkillSequence:
    """Self-label foot contacts: in contact iff the foot is low and slow.

    Height is the world z of the foot body; speed is the central finite
    difference of the foot position at the sequence fps (one-sided at the
    ends). A foot is in contact at frame t iff height < h_c and speed < v_c.
    """
    if not feet_indices:
        raise ConfigError("label_contacts: feet_indices is empty")
    pos = np.stack([f.p[feet_indices] for f in seq.frames])  # (T, G, 3)
    vel = np.empty_like(pos)
    vel[1:-1] = (pos[2:] - pos[:-2]) * (seq.fps / 2.0)
    vel[0] = (pos[1] - pos[0]) * seq.fps
    vel[-1] = (pos[-1] - pos[-2]) * seq.fps
    speed = np.linalg.norm(vel, axis=2)
    height = pos[:, :, 2]
    flags = (height < h_c) & (speed < v_c)
    frames = [replace(f, contacts=flags[t].copy()) for t, f in enumerate(seq.frames)]
    return SkillSequence(seq.skill_id, seq.fps, frames)


# ---------------------------------------------------------------------------
# dataset file format ("sgdata/1")
# ---------------------------------------------------------------------------

def _frame_record(skill: str, fps: float, f: Frame) -> dict:
    return {
        "skill": skill,
        "fps": fps,
        "q": f.q,
        "dq": f.dq,
        "p": f.p,
        "root_xy": f.root_xy,
        "root_yaw": f.root_yaw,
        "root_angvel": f.root_angvel,
        "contacts": f.contacts,
    }


def save_dataset(dataset: Dataset, path: str | Path) -> None:
    dataset.validate()
    header = {"feet_indices": list(dataset.feet_indices)}
    records = (_frame_record(s.skill_id, s.fps, f) for s in dataset.skills for f in s.frames)
    write_text(path, dump_document(DATA_SCHEMA, header, records))


def _frame_from_record(rec: dict, lineno: int, n_feet: int) -> tuple[str, float, Frame]:
    try:
        skill = rec["skill"]
        fps = float(rec["fps"])
        q = as_float_array(rec["q"], f"line {lineno}: q")
        dq = as_float_array(rec["dq"], f"line {lineno}: dq")
        p = as_float_array(rec["p"], f"line {lineno}: p")
        root_xy = as_float_array(rec["root_xy"], f"line {lineno}: root_xy", shape=(2,))
        root_yaw = float(rec["root_yaw"])
        root_angvel = as_float_array(rec["root_angvel"], f"line {lineno}: root_angvel", shape=(3,))
        contacts = as_bool_array(rec["contacts"], f"line {lineno}: contacts", length=n_feet)
    except KeyError as exc:
        raise SchemaError(f"line {lineno}: missing field {exc}") from exc
    if q.ndim != 1 or dq.shape != q.shape:
        raise SchemaError(f"line {lineno}: q/dq must be equal-length vectors")
    if p.ndim != 2 or p.shape[1] != 3:
        raise SchemaError(f"line {lineno}: p must be (B, 3)")
    if not np.isfinite(root_yaw):
        raise SchemaError(f"line {lineno}: root_yaw not finite")
    return skill, fps, Frame(q, dq, p, root_xy, root_yaw, root_angvel, contacts)


def load_dataset(path: str | Path) -> Dataset:
    """Load and validate an "sgdata/1" file."""
    header, records = read_document(path, DATA_SCHEMA)
    feet = [int(i) for i in header.get("feet_indices", [])]
    by_skill: dict[str, SkillSequence] = {}
    for lineno, rec in enumerate(records, start=2):
        skill, fps, frame = _frame_from_record(rec, lineno, len(feet))
        seq = by_skill.get(skill)
        if seq is None:
            by_skill[skill] = SkillSequence(skill, fps, [frame])
        else:
            if fps != seq.fps:
                raise SchemaError(f"skill {skill!r}: inconsistent fps")
            seq.frames.append(frame)
    dataset = Dataset(skills=list(by_skill.values()), feet_indices=feet)
    dataset.validate()
    return dataset


# ---------------------------------------------------------------------------
# synthetic datasets
# ---------------------------------------------------------------------------

@dataclass
class SynthesisConfig:
    """Generator settings for synthetic multi-skill datasets.

    Each skill is a closed excursion ("petal") from a shared rest pose: the
    sequence starts at rest, ramps out into a skill-specific region of joint
    and body-position space, and returns to rest at the end. ``home_hold``
    frames at each end are pinned to the rest pose exactly, which gives every
    pair of skills kinematically coincident switch points near the sequence
    boundaries while interiors stay well separated.
    """

    n_skills: int = 4
    n_frames: int = 161
    n_joints: int = 12
    n_bodies: int = 8
    n_feet: int = 2
    fps: float = 30.0
    amp_q: float = 2.0            # peak joint excursion, radians
    amp_p: float = 2.5            # peak body displacement, meters
    wiggle: float = 0.25          # relative in-petal oscillation
    cycles: float = 1.5           # oscillation cycles per sequence
    petal_sharpness: float = 0.35  # envelope exponent; smaller = faster exits
    home_hold: int = 2            # frames pinned exactly at rest, each end
    walk_speed: float = 0.15      # root drift, m/s
    yaw_amp: float = 0.4          # heading oscillation, radians
    base_height: float = 0.8      # root z, meters
    contact_height: float = 0.05
    contact_speed: float = 0.3

    def validate(self) -> None:
        if self.n_skills < 1:
            raise ConfigError("n_skills must be >= 1")
        if self.n_frames < 2:
            raise ConfigError("n_frames must be >= 2")
        if self.n_joints < 1 or self.n_bodies < 2:
            raise ConfigError("need n_joints >= 1 and n_bodies >= 2")
        if not 0 <= self.n_feet <= self.n_bodies - 1:
            raise ConfigError("n_feet must fit among non-root bodies")
        check_positive(self.fps, "fps")
        check_positive(self.petal_sharpness, "petal_sharpness")
        if self.home_hold < 0 or 2 * self.home_hold >= self.n_frames:
            raise ConfigError("home_hold must leave interior frames")


def synthesize_dataset(config: SynthesisConfig, seed: int) -> Dataset:
    """Generate a deterministic synthetic dataset per the config.

    Joint velocities are defined as central finite differences of the joint
    positions at the configured fps (one-sided at the ends), so they are
    exactly consistent with the q series.
    """
    config.validate()
    rng = np.random.default_rng(seed)
    K, T, J, B = config.n_skills, config.n_frames, config.n_joints, config.n_bodies

    q_home = rng.uniform(-0.3, 0.3, size=J)
    base_p = np.zeros((B, 3))
    base_p[:, 0] = np.linspace(-0.4, 0.4, B)
    base_p[:, 1] = rng.uniform(-0.3, 0.3, size=B)
    base_p[:, 2] = rng.uniform(0.5, 1.2, size=B)
    base_p[0] = (0.0, 0.0, config.base_height)
    feet = list(range(B - config.n_feet, B)) if config.n_feet else []
    for i in feet:
        base_p[i, 2] = 0.02  # feet rest on the ground

    s = np.linspace(0.0, 1.0, T)
    envelope = np.power(np.sin(np.pi * s) ** 2, config.petal_sharpness)
    hold = config.home_hold
    if hold:
        envelope[:hold] = 0.0
        envelope[T - hold:] = 0.0

    skills = []
    for k in range(K):
        dir_q = rng.normal(size=J)
        dir_q /= np.abs(dir_q).max()
        dir_p = rng.normal(size=(B, 3))
        dir_p /= np.linalg.norm(dir_p, axis=1, keepdims=True)
        dir_p[0] = 0.0  # root body stays pinned in the canonical frame
        phase_q = rng.uniform(0, 2 * np.pi, size=J)
        phase_p = rng.uniform(0, 2 * np.pi, size=(B, 1))
        heading = rng.uniform(0, 2 * np.pi)
        yaw_phase = rng.uniform(0, 2 * np.pi)

        osc_q = 1.0 + config.wiggle * np.sin(2 * np.pi * config.cycles * s[:, None] + phase_q[None, :])
        q = q_home[None, :] + config.amp_q * envelope[:, None] * dir_q[None, :] * osc_q

        osc_p = 1.0 + config.wiggle * np.sin(2 * np.pi * config.cycles * s[:, None, None] + phase_p[None, :, :])
        p_hat = base_p[None, :, :] + config.amp_p * envelope[:, None, None] * dir_p[None, :, :] * osc_p
        for i in feet:
            p_hat[:, i, 2] = 0.02 + np.abs(p_hat[:, i, 2] - 0.02)  # keep feet above ground

        dq = np.empty_like(q)
        dq[1:-1] = (q[2:] - q[:-2]) * (config.fps / 2.0)
        dq[0] = (q[1] - q[0]) * config.fps
        dq[-1] = (q[-1] - q[-2]) * config.fps

        yaw = config.yaw_amp * np.sin(2 * np.pi * s + yaw_phase)
        dyaw = np.empty(T)
        dyaw[1:-1] = (yaw[2:] - yaw[:-2]) * (config.fps / 2.0)
        dyaw[0] = (yaw[1] - yaw[0]) * config.fps
        dyaw[-1] = (yaw[-1] - yaw[-2]) * config.fps
        root_xy = (config.walk_speed / config.fps) * np.arange(T)[:, None] * np.array(
            [np.cos(heading), np.sin(heading)])[None, :]

        frames = []
        for t in range(T):
            rot = yaw_rotation(yaw[t])
            p_world = p_hat[t] @ rot.T
            p_world[:, 0] += root_xy[t, 0]
            p_world[:, 1] += root_xy[t, 1]
            frames.append(Frame(
                q=q[t].copy(),
                dq=dq[t].copy(),
                p=p_world,
                root_xy=root_xy[t].copy(),
                root_yaw=float(yaw[t]),
                root_angvel=np.array([0.0, 0.0, dyaw[t]]),
                contacts=np.zeros(len(feet), dtype=bool),
            ))
        seq = SkillSequence(f"skill_{k}", config.fps, frames)
        if feet:
            seq = label_contacts(seq, config.contact_height, config.contact_speed, feet)
        skills.append(seq)

    dataset = Dataset(skills=skills, feet_indices=feet)
    dataset.validate()
    return dataset
