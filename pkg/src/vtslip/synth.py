"""Deterministic synthetic grasp-and-lift episodes.

Each episode has three phases on a 30 Hz clock: one pre-contact frame (the tare
baseline), a gripper-closing ramp, then the lift.  During the lift a stable
grasp carries a constant shear of half the object weight per finger, while a
slipping grasp shows a stick-slip sawtooth: shear builds to the static
friction limit and drops to the kinetic level, with the normal force decaying.
The visual channel is an 8-D embedding of the object's height, its velocity
and its lag behind the gripper.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .dataset import GraspEpisode, LoadedDataset, load_dataset, write_dataset
from .errors import DataError, ValidationError

CLOSE_FRAMES = 3  # contact ramp length
LIFT_ONSET = 4  # first lift frame
LIFT_MM = 30.0
KINETIC_RATIO = 0.55  # kinetic / static friction; sets the sawtooth drop depth
NORMAL_DECAY = 0.3  # fraction of grip lost while slipping
BASE_FEATURES = 4
_MIX_SEED = 20240611


@dataclass(frozen=True)
class SynthObjectSpec:
    object_id: str
    stiffness: float = 1.0
    weight_n: float = 4.0
    friction_mu: float = 0.6
    seed: int = 0
    width_mm: float = 50.0

    def __post_init__(self):
        vals = (self.stiffness, self.weight_n, self.friction_mu, self.width_mm)
        if not all(np.isfinite(v) for v in vals):
            raise ValidationError(f"{self.object_id}: object parameters must be finite")
        if not 0 < self.stiffness <= 1:
            raise ValidationError(f"{self.object_id}: stiffness must lie in (0, 1], got {self.stiffness}")
        if self.weight_n <= 0 or self.friction_mu <= 0:
            raise ValidationError(f"{self.object_id}: weight and friction must be positive")


@dataclass(frozen=True)
class SynthEpisodeParams:
    grip_force_n: float
    slip: bool
    frames: int = 20
    rate_hz: float = 30.0
    noise_sigma: float = 0.0
    seed: int = 0
    embed_dim: int = 8

    def __post_init__(self):
        if self.frames < 13:
            raise ValidationError(f"episodes need at least 13 frames, got {self.frames}")
        if not self.grip_force_n > 0:
            raise ValidationError(f"grip force must be positive, got {self.grip_force_n}")
        if self.noise_sigma < 0:
            raise ValidationError(f"noise_sigma must be >= 0, got {self.noise_sigma}")
        if self.embed_dim < BASE_FEATURES:
            raise ValidationError(f"embed_dim must be >= {BASE_FEATURES}")

    @property
    def label(self) -> int:
        return 0 if self.slip else 1


def contact_profile(stiffness: float) -> np.ndarray:
    """Per-taxel load share (sums to 3): soft objects spread the load over more taxels."""
    sigma = 0.7 + 1.3 * (1.0 - stiffness)
    r = np.arange(4) - 1.5
    g = np.exp(-(r[:, None] ** 2 + r[None, :] ** 2) / (2 * sigma ** 2))
    return 3.0 * g / g.sum()


def effective_grip(grip_force_n: float, stiffness: float) -> float:
    # soft objects absorb part of the squeeze in deformation
    return grip_force_n * (0.4 + 0.6 * stiffness)


def critical_grip(obj: SynthObjectSpec) -> float:
    """Grip at which static friction exactly carries half the weight per finger."""
    return obj.weight_n / (2.0 * obj.friction_mu * (0.4 + 0.6 * obj.stiffness))


def force_traces(obj: SynthObjectSpec, p: SynthEpisodeParams, rng: np.random.Generator):
    """Noiseless total normal and shear per finger, one value per frame."""
    L = p.frames
    t = np.arange(L)
    n_peak = effective_grip(p.grip_force_n, obj.stiffness)
    normal = n_peak * np.clip(t / CLOSE_FRAMES, 0.0, 1.0)
    shear = np.zeros(L)
    lift = t >= LIFT_ONSET
    if not p.slip:
        shear[lift] = obj.weight_n / 2.0
        return normal, shear
    since = np.maximum(t - LIFT_ONSET, 0)
    normal = np.where(lift, n_peak * (1.0 - NORMAL_DECAY * (1.0 - np.exp(-since / 5.0))), normal)
    # sawtooth: build for `build` frames up to the static limit, then drop to the kinetic level
    build = int(rng.integers(2, 4))
    start = level = 0.0
    phase = 0
    for i in range(LIFT_ONSET, L):
        peak = min(obj.friction_mu * normal[i], obj.weight_n / 2.0)
        if phase < build:
            level = start + (peak - start) * (phase + 1) / build
            phase += 1
        else:
            level = KINETIC_RATIO * peak
            start, phase = level, 0
        shear[i] = level
    return normal, shear


def _mixing(embed_dim: int) -> np.ndarray:
    return np.random.default_rng(_MIX_SEED).normal(0.0, 0.5, size=(embed_dim, BASE_FEATURES))


def height_traces(obj: SynthObjectSpec, p: SynthEpisodeParams, rng: np.random.Generator):
    """Gripper and object heights (mm) per frame."""
    t = np.arange(p.frames)
    gripper = LIFT_MM * np.clip((t - LIFT_ONSET + 1) / (p.frames - LIFT_ONSET), 0.0, 1.0)
    if not p.slip:
        return gripper, gripper.copy()
    follow = rng.uniform(0.25, 0.5)
    drift = rng.uniform(0.4, 0.9) * np.maximum(t - LIFT_ONSET, 0)
    return gripper, np.maximum(follow * gripper - drift, 0.0)


def generate_episode(obj: SynthObjectSpec, p: SynthEpisodeParams, episode_id: str | None = None) -> GraspEpisode:
    """Build one episode; identical ``(obj, p)`` always give identical arrays."""
    rng = np.random.default_rng([obj.seed, p.seed])
    normal, shear = force_traces(obj, p, rng)
    gripper, height = height_traces(obj, p, rng)

    share = contact_profile(obj.stiffness)
    tactile = np.zeros((p.frames, 4, 4, 3))
    tactile[..., 1] = shear[:, None, None] * share
    tactile[..., 2] = normal[:, None, None] * share

    velocity = np.diff(height, prepend=height[0])
    base = np.stack([height / 10.0, velocity, gripper / 10.0, (gripper - height) / 10.0], axis=1)
    visual = base @ _mixing(p.embed_dim).T

    if p.noise_sigma > 0:
        tactile = tactile + rng.normal(0.0, p.noise_sigma, size=tactile.shape)
        visual = visual + rng.normal(0.0, p.noise_sigma, size=visual.shape)
    # stored as float32 on disk; round now so the in-memory episode matches a reload
    visual = visual.astype(np.float32).astype(np.float64)

    deformation = 0.5 * p.grip_force_n * (1.0 - obj.stiffness)
    return GraspEpisode(
        episode_id=episode_id or f"{obj.object_id}_s{p.seed}",
        object_id=obj.object_id,
        label=p.label,
        tactile=tactile,
        visual=visual,
        grasp_width_mm=round(max(obj.width_mm - deformation, 0.0), 2),
        rate_hz=p.rate_hz,
    )


def shear_drop_total(ep_or_shear) -> float:
    """Sum of frame-to-frame decreases of total shear; the reference slip labeler."""
    if isinstance(ep_or_shear, GraspEpisode):
        shear = ep_or_shear.tactile[..., 1].sum(axis=(1, 2))
    else:
        shear = np.asarray(ep_or_shear, dtype=np.float64)
    return float(np.clip(-np.diff(shear), 0.0, None).sum())


def random_objects(n_objects: int, master_seed: int = 0) -> list[SynthObjectSpec]:
    rng = np.random.default_rng(master_seed)
    objs = []
    for i in range(n_objects):
        objs.append(SynthObjectSpec(
            object_id=f"obj{i:02d}",
            stiffness=float(rng.uniform(0.2, 1.0)),
            weight_n=float(rng.uniform(2.0, 8.0)),
            friction_mu=float(rng.uniform(0.4, 1.0)),
            seed=int(rng.integers(0, 2 ** 31)),
            width_mm=float(rng.uniform(30.0, 75.0)),
        ))
    return objs


def corpus_episodes(
    n_objects: int = 50,
    episodes_per_object: int = 20,
    slip_fraction: float = 0.5,
    master_seed: int = 0,
    frames: int = 20,
    noise_sigma: float = 0.05,
    test_fraction: float = 0.2,
    embed_dim: int = 8,
) -> tuple[list[GraspEpisode], dict[str, str]]:
    """Episodes plus the object -> "train"/"test" split, all derived from ``master_seed``."""
    if not 0.0 <= slip_fraction <= 1.0:
        raise ValidationError(f"slip_fraction must lie in [0, 1], got {slip_fraction}")
    if n_objects < 1 or episodes_per_object < 1:
        raise ValidationError("need at least one object and one episode per object")
    objs = random_objects(n_objects, master_seed)
    rng = np.random.default_rng([master_seed, 1])
    n_test = int(round(n_objects * test_fraction))
    order = rng.permutation(n_objects)
    test_ids = {objs[i].object_id for i in order[:n_test]}
    splits = {o.object_id: ("test" if o.object_id in test_ids else "train") for o in objs}

    n_slip = int(round(episodes_per_object * slip_fraction))
    episodes = []
    for obj in objs:
        slip_idx = set(rng.permutation(episodes_per_object)[:n_slip].tolist())
        crit = critical_grip(obj)
        for k in range(episodes_per_object):
            slip = k in slip_idx
            factor = rng.uniform(0.5, 0.85) if slip else rng.uniform(1.3, 2.0)
            params = SynthEpisodeParams(
                grip_force_n=float(np.clip(crit * factor, 1.0, 30.0)),
                slip=slip, frames=frames, noise_sigma=noise_sigma, seed=k, embed_dim=embed_dim,
            )
            episodes.append(generate_episode(obj, params, episode_id=f"{obj.object_id}_ep{k:02d}"))
    return episodes, splits


def generate_corpus(root, n_objects: int = 50, episodes_per_object: int = 20, slip_fraction: float = 0.5,
                    master_seed: int = 0, **kwargs) -> Path:
    """Write a synthetic corpus in the dataset on-disk format and return its root."""
    episodes, splits = corpus_episodes(n_objects, episodes_per_object, slip_fraction, master_seed, **kwargs)
    root = Path(root)
    try:
        return write_dataset(root, episodes, splits)
    except OSError as exc:
        raise DataError(f"cannot write corpus under {root}: {exc}") from exc


def load_corpus(root) -> LoadedDataset:
    return load_dataset(root)


def directory_digest(root) -> str:
    """SHA-256 over every file's relative path and bytes, in sorted order."""
    root = Path(root)
    h = hashlib.sha256()
    for f in sorted(p for p in root.rglob("*") if p.is_file()):
        h.update(f.relative_to(root).as_posix().encode())
        h.update(b"\0")
        h.update(f.read_bytes())
    return h.hexdigest()
