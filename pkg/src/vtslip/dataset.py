"""Grasp episodes on disk, tactile force-to-image conversion and window slicing.

Dataset root layout::

    root/manifest.json          {"format", "episodes": [dir, ...], "splits": {object_id: "train"|"test"}}
    root/<episode>/meta.json    episode_id, object_id, label, grasp_width_mm, rate_hz, visual
    root/<episode>/tactile.csv  one row per frame, 48 floats, taxel-major x,y,z (Newtons)
    root/<episode>/visual.emb   float32 LE embeddings, one record of E values per frame
    root/<episode>/visual.emb.hdr   "dim <E>" and "frames <L>" lines
    root/<episode>/visual/frame_0000.png ...   (image episodes instead of visual.emb)

Text files are ASCII with LF endings; floats use Python's shortest round-trip repr.
"""

from __future__ import annotations

import json
import logging
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import DataError, ValidationError

log = logging.getLogger(__name__)

DATASET_FORMAT = "vtslip-dataset/1"
TAXELS = (4, 4)
MIN_FRAMES = 13


@dataclass(frozen=True)
class TactileCalibration:
    """Per-axis force range (N) mapped onto [0, 1]; ``tare`` subtracts the first frame."""

    x_range: tuple[float, float] = (-5.0, 5.0)
    y_range: tuple[float, float] = (-5.0, 5.0)
    z_range: tuple[float, float] = (0.0, 15.0)
    tare: bool = True

    def __post_init__(self):
        for axis, (lo, hi) in zip("xyz", (self.x_range, self.y_range, self.z_range)):
            if not hi > lo:
                raise ValidationError(f"calibration {axis}-axis needs max > min, got [{lo}, {hi}]")

    @property
    def lows(self) -> np.ndarray:
        return np.array([self.x_range[0], self.y_range[0], self.z_range[0]])

    @property
    def highs(self) -> np.ndarray:
        return np.array([self.x_range[1], self.y_range[1], self.z_range[1]])


@dataclass
class GraspEpisode:
    episode_id: str
    object_id: str
    label: int
    tactile: np.ndarray  # (L, 4, 4, 3) forces in N
    visual: np.ndarray  # (L, E) embeddings or (L, 3, H, W) images in [0, 1]
    grasp_width_mm: float = 0.0
    rate_hz: float = 30.0

    @property
    def n_frames(self) -> int:
        return int(self.tactile.shape[0])

    @property
    def visual_kind(self) -> str:
        return "embedding" if self.visual.ndim == 2 else "images"

    def validate(self, min_frames: int = MIN_FRAMES) -> None:
        if self.label not in (0, 1):
            raise DataError(f"episode {self.episode_id}: label must be 0 (slip) or 1 (stable), got {self.label!r}")
        if self.tactile.ndim != 4 or self.tactile.shape[1:] != (4, 4, 3):
            raise DataError(f"episode {self.episode_id}: tactile must be (L, 4, 4, 3), got {self.tactile.shape}")
        if self.visual.ndim not in (2, 4):
            raise DataError(f"episode {self.episode_id}: visual must be (L, E) or (L, 3, H, W), got {self.visual.shape}")
        nt, nv = self.tactile.shape[0], self.visual.shape[0]
        if nt != nv:
            raise DataError(
                f"episode {self.episode_id}: tactile has {nt} frames but visual has {nv}"
            )
        if nt < min_frames:
            raise DataError(
                f"episode {self.episode_id}: {nt} frames, a {min_frames}-frame window cannot fit"
            )


@dataclass
class SampleWindow:
    x_v: np.ndarray  # (T, ...) visual items
    x_t: np.ndarray  # (T, 3, 4, 4) tactile images
    y: int
    source: tuple[str, int]
    object_id: str = ""

    @property
    def length(self) -> int:
        return int(self.x_t.shape[0])


@dataclass
class EpisodeError:
    episode: str
    message: str

    def __str__(self) -> str:
        return f"{self.episode}: {self.message}"


@dataclass
class LoadedDataset:
    episodes: list[GraspEpisode]
    errors: list[EpisodeError] = field(default_factory=list)
    splits: dict[str, str] = field(default_factory=dict)

    def objects(self, split: str) -> set[str]:
        return {o for o, s in self.splits.items() if s == split}


# ---------------------------------------------------------------------------
# tactile conversion


def forces_to_image(readings, cal: TactileCalibration | None = None, baseline=None) -> np.ndarray:
    """Map ``(4, 4, 3)`` (or ``(L, 4, 4, 3)``) forces to ``(3, 4, 4)`` images in [0, 1].

    Channel c of each taxel is ``clamp((f_c - min_c) / (max_c - min_c), 0, 1)``.
    When ``cal.tare`` is set and a ``baseline`` frame is given it is subtracted first.
    """
    cal = cal or TactileCalibration()
    f = np.asarray(readings, dtype=np.float64)
    single = f.ndim == 3
    if single:
        f = f[None]
    if f.ndim != 4 or f.shape[1:] != (4, 4, 3):
        raise DataError(f"forces_to_image: expected (4, 4, 3) readings, got {np.shape(readings)}")
    bad = np.argwhere(~np.isfinite(f))
    if bad.size:
        frame, r, c, axis = (int(v) for v in bad[0])
        raise DataError(
            f"non-finite tactile reading at frame {frame}, taxel {r * 4 + c} (row {r}, col {c}), axis {'xyz'[axis]}"
        )
    if cal.tare and baseline is not None:
        f = f - np.asarray(baseline, dtype=np.float64)
    img = np.clip((f - cal.lows) / (cal.highs - cal.lows), 0.0, 1.0)
    img = img.transpose(0, 3, 1, 2)
    return img[0] if single else img


def episode_images(ep: GraspEpisode, cal: TactileCalibration | None = None) -> np.ndarray:
    """All tactile frames of ``ep`` as images, tared against frame 0 when calibration asks."""
    cal = cal or TactileCalibration()
    return forces_to_image(ep.tactile, cal, baseline=ep.tactile[0] if cal.tare else None)


# ---------------------------------------------------------------------------
# windows and splits


def window_starts(n_frames: int, length: int, stride: int = 1) -> range:
    if stride < 1:
        raise ValidationError(f"window stride must be >= 1, got {stride}")
    if length < 1 or length > n_frames:
        raise DataError(f"window length {length} does not fit an episode of {n_frames} frames")
    return range(0, n_frames - length + 1, stride)


def make_windows(ep: GraspEpisode, length: int = 13, stride: int = 1,
                 cal: TactileCalibration | None = None) -> list[SampleWindow]:
    """Slide a ``length``-frame window with ``stride``; count is ``(L - length) // stride + 1``."""
    starts = window_starts(ep.n_frames, length, stride)
    images = episode_images(ep, cal)
    return [
        SampleWindow(ep.visual[s: s + length], images[s: s + length], int(ep.label), (ep.episode_id, s), ep.object_id)
        for s in starts
    ]


def split_by_object(
    episodes: Iterable[GraspEpisode],
    train_objects: Iterable[str],
    test_objects: Iterable[str],
    length: int = 13,
    stride: int = 1,
    cal: TactileCalibration | None = None,
) -> tuple[list[SampleWindow], list[SampleWindow]]:
    """Window every episode and route it by object; no object may land on both sides."""
    train_objects, test_objects = set(train_objects), set(test_objects)
    overlap = train_objects & test_objects
    if overlap:
        raise ValidationError(f"objects assigned to both train and test: {sorted(overlap)}")
    episodes = list(episodes)
    uncovered = sorted({ep.object_id for ep in episodes} - train_objects - test_objects)
    if uncovered:
        raise ValidationError(f"objects not assigned to any split: {uncovered}")
    train, test = [], []
    for ep in episodes:
        (train if ep.object_id in train_objects else test).extend(make_windows(ep, length, stride, cal))
    if not test:
        warnings.warn("split_by_object: test set is empty", stacklevel=2)
    log.info("split: %d train windows, %d test windows", len(train), len(test))
    return train, test


def stack_windows(windows: Sequence[SampleWindow], tactile: bool = True, visual: bool = True):
    """Batch arrays ``(x_t, x_v, y)``; a modality not requested comes back as ``None``."""
    if not windows:
        raise ValidationError("cannot stack an empty window list")
    x_t = np.stack([w.x_t for w in windows]) if tactile else None
    x_v = np.stack([w.x_v for w in windows]) if visual else None
    y = np.array([w.y for w in windows], dtype=np.int64)
    return x_t, x_v, y


# ---------------------------------------------------------------------------
# on-disk format


def _fmt(v: float) -> str:
    return repr(float(v))


def write_tactile_csv(path: Path, tactile: np.ndarray) -> None:
    rows = tactile.reshape(tactile.shape[0], 48)
    text = "".join(",".join(_fmt(v) for v in row) + "\n" for row in rows)
    path.write_bytes(text.encode("ascii"))


def read_tactile_csv(path: Path) -> np.ndarray:
    rows = []
    for i, line in enumerate(path.read_text(encoding="ascii").split("\n")):
        if not line:
            continue
        fields = line.split(",")
        if len(fields) != 48:
            raise DataError(f"{path.name} row {i}: expected 48 values, got {len(fields)}")
        try:
            rows.append([float(v) for v in fields])
        except ValueError as exc:
            raise DataError(f"{path.name} row {i}: {exc}") from exc
    if not rows:
        raise DataError(f"{path.name}: no frames")
    return np.array(rows).reshape(len(rows), 4, 4, 3)


def write_embeddings(path: Path, emb: np.ndarray) -> None:
    emb = np.ascontiguousarray(emb, dtype="<f4")
    path.write_bytes(emb.tobytes())
    Path(str(path) + ".hdr").write_bytes(f"dim {emb.shape[1]}\nframes {emb.shape[0]}\n".encode("ascii"))


def read_embeddings(path: Path) -> np.ndarray:
    hdr_path = Path(str(path) + ".hdr")
    if not hdr_path.exists():
        raise DataError(f"{path.name}: missing header {hdr_path.name}")
    hdr = {}
    for line in hdr_path.read_text(encoding="ascii").splitlines():
        if line.strip():
            key, _, value = line.partition(" ")
            hdr[key] = int(value)
    dim, frames = hdr.get("dim"), hdr.get("frames")
    if not dim or frames is None:
        raise DataError(f"{hdr_path.name}: needs 'dim' and 'frames' entries")
    raw = path.read_bytes()
    if len(raw) != 4 * dim * frames:
        raise DataError(f"{path.name}: {len(raw)} bytes, header promises {frames} frames x {dim} floats")
    return np.frombuffer(raw, dtype="<f4").astype(np.float64).reshape(frames, dim)


def _read_images(folder: Path) -> np.ndarray:
    from PIL import Image

    files = sorted(folder.glob("frame_*.png"))
    if not files:
        raise DataError(f"{folder.name}/: no frame_*.png images")
    frames = []
    for f in files:
        with Image.open(f) as im:
            frames.append(np.asarray(im.convert("RGB"), dtype=np.float64).transpose(2, 0, 1) / 255.0)
    shapes = {fr.shape for fr in frames}
    if len(shapes) != 1:
        raise DataError(f"{folder.name}/: images differ in size {sorted(shapes)}")
    return np.stack(frames)


def _write_images(folder: Path, images: np.ndarray) -> None:
    from PIL import Image

    folder.mkdir(parents=True, exist_ok=True)
    for i, img in enumerate(images):
        px = np.clip(np.rint(img.transpose(1, 2, 0) * 255.0), 0, 255).astype(np.uint8)
        Image.fromarray(px, "RGB").save(folder / f"frame_{i:04d}.png")


def _json_bytes(obj) -> bytes:
    return (json.dumps(obj, indent=2, sort_keys=True) + "\n").encode("ascii")


def write_episode(folder: Path, ep: GraspEpisode) -> None:
    folder.mkdir(parents=True, exist_ok=True)
    meta = {
        "episode_id": ep.episode_id,
        "object_id": ep.object_id,
        "label": int(ep.label),
        "grasp_width_mm": float(ep.grasp_width_mm),
        "rate_hz": float(ep.rate_hz),
        "visual": ep.visual_kind,
    }
    (folder / "meta.json").write_bytes(_json_bytes(meta))
    write_tactile_csv(folder / "tactile.csv", ep.tactile)
    if ep.visual_kind == "embedding":
        write_embeddings(folder / "visual.emb", ep.visual)
    else:
        _write_images(folder / "visual", ep.visual)


def read_episode(folder: Path, min_frames: int = MIN_FRAMES) -> GraspEpisode:
    meta_path = folder / "meta.json"
    if not meta_path.exists():
        raise DataError("missing meta.json")
    try:
        meta = json.loads(meta_path.read_text(encoding="ascii"))
    except ValueError as exc:
        raise DataError(f"meta.json: {exc}") from exc
    for key in ("episode_id", "object_id", "label"):
        if key not in meta:
            raise DataError(f"meta.json lacks {key!r}")
    if not (folder / "tactile.csv").exists():
        raise DataError("missing tactile.csv")
    tactile = read_tactile_csv(folder / "tactile.csv")
    kind = meta.get("visual", "embedding")
    if kind == "embedding":
        if not (folder / "visual.emb").exists():
            raise DataError("missing visual.emb (no visual data paired with tactile frames)")
        visual = read_embeddings(folder / "visual.emb")
    elif kind == "images":
        if not (folder / "visual").is_dir():
            raise DataError("missing visual/ image folder (no visual data paired with tactile frames)")
        visual = _read_images(folder / "visual")
    else:
        raise DataError(f"meta.json: unknown visual kind {kind!r}")
    ep = GraspEpisode(
        episode_id=str(meta["episode_id"]),
        object_id=str(meta["object_id"]),
        label=meta["label"],
        tactile=tactile,
        visual=visual,
        grasp_width_mm=float(meta.get("grasp_width_mm", 0.0)),
        rate_hz=float(meta.get("rate_hz", 30.0)),
    )
    ep.validate(min_frames)
    return ep


def load_dataset(root, manifest: str = "manifest.json", min_frames: int = MIN_FRAMES) -> LoadedDataset:
    """Read every episode listed in the manifest, in manifest order.

    A bad episode becomes an :class:`EpisodeError` record; the others still load.
    """
    root = Path(root)
    mpath = root / manifest
    if not mpath.exists():
        raise DataError(f"{mpath}: manifest not found")
    try:
        man = json.loads(mpath.read_text(encoding="ascii"))
    except ValueError as exc:
        raise DataError(f"{mpath}: {exc}") from exc
    if not isinstance(man.get("episodes"), list):
        raise DataError(f"{mpath}: 'episodes' must be a list of directories")
    out = LoadedDataset([], [], {str(k): str(v) for k, v in man.get("splits", {}).items()})
    for name in man["episodes"]:
        folder = root / name
        try:
            if not folder.is_dir():
                raise DataError("episode directory not found")
            out.episodes.append(read_episode(folder, min_frames))
        except DataError as exc:
            out.errors.append(EpisodeError(name, str(exc)))
            log.warning("episode %s rejected: %s", name, exc)
    return out


def write_dataset(root, episodes: Sequence[GraspEpisode], splits: dict[str, str] | None = None,
                  dirnames: Sequence[str] | None = None) -> Path:
    root = Path(root)
    root.mkdir(parents=True, exist_ok=True)
    names = list(dirnames) if dirnames is not None else [ep.episode_id for ep in episodes]
    if len(set(names)) != len(names):
        raise ValidationError("episode directory names must be unique")
    for name, ep in zip(names, episodes):
        write_episode(root / name, ep)
    manifest = {
        "format": DATASET_FORMAT,
        "episodes": names,
        "splits": dict(sorted((splits or {}).items())),
    }
    (root / "manifest.json").write_bytes(_json_bytes(manifest))
    return root
