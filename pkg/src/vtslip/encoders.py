"""Per-frame spatial encoders: the 4x4 tactile CNN and the pluggable visual encoder.

Both end in a linear projection to 64 features per frame, which is what the
temporal stacks and the fusion concatenation expect.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping

import numpy as np

from . import ops
from .errors import ConfigError, DataError, DimensionError, ValidationError
from .tensor import Tensor, reshape, transpose

FEATURE_DIM = 64
TACTILE_FRAME = (3, 4, 4)
VISUAL_IMAGE = (3, 32, 32)

# (name, weight shape, padding) for the tactile CNN.  conv3 runs unpadded and
# the 1x1 identity pool after it is dropped; that is what yields the 1x1x32 output.
TACTILE_LAYERS = (
    ("conv1", (8, 3, 3, 3), 1),
    ("conv2", (16, 8, 3, 3), 1),
    ("conv3", (32, 16, 1, 1), 0),
)
SMALL_CNN_LAYERS = (
    ("conv1", (8, 3, 3, 3), 1),
    ("conv2", (16, 8, 3, 3), 1),
    ("conv3", (32, 16, 3, 3), 1),
)
VISUAL_MODES = ("embedding_passthrough", "small_cnn")


@dataclass(frozen=True)
class VisualEncoderSpec:
    mode: str = "embedding_passthrough"
    embed_dim: int = 512
    frozen: bool = False

    def __post_init__(self):
        if self.mode not in VISUAL_MODES:
            raise ConfigError(f"visual mode must be one of {VISUAL_MODES}, got {self.mode!r}")
        if self.mode == "small_cnn":
            object.__setattr__(self, "embed_dim", 32 * 4 * 4)
        elif self.embed_dim < 1:
            raise ConfigError(f"embed_dim must be positive, got {self.embed_dim}")

    @property
    def frame_shape(self) -> tuple[int, ...]:
        return VISUAL_IMAGE if self.mode == "small_cnn" else (self.embed_dim,)


def _conv_bound(shape) -> float:
    return 1.0 / np.sqrt(int(np.prod(shape[1:])))


def tactile_param_shapes(prefix: str = "tactile.") -> list[tuple[str, tuple[int, ...]]]:
    out = []
    for name, shape, _ in TACTILE_LAYERS:
        out += [(f"{prefix}{name}.weight", shape), (f"{prefix}{name}.bias", (shape[0],))]
    out += [(f"{prefix}proj.weight", (FEATURE_DIM, 32)), (f"{prefix}proj.bias", (FEATURE_DIM,))]
    return out


def visual_param_shapes(spec: VisualEncoderSpec, prefix: str = "visual.") -> list[tuple[str, tuple[int, ...], bool]]:
    """``(name, shape, is_backbone)`` for the visual encoder."""
    out = []
    if spec.mode == "small_cnn":
        for name, shape, _ in SMALL_CNN_LAYERS:
            out += [
                (f"{prefix}backbone.{name}.weight", shape, True),
                (f"{prefix}backbone.{name}.bias", (shape[0],), True),
            ]
    out += [
        (f"{prefix}proj.weight", (FEATURE_DIM, spec.embed_dim), False),
        (f"{prefix}proj.bias", (FEATURE_DIM,), False),
    ]
    return out


def _init(shapes, rng: np.random.Generator, trainable=None) -> dict[str, Tensor]:
    params = {}
    bound = 1.0
    for name, shape in shapes:
        if name.endswith(".weight"):
            bound = _conv_bound(shape)
        req = True if trainable is None else trainable[name]
        params[name] = Tensor(rng.uniform(-bound, bound, size=shape), requires_grad=req, name=name)
    return params


def init_tactile_params(rng: np.random.Generator, prefix: str = "tactile.") -> dict[str, Tensor]:
    return _init(tactile_param_shapes(prefix), rng)


def init_visual_params(spec: VisualEncoderSpec, rng: np.random.Generator, prefix: str = "visual.") -> dict[str, Tensor]:
    entries = visual_param_shapes(spec, prefix)
    trainable = {name: not (backbone and spec.frozen) for name, _, backbone in entries}
    return _init([(n, s) for n, s, _ in entries], rng, trainable)


def _check_frames(x: np.ndarray, frame_shape: tuple[int, ...], what: str) -> None:
    if x.shape[1:] != frame_shape:
        raise DimensionError(f"{what}: input frames have shape {x.shape[1:]}, expected {frame_shape}")


def tactile_encode(frames, params: Mapping[str, Tensor], prefix: str = "tactile.",
                   trace: dict | None = None) -> Tensor:
    """Encode tactile images ``(3, 4, 4)`` or ``(N, 3, 4, 4)`` to 64 features each.

    conv1 3x3/pad1 + relu -> pool 2x2 -> conv2 3x3/pad1 + relu -> pool 2x2 ->
    conv3 1x1 + relu -> flatten (32) -> linear (64).  With ``trace`` given, the
    intermediate tensors are recorded under their stage names.
    """
    x = frames if isinstance(frames, Tensor) else Tensor(frames)
    single = x.ndim == 3
    if single:
        x = reshape(x, (1,) + x.shape)
    if x.ndim != 4:
        raise DimensionError(f"tactile input: expected (3, 4, 4) frames, got shape {x.shape}")
    _check_frames(x.data, TACTILE_FRAME, "tactile input")

    h = x
    for (name, _, pad), pool in zip(TACTILE_LAYERS, ("pool1", "pool2", None)):
        try:
            h = ops.relu(ops.conv2d(h, params[f"{prefix}{name}.weight"], params[f"{prefix}{name}.bias"],
                                    stride=1, padding=pad))
            if trace is not None:
                trace[name] = h
            if pool:
                h = ops.maxpool2d(h, (2, 2), (2, 2))
                if trace is not None:
                    trace[pool] = h
        except DimensionError as exc:
            raise DimensionError(f"tactile stage {name}: {exc}") from exc
    n = h.shape[0]
    h = reshape(h, (n, 32))
    if trace is not None:
        trace["flatten"] = h
    try:
        out = ops.linear(h, params[f"{prefix}proj.weight"], params[f"{prefix}proj.bias"])
    except DimensionError as exc:
        raise DimensionError(f"tactile stage proj: {exc}") from exc
    return reshape(out, (FEATURE_DIM,)) if single else out


def visual_encode(frames, spec: VisualEncoderSpec, params: Mapping[str, Tensor],
                  prefix: str = "visual.") -> Tensor:
    """Encode visual frames to 64 features each.

    Passthrough mode takes precomputed embeddings ``(E,)`` / ``(N, E)``; small_cnn
    takes images ``(3, 32, 32)`` / ``(N, 3, 32, 32)`` with pixels in [0, 1].
    """
    x = frames if isinstance(frames, Tensor) else Tensor(frames)
    core = len(spec.frame_shape)
    single = x.ndim == core
    if single:
        x = reshape(x, (1,) + x.shape)
    if x.ndim != core + 1 or x.shape[1:] != spec.frame_shape:
        raise ValidationError(
            f"visual encoder in {spec.mode} mode expects frames of shape {spec.frame_shape}, got {x.shape}"
        )
    h = x
    if spec.mode == "small_cnn":
        for name, _, pad in SMALL_CNN_LAYERS:
            h = ops.relu(ops.conv2d(h, params[f"{prefix}backbone.{name}.weight"],
                                    params[f"{prefix}backbone.{name}.bias"], stride=1, padding=pad))
            h = ops.maxpool2d(h, (2, 2), (2, 2))
        h = reshape(h, (h.shape[0], spec.embed_dim))
    out = ops.linear(h, params[f"{prefix}proj.weight"], params[f"{prefix}proj.bias"])
    return reshape(out, (FEATURE_DIM,)) if single else out


class TactileEncoder:
    frame_shape = TACTILE_FRAME

    def __init__(self, params: Mapping[str, Tensor], prefix: str = "tactile."):
        self.params = params
        self.prefix = prefix

    def __call__(self, frames) -> Tensor:
        return tactile_encode(frames, self.params, self.prefix)


class VisualEncoder:
    def __init__(self, spec: VisualEncoderSpec, params: Mapping[str, Tensor], prefix: str = "visual."):
        self.spec = spec
        self.params = params
        self.prefix = prefix
        self.frame_shape = spec.frame_shape

    def __call__(self, frames) -> Tensor:
        return visual_encode(frames, self.spec, self.params, self.prefix)


def encode_sequence(frames, encoder) -> Tensor:
    """Encode every frame of ``(T, *frame)`` or ``(B, T, *frame)`` to a ``(.., 64, T)`` feature map.

    Frames are encoded independently, so column ``t`` depends only on frame ``t``.
    """
    arr = np.asarray(frames.data if isinstance(frames, Tensor) else frames, dtype=np.float64)
    fs = tuple(encoder.frame_shape)
    single = arr.ndim == len(fs) + 1
    if single:
        arr = arr[None]
    if arr.ndim != len(fs) + 2:
        raise DimensionError(f"encode_sequence: expected (B, T, *{fs}) frames, got shape {arr.shape}")
    b, t_len = arr.shape[:2]
    if t_len < 1:
        raise ValidationError("encode_sequence: need at least one frame")
    if arr.shape[2:] != fs:
        raise DimensionError(f"encode_sequence: frame 0 has shape {arr.shape[2:]}, expected {fs}")
    finite = np.isfinite(arr.reshape(b, t_len, -1)).all(axis=(0, 2))
    if not finite.all():
        raise DataError(f"encode_sequence: frame {int(np.argmin(finite))} contains non-finite values")
    feats = encoder(arr.reshape((b * t_len,) + fs))
    out = transpose(reshape(feats, (b, t_len, FEATURE_DIM)), (0, 2, 1))
    return reshape(out, (FEATURE_DIM, t_len)) if single else out
