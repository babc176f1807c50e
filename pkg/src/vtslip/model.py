"""CNN-MSTCN slip detector: encoders -> per-modality MS-TCN -> fusion MS-TCN -> FC head.

Labels: 0 = slip, 1 = stable.  Tensors flow as ``(batch, channels, time)``.
"""

from __future__ import annotations

import hashlib
import json
import struct
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Mapping, NamedTuple

import numpy as np

from . import ops, temporal
from .encoders import (
    FEATURE_DIM,
    TactileEncoder,
    VisualEncoder,
    VisualEncoderSpec,
    encode_sequence,
    tactile_param_shapes,
    visual_param_shapes,
)
from .errors import ConfigError, DataError, ValidationError
from .temporal import MsTcnConfig
from .tensor import Tensor, mean, take_last

MODALITIES = ("tactile_only", "visual_only", "fused")
READOUTS = ("last", "mean")
N_CLASSES = 2
SLIP, STABLE = 0, 1


def default_modality_mstcn(kernel_size: int = 5) -> MsTcnConfig:
    """2 layers x 2 branches, k=5, 64 channels; branch dilations 1 and 2."""
    return temporal.mstcn_config(FEATURE_DIM, FEATURE_DIM, n_layers=2, branches=2, kernel_size=kernel_size)


def default_fusion_mstcn() -> MsTcnConfig:
    """3 layers x 3 branches, k=3, 128 -> 64 channels; branch widths 22/21/21."""
    return temporal.mstcn_config(2 * FEATURE_DIM, FEATURE_DIM, n_layers=3, branches=3, kernel_size=3)


@dataclass(frozen=True)
class SlipModelConfig:
    modality: str = "fused"
    seq_len: int = 13
    visual: VisualEncoderSpec = field(default_factory=VisualEncoderSpec)
    visual_mstcn: MsTcnConfig = field(default_factory=default_modality_mstcn)
    tactile_mstcn: MsTcnConfig = field(default_factory=default_modality_mstcn)
    fusion_mstcn: MsTcnConfig = field(default_factory=default_fusion_mstcn)
    visual_frozen: bool = False
    readout: str = "last"

    def __post_init__(self):
        if self.modality not in MODALITIES:
            raise ConfigError(f"modality must be one of {MODALITIES}, got {self.modality!r}")
        if self.readout not in READOUTS:
            raise ConfigError(f"readout must be one of {READOUTS}, got {self.readout!r}")
        if self.seq_len < 1:
            raise ConfigError(f"seq_len must be positive, got {self.seq_len}")
        if self.visual.frozen != self.visual_frozen:
            object.__setattr__(self, "visual", replace(self.visual, frozen=self.visual_frozen))
        for name in ("visual_mstcn", "tactile_mstcn"):
            cfg = getattr(self, name)
            if cfg.in_channels != FEATURE_DIM or cfg.out_channels != FEATURE_DIM:
                raise ConfigError(f"{name} must map {FEATURE_DIM} -> {FEATURE_DIM} channels")
        if self.modality == "fused":
            want = self.visual_mstcn.out_channels + self.tactile_mstcn.out_channels
            if self.fusion_mstcn.in_channels != want:
                raise ConfigError(f"fusion_mstcn expects {self.fusion_mstcn.in_channels} channels, concat gives {want}")

    @property
    def uses_tactile(self) -> bool:
        return self.modality in ("tactile_only", "fused")

    @property
    def uses_visual(self) -> bool:
        return self.modality in ("visual_only", "fused")

    @property
    def head_in(self) -> int:
        if self.modality == "fused":
            return self.fusion_mstcn.out_channels
        return (self.tactile_mstcn if self.modality == "tactile_only" else self.visual_mstcn).out_channels

    def to_dict(self) -> dict:
        return {
            "modality": self.modality,
            "seq_len": self.seq_len,
            "visual": {"mode": self.visual.mode, "embed_dim": self.visual.embed_dim},
            "visual_mstcn": self.visual_mstcn.to_dict(),
            "tactile_mstcn": self.tactile_mstcn.to_dict(),
            "fusion_mstcn": self.fusion_mstcn.to_dict(),
            "visual_frozen": self.visual_frozen,
            "readout": self.readout,
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> SlipModelConfig:
        v = d.get("visual", {})
        kw = {}
        for key in ("visual_mstcn", "tactile_mstcn", "fusion_mstcn"):
            if key in d:
                kw[key] = MsTcnConfig.from_dict(d[key])
        return cls(
            modality=d.get("modality", "fused"),
            seq_len=int(d.get("seq_len", 13)),
            visual=VisualEncoderSpec(v.get("mode", "embedding_passthrough"), int(v.get("embed_dim", 512))),
            visual_frozen=bool(d.get("visual_frozen", False)),
            readout=d.get("readout", "last"),
            **kw,
        )

    def digest(self) -> bytes:
        return hashlib.sha256(json.dumps(self.to_dict(), sort_keys=True).encode()).digest()


class ParamEntry(NamedTuple):
    name: str
    shape: tuple[int, ...]
    trainable: bool


class Prediction(NamedTuple):
    logits: np.ndarray
    label: int
    confidence: float


def parameter_manifest(cfg: SlipModelConfig) -> list[ParamEntry]:
    """Every parameter tensor in a stable order, with frozen visual-backbone entries flagged."""
    entries: list[ParamEntry] = []
    if cfg.uses_tactile:
        entries += [ParamEntry(n, s, True) for n, s in tactile_param_shapes("tactile.")]
        entries += [ParamEntry(n, s, True) for n, s in temporal.param_names(cfg.tactile_mstcn, "tactile_tcn.")]
    if cfg.uses_visual:
        entries += [
            ParamEntry(n, s, not (backbone and cfg.visual_frozen))
            for n, s, backbone in visual_param_shapes(cfg.visual, "visual.")
        ]
        entries += [ParamEntry(n, s, True) for n, s in temporal.param_names(cfg.visual_mstcn, "visual_tcn.")]
    if cfg.modality == "fused":
        entries += [ParamEntry(n, s, True) for n, s in temporal.param_names(cfg.fusion_mstcn, "fusion_tcn.")]
    entries += [ParamEntry("head.weight", (N_CLASSES, cfg.head_in), True), ParamEntry("head.bias", (N_CLASSES,), True)]
    return entries


def init_params(cfg: SlipModelConfig, seed: int = 0) -> dict[str, Tensor]:
    """Fan-in uniform init drawn from one seeded stream in manifest order."""
    rng = np.random.default_rng(seed)
    params = {}
    bound = 1.0
    for name, shape, trainable in parameter_manifest(cfg):
        if name.endswith(".weight"):
            bound = 1.0 / np.sqrt(int(np.prod(shape[1:])))
        params[name] = Tensor(rng.uniform(-bound, bound, size=shape), requires_grad=trainable, name=name)
    return params


class SlipModel:
    def __init__(self, cfg: SlipModelConfig, params: Mapping[str, Tensor] | None = None, seed: int = 0):
        self.cfg = cfg
        self.params = dict(params) if params is not None else init_params(cfg, seed)
        manifest = parameter_manifest(cfg)
        missing = [e.name for e in manifest if e.name not in self.params]
        if missing:
            raise ConfigError(f"parameters missing for this config: {missing[:5]}")
        for e in manifest:
            p = self.params[e.name]
            if p.shape != e.shape:
                raise ConfigError(f"parameter {e.name} has shape {p.shape}, manifest says {e.shape}")
            p.requires_grad = e.trainable

    @property
    def manifest(self) -> list[ParamEntry]:
        return parameter_manifest(self.cfg)

    def trainable(self) -> dict[str, Tensor]:
        return {n: p for n, p in self.params.items() if p.requires_grad}

    def _check(self, x, what: str) -> np.ndarray:
        if x is None:
            raise ValidationError(f"{self.cfg.modality} model needs {what} data")
        x = np.asarray(x, dtype=np.float64)
        if x.ndim < 2 or x.shape[1] != self.cfg.seq_len:
            raise ValidationError(
                f"{what} windows must be (batch, {self.cfg.seq_len}, ...), got shape {x.shape}"
            )
        return x

    def forward(self, x_t=None, x_v=None, trace: dict | None = None) -> Tensor:
        """Logits ``(batch, 2)`` for tactile windows ``(B, T, 3, 4, 4)`` and/or visual ``(B, T, ...)``.

        Inputs for an unused modality are never touched.  ``trace`` (a dict)
        collects every intermediate ``(B, C, T)`` feature map by name.
        """
        cfg = self.cfg
        feats = {}
        if cfg.uses_tactile:
            xt = self._check(x_t, "tactile")
            h = encode_sequence(xt, TactileEncoder(self.params, "tactile."))
            feats["tactile"] = self._temporal(h, cfg.tactile_mstcn, "tactile", trace)
        if cfg.uses_visual:
            xv = self._check(x_v, "visual")
            h = encode_sequence(xv, VisualEncoder(cfg.visual, self.params, "visual."))
            feats["visual"] = self._temporal(h, cfg.visual_mstcn, "visual", trace)
        if cfg.modality == "fused":
            if feats["visual"].shape[0] != feats["tactile"].shape[0]:
                raise ValidationError("visual and tactile batches differ in size")
            fused = ops.concat_channels(feats["visual"], feats["tactile"])
            if trace is not None:
                trace["fusion_in"] = fused
            out = self._temporal(fused, cfg.fusion_mstcn, "fusion", trace)
        else:
            out = feats["tactile" if cfg.modality == "tactile_only" else "visual"]
        z = take_last(out, axis=-1) if cfg.readout == "last" else mean(out, axis=-1)
        logits = ops.linear(z, self.params["head.weight"], self.params["head.bias"])
        if trace is not None:
            trace["readout"] = z
            trace["logits"] = logits
        return logits

    def _temporal(self, h: Tensor, cfg: MsTcnConfig, name: str, trace: dict | None) -> Tensor:
        layers: list = []
        if trace is not None:
            trace[f"{name}_features"] = h
        out = temporal.mstcn_forward(h, cfg, self.params, f"{name}_tcn.", trace=layers)
        if trace is not None:
            for i, layer_out in enumerate(layers):
                trace[f"{name}_tcn.layer{i}"] = layer_out
        return out

    def forward_windows(self, windows, trace: dict | None = None) -> Tensor:
        from .dataset import stack_windows

        x_t, x_v, _ = stack_windows(windows, tactile=self.cfg.uses_tactile, visual=self.cfg.uses_visual)
        return self.forward(x_t, x_v, trace)

    def predict(self, window) -> Prediction:
        return prediction_from_logits(self.forward_windows([window]).data[0])

    def predict_labels(self, x_t=None, x_v=None) -> np.ndarray:
        return np.argmax(self.forward(x_t, x_v).data, axis=1)


def prediction_from_logits(logits) -> Prediction:
    """Argmax label (ties go to the lowest index, i.e. slip) with its softmax probability."""
    z = np.asarray(logits, dtype=np.float64)
    label = int(np.argmax(z))
    return Prediction(z, label, float(ops.softmax(z)[label]))


# ---------------------------------------------------------------------------
# checkpoints

MAGIC = b"VTSLIPCK"
FORMAT_VERSION = 1


def save_checkpoint(model: SlipModel, path) -> Path:
    """Write header (magic, version, config digest, config JSON) then parameters in manifest order."""
    path = Path(path)
    cfg_json = json.dumps(model.cfg.to_dict(), sort_keys=True).encode()
    manifest = model.manifest
    chunks = [MAGIC, struct.pack("<I", FORMAT_VERSION), model.cfg.digest(),
              struct.pack("<I", len(cfg_json)), cfg_json, struct.pack("<I", len(manifest))]
    for entry in manifest:
        name = entry.name.encode()
        data = np.ascontiguousarray(model.params[entry.name].data, dtype="<f8")
        chunks += [struct.pack("<I", len(name)), name, struct.pack("<I", data.ndim),
                   struct.pack(f"<{data.ndim}I", *data.shape), data.tobytes()]
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(b"".join(chunks))
    return path


def load_checkpoint(path, cfg: SlipModelConfig | None = None) -> SlipModel:
    """Rebuild a model; if ``cfg`` is given its digest must match the file's."""
    path = Path(path)
    buf = path.read_bytes()
    pos = 0

    def take(n):
        nonlocal pos
        if pos + n > len(buf):
            raise DataError(f"{path}: truncated checkpoint")
        out = buf[pos: pos + n]
        pos += n
        return out

    if take(8) != MAGIC:
        raise DataError(f"{path}: not a vtslip checkpoint")
    (version,) = struct.unpack("<I", take(4))
    if version != FORMAT_VERSION:
        raise DataError(f"{path}: unsupported checkpoint version {version}")
    digest = take(32)
    (n_cfg,) = struct.unpack("<I", take(4))
    stored = SlipModelConfig.from_dict(json.loads(take(n_cfg)))
    if stored.digest() != digest:
        raise DataError(f"{path}: config digest does not match embedded config")
    if cfg is not None and cfg.digest() != digest:
        raise ValidationError(f"{path}: checkpoint was written for a different model config")
    (count,) = struct.unpack("<I", take(4))
    params = {}
    for _ in range(count):
        (n_name,) = struct.unpack("<I", take(4))
        name = take(n_name).decode()
        (ndim,) = struct.unpack("<I", take(4))
        shape = struct.unpack(f"<{ndim}I", take(4 * ndim))
        n = int(np.prod(shape)) if ndim else 1
        data = np.frombuffer(take(8 * n), dtype="<f8").astype(np.float64).reshape(shape)
        params[name] = Tensor(data, name=name)
    if pos != len(buf):
        raise DataError(f"{path}: trailing bytes after parameter records")
    return SlipModel(stored, params)
