"""TCN and multi-scale TCN stacks built from dilated causal convolutions.

An MS-TCN layer splits its ``C`` output channels across ``n`` branches.  Every
branch sees all input channels, runs its own causal convolution (own kernel
size and dilation) and the branch outputs are concatenated in declared order.
A plain TCN is the ``n == 1`` special case.

Parameters live in a flat ``{name: Tensor}`` dict so the model can enumerate,
freeze and serialize them; names follow ``<prefix>layer<i>.branch<j>.weight``.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import Mapping, Sequence

import numpy as np

from . import ops
from .errors import ConfigError
from .tensor import Tensor, add

ACTIVATIONS = ("relu", "none")


@dataclass(frozen=True)
class MsTcnLayerConfig:
    in_channels: int
    out_channels: int
    branches: int = 1
    kernel_size: int | tuple[int, ...] = 3
    dilations: tuple[int, ...] = (1,)
    # explicit per-branch widths; only needed when out_channels % branches != 0
    branch_channels: tuple[int, ...] | None = None

    def __post_init__(self):
        if self.in_channels < 1 or self.out_channels < 1 or self.branches < 1:
            raise ConfigError(f"channel and branch counts must be positive: {self}")
        object.__setattr__(self, "dilations", tuple(int(d) for d in self.dilations))
        if len(self.dilations) != self.branches:
            raise ConfigError(
                f"{self.branches} branches need {self.branches} dilations, got {list(self.dilations)}"
            )
        if any(d < 1 for d in self.dilations):
            raise ConfigError(f"dilations must be >= 1, got {list(self.dilations)}")
        ks = self.kernel_size
        ks = (int(ks),) * self.branches if isinstance(ks, (int, np.integer)) else tuple(int(k) for k in ks)
        if len(ks) != self.branches or any(k < 1 for k in ks):
            raise ConfigError(f"bad per-branch kernel sizes {list(ks)} for {self.branches} branches")
        object.__setattr__(self, "kernel_size", ks[0] if len(set(ks)) == 1 else ks)
        if self.branch_channels is None:
            if self.out_channels % self.branches:
                raise ConfigError(
                    f"out_channels {self.out_channels} is not divisible by {self.branches} branches; "
                    "pass branch_channels explicitly"
                )
        else:
            bc = tuple(int(c) for c in self.branch_channels)
            object.__setattr__(self, "branch_channels", bc)
            if len(bc) != self.branches or any(c < 1 for c in bc):
                raise ConfigError(f"branch_channels {list(bc)} must list {self.branches} positive widths")
            if sum(bc) != self.out_channels:
                raise ConfigError(f"branch_channels {list(bc)} do not sum to {self.out_channels}")

    @property
    def kernel_sizes(self) -> tuple[int, ...]:
        ks = self.kernel_size
        return (ks,) * self.branches if isinstance(ks, int) else tuple(ks)

    @property
    def widths(self) -> tuple[int, ...]:
        if self.branch_channels is not None:
            return self.branch_channels
        return (self.out_channels // self.branches,) * self.branches


@dataclass(frozen=True)
class MsTcnConfig:
    layers: tuple[MsTcnLayerConfig, ...]
    activation: str = "relu"
    residual: bool = False

    def __post_init__(self):
        object.__setattr__(self, "layers", tuple(self.layers))
        if not self.layers:
            raise ConfigError("an MS-TCN needs at least one layer")
        if self.activation not in ACTIVATIONS:
            raise ConfigError(f"activation must be one of {ACTIVATIONS}, got {self.activation!r}")
        for i, (a, b) in enumerate(zip(self.layers, self.layers[1:])):
            if a.out_channels != b.in_channels:
                raise ConfigError(
                    f"layer {i} emits {a.out_channels} channels but layer {i + 1} expects {b.in_channels}"
                )

    @property
    def in_channels(self) -> int:
        return self.layers[0].in_channels

    @property
    def out_channels(self) -> int:
        return self.layers[-1].out_channels

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: Mapping) -> MsTcnConfig:
        layers = []
        for ld in d["layers"]:
            ld = dict(ld)
            if isinstance(ld.get("kernel_size"), list):
                ld["kernel_size"] = tuple(ld["kernel_size"])
            ld["dilations"] = tuple(ld["dilations"])
            if ld.get("branch_channels") is not None:
                ld["branch_channels"] = tuple(ld["branch_channels"])
            layers.append(MsTcnLayerConfig(**ld))
        return cls(tuple(layers), activation=d.get("activation", "relu"), residual=bool(d.get("residual", False)))


def even_split(channels: int, branches: int) -> tuple[int, ...]:
    """Split ``channels`` as evenly as possible, remainder to the leading branches."""
    base, rem = divmod(channels, branches)
    return tuple(base + (1 if j < rem else 0) for j in range(branches))


def mstcn_config(
    in_channels: int,
    channels: int,
    n_layers: int,
    branches: int,
    kernel_size: int = 3,
    dilations: Sequence[int] | None = None,
    activation: str = "relu",
    residual: bool = False,
) -> MsTcnConfig:
    """Uniform stack: every layer has ``branches`` branches with dilations ``2**j`` by default."""
    dil = tuple(dilations) if dilations is not None else tuple(2 ** j for j in range(branches))
    bc = None if channels % branches == 0 else even_split(channels, branches)
    layers = []
    c_in = in_channels
    for _ in range(n_layers):
        layers.append(MsTcnLayerConfig(c_in, channels, branches, kernel_size, dil, bc))
        c_in = channels
    return MsTcnConfig(tuple(layers), activation=activation, residual=residual)


def tcn_config(
    in_channels: int,
    channels: int,
    kernel_size: int = 3,
    dilations: Sequence[int] = (1, 2, 4),
    activation: str = "relu",
    residual: bool = False,
) -> MsTcnConfig:
    """Single-branch stack with one dilation per layer (1, 2, 4, ... as in a classic TCN)."""
    layers = []
    c_in = in_channels
    for d in dilations:
        layers.append(MsTcnLayerConfig(c_in, channels, 1, kernel_size, (d,)))
        c_in = channels
    return MsTcnConfig(tuple(layers), activation=activation, residual=residual)


def receptive_field(cfg: MsTcnConfig) -> int:
    """Frames that can influence one output: ``1 + sum over layers of max_j (k_j - 1) * d_j``."""
    return 1 + sum(
        max((k - 1) * d for k, d in zip(layer.kernel_sizes, layer.dilations)) for layer in cfg.layers
    )


def param_names(cfg: MsTcnConfig, prefix: str = "") -> list[tuple[str, tuple[int, ...]]]:
    out = []
    for i, layer in enumerate(cfg.layers):
        for j, (width, k) in enumerate(zip(layer.widths, layer.kernel_sizes)):
            base = f"{prefix}layer{i}.branch{j}"
            out.append((f"{base}.weight", (width, layer.in_channels, k)))
            out.append((f"{base}.bias", (width,)))
    return out


def init_params(cfg: MsTcnConfig, rng: np.random.Generator, prefix: str = "") -> dict[str, Tensor]:
    """Fan-in uniform init, ``U(-1/sqrt(C_in * k), 1/sqrt(C_in * k))`` per branch."""
    params = {}
    for name, shape in param_names(cfg, prefix):
        if name.endswith(".weight"):
            bound = 1.0 / np.sqrt(shape[1] * shape[2])
        params[name] = Tensor(rng.uniform(-bound, bound, size=shape), requires_grad=True, name=name)
    return params


def _activate(x: Tensor, activation: str) -> Tensor:
    return ops.relu(x) if activation == "relu" else x


def mstcn_layer_forward(
    x: Tensor,
    layer: MsTcnLayerConfig,
    params: Mapping[str, Tensor],
    prefix: str = "",
    activation: str = "relu",
    residual: bool = False,
    index: int = 0,
) -> Tensor:
    """Run one multi-scale layer: per-branch causal conv, concatenate, (residual), activate."""
    out = None
    for j, dil in enumerate(layer.dilations):
        base = f"{prefix}layer{index}.branch{j}"
        y = ops.conv1d_causal(x, params[f"{base}.weight"], params[f"{base}.bias"], dilation=dil)
        out = y if out is None else ops.concat_channels(out, y)
    if residual and x.shape == out.shape:
        out = add(out, x)
    return _activate(out, activation)


def mstcn_forward(
    x: Tensor,
    cfg: MsTcnConfig,
    params: Mapping[str, Tensor],
    prefix: str = "",
    trace: list | None = None,
) -> Tensor:
    """Apply every layer in order. If ``trace`` is a list, each layer output is appended."""
    h = x
    for i, layer in enumerate(cfg.layers):
        h = mstcn_layer_forward(h, layer, params, prefix, cfg.activation, cfg.residual, index=i)
        if trace is not None:
            trace.append(h)
    return h


def tcn_forward(x: Tensor, cfg: MsTcnConfig, params: Mapping[str, Tensor], prefix: str = "",
                trace: list | None = None) -> Tensor:
    bad = [i for i, layer in enumerate(cfg.layers) if layer.branches != 1]
    if bad:
        raise ConfigError(f"tcn_forward needs single-branch layers; layers {bad} have several branches")
    return mstcn_forward(x, cfg, params, prefix, trace)
