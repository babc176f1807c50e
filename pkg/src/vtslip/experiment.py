"""Ablation presets: sequence-length sweep, modality ablation, TCN vs MS-TCN.

An experiment file is INI-style text::

    [experiment]
    preset = modality_ablation
    seeds = 0, 1, 2

    [data]
    # either an existing dataset root ...
    root = path/to/dataset
    # ... or a synthetic corpus generated in memory
    n_objects = 50
    episodes_per_object = 20
    noise_sigma = 0.05
    master_seed = 0
    val_objects = 4
    window_stride = 1

    [train]
    lr = 1e-3
    batch_size = 8
    epochs = 3

    [model]
    readout = last
    seq_lens = 8, 9, 10, 11, 12, 13

Every variant of a preset trains on the same object split with the same seeds.
"""

from __future__ import annotations

import configparser
import csv
import json
import logging
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from . import synth, temporal
from .dataset import GraspEpisode, load_dataset, split_by_object
from .encoders import FEATURE_DIM, VisualEncoderSpec
from .errors import UsageError, ValidationError
from .metrics import EvalReport
from .model import SlipModelConfig, save_checkpoint
from .train import SYNTHETIC_LR, TrainConfig, WindowArrays, evaluate, train

log = logging.getLogger(__name__)

PRESETS = ("seq_len_sweep", "modality_ablation", "arch_comparison")
METRIC_NAMES = ("precision", "recall", "f1", "accuracy")
MODALITY_VARIANTS = (("tactile", "tactile_only"), ("visual", "visual_only"), ("visual-tactile", "fused"))


@dataclass
class DataSpec:
    root: str | None = None
    n_objects: int = 50
    episodes_per_object: int = 20
    slip_fraction: float = 0.5
    master_seed: int = 0
    frames: int = 20
    noise_sigma: float = 0.05
    test_fraction: float = 0.2
    val_objects: int = 4
    window_stride: int = 1


@dataclass
class ExperimentSpec:
    preset: str
    seeds: list[int] = field(default_factory=lambda: [0])
    data: DataSpec = field(default_factory=DataSpec)
    train: TrainConfig = field(default_factory=lambda: TrainConfig(lr=SYNTHETIC_LR, epochs=3))
    seq_lens: list[int] = field(default_factory=lambda: list(range(8, 14)))
    seq_len: int = 13
    readout: str = "last"
    visual_mode: str = "embedding_passthrough"

    def __post_init__(self):
        if self.preset not in PRESETS:
            raise UsageError(f"unknown preset {self.preset!r}; choose one of: {', '.join(PRESETS)}")


def _ints(text: str) -> list[int]:
    return [int(v) for v in text.replace(",", " ").split()]


def parse_spec(text: str) -> ExperimentSpec:
    cp = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    cp.read_string(text)
    if not cp.has_option("experiment", "preset"):
        raise UsageError(f"experiment file needs [experiment] preset = one of {', '.join(PRESETS)}")
    exp = cp["experiment"]
    kw: dict = {"preset": exp["preset"].strip()}
    if "seeds" in exp:
        kw["seeds"] = _ints(exp["seeds"])

    data = DataSpec()
    if cp.has_section("data"):
        d = cp["data"]
        conv = {"root": str, "n_objects": int, "episodes_per_object": int, "slip_fraction": float,
                "master_seed": int, "frames": int, "noise_sigma": float, "test_fraction": float,
                "val_objects": int, "window_stride": int}
        for key in d:
            if key not in conv:
                raise UsageError(f"[data] has unknown key {key!r}")
            setattr(data, key, conv[key](d[key]))
    kw["data"] = data

    tr = {"lr": SYNTHETIC_LR, "epochs": 3}
    if cp.has_section("train"):
        t = cp["train"]
        conv = {"lr": float, "batch_size": int, "epochs": int, "checkpoint_every": int,
                "early_stop_patience": int}
        for key in t:
            if key not in conv:
                raise UsageError(f"[train] has unknown key {key!r}")
            tr[key] = conv[key](t[key])
    kw["train"] = TrainConfig(**tr)

    if cp.has_section("model"):
        m = cp["model"]
        for key in m:
            if key == "seq_lens":
                kw["seq_lens"] = _ints(m[key])
            elif key == "seq_len":
                kw["seq_len"] = int(m[key])
            elif key in ("readout", "visual_mode"):
                kw[key] = m[key].strip()
            else:
                raise UsageError(f"[model] has unknown key {key!r}")
    return ExperimentSpec(**kw)


def load_spec(path) -> ExperimentSpec:
    path = Path(path)
    if not path.exists():
        raise UsageError(f"experiment file {path} not found")
    return parse_spec(path.read_text())


# ---------------------------------------------------------------------------
# model variants


def tcn_model_config(base: SlipModelConfig) -> SlipModelConfig:
    """Single-branch counterpart of ``base`` with the same parameter count.

    Each MS-TCN branch sees every input channel, so a one-branch layer with the
    same total width and kernel size has exactly as many weights.  Dilations
    grow per layer instead of per branch.
    """
    def convert(cfg: temporal.MsTcnConfig) -> temporal.MsTcnConfig:
        k = cfg.layers[0].kernel_sizes[0]
        return temporal.tcn_config(cfg.in_channels, cfg.out_channels, k,
                                   tuple(2 ** i for i in range(len(cfg.layers))), cfg.activation, cfg.residual)

    return replace(base, visual_mstcn=convert(base.visual_mstcn), tactile_mstcn=convert(base.tactile_mstcn),
                   fusion_mstcn=convert(base.fusion_mstcn))


def param_count(cfg: SlipModelConfig) -> int:
    from .model import parameter_manifest

    return sum(int(np.prod(e.shape)) for e in parameter_manifest(cfg))


def variants(spec: ExperimentSpec, embed_dim: int) -> list[tuple[str, SlipModelConfig]]:
    visual = VisualEncoderSpec(spec.visual_mode, embed_dim)
    base = SlipModelConfig(seq_len=spec.seq_len, visual=visual, readout=spec.readout)
    if spec.preset == "seq_len_sweep":
        return [(f"T={t}", replace(base, seq_len=t)) for t in spec.seq_lens]
    if spec.preset == "modality_ablation":
        return [(name, replace(base, modality=mod)) for name, mod in MODALITY_VARIANTS]
    return [("CNN-TCN", tcn_model_config(base)), ("CNN-MSTCN", base)]


# ---------------------------------------------------------------------------
# data


@dataclass
class ExperimentData:
    episodes: list[GraspEpisode]
    train_objects: list[str]
    val_objects: list[str]
    test_objects: list[str]

    @property
    def embed_dim(self) -> int:
        v = self.episodes[0].visual
        return int(v.shape[1]) if v.ndim == 2 else FEATURE_DIM


def prepare_data(spec: DataSpec) -> ExperimentData:
    if spec.root:
        loaded = load_dataset(spec.root)
        if loaded.errors:
            log.warning("%d episodes rejected while loading %s", len(loaded.errors), spec.root)
        episodes, splits = loaded.episodes, loaded.splits
    else:
        episodes, splits = synth.corpus_episodes(
            spec.n_objects, spec.episodes_per_object, spec.slip_fraction, spec.master_seed,
            frames=spec.frames, noise_sigma=spec.noise_sigma, test_fraction=spec.test_fraction,
        )
    if not episodes:
        raise ValidationError("no usable episodes")
    train_objs = sorted(o for o, s in splits.items() if s == "train")
    test_objs = sorted(o for o, s in splits.items() if s == "test")
    if set(train_objs) & set(test_objs):
        raise ValidationError("train and test object sets overlap")
    rng = np.random.default_rng([spec.master_seed, 2])
    n_val = min(spec.val_objects, max(len(train_objs) - 1, 0))
    val_objs = sorted(rng.choice(train_objs, size=n_val, replace=False).tolist()) if n_val else []
    train_objs = [o for o in train_objs if o not in val_objs]
    return ExperimentData(episodes, train_objs, val_objs, test_objs)


def window_sets(data: ExperimentData, seq_len: int, stride: int = 1):
    """(train, val, test) windows; object sets are checked disjoint first."""
    tr, va, te = set(data.train_objects), set(data.val_objects), set(data.test_objects)
    if tr & va or tr & te or va & te:
        raise ValidationError("object split is not disjoint")
    train_w, rest = split_by_object(data.episodes, tr, va | te, seq_len, stride)
    val_w = [w for w in rest if w.object_id in va]
    test_w = [w for w in rest if w.object_id in te]
    return train_w, val_w, test_w


# ---------------------------------------------------------------------------
# running


@dataclass
class VariantRun:
    variant: str
    seed: int
    report: EvalReport
    history: list[dict]
    best_epoch: int


def run_variant(name: str, model_cfg: SlipModelConfig, tcfg: TrainConfig, data: ExperimentData, seed: int,
                stride: int = 1, checkpoint_dir: Path | None = None) -> VariantRun:
    train_w, val_w, test_w = window_sets(data, model_cfg.seq_len, stride)
    cfg = replace(tcfg, seed=seed, seq_len=model_cfg.seq_len, modality=model_cfg.modality)
    arrays = [WindowArrays.from_windows(w, model_cfg.uses_tactile, model_cfg.uses_visual)
              for w in (train_w, val_w, test_w)]
    result = train(model_cfg, cfg, arrays[0], arrays[1])
    report = evaluate(result.model, arrays[2])
    if checkpoint_dir is not None:
        save_checkpoint(result.model, checkpoint_dir / f"{_slug(name)}_seed{seed}.bin")
    log.info("%s seed %d: accuracy %.4f", name, seed, report.accuracy)
    return VariantRun(name, seed, report, result.history, result.best_epoch)


def _slug(name: str) -> str:
    return "".join(c if c.isalnum() else "_" for c in name)


def _fmt(v) -> str:
    return repr(float(v)) if isinstance(v, (float, np.floating)) else str(v)


def write_csv(path: Path, header: Sequence[str], rows: Sequence[Sequence]) -> None:
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])


def summarize(runs: Sequence[VariantRun]) -> list[dict]:
    """Mean metrics per variant (in first-seen order) over its seeds."""
    names = list(dict.fromkeys(r.variant for r in runs))
    out = []
    for name in names:
        rs = [r for r in runs if r.variant == name]
        row = {"variant": name, "n_seeds": len(rs)}
        for m in METRIC_NAMES:
            row[m] = float(np.mean([getattr(r.report, m) for r in rs]))
        out.append(row)
    return out


def write_report(out: Path, runs: Sequence[VariantRun], spec: ExperimentSpec) -> None:
    out.mkdir(parents=True, exist_ok=True)
    summary = summarize(runs)
    write_csv(out / "metrics.csv", ["variant", *METRIC_NAMES, "n_seeds"],
               [[s["variant"], *(s[m] for m in METRIC_NAMES), s["n_seeds"]] for s in summary])
    # the same numbers transposed: metrics as rows, variants as columns
    write_csv(out / "table.csv", ["metric", *(s["variant"] for s in summary)],
               [[m, *(s[m] for s in summary)] for m in METRIC_NAMES])
    write_csv(out / "metrics_by_seed.csv", ["variant", "seed", *METRIC_NAMES],
               [[r.variant, r.seed, *(getattr(r.report, m) for m in METRIC_NAMES)] for r in runs])
    write_csv(out / "confusion.csv",
               ["variant", "seed", "true_slip_pred_slip", "true_slip_pred_stable",
                "true_stable_pred_slip", "true_stable_pred_stable"],
               [[r.variant, r.seed, *r.report.confusion.reshape(-1).tolist()] for r in runs])
    hist_rows = []
    for r in runs:
        for h in r.history:
            hist_rows.append([r.variant, r.seed, h["epoch"], h["train_loss"], h["train_accuracy"],
                              h.get("val_accuracy", ""), h.get("val_f1", "")])
    write_csv(out / "history.csv",
               ["variant", "seed", "epoch", "train_loss", "train_accuracy", "val_accuracy", "val_f1"], hist_rows)
    meta = {"preset": spec.preset, "seeds": spec.seeds, "variants": [s["variant"] for s in summary]}
    (out / "experiment.json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")


def run_experiment(spec, out_dir, save_checkpoints: bool = True) -> Path:
    """Train and evaluate every variant of the preset for every seed; write the report directory."""
    if not isinstance(spec, ExperimentSpec):
        spec = load_spec(spec)
    out = Path(out_dir)
    data = prepare_data(spec.data)
    ckpt_dir = out / "checkpoints" if save_checkpoints else None
    if ckpt_dir is not None:
        ckpt_dir.mkdir(parents=True, exist_ok=True)
    runs = []
    for name, model_cfg in variants(spec, data.embed_dim):
        for seed in spec.seeds:
            runs.append(run_variant(name, model_cfg, spec.train, data, seed, spec.data.window_stride, ckpt_dir))
    write_report(out, runs, spec)
    return out


def read_metrics(report_dir) -> list[dict]:
    with (Path(report_dir) / "metrics.csv").open() as fh:
        return list(csv.DictReader(fh))
