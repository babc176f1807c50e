"""Command-line entry point: ``vtslip <subcommand> ...``.

On failure a single line ``error: <code>: <message>`` goes to stderr and the
exit status is nonzero (2 for usage problems, 1 otherwise).
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

from . import experiment, gradcheck, synth
from .dataset import load_dataset, make_windows
from .encoders import VisualEncoderSpec
from .errors import UsageError, ValidationError, VtslipError
from .experiment import DataSpec, METRIC_NAMES, prepare_data, window_sets, write_csv
from .model import MODALITIES, READOUTS, SlipModelConfig, load_checkpoint
from .train import SYNTHETIC_LR, TrainConfig, WindowArrays, evaluate, train

HISTORY_FIELDS = ("epoch", "train_loss", "train_accuracy", "val_accuracy", "val_f1")
CONFUSION_HEADER = ("variant", "true_slip_pred_slip", "true_slip_pred_stable",
                    "true_stable_pred_slip", "true_stable_pred_stable")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _add_train_flags(p: argparse.ArgumentParser) -> None:
    d = TrainConfig()
    p.add_argument("--lr", type=float, default=SYNTHETIC_LR,
                   help=f"learning rate (default {SYNTHETIC_LR}, suited to synthetic corpora; TrainConfig uses {d.lr})")
    p.add_argument("--batch-size", type=int, default=d.batch_size)
    p.add_argument("--epochs", type=int, default=d.epochs)
    p.add_argument("--seed", type=int, default=d.seed)
    p.add_argument("--seq-len", type=int, default=d.seq_len)
    p.add_argument("--modality", choices=MODALITIES, default=d.modality)
    p.add_argument("--checkpoint-every", type=int, default=d.checkpoint_every)
    p.add_argument("--early-stop-patience", type=int, default=None)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="vtslip", description="Visuo-tactile slip detection with multi-scale TCNs.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("synth-gen", help="write a synthetic grasp corpus")
    p.add_argument("--out", required=True)
    p.add_argument("--objects", type=int, default=50)
    p.add_argument("--episodes-per-object", type=int, default=20)
    p.add_argument("--slip-fraction", type=float, default=0.5)
    p.add_argument("--frames", type=int, default=20)
    p.add_argument("--noise-sigma", type=float, default=0.05)
    p.add_argument("--test-fraction", type=float, default=0.2)
    p.add_argument("--master-seed", type=int, default=0)

    p = sub.add_parser("train", help="train one model on a dataset's train split")
    p.add_argument("--data", required=True, help="dataset root (contains manifest.json)")
    p.add_argument("--out", required=True, help="directory for checkpoint.bin and history.csv")
    p.add_argument("--val-objects", type=int, default=4, help="training objects held out for model selection")
    p.add_argument("--split-seed", type=int, default=0)
    p.add_argument("--stride", type=int, default=1)
    p.add_argument("--readout", choices=READOUTS, default="last")
    _add_train_flags(p)

    p = sub.add_parser("eval", help="evaluate a checkpoint on a dataset split")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--split", default="test", help="split name from the manifest, or 'all'")
    p.add_argument("--stride", type=int, default=1)
    p.add_argument("--out", help="directory for metrics.csv and confusion.csv")

    p = sub.add_parser("predict", help="per-window predictions for one episode")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--episode", required=True, help="episode id")
    p.add_argument("--stride", type=int, default=1)

    p = sub.add_parser("gradcheck", help="finite-difference check of every differentiable op")
    p.add_argument("--configs", type=int, default=200)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--tol", type=float, default=1e-4)

    p = sub.add_parser("experiment", help="run an ablation preset from an experiment file")
    p.add_argument("spec")
    p.add_argument("--out", required=True)
    p.add_argument("--no-checkpoints", action="store_true")

    p = sub.add_parser("report", help="print the metrics table of a report directory")
    p.add_argument("report_dir")
    return parser


# ---------------------------------------------------------------------------


def cmd_synth_gen(a) -> int:
    root = synth.generate_corpus(a.out, a.objects, a.episodes_per_object, a.slip_fraction, a.master_seed,
                                 frames=a.frames, noise_sigma=a.noise_sigma, test_fraction=a.test_fraction)
    print(f"wrote {a.objects * a.episodes_per_object} episodes to {root}")
    return 0


def cmd_train(a) -> int:
    data = prepare_data(DataSpec(root=a.data, master_seed=a.split_seed, val_objects=a.val_objects))
    model_cfg = SlipModelConfig(modality=a.modality, seq_len=a.seq_len,
                                visual=VisualEncoderSpec(embed_dim=data.embed_dim), readout=a.readout)
    if data.episodes[0].visual.ndim == 4:
        model_cfg = replace(model_cfg, visual=VisualEncoderSpec("small_cnn"))
    tcfg = TrainConfig(lr=a.lr, batch_size=a.batch_size, epochs=a.epochs, seed=a.seed, seq_len=a.seq_len,
                       modality=a.modality, checkpoint_every=a.checkpoint_every,
                       early_stop_patience=a.early_stop_patience)
    train_w, val_w, _ = window_sets(data, a.seq_len, a.stride)
    arrays = [WindowArrays.from_windows(w, model_cfg.uses_tactile, model_cfg.uses_visual) for w in (train_w, val_w)]
    out = Path(a.out)
    result = train(model_cfg, tcfg, arrays[0], arrays[1], out_dir=out)
    write_csv(out / "history.csv", HISTORY_FIELDS,
              [[row.get(k, "") for k in HISTORY_FIELDS] for row in result.history])
    print(f"trained {len(result.history)} epochs on {len(train_w)} windows; best epoch {result.best_epoch}")
    print(f"checkpoint: {out / 'checkpoint.bin'}")
    return 0


def _episodes_for(root, split: str):
    loaded = load_dataset(root)
    if split == "all":
        return loaded.episodes
    objs = loaded.objects(split)
    if not objs:
        raise ValidationError(f"dataset has no objects in split {split!r}")
    return [ep for ep in loaded.episodes if ep.object_id in objs]


def cmd_eval(a) -> int:
    model = load_checkpoint(a.checkpoint)
    cfg = model.cfg
    windows = [w for ep in _episodes_for(a.data, a.split) for w in make_windows(ep, cfg.seq_len, a.stride)]
    report = evaluate(model, WindowArrays.from_windows(windows, cfg.uses_tactile, cfg.uses_visual))
    if a.out:
        out = Path(a.out)
        out.mkdir(parents=True, exist_ok=True)
        write_csv(out / "metrics.csv", ["variant", *METRIC_NAMES, "n_windows"],
                  [[cfg.modality, *(getattr(report, m) for m in METRIC_NAMES), report.total]])
        write_csv(out / "confusion.csv", CONFUSION_HEADER, [[cfg.modality, *report.confusion.reshape(-1).tolist()]])
    print(json.dumps({"windows": report.total, **report.as_row(),
                      "confusion": report.confusion.tolist()}, sort_keys=True))
    return 0


def cmd_predict(a) -> int:
    model = load_checkpoint(a.checkpoint)
    matches = [ep for ep in load_dataset(a.data).episodes if ep.episode_id == a.episode]
    if not matches:
        raise ValidationError(f"episode {a.episode!r} not found")
    for w in make_windows(matches[0], model.cfg.seq_len, a.stride):
        pred = model.predict(w)
        name = "stable" if pred.label == 1 else "slip"
        print(f"{w.source[1]}\t{name}\t{pred.confidence:.4f}")
    return 0


def cmd_gradcheck(a) -> int:
    results = gradcheck.random_suite(a.configs, a.seed)
    failed = [r for r in results if not r.passed(a.tol)]
    for kind in gradcheck.KINDS:
        rs = [r for r in results if r.kind == kind]
        if rs:
            print(f"{kind:24s} n={len(rs):3d} max_rel_error={max(r.rel_error for r in rs):.3e}")
    for r in failed:
        print(f"FAIL {r.kind} {r.description} rel_error={r.rel_error:.3e}")
    print(f"{len(results) - len(failed)}/{len(results)} passed (tol {a.tol:g})")
    return 1 if failed else 0


def cmd_experiment(a) -> int:
    out = experiment.run_experiment(a.spec, a.out, save_checkpoints=not a.no_checkpoints)
    print(f"report written to {out}")
    return cmd_report(argparse.Namespace(report_dir=out))


def cmd_report(a) -> int:
    path = Path(a.report_dir) / "metrics.csv"
    if not path.exists():
        raise UsageError(f"{path} not found")
    with path.open() as fh:
        rows = list(csv.reader(fh))
    header, body = rows[0], rows[1:]
    first = max(len(r[0]) for r in rows)
    print("  ".join([header[0].ljust(first), *(h.rjust(10) for h in header[1:])]))
    for row in body:
        cells = [f"{100 * float(c):.2f}%" if header[i] in METRIC_NAMES else c for i, c in enumerate(row)]
        print("  ".join([cells[0].ljust(first), *(c.rjust(10) for c in cells[1:])]))
    return 0


COMMANDS = {
    "synth-gen": cmd_synth_gen,
    "train": cmd_train,
    "eval": cmd_eval,
    "predict": cmd_predict,
    "gradcheck": cmd_gradcheck,
    "experiment": cmd_experiment,
    "report": cmd_report,
}


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                            format="%(levelname)s %(name)s: %(message)s")
        return COMMANDS[args.command](args)
    except VtslipError as exc:
        print(f"error: {exc.code}: {exc}", file=sys.stderr)
        return 2 if isinstance(exc, UsageError) else 1
    except OSError as exc:
        print(f"error: io: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
