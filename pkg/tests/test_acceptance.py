"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Run alone with ``pytest tests/test_acceptance.py -v`` (or ``python tests/test_acceptance.py``).
Criteria 6-8 train on the full 50-object synthetic corpus and take a few minutes.
"""

import filecmp
import time
from pathlib import Path

import numpy as np
import pytest

from vtslip import gradcheck, synth
from vtslip.cli import main as cli_main
from vtslip.dataset import load_dataset, make_windows, write_dataset
from vtslip.encoders import VisualEncoderSpec
from vtslip.experiment import DataSpec, prepare_data, run_variant, tcn_model_config, param_count
from vtslip.metrics import f1_score
from vtslip.model import SlipModel, SlipModelConfig, parameter_manifest
from vtslip.tensor import no_grad
from vtslip.train import SYNTHETIC_LR, TrainConfig, evaluate, train

from oracles import PUBLISHED_TRIPLES

FIXTURES = Path(__file__).parent / "fixtures"

# pinned from the acceptance criteria
GRAD_TOL, GRAD_CONFIGS, GRAD_H, GRAD_BUDGET_S = 1e-4, 200, 1e-5, 60.0
CAUSAL_MODELS, CAUSAL_BUDGET_S = 50, 30.0
F1_TOL = 1e-4
OVERFIT_WINDOWS, OVERFIT_MAX_EPOCHS, OVERFIT_BUDGET_S = 16, 500, 120.0
BENCH_MIN_ACCURACY, BENCH_BUDGET_S = 0.95, 15 * 60.0
SEEDS = (0, 1, 2)
TCN_MARGIN = 0.005

# training schedule for the benchmark criteria (lr per the synthetic preset)
BENCH_TRAIN = TrainConfig(lr=SYNTHETIC_LR, batch_size=8, epochs=2)


@pytest.fixture
def verdict(capsys):
    def emit(number, title, ok, detail):
        with capsys.disabled():
            print(f"\n[{'PASS' if ok else 'FAIL'}] criterion {number}: {title} -- {detail}")
        assert ok, detail

    return emit


@pytest.fixture(scope="module")
def benchmark_data():
    # 50 objects x 20 episodes, 40 train / 10 test objects; 4 train objects held out for validation
    return prepare_data(DataSpec(n_objects=50, episodes_per_object=20, noise_sigma=0.05, test_fraction=0.2,
                                 val_objects=4))


def test_criterion_01_gradients(verdict):
    t0 = time.perf_counter()
    results = gradcheck.random_suite(GRAD_CONFIGS, seed=0, h=GRAD_H)
    elapsed = time.perf_counter() - t0
    worst = max(results, key=lambda r: r.rel_error)
    kinds = {r.kind for r in results}
    ok = (len(results) == GRAD_CONFIGS and all(r.passed(GRAD_TOL) for r in results)
          and kinds == set(gradcheck.KINDS) and elapsed < GRAD_BUDGET_S)
    verdict(1, "gradient correctness", ok,
            f"{len(results)} configs over {len(kinds)} op kinds, worst rel error {worst.rel_error:.2e} "
            f"({worst.kind}), {elapsed:.1f}s")


def test_criterion_02_causality(verdict):
    t0 = time.perf_counter()
    rng = np.random.default_rng(2024)
    t_len = 13
    cuts = np.arange(t_len - 1)  # perturb frames strictly after each cut
    checked, violations = 0, []
    for m in range(CAUSAL_MODELS):
        embed = int(rng.choice([8, 16, 64]))
        model = SlipModel(SlipModelConfig(seq_len=t_len, visual=VisualEncoderSpec(embed_dim=embed)),
                          seed=int(rng.integers(2 ** 31)))
        x_t = rng.uniform(0, 1, size=(1, t_len, 3, 4, 4))
        x_v = rng.normal(size=(1, t_len, embed))
        base_t, base_v = np.repeat(x_t, len(cuts), 0), np.repeat(x_v, len(cuts), 0)
        pert_t, pert_v = base_t.copy(), base_v.copy()
        for i, cut in enumerate(cuts):
            pert_t[i, cut + 1:] = rng.uniform(0, 1, size=pert_t[i, cut + 1:].shape)
            pert_v[i, cut + 1:] = rng.normal(scale=10.0, size=pert_v[i, cut + 1:].shape)
        base_trace, pert_trace = {}, {}
        with no_grad():
            model.forward(base_t, base_v, base_trace)
            model.forward(pert_t, pert_v, pert_trace)
        for name, feat in base_trace.items():
            if feat.ndim != 3:
                continue  # readout and logits are not time-indexed
            for i, cut in enumerate(cuts):
                a = feat.data[i, :, : cut + 1]
                b = pert_trace[name].data[i, :, : cut + 1]
                checked += 1
                if a.tobytes() != b.tobytes():
                    violations.append((m, name, int(cut)))
    elapsed = time.perf_counter() - t0
    ok = not violations and elapsed < CAUSAL_BUDGET_S
    verdict(2, "causality", ok,
            f"{CAUSAL_MODELS} fused models, {checked} prefix comparisons, {len(violations)} differ, {elapsed:.1f}s")


def test_criterion_03_architecture(verdict):
    cfg = SlipModelConfig()
    shapes = {e.name: e.shape for e in parameter_manifest(cfg)}
    model = SlipModel(cfg)
    rng = np.random.default_rng(3)
    trace = {}
    with no_grad():
        logits = model.forward(rng.uniform(size=(8, 13, 3, 4, 4)), rng.normal(size=(8, 13, 512)), trace)
        from vtslip.encoders import tactile_encode
        stages = {}
        tactile_encode(rng.uniform(size=(3, 4, 4)), model.params, trace=stages)
    checks = {
        "tactile conv1 weight 8x3x3x3": shapes["tactile.conv1.weight"] == (8, 3, 3, 3),
        "tactile stages 8x4x4 8x2x2 16x2x2 16x1x1 32x1x1": [stages[k].shape[1:] for k in
                                                             ("conv1", "pool1", "conv2", "pool2", "conv3")]
        == [(8, 4, 4), (8, 2, 2), (16, 2, 2), (16, 1, 1), (32, 1, 1)],
        "tactile 32 -> 64": shapes["tactile.proj.weight"] == (64, 32),
        "visual projection -> 64": shapes["visual.proj.weight"] == (64, 512),
        "per-frame features 64x13": trace["tactile_features"].shape[1:] == (64, 13)
        and trace["visual_features"].shape[1:] == (64, 13),
        "concatenation 128x13": trace["fusion_in"].shape[1:] == (128, 13),
        "fusion output 64x13": trace["fusion_tcn.layer2"].shape[1:] == (64, 13),
        "logits 2": logits.shape == (8, 2) and shapes["head.weight"] == (2, 64),
    }
    bad = [k for k, v in checks.items() if not v]
    verdict(3, "architecture arithmetic", not bad, f"{len(checks) - len(bad)}/{len(checks)} dimension checks"
            + (f", failing: {bad}" if bad else ""))


def test_criterion_04_metric_oracle(verdict):
    errors = {name: abs(f1_score(p / 100, r / 100) - f1 / 100) for name, (p, r, f1) in PUBLISHED_TRIPLES.items()}
    worst = max(errors, key=errors.get)
    ok = all(e <= F1_TOL for e in errors.values())
    verdict(4, "metric oracle", ok, f"{len(errors)} published triples, max |F1 error| {errors[worst]:.1e} ({worst})")


def test_criterion_05_overfit(verdict):
    t0 = time.perf_counter()
    eps, _ = synth.corpus_episodes(4, 4, noise_sigma=0.0, frames=13, master_seed=5)
    windows = [w for ep in eps for w in make_windows(ep, 13)]
    assert len(windows) == OVERFIT_WINDOWS and {w.y for w in windows} == {0, 1}
    cfg = SlipModelConfig(visual=VisualEncoderSpec(embed_dim=8))
    result = train(cfg, TrainConfig(lr=1e-3, batch_size=8, epochs=OVERFIT_MAX_EPOCHS, seed=0,
                                    early_stop_patience=None), windows)
    acc = evaluate(result.model, windows).accuracy
    first = next((r["epoch"] for r in result.history if r["train_accuracy"] == 1.0), None)
    elapsed = time.perf_counter() - t0
    ok = acc == 1.0 and first is not None and elapsed < OVERFIT_BUDGET_S
    verdict(5, "overfit capability", ok,
            f"train accuracy {acc:.3f} after {OVERFIT_MAX_EPOCHS} epochs (first perfect epoch {first}), {elapsed:.1f}s")


def _bench_config(modality, seq_len=13):
    return SlipModelConfig(modality=modality, seq_len=seq_len, visual=VisualEncoderSpec(embed_dim=8))


def test_criterion_06_synthetic_benchmark(verdict, benchmark_data):
    t0 = time.perf_counter()
    d = benchmark_data
    n_train_side = len(d.train_objects) + len(d.val_objects)
    fused = run_variant("visual-tactile", _bench_config("fused"), BENCH_TRAIN, d, seed=0)
    tactile = run_variant("tactile", _bench_config("tactile_only"), BENCH_TRAIN, d, seed=0)
    elapsed = time.perf_counter() - t0
    ok = (fused.report.accuracy >= BENCH_MIN_ACCURACY and fused.report.accuracy >= tactile.report.accuracy
          and (n_train_side, len(d.test_objects)) == (40, 10) and elapsed < BENCH_BUDGET_S)
    verdict(6, "synthetic benchmark", ok,
            f"{n_train_side}/{len(d.test_objects)} objects, fused test accuracy {fused.report.accuracy:.4f}, "
            f"tactile-only {tactile.report.accuracy:.4f}, {elapsed:.0f}s")


def test_criterion_07_sequence_length(verdict, benchmark_data):
    acc = {t: [run_variant(f"T={t}", _bench_config("fused", t), BENCH_TRAIN, benchmark_data, s).report.accuracy
               for s in SEEDS] for t in (8, 13)}
    m8, m13 = float(np.mean(acc[8])), float(np.mean(acc[13]))
    verdict(7, "sequence-length endpoint trend", m13 >= m8,
            f"mean accuracy T=13 {m13:.4f} vs T=8 {m8:.4f} over seeds {list(SEEDS)}")


def test_criterion_08_mstcn_vs_tcn(verdict, benchmark_data):
    mstcn_cfg = _bench_config("fused")
    tcn_cfg = tcn_model_config(mstcn_cfg)
    assert param_count(tcn_cfg) == param_count(mstcn_cfg)
    acc = {name: [run_variant(name, cfg, BENCH_TRAIN, benchmark_data, s).report.accuracy for s in SEEDS]
           for name, cfg in (("CNN-TCN", tcn_cfg), ("CNN-MSTCN", mstcn_cfg))}
    m_tcn, m_ms = float(np.mean(acc["CNN-TCN"])), float(np.mean(acc["CNN-MSTCN"]))
    verdict(8, "MS-TCN vs TCN", m_ms >= m_tcn - TCN_MARGIN,
            f"mean accuracy CNN-MSTCN {m_ms:.4f} vs CNN-TCN {m_tcn:.4f} ({param_count(mstcn_cfg)} params each)")


def _end_to_end(root: Path) -> Path:
    data, run, ev = root / "data", root / "run", root / "eval"
    assert cli_main(["synth-gen", "--out", str(data), "--objects", "10", "--episodes-per-object", "6",
                     "--master-seed", "42"]) == 0
    assert cli_main(["train", "--data", str(data), "--out", str(run), "--epochs", "2", "--seed", "42",
                     "--val-objects", "2", "--checkpoint-every", "1"]) == 0
    assert cli_main(["eval", "--checkpoint", str(run / "checkpoint.bin"), "--data", str(data),
                     "--out", str(ev)]) == 0
    return root


def test_criterion_09_determinism(verdict, tmp_path, capsys):
    a, b = _end_to_end(tmp_path / "a"), _end_to_end(tmp_path / "b")
    files = ["eval/metrics.csv", "eval/confusion.csv", "run/history.csv", "run/checkpoint.bin",
             "run/checkpoint_epoch0001.bin", "run/checkpoint_epoch0002.bin"]
    same = {f: filecmp.cmp(a / f, b / f, shallow=False) for f in files}
    same_data = synth.directory_digest(a / "data") == synth.directory_digest(b / "data")
    ok = all(same.values()) and same_data
    verdict(9, "determinism", ok, f"{sum(same.values())}/{len(files)} outputs byte-identical, "
            f"corpus digests {'match' if same_data else 'differ'}")


def test_criterion_10_dataset_round_trip(verdict, tmp_path):
    src = FIXTURES / "golden"
    first = load_dataset(src)
    write_dataset(tmp_path, first.episodes, first.splits, ["ep_mug_01", "ep_sponge_01"])
    second = load_dataset(tmp_path)
    csv_same = all(filecmp.cmp(src / n / "tactile.csv", tmp_path / n / "tactile.csv", shallow=False)
                   for n in ("ep_mug_01", "ep_sponge_01"))
    struct_same = len(first.episodes) == len(second.episodes) == 2 and all(
        (a.episode_id, a.object_id, a.label, a.grasp_width_mm, a.rate_hz)
        == (b.episode_id, b.object_id, b.label, b.grasp_width_mm, b.rate_hz)
        and np.array_equal(a.tactile, b.tactile) and np.array_equal(a.visual, b.visual)
        for a, b in zip(first.episodes, second.episodes)) and first.splits == second.splits
    bad = load_dataset(FIXTURES / "malformed")
    records = {e.episode: e.message for e in bad.errors}
    rejected = (set(records) == {"ep_short", "ep_mismatch"} and "12 frames" in records["ep_short"]
                and "14" in records["ep_mismatch"] and "13" in records["ep_mismatch"]
                and [ep.episode_id for ep in bad.episodes] == ["ok_01"])
    verdict(10, "dataset round trip", csv_same and struct_same and rejected,
            f"tactile CSVs identical: {csv_same}, structures equal: {struct_same}, "
            f"malformed rejected with records: {rejected}")


if __name__ == "__main__":
    raise SystemExit(pytest.main([__file__, "-v"]))
