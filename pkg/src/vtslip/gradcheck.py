"""Central finite-difference gradient checks for every differentiable op.

The numeric side only ever calls forward passes (under ``no_grad``), so it is
independent of the backward closures it verifies.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import ops, temporal
from .tensor import Tensor, no_grad, tensor_sum

KINDS = ("conv1d_causal", "conv2d", "maxpool2d", "linear", "relu", "concat_channels",
         "softmax_cross_entropy", "mstcn_layer")
KINK_MARGIN = 1e-3


@dataclass
class CheckResult:
    kind: str
    description: str
    rel_error: float
    n_inputs: int

    def passed(self, tol: float = 1e-4) -> bool:
        return self.rel_error < tol


def relative_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    """``||a - n|| / max(||a||, ||n||)``; exactly-zero pairs count as 0 error."""
    diff = float(np.linalg.norm(analytic - numeric))
    scale = max(float(np.linalg.norm(analytic)), float(np.linalg.norm(numeric)))
    if scale == 0.0:
        return 0.0
    if scale < 1e-12:
        return diff
    return diff / scale


def numeric_gradients(fn: Callable[[dict], Tensor], inputs: dict[str, np.ndarray], h: float = 1e-5) -> dict[str, np.ndarray]:
    grads = {}
    with no_grad():
        for name, base in inputs.items():
            g = np.zeros_like(base)
            flat = g.reshape(-1)
            for i in range(base.size):
                plus = {k: v.copy() for k, v in inputs.items()}
                minus = {k: v.copy() for k, v in inputs.items()}
                plus[name].reshape(-1)[i] += h
                minus[name].reshape(-1)[i] -= h
                fp = fn({k: Tensor(v) for k, v in plus.items()}).item()
                fm = fn({k: Tensor(v) for k, v in minus.items()}).item()
                flat[i] = (fp - fm) / (2 * h)
            grads[name] = g
    return grads


def analytic_gradients(fn: Callable[[dict], Tensor], inputs: dict[str, np.ndarray]) -> dict[str, np.ndarray]:
    ts = {k: Tensor(v.copy(), requires_grad=True, name=k) for k, v in inputs.items()}
    fn(ts).backward()
    return {k: (t.grad if t.grad is not None else np.zeros_like(t.data)) for k, t in ts.items()}


def check(fn, inputs: dict[str, np.ndarray], h: float = 1e-5) -> float:
    a = analytic_gradients(fn, inputs)
    n = numeric_gradients(fn, inputs, h)
    va = np.concatenate([a[k].reshape(-1) for k in inputs])
    vn = np.concatenate([n[k].reshape(-1) for k in inputs])
    return relative_error(va, vn)


def _weighted_sum(out: Tensor, weights: np.ndarray) -> Tensor:
    # a generic linear functional so every output element carries gradient
    return tensor_sum(out * Tensor(weights))


def _away_from_zero(rng, shape, margin=KINK_MARGIN):
    x = rng.normal(size=shape)
    return np.where(x >= 0, 1.0, -1.0) * (np.abs(x) + margin)


def _distinct(rng, shape):
    # values spaced 0.05 apart so no pooling window has a near tie
    n = int(np.prod(shape))
    return (rng.permutation(n) * 0.05 - n * 0.025).reshape(shape) + rng.uniform(-0.01, 0.01, size=shape)


def make_case(kind: str, rng: np.random.Generator):
    """Random small configuration for ``kind``: returns ``(description, fn, inputs)``."""
    batched = bool(rng.integers(0, 2))
    lead = (int(rng.integers(1, 3)),) if batched else ()

    if kind == "conv1d_causal":
        ci, co, k = (int(v) for v in rng.integers(1, 5, size=3))
        d = int(rng.choice([1, 2, 4]))
        t = int(rng.integers(1, 9))
        inputs = {"x": rng.normal(size=lead + (ci, t)), "w": rng.normal(size=(co, ci, k)), "b": rng.normal(size=co)}
        r = rng.normal(size=lead + (co, t))
        fn = lambda p: _weighted_sum(ops.conv1d_causal(p["x"], p["w"], p["b"], d), r)  # noqa: E731
        return f"C_in={ci} C_out={co} k={k} d={d} T={t} batch={lead}", fn, inputs

    if kind == "conv2d":
        ci, co = (int(v) for v in rng.integers(1, 4, size=2))
        kh, kw = (int(v) for v in rng.integers(1, 4, size=2))
        sh, sw = (int(v) for v in rng.integers(1, 3, size=2))
        ph, pw = (int(v) for v in rng.integers(0, 2, size=2))
        h = int(rng.integers(max(1, kh - 2 * ph), 6))
        w = int(rng.integers(max(1, kw - 2 * pw), 6))
        inputs = {"x": rng.normal(size=lead + (ci, h, w)), "w": rng.normal(size=(co, ci, kh, kw)), "b": rng.normal(size=co)}
        ho, wo = (h + 2 * ph - kh) // sh + 1, (w + 2 * pw - kw) // sw + 1
        r = rng.normal(size=lead + (co, ho, wo))
        fn = lambda p: _weighted_sum(ops.conv2d(p["x"], p["w"], p["b"], (sh, sw), (ph, pw)), r)  # noqa: E731
        return f"{ci}x{h}x{w} k={kh}x{kw} s={sh},{sw} p={ph},{pw} batch={lead}", fn, inputs

    if kind == "maxpool2d":
        c = int(rng.integers(1, 4))
        kh, kw = (int(v) for v in rng.integers(1, 4, size=2))
        sh, sw = (int(v) for v in rng.integers(1, 4, size=2))
        h, w = int(rng.integers(kh, 7)), int(rng.integers(kw, 7))
        inputs = {"x": _distinct(rng, lead + (c, h, w))}
        ho, wo = (h - kh) // sh + 1, (w - kw) // sw + 1
        r = rng.normal(size=lead + (c, ho, wo))
        fn = lambda p: _weighted_sum(ops.maxpool2d(p["x"], (kh, kw), (sh, sw)), r)  # noqa: E731
        return f"{c}x{h}x{w} size={kh}x{kw} stride={sh},{sw}", fn, inputs

    if kind == "linear":
        n, di, do = int(rng.integers(1, 5)), int(rng.integers(1, 7)), int(rng.integers(1, 7))
        shape = (n, di) if batched else (di,)
        inputs = {"x": rng.normal(size=shape), "w": rng.normal(size=(do, di)), "b": rng.normal(size=do)}
        r = rng.normal(size=(n, do) if batched else (do,))
        fn = lambda p: _weighted_sum(ops.linear(p["x"], p["w"], p["b"]), r)  # noqa: E731
        return f"x={shape} D_out={do}", fn, inputs

    if kind == "relu":
        shape = tuple(int(v) for v in rng.integers(1, 5, size=int(rng.integers(1, 4))))
        inputs = {"x": _away_from_zero(rng, shape)}
        r = rng.normal(size=shape)
        fn = lambda p: _weighted_sum(ops.relu(p["x"]), r)  # noqa: E731
        return f"shape={shape}", fn, inputs

    if kind == "concat_channels":
        ca, cb, t = int(rng.integers(1, 5)), int(rng.integers(1, 5)), int(rng.integers(1, 9))
        inputs = {"a": rng.normal(size=lead + (ca, t)), "b": rng.normal(size=lead + (cb, t))}
        r = rng.normal(size=lead + (ca + cb, t))
        fn = lambda p: _weighted_sum(ops.concat_channels(p["a"], p["b"]), r)  # noqa: E731
        return f"{ca}+{cb} x T={t}", fn, inputs

    if kind == "softmax_cross_entropy":
        n = int(rng.integers(1, 6))
        labels = rng.integers(0, 2, size=n)
        inputs = {"logits": rng.normal(scale=2.0, size=(n, 2))}
        fn = lambda p: ops.softmax_cross_entropy(p["logits"], labels)  # noqa: E731
        return f"N={n}", fn, inputs

    if kind == "mstcn_layer":
        for _ in range(100):
            ci = int(rng.integers(1, 5))
            nb = int(rng.integers(1, 4))
            widths = tuple(int(v) for v in rng.integers(1, 3, size=nb))
            ks = tuple(int(v) for v in rng.integers(1, 4, size=nb))
            dil = tuple(int(v) for v in rng.choice([1, 2, 4], size=nb))
            t = int(rng.integers(1, 9))
            c = sum(widths)
            residual = bool(rng.integers(0, 2)) and ci == c
            layer = temporal.MsTcnLayerConfig(ci, c, nb, ks, dil, widths)
            inputs = {"x": rng.normal(size=lead + (ci, t))}
            for name, shape in temporal.param_names(temporal.MsTcnConfig((layer,)), ""):
                inputs[name] = rng.normal(size=shape)
            with no_grad():
                pre = temporal.mstcn_layer_forward(
                    Tensor(inputs["x"]), layer, {k: Tensor(v) for k, v in inputs.items()}, "", "none", residual
                )
            if np.min(np.abs(pre.data)) > KINK_MARGIN:
                break
        r = rng.normal(size=lead + (c, t))

        def fn(p, layer=layer, residual=residual, r=r):
            return _weighted_sum(temporal.mstcn_layer_forward(p["x"], layer, p, "", "relu", residual), r)

        return f"C_in={ci} widths={widths} k={ks} d={dil} T={t} residual={residual}", fn, inputs

    raise ValueError(f"unknown op kind {kind!r}")


def random_suite(n_configs: int = 200, seed: int = 0, h: float = 1e-5) -> list[CheckResult]:
    """Check ``n_configs`` random configurations, cycling through every op kind."""
    results = []
    for i in range(n_configs):
        kind = KINDS[i % len(KINDS)]
        rng = np.random.default_rng([seed, i])
        desc, fn, inputs = make_case(kind, rng)
        err = check(fn, inputs, h)
        results.append(CheckResult(kind, desc, err, sum(v.size for v in inputs.values())))
    return results
