import numpy as np
import pytest

from vtslip import encoders
from vtslip.encoders import TactileEncoder, VisualEncoder, VisualEncoderSpec, encode_sequence
from vtslip.errors import DataError, DimensionError, ValidationError
from vtslip.tensor import Tensor, no_grad


def conv2d_direct(x, w, b, pad):
    c_out, c_in, kh, kw = w.shape
    xp = np.pad(x, ((0, 0), (pad, pad), (pad, pad)))
    ho, wo = xp.shape[1] - kh + 1, xp.shape[2] - kw + 1
    y = np.empty((c_out, ho, wo))
    for o in range(c_out):
        for i in range(ho):
            for j in range(wo):
                y[o, i, j] = b[o] + np.sum(w[o] * xp[:, i:i + kh, j:j + kw])
    return y


def pool_direct(x):
    c, h, w = x.shape
    return x.reshape(c, h // 2, 2, w // 2, 2).max(axis=(2, 4))


def tactile_direct(frame, p):
    relu = lambda a: np.maximum(a, 0.0)  # noqa: E731
    h = pool_direct(relu(conv2d_direct(frame, p["tactile.conv1.weight"], p["tactile.conv1.bias"], 1)))
    h = pool_direct(relu(conv2d_direct(h, p["tactile.conv2.weight"], p["tactile.conv2.bias"], 1)))
    h = relu(conv2d_direct(h, p["tactile.conv3.weight"], p["tactile.conv3.bias"], 0))
    return p["tactile.proj.weight"] @ h.reshape(32) + p["tactile.proj.bias"]


@pytest.fixture
def tactile_params():
    return encoders.init_tactile_params(np.random.default_rng(0))


def test_tactile_stage_shapes(tactile_params):
    trace = {}
    with no_grad():
        out = encoders.tactile_encode(np.random.default_rng(1).normal(size=(3, 4, 4)), tactile_params, trace=trace)
    shapes = {k: v.shape[1:] for k, v in trace.items()}
    assert shapes == {"conv1": (8, 4, 4), "pool1": (8, 2, 2), "conv2": (16, 2, 2), "pool2": (16, 1, 1),
                      "conv3": (32, 1, 1), "flatten": (32,)}
    assert out.shape == (64,)


def test_tactile_matches_direct_convolution(tactile_params):
    frames = np.random.default_rng(2).normal(size=(100, 3, 4, 4))
    raw = {k: v.data for k, v in tactile_params.items()}
    with no_grad():
        out = encoders.tactile_encode(frames, tactile_params).data
    expected = np.stack([tactile_direct(f, raw) for f in frames])
    assert np.max(np.abs(out - expected)) < 1e-10


def test_tactile_zero_frame_zero_biases(tactile_params):
    for k, v in tactile_params.items():
        if k.endswith("bias"):
            v.data = np.zeros_like(v.data)
    with no_grad():
        np.testing.assert_array_equal(encoders.tactile_encode(np.zeros((3, 4, 4)), tactile_params).data, np.zeros(64))


def test_tactile_shape_error_names_stage(tactile_params):
    tactile_params["tactile.conv2.weight"] = Tensor(np.zeros((16, 7, 3, 3)))
    with pytest.raises(DimensionError, match="conv2"):
        encoders.tactile_encode(np.zeros((3, 4, 4)), tactile_params)


def test_passthrough_identity_projection():
    spec = VisualEncoderSpec("embedding_passthrough", 64)
    params = {"visual.proj.weight": Tensor(np.eye(64)), "visual.proj.bias": Tensor(np.zeros(64))}
    e = np.random.default_rng(3).normal(size=64)
    np.testing.assert_array_equal(encoders.visual_encode(e, spec, params).data, e)


def test_passthrough_512_to_64():
    spec = VisualEncoderSpec()
    params = encoders.init_visual_params(spec, np.random.default_rng(0))
    assert encoders.visual_encode(np.ones(512), spec, params).shape == (64,)
    with pytest.raises(ValidationError):
        encoders.visual_encode(np.ones(100), spec, params)


def test_small_cnn_zero_image():
    spec = VisualEncoderSpec("small_cnn")
    params = encoders.init_visual_params(spec, np.random.default_rng(0))
    for k, v in params.items():
        if k.endswith("bias"):
            v.data = np.zeros_like(v.data)
    with no_grad():
        np.testing.assert_array_equal(encoders.visual_encode(np.zeros((3, 32, 32)), spec, params).data, np.zeros(64))


def test_frozen_backbone_flags():
    spec = VisualEncoderSpec("small_cnn", frozen=True)
    entries = encoders.visual_param_shapes(spec)
    assert all(is_bb == name.startswith("visual.backbone.") for name, _, is_bb in entries)
    params = encoders.init_visual_params(spec, np.random.default_rng(0))
    assert not any(p.requires_grad for n, p in params.items() if ".backbone." in n)
    assert all(p.requires_grad for n, p in params.items() if ".proj." in n)


class TestEncodeSequence:
    def test_shapes(self, tactile_params):
        enc = TactileEncoder(tactile_params)
        assert encode_sequence(np.zeros((13, 3, 4, 4)), enc).shape == (64, 13)
        assert encode_sequence(np.zeros((1, 3, 4, 4)), enc).shape == (64, 1)
        assert encode_sequence(np.zeros((2, 13, 3, 4, 4)), enc).shape == (2, 64, 13)

    def test_duplicated_frames_give_duplicated_columns(self, tactile_params):
        f = np.random.default_rng(4).normal(size=(3, 4, 4))
        out = encode_sequence(np.stack([f, f, f]), TactileEncoder(tactile_params)).data
        np.testing.assert_array_equal(out[:, 0], out[:, 2])

    def test_non_finite_frame_reported(self):
        spec = VisualEncoderSpec(embed_dim=8)
        enc = VisualEncoder(spec, encoders.init_visual_params(spec, np.random.default_rng(0)))
        x = np.zeros((5, 8))
        x[3, 2] = np.nan
        with pytest.raises(DataError, match="frame 3"):
            encode_sequence(x, enc)
