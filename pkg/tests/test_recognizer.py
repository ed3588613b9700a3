"""Four-stream CNN classifier: forward semantics, prediction, and the static
cost model (multiply-accumulate census and parameter count)."""

import numpy as np
import pytest

from skelact.autograd import Tensor
from skelact.encoder import EncodedBundle, EnhanceFlags, uniform_attention
from skelact.errors import DimensionError, UsageError
from skelact.model import ModelConfig, ModelParams
from skelact.recognizer import count_flops, forward, predict, stream_forward
from skelact.skeleton import ntu_topology

CHAIN_BONES = ((0, 1), (1, 2), (2, 3))


def _config(**kw):
    base = dict(joints=4, classes=3, bones=CHAIN_BONES, root=0, labels=(0, 1, 2),
                frames=64, channels=(2, 3, 4), fc_hidden=8, scale_hidden=6)
    base.update(kw)
    return ModelConfig(**base)


def _ntu_config(**kw):
    topo = ntu_topology()
    base = dict(joints=25, classes=60, bones=topo.bones, root=topo.root,
                labels=tuple(range(1, 61)))
    base.update(kw)
    return ModelConfig(**base)


def _bundle(images):
    imgs = [Tensor(np.asarray(i, dtype=np.float32)) for i in images]
    return EncodedBundle(
        joints_image=imgs[0], bones_image=imgs[1],
        joint_vel_image=imgs[2] if len(imgs) > 2 else None,
        bone_vel_image=imgs[3] if len(imgs) > 2 else None,
        attention=uniform_attention(imgs[0].shape[-1]),
        scaled_joints=imgs[0], scaled_bones=imgs[1],
    )


# ---------------------------------------------------------------------------
# forward path


def test_stream_collapses_image_to_feature_column():
    params = ModelParams.build(_config(), seed=0)
    rng = np.random.default_rng(0)
    img = rng.normal(size=(3, 64, 64)).astype(np.float32)
    feats = stream_forward(img, params.streams[0])
    assert feats.shape == (4,)
    batch = stream_forward(np.stack([img, img]), params.streams[0])
    assert batch.shape == (2, 4)
    assert np.array_equal(batch.data[0], batch.data[1])
    assert np.allclose(batch.data[0], feats.data, atol=1e-6)
    with pytest.raises(DimensionError):
        stream_forward(np.zeros((3, 32, 32), dtype=np.float32), params.streams[0])


def test_zero_images_give_zero_logits():
    params = ModelParams.build(_config(), seed=0)
    zeros = [np.zeros((3, 64, 64), dtype=np.float32)] * 4
    logits = forward(_bundle(zeros), params)
    assert logits.shape == (3,)
    assert not np.any(logits.data)  # every bias starts at zero


def test_forward_is_positively_homogeneous():
    # leaky ReLU, max pooling and bias-free affine maps all commute with
    # positive scaling, so doubling the images exactly doubles the logits
    params = ModelParams.build(_config(), seed=1)
    rng = np.random.default_rng(1)
    images = [rng.normal(size=(3, 64, 64)).astype(np.float32) for _ in range(4)]
    base = forward(_bundle(images), params).data
    twice = forward(_bundle([2.0 * i for i in images]), params).data
    assert np.allclose(twice, 2.0 * base, atol=1e-4)


def test_stream_order_matters():
    params = ModelParams.build(_config(), seed=2)
    rng = np.random.default_rng(2)
    images = [rng.normal(size=(3, 64, 64)).astype(np.float32) for _ in range(4)]
    base = forward(_bundle(images), params).data
    swapped = forward(_bundle([images[1], images[0]] + images[2:]), params).data
    assert not np.allclose(base, swapped, atol=1e-3)


def test_forward_rejects_stream_mismatch():
    params = ModelParams.build(_config(), seed=0)  # 4 streams
    rng = np.random.default_rng(3)
    images = [rng.normal(size=(3, 64, 64)).astype(np.float32) for _ in range(2)]
    with pytest.raises(DimensionError, match="2 images.*4 streams"):
        forward(_bundle(images), params)


def test_batched_forward_matches_single():
    params = ModelParams.build(_config(), seed=3)
    rng = np.random.default_rng(4)
    images = [rng.normal(size=(2, 3, 64, 64)).astype(np.float32) for _ in range(4)]
    batched = forward(_bundle(images), params).data
    for b in range(2):
        single = forward(_bundle([i[b] for i in images]), params).data
        assert np.allclose(batched[b], single, atol=1e-5)


# ---------------------------------------------------------------------------
# prediction


def test_predict_reports_softmax_of_logits():
    params = ModelParams.build(_config(), seed=4)
    params.classifier.fc2_weight.data[:] = 0.0
    params.classifier.fc2_bias.data[:] = [5.0, 1.0, 1.0]
    rng = np.random.default_rng(5)
    images = [rng.normal(size=(3, 64, 64)).astype(np.float32) for _ in range(4)]
    cls, probs = predict(_bundle(images), params)
    want = np.exp([5.0, 1.0, 1.0]) / np.exp([5.0, 1.0, 1.0]).sum()
    assert cls == 0
    assert np.allclose(probs, want, atol=1e-6)
    assert probs.sum() == pytest.approx(1.0, abs=1e-6)


def test_predict_breaks_ties_toward_lowest_class():
    params = ModelParams.build(_config(), seed=5)
    params.classifier.fc2_weight.data[:] = 0.0  # logits identically zero
    rng = np.random.default_rng(6)
    images = [rng.normal(size=(3, 64, 64)).astype(np.float32) for _ in range(4)]
    cls, probs = predict(_bundle(images), params)
    assert cls == 0
    assert np.allclose(probs, 1.0 / 3, atol=1e-6)
    batched = [np.stack([i, i]) for i in images]
    with pytest.raises(DimensionError):
        predict(_bundle(batched), params)


# ---------------------------------------------------------------------------
# configuration geometry


def test_default_geometry_traces_to_single_column():
    cfg = _ntu_config()
    assert cfg.conv_trace() == [(16, 32), (4, 64), (1, 128)]
    assert cfg.feature_width() == 128
    assert cfg.stream_count() == 4
    assert _ntu_config(flags=EnhanceFlags(velocity=False)).stream_count() == 2


def test_config_validation():
    with pytest.raises(UsageError, match="pool evenly"):
        _config(frames=32).feature_width()
    with pytest.raises(UsageError, match="reduce to 1x1"):
        _config(frames=256).feature_width()
    with pytest.raises(UsageError, match="labels"):
        _config(classes=5)
    with pytest.raises(UsageError, match="span"):
        _config(bones=CHAIN_BONES[:2])


def test_build_is_seed_deterministic():
    a = ModelParams.build(_config(), seed=7)
    b = ModelParams.build(_config(), seed=7)
    c = ModelParams.build(_config(), seed=8)
    names = a.named_tensors()
    assert names.keys() == b.named_tensors().keys()
    for key, tensor in names.items():
        assert np.array_equal(tensor.data, b.named_tensors()[key].data), key
    assert any(
        not np.array_equal(t.data, c.named_tensors()[k].data)
        for k, t in names.items()
    )


def test_frozen_embeddings_under_raw_flags():
    raw = EnhanceFlags(False, False, False, False, True)
    params = ModelParams.build(_config(flags=raw), seed=0)
    named = params.named_tensors()
    for name in named:
        if name.startswith("embed."):
            assert not named[name].requires_grad
    assert all(not k.startswith(("joint_scale", "bone_scale", "attention", "temporal"))
               for k in named)
    trainable = params.trainable_tensors()
    assert set(trainable) == {k for k in named if k.startswith(("stream", "classifier"))}


# ---------------------------------------------------------------------------
# static cost model


def test_count_flops_small_config_by_hand():
    report = count_flops(_config())
    t, j, hidden = 64, 4, 6
    layers = report.per_layer
    assert layers["encoder.joint_scale.fc1"] == j * hidden * (t * 3)
    assert layers["encoder.joint_scale.fc2"] == j * hidden
    assert layers["encoder.bone_scale.fc1"] == (j - 1) * hidden * (t * 3)
    assert layers["encoder.attention.shared"] == t * j * (j * 3)
    assert layers["encoder.attention.scores"] == t * t * j
    assert layers["encoder.embed.joints"] == 3 * t * j * t
    # conv stages: 64 -> 32 (pool 16) -> 8 (pool 4) -> 2 (pool 1)
    assert layers["stream0.conv1"] == 2 * 32 * 32 * 3 * 9
    assert layers["stream0.conv2"] == 3 * 8 * 8 * 2 * 9
    assert layers["stream0.conv3"] == 4 * 2 * 2 * 3 * 9
    assert layers["classifier.fc1"] == (4 * 4) * 8
    assert layers["classifier.fc2"] == 8 * 3
    assert report.total_macs == sum(layers.values())
    assert report.total_flops == 2 * report.total_macs


def test_count_flops_default_config_totals():
    report = count_flops(_ntu_config())
    assert report.total_macs == 11_720_064
    assert report.total_flops == 23_440_128
    assert report.param_count == 554_380


def test_flags_shrink_the_census():
    full = count_flops(_config())
    raw = count_flops(_config(flags=EnhanceFlags(False, False, False, False, True)))
    assert not any(k.startswith("encoder.joint_scale") for k in raw.per_layer)
    assert not any(k.startswith("encoder.attention") for k in raw.per_layer)
    assert raw.total_macs < full.total_macs
    half = count_flops(_config(flags=EnhanceFlags(velocity=False)))
    assert sum(k.startswith("stream") for k in half.per_layer) == 6
    assert half.per_layer["classifier.fc1"] == (2 * 4) * 8


@pytest.mark.parametrize("flags", [
    EnhanceFlags(),
    EnhanceFlags(False, False, False, False, True),
    EnhanceFlags(True, True, True, True, False),
    EnhanceFlags(True, False, True, False, True),
])
def test_param_count_matches_built_tensors(flags):
    cfg = _config(flags=flags)
    report = count_flops(cfg)
    built = sum(t.data.size for t in ModelParams.build(cfg).named_tensors().values())
    assert report.param_count == built
