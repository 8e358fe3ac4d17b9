import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from cardiomix.augment import MixParams
from cardiomix.errors import (
    CheckpointFormatError, CheckpointIntegrityError, UnsupportedArchError, UsageError,
)
from cardiomix.model import (
    ModelParams, ModelSpec, TrainConfig, attention_maps, forward, forward_batch, init_params,
    load_checkpoint, loss_and_grads, loss_soft_ce, predict_proba, save_checkpoint, softmax, train,
    train_arrays, write_loss_history,
)
from cardiomix.model import layers as L

from oracles import gradient_check, naive_conv_same, numeric_grad, relative_error

ARCH_NAMES = ["logistic", "smallcnn", "tinyvit"]


def _spec(arch, size=20, channels=1):
    return ModelSpec(arch=arch, height=size, width=size, channels=channels)


def _batch(seed, n=3, size=20, channels=1):
    rng = np.random.default_rng(seed)
    x = rng.random((n, size, size, channels))
    y = rng.dirichlet([1.0, 1.0], size=n)
    return x, y


# ---- forward


def test_zero_logistic_gives_uniform():
    spec = ModelSpec(arch="logistic", height=4, width=4)
    p = ModelParams(spec, {"W": np.zeros((16, 2)), "b": np.zeros(2)})
    _, probs = forward(p, np.full((4, 4), 0.3))
    assert probs.tolist() == [0.5, 0.5]


def test_logistic_hand_dot_product():
    spec = ModelSpec(arch="logistic", height=2, width=2)
    w = np.zeros((4, 2))
    w[:, 1] = [0.1, 0.2, 0.3, 0.4]
    logits, probs = forward(ModelParams(spec, {"W": w, "b": np.zeros(2)}), np.ones((2, 2)))
    assert abs(logits[1] - 1.0) < 1e-15 and logits[0] == 0.0
    assert np.allclose(probs, [1 / (1 + math.e), math.e / (1 + math.e)], atol=1e-15, rtol=0)


@pytest.mark.parametrize("arch", ARCH_NAMES)
def test_probs_are_distribution(arch):
    params = init_params(_spec(arch), seed=4)
    x, _ = _batch(4, n=5)
    probs = predict_proba(params, x)
    assert np.all(np.abs(probs.sum(axis=1) - 1.0) <= 1e-12)
    assert np.all((probs > 0) & (probs < 1))


def test_forward_shape_mismatch():
    params = init_params(_spec("smallcnn"), seed=0)
    with pytest.raises(UsageError):
        forward(params, np.zeros((21, 20)))


@given(st.lists(st.floats(-30, 30), min_size=2, max_size=6), st.floats(-100, 100))
def test_softmax_shift_invariant(z, c):
    z = np.array(z)
    assert np.abs(softmax(z) - softmax(z + c)).max() <= 1e-12


def test_conv_matches_naive_loop():
    rng = np.random.default_rng(0)
    x = rng.random((7, 6, 2))
    w = rng.normal(size=(3, 2, 3, 3))
    b = rng.normal(size=3)
    out, _ = L.conv2d_forward(np.ascontiguousarray(x.transpose(2, 0, 1))[:, None], w, b)
    assert np.allclose(out[:, 0].transpose(1, 2, 0), naive_conv_same(x, w, b), atol=1e-12, rtol=0)


def test_maxpool_ties_route_to_first():
    x = np.ones((1, 1, 2, 2))
    out = L.maxpool_forward(x, 2)
    dx = L.maxpool_backward(x, out, 2, np.full((1, 1, 1, 1), 3.0))
    assert dx[0, 0].tolist() == [[3.0, 0.0], [0.0, 0.0]]


def test_attention_rows_sum_to_one():
    params = init_params(_spec("tinyvit"), seed=2)
    x, _ = _batch(2, n=1)
    (att,) = attention_maps(params, x)
    assert att.shape == (4, 5, 5)
    assert np.all(np.abs(att.sum(axis=-1) - 1.0) <= 1e-12)


def test_moving_a_patch_changes_vit_output():
    params = init_params(_spec("tinyvit"), seed=3)
    x, _ = _batch(3, n=1)
    moved = x.copy()
    moved[0, :10, :10], moved[0, 10:, 10:] = x[0, 10:, 10:], x[0, :10, :10]
    assert not np.allclose(forward_batch(params, x), forward_batch(params, moved))


# ---- loss


def test_loss_examples():
    assert loss_soft_ce([0.0, 1.0], [0.0, 1.0]) == 0.0
    assert abs(loss_soft_ce(np.full(5, 0.2), [0.1, 0.2, 0.3, 0.4, 0.0]) - math.log(5)) < 1e-15


@given(st.floats(0.0, 1.0), st.integers(0, 1000))
def test_loss_linear_in_label(lam, seed):
    rng = np.random.default_rng(seed)
    p = rng.dirichlet([1, 1, 1])
    y1, y2 = rng.dirichlet([1, 1, 1]), rng.dirichlet([1, 1, 1])
    mixed = loss_soft_ce(p, lam * y1 + (1 - lam) * y2)
    assert abs(mixed - (lam * loss_soft_ce(p, y1) + (1 - lam) * loss_soft_ce(p, y2))) < 1e-12


def test_logit_gradient_is_probs_minus_label():
    # the logistic bias gradient is exactly mean(probs - label)
    spec = ModelSpec(arch="logistic", height=5, width=5)
    params = init_params(spec, seed=1)
    x, y = _batch(1, n=4, size=5)
    _, grads = loss_and_grads(params, x, y)
    probs = predict_proba(params, x)
    assert np.abs(grads["b"] - (probs - y).mean(axis=0)).max() < 1e-15


# ---- gradients


@pytest.mark.parametrize("arch", ARCH_NAMES)
@pytest.mark.parametrize("seed", range(5))
def test_gradients_match_finite_differences(arch, seed):
    params = init_params(_spec(arch), seed=seed)
    x, y = _batch(100 + seed)
    worst, compared, _ = gradient_check(params, x, y, loss_and_grads, seed=seed)
    assert compared >= 12 * len(params.names()) // 2
    assert worst < 1e-4


@pytest.mark.parametrize("arch", ARCH_NAMES)
def test_gradients_multichannel(arch):
    params = init_params(_spec(arch, channels=3), seed=9)
    x, y = _batch(9, n=2, channels=3)
    assert gradient_check(params, x, y, loss_and_grads, per_tensor=6, seed=9)[0] < 1e-4


def test_convex_optimum_gradient_vanishes():
    # soft 0.9/0.1 targets on separable points keep the optimum finite
    spec = ModelSpec(arch="logistic", height=2, width=2)
    x = np.array([[[0.9, 0.1], [0.2, 0.8]], [[0.1, 0.9], [0.8, 0.3]],
                  [[0.7, 0.2], [0.1, 0.9]], [[0.2, 0.7], [0.9, 0.2]]])[..., None]
    y = np.array([[0.9, 0.1], [0.1, 0.9], [0.9, 0.1], [0.1, 0.9]])
    params, _ = train_arrays(x, y, spec, TrainConfig(epochs=3000, batch_size=4, learning_rate=2.0))
    _, grads = loss_and_grads(params, x, y)
    norm = math.sqrt(sum(float((g**2).sum()) for g in grads.values()))
    assert norm < 1e-6


# ---- training


def _toy_separable(n=50, seed=0):
    rng = np.random.default_rng(seed)
    x = rng.random((2 * n, 8, 8, 1)) * 0.5
    x[n:, :, :4] += 0.4
    y = np.zeros((2 * n, 2))
    y[:n, 0] = 1
    y[n:, 1] = 1
    return x, y


def test_logistic_toy_set_converges():
    x, y = _toy_separable()
    _, history = train_arrays(x, y, ModelSpec(arch="logistic", height=8, width=8),
                              TrainConfig(epochs=50, seed=0))
    assert history[-1] < 0.1


def test_zero_learning_rate_keeps_params():
    x, y = _toy_separable(n=10)
    spec = ModelSpec(arch="smallcnn", height=8, width=8, cnn_channels=(2,), hidden=4)
    init = init_params(spec, seed=1)
    params, _ = train_arrays(x, y, spec, TrainConfig(epochs=2, learning_rate=0.0), init)
    for name in init.names():
        assert np.array_equal(params[name], init[name])


def test_single_plain_sgd_step():
    x, y = _toy_separable(n=4)
    spec = ModelSpec(arch="logistic", height=8, width=8)
    init = init_params(spec, seed=2)
    cfg = TrainConfig(epochs=1, batch_size=8, learning_rate=0.3, momentum=0.0)
    params, _ = train_arrays(x, y, spec, cfg, init)
    _, g = loss_and_grads(init, x, y)  # full batch, so shuffling does not matter
    for name in init.names():
        assert np.allclose(params[name], init[name] - 0.3 * g[name], atol=1e-15, rtol=0)


@pytest.mark.parametrize("mix", [None, MixParams("cutmix"), MixParams("mixup")])
def test_training_deterministic(small_synthetic, mix):
    spec = ModelSpec(arch="smallcnn", height=24, width=24, cnn_channels=(4, 4), hidden=8)
    cfg = TrainConfig(epochs=2, seed=5, mix=mix)
    p1, h1 = train(small_synthetic, spec, cfg)
    p2, h2 = train(small_synthetic, spec, cfg)
    assert h1 == h2
    assert all(np.array_equal(p1[n], p2[n]) for n in p1.names())


def test_train_empty_and_bad_config():
    spec = ModelSpec(arch="logistic", height=2, width=2)
    with pytest.raises(UsageError):
        train_arrays(np.zeros((0, 2, 2, 1)), np.zeros((0, 2)), spec, TrainConfig())
    with pytest.raises(UsageError):
        TrainConfig(mix_fraction=1.5).validate()
    with pytest.raises(UsageError):
        TrainConfig(learning_rate=-1.0).validate()


def test_loss_history_csv(tmp_path):
    write_loss_history([0.5, 0.25], tmp_path / "loss.csv")
    assert (tmp_path / "loss.csv").read_text() == "epoch,mean_loss\n1,0.5\n2,0.25\n"


# ---- checkpoints


@pytest.mark.parametrize("arch", ARCH_NAMES)
def test_checkpoint_round_trip_bit_exact(tmp_path, arch):
    params = init_params(_spec(arch), seed=6)
    save_checkpoint(params, tmp_path / "m.cmix")
    loaded = load_checkpoint(tmp_path / "m.cmix")
    assert loaded.spec == params.spec
    x, _ = _batch(6, n=4)
    assert np.array_equal(forward_batch(loaded, x), forward_batch(params.to_float32(), x))
    save_checkpoint(loaded, tmp_path / "again.cmix")
    assert (tmp_path / "again.cmix").read_bytes() == (tmp_path / "m.cmix").read_bytes()


def test_checkpoint_errors(tmp_path):
    params = init_params(_spec("logistic"), seed=0)
    path = tmp_path / "m.cmix"
    save_checkpoint(params, path)
    raw = path.read_bytes()
    path.write_bytes(raw[:-3])
    with pytest.raises(CheckpointIntegrityError):
        load_checkpoint(path)
    path.write_bytes(raw.replace(b"CMIX1", b"CMIX9", 1))
    with pytest.raises(CheckpointFormatError):
        load_checkpoint(path)
    path.write_bytes(raw.replace(b"arch logistic", b"arch resnet", 1))
    with pytest.raises(UnsupportedArchError):
        load_checkpoint(path)
    path.write_bytes(raw.replace(b"tensor W 400 2", b"tensor W 400 3", 1))
    with pytest.raises(CheckpointIntegrityError):
        load_checkpoint(path)


def test_spec_validation():
    with pytest.raises(UsageError):
        ModelSpec(arch="tinyvit", height=25, width=20)
    with pytest.raises(UsageError):
        ModelSpec(num_classes=1)
    with pytest.raises(UnsupportedArchError):
        ModelSpec(arch="resnet")
