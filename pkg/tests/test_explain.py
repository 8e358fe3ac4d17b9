import numpy as np
import pytest
from hypothesis import given, strategies as st

from cardiomix.errors import UnsupportedArchError, UsageError
from cardiomix.explain import (
    AttributionMap, OcclusionConfig, gradcam, heatmap_image, occlusion_map, pointing_game,
    render_heatmap, saliency_grad, window_starts, write_attribution_csv,
)
from cardiomix.imgcore import Box, Image, load_ppm
from cardiomix.model import ModelParams, ModelSpec, init_params, logit_input_gradient

from oracles import linear_occlusion, numeric_grad, relative_error


def _logistic(h, w, seed=0):
    return init_params(ModelSpec(arch="logistic", height=h, width=w), seed=seed)


def test_window_grid_100_15_8():
    starts = window_starts(100, 15, 8)
    assert starts[:11] == list(range(0, 81, 8)) and starts[-1] == 85 and len(starts) == 12
    assert window_starts(23, 15, 8) == [0, 8]  # grid already reaches the border


@given(st.integers(1, 60), st.integers(1, 60), st.integers(1, 20))
def test_windows_cover_every_pixel(n, window, stride):
    if window > n:
        with pytest.raises(UsageError):
            window_starts(n, window, stride)
        return
    stride = min(stride, window)  # larger strides are rejected by OcclusionConfig
    covered = np.zeros(n, dtype=bool)
    for s in window_starts(n, window, stride):
        assert 0 <= s <= n - window
        covered[s : s + window] = True
    assert covered.all()


def test_linear_occlusion_oracle_small():
    params = _logistic(17, 13, seed=1)
    x = np.random.default_rng(1).random((17, 13))
    cfg = OcclusionConfig(window=5, stride=4, baseline=0.25, batch_size=7)
    attr = occlusion_map(params, x, cfg)
    w = params["W"][:, 1].reshape(17, 13)
    deltas, pix = linear_occlusion(w, x, 0.25, 5, window_starts(17, 5, 4), window_starts(13, 5, 4))
    assert len(attr.windows) == len(deltas)
    for r, c, d in attr.windows:
        assert abs(d - deltas[(r, c)]) <= 1e-9
    assert np.abs(attr.values - pix).max() <= 1e-9


def test_constant_model_gives_zero_maps():
    spec = ModelSpec(arch="logistic", height=10, width=10)
    params = ModelParams(spec, {"W": np.zeros((100, 2)), "b": np.array([0.3, -0.2])})
    x = np.random.default_rng(0).random((10, 10))
    assert np.all(occlusion_map(params, x, OcclusionConfig(window=3, stride=2)).values == 0)
    assert np.all(saliency_grad(params, x).values == 0)


def test_occluding_baseline_content_gives_zero_delta():
    params = init_params(ModelSpec(arch="smallcnn", height=20, width=20), seed=2)
    x = np.random.default_rng(2).random((20, 20))
    x[:5, :5] = 0.0
    attr = occlusion_map(params, x, OcclusionConfig(window=5, stride=5))
    assert dict(((r, c), d) for r, c, d in attr.windows)[(0, 0)] == 0.0


def test_occlusion_probability_target_and_threads():
    params = init_params(ModelSpec(arch="tinyvit", height=20, width=20), seed=3)
    x = np.random.default_rng(3).random((20, 20))
    cfg = OcclusionConfig(window=6, stride=4, target="probability", batch_size=5)
    serial = occlusion_map(params, x, cfg, threads=1)
    parallel = occlusion_map(params, x, cfg, threads=4)
    assert np.array_equal(serial.values, parallel.values)
    assert np.abs(serial.values).max() <= 1.0


def test_occlusion_config_validation():
    params = _logistic(10, 10)
    x = np.zeros((10, 10))
    for bad in (OcclusionConfig(window=11), OcclusionConfig(stride=0, window=3),
                OcclusionConfig(window=3, stride=4),
                OcclusionConfig(window=3, baseline=2.0), OcclusionConfig(window=3, target="loss")):
        with pytest.raises(UsageError):
            occlusion_map(params, x, bad)


def test_logistic_saliency_is_abs_weight():
    params = _logistic(6, 7, seed=4)
    x = np.random.default_rng(4).random((6, 7))
    sal = saliency_grad(params, x, target_class=1)
    assert np.array_equal(sal.values, np.abs(params["W"][:, 1].reshape(6, 7)))


@pytest.mark.parametrize("arch", ["logistic", "smallcnn", "tinyvit"])
def test_input_gradient_matches_finite_differences(arch):
    params = init_params(ModelSpec(arch=arch, height=20, width=20), seed=5)
    x = np.random.default_rng(5).random((1, 20, 20, 1))
    g = logit_input_gradient(params, x, 1).reshape(-1)

    def logit():
        from cardiomix.model import forward_batch
        return forward_batch(params, x)[0, 1]

    idx = np.random.default_rng(0).choice(x.size, 25, replace=False)
    num = numeric_grad(logit, x, 1e-5, idx)
    fine = numeric_grad(logit, x, 1e-6, idx)
    checked = [i for i in idx if relative_error(num[i], fine[i]) <= 1e-4]  # skip kinks
    assert len(checked) >= 20
    assert max(relative_error(g[i], num[i]) for i in checked) < 1e-4
    sal = saliency_grad(params, x[0], 1).values.reshape(-1)
    assert np.array_equal(sal, np.abs(g))


def test_gradcam_contract():
    params = init_params(ModelSpec(arch="smallcnn", height=20, width=20), seed=6)
    x = np.random.default_rng(6).random((20, 20))
    cam = gradcam(params, x)
    assert cam.values.shape == (20, 20) and np.all(cam.values >= 0)
    zero_head = params.copy()
    zero_head.tensors["fc2.w"][:] = 0.0
    assert np.all(gradcam(zero_head, x).values == 0)
    with pytest.raises(UnsupportedArchError):
        gradcam(_logistic(20, 20), x)


def test_gradcam_matches_definition():
    params = init_params(ModelSpec(arch="smallcnn", height=20, width=20, cnn_channels=(3, 4)), seed=7)
    # positive conv weights on a positive image keep every map entry off the
    # ReLU floor, so pools have no ties and finite differences are a valid reference
    for name in ("conv1.w", "conv2.w"):
        params.tensors[name] = np.abs(params.tensors[name])
    x = np.random.default_rng(7).random((20, 20))
    from cardiomix.model.cnn import forward as cnn_forward
    from cardiomix.preprocess import resize_array

    # alpha_k from finite differences of the class logit w.r.t. the last conv maps
    logits, cache = cnn_forward(params.spec, params.tensors, x[None, :, :, None])
    maps = cache["conv_maps"][:, 0]  # (C, h, w), post-ReLU
    assert maps.min() > 0
    w = params.tensors
    def head(a):
        pooled = a.reshape(4, 5, 2, 5, 2).max(axis=(2, 4))
        z = np.maximum(pooled.reshape(-1) @ w["fc1.w"] + w["fc1.b"], 0)
        return (z @ w["fc2.w"] + w["fc2.b"])[1]
    assert abs(head(maps) - logits[0, 1]) < 1e-12
    grads = np.zeros_like(maps)
    a = maps.copy()
    for idx in np.ndindex(a.shape):
        old = a[idx]
        a[idx] = old + 1e-6; up = head(a)
        a[idx] = old - 1e-6; down = head(a)
        a[idx] = old
        grads[idx] = (up - down) / 2e-6
    cam = np.maximum(np.tensordot(grads.mean(axis=(1, 2)), maps, axes=1), 0)
    want = np.maximum(resize_array(cam, 20, 20), 0)
    assert np.abs(gradcam(params, x).values - want).max() < 1e-6


def test_heatmap_zero_map_is_underlay():
    under = Image(np.random.default_rng(8).random((5, 6)))
    out = heatmap_image(np.zeros((5, 6)), under)
    assert np.array_equal(out.data, np.repeat(under.data, 3, axis=-1))


def test_heatmap_hot_pixel_reddest(tmp_path):
    under = Image(np.full((5, 5), 0.5))
    v = np.zeros((5, 5))
    v[2, 3] = 2.0
    v[0, 0] = -1.0
    img = render_heatmap(AttributionMap(v), under, tmp_path / "h.ppm")
    red = img.data[..., 0]
    assert red[2, 3] == red.max() and np.sum(red == red.max()) == 1
    assert img.data[0, 0, 2] > img.data[1, 1, 2]
    first = (tmp_path / "h.ppm").read_bytes()
    render_heatmap(AttributionMap(v), under, tmp_path / "h.ppm")
    assert (tmp_path / "h.ppm").read_bytes() == first
    assert load_ppm(tmp_path / "h.ppm").shape == (5, 5, 3)
    with pytest.raises(UsageError):
        heatmap_image(np.zeros((4, 5)), under)


def test_attribution_csv(tmp_path):
    write_attribution_csv(np.array([[0.5, -1.0], [0.0, 2.0]]), tmp_path / "a.csv")
    assert (tmp_path / "a.csv").read_text() == "0.5,-1.0\n0.0,2.0\n"


def test_pointing_game_examples():
    box = Box(4, 4, 9, 9)
    v = np.zeros((12, 12))
    v[6, 6] = 1.0
    assert pointing_game(v, box)
    v = np.zeros((12, 12))
    v[11, 0] = 1.0
    assert not pointing_game(v, box)
    assert not pointing_game(np.ones((12, 12)), box)  # tie -> (0, 0)
    assert pointing_game(np.ones((12, 12)), Box(0, 0, 1, 1))
    with pytest.raises(UsageError):
        pointing_game(np.ones((12, 12)), Box(10, 10, 13, 12))
