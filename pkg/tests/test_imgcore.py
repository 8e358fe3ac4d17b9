import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from cardiomix.errors import ManifestError, PgmLengthError, PgmParseError, UsageError
from cardiomix.imgcore import (
    Box, Dataset, Example, Image, SyntheticSpec, generate_synthetic, lesion_contrast,
    load_lesion_boxes, load_manifest, load_pgm, load_ppm, one_hot, quantize, save_dataset,
    save_pgm, save_ppm,
)

unit_images = st.integers(1, 12).flatmap(
    lambda h: st.integers(1, 12).flatmap(
        lambda w: arrays(np.float64, (h, w), elements=st.floats(0.0, 1.0))
    )
)


def test_image_rejects_out_of_range():
    with pytest.raises(UsageError):
        Image(np.full((2, 2), 1.5))
    with pytest.raises(UsageError):
        Image(np.array([[np.nan]]))


def test_image_copies_and_freezes_input():
    a = np.zeros((2, 3))
    img = Image(a)
    a[0, 0] = 1.0
    assert img.data[0, 0, 0] == 0.0
    assert img.shape == (2, 3, 1)
    with pytest.raises(ValueError):
        img.data[0, 0, 0] = 0.5


def test_soft_label_checked():
    img = Image(np.zeros((2, 2)))
    with pytest.raises(UsageError):
        Example("a", img, np.array([0.6, 0.6]))
    with pytest.raises(UsageError):
        Example("a", img, np.array([1.0, 0.0]), lesion_box=Box(0, 0, 3, 1))


def test_dataset_shapes_must_agree():
    a = Example("a", Image(np.zeros((2, 2))), one_hot(0, 2))
    b = Example("b", Image(np.zeros((3, 2))), one_hot(1, 2))
    with pytest.raises(UsageError):
        Dataset((a, b))


def test_load_p5_example(tmp_path):
    p = tmp_path / "x.pgm"
    p.write_bytes(b"P5 2 2 255\n" + bytes([0, 255, 128, 64]))
    v = load_pgm(p).data.ravel()
    assert v.tolist() == [0.0, 1.0, 128 / 255, 64 / 255]
    assert abs(v[2] - 0.50196) < 1e-5 and abs(v[3] - 0.25098) < 1e-5


def test_load_p2_with_comments_and_maxval(tmp_path):
    p = tmp_path / "x.pgm"
    p.write_text("P2\n# comment\n3 1\n# another\n15\n0 15 5\n")
    assert load_pgm(p).data.ravel().tolist() == [0.0, 1.0, 5 / 15]


def test_bad_magic_reports_offset(tmp_path):
    p = tmp_path / "x.pgm"
    p.write_bytes(b"P7 1 1 255\n\x00")
    with pytest.raises(PgmParseError) as err:
        load_pgm(p)
    assert err.value.offset == 0
    assert "byte offset 0" in str(err.value)


def test_bad_header_and_truncation(tmp_path):
    p = tmp_path / "x.pgm"
    p.write_bytes(b"P5 2 x 255\n\x00\x00")
    with pytest.raises(PgmParseError) as err:
        load_pgm(p)
    assert err.value.offset == 5
    p.write_bytes(b"P5 2 2 255\n\x00\x00\x00")
    with pytest.raises(PgmLengthError):
        load_pgm(p)
    p.write_bytes(b"P5 2 2 300\n\x00\x00\x00\x00")
    with pytest.raises(PgmParseError):
        load_pgm(p)


def test_save_zero_image_bytes(tmp_path):
    p = tmp_path / "z.pgm"
    save_pgm(Image(np.zeros((3, 3))), p)
    raw = p.read_bytes()
    assert raw.startswith(b"P5\n3 3\n255\n")
    assert raw[len(b"P5\n3 3\n255\n"):] == bytes(9)


def test_half_rounds_away_from_zero():
    assert quantize(np.array([0.5]))[0] == 128
    assert quantize(np.array([0.0, 1.0, 1 / 510]))[[0, 1]].tolist() == [0, 255]


def test_save_channel_mismatch(tmp_path):
    with pytest.raises(UsageError):
        save_pgm(Image(np.zeros((2, 2, 3))), tmp_path / "a.pgm")
    with pytest.raises(UsageError):
        save_ppm(Image(np.zeros((2, 2))), tmp_path / "a.ppm")


def test_ppm_round_trip(tmp_path):
    a = np.random.default_rng(0).random((4, 5, 3))
    save_ppm(Image(a), tmp_path / "a.ppm")
    back = load_ppm(tmp_path / "a.ppm").data
    assert np.abs(back - a).max() <= 1 / 510 + 1e-15


@given(unit_images)
def test_pgm_round_trip_within_half_step(tmp_path_factory, a):
    p = tmp_path_factory.mktemp("rt") / "a.pgm"
    save_pgm(Image(a), p)
    first = p.read_bytes()
    back = load_pgm(p).data[:, :, 0]
    assert np.abs(back - a).max() <= 1 / 510 + 1e-15
    save_pgm(Image(a), p)
    assert p.read_bytes() == first


def _write_manifest(tmp_path, rows):
    (tmp_path / "img").mkdir(exist_ok=True)
    for name in ("a", "b"):
        save_pgm(Image(np.zeros((2, 2))), tmp_path / "img" / f"{name}.pgm")
    m = tmp_path / "manifest.csv"
    m.write_text("path,label\n" + "".join(f"{r}\n" for r in rows))
    return m


def test_manifest_two_rows(tmp_path):
    ds = load_manifest(_write_manifest(tmp_path, ["img/a.pgm,0", "img/b.pgm,1"]))
    assert len(ds) == 2
    assert ds.labels().tolist() == [[1.0, 0.0], [0.0, 1.0]]
    assert [ex.id for ex in ds.examples] == ["a", "b"]


def test_manifest_errors(tmp_path):
    with pytest.raises(ManifestError, match="empty dataset"):
        load_manifest(_write_manifest(tmp_path, []))
    with pytest.raises(ManifestError, match="line 3"):
        load_manifest(_write_manifest(tmp_path, ["img/a.pgm,0", "img/b.pgm,2"]))
    with pytest.raises(ManifestError, match="missing.pgm"):
        load_manifest(_write_manifest(tmp_path, ["img/missing.pgm,0"]))


def test_synthetic_counts_and_boxes():
    spec = SyntheticSpec(per_class=4, height=40, width=40, radius_min=3, radius_max=6, seed=2)
    ds = generate_synthetic(spec)
    assert len(ds) == 8
    assert ds.classes().tolist() == [0] * 4 + [1] * 4
    for ex in ds.examples:
        assert (ex.lesion_box is None) == (ex.class_index == 0)
        if ex.lesion_box is not None:
            assert ex.lesion_box.inside(40, 40)
        assert 0.0 <= ex.image.data.min() and ex.image.data.max() <= 1.0


def test_synthetic_deterministic(tmp_path):
    spec = SyntheticSpec(per_class=3, height=30, width=30, radius_min=3, radius_max=5, seed=9)
    save_dataset(generate_synthetic(spec), tmp_path / "a")
    save_dataset(generate_synthetic(spec), tmp_path / "b")
    for f in sorted((tmp_path / "a").rglob("*")):
        if f.is_file():
            assert f.read_bytes() == (tmp_path / "b" / f.relative_to(tmp_path / "a")).read_bytes()


def test_synthetic_lesion_contrast_default_spec():
    # measured on the default generator settings
    spec = SyntheticSpec(per_class=100, seed=5)
    ds = generate_synthetic(spec)
    for ex in ds.examples[100:]:
        assert lesion_contrast(ex.image, ex.lesion_box) >= spec.contrast / 2


def test_synthetic_spec_validation():
    with pytest.raises(UsageError):
        generate_synthetic(SyntheticSpec(height=20, width=20, radius_min=5, radius_max=10))
    with pytest.raises(UsageError):
        generate_synthetic(SyntheticSpec(contrast=0.9, background=0.2))


def test_save_dataset_round_trip(tmp_path, small_synthetic):
    manifest = save_dataset(small_synthetic, tmp_path)
    ds = load_manifest(manifest)
    boxes = load_lesion_boxes(tmp_path / "lesions.csv")
    assert len(ds) == len(small_synthetic)
    assert np.abs(ds.images() - small_synthetic.images()).max() <= 1 / 510 + 1e-15
    assert boxes == {ex.id: ex.lesion_box for ex in small_synthetic.examples if ex.lesion_box}
