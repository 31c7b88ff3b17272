import json
from collections import Counter

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from PIL import Image as PILImage

from orientnet import data
from orientnet.errors import FormatError, ShapeError, ValidationError
from orientnet.imageio import Image, decode_image, read_gray, read_image, write_gray, write_image


def rand_image(rng, w, h):
    return Image(rng.integers(0, 256, (h, w, 3), dtype=np.uint8))


images = st.builds(
    lambda w, h, seed: rand_image(np.random.default_rng(seed), w, h),
    st.integers(1, 9), st.integers(1, 9), st.integers(0, 2**32 - 1),
)


# --- rotation -----------------------------------------------------------------

def test_rotate_zero_is_identity(rng):
    img = rand_image(rng, 5, 3)
    assert data.rotate90(img, 0) == img


def test_rotate_tall_pair_clockwise():
    a, b = [10, 20, 30], [40, 50, 60]
    img = Image(np.array([[a], [b]], np.uint8))  # 2 rows x 1 column: top A, bottom B
    out = data.rotate90(img, 1)
    assert (out.height, out.width) == (1, 2)
    assert out.pixels[0, 0].tolist() == b and out.pixels[0, 1].tolist() == a


def test_rotate_coordinate_rule(rng):
    img = rand_image(rng, 4, 3)
    out = data.rotate90(img, 1)
    h = img.height
    for r in range(img.height):
        for c in range(img.width):
            assert np.array_equal(out.pixels[c, h - 1 - r], img.pixels[r, c])


@settings(max_examples=50, deadline=None)
@given(images, st.integers(0, 3), st.integers(0, 3))
def test_rotation_group(img, a, b):
    composed = data.rotate90(data.rotate90(img, a), b)
    assert composed == data.rotate90(img, (a + b) % 4)
    one = img
    for _ in range(4):
        one = data.rotate90(one, 1)
    assert one == img
    assert sorted(map(tuple, composed.pixels.reshape(-1, 3))) == sorted(map(tuple, img.pixels.reshape(-1, 3)))


def test_rotate_invalid():
    with pytest.raises(ValidationError):
        data.rotate90(Image(np.zeros((2, 2, 3))), 4)


def test_label_arithmetic():
    assert data.rotate_label(1, 1) == 2
    assert data.rotate_label(3, 2) == 1
    assert data.degrees_to_label(270) == 3 and data.degrees_to_label(450) == 1
    assert data.label_to_degrees(2) == 180
    with pytest.raises(ValidationError):
        data.degrees_to_label(45)


# --- fit and pad --------------------------------------------------------------

def white(w, h):
    return Image(np.full((h, w, 3), 255, np.uint8))


def band_rows(img):
    lit = img.pixels.any(axis=(1, 2))
    top = int(np.argmax(lit))
    bottom = int(np.argmax(lit[::-1]))
    return top, bottom, int(lit.sum())


def band_cols(img):
    lit = img.pixels.any(axis=(0, 2))
    return int(np.argmax(lit)), int(np.argmax(lit[::-1])), int(lit.sum())


def test_fit_wide_image():
    out = data.fit_and_pad(white(448, 224), 224)
    assert (out.width, out.height) == (224, 224)
    assert band_rows(out) == (56, 56, 112)
    assert band_cols(out) == (0, 0, 224)


def test_fit_odd_padding_goes_bottom():
    out = data.fit_and_pad(white(100, 30), 224)
    assert band_rows(out) == (78, 79, 67)
    assert band_cols(out) == (0, 0, 224)


def test_fit_tall_image_odd_padding_goes_right():
    out = data.fit_and_pad(white(30, 100), 224)
    assert band_cols(out) == (78, 79, 67)


def test_fit_identity_scale(rng):
    img = rand_image(rng, 224, 224)
    assert data.fit_and_pad(img, 224) == img
    assert data.resize_bilinear(img, 224, 224) == img


def test_upscale_uses_bilinear():
    img = Image(np.array([[[0, 0, 0], [200, 200, 200]]], np.uint8))  # 1x2
    out = data.resize_bilinear(img, 4, 1)
    # sample positions -0.25 (clamped), 0.25, 0.75, 1.25 (clamped)
    assert out.pixels[0, :, 0].tolist() == [0, 50, 150, 200]


@settings(max_examples=40, deadline=None)
@given(images, st.integers(4, 40))
def test_fit_always_square_with_black_padding(img, side):
    out = data.fit_and_pad(img, side)
    assert (out.width, out.height) == (side, side)
    w, h = img.width, img.height
    new_w = side if w >= h else max(1, int(np.floor(w * side / h + 0.5)))
    new_h = side if h >= w else max(1, int(np.floor(h * side / w + 0.5)))
    top, left = (side - new_h) // 2, (side - new_w) // 2
    mask = np.ones((side, side), bool)
    mask[top:top + new_h, left:left + new_w] = False
    assert not out.pixels[mask].any()
    # the extra pixel of odd padding lands bottom/right
    assert side - new_h - top >= top and side - new_w - left >= left


# --- tensor conversion --------------------------------------------------------

def test_tensor_black_and_white():
    assert np.all(data.to_input_tensor(Image(np.zeros((4, 4, 3), np.uint8))) == -0.5)
    t = data.to_input_tensor(white(4, 4))
    assert t.shape == (3, 4, 4) and t.dtype == np.float32 and np.all(t == 0.5)


def test_tensor_round_trip(rng):
    img = rand_image(rng, 16, 16)
    t = data.to_input_tensor(img)
    assert t.min() >= -0.5 and t.max() <= 0.5
    back = data.from_input_tensor(t)
    assert np.abs(back.pixels.astype(int) - img.pixels.astype(int)).max() <= 1


def test_tensor_channel_order():
    img = Image(np.array([[[255, 0, 0]]], np.uint8))
    t = data.to_input_tensor(img)
    assert t[:, 0, 0].tolist() == [0.5, -0.5, -0.5]


def test_tensor_wrong_dims():
    with pytest.raises(ShapeError):
        data.to_input_tensor(white(4, 3))
    with pytest.raises(ShapeError):
        data.to_input_tensor(white(4, 4), side=8)


# --- manifests ----------------------------------------------------------------

def test_split_100():
    m = data.split_dataset([f"p{i}.png" for i in range(100)], seed=3)
    assert m.counts() == {"train": 64, "val": 16, "test": 20}


def test_split_25():
    m = data.split_dataset([f"p{i}.png" for i in range(25)], seed=3)
    assert m.counts() == {"train": 16, "val": 4, "test": 5}


def test_split_seeded():
    paths = [f"p{i}.png" for i in range(50)]
    a = data.split_dataset(paths, 1)
    assert a == data.split_dataset(paths, 1)
    differing = sum(data.split_dataset(paths, s) != a for s in range(2, 12))
    assert differing == 10


def test_split_errors():
    with pytest.raises(ValidationError):
        data.split_dataset(["a", "b", "c", "d"], 0)
    with pytest.raises(ValidationError):
        data.split_dataset(["a", "a", "b", "c", "d"], 0)


def test_augment_ten_records():
    m = data.augment_with_rotations(data.split_dataset([f"p{i}" for i in range(10)], 0))
    assert len(m.records) == 40
    assert Counter(r.label for r in m.records) == {0: 10, 1: 10, 2: 10, 3: 10}
    by_path = {}
    for r in m.records:
        by_path.setdefault(r.path, set()).add(r.split)
    assert all(len(s) == 1 for s in by_path.values())


def test_augment_advances_explicit_label():
    m = data.DatasetManifest([data.Record("a.png", 1, "train")])
    labels = {r.rotation: r.label for r in data.augment_with_rotations(m).records}
    assert labels == {0: 1, 1: 2, 2: 3, 3: 0}


def test_augment_duplicate_keys():
    m = data.DatasetManifest([data.Record("a.png", 0, "train"), data.Record("a.png", 1, "train", 1)])
    with pytest.raises(ValidationError):
        data.augment_with_rotations(m)


@settings(max_examples=25, deadline=None)
@given(st.integers(5, 60), st.integers(0, 1000), st.sampled_from(data.SPLITS))
def test_augment_commutes_with_split(n, seed, split):
    m = data.split_dataset([f"p{i}" for i in range(n)], seed)
    expanded_then_filtered = data.augment_with_rotations(m).select(split)
    filtered_then_expanded = data.augment_with_rotations(data.DatasetManifest(m.select(split))).records
    assert expanded_then_filtered == filtered_then_expanded


def test_manifest_json_round_trip(tmp_path):
    m = data.augment_with_rotations(data.split_dataset([f"img/p{i}.png" for i in range(10)], 9))
    m.save(tmp_path / "manifest.json")
    raw = json.loads((tmp_path / "manifest.json").read_text())
    assert raw["seed"] == 9
    assert set(raw["records"][0]) <= {"path", "label", "split", "rotation"}
    loaded = data.DatasetManifest.load(tmp_path / "manifest.json")
    assert loaded == m and loaded.root == tmp_path


def test_manifest_accepts_bare_array(tmp_path):
    (tmp_path / "m.json").write_text(json.dumps([{"path": "a.png", "label": 2, "split": "val"}]))
    m = data.DatasetManifest.load(tmp_path / "m.json")
    assert m.records == [data.Record("a.png", 2, "val")] and m.seed is None


def test_record_validation():
    with pytest.raises(ValidationError):
        data.Record("a", 4, "train")
    with pytest.raises(ValidationError):
        data.Record("a", 0, "dev")


# --- image files --------------------------------------------------------------

def test_ppm_round_trip(tmp_path, rng):
    img = rand_image(rng, 7, 5)
    write_image(tmp_path / "a.ppm", img)
    assert read_image(tmp_path / "a.ppm") == img
    assert (tmp_path / "a.ppm").read_bytes().startswith(b"P6\n7 5\n255\n")


def test_ppm_header_comments():
    buf = b"P6 # comment\n2 1\n# another\n255\n" + bytes(range(6))
    assert decode_image(buf).pixels.reshape(-1).tolist() == list(range(6))


def test_ppm_errors():
    with pytest.raises(FormatError):
        decode_image(b"P6\n2 2\n65535\n" + bytes(24))
    with pytest.raises(FormatError):
        decode_image(b"P6\n2 2\n255\n" + bytes(5))
    with pytest.raises(FormatError):
        decode_image(b"GIF89a")


def test_png_rgba_drops_alpha(tmp_path, rng):
    rgba = rng.integers(0, 256, (4, 6, 4), dtype=np.uint8)
    PILImage.fromarray(rgba).save(tmp_path / "a.png")
    assert np.array_equal(read_image(tmp_path / "a.png").pixels, rgba[..., :3])


def test_png_round_trip(tmp_path, rng):
    img = rand_image(rng, 9, 4)
    write_image(tmp_path / "a.png", img)
    assert read_image(tmp_path / "a.png") == img


def test_gray_writers(tmp_path, rng):
    g = rng.integers(0, 256, (5, 3), dtype=np.uint8)
    for ext in (".png", ".pgm"):
        write_gray(tmp_path / f"g{ext}", g)
        assert np.array_equal(read_gray(tmp_path / f"g{ext}"), g)
    with pytest.raises(FormatError):
        write_gray(tmp_path / "g.jpg", g)


# --- synthetic photos ---------------------------------------------------------

def test_synthetic_deterministic(tmp_path):
    a = data.generate_synthetic_dataset(100, 32, 7, tmp_path / "a")
    b = data.generate_synthetic_dataset(100, 32, 7, tmp_path / "b")
    assert a == b
    for r in a.records:
        assert (tmp_path / "a" / r.path).read_bytes() == (tmp_path / "b" / r.path).read_bytes()
    assert a.counts() == {"train": 64, "val": 16, "test": 20}


def test_synthetic_orientation_cue(tmp_path):
    m = data.generate_synthetic_dataset(40, 32, 3, tmp_path)
    for r in m.records:
        img = read_image(m.resolve(r))
        lum = data.luminance(img.pixels)
        third = img.height // 3
        assert lum[:third].mean() > lum[-third:].mean()
        flipped = data.luminance(data.rotate90(img, 2).pixels)
        assert flipped[:third].mean() < flipped[-third:].mean()


def test_synthetic_minimum(tmp_path):
    with pytest.raises(ValidationError):
        data.generate_synthetic_dataset(10, 32, 0, tmp_path)


def test_load_split_applies_rotation(tmp_path):
    m = data.augment_with_rotations(data.generate_synthetic_dataset(20, 32, 1, tmp_path))
    x, y = data.load_split(m, "test", 32)
    recs = m.select("test")
    assert x.shape == (len(recs), 3, 32, 32) and y.tolist() == [r.label for r in recs]
    base = read_image(m.resolve(recs[1]))
    assert np.array_equal(x[1], data.to_input_tensor(data.rotate90(base, recs[1].rotation)))
