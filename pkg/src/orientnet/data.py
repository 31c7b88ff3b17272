"""Preprocessing, rotation augmentation, dataset manifests, synthetic photos.

Orientation labels are class indices 0..3 meaning 0, 90, 180 and 270 degrees
of clockwise rotation applied to an upright photo.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .errors import ShapeError, ValidationError
from .imageio import Image, read_image, write_image

DEGREES = (0, 90, 180, 270)
SPLITS = ("train", "val", "test")
TRAIN_FRACTION = 0.64
VAL_FRACTION = 0.16


def label_to_degrees(label: int) -> int:
    return DEGREES[label]


def degrees_to_label(degrees: int) -> int:
    if degrees % 90:
        raise ValidationError(f"orientation must be a multiple of 90 degrees, got {degrees}")
    return (degrees // 90) % 4


def rotate_label(label: int, quarter_turns: int) -> int:
    return (label + quarter_turns) % 4


def rotate90(image: Image, quarter_turns: int) -> Image:
    """Rotate clockwise by ``quarter_turns`` * 90 degrees (an exact pixel permutation)."""
    if quarter_turns not in (0, 1, 2, 3):
        raise ValidationError(f"quarter_turns must be 0..3, got {quarter_turns}")
    return Image(np.rot90(image.pixels, k=-quarter_turns, axes=(0, 1)))


def _round_half_up(x):
    return np.floor(x + 0.5)


def _sample_axis(n_in: int, n_out: int):
    # half-pixel-centre mapping; the identity scale maps every pixel to itself
    src = (np.arange(n_out, dtype=np.float64) + 0.5) * (n_in / n_out) - 0.5
    src = np.clip(src, 0.0, n_in - 1)
    i0 = np.floor(src).astype(np.int64)
    i1 = np.minimum(i0 + 1, n_in - 1)
    return i0, i1, src - i0


def resize_bilinear(image: Image, width: int, height: int) -> Image:
    if width < 1 or height < 1:
        raise ShapeError(f"target size must be positive, got {width}x{height}")
    p = image.pixels.astype(np.float64)
    y0, y1, ty = _sample_axis(image.height, height)
    x0, x1, tx = _sample_axis(image.width, width)
    ty = ty[:, None, None]
    tx = tx[None, :, None]
    top = p[y0][:, x0] * (1 - tx) + p[y0][:, x1] * tx
    bot = p[y1][:, x0] * (1 - tx) + p[y1][:, x1] * tx
    out = top * (1 - ty) + bot * ty
    return Image(np.clip(_round_half_up(out), 0, 255).astype(np.uint8))


def fit_and_pad(image: Image, side: int = 224) -> Image:
    """Scale to fit inside ``side`` x ``side`` and centre on a black canvas.

    When the leftover padding is odd the extra row/column goes bottom/right.
    """
    if side < 1:
        raise ValidationError(f"side must be positive, got {side}")
    w, h = image.width, image.height
    scale = side / max(w, h)
    new_w = side if w >= h else max(1, int(_round_half_up(w * scale)))
    new_h = side if h >= w else max(1, int(_round_half_up(h * scale)))
    content = image if (new_w, new_h) == (w, h) else resize_bilinear(image, new_w, new_h)
    canvas = np.zeros((side, side, 3), dtype=np.uint8)
    top = (side - new_h) // 2
    left = (side - new_w) // 2
    canvas[top:top + new_h, left:left + new_w] = content.pixels
    return Image(canvas)


def to_input_tensor(image: Image, side: int | None = None) -> np.ndarray:
    """Channels-first float32 tensor with pixel ``v`` mapped to ``v/255 - 0.5``."""
    if image.width != image.height or (side is not None and image.width != side):
        want = f"{side}x{side}" if side is not None else "square"
        raise ShapeError(f"expected a {want} image, got {image.width}x{image.height}")
    t = image.pixels.astype(np.float32).transpose(2, 0, 1) / np.float32(255.0) - np.float32(0.5)
    return np.ascontiguousarray(t, dtype=np.float32)


def from_input_tensor(t: np.ndarray) -> Image:
    """Inverse of :func:`to_input_tensor`, clamped and rounded to 8 bits."""
    v = (np.asarray(t, dtype=np.float64) + 0.5) * 255.0
    return Image(np.clip(_round_half_up(v), 0, 255).astype(np.uint8).transpose(1, 2, 0))


def preprocess(image: Image, side: int, quarter_turns: int = 0) -> np.ndarray:
    return to_input_tensor(fit_and_pad(rotate90(image, quarter_turns), side), side)


@dataclass(frozen=True)
class Record:
    path: str
    label: int
    split: str
    rotation: int = 0  # quarter turns applied to the stored file when loading

    def __post_init__(self):
        if self.label not in (0, 1, 2, 3):
            raise ValidationError(f"label must be 0..3, got {self.label}")
        if self.split not in SPLITS:
            raise ValidationError(f"split must be one of {SPLITS}, got {self.split!r}")
        if self.rotation not in (0, 1, 2, 3):
            raise ValidationError(f"rotation must be 0..3, got {self.rotation}")


@dataclass
class DatasetManifest:
    records: list[Record]
    seed: int | None = None
    root: Path | None = field(default=None, compare=False)

    def __post_init__(self):
        keys = [(r.path, r.rotation) for r in self.records]
        if len(set(keys)) != len(keys):
            raise ValidationError("manifest contains duplicate (path, rotation) entries")

    def select(self, split: str) -> list[Record]:
        return [r for r in self.records if r.split == split]

    def resolve(self, record: Record) -> Path:
        p = Path(record.path)
        return p if p.is_absolute() or self.root is None else self.root / p

    def counts(self) -> dict:
        return {s: len(self.select(s)) for s in SPLITS}

    def to_dict(self) -> dict:
        recs = []
        for r in self.records:
            d = {"path": r.path, "label": r.label, "split": r.split}
            if r.rotation:
                d["rotation"] = r.rotation
            recs.append(d)
        return {"seed": self.seed, "records": recs}

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=1) + "\n")

    @classmethod
    def from_dict(cls, d, root=None) -> "DatasetManifest":
        if isinstance(d, list):
            d = {"seed": None, "records": d}
        try:
            recs = [Record(r["path"], int(r["label"]), r["split"], int(r.get("rotation", 0)))
                    for r in d["records"]]
        except (KeyError, TypeError) as e:
            raise ValidationError(f"malformed manifest record: {e}") from None
        return cls(recs, d.get("seed"), root)

    @classmethod
    def load(cls, path) -> "DatasetManifest":
        path = Path(path)
        try:
            d = json.loads(path.read_text())
        except json.JSONDecodeError as e:
            raise ValidationError(f"manifest {path} is not valid JSON: {e}") from None
        return cls.from_dict(d, root=path.parent)


def split_dataset(paths, seed: int) -> DatasetManifest:
    """Seeded shuffle, then the first 64% train, the next 16% val, the rest test."""
    paths = [str(p) for p in paths]
    n = len(paths)
    if n < 5:
        raise ValidationError(f"need at least 5 images to split, got {n}")
    if len(set(paths)) != n:
        raise ValidationError("image paths must be unique")
    order = np.random.default_rng(seed).permutation(n)
    n_train = int(np.floor(TRAIN_FRACTION * n))
    n_val = int(np.floor(VAL_FRACTION * n))
    records = []
    for rank, i in enumerate(order):
        split = "train" if rank < n_train else "val" if rank < n_train + n_val else "test"
        records.append(Record(paths[i], 0, split))
    return DatasetManifest(records, seed)


def augment_with_rotations(manifest: DatasetManifest) -> DatasetManifest:
    """Expand every record into its four quarter-turn rotations, keeping the split."""
    out = []
    for r in manifest.records:
        for k in range(4):
            out.append(replace(r, label=rotate_label(r.label, k), rotation=(r.rotation + k) % 4))
    return DatasetManifest(out, manifest.seed, manifest.root)


def load_split(manifest: DatasetManifest, split: str, side: int):
    """Preprocess every record of ``split``; returns ``(images (N,3,S,S), labels)``."""
    recs = manifest.select(split)
    if not recs:
        raise ValidationError(f"manifest has no {split!r} records")
    decoded: dict = {}
    xs, ys = [], []
    for r in recs:
        path = manifest.resolve(r)
        if path not in decoded:
            decoded[path] = read_image(path)
        xs.append(preprocess(decoded[path], side, r.rotation))
        ys.append(r.label)
    return np.stack(xs), np.asarray(ys, dtype=np.int64)


def luminance(pixels: np.ndarray) -> np.ndarray:
    p = pixels.astype(np.float64)
    return 0.299 * p[..., 0] + 0.587 * p[..., 1] + 0.114 * p[..., 2]


def synthetic_photo(side: int, rng: np.random.Generator) -> Image:
    """An upright scene: bright sky gradient, dark ground band, 1-3 busy distractors."""
    rows = np.arange(side, dtype=np.float64)[:, None, None] / max(1, side - 1)
    sky_top = rng.uniform([150, 180, 220], [210, 230, 255])
    sky_bottom = sky_top * rng.uniform(0.7, 0.85)
    img = np.broadcast_to(sky_top * (1 - rows) + sky_bottom * rows, (side, side, 3)).copy()
    horizon = side - int(rng.integers(int(0.25 * side), int(0.4 * side) + 1))
    ground = rng.uniform([20, 30, 10], [90, 80, 50])
    ridge = horizon + np.round(rng.uniform(-0.05, 0.05) * side * np.sin(
        np.linspace(0, rng.uniform(1, 4) * np.pi, side) + rng.uniform(0, 2 * np.pi))).astype(int)
    for c in range(side):
        img[max(0, ridge[c]):, c] = ground
    base = img.copy()
    for _ in range(50):
        img = base.copy()
        for _ in range(int(rng.integers(1, 4))):
            size = int(rng.integers(max(2, side // 10), max(3, side // 5) + 1))
            y, x = (int(v) for v in rng.integers(0, side - size + 1, size=2))
            c1, c2 = rng.uniform(0, 255, size=(2, 3))
            yy, xx = np.mgrid[0:size, 0:size]
            checker = ((yy + xx) % 2)[..., None]
            img[y:y + size, x:x + size] = c1 * checker + c2 * (1 - checker)
        lum = luminance(img)
        if lum[: side // 3].mean() > lum[side - side // 3:].mean():
            break
    else:
        img = base
    img += rng.normal(0.0, 4.0, size=img.shape)
    return Image(np.clip(np.round(img), 0, 255).astype(np.uint8))


def generate_synthetic_dataset(n: int, side: int, seed: int, out_dir) -> DatasetManifest:
    """Write ``n`` upright synthetic photos under ``out_dir/images`` and split them.

    Image ``i`` depends only on ``(seed, i)``. Paths in the returned manifest
    are relative to ``out_dir``.
    """
    if n < 20:
        raise ValidationError(f"synthetic dataset needs n >= 20, got {n}")
    if side < 8:
        raise ValidationError(f"side must be at least 8, got {side}")
    out_dir = Path(out_dir)
    img_dir = out_dir / "images"
    img_dir.mkdir(parents=True, exist_ok=True)
    paths = []
    for i in range(n):
        rng = np.random.default_rng([seed, i])
        rel = f"images/photo_{i:05d}.png"
        write_image(out_dir / rel, synthetic_photo(side, rng))
        paths.append(rel)
    manifest = split_dataset(paths, seed)
    manifest.root = out_dir
    return manifest
