"""Reading and writing RGB and grayscale images (PNG, binary PPM/PGM)."""
from __future__ import annotations

import io
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image as PILImage

from .errors import FormatError, ShapeError

PNG_SIGNATURE = b"\x89PNG\r\n\x1a\n"


@dataclass(frozen=True, eq=False)
class Image:
    """8-bit RGB image; ``pixels`` has shape ``(height, width, 3)``."""

    pixels: np.ndarray

    def __post_init__(self):
        p = np.ascontiguousarray(self.pixels, dtype=np.uint8)
        if p.ndim != 3 or p.shape[2] != 3 or p.shape[0] < 1 or p.shape[1] < 1:
            raise ShapeError(f"image pixels must have shape (H, W, 3), got {p.shape}")
        object.__setattr__(self, "pixels", p)

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    def __eq__(self, other):
        return isinstance(other, Image) and np.array_equal(self.pixels, other.pixels)


def _next_token(buf: bytes, pos: int) -> tuple[bytes, int]:
    n = len(buf)
    while pos < n:
        c = buf[pos:pos + 1]
        if c == b"#":
            while pos < n and buf[pos:pos + 1] not in (b"\n", b"\r"):
                pos += 1
        elif c.isspace():
            pos += 1
        else:
            break
    start = pos
    while pos < n and not buf[pos:pos + 1].isspace() and buf[pos:pos + 1] != b"#":
        pos += 1
    if start == pos:
        raise FormatError("truncated PNM header")
    return buf[start:pos], pos


def _decode_pnm(buf: bytes, magic: bytes, channels: int) -> np.ndarray:
    tok, pos = _next_token(buf, 0)
    if tok != magic:
        raise FormatError(f"expected {magic.decode()} header, got {tok[:8]!r}")
    fields = []
    for _ in range(3):
        tok, pos = _next_token(buf, pos)
        if not tok.isdigit():
            raise FormatError(f"bad PNM header field {tok!r}")
        fields.append(int(tok))
    width, height, maxval = fields
    if maxval != 255:
        raise FormatError(f"only maxval 255 is supported, got {maxval}")
    if width < 1 or height < 1:
        raise FormatError(f"bad PNM dimensions {width}x{height}")
    pos += 1  # single whitespace byte before the raster
    need = width * height * channels
    data = buf[pos:pos + need]
    if len(data) != need:
        raise FormatError(f"truncated PNM raster: need {need} bytes, have {len(data)}")
    shape = (height, width, channels) if channels > 1 else (height, width)
    return np.frombuffer(data, dtype=np.uint8).reshape(shape).copy()


def decode_image(buf: bytes) -> Image:
    if buf[:2] == b"P6":
        return Image(_decode_pnm(buf, b"P6", 3))
    if buf[:8] == PNG_SIGNATURE:
        try:
            with PILImage.open(io.BytesIO(buf)) as im:
                im.load()
                rgb = im.convert("RGB")
        except Exception as e:
            raise FormatError(f"cannot decode PNG: {e}") from None
        return Image(np.asarray(rgb, dtype=np.uint8))
    raise FormatError("unrecognised image format (expected PNG or binary PPM)")


def read_image(path) -> Image:
    return decode_image(Path(path).read_bytes())


def encode_ppm(image: Image) -> bytes:
    return f"P6\n{image.width} {image.height}\n255\n".encode("ascii") + image.pixels.tobytes()


def encode_pgm(gray: np.ndarray) -> bytes:
    gray = np.ascontiguousarray(gray, dtype=np.uint8)
    h, w = gray.shape
    return f"P5\n{w} {h}\n255\n".encode("ascii") + gray.tobytes()


def decode_pgm(buf: bytes) -> np.ndarray:
    return _decode_pnm(buf, b"P5", 1)


def _encode_png(arr: np.ndarray) -> bytes:
    # uint8 (H, W) -> "L", (H, W, 3) -> "RGB"
    out = io.BytesIO()
    PILImage.fromarray(arr).save(out, format="PNG")
    return out.getvalue()


def write_image(path, image: Image) -> None:
    """Write an RGB image; the extension (``.png`` or ``.ppm``) picks the format."""
    path = Path(path)
    ext = path.suffix.lower()
    if ext == ".png":
        path.write_bytes(_encode_png(image.pixels))
    elif ext == ".ppm":
        path.write_bytes(encode_ppm(image))
    else:
        raise FormatError(f"unsupported RGB output extension {ext!r} (use .png or .ppm)")


def write_gray(path, gray: np.ndarray) -> None:
    """Write an 8-bit grayscale image as ``.png`` or ``.pgm``."""
    path = Path(path)
    gray = np.ascontiguousarray(gray, dtype=np.uint8)
    ext = path.suffix.lower()
    if ext == ".png":
        path.write_bytes(_encode_png(gray))
    elif ext == ".pgm":
        path.write_bytes(encode_pgm(gray))
    else:
        raise FormatError(f"unsupported grayscale output extension {ext!r} (use .png or .pgm)")


def read_gray(path) -> np.ndarray:
    buf = Path(path).read_bytes()
    if buf[:2] == b"P5":
        return decode_pgm(buf)
    with PILImage.open(io.BytesIO(buf)) as im:
        return np.asarray(im.convert("L"), dtype=np.uint8)
