"""Image distribution shifts: text/background disentanglement, natural
background compositing, and displacement-field distortion.

Images are numpy uint8 arrays of shape (H, W, 3).  Displacement fields use
the source-lookup convention: output(p) = input(p + (dx, dy)(p)), sampled
bilinearly with replicated borders.
"""

from __future__ import annotations

import logging
import math
import random
import struct
from dataclasses import dataclass

import numpy as np
from PIL import Image

from .errors import ConfigError, ValidationError
from .model import BoundingBox, round_half_up

log = logging.getLogger("docshift.imageshift")

LUMA_WEIGHTS = (0.299, 0.587, 0.114)
FIELD_MAGIC = b"DFLD"


@dataclass(frozen=True)
class TextMask:
    width: int
    height: int
    bits: np.ndarray  # bool, (H, W)

    def __post_init__(self):
        if self.bits.shape != (self.height, self.width):
            raise ValidationError("mask bits do not match stated dimensions")


@dataclass(frozen=True)
class DisplacementField:
    width: int
    height: int
    dx: np.ndarray  # float32, (H, W)
    dy: np.ndarray

    def __post_init__(self):
        shape = (self.height, self.width)
        if self.dx.shape != shape or self.dy.shape != shape:
            raise ValidationError("field components do not match stated dimensions")
        if not (np.isfinite(self.dx).all() and np.isfinite(self.dy).all()):
            raise ValidationError("field offsets must be finite")

    @classmethod
    def zero(cls, width: int, height: int) -> "DisplacementField":
        z = np.zeros((height, width), dtype=np.float32)
        return cls(width=width, height=height, dx=z, dy=z.copy())

    def save(self, path) -> None:
        with open(path, "wb") as fh:
            fh.write(FIELD_MAGIC)
            fh.write(struct.pack("<II", self.width, self.height))
            fh.write(self.dx.astype("<f4").tobytes())
            fh.write(self.dy.astype("<f4").tobytes())

    @classmethod
    def load(cls, path) -> "DisplacementField":
        with open(path, "rb") as fh:
            magic = fh.read(4)
            if magic != FIELD_MAGIC:
                raise ValidationError(f"{path}: not a displacement-field file")
            width, height = struct.unpack("<II", fh.read(8))
            n = width * height
            dx = np.frombuffer(fh.read(4 * n), dtype="<f4").reshape(height, width)
            dy = np.frombuffer(fh.read(4 * n), dtype="<f4").reshape(height, width)
            if dx.size != n or dy.size != n:
                raise ValidationError(f"{path}: truncated field data")
        return cls(width=width, height=height, dx=dx.copy(), dy=dy.copy())


def load_image(path) -> np.ndarray:
    with Image.open(path) as img:
        return np.asarray(img.convert("RGB"))


def save_image(image: np.ndarray, path) -> None:
    Image.fromarray(image).save(path)


def encode_png(image: np.ndarray) -> bytes:
    import io

    buf = io.BytesIO()
    Image.fromarray(image).save(buf, format="PNG")
    return buf.getvalue()


def to_grayscale(image: np.ndarray) -> np.ndarray:
    """Luma conversion with the fixed (0.299, 0.587, 0.114) weights."""
    r, g, b = LUMA_WEIGHTS
    gray = image[..., 0] * r + image[..., 1] * g + image[..., 2] * b
    return np.clip(gray, 0, 255).astype(np.uint8)


def otsu_threshold(values: np.ndarray) -> int:
    """Threshold maximizing between-class variance on a uint8 sample."""
    hist = np.bincount(values.ravel(), minlength=256).astype(np.float64)
    total = hist.sum()
    weight = np.cumsum(hist)
    mean = np.cumsum(hist * np.arange(256))
    denom = weight * (total - weight)
    with np.errstate(divide="ignore", invalid="ignore"):
        between = np.where(denom > 0, (mean[-1] * weight - total * mean) ** 2 / denom, 0.0)
    return int(np.argmax(between))


def extract_text_mask(image: np.ndarray, boxes, method: str = "otsu") -> TextMask:
    """Classify pixels inside each word box as text or background.

    Per-box Otsu thresholding on grayscale intensity; text is the darker
    side unless the dark fraction exceeds 0.5, in which case polarity flips.
    Pixels outside all boxes are background.
    """
    if method != "otsu":
        raise ConfigError(f"unknown mask method {method!r}")
    height, width = image.shape[:2]
    gray = to_grayscale(image)
    bits = np.zeros((height, width), dtype=bool)
    for box in boxes:
        if box.x1 >= width or box.x2 <= 0 or box.y1 >= height or box.y2 <= 0:
            raise ValidationError(f"box {box.as_list()} lies fully outside the image")
        clamped = box.clamp(width, height)
        if clamped.area == 0:
            log.warning("skipping zero-area box %s", box.as_list())
            continue
        region = gray[clamped.y1:clamped.y2, clamped.x1:clamped.x2]
        if region.min() == region.max():
            continue
        thr = otsu_threshold(region)
        dark = region <= thr
        text = dark if dark.mean() <= 0.5 else ~dark
        bits[clamped.y1:clamped.y2, clamped.x1:clamped.x2] |= text
    return TextMask(width=width, height=height, bits=bits)


def replace_background(image: np.ndarray, mask: TextMask, natural: np.ndarray) -> np.ndarray:
    """Keep text pixels, take everything else from the resized natural image."""
    height, width = image.shape[:2]
    if (mask.height, mask.width) != (height, width):
        raise ValidationError("mask dimensions do not match the document image")
    resized = np.asarray(
        Image.fromarray(natural).resize((width, height), Image.BILINEAR)
    )
    return np.where(mask.bits[..., None], image, resized)


def _homography(src_pts, dst_pts) -> np.ndarray:
    """3x3 projective map taking each src point to its dst point."""
    rows, rhs = [], []
    for (x, y), (u, v) in zip(src_pts, dst_pts):
        rows.append([x, y, 1, 0, 0, 0, -u * x, -u * y])
        rhs.append(u)
        rows.append([0, 0, 0, x, y, 1, -v * x, -v * y])
        rhs.append(v)
    h = np.linalg.solve(np.asarray(rows, dtype=np.float64), np.asarray(rhs, dtype=np.float64))
    return np.append(h, 1.0).reshape(3, 3)


def synthesize_displacement_field(
    width: int,
    height: int,
    amplitude: float,
    wavelength: float,
    perspective_strength: float = 0.0,
    seed: int = 0,
) -> DisplacementField:
    """Seeded sinusoidal warp plus a mild random projective component.

    The projective part jitters each page corner by at most
    perspective_strength pixels.
    """
    if wavelength <= 0:
        raise ConfigError(f"wavelength must be positive, got {wavelength}")
    if amplitude < 0:
        raise ConfigError(f"amplitude must be non-negative, got {amplitude}")
    if perspective_strength < 0:
        raise ConfigError("perspective_strength must be non-negative")
    ys, xs = np.mgrid[0:height, 0:width].astype(np.float64)
    dx = amplitude * np.sin(2.0 * math.pi * ys / wavelength)
    dy = amplitude * np.sin(2.0 * math.pi * xs / wavelength)
    if perspective_strength > 0:
        rng = random.Random(seed)
        corners = [(0.0, 0.0), (width - 1.0, 0.0), (width - 1.0, height - 1.0), (0.0, height - 1.0)]
        jittered = [
            (
                x + rng.uniform(-perspective_strength, perspective_strength),
                y + rng.uniform(-perspective_strength, perspective_strength),
            )
            for x, y in corners
        ]
        H = _homography(corners, jittered)
        denom = H[2, 0] * xs + H[2, 1] * ys + H[2, 2]
        sx = (H[0, 0] * xs + H[0, 1] * ys + H[0, 2]) / denom
        sy = (H[1, 0] * xs + H[1, 1] * ys + H[1, 2]) / denom
        dx += sx - xs
        dy += sy - ys
    return DisplacementField(
        width=width, height=height,
        dx=dx.astype(np.float32), dy=dy.astype(np.float32),
    )


def _bilinear_sample(image: np.ndarray, sx: np.ndarray, sy: np.ndarray) -> np.ndarray:
    height, width = image.shape[:2]
    sx = np.clip(sx, 0.0, width - 1.0)
    sy = np.clip(sy, 0.0, height - 1.0)
    x0 = np.floor(sx).astype(np.int64)
    y0 = np.floor(sy).astype(np.int64)
    x1 = np.minimum(x0 + 1, width - 1)
    y1 = np.minimum(y0 + 1, height - 1)
    fx = (sx - x0)[..., None]
    fy = (sy - y0)[..., None]
    img = image.astype(np.float64)
    top = img[y0, x0] * (1 - fx) + img[y0, x1] * fx
    bottom = img[y1, x0] * (1 - fx) + img[y1, x1] * fx
    return np.clip(np.rint(top * (1 - fy) + bottom * fy), 0, 255).astype(np.uint8)


def warp(
    image: np.ndarray,
    boxes,
    field: DisplacementField,
) -> tuple[np.ndarray, list[BoundingBox]]:
    """Apply a displacement field to pixels and remap annotation boxes.

    Pixels: output(p) = input(p + field(p)), bilinear, borders replicated.
    Boxes: each corner c maps (first-order inverse of the lookup) to
    c - field(c); the remapped box is the axis-aligned hull of the four
    mapped corners, clamped to the page.
    """
    height, width = image.shape[:2]
    if (field.height, field.width) != (height, width):
        raise ValidationError("field dimensions do not match the image")
    ys, xs = np.mgrid[0:height, 0:width].astype(np.float64)
    out = _bilinear_sample(image, xs + field.dx, ys + field.dy)

    def sample_field(x: float, y: float) -> tuple[float, float]:
        xi = min(max(int(x), 0), width - 1)
        yi = min(max(int(y), 0), height - 1)
        return float(field.dx[yi, xi]), float(field.dy[yi, xi])

    remapped = []
    for box in boxes:
        corners = [(box.x1, box.y1), (box.x2, box.y1), (box.x1, box.y2), (box.x2, box.y2)]
        mapped = []
        for cx, cy in corners:
            ddx, ddy = sample_field(cx, cy)
            mapped.append((cx - ddx, cy - ddy))
        mx = [p[0] for p in mapped]
        my = [p[1] for p in mapped]
        remapped.append(
            BoundingBox(
                round_half_up(min(mx)), round_half_up(min(my)),
                round_half_up(max(mx)), round_half_up(max(my)),
            ).clamp(width, height)
        )
    return out, remapped
