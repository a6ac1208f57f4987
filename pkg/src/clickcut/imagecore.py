"""Raster types, masks, IoU, connected components and image/mask file IO."""
from __future__ import annotations

import io
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from PIL import Image as PILImage
from scipy import ndimage as ndi

# 4-connectivity structuring element used everywhere components are extracted.
CROSS = np.array([[0, 1, 0], [1, 1, 1], [0, 1, 0]], dtype=bool)


class PixelPoint(NamedTuple):
    x: int
    y: int


@dataclass(frozen=True)
class Image:
    """Dense 8-bit RGB raster. ``pixels`` has shape (h, w, 3)."""

    pixels: np.ndarray

    def __post_init__(self):
        px = np.asarray(self.pixels, dtype=np.uint8)
        if px.ndim != 3 or px.shape[2] != 3:
            raise ValueError(f"expected (h, w, 3) RGB raster, got shape {px.shape}")
        if px.shape[0] < 1 or px.shape[1] < 1:
            raise ValueError("image must be at least 1x1")
        px.flags.writeable = False
        object.__setattr__(self, "pixels", px)

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def extent(self) -> tuple[int, int]:
        return (self.width, self.height)

    def contains(self, p: PixelPoint) -> bool:
        return 0 <= p.x < self.width and 0 <= p.y < self.height


@dataclass(frozen=True)
class BinaryMask:
    """Boolean raster. ``bits`` has shape (h, w)."""

    bits: np.ndarray

    def __post_init__(self):
        bits = np.asarray(self.bits, dtype=bool)
        if bits.ndim != 2:
            raise ValueError(f"expected (h, w) boolean raster, got shape {bits.shape}")
        bits.flags.writeable = False
        object.__setattr__(self, "bits", bits)

    @classmethod
    def empty(cls, width: int, height: int) -> "BinaryMask":
        return cls(np.zeros((height, width), dtype=bool))

    @classmethod
    def full(cls, width: int, height: int) -> "BinaryMask":
        return cls(np.ones((height, width), dtype=bool))

    @property
    def width(self) -> int:
        return self.bits.shape[1]

    @property
    def height(self) -> int:
        return self.bits.shape[0]

    @property
    def extent(self) -> tuple[int, int]:
        return (self.width, self.height)

    @property
    def area(self) -> int:
        return int(self.bits.sum())

    def __eq__(self, other) -> bool:
        if not isinstance(other, BinaryMask):
            return NotImplemented
        return self.bits.shape == other.bits.shape and bool(np.array_equal(self.bits, other.bits))

    def __hash__(self):
        return hash((self.bits.shape, self.bits.tobytes()))


@dataclass(frozen=True)
class Component:
    """One 4-connected region of a mask."""

    mask: BinaryMask
    area: int


def iou(a: BinaryMask, b: BinaryMask) -> float:
    """Intersection over union of two same-extent masks.

    Defined as 1.0 when both masks are empty (vacuous agreement).
    """
    if a.bits.shape != b.bits.shape:
        raise ValueError(f"mask extents differ: {a.extent} vs {b.extent}")
    inter = int(np.logical_and(a.bits, b.bits).sum())
    union = int(np.logical_or(a.bits, b.bits).sum())
    if union == 0:
        return 1.0
    return inter / union


def connected_components(m: BinaryMask) -> list[Component]:
    """4-connected components of a mask, sorted by area descending.

    Area ties keep raster-scan discovery order, so the result is deterministic.
    """
    lab, n = ndi.label(m.bits, structure=CROSS)
    comps = []
    for i in range(1, n + 1):
        bits = lab == i
        comps.append(Component(mask=BinaryMask(bits), area=int(bits.sum())))
    comps.sort(key=lambda c: -c.area)
    return comps


def interior_pole(m: BinaryMask) -> PixelPoint:
    """Mask pixel farthest from the mask complement (image border counts as
    complement), i.e. the argmax of the exact Euclidean distance transform.
    Ties break on the smallest (y, x).

    One-pixel-thin rasters are treated as 1-D: only axes with extent > 1 get
    a border, otherwise the border tie plane would swallow the symmetric
    middle-of-row answer.
    """
    if not m.bits.any():
        raise ValueError("interior_pole of an empty mask")
    pad_y = 1 if m.height > 1 else 0
    pad_x = 1 if m.width > 1 else 0
    padded = np.pad(m.bits, ((pad_y, pad_y), (pad_x, pad_x)), constant_values=False)
    dist = ndi.distance_transform_edt(padded)
    if pad_y:
        dist = dist[1:-1, :]
    if pad_x:
        dist = dist[:, 1:-1]
    flat = int(np.argmax(dist))
    y, x = divmod(flat, m.width)
    return PixelPoint(x=x, y=y)


def mask_bbox(m: BinaryMask) -> tuple[PixelPoint, PixelPoint]:
    """Inclusive bounding box (top-left, bottom-right) of the true pixels."""
    ys, xs = np.nonzero(m.bits)
    if len(ys) == 0:
        raise ValueError("bounding box of an empty mask")
    return (
        PixelPoint(x=int(xs.min()), y=int(ys.min())),
        PixelPoint(x=int(xs.max()), y=int(ys.max())),
    )


# ---------------------------------------------------------------------------
# file IO: images as PNG/JPEG, masks as 8-bit gray PNG (0 = bg, nonzero = fg)

def load_image(path) -> Image:
    with PILImage.open(path) as im:
        return Image(np.asarray(im.convert("RGB")))


def load_mask(path) -> BinaryMask:
    with PILImage.open(path) as im:
        arr = np.asarray(im.convert("L"))
    return BinaryMask(arr != 0)


def save_image(img: Image, path) -> None:
    PILImage.fromarray(img.pixels).save(path)


def save_mask(mask: BinaryMask, path) -> None:
    arr = np.where(mask.bits, 255, 0).astype(np.uint8)
    PILImage.fromarray(arr, mode="L").save(path, format="PNG")


def decode_image(data: bytes) -> Image:
    with PILImage.open(io.BytesIO(data)) as im:
        return Image(np.asarray(im.convert("RGB")))


def decode_mask(data: bytes) -> BinaryMask:
    with PILImage.open(io.BytesIO(data)) as im:
        arr = np.asarray(im.convert("L"))
    return BinaryMask(arr != 0)


def mask_png_bytes(mask: BinaryMask) -> bytes:
    arr = np.where(mask.bits, 255, 0).astype(np.uint8)
    buf = io.BytesIO()
    PILImage.fromarray(arr, mode="L").save(buf, format="PNG")
    return buf.getvalue()


def image_png_bytes(img: Image) -> bytes:
    buf = io.BytesIO()
    PILImage.fromarray(img.pixels).save(buf, format="PNG")
    return buf.getvalue()
