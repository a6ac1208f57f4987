"""Click-to-guidance transformations and the constrained interaction state.

Encoders turn clicks into single-channel rasters in [0, 255]:

* superpixel distance maps (min centroid distance to a clicked superpixel),
* plain Euclidean click distance maps,
* the superpixel-box localization prior (binary over a superpixel id set,
  grown by positive clicks and carved by negative ones),
* rectangle / rectangle-distance-transform variants,
* constant maps.

Distances are truncated at 255 so all channels share one value range.
"""
from __future__ import annotations

import io
from dataclasses import dataclass, field, replace
from typing import Literal

import numpy as np
from PIL import Image as PILImage

from clickcut.imagecore import PixelPoint
from clickcut.superpixels import SuperpixelMap, superpixel_of

TRUNCATION = 255.0

Polarity = Literal["positive", "negative"]
POSITIVE: Polarity = "positive"
NEGATIVE: Polarity = "negative"

BoxMode = Literal["center_corner", "corner_pair"]

GuidanceKind = Literal[
    "euclidean_pos", "euclidean_neg", "sp_pos", "sp_neg",
    "spbox", "bbox", "bbox_dt", "constant",
]


class ConstraintViolation(ValueError):
    """A corrective click landed on the wrong side of the current region."""

    def __init__(self, message: str, allowed_region: str):
        super().__init__(message)
        self.allowed_region = allowed_region


@dataclass(frozen=True)
class Click:
    polarity: Polarity
    position: PixelPoint
    index: int  # interaction round, 0 = the initial pair

    def __post_init__(self):
        if self.index < 0:
            raise ValueError("click index must be >= 0")
        if self.polarity not in (POSITIVE, NEGATIVE):
            raise ValueError(f"bad polarity {self.polarity!r}")


@dataclass(frozen=True)
class BoxPrior:
    """Enclosing box state: rectangle corners plus the boxed superpixel set."""

    e0: PixelPoint  # top-left
    e1: PixelPoint  # bottom-right
    boxed_set: frozenset[int]
    mode: BoxMode

    def __post_init__(self):
        if self.e0.x > self.e1.x or self.e0.y > self.e1.y:
            raise ValueError(f"degenerate corners {self.e0} / {self.e1}")


@dataclass(frozen=True)
class GuidanceMap:
    values: np.ndarray  # (h, w) float64 in [0, 255]
    kind: GuidanceKind

    def __post_init__(self):
        v = self.values
        if v.ndim != 2:
            raise ValueError("guidance map must be 2-D")
        v.flags.writeable = False

    @property
    def width(self) -> int:
        return self.values.shape[1]

    @property
    def height(self) -> int:
        return self.values.shape[0]


@dataclass(frozen=True)
class ClickState:
    """Ordered click history plus the box it implies.

    The state is replayable: rebuilding from the click list alone reproduces
    boxed_set, corners and warnings exactly.
    """

    clicks: tuple[Click, ...] = ()
    box: BoxPrior | None = None
    strict_validation: bool = True
    warnings: tuple[str, ...] = field(default=())

    def positive_superpixels(self, sp: SuperpixelMap) -> tuple[int, ...]:
        return tuple(superpixel_of(sp, c.position) for c in self.clicks if c.polarity == POSITIVE)

    def negative_superpixels(self, sp: SuperpixelMap) -> tuple[int, ...]:
        return tuple(superpixel_of(sp, c.position) for c in self.clicks if c.polarity == NEGATIVE)

    def clicked_superpixels(self, sp: SuperpixelMap) -> tuple[tuple[int, Polarity], ...]:
        """(superpixel id, polarity) in click order, for hard constraints."""
        return tuple((superpixel_of(sp, c.position), c.polarity) for c in self.clicks)


# ---------------------------------------------------------------------------
# encoders

def constant_guidance(extent: tuple[int, int], value: float = TRUNCATION,
                      kind: GuidanceKind = "constant") -> GuidanceMap:
    w, h = extent
    return GuidanceMap(values=np.full((h, w), float(value)), kind=kind)


def superpixel_guidance(sp: SuperpixelMap, clicks, polarity: Polarity) -> GuidanceMap:
    """Min centroid distance from each pixel's superpixel to any clicked one.

    With no clicks of the polarity the map is constant 255 (the truncation
    ceiling, i.e. "infinitely far").
    """
    kind: GuidanceKind = "sp_pos" if polarity == POSITIVE else "sp_neg"
    clicked = sorted({superpixel_of(sp, c.position) for c in clicks if c.polarity == polarity})
    if not clicked:
        return constant_guidance(sp.extent, TRUNCATION, kind)
    cx = sp.centroids[:, 0]
    cy = sp.centroids[:, 1]
    dx = cx[:, None] - cx[None, clicked]
    dy = cy[:, None] - cy[None, clicked]
    dist = np.sqrt(dx * dx + dy * dy).min(axis=1)
    np.minimum(dist, TRUNCATION, out=dist)
    return GuidanceMap(values=dist[sp.labels], kind=kind)


def euclidean_guidance(clicks, polarity: Polarity, extent: tuple[int, int]) -> GuidanceMap:
    """Min pixel-grid distance to any click of the polarity, truncated at 255."""
    kind: GuidanceKind = "euclidean_pos" if polarity == POSITIVE else "euclidean_neg"
    points = [c.position for c in clicks if c.polarity == polarity]
    if not points:
        return constant_guidance(extent, TRUNCATION, kind)
    w, h = extent
    xs = np.arange(w, dtype=np.float64)
    ys = np.arange(h, dtype=np.float64)
    out = np.full((h, w), np.inf)
    for p in points:
        dx = xs - p.x
        dy = ys - p.y
        d = np.sqrt(dx[None, :] * dx[None, :] + dy[:, None] * dy[:, None])
        np.minimum(out, d, out=out)
    np.minimum(out, TRUNCATION, out=out)
    return GuidanceMap(values=out, kind=kind)


def boxed_superpixels(sp: SuperpixelMap, e0: PixelPoint, e1: PixelPoint) -> frozenset[int]:
    """Superpixels whose pixel region intersects the closed rectangle [e0, e1]."""
    region = sp.labels[e0.y:e1.y + 1, e0.x:e1.x + 1]
    return frozenset(int(v) for v in np.unique(region))


def init_box(c0_pos: Click, c0_neg: Click, sp: SuperpixelMap,
             mode: BoxMode = "center_corner") -> BoxPrior:
    """Build the initial enclosing box from the first click pair.

    center_corner: box centred on the positive click with per-axis half
    extents reaching the negative click. corner_pair: the two clicks are
    opposite corners.
    """
    if c0_pos.index != 0 or c0_neg.index != 0:
        raise ValueError("initial box requires the index-0 click pair")
    if c0_pos.polarity != POSITIVE or c0_neg.polarity != NEGATIVE:
        raise ValueError("initial pair must be (positive, negative)")
    p, q = c0_pos.position, c0_neg.position
    if mode == "center_corner":
        hx, hy = abs(p.x - q.x), abs(p.y - q.y)
        if hx == 0 or hy == 0:
            raise ValueError("degenerate box: zero extent on an axis")
        e0 = PixelPoint(max(p.x - hx, 0), max(p.y - hy, 0))
        e1 = PixelPoint(min(p.x + hx, sp.width - 1), min(p.y + hy, sp.height - 1))
    elif mode == "corner_pair":
        e0 = PixelPoint(min(p.x, q.x), min(p.y, q.y))
        e1 = PixelPoint(max(p.x, q.x), max(p.y, q.y))
    else:
        raise ValueError(f"unknown box mode {mode!r}")
    return BoxPrior(e0=e0, e1=e1, boxed_set=boxed_superpixels(sp, e0, e1), mode=mode)


def spbox_guidance(sp: SuperpixelMap, box: BoxPrior) -> GuidanceMap:
    """255 on every pixel of a boxed superpixel, 0 elsewhere.

    Membership is per superpixel, so a boundary-straddling superpixel lights
    up in full, including its pixels outside the rectangle.
    """
    ids = np.fromiter(box.boxed_set, dtype=np.int64) if box.boxed_set else np.empty(0, np.int64)
    member = np.zeros(sp.count, dtype=bool)
    member[ids] = True
    values = np.where(member[sp.labels], TRUNCATION, 0.0)
    return GuidanceMap(values=values, kind="spbox")


def bbox_guidance(box: BoxPrior, extent: tuple[int, int]) -> GuidanceMap:
    w, h = extent
    values = np.zeros((h, w))
    values[box.e0.y:box.e1.y + 1, box.e0.x:box.e1.x + 1] = TRUNCATION
    return GuidanceMap(values=values, kind="bbox")


def bbox_dt_guidance(box: BoxPrior, extent: tuple[int, int]) -> GuidanceMap:
    """Euclidean distance to the rectangle boundary, truncated at 255.

    Zero on the boundary itself, growing both inward and outward.
    """
    w, h = extent
    xs = np.arange(w, dtype=np.float64)
    ys = np.arange(h, dtype=np.float64)
    x0, y0, x1, y1 = float(box.e0.x), float(box.e0.y), float(box.e1.x), float(box.e1.y)
    # outside: distance to the filled rectangle
    ox = np.maximum(np.maximum(x0 - xs, xs - x1), 0.0)
    oy = np.maximum(np.maximum(y0 - ys, ys - y1), 0.0)
    outside = np.sqrt(ox[None, :] ** 2 + oy[:, None] ** 2)
    # inside: min distance to any of the four edges
    ix = np.minimum(xs - x0, x1 - xs)
    iy = np.minimum(ys - y0, y1 - ys)
    inside = np.minimum(ix[None, :], iy[:, None])
    inside = np.where((ix[None, :] >= 0) & (iy[:, None] >= 0), np.maximum(inside, 0.0), 0.0)
    values = np.where(outside > 0, outside, inside)
    np.minimum(values, TRUNCATION, out=values)
    return GuidanceMap(values=values, kind="bbox_dt")


# ---------------------------------------------------------------------------
# interaction state machine

def initial_state(c0_pos: Click, c0_neg: Click, sp: SuperpixelMap,
                  mode: BoxMode = "center_corner", strict: bool = True) -> ClickState:
    box = init_box(c0_pos, c0_neg, sp, mode)
    return ClickState(clicks=(c0_pos, c0_neg), box=box, strict_validation=strict)


def update_box(state: ClickState, sp: SuperpixelMap, new_click: Click) -> ClickState:
    """Apply one corrective click.

    Positive: union the click's superpixel into the boxed set and expand the
    corners to contain the click. Negative: remove the superpixel, corners
    unchanged. A click whose set operation would be a no-op raises in strict
    mode; in lenient mode the set is untouched and a warning is recorded.
    The update is idempotent per click.
    """
    if new_click.index < 1:
        raise ValueError("corrective clicks must have index >= 1")
    if state.box is None:
        raise ValueError("no box initialized; apply the initial pair first")
    z = superpixel_of(sp, new_click.position)
    box = state.box
    warnings = state.warnings
    if new_click.polarity == POSITIVE:
        if z in box.boxed_set:
            msg = f"positive click at {tuple(new_click.position)} lies in the current region"
            if state.strict_validation:
                raise ConstraintViolation(msg, allowed_region="outside the boxed superpixel set")
            warnings = warnings + (msg,)
        else:
            p = new_click.position
            e0 = PixelPoint(min(box.e0.x, p.x), min(box.e0.y, p.y))
            e1 = PixelPoint(max(box.e1.x, p.x), max(box.e1.y, p.y))
            box = replace(box, boxed_set=box.boxed_set | {z}, e0=e0, e1=e1)
    else:
        if z not in box.boxed_set:
            msg = f"negative click at {tuple(new_click.position)} lies outside the current region"
            if state.strict_validation:
                raise ConstraintViolation(msg, allowed_region="inside the boxed superpixel set")
            warnings = warnings + (msg,)
        else:
            box = replace(box, boxed_set=box.boxed_set - {z})
    return ClickState(clicks=state.clicks + (new_click,), box=box,
                      strict_validation=state.strict_validation, warnings=warnings)


def replay(clicks, sp: SuperpixelMap, mode: BoxMode = "center_corner",
           strict: bool = True) -> ClickState:
    """Rebuild a ClickState from an ordered click list (the replay invariant)."""
    clicks = tuple(clicks)
    if len(clicks) < 2:
        return ClickState(clicks=clicks, box=None, strict_validation=strict)
    first = [c for c in clicks if c.index == 0]
    if len(first) != 2 or {c.polarity for c in first} != {POSITIVE, NEGATIVE}:
        raise ValueError("history must start with one positive and one negative index-0 click")
    pos0 = next(c for c in first if c.polarity == POSITIVE)
    neg0 = next(c for c in first if c.polarity == NEGATIVE)
    state = initial_state(pos0, neg0, sp, mode, strict)
    for c in clicks:
        if c.index == 0:
            continue
        state = update_box(state, sp, c)
    return state


def guidance_png_bytes(gmap: GuidanceMap) -> bytes:
    arr = np.rint(gmap.values).clip(0, 255).astype(np.uint8)
    buf = io.BytesIO()
    PILImage.fromarray(arr, mode="L").save(buf, format="PNG")
    return buf.getvalue()


def save_guidance_png(gmap: GuidanceMap, path) -> None:
    with open(path, "wb") as fh:
        fh.write(guidance_png_bytes(gmap))
