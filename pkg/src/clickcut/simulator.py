"""Deterministic, seedable simulation of user clicks.

The initial positive click starts at the object centroid (relocated inside
for concave shapes) and is displaced by 20-50 px; the first negative click is
sampled at least d pixels away, where d mixes the object box extent with
uniform and normal draws, and the resulting box must overlap the ground-truth
box with IoU >= 0.7. Corrective clicks for synthetic data pick 2-5 superpixels
per side. All randomness flows from the policy seed.
"""
from __future__ import annotations

import math
import zlib
from dataclasses import dataclass

import numpy as np

from clickcut.guidance import (
    NEGATIVE,
    POSITIVE,
    BoxPrior,
    Click,
    ClickState,
    init_box,
)
from clickcut.imagecore import (
    BinaryMask,
    Component,
    PixelPoint,
    connected_components,
    interior_pole,
    mask_bbox,
)
from clickcut.superpixels import SuperpixelMap


@dataclass(frozen=True)
class SimulationPolicy:
    seed: int = 0
    perturb_min: float = 20.0
    perturb_max: float = 50.0
    box_iou_threshold: float = 0.7
    max_retries: int = 50
    corrective_min: int = 2
    corrective_max: int = 5

    def __post_init__(self):
        if self.perturb_min > self.perturb_max:
            raise ValueError("perturb_min must be <= perturb_max")
        if not (0 < self.box_iou_threshold <= 1):
            raise ValueError("box_iou_threshold must be in (0, 1]")


@dataclass(frozen=True)
class ErrorRegions:
    false_negative_components: tuple[Component, ...]
    false_positive_components: tuple[Component, ...]


@dataclass(frozen=True)
class FirstNegative:
    click: Click
    box: BoxPrior
    fallback: bool  # True when the corner fallback fired after max_retries
    min_distance: float = 0.0  # the d of the accepting draw (0 for fallbacks)


def make_rng(policy: SimulationPolicy, instance_key: str | None = None) -> np.random.Generator:
    """Generator seeded from (policy seed, instance key) so per-instance
    streams are independent of execution order."""
    if instance_key is None:
        return np.random.default_rng(policy.seed)
    return np.random.default_rng([policy.seed, zlib.crc32(instance_key.encode())])


def sample_displacement(policy: SimulationPolicy, rng: np.random.Generator) -> tuple[float, float]:
    """(radius, angle) of one centre-click displacement draw."""
    r = rng.uniform(policy.perturb_min, policy.perturb_max)
    theta = rng.uniform(0.0, 2.0 * math.pi)
    return r, theta


def simulate_center_click(gt: BinaryMask, policy: SimulationPolicy,
                          rng: np.random.Generator) -> Click:
    """Perturbed centre click, guaranteed inside the mask."""
    if not gt.bits.any():
        raise ValueError("cannot simulate a click on an empty mask")
    ys, xs = np.nonzero(gt.bits)
    cx = int(math.floor(xs.mean() + 0.5))
    cy = int(math.floor(ys.mean() + 0.5))
    if not gt.bits[cy, cx]:
        start = interior_pole(gt)
    else:
        start = PixelPoint(cx, cy)
    for _ in range(policy.max_retries):
        r, theta = sample_displacement(policy, rng)
        px = int(math.floor(start.x + r * math.cos(theta) + 0.5))
        py = int(math.floor(start.y + r * math.sin(theta) + 0.5))
        if 0 <= px < gt.width and 0 <= py < gt.height and gt.bits[py, px]:
            return Click(polarity=POSITIVE, position=PixelPoint(px, py), index=0)
    return Click(polarity=POSITIVE, position=start, index=0)


def sample_distance_d(w: float, h: float, rng: np.random.Generator) -> float:
    """Minimum centre-to-negative distance: (r1 - r2) * w + (1 + r2) * h with
    r1 ~ U(0,1), r2 ~ N(0,1); non-positive draws are resampled."""
    if w <= 0 or h <= 0:
        raise ValueError("box extent must be positive")
    while True:
        r1 = rng.uniform(0.0, 1.0)
        r2 = rng.normal(0.0, 1.0)
        d = (r1 - r2) * w + (1.0 + r2) * h
        if d > 0:
            return d


def _rect_iou(a0: PixelPoint, a1: PixelPoint, b0: PixelPoint, b1: PixelPoint) -> float:
    """IoU of two inclusive pixel rectangles."""
    ix = min(a1.x, b1.x) - max(a0.x, b0.x) + 1
    iy = min(a1.y, b1.y) - max(a0.y, b0.y) + 1
    inter = max(ix, 0) * max(iy, 0)
    area_a = (a1.x - a0.x + 1) * (a1.y - a0.y + 1)
    area_b = (b1.x - b0.x + 1) * (b1.y - b0.y + 1)
    return inter / (area_a + area_b - inter)


def simulate_first_negative(gt: BinaryMask, center: Click, sp: SuperpixelMap,
                            policy: SimulationPolicy,
                            rng: np.random.Generator) -> FirstNegative:
    """Background click at distance >= d whose induced box matches the
    ground-truth box with IoU above the policy threshold.

    Falls back to the ground-truth box corner farthest from the centre click
    when sampling fails; the result is then flagged.
    """
    if gt.bits.all():
        raise ValueError("ground truth covers the whole image; no background pixel")
    g0, g1 = mask_bbox(gt)
    gw = g1.x - g0.x + 1
    gh = g1.y - g0.y + 1
    c = center.position
    for _ in range(policy.max_retries):
        d = sample_distance_d(gw, gh, rng)
        radius = rng.uniform(d, 1.5 * d)
        theta = rng.uniform(0.0, 2.0 * math.pi)
        px = int(math.floor(c.x + radius * math.cos(theta) + 0.5))
        py = int(math.floor(c.y + radius * math.sin(theta) + 0.5))
        if not (0 <= px < gt.width and 0 <= py < gt.height):
            continue
        if gt.bits[py, px]:
            continue
        if px == c.x or py == c.y:
            continue  # degenerate center_corner box
        if math.hypot(px - c.x, py - c.y) < d:
            continue  # integer rounding pulled the point inside the radius
        click = Click(polarity=NEGATIVE, position=PixelPoint(px, py), index=0)
        box = init_box(center, click, sp, mode="center_corner")
        if _rect_iou(box.e0, box.e1, g0, g1) >= policy.box_iou_threshold:
            return FirstNegative(click=click, box=box, fallback=False, min_distance=d)
    point = _fallback_corner(gt, c, g0, g1)
    click = Click(polarity=NEGATIVE, position=point, index=0)
    box = init_box(center, click, sp, mode="center_corner")
    return FirstNegative(click=click, box=box, fallback=True)


def _fallback_corner(gt: BinaryMask, c: PixelPoint, g0: PixelPoint,
                     g1: PixelPoint) -> PixelPoint:
    """Ground-truth box corner farthest from the centre, walked diagonally
    outward until it sits on a background pixel off the centre's row/column."""
    corners = [PixelPoint(g0.x, g0.y), PixelPoint(g1.x, g0.y),
               PixelPoint(g0.x, g1.y), PixelPoint(g1.x, g1.y)]
    corner = max(corners, key=lambda q: (q.x - c.x) ** 2 + (q.y - c.y) ** 2)
    step_x = -1 if corner.x == g0.x else 1
    step_y = -1 if corner.y == g0.y else 1
    px, py = corner.x, corner.y
    while 0 <= px < gt.width and 0 <= py < gt.height:
        if not gt.bits[py, px] and px != c.x and py != c.y:
            return PixelPoint(px, py)
        px += step_x
        py += step_y
    # pathological shape: take the background pixel farthest from the centre
    ys, xs = np.nonzero(np.logical_not(gt.bits))
    ok = (xs != c.x) & (ys != c.y)
    if not ok.any():
        raise ValueError("no usable background pixel for the negative click")
    xs, ys = xs[ok], ys[ok]
    d = (xs - c.x) ** 2 + (ys - c.y) ** 2
    i = int(np.argmax(d))
    return PixelPoint(int(xs[i]), int(ys[i]))


def _nearest_member_pixel(sp: SuperpixelMap, sp_id: int) -> PixelPoint:
    """Member pixel closest to the superpixel centroid (ties: smallest y, x)."""
    ys, xs = np.nonzero(sp.labels == sp_id)
    cx, cy = sp.centroids[sp_id]
    d = (xs - cx) ** 2 + (ys - cy) ** 2
    i = int(np.argmin(d))
    return PixelPoint(int(xs[i]), int(ys[i]))


def simulate_corrective_clicks(state: ClickState, sp: SuperpixelMap,
                               policy: SimulationPolicy,
                               rng: np.random.Generator) -> list[Click]:
    """Synthetic corrective round: a few positive superpixels outside the
    boxed set and a few negative ones inside, clicked at their centroids."""
    if state.box is None:
        raise ValueError("box must be initialized")
    boxed = state.box.boxed_set
    outside = np.array(sorted(set(range(sp.count)) - boxed), dtype=np.int64)
    inside = np.array(sorted(boxed), dtype=np.int64)
    next_index = max(c.index for c in state.clicks) + 1 if state.clicks else 1
    clicks: list[Click] = []
    for ids, polarity in ((outside, POSITIVE), (inside, NEGATIVE)):
        if len(ids) == 0:
            continue
        k = int(rng.integers(policy.corrective_min, policy.corrective_max + 1))
        k = min(k, len(ids))
        chosen = rng.choice(ids, size=k, replace=False)
        for z in chosen:
            clicks.append(Click(polarity=polarity,
                                position=_nearest_member_pixel(sp, int(z)),
                                index=next_index))
            next_index += 1
    return clicks


def compute_error_regions(pred: BinaryMask, gt: BinaryMask) -> ErrorRegions:
    if pred.bits.shape != gt.bits.shape:
        raise ValueError("prediction and ground truth extents differ")
    fn = BinaryMask(np.logical_and(gt.bits, np.logical_not(pred.bits)))
    fp = BinaryMask(np.logical_and(pred.bits, np.logical_not(gt.bits)))
    return ErrorRegions(
        false_negative_components=tuple(connected_components(fn)),
        false_positive_components=tuple(connected_components(fp)),
    )


def next_eval_click(pred: BinaryMask, gt: BinaryMask, state: ClickState,
                    sp: SuperpixelMap) -> Click:
    """Deterministic corrective click for evaluation: the interior pole of the
    largest mislabeled component, positive for a false negative region,
    negative for a false positive one (ties prefer the false negatives)."""
    regions = compute_error_regions(pred, gt)
    fn = regions.false_negative_components
    fp = regions.false_positive_components
    if not fn and not fp:
        raise ValueError("prediction equals ground truth; nothing to correct")
    fn_area = fn[0].area if fn else 0
    fp_area = fp[0].area if fp else 0
    if fn_area >= fp_area:
        comp, polarity = fn[0], POSITIVE
    else:
        comp, polarity = fp[0], NEGATIVE
    next_index = max((c.index for c in state.clicks), default=0) + 1
    return Click(polarity=polarity, position=interior_pole(comp.mask), index=next_index)
