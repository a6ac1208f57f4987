"""SLIC superpixels and the lookup/centroid machinery the guidance encoders use.

The clustering runs in CIELAB+xy space with grid seeding, a fixed number of
iterations and a connectivity enforcement pass that merges orphan fragments
into the largest adjacent superpixel. Everything is deterministic: identical
inputs give an identical label raster regardless of the kernel backend.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from PIL import Image as PILImage
from scipy import ndimage as ndi

from clickcut import _kernels
from clickcut.imagecore import CROSS, Image, PixelPoint

SLIC_ITERATIONS = 10
DEFAULT_COMPACTNESS = 10.0


@dataclass(frozen=True)
class SuperpixelMap:
    """Complete partition of an image into 4-connected superpixels.

    labels:    (h, w) int32, values in [0, count)
    centroids: (count, 2) float64, columns (x, y), exact member-pixel means
    sizes:     (count,) int64 member-pixel counts
    adjacency: per-superpixel frozenset of neighbouring superpixel ids
    """

    labels: np.ndarray
    count: int
    centroids: np.ndarray
    sizes: np.ndarray
    adjacency: tuple[frozenset[int], ...]

    def __post_init__(self):
        for name in ("labels", "centroids", "sizes"):
            arr = getattr(self, name)
            arr.flags.writeable = False

    @property
    def width(self) -> int:
        return self.labels.shape[1]

    @property
    def height(self) -> int:
        return self.labels.shape[0]

    @property
    def extent(self) -> tuple[int, int]:
        return (self.width, self.height)

    @classmethod
    def from_labels(cls, labels: np.ndarray) -> "SuperpixelMap":
        """Build the full map (centroids, sizes, adjacency) from a label raster."""
        labels = np.ascontiguousarray(labels, dtype=np.int32)
        if labels.ndim != 2:
            raise ValueError("label raster must be 2-D")
        count = int(labels.max()) + 1
        if labels.min() < 0:
            raise ValueError("labels must be non-negative")
        sizes = np.bincount(labels.ravel(), minlength=count).astype(np.int64)
        if (sizes == 0).any():
            raise ValueError("label ids must be contiguous (empty id found)")
        centroids = _centroids(labels, count)
        adjacency = _adjacency(labels, count)
        return cls(labels=labels, count=count, centroids=centroids, sizes=sizes,
                   adjacency=adjacency)

    def adjacency_pairs(self) -> np.ndarray:
        """Unique adjacent (i, j) pairs with i < j, sorted."""
        pairs = [(i, j) for i in range(self.count) for j in self.adjacency[i] if i < j]
        if not pairs:
            return np.empty((0, 2), dtype=np.int64)
        return np.array(sorted(pairs), dtype=np.int64)


def superpixel_of(sp: SuperpixelMap, p: PixelPoint) -> int:
    if not (0 <= p.x < sp.width and 0 <= p.y < sp.height):
        raise ValueError(f"point {p} outside raster {sp.extent}")
    return int(sp.labels[p.y, p.x])


def centroid_distance(sp: SuperpixelMap, i: int, j: int) -> float:
    """Plain Euclidean distance between superpixel centroids."""
    if not (0 <= i < sp.count and 0 <= j < sp.count):
        raise ValueError(f"superpixel id out of range: {i}, {j} (count {sp.count})")
    dx = sp.centroids[i, 0] - sp.centroids[j, 0]
    dy = sp.centroids[i, 1] - sp.centroids[j, 1]
    return float(np.sqrt(dx * dx + dy * dy))


def rgb_to_lab(pixels: np.ndarray) -> np.ndarray:
    """sRGB (uint8) to CIELAB under D65, float64 output of shape (h, w, 3)."""
    rgb = pixels.astype(np.float64) / 255.0
    linear = np.where(rgb <= 0.04045, rgb / 12.92, ((rgb + 0.055) / 1.055) ** 2.4)
    m = np.array([
        [0.4124564, 0.3575761, 0.1804375],
        [0.2126729, 0.7151522, 0.0721750],
        [0.0193339, 0.1191920, 0.9503041],
    ])
    xyz = linear @ m.T
    white = np.array([0.95047, 1.0, 1.08883])
    xyz = xyz / white
    delta = 6.0 / 29.0
    f = np.where(xyz > delta ** 3, np.cbrt(xyz), xyz / (3 * delta * delta) + 4.0 / 29.0)
    lab = np.empty_like(xyz)
    lab[..., 0] = 116.0 * f[..., 1] - 16.0
    lab[..., 1] = 500.0 * (f[..., 0] - f[..., 1])
    lab[..., 2] = 200.0 * (f[..., 1] - f[..., 2])
    return lab


def slic(image: Image, target_count: int, compactness: float = DEFAULT_COMPACTNESS) -> SuperpixelMap:
    """Grid-seeded SLIC with fixed iteration count and connectivity enforcement."""
    if target_count < 1:
        raise ValueError("target_count must be >= 1")
    h, w = image.height, image.width
    n = h * w
    if target_count > n:
        raise ValueError(f"target_count {target_count} exceeds pixel count {n}")
    if compactness <= 0:
        raise ValueError("compactness must be positive")

    lab = rgb_to_lab(image.pixels)
    lab_l = np.ascontiguousarray(lab[..., 0])
    lab_a = np.ascontiguousarray(lab[..., 1])
    lab_b = np.ascontiguousarray(lab[..., 2])

    rows, cols = _seed_grid_shape(w, h, target_count)
    sx, sy = _perturbed_seeds(lab, rows, cols)
    k = rows * cols

    interval = math.sqrt(n / k)
    window = int(math.ceil(2.0 * interval))
    ratio = (compactness / interval) ** 2

    cx = sx.astype(np.float64)
    cy = sy.astype(np.float64)
    cl = lab_l[sy, sx].copy()
    ca = lab_a[sy, sx].copy()
    cb = lab_b[sy, sx].copy()

    # initial partition: the seed grid cells, so no pixel is ever unlabeled
    cell_y = np.minimum((np.arange(h) * rows) // h, rows - 1)
    cell_x = np.minimum((np.arange(w) * cols) // w, cols - 1)
    labels = (cell_y[:, None] * cols + cell_x[None, :]).astype(np.int32)
    labels = np.ascontiguousarray(labels)
    best = np.empty((h, w), dtype=np.float64)

    flat = np.arange(n)
    px = (flat % w).astype(np.float64)
    py = (flat // w).astype(np.float64)

    for _ in range(SLIC_ITERATIONS):
        best.fill(np.inf)
        _kernels.slic_assign_step(lab_l, lab_a, lab_b, cl, ca, cb, cx, cy,
                                  window, ratio, labels, best)
        counts = np.bincount(labels.ravel(), minlength=k)
        nz = counts > 0
        for values, acc in ((px, cx), (py, cy), (lab_l, cl), (lab_a, ca), (lab_b, cb)):
            sums = np.bincount(labels.ravel(), weights=values.ravel(), minlength=k)
            acc[nz] = sums[nz] / counts[nz]

    labels = _enforce_connectivity(labels, k)
    return SuperpixelMap.from_labels(labels)


def save_labels_png(sp: SuperpixelMap, path) -> None:
    """Debug dump of the label raster as 16-bit grayscale PNG."""
    if sp.count > 65536:
        raise ValueError("too many superpixels for a 16-bit dump")
    arr = sp.labels.astype(np.uint16)
    PILImage.fromarray(arr).save(path, format="PNG")


# ---------------------------------------------------------------------------
# internals

def _seed_grid_shape(w: int, h: int, target: int) -> tuple[int, int]:
    rows = max(1, round(math.sqrt(target * h / w)))
    rows = min(rows, h)
    cols = max(1, round(target / rows))
    cols = min(cols, w)
    return rows, cols


def _perturbed_seeds(lab: np.ndarray, rows: int, cols: int) -> tuple[np.ndarray, np.ndarray]:
    """Grid seeds moved to the lowest-gradient pixel in their 3x3 window.

    Ties keep the grid centre so a uniform image seeds exactly on the grid.
    """
    h, w = lab.shape[:2]
    right = lab[:, np.minimum(np.arange(w) + 1, w - 1), :]
    left = lab[:, np.maximum(np.arange(w) - 1, 0), :]
    down = lab[np.minimum(np.arange(h) + 1, h - 1), :, :]
    up = lab[np.maximum(np.arange(h) - 1, 0), :, :]
    grad = ((right - left) ** 2).sum(axis=2) + ((down - up) ** 2).sum(axis=2)

    sx = np.empty(rows * cols, dtype=np.int64)
    sy = np.empty(rows * cols, dtype=np.int64)
    idx = 0
    for i in range(rows):
        gy = int((i + 0.5) * h / rows)
        for j in range(cols):
            gx = int((j + 0.5) * w / cols)
            bx, by = gx, gy
            bg = grad[gy, gx]
            for yy in range(max(gy - 1, 0), min(gy + 2, h)):
                for xx in range(max(gx - 1, 0), min(gx + 2, w)):
                    if grad[yy, xx] < bg:
                        bg = grad[yy, xx]
                        bx, by = xx, yy
            sx[idx] = bx
            sy[idx] = by
            idx += 1
    return sx, sy


def _centroids(labels: np.ndarray, count: int) -> np.ndarray:
    h, w = labels.shape
    flat = labels.ravel()
    idx = np.arange(h * w)
    sizes = np.bincount(flat, minlength=count)
    sum_x = np.bincount(flat, weights=(idx % w).astype(np.float64), minlength=count)
    sum_y = np.bincount(flat, weights=(idx // w).astype(np.float64), minlength=count)
    return np.column_stack([sum_x / sizes, sum_y / sizes])


def _adjacency(labels: np.ndarray, count: int) -> tuple[frozenset[int], ...]:
    pairs = []
    horiz = labels[:, :-1] != labels[:, 1:]
    if horiz.any():
        pairs.append(np.stack([labels[:, :-1][horiz], labels[:, 1:][horiz]], axis=1))
    vert = labels[:-1, :] != labels[1:, :]
    if vert.any():
        pairs.append(np.stack([labels[:-1, :][vert], labels[1:, :][vert]], axis=1))
    neigh: list[set[int]] = [set() for _ in range(count)]
    if pairs:
        allp = np.concatenate(pairs)
        allp = np.unique(np.sort(allp, axis=1), axis=0)
        for i, j in allp:
            neigh[i].add(int(j))
            neigh[j].add(int(i))
    return tuple(frozenset(s) for s in neigh)


def _label_components(labels: np.ndarray, count: int) -> tuple[np.ndarray, int, np.ndarray]:
    """4-connected components of a multi-label raster.

    Component ids are assigned label by label in raster order, so they are
    deterministic. Returns (component raster, component count, comp -> label).
    """
    comp = np.full(labels.shape, -1, dtype=np.int64)
    objects = ndi.find_objects(labels + 1)
    next_id = 0
    comp_label = []
    for lbl in range(count):
        sl = objects[lbl]
        if sl is None:
            continue
        m = labels[sl] == lbl
        cc, ncc = ndi.label(m, structure=CROSS)
        view = comp[sl]
        view[m] = cc[m] - 1 + next_id
        comp_label.extend([lbl] * ncc)
        next_id += ncc
    return comp, next_id, np.array(comp_label, dtype=np.int64)


def _enforce_connectivity(labels: np.ndarray, count: int) -> np.ndarray:
    """Merge every orphan fragment into the largest adjacent superpixel.

    Each label's largest component (ties: lowest component id, i.e. earliest
    in raster order) is its core. Orphans merge only into regions already
    connected to a core, which keeps every final superpixel 4-connected;
    rounds repeat until all fragments are settled.
    """
    labels = labels.copy()
    h, w = labels.shape
    comp, ncomp, comp_label = _label_components(labels, count)
    comp_size = np.bincount(comp.ravel(), minlength=ncomp)

    core = np.zeros(ncomp, dtype=bool)
    best_for_label: dict[int, int] = {}
    for c in range(ncomp):
        lbl = int(comp_label[c])
        prev = best_for_label.get(lbl)
        if prev is None or comp_size[c] > comp_size[prev]:
            best_for_label[lbl] = c
    for c in best_for_label.values():
        core[c] = True

    orphans = [c for c in range(ncomp) if not core[c]]
    if not orphans:
        return _compact_labels(labels, count)

    # pixel lists per component, via one stable sort of the raster
    order = np.argsort(comp.ravel(), kind="stable")
    bounds = np.searchsorted(comp.ravel()[order], np.arange(ncomp + 1))
    settled = core[comp]
    sizes = np.bincount(labels.ravel(), minlength=count).astype(np.int64)

    pending = list(orphans)
    while pending:
        progress = False
        still = []
        for c in pending:
            pix = order[bounds[c]:bounds[c + 1]]
            ys, xs = pix // w, pix % w
            cand: dict[int, bool] = {}
            for dy, dx in ((0, 1), (0, -1), (1, 0), (-1, 0)):
                ny, nx = ys + dy, xs + dx
                ok = (ny >= 0) & (ny < h) & (nx >= 0) & (nx < w)
                if not ok.any():
                    continue
                ny, nx = ny[ok], nx[ok]
                sett = settled[ny, nx]
                for lbl in np.unique(labels[ny[sett], nx[sett]]):
                    cand[int(lbl)] = True
            own = int(labels[ys[0], xs[0]])
            if not cand:
                still.append(c)
                continue
            target = min(cand, key=lambda l: (-sizes[l], l))
            if target != own:
                labels[ys, xs] = target
                sizes[target] += len(pix)
                sizes[own] -= len(pix)
            settled[ys, xs] = True
            progress = True
        if still and not progress:
            raise RuntimeError("connectivity enforcement failed to converge")
        pending = still

    return _compact_labels(labels, count)


def _compact_labels(labels: np.ndarray, count: int) -> np.ndarray:
    """Drop empty label ids, preserving the relative order of survivors."""
    sizes = np.bincount(labels.ravel(), minlength=count)
    keep = np.nonzero(sizes > 0)[0]
    if len(keep) == count:
        return np.ascontiguousarray(labels, dtype=np.int32)
    remap = np.full(count, -1, dtype=np.int32)
    remap[keep] = np.arange(len(keep), dtype=np.int32)
    return np.ascontiguousarray(remap[labels])
