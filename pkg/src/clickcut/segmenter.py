"""Pluggable segmentation backends; the reference one is a superpixel graph cut.

The reference backend minimizes a binary energy over superpixels:

    unary(z, fg) = alpha * pos(z)/255 + beta * (1 - w_in(z)) + gamma * nll_fg(z)
    unary(z, bg) = alpha * neg(z)/255 + beta * w_in(z)       + gamma * nll_bg(z)
    pairwise     = lam * exp(-|mean colour diff|^2 / (2 sigma^2)) on adjacency

where w_in is the per-superpixel insideness of the active localization
channel, the colour terms come from per-side Gaussian mixtures seeded from
the clicked superpixels, and clicked superpixels are hard-constrained via a
large unary on the opposite label. The energy is solved exactly by
max-flow/min-cut, so the labeling attains the global minimum.
"""
from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from clickcut import _kernels
from clickcut.guidance import (
    NEGATIVE,
    POSITIVE,
    BoxPrior,
    ClickState,
    GuidanceMap,
    bbox_dt_guidance,
    bbox_guidance,
    euclidean_guidance,
    spbox_guidance,
    superpixel_guidance,
)
from clickcut.imagecore import BinaryMask, Image
from clickcut.superpixels import SuperpixelMap

ENCODERS = ("eu", "sp", "sp+bbox", "sp+dt", "sp+spbox")


class NoForegroundEvidence(ValueError):
    """Neither a positive click nor a localization prior is available."""


@dataclass(frozen=True)
class SegmenterParams:
    alpha: float = 1.0       # click distance maps
    beta: float = 1.0        # localization prior, foreground-outside penalty
    beta_in: float | None = None  # background-inside penalty; None = beta
    gamma: float = 1.0       # colour model
    lam: float = 5.0         # pairwise Potts strength
    sigma: float | None = None  # colour similarity scale; None = data mean
    nll_cap: float = 20.0
    hard_cost: float = 1e9
    gmm_components: int = 3

    @classmethod
    def from_dict(cls, overrides: dict) -> "SegmenterParams":
        kwargs = {}
        for key, value in overrides.items():
            if key not in cls.__dataclass_fields__:
                raise ValueError(f"unknown segmenter param {key!r}")
            if value is None:
                kwargs[key] = None
            else:
                kwargs[key] = int(value) if key == "gmm_components" else float(value)
        return replace(cls(), **kwargs)


@dataclass(frozen=True)
class GuidanceBundle:
    """The channels a backend consumes, mirroring the CNN input layout."""

    pos: GuidanceMap
    neg: GuidanceMap
    loc: GuidanceMap | None
    encoder: str
    box: BoxPrior | None
    clicked: tuple[tuple[int, str], ...] = ()  # (superpixel id, polarity), click order

    def __post_init__(self):
        if self.encoder not in ENCODERS:
            raise ValueError(f"unknown encoder {self.encoder!r}; choose from {ENCODERS}")
        shapes = {self.pos.values.shape, self.neg.values.shape}
        if self.loc is not None:
            shapes.add(self.loc.values.shape)
        if len(shapes) != 1:
            raise ValueError("guidance channels must share one extent")


@dataclass(frozen=True)
class SegmentationResult:
    mask: BinaryMask
    sp_labels: np.ndarray  # (count,) bool, True = foreground
    energy: float | None
    scores: np.ndarray | None = None  # reserved for learned backends
    warnings: tuple[str, ...] = ()


@dataclass(frozen=True)
class EnergyProblem:
    """Assembled instance: unary (count, 2) with [:, 0]=fg cost, [:, 1]=bg cost;
    edges (E, 2) superpixel pairs; weights (E,) pairwise cut costs."""

    unary: np.ndarray
    edges: np.ndarray
    weights: np.ndarray
    warnings: tuple[str, ...] = ()


@dataclass(frozen=True)
class BackendContext:
    """Extra evaluation-side inputs some backends need (the oracle uses both)."""

    clicks_total: int = 0
    gt: BinaryMask | None = None


def build_bundle(sp: SuperpixelMap, state: ClickState, encoder: str) -> GuidanceBundle:
    """Encode the click state into the channel set of one encoder variant."""
    if encoder not in ENCODERS:
        raise ValueError(f"unknown encoder {encoder!r}; choose from {ENCODERS}")
    extent = sp.extent
    if encoder == "eu":
        pos = euclidean_guidance(state.clicks, POSITIVE, extent)
        neg = euclidean_guidance(state.clicks, NEGATIVE, extent)
    else:
        pos = superpixel_guidance(sp, state.clicks, POSITIVE)
        neg = superpixel_guidance(sp, state.clicks, NEGATIVE)
    loc = None
    if state.box is not None:
        if encoder == "sp+spbox":
            loc = spbox_guidance(sp, state.box)
        elif encoder == "sp+bbox":
            loc = bbox_guidance(state.box, extent)
        elif encoder == "sp+dt":
            loc = bbox_dt_guidance(state.box, extent)
    return GuidanceBundle(pos=pos, neg=neg, loc=loc, encoder=encoder, box=state.box,
                          clicked=state.clicked_superpixels(sp))


# ---------------------------------------------------------------------------
# colour model: deterministic k-means seeded Gaussian mixture

@dataclass(frozen=True)
class ColorModel:
    weights: np.ndarray
    means: np.ndarray
    inv_covs: np.ndarray
    log_norms: np.ndarray


def fit_color_model(samples: np.ndarray, components: int = 3,
                    iters: int = 8) -> ColorModel | None:
    """Gaussian mixture over RGB in [0, 1], deterministic (luminance-
    quantile init, fixed k-means rounds, no RNG)."""
    if len(samples) == 0:
        return None
    x = np.asarray(samples, dtype=np.float64)
    k = max(1, min(components, len(x)))
    order = np.argsort(x.sum(axis=1), kind="stable")
    assign = np.empty(len(x), dtype=np.int64)
    for i, chunk in enumerate(np.array_split(order, k)):
        assign[chunk] = i
    means = np.stack([x[assign == i].mean(axis=0) for i in range(k)])
    for _ in range(iters):
        d2 = ((x[:, None, :] - means[None, :, :]) ** 2).sum(axis=2)
        assign = np.argmin(d2, axis=1)
        for i in range(k):
            sel = assign == i
            if sel.any():
                means[i] = x[sel].mean(axis=0)
            else:
                far = int(np.argmax(d2[np.arange(len(x)), assign]))
                means[i] = x[far]
                assign[far] = i
    weights = np.zeros(k)
    covs = np.empty((k, 3, 3))
    for i in range(k):
        sel = assign == i
        weights[i] = sel.mean()
        pts = x[sel]
        if len(pts) > 1:
            covs[i] = np.cov(pts.T)
        else:
            covs[i] = np.zeros((3, 3))
        # variance floor of ~8 grey levels so a single-superpixel seed still
        # generalises across sensor-noise-sized colour variation
        covs[i] += np.eye(3) * 1e-3
    inv_covs = np.stack([np.linalg.inv(c) for c in covs])
    dets = np.array([np.linalg.det(c) for c in covs])
    log_norms = -0.5 * (3 * np.log(2 * np.pi) + np.log(dets))
    return ColorModel(weights=weights, means=means, inv_covs=inv_covs, log_norms=log_norms)


def color_nll(model: ColorModel | None, x: np.ndarray) -> np.ndarray:
    """Negative log likelihood of rows of x; zeros when there is no model."""
    if model is None:
        return np.zeros(len(x))
    diff = x[:, None, :] - model.means[None, :, :]
    maha = np.einsum("nki,kij,nkj->nk", diff, model.inv_covs, diff)
    logp = np.log(np.maximum(model.weights, 1e-12))[None, :] + model.log_norms[None, :] - 0.5 * maha
    m = logp.max(axis=1)
    return -(m + np.log(np.exp(logp - m[:, None]).sum(axis=1)))


# ---------------------------------------------------------------------------
# energy assembly and minimization

def _sp_mean(values: np.ndarray, sp: SuperpixelMap) -> np.ndarray:
    sums = np.bincount(sp.labels.ravel(), weights=values.ravel(), minlength=sp.count)
    return sums / sp.sizes


def _mean_colors(image: Image, sp: SuperpixelMap) -> np.ndarray:
    flat = sp.labels.ravel()
    out = np.empty((sp.count, 3))
    for ch in range(3):
        out[:, ch] = np.bincount(flat, weights=image.pixels[..., ch].ravel().astype(np.float64),
                                 minlength=sp.count)
    return out / sp.sizes[:, None] / 255.0


def _insideness(sp: SuperpixelMap, bundle: GuidanceBundle) -> np.ndarray | None:
    """Per-superpixel weight in [0, 1] of the localization channel."""
    if bundle.loc is None:
        return None
    kind = bundle.loc.kind
    if kind in ("spbox", "bbox"):
        return _sp_mean(bundle.loc.values, sp) / 255.0
    if kind == "bbox_dt":
        # soft box: inside-fraction scaled by the normalized interior depth,
        # so the prior fades near the rectangle boundary
        box = bundle.box
        if box is None:
            return None
        h, w = sp.labels.shape
        ys, xs = np.indices((h, w))
        inside = ((xs >= box.e0.x) & (xs <= box.e1.x) &
                  (ys >= box.e0.y) & (ys <= box.e1.y)).astype(np.float64)
        frac_in = _sp_mean(inside, sp)
        box_w = box.e1.x - box.e0.x + 1
        box_h = box.e1.y - box.e0.y + 1
        max_depth = max(min(box_w, box_h) / 2.0, 1.0)
        dt_in = _sp_mean(bundle.loc.values * inside, sp) / np.maximum(frac_in, 1e-12)
        depth = np.clip(2.0 * dt_in / max_depth, 0.0, 1.0)
        return frac_in * depth
    return None


def build_problem(image: Image, sp: SuperpixelMap, bundle: GuidanceBundle,
                  params: SegmenterParams | None = None) -> EnergyProblem:
    params = params or SegmenterParams()
    if bundle.pos.values.shape != sp.labels.shape:
        raise ValueError("guidance extent does not match the superpixel raster")
    warnings: tuple[str, ...] = ()

    pos_cost = _sp_mean(bundle.pos.values, sp) / 255.0
    neg_cost = _sp_mean(bundle.neg.values, sp) / 255.0
    w_in = _insideness(sp, bundle)
    mean_colors = _mean_colors(image, sp)

    pos_ids = [z for z, pol in bundle.clicked if pol == POSITIVE]
    neg_ids = [z for z, pol in bundle.clicked if pol == NEGATIVE]
    if not pos_ids and w_in is None:
        raise NoForegroundEvidence(
            "need at least one positive click or a localization prior")

    fg_seed = sorted(set(pos_ids))
    bg_seed = sorted(set(neg_ids))
    if not fg_seed and w_in is not None:
        fg_seed = sorted(np.nonzero(w_in > 0.5)[0].tolist())
    if not bg_seed and w_in is not None:
        bg_seed = sorted(np.nonzero(w_in <= 0.5)[0].tolist())

    fg_pixels = _member_pixel_colors(image, sp, fg_seed)
    bg_pixels = _member_pixel_colors(image, sp, bg_seed)
    fg_model = fit_color_model(fg_pixels, params.gmm_components)
    bg_model = fit_color_model(bg_pixels, params.gmm_components)
    cap = params.nll_cap
    nll_fg = (np.clip(color_nll(fg_model, mean_colors), -cap, cap) + cap) / (2 * cap)
    nll_bg = (np.clip(color_nll(bg_model, mean_colors), -cap, cap) + cap) / (2 * cap)
    if fg_model is None:
        nll_fg = np.zeros(sp.count)
    if bg_model is None:
        nll_bg = np.zeros(sp.count)

    unary = np.zeros((sp.count, 2))
    unary[:, 0] = params.alpha * pos_cost + params.gamma * nll_fg
    unary[:, 1] = params.alpha * neg_cost + params.gamma * nll_bg
    if w_in is not None:
        beta_in = params.beta if params.beta_in is None else params.beta_in
        unary[:, 0] += params.beta * (1.0 - w_in)
        unary[:, 1] += beta_in * w_in

    # hard constraints: latest click wins on conflicts
    forced: dict[int, str] = {}
    for z, pol in bundle.clicked:
        if z in forced and forced[z] != pol:
            warnings = warnings + (
                f"superpixel {z} clicked with both polarities; keeping the most recent",)
        forced[z] = pol
    for z, pol in forced.items():
        if pol == POSITIVE:
            unary[z, 1] = params.hard_cost
        else:
            unary[z, 0] = params.hard_cost

    edges = sp.adjacency_pairs()
    if len(edges):
        diff = mean_colors[edges[:, 0]] - mean_colors[edges[:, 1]]
        dist = np.sqrt((diff * diff).sum(axis=1))
        sigma = params.sigma if params.sigma is not None else float(dist.mean())
        if sigma <= 0:
            sigma = 1e-6
        weights = params.lam * np.exp(-(dist * dist) / (2.0 * sigma * sigma))
    else:
        weights = np.zeros(0)
    return EnergyProblem(unary=unary, edges=edges, weights=weights, warnings=warnings)


def solve_problem(problem: EnergyProblem) -> np.ndarray:
    """Exact min-cut labeling of an assembled problem (True = foreground)."""
    k = len(problem.unary)
    n = k + 2
    s, t = k, k + 1
    first = np.full(n, -1, dtype=np.int64)
    eto: list[int] = []
    enext: list[int] = []
    cap: list[float] = []

    def add(u: int, v: int, cuv: float, cvu: float) -> None:
        eto.append(v)
        enext.append(first[u])
        cap.append(cuv)
        first[u] = len(eto) - 1
        eto.append(u)
        enext.append(first[v])
        cap.append(cvu)
        first[v] = len(eto) - 1

    for z in range(k):
        if problem.unary[z, 1] > 0:
            add(s, z, float(problem.unary[z, 1]), 0.0)  # cut when z ends bg
        if problem.unary[z, 0] > 0:
            add(z, t, float(problem.unary[z, 0]), 0.0)  # cut when z ends fg
    for (i, j), wgt in zip(problem.edges, problem.weights):
        if wgt > 0:
            add(int(i), int(j), float(wgt), float(wgt))

    _, side = _kernels.dinic_maxflow(
        first,
        np.array(eto, dtype=np.int64),
        np.array(enext, dtype=np.int64),
        np.array(cap, dtype=np.float64),
        s, t,
    )
    return np.asarray(side[:k], dtype=bool)


def energy(sp_labels: np.ndarray, problem: EnergyProblem) -> float:
    """Recompute the objective of a labeling for audit."""
    lab = np.asarray(sp_labels, dtype=bool)
    total = float(problem.unary[lab, 0].sum() + problem.unary[~lab, 1].sum())
    if len(problem.edges):
        cut = lab[problem.edges[:, 0]] != lab[problem.edges[:, 1]]
        total += float(problem.weights[cut].sum())
    return total


def energy_of(image: Image, sp: SuperpixelMap, bundle: GuidanceBundle,
              sp_labels: np.ndarray, params: SegmenterParams | None = None) -> float:
    return energy(sp_labels, build_problem(image, sp, bundle, params))


def segment(image: Image, sp: SuperpixelMap, bundle: GuidanceBundle,
            params: SegmenterParams | None = None,
            context: BackendContext | None = None) -> SegmentationResult:
    """Reference graph-cut backend: globally optimal labeling of the energy."""
    if image.pixels.shape[:2] != sp.labels.shape:
        raise ValueError("image and superpixel raster extents differ")
    problem = build_problem(image, sp, bundle, params)
    sp_labels = solve_problem(problem)
    mask = BinaryMask(sp_labels[sp.labels])
    return SegmentationResult(mask=mask, sp_labels=sp_labels,
                              energy=energy(sp_labels, problem),
                              warnings=problem.warnings)


def _member_pixel_colors(image: Image, sp: SuperpixelMap, ids,
                         max_samples: int = 20000) -> np.ndarray:
    if not len(ids):
        return np.empty((0, 3))
    member = np.isin(sp.labels, np.asarray(ids))
    colors = image.pixels[member].astype(np.float64) / 255.0
    if len(colors) > max_samples:
        step = int(np.ceil(len(colors) / max_samples))
        colors = colors[::step]
    return colors


# ---------------------------------------------------------------------------
# backend registry

_REGISTRY: dict[str, object] = {}


def register_backend(name: str, fn) -> None:
    _REGISTRY[name] = fn


def resolve_backend(name: str):
    """Look up a segmentation backend. "oracle:<k>" resolves dynamically to a
    test backend that returns the ground truth once k clicks have been given."""
    if name in _REGISTRY:
        return _REGISTRY[name]
    if name.startswith("oracle:"):
        k = int(name.split(":", 1)[1])
        return _make_oracle(k)
    raise KeyError(
        f"unknown backend {name!r}; available: {sorted(_REGISTRY)} or 'oracle:<k>'")


def _make_oracle(k: int):
    def oracle(image: Image, sp: SuperpixelMap, bundle: GuidanceBundle,
               params: SegmenterParams | None = None,
               context: BackendContext | None = None) -> SegmentationResult:
        if context is None or context.gt is None:
            raise ValueError("oracle backend needs ground truth in the context")
        if context.clicks_total >= k:
            mask = context.gt
        else:
            mask = BinaryMask.empty(image.width, image.height)
        # majority vote per superpixel; the pixel mask itself is authoritative
        frac = _sp_mean(mask.bits.astype(np.float64), sp)
        return SegmentationResult(mask=mask, sp_labels=frac > 0.5, energy=None)

    return oracle


register_backend("graphcut", segment)
