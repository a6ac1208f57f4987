"""Benchmark harness: clicks-to-target protocol, encoder ablation,
mask-refinement runs, synthetic corpora and report emission.

An instance run simulates the initial click pair, segments, then loops
corrective clicks on the largest error region until the IoU threshold is
reached or the click budget (default 20, initial pair included) is spent.
Per-instance RNG streams derive from (seed, instance id), so results are
independent of execution order.
"""
from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from clickcut import guidance, imagecore, segmenter, simulator
from clickcut.guidance import BoxMode, ClickState
from clickcut.imagecore import BinaryMask, Image
from clickcut.simulator import SimulationPolicy
from clickcut.superpixels import slic


@dataclass(frozen=True)
class ManifestEntry:
    image_path: str
    mask_path: str
    instance_id: str
    initial_mask_path: str | None = None


@dataclass(frozen=True)
class DatasetManifest:
    name: str
    entries: tuple[ManifestEntry, ...]

    def __post_init__(self):
        if not self.entries:
            raise ValueError("manifest has no entries")


@dataclass(frozen=True)
class RunConfig:
    encoder: str = "sp+spbox"
    superpixels: int = 1000
    compactness: float = 10.0
    iou_threshold: float = 0.90
    max_clicks: int = 20
    backend: str = "graphcut"
    seed: int = 0
    box_mode: BoxMode = "center_corner"
    params: segmenter.SegmenterParams = field(default_factory=segmenter.SegmenterParams)

    def __post_init__(self):
        if not (0 < self.iou_threshold <= 1):
            raise ValueError("iou_threshold must be in (0, 1]")
        if self.max_clicks < 2:
            raise ValueError("max_clicks must allow at least the initial pair")
        if self.encoder not in segmenter.ENCODERS:
            raise ValueError(f"unknown encoder {self.encoder!r}")


@dataclass(frozen=True)
class InstanceRecord:
    instance_id: str
    clicks_used: int
    final_iou: float
    trace: tuple[float, ...]  # trace[i] = IoU after i+1 clicks (index 0 is the
    # lone first click, before any segmentation: 0.0 by convention)
    skipped: bool = False
    skip_reason: str = ""
    first_negative_fallback: bool = False


@dataclass(frozen=True)
class RunReport:
    dataset: str
    config: RunConfig
    records: tuple[InstanceRecord, ...]

    @property
    def evaluated(self) -> tuple[InstanceRecord, ...]:
        return tuple(r for r in self.records if not r.skipped)

    @property
    def mean_clicks(self) -> float:
        done = self.evaluated
        if not done:
            return float("nan")
        return sum(r.clicks_used for r in done) / len(done)

    def miou_at(self, k: int) -> float:
        """Mean IoU after k clicks; instances that stopped early hold their
        final value."""
        done = self.evaluated
        if not done:
            return float("nan")
        vals = [r.trace[min(k, len(r.trace)) - 1] for r in done]
        return float(np.mean(vals))

    def miou_curve(self) -> dict[int, float]:
        return {k: self.miou_at(k) for k in range(2, self.config.max_clicks + 1)}

    def to_json(self) -> str:
        payload = {
            "dataset": self.dataset,
            "config": _config_dict(self.config),
            "mean_clicks": self.mean_clicks,
            "miou_curve": {str(k): v for k, v in self.miou_curve().items()},
            "records": [asdict(r) for r in self.records],
        }
        return json.dumps(payload, indent=2)

    @classmethod
    def from_json(cls, text: str) -> "RunReport":
        payload = json.loads(text)
        cfg = payload["config"]
        params = segmenter.SegmenterParams.from_dict(cfg.pop("params"))
        config = RunConfig(params=params, **cfg)
        records = tuple(
            InstanceRecord(**{**r, "trace": tuple(r["trace"])}) for r in payload["records"]
        )
        return cls(dataset=payload["dataset"], config=config, records=records)

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf)
        writer.writerow(["instance_id", "clicks_used", "final_iou", "skipped",
                         "skip_reason", "trace"])
        for r in self.records:
            writer.writerow([r.instance_id, r.clicks_used, f"{r.final_iou:.6f}",
                             int(r.skipped), r.skip_reason,
                             ";".join(f"{v:.6f}" for v in r.trace)])
        return buf.getvalue()


def _config_dict(config: RunConfig) -> dict:
    d = asdict(config)
    return d


def load_manifest(path) -> DatasetManifest:
    """Tab-separated manifest: image, mask, instance id, optional initial mask."""
    path = Path(path)
    entries = []
    for lineno, line in enumerate(path.read_text().splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split("\t")
        if len(parts) < 3:
            raise ValueError(f"{path}:{lineno}: expected at least 3 tab-separated fields")
        entry = ManifestEntry(
            image_path=str((path.parent / parts[0])),
            mask_path=str((path.parent / parts[1])),
            instance_id=parts[2],
            initial_mask_path=str(path.parent / parts[3]) if len(parts) > 3 and parts[3] else None,
        )
        for p in (entry.image_path, entry.mask_path, entry.initial_mask_path):
            if p is not None and not Path(p).exists():
                raise FileNotFoundError(f"{path}:{lineno}: missing file {p}")
        entries.append(entry)
    return DatasetManifest(name=path.stem, entries=tuple(entries))


def save_manifest(manifest_path, entries) -> None:
    manifest_path = Path(manifest_path)
    lines = []
    for e in entries:
        rel = [Path(e.image_path).name, Path(e.mask_path).name, e.instance_id]
        if e.initial_mask_path:
            rel.append(Path(e.initial_mask_path).name)
        lines.append("\t".join(rel))
    manifest_path.write_text("\n".join(lines) + "\n")


# ---------------------------------------------------------------------------
# the clicks@mIoU protocol

def clicks_to_target(entry: ManifestEntry, config: RunConfig,
                     image: Image | None = None,
                     gt: BinaryMask | None = None) -> InstanceRecord:
    """Clicks needed for one instance to reach the IoU threshold (capped)."""
    image = image if image is not None else imagecore.load_image(entry.image_path)
    gt = gt if gt is not None else imagecore.load_mask(entry.mask_path)
    if not gt.bits.any():
        return _skipped(entry, "empty ground-truth mask")
    if gt.bits.all():
        return _skipped(entry, "ground truth covers the whole image")

    backend = segmenter.resolve_backend(config.backend)
    policy = SimulationPolicy(seed=config.seed)
    rng = simulator.make_rng(policy, entry.instance_id)
    sp = slic(image, config.superpixels, config.compactness)

    try:
        center = simulator.simulate_center_click(gt, policy, rng)
        first_neg = simulator.simulate_first_negative(gt, center, sp, policy, rng)
    except ValueError as exc:
        return _skipped(entry, f"simulation failed: {exc}")

    state = ClickState(clicks=(center, first_neg.click), box=first_neg.box,
                       strict_validation=False)
    trace = [0.0]  # after the lone first click there is no mask yet
    clicks = 2
    while True:
        bundle = segmenter.build_bundle(sp, state, config.encoder)
        result = backend(image, sp, bundle, config.params,
                         segmenter.BackendContext(clicks_total=clicks, gt=gt))
        score = imagecore.iou(result.mask, gt)
        trace.append(score)
        if score >= config.iou_threshold or clicks >= config.max_clicks:
            break
        click = simulator.next_eval_click(result.mask, gt, state, sp)
        state = guidance.update_box(state, sp, click)
        clicks += 1
    return InstanceRecord(instance_id=entry.instance_id, clicks_used=clicks,
                          final_iou=trace[-1], trace=tuple(trace),
                          first_negative_fallback=first_neg.fallback)


def _skipped(entry: ManifestEntry, reason: str) -> InstanceRecord:
    return InstanceRecord(instance_id=entry.instance_id, clicks_used=0,
                          final_iou=0.0, trace=(), skipped=True, skip_reason=reason)


def run_benchmark(manifest: DatasetManifest, config: RunConfig) -> RunReport:
    records = tuple(clicks_to_target(e, config) for e in manifest.entries)
    return RunReport(dataset=manifest.name, config=config, records=records)


@dataclass(frozen=True)
class AblationRow:
    encoder: str
    mean_clicks: float
    mean_final_iou: float
    report: RunReport


def run_ablation(manifest: DatasetManifest, configs) -> list[AblationRow]:
    rows = []
    for config in configs:
        report = run_benchmark(manifest, config)
        done = report.evaluated
        mean_iou = float(np.mean([r.final_iou for r in done])) if done else float("nan")
        rows.append(AblationRow(encoder=config.encoder, mean_clicks=report.mean_clicks,
                                mean_final_iou=mean_iou, report=report))
    return rows


def ablation_json(rows) -> str:
    return json.dumps([
        {"encoder": r.encoder, "mean_clicks": r.mean_clicks,
         "mean_final_iou": r.mean_final_iou}
        for r in rows
    ], indent=2)


# ---------------------------------------------------------------------------
# mask refinement (initialize the box from an existing mask)

@dataclass(frozen=True)
class RefinementRecord:
    instance_id: str
    initial_iou: float
    miou_at_budget: dict[int, float]


def refine_from_mask(entry: ManifestEntry, config: RunConfig,
                     budgets: tuple[int, ...] = (1, 4, 10)) -> RefinementRecord:
    """Improve an existing mask with corrective clicks.

    The boxed superpixel set starts from the superpixels the initial mask
    touches; click distance channels start at the constant ceiling and follow
    the corrective clicks as they arrive.
    """
    if entry.initial_mask_path is None:
        raise ValueError(f"instance {entry.instance_id} has no initial mask")
    image = imagecore.load_image(entry.image_path)
    gt = imagecore.load_mask(entry.mask_path)
    initial = imagecore.load_mask(entry.initial_mask_path)
    if initial.extent != gt.extent:
        raise ValueError("initial mask extent does not match ground truth")

    backend = segmenter.resolve_backend(config.backend)
    sp = slic(image, config.superpixels, config.compactness)
    pred = initial
    initial_iou = imagecore.iou(pred, gt)
    budgets = tuple(sorted(budgets))
    scores: dict[int, float] = {}
    state = _state_from_mask(initial, sp)
    current = initial_iou
    for i in range(1, budgets[-1] + 1):
        if pred == gt:
            scores[i] = current
            continue
        click = simulator.next_eval_click(pred, gt, state, sp)
        state = guidance.update_box(state, sp, click)
        bundle = segmenter.build_bundle(sp, state, config.encoder)
        result = backend(image, sp, bundle, config.params,
                         segmenter.BackendContext(clicks_total=len(state.clicks), gt=gt))
        pred = result.mask
        current = imagecore.iou(pred, gt)
        scores[i] = current
    return RefinementRecord(instance_id=entry.instance_id, initial_iou=initial_iou,
                            miou_at_budget={b: scores[b] for b in budgets})


def _state_from_mask(initial: BinaryMask, sp) -> ClickState:
    touched = frozenset(int(v) for v in np.unique(sp.labels[initial.bits]))
    if initial.bits.any():
        p0, p1 = imagecore.mask_bbox(initial)
    else:
        p0 = imagecore.PixelPoint(0, 0)
        p1 = imagecore.PixelPoint(sp.width - 1, sp.height - 1)
    box = guidance.BoxPrior(e0=p0, e1=p1, boxed_set=touched, mode="center_corner")
    return ClickState(clicks=(), box=box, strict_validation=False)


def run_refinement(manifest: DatasetManifest, config: RunConfig,
                   budgets: tuple[int, ...] = (1, 4, 10)) -> dict:
    records = [refine_from_mask(e, config, budgets) for e in manifest.entries
               if e.initial_mask_path is not None]
    if not records:
        raise ValueError("no manifest entries carry an initial mask")
    table = {
        "backend": config.backend,
        "initial_miou": float(np.mean([r.initial_iou for r in records])),
        "miou_at_budget": {
            str(b): float(np.mean([r.miou_at_budget[b] for r in records])) for b in budgets
        },
        "records": [
            {"instance_id": r.instance_id, "initial_iou": r.initial_iou,
             "miou_at_budget": {str(k): v for k, v in r.miou_at_budget.items()}}
            for r in records
        ],
    }
    return table


# ---------------------------------------------------------------------------
# synthetic corpus: colour blobs with look-alike distractors on noisy ground

def synth_corpus(out_dir, n: int, seed: int, size: int = 112,
                 distractors: int = 3, noise: float = 9.0,
                 with_initial_masks: bool = False) -> DatasetManifest:
    """Generate n images, one target blob each plus colour look-alike
    distractor blobs (outside the mask), with exact instance masks.
    Deterministic per seed, including the encoded bytes."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(seed)
    entries = []
    for i in range(n):
        image, mask = _synth_instance(rng, size, distractors, noise)
        img_path = out_dir / f"img_{i:03d}.png"
        mask_path = out_dir / f"mask_{i:03d}.png"
        imagecore.save_image(image, img_path)
        imagecore.save_mask(mask, mask_path)
        init_path = None
        if with_initial_masks:
            init_path = out_dir / f"init_{i:03d}.png"
            imagecore.save_mask(_degrade_mask(mask, rng), init_path)
        entries.append(ManifestEntry(image_path=str(img_path), mask_path=str(mask_path),
                                     instance_id=f"synth-{i:03d}",
                                     initial_mask_path=str(init_path) if init_path else None))
    save_manifest(out_dir / "manifest.tsv", entries)
    return DatasetManifest(name=f"synth-{seed}-{n}", entries=tuple(entries))


def _blob_mask(size: int, cx: float, cy: float, r0: float, wobble: float,
               lobes: int, phase: float) -> np.ndarray:
    ys, xs = np.indices((size, size))
    dx = xs - cx
    dy = ys - cy
    ang = np.arctan2(dy, dx)
    radius = r0 * (1.0 + wobble * np.sin(lobes * ang + phase))
    return dx * dx + dy * dy <= radius * radius


def _synth_instance(rng: np.random.Generator, size: int, distractors: int,
                    noise: float) -> tuple[Image, BinaryMask]:
    bg_color = rng.uniform(40, 210, size=3)
    target_color = _distinct_color(rng, [bg_color], min_dist=90.0)

    r0 = rng.uniform(size * 0.14, size * 0.24)
    cx = rng.uniform(size * 0.3, size * 0.7)
    cy = rng.uniform(size * 0.3, size * 0.7)
    mask = _blob_mask(size, cx, cy, r0, rng.uniform(0.05, 0.22),
                      int(rng.integers(3, 6)), rng.uniform(0, 2 * math.pi))

    img = np.empty((size, size, 3))
    img[:] = bg_color
    img[mask] = target_color

    # look-alike distractors: same colour family, never touching the target
    placed = 0
    guard = 0
    occupied = mask.copy()
    while placed < distractors and guard < 200:
        guard += 1
        dr = rng.uniform(size * 0.05, size * 0.1)
        dcx = rng.uniform(dr + 1, size - dr - 1)
        dcy = rng.uniform(dr + 1, size - dr - 1)
        cand = _blob_mask(size, dcx, dcy, dr, rng.uniform(0.0, 0.15),
                          int(rng.integers(3, 6)), rng.uniform(0, 2 * math.pi))
        grown = np.zeros_like(cand)
        pad = 3
        ys, xs = np.nonzero(cand)
        if len(ys) == 0:
            continue
        y0, y1 = max(ys.min() - pad, 0), min(ys.max() + pad + 1, size)
        x0, x1 = max(xs.min() - pad, 0), min(xs.max() + pad + 1, size)
        grown[y0:y1, x0:x1] = True
        if (grown & occupied).any():
            continue
        jitter = rng.normal(0.0, 10.0, size=3)
        img[cand] = np.clip(target_color + jitter, 0, 255)
        occupied |= cand
        placed += 1

    img = img + rng.normal(0.0, noise, size=img.shape)
    image = Image(np.clip(img, 0, 255).astype(np.uint8))
    return image, BinaryMask(mask)


def _distinct_color(rng: np.random.Generator, existing, min_dist: float) -> np.ndarray:
    for _ in range(100):
        c = rng.uniform(20, 235, size=3)
        if all(np.linalg.norm(c - e) >= min_dist for e in existing):
            return c
    return rng.uniform(20, 235, size=3)


def _degrade_mask(mask: BinaryMask, rng: np.random.Generator) -> BinaryMask:
    """Shifted/eroded copy of a mask, standing in for a poor upstream result."""
    shift_x = int(rng.integers(-6, 7))
    shift_y = int(rng.integers(-6, 7))
    rolled = np.roll(np.roll(mask.bits, shift_y, axis=0), shift_x, axis=1)
    if shift_y > 0:
        rolled[:shift_y, :] = False
    elif shift_y < 0:
        rolled[shift_y:, :] = False
    if shift_x > 0:
        rolled[:, :shift_x] = False
    elif shift_x < 0:
        rolled[:, shift_x:] = False
    return BinaryMask(rolled)
