"""Synthetic detection scenes: coloured shapes on a textured background."""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

NUM_CLASSES = 4
CLASS_NAMES = ("red_box", "green_disc", "blue_box", "yellow_disc")
CLASS_COLORS = np.array([
    [0.85, 0.18, 0.15],
    [0.20, 0.75, 0.25],
    [0.18, 0.30, 0.85],
    [0.90, 0.80, 0.20],
])
CLASS_SHAPES = ("rect", "ellipse", "rect", "ellipse")
DISTRACTOR_COLORS = np.array([
    [0.55, 0.40, 0.55],
    [0.35, 0.55, 0.55],
    [0.60, 0.55, 0.40],
])


@dataclass(frozen=True)
class SceneSpec:
    """Generation parameters; the defaults are the benchmark setting."""

    size: int = 96
    min_objects: int = 1
    max_objects: int = 3
    min_side: int = 16
    max_side: int = 44
    max_aspect: float = 1.6
    max_distractors: int = 2
    gap: int = 2
    min_cells: int = 4
    max_cells: int = 10
    cell_contrast: float = 0.12
    background_noise: float = 0.03
    object_noise: float = 0.03
    color_jitter: float = 0.05
    distinct_classes: bool = True  # at most one instance per class


@dataclass(frozen=True)
class SyntheticScene:
    image_id: str
    image: np.ndarray = field(repr=False)
    gt_boxes: np.ndarray = field(repr=False)    # (n, 4) xyxy, evaluation only
    gt_classes: np.ndarray = field(repr=False)  # (n,) in 1..C

    @property
    def labels(self) -> np.ndarray:
        """Image-level indicator over the ``C`` foreground classes."""
        ind = np.zeros(NUM_CLASSES)
        ind[self.gt_classes - 1] = 1.0
        return ind

    @property
    def width(self) -> int:
        return self.image.shape[1]

    @property
    def height(self) -> int:
        return self.image.shape[0]


def _disjoint(box, taken, gap) -> bool:
    x1, y1, x2, y2 = box
    for a in taken:
        if not (x2 + gap <= a[0] or a[2] + gap <= x1 or y2 + gap <= a[1] or a[3] + gap <= y1):
            return False
    return True


def _place(rng, spec: SceneSpec, taken, min_side, max_side):
    for _ in range(200):
        w = int(rng.integers(min_side, max_side + 1))
        aspect = float(np.exp(rng.uniform(-np.log(spec.max_aspect), np.log(spec.max_aspect))))
        h = int(np.clip(round(w * aspect), min_side, max_side))
        x1 = int(rng.integers(1, spec.size - w))
        y1 = int(rng.integers(1, spec.size - h))
        box = (x1, y1, x1 + w, y1 + h)
        if _disjoint(box, taken, spec.gap):
            return box
    return None


def _shape_mask(shape: str, box, size: int) -> np.ndarray:
    x1, y1, x2, y2 = box
    mask = np.zeros((size, size), dtype=bool)
    if shape == "rect":
        mask[y1:y2, x1:x2] = True
        return mask
    yy, xx = np.mgrid[0:size, 0:size] + 0.5
    cx, cy = 0.5 * (x1 + x2), 0.5 * (y1 + y2)
    rx, ry = 0.5 * (x2 - x1), 0.5 * (y2 - y1)
    mask[((xx - cx) / rx) ** 2 + ((yy - cy) / ry) ** 2 <= 1.0] = True
    return mask


def background(rng: np.random.Generator, spec: SceneSpec) -> np.ndarray:
    """Voronoi tessellation of grey tones plus smooth low-amplitude noise."""
    n = spec.size
    cells = int(rng.integers(spec.min_cells, spec.max_cells + 1))
    centres = rng.uniform(0, n, size=(cells, 2))
    base = rng.uniform(0.35, 0.6)
    tones = base + rng.uniform(-spec.cell_contrast, spec.cell_contrast, size=(cells, 1)) \
        + rng.uniform(-0.03, 0.03, size=(cells, 3))
    yy, xx = np.mgrid[0:n, 0:n] + 0.5
    d = (xx[..., None] - centres[:, 0]) ** 2 + (yy[..., None] - centres[:, 1]) ** 2
    img = tones[np.argmin(d, axis=-1)]
    noise = ndimage.gaussian_filter(rng.normal(0.0, 1.0, size=(n, n, 3)), sigma=(1.5, 1.5, 0))
    noise *= spec.background_noise / max(noise.std(), 1e-12)
    return np.clip(img + noise, 0.0, 1.0)


def generate_scene(rng: np.random.Generator, image_id: str,
                   spec: SceneSpec = SceneSpec()) -> SyntheticScene:
    n = spec.size
    img = background(rng, spec)

    taken = []
    for _ in range(int(rng.integers(0, spec.max_distractors + 1))):
        box = _place(rng, spec, taken, 10, 30)
        if box is None:
            continue
        taken.append(box)
        color = DISTRACTOR_COLORS[rng.integers(len(DISTRACTOR_COLORS))]
        mask = _shape_mask("rect" if rng.random() < 0.5 else "ellipse", box, n)
        img[mask] = np.clip(color + rng.normal(0, spec.object_noise, size=(mask.sum(), 3)), 0, 1)

    gt_boxes, gt_classes = [], []
    n_obj = int(rng.integers(spec.min_objects, spec.max_objects + 1))
    if spec.distinct_classes:
        classes = rng.permutation(NUM_CLASSES)[:n_obj].tolist()
    else:
        classes = rng.integers(NUM_CLASSES, size=n_obj).tolist()
    for c in classes:
        box = _place(rng, spec, taken, spec.min_side, spec.max_side)
        if box is None:
            continue
        taken.append(box)
        color = np.clip(CLASS_COLORS[c] + rng.uniform(-spec.color_jitter, spec.color_jitter, 3), 0, 1)
        mask = _shape_mask(CLASS_SHAPES[c], box, n)
        img[mask] = np.clip(color + rng.normal(0, spec.object_noise, size=(mask.sum(), 3)), 0, 1)
        gt_boxes.append(box)
        gt_classes.append(int(c) + 1)
    if not gt_boxes:  # the first placement on an empty canvas always succeeds in practice
        raise RuntimeError(f"could not place any object in {image_id}")
    return SyntheticScene(
        image_id=image_id,
        image=img,
        gt_boxes=np.asarray(gt_boxes, dtype=np.float64),
        gt_classes=np.asarray(gt_classes, dtype=np.int64),
    )


def generate_dataset(seed: int, n_images: int, spec: SceneSpec = SceneSpec(),
                     prefix: str = "img") -> list[SyntheticScene]:
    """Deterministic list of scenes; each image draws from its own child seed."""
    if n_images < 1:
        raise ValueError("n_images must be at least 1")
    children = np.random.SeedSequence(seed).spawn(n_images)
    return [generate_scene(np.random.default_rng(ch), f"{prefix}{seed}_{i:05d}", spec)
            for i, ch in enumerate(children)]


def dataset_hash(scenes) -> str:
    h = hashlib.sha256()
    for s in scenes:
        h.update(s.image_id.encode())
        h.update(np.ascontiguousarray(s.image).tobytes())
        h.update(s.gt_boxes.tobytes())
        h.update(s.gt_classes.tobytes())
    return h.hexdigest()
