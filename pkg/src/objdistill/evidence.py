"""Bottom-up objectness evidences scored per proposal.

Four cues are supported, each built once per image as an immutable map
backed by integral images so any number of boxes can be scored in O(1)
lookups per box (per segment / colour bin for SS and CC):

* ``ss``: superpixel straddling, ``1 - sum_s min(|s \\ w|, |s & w|) / |w|``.
* ``cc``: chi-square colour contrast between a box and its surround.
* ``ed``: edge density in the inner ring of a box.
* ``ms``: multi-scale spectral-residual saliency.

Boxes are rounded to the pixel grid and clipped to the raster first; boxes
that collapse under clipping score 0.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from .geometry import ProposalSet, as_box_array, to_pixel_rects
from .segmentation import SuperpixelMap, as_image, segment

EVIDENCE_KINDS = ("ss", "cc", "ed", "ms", "mean")
SALIENCY_SCALES = (16, 24, 32, 48, 64)
COLOR_BINS = 8
EDGE_PERCENTILE = 90.0


@dataclass(frozen=True)
class EvidenceConfig:
    theta_ms: float = 0.2
    theta_cc: float = 2.0
    theta_ed: float = 2.0
    ss_sigma: float = 0.8
    ss_k: float = 300.0
    ss_min_size: int = 20
    kind: str = "ss"

    def __post_init__(self):
        if self.kind not in EVIDENCE_KINDS:
            raise ValueError(f"unknown evidence kind {self.kind!r}; expected one of {EVIDENCE_KINDS}")
        if not self.theta_cc > 1:
            raise ValueError("theta_cc must exceed 1")
        if not self.theta_ed > 1:
            raise ValueError("theta_ed must exceed 1")
        if not 0 < self.theta_ms < 1:
            raise ValueError("theta_ms must lie in (0, 1)")


@dataclass(frozen=True)
class EvidenceReport:
    image_id: str
    kind: str
    raw: np.ndarray = field(repr=False)
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        for name in ("raw", "values"):
            arr = np.asarray(getattr(self, name), dtype=np.float64).copy()
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        if self.raw.shape != self.values.shape:
            raise ValueError("raw and normalized values differ in length")
        if self.values.size and (self.values.min() < 0.0 or self.values.max() > 1.0):
            raise ValueError("normalized evidence left [0, 1]")

    def __len__(self) -> int:
        return self.values.size


def minmax_normalize(values) -> np.ndarray:
    """Rescale to [0, 1]; a constant vector maps to all zeros."""
    v = np.asarray(values, dtype=np.float64)
    if v.size == 0:
        return v.copy()
    lo, hi = v.min(), v.max()
    if hi <= lo:
        return np.zeros_like(v)
    return np.clip((v - lo) / (hi - lo), 0.0, 1.0)


def integral_image(stack: np.ndarray) -> np.ndarray:
    """Zero-padded 2-D cumulative sums over the last two axes.

    Counts are stored in the narrowest unsigned type that holds the total.
    """
    stack = np.asarray(stack)
    shape = stack.shape[:-2] + (stack.shape[-2] + 1, stack.shape[-1] + 1)
    if stack.dtype.kind in "biu":
        total = stack.shape[-2] * stack.shape[-1] * max(1, int(stack.max(initial=0)))
        dtype = np.uint16 if total < 2 ** 16 else np.int64
    else:
        dtype = np.float64
    out = np.zeros(shape, dtype=dtype)
    out[..., 1:, 1:] = np.cumsum(np.cumsum(stack, axis=-2, dtype=np.float64 if dtype == np.float64
                                           else np.int64), axis=-1)
    return out


def rect_sums(integral: np.ndarray, rects: np.ndarray) -> np.ndarray:
    """Sums over ``[x1, x2) x [y1, y2)`` rects; shape ``integral.shape[:-2] + (N,)``.

    Empty or inverted rects sum to zero.
    """
    x1, y1, x2, y2 = (rects[:, i] for i in range(4))
    x2 = np.maximum(x1, x2)
    y2 = np.maximum(y1, y2)
    ii = integral.astype(np.int64) if integral.dtype == np.uint16 else integral
    return ii[..., y2, x2] - ii[..., y1, x2] - ii[..., y2, x1] + ii[..., y1, x1]


def rect_area(rects: np.ndarray) -> np.ndarray:
    return (np.clip(rects[:, 2] - rects[:, 0], 0, None)
            * np.clip(rects[:, 3] - rects[:, 1], 0, None))


def scaled_rects(rects: np.ndarray, factor: float, width: int, height: int) -> np.ndarray:
    """Rescale integer rects about their centres by ``factor`` per side, then re-grid."""
    r = rects.astype(np.float64)
    cx = 0.5 * (r[:, 0] + r[:, 2])
    cy = 0.5 * (r[:, 1] + r[:, 3])
    hw = 0.5 * (r[:, 2] - r[:, 0]) * factor
    hh = 0.5 * (r[:, 3] - r[:, 1]) * factor
    scaled = np.stack([cx - hw, cy - hh, cx + hw, cy + hh], axis=1)
    return to_pixel_rects(scaled, width, height)


class EvidenceMap:
    """Per-image scoring structure; subclasses implement :meth:`raw`."""

    kind = ""
    normalized_by_default = True

    def __init__(self, width: int, height: int):
        self.width = width
        self.height = height

    def rects(self, boxes) -> np.ndarray:
        return to_pixel_rects(as_box_array(boxes), self.width, self.height)

    def raw(self, boxes) -> np.ndarray:
        raise NotImplementedError

    def normalized(self, boxes) -> np.ndarray:
        raw = self.raw(boxes)
        return minmax_normalize(raw) if self.normalized_by_default else raw

    def report(self, proposals: ProposalSet) -> EvidenceReport:
        raw = self.raw(proposals.boxes)
        values = minmax_normalize(raw) if self.normalized_by_default else raw
        return EvidenceReport(proposals.image_id, self.kind, raw, values)


class SuperpixelStraddling(EvidenceMap):
    kind = "ss"
    normalized_by_default = False

    def __init__(self, spmap: SuperpixelMap):
        super().__init__(spmap.width, spmap.height)
        self.spmap = spmap
        self.sizes = spmap.sizes.astype(np.int64)
        onehot = spmap.labels[None, :, :] == np.arange(spmap.count)[:, None, None]
        self.integral = integral_image(onehot.astype(np.uint8))

    def raw(self, boxes) -> np.ndarray:
        rects = self.rects(boxes)
        area = rect_area(rects)
        inside = rect_sums(self.integral, rects)  # (S, N)
        straddle = np.minimum(inside, self.sizes[:, None] - inside).sum(axis=0)
        out = np.zeros(rects.shape[0])
        ok = area > 0
        out[ok] = 1.0 - straddle[ok] / area[ok]
        if out.size and (out.min() < 0.0 or out.max() > 1.0):
            raise AssertionError("superpixel straddling left [0, 1]")
        return out


def color_bin_codes(img: np.ndarray, bins: int = COLOR_BINS) -> np.ndarray:
    q = np.minimum((img * bins).astype(np.int64), bins - 1)
    return (q[..., 0] * bins + q[..., 1]) * bins + q[..., 2]


def chi_square(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Half chi-square distance along the last axis, skipping empty bins."""
    s = a + b
    d = (a - b) ** 2
    with np.errstate(invalid="ignore", divide="ignore"):
        terms = np.where(s > 0, d / np.where(s > 0, s, 1.0), 0.0)
    return 0.5 * terms.sum(axis=-1)


class ColorContrast(EvidenceMap):
    kind = "cc"

    def __init__(self, img, theta: float = 2.0):
        if not theta > 1:
            raise ValueError("theta_cc must exceed 1")
        arr = as_image(img)
        super().__init__(arr.shape[1], arr.shape[0])
        self.theta = theta
        codes = color_bin_codes(arr)
        present, compact = np.unique(codes, return_inverse=True)
        compact = compact.reshape(codes.shape)
        self.bins = present
        onehot = compact[None, :, :] == np.arange(present.size)[:, None, None]
        self.integral = integral_image(onehot.astype(np.uint8))

    def surround_rects(self, rects: np.ndarray) -> np.ndarray:
        return scaled_rects(rects, math.sqrt(self.theta), self.width, self.height)

    def raw(self, boxes) -> np.ndarray:
        rects = self.rects(boxes)
        outer = self.surround_rects(rects)
        inner_counts = rect_sums(self.integral, rects).T.astype(np.float64)  # (N, B)
        surr_counts = rect_sums(self.integral, outer).T.astype(np.float64) - inner_counts
        n_in = inner_counts.sum(axis=1)
        n_sur = surr_counts.sum(axis=1)
        out = np.zeros(rects.shape[0])
        ok = (n_in > 0) & (n_sur > 0)
        if ok.any():
            h_in = inner_counts[ok] / n_in[ok, None]
            h_sur = surr_counts[ok] / n_sur[ok, None]
            out[ok] = chi_square(h_in, h_sur)
        return out


def sobel_magnitude(img: np.ndarray) -> np.ndarray:
    gray = img.mean(axis=2)
    gx = ndimage.sobel(gray, axis=1, mode="reflect")
    gy = ndimage.sobel(gray, axis=0, mode="reflect")
    return np.hypot(gx, gy)


def edge_map(img, percentile: float = EDGE_PERCENTILE) -> np.ndarray:
    """Binary edges: Sobel magnitude at or above the per-image percentile, and nonzero."""
    arr = as_image(img)
    mag = sobel_magnitude(arr)
    mag[mag < 1e-12] = 0.0
    thr = np.percentile(mag, percentile)
    return (mag >= thr) & (mag > 0)


class EdgeDensity(EvidenceMap):
    kind = "ed"

    def __init__(self, img=None, theta: float = 2.0, edges: np.ndarray | None = None):
        if not theta > 1:
            raise ValueError("theta_ed must exceed 1")
        if edges is None:
            edges = edge_map(img)
        edges = np.asarray(edges, dtype=bool)
        super().__init__(edges.shape[1], edges.shape[0])
        self.theta = theta
        self.edges = edges
        self.integral = integral_image(edges.astype(np.uint8))

    def inner_rects(self, rects: np.ndarray) -> np.ndarray:
        return scaled_rects(rects, 1.0 / math.sqrt(self.theta), self.width, self.height)

    def ring_perimeter(self, rects: np.ndarray, inner: np.ndarray) -> np.ndarray:
        """Boundary length of the ring: outer plus inner rectangle perimeters."""
        def perim(r):
            return 2 * (np.clip(r[:, 2] - r[:, 0], 0, None) + np.clip(r[:, 3] - r[:, 1], 0, None))
        return perim(rects) + np.where(rect_area(inner) > 0, perim(inner), 0)

    def raw(self, boxes) -> np.ndarray:
        rects = self.rects(boxes)
        inner = self.inner_rects(rects)
        count = rect_sums(self.integral, rects) - rect_sums(self.integral, inner)
        ring_area = rect_area(rects) - rect_area(inner)
        perim = self.ring_perimeter(rects, inner)
        out = np.zeros(rects.shape[0])
        ok = ring_area > 0
        out[ok] = count[ok] / perim[ok]
        return out


def _resize(arr: np.ndarray, shape: tuple[int, int]) -> np.ndarray:
    if arr.shape == shape:
        return arr.copy()
    factors = (shape[0] / arr.shape[0], shape[1] / arr.shape[1])
    out = ndimage.zoom(arr, factors, order=1, mode="nearest")
    if out.shape != shape:  # guard against zoom's rounding of the output size
        out = out[:shape[0], :shape[1]]
        out = np.pad(out, ((0, shape[0] - out.shape[0]), (0, shape[1] - out.shape[1])), mode="edge")
    return out


def spectral_residual(gray: np.ndarray) -> np.ndarray:
    """Spectral-residual saliency of a single-channel image, min-max scaled."""
    if np.ptp(gray) < 1e-12:
        return np.zeros_like(gray)
    spectrum = np.fft.fft2(gray)
    log_amp = np.log(np.abs(spectrum) + 1e-12)
    phase = np.angle(spectrum)
    residual = log_amp - ndimage.uniform_filter(log_amp, size=3, mode="wrap")
    sal = np.abs(np.fft.ifft2(np.exp(residual + 1j * phase))) ** 2
    sigma = max(gray.shape) / 32.0
    sal = ndimage.gaussian_filter(sal, sigma=sigma, mode="reflect")
    return minmax_normalize(sal)


def saliency_pyramid(img, scales=SALIENCY_SCALES) -> np.ndarray:
    """Per-scale saliency maps resized back to the image, shape ``(len(scales), H, W)``."""
    arr = as_image(img)
    h, w = arr.shape[:2]
    gray = arr.mean(axis=2)
    maps = []
    for s in scales:
        f = s / max(h, w)
        small_shape = (max(1, int(round(h * f))), max(1, int(round(w * f))))
        small = _resize(gray, small_shape)
        sal = _resize(spectral_residual(small), (h, w))
        maps.append(minmax_normalize(sal))
    return np.stack(maps)


class MultiScaleSaliency(EvidenceMap):
    kind = "ms"

    def __init__(self, img=None, theta: float = 0.2, scales=SALIENCY_SCALES,
                 saliency: np.ndarray | None = None):
        if not 0 < theta < 1:
            raise ValueError("theta_ms must lie in (0, 1)")
        if saliency is None:
            saliency = saliency_pyramid(img, scales)
        saliency = np.asarray(saliency, dtype=np.float64)
        super().__init__(saliency.shape[2], saliency.shape[1])
        self.theta = theta
        self.saliency = saliency
        mask = saliency >= theta
        self.sum_integral = integral_image(np.where(mask, saliency, 0.0))
        self.count_integral = integral_image(mask.astype(np.float64))

    def raw(self, boxes) -> np.ndarray:
        rects = self.rects(boxes)
        area = rect_area(rects).astype(np.float64)
        sums = rect_sums(self.sum_integral, rects)      # (S, N)
        counts = rect_sums(self.count_integral, rects)
        out = np.zeros(rects.shape[0])
        ok = area > 0
        out[ok] = (sums[:, ok] * counts[:, ok] / area[ok]).sum(axis=0)
        return out


class MeanEvidence(EvidenceMap):
    """Average of the four normalized evidences."""

    kind = "mean"

    def __init__(self, maps):
        maps = list(maps)
        super().__init__(maps[0].width, maps[0].height)
        self.maps = maps

    def raw(self, boxes) -> np.ndarray:
        return np.mean([m.normalized(boxes) for m in self.maps], axis=0)

    def normalized(self, boxes) -> np.ndarray:
        return self.raw(boxes)

    def report(self, proposals: ProposalSet) -> EvidenceReport:
        return evidence_mean([m.report(proposals) for m in self.maps])


def build_evidence_map(img, config: EvidenceConfig = EvidenceConfig(),
                       kind: str | None = None) -> EvidenceMap:
    kind = kind or config.kind
    if kind == "ss":
        return SuperpixelStraddling(segment(img, k=config.ss_k, sigma=config.ss_sigma,
                                            min_size=config.ss_min_size))
    if kind == "cc":
        return ColorContrast(img, config.theta_cc)
    if kind == "ed":
        return EdgeDensity(img, config.theta_ed)
    if kind == "ms":
        return MultiScaleSaliency(img, config.theta_ms)
    if kind == "mean":
        return MeanEvidence(build_evidence_map(img, config, k) for k in ("cc", "ed", "ms", "ss"))
    raise ValueError(f"unknown evidence kind {kind!r}")


def evidence_ss(spmap: SuperpixelMap, proposals: ProposalSet) -> EvidenceReport:
    return SuperpixelStraddling(spmap).report(proposals)


def evidence_cc(img, proposals: ProposalSet, theta_cc: float = 2.0) -> EvidenceReport:
    return ColorContrast(img, theta_cc).report(proposals)


def evidence_ed(img, proposals: ProposalSet, theta_ed: float = 2.0) -> EvidenceReport:
    return EdgeDensity(img, theta_ed).report(proposals)


def evidence_ms(img, proposals: ProposalSet, theta_ms: float = 0.2) -> EvidenceReport:
    return MultiScaleSaliency(img, theta_ms).report(proposals)


def evidence_mean(reports) -> EvidenceReport:
    """Elementwise mean of normalized reports over one proposal set."""
    reports = list(reports)
    if not reports:
        raise ValueError("no evidence reports to average")
    ids = {r.image_id for r in reports}
    sizes = {len(r) for r in reports}
    if len(ids) != 1 or len(sizes) != 1:
        raise ValueError("evidence reports cover different proposal sets")
    values = np.mean([r.values for r in reports], axis=0)
    return EvidenceReport(reports[0].image_id, "mean", values, values)


def compute_evidence(img, proposals: ProposalSet,
                     config: EvidenceConfig = EvidenceConfig()) -> EvidenceReport:
    return build_evidence_map(img, config).report(proposals)
