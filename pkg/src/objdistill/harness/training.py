"""End-to-end objectness-distillation training on synthetic scenes."""

from __future__ import annotations

import hashlib
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields, replace

import numpy as np

from ..evidence import EvidenceConfig, EvidenceMap, build_evidence_map
from ..geometry import clip_boxes, decode_offsets, encode_boxes, iou_matrix
from ..losses import base_loss, base_scores, box_loss, refinement_loss, softmax, total_loss
from ..mining import MiningThresholds, mine, regression_references, with_background
from ..objectness import AlphaSchedule, alpha_at, combine, top_down_confidence
from .features import FEATURE_DIM, FeatureExtractor
from .model import ModelParams
from .proposals import propose
from .scenes import NUM_CLASSES, SceneSpec, SyntheticScene, generate_dataset

log = logging.getLogger(__name__)

# exp() guard on predicted size offsets, as in Fast R-CNN decoding
MAX_LOG_SCALE = float(np.log(1000.0 / 16.0))


class TrainingDiverged(RuntimeError):
    pass


@dataclass(frozen=True)
class RunConfig:
    """Every knob of one synthetic run. ``evidence = "none"`` disables O_bu."""

    seed: int = 0
    n_train: int = 200
    n_test: int = 100
    proposal_mode: str = "segments"
    evidence: str = "ss"
    schedule: str = "polynomial"
    gamma: float = 1.0
    steps: int = 5000
    warmup_steps: int = 500
    t_nms: float = 0.3
    t_conf: float = 0.7
    t_iou: float = 0.5
    lambda_ref: float = 1.0
    lambda_box: float = 0.3
    num_branches: int = 3
    lr: float = 0.01
    lr_decay_at: float = 0.5
    momentum: float = 0.9
    weight_decay: float = 5e-4
    init_std: float = 0.01
    reg_init_std: float = 0.001
    use_regressor: bool = True
    use_nms: bool = True
    infer_nms: float = 0.3
    log_every: int = 1

    def __post_init__(self):
        if self.evidence not in ("none", "ss", "cc", "ed", "ms", "mean"):
            raise ValueError(f"unknown evidence {self.evidence!r}")
        if self.steps < 1 or self.n_train < 1 or self.num_branches < 1:
            raise ValueError("steps, n_train and num_branches must be positive")
        AlphaSchedule(self.schedule, self.gamma, self.steps, self.warmup_steps)
        MiningThresholds(self.t_nms, self.t_conf, self.t_iou)

    @property
    def alpha_schedule(self) -> AlphaSchedule:
        return AlphaSchedule(self.schedule, self.gamma, self.steps, self.warmup_steps)

    @property
    def thresholds(self) -> MiningThresholds:
        return MiningThresholds(self.t_nms, self.t_conf, self.t_iou)

    @property
    def uses_bottom_up(self) -> bool:
        s = self.alpha_schedule
        return self.evidence != "none" and not (s.family == "constant" and s.gamma == 0.0)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, values: dict, strict: bool = True) -> "RunConfig":
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(values) - known)
        if unknown and strict:
            raise ValueError(f"unknown config keys: {', '.join(unknown)}")
        return cls(**{k: v for k, v in values.items() if k in known})

    def with_overrides(self, **kwargs) -> "RunConfig":
        return replace(self, **kwargs)


@dataclass
class PreparedImage:
    """Per-image inputs that stay fixed for a whole run."""

    scene: SyntheticScene
    boxes: np.ndarray
    features: np.ndarray
    overlaps: np.ndarray
    evidence: np.ndarray | None = None
    evidence_map: EvidenceMap | None = field(default=None, repr=False)

    @property
    def image_id(self) -> str:
        return self.scene.image_id

    def evidence_digest(self) -> str:
        if self.evidence is None:
            return ""
        return hashlib.sha256(self.evidence.tobytes()).hexdigest()


def _freeze(arr: np.ndarray) -> np.ndarray:
    arr.setflags(write=False)
    return arr


def prepare_image(scene: SyntheticScene, evidence: str = "ss", proposal_mode: str = "segments",
                  keep_map: bool = True, proposals_by_id: dict | None = None) -> PreparedImage:
    proposals = propose(scene, proposal_mode, proposals_by_id=proposals_by_id)
    boxes = proposals.boxes
    extractor = FeatureExtractor(scene.image)
    feats = _freeze(extractor(boxes))
    overlaps = _freeze(iou_matrix(boxes, boxes).astype(np.float32))
    values, emap = None, None
    if evidence != "none":
        emap = build_evidence_map(scene.image, EvidenceConfig(kind=evidence))
        values = _freeze(emap.normalized(boxes))
    return PreparedImage(scene, boxes, feats, overlaps, values, emap if keep_map else None)


def _prepare_star(args):
    return prepare_image(*args)


def prepare_images(scenes, evidence: str = "ss", proposal_mode: str = "segments",
                   keep_map: bool = True, threads: int = 1,
                   proposals_by_id: dict | None = None) -> list[PreparedImage]:
    """Prepare scenes, optionally across processes; order is preserved."""
    jobs = [(s, evidence, proposal_mode, keep_map, proposals_by_id) for s in scenes]
    if threads <= 1 or len(jobs) < 2:
        return [_prepare_star(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(_prepare_star, jobs, chunksize=max(1, len(jobs) // (4 * threads))))


def regressed_boxes(boxes: np.ndarray, offsets: np.ndarray, width: int, height: int) -> np.ndarray:
    t = np.array(offsets, dtype=np.float64, copy=True)
    t[:, 2:] = np.minimum(t[:, 2:], MAX_LOG_SCALE)
    return clip_boxes(decode_offsets(boxes, t), width, height)


@dataclass
class StepRecord:
    step: int
    alpha: float
    l_base: float
    l_ref: tuple
    l_box: float
    total: float
    image_id: str

    def to_dict(self) -> dict:
        return {"step": self.step, "alpha": self.alpha, "l_base": self.l_base,
                "l_ref": list(self.l_ref), "l_box": self.l_box, "total": self.total,
                "image_id": self.image_id}


@dataclass
class StepResult:
    record: StepRecord
    grads: dict
    mined: list
    weights: list


def training_step(params: ModelParams, item: PreparedImage, config: RunConfig,
                  step: int) -> StepResult:
    """Forward pass, mining, weighting and analytic gradients for one image."""
    x = item.features
    y = item.scene.labels
    thr = config.thresholds
    overlaps = item.overlaps

    xc = (x @ params.cls_w + params.cls_b).T
    xd = (x @ params.det_w + params.det_b).T
    bs = base_scores(xc, xd)
    l_base, (g_xc, g_xd) = base_loss(bs, y)

    logits = [x @ w + b for w, b in zip(params.ref_w, params.ref_b)]
    probs = [softmax(z, axis=1) for z in logits]
    offsets = x @ params.reg_w + params.reg_b

    alpha = alpha_at(config.alpha_schedule, step) if config.uses_bottom_up else 0.0
    if config.uses_bottom_up and alpha > 0.0:
        if config.use_regressor:
            moved = regressed_boxes(item.boxes, offsets, item.scene.width, item.scene.height)
            o_bu = item.evidence_map.normalized(moved)
        else:
            o_bu = item.evidence
    else:
        o_bu = np.zeros(x.shape[0])

    grads = {
        "cls_w": x.T @ g_xc.T, "cls_b": g_xc.sum(axis=1),
        "det_w": x.T @ g_xd.T, "det_b": g_xd.sum(axis=1),
    }
    prev = with_background(bs.s)
    l_ref, mined_all, weights_all = [], [], []
    for k in range(config.num_branches):
        mined = mine(prev, item.boxes, y, thr, use_nms=config.use_nms, overlaps=overlaps)
        labels = mined.one_hot()
        o_td = top_down_confidence(prev, labels)
        w = combine(o_bu, o_td, alpha)
        loss_k, g_k = refinement_loss(logits[k], labels, w)
        l_ref.append(loss_k)
        grads[f"ref{k + 1}_w"] = config.lambda_ref * (x.T @ g_k)
        grads[f"ref{k + 1}_b"] = config.lambda_ref * g_k.sum(axis=0)
        mined_all.append(mined)
        weights_all.append(w)
        prev = probs[k]

    l_box = 0.0
    g_t = np.zeros_like(offsets)
    if config.use_regressor:
        refs = regression_references(mined_all[-1], weights_all[-1], item.boxes,
                                     thr.t_iou, overlaps=overlaps)
        if refs:
            idx = np.fromiter(refs.keys(), dtype=np.int64)
            ref_idx = np.fromiter(refs.values(), dtype=np.int64)
            targets = encode_boxes(item.boxes[idx], item.boxes[ref_idx])
            l_box, g_sel = box_loss(offsets[idx], targets, weights_all[-1][idx])
            g_t[idx] = config.lambda_box * g_sel
    grads["reg_w"] = x.T @ g_t
    grads["reg_b"] = g_t.sum(axis=0)

    if not np.all(np.isfinite([l_base, *l_ref, l_box])):
        raise TrainingDiverged(f"non-finite loss at step {step + 1} on {item.image_id}")
    parts = total_loss(l_base, l_ref, l_box, config.lambda_ref, config.lambda_box)
    record = StepRecord(step + 1, float(alpha), parts.l_base, parts.l_ref, parts.l_box,
                        parts.total, item.image_id)
    return StepResult(record, grads, mined_all, weights_all)


class MomentumSGD:
    """Caffe-style SGD: ``v = mu * v - lr * (g + wd * w)``; no decay on biases."""

    def __init__(self, params: ModelParams, lr: float, momentum: float, weight_decay: float):
        self.lr = lr
        self.momentum = momentum
        self.weight_decay = weight_decay
        self.velocity = {k: np.zeros_like(v) for k, v in params.named().items()}

    def step(self, params: ModelParams, grads: dict, lr: float | None = None) -> None:
        lr = self.lr if lr is None else lr
        for name, value in params.named().items():
            g = grads[name]
            if name.endswith("_w"):
                g = g + self.weight_decay * value
            v = self.velocity[name]
            v *= self.momentum
            v -= lr * g
            value += v


@dataclass
class TrainResult:
    params: ModelParams
    log: list
    config: RunConfig


def learning_rate(config: RunConfig, step: int) -> float:
    return config.lr * (0.1 if step >= int(config.lr_decay_at * config.steps) else 1.0)


def train(config: RunConfig, prepared: list[PreparedImage],
          params: ModelParams | None = None) -> TrainResult:
    """Run ``config.steps`` single-image SGD steps over ``prepared``.

    Images are visited in a fresh permutation each epoch; the permutation
    and initial weights derive from ``config.seed`` only.
    """
    if not prepared:
        raise ValueError("no training images")
    ss = np.random.SeedSequence([config.seed, 1])
    init_rng, order_rng = (np.random.default_rng(s) for s in ss.spawn(2))
    if params is None:
        params = ModelParams.initialize(init_rng, prepared[0].features.shape[1], NUM_CLASSES,
                                        config.num_branches, config.init_std, config.reg_init_std)
    opt = MomentumSGD(params, config.lr, config.momentum, config.weight_decay)
    records = []
    order = np.empty(0, dtype=np.int64)
    for step in range(config.steps):
        pos = step % len(prepared)
        if pos == 0:
            order = order_rng.permutation(len(prepared))
        res = training_step(params, prepared[order[pos]], config, step)
        opt.step(params, res.grads, learning_rate(config, step))
        if (step + 1) % config.log_every == 0 or step == 0:
            records.append(res.record)
    return TrainResult(params, records, config)


def build_datasets(config: RunConfig, spec: SceneSpec = SceneSpec()):
    """Train and test scenes drawn from disjoint streams of ``config.seed``."""
    train_scenes = generate_dataset(config.seed, config.n_train, spec, prefix="train")
    test_scenes = generate_dataset(config.seed + 100_003, config.n_test, spec, prefix="test") \
        if config.n_test > 0 else []
    return train_scenes, test_scenes


__all__ = [
    "FEATURE_DIM", "PreparedImage", "RunConfig", "TrainResult", "TrainingDiverged",
    "build_datasets", "learning_rate", "prepare_image", "prepare_images",
    "regressed_boxes", "train", "training_step",
]
