"""Named run configurations, shared-data experiment runner and result tables."""

from __future__ import annotations

import time
from dataclasses import dataclass, field

from .evaluation import Metrics, detect_all, evaluate, ground_truth
from .scenes import NUM_CLASSES, SceneSpec, dataset_hash
from .training import RunConfig, TrainResult, build_datasets, prepare_images, train

# Component ablation rows: (name, overrides of the default config).
COMPONENT_ROWS = (
    ("baseline", {"schedule": "constant", "gamma": 0.0, "use_regressor": False}),
    ("+bbox", {"schedule": "constant", "gamma": 0.0}),
    ("+bbox+bu", {"schedule": "constant", "gamma": 1.0}),
    ("+bbox+bu+decay", {"schedule": "polynomial", "gamma": 1.0}),
    ("+bbox+bu+decay-nms", {"schedule": "polynomial", "gamma": 1.0, "use_nms": False}),
)

# Schedule rows: constant levels plus each decaying family.
SCHEDULE_ROWS = (
    ("const-0.0", {"schedule": "constant", "gamma": 0.0}),
    ("const-0.5", {"schedule": "constant", "gamma": 0.5}),
    ("const-1.0", {"schedule": "constant", "gamma": 1.0}),
    ("poly-0.5", {"schedule": "polynomial", "gamma": 0.5}),
    ("poly-1.0", {"schedule": "polynomial", "gamma": 1.0}),
    ("poly-2.0", {"schedule": "polynomial", "gamma": 2.0}),
    ("cosine", {"schedule": "cosine", "gamma": 1.0}),
)


@dataclass
class PreparedData:
    train: list
    test: list
    dataset_hash: str


@dataclass
class ExperimentResult:
    name: str
    config: RunConfig
    test: Metrics
    train: Metrics
    seconds: float
    dataset_hash: str
    result: TrainResult = field(repr=False)

    @property
    def mean_ap(self) -> float:
        return self.test.mean_ap

    @property
    def corloc(self) -> float:
        return self.train.mean_corloc

    def row(self) -> dict:
        # wall time stays out of the row so ablation outputs hash-stably
        return {"name": self.name, "seed": self.config.seed, "map": self.mean_ap,
                "corloc": self.corloc, "dataset_hash": self.dataset_hash}


def _data_key(config: RunConfig) -> tuple:
    return (config.seed, config.n_train, config.n_test, config.proposal_mode)


def prepare_data(config: RunConfig, spec: SceneSpec = SceneSpec(), threads: int = 1) -> PreparedData:
    """Scenes, proposals, features and evidence for ``config``'s dataset."""
    train_scenes, test_scenes = build_datasets(config, spec)
    tr = prepare_images(train_scenes, config.evidence, config.proposal_mode, threads=threads)
    te = prepare_images(test_scenes, "none", config.proposal_mode, keep_map=False, threads=threads)
    return PreparedData(tr, te, dataset_hash(train_scenes + test_scenes))


def run_experiment(config: RunConfig, data: PreparedData | None = None, name: str = "run",
                   threads: int = 1) -> ExperimentResult:
    """Train on ``data`` (prepared on demand), score test mAP and train CorLoc."""
    if data is None:
        data = prepare_data(config, threads=threads)
    if config.uses_bottom_up and data.train[0].evidence is None:
        raise ValueError("prepared data carries no evidence but the config needs it")
    t0 = time.perf_counter()
    res = train(config, data.train)
    seconds = time.perf_counter() - t0
    test = evaluate(detect_all(res.params, data.test, config.use_regressor, config.infer_nms),
                    ground_truth(data.test), NUM_CLASSES)
    tr = evaluate(detect_all(res.params, data.train, config.use_regressor, config.infer_nms),
                  ground_truth(data.train), NUM_CLASSES)
    return ExperimentResult(name, config, test, tr, seconds, data.dataset_hash, res)


def named_configs(base: RunConfig, rows) -> list[tuple[str, RunConfig]]:
    return [(name, base.with_overrides(**over)) for name, over in rows]


@dataclass
class AblationReport:
    rows: list
    dataset_hash: str

    def table(self) -> str:
        lines = [f"{'config':<22} {'seed':>4} {'mAP':>7} {'CorLoc':>7}"]
        for r in self.rows:
            lines.append(f"{r.name:<22} {r.config.seed:>4} {100 * r.mean_ap:7.2f} {100 * r.corloc:7.2f}")
        lines.append(f"dataset {self.dataset_hash[:16]}")
        return "\n".join(lines) + "\n"

    def records(self) -> list[dict]:
        return [r.row() for r in self.rows]


def ablation_grid(configs, threads: int = 1, spec: SceneSpec = SceneSpec(),
                  progress=None) -> AblationReport:
    """Run ``(name, RunConfig)`` pairs on one shared dataset, in the given order.

    All configs must describe the same dataset (seed, sizes, proposal mode).
    Evidence is computed once when any config needs it.
    """
    configs = list(configs)
    if not configs:
        raise ValueError("empty ablation grid")
    keys = {_data_key(c) for _, c in configs}
    if len(keys) != 1:
        raise ValueError("ablation configs must share seed, dataset sizes and proposal mode")
    kinds = {c.evidence for _, c in configs if c.uses_bottom_up}
    if len(kinds) > 1:
        raise ValueError("ablation configs must share one evidence kind")
    kind = kinds.pop() if kinds else "none"
    data = prepare_data(configs[0][1].with_overrides(evidence=kind), spec, threads)
    rows = []
    for name, cfg in configs:
        rows.append(run_experiment(cfg, data, name))
        if progress is not None:
            progress(rows[-1])
    return AblationReport(rows, data.dataset_hash)
