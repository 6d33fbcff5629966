"""``objdistill`` command line: thin adapters over the library operations.

Exit status is 0 on success, 2 on usage errors and 3 on data errors; failures
also print one JSON error record on stderr. Each command that writes a file
writes ``<output>.manifest.jsonl`` next to it, or prints the manifest to
stderr when the output goes to stdout.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import pickle
import sys
import warnings
from pathlib import Path

import numpy as np

from . import __version__
from .evidence import EVIDENCE_KINDS, EvidenceConfig, build_evidence_map
from .formats import (FormatError, canonical_line, dump_run_config, dumps_records,
                      evidence_records, file_digest, index_by_image, load_run_config,
                      mining_records, read_proposals, read_records)
from .geometry import ProposalSet, nms
from .images import read_image
from .mining import MiningThresholds, mine, regression_references
from .objectness import SCHEDULE_FAMILIES, AlphaSchedule, alpha_table, combine, top_down_confidence
from .segmentation import segment

EXIT_USAGE = 2
EXIT_DATA = 3
CACHE_ENV = "OBJDISTILL_CACHE"


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        sys.stderr.write(json.dumps({"error": "usage", "message": message}, sort_keys=True) + "\n")
        raise SystemExit(EXIT_USAGE)


# -- output plumbing ----------------------------------------------------------

class Run:
    """Collects inputs and outputs of one invocation for its manifest."""

    def __init__(self, args, argv):
        self.args = args
        self.argv = list(argv)
        self.inputs = {}
        self.outputs = {}
        self.config = None

    def input(self, path) -> Path:
        p = Path(path)
        if not p.is_file():
            raise FormatError("input file not found", p)
        self.inputs[str(path)] = file_digest(p)
        return p

    def emit(self, text: str, path=None) -> None:
        if path is None or str(path) == "-":
            sys.stdout.write(text)
            self.outputs["-"] = hashlib.sha256(text.encode()).hexdigest()
        else:
            Path(path).parent.mkdir(parents=True, exist_ok=True)
            Path(path).write_text(text, encoding="utf-8", newline="\n")
            self.outputs[str(path)] = file_digest(path)

    def manifest(self) -> dict:
        rec = {"command": self.args.command, "version": __version__, "argv": self.argv,
               "inputs": self.inputs, "outputs": self.outputs}
        if self.config is not None:
            rec["config"] = self.config
        if getattr(self.args, "threads", None) is not None:
            rec["threads"] = self.args.threads
        return rec

    def write_manifest(self, primary=None) -> None:
        text = dumps_records([self.manifest()], "manifest")
        if primary is None or str(primary) == "-":
            sys.stderr.write(text)
        else:
            Path(f"{primary}.manifest.jsonl").write_text(text, encoding="utf-8", newline="\n")


# -- subcommands --------------------------------------------------------------

def _image_id(args, path: Path) -> str:
    return args.image_id if args.image_id else path.stem


def cmd_segment(run: Run, args) -> None:
    path = run.input(args.image)
    img = read_image(path)
    spmap = segment(img, k=args.k, sigma=args.sigma, min_size=args.min_size)
    rec = {"image_id": _image_id(args, path), "count": spmap.count, "labels": spmap.labels}
    run.emit(dumps_records([rec], "segmentation"), args.output)
    run.write_manifest(args.output)


def _select_proposals(proposals: dict, image_id: str | None, path) -> ProposalSet:
    if image_id is not None:
        if image_id not in proposals:
            raise FormatError(f"no proposals for image {image_id!r}", path)
        return proposals[image_id]
    if len(proposals) != 1:
        raise FormatError("file holds several images; pass --image-id", path)
    return next(iter(proposals.values()))


def cmd_evidence(run: Run, args) -> None:
    img_path = run.input(args.image)
    prop_path = run.input(args.proposals)
    proposals = read_proposals(prop_path, strict=args.strict)
    ps = _select_proposals(proposals, args.image_id, prop_path)
    img = read_image(img_path)
    cfg = EvidenceConfig(theta_ms=args.theta_ms, theta_cc=args.theta_cc, theta_ed=args.theta_ed,
                         kind=args.kind)
    rep = build_evidence_map(img, cfg).report(ps)
    run.emit(dumps_records(evidence_records(rep), "evidence"), args.output)
    run.write_manifest(args.output)


def _evidence_by_image(path, strict: bool) -> dict[str, dict[int, float]]:
    out: dict[str, dict[int, float]] = {}
    for line, rec in enumerate(read_records(path, "evidence", strict), start=1):
        per = out.setdefault(rec["image_id"], {})
        if rec["index"] in per:
            raise FormatError("duplicate box index", path, line, "index")
        if not 0.0 <= rec["normalized"] <= 1.0:
            raise FormatError("normalized evidence must lie in [0, 1]", path, line, "normalized")
        per[rec["index"]] = rec["normalized"]
    return out


def cmd_mine(run: Run, args) -> None:
    thr = MiningThresholds(args.t_nms, args.t_conf, args.t_iou)
    sp, pp, lp = run.input(args.scores), run.input(args.proposals), run.input(args.labels)
    proposals = read_proposals(pp, strict=args.strict)
    labels = index_by_image(read_records(lp, "labels", args.strict), lp)
    evidence = None
    if args.evidence:
        ep = run.input(args.evidence)
        evidence = _evidence_by_image(ep, args.strict)
    out = []
    for line, rec in enumerate(read_records(sp, "scores", args.strict), start=1):
        iid = rec["image_id"]
        if iid not in proposals:
            raise FormatError(f"no proposals for image {iid!r}", sp, line, "image_id")
        if iid not in labels:
            raise FormatError(f"no image labels for image {iid!r}", sp, line, "image_id")
        probs = np.asarray(rec["probs"], dtype=np.float64)
        boxes = proposals[iid].boxes
        if probs.ndim != 2 or probs.shape[0] != boxes.shape[0]:
            raise FormatError(f"expected {boxes.shape[0]} rows, one per proposal", sp, line, "probs")
        y = np.asarray(labels[iid]["labels"])
        if y.size != probs.shape[1] - 1:
            raise FormatError(f"expected {probs.shape[1] - 1} image labels", lp, None, "labels")
        o_bu = np.zeros(boxes.shape[0])
        if evidence is not None:
            per = evidence.get(iid, {})
            if sorted(per) != list(range(boxes.shape[0])):
                raise FormatError(f"evidence for {iid!r} does not cover all {boxes.shape[0]} boxes",
                                  args.evidence)
            o_bu = np.asarray([per[i] for i in range(boxes.shape[0])])
        try:
            res = mine(probs, boxes, y, thr, use_nms=not args.no_nms)
            w = combine(o_bu, top_down_confidence(probs, res.one_hot()), args.alpha)
        except ValueError as exc:
            raise FormatError(str(exc), sp, line) from None
        refs = regression_references(res, w, boxes, thr.t_iou)
        out.extend(mining_records(iid, rec["branch"], res, w, refs, boxes))
    run.emit(dumps_records(out, "mining"), args.output)
    run.write_manifest(args.output)


def cmd_schedule(run: Run, args) -> None:
    try:
        sched = AlphaSchedule(args.family, args.gamma, args.steps, args.warmup)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    rows = [{"n": n, "alpha": a} for n, a in alpha_table(sched)]
    run.emit(dumps_records(rows, "schedule"), args.output)
    run.write_manifest(args.output)


def cmd_nms(run: Run, args) -> None:
    path = run.input(args.input)
    recs = read_records(path, "scored_boxes", args.strict)
    groups: dict[str, list[int]] = {}
    for i, rec in enumerate(recs):
        groups.setdefault(rec["image_id"], []).append(i)
    out = []
    for iid in sorted(groups):
        idx = groups[iid]
        boxes = np.asarray([recs[i]["box"] for i in idx], dtype=np.float64)
        scores = np.asarray([recs[i]["score"] for i in idx], dtype=np.float64)
        out.extend(recs[idx[k]] for k in nms(boxes, scores, args.threshold))
    run.emit(dumps_records(out, "scored_boxes"), args.output)
    run.write_manifest(args.output)


def _cache_dir() -> Path | None:
    value = os.environ.get(CACHE_ENV)
    return Path(value) if value else None


def _prepared(config, threads: int):
    """Prepared dataset for ``config``, memoized under ``$OBJDISTILL_CACHE`` when set."""
    from .harness import prepare_data

    if config.uses_bottom_up is False:
        config = config.with_overrides(evidence="none")
    cache = _cache_dir()
    if cache is None:
        return prepare_data(config, threads=threads)
    key = canonical_line({"version": __version__, "seed": config.seed, "n_train": config.n_train,
                          "n_test": config.n_test, "proposals": config.proposal_mode,
                          "evidence": config.evidence})
    path = cache / f"prepared-{hashlib.sha256(key.encode()).hexdigest()[:24]}.pkl"
    if path.is_file():
        with open(path, "rb") as fh:
            return pickle.load(fh)
    data = prepare_data(config, threads=threads)
    cache.mkdir(parents=True, exist_ok=True)
    tmp = path.with_suffix(".tmp")
    with open(tmp, "wb") as fh:
        pickle.dump(data, fh, protocol=pickle.HIGHEST_PROTOCOL)
    tmp.replace(path)
    return data


def _load_config(run: Run, args):
    from .harness import RunConfig

    config = RunConfig()
    if args.config:
        config = load_run_config(run.input(args.config), strict=args.strict)
    over = {}
    if args.seed is not None:
        over["seed"] = args.seed
    if args.steps is not None:
        over["steps"] = args.steps
        over["warmup_steps"] = min(config.warmup_steps, args.steps)
    if over:
        try:
            config = config.with_overrides(**over)
        except ValueError as exc:
            raise UsageError(str(exc)) from None
    run.config = config.to_dict()
    return config


def _detection_records(dets: dict) -> list[dict]:
    return [{"image_id": k, "boxes": d.boxes, "scores": d.scores, "classes": d.classes}
            for k, d in sorted(dets.items())]


def _gt_records(gts: dict) -> list[dict]:
    return [{"image_id": k, "boxes": b, "classes": c} for k, (b, c) in sorted(gts.items())]


def _metrics_record(m, **extra) -> dict:
    return {**m.to_dict(), **extra}


def cmd_simulate(run: Run, args) -> None:
    from .harness import run_experiment
    from .harness.evaluation import detect_all, ground_truth

    config = _load_config(run, args)
    data = _prepared(config, args.threads)
    res = run_experiment(config, data, name="simulate")
    out = Path(args.output)
    out.mkdir(parents=True, exist_ok=True)
    log = [r.to_dict() for r in res.result.log]
    run.emit(dump_run_config(config), out / "config.yaml")
    run.emit(dumps_records(log, "train_log"), out / "train_log.jsonl")
    dets = detect_all(res.result.params, data.test, config.use_regressor, config.infer_nms)
    run.emit(dumps_records(_detection_records(dets), "detections"), out / "detections.jsonl")
    run.emit(dumps_records(_gt_records(ground_truth(data.test)), "ground_truth"),
             out / "ground_truth.jsonl")
    metrics = [_metrics_record(res.test, name="test", seed=config.seed),
               _metrics_record(res.train, name="train", seed=config.seed)]
    run.emit(dumps_records(metrics, "metrics"), out / "metrics.jsonl")
    buf = out / "params.npz"
    res.result.params.save(buf)
    run.outputs[str(buf)] = file_digest(buf)
    run.write_manifest(out / "run")
    sys.stdout.write(f"test mAP {100 * res.mean_ap:.2f}  train CorLoc {100 * res.corloc:.2f}  "
                     f"dataset {data.dataset_hash[:16]}\n")


def cmd_ablate(run: Run, args) -> None:
    from .harness import COMPONENT_ROWS, SCHEDULE_ROWS, ablation_grid, named_configs

    config = _load_config(run, args)
    rows = {"components": COMPONENT_ROWS, "schedules": SCHEDULE_ROWS}[args.grid]
    seeds = args.seeds if args.seeds else [config.seed]
    records, tables = [], []
    for seed in seeds:
        base = config.with_overrides(seed=seed)
        report = ablation_grid(named_configs(base, rows), threads=args.threads)
        records.extend(report.records())
        tables.append(report.table())
    if args.output and args.output != "-":
        run.emit(dumps_records(records, "ablation"), args.output)
        sys.stdout.write("\n".join(tables))
        run.write_manifest(args.output)
    else:
        run.emit(dumps_records(records, "ablation"))
        sys.stderr.write("\n".join(tables))
        run.write_manifest()


def cmd_eval(run: Run, args) -> None:
    from .harness.evaluation import Detections, evaluate

    dp, gp = run.input(args.detections), run.input(args.ground_truth)
    dets = {}
    for line, rec in enumerate(read_records(dp, "detections", args.strict), start=1):
        n = len(rec["boxes"])
        if len(rec["scores"]) != n or len(rec["classes"]) != n:
            raise FormatError("boxes, scores and classes differ in length", dp, line)
        dets[rec["image_id"]] = Detections(rec["image_id"], np.asarray(rec["boxes"]).reshape(-1, 4),
                                           np.asarray(rec["scores"], dtype=np.float64),
                                           np.asarray(rec["classes"], dtype=np.int64))
    gts = {}
    for line, rec in enumerate(read_records(gp, "ground_truth", args.strict), start=1):
        if len(rec["classes"]) != len(rec["boxes"]):
            raise FormatError("boxes and classes differ in length", gp, line)
        gts[rec["image_id"]] = (np.asarray(rec["boxes"], dtype=np.float64).reshape(-1, 4),
                                np.asarray(rec["classes"], dtype=np.int64))
    num_classes = args.num_classes
    if num_classes is None:
        num_classes = int(max([c.max() for _, c in gts.values() if c.size] or [0]))
    m = evaluate(dets, gts, num_classes, args.iou)
    run.emit(dumps_records([_metrics_record(m)], "metrics"), args.output)
    run.write_manifest(args.output)


# -- parser -------------------------------------------------------------------

def _unit_interval(text: str) -> float:
    v = float(text)
    if not 0.0 <= v <= 1.0:
        raise argparse.ArgumentTypeError(f"{text} is not in [0, 1]")
    return v


def _positive_int(text: str) -> int:
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError(f"{text} is not a positive integer")
    return v


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="objdistill", description=__doc__.split("\n")[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--strict", action="store_true",
                        help="reject unknown fields in input records instead of warning")
    common.add_argument("--threads", type=_positive_int, default=os.cpu_count() or 1,
                        help="worker processes for data-parallel stages (1 = deterministic order)")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("segment", parents=[common], help="graph-based superpixels of an image")
    p.add_argument("image")
    p.add_argument("-o", "--output", default="-")
    p.add_argument("--image-id")
    p.add_argument("--k", type=float, default=300.0)
    p.add_argument("--sigma", type=float, default=0.8)
    p.add_argument("--min-size", type=int, default=20)
    p.set_defaults(func=cmd_segment)

    p = sub.add_parser("evidence", parents=[common], help="bottom-up objectness of proposals")
    p.add_argument("image")
    p.add_argument("--proposals", required=True)
    p.add_argument("--kind", choices=EVIDENCE_KINDS, default="ss")
    p.add_argument("--image-id")
    p.add_argument("--theta-ms", type=float, default=0.2)
    p.add_argument("--theta-cc", type=float, default=2.0)
    p.add_argument("--theta-ed", type=float, default=2.0)
    p.add_argument("-o", "--output", default="-")
    p.set_defaults(func=cmd_evidence)

    p = sub.add_parser("mine", parents=[common], help="pseudo ground truth from branch scores")
    p.add_argument("--scores", required=True)
    p.add_argument("--proposals", required=True)
    p.add_argument("--labels", required=True)
    p.add_argument("--t-nms", type=_unit_interval, default=0.3)
    p.add_argument("--t-conf", type=_unit_interval, default=0.7)
    p.add_argument("--t-iou", type=_unit_interval, default=0.5)
    p.add_argument("--no-nms", action="store_true", help="use only the top box per class as seed")
    p.add_argument("--evidence", help="evidence records giving O_bu for the reference weights")
    p.add_argument("--alpha", type=_unit_interval, default=0.0,
                   help="weight of the evidence in the reference weights")
    p.add_argument("-o", "--output", default="-")
    p.set_defaults(func=cmd_mine)

    p = sub.add_parser("schedule", parents=[common], help="tabulate an alpha schedule")
    p.add_argument("--family", choices=SCHEDULE_FAMILIES + ("const", "poly", "cos"),
                   default="polynomial")
    p.add_argument("--gamma", type=float, default=1.0)
    p.add_argument("--steps", type=_positive_int, required=True)
    p.add_argument("--warmup", type=int, default=0)
    p.add_argument("-o", "--output", default="-")
    p.set_defaults(func=cmd_schedule)

    p = sub.add_parser("nms", parents=[common], help="per-image greedy non-maximum suppression")
    p.add_argument("input")
    p.add_argument("--threshold", type=_unit_interval, default=0.3)
    p.add_argument("-o", "--output", default="-")
    p.set_defaults(func=cmd_nms)

    for name, func, helptext in (("simulate", cmd_simulate, "train and evaluate one synthetic run"),
                                 ("ablate", cmd_ablate, "run an ablation grid")):
        p = sub.add_parser(name, parents=[common], help=helptext)
        p.add_argument("--config", help="YAML run config; defaults apply to missing keys")
        p.add_argument("--seed", type=int)
        p.add_argument("--steps", type=_positive_int)
        p.set_defaults(func=func)
        if name == "simulate":
            p.add_argument("-o", "--output", required=True, help="output directory")
        else:
            p.add_argument("--grid", choices=("components", "schedules"), default="components")
            p.add_argument("--seeds", type=int, nargs="+")
            p.add_argument("-o", "--output", default="-")

    p = sub.add_parser("eval", parents=[common], help="AP and CorLoc of detections")
    p.add_argument("--detections", required=True)
    p.add_argument("--ground-truth", required=True)
    p.add_argument("--num-classes", type=_positive_int)
    p.add_argument("--iou", type=_unit_interval, default=0.5)
    p.add_argument("-o", "--output", default="-")
    p.set_defaults(func=cmd_eval)
    return parser


def _fail(kind: str, message: str, code: int, extra: dict | None = None) -> int:
    rec = {"error": kind, "message": message, **(extra or {})}
    sys.stderr.write(json.dumps(rec, sort_keys=True) + "\n")
    return code


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    run = Run(args, argv)
    with warnings.catch_warnings():
        warnings.simplefilter("always")
        warnings.showwarning = _show_warning
        try:
            args.func(run, args)
        except UsageError as exc:
            parser.print_usage(sys.stderr)
            return _fail("usage", str(exc), EXIT_USAGE)
        except FormatError as exc:
            sys.stderr.write(json.dumps(exc.record(), sort_keys=True) + "\n")
            return EXIT_DATA
        except (ValueError, KeyError, OSError) as exc:
            msg = exc.args[0] if isinstance(exc, KeyError) and exc.args else str(exc)
            return _fail("data", str(msg), EXIT_DATA)
    return 0


def _show_warning(message, category, filename, lineno, file=None, line=None):
    sys.stderr.write(json.dumps({"warning": str(message)}, sort_keys=True) + "\n")


if __name__ == "__main__":
    raise SystemExit(main())
