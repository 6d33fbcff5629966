"""Fixture files and invocations shared by the CLI and acceptance tests."""

import hashlib

import numpy as np

from objdistill.cli import main
from objdistill.formats import write_proposals, write_records
from objdistill.geometry import ProposalSet
from objdistill.images import write_image

# sha256 prefixes of stdout for each invocation in ``commands``, recorded once
GOLDEN = {
    "schedule": "ee0f77268e1ab939",
    "nms": "e203f410ee6949a5",
    "evidence": "7f9410e5399bd3f0",
    "mine": "2ca5020eda75f689",
    "segment": "4b538ce5513b12e4",
}

TINY_RUN = "n_train: 5\nn_test: 3\nsteps: 15\nwarmup_steps: 5\nseed: 2\n"


def build_fixtures(d):
    img = np.zeros((16, 16, 3))
    img[:, 8:] = 1.0
    write_image(d / "halves.png", img)
    write_proposals(d / "halves.jsonl", [ProposalSet("halves", np.array(
        [[0, 0, 8, 16], [4, 0, 12, 16], [0, 0, 16, 8]], dtype=float))])

    rng = np.random.default_rng(0)
    texture = rng.random((40, 48, 3)) * 0.3
    texture[8:30, 10:34] += 0.6
    write_image(d / "texture.png", np.clip(texture, 0, 1))
    write_proposals(d / "texture.jsonl", [ProposalSet("texture", np.array(
        [[10, 8, 34, 30], [0, 0, 20, 20], [5, 5, 40, 35], [25, 20, 48, 40]], dtype=float))])

    write_records(d / "identical.jsonl", [
        {"image_id": "a", "box": [0, 0, 10, 10], "score": 0.9},
        {"image_id": "a", "box": [0, 0, 10, 10], "score": 0.8},
    ], "scored_boxes")

    boxes = np.array([[0, 0, 10, 10], [1, 0, 11, 10], [40, 40, 50, 50], [41, 40, 50, 51]], float)
    write_proposals(d / "mine_props.jsonl", [ProposalSet("m", boxes)])
    probs = [[0.05, 0.9, 0.05], [0.3, 0.4, 0.3], [0.1, 0.1, 0.8], [0.3, 0.3, 0.4]]
    write_records(d / "scores.jsonl", [{"image_id": "m", "branch": 0, "probs": probs}], "scores")
    write_records(d / "labels.jsonl", [{"image_id": "m", "labels": [1, 1]}], "labels")
    write_records(d / "mine_evidence.jsonl", [
        {"image_id": "m", "index": i, "kind": "ss", "raw": v, "normalized": v}
        for i, v in enumerate([0.2, 1.0, 0.0, 0.6])], "evidence")

    gt = [[0, 0, 10, 10], [20, 20, 40, 30]]
    write_records(d / "gt.jsonl", [{"image_id": "a", "boxes": gt, "classes": [1, 2]}],
                  "ground_truth")
    write_records(d / "det.jsonl", [{"image_id": "a", "boxes": gt + [[0, 0, 5, 5]],
                                     "scores": [0.9, 0.8, 0.95], "classes": [1, 2, 1]}],
                  "detections")
    (d / "tiny.yaml").write_text(TINY_RUN)
    return d


def commands(d):
    """Stdout-producing invocations; the first five carry golden digests."""
    return {
        "schedule": ["schedule", "--family", "poly", "--gamma", "1", "--steps", "10"],
        "nms": ["nms", d / "identical.jsonl", "--threshold", "0.3"],
        "evidence": ["evidence", d / "halves.png", "--proposals", d / "halves.jsonl",
                     "--kind", "ss"],
        "mine": ["mine", "--scores", d / "scores.jsonl", "--proposals", d / "mine_props.jsonl",
                 "--labels", d / "labels.jsonl"],
        "segment": ["segment", d / "halves.png"],
        "schedule-cosine": ["schedule", "--family", "cosine", "--steps", "40", "--warmup", "4"],
        "evidence-cc": ["evidence", d / "texture.png", "--proposals", d / "texture.jsonl",
                        "--kind", "cc"],
        "evidence-ed": ["evidence", d / "texture.png", "--proposals", d / "texture.jsonl",
                        "--kind", "ed"],
        "evidence-ms": ["evidence", d / "texture.png", "--proposals", d / "texture.jsonl",
                        "--kind", "ms"],
        "evidence-mean": ["evidence", d / "texture.png", "--proposals", d / "texture.jsonl",
                          "--kind", "mean"],
        "mine-weighted": ["mine", "--scores", d / "scores.jsonl", "--proposals",
                          d / "mine_props.jsonl", "--labels", d / "labels.jsonl",
                          "--evidence", d / "mine_evidence.jsonl", "--alpha", "0.5"],
        "segment-texture": ["segment", d / "texture.png", "--k", "100", "--min-size", "10"],
        "eval": ["eval", "--detections", d / "det.jsonl", "--ground-truth", d / "gt.jsonl"],
        "ablate": ["ablate", "--config", d / "tiny.yaml", "--threads", "1"],
    }


def invoke(capsys, *argv):
    code = main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


def digest(text: str) -> str:
    return hashlib.sha256(text.encode()).hexdigest()[:16]
