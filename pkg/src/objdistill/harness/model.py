"""Linear score heads over region features."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..losses import softmax


@dataclass
class ModelParams:
    """Weights ``W*`` are ``(F, out)``, biases ``b*`` are ``(out,)``.

    ``ref_w`` / ``ref_b`` hold one entry per refinement branch.
    """

    cls_w: np.ndarray
    cls_b: np.ndarray
    det_w: np.ndarray
    det_b: np.ndarray
    ref_w: list
    ref_b: list
    reg_w: np.ndarray
    reg_b: np.ndarray

    @classmethod
    def initialize(cls, rng: np.random.Generator, feature_dim: int, num_classes: int,
                   num_branches: int = 3, std: float = 0.01, reg_std: float = 0.001) -> "ModelParams":
        def gauss(shape, s):
            return rng.normal(0.0, s, size=shape)

        return cls(
            cls_w=gauss((feature_dim, num_classes), std),
            cls_b=np.zeros(num_classes),
            det_w=gauss((feature_dim, num_classes), std),
            det_b=np.zeros(num_classes),
            ref_w=[gauss((feature_dim, num_classes + 1), std) for _ in range(num_branches)],
            ref_b=[np.zeros(num_classes + 1) for _ in range(num_branches)],
            reg_w=gauss((feature_dim, 4), reg_std),
            reg_b=np.zeros(4),
        )

    @property
    def num_branches(self) -> int:
        return len(self.ref_w)

    def named(self) -> dict[str, np.ndarray]:
        out = {"cls_w": self.cls_w, "cls_b": self.cls_b, "det_w": self.det_w,
               "det_b": self.det_b, "reg_w": self.reg_w, "reg_b": self.reg_b}
        for k, (w, b) in enumerate(zip(self.ref_w, self.ref_b)):
            out[f"ref{k + 1}_w"] = w
            out[f"ref{k + 1}_b"] = b
        return out

    @classmethod
    def from_named(cls, arrays) -> "ModelParams":
        k = 0
        while f"ref{k + 1}_w" in arrays:
            k += 1
        return cls(
            cls_w=np.asarray(arrays["cls_w"]), cls_b=np.asarray(arrays["cls_b"]),
            det_w=np.asarray(arrays["det_w"]), det_b=np.asarray(arrays["det_b"]),
            ref_w=[np.asarray(arrays[f"ref{i + 1}_w"]) for i in range(k)],
            ref_b=[np.asarray(arrays[f"ref{i + 1}_b"]) for i in range(k)],
            reg_w=np.asarray(arrays["reg_w"]), reg_b=np.asarray(arrays["reg_b"]),
        )

    def save(self, path) -> None:
        np.savez(path, **self.named())

    @classmethod
    def load(cls, path) -> "ModelParams":
        with np.load(path) as data:
            return cls.from_named({k: data[k] for k in data.files})

    def copy(self) -> "ModelParams":
        return ModelParams.from_named({k: v.copy() for k, v in self.named().items()})


def branch_probabilities(params: ModelParams, features: np.ndarray) -> list[np.ndarray]:
    return [softmax(features @ w + b, axis=1) for w, b in zip(params.ref_w, params.ref_b)]


def regression_offsets(params: ModelParams, features: np.ndarray) -> np.ndarray:
    return features @ params.reg_w + params.reg_b
