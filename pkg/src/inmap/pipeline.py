"""End-to-end orchestration over embedding files plus evaluation metrics.

The full pipeline is: text logits -> softmax labels -> reference smoothing ->
transport refinement -> confidence thresholding -> proxy learning -> nearest
proxy prediction. Mode flags disable individual stages to reproduce the
ablations (baseline, inmap25, inmap50, sinkhorn).
"""

from __future__ import annotations

import json
from contextlib import contextmanager
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigError, InmapError, ShapeError
from .learn import PgdConfig, TrainTrace, learn_proxies, predict
from .pseudo import (
    SinkhornConfig,
    sinkhorn_refine,
    smooth_reference,
    softmax_labels,
    text_logits,
    threshold_labels,
)
from .store import load_labels, load_matrix, normalize_rows, validate_labels

MODES = ("baseline", "inmap25", "inmap50", "sinkhorn", "inmap")

# proxy learning on a separate unlabeled set uses a softer temperature and a
# lower confidence threshold by default
TRAIN_SET_TAU_I = 0.03
TRAIN_SET_ALPHA = 0.4


@dataclass
class PipelineConfig:
    """File paths and hyperparameters for one pipeline run."""

    images: Path | str
    text_proxies: Path | str
    labels: Path | str | None = None
    proxy_train_images: Path | str | None = None
    tau_t: float = 0.01
    tau_i: float = 0.04
    alpha: float = 0.6
    gamma: float = 0.0
    sinkhorn_iters: int = 20
    pgd_iters: int = 2000
    lr: float = 10.0
    mode: str = "inmap"
    seed: int = 0
    out_dir: Path | str = "."

    def __post_init__(self):
        if self.mode not in MODES:
            raise ConfigError(f"mode must be one of {', '.join(MODES)}, got {self.mode!r}")
        if self.pgd_iters < 0:
            raise ConfigError(f"pgd-iters must be >= 0, got {self.pgd_iters}")


@dataclass
class Metrics:
    """Prediction quality and proxy-data alignment summary."""

    accuracy: float
    sim: float
    per_class_accuracy: list
    label_entropy: float

    def to_dict(self) -> dict:
        return {
            "accuracy": self.accuracy,
            "sim": self.sim,
            "per_class_accuracy": self.per_class_accuracy,
            "label_entropy": self.label_entropy,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)


@dataclass
class PipelineResult:
    predictions: np.ndarray
    proxies: np.ndarray
    trace: TrainTrace
    metrics: Metrics | None
    pseudo_labels: np.ndarray | None
    stages: list = field(default_factory=list)


@contextmanager
def _stage(name: str, stages: list | None = None):
    """Prefix any pipeline error with the stage it happened in."""
    if stages is not None:
        stages.append(name)
    try:
        yield
    except InmapError as exc:
        exc.args = (f"[stage {name}] {exc}",)
        raise


def evaluate(
    predictions: np.ndarray,
    truth: np.ndarray,
    features: np.ndarray,
    proxies: np.ndarray,
) -> Metrics:
    """Accuracy, mean nearest-proxy similarity, per-class accuracy, entropy.

    ``sim`` is the mean over examples of the similarity to the nearest proxy.
    ``label_entropy`` is the natural-log entropy of the predicted label
    histogram. Classes absent from the truth get a null per-class accuracy.
    """
    pred = np.asarray(predictions)
    true = np.asarray(truth)
    if pred.shape != true.shape:
        raise ShapeError(f"prediction length {pred.shape} != truth length {true.shape}")
    x = np.asarray(features, dtype=np.float64)
    w = np.asarray(proxies, dtype=np.float64)
    if x.shape[0] != pred.shape[0]:
        raise ShapeError(f"{x.shape[0]} feature rows for {pred.shape[0]} predictions")
    num_classes = w.shape[0]
    validate_labels(true, num_classes)
    validate_labels(pred, num_classes)

    accuracy = float(np.mean(pred == true))
    sim = float(np.mean((x @ w.T).max(axis=1)))
    per_class = []
    for j in range(num_classes):
        members = true == j
        per_class.append(float(np.mean(pred[members] == j)) if members.any() else None)
    hist = np.bincount(pred, minlength=num_classes).astype(np.float64)
    hist /= hist.sum()
    nonzero = hist[hist > 0]
    entropy = float(-(nonzero * np.log(nonzero)).sum())
    return Metrics(accuracy, sim, per_class, entropy)


def make_pseudo_labels(
    logits: np.ndarray, cfg: PipelineConfig, stages: list | None = None
) -> np.ndarray:
    """Label-refinement stages for the configured mode (up to thresholding).

    inmap25 stops at the raw softmax labels, inmap50 thresholds them without
    transport refinement; the sinkhorn and inmap modes run the full path.
    """
    with _stage("softmax-labels", stages):
        raw = softmax_labels(logits, cfg.tau_t)
    if cfg.mode == "inmap25":
        return raw
    if cfg.mode == "inmap50":
        with _stage("threshold", stages):
            return threshold_labels(raw, cfg.alpha)
    with _stage("smooth-reference", stages):
        reference = smooth_reference(raw, cfg.gamma)
    with _stage("sinkhorn-refine", stages):
        refined = sinkhorn_refine(
            logits, reference, SinkhornConfig(cfg.tau_t, cfg.sinkhorn_iters)
        )
    with _stage("threshold", stages):
        return threshold_labels(refined, cfg.alpha)


def run_inmap(cfg: PipelineConfig) -> PipelineResult:
    """Execute the configured pipeline over the files in ``cfg``.

    Feature and proxy rows are normalized after loading. When a separate
    proxy-training set is given, labels are refined and proxies learned on
    it, and predictions are made on the evaluation set.
    """
    stages: list = []
    with _stage("load-images", stages):
        eval_features = normalize_rows(load_matrix(cfg.images))
    with _stage("load-text-proxies", stages):
        proxies0 = normalize_rows(load_matrix(cfg.text_proxies))
    if eval_features.shape[1] != proxies0.shape[1]:
        raise ShapeError(
            f"image dim {eval_features.shape[1]} != proxy dim {proxies0.shape[1]}"
        )
    if cfg.proxy_train_images is not None:
        with _stage("load-proxy-train-images", stages):
            learn_features = normalize_rows(load_matrix(cfg.proxy_train_images))
        if learn_features.shape[1] != proxies0.shape[1]:
            raise ShapeError(
                f"proxy-train dim {learn_features.shape[1]} != proxy dim {proxies0.shape[1]}"
            )
    else:
        learn_features = eval_features

    pseudo = None
    empty_trace = TrainTrace(np.empty(0), np.empty(0), np.empty(0))
    if cfg.mode == "baseline":
        proxies = proxies0
        trace = empty_trace
    elif cfg.mode == "sinkhorn":
        # refined labels are the prediction; no proxies are learned
        with _stage("text-logits", stages):
            logits = text_logits(eval_features, proxies0)
        pseudo = make_pseudo_labels(logits, cfg, stages)
        with _stage("predict", stages):
            predictions = np.argmax(pseudo, axis=1).astype(np.int64)
        return _finish(cfg, predictions, proxies0, empty_trace, eval_features, pseudo, stages)
    else:
        with _stage("text-logits", stages):
            logits = text_logits(learn_features, proxies0)
        pseudo = make_pseudo_labels(logits, cfg, stages)
        if cfg.pgd_iters == 0:
            proxies = proxies0
            trace = empty_trace
        else:
            with _stage("learn-proxies", stages):
                proxies, trace = learn_proxies(
                    learn_features,
                    pseudo,
                    proxies0,
                    PgdConfig(cfg.tau_i, cfg.pgd_iters, cfg.lr),
                )

    with _stage("predict", stages):
        predictions = predict(eval_features, proxies)
    return _finish(cfg, predictions, proxies, trace, eval_features, pseudo, stages)


def _finish(cfg, predictions, proxies, trace, eval_features, pseudo, stages) -> PipelineResult:
    metrics = None
    if cfg.labels is not None:
        with _stage("evaluate", stages):
            truth = load_labels(cfg.labels)
            truth = validate_labels(truth, proxies.shape[0])
            metrics = evaluate(predictions, truth, eval_features, proxies)
    return PipelineResult(
        predictions=predictions,
        proxies=proxies,
        trace=trace,
        metrics=metrics,
        pseudo_labels=pseudo,
        stages=stages,
    )
