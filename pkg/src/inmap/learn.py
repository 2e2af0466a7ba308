"""Recover per-class vision proxies from pseudo labels.

The objective is the summed KL divergence between the target label rows and
the softmax of feature/proxy similarities at temperature tau_I. It is convex
in the proxy matrix; the solver is projected gradient descent on unit-norm
proxy rows with a halve-on-gradient-increase step schedule.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np
from scipy.special import xlogy

from .errors import ConfigError, DegenerateRowError, NumericsError, ShapeError

_PROB_FLOOR = 1e-30
_LOG_PROB_FLOOR = float(np.log(1e-30))
_STEP_FLOOR = 1e-12


@dataclass(frozen=True)
class PgdConfig:
    """Solver settings for proxy learning.

    ``iterations=0`` is allowed and returns the initial proxies untouched
    (the pipeline's no-learning ablation). ``grad_tolerance`` enables an
    optional early stop once the gradient Frobenius norm falls below it;
    disabled by default so the iteration count is exact.
    """

    temperature: float = 0.04
    iterations: int = 2000
    step_size: float = 10.0
    decay_factor: float = 2.0
    grad_tolerance: float | None = None

    def __post_init__(self):
        if not (self.temperature > 0):
            raise ConfigError(f"temperature must be positive, got {self.temperature}")
        if self.iterations < 0:
            raise ConfigError(f"iterations must be >= 0, got {self.iterations}")
        if not (self.step_size > 0):
            raise ConfigError(f"step_size must be positive, got {self.step_size}")
        if not (self.decay_factor > 1):
            raise ConfigError(f"decay_factor must exceed 1, got {self.decay_factor}")


@dataclass
class TrainTrace:
    """Per-iteration objective, gradient Frobenius norm, and step size."""

    objective: np.ndarray
    grad_norm: np.ndarray
    step_size: np.ndarray

    def __len__(self) -> int:
        return len(self.objective)

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["iteration", "objective", "grad_norm", "step"])
            for i in range(len(self)):
                writer.writerow(
                    [
                        i,
                        repr(float(self.objective[i])),
                        repr(float(self.grad_norm[i])),
                        repr(float(self.step_size[i])),
                    ]
                )


def _check_shapes(targets: np.ndarray, features: np.ndarray, proxies: np.ndarray) -> None:
    if features.ndim != 2 or proxies.ndim != 2 or targets.ndim != 2:
        raise ShapeError("targets, features, and proxies must all be 2-D")
    n, d = features.shape
    c = proxies.shape[0]
    if proxies.shape[1] != d:
        raise ShapeError(f"proxy dim {proxies.shape[1]} != feature dim {d}")
    if targets.shape != (n, c):
        raise ShapeError(f"targets shape {targets.shape} != ({n}, {c})")


def _softmax_rows(scores: np.ndarray) -> np.ndarray:
    s = scores - scores.max(axis=1, keepdims=True)
    p = np.exp(s)
    p /= p.sum(axis=1, keepdims=True)
    return p


def _predictions(features: np.ndarray, proxies: np.ndarray, temperature: float) -> np.ndarray:
    return _softmax_rows(features @ proxies.T / temperature)


def _kl_value(targets: np.ndarray, predicted: np.ndarray) -> float:
    # 0 * log(0 / .) contributes 0; predicted entries floored inside the log
    value = float(
        xlogy(targets, targets).sum()
        - (targets * np.log(np.maximum(predicted, _PROB_FLOOR))).sum()
    )
    if not np.isfinite(value):
        raise NumericsError("KL objective is not finite")
    return value


def kl_objective(
    targets: np.ndarray, features: np.ndarray, proxies: np.ndarray, temperature: float
) -> float:
    """Sum over examples of KL(target row || softmax(x . W^T / tau)).

    Convex in the proxies; rows of ``proxies`` need not be unit norm (the
    learner keeps them unit norm, but convexity probes evaluate off-sphere
    points).
    """
    t = np.asarray(targets, dtype=np.float64)
    x = np.asarray(features, dtype=np.float64)
    w = np.asarray(proxies, dtype=np.float64)
    _check_shapes(t, x, w)
    return _kl_value(t, _predictions(x, w, temperature))


def kl_gradient(
    targets: np.ndarray, features: np.ndarray, proxies: np.ndarray, temperature: float
) -> np.ndarray:
    """Gradient of the KL objective w.r.t. the proxies, C x d.

    Row j is (1/tau) * sum_i (P_ij - targets_ij) * x_i.
    """
    t = np.asarray(targets, dtype=np.float64)
    x = np.asarray(features, dtype=np.float64)
    w = np.asarray(proxies, dtype=np.float64)
    _check_shapes(t, x, w)
    p = _predictions(x, w, temperature)
    grad = (p - t).T @ x / temperature
    if not np.isfinite(grad).all():
        raise NumericsError("KL gradient is not finite")
    return grad


def project_unit_rows(proxies: np.ndarray) -> np.ndarray:
    """Rescale every proxy row to unit L2 norm."""
    w = np.asarray(proxies, dtype=np.float64)
    norms = np.linalg.norm(w, axis=1)
    small = np.flatnonzero(norms < 1e-12)
    if small.size:
        raise DegenerateRowError(small[0], norms[small[0]])
    return w / norms[:, None]


def learn_proxies(
    features: np.ndarray,
    targets: np.ndarray,
    init: np.ndarray,
    config: PgdConfig,
) -> tuple[np.ndarray, TrainTrace]:
    """Run projected gradient descent from the initial proxies.

    Each iteration computes the gradient at the current proxies, steps with
    the current step size, projects every row back to the unit sphere, and
    halves the step size whenever this iteration's gradient norm exceeded the
    previous one's. If the step size underflows, iteration stops early.

    Returns the best iterate seen (by objective), which is the final iterate
    on every normal run, so the result never scores worse than the warm
    start. The trace records the actual descent path.
    """
    x = np.asarray(features, dtype=np.float64)
    t = np.asarray(targets, dtype=np.float64)
    w = np.array(init, dtype=np.float64)
    _check_shapes(t, x, w)

    objectives = np.empty(config.iterations)
    grad_norms = np.empty(config.iterations)
    steps = np.empty(config.iterations)

    # loop-invariant pieces of the objective
    target_entropy = float(xlogy(t, t).sum())
    target_row_mass = t.sum(axis=1)
    ones_c = np.ones(w.shape[0])
    inv_tau = 1.0 / config.temperature

    eta = config.step_size
    prev_norm = None
    best_obj = np.inf
    best_w = w
    done = 0
    for it in range(config.iterations):
        scores = x @ w.T
        scores *= inv_tau
        smax = scores.max()
        smin = scores.min()
        if smax > 700.0:
            # only reachable with non-unit features; shift for exp safety
            scores -= scores.max(axis=1, keepdims=True)
            smin, smax = smin - smax, 0.0
        p = np.exp(scores)
        row_mass = p @ ones_c
        log_mass = np.log(row_mass)
        if smin - log_mass.max() >= _LOG_PROB_FLOOR:
            # probability floor cannot bind: use sum t*log P directly
            obj = target_entropy - float(np.einsum("ij,ij->", t, scores))
            obj += float(target_row_mass @ log_mass)
        else:
            log_p = scores - log_mass[:, None]
            np.maximum(log_p, _LOG_PROB_FLOOR, out=log_p)
            obj = target_entropy - float((t * log_p).sum())
        if not np.isfinite(obj):
            raise NumericsError("KL objective is not finite")
        p /= row_mass[:, None]
        p -= t
        grad = p.T @ x
        grad *= inv_tau
        gnorm = float(np.linalg.norm(grad))
        if not np.isfinite(gnorm):
            raise NumericsError("KL gradient is not finite")
        objectives[it] = obj
        grad_norms[it] = gnorm
        steps[it] = eta
        done = it + 1
        if obj < best_obj:
            best_obj, best_w = obj, w
        if config.grad_tolerance is not None and gnorm < config.grad_tolerance:
            break
        w = project_unit_rows(w - eta * grad)
        if prev_norm is not None and gnorm > prev_norm:
            eta /= config.decay_factor
        prev_norm = gnorm
        if eta < _STEP_FLOOR:
            break

    if config.iterations > 0:
        final_obj = _kl_value(t, _predictions(x, w, config.temperature))
        if final_obj <= best_obj:
            best_obj, best_w = final_obj, w
    trace = TrainTrace(objectives[:done], grad_norms[:done], steps[:done])
    return best_w, trace


def predict(features: np.ndarray, proxies: np.ndarray) -> np.ndarray:
    """Nearest-proxy class index per example, ties to the lowest index."""
    x = np.asarray(features, dtype=np.float64)
    w = np.asarray(proxies, dtype=np.float64)
    if x.ndim != 2 or w.ndim != 2:
        raise ShapeError(f"need 2-D arrays, got {x.shape} and {w.shape}")
    if x.shape[1] != w.shape[1]:
        raise ShapeError(f"feature dim {x.shape[1]} != proxy dim {w.shape[1]}")
    return np.argmax(x @ w.T, axis=1).astype(np.int64)
