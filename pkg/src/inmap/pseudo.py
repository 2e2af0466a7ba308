"""Pseudo labels from text proxies: softmax labeling, transport refinement,
reference smoothing, and confidence thresholding.

The refinement solves

    max_P  <P, M> + tau * H(P)   s.t.  rows of P sum to 1/n, columns to q,

by alternating scaling updates on the dual potentials, kept in log space: at
tau = 0.01 with unit-norm inputs the scaled logits span +-100, so naive
exp(M/tau) scaling factors cover ~87 decades and plain float32 kernels
overflow outright. All exponentials here are max-shifted or absorption
bounded.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import xlogy

from .errors import ConfigError, DataError, NumericsError, ShapeError

_REFERENCE_FLOOR = 1e-12


@dataclass(frozen=True)
class SinkhornConfig:
    """Temperature and iteration budget for the transport refinement."""

    temperature: float = 0.01
    iterations: int = 20

    def __post_init__(self):
        if not (self.temperature > 0):
            raise ConfigError(f"temperature must be positive, got {self.temperature}")
        if self.iterations < 1:
            raise ConfigError(f"iterations must be >= 1, got {self.iterations}")


def text_logits(features: np.ndarray, proxies: np.ndarray) -> np.ndarray:
    """Pairwise dot products between example rows and proxy rows (n x C)."""
    x = np.asarray(features, dtype=np.float64)
    z = np.asarray(proxies, dtype=np.float64)
    if x.ndim != 2 or z.ndim != 2:
        raise ShapeError(f"need 2-D arrays, got {x.shape} and {z.shape}")
    if x.shape[1] != z.shape[1]:
        raise ShapeError(f"feature dim {x.shape[1]} != proxy dim {z.shape[1]}")
    return x @ z.T


def softmax_labels(logits: np.ndarray, temperature: float) -> np.ndarray:
    """Row-wise softmax of logits / temperature, max-subtracted for stability."""
    if not (temperature > 0):
        raise ConfigError(f"temperature must be positive, got {temperature}")
    s = np.asarray(logits, dtype=np.float64) / temperature
    s = s - s.max(axis=1, keepdims=True)
    p = np.exp(s)
    p /= p.sum(axis=1, keepdims=True)
    return p


def smooth_reference(labels: np.ndarray, gamma: float) -> np.ndarray:
    """Class marginal of the labels raised to gamma and renormalized.

    gamma=0 gives the uniform distribution, gamma=1 the raw class marginal
    implied by the labels.
    """
    if not (0.0 <= gamma <= 1.0):
        raise ConfigError(f"gamma must be in [0, 1], got {gamma}")
    p = np.asarray(labels, dtype=np.float64)
    marginal = p.mean(axis=0)
    q = np.power(marginal, gamma)
    return q / q.sum()


def _prepare_reference(reference: np.ndarray, num_classes: int) -> np.ndarray:
    q = np.asarray(reference, dtype=np.float64)
    if q.shape != (num_classes,):
        raise ShapeError(f"reference has shape {q.shape}, expected ({num_classes},)")
    if not np.isfinite(q).all() or np.any(q < 0):
        raise ConfigError("reference distribution must be finite and non-negative")
    q = np.maximum(q, _REFERENCE_FLOOR)
    q = q / q.sum()
    if np.any(q <= 0):
        raise ConfigError("reference distribution has a zero entry after clamping")
    return q


def _logsumexp(a: np.ndarray, axis: int) -> np.ndarray:
    m = a.max(axis=axis, keepdims=True)
    out = np.log(np.exp(a - m).sum(axis=axis, keepdims=True))
    out += m
    return np.squeeze(out, axis=axis)


def transport_objective(plan: np.ndarray, logits: np.ndarray, temperature: float) -> float:
    """Value of <P, M> + tau * H(P) for a transport plan."""
    p = np.asarray(plan, dtype=np.float64)
    return float((p * logits).sum() - temperature * xlogy(p, p).sum())


@dataclass
class SinkhornTrace:
    """Per-iteration diagnostics of the scaling loop.

    ``objective`` is the transport objective of the row-feasible plan after
    each full iteration. It converges to the optimum but is not monotone
    along the way (dips around 1e-6 are normal). ``bound`` is the dual
    optimality bound, which decreases monotonically to the optimal objective
    and certifies per-iteration progress.
    """

    objective: np.ndarray
    bound: np.ndarray


# absorb linear scalings into the log potentials past this magnitude
_ABSORB_LIMIT = 50.0


def sinkhorn_plan(
    logits: np.ndarray,
    reference: np.ndarray,
    config: SinkhornConfig,
    *,
    objective_trace: bool = False,
):
    """Solve the entropic transport problem and return the raw n x C plan.

    Row marginals are 1/n, column marginals the (clamped, renormalized)
    reference. Each iteration applies the column-scaling update then the
    row-scaling update, so returned rows sum to 1/n up to rounding while the
    column error reflects the iteration budget.

    Potentials live in log space; between absorptions the updates run as
    plain matrix-vector scalings on the stabilized kernel, which keeps every
    exponent bounded without paying two full log-sum-exp passes per
    iteration. Degenerate scaling denominators fall back to exact
    log-sum-exp updates for that iteration.

    With ``objective_trace`` a :class:`SinkhornTrace` is returned alongside
    the plan.
    """
    m = np.asarray(logits, dtype=np.float64)
    if m.ndim != 2:
        raise ShapeError(f"logits must be 2-D, got shape {m.shape}")
    if not np.isfinite(m).all():
        raise DataError("logits contain NaN or Inf")
    n, c = m.shape
    q = _prepare_reference(reference, c)

    scaled = m / config.temperature
    log_row = -np.log(n)
    log_col = np.log(q)
    rows = np.full(n, 1.0 / n)

    # absorbed potentials; the initial row shift keeps exp(scaled + f) <= 1
    f = -scaled.max(axis=1)
    g = np.zeros(c)
    kernel = np.exp(scaled + f[:, None])
    u = np.ones(n)
    v = np.ones(c)

    objective = np.empty(config.iterations) if objective_trace else None
    bound = np.empty(config.iterations) if objective_trace else None

    def absorb():
        nonlocal kernel, u, v
        np.add(f, np.log(u), out=f)
        np.add(g, np.log(v), out=g)
        if not (np.isfinite(f).all() and np.isfinite(g).all()):
            raise NumericsError("scaling potentials overflowed")
        kernel = np.exp(scaled + f[:, None] + g[None, :])
        if not np.isfinite(kernel).all():
            raise NumericsError("stabilized kernel overflowed")
        u = np.ones(n)
        v = np.ones(c)

    for it in range(config.iterations):
        den_c = kernel.T @ u
        v = q / den_c if np.all(den_c > 0) else None
        if v is None or not np.isfinite(v).all():
            # exact update; also re-absorbs u so the kernel stays consistent
            np.add(f, np.log(u), out=f)
            u = np.ones(n)
            g = log_col - _logsumexp(scaled + f[:, None], axis=0)
            kernel = np.exp(scaled + f[:, None] + g[None, :])
            v = np.ones(c)
        den_r = kernel @ v
        u = rows / den_r if np.all(den_r > 0) else None
        if u is None or not np.isfinite(u).all():
            np.add(g, np.log(v), out=g)
            v = np.ones(c)
            f = log_row - _logsumexp(scaled + g[None, :], axis=1)
            kernel = np.exp(scaled + f[:, None] + g[None, :])
            u = np.ones(n)
        if max(np.abs(np.log(u)).max(), np.abs(np.log(v)).max()) > _ABSORB_LIMIT:
            absorb()
        if objective_trace:
            plan = kernel * u[:, None] * v[None, :]
            objective[it] = transport_objective(plan, m, config.temperature)
            ftot = f + np.log(u)
            gtot = g + np.log(v)
            bound[it] = config.temperature * (
                plan.sum() - 1.0 - ftot @ rows - gtot @ q
            )

    plan = kernel * u[:, None] * v[None, :]
    if not np.isfinite(plan).all():
        raise NumericsError("transport plan overflowed")
    if objective_trace:
        return plan, SinkhornTrace(objective=objective, bound=bound)
    return plan


def sinkhorn_refine(
    logits: np.ndarray, reference: np.ndarray, config: SinkhornConfig
) -> np.ndarray:
    """Transport-refined per-example label distribution.

    The raw plan carries mass 1/n per example; rows are scaled by n and then
    renormalized so every row sums to exactly 1.
    """
    plan = sinkhorn_plan(logits, reference, config)
    labels = plan * plan.shape[0]
    labels /= labels.sum(axis=1, keepdims=True)
    return labels


def threshold_labels(labels: np.ndarray, alpha: float) -> np.ndarray:
    """Convert confident rows to one-hot.

    A row whose maximum entry strictly exceeds alpha becomes the indicator of
    its argmax (ties to the lowest class index); all other rows pass through
    unchanged.
    """
    if not (0.0 <= alpha <= 1.0):
        raise ConfigError(f"alpha must be in [0, 1], got {alpha}")
    p = np.asarray(labels, dtype=np.float64)
    if p.ndim != 2:
        raise ShapeError(f"labels must be 2-D, got shape {p.shape}")
    out = p.copy()
    confident = p.max(axis=1) > alpha
    if np.any(confident):
        rows = np.flatnonzero(confident)
        out[rows] = 0.0
        out[rows, p[rows].argmax(axis=1)] = 1.0
    return out
