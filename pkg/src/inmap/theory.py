"""Synthetic modality-gap models and numerical verifiers for the method's
theoretical guarantees.

The model plants ground-truth vision proxies and derives text proxies as
sqrt(a) * Z_shared + sqrt(1-a) * Z_orth, where Z_shared is a (renormalized)
rank-r reconstruction of the true proxies and Z_orth lives in a subspace
orthogonal to all feature vectors. Everything is embedded in a 2d ambient
space (features and true proxies in the first d coordinates, the orthogonal
text component in the last d) so a non-trivial orthogonal complement always
exists.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.stats import spearmanr

from .errors import ConfigError, ConstructionError
from .learn import PgdConfig, learn_proxies
from .pseudo import softmax_labels


@dataclass(frozen=True)
class SyntheticModel:
    """A sampled modality-gap instance; all arrays live in the 2d ambient space."""

    dim: int
    classes: int
    samples: int
    overlap: float
    overlap_rank: int
    concentration: float
    seed: int
    proxies_true: np.ndarray = field(repr=False)  # (C, 2d) unit rows
    text_shared: np.ndarray = field(repr=False)  # (C, 2d) unit rows, vision span
    text_orthogonal: np.ndarray = field(repr=False)  # (C, 2d) unit rows, last-d block
    text_proxies: np.ndarray = field(repr=False)  # (C, 2d) unit rows
    features: np.ndarray = field(repr=False)  # (n, 2d) unit rows
    labels: np.ndarray = field(repr=False)  # (n,) int64
    singular_values: np.ndarray = field(repr=False)  # spectrum of the true proxy matrix
    renorm_slack: float  # max |1 - norm| of the raw rank-r rows


def build_synthetic_model(
    dim: int,
    classes: int,
    samples: int,
    overlap: float,
    rank: int,
    concentration: float = 8.0,
    seed: int = 0,
) -> SyntheticModel:
    """Sample a reproducible modality-gap model.

    Features are isotropic-noise clusters (std 1/concentration) around the
    true proxy of each label, renormalized to the sphere.
    """
    if dim < 1 or classes < 2 or samples < 1:
        raise ConfigError(f"need dim >= 1, classes >= 2, samples >= 1, got {dim}, {classes}, {samples}")
    if not (0.0 <= overlap <= 1.0):
        raise ConfigError(f"overlap must be in [0, 1], got {overlap}")
    if not (1 <= rank <= min(dim, classes)):
        raise ConfigError(f"rank must be in [1, {min(dim, classes)}], got {rank}")
    if not (concentration > 0):
        raise ConfigError(f"concentration must be positive, got {concentration}")

    rng = np.random.default_rng(seed)
    ambient = 2 * dim

    proxies_d = rng.standard_normal((classes, dim))
    proxies_d /= np.linalg.norm(proxies_d, axis=1, keepdims=True)

    # rank-r reconstruction of the true proxy rows, renormalized to the sphere
    left, spectrum, right_t = np.linalg.svd(proxies_d, full_matrices=False)
    shared_raw = (left[:, :rank] * spectrum[:rank]) @ right_t[:rank]
    raw_norms = np.linalg.norm(shared_raw, axis=1)
    if np.any(raw_norms < 1e-12):
        raise ConstructionError(
            f"rank-{rank} reconstruction degenerates a proxy row (norm {raw_norms.min():.3e})"
        )
    shared_d = shared_raw / raw_norms[:, None]
    renorm_slack = float(np.abs(1.0 - raw_norms).max())

    orth_d = rng.standard_normal((classes, dim))
    if overlap < 1.0 and orth_d.shape[1] == 0:
        raise ConstructionError("no orthogonal complement available for overlap < 1")
    if classes <= dim:
        # mutually orthonormal rows when the complement has room for them
        orth_d = np.linalg.qr(orth_d.T)[0].T
    else:
        orth_d /= np.linalg.norm(orth_d, axis=1, keepdims=True)

    labels = rng.integers(0, classes, size=samples)
    noise = rng.standard_normal((samples, dim)) / concentration
    feats_d = proxies_d[labels] + noise
    feat_norms = np.linalg.norm(feats_d, axis=1)
    if np.any(feat_norms < 1e-12):
        raise ConstructionError("a sampled feature collapsed to the origin")
    feats_d /= feat_norms[:, None]

    pad_c = np.zeros((classes, dim))
    proxies_true = np.hstack([proxies_d, pad_c])
    text_shared = np.hstack([shared_d, pad_c])
    text_orthogonal = np.hstack([pad_c, orth_d])
    text = np.sqrt(overlap) * text_shared + np.sqrt(1.0 - overlap) * text_orthogonal
    features = np.hstack([feats_d, np.zeros((samples, dim))])

    return SyntheticModel(
        dim=dim,
        classes=classes,
        samples=samples,
        overlap=float(overlap),
        overlap_rank=rank,
        concentration=float(concentration),
        seed=seed,
        proxies_true=proxies_true,
        text_shared=text_shared,
        text_orthogonal=text_orthogonal,
        text_proxies=text,
        features=features,
        labels=labels,
        singular_values=spectrum,
        renorm_slack=renorm_slack,
    )


# ---------------------------------------------------------------------------
# Softmax ranking bound
# ---------------------------------------------------------------------------


@dataclass
class Prop1Report:
    """Per-sample check of the softmax ranking bound.

    For each anchor x with candidate set {t_j}, positive at index ``positive``
    and delta the softmax probability of the positive at temperature tau, the
    positive similarity must satisfy

        x.t_k + c1*tau  <=  x.t_pos  <=  x.t_k + c2*tau

    with k the nearest negative, c1 = log(delta/(1-delta)) and
    c2 = log(delta*(m-1)/(1-delta)). Saturated samples (delta exactly 0 or 1
    in float) are flagged and excluded from violation counts.
    """

    batch_size: int
    temperature: float
    delta: np.ndarray
    lower_const: np.ndarray
    upper_const: np.ndarray
    nearest_negative: np.ndarray
    lower_slack: np.ndarray
    upper_slack: np.ndarray
    excluded: np.ndarray

    def violations(self, tol: float = 1e-9) -> int:
        ok = ~self.excluded
        bad = (self.lower_slack < -tol) | (self.upper_slack < -tol)
        return int(np.count_nonzero(bad & ok))

    def min_slack(self) -> float:
        ok = ~self.excluded
        if not np.any(ok):
            return np.nan
        return float(min(self.lower_slack[ok].min(), self.upper_slack[ok].min()))


def verify_prop1(
    anchors: np.ndarray,
    candidates: np.ndarray,
    temperature: float,
    positive: int = 0,
) -> Prop1Report:
    """Check the ranking bound on explicit (anchor, candidate-set) samples.

    ``anchors`` is (N, d), ``candidates`` (N, m, d) with the positive at the
    given index. The constants are evaluated in log space (algebraically
    identical to log(delta/(1-delta)) for the exact softmax) because a float
    delta within a few ulps of 1 would poison the bound at the 1e-5 level.
    """
    x = np.asarray(anchors, dtype=np.float64)
    t = np.asarray(candidates, dtype=np.float64)
    if x.ndim != 2 or t.ndim != 3 or t.shape[0] != x.shape[0] or t.shape[2] != x.shape[1]:
        raise ConfigError(f"incompatible sample shapes {x.shape} and {t.shape}")
    m = t.shape[1]
    if m < 2:
        raise ConfigError(f"need at least 2 candidates per sample, got {m}")
    if not (temperature > 0):
        raise ConfigError(f"temperature must be positive, got {temperature}")
    if not (0 <= positive < m):
        raise ConfigError(f"positive index {positive} outside [0, {m})")

    sims = np.einsum("nd,nmd->nm", x, t)
    scores = sims / temperature
    smax = scores.max(axis=1, keepdims=True)
    lse_all = np.log(np.exp(scores - smax).sum(axis=1)) + smax[:, 0]
    delta = np.exp(scores[:, positive] - lse_all)
    excluded = (delta <= 0.0) | (delta >= 1.0)

    neg_scores = np.delete(scores, positive, axis=1)
    nmax = neg_scores.max(axis=1, keepdims=True)
    lse_neg = np.log(np.exp(neg_scores - nmax).sum(axis=1)) + nmax[:, 0]
    lower_const = scores[:, positive] - lse_neg
    upper_const = lower_const + np.log(m - 1)

    neg_sims = np.delete(sims, positive, axis=1)
    k_local = neg_sims.argmax(axis=1)
    nearest = np.where(k_local >= positive, k_local + 1, k_local)
    nearest_sim = np.take_along_axis(neg_sims, k_local[:, None], axis=1)[:, 0]

    pos_sim = sims[:, positive]
    lower_slack = pos_sim - (nearest_sim + lower_const * temperature)
    upper_slack = (nearest_sim + upper_const * temperature) - pos_sim

    return Prop1Report(
        batch_size=m,
        temperature=temperature,
        delta=delta,
        lower_const=lower_const,
        upper_const=upper_const,
        nearest_negative=nearest,
        lower_slack=lower_slack,
        upper_slack=upper_slack,
        excluded=excluded,
    )


def sample_prop1_batches(
    trials: int, batch_size: int, dim: int, seed: int = 0
) -> tuple[np.ndarray, np.ndarray]:
    """Random unit anchors and candidate sets for the ranking-bound check."""
    rng = np.random.default_rng(seed)
    x = rng.standard_normal((trials, dim))
    x /= np.linalg.norm(x, axis=1, keepdims=True)
    t = rng.standard_normal((trials, batch_size, dim))
    t /= np.linalg.norm(t, axis=2, keepdims=True)
    return x, t


# ---------------------------------------------------------------------------
# Temperature calibration across the gap
# ---------------------------------------------------------------------------


def verify_prop3(
    model: SyntheticModel, tau_text: float, tau_vision: float | None = None
) -> float:
    """Max |P' - P| between text-proxy and true-proxy predictions.

    Uses the full-overlap variant of the model's text proxies (shared
    component replaced by the true proxies exactly). At
    tau_vision = tau_text / sqrt(a) the two prediction matrices coincide; any
    other temperature generally breaks the calibration.
    """
    a = model.overlap
    if a <= 0:
        raise ConfigError("calibration temperature is undefined at zero overlap")
    if tau_vision is None:
        tau_vision = tau_text / np.sqrt(a)
    text_full = np.sqrt(a) * model.proxies_true + np.sqrt(1.0 - a) * model.text_orthogonal
    from_text = softmax_labels(model.features @ text_full.T, tau_text)
    from_vision = softmax_labels(model.features @ model.proxies_true.T, tau_vision)
    return float(np.abs(from_text - from_vision).max())


# ---------------------------------------------------------------------------
# Proxy-gap lower bound
# ---------------------------------------------------------------------------


@dataclass
class Thm1Result:
    lhs: float  # squared Frobenius distance between text and true proxies
    rhs: float  # 2C(1 - sqrt(a)) + sqrt(a) * tail spectrum energy
    holds: bool
    renorm_slack: float


def verify_thm1(model: SyntheticModel, tol: float = 1e-6) -> Thm1Result:
    """Evaluate both sides of the proxy-gap lower bound on a model."""
    diff = model.text_proxies - model.proxies_true
    lhs = float((diff * diff).sum())
    a = model.overlap
    tail = float((model.singular_values[model.overlap_rank :] ** 2).sum())
    rhs = 2.0 * model.classes * (1.0 - np.sqrt(a)) + np.sqrt(a) * tail
    return Thm1Result(lhs=lhs, rhs=rhs, holds=lhs >= rhs - tol, renorm_slack=model.renorm_slack)


# ---------------------------------------------------------------------------
# Pseudo-label noise trend
# ---------------------------------------------------------------------------


@dataclass
class Thm2Report:
    noise_levels: np.ndarray
    label_gap: np.ndarray  # ||P' - Y||_F per noise level
    proxy_gap: np.ndarray  # ||W' - W_clean||_F per noise level
    rank_correlation: float


def thm2_noise_sweep(
    model: SyntheticModel,
    noise_levels=None,
    config: PgdConfig | None = None,
) -> Thm2Report:
    """Train proxies against increasingly noisy labels and correlate the gaps.

    Targets are (1 - eps) * one-hot + eps * uniform. The clean-label solution
    (eps = 0) is the anchor; the report carries the Spearman rank correlation
    between label distance and proxy distance across the sweep.
    """
    if noise_levels is None:
        noise_levels = np.arange(0.0, 0.501, 0.05)
    eps = np.asarray(noise_levels, dtype=np.float64)
    if np.any((eps < 0) | (eps > 1)):
        raise ConfigError("noise levels must lie in [0, 1]")
    config = config or PgdConfig()

    onehot = np.zeros((model.samples, model.classes))
    onehot[np.arange(model.samples), model.labels] = 1.0
    uniform = np.full_like(onehot, 1.0 / model.classes)

    anchor, _ = learn_proxies(model.features, onehot, model.text_proxies, config)
    label_gap = np.empty(len(eps))
    proxy_gap = np.empty(len(eps))
    for i, e in enumerate(eps):
        targets = (1.0 - e) * onehot + e * uniform
        learned, _ = learn_proxies(model.features, targets, model.text_proxies, config)
        label_gap[i] = np.linalg.norm(targets - onehot)
        proxy_gap[i] = np.linalg.norm(learned - anchor)
    corr = spearmanr(label_gap, proxy_gap).statistic
    return Thm2Report(
        noise_levels=eps,
        label_gap=label_gap,
        proxy_gap=proxy_gap,
        rank_correlation=float(corr),
    )
