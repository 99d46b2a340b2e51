"""Gaussian-process regression with an anisotropic Matern kernel.

Exact posteriors from noisy observations via Cholesky factorization, plus
marginal-likelihood hyperparameter selection by log-uniform random search.
The prior mean is the constant sample mean of the observed values.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np
from scipy.linalg import LinAlgError, cho_factor, cho_solve

SQRT3 = math.sqrt(3.0)
SQRT5 = math.sqrt(5.0)

JITTER_START = 1e-10
JITTER_MAX = 1e-4

# Log-uniform search box for fit(): per-dimension length scales,
# signal variance, noise variance.
LENGTH_SCALE_BOUNDS = (1e-2, 10.0)
SIGNAL_VARIANCE_BOUNDS = (1e-2, 1e2)
NOISE_VARIANCE_BOUNDS = (1e-6, 1.0)
N_SEARCH_STARTS = 32
FIT_SEARCH_SEED = 1729


@dataclass(frozen=True)
class KernelParams:
    """Matern kernel hyperparameters with one length scale per input dimension."""

    length_scales: tuple[float, ...]
    signal_variance: float = 1.0
    noise_variance: float = 0.0
    nu: float = 2.5
    jitter: float = JITTER_START

    def __post_init__(self):
        if len(self.length_scales) == 0:
            raise ValueError("length_scales must have at least one entry")
        if any(not (math.isfinite(l) and l > 0) for l in self.length_scales):
            raise ValueError(f"length scales must be positive, got {self.length_scales}")
        if not (math.isfinite(self.signal_variance) and self.signal_variance > 0):
            raise ValueError(f"signal_variance must be positive, got {self.signal_variance}")
        if not (self.noise_variance >= 0 and math.isfinite(self.noise_variance)):
            raise ValueError(f"noise_variance must be >= 0, got {self.noise_variance}")
        if self.nu not in (1.5, 2.5):
            raise ValueError(f"nu must be 1.5 or 2.5, got {self.nu}")
        if not (self.jitter > 0):
            raise ValueError(f"jitter must be positive, got {self.jitter}")


@dataclass(frozen=True)
class Posterior:
    """Predictive mean and standard deviation at a single point."""

    mean: float
    std: float


def _scaled_distances(x1: np.ndarray, x2: np.ndarray, length_scales: np.ndarray) -> np.ndarray:
    """Pairwise length-scale-weighted Euclidean distances, shape (n1, n2)."""
    a = np.atleast_2d(x1) / length_scales
    b = np.atleast_2d(x2) / length_scales
    sq = np.sum(a**2, axis=1)[:, None] + np.sum(b**2, axis=1)[None, :] - 2.0 * (a @ b.T)
    return np.sqrt(np.maximum(sq, 0.0))


def _matern_of_distance(d: np.ndarray, params: KernelParams) -> np.ndarray:
    if params.nu == 1.5:
        t = SQRT3 * d
        return params.signal_variance * (1.0 + t) * np.exp(-t)
    t = SQRT5 * d
    return params.signal_variance * (1.0 + t + t**2 / 3.0) * np.exp(-t)


def matern_kernel(x1: Sequence[float], x2: Sequence[float], params: KernelParams) -> float:
    """Matern covariance between two points.

    With ``nu = 1.5`` this is ``s2 (1 + sqrt(3) d) exp(-sqrt(3) d)`` and with
    ``nu = 2.5`` it is ``s2 (1 + sqrt(5) d + 5 d^2 / 3) exp(-sqrt(5) d)``
    where ``d`` is the Euclidean distance after dividing each coordinate by
    its length scale.
    """
    a = np.asarray(x1, dtype=float).reshape(-1)
    b = np.asarray(x2, dtype=float).reshape(-1)
    d = len(params.length_scales)
    if a.shape != (d,) or b.shape != (d,):
        raise ValueError(
            f"points must match kernel dimension {d}, got shapes {a.shape} and {b.shape}"
        )
    ls = np.asarray(params.length_scales, dtype=float)
    dist = _scaled_distances(a[None, :], b[None, :], ls)[0, 0]
    return float(_matern_of_distance(np.asarray(dist), params))


def gram_matrix(x1: np.ndarray, x2: np.ndarray, params: KernelParams) -> np.ndarray:
    """Cross-covariance matrix between two point sets, shape (n1, n2)."""
    ls = np.asarray(params.length_scales, dtype=float)
    x1 = np.atleast_2d(np.asarray(x1, dtype=float))
    x2 = np.atleast_2d(np.asarray(x2, dtype=float))
    if x1.shape[1] != ls.size or x2.shape[1] != ls.size:
        raise ValueError(
            f"points must match kernel dimension {ls.size}, "
            f"got {x1.shape[1]} and {x2.shape[1]}"
        )
    return _matern_of_distance(_scaled_distances(x1, x2, ls), params)


@dataclass(frozen=True)
class GpModel:
    """Immutable fitted model: training data, kernel, and cached factorization.

    ``kernel.jitter`` records the diagonal jitter actually used by the
    factorization (after any escalation), so downstream consumers can
    rebuild ``K + (noise + jitter) I`` exactly.
    """

    points: np.ndarray
    observations: np.ndarray
    kernel: KernelParams
    mean_offset: float
    chol: tuple | None
    dual: np.ndarray | None

    @property
    def n_observations(self) -> int:
        return int(self.points.shape[0])


def _factor_with_jitter(k_noisy: np.ndarray, jitter_start: float) -> tuple[tuple, float]:
    """Cholesky-factor ``k_noisy + jitter I``, escalating jitter tenfold on failure."""
    n = k_noisy.shape[0]
    jitter = jitter_start
    while jitter <= JITTER_MAX:
        try:
            c = cho_factor(k_noisy + jitter * np.eye(n), lower=True)
            return c, jitter
        except LinAlgError:
            jitter *= 10.0
    raise LinAlgError(
        f"covariance factorization failed with jitter escalated up to {JITTER_MAX:g}"
    )


def build_gp(
    points: Sequence[Sequence[float]],
    observations: Sequence[float],
    params: KernelParams,
    mean_offset: float | None = None,
) -> GpModel:
    """Assemble a model with fixed hyperparameters.

    ``mean_offset`` defaults to the sample mean of the observations (zero
    when there are none).  With zero observations the model reduces to the
    prior, which still yields posteriors.
    """
    d = len(params.length_scales)
    x = np.asarray(points, dtype=float).reshape(-1, d)
    y = np.asarray(observations, dtype=float).reshape(-1)
    if x.shape[0] != y.shape[0]:
        raise ValueError(f"got {x.shape[0]} points but {y.shape[0]} observations")
    if not np.all(np.isfinite(x)) or not np.all(np.isfinite(y)):
        raise ValueError("points and observations must be finite")
    if mean_offset is None:
        mean_offset = float(np.mean(y)) if y.size else 0.0
    if y.size == 0:
        return GpModel(
            points=x, observations=y, kernel=params, mean_offset=mean_offset,
            chol=None, dual=None,
        )
    k = gram_matrix(x, x, params) + params.noise_variance * np.eye(y.size)
    chol, jitter_used = _factor_with_jitter(k, params.jitter)
    dual = cho_solve(chol, y - mean_offset)
    return GpModel(
        points=x,
        observations=y,
        kernel=replace(params, jitter=jitter_used),
        mean_offset=float(mean_offset),
        chol=chol,
        dual=dual,
    )


def posterior_at(model: GpModel, x: Sequence[float]) -> Posterior:
    """Exact posterior mean and standard deviation at one query point.

    Numerical round-off can push the predictive variance slightly negative;
    it is clamped at zero before the square root.
    """
    d = len(model.kernel.length_scales)
    q = np.asarray(x, dtype=float).reshape(-1)
    if q.shape != (d,):
        raise ValueError(f"query must have dimension {d}, got shape {q.shape}")
    prior_var = model.kernel.signal_variance
    if model.n_observations == 0:
        return Posterior(mean=model.mean_offset, std=math.sqrt(prior_var))
    if model.chol is None or model.dual is None:
        raise RuntimeError("model was constructed without a factorization; use build_gp or fit")
    kx = gram_matrix(q[None, :], model.points, model.kernel)[0]
    mean = model.mean_offset + float(kx @ model.dual)
    v = cho_solve(model.chol, kx)
    var = prior_var - float(kx @ v)
    return Posterior(mean=mean, std=math.sqrt(max(var, 0.0)))


def log_marginal_likelihood(
    points: np.ndarray, observations: np.ndarray, params: KernelParams
) -> float:
    """Log evidence of the observations under the kernel, mean-centered.

    Returns ``-inf`` when the covariance cannot be factored even after
    jitter escalation, which lets hyperparameter search skip bad candidates.
    """
    x = np.asarray(points, dtype=float)
    y = np.asarray(observations, dtype=float).reshape(-1)
    n = y.size
    yc = y - np.mean(y)
    k = gram_matrix(x, x, params) + params.noise_variance * np.eye(n)
    try:
        chol, _ = _factor_with_jitter(k, params.jitter)
    except LinAlgError:
        return -math.inf
    alpha = cho_solve(chol, yc)
    log_det = 2.0 * float(np.sum(np.log(np.diag(chol[0]))))
    return float(-0.5 * yc @ alpha - 0.5 * log_det - 0.5 * n * math.log(2.0 * math.pi))


def fit(
    points: Sequence[Sequence[float]],
    observations: Sequence[float],
    nu: float = 2.5,
    n_starts: int = N_SEARCH_STARTS,
    search_seed: int = FIT_SEARCH_SEED,
) -> GpModel:
    """Fit hyperparameters by random search over the log marginal likelihood.

    Candidates are drawn log-uniformly from fixed boxes (length scales in
    [1e-2, 10], signal variance in [1e-2, 1e2], noise variance in [1e-6, 1]);
    the geometric midpoint of the box is always evaluated too, so the search
    never does worse than that default.  The search seed is fixed, making
    the whole fit a deterministic function of its inputs.
    """
    x = np.asarray(points, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    y = np.asarray(observations, dtype=float).reshape(-1)
    if x.shape[0] != y.shape[0]:
        raise ValueError(f"got {x.shape[0]} points but {y.shape[0]} observations")
    if x.shape[0] == 0:
        raise ValueError("fit requires at least one observation")
    if not np.all(np.isfinite(x)) or not np.all(np.isfinite(y)):
        raise ValueError("points and observations must be finite")
    d = x.shape[1]
    rng = np.random.default_rng(search_seed)

    def log_uniform(lo: float, hi: float, size=None):
        return np.exp(rng.uniform(math.log(lo), math.log(hi), size=size))

    midpoint = KernelParams(
        length_scales=tuple([math.sqrt(LENGTH_SCALE_BOUNDS[0] * LENGTH_SCALE_BOUNDS[1])] * d),
        signal_variance=math.sqrt(SIGNAL_VARIANCE_BOUNDS[0] * SIGNAL_VARIANCE_BOUNDS[1]),
        noise_variance=math.sqrt(NOISE_VARIANCE_BOUNDS[0] * NOISE_VARIANCE_BOUNDS[1]),
        nu=nu,
    )
    candidates = [midpoint]
    for _ in range(n_starts):
        candidates.append(
            KernelParams(
                length_scales=tuple(log_uniform(*LENGTH_SCALE_BOUNDS, size=d)),
                signal_variance=float(log_uniform(*SIGNAL_VARIANCE_BOUNDS)),
                noise_variance=float(log_uniform(*NOISE_VARIANCE_BOUNDS)),
                nu=nu,
            )
        )
    best_params, best_lml = None, -math.inf
    for cand in candidates:
        lml = log_marginal_likelihood(x, y, cand)
        if lml > best_lml:
            best_params, best_lml = cand, lml
    if best_params is None:
        raise LinAlgError("no hyperparameter candidate produced a factorable covariance")
    return build_gp(x, y, best_params)
