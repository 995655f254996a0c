# src/deepfidelity/svr/smo.py
"""Epsilon insensitive support vector regression.

The dual is solved over the stacked variables ``z = [alpha; alpha*]`` of
length ``2n``::

    min  0.5 z^T Q z + p^T z
    s.t. y^T z = 0,  0 <= z <= C

with signs ``y = [+1; -1]``, ``Q_ij = y_i y_j K(x_i, x_j)`` and
``p = [eps - t; eps + t]`` for targets ``t``. Sequential minimal
optimization updates the maximal violating pair of variables until the
violation drops below the tolerance. The regression function is
``f(x) = sum_i beta_i K(s_i, x) + b`` with ``beta = alpha - alpha*``.
"""
import logging
from dataclasses import dataclass

import numpy as np
from scipy.spatial.distance import pdist

from ..errors import ConfigurationError, DimensionError, DomainError
from ..seeding import make_rng
from .kernel import gram_matrix

logger = logging.getLogger(__name__)

#: Dual coefficients at or below this magnitude are dropped after fitting.
SUPPORT_THRESHOLD = 1e-8
#: Consecutive vanishing pair updates before a random partner is drawn.
STALL_LIMIT = 10
_TAU = 1e-12


@dataclass(frozen=True)
class SVRTrainConfig:
    """Hyperparameters of :func:`svr_fit`.

    Parameters
    ----------
    C: float, default=1.0
        Box constraint of the dual coefficients.
    epsilon: float, default=0.05
        Half width of the loss free tube around the targets.
    tolerance: float, default=1e-3
        Stopping tolerance on the maximal pair violation.
    max_passes: int, default=50
        Upper bound of pair updates, in multiples of ``2n``.
    sigma: float, str, default="median"
        Kernel width in standardized feature space, or ``"median"`` for the
        median pairwise distance of the standardized training features.
    seed: int, default=42
        Seed of the randomized partner choice after stalls.
    """

    C: float = 1.0
    epsilon: float = 0.05
    tolerance: float = 1e-3
    max_passes: int = 50
    sigma: object = "median"
    seed: int = 42

    def __post_init__(self):
        if not self.C > 0:
            raise ConfigurationError(f"C must be positive, got {self.C}")
        if not self.epsilon >= 0:
            raise ConfigurationError(f"epsilon must be non-negative, got {self.epsilon}")
        if not self.tolerance > 0:
            raise ConfigurationError(f"tolerance must be positive, got {self.tolerance}")
        if self.max_passes < 1:
            raise ConfigurationError(f"max_passes must be positive, got {self.max_passes}")
        if isinstance(self.sigma, str):
            if self.sigma != "median":
                raise ConfigurationError(f"sigma must be a number or 'median', got '{self.sigma}'")
        elif not self.sigma > 0:
            raise ConfigurationError(f"sigma must be positive, got {self.sigma}")
        if self.seed < 0:
            raise ConfigurationError(f"seed must be non-negative, got {self.seed}")


@dataclass(frozen=True, eq=False)
class SVRModel:
    """Fitted regressor.

    Parameters
    ----------
    support_vectors: numpy.ndarray
        ``[n_sv, d]`` standardized support vectors.
    dual_coefs: numpy.ndarray
        ``[n_sv]`` coefficients ``beta = alpha - alpha*``.
    bias: float
        Offset of the regression function.
    sigma: float
        Kernel width in standardized feature space.
    feature_mean, feature_std: numpy.ndarray
        ``[d]`` standardization statistics of the training features.
    """

    support_vectors: np.ndarray
    dual_coefs: np.ndarray
    bias: float
    sigma: float
    feature_mean: np.ndarray
    feature_std: np.ndarray

    @property
    def dimension(self):
        """Feature dimension ``d``."""
        return int(self.feature_mean.shape[0])

    @property
    def n_support(self):
        """Number of stored support vectors."""
        return int(self.dual_coefs.shape[0])

    def standardize(self, features):
        """Z-score ``features`` with the training statistics."""
        features = np.asarray(features, dtype=np.float64)
        if features.shape[-1] != self.dimension:
            raise DimensionError(
                f"model expects {self.dimension} features, got {features.shape[-1]}"
            )
        return (features - self.feature_mean) / self.feature_std


def _check_training_data(features, targets):
    features = np.asarray(features, dtype=np.float64)
    targets = np.asarray(targets, dtype=np.float64).reshape(-1)
    if features.ndim != 2:
        raise DimensionError(f"features must be an [n, d] matrix, got shape {features.shape}")
    if features.shape[0] != targets.shape[0]:
        raise DimensionError(f"{features.shape[0]} feature rows but {targets.shape[0]} targets")
    if targets.shape[0] < 2:
        raise DomainError(f"at least 2 samples are needed, got {targets.shape[0]}")
    if not (np.all(np.isfinite(features)) and np.all(np.isfinite(targets))):
        raise DomainError("features and targets must be finite")
    return features, targets


def feature_statistics(features):
    """Column mean and standard deviation, zero deviations replaced by 1."""
    mean = features.mean(axis=0)
    std = features.std(axis=0)
    std[std == 0] = 1.0
    return mean, std


def median_sigma(standardized):
    """Median pairwise Euclidean distance, ``1.0`` if that vanishes."""
    median = float(np.median(pdist(standardized, "euclidean")))
    if median <= 0:
        logger.warning("median pairwise distance is 0, falling back to sigma = 1.0")
        return 1.0
    return median


def _bias(z, gradient, signs, C):
    """Offset from the free variables, or the middle of the feasible range."""
    y_gradient = signs * gradient
    upper = z >= C
    lower = z <= 0
    free = ~(upper | lower)
    if np.any(free):
        return -float(y_gradient[free].mean())
    plus = signs > 0
    upper_bound = np.concatenate(
        [y_gradient[upper & ~plus], y_gradient[lower & plus], [np.inf]]
    ).min()
    lower_bound = np.concatenate(
        [y_gradient[upper & plus], y_gradient[lower & ~plus], [-np.inf]]
    ).max()
    return -float((upper_bound + lower_bound) / 2.0)


def _update_pair(z, i, j, gradient, signs, q_i, q_j, C):
    """Analytic solution of the two variable subproblem, clipped to the box."""
    old_i, old_j = z[i], z[j]
    if signs[i] != signs[j]:
        quad = q_i[i] + q_j[j] + 2.0 * q_i[j]
        delta = (-gradient[i] - gradient[j]) / max(quad, _TAU)
        diff = old_i - old_j
        new_i, new_j = old_i + delta, old_j + delta
        if diff > 0:
            if new_j < 0:
                new_j, new_i = 0.0, diff
        elif new_i < 0:
            new_i, new_j = 0.0, -diff
        if diff > 0:
            if new_i > C:
                new_i, new_j = C, C - diff
        elif new_j > C:
            new_j, new_i = C, C + diff
    else:
        quad = q_i[i] + q_j[j] - 2.0 * q_i[j]
        delta = (gradient[i] - gradient[j]) / max(quad, _TAU)
        total = old_i + old_j
        new_i, new_j = old_i - delta, old_j + delta
        if total > C:
            if new_i > C:
                new_i, new_j = C, total - C
        elif new_j < 0:
            new_j, new_i = 0.0, total
        if total > C:
            if new_j > C:
                new_j, new_i = C, total - C
        elif new_i < 0:
            new_i, new_j = 0.0, total
    z[i], z[j] = new_i, new_j
    return new_i - old_i, new_j - old_j


def solve_dual(kernel, targets, C, epsilon, tolerance, max_iterations, rng=None):
    """Run sequential minimal optimization on the stacked dual.

    Parameters
    ----------
    kernel: numpy.ndarray
        ``[n, n]`` Gram matrix of the training features.
    targets: numpy.ndarray
        ``[n]`` regression targets.
    C, epsilon, tolerance: float
        Box constraint, tube half width and stopping tolerance.
    max_iterations: int
        Maximal number of pair updates.
    rng: numpy.random.Generator, None, default=None
        Source of the randomized partner choice after stalls.

    Returns
    -------
    tuple
        ``(beta [n], bias, pair updates, converged)``.
    """
    n = targets.shape[0]
    signs = np.concatenate([np.ones(n), -np.ones(n)])
    z = np.zeros(2 * n)
    gradient = np.concatenate([epsilon - targets, epsilon + targets])

    def column(index):
        return signs[index] * signs * np.tile(kernel[:, index % n], 2)

    stalls = 0
    warned = False
    converged = False
    updates = 0
    for _ in range(max_iterations):
        violation = -signs * gradient
        plus = signs > 0
        up = (plus & (z < C)) | (~plus & (z > 0))
        low = (plus & (z > 0)) | (~plus & (z < C))
        if not np.any(up) or not np.any(low):
            converged = True
            break
        i = int(np.flatnonzero(up)[np.argmax(violation[up])])
        j = int(np.flatnonzero(low)[np.argmin(violation[low])])
        if violation[i] - violation[j] < tolerance:
            converged = True
            break
        if stalls >= STALL_LIMIT and rng is not None:
            candidates = np.flatnonzero(low & (violation < violation[i] - tolerance))
            candidates = candidates[candidates != i]
            if candidates.size:
                j = int(rng.choice(candidates))
                if not warned:
                    logger.warning("SMO stalled, drawing random working partners")
                    warned = True
        q_i, q_j = column(i), column(j)
        step_i, step_j = _update_pair(z, i, j, gradient, signs, q_i, q_j, C)
        gradient += q_i * step_i + q_j * step_j
        if max(abs(step_i), abs(step_j)) < 1e-14:
            stalls += 1
        else:
            stalls = 0
        updates += 1

    bias = _bias(z, gradient, signs, C)
    return z[:n] - z[n:], bias, updates, converged


def svr_fit(features, targets, config=None):
    """Fit an epsilon support vector regressor with the RBF kernel.

    Features are standardized with their training statistics, which are
    kept in the model.

    Parameters
    ----------
    features: ~collections.abc.Sequence
        ``[n, d]`` training features, ``n >= 2``.
    targets: ~collections.abc.Sequence
        ``[n]`` finite regression targets.
    config: SVRTrainConfig, None, default=None
        Hyperparameters, defaults if omitted.

    Returns
    -------
    SVRModel
        Regressor keeping the vectors with ``|beta| > 1e-8``.

    Example
    -------
    >>> model = svr_fit([[0.0], [1.0], [2.0]], [0.3, 0.3, 0.3])
    >>> model.n_support, round(model.bias, 12)
    (0, 0.3)
    """
    config = config or SVRTrainConfig()
    features, targets = _check_training_data(features, targets)
    mean, std = feature_statistics(features)
    standardized = (features - mean) / std
    sigma = median_sigma(standardized) if config.sigma == "median" else float(config.sigma)

    n = targets.shape[0]
    beta, bias, iterations, converged = solve_dual(
        gram_matrix(standardized, sigma),
        targets,
        config.C,
        config.epsilon,
        config.tolerance,
        config.max_passes * 2 * n,
        rng=make_rng(config.seed, "svr"),
    )
    if not converged:
        logger.warning(
            "SMO stopped after %d pair updates without reaching tolerance %g",
            iterations,
            config.tolerance,
        )
    support = np.abs(beta) > SUPPORT_THRESHOLD
    model = SVRModel(
        support_vectors=standardized[support].copy(),
        dual_coefs=beta[support].copy(),
        bias=bias,
        sigma=sigma,
        feature_mean=mean,
        feature_std=std,
    )
    logger.info(
        "fitted SVR on %d samples: %d support vectors, sigma %.4g, %d pair updates",
        n,
        model.n_support,
        sigma,
        iterations,
    )
    return model


def svr_predict(model, x):
    """Evaluate the regression function.

    Parameters
    ----------
    model: SVRModel
        Fitted regressor.
    x: ~collections.abc.Sequence
        Raw ``[d]`` feature vector or ``[m, d]`` matrix.

    Returns
    -------
    float, numpy.ndarray
        Unclamped prediction(s).
    """
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    standardized = model.standardize(x.reshape(1, -1) if single else x)
    if model.n_support == 0:
        predictions = np.full(standardized.shape[0], float(model.bias))
    else:
        kernel = gram_matrix(standardized, model.sigma, model.support_vectors)
        predictions = kernel @ model.dual_coefs + model.bias
    return float(predictions[0]) if single else predictions


def training_coefs(model, features):
    """Dual coefficient of every training row, zero for non support vectors.

    Stored support vectors are matched to the first unassigned identical
    standardized row.
    """
    standardized = model.standardize(features)
    beta = np.zeros(standardized.shape[0])
    assigned = np.zeros(standardized.shape[0], dtype=bool)
    for vector, coef in zip(model.support_vectors, model.dual_coefs):
        matches = np.flatnonzero(np.all(standardized == vector, axis=1) & ~assigned)
        if matches.size == 0:
            logger.warning("support vector without matching training row ignored")
            continue
        beta[matches[0]] = coef
        assigned[matches[0]] = True
    return beta


def dual_objective(model, features, targets, epsilon):
    """Dual objective ``0.5 b^T K b - t^T b + eps * sum|b|`` of a fit."""
    features, targets = _check_training_data(features, targets)
    beta = training_coefs(model, features)
    kernel = gram_matrix(model.standardize(features), model.sigma)
    return float(
        0.5 * beta @ kernel @ beta - targets @ beta + epsilon * np.abs(beta).sum()
    )


def kkt_report(model, features, targets, config=None):
    """Largest violation of the optimality conditions of a fit.

    With residuals ``r = t - f(x)``, a zero coefficient requires
    ``|r| <= eps``, a free positive (negative) coefficient ``r = eps``
    (``r = -eps``) and a coefficient at ``+C`` (``-C``) ``r >= eps``
    (``r <= -eps``). Box excess ``|beta| - C`` and the residual of
    ``sum(beta) = 0`` count as violations as well.

    Returns
    -------
    float
        Non negative maximal violation.
    """
    config = config or SVRTrainConfig()
    features, targets = _check_training_data(features, targets)
    C, epsilon = config.C, config.epsilon
    beta = training_coefs(model, features)
    residual = targets - svr_predict(model, features)

    at_bound = np.isclose(np.abs(beta), C, rtol=0.0, atol=1e-9 * C)
    zero = np.abs(beta) <= SUPPORT_THRESHOLD
    positive = (beta > 0) & ~zero
    negative = (beta < 0) & ~zero

    violations = np.zeros_like(residual)
    violations[zero] = np.maximum(np.abs(residual[zero]) - epsilon, 0.0)
    free_pos = positive & ~at_bound
    free_neg = negative & ~at_bound
    violations[free_pos] = np.abs(residual[free_pos] - epsilon)
    violations[free_neg] = np.abs(residual[free_neg] + epsilon)
    upper = positive & at_bound
    lower = negative & at_bound
    violations[upper] = np.maximum(epsilon - residual[upper], 0.0)
    violations[lower] = np.maximum(residual[lower] + epsilon, 0.0)

    box = np.maximum(np.abs(model.dual_coefs) - C, 0.0)
    equality = abs(float(model.dual_coefs.sum()))
    return float(max(violations.max(initial=0.0), box.max(initial=0.0), equality))
