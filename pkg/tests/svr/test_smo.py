# tests/svr/test_smo.py
"""Epsilon SVR fitting by sequential minimal optimization."""
import dataclasses

import numpy as np
import pytest
from scipy.optimize import minimize

from deepfidelity.errors import ConfigurationError, DimensionError, DomainError
from deepfidelity.svr import (
    SVRModel,
    SVRTrainConfig,
    dual_objective,
    dump_svr,
    gram_matrix,
    kkt_report,
    rbf_kernel,
    svr_fit,
    svr_predict,
    training_coefs,
)


def _qp_oracle(kernel, targets, C, epsilon):
    """Optimal value of the stacked dual from a dense SLSQP solve."""
    n = targets.shape[0]
    signs = np.concatenate([np.ones(n), -np.ones(n)])
    quadratic = np.outer(signs, signs) * np.tile(kernel, (2, 2))
    linear = np.concatenate([epsilon - targets, epsilon + targets])
    result = minimize(
        lambda z: 0.5 * z @ quadratic @ z + linear @ z,
        np.zeros(2 * n),
        jac=lambda z: quadratic @ z + linear,
        bounds=[(0.0, C)] * (2 * n),
        constraints=[{"type": "eq", "fun": lambda z: signs @ z, "jac": lambda z: signs}],
        method="SLSQP",
        options={"ftol": 1e-14, "maxiter": 2000},
    )
    return float(result.fun)


@pytest.fixture
def sine():
    """40 samples of ``sin(x)`` on ``[0, pi]``."""
    features = np.linspace(0.0, np.pi, 40).reshape(-1, 1)
    return features, np.sin(features[:, 0])


@pytest.fixture
def sine_config():
    """Tight tube and large box for the sine fixture."""
    return SVRTrainConfig(C=10.0, epsilon=0.01, sigma=0.5, max_passes=500)


@pytest.fixture
def sine_model(sine, sine_config):
    """Regressor fitted on the sine fixture."""
    return svr_fit(*sine, sine_config)


def test_constant_targets_give_constant_model():
    """Test targets inside the tube of a constant."""
    model = svr_fit([[0.0], [1.0], [2.0], [5.0]], [0.3] * 4)
    assert model.n_support == 0
    assert model.bias == pytest.approx(0.3, abs=1e-12)
    np.testing.assert_allclose(svr_predict(model, [[-4.0], [9.0]]), 0.3, atol=1e-12)


def test_ten_point_problem_matches_qp_oracle():
    """Test the dual objective of a 1-D problem."""
    features = np.linspace(-1.0, 2.0, 10).reshape(-1, 1)
    targets = np.array([0.1, 0.3, 0.2, 0.6, 0.7, 0.65, 0.9, 0.4, 0.3, 0.35])
    config = SVRTrainConfig(
        C=1.0, epsilon=0.05, tolerance=1e-7, max_passes=5000, sigma=0.8
    )
    model = svr_fit(features, targets, config)
    kernel = gram_matrix(model.standardize(features), model.sigma)
    oracle = _qp_oracle(kernel, targets, config.C, config.epsilon)
    assert dual_objective(model, features, targets, config.epsilon) == pytest.approx(
        oracle, abs=1e-4
    )


@pytest.mark.parametrize("seed", range(25))
def test_random_problems_match_qp_oracle(seed):
    """Test small random problems with up to four features and their KKT residual."""
    rng = np.random.default_rng(seed)
    n, d = int(rng.integers(5, 21)), int(rng.integers(1, 5))
    features = rng.standard_normal((n, d))
    targets = rng.uniform(0.0, 1.0, n)
    config = SVRTrainConfig(C=float(rng.uniform(0.5, 5.0)), tolerance=1e-7, max_passes=5000)
    model = svr_fit(features, targets, config)
    kernel = gram_matrix(model.standardize(features), model.sigma)
    oracle = _qp_oracle(kernel, targets, config.C, config.epsilon)
    assert dual_objective(model, features, targets, config.epsilon) == pytest.approx(
        oracle, abs=1e-4
    )
    assert kkt_report(model, features, targets, config) < 1e-3


def test_sine_fit_quality(sine, sine_model, sine_config):
    """Test training RMSE and the residual at a training point."""
    features, targets = sine
    predictions = svr_predict(sine_model, features)
    assert np.sqrt(np.mean((predictions - targets) ** 2)) <= 0.05
    assert abs(svr_predict(sine_model, features[7]) - targets[7]) <= sine_config.epsilon + 0.05


def test_dual_feasibility(sine_model, sine_config):
    """Test the box and the equality constraint."""
    assert np.all(np.abs(sine_model.dual_coefs) <= sine_config.C + 1e-9)
    assert abs(sine_model.dual_coefs.sum()) <= 1e-6


def test_tube_property(sine, sine_model, sine_config):
    """Test residuals of non support points."""
    features, targets = sine
    beta = training_coefs(sine_model, features)
    residual = np.abs(targets - svr_predict(sine_model, features))
    assert np.all(residual[beta == 0] <= sine_config.epsilon + sine_config.tolerance)


def test_kkt_of_converged_model(sine, sine_model, sine_config):
    """Test the convergence contract."""
    assert kkt_report(sine_model, *sine, sine_config) < sine_config.tolerance


def test_kkt_detects_box_violation(sine, sine_model, sine_config):
    """Test a coefficient forced to twice the box."""
    coefs = sine_model.dual_coefs.copy()
    coefs[0] = 2.0 * sine_config.C
    broken = dataclasses.replace(sine_model, dual_coefs=coefs)
    assert kkt_report(broken, *sine, sine_config) >= sine_config.C


def test_kkt_matches_independent_check(sine, sine_model, sine_config):
    """Test against a loop over the optimality conditions."""
    features, targets = sine
    C, epsilon = sine_config.C, sine_config.epsilon
    standardized = (features - sine_model.feature_mean) / sine_model.feature_std
    beta = np.zeros(len(targets))
    for vector, coef in zip(sine_model.support_vectors, sine_model.dual_coefs):
        beta[np.flatnonzero((standardized == vector).all(axis=1))[0]] = coef
    worst = abs(sum(beta))
    for i, (x, t) in enumerate(zip(standardized, targets)):
        prediction = sine_model.bias + sum(
            b * rbf_kernel(s, x, sine_model.sigma)
            for b, s in zip(sine_model.dual_coefs, sine_model.support_vectors)
        )
        r = t - prediction
        if abs(beta[i]) <= 1e-8:
            violation = max(abs(r) - epsilon, 0.0)
        elif abs(abs(beta[i]) - C) <= 1e-9 * C:
            violation = max(epsilon - r, 0.0) if beta[i] > 0 else max(r + epsilon, 0.0)
        else:
            violation = abs(r - epsilon) if beta[i] > 0 else abs(r + epsilon)
        worst = max(worst, violation)
    assert kkt_report(sine_model, features, targets, sine_config) == pytest.approx(
        worst, abs=1e-8
    )


def test_predict_without_support_vectors():
    """Test that the bias is returned everywhere."""
    model = SVRModel(
        support_vectors=np.zeros((0, 2)),
        dual_coefs=np.zeros(0),
        bias=0.42,
        sigma=1.0,
        feature_mean=np.zeros(2),
        feature_std=np.ones(2),
    )
    assert svr_predict(model, [3.0, -1.0]) == 0.42
    np.testing.assert_array_equal(svr_predict(model, np.ones((3, 2))), [0.42] * 3)


def test_predict_ignores_support_vector_order(sine, sine_model):
    """Test permuted support vectors."""
    order = np.random.default_rng(0).permutation(sine_model.n_support)
    permuted = dataclasses.replace(
        sine_model,
        support_vectors=sine_model.support_vectors[order],
        dual_coefs=sine_model.dual_coefs[order],
    )
    np.testing.assert_allclose(
        svr_predict(permuted, sine[0]), svr_predict(sine_model, sine[0]), atol=1e-12
    )


def test_fit_is_deterministic(sine, sine_config):
    """Test identical model bytes of two fits."""
    assert dump_svr(svr_fit(*sine, sine_config)) == dump_svr(svr_fit(*sine, sine_config))


def test_median_sigma_and_fallback(caplog):
    """Test the median heuristic and its degenerate case."""
    model = svr_fit([[0.0], [1.0], [2.0]], [0.1, 0.5, 0.9], SVRTrainConfig(epsilon=0.01))
    standardized = model.standardize([[0.0], [1.0], [2.0]])[:, 0]
    assert model.sigma == pytest.approx(abs(standardized[1] - standardized[0]))
    constant = svr_fit([[1.0, 1.0]] * 3, [0.1, 0.5, 0.9])
    assert constant.sigma == 1.0
    assert "falling back" in caplog.text


def test_fit_errors():
    """Test sample counts, finiteness and dimensions."""
    with pytest.raises(DomainError):
        svr_fit([[0.0]], [1.0])
    with pytest.raises(DomainError):
        svr_fit([[0.0], [np.nan]], [1.0, 2.0])
    with pytest.raises(DimensionError):
        svr_fit([[0.0], [1.0]], [1.0, 2.0, 3.0])
    model = svr_fit([[0.0, 1.0], [1.0, 0.0], [2.0, 2.0]], [0.1, 0.5, 0.9])
    with pytest.raises(DimensionError):
        svr_predict(model, [1.0, 2.0, 3.0])


@pytest.mark.parametrize(
    "overrides",
    [{"C": 0.0}, {"epsilon": -0.1}, {"tolerance": 0.0}, {"max_passes": 0}, {"sigma": "mean"},
     {"sigma": -1.0}, {"seed": -3}],
)
def test_invalid_config(overrides):
    """Test the hyperparameter checks."""
    with pytest.raises(ConfigurationError):
        SVRTrainConfig(**overrides)
