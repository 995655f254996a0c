# src/deepfidelity/svr/__init__.py
# flake8: noqa
"""Epsilon support vector regression with the RBF kernel."""
from .kernel import gram_matrix, rbf_kernel
from .serialization import dump_svr, load_svr, parse_svr, save_svr
from .smo import (
    SVRModel,
    SVRTrainConfig,
    dual_objective,
    feature_statistics,
    kkt_report,
    median_sigma,
    solve_dual,
    svr_fit,
    svr_predict,
    training_coefs,
)
