# src/deepfidelity/pipeline/__init__.py
# flake8: noqa
"""Dataset generation, training, feature extraction, evaluation and the command line."""
from .checks import gradient_suite, model_gradient_error, op_gradient_errors
from .experiment import (
    ABLATION_VARIANTS,
    RunResult,
    fit_and_evaluate,
    run_ablation,
    run_pipeline,
    run_ssaa_sweep,
)
from .features import embed_records, extract_features, read_features, write_features
from .images import load_image, load_images, read_pixels, write_pixels
from .manifest import (
    ingest_manifest,
    load_quality_stats,
    map_quality,
    rescore,
    save_quality_stats,
    write_manifest,
)
from .metrics import EvalReport, auc, evaluate, evaluate_scores, score_records
from .synthetic import SynthConfig, gen_synthetic, lr_asymmetry, split_manifest
from .training import TrainConfig, TrainResult, train_backbone, training_targets
from .visualize import dump_feature_maps
