# src/deepfidelity/pipeline/experiment.py
"""End to end runs: the desk experiment, the ablation grid and the SSAA depth sweep."""
import dataclasses
import logging
from dataclasses import dataclass, field
from pathlib import Path

from ..ssaaformer import ModelConfig
from ..svr import SVRTrainConfig, save_svr, svr_fit
from .features import extract_features
from .manifest import map_quality
from .metrics import evaluate
from .synthetic import SynthConfig, gen_synthetic, split_manifest
from .training import TrainConfig, train_backbone, training_targets

logger = logging.getLogger(__name__)

#: ``name -> (uses SSAA, target mode)`` of the ablation variants.
ABLATION_VARIANTS = {
    "baseline": (False, "binary"),
    "ssaa": (True, "binary"),
    "fidelity": (False, "fidelity"),
    "ssaa+fidelity": (True, "fidelity"),
}


@dataclass
class RunResult:
    """Artifacts and metrics of one trained and evaluated variant."""

    report: object
    model_path: Path
    svr_path: Path
    report_path: Path
    losses: list = field(default_factory=list)


def fit_and_evaluate(
    train_records,
    test_records,
    work_dir,
    model_config=None,
    train_config=None,
    svr_config=None,
    progress=True,
):
    """Train backbone and regressor on ``train_records``, evaluate on ``test_records``.

    Writes ``model.ssaf``, ``train_features.csv``, ``svr.svrm`` and
    ``report.txt`` to ``work_dir``.
    """
    work_dir = Path(work_dir)
    work_dir.mkdir(parents=True, exist_ok=True)
    model_config = model_config or ModelConfig.desk()
    train_config = train_config or TrainConfig()
    svr_config = svr_config or SVRTrainConfig(seed=train_config.seed)

    trained = train_backbone(
        train_records,
        model_config,
        train_config,
        model_path=work_dir / "model.ssaf",
        progress=progress,
    )
    features = extract_features(
        trained.model,
        train_records,
        work_dir / "train_features.csv",
        target_mode=train_config.target_mode,
        workers=train_config.workers,
        progress=progress,
    )
    targets = training_targets(train_records, train_config.target_mode)
    svr_model = svr_fit(features, targets, svr_config)
    svr_path = save_svr(svr_model, work_dir / "svr.svrm")
    report = evaluate(
        trained.model, svr_model, test_records, workers=train_config.workers, progress=progress
    )
    report_path = report.save(work_dir / "report.txt")
    return RunResult(
        report=report,
        model_path=trained.model_path,
        svr_path=svr_path,
        report_path=report_path,
        losses=trained.losses,
    )


def run_pipeline(
    work_dir,
    synth_config=None,
    model_config=None,
    train_config=None,
    svr_config=None,
    test_fraction=0.2,
    progress=True,
):
    """Generate a synthetic dataset and run every pipeline step on it.

    Parameters
    ----------
    work_dir: str, ~pathlib.Path
        Directory receiving the dataset (``data``) and the run artifacts
        (``run``).
    synth_config: ~deepfidelity.pipeline.synthetic.SynthConfig, None
        Dataset settings.
    model_config: ~deepfidelity.ssaaformer.ModelConfig, None
        Backbone architecture.
    train_config: ~deepfidelity.pipeline.training.TrainConfig, None
        Backbone optimization settings.
    svr_config: ~deepfidelity.svr.SVRTrainConfig, None
        Regressor settings.
    test_fraction: float, default=0.2
        Stratified share of held out samples.

    Returns
    -------
    RunResult
        Metrics and artifact paths.
    """
    work_dir = Path(work_dir)
    synth_config = synth_config or SynthConfig()
    data_dir = work_dir / "data"
    manifest = gen_synthetic(synth_config, data_dir, progress=progress)
    train_path, test_path = split_manifest(manifest, test_fraction, synth_config.seed)
    train_records, stats = map_quality(train_path, data_dir / "train_mapped.csv")
    test_records, _ = map_quality(
        test_path,
        data_dir / "test_mapped.csv",
        stats=stats,
        stats_out=data_dir / "test_mapped.stats.json",
    )
    result = fit_and_evaluate(
        train_records,
        test_records,
        work_dir / "run",
        model_config,
        train_config,
        svr_config,
        progress,
    )
    logger.info("pipeline finished:\n%s", result.report.render_table())
    return result


def run_ablation(
    train_records,
    test_records,
    work_dir,
    model_config=None,
    train_config=None,
    svr_config=None,
    variants=None,
    progress=True,
):
    """Evaluate the SSAA and quality mapping variants.

    ``baseline`` uses neither, ``ssaa`` only symmetric augmentation,
    ``fidelity`` only fidelity targets and ``ssaa+fidelity`` both.

    Returns
    -------
    dict
        ``variant name -> EvalReport``.
    """
    model_config = model_config or ModelConfig.desk()
    train_config = train_config or TrainConfig()
    reports = {}
    for name in variants or ABLATION_VARIANTS:
        use_ssaa, target_mode = ABLATION_VARIANTS[name]
        variant_model = dataclasses.replace(
            model_config, ssaa_blocks=model_config.stage_depths[0] if use_ssaa else 0
        )
        variant_train = dataclasses.replace(train_config, target_mode=target_mode)
        logger.info("ablation variant '%s'", name)
        result = fit_and_evaluate(
            train_records,
            test_records,
            Path(work_dir) / name.replace("+", "_"),
            variant_model,
            variant_train,
            svr_config,
            progress,
        )
        reports[name] = result.report
    return reports


def run_ssaa_sweep(
    train_records,
    test_records,
    work_dir,
    model_config=None,
    train_config=None,
    svr_config=None,
    depths=None,
    progress=True,
):
    """Evaluate backbones with SSAA in the first ``k`` stage 1 blocks.

    Returns
    -------
    dict
        ``k -> EvalReport`` for every ``k`` in ``depths`` (default all
        ``0 .. n1``).
    """
    model_config = model_config or ModelConfig.desk()
    depths = range(model_config.stage_depths[0] + 1) if depths is None else depths
    reports = {}
    for depth in depths:
        result = fit_and_evaluate(
            train_records,
            test_records,
            Path(work_dir) / f"ssaa{depth}",
            dataclasses.replace(model_config, ssaa_blocks=depth),
            train_config,
            svr_config,
            progress,
        )
        reports[depth] = result.report
    return reports
