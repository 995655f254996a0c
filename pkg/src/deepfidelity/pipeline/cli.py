# src/deepfidelity/pipeline/cli.py
"""Command line interface of the deepfidelity pipeline.

Every step reads and writes files, so the steps can run as independent
processes::

    deepfidelity gen --out data
    deepfidelity map-quality data/train.csv --out data/train_mapped.csv
    deepfidelity map-quality data/test.csv --out data/test_mapped.csv \\
        --stats data/train_mapped.stats.json
    deepfidelity train-backbone data/train_mapped.csv --out run/model.ssaf
    deepfidelity extract-features data/train_mapped.csv --model run/model.ssaf \\
        --out run/train_features.csv
    deepfidelity train-svr run/train_features.csv --out run/svr.svrm
    deepfidelity eval data/test_mapped.csv --model run/model.ssaf \\
        --svr run/svr.svrm --out run/report.txt

Exit codes are ``0`` on success, ``1`` on validation errors and ``2`` on
I/O errors.
"""
import argparse
import logging
import sys
from pathlib import Path

import pandas as pd

from .. import __version__
from ..errors import DeepFidelityError
from ..fidelity import proxy_quality, threshold_classify
from ..ssaaformer import ModelConfig, load_model
from ..svr import SVRTrainConfig, load_svr, save_svr, svr_fit
from .checks import gradient_suite
from .experiment import ABLATION_VARIANTS, run_ablation, run_pipeline, run_ssaa_sweep
from .features import extract_features, read_features
from .manifest import ingest_manifest, map_quality
from .metrics import evaluate, score_records
from .synthetic import SynthConfig, gen_synthetic, split_manifest
from .training import TARGET_MODES, TrainConfig, train_backbone
from .visualize import dump_feature_maps

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_INVALID = 1
EXIT_IO = 2

PRESETS = {
    "desk": ModelConfig.desk,
    "full": ModelConfig.full,
    "tiny": ModelConfig.tiny,
}


def _sigma(value):
    if value == "median":
        return value
    try:
        return float(value)
    except ValueError as error:
        raise argparse.ArgumentTypeError(
            f"sigma must be 'median' or a number, got '{value}'"
        ) from error


def _add_model_options(parser):
    group = parser.add_argument_group("backbone")
    group.add_argument("--preset", choices=sorted(PRESETS), default="desk")
    group.add_argument(
        "--ssaa-blocks",
        type=int,
        default=None,
        help="leading stage 1 blocks with symmetric attention (preset default)",
    )


def _add_train_options(parser):
    group = parser.add_argument_group("training")
    group.add_argument("--epochs", type=int, default=15)
    group.add_argument("--batch-size", type=int, default=16)
    group.add_argument("--lr", type=float, default=1.2e-3)
    group.add_argument("--weight-decay", type=float, default=0.05)
    group.add_argument("--target-mode", choices=TARGET_MODES, default="fidelity")
    group.add_argument("--hflip", action="store_true", help="random mirror augmentation")


def _add_svr_options(parser):
    group = parser.add_argument_group("regressor")
    group.add_argument("--C", dest="svr_c", type=float, default=1.0)
    group.add_argument("--epsilon", type=float, default=0.05)
    group.add_argument("--tolerance", type=float, default=1e-3)
    group.add_argument("--max-passes", type=int, default=50)
    group.add_argument("--sigma", type=_sigma, default="median")


def _add_synth_options(parser):
    group = parser.add_argument_group("synthetic data")
    group.add_argument("--n-real", type=int, default=250)
    group.add_argument("--n-fake", type=int, default=250)
    group.add_argument("--image-size", type=int, default=32)
    group.add_argument("--asymmetry", type=float, default=1.0)
    group.add_argument("--test-fraction", type=float, default=0.2)


def model_config(args):
    """Backbone configuration from the parsed options."""
    overrides = {"seed": args.seed}
    if args.ssaa_blocks is not None:
        overrides["ssaa_blocks"] = args.ssaa_blocks
    return PRESETS[args.preset](**overrides)


def train_config(args):
    """Training configuration from the parsed options."""
    return TrainConfig(
        epochs=args.epochs,
        batch_size=args.batch_size,
        lr=args.lr,
        weight_decay=args.weight_decay,
        seed=args.seed,
        target_mode=args.target_mode,
        hflip_augment=args.hflip,
        workers=args.workers,
    )


def svr_config(args):
    """Regressor configuration from the parsed options."""
    return SVRTrainConfig(
        C=args.svr_c,
        epsilon=args.epsilon,
        tolerance=args.tolerance,
        max_passes=args.max_passes,
        sigma=args.sigma,
        seed=args.seed,
    )


def synth_config(args):
    """Synthetic dataset configuration from the parsed options."""
    return SynthConfig(
        n_real=args.n_real,
        n_fake=args.n_fake,
        image_size=args.image_size,
        asymmetry_strength=args.asymmetry,
        seed=args.seed,
    )


def _progress(args):
    return not args.quiet


def cmd_gen(args):
    manifest = gen_synthetic(synth_config(args), args.out, progress=_progress(args))
    print(manifest)
    if args.test_fraction > 0:
        for path in split_manifest(manifest, args.test_fraction, args.seed):
            print(path)


def cmd_map_quality(args):
    scorer = proxy_quality if args.rescore else None
    records, _ = map_quality(args.manifest, args.out, stats=args.stats, scorer=scorer)
    logger.info("mapped %d records to %s", len(records), args.out)


def cmd_train_backbone(args):
    result = train_backbone(
        ingest_manifest(args.manifest),
        model_config(args),
        train_config(args),
        model_path=args.out,
        progress=_progress(args),
    )
    for epoch, loss in enumerate(result.losses, start=1):
        print(f"epoch {epoch}: {loss:.6f}")


def cmd_extract_features(args):
    extract_features(
        load_model(args.model),
        ingest_manifest(args.manifest),
        args.out,
        target_mode=args.target_mode,
        batch_size=args.batch_size,
        workers=args.workers,
        progress=_progress(args),
    )


def cmd_train_svr(args):
    _, targets, features = read_features(args.features)
    model = svr_fit(features, targets, svr_config(args))
    save_svr(model, args.out)
    print(f"support vectors: {model.n_support}, sigma: {model.sigma:.6g}, bias: {model.bias:.6g}")


def cmd_score(args):
    records = ingest_manifest(args.manifest)
    scores = score_records(
        load_model(args.model),
        load_svr(args.svr),
        records,
        args.batch_size,
        args.workers,
        _progress(args),
    )
    frame = pd.DataFrame(
        {
            "path": [str(record.image_path) for record in records],
            "score": scores,
            "label_pred": [threshold_classify(score).value for score in scores],
        }
    )
    frame.to_csv(args.out, index=False, float_format="%.17g")
    logger.info("scored %d images into %s", len(frame), args.out)


def cmd_eval(args):
    report = evaluate(
        load_model(args.model),
        load_svr(args.svr),
        ingest_manifest(args.manifest),
        args.batch_size,
        args.workers,
        _progress(args),
    )
    print(report.render_table())
    if args.out:
        report.save(args.out)


def cmd_gradcheck(args):
    errors, passed = gradient_suite(args.seed)
    for name, error in errors.items():
        print(f"{name:<26}{error:.3e}")
    if not passed:
        logger.error("gradient check failed")
        return EXIT_INVALID
    return EXIT_OK


def cmd_dump_maps(args):
    model = load_model(args.model)
    n_blocks = args.n_blocks or model.config.stage_depths[0]
    for path in dump_feature_maps(model, args.image, args.out, n_blocks):
        print(path)


def _print_reports(reports):
    for name, report in reports.items():
        print(f"== {name}")
        print(report.render_table())


def cmd_ablate(args):
    train_records = ingest_manifest(args.train)
    test_records = ingest_manifest(args.test)
    if args.sweep:
        reports = run_ssaa_sweep(
            train_records,
            test_records,
            args.out,
            model_config(args),
            train_config(args),
            svr_config(args),
            progress=_progress(args),
        )
    else:
        reports = run_ablation(
            train_records,
            test_records,
            args.out,
            model_config(args),
            train_config(args),
            svr_config(args),
            variants=args.variants,
            progress=_progress(args),
        )
    _print_reports(reports)


def cmd_run(args):
    result = run_pipeline(
        args.out,
        synth_config(args),
        model_config(args),
        train_config(args),
        svr_config(args),
        test_fraction=args.test_fraction,
        progress=_progress(args),
    )
    print(result.report.render_table())


def build_parser():
    """Return the :class:`argparse.ArgumentParser` of all subcommands."""
    parser = argparse.ArgumentParser(
        prog="deepfidelity",
        description="Deepfake detection by perceptual forgery fidelity assessment",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("--seed", type=int, default=42, help="seed of every random component")
    parser.add_argument(
        "--log-level",
        default="INFO",
        choices=["DEBUG", "INFO", "WARNING", "ERROR"],
    )
    parser.add_argument("--quiet", action="store_true", help="hide progress bars")
    parser.add_argument("--workers", type=int, default=1, help="image reader threads")
    sub = parser.add_subparsers(dest="command", metavar="command")
    sub.required = True

    gen = sub.add_parser("gen", help="generate a synthetic dataset")
    gen.add_argument("--out", type=Path, required=True)
    _add_synth_options(gen)
    gen.set_defaults(handler=cmd_gen)

    mapq = sub.add_parser("map-quality", help="attach fidelity targets to a manifest")
    mapq.add_argument("manifest", type=Path)
    mapq.add_argument("--out", type=Path, required=True)
    mapq.add_argument("--stats", type=Path, help="training statistics json to reuse")
    mapq.add_argument("--rescore", action="store_true", help="recompute proxy quality")
    mapq.set_defaults(handler=cmd_map_quality)

    train = sub.add_parser("train-backbone", help="train the SSAAFormer backbone")
    train.add_argument("manifest", type=Path)
    train.add_argument("--out", type=Path, required=True)
    _add_model_options(train)
    _add_train_options(train)
    train.set_defaults(handler=cmd_train_backbone)

    extract = sub.add_parser("extract-features", help="write backbone embeddings")
    extract.add_argument("manifest", type=Path)
    extract.add_argument("--model", type=Path, required=True)
    extract.add_argument("--out", type=Path, required=True)
    extract.add_argument("--target-mode", choices=TARGET_MODES, default="fidelity")
    extract.add_argument("--batch-size", type=int, default=32)
    extract.set_defaults(handler=cmd_extract_features)

    svr = sub.add_parser("train-svr", help="fit the fidelity regressor")
    svr.add_argument("features", type=Path)
    svr.add_argument("--out", type=Path, required=True)
    _add_svr_options(svr)
    svr.set_defaults(handler=cmd_train_svr)

    for name, handler, help_text in (
        ("score", cmd_score, "write fidelity scores of a manifest"),
        ("eval", cmd_eval, "report accuracy, AUC and per bucket accuracy"),
    ):
        command = sub.add_parser(name, help=help_text)
        command.add_argument("manifest", type=Path)
        command.add_argument("--model", type=Path, required=True)
        command.add_argument("--svr", type=Path, required=True)
        command.add_argument("--out", type=Path, required=name == "score")
        command.add_argument("--batch-size", type=int, default=32)
        command.set_defaults(handler=handler)

    check = sub.add_parser("gradcheck", help="finite difference gradient checks")
    check.set_defaults(handler=cmd_gradcheck)

    dump = sub.add_parser("dump-maps", help="write per block feature map images")
    dump.add_argument("image", type=Path)
    dump.add_argument("--model", type=Path, required=True)
    dump.add_argument("--out", type=Path, required=True)
    dump.add_argument("--n-blocks", type=int, default=None, help="default all stage 1 blocks")
    dump.set_defaults(handler=cmd_dump_maps)

    ablate = sub.add_parser("ablate", help="compare SSAA and quality mapping variants")
    ablate.add_argument("train", type=Path)
    ablate.add_argument("test", type=Path)
    ablate.add_argument("--out", type=Path, required=True)
    ablate.add_argument("--variants", nargs="+", choices=list(ABLATION_VARIANTS))
    ablate.add_argument("--sweep", action="store_true", help="vary the SSAA depth instead")
    _add_model_options(ablate)
    _add_train_options(ablate)
    _add_svr_options(ablate)
    ablate.set_defaults(handler=cmd_ablate)

    run = sub.add_parser("run", help="generate data and run every step")
    run.add_argument("--out", type=Path, required=True)
    _add_synth_options(run)
    _add_model_options(run)
    _add_train_options(run)
    _add_svr_options(run)
    run.set_defaults(handler=cmd_run)
    return parser


def main(argv=None):
    """Run the command line interface.

    Parameters
    ----------
    argv: list, None, default=None
        Arguments without the program name, ``sys.argv[1:]`` if omitted.

    Returns
    -------
    int
        Process exit code.
    """
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=getattr(logging, args.log_level),
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )
    try:
        code = args.handler(args)
    except OSError as error:
        logger.error("%s", error)
        return EXIT_IO
    except DeepFidelityError as error:
        logger.error("%s", error)
        return EXIT_INVALID
    return EXIT_OK if code is None else code


if __name__ == "__main__":
    sys.exit(main())
