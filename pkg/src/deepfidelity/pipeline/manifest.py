# src/deepfidelity/pipeline/manifest.py
"""Manifest csv files and the quality mapping step.

A manifest has the header ``path,label,quality`` and, once mapped, the
additional columns ``quality_norm,fidelity_target``. Relative image paths
are resolved against the manifest directory.
"""
import json
import logging
import math
import os
from pathlib import Path

import pandas as pd

from ..errors import DomainError, ManifestParseError
from ..fidelity import FidelityRecord, Label, MinMax, class_quality_stats, map_records, proxy_quality
from .images import read_pixels

logger = logging.getLogger(__name__)

REQUIRED_COLUMNS = ("path", "label", "quality")
MAPPED_COLUMNS = ("quality_norm", "fidelity_target")


def _parse_number(value, column, line_number):
    try:
        number = float(value)
    except ValueError as error:
        raise ManifestParseError(f"{column} '{value}' is not a number", line_number) from error
    if not math.isfinite(number):
        raise ManifestParseError(f"{column} '{value}' is not finite", line_number)
    return number


def _parse_row(row, line_number, base_dir, mapped):
    path = row["path"].strip()
    if not path:
        raise ManifestParseError("empty image path", line_number)
    try:
        label = Label.parse(row["label"])
    except DomainError as error:
        raise ManifestParseError(str(error), line_number) from error
    quality = _parse_number(row["quality"].strip(), "quality", line_number)
    if quality < 0:
        raise ManifestParseError(f"quality {quality} is negative", line_number)
    extra = {}
    if mapped:
        for column in MAPPED_COLUMNS:
            extra[column] = _parse_number(row[column].strip(), column, line_number)
    if not os.path.isabs(path):
        path = str(base_dir / path)
    return FidelityRecord(image_path=path, label=label, quality_raw=quality, **extra)


def ingest_manifest(path):
    """Read and validate a manifest.

    Parameters
    ----------
    path: str, ~pathlib.Path
        Manifest csv file.

    Returns
    -------
    list
        :class:`~deepfidelity.fidelity.FidelityRecord` objects in file
        order. Labels are accepted case insensitively.

    Raises
    ------
    ManifestParseError
        On missing columns, unknown labels or malformed numbers, citing the
        offending line (the header is line 1).
    """
    path = Path(path)
    try:
        frame = pd.read_csv(path, dtype=str, keep_default_na=False).fillna("")
    except pd.errors.EmptyDataError as error:
        raise ManifestParseError("manifest is empty", 1) from error
    except pd.errors.ParserError as error:
        raise ManifestParseError(f"malformed csv: {error}") from error
    frame.columns = [str(column).strip().lower() for column in frame.columns]
    missing = [column for column in REQUIRED_COLUMNS if column not in frame.columns]
    if missing:
        raise ManifestParseError(f"missing columns: {', '.join(missing)}", 1)
    mapped = all(column in frame.columns for column in MAPPED_COLUMNS)

    records = []
    for offset, row in enumerate(frame.to_dict("records")):
        line_number = offset + 2
        records.append(_parse_row(row, line_number, path.parent, mapped))
    logger.info("read %d records from %s", len(records), path)
    return records


def _relative(image_path, directory):
    try:
        return os.path.relpath(image_path, directory)
    except ValueError:
        return str(image_path)


def write_manifest(records, path):
    """Write ``records`` to ``path``, image paths relative to its directory."""
    path = Path(path)
    directory = path.parent.resolve()
    mapped = bool(records) and all(record.fidelity_target is not None for record in records)
    rows = []
    for record in records:
        row = {
            "path": Path(_relative(Path(record.image_path).resolve(), directory)).as_posix(),
            "label": record.label.value,
            "quality": record.quality_raw,
        }
        if mapped:
            row["quality_norm"] = record.quality_norm
            row["fidelity_target"] = record.fidelity_target
        rows.append(row)
    columns = list(REQUIRED_COLUMNS) + (list(MAPPED_COLUMNS) if mapped else [])
    pd.DataFrame(rows, columns=columns).to_csv(path, index=False)
    logger.info("wrote %d records to %s", len(records), path)
    return path


def stats_sidecar_path(manifest_path):
    """Default location of the normalization statistics of a manifest."""
    manifest_path = Path(manifest_path)
    return manifest_path.with_name(f"{manifest_path.stem}.stats.json")


def save_quality_stats(stats, path):
    """Write per class :class:`~deepfidelity.fidelity.MinMax` as json."""
    payload = {label.value: {"min": value.min, "max": value.max} for label, value in stats.items()}
    Path(path).write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return path


def load_quality_stats(path):
    """Inverse of :func:`save_quality_stats`."""
    try:
        payload = json.loads(Path(path).read_text(encoding="utf-8"))
        return {
            Label.parse(name): MinMax(float(value["min"]), float(value["max"]))
            for name, value in payload.items()
        }
    except (json.JSONDecodeError, KeyError, TypeError, AttributeError) as error:
        raise ManifestParseError(f"malformed quality statistics file {path}: {error}") from error


def pixel_quality(path, scorer=proxy_quality):
    """Quality of the image at ``path`` according to ``scorer``."""
    return float(scorer(read_pixels(path)))


def rescore(records, scorer=proxy_quality):
    """Replace the raw quality of every record by ``scorer`` of its image."""
    return [
        FidelityRecord(
            image_path=record.image_path,
            label=record.label,
            quality_raw=pixel_quality(record.image_path, scorer),
        )
        for record in records
    ]


def map_quality(manifest_path, out_path, stats=None, scorer=None, stats_out=None):
    """Attach normalized quality and fidelity targets to a manifest.

    Parameters
    ----------
    manifest_path: str, ~pathlib.Path
        Input manifest.
    out_path: str, ~pathlib.Path
        Mapped manifest to write.
    stats: dict, str, ~pathlib.Path, None, default=None
        Per class training statistics, or the json file holding them.
        Computed from the input manifest if omitted (training split).
    scorer: callable, None, default=None
        ``pixels -> float`` quality scorer. If given, the manifest quality
        column is recomputed from the images.
    stats_out: str, ~pathlib.Path, None, default=None
        Where to write the statistics used. Defaults to the sidecar of
        ``out_path``.

    Returns
    -------
    tuple
        ``(mapped records, statistics)``.
    """
    records = ingest_manifest(manifest_path)
    if scorer is not None:
        records = rescore(records, scorer)
    if stats is None:
        stats = class_quality_stats(records)
    elif not isinstance(stats, dict):
        stats = load_quality_stats(stats)
    mapped = map_records(records, stats)
    write_manifest(mapped, out_path)
    save_quality_stats(stats, stats_out or stats_sidecar_path(out_path))
    return mapped, stats
