# src/deepfidelity/pipeline/metrics.py
"""Accuracy, ROC AUC and the per quality bucket report."""
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.stats import rankdata

from ..errors import DimensionError, DomainError
from ..fidelity import Label, bucket_by_quality, threshold_classify
from ..svr import svr_predict
from .features import embed_records

logger = logging.getLogger(__name__)

N_BUCKETS = 4


def _labels(labels):
    return np.array([Label.parse(label) is Label.REAL for label in labels], dtype=bool)


def auc(scores, labels):
    """Area under the ROC curve from the rank sum of the real samples.

    Equals the probability that a random real sample scores above a random
    fake one, ties counting one half.

    Parameters
    ----------
    scores: ~collections.abc.Sequence
        Fidelity scores.
    labels: ~collections.abc.Sequence
        :class:`~deepfidelity.fidelity.Label` values or their names.

    Example
    -------
    >>> auc([0.1, 0.4, 0.35, 0.8], ["fake", "fake", "real", "real"])
    0.75
    """
    scores = np.asarray(scores, dtype=np.float64).reshape(-1)
    positive = _labels(labels)
    if scores.shape[0] != positive.shape[0]:
        raise DimensionError(f"{scores.shape[0]} scores but {positive.shape[0]} labels")
    n_real = int(positive.sum())
    n_fake = positive.shape[0] - n_real
    if n_real == 0 or n_fake == 0:
        raise DomainError("AUC needs samples of both classes")
    ranks = rankdata(scores, method="average")
    rank_sum = float(ranks[positive].sum())
    return (rank_sum - n_real * (n_real + 1) / 2.0) / (n_real * n_fake)


def clamp_scores(scores):
    """Clip fidelity scores to ``[0, 1]``."""
    return np.clip(np.asarray(scores, dtype=np.float64), 0.0, 1.0)


def bucket_edges(n_buckets=N_BUCKETS):
    """Column headers ``[0.00,0.25)`` ... ``[0.75,1.00]`` of the buckets."""
    edges = np.linspace(0.0, 1.0, n_buckets + 1)
    return [
        f"[{low:.2f},{high:.2f}{']' if index == n_buckets - 1 else ')'}"
        for index, (low, high) in enumerate(zip(edges[:-1], edges[1:]))
    ]


@dataclass
class EvalReport:
    """Detection metrics of a scored test set.

    Parameters
    ----------
    accuracy: float
        Share of correctly classified samples.
    auc: float
        ROC AUC of the clamped scores.
    n_samples: int
        Number of evaluated samples.
    per_bucket: dict
        ``(Label, bucket index) -> accuracy``, ``nan`` for empty cells.
    counts: dict
        ``(Label, bucket index) -> number of samples``.
    """

    accuracy: float
    auc: float
    n_samples: int
    per_bucket: dict = field(default_factory=dict)
    counts: dict = field(default_factory=dict)
    n_buckets: int = N_BUCKETS

    def cells(self):
        """``(label, bucket)`` keys in table order."""
        return [(label, bucket) for label in Label for bucket in range(self.n_buckets)]

    def render_table(self):
        """Human readable table with one row per class and bucket columns."""
        headers = bucket_edges(self.n_buckets)
        width = max(len(header) for header in headers) + 8
        lines = ["quality".ljust(8) + "".join(header.rjust(width) for header in headers)]
        for label in Label:
            row = label.value.ljust(8)
            for bucket in range(self.n_buckets):
                count = self.counts.get((label, bucket), 0)
                cell = "-" if count == 0 else f"{self.per_bucket[(label, bucket)]:.4f} ({count})"
                row += cell.rjust(width)
            lines.append(row)
        lines.append(f"accuracy {self.accuracy:.4f}  auc {self.auc:.4f}  n {self.n_samples}")
        return "\n".join(lines)

    def to_text(self):
        """Plain ``key: value`` lines."""
        lines = [
            f"accuracy: {self.accuracy!r}",
            f"auc: {self.auc!r}",
            f"n_samples: {self.n_samples}",
            f"n_buckets: {self.n_buckets}",
        ]
        for label, bucket in self.cells():
            key = f"bucket.{label.value}.{bucket}"
            lines.append(f"{key}.accuracy: {self.per_bucket.get((label, bucket), math.nan)!r}")
            lines.append(f"{key}.count: {self.counts.get((label, bucket), 0)}")
        return "\n".join(lines) + "\n"

    def save(self, path):
        """Write :meth:`to_text` to ``path``."""
        path = Path(path)
        path.write_text(self.to_text(), encoding="utf-8")
        return path


def evaluate_scores(records, scores, n_buckets=N_BUCKETS):
    """Build an :class:`EvalReport` from raw fidelity scores.

    Scores are clamped to ``[0, 1]`` before classification and AUC.

    Parameters
    ----------
    records: ~collections.abc.Sequence
        Mapped records carrying labels and normalized quality.
    scores: ~collections.abc.Sequence
        One fidelity score per record.
    """
    records = list(records)
    scores = clamp_scores(scores).reshape(-1)
    if scores.shape[0] != len(records):
        raise DimensionError(f"{scores.shape[0]} scores for {len(records)} records")
    labels = [record.label for record in records]
    correct = np.array(
        [threshold_classify(score) is label for score, label in zip(scores, labels)]
    )
    buckets = bucket_by_quality(records, n_buckets)

    per_bucket, counts = {}, {}
    for bucket, indices in enumerate(buckets):
        for label in Label:
            members = [i for i in indices if labels[i] is label]
            counts[(label, bucket)] = len(members)
            per_bucket[(label, bucket)] = (
                float(correct[members].mean()) if members else math.nan
            )
    report = EvalReport(
        accuracy=float(correct.sum()) / len(records),
        auc=auc(scores, labels),
        n_samples=len(records),
        per_bucket=per_bucket,
        counts=counts,
        n_buckets=n_buckets,
    )
    logger.info("accuracy %.4f, auc %.4f on %d samples", report.accuracy, report.auc, len(records))
    return report


def score_records(model, svr_model, records, batch_size=32, workers=1, progress=True):
    """Clamped fidelity scores of ``records``."""
    features = embed_records(model, records, batch_size, workers, progress)
    return clamp_scores(svr_predict(svr_model, features))


def evaluate(model, svr_model, records, batch_size=32, workers=1, progress=True):
    """Score ``records`` with backbone and regressor and report the metrics."""
    records = list(records)
    if not records:
        raise DomainError("no records to evaluate")
    scores = score_records(model, svr_model, records, batch_size, workers, progress)
    return evaluate_scores(records, scores)
