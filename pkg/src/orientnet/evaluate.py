"""Accuracy, per-class accuracy and confusion matrices over a manifest split."""
from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .config import NetworkConfig
from .data import DatasetManifest, preprocess
from .errors import EvalError, OrientError, ValidationError
from .imageio import read_image
from .nn import predict_logits

NUM_CLASSES = 4
MAX_FAILURE_FRACTION = 0.10

# Reported test accuracies, kept as reference rows for reports.
REPORTED_RESULTS = (
    ("Flickr (ours)", 0.925, ""),
    ("SUN 397", 0.985, "92.4% (Ciocca et al., 2015)"),
    ("Corel", 0.975, "97.4% (Vailaya et al., 2002)"),
)


@dataclass
class EvalReport:
    accuracy: float
    per_class: list
    confusion: np.ndarray  # rows = true class, cols = predicted
    n: int
    model: str = ""
    split: str = ""
    failures: list | None = None

    def to_dict(self) -> dict:
        return {
            "accuracy": self.accuracy,
            "per_class": list(self.per_class),
            "confusion": self.confusion.tolist(),
            "n": self.n,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict())


def report_from_predictions(labels, predictions, model: str = "", split: str = "") -> EvalReport:
    labels = np.asarray(labels, dtype=np.int64)
    predictions = np.asarray(predictions, dtype=np.int64)
    confusion = np.zeros((NUM_CLASSES, NUM_CLASSES), dtype=np.int64)
    np.add.at(confusion, (labels, predictions), 1)
    n = int(confusion.sum())
    rows = confusion.sum(axis=1)
    per_class = [float(confusion[c, c] / rows[c]) if rows[c] else float("nan") for c in range(NUM_CLASSES)]
    accuracy = float(np.trace(confusion) / n) if n else float("nan")
    return EvalReport(accuracy, per_class, confusion, n, model, split)


def evaluate(config: NetworkConfig, params: dict, manifest: DatasetManifest, split: str,
             batch_size: int = 64) -> EvalReport:
    """Eval-mode predictions (argmax, ties to the lowest class) over one split.

    Unreadable images are skipped and listed in ``report.failures``; more than
    10% failures raises :class:`EvalError`.
    """
    records = manifest.select(split)
    if not records:
        raise ValidationError(f"manifest has no {split!r} records")
    side = config.input_shape[1]
    decoded, failures = {}, []
    xs, ys = [], []
    for r in records:
        path = manifest.resolve(r)
        try:
            if path not in decoded:
                decoded[path] = read_image(path)
            xs.append(preprocess(decoded[path], side, r.rotation))
            ys.append(r.label)
        except (OSError, OrientError) as e:
            failures.append(f"{r.path}: {e}")
    if len(failures) > MAX_FAILURE_FRACTION * len(records):
        raise EvalError(f"{len(failures)} of {len(records)} records failed; first: {failures[0]}")
    if not xs:
        raise EvalError("no readable records")
    logits = predict_logits(config, params, np.stack(xs), batch_size)
    report = report_from_predictions(ys, logits.argmax(axis=1), config.name, split)
    report.failures = failures
    return report


def _pct(x: float) -> str:
    return f"{float(np.floor(1000 * x + 0.5)) / 10:.1f}%"


def format_report(report: EvalReport, baselines: dict | None = None, dataset: str = "synthetic") -> str:
    """Fixed-width accuracy table; the baseline column appears only if baselines are given.

    ``baselines`` maps a dataset name to a free-text reference entry, rendered
    verbatim. Datasets with a baseline but no report of ours get their own row.
    """
    rows = [(dataset, _pct(report.accuracy), (baselines or {}).get(dataset, ""))]
    for name, text in (baselines or {}).items():
        if name != dataset:
            rows.append((name, "", text))
    header = ("Dataset", "Accuracy (ours)", "Accuracy (SOTA)")
    ncol = 3 if baselines else 2
    widths = [max(len(r[i]) for r in rows + [header]) for i in range(ncol)]

    def line(cells):
        return "| " + " | ".join(c.ljust(w) for c, w in zip(cells, widths)) + " |"

    rule = "+-" + "-+-".join("-" * w for w in widths) + "-+"
    out = [rule, line(header[:ncol]), rule]
    out += [line(r[:ncol]) for r in rows]
    out.append(rule)
    return "\n".join(out)


def format_confusion(report: EvalReport) -> str:
    labels = ["0", "90", "180", "270"]
    out = ["true\\pred " + " ".join(f"{l:>6}" for l in labels)]
    for i, l in enumerate(labels):
        out.append(f"{l:>9} " + " ".join(f"{int(v):>6}" for v in report.confusion[i]))
    return "\n".join(out)
