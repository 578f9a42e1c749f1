"""Accuracy metrics at the 0.5 threshold, per source and averaged."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import Dict, List, Mapping, Optional, Sequence

import numpy as np

from . import functional as F
from .data import DatasetManifest, preprocess_manifest
from .errors import IngestionError
from .fusion import mask_sampling_disabled
from .model import NasaSwin
from .residual import DEFAULT_DENOISER, DenoiserSpec

THRESHOLD = 0.5


@dataclass(frozen=True)
class SourceMetrics:
    accuracy: float
    tp: int
    tn: int
    fp: int
    fn: int
    n: int


@dataclass
class Metrics:
    per_source: Dict[str, SourceMetrics]
    avg_acc: float
    avg_sources: List[str]

    @property
    def overall(self) -> float:
        n = sum(m.n for m in self.per_source.values())
        correct = sum(m.tp + m.tn for m in self.per_source.values())
        return correct / n


def predict(probabilities: np.ndarray) -> np.ndarray:
    """1 iff p(generated) > 0.5; an exact tie goes to class 0."""
    return (np.asarray(probabilities) > THRESHOLD).astype(np.int64)


def compute_metrics(
    probabilities: Sequence[float],
    labels: Sequence[int],
    sources: Sequence[str],
    avg_sources: Optional[Sequence[str]] = None,
) -> Metrics:
    """Confusion counts per source and the unweighted mean accuracy.

    ``avg_sources`` picks the sources entering the average (all of them by
    default). Accumulation runs over sorted source names with exact
    summation, so the result does not depend on entry order.
    """
    probabilities = np.asarray(probabilities, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    sources = list(sources)
    if len(probabilities) == 0:
        raise IngestionError("empty manifest")
    if not len(probabilities) == len(labels) == len(sources):
        raise ValueError("probabilities, labels and sources differ in length")
    pred = predict(probabilities)
    per_source: Dict[str, SourceMetrics] = {}
    src = np.array(sources, dtype=object)
    for name in sorted(set(sources)):
        sel = src == name
        p, y = pred[sel], labels[sel]
        tp = int(((p == 1) & (y == 1)).sum())
        tn = int(((p == 0) & (y == 0)).sum())
        fp = int(((p == 1) & (y == 0)).sum())
        fn = int(((p == 0) & (y == 1)).sum())
        n = int(sel.sum())
        per_source[name] = SourceMetrics((tp + tn) / n, tp, tn, fp, fn, n)
    chosen = sorted(per_source) if avg_sources is None else sorted(avg_sources)
    missing = [s for s in chosen if s not in per_source]
    if missing:
        raise ValueError(f"Avg-Acc sources not in manifest: {missing}")
    avg = math.fsum(per_source[s].accuracy for s in chosen) / len(chosen) if chosen else float("nan")
    return Metrics(per_source, avg, list(chosen))


def predict_proba(model: NasaSwin, inputs: np.ndarray, batch: int = 64, use_branch: bool = True) -> np.ndarray:
    """p(generated) per input; channel-mask sampling is blocked meanwhile."""
    out = []
    with mask_sampling_disabled():
        for start in range(0, len(inputs), batch):
            logits = model(inputs[start : start + batch], use_branch=use_branch)
            out.append(F.softmax(logits, axis=-1).data[:, 1])
    return np.concatenate(out) if out else np.zeros(0)


def evaluate_arrays(
    model: NasaSwin,
    inputs: np.ndarray,
    labels: Sequence[int],
    sources: Sequence[str],
    avg_sources: Optional[Sequence[str]] = None,
    use_branch: bool = True,
) -> Metrics:
    if len(inputs) == 0:
        raise IngestionError("empty manifest")
    return compute_metrics(predict_proba(model, inputs, use_branch=use_branch), labels, sources, avg_sources)


def evaluate(
    model: NasaSwin,
    manifest: DatasetManifest,
    denoiser: DenoiserSpec = DEFAULT_DENOISER,
    avg_sources: Optional[Sequence[str]] = None,
    threads: Optional[int] = None,
    use_branch: bool = True,
) -> Metrics:
    if len(manifest) == 0:
        raise IngestionError("empty manifest")
    inputs = preprocess_manifest(manifest, model.cfg.input_hw[0], denoiser, threads)
    return evaluate_arrays(model, inputs, manifest.labels, [e.source for e in manifest.entries], avg_sources, use_branch)


def write_metrics_csv(path, metrics: Metrics) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["source", "n", "tp", "tn", "fp", "fn", "accuracy"])
        for name, m in metrics.per_source.items():
            w.writerow([name, m.n, m.tp, m.tn, m.fp, m.fn, repr(m.accuracy)])
        w.writerow(["avg_acc", "", "", "", "", "", repr(metrics.avg_acc)])


def format_table(rows: Mapping[str, Metrics], sources: Optional[Sequence[str]] = None, style: str = "text") -> str:
    """Accuracy table: one row per method, one column per source, then Avg-Acc.

    Values are percentages with one decimal. ``style`` is ``text`` (aligned
    columns) or ``csv``.
    """
    if not rows:
        raise ValueError("no rows to tabulate")
    if sources is None:
        seen: List[str] = []
        for m in rows.values():
            seen += [s for s in m.per_source if s not in seen]
        sources = seen
    header = ["Method", *sources, "Avg-Acc"]
    body = []
    for method, m in rows.items():
        cells = [method]
        for s in sources:
            cells.append(f"{100 * m.per_source[s].accuracy:.1f}" if s in m.per_source else "-")
        cells.append(f"{100 * m.avg_acc:.1f}")
        body.append(cells)
    if style == "csv":
        return "\n".join(",".join(r) for r in [header, *body]) + "\n"
    if style != "text":
        raise ValueError(f"unknown table style {style!r}")
    widths = [max(len(r[i]) for r in [header, *body]) for i in range(len(header))]
    fmt = lambda r: "  ".join(c.ljust(w) if i == 0 else c.rjust(w) for i, (c, w) in enumerate(zip(r, widths)))
    rule = "-" * len(fmt(header))
    return "\n".join([fmt(header), rule, *(fmt(r) for r in body)]) + "\n"
