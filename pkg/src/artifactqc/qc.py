"""Volume-level scoring: aggregate, calibrate, classify, evaluate.

A volume's embedding is the mean over its padded, normalized center
axial slices.  The decision threshold is the tau-quantile of reference
log densities, so roughly a fraction tau of the reference set sits below
the cutoff by construction; scored volumes fail on strict inequality.
"""

from __future__ import annotations

import os
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .diffnet import ParamStore
from .encoder import EncoderConfig, encode_batch
from .errors import EmptyReference, MissingLabels, TauOutOfRange
from .flow import FlowModel, log_density
from . import report
from .volio import Volume, center_slices

LABELS = ("low", "medium", "high")
FAIL_LABELS = ("medium", "high")  # artifact levels counted as positives


@dataclass
class QCRecord:
    volume_id: str
    m1: float
    m2: float
    log_density: float
    verdict: str                    # "pass" | "fail"
    label: str | None = None        # optional ground truth, evaluation only

    @property
    def embedding(self) -> np.ndarray:
        return np.array([self.m1, self.m2])


@dataclass(frozen=True)
class ThresholdCalibration:
    tau: float
    log_density_cutoff: float
    reference_count: int


@dataclass
class ContingencyMetrics:
    sensitivity: float | None
    specificity: float | None
    tp: int
    fp: int
    tn: int
    fn: int

    @property
    def table(self) -> dict[str, int]:
        return {"tp": self.tp, "fp": self.fp, "tn": self.tn, "fn": self.fn}


def volume_embedding(
    volume: Volume,
    params: ParamStore,
    config: EncoderConfig,
    count: int = 20,
) -> np.ndarray:
    """Component-wise mean embedding of the volume's center axial slices."""
    slices = center_slices(volume, count, size=config.input_size)
    return encode_batch(slices, params, config).mean(axis=0)


def calibrate_threshold(
    reference_log_densities: Sequence[float], tau: float
) -> ThresholdCalibration:
    """Cutoff at the empirical tau-quantile (linear interpolation) of the reference."""
    refs = np.asarray(reference_log_densities, dtype=np.float64)
    if refs.size == 0:
        raise EmptyReference("reference log densities are empty")
    if not 0.0 < tau < 1.0:
        raise TauOutOfRange(f"tau must be in (0, 1), got {tau}")
    cutoff = float(np.quantile(refs, tau))
    return ThresholdCalibration(tau=tau, log_density_cutoff=cutoff, reference_count=refs.size)


def classify(
    items: Sequence[tuple[str, np.ndarray]],
    model: FlowModel,
    calibration: ThresholdCalibration,
    labels: Mapping[str, str] | None = None,
) -> list[QCRecord]:
    """Score (volume_id, embedding) pairs; fail iff log density < cutoff.

    Exact ties pass.  ``labels`` optionally attaches ground-truth artifact
    levels for later evaluation.
    """
    records = []
    for volume_id, emb in items:
        emb = np.asarray(emb, dtype=np.float64).reshape(2)
        ld = float(log_density(model, emb))
        verdict = "fail" if ld < calibration.log_density_cutoff else "pass"
        label = labels.get(volume_id) if labels else None
        if label is not None and label not in LABELS:
            raise ValueError(f"unknown label {label!r} for volume {volume_id!r}")
        records.append(
            QCRecord(
                volume_id=volume_id,
                m1=float(emb[0]),
                m2=float(emb[1]),
                log_density=ld,
                verdict=verdict,
                label=label,
            )
        )
    return records


def contingency(records: Sequence[QCRecord]) -> ContingencyMetrics:
    """Sensitivity/specificity of fail verdicts against labels.

    Volumes labelled medium or high are the positive (should-fail) class.
    With no positives or no negatives present the corresponding rate is
    undefined and reported as None rather than 0.
    """
    unlabeled = [r.volume_id for r in records if r.label is None]
    if unlabeled:
        raise MissingLabels(f"records without labels: {unlabeled[:5]}")
    tp = sum(1 for r in records if r.label in FAIL_LABELS and r.verdict == "fail")
    fn = sum(1 for r in records if r.label in FAIL_LABELS and r.verdict == "pass")
    tn = sum(1 for r in records if r.label == "low" and r.verdict == "pass")
    fp = sum(1 for r in records if r.label == "low" and r.verdict == "fail")
    sensitivity = tp / (tp + fn) if (tp + fn) > 0 else None
    specificity = tn / (tn + fp) if (tn + fp) > 0 else None
    return ContingencyMetrics(
        sensitivity=sensitivity, specificity=specificity, tp=tp, fp=fp, tn=tn, fn=fn
    )


def emit_report(
    records: Sequence[QCRecord],
    calibration: ThresholdCalibration,
    model: FlowModel,
    out_dir: str | os.PathLike,
) -> dict[str, str]:
    """Write records.csv, metrics.json and scatter.svg under ``out_dir``.

    The scatter shows every embedding colored by label (verdict via the
    marker outline) with the calibrated decision contour traced through
    the log-density field.
    """
    if len(records) == 0:
        raise ValueError("cannot report on an empty record list")
    os.makedirs(out_dir, exist_ok=True)
    paths = {
        "records": os.path.join(out_dir, "records.csv"),
        "metrics": os.path.join(out_dir, "metrics.json"),
        "scatter": os.path.join(out_dir, "scatter.svg"),
    }
    report.write_records_csv(records, paths["records"])

    metrics: ContingencyMetrics | None
    if all(r.label is not None for r in records):
        metrics = contingency(records)
    else:
        metrics = None
    report.write_metrics_json(metrics, calibration, paths["metrics"])

    points = np.array([[r.m1, r.m2] for r in records])
    bounds = report.padded_bounds(points)
    segments = report.trace_contour(
        lambda pts: np.asarray(log_density(model, pts)),
        bounds,
        level=calibration.log_density_cutoff,
    )
    report.render_scatter_svg(records, segments, bounds, calibration, paths["scatter"])
    return paths
