"""Detection thresholding, rank metrics and the synthetic verification
harness.

Conventions: `log_likelihoods` are raw GMM scores (low = anomalous);
`anomaly scores` are their negation (high = anomalous). AI-generated is
the positive class. AP breaks score ties by stable input order.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import (EmptyInput, InvalidParams, LengthMismatch, NoPositives,
                     OneClassOnly)
from .exif import ExifRecord

DEFAULT_FALSE_ALARM_RATE = 0.05
DEFAULT_ANOMALY_SHIFT = 0.5
SYNTH_IMAGE_SIZE = 64


def calibrate_threshold(train_log_likelihoods, rate: float = DEFAULT_FALSE_ALARM_RATE) -> float:
    """Low-likelihood threshold giving `rate` false alarms on the training
    set: the linear-interpolation percentile at position (n-1) * rate."""
    values = sorted(float(v) for v in train_log_likelihoods)
    if not values:
        raise EmptyInput("no training log-likelihoods")
    if not 0.0 < rate < 1.0:
        raise InvalidParams(f"rate must lie in (0, 1), got {rate}")
    pos = (len(values) - 1) * rate
    i = int(math.floor(pos))
    frac = pos - i
    if i + 1 >= len(values):
        return values[-1]
    return values[i] + frac * (values[i + 1] - values[i])


def accuracy(log_likelihoods, labels, threshold: float) -> float:
    """Fraction of samples where (score < threshold) matches the label
    (1 = anomalous)."""
    scores = np.asarray(log_likelihoods, dtype=np.float64)
    labels = np.asarray(labels)
    if scores.shape != labels.shape:
        raise LengthMismatch(f"{scores.shape} scores vs {labels.shape} labels")
    if scores.size == 0:
        raise EmptyInput("no samples")
    predicted = scores < threshold
    return float(np.mean(predicted == (labels != 0)))


def average_precision(anomaly_scores, labels) -> float:
    """Rank-based AP: mean precision at each positive's rank when sorted
    by descending anomaly score (stable order on ties)."""
    scores = np.asarray(anomaly_scores, dtype=np.float64)
    labels = np.asarray(labels) != 0
    if scores.shape != labels.shape:
        raise LengthMismatch(f"{scores.shape} scores vs {labels.shape} labels")
    if not labels.any():
        raise NoPositives("average precision needs a positive sample")
    order = np.argsort(-scores, kind="stable")
    ranked = labels[order]
    hits = np.cumsum(ranked)
    ranks = np.arange(1, len(ranked) + 1)
    return float((hits[ranked] / ranks[ranked]).mean())


def auc(anomaly_scores, labels) -> float:
    """Mann-Whitney AUC: P(positive outranks negative), ties count 0.5."""
    scores = np.asarray(anomaly_scores, dtype=np.float64)
    labels = np.asarray(labels) != 0
    if scores.shape != labels.shape:
        raise LengthMismatch(f"{scores.shape} scores vs {labels.shape} labels")
    pos = scores[labels]
    neg = scores[~labels]
    if len(pos) == 0 or len(neg) == 0:
        raise OneClassOnly("AUC needs both classes")
    greater = np.sum(pos[:, None] > neg[None, :])
    ties = np.sum(pos[:, None] == neg[None, :])
    return float((greater + 0.5 * ties) / (len(pos) * len(neg)))


def ranking_accuracy(tag_values, logits) -> float:
    """Pairwise order agreement between ground-truth tag values and head
    logits, averaged over all pairs (per tag) with distinct defined values.

    tag_values: (B, 4) float with NaN for absent tags; logits: (B, 4).
    """
    tags = np.asarray(tag_values, dtype=np.float64)
    logit = np.asarray(logits, dtype=np.float64)
    correct = 0
    total = 0
    for i in range(tags.shape[1]):
        defined = np.isfinite(tags[:, i])
        v = tags[defined, i]
        s = logit[defined, i]
        dv = v[:, None] - v[None, :]
        ds = s[:, None] - s[None, :]
        grade = np.triu(dv != 0.0, k=1)
        correct += int(((dv > 0) == (ds > 0))[grade].sum())
        total += int(grade.sum())
    if total == 0:
        raise EmptyInput("no gradable tag pairs")
    return correct / total


# -- detection report ----------------------------------------------------

@dataclass
class DetectionReport:
    threshold: float
    ids: list
    log_likelihoods: np.ndarray
    predicted: np.ndarray          # 1 = flagged AI-generated
    labels: np.ndarray
    acc: float
    ap: float
    auc: float


def evaluate_detection(ids, log_likelihoods, labels, threshold: float) -> DetectionReport:
    scores = np.asarray(log_likelihoods, dtype=np.float64)
    labels = (np.asarray(labels) != 0).astype(np.int64)
    predicted = (scores < threshold).astype(np.int64)
    return DetectionReport(
        threshold=float(threshold),
        ids=list(ids),
        log_likelihoods=scores,
        predicted=predicted,
        labels=labels,
        acc=accuracy(scores, labels, threshold),
        ap=average_precision(-scores, labels),
        auc=auc(-scores, labels),
    )


def write_scores_csv(path, ids, log_likelihoods, predicted, labels=None) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        header = ["id", "log_likelihood", "predicted"]
        if labels is not None:
            header.append("label")
        writer.writerow(header)
        for idx, sample_id in enumerate(ids):
            row = [sample_id, repr(float(log_likelihoods[idx])),
                   int(predicted[idx])]
            if labels is not None:
                row.append(int(labels[idx]))
            writer.writerow(row)


def read_scores_csv(path):
    """Returns (ids, log_likelihoods, predicted, labels-or-None)."""
    ids, scores, predicted, labels = [], [], [], []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        has_labels = reader.fieldnames is not None and "label" in reader.fieldnames
        for row in reader:
            ids.append(row["id"])
            scores.append(float(row["log_likelihood"]))
            predicted.append(int(row["predicted"]))
            if has_labels:
                labels.append(int(row["label"]))
    return (ids, np.array(scores, dtype=np.float64),
            np.array(predicted, dtype=np.int64),
            np.array(labels, dtype=np.int64) if labels else None)


def write_report_json(path, report: DetectionReport, extra: dict = None) -> None:
    obj = {
        "threshold": report.threshold,
        "acc": report.acc,
        "ap": report.ap,
        "auc": report.auc,
        "n_samples": len(report.ids),
        "n_positive": int(report.labels.sum()),
        "extra": extra or {},
    }
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")


def write_histogram_svg(path, log_likelihoods, labels, threshold: float,
                        bins: int = 40) -> None:
    """Static SVG of the two score distributions plus the threshold line."""
    scores = np.asarray(log_likelihoods, dtype=np.float64)
    labels = np.asarray(labels) != 0
    lo, hi = float(scores.min()), float(scores.max())
    if hi == lo:
        hi = lo + 1.0
    edges = np.linspace(lo, hi, bins + 1)
    neg_hist, _ = np.histogram(scores[~labels], bins=edges)
    pos_hist, _ = np.histogram(scores[labels], bins=edges)
    peak = max(1, int(neg_hist.max(initial=0)), int(pos_hist.max(initial=0)))

    width, height, pad = 640, 320, 40
    plot_w, plot_h = width - 2 * pad, height - 2 * pad

    def x_at(value):
        return pad + (value - lo) / (hi - lo) * plot_w

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" '
        f'height="{height}">',
        f'<rect width="{width}" height="{height}" fill="white"/>',
    ]
    bar_w = plot_w / bins
    for hist, color, opacity in ((neg_hist, "#4878cf", 0.7),
                                 (pos_hist, "#d65f5f", 0.7)):
        for b, count in enumerate(hist):
            if count == 0:
                continue
            bh = count / peak * plot_h
            parts.append(
                f'<rect x="{pad + b * bar_w:.2f}" y="{height - pad - bh:.2f}" '
                f'width="{bar_w:.2f}" height="{bh:.2f}" fill="{color}" '
                f'fill-opacity="{opacity}"/>')
    tx = x_at(threshold)
    parts.append(f'<line x1="{tx:.2f}" y1="{pad}" x2="{tx:.2f}" '
                 f'y2="{height - pad}" stroke="black" stroke-dasharray="4"/>')
    parts.append(f'<text x="{pad}" y="{pad - 10}" font-size="12">'
                 'log-likelihood histogram (blue photographic, red flagged '
                 'class); dashed line = threshold</text>')
    parts.append("</svg>")
    with open(path, "w") as fh:
        fh.write("\n".join(parts) + "\n")


# -- synthetic dataset ---------------------------------------------------

@dataclass
class SynthSample:
    image: np.ndarray
    landmarks: np.ndarray
    exif: ExifRecord
    latents: np.ndarray
    label: int  # 1 = drawn from the shifted (anomalous) latent distribution


def _bilinear_upsample(low: np.ndarray, h: int, w: int) -> np.ndarray:
    lh, lw = low.shape[:2]
    ys = np.linspace(0.0, lh - 1.0, h)
    xs = np.linspace(0.0, lw - 1.0, w)
    y0 = np.minimum(np.floor(ys).astype(np.int64), lh - 2)
    x0 = np.minimum(np.floor(xs).astype(np.int64), lw - 2)
    fy = (ys - y0)[:, None, None]
    fx = (xs - x0)[None, :, None]
    tl = low[y0][:, x0]
    tr = low[y0][:, x0 + 1]
    bl = low[y0 + 1][:, x0]
    br = low[y0 + 1][:, x0 + 1]
    top = tl + fx * (tr - tl)
    bot = bl + fx * (br - bl)
    return top + fy * (bot - top)


def _landmark_template() -> np.ndarray:
    """Plausible 68-point layout in the unit square (standard ordering)."""
    pts = np.zeros((68, 2))
    t = np.linspace(0.0, np.pi, 17)
    pts[0:17, 0] = 0.5 - 0.38 * np.cos(t)          # jaw arc
    pts[0:17, 1] = 0.55 + 0.38 * np.sin(t)
    pts[17:22, 0] = np.linspace(0.22, 0.42, 5)     # brows
    pts[17:22, 1] = 0.30
    pts[22:27, 0] = np.linspace(0.58, 0.78, 5)
    pts[22:27, 1] = 0.30
    pts[27:31, 0] = 0.5                            # nose bridge
    pts[27:31, 1] = np.linspace(0.38, 0.56, 4)
    pts[31:36, 0] = np.linspace(0.42, 0.58, 5)     # nose base
    pts[31:36, 1] = 0.62
    for base, cx in ((36, 0.33), (42, 0.67)):      # eye hexagons
        ang = np.deg2rad([180.0, 120.0, 60.0, 0.0, 300.0, 240.0])
        pts[base:base + 6, 0] = cx + 0.08 * np.cos(ang)
        pts[base:base + 6, 1] = 0.42 - 0.035 * np.sin(ang)
    ang = np.linspace(0.0, 2.0 * np.pi, 12, endpoint=False)
    pts[48:60, 0] = 0.5 - 0.13 * np.cos(ang)       # outer lip
    pts[48:60, 1] = 0.74 + 0.055 * np.sin(ang)
    ang = np.linspace(0.0, 2.0 * np.pi, 8, endpoint=False)
    pts[60:68, 0] = 0.5 - 0.07 * np.cos(ang)       # inner lip
    pts[60:68, 1] = 0.74 + 0.025 * np.sin(ang)
    return pts


_TEMPLATE = _landmark_template()


def synth_tags(latents: np.ndarray) -> ExifRecord:
    """Strictly monotone map from the four latent signals to tag values."""
    s = np.asarray(latents, dtype=np.float64)
    return ExifRecord(
        aperture_f_number=float(1.4 * 2.0 ** (4.0 * s[0])),
        exposure_time_s=float((1.0 / 4000.0) * 2.0 ** (10.0 * s[1])),
        focal_length_mm=float(18.0 + 180.0 * s[2]),
        iso_speed=int(round(100.0 * 2.0 ** (6.0 * s[3]))),
    )


def _synth_one(rng, shift: float, anomalous: bool, size: int) -> SynthSample:
    latents = rng.uniform(0.0, 1.0, 4)
    if anomalous:
        latents = latents + shift
    low = rng.normal(0.0, 1.0, (9, 9, 3))
    noise = rng.normal(0.0, 1.0, (size, size, 3))
    jitter = rng.uniform(-1.5, 1.5, (68, 2))

    smooth = _bilinear_upsample(low, size, size) * 8.0
    base = np.empty((size, size, 3))
    base[:, :, 0] = 50.0 + 140.0 * latents[0]
    base[:, :, 1] = 50.0 + 140.0 * latents[1]
    base[:, :, 2] = 50.0 + 140.0 * latents[2]
    sigma = 2.0 + 30.0 * latents[3]
    img = np.clip(np.floor(base + smooth + sigma * noise + 0.5), 0.0, 255.0)
    landmarks = _TEMPLATE * (size - 1.0) + jitter
    return SynthSample(
        image=img.astype(np.uint8),
        landmarks=landmarks,
        exif=synth_tags(latents),
        latents=latents,
        label=int(anomalous),
    )


def synth_dataset(seed: int, size: int, anomaly_shift: float = 0.0,
                  anomaly_fraction: float = 0.0) -> list:
    """Seeded synthetic face-like dataset with recoverable tag latents.

    Images are smooth random fields whose channel means and noise level
    are monotone in four latent signals; the four tags are strictly
    monotone in the same latents, so patch statistics suffice to rank
    them. The last `anomaly_fraction` of samples draw latents shifted by
    `anomaly_shift` and carry label 1.
    """
    if size < 4:
        raise InvalidParams("size must be >= 4")
    if anomaly_shift < 0:
        raise InvalidParams("anomaly_shift must be >= 0")
    if not 0.0 <= anomaly_fraction <= 1.0:
        raise InvalidParams("anomaly_fraction must lie in [0, 1]")
    n_anomalous = int(round(size * anomaly_fraction))
    children = np.random.SeedSequence(seed).spawn(size)
    samples = []
    for idx in range(size):
        rng = np.random.default_rng(children[idx])
        anomalous = idx >= size - n_anomalous
        samples.append(_synth_one(rng, anomaly_shift, anomalous,
                                  SYNTH_IMAGE_SIZE))
    return samples


def synth_tag_matrix(samples) -> np.ndarray:
    """(B, 4) tag values with NaN for absent (for ranking_accuracy)."""
    out = np.full((len(samples), 4), np.nan)
    for row, sample in enumerate(samples):
        for i in range(1, 5):
            v = sample.exif.tag(i)
            if v is not None:
                out[row, i - 1] = float(v)
    return out
