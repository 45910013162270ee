"""Training objectives: pairwise tag labels, Thurstone ranking probability,
fidelity losses and the combined minibatch loss.

The combined loss averages the four per-tag ranking fidelity terms over
all unordered image pairs (per-tag terms are skipped when either image
lacks that tag) and adds the mean manipulation-classification fidelity.
"""

from __future__ import annotations

import math
from typing import Optional

import numpy as np

from . import autodiff as ad
from . import model as model_mod
from .errors import EmptyBatch
from .exif import ExifRecord

PROB_EPS = 1e-6
N_TAGS = 4
_SQRT2 = math.sqrt(2.0)


def pair_label(rec_x: ExifRecord, rec_y: ExifRecord, i: int) -> Optional[int]:
    """Ground-truth ranking label for tag i (1..4): 1 if tag_i(x) >= tag_i(y),
    0 otherwise, None when either record lacks the tag (ties count as 1)."""
    tx, ty = rec_x.tag(i), rec_y.tag(i)
    if tx is None or ty is None:
        return None
    return 1 if tx >= ty else 0


def thurstone_prob(logit_x, logit_y, eps: float = PROB_EPS):
    """Probability that x outranks y under Thurstone case V:
    Phi((logit_x - logit_y) / sqrt(2)), clamped to [eps, 1-eps]."""
    d = (np.asarray(logit_x, dtype=np.float64)
         - np.asarray(logit_y, dtype=np.float64)) / _SQRT2
    return np.clip(ad.normal_cdf_values(d), eps, 1.0 - eps)


def cls_prob(logit, eps: float = PROB_EPS):
    """Manipulation probability: sigmoid(logit), clamped to [eps, 1-eps]."""
    v = np.asarray(logit, dtype=np.float64)
    p = np.where(v >= 0, 1.0 / (1.0 + np.exp(-np.abs(v))),
                 np.exp(-np.abs(v)) / (1.0 + np.exp(-np.abs(v))))
    return np.clip(p, eps, 1.0 - eps)


def fidelity_loss(p, p_hat):
    """1 - sqrt(p * p_hat) - sqrt((1-p) (1-p_hat)); in [0, 1], zero iff
    the prediction matches the binary target exactly."""
    p = np.asarray(p, dtype=np.float64)
    p_hat = np.asarray(p_hat, dtype=np.float64)
    return 1.0 - np.sqrt(p * p_hat) - np.sqrt((1.0 - p) * (1.0 - p_hat))


def ranking_pairs(records):
    """Enumerate unordered index pairs and per-tag defined labels.

    Returns (per_tag, n_pairs) where per_tag[i-1] = (I, J, labels) int/float
    arrays for tag i, and n_pairs counts pairs contributing at least one
    defined tag (the ranking-term normalizer).
    """
    b = len(records)
    per_tag = []
    contributing = set()
    for i in range(1, N_TAGS + 1):
        idx_i, idx_j, labels = [], [], []
        for a in range(b):
            for c in range(a + 1, b):
                lab = pair_label(records[a], records[c], i)
                if lab is None:
                    continue
                idx_i.append(a)
                idx_j.append(c)
                labels.append(float(lab))
                contributing.add((a, c))
        per_tag.append((np.array(idx_i, dtype=np.int64),
                        np.array(idx_j, dtype=np.int64),
                        np.array(labels, dtype=np.float64)))
    return per_tag, len(contributing)


def _fidelity_term(p: np.ndarray, p_hat: ad.Tensor) -> ad.Tensor:
    """Tensor-level fidelity loss with binary constant targets, summed."""
    match = ad.mul(p, ad.sqrt(p_hat)) + ad.mul(1.0 - p, ad.sqrt(1.0 - p_hat))
    return ad.tsum(1.0 - match)


def batch_loss(leaves: dict, config, inputs, records, manip_labels,
               eps: float = PROB_EPS) -> ad.Tensor:
    """Combined minibatch objective as a scalar tensor on the tape.

    `leaves` are gradient-tracking parameter tensors (model.make_leaves),
    `records` the per-sample ExifRecords and `manip_labels` the 0/1
    manipulation ground truth.
    """
    b = len(records)
    if b == 0:
        raise EmptyBatch("batch_loss on zero samples")
    manip_labels = np.asarray(manip_labels, dtype=np.float64)

    z = model_mod.forward_features(leaves, config, inputs)

    per_tag, n_pairs = ranking_pairs(records)
    total = None
    if n_pairs > 0:
        rank_sum = None
        for i, (idx_i, idx_j, labels) in enumerate(per_tag, start=1):
            if len(idx_i) == 0:
                continue
            logits = model_mod.forward_head(leaves, z, i)
            diff = ad.mul(ad.take(logits, idx_i) - ad.take(logits, idx_j),
                          1.0 / _SQRT2)
            p_hat = ad.clip(ad.normal_cdf(diff), eps, 1.0 - eps)
            term = _fidelity_term(labels, p_hat)
            rank_sum = term if rank_sum is None else rank_sum + term
        total = ad.mul(rank_sum, 1.0 / n_pairs)

    cls_logits = model_mod.forward_head(leaves, z, 5)
    p_hat5 = ad.clip(ad.sigmoid(cls_logits), eps, 1.0 - eps)
    cls_term = ad.mul(_fidelity_term(manip_labels, p_hat5), 1.0 / b)

    return cls_term if total is None else total + cls_term
