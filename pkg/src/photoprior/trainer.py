"""Minibatch optimization of the combined pretext loss with decoupled
weight decay Adam and cosine-annealed learning rate."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import dataio
from . import losses
from . import model as model_mod
from .errors import (EmptyDataset, InvalidParams, NonFiniteLoss,
                     ShapeMismatch)
from .exif import ExifRecord
from .manipulate import MANIPULATION_KINDS, apply_manipulation


@dataclass
class TrainConfig:
    """Desk-scale defaults; `paper()` gives the published hyperparameters
    (batch 256, lr 1e-5, 20 epochs), which need paper-scale data to be
    useful."""

    epochs: int = 20
    batch_size: int = 32
    lr: float = 1e-3
    weight_decay: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    seed: int = 0
    manip_fraction: float = 0.5
    manip_in_pairs: bool = True  # manipulated samples keep EXIF for ranking

    def __post_init__(self):
        if self.epochs < 1 or self.batch_size < 2:
            raise InvalidParams("epochs >= 1 and batch_size >= 2 required")
        if self.lr < 0 or self.weight_decay < 0:
            raise InvalidParams("lr and weight_decay must be >= 0")
        if not 0.0 <= self.manip_fraction <= 1.0:
            raise InvalidParams("manip_fraction must lie in [0, 1]")

    @staticmethod
    def paper(**overrides) -> "TrainConfig":
        base = dict(epochs=20, batch_size=256, lr=1e-5, weight_decay=1e-4)
        base.update(overrides)
        return TrainConfig(**base)


@dataclass
class TrainSample:
    image: np.ndarray                     # (H, W, 3) uint8
    exif: ExifRecord = ExifRecord()
    landmarks: Optional[np.ndarray] = None


@dataclass
class OptimizerState:
    m: dict = field(default_factory=dict)  # first moments, shaped like params
    v: dict = field(default_factory=dict)
    step: int = 0


def cosine_lr(t: int, total: int, lr0: float) -> float:
    """Cosine annealing from lr0 at t=0 down to 0 at t=total."""
    if total < 1 or not 0 <= t <= total:
        raise InvalidParams(f"need 0 <= t <= total, total >= 1; got {t}/{total}")
    return lr0 * 0.5 * (1.0 + math.cos(math.pi * t / total))


def init_optimizer(params: model_mod.ModelParams) -> OptimizerState:
    state = OptimizerState()
    for name, arr in params.tensors.items():
        state.m[name] = np.zeros_like(arr)
        state.v[name] = np.zeros_like(arr)
    return state


def adamw_step(tensors: dict, grads: dict, state: OptimizerState, lr: float,
               weight_decay: float, beta1: float = 0.9, beta2: float = 0.999,
               eps: float = 1e-8) -> None:
    """One Adam update with decoupled weight decay, in place.

    param <- param - lr * mhat / (sqrt(vhat) + eps) - lr * wd * param;
    the decay acts on the parameter directly, not through the gradient.
    """
    state.step += 1
    bc1 = 1.0 - beta1 ** state.step
    bc2 = 1.0 - beta2 ** state.step
    for name, p in tensors.items():
        g = grads.get(name)
        if g is None:
            g = np.zeros_like(p)
        if g.shape != p.shape:
            raise ShapeMismatch(f"{name}: grad {g.shape} vs param {p.shape}")
        m = state.m[name]
        v = state.v[name]
        m *= beta1
        m += (1.0 - beta1) * g
        v *= beta2
        v += (1.0 - beta2) * (g * g)
        update = lr * ((m / bc1) / (np.sqrt(v / bc2) + eps)) \
            + (lr * weight_decay) * p
        p -= update


def load_dataset(manifest_path) -> list:
    """Materialize TrainSamples from a JSONL manifest (PPM images)."""
    samples = []
    for entry in dataio.read_manifest(manifest_path):
        image = dataio.read_ppm(entry.image_path)
        landmarks = (dataio.read_landmarks(entry.landmark_path)
                     if entry.landmark_path else None)
        samples.append(TrainSample(image=image, exif=entry.exif,
                                   landmarks=landmarks))
    return samples


def _assemble_batch(samples, cfg: TrainConfig, manip_rng):
    """Manipulate a seeded fraction of the batch; returns inputs, records,
    labels. Draw order is fixed so runs are reproducible."""
    b = len(samples)
    k = int(round(b * cfg.manip_fraction))
    chosen = sorted(manip_rng.permutation(b)[:k].tolist())
    images = [s.image for s in samples]
    records = [s.exif for s in samples]
    labels = np.zeros(b, dtype=np.float64)
    for idx in chosen:
        kind = MANIPULATION_KINDS[int(manip_rng.integers(len(MANIPULATION_KINDS)))]
        seed = int(manip_rng.integers(2 ** 32))
        manipulated, lab = apply_manipulation(samples[idx].image,
                                              samples[idx].landmarks,
                                              kind, seed=seed)
        images[idx] = manipulated
        labels[idx] = lab
        if not cfg.manip_in_pairs:
            records[idx] = ExifRecord()
    return np.stack(images), records, labels


def train(dataset, model_config: model_mod.ModelConfig, cfg: TrainConfig,
          log_path=None, checkpoint_dir=None, checkpoint_extra=None):
    """Run the full optimization; returns (ModelParams, log rows).

    Log rows are (step, epoch, lr, loss). A fixed seed fixes the init,
    shuffles, manipulation draws and therefore the whole trajectory.
    """
    n = len(dataset)
    if n == 0:
        raise EmptyDataset("no training samples")
    if model_config.input_kind != "image":
        raise InvalidParams("training requires image inputs (manipulations)")

    init_ss, shuffle_ss, manip_ss = np.random.SeedSequence(cfg.seed).spawn(3)
    params = model_mod.init(model_config, seed=init_ss)
    params.seed = cfg.seed
    state = init_optimizer(params)
    shuffle_rng = np.random.default_rng(shuffle_ss)
    manip_rng = np.random.default_rng(manip_ss)

    steps_per_epoch = math.ceil(n / cfg.batch_size)
    total_steps = cfg.epochs * steps_per_epoch
    log = []
    step = 0
    for epoch in range(cfg.epochs):
        perm = shuffle_rng.permutation(n)
        for start in range(0, n, cfg.batch_size):
            batch = [dataset[i] for i in perm[start:start + cfg.batch_size]]
            inputs, records, labels = _assemble_batch(batch, cfg, manip_rng)
            leaves = model_mod.make_leaves(params)
            loss = losses.batch_loss(leaves, model_config, inputs, records,
                                     labels)
            value = loss.item()
            if not math.isfinite(value):
                raise NonFiniteLoss(step, value)
            lr = cosine_lr(step, total_steps, cfg.lr)
            ad_grads = {}
            loss.backward()
            for name, leaf in leaves.items():
                if leaf.grad is not None:
                    ad_grads[name] = leaf.grad
            adamw_step(params.tensors, ad_grads, state, lr, cfg.weight_decay,
                       cfg.beta1, cfg.beta2, cfg.adam_eps)
            log.append((step, epoch, lr, value))
            step += 1

    if log_path is not None:
        write_log(log_path, log)
    if checkpoint_dir is not None:
        model_mod.save_checkpoint(params, checkpoint_dir,
                                  extra=checkpoint_extra)
    return params, log


def write_log(path, rows) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["step", "epoch", "lr", "loss"])
        for step, epoch, lr, value in rows:
            writer.writerow([step, epoch, repr(lr), repr(value)])
