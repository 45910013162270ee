"""Feature extractor f(.; theta) and the five scalar prediction heads.

The desk-scale default extracts 16x16 patch mean/std statistics and runs
them through a small MLP; a tiny convnet over raw pixels is available as
an alternative. Heads 1..4 feed the EXIF ranking losses, head 5 the
manipulation classifier.
"""

from __future__ import annotations

import hashlib
import json
import os
from dataclasses import dataclass, asdict

import numpy as np

from . import autodiff as ad
from .errors import ShapeMismatch

CHECKPOINT_VERSION = 1
N_HEADS = 5


@dataclass(frozen=True)
class ModelConfig:
    input_kind: str = "image"          # "image" or "vector"
    image_size: tuple = (64, 64)       # H, W for image inputs
    vector_dim: int = 0                # dim for precomputed-feature inputs
    arch: str = "mlp_patch"            # "mlp_patch" or "tiny_conv"
    patch_size: int = 16
    hidden: tuple = (128, 128)
    conv_channels: tuple = (8, 16)
    feature_dim: int = 64              # N; the paper-scale value 768 also works

    def __post_init__(self):
        if self.feature_dim < 2:
            raise ValueError("feature_dim must be >= 2")
        if self.input_kind not in ("image", "vector"):
            raise ValueError(f"bad input_kind {self.input_kind!r}")
        if self.arch not in ("mlp_patch", "tiny_conv"):
            raise ValueError(f"bad arch {self.arch!r}")
        object.__setattr__(self, "image_size", tuple(self.image_size))
        object.__setattr__(self, "hidden", tuple(self.hidden))
        object.__setattr__(self, "conv_channels", tuple(self.conv_channels))

    def to_dict(self) -> dict:
        return asdict(self)

    @staticmethod
    def from_dict(d: dict) -> "ModelConfig":
        return ModelConfig(**d)


@dataclass
class ModelParams:
    config: ModelConfig
    tensors: dict            # name -> float64 ndarray, canonical order
    seed: int = 0


def patch_stats(images: np.ndarray, patch_size: int) -> np.ndarray:
    """Per-patch per-channel mean and std of uint8 images.

    (B, H, W, 3) -> (B, (H//p) * (W//p) * 3 * 2) float64 in [0, 1] units;
    trailing rows/columns that do not fill a patch are ignored.
    """
    x = images.astype(np.float64) / 255.0
    b, h, w, c = x.shape
    p = patch_size
    hp, wp = h // p, w // p
    x = x[:, :hp * p, :wp * p, :].reshape(b, hp, p, wp, p, c)
    mean = x.mean(axis=(2, 4))
    sq = (x * x).mean(axis=(2, 4))
    std = np.sqrt(np.maximum(sq - mean * mean, 0.0))
    return np.stack([mean, std], axis=-1).reshape(b, -1)


def stats_dim(config: ModelConfig) -> int:
    h, w = config.image_size
    p = config.patch_size
    return (h // p) * (w // p) * 3 * 2


def _mlp_dims(config: ModelConfig):
    if config.input_kind == "vector":
        in_dim = config.vector_dim
    else:
        in_dim = stats_dim(config)
    return [in_dim, *config.hidden, config.feature_dim]


def param_shapes(config: ModelConfig) -> dict:
    """Canonical parameter name -> shape map (iteration order matters)."""
    shapes = {}
    if config.arch == "mlp_patch" or config.input_kind == "vector":
        dims = _mlp_dims(config)
        for k in range(len(dims) - 1):
            shapes[f"extractor.w{k}"] = (dims[k], dims[k + 1])
            shapes[f"extractor.b{k}"] = (dims[k + 1],)
    else:  # tiny_conv
        in_ch = 3
        for k, out_ch in enumerate(config.conv_channels):
            shapes[f"extractor.conv{k}.w"] = (out_ch, in_ch, 3, 3)
            shapes[f"extractor.conv{k}.b"] = (out_ch,)
            in_ch = out_ch
        shapes["extractor.out.w"] = (in_ch, config.feature_dim)
        shapes["extractor.out.b"] = (config.feature_dim,)
    for i in range(1, N_HEADS + 1):
        shapes[f"head{i}.w"] = (config.feature_dim, 1)
        shapes[f"head{i}.b"] = (1,)
    return shapes


def _fan_in(shape) -> int:
    if len(shape) == 4:  # conv kernels: in_channels * kh * kw
        return shape[1] * shape[2] * shape[3]
    return shape[0]


def init(config: ModelConfig, seed: int = 0) -> ModelParams:
    """Seeded Kaiming-uniform weights (bound sqrt(6/fan_in)), zero biases."""
    rng = np.random.default_rng(seed)
    tensors = {}
    for name, shape in param_shapes(config).items():
        if len(shape) == 1:  # biases start at zero
            tensors[name] = np.zeros(shape, dtype=np.float64)
        else:
            bound = np.sqrt(6.0 / _fan_in(shape))
            tensors[name] = rng.uniform(-bound, bound, size=shape)
    return ModelParams(config=config, tensors=tensors, seed=seed)


def make_leaves(params: ModelParams) -> dict:
    """Wrap every parameter array as a gradient-tracking leaf tensor."""
    return {name: ad.Tensor(arr, requires_grad=True)
            for name, arr in params.tensors.items()}


def _prep_images(config: ModelConfig, inputs: np.ndarray):
    x = np.asarray(inputs)
    single = x.ndim == 3
    if single:
        x = x[None]
    if x.ndim != 4 or x.shape[3] != 3:
        raise ShapeMismatch(f"expected (B, H, W, 3) images, got {x.shape}")
    return x, single


def forward_features(leaves: dict, config: ModelConfig, inputs) -> ad.Tensor:
    """Feature extractor forward pass on the tape; returns a (B, N) tensor."""
    if config.input_kind == "vector":
        x = np.asarray(inputs, dtype=np.float64)
        if x.ndim == 1:
            x = x[None]
        if x.shape[1] != config.vector_dim:
            raise ShapeMismatch(
                f"expected vectors of dim {config.vector_dim}, got {x.shape}")
        h = ad.Tensor(x)
    elif config.arch == "mlp_patch":
        imgs, _ = _prep_images(config, inputs)
        h = ad.Tensor(patch_stats(imgs, config.patch_size))
    else:
        imgs, _ = _prep_images(config, inputs)
        x = imgs.astype(np.float64).transpose(0, 3, 1, 2) / 255.0
        h = ad.Tensor(x)
        for k in range(len(config.conv_channels)):
            h = ad.relu(ad.conv2d(h, leaves[f"extractor.conv{k}.w"],
                                  leaves[f"extractor.conv{k}.b"],
                                  stride=2, pad=1))
        h = ad.mean_pool(h)
        return ad.add(ad.matmul(h, leaves["extractor.out.w"]),
                      leaves["extractor.out.b"])

    n_layers = len(_mlp_dims(config)) - 1
    for k in range(n_layers):
        h = ad.add(ad.matmul(h, leaves[f"extractor.w{k}"]),
                   leaves[f"extractor.b{k}"])
        if k < n_layers - 1:
            h = ad.relu(h)
    return h


def forward_head(leaves: dict, z: ad.Tensor, i: int) -> ad.Tensor:
    """Scalar logit of head i (1..5) for each sample; returns shape (B,)."""
    if not 1 <= i <= N_HEADS:
        raise ValueError(f"head index {i} outside 1..{N_HEADS}")
    out = ad.add(ad.matmul(z, leaves[f"head{i}.w"]), leaves[f"head{i}.b"])
    return ad.reshape(out, (z.shape[0],))


def extract(params: ModelParams, inputs) -> np.ndarray:
    """Inference-only features; (N,) for a single input, else (B, N)."""
    single = (np.asarray(inputs).ndim == 3 if params.config.input_kind == "image"
              else np.asarray(inputs).ndim == 1)
    z = forward_features(make_leaves(params), params.config, inputs)
    return z.values[0] if single else z.values


def head(params: ModelParams, z: np.ndarray, i: int) -> np.ndarray:
    """Inference-only head logit; scalar for a single feature vector."""
    z = np.asarray(z, dtype=np.float64)
    single = z.ndim == 1
    if single:
        z = z[None]
    out = forward_head(make_leaves(params), ad.Tensor(z), i)
    return float(out.values[0]) if single else out.values


def all_logits(params: ModelParams, inputs) -> np.ndarray:
    """(B, 5) head logits for a batch of inputs."""
    leaves = make_leaves(params)
    z = forward_features(leaves, params.config, inputs)
    cols = [forward_head(leaves, z, i).values for i in range(1, N_HEADS + 1)]
    return np.stack(cols, axis=1)


# -- checkpoint I/O ------------------------------------------------------

def save_checkpoint(params: ModelParams, directory, extra: dict = None) -> None:
    """Write manifest.json + params.bin (little-endian float64)."""
    os.makedirs(directory, exist_ok=True)
    entries = []
    offset = 0
    blobs = []
    for name, arr in params.tensors.items():
        blob = np.ascontiguousarray(arr, dtype="<f8").tobytes()
        entries.append({"name": name, "shape": list(arr.shape),
                        "offset": offset})
        blobs.append(blob)
        offset += len(blob)
    manifest = {
        "format_version": CHECKPOINT_VERSION,
        "config": params.config.to_dict(),
        "seed": params.seed,
        "tensors": entries,
        "extra": extra or {},
    }
    with open(os.path.join(directory, "manifest.json"), "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    with open(os.path.join(directory, "params.bin"), "wb") as fh:
        fh.write(b"".join(blobs))


def load_checkpoint(directory) -> ModelParams:
    with open(os.path.join(directory, "manifest.json")) as fh:
        manifest = json.load(fh)
    if manifest["format_version"] != CHECKPOINT_VERSION:
        raise ValueError(f"unsupported checkpoint version "
                         f"{manifest['format_version']}")
    config = ModelConfig.from_dict(manifest["config"])
    with open(os.path.join(directory, "params.bin"), "rb") as fh:
        raw = fh.read()
    tensors = {}
    for entry in manifest["tensors"]:
        shape = tuple(entry["shape"])
        n = int(np.prod(shape)) if shape else 1
        start = entry["offset"]
        arr = np.frombuffer(raw, dtype="<f8", count=n, offset=start)
        tensors[entry["name"]] = arr.reshape(shape).astype(np.float64)
    return ModelParams(config=config, tensors=tensors,
                       seed=manifest["seed"])


def checkpoint_digest(directory) -> str:
    """SHA-256 over manifest + parameter bytes (artifact identity)."""
    digest = hashlib.sha256()
    for fname in ("manifest.json", "params.bin"):
        with open(os.path.join(directory, fname), "rb") as fh:
            digest.update(fh.read())
    return digest.hexdigest()
