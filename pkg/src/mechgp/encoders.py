"""Mechanism-specific patch encoders and joint-latent assembly.

Each image mechanism gets a dedicated two-conv ReLU network with adaptive
average pooling and a linear projection to a 16-dimensional latent block.
Blocks are standardized per component over the training set, concatenated
in fixed mechanism order, and normalized spatial coordinates are appended
untouched.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .errors import MissingStats, OutOfRange, ShapeMismatch

STD_FLOOR = 1e-6


@dataclass
class EncoderSpec:
    in_channels: int
    patch_extent: int
    conv1_filters: int = 16
    conv2_filters: int = 32
    kernel_size: int = 3
    latent_dim: int = 16

    def __post_init__(self):
        if self.latent_dim < 1:
            raise OutOfRange("latent dimension must be >= 1")
        if self.kernel_size % 2 != 1:
            raise OutOfRange("kernel size must be odd")

    def param_shapes(self):
        k = self.kernel_size
        return {
            "conv1_w": (self.conv1_filters, self.in_channels, k, k),
            "conv1_b": (self.conv1_filters,),
            "conv2_w": (self.conv2_filters, self.conv1_filters, k, k),
            "conv2_b": (self.conv2_filters,),
            "proj_w": (self.latent_dim, self.conv2_filters),
            "proj_b": (self.latent_dim,),
        }


def init_encoder_params(store, prefix, spec, rng):
    """Kaiming-uniform weights (ReLU gain), zero biases, seeded."""
    for name, shape in spec.param_shapes().items():
        if name.endswith("_b"):
            store.add(f"{prefix}.{name}", np.zeros(shape))
            continue
        fan_in = int(np.prod(shape[1:]))
        bound = np.sqrt(6.0 / fan_in)
        store.add(f"{prefix}.{name}", rng.uniform(-bound, bound, size=shape))


def encode_patches(store, prefix, spec, patches):
    """conv -> ReLU -> conv -> ReLU -> global average pool -> linear.

    `patches` is (n, C, H, W) as an array or Tensor; returns (n, latent_dim).
    """
    x = patches if isinstance(patches, ad.Tensor) else ad.Tensor(patches)
    if x.ndim != 4 or x.shape[1] != spec.in_channels:
        raise ShapeMismatch(
            f"expected (n, {spec.in_channels}, h, w) patches, got {x.shape}")
    if x.shape[2] != spec.patch_extent or x.shape[3] != spec.patch_extent:
        raise ShapeMismatch(
            f"expected patch extent {spec.patch_extent}, got {x.shape[2:]}" )
    h = ad.relu(ad.conv2d(x, store[f"{prefix}.conv1_w"], store[f"{prefix}.conv1_b"]))
    h = ad.relu(ad.conv2d(h, store[f"{prefix}.conv2_w"], store[f"{prefix}.conv2_b"]))
    pooled = ad.global_avg_pool(h)
    return ad.add(ad.matmul(pooled, ad.transpose(store[f"{prefix}.proj_w"])),
                  store[f"{prefix}.proj_b"])


def normalize_coords(row, col, rows, cols):
    """Affine map of grid indices onto [-1, 1]^2, corners exact."""
    row = np.asarray(row, dtype=float)
    col = np.asarray(col, dtype=float)
    if np.any(row < 0) or np.any(row > rows - 1) or np.any(col < 0) or np.any(col > cols - 1):
        raise OutOfRange("grid index outside the lattice")
    x = 2.0 * col / (cols - 1) - 1.0
    y = 2.0 * row / (rows - 1) - 1.0
    return x, y


@dataclass
class NormalizationStats:
    """Per-component mean and (floored) standard deviation of the latent
    blocks over the training set."""

    mean: np.ndarray
    std: np.ndarray

    def __post_init__(self):
        if np.any(self.std <= 0):
            raise OutOfRange("normalization stds must be positive")


def latent_stats(latents):
    """Population statistics with a smooth variance floor of STD_FLOOR^2."""
    mean = latents.mean(axis=0)
    std = np.sqrt(latents.var(axis=0) + STD_FLOOR ** 2)
    return NormalizationStats(mean=mean, std=std)


def latent_stats_graph(latents):
    """Graph version of `latent_stats`; both are differentiated through."""
    mean = ad.mean_(latents, axis=0, keepdims=True)
    centered = ad.sub(latents, mean)
    var = ad.mean_(ad.square(centered), axis=0, keepdims=True)
    std = ad.sqrt(ad.add(var, ad.Tensor(STD_FLOOR ** 2)))
    return mean, std


@dataclass
class JointLatent:
    """Concatenated standardized latent blocks plus raw coordinates, with
    an attribution map from joint index to mechanism."""

    values: np.ndarray
    layout: list                    # [(mechanism, start, stop), ...]
    has_coords: bool

    @property
    def dimension(self):
        return self.values.shape[1]

    def attribution(self, index):
        for name, start, stop in self.layout:
            if start <= index < stop:
                return name
        if self.has_coords and index == self.dimension - 2:
            return "coordinate x"
        if self.has_coords and index == self.dimension - 1:
            return "coordinate y"
        raise OutOfRange(f"joint index {index} outside dimension {self.dimension}")


def assemble(blocks, coords=None, stats=None):
    """Standardize each block with the supplied training-set stats,
    concatenate in mechanism order, append coordinates untouched.

    `blocks`: list of (name, (n, d_k) array); `stats`: dict name ->
    NormalizationStats.  Raises MissingStats when stats are absent.
    """
    if stats is None:
        raise MissingStats("assembly requires training-set normalization stats")
    layout = []
    parts = []
    start = 0
    for name, z in blocks:
        if name not in stats:
            raise MissingStats(f"no normalization stats for mechanism {name!r}")
        s = stats[name]
        parts.append((np.asarray(z) - s.mean) / s.std)
        stop = start + z.shape[1]
        layout.append((name, start, stop))
        start = stop
    if coords is not None:
        parts.append(np.asarray(coords, dtype=float))
    return JointLatent(values=np.concatenate(parts, axis=1), layout=layout,
                       has_coords=coords is not None)


def injectivity_probe(latents, categories, tol=1e-6):
    """Smallest L-inf distance between latents of different categories.

    Diagnostic only: warns when two differently-labeled inputs collapse to
    nearly the same latent (conflicting supervision for the GP).
    """
    latents = np.asarray(latents)
    categories = np.asarray(categories)
    best = np.inf
    cats = np.unique(categories)
    for i, a in enumerate(cats):
        za = latents[categories == a]
        for b in cats[i + 1:]:
            zb = latents[categories == b]
            d = np.abs(za[:, None, :] - zb[None, :, :]).max(axis=2)
            best = min(best, float(d.min()))
    if best < tol:
        warnings.warn(
            f"latent collision across categories: min L-inf distance {best:.3g}",
            RuntimeWarning, stacklevel=2)
    return best
