"""Synthetic multi-mechanism benchmark generation.

Each benchmark composes per-cell scalar contributions from independent
mechanisms (categorical image patches, spatial fields) into an observed
target, keeping the ground-truth components for later evaluation.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field

import numpy as np

from .errors import OutOfRange, ShapeMismatch
from .glyphs import SUITS, render_suit

RGB_BASE_VALUES = {"red": 150.0, "green": 110.0, "blue": 50.0}
SUIT_BASE_VALUES = {"spades": 40.0, "hearts": 80.0, "diamonds": 120.0, "clubs": 160.0}


@dataclass
class StressFieldParams:
    """Two concentric Gaussians: a narrow tensile peak over a wide
    compressive trough.  Radii are in raw grid units."""

    x0: float = 65.0
    y0: float = 40.0
    sigma_tensile: float = 200.0
    r_tensile: float = 10.0
    sigma_compressive: float = -50.0
    r_compressive: float = 30.0

    def __post_init__(self):
        if self.r_tensile <= 0 or self.r_compressive <= 0:
            raise OutOfRange("stress field radii must be positive")


@dataclass
class PatchMosaic:
    """Grid of rendered image patches with one category per cell.

    Patches live in a bank indexed per cell, so mosaics with few distinct
    patches (the RGB case) stay cheap to hold and encode.
    """

    rows: int
    cols: int
    patch_size: int
    category_names: tuple
    categories: np.ndarray          # (rows*cols,) int
    bank: np.ndarray                # (n_bank, C, u, u) float64 in [0, 1]
    patch_index: np.ndarray         # (rows*cols,) int into bank
    base_values: np.ndarray         # (n_categories,) float64

    @property
    def n_cells(self):
        return self.rows * self.cols

    @property
    def channels(self):
        return self.bank.shape[1]

    def patches(self, idx=None):
        if idx is None:
            return self.bank[self.patch_index]
        return self.bank[self.patch_index[np.asarray(idx)]]

    def base_field(self):
        return self.base_values[self.categories]


def linear_field(rows, cols, lo, hi):
    """Planar gradient, affine in (row + col), lo at cell (0, 0) and hi at
    the opposite corner."""
    if rows < 2 or cols < 2:
        raise OutOfRange("linear_field needs at least a 2x2 grid")
    r, c = np.meshgrid(np.arange(rows), np.arange(cols), indexing="ij")
    span = (rows - 1) + (cols - 1)
    return lo + (hi - lo) * (r + c) / span


def stress_field(rows, cols, p=None):
    """Residual-stress surrogate: tensile Gaussian plus compressive
    Gaussian, both centered at the weld center, distances in grid units."""
    p = p or StressFieldParams()
    r, c = np.meshgrid(np.arange(rows, dtype=float), np.arange(cols, dtype=float),
                       indexing="ij")
    d2 = (c - p.x0) ** 2 + (r - p.y0) ** 2
    return (p.sigma_tensile * np.exp(-d2 / (2.0 * p.r_tensile ** 2))
            + p.sigma_compressive * np.exp(-d2 / (2.0 * p.r_compressive ** 2)))


def rgb_mosaic(rows, cols, patch_size=16, seed=0):
    """Uniform color patches drawn uniformly from red/green/blue."""
    if patch_size < 1:
        raise OutOfRange("patch_size must be at least 1")
    rng = np.random.default_rng(seed)
    names = tuple(RGB_BASE_VALUES)
    cats = rng.integers(0, 3, size=rows * cols)
    bank = np.zeros((3, 3, patch_size, patch_size))
    for k in range(3):
        bank[k, k] = 1.0
    return PatchMosaic(
        rows=rows, cols=cols, patch_size=patch_size, category_names=names,
        categories=cats, bank=bank, patch_index=cats.copy(),
        base_values=np.array([RGB_BASE_VALUES[n] for n in names]),
    )


def suit_mosaic(rows, cols, patch_size=16, seed=0, base_values=None):
    """Suit glyph patches with per-cell random rotation and shear.

    Base values per suit are configurable; the defaults are well separated
    from the RGB values.
    """
    if patch_size < 8:
        raise OutOfRange("suit glyphs need patch_size >= 8")
    values = dict(SUIT_BASE_VALUES)
    if base_values:
        values.update(base_values)
    rng = np.random.default_rng(seed)
    n = rows * cols
    cats = rng.integers(0, 4, size=n)
    rotations = rng.uniform(-30.0, 30.0, size=n)
    shears = rng.uniform(-0.2, 0.2, size=n)
    bank = np.empty((n, 1, patch_size, patch_size))
    for i in range(n):
        bank[i, 0] = render_suit(SUITS[cats[i]], patch_size,
                                 rotation_deg=rotations[i], shear=shears[i])
    return PatchMosaic(
        rows=rows, cols=cols, patch_size=patch_size, category_names=SUITS,
        categories=cats, bank=bank, patch_index=np.arange(n),
        base_values=np.array([values[s] for s in SUITS]),
    )


def grid_coordinates(rows, cols):
    """Normalized (x, y) per cell in row-major order; corners map exactly
    onto (+-1, +-1)."""
    r, c = np.meshgrid(np.arange(rows, dtype=float), np.arange(cols, dtype=float),
                       indexing="ij")
    x = 2.0 * c / (cols - 1) - 1.0
    y = 2.0 * r / (rows - 1) - 1.0
    return np.stack([x.ravel(), y.ravel()], axis=1)


@dataclass
class MechanismDataset:
    """Per-sample mechanism inputs, observed targets and retained truth."""

    mechanisms: dict                 # name -> PatchMosaic
    targets: np.ndarray              # (n,) observed (noise included)
    clean_targets: np.ndarray        # (n,) noiseless sum of components
    components: dict                 # name -> (n,) ground-truth contribution
    coords: np.ndarray = None        # (n, 2) normalized, or None
    grid_shape: tuple = None
    seed: int = 0
    noise_sigma: float = 0.0
    extra: dict = field(default_factory=dict)

    @property
    def n_samples(self):
        return self.targets.shape[0]

    def inputs_at(self, idx=None):
        """Assemble the estimator input dict, mechanisms as (bank, index)."""
        x = {}
        for name, mosaic in self.mechanisms.items():
            index = mosaic.patch_index if idx is None else mosaic.patch_index[np.asarray(idx)]
            x[name] = (mosaic.bank, index)
        if self.coords is not None:
            x["coords"] = self.coords if idx is None else self.coords[np.asarray(idx)]
        return x

    def content_hash(self):
        h = hashlib.sha256()
        for name in sorted(self.mechanisms):
            m = self.mechanisms[name]
            h.update(name.encode())
            h.update(m.categories.astype(np.int64).tobytes())
            h.update(m.bank.tobytes())
            h.update(m.patch_index.astype(np.int64).tobytes())
        if self.coords is not None:
            h.update(self.coords.tobytes())
        h.update(self.targets.tobytes())
        for name in sorted(self.components):
            h.update(self.components[name].tobytes())
        return h.hexdigest()


def compose(patch_mechanisms, spatial_fields=None, noise_sigma=0.0, seed=0,
            include_coords=True):
    """Sum mechanism contributions cellwise into a dataset.

    `patch_mechanisms`: dict name -> PatchMosaic; `spatial_fields`: dict
    name -> (rows, cols) array.  Gaussian noise of the given sigma is added
    to the observed targets only; the clean sum and per-mechanism
    components are retained and the additivity invariant is verified.
    """
    spatial_fields = spatial_fields or {}
    shapes = [(m.rows, m.cols) for m in patch_mechanisms.values()]
    shapes += [f.shape for f in spatial_fields.values()]
    if not shapes:
        raise ShapeMismatch("compose needs at least one mechanism")
    if len(set(shapes)) != 1:
        raise ShapeMismatch(f"mechanism grids disagree: {shapes}")
    rows, cols = shapes[0]
    n = rows * cols

    components = {}
    for name, mosaic in patch_mechanisms.items():
        components[name] = mosaic.base_field().astype(np.float64)
    for name, fieldarr in spatial_fields.items():
        components[name] = np.asarray(fieldarr, dtype=np.float64).ravel()

    clean = np.zeros(n)
    for v in components.values():
        clean = clean + v
    total = sum(components.values())
    if not np.array_equal(total, clean):
        raise ShapeMismatch("component sum failed the additivity check")

    rng = np.random.default_rng(seed)
    noise = rng.normal(0.0, noise_sigma, size=n) if noise_sigma > 0 else np.zeros(n)
    return MechanismDataset(
        mechanisms=dict(patch_mechanisms),
        targets=clean + noise,
        clean_targets=clean,
        components=components,
        coords=grid_coordinates(rows, cols) if include_coords else None,
        grid_shape=(rows, cols),
        seed=seed,
        noise_sigma=noise_sigma,
    )


def make_benchmark1(rows=100, cols=100, patch_size=16, seed=0, noise_sigma=0.0,
                    spatial=True):
    """Linear spatial gradient (10..300) plus RGB base values.

    `spatial=False` drops the gradient entirely (robustness variant);
    `noise_sigma` adds observation noise to the targets.
    """
    ss = np.random.SeedSequence(seed).spawn(2)
    mosaic = rgb_mosaic(rows, cols, patch_size, seed=ss[0])
    fields = {"spatial": linear_field(rows, cols, 10.0, 300.0)} if spatial else {}
    ds = compose({"rgb": mosaic}, fields, noise_sigma=noise_sigma, seed=ss[1])
    ds.seed = seed
    return ds


def make_benchmark1_1(rows=100, cols=100, patch_size=16, seed=0, noise_sigma=0.0,
                      stress_params=None):
    """RGB mosaic over the residual-stress field."""
    ss = np.random.SeedSequence(seed).spawn(2)
    mosaic = rgb_mosaic(rows, cols, patch_size, seed=ss[0])
    fields = {"spatial": stress_field(rows, cols, stress_params)}
    ds = compose({"rgb": mosaic}, fields, noise_sigma=noise_sigma, seed=ss[1])
    ds.seed = seed
    return ds


def make_benchmark2(rows=100, cols=100, patch_size=16, seed=0, noise_sigma=0.0,
                    stress_params=None):
    """Suit glyph mosaic over the residual-stress field."""
    ss = np.random.SeedSequence(seed).spawn(2)
    mosaic = suit_mosaic(rows, cols, patch_size, seed=ss[0])
    fields = {"spatial": stress_field(rows, cols, stress_params)}
    ds = compose({"suits": mosaic}, fields, noise_sigma=noise_sigma, seed=ss[1])
    ds.seed = seed
    return ds


def three_mechanism_dataset(rows=100, cols=100, patch_size=16, seed=0,
                            noise_sigma=0.0, stress_params=None):
    """RGB mosaic + suit mosaic + residual-stress field, composed additively."""
    ss = np.random.SeedSequence(seed).spawn(3)
    rgb = rgb_mosaic(rows, cols, patch_size, seed=ss[0])
    suits = suit_mosaic(rows, cols, patch_size, seed=ss[1])
    fields = {"spatial": stress_field(rows, cols, stress_params)}
    ds = compose({"rgb": rgb, "suits": suits}, fields,
                 noise_sigma=noise_sigma, seed=ss[2])
    ds.seed = seed
    return ds


BENCHMARK_BUILDERS = {
    "1": make_benchmark1,
    "1.1": make_benchmark1_1,
    "2": make_benchmark2,
    "three-mechanism": three_mechanism_dataset,
}
