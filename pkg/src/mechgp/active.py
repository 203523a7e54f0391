"""Uncertainty-driven active learning with a boundary penalty.

Greedy loop: seed a few cells, then repeatedly train from scratch on the
labeled set, score every unlabeled cell by predictive sigma minus a
boundary penalty, measure the argmax, and continue until the budget is
spent.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateTargets, OutOfRange, SelectionExhausted, ShapeMismatch
from .estimator import fit_on_indices


@dataclass
class AcquisitionConfig:
    lam: float = 1.0        # penalty weight, standardized-sigma units
    d0: float = 0.1         # penalty margin, normalized coordinates
    budget: int = 100
    k0: int = 2             # initial seed count

    def __post_init__(self):
        if self.lam < 0:
            raise OutOfRange("penalty weight must be nonnegative")
        if not (0.0 < self.d0 <= 1.0):
            raise OutOfRange("penalty margin must lie in (0, 1]")
        if self.budget < 0 or self.k0 < 1:
            raise OutOfRange("budget must be >= 0 and seed count >= 1")


def penalty(x, y, d0=0.1):
    """Linear boundary ramp: 0 in the interior, 1 on the boundary, rising
    once the distance to the nearest edge drops below d0."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    b = np.minimum(1.0 - np.abs(x), 1.0 - np.abs(y))
    return np.maximum(0.0, 1.0 - b / d0)


def score(sigma, coords, labeled_mask, config):
    """Acquisition scores sigma_i - lam * penalty_i; labeled cells -inf."""
    sigma = np.asarray(sigma, dtype=float)
    if np.any(sigma < 0):
        raise OutOfRange("predictive sigmas must be nonnegative")
    labeled_mask = np.asarray(labeled_mask, dtype=bool)
    if labeled_mask.all():
        raise SelectionExhausted("every cell is already labeled")
    pen = penalty(coords[:, 0], coords[:, 1], config.d0)
    alpha = sigma - config.lam * pen
    alpha[labeled_mask] = -np.inf
    return alpha


def select_next(scores):
    """Smallest-index argmax of the scores."""
    scores = np.asarray(scores, dtype=float)
    best = int(np.argmax(scores))
    if not np.isfinite(scores[best]):
        raise SelectionExhausted("no unlabeled candidate remains")
    return best


@dataclass
class ActiveRecord:
    iteration: int
    cell: int
    row: int
    col: int
    score: float
    sigma: float
    penalty: float
    rmse: float
    mean_sigma: float
    extras: dict = field(default_factory=dict)


@dataclass
class ActiveTrace:
    seed_cells: np.ndarray
    records: list
    config: AcquisitionConfig

    def labeled_cells(self):
        return np.concatenate([self.seed_cells,
                               np.array([r.cell for r in self.records], dtype=int)])

    def rmse_series(self):
        return np.array([r.rmse for r in self.records])

    def mean_sigma_series(self):
        return np.array([r.mean_sigma for r in self.records])


class _PriorSurrogate:
    """Stand-in model when the labeled targets are degenerate (e.g. two
    seeds that happen to share a value): flat mean, unit standardized
    sigma, so acquisition is driven by the penalty alone."""

    def __init__(self, value, n):
        self.value = float(value)
        self.n = n

    def grid_moments(self):
        return np.full(self.n, self.value), np.ones(self.n)


def run_loop(dataset, config=None, estimator_params=None, seed=0,
             compute_rmse=True, record_center=False, grid_callback=None):
    """Active-learning loop over a grid dataset.

    Returns (trace, final_model).  Per iteration the model is retrained
    from scratch on the sorted labeled set; the trace records the selected
    cell with its score decomposition, plus the post-update full-grid RMSE
    against the clean targets and the grid-average standardized sigma.
    """
    config = config or AcquisitionConfig()
    estimator_params = dict(estimator_params or {})
    if dataset.coords is None or dataset.grid_shape is None:
        raise ShapeMismatch("active learning needs a grid dataset with coords")
    n = dataset.n_samples
    rows, cols = dataset.grid_shape
    grid_x = dataset.inputs_at()
    coords = dataset.coords

    rng = np.random.default_rng(seed)
    seed_cells = np.sort(rng.choice(n, size=config.k0, replace=False))
    labeled = list(seed_cells)
    labeled_mask = np.zeros(n, dtype=bool)
    labeled_mask[seed_cells] = True

    def train_current():
        try:
            return fit_on_indices(dataset, labeled, **estimator_params)
        except DegenerateTargets:
            return _PriorSurrogate(dataset.targets[labeled[0]], n)

    def grid_moments(model):
        if isinstance(model, _PriorSurrogate):
            return model.grid_moments()
        mean = model.predict(grid_x)
        sigma_std = model.predict_standardized_sigma(grid_x)
        return mean, sigma_std

    model = train_current()
    mean_grid, sigma_grid = grid_moments(model)

    records = []
    for it in range(1, config.budget + 1):
        alpha = score(sigma_grid, coords, labeled_mask, config)
        cell = select_next(alpha)
        pen = float(penalty(coords[cell, 0], coords[cell, 1], config.d0))
        chosen_score = float(alpha[cell])
        chosen_sigma = float(sigma_grid[cell])

        labeled.append(cell)
        labeled_mask[cell] = True
        model = train_current()
        mean_grid, sigma_grid = grid_moments(model)

        rmse = float(np.sqrt(np.mean((mean_grid - dataset.clean_targets) ** 2))) \
            if compute_rmse else float("nan")
        extras = {}
        if record_center and getattr(model, "structured_mean", False):
            xc, yc = model.learned_mean_center()
            extras["center_x"] = xc
            extras["center_y"] = yc
        if grid_callback is not None:
            grid_callback(it, mean_grid, sigma_grid, model)
        records.append(ActiveRecord(
            iteration=it, cell=cell, row=cell // cols, col=cell % cols,
            score=chosen_score, sigma=chosen_sigma, penalty=pen, rmse=rmse,
            mean_sigma=float(sigma_grid.mean()), extras=extras))

    return ActiveTrace(seed_cells=seed_cells, records=records, config=config), model
