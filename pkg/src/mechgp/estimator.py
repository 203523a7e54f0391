"""Joint training of mechanism encoders and the sparse variational GP.

`MechanismGPRegressor` follows the scikit-learn estimator contract
(`fit`/`predict`/`get_params`): constructor arguments are stored verbatim,
fitted state lives in trailing-underscore attributes, and inputs are
validated through `mechgp.validation`.  X is a dict mapping mechanism
names to patch stacks (dense arrays or (bank, index) pairs) plus an
optional "coords" entry with normalized spatial coordinates.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin

from . import autodiff as ad
from . import gp
from .encoders import (EncoderSpec, NormalizationStats, encode_patches,
                       init_encoder_params, latent_stats, latent_stats_graph)
from .errors import DegenerateTargets, NonFiniteGradient, ShapeMismatch
from .params import ParamStore, adam_step, grad
from .validation import validate_mechanism_inputs, validate_targets

PREDICT_CHUNK = 512


def standardize_targets(y):
    """Population-convention standardization; constants kept for inversion."""
    y = np.asarray(y, dtype=np.float64)
    if y.ndim != 1 or y.shape[0] < 2:
        raise ShapeMismatch("standardization needs a 1-d target vector, n >= 2")
    mean = float(y.mean())
    sd = float(y.std())
    if sd < 1e-12:
        raise DegenerateTargets("targets have (near-)zero spread")
    return (y - mean) / sd, mean, sd


class MechanismGPRegressor(BaseEstimator, RegressorMixin):
    """Deep-kernel sparse variational GP over mechanism-specific latents.

    Each image mechanism is encoded by its own two-conv network into a
    16-dimensional block; blocks are standardized over the training set
    (statistics recomputed inside the differentiated graph each step),
    concatenated, and normalized coordinates are appended raw.  A Matern-5/2
    ARD kernel (RBF selectable) with an inducing-point variational posterior
    is trained jointly with the encoders by Adam on the negative ELBO.

    Parameters
    ----------
    latent_dim : per-mechanism latent block size.
    conv1_filters, conv2_filters : encoder widths.
    kernel : "matern52" or "rbf".
    structured_mean : add a learnable Gaussian bump over the coordinate
        dimensions to the prior mean (requires coords in X).
    learning_rate, n_iterations, batch_size, n_inducing : optimization
        settings; the inducing count is clamped to the training-set size.
    noise_variance_init, signal_variance_init, lengthscale_init : kernel
        and likelihood initialization (targets are standardized).
    mean_amplitude_init, mean_width_init : structured-mean initialization.
    jitter_schedule : Cholesky jitters tried in order.
    random_state : seed for parameter init, inducing choice and batching.
    """

    def __init__(self, latent_dim=16, conv1_filters=16, conv2_filters=32,
                 kernel="matern52", structured_mean=False, learning_rate=0.01,
                 n_iterations=500, batch_size=256, n_inducing=50,
                 noise_variance_init=0.1, signal_variance_init=1.0,
                 lengthscale_init=1.0, mean_amplitude_init=1.0,
                 mean_width_init=0.5, jitter_schedule=ad.DEFAULT_JITTER_SCHEDULE,
                 random_state=0):
        self.latent_dim = latent_dim
        self.conv1_filters = conv1_filters
        self.conv2_filters = conv2_filters
        self.kernel = kernel
        self.structured_mean = structured_mean
        self.learning_rate = learning_rate
        self.n_iterations = n_iterations
        self.batch_size = batch_size
        self.n_inducing = n_inducing
        self.noise_variance_init = noise_variance_init
        self.signal_variance_init = signal_variance_init
        self.lengthscale_init = lengthscale_init
        self.mean_amplitude_init = mean_amplitude_init
        self.mean_width_init = mean_width_init
        self.jitter_schedule = jitter_schedule
        self.random_state = random_state

    # construction --------------------------------------------------------

    def _build_params(self, mechanisms, has_coords, rng):
        params = ParamStore()
        specs = {}
        for name, (bank, _) in mechanisms.items():
            if bank.shape[2] != bank.shape[3]:
                raise ShapeMismatch(f"{name} patches must be square")
            spec = EncoderSpec(in_channels=bank.shape[1], patch_extent=bank.shape[2],
                               conv1_filters=self.conv1_filters,
                               conv2_filters=self.conv2_filters,
                               latent_dim=self.latent_dim)
            specs[name] = spec
            init_encoder_params(params, f"enc.{name}", spec, rng)
        d = self.latent_dim * len(mechanisms) + (2 if has_coords else 0)
        params.add("kernel.log_lengthscales",
                   np.full(d, np.log(self.lengthscale_init)))
        params.add("kernel.log_variance", np.log(self.signal_variance_init))
        params.add("likelihood.log_noise", gp.init_log_noise(self.noise_variance_init))
        params.add("mean.const", 0.0)
        if self.structured_mean:
            params.add("mean.amplitude", self.mean_amplitude_init)
            params.add("mean.center_x_raw", 0.0)
            params.add("mean.center_y_raw", 0.0)
            params.add("mean.log_width", np.log(self.mean_width_init))
        return params, specs, d

    def _encode_blocks(self, params, mechanisms):
        """Per-mechanism latent tensors in mechanism order (graph)."""
        blocks = []
        for name, (bank, index) in mechanisms.items():
            z_bank = encode_patches(params, f"enc.{name}", self._specs[name],
                                    np.asarray(bank, dtype=np.float64))
            blocks.append((name, ad.gather_rows(z_bank, index)))
        return blocks

    def _joint_graph(self, params, mechanisms, coords, fixed_stats=None):
        """Standardize, concatenate, append coords; graph-valued.

        With `fixed_stats` None the statistics are computed from the
        encoded set itself and stay inside the differentiated graph.
        """
        parts = []
        for name, z in self._encode_blocks(params, mechanisms):
            if fixed_stats is None:
                mean_t, std_t = latent_stats_graph(z)
            else:
                s = fixed_stats[name]
                mean_t, std_t = ad.Tensor(s.mean), ad.Tensor(s.std)
            parts.append(ad.div(ad.sub(z, mean_t), std_t))
        if coords is not None:
            parts.append(ad.Tensor(np.asarray(coords, dtype=np.float64)))
        return ad.concat(parts, axis=1)

    def _current_stats(self, params, mechanisms):
        with ad.no_grad():
            return {name: latent_stats(z.data)
                    for name, z in self._encode_blocks(params, mechanisms)}

    # fitting -------------------------------------------------------------

    def fit(self, X, y):
        """Train on mechanism inputs X and scalar targets y; returns self."""
        mechanisms, coords, n = validate_mechanism_inputs(X)
        y = validate_targets(y, n)
        if n < 2:
            raise ShapeMismatch("training needs at least two samples")
        if self.structured_mean and coords is None:
            raise ShapeMismatch("structured mean requires a coords input")
        if self.kernel not in gp.KERNELS:
            raise ValueError(f"kernel must be one of {gp.KERNELS}")

        y_std, t_mean, t_sd = standardize_targets(y)
        ss = np.random.SeedSequence(self.random_state).spawn(3)
        rng_init = np.random.default_rng(ss[0])
        rng_induce = np.random.default_rng(ss[1])
        rng_batch = np.random.default_rng(ss[2])

        params, specs, d = self._build_params(mechanisms, coords is not None, rng_init)
        self._specs = specs

        m = int(min(self.n_inducing, n))
        with ad.no_grad():
            joint0 = self._joint_graph(params, mechanisms, coords).data
        induce_idx = np.sort(rng_induce.choice(n, size=m, replace=False))
        params.add("variational.inducing", joint0[induce_idx])

        # start the variational mean at the observed values of the inducing
        # subset so early predictions interpolate the seeds
        cx = coords[:, 0] if coords is not None else None
        cy = coords[:, 1] if coords is not None else None
        with ad.no_grad():
            kmm = gp.kernel_cross(params, params["variational.inducing"],
                                  params["variational.inducing"], self.kernel).data
            l0, _ = ad.cholesky_with_jitter(kmm, self.jitter_schedule)
            mean0 = gp.mean_values(
                params, m,
                cx[induce_idx] if cx is not None else None,
                cy[induce_idx] if cy is not None else None,
                self.structured_mean).data
        from scipy.linalg import solve_triangular
        v0 = solve_triangular(l0, y_std[induce_idx] - mean0, lower=True)
        params.add("variational.whitened_mean", v0)
        params.add("variational.whitened_cov", np.zeros(m * (m + 1) // 2))

        self.params_ = params
        self.mechanism_names_ = list(mechanisms)
        self.has_coords_ = coords is not None
        self.joint_dim_ = d
        self.inducing_count_ = m
        self.n_train_ = n
        self.target_mean_ = t_mean
        self.target_std_ = t_sd
        self._train_mechanisms = mechanisms
        self._train_coords = coords
        self._train_y_std = y_std

        def objective_for(batch_idx):
            yb = y_std[batch_idx]
            cbx = cx[batch_idx] if cx is not None else None
            cby = cy[batch_idx] if cy is not None else None

            def objective(ps):
                joint = self._joint_graph(ps, mechanisms, coords)
                jb = ad.gather_rows(joint, batch_idx)
                return ad.neg(gp.elbo(ps, jb, yb, n, kind=self.kernel,
                                      structured=self.structured_mean,
                                      coords_x=cbx, coords_y=cby,
                                      jitter_schedule=self.jitter_schedule))
            return objective

        self.elbo_initial_ = self.elbo_full()
        history = np.empty(self.n_iterations)
        all_idx = np.arange(n)
        for step in range(self.n_iterations):
            if n <= self.batch_size:
                batch_idx = all_idx
            else:
                batch_idx = np.sort(rng_batch.choice(n, self.batch_size, replace=False))
            try:
                history[step] = grad(objective_for(batch_idx), params)
            except NonFiniteGradient as err:
                raise NonFiniteGradient(f"{err} (at step {step})", step=step) from err
            adam_step(params, self.learning_rate)

        self.loss_history_ = history
        self.stats_ = self._current_stats(params, mechanisms)
        self.elbo_final_ = self.elbo_full()
        return self

    # inference -----------------------------------------------------------

    def _check_fitted(self):
        if not hasattr(self, "params_"):
            raise RuntimeError("estimator is not fitted")

    def _expected_shapes(self):
        return {name: (spec.in_channels, spec.patch_extent)
                for name, spec in self._specs.items()}

    def _encode_inputs(self, mechanisms, coords):
        """Numpy joint latents for prediction: fixed training stats,
        bank-chunked convolutions."""
        parts = []
        with ad.no_grad():
            for name in self.mechanism_names_:
                bank, index = mechanisms[name]
                stats = self.stats_[name]
                chunks = []
                for lo in range(0, bank.shape[0], PREDICT_CHUNK):
                    z = encode_patches(self.params_, f"enc.{name}", self._specs[name],
                                       np.asarray(bank[lo:lo + PREDICT_CHUNK],
                                                  dtype=np.float64))
                    chunks.append(z.data)
                z_bank = np.concatenate(chunks, axis=0) if chunks else np.zeros((0, self.latent_dim))
                parts.append(((z_bank - stats.mean) / stats.std)[index])
        if coords is not None:
            parts.append(np.asarray(coords, dtype=np.float64))
        return np.concatenate(parts, axis=1)

    def _predict_standardized(self, X, include_noise=False):
        self._check_fitted()
        mechanisms, coords, n = validate_mechanism_inputs(X, self._expected_shapes())
        if self.has_coords_ and coords is None:
            raise ShapeMismatch("model was fitted with coords; X lacks them")
        if not self.has_coords_ and coords is not None:
            raise ShapeMismatch("model was fitted without coords")
        joint = self._encode_inputs(mechanisms, coords)
        mean, var = gp.predict(
            self.params_, joint, kind=self.kernel, structured=self.structured_mean,
            coords_x=coords[:, 0] if coords is not None else None,
            coords_y=coords[:, 1] if coords is not None else None,
            include_noise=include_noise, jitter_schedule=self.jitter_schedule)
        return mean, np.sqrt(var)

    def predict(self, X, return_std=False, include_observation_noise=False):
        """Predictive mean (and std) in original target units."""
        mean_s, std_s = self._predict_standardized(X, include_observation_noise)
        mean = mean_s * self.target_std_ + self.target_mean_
        if return_std:
            return mean, std_s * self.target_std_
        return mean

    def predict_standardized_sigma(self, X):
        """Latent-space predictive std in standardized target units (the
        acquisition currency of the active-learning loop)."""
        return self._predict_standardized(X, include_noise=False)[1]

    # diagnostics & state -------------------------------------------------

    def elbo_full(self):
        """Full-batch ELBO on the training set at the current parameters."""
        if not hasattr(self, "_train_mechanisms"):
            raise RuntimeError("estimator is not fitted")
        mechanisms = self._train_mechanisms
        coords = self._train_coords
        y_std = self._train_y_std
        cx = coords[:, 0] if coords is not None else None
        cy = coords[:, 1] if coords is not None else None
        with ad.no_grad():
            joint = self._joint_graph(self.params_, mechanisms, coords)
            val = gp.elbo(self.params_, joint, y_std, y_std.shape[0],
                          kind=self.kernel, structured=self.structured_mean,
                          coords_x=cx, coords_y=cy,
                          jitter_schedule=self.jitter_schedule)
        return val.item()

    def calibrate_variational(self):
        """Set the whitened variational parameters to their closed-form
        optimum for the current hyperparameters (full training batch)."""
        self._check_fitted()
        coords = self._train_coords
        stats = self._current_stats(self.params_, self._train_mechanisms)
        self.stats_ = stats
        joint = self._encode_inputs(self._train_mechanisms, coords)
        gp.calibrate_whitened(
            self.params_, joint, self._train_y_std, kind=self.kernel,
            structured=self.structured_mean,
            coords_x=coords[:, 0] if coords is not None else None,
            coords_y=coords[:, 1] if coords is not None else None,
            jitter_schedule=self.jitter_schedule)
        return self

    def learned_mean_center(self):
        """Squashed (x_c, y_c) of the structured mean, if enabled."""
        self._check_fitted()
        if not self.structured_mean:
            raise ValueError("structured mean is disabled")
        with ad.no_grad():
            xc = gp.squash_center(self.params_["mean.center_x_raw"]).item()
            yc = gp.squash_center(self.params_["mean.center_y_raw"]).item()
        return xc, yc

    def save(self, path):
        from . import io
        io.save_checkpoint(path, self)
        return path

    @classmethod
    def load(cls, path):
        from . import io
        return io.load_checkpoint(path, cls)


def fit_on_indices(dataset, indices, **estimator_params):
    """Train a fresh regressor on a labeled index set of a dataset.

    Indices are canonically sorted first, so any permutation of the same
    labeled set produces bit-identical training runs.
    """
    idx = np.sort(np.unique(np.asarray(indices, dtype=np.intp)))
    model = MechanismGPRegressor(**estimator_params)
    model.fit(dataset.inputs_at(idx), dataset.targets[idx])
    return model


@dataclass
class ProbeResult:
    epsilon: float
    change: float
    change_tenth: float

    @property
    def ratio(self):
        if self.change_tenth == 0.0:
            return float("nan")
        return self.change / self.change_tenth


def continuity_probe(model, X_probe, epsilon, seed=0):
    """Max predictive-mean change under a parameter-space perturbation of
    norm epsilon (seeded random direction), and the same at epsilon/10.

    Local linearity of the trained map shows up as ratio close to 10.
    """
    model._check_fitted()
    base = model.predict(X_probe)
    names = model.params_.names()
    rng = np.random.default_rng(seed)
    direction = {}
    total = 0.0
    for name in names:
        d = rng.normal(size=model.params_[name].data.shape)
        direction[name] = d
        total += float((d * d).sum())
    norm = np.sqrt(total) if total > 0 else 1.0

    def perturbed_change(eps):
        if eps == 0.0:
            return 0.0
        saved = {}
        for name in names:
            t = model.params_[name]
            saved[name] = t.data.copy()
            t.data = t.data + (eps / norm) * direction[name]
        try:
            moved = model.predict(X_probe)
        finally:
            for name in names:
                model.params_[name].data = saved[name]
        return float(np.abs(moved - base).max())

    return ProbeResult(epsilon=epsilon, change=perturbed_change(epsilon),
                       change_tenth=perturbed_change(epsilon / 10.0))
