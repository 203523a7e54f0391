"""Sparse variational GP over the joint latent space.

Kernels are stationary ARD profiles (Matern-5/2 default, RBF selectable)
evaluated on squared scaled distances.  The variational distribution is
whitened: q(u) = N(L v, L S L^T) with S = L_v L_v^T and L the Cholesky
factor of K_ZZ, which keeps the KL term in closed form against the
standard normal and conditions well at 50 inducing points.

Parameter naming convention inside a ParamStore:
    kernel.log_lengthscales, kernel.log_variance, likelihood.log_noise,
    mean.const [, mean.amplitude, mean.center_x_raw, mean.center_y_raw,
    mean.log_width], variational.inducing, variational.whitened_mean,
    variational.whitened_cov (packed lower triangle, log diagonal).
"""

from __future__ import annotations

import numpy as np
from scipy.linalg import cho_solve, solve_triangular

from . import autodiff as ad
from .errors import DimensionMismatch

NOISE_FLOOR = 1e-6
KERNELS = ("matern52", "rbf")
CENTER_BOUND = 1.5
LOG_2PI = float(np.log(2.0 * np.pi))


def _packed_diag_indices(m):
    rows, cols = np.tril_indices(m)
    return np.nonzero(rows == cols)[0]


def scaled_sq_dists(za, zb, log_lengthscales):
    """Squared ARD-scaled distances between row sets, clamped at zero."""
    if za.shape[1] != zb.shape[1]:
        raise DimensionMismatch(f"input dims differ: {za.shape[1]} vs {zb.shape[1]}")
    if za.shape[1] != log_lengthscales.shape[0]:
        raise DimensionMismatch(
            f"{za.shape[1]} input dims vs {log_lengthscales.shape[0]} lengthscales")
    inv = ad.exp(ad.neg(log_lengthscales))
    a = ad.mul(za, inv)
    b = ad.mul(zb, inv)
    aa = ad.sum_(ad.square(a), axis=1, keepdims=True)
    bb = ad.sum_(ad.square(b), axis=1, keepdims=True)
    u = ad.sub(ad.add(aa, ad.transpose(bb)),
               ad.mul(ad.matmul(a, ad.transpose(b)), 2.0))
    return ad.relu(u)


def kernel_cross(store, za, zb, kind="matern52"):
    """Covariance matrix K(za, zb) as a graph node."""
    u = scaled_sq_dists(za, zb, store["kernel.log_lengthscales"])
    if kind == "matern52":
        prof = ad.matern52_profile(u)
    elif kind == "rbf":
        prof = ad.rbf_profile(u)
    else:
        raise ValueError(f"unknown kernel kind {kind!r}")
    return ad.mul(ad.exp(store["kernel.log_variance"]), prof)


def kernel_value(z1, z2, lengthscales, variance=1.0, kind="matern52"):
    """Scalar kernel evaluation on plain arrays (convenience/testing)."""
    from .params import ParamStore

    ps = ParamStore()
    ps.add("kernel.log_lengthscales", np.log(np.asarray(lengthscales, dtype=float)))
    ps.add("kernel.log_variance", np.log(variance))
    with ad.no_grad():
        out = kernel_cross(ps, ad.Tensor(np.atleast_2d(z1)),
                           ad.Tensor(np.atleast_2d(z2)), kind)
    return float(out.data[0, 0])


def squash_center(raw):
    """Smoothly constrain a mean-center coordinate to (-1.5, 1.5)."""
    return ad.mul(ad.tanh(ad.mul(raw, 1.0 / CENTER_BOUND)), CENTER_BOUND)


def mean_values(store, n, coords_x=None, coords_y=None, structured=False):
    """Prior mean at `n` inputs: constant, plus the learnable Gaussian bump
    over the (x, y) coordinate dimensions when structured."""
    base = ad.add(ad.Tensor(np.zeros(n)), store["mean.const"])
    if not structured:
        return base
    x = coords_x if isinstance(coords_x, ad.Tensor) else ad.Tensor(np.asarray(coords_x, dtype=float))
    y = coords_y if isinstance(coords_y, ad.Tensor) else ad.Tensor(np.asarray(coords_y, dtype=float))
    xc = squash_center(store["mean.center_x_raw"])
    yc = squash_center(store["mean.center_y_raw"])
    w = ad.exp(store["mean.log_width"])
    d2 = ad.add(ad.square(ad.sub(x, xc)), ad.square(ad.sub(y, yc)))
    bump = ad.exp(ad.neg(ad.div(d2, ad.mul(ad.square(w), 2.0))))
    return ad.add(base, ad.mul(store["mean.amplitude"], bump))


def noise_variance(store):
    return ad.add(ad.exp(store["likelihood.log_noise"]), ad.Tensor(NOISE_FLOOR))


def init_log_noise(target_variance):
    """Inverse of the floored parameterization for a wanted initial value."""
    return float(np.log(max(target_variance - NOISE_FLOOR, 1e-12)))


def kl_whitened(store, m):
    """KL[q(u) || p(u)] in whitened coordinates, closed form.

    Equals 0.5 (|v|^2 + |L_v|_F^2 - M) - sum log diag L_v; zero exactly
    when v = 0 and L_v = I, i.e. q(u) equals the prior.
    """
    v = store["variational.whitened_mean"]
    packed = store["variational.whitened_cov"]
    lv = ad.lower_from_packed(packed, m)
    diag_raw = ad.gather_rows(packed, _packed_diag_indices(m))
    half = ad.mul(ad.add(ad.sum_(ad.square(v)), ad.sum_(ad.square(lv))), 0.5)
    return ad.sub(ad.sub(half, ad.sum_(diag_raw)), ad.Tensor(0.5 * m))


def _posterior_terms(store, joint, kind, jitter_schedule):
    """Shared pieces of ELBO and prediction: A = L^{-1} K_Z,x and the
    whitened covariance factor."""
    z = store["variational.inducing"]
    m = z.shape[0]
    kmm = kernel_cross(store, z, z, kind)
    l, jit = ad.cholesky(kmm, jitter_schedule)
    kmx = kernel_cross(store, z, joint, kind)
    a = ad.solve_lower(l, kmx)
    lv = ad.lower_from_packed(store["variational.whitened_cov"], m)
    return l, a, lv, jit


def latent_moments(store, joint, kind="matern52",
                   jitter_schedule=ad.DEFAULT_JITTER_SCHEDULE):
    """Marginal q(f) mean (without prior mean) and variance per input."""
    l, a, lv, _ = _posterior_terms(store, joint, kind, jitter_schedule)
    v = store["variational.whitened_mean"]
    mcol = ad.reshape(v, (v.shape[0], 1))
    mu = ad.reshape(ad.matmul(ad.transpose(a), mcol), (joint.shape[0],))
    s1 = ad.sum_(ad.square(a), axis=0)
    s2 = ad.sum_(ad.square(ad.matmul(ad.transpose(lv), a)), axis=0)
    var = ad.add(ad.sub(ad.exp(store["kernel.log_variance"]), s1), s2)
    return mu, var


def elbo(store, joint_b, y_b, n_total, kind="matern52", structured=False,
         coords_x=None, coords_y=None,
         jitter_schedule=ad.DEFAULT_JITTER_SCHEDULE):
    """Variational evidence lower bound on a (mini-)batch.

    Expected Gaussian log likelihood under the sparse posterior marginals,
    scaled up to the full dataset size, minus the whitened KL.
    """
    b = joint_b.shape[0]
    mu_f, var_f = latent_moments(store, joint_b, kind, jitter_schedule)
    mean_b = mean_values(store, b, coords_x, coords_y, structured)
    sn = noise_variance(store)
    y = y_b if isinstance(y_b, ad.Tensor) else ad.Tensor(np.asarray(y_b, dtype=float))
    resid = ad.sub(y, ad.add(mu_f, mean_b))
    quad = ad.div(ad.sum_(ad.add(ad.square(resid), var_f)), sn)
    logdet = ad.mul(ad.add(ad.log(sn), ad.Tensor(LOG_2PI)), b)
    ell = ad.mul(ad.add(logdet, quad), -0.5)
    m = store["variational.inducing"].shape[0]
    return ad.sub(ad.mul(ell, n_total / b), kl_whitened(store, m))


def predict(store, joint, kind="matern52", structured=False,
            coords_x=None, coords_y=None, include_noise=False,
            jitter_schedule=ad.DEFAULT_JITTER_SCHEDULE):
    """Predictive mean and marginal variance (standardized target units).

    Runs the same graph builders as training with taping disabled.
    Variance includes observation noise only on request.
    """
    with ad.no_grad():
        j = joint if isinstance(joint, ad.Tensor) else ad.Tensor(np.asarray(joint, dtype=float))
        mu_f, var_f = latent_moments(store, j, kind, jitter_schedule)
        mean_x = mean_values(store, j.shape[0], coords_x, coords_y, structured)
        mean = mu_f.data + mean_x.data
        var = np.maximum(var_f.data, 0.0)
        if include_noise:
            var = var + noise_variance(store).item()
    return mean, var


def calibrate_whitened(store, joint_train, y_std, kind="matern52",
                       structured=False, coords_x=None, coords_y=None,
                       jitter_schedule=ad.DEFAULT_JITTER_SCHEDULE):
    """Closed-form optimal whitened variational parameters for the current
    hyperparameters (full-batch Gaussian likelihood).

    With inducing inputs equal to the training inputs this reproduces the
    exact GP posterior.
    """
    with ad.no_grad():
        z = store["variational.inducing"]
        m = z.shape[0]
        kmm = kernel_cross(store, z, z, kind).data
        l, _ = ad.cholesky_with_jitter(kmm, jitter_schedule)
        kmx = kernel_cross(store, z, ad.Tensor(np.asarray(joint_train, dtype=float)), kind).data
        a = solve_triangular(l, kmx, lower=True)
        sn = noise_variance(store).item()
        mean_x = mean_values(store, joint_train.shape[0], coords_x, coords_y,
                             structured).data
    resid = np.asarray(y_std, dtype=float) - mean_x
    p = np.eye(m) + (a @ a.T) / sn
    lp = np.linalg.cholesky(p)
    cov_v = cho_solve((lp, True), np.eye(m))
    v_hat = cho_solve((lp, True), a @ resid / sn)
    cov_v = 0.5 * (cov_v + cov_v.T)
    l_v, _ = ad.cholesky_with_jitter(cov_v, (0.0, 1e-14, 1e-12, 1e-10))

    rows, cols = np.tril_indices(m)
    packed = l_v[rows, cols].copy()
    diag = rows == cols
    packed[diag] = np.log(packed[diag])
    store["variational.whitened_mean"].data = v_hat
    store["variational.whitened_cov"].data = packed
    return store
