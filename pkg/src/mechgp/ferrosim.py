"""Spin-lattice ferroelectric simulator.

A 2-D lattice of local polarization vectors (p_y, p_z) relaxes under
overdamped Landau-Khalatnikov dynamics in a sinusoidal out-of-plane field.
Domain patterns are parameterized by a c-c wall position K and an a-domain
corrugation period P; a-domain sites carry a strong in-plane defect field
and are treated as non-switchable (p_z pinned at zero), c-domain sites get
a weak imprint field anti-parallel to their starting polarization.  The
scalar observable is the hysteresis-loop area of field vs lattice-average
out-of-plane polarization.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import (InsufficientTrace, InvalidCoefficients, NumericalBlowup,
                     OutOfRange)

P_MAX = 8


def coercive_field(a1, a11):
    """Spinodal field of the single-site double well
    f(p) = (a1/2) p^2 + (a11/4) p^4 - E p."""
    if a1 >= 0 or a11 <= 0:
        raise InvalidCoefficients("double well needs a1 < 0 and a11 > 0")
    return (2.0 / 3.0) * abs(a1) * np.sqrt(abs(a1) / (3.0 * a11))


@dataclass
class LatticeConfig:
    n: int = 15
    a1: float = -1.0
    a11: float = 1.0
    k_grad: float = 1.0
    alpha_dep: float = 0.2
    gamma: float = 1.0
    a_defect_ec: float = 30.0      # a-domain defect field, units of E_c
    imprint_ec: float = 0.1        # c-domain imprint field, units of E_c

    def __post_init__(self):
        if self.a1 >= 0 or self.a11 <= 0:
            raise InvalidCoefficients("double well needs a1 < 0 and a11 > 0")
        if self.alpha_dep < 0:
            raise OutOfRange("alpha_dep must be nonnegative")

    @property
    def e_c(self):
        return coercive_field(self.a1, self.a11)

    @property
    def p_well(self):
        return np.sqrt(abs(self.a1) / self.a11)


@dataclass
class FieldWaveform:
    amplitude_ec: float = 2.0
    periods: int = 2
    samples_per_period: int = 200

    def __post_init__(self):
        if self.amplitude_ec <= 0:
            raise OutOfRange("waveform amplitude must be positive")
        if self.periods < 1 or self.samples_per_period < 4:
            raise OutOfRange("waveform needs >= 1 period, >= 4 samples each")


@dataclass
class DomainPattern:
    K: int
    P: int                          # None marks a pattern without a-overlay
    c_sign: np.ndarray              # (n, n) +-1, pre-overlay c polarization
    a_mask: np.ndarray              # (n, n) bool
    p_init: np.ndarray              # (n, n, 2) initial (p_y, p_z)
    defect: np.ndarray              # (n, n, 2) static defect field (y, z)

    @property
    def channels(self):
        """(c-pattern image, a-pattern image) fed to the encoders."""
        return self.c_sign.astype(np.float64), self.a_mask.astype(np.float64)


def _c_sign_for_wall(n, k):
    """Diagonal c-c wall.  K >= 0: up iff (col - row) > K; K < 0 uses >=
    so that the wall family is exactly mirror-symmetric about K = 0."""
    r, c = np.meshgrid(np.arange(n), np.arange(n), indexing="ij")
    d = c - r
    up = (d > k) if k >= 0 else (d >= k)
    return np.where(up, 1.0, -1.0)


def _assemble_pattern(k, p, c_sign, a_mask, config):
    n = config.n
    e_c = config.e_c
    p_init = np.zeros((n, n, 2))
    defect = np.zeros((n, n, 2))
    # c-domain sites: out-of-plane polarization with anti-parallel imprint
    p_init[:, :, 1] = np.where(a_mask, 0.0, c_sign)
    defect[:, :, 1] = np.where(a_mask, 0.0, -config.imprint_ec * e_c * c_sign)
    # a-domain sites: in-plane, locked by the strong y defect field
    p_init[:, :, 0] = np.where(a_mask, 1.0, 0.0)
    defect[:, :, 0] = np.where(a_mask, config.a_defect_ec * e_c, 0.0)
    return DomainPattern(K=k, P=p, c_sign=c_sign, a_mask=a_mask,
                         p_init=p_init, defect=defect)


def make_pattern(k, p, config=None):
    """Overlapped domain pattern for wall position `k` and corrugation
    period `p` (a-domain stripes along anti-diagonals, width 1)."""
    config = config or LatticeConfig()
    n = config.n
    if not (-(n - 1) <= k <= n - 1):
        raise OutOfRange(f"K must lie in [{-(n - 1)}, {n - 1}], got {k}")
    if not (1 <= p <= P_MAX):
        raise OutOfRange(f"P must lie in [1, {P_MAX}], got {p}")
    r, c = np.meshgrid(np.arange(n), np.arange(n), indexing="ij")
    a_mask = ((r + c) % p) == 0
    return _assemble_pattern(k, p, _c_sign_for_wall(n, k), a_mask, config)


def c_only_pattern(k, config=None):
    """Wall pattern with no a-domains (the A_c ground-truth protocol)."""
    config = config or LatticeConfig()
    n = config.n
    if not (-(n - 1) <= k <= n - 1):
        raise OutOfRange(f"K must lie in [{-(n - 1)}, {n - 1}], got {k}")
    a_mask = np.zeros((n, n), dtype=bool)
    return _assemble_pattern(k, None, _c_sign_for_wall(n, k), a_mask, config)


def uniform_c_pattern(p, config=None):
    """Corrugation pattern over uniformly-up c-domains (the A_a protocol)."""
    config = config or LatticeConfig()
    n = config.n
    if not (1 <= p <= P_MAX):
        raise OutOfRange(f"P must lie in [1, {P_MAX}], got {p}")
    r, c = np.meshgrid(np.arange(n), np.arange(n), indexing="ij")
    a_mask = ((r + c) % p) == 0
    return _assemble_pattern(None, p, np.ones((n, n)), a_mask, config)


@dataclass
class LoopTrace:
    field: np.ndarray               # applied E at each sample
    polarization: np.ndarray        # lattice-average p_z at each sample
    samples_per_period: int
    periods: int

    def __post_init__(self):
        if self.field.shape != self.polarization.shape:
            raise InsufficientTrace("field/polarization lengths disagree")


def _neighbor_term(p, k_grad):
    """k_grad * (deg * p - sum of neighbors), open boundaries."""
    out = np.zeros_like(p)
    out[1:, :] += p[1:, :] - p[:-1, :]
    out[:-1, :] += p[:-1, :] - p[1:, :]
    out[:, 1:] += p[:, 1:] - p[:, :-1]
    out[:, :-1] += p[:, :-1] - p[:, 1:]
    return k_grad * out


def total_free_energy(py, pz, e_applied, pattern, config):
    """Discrete free energy of the lattice state (diagnostic)."""
    c = config
    site = (0.5 * c.a1 * (py ** 2 + pz ** 2)
            + 0.25 * c.a11 * (py ** 4 + pz ** 4)
            - (e_applied + pattern.defect[:, :, 1]) * pz
            - pattern.defect[:, :, 0] * py)
    grad = 0.0
    for arr in (py, pz):
        grad += np.sum((arr[1:, :] - arr[:-1, :]) ** 2)
        grad += np.sum((arr[:, 1:] - arr[:, :-1]) ** 2)
    n2 = py.size
    dep = 0.5 * c.alpha_dep * n2 * np.mean(pz) ** 2
    return float(site.sum() + 0.5 * c.k_grad * grad + dep)


def _step(py, pz, e_applied, pattern, config, dt):
    c = config
    fy = (c.a1 * py + c.a11 * py ** 3 - pattern.defect[:, :, 0]
          + _neighbor_term(py, c.k_grad))
    fz = (c.a1 * pz + c.a11 * pz ** 3 - e_applied - pattern.defect[:, :, 1]
          + _neighbor_term(pz, c.k_grad) + c.alpha_dep * np.mean(pz))
    py -= c.gamma * dt * fy
    pz -= c.gamma * dt * fz
    # the 30 E_c in-plane defect renders a-sites non-switchable; enforced
    # as a hard pin of their out-of-plane component
    pz[pattern.a_mask] = 0.0
    return py, pz


def _check_blowup(py, pz, config):
    limit = 10.0 * config.p_well
    m = max(np.abs(py).max(), np.abs(pz).max())
    if not np.isfinite(m) or m > limit:
        raise NumericalBlowup(f"|p| reached {m:.3g}, limit {limit:.3g}")


def simulate(pattern, waveform=None, config=None, dt=0.05, substeps=10):
    """Integrate the driven lattice; record <p_z> at every field sample.

    Forward Euler with `substeps` steps between consecutive samples; the
    drive is evaluated at every substep time, so one period spans
    samples_per_period * substeps * dt time units.
    """
    config = config or LatticeConfig()
    waveform = waveform or FieldWaveform()
    spp = waveform.samples_per_period
    n_samples = waveform.periods * spp
    period_time = spp * substeps * dt
    amp = waveform.amplitude_ec * config.e_c

    py = pattern.p_init[:, :, 0].copy()
    pz = pattern.p_init[:, :, 1].copy()
    pz[pattern.a_mask] = 0.0

    field = np.empty(n_samples + 1)
    pol = np.empty(n_samples + 1)
    field[0] = 0.0
    pol[0] = pz.mean()
    t = 0.0
    for k in range(1, n_samples + 1):
        for s in range(substeps):
            t += dt
            e_now = amp * np.sin(2.0 * np.pi * t / period_time)
            py, pz = _step(py, pz, e_now, pattern, config, dt)
        _check_blowup(py, pz, config)
        field[k] = amp * np.sin(2.0 * np.pi * (k / spp))
        pol[k] = pz.mean()
    return LoopTrace(field=field, polarization=pol,
                     samples_per_period=spp, periods=waveform.periods)


def relax(pattern, config=None, steps=4000, dt=0.05, record_energy=False):
    """Zero-field relaxation; returns final (py, pz) and optionally the
    free-energy history (used by the dissipation check)."""
    config = config or LatticeConfig()
    py = pattern.p_init[:, :, 0].copy()
    pz = pattern.p_init[:, :, 1].copy()
    pz[pattern.a_mask] = 0.0
    energies = []
    for _ in range(steps):
        if record_energy:
            energies.append(total_free_energy(py, pz, 0.0, pattern, config))
        py, pz = _step(py, pz, 0.0, pattern, config, dt)
    _check_blowup(py, pz, config)
    if record_energy:
        energies.append(total_free_energy(py, pz, 0.0, pattern, config))
        return py, pz, np.array(energies)
    return py, pz


def loop_area(trace):
    """Absolute contour area (trapezoidal shoelace) of the (E, <p_z>) loop
    over the final full period."""
    if trace.periods < 2:
        raise InsufficientTrace("loop area needs at least two periods")
    spp = trace.samples_per_period
    e = trace.field[-(spp + 1):]
    p = trace.polarization[-(spp + 1):]
    de = np.diff(e)
    return float(abs(np.sum(0.5 * (p[:-1] + p[1:]) * de)))


def ground_truth_sweeps(config=None, waveform=None, k_values=None, p_values=None,
                        dt=0.05, substeps=10):
    """Reference curves: A_c(K) with no a-domains, A_a(P) over uniform c."""
    config = config or LatticeConfig()
    n = config.n
    k_values = list(k_values) if k_values is not None else list(range(-(n - 1), n))
    p_values = list(p_values) if p_values is not None else list(range(1, P_MAX + 1))
    a_c = np.array([
        loop_area(simulate(c_only_pattern(k, config), waveform, config, dt, substeps))
        for k in k_values
    ])
    a_a = np.array([
        loop_area(simulate(uniform_c_pattern(p, config), waveform, config, dt, substeps))
        for p in p_values
    ])
    return {"K": np.array(k_values), "A_c": a_c,
            "P": np.array(p_values), "A_a": a_a}


def build_ferrosim_dataset(k_values=None, p_values=None, config=None,
                           waveform=None, dt=0.05, substeps=10):
    """Loop-area dataset over the (K, P) grid, with the two channel images
    per pattern packaged as input mechanisms."""
    from .benchmarks import MechanismDataset, PatchMosaic

    config = config or LatticeConfig()
    n = config.n
    k_values = list(k_values) if k_values is not None else list(range(-(n - 1), n))
    p_values = list(p_values) if p_values is not None else list(range(1, P_MAX + 1))

    c_banks, a_banks, areas, ks, ps = [], [], [], [], []
    for k in k_values:
        for p in p_values:
            pattern = make_pattern(k, p, config)
            c_img, a_img = pattern.channels
            c_banks.append(c_img[None])
            a_banks.append(a_img[None])
            areas.append(loop_area(simulate(pattern, waveform, config, dt, substeps)))
            ks.append(k)
            ps.append(p)

    n_pat = len(areas)
    arange = np.arange(n_pat)
    targets = np.array(areas)

    def _mosaic(banks):
        return PatchMosaic(rows=1, cols=n_pat, patch_size=n,
                           category_names=(), categories=np.zeros(n_pat, dtype=int),
                           bank=np.stack(banks), patch_index=arange.copy(),
                           base_values=np.zeros(1))

    return MechanismDataset(
        mechanisms={"c_pattern": _mosaic(c_banks), "a_pattern": _mosaic(a_banks)},
        targets=targets,
        clean_targets=targets.copy(),
        components={},
        coords=None,
        grid_shape=None,
        seed=0,
        noise_sigma=0.0,
        extra={"K": np.array(ks), "P": np.array(ps)},
    )
