"""Mechanism isolation, anchor correction, clustering check and the
non-additive scaling decomposition.

Isolation probes the trained model with one mechanism varying and all
others held at fixed references.  Anchoring removes the additive gauge
freedom: each anchored mechanism is shifted so its response at a declared
input equals a known value (zero unless stated), and the single unanchored
mechanism absorbs the leftover offsets so that the summed decomposition
still reproduces the model's prediction.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np
from sklearn.cluster import KMeans

from .errors import (AnchorCountMismatch, DegenerateInput, MissingReference,
                     OutOfRange, SingularRegression)

COORDS_MECH = "coords"


@dataclass
class Anchor:
    """Declared input at which a mechanism's contribution is known.

    For an image mechanism, `cell` names the dataset cell whose patch is
    the anchor input; for the coordinate mechanism, `xy` is the anchor
    location in normalized coordinates.  `value` is the known contribution
    there (zero by default).
    """

    mechanism: str
    cell: int = None
    xy: tuple = None
    value: float = 0.0


@dataclass
class MechanismResponse:
    """One mechanism's predicted response with everything else fixed."""

    mechanism: str
    kind: str                       # "patch" or "coords"
    values: np.ndarray
    probe_cells: np.ndarray = None  # patch probes: dataset cell per value
    probe_coords: np.ndarray = None  # coords probes: (m, 2) locations
    references: dict = field(default_factory=dict)
    delta: float = 0.0
    anchored: bool = False
    n_extra: int = 0                # probe points appended beyond the grid

    def grid_values(self):
        """Response over the dataset's own cells (appended anchor or
        reference probe points stripped)."""
        if self.n_extra:
            return self.values[:-self.n_extra]
        return self.values

    def locate(self, cell=None, xy=None):
        """Index of a probe point, by cell id or exact coordinate match."""
        if cell is not None and self.probe_cells is not None:
            hits = np.nonzero(self.probe_cells == cell)[0]
            if hits.size:
                return int(hits[0])
        if xy is not None and self.probe_coords is not None:
            hits = np.nonzero((self.probe_coords[:, 0] == xy[0])
                              & (self.probe_coords[:, 1] == xy[1]))[0]
            if hits.size:
                return int(hits[0])
        raise MissingReference(
            f"probe set of mechanism {self.mechanism!r} does not contain "
            f"cell={cell} xy={xy}")


def _reference_inputs(dataset, model, varied, references):
    """Fixed-side inputs while `varied` sweeps; returns (X parts, ref map)."""
    fixed = {}
    refmap = {}
    for name in model.mechanism_names_:
        if name == varied:
            continue
        if name not in references:
            raise MissingReference(f"no reference input for mechanism {name!r}")
        ref = references[name]
        mosaic = dataset.mechanisms[name]
        cell = int(ref)
        bank = mosaic.bank[mosaic.patch_index[cell]][None]
        fixed[name] = (bank, None)  # index filled once probe length is known
        refmap[name] = {"cell": cell}
    if model.has_coords_ and varied != COORDS_MECH:
        if COORDS_MECH not in references:
            raise MissingReference("no reference location for the coords channel")
        ref = references[COORDS_MECH]
        if np.isscalar(ref) or isinstance(ref, (int, np.integer)):
            xy = tuple(dataset.coords[int(ref)])
        else:
            xy = (float(ref[0]), float(ref[1]))
        fixed[COORDS_MECH] = xy
        refmap[COORDS_MECH] = {"xy": xy}
    return fixed, refmap


def mechanism_response(model, dataset, mechanism, references, probe_cells=None,
                       probe_coords=None):
    """Predictive mean with only `mechanism` varying.

    `references` maps every other mechanism to its fixed input: a cell
    index for image mechanisms, a cell index or (x, y) pair for coords.
    The default probe sweeps all dataset cells (patch mechanisms) or the
    full coordinate grid.
    """
    fixed, refmap = _reference_inputs(dataset, model, mechanism, references)

    if mechanism == COORDS_MECH:
        if not model.has_coords_:
            raise MissingReference("model has no coordinate channel")
        coords = dataset.coords if probe_coords is None else np.asarray(probe_coords, float)
        m = coords.shape[0]
        x = {}
        for name, (bank, _) in ((k, v) for k, v in fixed.items() if k != COORDS_MECH):
            x[name] = (bank, np.zeros(m, dtype=np.intp))
        x[COORDS_MECH] = coords
        values = model.predict(x)
        return MechanismResponse(mechanism=COORDS_MECH, kind="coords", values=values,
                                 probe_coords=coords, references=refmap)

    probe_cells = np.arange(dataset.n_samples) if probe_cells is None \
        else np.asarray(probe_cells, dtype=np.intp)
    m = probe_cells.shape[0]
    mosaic = dataset.mechanisms[mechanism]
    x = {mechanism: (mosaic.bank, mosaic.patch_index[probe_cells])}
    for name, val in fixed.items():
        if name == COORDS_MECH:
            x[COORDS_MECH] = np.tile(np.asarray(val, float), (m, 1))
        else:
            bank, _ = val
            x[name] = (bank, np.zeros(m, dtype=np.intp))
    values = model.predict(x)
    return MechanismResponse(mechanism=mechanism, kind="patch", values=values,
                             probe_cells=probe_cells, references=refmap)


def anchor_correct(responses, anchors):
    """Apply n - 1 anchor constraints and close the decomposition.

    Each anchored mechanism k is shifted by delta_k = r_k(anchor_k) -
    value_k so its corrected response passes through the declared value.
    The single unanchored mechanism is shifted by the sum of the corrected
    responses of the anchored mechanisms evaluated at the reference inputs
    it was probed against, which keeps the summed decomposition equal to
    the model prediction for an additive model.
    """
    responses = list(responses)
    n = len(responses)
    if len(anchors) != n - 1:
        raise AnchorCountMismatch(
            f"{n} mechanisms need {n - 1} anchors, got {len(anchors)}")
    by_name = {r.mechanism: r for r in responses}
    anchored_names = [a.mechanism for a in anchors]
    if len(set(anchored_names)) != len(anchored_names):
        raise AnchorCountMismatch("duplicate anchored mechanism")
    for a in anchors:
        if a.mechanism not in by_name:
            raise AnchorCountMismatch(f"anchor names unknown mechanism {a.mechanism!r}")
    unanchored = [r.mechanism for r in responses if r.mechanism not in anchored_names]
    if len(unanchored) != 1:
        raise AnchorCountMismatch("exactly one mechanism must stay unanchored")

    corrected = {}
    for a in anchors:
        r = by_name[a.mechanism]
        pos = r.locate(cell=a.cell, xy=a.xy)
        delta = float(r.values[pos] - a.value)
        corrected[a.mechanism] = replace(
            r, values=r.values - delta, delta=delta, anchored=True)

    u = by_name[unanchored[0]]
    delta_u = 0.0
    for a in anchors:
        ck = corrected[a.mechanism]
        ref = u.references.get(a.mechanism)
        if ref is None:
            raise MissingReference(
                f"response of {u.mechanism!r} records no reference for "
                f"{a.mechanism!r}")
        pos = ck.locate(cell=ref.get("cell"), xy=ref.get("xy"))
        delta_u += float(ck.values[pos])
    corrected[u.mechanism] = replace(
        u, values=u.values - delta_u, delta=delta_u, anchored=False)
    return [corrected[r.mechanism] for r in responses]


def isolate(model, dataset, anchors, references=None):
    """Probe every mechanism and anchor-correct the responses.

    References for the fixed mechanisms default to their anchor inputs
    (so anchored mechanisms contribute exactly their declared value while
    others are probed); an unanchored image mechanism defaults to the
    first cell of its first category, unanchored coords to the grid point
    closest to (0, 0).
    """
    references = dict(references or {})
    anchors = [
        replace(a, xy=tuple(dataset.coords[a.cell]), cell=None)
        if a.mechanism == COORDS_MECH and a.xy is None and a.cell is not None
        else a
        for a in anchors
    ]
    anchor_by_mech = {a.mechanism: a for a in anchors}
    mech_names = list(model.mechanism_names_)
    if model.has_coords_:
        mech_names.append(COORDS_MECH)

    for name in mech_names:
        if name in references:
            continue
        a = anchor_by_mech.get(name)
        if a is not None:
            references[name] = a.cell if a.cell is not None else a.xy
        elif name == COORDS_MECH:
            d2 = (dataset.coords ** 2).sum(axis=1)
            references[name] = int(np.argmin(d2))
        else:
            cats = dataset.mechanisms[name].categories
            references[name] = int(np.nonzero(cats == cats.min())[0][0])

    responses = []
    for name in mech_names:
        refs = {k: v for k, v in references.items() if k != name}
        probe_coords = None
        n_extra = 0
        if name == COORDS_MECH:
            # anchor and reference locations must be locatable in the probe
            extras = []
            needed = []
            a = anchor_by_mech.get(COORDS_MECH)
            if a is not None and a.xy is not None:
                needed.append(a.xy)
            ref = references.get(COORDS_MECH)
            if ref is not None and not np.isscalar(ref):
                needed.append(tuple(ref))
            for xy in needed:
                on_grid = np.any((dataset.coords[:, 0] == xy[0])
                                 & (dataset.coords[:, 1] == xy[1]))
                if not on_grid and xy not in extras:
                    extras.append(xy)
            probe_coords = dataset.coords if not extras else np.vstack(
                [dataset.coords, np.asarray(extras, dtype=float)])
            n_extra = len(extras)
        r = mechanism_response(model, dataset, name, refs, probe_coords=probe_coords)
        r.n_extra = n_extra
        responses.append(r)
    return {r.mechanism: r for r in anchor_correct(responses, anchors)}


@dataclass
class ClusterCheckResult:
    labels: np.ndarray
    centers: np.ndarray
    purity: float = None


def cluster_check(predictions, k, categories=None, seed=0, n_restarts=100):
    """Seeded 1-d k-means over scalar predictions, plus purity against
    known categories (fraction of points whose cluster majority matches
    their own category)."""
    values = np.asarray(predictions, dtype=float).reshape(-1, 1)
    if k < 1 or values.shape[0] < k:
        raise OutOfRange(f"need at least k={k} points, got {values.shape[0]}")
    if np.ptp(values) == 0.0:
        raise DegenerateInput("all predictions identical; nothing to cluster")
    km = KMeans(n_clusters=k, n_init=n_restarts, random_state=seed)
    labels = km.fit_predict(values)
    purity = None
    if categories is not None:
        categories = np.asarray(categories)
        hits = 0
        for c in range(k):
            members = categories[labels == c]
            if members.size == 0:
                continue
            _, counts = np.unique(members, return_counts=True)
            hits += counts.max()
        purity = hits / categories.shape[0]
    return ClusterCheckResult(labels=labels, centers=km.cluster_centers_.ravel(),
                              purity=purity)


@dataclass
class ScalingDecomposition:
    k_values: np.ndarray
    p_values: np.ndarray
    a_c: np.ndarray                 # basic wall-position contribution
    a_a: np.ndarray                 # basic corrugation contribution
    alpha: np.ndarray               # scaling of the wall contribution
    beta: np.ndarray                # fixed to ones under the adopted gauge
    residual: float
    reference_p: float
    iterations: int

    def reconstruction(self):
        return np.outer(self.a_c, self.alpha) + self.a_a[None, :] * self.beta[:, None]


def scaling_decompose(grid, k_values, p_values, reference_p=None, tol=1e-10,
                      max_iterations=500):
    """Solve A_tot(K, P) = alpha(P) A_c(K) + A_a(P) by alternating least
    squares with beta(K) = 1.

    Gauge: A_c(K) = A_tot(K, P*) with alpha(P*) = 1 and A_a(P*) = 0 at the
    declared reference P* (the largest P by default, where the corrugation
    is sparsest).
    """
    grid = np.asarray(grid, dtype=float)
    k_values = np.asarray(k_values)
    p_values = np.asarray(p_values)
    if grid.shape != (k_values.size, p_values.size):
        raise OutOfRange(f"grid shape {grid.shape} does not match value lists")
    reference_p = p_values.max() if reference_p is None else reference_p
    p_star = int(np.nonzero(p_values == reference_p)[0][0])

    a_c = grid[:, p_star].copy()
    if np.ptp(a_c) == 0.0:
        raise SingularRegression("reference column has zero variance over K")
    n_p = p_values.size
    alpha = np.ones(n_p)
    a_a = np.zeros(n_p)

    def fit_columns(a_c_cur):
        al = np.empty(n_p)
        aa = np.empty(n_p)
        var = a_c_cur.var()
        if var == 0.0:
            raise SingularRegression("wall contribution collapsed to a constant")
        mean_c = a_c_cur.mean()
        for j in range(n_p):
            col = grid[:, j]
            al[j] = np.mean((a_c_cur - mean_c) * (col - col.mean())) / var
            aa[j] = col.mean() - al[j] * mean_c
        return al, aa

    def regauge(a_c_cur, al, aa):
        a = al[p_star]
        b = aa[p_star]
        a_c_new = a * a_c_cur + b
        al_new = al / a
        aa_new = aa - b * al_new
        return a_c_new, al_new, aa_new

    prev_res = np.inf
    iterations = 0
    for iterations in range(1, max_iterations + 1):
        alpha, a_a = fit_columns(a_c)
        denom = np.sum(alpha ** 2)
        a_c = (grid - a_a[None, :]) @ alpha / denom
        a_c, alpha, a_a = regauge(a_c, alpha, a_a)
        recon = np.outer(a_c, alpha) + a_a[None, :]
        res = float(np.sqrt(np.mean((grid - recon) ** 2)))
        if prev_res < np.inf and abs(prev_res - res) <= tol * max(res, 1e-300):
            prev_res = res
            break
        prev_res = res

    alpha[p_star] = 1.0
    a_a[p_star] = 0.0
    return ScalingDecomposition(
        k_values=k_values, p_values=p_values, a_c=a_c, a_a=a_a, alpha=alpha,
        beta=np.ones(k_values.size), residual=prev_res,
        reference_p=float(reference_p), iterations=iterations)
