"""Input validation helpers for the estimator API.

Mechanism inputs arrive either as dense patch arrays (n, C, H, W) or as a
(bank, index) pair that names each sample's patch inside a smaller bank.
Validation normalizes both forms to (bank, index), deduplicating dense
arrays by content so repeated patches are encoded once.
"""

from __future__ import annotations

import numpy as np

from .errors import ShapeMismatch

COORDS_KEY = "coords"


def as_float_array(x, name, ndim=None, finite=True):
    arr = np.asarray(x, dtype=np.float64)
    if ndim is not None and arr.ndim != ndim:
        raise ShapeMismatch(f"{name} must be {ndim}-d, got shape {arr.shape}")
    if finite and not np.all(np.isfinite(arr)):
        raise ShapeMismatch(f"{name} contains non-finite entries")
    return arr


def dedupe_patches(patches):
    """Split a dense patch stack into (bank, index) by content identity.

    First occurrence order fixes the bank order, so the result is
    deterministic for identical inputs.
    """
    n = patches.shape[0]
    seen = {}
    index = np.empty(n, dtype=np.intp)
    keep = []
    for i in range(n):
        key = patches[i].tobytes()
        pos = seen.get(key)
        if pos is None:
            pos = len(keep)
            seen[key] = pos
            keep.append(i)
        index[i] = pos
    return patches[keep], index


def validate_mechanism_inputs(x, expected=None):
    """Normalize an estimator input dict.

    Returns (mechanisms, coords, n) where mechanisms is an ordered dict
    name -> (bank (k,C,H,W), index (n,)).  `expected`, when given, is a
    dict name -> (channels, extent) from the fitted model; extra, missing
    or mis-shaped mechanisms raise ShapeMismatch.
    """
    if not isinstance(x, dict) or not x:
        raise ShapeMismatch("X must be a non-empty dict of mechanism arrays")
    coords = None
    mechanisms = {}
    n = None
    for name, value in x.items():
        if name == COORDS_KEY:
            coords = as_float_array(value, "coords", ndim=2)
            if coords.shape[1] != 2:
                raise ShapeMismatch("coords must have two columns (x, y)")
            continue
        if isinstance(value, tuple):
            bank, index = value
            bank = as_float_array(bank, f"{name} bank", ndim=4)
            index = np.asarray(index, dtype=np.intp)
            if index.ndim != 1:
                raise ShapeMismatch(f"{name} index must be 1-d")
            if index.size and (index.min() < 0 or index.max() >= bank.shape[0]):
                raise ShapeMismatch(f"{name} index outside bank")
        else:
            dense = as_float_array(value, name, ndim=4)
            bank, index = dedupe_patches(dense)
        mechanisms[name] = (bank, index)
        if n is None:
            n = index.shape[0]
        elif index.shape[0] != n:
            raise ShapeMismatch(f"{name} has {index.shape[0]} samples, expected {n}")
    if not mechanisms:
        raise ShapeMismatch("X must contain at least one image mechanism")
    if coords is not None and coords.shape[0] != n:
        raise ShapeMismatch(f"coords has {coords.shape[0]} rows, expected {n}")
    if expected is not None:
        if set(expected) != set(mechanisms):
            raise ShapeMismatch(
                f"mechanisms {sorted(mechanisms)} do not match fitted {sorted(expected)}")
        for name, (channels, extent) in expected.items():
            bank = mechanisms[name][0]
            if bank.shape[1] != channels or bank.shape[2] != extent or bank.shape[3] != extent:
                raise ShapeMismatch(
                    f"{name} patches {bank.shape[1:]} do not match fitted "
                    f"({channels}, {extent}, {extent})")
    return mechanisms, coords, n


def validate_targets(y, n):
    y = as_float_array(y, "y", ndim=1)
    if y.shape[0] != n:
        raise ShapeMismatch(f"y has {y.shape[0]} entries, expected {n}")
    return y
