"""On-disk formats: patch archive, dataset directory, model checkpoint,
run manifests, CSV tables and heatmap rasters.

Binary files open with a magic/version header.  All floats in CSV files
are written with %.17g so values round-trip exactly; checkpoints store
raw float64 bytes, so reload is bit-identical.
"""

from __future__ import annotations

import csv
import hashlib
import json
import struct
from pathlib import Path

import numpy as np

from .errors import ShapeMismatch

ARCHIVE_MAGIC = b"MGPA"
CHECKPOINT_MAGIC = b"MGPC"
FORMAT_VERSION = 1


def fmt_float(v):
    return format(float(v), ".17g")


def write_csv(path, header, rows):
    """Deterministic CSV: floats via %.17g, unix newlines."""
    path = Path(path)
    with path.open("w", newline="\n") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([fmt_float(v) if isinstance(v, float) or
                             isinstance(v, np.floating) else v for v in row])
    return path


def sha256_file(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


# patch archive ------------------------------------------------------------

def write_patch_archive(path, banks):
    """`banks`: dict name -> (k, C, H, W) float array, stored as float32."""
    path = Path(path)
    with path.open("wb") as fh:
        fh.write(ARCHIVE_MAGIC)
        fh.write(struct.pack("<II", FORMAT_VERSION, len(banks)))
        for name, bank in banks.items():
            data = np.ascontiguousarray(bank, dtype="<f4")
            raw_name = name.encode("utf-8")
            fh.write(struct.pack("<H", len(raw_name)))
            fh.write(raw_name)
            fh.write(struct.pack("<IIII", *data.shape))
            fh.write(data.tobytes())
    return path


def read_patch_archive(path):
    path = Path(path)
    with path.open("rb") as fh:
        if fh.read(4) != ARCHIVE_MAGIC:
            raise ShapeMismatch(f"{path} is not a patch archive")
        version, n_mech = struct.unpack("<II", fh.read(8))
        if version != FORMAT_VERSION:
            raise ShapeMismatch(f"unsupported archive version {version}")
        banks = {}
        for _ in range(n_mech):
            (name_len,) = struct.unpack("<H", fh.read(2))
            name = fh.read(name_len).decode("utf-8")
            k, c, h, w = struct.unpack("<IIII", fh.read(16))
            data = np.frombuffer(fh.read(4 * k * c * h * w), dtype="<f4")
            banks[name] = data.reshape(k, c, h, w).astype(np.float64)
    return banks


# dataset directory ----------------------------------------------------------

def save_dataset(out_dir, dataset, kind="custom"):
    """Write cells.csv + patches.bin + dataset.json; returns file list."""
    from .benchmarks import MechanismDataset  # noqa: F401  (type anchor)

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    mech_meta = []
    banks = {}
    for name, mosaic in dataset.mechanisms.items():
        banks[name] = mosaic.bank
        mech_meta.append({
            "name": name,
            "channels": int(mosaic.bank.shape[1]),
            "patch_size": int(mosaic.bank.shape[2]),
            "category_names": list(mosaic.category_names),
            "base_values": [float(v) for v in mosaic.base_values],
            "rows": int(mosaic.rows),
            "cols": int(mosaic.cols),
        })
    archive = write_patch_archive(out / "patches.bin", banks)

    header = ["index"]
    if dataset.grid_shape is not None:
        header += ["row", "col"]
    if dataset.coords is not None:
        header += ["x", "y"]
    for name in dataset.mechanisms:
        header += [f"cat_{name}", f"patch_{name}"]
    header += ["target", "clean"]
    comp_names = sorted(dataset.components)
    header += [f"component_{c}" for c in comp_names]
    extra_names = sorted(dataset.extra)
    header += [f"extra_{e}" for e in extra_names]

    cols = dataset.grid_shape[1] if dataset.grid_shape else None
    rows_iter = []
    for i in range(dataset.n_samples):
        row = [i]
        if dataset.grid_shape is not None:
            row += [i // cols, i % cols]
        if dataset.coords is not None:
            row += [dataset.coords[i, 0], dataset.coords[i, 1]]
        for name in dataset.mechanisms:
            m = dataset.mechanisms[name]
            row += [int(m.categories[i]), int(m.patch_index[i])]
        row += [dataset.targets[i], dataset.clean_targets[i]]
        row += [dataset.components[c][i] for c in comp_names]
        row += [dataset.extra[e][i] for e in extra_names]
        rows_iter.append(row)
    cells = write_csv(out / "cells.csv", header, rows_iter)

    meta = {
        "format": "mechgp-dataset",
        "version": FORMAT_VERSION,
        "kind": kind,
        "grid_shape": list(dataset.grid_shape) if dataset.grid_shape else None,
        "has_coords": dataset.coords is not None,
        "seed": int(dataset.seed),
        "noise_sigma": float(dataset.noise_sigma),
        "mechanisms": mech_meta,
        "components": comp_names,
        "extra": extra_names,
    }
    meta_path = out / "dataset.json"
    meta_path.write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")
    return [cells, archive, meta_path]


def load_dataset(in_dir):
    from .benchmarks import MechanismDataset, PatchMosaic

    src = Path(in_dir)
    meta = json.loads((src / "dataset.json").read_text())
    if meta.get("format") != "mechgp-dataset":
        raise ShapeMismatch(f"{src} does not hold a dataset")
    banks = read_patch_archive(src / "patches.bin")

    with (src / "cells.csv").open() as fh:
        reader = csv.reader(fh)
        header = next(reader)
        col = {name: j for j, name in enumerate(header)}
        raw = [line for line in reader]
    n = len(raw)

    def column(name, dtype=float):
        j = col[name]
        return np.array([dtype(r[j]) for r in raw])

    mechanisms = {}
    for mm in meta["mechanisms"]:
        name = mm["name"]
        mechanisms[name] = PatchMosaic(
            rows=mm["rows"], cols=mm["cols"], patch_size=mm["patch_size"],
            category_names=tuple(mm["category_names"]),
            categories=column(f"cat_{name}", int),
            bank=banks[name],
            patch_index=column(f"patch_{name}", int),
            base_values=np.array(mm["base_values"], dtype=float),
        )
    coords = None
    if meta["has_coords"]:
        coords = np.stack([column("x"), column("y")], axis=1)
    components = {c: column(f"component_{c}") for c in meta["components"]}
    extra = {e: column(f"extra_{e}") for e in meta["extra"]}
    return MechanismDataset(
        mechanisms=mechanisms,
        targets=column("target"),
        clean_targets=column("clean"),
        components=components,
        coords=coords,
        grid_shape=tuple(meta["grid_shape"]) if meta["grid_shape"] else None,
        seed=meta["seed"],
        noise_sigma=meta["noise_sigma"],
        extra=extra,
    )


# checkpoint ----------------------------------------------------------------

def save_checkpoint(path, model):
    """Self-describing binary checkpoint; float64 payload, bit-exact."""
    path = Path(path)
    tensors = {}
    for name in model.params_.names():
        tensors[f"param:{name}"] = model.params_[name].data
    for name, stats in model.stats_.items():
        tensors[f"stats:{name}:mean"] = stats.mean
        tensors[f"stats:{name}:std"] = stats.std

    directory = []
    offset = 0
    for name, arr in tensors.items():
        arr = np.ascontiguousarray(arr, dtype="<f8")
        directory.append({"name": name, "shape": list(arr.shape),
                          "offset": offset, "size": arr.size})
        offset += arr.size * 8

    header = {
        "version": FORMAT_VERSION,
        "estimator_params": _jsonable(model.get_params()),
        "mechanism_names": model.mechanism_names_,
        "specs": {name: {
            "in_channels": spec.in_channels,
            "patch_extent": spec.patch_extent,
            "conv1_filters": spec.conv1_filters,
            "conv2_filters": spec.conv2_filters,
            "kernel_size": spec.kernel_size,
            "latent_dim": spec.latent_dim,
        } for name, spec in model._specs.items()},
        "has_coords": model.has_coords_,
        "joint_dim": model.joint_dim_,
        "inducing_count": model.inducing_count_,
        "n_train": model.n_train_,
        "target_mean": model.target_mean_,
        "target_std": model.target_std_,
        "tensors": directory,
    }
    blob = json.dumps(header, sort_keys=True).encode("utf-8")
    with path.open("wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(struct.pack("<II", FORMAT_VERSION, len(blob)))
        fh.write(blob)
        for name, arr in tensors.items():
            fh.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())
    return path


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating,)):
        return float(obj)
    return obj


def load_checkpoint(path, cls):
    from .encoders import EncoderSpec, NormalizationStats
    from .params import ParamStore

    path = Path(path)
    with path.open("rb") as fh:
        if fh.read(4) != CHECKPOINT_MAGIC:
            raise ShapeMismatch(f"{path} is not a model checkpoint")
        version, blob_len = struct.unpack("<II", fh.read(8))
        if version != FORMAT_VERSION:
            raise ShapeMismatch(f"unsupported checkpoint version {version}")
        header = json.loads(fh.read(blob_len).decode("utf-8"))
        payload = fh.read()

    est_params = dict(header["estimator_params"])
    if isinstance(est_params.get("jitter_schedule"), list):
        est_params["jitter_schedule"] = tuple(est_params["jitter_schedule"])
    model = cls(**est_params)
    model.mechanism_names_ = list(header["mechanism_names"])
    model._specs = {name: EncoderSpec(**spec)
                    for name, spec in header["specs"].items()}
    model.has_coords_ = header["has_coords"]
    model.joint_dim_ = header["joint_dim"]
    model.inducing_count_ = header["inducing_count"]
    model.n_train_ = header["n_train"]
    model.target_mean_ = header["target_mean"]
    model.target_std_ = header["target_std"]

    arrays = {}
    for entry in header["tensors"]:
        lo = entry["offset"]
        hi = lo + entry["size"] * 8
        arr = np.frombuffer(payload[lo:hi], dtype="<f8").reshape(entry["shape"])
        arrays[entry["name"]] = np.array(arr)

    params = ParamStore()
    for entry in header["tensors"]:
        name = entry["name"]
        if name.startswith("param:"):
            params.add(name[len("param:"):], arrays[name])
    model.params_ = params
    model.stats_ = {}
    for name in model.mechanism_names_:
        model.stats_[name] = NormalizationStats(
            mean=arrays[f"stats:{name}:mean"], std=arrays[f"stats:{name}:std"])
    return model


# manifests and rasters ------------------------------------------------------

def write_manifest(out_dir, command, config, outputs, started, finished,
                   argv=None):
    """Record a run: resolved config plus hashes of every produced file."""
    from . import __version__

    out = Path(out_dir)
    entries = []
    for p in sorted(Path(p) for p in outputs):
        entries.append({
            "path": p.name if p.parent == out else str(p.relative_to(out)),
            "sha256": sha256_file(p),
            "bytes": p.stat().st_size,
        })
    manifest = {
        "command": command,
        "argv": argv or [],
        "config": _jsonable(config),
        "package_version": __version__,
        "started": started,
        "finished": finished,
        "outputs": entries,
    }
    path = out / "manifest.json"
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return path


def write_heatmap(path, grid, csv_path=None):
    """8-bit grayscale raster (min-max normalized) plus raw-value sidecar CSV."""
    from PIL import Image

    grid = np.asarray(grid, dtype=float)
    lo, hi = float(grid.min()), float(grid.max())
    scaled = np.zeros_like(grid) if hi == lo else (grid - lo) / (hi - lo)
    img = Image.fromarray((scaled * 255.0).round().astype(np.uint8), mode="L")
    img.save(path, format="PNG")
    written = [Path(path)]
    if csv_path is not None:
        rows, cols = grid.shape
        written.append(write_csv(
            csv_path, ["row", "col", "value"],
            [[r, c, grid[r, c]] for r in range(rows) for c in range(cols)]))
    return written


def write_loss_history(path, history):
    return write_csv(path, ["step", "negative_elbo"],
                     [[i, float(v)] for i, v in enumerate(history)])


def write_active_trace(path, trace):
    header = ["iteration", "cell", "row", "col", "score", "sigma", "penalty",
              "rmse", "mean_sigma"]
    extras = sorted({k for r in trace.records for k in r.extras})
    rows = []
    for r in trace.records:
        row = [r.iteration, r.cell, r.row, r.col, r.score, r.sigma, r.penalty,
               r.rmse, r.mean_sigma]
        row += [r.extras.get(k, "") for k in extras]
        rows.append(row)
    return write_csv(path, header + extras, rows)
