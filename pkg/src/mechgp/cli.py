"""Command-line interface.

Subcommands wire the library into reproducible runs: every command reads
an optional YAML config (flags override config, config overrides
defaults), writes its outputs into --out, and finishes with a manifest
recording the resolved configuration and a sha256 per produced file.

Exit codes: 0 success, 1 runtime failure, 2 usage error.
"""

from __future__ import annotations

import argparse
import sys
from datetime import datetime, timezone
from pathlib import Path

import numpy as np
import yaml

from . import io
from .active import AcquisitionConfig, run_loop
from .benchmarks import BENCHMARK_BUILDERS, make_benchmark1
from .disentangle import Anchor, cluster_check, isolate, scaling_decompose
from .errors import MechGPError
from .estimator import MechanismGPRegressor, fit_on_indices
from .ferrosim import (LatticeConfig, build_ferrosim_dataset,
                       ground_truth_sweeps)

ESTIMATOR_KEYS = ("kernel", "structured_mean", "learning_rate", "n_iterations",
                  "batch_size", "n_inducing", "latent_dim", "random_state")


def _utcnow():
    return datetime.now(timezone.utc).isoformat()


def _resolve(parser, args, defaults):
    """defaults < config file section < explicit flags."""
    merged = dict(defaults)
    config_path = getattr(args, "config", None)
    if config_path:
        try:
            loaded = yaml.safe_load(Path(config_path).read_text()) or {}
        except (OSError, yaml.YAMLError) as err:
            parser.error(f"cannot read config {config_path}: {err}")
        section = loaded.get(args.command, loaded)
        if not isinstance(section, dict):
            parser.error(f"config section for {args.command!r} must be a mapping")
        for key, value in section.items():
            if key not in merged:
                parser.error(f"unknown config key {key!r} for {args.command}")
            merged[key] = value
    for key in merged:
        value = getattr(args, key, None)
        if value is not None:
            merged[key] = value
    return merged


def _prepare_out(parser, cfg):
    out = Path(cfg["out"]) if cfg.get("out") else None
    if out is None:
        parser.error("--out is required")
    if out.exists() and any(out.iterdir()) and not cfg.get("force"):
        parser.error(f"output directory {out} is not empty (use --force)")
    out.mkdir(parents=True, exist_ok=True)
    return out


def _grid_rasters(out, stem, grid_shape, values, outputs):
    rows, cols = grid_shape
    grid = np.asarray(values).reshape(rows, cols)
    outputs.extend(io.write_heatmap(out / f"{stem}.png", grid,
                                    csv_path=out / f"{stem}.csv"))


def _estimator_params(cfg):
    return {k: cfg[k] for k in ESTIMATOR_KEYS if cfg.get(k) is not None}


# commands -------------------------------------------------------------------

def cmd_gen_bench(parser, args):
    defaults = dict(benchmark="1", rows=100, cols=100, patch_size=16, seed=0,
                    noise_sigma=0.0, no_spatial=False, out=None, force=False)
    cfg = _resolve(parser, args, defaults)
    if cfg["benchmark"] not in BENCHMARK_BUILDERS:
        parser.error(f"unknown benchmark {cfg['benchmark']!r}; "
                     f"choose from {sorted(BENCHMARK_BUILDERS)}")
    if cfg["no_spatial"] and cfg["benchmark"] != "1":
        parser.error("--no-spatial applies to benchmark 1 only")
    out = _prepare_out(parser, cfg)
    started = _utcnow()
    builder = BENCHMARK_BUILDERS[cfg["benchmark"]]
    kwargs = dict(rows=cfg["rows"], cols=cfg["cols"], patch_size=cfg["patch_size"],
                  seed=cfg["seed"], noise_sigma=cfg["noise_sigma"])
    if cfg["benchmark"] == "1":
        dataset = make_benchmark1(spatial=not cfg["no_spatial"], **kwargs)
    else:
        dataset = builder(**kwargs)
    outputs = io.save_dataset(out, dataset, kind=f"benchmark-{cfg['benchmark']}")
    io.write_manifest(out, "gen-bench", cfg, outputs, started, _utcnow(),
                      argv=sys.argv[1:])
    return 0


def cmd_ferrosim(parser, args):
    defaults = dict(sweep="none", dataset=False, out=None, force=False,
                    lattice_size=15, k_min=-14, k_max=14, p_min=1, p_max=8,
                    amplitude=2.0, periods=2, samples_per_period=200)
    cfg = _resolve(parser, args, defaults)
    if cfg["sweep"] not in ("none", "K", "P", "both"):
        parser.error("--sweep must be one of K, P, both")
    if cfg["sweep"] == "none" and not cfg["dataset"]:
        parser.error("nothing to do: pass --sweep and/or --dataset")
    config = LatticeConfig(n=cfg["lattice_size"])
    n = config.n
    if not (-(n - 1) <= cfg["k_min"] <= cfg["k_max"] <= n - 1):
        parser.error(f"K range must satisfy {-(n-1)} <= k_min <= k_max <= {n-1}")
    if not (1 <= cfg["p_min"] <= cfg["p_max"] <= 8):
        parser.error("P range must satisfy 1 <= p_min <= p_max <= 8")
    out = _prepare_out(parser, cfg)
    started = _utcnow()
    from .ferrosim import FieldWaveform
    waveform = FieldWaveform(amplitude_ec=cfg["amplitude"], periods=cfg["periods"],
                             samples_per_period=cfg["samples_per_period"])
    k_values = list(range(cfg["k_min"], cfg["k_max"] + 1))
    p_values = list(range(cfg["p_min"], cfg["p_max"] + 1))
    outputs = []
    if cfg["sweep"] in ("K", "both", "P"):
        sweeps = ground_truth_sweeps(
            config, waveform,
            k_values=k_values if cfg["sweep"] in ("K", "both") else [0],
            p_values=p_values if cfg["sweep"] in ("P", "both") else [8])
        if cfg["sweep"] in ("K", "both"):
            outputs.append(io.write_csv(out / "sweep_K.csv", ["K", "loop_area"],
                                        list(zip(sweeps["K"].tolist(),
                                                 sweeps["A_c"].tolist()))))
        if cfg["sweep"] in ("P", "both"):
            outputs.append(io.write_csv(out / "sweep_P.csv", ["P", "loop_area"],
                                        list(zip(sweeps["P"].tolist(),
                                                 sweeps["A_a"].tolist()))))
    if cfg["dataset"]:
        dataset = build_ferrosim_dataset(k_values, p_values, config, waveform)
        outputs.extend(io.save_dataset(out, dataset, kind="ferrosim"))
    io.write_manifest(out, "ferrosim", cfg, outputs, started, _utcnow(),
                      argv=sys.argv[1:])
    return 0


def cmd_train(parser, args):
    defaults = dict(data=None, out=None, force=False, n_labeled=100, seed=0,
                    kernel=None, structured_mean=None, learning_rate=None,
                    n_iterations=None, batch_size=None, n_inducing=None,
                    latent_dim=None, random_state=0)
    cfg = _resolve(parser, args, defaults)
    if not cfg["data"]:
        parser.error("--data is required")
    out = _prepare_out(parser, cfg)
    started = _utcnow()
    dataset = io.load_dataset(cfg["data"])
    n = dataset.n_samples
    if not (2 <= cfg["n_labeled"] <= n):
        parser.error(f"--n-labeled must lie in [2, {n}]")
    rng = np.random.default_rng(cfg["seed"])
    labeled = np.sort(rng.choice(n, size=cfg["n_labeled"], replace=False))
    model = fit_on_indices(dataset, labeled, **_estimator_params(cfg))

    outputs = [model.save(out / "model.ckpt"),
               io.write_loss_history(out / "loss_history.csv", model.loss_history_),
               io.write_csv(out / "labeled.csv", ["cell"], [[int(i)] for i in labeled])]
    if dataset.grid_shape is not None:
        mean, std = model.predict(dataset.inputs_at(), return_std=True)
        _grid_rasters(out, "prediction_mean", dataset.grid_shape, mean, outputs)
        _grid_rasters(out, "prediction_sigma", dataset.grid_shape, std, outputs)
    io.write_manifest(out, "train", cfg, outputs, started, _utcnow(),
                      argv=sys.argv[1:])
    return 0


def cmd_active(parser, args):
    defaults = dict(data=None, out=None, force=False, budget=100, seed_points=2,
                    lam=1.0, d0=0.1, seed=0, save_grids=False, kernel=None,
                    structured_mean=None, learning_rate=None, n_iterations=None,
                    batch_size=None, n_inducing=None, latent_dim=None,
                    random_state=0)
    cfg = _resolve(parser, args, defaults)
    if not cfg["data"]:
        parser.error("--data is required")
    out = _prepare_out(parser, cfg)
    started = _utcnow()
    dataset = io.load_dataset(cfg["data"])
    acq = AcquisitionConfig(lam=cfg["lam"], d0=cfg["d0"], budget=cfg["budget"],
                            k0=cfg["seed_points"])
    outputs = []
    grid_dir = out / "grids"
    callback = None
    if cfg["save_grids"]:
        grid_dir.mkdir(exist_ok=True)

        def callback(it, mean_grid, sigma_grid, model):
            outputs.extend(io.write_heatmap(
                grid_dir / f"mean_{it:04d}.png",
                np.asarray(mean_grid).reshape(dataset.grid_shape),
                csv_path=grid_dir / f"mean_{it:04d}.csv"))

    trace, model = run_loop(dataset, acq, _estimator_params(cfg),
                            seed=cfg["seed"], grid_callback=callback,
                            record_center=bool(cfg.get("structured_mean")))
    outputs.append(io.write_active_trace(out / "trace.csv", trace))
    outputs.append(io.write_csv(out / "seed_cells.csv", ["cell"],
                                [[int(c)] for c in trace.seed_cells]))
    if hasattr(model, "save"):
        outputs.append(model.save(out / "model.ckpt"))
        mean, std = model.predict(dataset.inputs_at(), return_std=True)
        _grid_rasters(out, "prediction_mean", dataset.grid_shape, mean, outputs)
        _grid_rasters(out, "prediction_sigma", dataset.grid_shape, std, outputs)
    io.write_manifest(out, "active", cfg, outputs, started, _utcnow(),
                      argv=sys.argv[1:])
    return 0


def _parse_anchor(parser, text, dataset):
    """mech@x,y[=value] for coords (normalized), mech@cell[=value] for patches."""
    try:
        head, _, val = text.partition("=")
        mech, _, where = head.partition("@")
        value = float(val) if val else 0.0
        if mech in ("coords", "spatial"):
            parts = where.split(",")
            return Anchor(mechanism="coords", xy=(float(parts[0]), float(parts[1])),
                          value=value)
        if mech not in dataset.mechanisms:
            parser.error(f"anchor names unknown mechanism {mech!r}")
        return Anchor(mechanism=mech, cell=int(where), value=value)
    except (ValueError, IndexError):
        parser.error(f"cannot parse anchor {text!r} "
                     "(expected mech@x,y[=value] or mech@cell[=value])")


def cmd_disentangle(parser, args):
    defaults = dict(data=None, model=None, out=None, force=False, anchors=None,
                    clusters=0, scaling=False, reference_p=None)
    cfg = _resolve(parser, args, defaults)
    for key in ("data", "model"):
        if not cfg[key]:
            parser.error(f"--{key} is required")
    if not cfg["anchors"]:
        parser.error("at least one --anchors entry is required")
    out = _prepare_out(parser, cfg)
    started = _utcnow()
    dataset = io.load_dataset(cfg["data"])
    model = MechanismGPRegressor.load(cfg["model"])
    anchors = [_parse_anchor(parser, a, dataset) for a in cfg["anchors"]]

    responses = isolate(model, dataset, anchors)
    outputs = []
    for name, resp in responses.items():
        rows = []
        vals = resp.grid_values()
        for i, v in enumerate(vals):
            rows.append([i, float(v)])
        outputs.append(io.write_csv(out / f"response_{name}.csv",
                                    ["cell", "corrected_response"], rows))
        if name == "coords" and dataset.grid_shape is not None:
            _grid_rasters(out, "response_spatial", dataset.grid_shape, vals, outputs)
    outputs.append(io.write_csv(
        out / "anchors.csv", ["mechanism", "delta"],
        [[name, float(resp.delta)] for name, resp in responses.items()]))

    if cfg["clusters"]:
        for name, resp in responses.items():
            if name == "coords":
                continue
            cats = dataset.mechanisms[name].categories
            res = cluster_check(resp.grid_values(), cfg["clusters"],
                                categories=cats, seed=0)
            rows = [[i, int(l)] for i, l in enumerate(res.labels)]
            outputs.append(io.write_csv(out / f"clusters_{name}.csv",
                                        ["cell", "cluster"], rows))
            outputs.append(io.write_csv(out / f"purity_{name}.csv",
                                        ["purity"], [[float(res.purity)]]))

    if cfg["scaling"]:
        if "K" not in dataset.extra or "P" not in dataset.extra:
            parser.error("--scaling needs a dataset with K and P columns")
        ks = np.unique(dataset.extra["K"])
        ps = np.unique(dataset.extra["P"])
        pred = model.predict(dataset.inputs_at())
        grid = np.full((ks.size, ps.size), np.nan)
        for v, k, p in zip(pred, dataset.extra["K"], dataset.extra["P"]):
            grid[np.nonzero(ks == k)[0][0], np.nonzero(ps == p)[0][0]] = v
        dec = scaling_decompose(grid, ks, ps, reference_p=cfg["reference_p"])
        outputs.append(io.write_csv(out / "scaling_A_c.csv", ["K", "A_c"],
                                    list(zip(ks.tolist(), dec.a_c.tolist()))))
        outputs.append(io.write_csv(out / "scaling_A_a.csv", ["P", "A_a"],
                                    list(zip(ps.tolist(), dec.a_a.tolist()))))
        outputs.append(io.write_csv(out / "scaling_alpha.csv", ["P", "alpha"],
                                    list(zip(ps.tolist(), dec.alpha.tolist()))))
        outputs.append(io.write_csv(out / "scaling_residual.csv", ["residual"],
                                    [[dec.residual]]))
    io.write_manifest(out, "disentangle", cfg, outputs, started, _utcnow(),
                      argv=sys.argv[1:])
    return 0


# parser ----------------------------------------------------------------------

def build_parser():
    parser = argparse.ArgumentParser(
        prog="mechgp",
        description="Mechanism-aware deep-kernel GP experiments.")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="YAML config file (flags override)")
        p.add_argument("--out", help="output directory")
        p.add_argument("--force", action="store_true", default=None,
                       help="allow writing into a non-empty directory")

    p = sub.add_parser("gen-bench", help="generate a synthetic benchmark dataset")
    common(p)
    p.add_argument("--benchmark", choices=sorted(BENCHMARK_BUILDERS))
    p.add_argument("--rows", type=int)
    p.add_argument("--cols", type=int)
    p.add_argument("--patch-size", dest="patch_size", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--noise-sigma", dest="noise_sigma", type=float)
    p.add_argument("--no-spatial", dest="no_spatial", action="store_true",
                   default=None)

    p = sub.add_parser("ferrosim", help="lattice sweeps and loop-area datasets")
    common(p)
    p.add_argument("--sweep", choices=["K", "P", "both"])
    p.add_argument("--dataset", action="store_true", default=None)
    p.add_argument("--lattice-size", dest="lattice_size", type=int)
    p.add_argument("--k-min", dest="k_min", type=int)
    p.add_argument("--k-max", dest="k_max", type=int)
    p.add_argument("--p-min", dest="p_min", type=int)
    p.add_argument("--p-max", dest="p_max", type=int)
    p.add_argument("--amplitude", type=float)
    p.add_argument("--periods", type=int)
    p.add_argument("--samples-per-period", dest="samples_per_period", type=int)

    def estimator_flags(p):
        p.add_argument("--kernel", choices=["matern52", "rbf"])
        p.add_argument("--structured-mean", dest="structured_mean",
                       action="store_true", default=None)
        p.add_argument("--learning-rate", dest="learning_rate", type=float)
        p.add_argument("--iterations", dest="n_iterations", type=int)
        p.add_argument("--batch-size", dest="batch_size", type=int)
        p.add_argument("--inducing", dest="n_inducing", type=int)
        p.add_argument("--latent-dim", dest="latent_dim", type=int)
        p.add_argument("--random-state", dest="random_state", type=int)

    p = sub.add_parser("train", help="train on a fixed labeled subset")
    common(p)
    p.add_argument("--data", help="dataset directory")
    p.add_argument("--n-labeled", dest="n_labeled", type=int)
    p.add_argument("--seed", type=int, help="labeled-subset selection seed")
    estimator_flags(p)

    p = sub.add_parser("active", help="uncertainty-driven active learning")
    common(p)
    p.add_argument("--data", help="dataset directory")
    p.add_argument("--budget", type=int)
    p.add_argument("--seed-points", dest="seed_points", type=int)
    p.add_argument("--lam", type=float, help="boundary-penalty weight")
    p.add_argument("--d0", type=float, help="boundary-penalty margin")
    p.add_argument("--seed", type=int)
    p.add_argument("--save-grids", dest="save_grids", action="store_true",
                   default=None)
    estimator_flags(p)

    p = sub.add_parser("disentangle", help="isolate mechanism contributions")
    common(p)
    p.add_argument("--data", help="dataset directory")
    p.add_argument("--model", help="model checkpoint")
    p.add_argument("--anchors", action="append",
                   help="mech@x,y[=value] (coords) or mech@cell[=value]")
    p.add_argument("--clusters", type=int, help="run the k-means sanity check")
    p.add_argument("--scaling", action="store_true", default=None,
                   help="solve the (K, P) scaling decomposition")
    p.add_argument("--reference-p", dest="reference_p", type=float)
    return parser


HANDLERS = {
    "gen-bench": cmd_gen_bench,
    "ferrosim": cmd_ferrosim,
    "train": cmd_train,
    "active": cmd_active,
    "disentangle": cmd_disentangle,
}


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return HANDLERS[args.command](parser, args)
    except MechGPError as err:
        print(f"error: {err}", file=sys.stderr)
        return 1
    except OSError as err:
        print(f"error: {err}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
