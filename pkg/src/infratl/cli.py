"""Command-line surface tying the pipeline together.

Commands: atmos, dataset, train, predict, eval, map. Every command is a thin
deterministic wrapper around the library; each run writes a provenance log
(seeds, config, output hashes) next to its outputs. Errors print one JSON
object to stderr and map to distinct exit codes:

    0  success
    2  bad usage / malformed configuration
    3  missing input file
    4  malformed data or shape mismatch
    5  numerical failure (PE blowup, unstable propagator)
"""

from __future__ import annotations

import argparse
import dataclasses
import hashlib
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .atmosphere import (ClimatologySpec, GravityWaveSpec, build_slice,
                         classify_downwind, load_slice, save_slice)
from .container import ContainerError
from .dataset import (Normalizer, SpecSampler, SplitSpec, default_workers,
                      generate, load_manifest, load_samples, ok_records,
                      split_indices)
from .evaluation import export_report, report
from .neuralnet import (ModelConfig, SurrogateModel, TrainConfig,
                        load_checkpoint, save_checkpoint, train)
from .pe_solver import (NumericalBlowupError, PadeConstructionError,
                        SolverConfig, load_tl, save_tl, TLCurve)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_MISSING = 3
EXIT_DATA = 4
EXIT_NUMERIC = 5


def _sha256(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _write_run_log(log_path, command, params, outputs, extra=None):
    log = {
        "command": command,
        "version": __version__,
        "params": params,
        "outputs": {str(p): _sha256(p) for p in outputs if Path(p).exists()},
    }
    if extra:
        log.update(extra)
    Path(log_path).parent.mkdir(parents=True, exist_ok=True)
    with open(log_path, "w") as fh:
        json.dump(log, fh, indent=2, sort_keys=True)


def _load_json(path):
    p = Path(path)
    if not p.exists():
        raise FileNotFoundError(f"config file {path} not found")
    with open(p) as fh:
        return json.load(fh)


def _specs_from_config(config, seed):
    clim = ClimatologySpec.from_dict(config["climatology"]) if "climatology" in config \
        else ClimatologySpec(rng_seed=seed)
    gw = GravityWaveSpec.from_dict(config["gravity_waves"]) if "gravity_waves" in config \
        else GravityWaveSpec(rng_seed=seed)
    return clim, gw


# ---------------------------------------------------------------------------
# commands

def cmd_atmos(args):
    config = _load_json(args.config) if args.config else {}
    clim, gw = _specs_from_config(config, args.seed)
    slc = build_slice(clim, gw, args.azimuth)
    score, cls = classify_downwind(slc)
    out = Path(args.out)
    save_slice(out, slc)
    _write_run_log(out.with_suffix(".log.json"), "atmos",
                   {"seed": args.seed, "azimuth_deg": args.azimuth,
                    "climatology": clim.to_dict(), "gravity_waves": gw.to_dict()},
                   [out])
    print(json.dumps({"slice": str(out), "downwind_score": score,
                      "downwind_class": cls, "c_ground": slc.c_ground}))
    return EXIT_OK


def cmd_dataset(args):
    config = _load_json(args.config) if args.config else {}
    sampler = SpecSampler.from_dict(config["sampler"]) if "sampler" in config else SpecSampler()
    solver = SolverConfig.from_dict(config["solver"]) if "solver" in config else SolverConfig()
    freq_grid = config.get("freq_grid_hz")
    workers = args.workers if args.workers is not None else default_workers()
    manifest = generate(args.out, args.n, sampler=sampler, solver=solver,
                        freq_grid=freq_grid, workers=workers,
                        master_seed=args.seed, progress=not args.quiet)
    _write_run_log(Path(args.out) / "run_log.json", "dataset",
                   {"n": args.n, "seed": args.seed, "workers": workers,
                    "sampler": sampler.to_dict(), "solver": solver.to_dict(),
                    "freq_grid_hz": freq_grid},
                   [manifest])
    print(json.dumps({"manifest": str(manifest)}))
    return EXIT_OK


def cmd_train(args):
    config = _load_json(args.config)
    manifest_path = Path(config["manifest"])
    if not manifest_path.exists():
        raise FileNotFoundError(f"manifest {manifest_path} not found")
    ckpt_path = Path(config.get("checkpoint", "checkpoint.itl1"))
    split_cfg = config.get("split", {})
    run = int(split_cfg.get("run", 0))
    split_spec = SplitSpec(seed=int(split_cfg.get("seed", 0)),
                           n_runs=int(split_cfg.get("n_runs", 8)),
                           fractions=tuple(split_cfg.get("fractions", (0.7, 0.2, 0.1))))
    model_cfg = ModelConfig.from_dict(config["model"]) if "model" in config else ModelConfig()
    train_cfg = TrainConfig.from_dict(config["train"]) if "train" in config else TrainConfig()
    seed = int(config.get("seed", 0))

    manifest = load_manifest(manifest_path)
    n_ok = len(ok_records(manifest))
    splits = split_indices(n_ok, split_spec)[run]
    tr = load_samples(manifest_path, splits["train"])
    va = load_samples(manifest_path, splits["val"])

    norm = Normalizer.fit(tr["slices"], tr["freqs"], tr["labels"],
                          fitted_on=f"{manifest_path.name}:run{run}")
    train_data = (norm.apply_inputs(tr["slices"]), norm.apply_freqs(tr["freqs"]),
                  norm.apply_labels(tr["labels"]))
    val_data = (norm.apply_inputs(va["slices"]), norm.apply_freqs(va["freqs"]),
                norm.apply_labels(va["labels"]))

    model = SurrogateModel(model_cfg, seed=seed)
    ckpt = train(model, train_data, val_data, cfg=train_cfg,
                 normalizer=norm.to_dict(), verbose=not args.quiet)
    save_checkpoint(ckpt_path, ckpt)
    _write_run_log(ckpt_path.with_suffix(".log.json"), "train",
                   {"config": config, "split_run": run, "n_train": len(tr["freqs"]),
                    "n_val": len(va["freqs"]), "best_epoch": ckpt.best_epoch},
                   [ckpt_path])
    print(json.dumps({"checkpoint": str(ckpt_path), "best_epoch": ckpt.best_epoch,
                      "epochs_run": len(ckpt.history["val_loss"]),
                      "best_val_loss": min(ckpt.history["val_loss"])}))
    return EXIT_OK


def _predict_curves(ckpt, slices, freqs):
    model = ckpt.build_model()
    norm = Normalizer.from_dict(ckpt.normalizer)
    x = norm.apply_inputs(slices)
    f = norm.apply_freqs(np.asarray(freqs, dtype=np.float64))
    preds = model.predict(x, f)
    return norm.invert_labels(preds.astype(np.float64))


def cmd_predict(args):
    ckpt = load_checkpoint(args.checkpoint)
    slc = load_slice(args.slice)
    x = slc.c_ratio.astype(np.float32)[None, :, :, None]
    curve_db = _predict_curves(ckpt, x, [args.freq])[0]
    out = Path(args.out)
    save_tl(out, TLCurve(values=curve_db, f=args.freq, reference="cnn surrogate"),
            meta={"engine": "cnn", "checkpoint": str(args.checkpoint),
                  "slice": str(args.slice)})
    _write_run_log(out.with_suffix(".log.json"), "predict",
                   {"checkpoint": str(args.checkpoint), "slice": str(args.slice),
                    "freq_hz": args.freq}, [out])
    print(json.dumps({"tl": str(out), "mean_tl_db": float(np.mean(curve_db))}))
    return EXIT_OK


def cmd_eval(args):
    ckpt = load_checkpoint(args.checkpoint)
    manifest_path = Path(args.manifest)
    manifest = load_manifest(manifest_path)
    n_ok = len(ok_records(manifest))
    split_spec = SplitSpec(seed=args.split_seed, n_runs=args.split_runs)
    splits = split_indices(n_ok, split_spec)[args.run]
    te = load_samples(manifest_path, splits[args.split])
    preds = _predict_curves(ckpt, te["slices"], te["freqs"])
    rep = report(preds, te["labels"].astype(np.float64), te["freqs"], te["scores"])
    out_dir = Path(args.out)
    report_path = export_report(rep, preds, te["labels"], out_dir)
    _write_run_log(out_dir / "run_log.json", "eval",
                   {"checkpoint": str(args.checkpoint), "manifest": str(args.manifest),
                    "split": args.split, "run": args.run},
                   [report_path],
                   extra={"overall_mean_rmse_db": rep.overall_mean})
    print(json.dumps({"report": str(report_path),
                      "overall_mean_rmse_db": rep.overall_mean,
                      "n_samples": rep.n_samples}))
    return EXIT_OK


def cmd_map(args):
    n_pts = int(args.radius_km / 10)
    if n_pts < 1 or args.radius_km > 4000:
        raise ValueError("radius must lie in [10, 4000] km")
    config = _load_json(args.config) if args.config else {}
    clim, gw = _specs_from_config(config, args.seed)
    solver = SolverConfig.from_dict(config["solver"]) if "solver" in config else SolverConfig()
    azimuths = np.arange(args.azimuths) * (360.0 / args.azimuths)

    if args.engine == "cnn":
        if not args.checkpoint:
            raise ValueError("engine=cnn requires --checkpoint")
        ckpt = load_checkpoint(args.checkpoint)

    grid = np.empty((args.azimuths, n_pts))
    slices = []
    for i, az in enumerate(azimuths):
        slices.append(build_slice(clim, gw, float(az)))
    if args.engine == "cnn":
        x = np.stack([s.c_ratio.astype(np.float32)[:, :, None] for s in slices])
        preds = _predict_curves(ckpt, x, [args.freq] * len(slices))
        grid[:, :] = preds[:, :n_pts]
    else:
        for i, slc in enumerate(slices):
            curve = solver.run(slc, args.freq)
            grid[i, :] = curve.values[:n_pts]

    out = Path(args.out)
    from .container import write_container
    write_container(out, {"tl_db": grid},
                    {"kind": "attenuation_map", "engine": args.engine,
                     "f_hz": args.freq, "radius_km": args.radius_km,
                     "azimuths_deg": [float(a) for a in azimuths],
                     "range_step_km": 10.0, "seed": args.seed})
    csv_path = out.with_suffix(".csv")
    np.savetxt(csv_path, grid, delimiter=",", fmt="%.3f")

    extra = {"map_stats": {"mean_tl_db": float(grid.mean()),
                           "min_tl_db": float(grid.min()),
                           "max_tl_db": float(grid.max())}}
    if args.compare_to:
        from .container import read_container
        other, _ = read_container(args.compare_to)
        diff = np.abs(grid - other["tl_db"].astype(np.float64))
        extra["comparison"] = {"against": str(args.compare_to),
                               "mean_abs_diff_db": float(diff.mean()),
                               "max_abs_diff_db": float(diff.max())}
    _write_run_log(out.with_suffix(".log.json"), "map",
                   {"engine": args.engine, "freq_hz": args.freq,
                    "azimuths": args.azimuths, "radius_km": args.radius_km,
                    "seed": args.seed,
                    "climatology": clim.to_dict(), "gravity_waves": gw.to_dict(),
                    "solver": solver.to_dict()},
                   [out, csv_path], extra=extra)
    print(json.dumps({"map": str(out), **extra}))
    return EXIT_OK


# ---------------------------------------------------------------------------
# argument parsing and error mapping

def build_parser():
    p = argparse.ArgumentParser(prog="infratl",
                                description="Infrasound transmission-loss toolkit")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    pa = sub.add_parser("atmos", help="generate one atmospheric slice")
    pa.add_argument("--config", help="JSON with climatology/gravity_waves specs")
    pa.add_argument("--seed", type=int, default=0)
    pa.add_argument("--azimuth", type=float, default=90.0)
    pa.add_argument("--out", required=True)
    pa.set_defaults(func=cmd_atmos)

    pd = sub.add_parser("dataset", help="generate a labeled (slice, freq) -> TL dataset")
    pd.add_argument("--n", type=int, required=True)
    pd.add_argument("--seed", type=int, default=0)
    pd.add_argument("--out", required=True)
    pd.add_argument("--workers", type=int, default=None,
                    help="worker processes (default: $INFRATL_WORKERS or 1)")
    pd.add_argument("--config", help="JSON with sampler/solver/freq_grid_hz")
    pd.add_argument("--quiet", action="store_true")
    pd.set_defaults(func=cmd_dataset)

    pt = sub.add_parser("train", help="train the surrogate on a dataset split")
    pt.add_argument("--config", required=True, help="JSON training configuration")
    pt.add_argument("--quiet", action="store_true")
    pt.set_defaults(func=cmd_train)

    pp = sub.add_parser("predict", help="predict one TL curve from a slice file")
    pp.add_argument("--checkpoint", required=True)
    pp.add_argument("--slice", required=True)
    pp.add_argument("--freq", type=float, required=True)
    pp.add_argument("--out", required=True)
    pp.set_defaults(func=cmd_predict)

    pe = sub.add_parser("eval", help="evaluate a checkpoint on a dataset split")
    pe.add_argument("--checkpoint", required=True)
    pe.add_argument("--manifest", required=True)
    pe.add_argument("--split", default="test", choices=["train", "val", "test"])
    pe.add_argument("--run", type=int, default=0)
    pe.add_argument("--split-seed", type=int, default=0)
    pe.add_argument("--split-runs", type=int, default=8)
    pe.add_argument("--out", required=True)
    pe.set_defaults(func=cmd_eval)

    pm = sub.add_parser("map", help="azimuthal attenuation map around a source")
    pm.add_argument("--engine", choices=["cnn", "pe"], required=True)
    pm.add_argument("--freq", type=float, required=True)
    pm.add_argument("--azimuths", type=int, default=72)
    pm.add_argument("--radius-km", type=float, default=2000.0)
    pm.add_argument("--checkpoint")
    pm.add_argument("--config", help="JSON with climatology/gravity_waves/solver")
    pm.add_argument("--seed", type=int, default=0)
    pm.add_argument("--out", required=True)
    pm.add_argument("--compare-to", help="existing map container to diff against")
    pm.set_defaults(func=cmd_map)
    return p


def _fail(exc, code):
    sys.stderr.write(json.dumps({"error": type(exc).__name__, "message": str(exc),
                                 "exit_code": code}) + "\n")
    return code


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except FileNotFoundError as exc:
        return _fail(exc, EXIT_MISSING)
    except (NumericalBlowupError, PadeConstructionError, FloatingPointError) as exc:
        return _fail(exc, EXIT_NUMERIC)
    except (ContainerError, KeyError) as exc:
        return _fail(exc, EXIT_DATA)
    except (json.JSONDecodeError,) as exc:
        return _fail(exc, EXIT_CONFIG)
    except ValueError as exc:
        return _fail(exc, EXIT_DATA)
    except TypeError as exc:
        return _fail(exc, EXIT_CONFIG)


if __name__ == "__main__":
    sys.exit(main())
