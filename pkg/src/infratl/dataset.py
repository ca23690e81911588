"""Dataset generation, normalization, and cross-validation splits.

Generation is embarrassingly parallel over samples. Every sample owns an RNG
substream spawned deterministically from the master seed by sample index, so
the produced manifest is bit-identical for any worker count. File names inside
the manifest are relative to the dataset directory.
"""

from __future__ import annotations

import dataclasses
import json
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .atmosphere import (AtmosphericSlice, ClimatologySpec, GravityWaveSpec,
                         build_slice, classify_downwind, save_slice)
from .container import read_container
from .pe_solver import NumericalBlowupError, SolverConfig, save_tl

FREQ_GRID_HZ = np.round(np.arange(1, 33) * 0.1, 10)   # 0.1, 0.2, ..., 3.2

WORKERS_ENV_VAR = "INFRATL_WORKERS"


def default_workers():
    try:
        return max(1, int(os.environ.get(WORKERS_ENV_VAR, "1")))
    except ValueError:
        return 1


@dataclass
class SpecSampler:
    """Uniform ranges for randomized climatology / gravity-wave parameters."""

    ground_T: tuple = (278.0, 298.0)
    tropo_lapse: tuple = (5.5, 7.0)
    strato_jet_amp: tuple = (-65.0, 65.0)
    strato_jet_alt: tuple = (45.0, 70.0)
    strato_jet_width: tuple = (8.0, 16.0)
    tropo_jet_amp: tuple = (-35.0, 35.0)
    thermo_rise_scale: tuple = (3.0, 7.0)
    meridional_amp: tuple = (-15.0, 15.0)
    range_trend: tuple = (-0.15, 0.15)
    gw_rms_at_20km: tuple = (0.5, 3.0)
    gw_horizontal_corr_km: tuple = (300.0, 800.0)

    def sample(self, rng):
        u = lambda lo_hi: float(rng.uniform(*lo_hi))
        clim = ClimatologySpec(
            ground_T=u(self.ground_T),
            tropo_lapse=u(self.tropo_lapse),
            strato_jet_amp=u(self.strato_jet_amp),
            strato_jet_alt=u(self.strato_jet_alt),
            strato_jet_width=u(self.strato_jet_width),
            tropo_jet_amp=u(self.tropo_jet_amp),
            thermo_rise_scale=u(self.thermo_rise_scale),
            meridional_amp=u(self.meridional_amp),
            range_trend=u(self.range_trend),
            rng_seed=int(rng.integers(2 ** 63)),
        )
        gw = GravityWaveSpec(
            rms_at_20km=u(self.gw_rms_at_20km),
            horizontal_corr_km=u(self.gw_horizontal_corr_km),
            rng_seed=int(rng.integers(2 ** 63)),
        )
        azimuth = float(rng.uniform(0.0, 360.0))
        return clim, gw, azimuth

    def to_dict(self):
        return {k: list(v) for k, v in dataclasses.asdict(self).items()}

    @classmethod
    def from_dict(cls, d):
        return cls(**{k: tuple(v) for k, v in d.items()})


def draw_sample_params(child_seed, sampler, freq_grid):
    """Specs, azimuth, and frequency for one sample's RNG substream."""
    rng = np.random.default_rng(child_seed)
    clim, gw, azimuth = sampler.sample(rng)
    freq = float(rng.choice(freq_grid))
    return clim, gw, azimuth, freq


def _generate_one(args):
    """Build, classify, and label one sample. Module-level for pickling."""
    index, out_dir, master_seed, child_seed, sampler, solver, freq_grid = args
    clim, gw, azimuth, freq = draw_sample_params(child_seed, sampler, freq_grid)

    slc = build_slice(clim, gw, azimuth)
    score, cls = classify_downwind(slc)
    slice_file = f"slice_{index:05d}.itl1"
    save_slice(Path(out_dir) / slice_file, slc)

    record = {
        "index": index,
        "seed_lineage": {"master_seed": master_seed, "spawn_index": index},
        "climatology": clim.to_dict(),
        "gravity_waves": gw.to_dict(),
        "azimuth_deg": azimuth,
        "frequency_hz": freq,
        "downwind_score": score,
        "downwind_class": cls,
        "slice_file": slice_file,
    }
    try:
        curve = solver.run(slc, freq)
    except NumericalBlowupError as exc:
        record.update({"status": "failed", "label_file": None,
                       "fail_reason": f"pe blowup at {exc.range_reached_m / 1e3:.1f} km"})
        return record
    label_file = f"tl_{index:05d}.itl1"
    save_tl(Path(out_dir) / label_file, curve,
            meta={"slice_file": slice_file, "index": index})
    record.update({"status": "ok", "label_file": label_file})
    return record


def generate(out_dir, n, sampler=None, solver=None, freq_grid=None, workers=None,
             master_seed=0, progress=False):
    """Generate ``n`` labeled samples under ``out_dir``; returns the manifest path.

    Samples with PE blowups are kept in the manifest flagged ``failed`` (with
    the reason) and are excluded from training/evaluation loading.
    """
    if n < 1:
        raise ValueError("need at least one sample")
    sampler = sampler or SpecSampler()
    solver = solver or SolverConfig()
    freq_grid = np.asarray(freq_grid if freq_grid is not None else FREQ_GRID_HZ, dtype=float)
    workers = workers if workers is not None else default_workers()
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)

    children = np.random.SeedSequence(master_seed).spawn(n)
    tasks = [(i, str(out), master_seed, children[i], sampler, solver, freq_grid)
             for i in range(n)]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            records = list(pool.map(_generate_one, tasks, chunksize=1))
    else:
        records = []
        for t in tasks:
            records.append(_generate_one(t))
            if progress and (len(records) % 25 == 0 or len(records) == n):
                print(f"  labeled {len(records)}/{n}")
    records.sort(key=lambda r: r["index"])

    manifest = {
        "kind": "dataset_manifest",
        "master_seed": master_seed,
        "n": n,
        "freq_grid_hz": [float(f) for f in freq_grid],
        "sampler": sampler.to_dict(),
        "solver": solver.to_dict(),
        "records": records,
    }
    manifest_path = out / "manifest.json"
    with open(manifest_path, "w") as fh:
        json.dump(manifest, fh, sort_keys=True, indent=2)
    return manifest_path


def load_manifest(path):
    with open(path) as fh:
        manifest = json.load(fh)
    if manifest.get("kind") != "dataset_manifest":
        raise ValueError(f"{path}: not a dataset manifest")
    return manifest


def ok_records(manifest):
    return [r for r in manifest["records"] if r["status"] == "ok"]


def load_samples(manifest_path, positions=None):
    """Load sample arrays for the given positions into the ok-record list.

    Returns a dict with float32 ``slices`` (N, 1000, 40, 1), ``freqs`` (N,),
    ``labels`` (N, 400), ``scores`` (N,), and the selected ``records``.
    """
    manifest_path = Path(manifest_path)
    base = manifest_path.parent
    manifest = load_manifest(manifest_path)
    records = ok_records(manifest)
    if positions is None:
        positions = np.arange(len(records))
    chosen = [records[int(p)] for p in positions]
    slices = np.empty((len(chosen), 1000, 40, 1), dtype=np.float32)
    labels = np.empty((len(chosen), 400), dtype=np.float32)
    freqs = np.empty(len(chosen), dtype=np.float32)
    scores = np.empty(len(chosen), dtype=np.float64)
    for i, rec in enumerate(chosen):
        arrays, _ = read_container(base / rec["slice_file"])
        slices[i, :, :, 0] = arrays["c_ratio"]
        arrays, _ = read_container(base / rec["label_file"])
        labels[i] = arrays["tl_db"]
        freqs[i] = rec["frequency_hz"]
        scores[i] = rec["downwind_score"]
    return {"slices": slices, "freqs": freqs, "labels": labels, "scores": scores,
            "records": chosen}


# ---------------------------------------------------------------------------
# normalization

@dataclass
class Normalizer:
    """Scalar z-score statistics fitted on a training split only."""

    in_mean: float
    in_std: float
    label_mean: float
    label_std: float
    freq_mean: float
    freq_std: float
    fitted_on: str = ""

    @classmethod
    def fit(cls, slices, freqs, labels, fitted_on=""):
        stats = []
        for arr in (slices, freqs, labels):
            a = np.asarray(arr, dtype=np.float64)
            mean = float(a.mean())
            std = float(a.std())
            if std <= 0.0:
                raise ValueError("zero variance; cannot fit a z-score normalizer")
            stats.append((mean, std))
        (im, istd), (fm, fstd), (lm, lstd) = stats
        return cls(in_mean=im, in_std=istd, label_mean=lm, label_std=lstd,
                   freq_mean=fm, freq_std=fstd, fitted_on=fitted_on)

    def apply_inputs(self, slices):
        return ((slices - self.in_mean) / self.in_std).astype(np.float32)

    def apply_freqs(self, freqs):
        return ((freqs - self.freq_mean) / self.freq_std).astype(np.float32)

    def apply_labels(self, labels):
        return ((labels - self.label_mean) / self.label_std).astype(np.float32)

    def invert_labels(self, normalized):
        return normalized * self.label_std + self.label_mean

    def to_dict(self):
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, d):
        return cls(**d)


# ---------------------------------------------------------------------------
# splits

@dataclass
class SplitSpec:
    seed: int = 0
    fractions: tuple = (0.70, 0.20, 0.10)
    n_runs: int = 8

    def validate(self):
        if abs(sum(self.fractions) - 1.0) > 1e-9:
            raise ValueError("split fractions must sum to 1")
        if len(self.fractions) != 3:
            raise ValueError("expected (train, val, test) fractions")
        return self


def split_indices(n, spec=None):
    """Independent random (train, val, test) partitions of range(n).

    Each run permutes with its own seed and cuts at the configured fractions;
    the three parts are disjoint and exhaustive.
    """
    spec = (spec or SplitSpec()).validate()
    if n < 10:
        raise ValueError("need at least 10 samples to split")
    runs = []
    for run in range(spec.n_runs):
        rng = np.random.default_rng((spec.seed, run))
        perm = rng.permutation(n)
        n_train = int(n * spec.fractions[0])
        n_val = int(n * spec.fractions[1])
        runs.append({
            "train": np.sort(perm[:n_train]),
            "val": np.sort(perm[n_train:n_train + n_val]),
            "test": np.sort(perm[n_train + n_val:]),
        })
    return runs
