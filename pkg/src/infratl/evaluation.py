"""Error metrics and reports: per-sample mean RMSE over 4000 km in dB,
frequency-band statistics, error histograms, and downwind/upwind breakdowns."""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .container import write_container

# Operational grouping of the 32 grid frequencies into 12 third-octave-style
# bands; edges are inclusive on the 0.1 Hz grid.
BAND_EDGES = [
    (0.1, 0.1), (0.2, 0.2), (0.3, 0.3), (0.4, 0.4), (0.5, 0.5),
    (0.6, 0.7), (0.8, 0.9), (1.0, 1.1), (1.2, 1.5), (1.6, 1.9),
    (2.0, 2.4), (2.5, 3.2),
]

HIST_BIN_DB = 2.5


@dataclass(frozen=True)
class FrequencyBand:
    label: str
    f_low: float
    f_high: float


BANDS = [FrequencyBand(f"{lo:.1f}-{hi:.1f}", lo, hi) for lo, hi in BAND_EDGES]


def band_assign(f):
    """Band containing frequency ``f``; snaps to the 0.1 Hz grid first.

    Frequencies that round outside [0.1, 3.2] Hz are rejected.
    """
    snapped = round(float(f) * 10.0) / 10.0
    if not 0.1 - 1e-9 <= snapped <= 3.2 + 1e-9:
        raise ValueError(f"frequency {f} Hz is off the 0.1-3.2 Hz grid")
    for band in BANDS:
        if band.f_low - 1e-9 <= snapped <= band.f_high + 1e-9:
            return band
    raise ValueError(f"frequency {f} Hz not covered by any band")   # pragma: no cover


def sample_rmse_db(pred, label):
    """Root-mean-square dB error of one de-normalized 400-point curve pair."""
    pred = np.asarray(pred, dtype=np.float64)
    label = np.asarray(label, dtype=np.float64)
    if pred.shape != (400,) or label.shape != (400,):
        raise ValueError(f"expected length-400 curves, got {pred.shape} and {label.shape}")
    return float(np.sqrt(np.mean((pred - label) ** 2)))


@dataclass
class EvalReport:
    band_stats: list                  # per band: dict(label, count, q1, mean, q3)
    overall_mean: float
    n_samples: int
    hist_edges: list                  # len(bins)+1 edges in dB
    hist_counts: list
    hist_downwind_pct: list           # % of each bin's cases that are downwind
    hist_upwind_pct: list
    sort_order: list                  # sample order, descending downwind score
    rmse_db: list = field(default_factory=list)

    def to_dict(self):
        return {
            "n_samples": self.n_samples,
            "overall_mean_rmse_db": self.overall_mean,
            "bands": self.band_stats,
            "histogram": {
                "bin_db": HIST_BIN_DB,
                "edges_db": self.hist_edges,
                "counts": self.hist_counts,
                "downwind_pct": self.hist_downwind_pct,
                "upwind_pct": self.hist_upwind_pct,
            },
            "sort_order_by_downwind_score": self.sort_order,
        }

    def to_json(self, indent=2):
        return json.dumps(self.to_dict(), indent=indent, sort_keys=True)

    def format_table(self):
        """Aligned text table mirroring the per-band error layout."""
        cols = [b["label"] for b in self.band_stats]
        rows = [
            ("number of cases", [f"{b['count']}" for b in self.band_stats]),
            ("q1 mean-RMSE-4000-km (dB)", [f"{b['q1']:.1f}" for b in self.band_stats]),
            ("average mean-RMSE-4000-km (dB)", [f"{b['mean']:.1f}" for b in self.band_stats]),
            ("q3 mean-RMSE-4000-km (dB)", [f"{b['q3']:.1f}" for b in self.band_stats]),
        ]
        label_w = max(len(r[0]) for r in rows)
        col_w = max(9, max(len(c) for c in cols) + 2)
        lines = ["Frequencies (Hz)".ljust(label_w) + "".join(c.rjust(col_w) for c in cols)]
        for name, vals in rows:
            lines.append(name.ljust(label_w) + "".join(v.rjust(col_w) for v in vals))
        lines.append(f"overall mean RMSE: {self.overall_mean:.2f} dB over {self.n_samples} samples")
        return "\n".join(lines)


def report(preds, labels, freqs, downwind_scores):
    """Full evaluation over aligned prediction/label/frequency/score arrays."""
    preds = np.asarray(preds, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.float64)
    freqs = np.asarray(freqs, dtype=np.float64)
    scores = np.asarray(downwind_scores, dtype=np.float64)
    n = len(freqs)
    if n == 0:
        raise ValueError("empty evaluation input")
    if not (len(preds) == len(labels) == len(scores) == n):
        raise ValueError("misaligned evaluation arrays")

    rmse = np.sqrt(np.mean((preds - labels) ** 2, axis=1))
    band_labels = np.array([band_assign(f).label for f in freqs])

    band_stats = []
    for band in BANDS:
        sel = rmse[band_labels == band.label]
        if sel.size:
            stats = {"label": band.label, "count": int(sel.size),
                     "q1": float(np.quantile(sel, 0.25)),
                     "mean": float(sel.mean()),
                     "q3": float(np.quantile(sel, 0.75))}
        else:
            stats = {"label": band.label, "count": 0, "q1": float("nan"),
                     "mean": float("nan"), "q3": float("nan")}
        band_stats.append(stats)

    n_bins = max(1, int(np.ceil((rmse.max() + 1e-12) / HIST_BIN_DB)))
    edges = np.arange(n_bins + 1) * HIST_BIN_DB
    which = np.minimum((rmse / HIST_BIN_DB).astype(int), n_bins - 1)
    counts = np.bincount(which, minlength=n_bins)
    downwind = scores >= 1.0
    down_pct, up_pct = [], []
    for b in range(n_bins):
        in_bin = which == b
        if counts[b]:
            down_pct.append(100.0 * float(np.mean(downwind[in_bin])))
            up_pct.append(100.0 - down_pct[-1])
        else:
            down_pct.append(0.0)
            up_pct.append(0.0)

    order = np.argsort(-scores, kind="stable")
    return EvalReport(
        band_stats=band_stats,
        overall_mean=float(rmse.mean()),
        n_samples=n,
        hist_edges=[float(e) for e in edges],
        hist_counts=[int(c) for c in counts],
        hist_downwind_pct=down_pct,
        hist_upwind_pct=up_pct,
        sort_order=[int(i) for i in order],
        rmse_db=[float(v) for v in rmse],
    )


def export_report(rep, preds, labels, out_dir):
    """Write the report (JSON + text table) and score-sorted matrices.

    Matrices go out both as ITL1 grids and as CSV for external plotting.
    """
    from pathlib import Path
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "report.json").write_text(rep.to_json())
    (out / "report.txt").write_text(rep.format_table() + "\n")
    order = np.asarray(rep.sort_order, dtype=int)
    sorted_preds = np.asarray(preds)[order]
    sorted_labels = np.asarray(labels)[order]
    write_container(out / "sorted_predictions.itl1", {"tl_db": sorted_preds},
                    {"kind": "sorted_matrix", "rows": "descending downwind score"})
    write_container(out / "sorted_labels.itl1", {"tl_db": sorted_labels},
                    {"kind": "sorted_matrix", "rows": "descending downwind score"})
    np.savetxt(out / "sorted_predictions.csv", sorted_preds, delimiter=",", fmt="%.3f")
    np.savetxt(out / "sorted_labels.csv", sorted_labels, delimiter=",", fmt="%.3f")
    return out / "report.json"
