"""Seeded experiment sweeps: generate, measure, estimate, aggregate.

Every cell of a sweep is fully determined by the spec and its derived
seeds: the ground-truth draw depends on (base_seed, n, rank, seed index)
but not on the shot count, so M-sweeps reuse one truth per seed; the
measurement noise seed additionally folds in M.  Completed cells persist
as JSON files and are skipped on re-run; the aggregated CSV is rebuilt
from cell files in sorted order, so its numeric content is independent of
scheduling.
"""

from __future__ import annotations

import csv
import hashlib
import json
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from . import __version__
from .estimator import EstimatorConfig, pgd, preset_schedule, psgd, recovery_error
from .povm import ProductPOVM, gamma
from .sampling import sample_sequential
from .states import MPDOGenConfig, random_mpdo

CSV_COLUMNS = ["n", "shots", "rank", "init", "algorithm", "seed_index",
               "state_seed", "noise_seed", "init_error", "final_error",
               "final_loss", "iterations", "converged", "wall_ms",
               "gamma_beam"]

MEDIAN_COLUMNS = ["n", "shots", "rank", "init", "algorithm",
                  "median_final_error", "median_init_error", "seeds",
                  "all_converged"]


@dataclass
class ExperimentSpec:
    """Sweep axes and per-cell settings; every axis must be non-empty."""

    n_values: list
    m_values: list = field(default_factory=lambda: [3000])
    rank_values: list = field(default_factory=lambda: [1])
    init_modes: list = field(default_factory=lambda: ["random"])
    algorithms: list = field(default_factory=lambda: ["pgd"])
    seeds: int = 3
    base_seed: int = 0
    povm: str = "local-sic"
    purity: int = 10
    record_gamma: bool = False
    estimator_overrides: dict = field(default_factory=dict)

    def __post_init__(self):
        for name in ("n_values", "m_values", "rank_values", "init_modes",
                     "algorithms"):
            if not getattr(self, name):
                raise ValueError(f"{name} must be non-empty")
        if self.seeds < 1:
            raise ValueError("seeds must be >= 1")
        for alg in self.algorithms:
            if alg not in ("pgd", "psgd"):
                raise ValueError(f"unknown algorithm {alg!r}")
        for mode in self.init_modes:
            if mode not in ("random", "spectral"):
                raise ValueError(f"unknown init mode {mode!r}")
        if self.povm != "local-sic":
            raise ValueError("only the bundled local-sic POVM is supported")

    def to_json_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_json_dict(cls, data: dict) -> "ExperimentSpec":
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown spec fields: {sorted(unknown)}")
        return cls(**data)

    def sha256(self) -> str:
        blob = json.dumps(self.to_json_dict(), sort_keys=True)
        return hashlib.sha256(blob.encode()).hexdigest()


@dataclass
class ResultRow:
    n: int
    shots: int
    rank: int
    init: str
    algorithm: str
    seed_index: int
    state_seed: int
    noise_seed: int
    init_error: float
    final_error: float
    final_loss: float
    iterations: int
    converged: bool
    wall_ms: float
    gamma_beam: float = float("nan")


def derived_seed(base_seed: int, *parts) -> int:
    """Deterministic 63-bit seed from the base seed and cell coordinates."""
    blob = json.dumps([base_seed, *parts], sort_keys=True)
    digest = hashlib.sha256(blob.encode()).digest()
    return int.from_bytes(digest[:8], "big") >> 1


def cell_key(cell: dict) -> str:
    blob = json.dumps(cell, sort_keys=True)
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


def iter_cells(spec: ExperimentSpec):
    for n in spec.n_values:
        for m in spec.m_values:
            for rank in spec.rank_values:
                for init in spec.init_modes:
                    for alg in spec.algorithms:
                        for seed_index in range(spec.seeds):
                            yield {"n": int(n), "shots": int(m),
                                   "rank": int(rank), "init": init,
                                   "algorithm": alg,
                                   "seed_index": seed_index}


def _truth_state(spec: ExperimentSpec, cell: dict, state_seed: int):
    rank = cell["rank"]
    kappa = int(round(np.sqrt(rank)))
    if kappa * kappa != rank:
        kappa = int(np.ceil(np.sqrt(rank)))
    return random_mpdo(MPDOGenConfig(n=cell["n"], kappa=kappa,
                                     purity=spec.purity, seed=state_seed))


def run_cell(spec: ExperimentSpec, cell: dict) -> ResultRow:
    n, m, rank = cell["n"], cell["shots"], cell["rank"]
    state_seed = derived_seed(spec.base_seed, "state", n, rank,
                              cell["seed_index"])
    noise_seed = derived_seed(spec.base_seed, "noise", n, rank, m,
                              cell["seed_index"])
    init_seed = derived_seed(spec.base_seed, "init", n, rank, m,
                             cell["init"], cell["algorithm"],
                             cell["seed_index"])
    povm = ProductPOVM.local_sic(n)
    truth = _truth_state(spec, cell, state_seed)
    record = sample_sequential(povm, truth, m, seed=noise_seed)
    schedule = preset_schedule(cell["algorithm"], cell["init"], rank)
    params = dict(ranks=rank, init=cell["init"], init_seed=init_seed,
                  record_trace=False, **schedule)
    params.update(spec.estimator_overrides)
    config = EstimatorConfig(**params)
    runner = pgd if cell["algorithm"] == "pgd" else psgd
    estimate = runner(record, povm, config, truth=truth)
    init_error = estimate.trace_log[0].error
    final_error = recovery_error(estimate.state, truth)
    gamma_beam = float("nan")
    if spec.record_gamma:
        gamma_beam = gamma(povm, truth, method="beam", beam_width=64).gamma
    wall_ms = estimate.trace_log[-1].wall_ms if estimate.trace_log else 0.0
    return ResultRow(n=n, shots=m, rank=rank, init=cell["init"],
                     algorithm=cell["algorithm"],
                     seed_index=cell["seed_index"], state_seed=state_seed,
                     noise_seed=noise_seed, init_error=init_error,
                     final_error=final_error,
                     final_loss=estimate.metadata["final_loss"],
                     iterations=estimate.iterations_run,
                     converged=estimate.converged_reason == "loss_plateau",
                     wall_ms=wall_ms, gamma_beam=gamma_beam)


def _fmt(value) -> str:
    if isinstance(value, bool):
        return "1" if value else "0"
    if isinstance(value, float):
        return "%.12g" % value
    return str(value)


def _provenance(spec: ExperimentSpec) -> str:
    return f"# mpoqst {__version__} spec_sha256={spec.sha256()} seed={spec.base_seed}"


def _write_results_csv(spec: ExperimentSpec, rows: list, path: str) -> None:
    rows = sorted(rows, key=lambda r: (r.n, r.shots, r.rank, r.init,
                                       r.algorithm, r.seed_index))
    with open(path, "w", newline="") as fh:
        fh.write(_provenance(spec) + "\n")
        writer = csv.writer(fh)
        writer.writerow(CSV_COLUMNS)
        for row in rows:
            writer.writerow([_fmt(getattr(row, c)) for c in CSV_COLUMNS])


def aggregate_medians(rows: list) -> list:
    groups = {}
    for row in rows:
        groups.setdefault((row.n, row.shots, row.rank, row.init,
                           row.algorithm), []).append(row)
    out = []
    for key in sorted(groups):
        cell_rows = groups[key]
        out.append({
            "n": key[0], "shots": key[1], "rank": key[2], "init": key[3],
            "algorithm": key[4],
            "median_final_error": float(np.median(
                [r.final_error for r in cell_rows])),
            "median_init_error": float(np.median(
                [r.init_error for r in cell_rows])),
            "seeds": len(cell_rows),
            "all_converged": all(r.converged for r in cell_rows),
        })
    return out


def _write_medians_csv(spec: ExperimentSpec, medians: list, path: str) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(_provenance(spec) + "\n")
        writer = csv.writer(fh)
        writer.writerow(MEDIAN_COLUMNS)
        for med in medians:
            writer.writerow([_fmt(med[c]) for c in MEDIAN_COLUMNS])


def _plot_medians(medians: list, out_dir: str) -> list:
    """SVG line plots of median error vs n and vs M (data-faithful, no
    interactivity).  Skipped silently if matplotlib is unavailable."""
    try:
        import matplotlib
        matplotlib.use("Agg")
        import matplotlib.pyplot as plt
        plt.rcParams["svg.hashsalt"] = "mpoqst"
    except ImportError:
        return []
    written = []

    def save_series(axis: str, fname: str):
        series = {}
        for med in medians:
            label = f"r={med['rank']} {med['init']} {med['algorithm']}"
            series.setdefault(label, []).append((med[axis],
                                                 med["median_final_error"]))
        if not any(len(pts) > 1 for pts in series.values()):
            return
        fig, ax = plt.subplots(figsize=(5, 3.5))
        for label in sorted(series):
            pts = sorted(series[label])
            ax.plot([p[0] for p in pts], [p[1] for p in pts],
                    marker="o", label=label)
        ax.set_xlabel("number of sites n" if axis == "n" else "shots M")
        ax.set_ylabel("median recovery error")
        ax.set_yscale("log")
        if axis == "shots":
            ax.set_xscale("log")
        ax.legend(fontsize=7)
        fig.tight_layout()
        path = os.path.join(out_dir, fname)
        fig.savefig(path, metadata={"Date": None})
        plt.close(fig)
        written.append(path)

    axes_n = {med["n"] for med in medians}
    axes_m = {med["shots"] for med in medians}
    if len(axes_n) > 1:
        save_series("n", "error_vs_n.svg")
    if len(axes_m) > 1:
        save_series("shots", "error_vs_m.svg")
    return written


def run_experiment(spec: ExperimentSpec, out_dir: str,
                   threads: int = 1) -> dict:
    """Execute all cells (skipping completed ones), then write results.csv,
    medians.csv, provenance.json, and SVG plots into out_dir."""
    os.makedirs(out_dir, exist_ok=True)
    cells_dir = os.path.join(out_dir, "cells")
    os.makedirs(cells_dir, exist_ok=True)
    cells = list(iter_cells(spec))
    pending = []
    for cell in cells:
        path = os.path.join(cells_dir, cell_key(cell) + ".json")
        if not os.path.exists(path):
            pending.append((cell, path))

    def work(item):
        cell, path = item
        row = run_cell(spec, cell)
        tmp = path + ".tmp"
        with open(tmp, "w") as fh:
            json.dump({"cell": cell, "row": asdict(row)}, fh)
        os.replace(tmp, path)
        return row

    if threads > 1 and len(pending) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            list(pool.map(work, pending))
    else:
        for item in pending:
            work(item)

    rows = []
    for cell in cells:
        path = os.path.join(cells_dir, cell_key(cell) + ".json")
        with open(path) as fh:
            data = json.load(fh)
        rows.append(ResultRow(**data["row"]))
    results_path = os.path.join(out_dir, "results.csv")
    _write_results_csv(spec, rows, results_path)
    medians = aggregate_medians(rows)
    medians_path = os.path.join(out_dir, "medians.csv")
    _write_medians_csv(spec, medians, medians_path)
    with open(os.path.join(out_dir, "provenance.json"), "w") as fh:
        json.dump({"version": __version__, "spec_sha256": spec.sha256(),
                   "seed": spec.base_seed,
                   "spec": spec.to_json_dict()}, fh, indent=2,
                  sort_keys=True)
    plots = _plot_medians(medians, out_dir)
    return {"rows": rows, "medians": medians, "results_csv": results_path,
            "medians_csv": medians_path, "plots": plots,
            "cells_run": len(pending), "cells_total": len(cells)}
