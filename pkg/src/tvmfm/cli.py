"""Command-line front end.

Three subcommands:

``simulate``
    Run Monte Carlo replications of a configured DGP + estimation pipeline
    and write per-rep records plus a summary table.
``estimate``
    Ingest a CSV matrix series, estimate time-varying loadings and factors
    (with optional preprocessing, switch repair, and global varimax), and
    write tidy CSV outputs.
``diagnose``
    Emit eigenvalue paths and switch statistics with threshold lines as
    plot-ready tidy CSV.

All inputs and outputs are long-form CSV; the config file is TOML.  Exit
codes: 0 success, 2 input error, 3 internal numerical error.
"""

from __future__ import annotations

import argparse
import csv
import math
import os
import sys
import warnings
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # pragma: no cover - python < 3.11
    import tomli as tomllib

from .estimation import (
    FactorPath,
    LoadingPath,
    MatrixSeries,
    default_k_max,
    estimate_factors,
    estimate_loadings,
    estimate_rank,
)
from .kernels import ROT_SCALE, LEFT, KernelSpec, rot_bandwidth
from .metrics import avg_space_distance, classify_regions
from .simulate import COALESCING, ExperimentConfig, generate
from .smoothing import apply_global_rotation, detect_switches, repair_and_smooth

THREADS_ENV = "TVMFM_THREADS"
FLOAT_FMT = "%.17g"


class InputError(Exception):
    """User-facing input or configuration problem (exit code 2)."""


# ---------------------------------------------------------------------------
# CSV ingest / export


def read_series_csv(path) -> MatrixSeries:
    """Read a long-form matrix series: header t,i,j,value, all cells present."""
    try:
        fh = open(path, newline="", encoding="utf-8")
    except OSError as exc:
        raise InputError(f"cannot open {path}: {exc}") from exc
    with fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != ["t", "i", "j", "value"]:
            raise InputError(f"{path}: expected header t,i,j,value, "
                             f"got {header}")
        ts, is_, js, vals = [], [], [], []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 4:
                raise InputError(f"{path}:{lineno}: expected 4 fields, "
                                 f"got {len(row)}")
            try:
                ts.append(int(row[0]))
                is_.append(int(row[1]))
                js.append(int(row[2]))
                vals.append(float(row[3]))
            except ValueError as exc:
                raise InputError(f"{path}:{lineno}: {exc}") from exc
    if not ts:
        raise InputError(f"{path}: no data rows")
    t = np.array(ts)
    i = np.array(is_)
    j = np.array(js)
    v = np.array(vals)
    if not np.all(np.isfinite(v)):
        raise InputError(f"{path}: non-finite values present")
    T, p, q = t.max(), i.max(), j.max()
    if t.min() < 1 or i.min() < 1 or j.min() < 1:
        raise InputError(f"{path}: indices must be 1-based positive")
    if len(v) != T * p * q:
        raise InputError(f"{path}: expected {T * p * q} rows for a complete "
                         f"{T}x{p}x{q} series, got {len(v)}")
    data = np.full((T, p, q), np.nan)
    data[t - 1, i - 1, j - 1] = v
    if np.any(np.isnan(data)):
        raise InputError(f"{path}: duplicate or missing (t,i,j) cells")
    return MatrixSeries(data=data)


def write_series_csv(path, series: MatrixSeries) -> None:
    """Write a matrix series in long form, lossless at 17 significant digits."""
    T, p, q = series.T, series.p, series.q
    with open(path, "w", newline="\n", encoding="utf-8") as fh:
        fh.write("t,i,j,value\n")
        for t in range(T):
            for i in range(p):
                for j in range(q):
                    fh.write(f"{t + 1},{i + 1},{j + 1},"
                             + FLOAT_FMT % series.data[t, i, j] + "\n")


def _write_rows(path, header: list[str], rows) -> None:
    with open(path, "w", newline="\n", encoding="utf-8") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(FLOAT_FMT % x if isinstance(x, float) else str(x)
                              for x in row) + "\n")


# ---------------------------------------------------------------------------
# Config


def _load_config(path) -> dict:
    try:
        with open(path, "rb") as fh:
            return tomllib.load(fh)
    except OSError as exc:
        raise InputError(f"cannot open config {path}: {exc}") from exc
    except tomllib.TOMLDecodeError as exc:
        raise InputError(f"invalid config {path}: {exc}") from exc


def _experiment_config(cfg: dict) -> ExperimentConfig:
    section = cfg.get("experiment", {})
    allowed = set(ExperimentConfig.__dataclass_fields__)
    unknown = set(section) - allowed
    if unknown:
        raise InputError(f"unknown [experiment] keys: {sorted(unknown)}")
    try:
        return ExperimentConfig(**section)
    except (TypeError, ValueError) as exc:
        raise InputError(f"invalid [experiment] config: {exc}") from exc


class EstimationSettings:
    """Estimation options shared by the subcommands."""

    def __init__(self, cfg: dict):
        section = dict(cfg.get("estimation", {}))
        self.kernel = section.pop("kernel", "epanechnikov")
        self.c = float(section.pop("c", ROT_SCALE))
        self.h = section.pop("h", None)
        self.h_star = section.pop("h_star", None)
        self.rank = section.pop("rank", None)
        self.k_max = section.pop("k_max", None)
        self.varimax_window = section.pop("varimax_window", None)
        self.rolling_avg = int(section.pop("rolling_avg", 0))
        self.smooth = bool(section.pop("smooth", True))
        self.top_eigvals = int(section.pop("top_eigvals", 6))
        if section:
            raise InputError(f"unknown [estimation] keys: {sorted(section)}")
        if self.rank is not None:
            if (not isinstance(self.rank, list) or len(self.rank) != 2
                    or not all(isinstance(x, int) for x in self.rank)):
                raise InputError("rank must be a pair of integers [k, r]")
        if self.rolling_avg < 0:
            raise InputError("rolling_avg must be >= 0")

    def spec(self, n_cross: int, T: int) -> KernelSpec:
        h = self.h if self.h is not None else rot_bandwidth(n_cross, T, self.c)
        return KernelSpec(self.kernel, float(h))

    def spec_star(self, n_cross: int, T: int) -> KernelSpec:
        if self.h_star is not None:
            h = float(self.h_star)
        else:
            # one-sided estimators have roughly double the variance of the
            # two-sided one, so the default window is twice as wide
            h = 2.0 * rot_bandwidth(n_cross, T, self.c)
        return KernelSpec(self.kernel, h, LEFT)


def _out_dir(cfg: dict, override=None) -> Path:
    out = Path(override) if override else Path(cfg.get("output", {}).get("dir", "."))
    out.mkdir(parents=True, exist_ok=True)
    return out


def _n_threads() -> int:
    raw = os.environ.get(THREADS_ENV)
    if raw:
        try:
            n = int(raw)
        except ValueError as exc:
            raise InputError(f"{THREADS_ENV} must be an integer") from exc
        if n < 1:
            raise InputError(f"{THREADS_ENV} must be >= 1")
        return n
    return os.cpu_count() or 1


# ---------------------------------------------------------------------------
# Preprocessing


def rolling_average(series: MatrixSeries, window: int) -> MatrixSeries:
    """Trailing moving average; early windows shrink to the available history."""
    if window <= 1:
        return series
    data = series.data
    csum = np.cumsum(data, axis=0)
    out = np.empty_like(data)
    for t in range(series.T):
        lo = max(0, t - window + 1)
        total = csum[t] - (csum[lo - 1] if lo > 0 else 0.0)
        out[t] = total / (t - lo + 1)
    return MatrixSeries(data=out)


# ---------------------------------------------------------------------------
# Shared estimation pipeline


def _select_ranks(series: MatrixSeries, settings: EstimationSettings
                  ) -> tuple[int, int]:
    if settings.rank is not None:
        k, r = settings.rank
        return int(k), int(r)
    spec_R = settings.spec(series.q, series.T)
    spec_C = settings.spec(series.p, series.T)
    kmax_p = settings.k_max or default_k_max(series.p)
    kmax_q = settings.k_max or default_k_max(series.q)
    R_full, C_full = estimate_loadings(series, spec_R, spec_C, 1, 1)
    k = estimate_rank(R_full.eigvals, kmax_p)
    r = estimate_rank(C_full.eigvals, kmax_q)
    return k, r


def _normalized_loadings(path: LoadingPath) -> np.ndarray:
    """Per-t, per-column rescaling so each column's abs-sum equals 1."""
    mats = path.mats
    denom = np.sum(np.abs(mats), axis=1, keepdims=True)
    if np.any(denom == 0):
        raise ValueError("cannot normalize an all-zero loading column")
    return mats / denom


def _write_loadings(out: Path, name: str, path: LoadingPath) -> None:
    mats = _normalized_loadings(path)
    rows = ((t + 1, i + 1, f + 1, float(mats[t, i, f]))
            for t in range(path.T)
            for i in range(path.n)
            for f in range(path.d))
    _write_rows(out / f"loadings_{name}.csv", ["t", "i", "factor", "value"], rows)


def _write_eigvals(out: Path, name: str, eigvals: np.ndarray, top: int) -> None:
    top = min(top, eigvals.shape[1])
    rows = ((t + 1, j + 1, float(eigvals[t, j]))
            for t in range(eigvals.shape[0]) for j in range(top))
    _write_rows(out / f"eigvals_{name}.csv", ["t", "factor", "value"], rows)


def _write_switch_stats(out: Path, name: str, diag) -> None:
    stats = diag.stats
    rows = []
    for i in range(stats.shape[0]):
        thr = float(diag.thresholds[i]) if diag.thresholds.size else math.nan
        iqr15 = 1.5 * _row_iqr(stats[i])
        q95 = float(diag.upper_q95[i]) if diag.upper_q95 is not None else math.nan
        for t in range(stats.shape[1]):
            rows.append((t + 1, i + 1, float(stats[i, t]), thr, iqr15, q95))
    _write_rows(out / f"switch_stats_{name}.csv",
                ["t", "i", "value", "threshold", "iqr15", "q95"], rows)


def _row_iqr(row: np.ndarray) -> float:
    vals = row[np.isfinite(row)]
    if not vals.size:
        return math.nan
    return float(np.quantile(vals, 0.75) - np.quantile(vals, 0.25))


def _write_factors(out: Path, factors: FactorPath) -> None:
    mats = factors.mats
    rows = ((t + 1, a + 1, b + 1, float(mats[t, a, b]))
            for t in range(mats.shape[0])
            for a in range(mats.shape[1])
            for b in range(mats.shape[2]))
    _write_rows(out / "factors.csv", ["t", "kf", "rf", "value"], rows)


def run_estimate_pipeline(series: MatrixSeries, settings: EstimationSettings,
                          out: Path) -> None:
    if settings.rolling_avg > 1:
        series = rolling_average(series, settings.rolling_avg)
    k, r = _select_ranks(series, settings)
    spec_R = settings.spec(series.q, series.T)
    spec_C = settings.spec(series.p, series.T)
    R_hat, C_hat = estimate_loadings(series, spec_R, spec_C, k, r)

    for name, path, spec_side, n_cross in (("R", R_hat, "row", series.q),
                                           ("C", C_hat, "column", series.p)):
        diag = detect_switches(series, settings.spec_star(n_cross, series.T),
                               path.d, side=spec_side)
        _write_switch_stats(out, name, diag)
        final = path
        if settings.smooth and path.d >= 2:
            final = repair_and_smooth(path, diag)
            window = settings.varimax_window
            final = apply_global_rotation(
                final, tuple(window) if window else None)
        _write_loadings(out, name, final)
        _write_eigvals(out, name, path.eigvals, settings.top_eigvals)
        if name == "R":
            R_final = final
        else:
            C_final = final
    factors = estimate_factors(series, R_final, C_final)
    _write_factors(out, factors)


# ---------------------------------------------------------------------------
# simulate


def _simulate_rep(config: ExperimentConfig, settings: EstimationSettings,
                  rep: int) -> dict:
    series, truth = generate(config, rep)
    spec_R = settings.spec(series.q, series.T)
    spec_C = settings.spec(series.p, series.T)
    k = truth["R"].shape[2]
    r = truth["C"].shape[2]
    R_hat, C_hat = estimate_loadings(series, spec_R, spec_C, k, r)
    rec = {
        "rep": rep,
        "dbar_R": avg_space_distance(R_hat, truth["R"]),
        "dbar_C": avg_space_distance(C_hat, truth["C"]),
        "k_hat": estimate_rank(R_hat.eigvals,
                               settings.k_max or default_k_max(series.p)),
        "r_hat": estimate_rank(C_hat.eigvals,
                               settings.k_max or default_k_max(series.q)),
    }
    if config.dgp == COALESCING:
        side = config.coalescing_side
        n_cross = series.q if side == "row" else series.p
        diag = detect_switches(series,
                               settings.spec_star(n_cross, series.T),
                               k if side == "row" else r, side=side)
        hits, fp = classify_regions(diag.regions, truth["points"], series.T)
        rec["tp"] = sum(1 for v in hits.values() if v > 0)
        rec["fp"] = fp
    return rec


def cmd_simulate(args) -> int:
    cfg = _load_config(args.config)
    config = _experiment_config(cfg)
    settings = EstimationSettings(cfg)
    out = _out_dir(cfg, args.out)
    n_threads = _n_threads()

    records: list[dict | None] = [None] * config.n_reps
    failures: list[tuple[int, str]] = []

    def run(rep):
        try:
            return rep, _simulate_rep(config, settings, rep), None
        except np.linalg.LinAlgError as exc:
            return rep, None, f"{type(exc).__name__}: {exc}"

    if n_threads > 1 and config.n_reps > 1:
        with ThreadPoolExecutor(max_workers=n_threads) as pool:
            results = list(pool.map(run, range(config.n_reps)))
    else:
        results = [run(rep) for rep in range(config.n_reps)]
    for rep, rec, err in sorted(results):
        if err is None:
            records[rep] = rec
        else:
            failures.append((rep, err))

    done = [r for r in records if r is not None]
    if not done:
        print("error: all replications failed", file=sys.stderr)
        return 3
    fields = list(done[0].keys())
    _write_rows(out / "reps.csv", fields,
                (tuple(rec[f] for f in fields) for rec in done))

    dbar_R = np.array([r["dbar_R"] for r in done])
    dbar_C = np.array([r["dbar_C"] for r in done])
    summary = [
        ("dbar_R", float(dbar_R.mean()), float(dbar_R.std(ddof=1)) if len(done) > 1 else 0.0),
        ("dbar_C", float(dbar_C.mean()), float(dbar_C.std(ddof=1)) if len(done) > 1 else 0.0),
    ]
    _write_rows(out / "summary.csv", ["metric", "mean", "sd"], summary)

    pairs: dict[tuple[int, int], int] = {}
    for rec in done:
        key = (rec["k_hat"], rec["r_hat"])
        pairs[key] = pairs.get(key, 0) + 1
    _write_rows(out / "rank_freq.csv", ["k_hat", "r_hat", "frequency"],
                ((k, r, n / len(done)) for (k, r), n in sorted(pairs.items())))

    for rep, err in failures:
        print(f"warning: rep {rep} failed: {err}", file=sys.stderr)
    if failures:
        print(f"warning: {len(failures)} of {config.n_reps} reps failed",
              file=sys.stderr)
    return 0


def cmd_estimate(args) -> int:
    cfg = _load_config(args.config) if args.config else {}
    settings = EstimationSettings(cfg)
    out = _out_dir(cfg, args.out)
    series = read_series_csv(args.data)
    run_estimate_pipeline(series, settings, out)
    return 0


def cmd_diagnose(args) -> int:
    cfg = _load_config(args.config) if args.config else {}
    settings = EstimationSettings(cfg)
    out = _out_dir(cfg, args.out)
    series = read_series_csv(args.data)
    if settings.rolling_avg > 1:
        series = rolling_average(series, settings.rolling_avg)
    spec_R = settings.spec(series.q, series.T)
    spec_C = settings.spec(series.p, series.T)
    R_full, C_full = estimate_loadings(series, spec_R, spec_C, 1, 1)
    _write_eigvals(out, "R", R_full.eigvals, settings.top_eigvals)
    _write_eigvals(out, "C", C_full.eigvals, settings.top_eigvals)
    for name, side, n_cross, n in (("R", "row", series.q, series.p),
                                   ("C", "column", series.p, series.q)):
        d = min(settings.top_eigvals, n)
        diag = detect_switches(series, settings.spec_star(n_cross, series.T),
                               d, side=side)
        _write_switch_stats(out, name, diag)
    return 0


# ---------------------------------------------------------------------------
# entry point


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="tvmfm",
        description="Time-varying matrix factor model estimation")
    sub = parser.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="run Monte Carlo replications")
    sim.add_argument("--config", required=True, help="TOML config file")
    sim.add_argument("--out", help="output directory (overrides config)")
    sim.set_defaults(func=cmd_simulate)

    est = sub.add_parser("estimate", help="estimate loadings from CSV data")
    est.add_argument("--data", required=True, help="long-form CSV input")
    est.add_argument("--config", help="TOML config file")
    est.add_argument("--out", help="output directory (overrides config)")
    est.set_defaults(func=cmd_estimate)

    diag = sub.add_parser("diagnose", help="emit eigenvalue and switch "
                                           "statistics for plotting")
    diag.add_argument("--data", required=True, help="long-form CSV input")
    diag.add_argument("--config", help="TOML config file")
    diag.add_argument("--out", help="output directory (overrides config)")
    diag.set_defaults(func=cmd_diagnose)
    return parser


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        return args.func(args)
    except InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (np.linalg.LinAlgError, ValueError, FloatingPointError) as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
