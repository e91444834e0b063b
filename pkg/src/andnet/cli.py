"""Command-line driver for the experiments.

Every mode turns a validated configuration into a list of per-trial records
and a dictionary of aggregates computed only from those records.  Reports
are written as CSV (records only) or JSON (records, aggregates and a
provenance block).  Apart from the timestamp and wall-clock fields of the
provenance block, a report is a pure function of its configuration.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__
from .and_constant import (
    ENUM_BUDGET,
    BudgetError,
    alphabet_bound,
    symbol_error_sweep,
)
from .and_time_varying import (
    MAX_BLOCK_LENGTH,
    calibrate,
    end_to_end_map,
    random_block,
    rate_curve,
    simulate_blocks,
)
from .channel_model import GainDistribution, sample_time_varying, stream_rng
from .direction_algebra import EnvelopeError
from .dof_analysis import (
    SCHEMES,
    MimoProfile,
    baseline_table,
    estimate_dof_slope,
    mimo_reduction,
    mimo_region_contains,
    multihop_dof,
)

MODES = ("diagonalize", "simulate-tv", "simulate-const", "dof-sweep", "baselines",
         "mimo-region", "multihop")
TIME_VARYING = ("diagonalize", "simulate-tv", "dof-sweep")
EXIT_OK, EXIT_VALIDATION, EXIT_BUDGET, EXIT_IO = 0, 2, 3, 4
K_MAX, N_MAX = 4, 3

DEFAULTS = {
    "mode": None,
    "k": 2,
    "n": 1,
    "epsilon": 0.1,
    "p_grid": None,
    "sigma2": 1.0,
    "trials": None,
    "seed": 0,
    "dist": "uniform:0.5,2",
    "out": "-",
    "format": "json",
    "jobs": 1,
    "calib_trials": 1000,
    "budget": ENUM_BUDGET,
    "k_max": 10,
    "m_s": None,
    "m_d": None,
    "m_v": None,
    "d": None,
    "layers": "",
}
DEFAULT_GRIDS = {
    "simulate-tv": [1e2, 1e4, 1e6, 1e8],
    "dof-sweep": [10.0**e for e in range(2, 9)],
    "simulate-const": [1e3, 1e4, 1e5, 1e6],
}
DEFAULT_TRIALS = {"diagonalize": 20, "simulate-tv": 100, "simulate-const": 1000,
                  "dof-sweep": 50}

CSV_COLUMNS = {
    "diagonalize": [
        ("draw", "draw"), ("erased", "erased"), ("reason", "reason"),
        ("log_det_T", "log_abs_det_T (nats)"), ("log_det_Tt", "log_abs_det_Tt (nats)"),
        ("max_offdiag", "max_offdiag (relative)"), ("max_diag_error", "max_diag_error (relative)"),
    ],
    "simulate-tv": [
        ("P", "P (power ratio)"), ("block", "block"), ("erased", "erased"), ("reason", "reason"),
        ("numerical", "numerical"), ("n_low_det", "n_low_det (steps)"),
        ("mse", "mse (power ratio)"), ("sum_rate", "sum_rate (bits/step)"),
        ("source_power", "source_power (power ratio)"),
        ("relay_power", "relay_power (power ratio)"),
    ],
    "simulate-const": [
        ("P", "P (power ratio)"), ("Q", "Q (symbol bound)"),
        ("relay_min_distance", "relay_min_distance (amplitude)"),
        ("dest_min_distance", "dest_min_distance (amplitude)"), ("trials", "trials"),
        ("relay_error_rate", "relay_error_rate (per trial)"),
        ("dest_error_rate", "dest_error_rate (per trial)"),
        ("error_rate", "error_rate (per trial)"),
        ("symbol_error_rate", "symbol_error_rate (per symbol)"),
        ("ci_low", "ci_low (per trial)"), ("ci_high", "ci_high (per trial)"),
    ],
    "dof-sweep": [("P", "P (power ratio)"), ("sum_rate", "sum_rate (bits/step)")],
    "baselines": [("K", "K")] + [(s, f"{s} (DoF)") for s in SCHEMES],
    "mimo-region": [("constraint", "constraint"), ("satisfied", "satisfied")],
    "multihop": [("layer", "layer"), ("size", "size (nodes)")],
}


class ConfigError(Exception):
    def __init__(self, diagnostics, code=EXIT_VALIDATION):
        super().__init__("; ".join(diagnostics))
        self.diagnostics = list(diagnostics)
        self.code = code


@dataclass(frozen=True)
class Diagnostic:
    field: str
    message: str
    code: int = EXIT_VALIDATION

    def __str__(self):
        return f"{self.field}: {self.message}"


def parse_grid(value) -> list[float]:
    """Comma list (``1e2,1e4``) or geometric range ``lo:hi:count``."""
    if isinstance(value, (list, tuple)):
        return [float(v) for v in value]
    text = str(value).strip()
    if ":" in text:
        lo, hi, count = text.split(":")
        return [float(v) for v in np.geomspace(float(lo), float(hi), int(count))]
    return [float(v) for v in text.split(",") if v.strip()]


def parse_ints(value) -> list[int]:
    if value is None:
        return []
    if isinstance(value, (list, tuple)):
        return [int(v) for v in value]
    return [int(v) for v in str(value).split(",") if v.strip()]


def parse_floats(value) -> list[float]:
    if isinstance(value, (list, tuple)):
        return [float(v) for v in value]
    return [float(v) for v in str(value).split(",") if v.strip()]


def resolve(config: dict) -> dict:
    """Fill mode-dependent defaults and normalize list-valued fields."""
    cfg = {**DEFAULTS, **config}
    mode = cfg["mode"]
    if cfg["p_grid"] is None:
        cfg["p_grid"] = DEFAULT_GRIDS.get(mode, [])
    cfg["p_grid"] = parse_grid(cfg["p_grid"])
    if cfg["trials"] is None:
        cfg["trials"] = DEFAULT_TRIALS.get(mode, 1)
    for key in ("m_s", "m_d", "m_v", "layers"):
        cfg[key] = parse_ints(cfg[key])
    cfg["d"] = parse_floats(cfg["d"]) if cfg["d"] is not None else []
    return cfg


def validate(config: dict) -> list[Diagnostic]:
    """Every envelope violation, without running anything."""
    out = []
    unknown = sorted(set(config) - set(DEFAULTS))
    out += [Diagnostic(k, "unknown configuration key") for k in unknown]
    try:
        cfg = resolve({k: v for k, v in config.items() if k in DEFAULTS})
    except (TypeError, ValueError) as exc:
        return out + [Diagnostic("config", f"cannot parse value ({exc})")]
    mode = cfg["mode"]
    if mode not in MODES:
        return out + [Diagnostic("mode", f"must be one of {', '.join(MODES)}, got {mode!r}")]

    def check(cond, fld, msg, code=EXIT_VALIDATION):
        if not cond:
            out.append(Diagnostic(fld, msg, code))

    for key in ("k", "n", "trials", "seed", "jobs", "calib_trials", "k_max", "budget"):
        check(isinstance(cfg[key], (int, np.integer)) and not isinstance(cfg[key], bool),
              key, f"must be an integer, got {cfg[key]!r}")
    if out:
        return out
    check(cfg["format"] in ("csv", "json"), "format", "must be csv or json")
    check(cfg["jobs"] >= 1, "jobs", "must be at least 1")
    check(cfg["seed"] >= 0, "seed", "must be non-negative")
    check(cfg["trials"] >= 1, "trials", "must be at least 1")
    try:
        GainDistribution.parse(cfg["dist"])
    except ValueError as exc:
        out.append(Diagnostic("dist", str(exc)))

    K, N, eps = cfg["k"], cfg["n"], cfg["epsilon"]
    if mode in TIME_VARYING or mode == "simulate-const":
        check(1 <= K <= K_MAX, "k", f"must lie in 1..{K_MAX}, got {K}")
        check(1 <= N <= N_MAX, "n", f"must lie in 1..{N_MAX}, got {N}")
        check(isinstance(eps, (int, float)) and 0 < eps < 1, "epsilon",
              f"must lie in (0, 1), got {eps}")
        check(cfg["sigma2"] >= 0, "sigma2", "must be non-negative")
    if mode in TIME_VARYING:
        if K >= 1 and N >= 1:
            d = (N + 1) ** (K * K)
            check(d <= MAX_BLOCK_LENGTH, "k",
                  f"block length d = {N + 1}^{K * K} = {d} exceeds {MAX_BLOCK_LENGTH}")
        check(cfg["calib_trials"] >= 1000, "calib_trials", "must be at least 1000")
    if mode in ("simulate-tv", "dof-sweep", "simulate-const"):
        grid = cfg["p_grid"]
        check(len(grid) >= 1, "p_grid", "must not be empty")
        check(all(math.isfinite(P) and P > 0 for P in grid), "p_grid", "powers must be positive")
    if mode == "dof-sweep" and cfg["p_grid"] and min(cfg["p_grid"]) > 0:
        grid = cfg["p_grid"]
        check(len(grid) >= 4 and math.log10(max(grid) / min(grid)) >= 4, "p_grid",
              "slope estimation needs >= 4 points over >= 4 decades")
    if mode == "simulate-const" and not out:
        check(all(P > 1 for P in cfg["p_grid"]), "p_grid", "constant-channel scheme needs P > 1")
        if not out:
            d = (N + 1) ** (K * K)
            Q = alphabet_bound(max(cfg["p_grid"]), d, eps)
            n_support = K * N ** (K * K)
            points = (4 * K * Q + 1) ** n_support
            check(points <= cfg["budget"], "p_grid",
                  f"exhaustive decoding needs about 10^{math.log10(points):.1f} points, budget {cfg['budget']}",
                  EXIT_BUDGET)
    if mode == "baselines":
        check(1 <= cfg["k_max"] <= 1000, "k_max", "must lie in 1..1000")
    if mode == "mimo-region":
        check(len(cfg["m_s"]) >= 1 and len(cfg["m_s"]) == len(cfg["m_d"]) == len(cfg["d"]),
              "m_s", "m_s, m_d and d need one entry per pair")
        check(len(cfg["m_v"]) >= 1, "m_v", "need at least one relay")
        check(all(m >= 1 for m in cfg["m_s"] + cfg["m_d"] + cfg["m_v"]), "m_s",
              "antenna counts must be positive")
    if mode == "multihop":
        check(K >= 1, "k", "must be positive")
        check(all(a >= 1 for a in cfg["layers"]), "layers", "layer sizes must be positive")
    return out


def _finite(x):
    if isinstance(x, (float, np.floating)):
        return float(x) if math.isfinite(x) else None
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (np.bool_,)):
        return bool(x)
    return x


def _clean(record: dict) -> dict:
    return {k: _finite(v) for k, v in record.items()}


def _mean(values):
    vals = [v for v in values if v is not None]
    return float(np.mean(vals)) if vals else None


def _half_width(values):
    vals = [v for v in values if v is not None]
    if len(vals) < 2:
        return None
    return float(1.96 * np.std(vals, ddof=1) / math.sqrt(len(vals)))


def _pool(cfg):
    return ProcessPoolExecutor(max_workers=cfg["jobs"]) if cfg["jobs"] > 1 else None


def _map(pool, fn, cells):
    return list(pool.map(fn, cells) if pool is not None else map(fn, cells))


def _calibrated(cfg, P=1.0):
    dist = GainDistribution.parse(cfg["dist"])
    return calibrate(cfg["k"], cfg["n"], cfg["epsilon"], dist, trials=cfg["calib_trials"],
                     seed=cfg["seed"], P=P, sigma2=cfg["sigma2"]), dist


def _diagonalize_cell(args):
    inst, dist, seed, draw = args
    block = random_block(inst.K, inst.d, stream_rng(seed, 10, draw), dist)
    e2e = end_to_end_map(inst, block)
    rec = {"draw": draw, "erased": e2e.erased, "reason": e2e.reason,
           "log_det_T": e2e.log_det_T, "log_det_Tt": e2e.log_det_Tt,
           "max_offdiag": None, "max_diag_error": None}
    if not e2e.erased:
        M = e2e.matrix
        off = M - np.diag(np.diag(M))
        rec["max_offdiag"] = float(np.max(np.abs(off)))
        rec["max_diag_error"] = float(np.max(np.abs(np.diag(M) - 1.0)))
    return _clean(rec)


def run_diagonalize(cfg, pool):
    inst, dist = _calibrated(cfg)
    cells = [(inst, dist, cfg["seed"], draw) for draw in range(cfg["trials"])]
    return _map(pool, _diagonalize_cell, cells)


def aggregate_diagonalize(records, cfg):
    kept = [r for r in records if not r["erased"]]
    return {
        "draws": len(records),
        "erasure_rate": sum(r["erased"] for r in records) / len(records),
        "max_offdiag": max((r["max_offdiag"] for r in kept), default=None),
        "max_diag_error": max((r["max_diag_error"] for r in kept), default=None),
    }


def _simulate_tv_cell(args):
    inst, real, blocks, seed, P = args
    report = simulate_blocks(inst.with_power(P), real, blocks, seed)
    return [_clean({"P": P, **{k: v for k, v in r.items() if k in dict(CSV_COLUMNS["simulate-tv"])}})
            for r in report.records]


def run_simulate_tv(cfg, pool):
    inst, dist = _calibrated(cfg)
    real = sample_time_varying(inst.K, (cfg["trials"] + 1) * inst.d, dist, cfg["seed"])
    cells = [(inst, real, cfg["trials"], cfg["seed"], P) for P in cfg["p_grid"]]
    return [rec for part in _map(pool, _simulate_tv_cell, cells) for rec in part]


def aggregate_simulate_tv(records, cfg):
    rows = []
    for P in cfg["p_grid"]:
        recs = [r for r in records if r["P"] == P]
        kept = [r for r in recs if not r["erased"]]
        n = len(recs)
        rate = sum(r["erased"] for r in recs) / n
        rows.append({
            "P": P,
            "blocks": n,
            "erasure_rate": rate,
            "erasure_half_width": 1.96 * math.sqrt(rate * (1 - rate) / n),
            "numerical_erasures": sum(bool(r["numerical"]) for r in recs),
            "mse": _mean(r["mse"] for r in kept),
            "mean_sum_rate": _mean(r["sum_rate"] for r in kept),
            "sum_rate_half_width": _half_width([r["sum_rate"] for r in kept]),
            "source_power": _mean(r["source_power"] for r in recs),
            "relay_power": _mean(r["relay_power"] for r in recs),
        })
    return {"per_power": rows}


def run_simulate_const(cfg, pool):
    dist = GainDistribution.parse(cfg["dist"])
    report = symbol_error_sweep(cfg["k"], cfg["n"], cfg["epsilon"], cfg["p_grid"],
                                cfg["trials"], cfg["seed"], cfg["sigma2"], dist,
                                cfg["budget"], pool)
    return [_clean({**r, "rejections": report.rejections}) for r in report.rows]


def aggregate_simulate_const(records, cfg):
    rows = sorted(records, key=lambda r: r["P"])
    monotone = all(b["ci_low"] <= a["ci_high"] for a, b in zip(rows, rows[1:]))
    return {
        "monotone": monotone,
        "final_error_rate": rows[-1]["error_rate"],
        "min_relay_distance": min(r["relay_min_distance"] for r in rows),
        "min_dest_distance": min(r["dest_min_distance"] for r in rows),
    }


def _dof_block_cell(args):
    inst, dist, seed, b = args
    return random_block(inst.K, inst.d, stream_rng(seed, 20, b), dist)


def run_dof_sweep(cfg, pool):
    inst, dist = _calibrated(cfg)
    blocks = _map(pool, _dof_block_cell, [(inst, dist, cfg["seed"], b) for b in range(cfg["trials"])])
    curve = rate_curve(inst, blocks, cfg["p_grid"])
    return [_clean({"P": P, "sum_rate": r}) for P, r in zip(cfg["p_grid"], curve)]


def aggregate_dof_sweep(records, cfg):
    est = estimate_dof_slope([r["P"] for r in records], [r["sum_rate"] for r in records])
    K, N, eps = cfg["k"], cfg["n"], cfg["epsilon"]
    target = K * (1 - 3 * eps) * (N / (N + 1)) ** (K * K)
    return {"slope": est.slope, "half_width": est.half_width, "points_used": est.points,
            "target_slope": target, "relative_error": abs(est.slope - target) / target}


def run_baselines(cfg, pool):
    return [{"K": row["K"], **{s: str(row[s]) for s in SCHEMES}}
            for row in baseline_table(cfg["k_max"])]


def aggregate_baselines(records, cfg):
    from fractions import Fraction

    def val(r, s):
        return Fraction(r[s])

    winners = [r["K"] for r in records
               if val(r, "neutralization") > max(val(r, "interference-channel"), val(r, "x-channel"))]
    return {"neutralization_wins_at": winners,
            "and_dominates_from_2": all(val(r, "and") > max(val(r, s) for s in SCHEMES if s != "and")
                                        for r in records if r["K"] >= 2)}


def run_mimo_region(cfg, pool):
    profile = MimoProfile(cfg["m_s"], cfg["m_d"], cfg["m_v"])
    d = cfg["d"]
    records = []
    for i, di in enumerate(d):
        cap = min(profile.M_S[i], profile.M_D[i])
        records.append({"constraint": f"0 <= d[{i}] <= {cap}", "satisfied": 0 <= di <= cap})
    records.append({"constraint": f"sum(d) <= {profile.relay_antennas}",
                    "satisfied": sum(d) <= profile.relay_antennas})
    return records


def aggregate_mimo_region(records, cfg):
    profile = MimoProfile(cfg["m_s"], cfg["m_d"], cfg["m_v"])
    ok, violations = mimo_region_contains(profile, cfg["d"])
    out = {"contained": ok, "violations": violations, "reduced_K": None, "discarded_relays": None}
    if ok and all(float(x).is_integer() for x in cfg["d"]):
        red = mimo_reduction(profile, cfg["d"])
        out["reduced_K"] = red.K
        out["discarded_relays"] = red.discarded_relays
    return out


def run_multihop(cfg, pool):
    sizes = [cfg["k"], *cfg["layers"], cfg["k"]]
    return [{"layer": i, "size": a} for i, a in enumerate(sizes)]


def aggregate_multihop(records, cfg):
    return {"dof": multihop_dof(cfg["layers"], cfg["k"])}


RUNNERS = {
    "diagonalize": (run_diagonalize, aggregate_diagonalize),
    "simulate-tv": (run_simulate_tv, aggregate_simulate_tv),
    "simulate-const": (run_simulate_const, aggregate_simulate_const),
    "dof-sweep": (run_dof_sweep, aggregate_dof_sweep),
    "baselines": (run_baselines, aggregate_baselines),
    "mimo-region": (run_mimo_region, aggregate_mimo_region),
    "multihop": (run_multihop, aggregate_multihop),
}


def execute(config: dict) -> dict:
    """Validate and run one configuration; return the report document."""
    diagnostics = validate(config)
    if diagnostics:
        code = EXIT_VALIDATION if any(d.code == EXIT_VALIDATION for d in diagnostics) else EXIT_BUDGET
        raise ConfigError([str(d) for d in diagnostics], code)
    cfg = resolve(config)
    run, agg = RUNNERS[cfg["mode"]]
    started = time.perf_counter()
    pool = _pool(cfg)
    try:
        records = run(cfg, pool)
    except (BudgetError, EnvelopeError) as exc:
        raise ConfigError([str(exc)], EXIT_BUDGET) from exc
    finally:
        if pool is not None:
            pool.shutdown()
    aggregates = {k: _finite(v) for k, v in agg(records, cfg).items()}
    echo = {k: cfg[k] for k in sorted(cfg)}
    return {
        "mode": cfg["mode"],
        "records": records,
        "aggregates": aggregates,
        "provenance": {
            "config": echo,
            "version": __version__,
            "timestamp": datetime.now(timezone.utc).isoformat(),
            "wall_clock_s": time.perf_counter() - started,
        },
    }


def render(report: dict, fmt: str) -> str:
    if fmt == "json":
        return json.dumps(report, indent=2, sort_keys=True) + "\n"
    columns = CSV_COLUMNS[report["mode"]]
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow([header for _, header in columns])
    for rec in report["records"]:
        writer.writerow(["" if rec.get(key) is None else rec.get(key) for key, _ in columns])
    return buf.getvalue()


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="andnet", description="Two-hop network diagonalization experiments")
    p.add_argument("mode_pos", nargs="?", metavar="mode", choices=MODES, help="experiment mode")
    p.add_argument("--mode", choices=MODES)
    p.add_argument("--config", help="JSON file of flat key-value settings")
    p.add_argument("--k", type=int, help="number of source/relay/destination nodes")
    p.add_argument("--n", type=int, help="direction exponent bound N")
    p.add_argument("--epsilon", type=float)
    p.add_argument("--p-grid", dest="p_grid", help="powers, '1e2,1e4' or 'lo:hi:count'")
    p.add_argument("--sigma2", type=float, help="noise variance")
    p.add_argument("--trials", type=int, help="draws, blocks or trials per grid point")
    p.add_argument("--seed", type=int)
    p.add_argument("--dist", help="'normal' or 'uniform:a,b'")
    p.add_argument("--out", help="output path, '-' for stdout")
    p.add_argument("--format", choices=("csv", "json"))
    p.add_argument("--jobs", type=int, help="worker processes")
    p.add_argument("--calib-trials", dest="calib_trials", type=int)
    p.add_argument("--budget", type=int, help="enumeration point budget")
    p.add_argument("--k-max", dest="k_max", type=int)
    p.add_argument("--m-s", dest="m_s", help="source antennas per pair, comma list")
    p.add_argument("--m-d", dest="m_d", help="destination antennas per pair, comma list")
    p.add_argument("--m-v", dest="m_v", help="antennas per relay, comma list")
    p.add_argument("--d", dest="d", help="DoF tuple, comma list")
    p.add_argument("--layers", help="relay layer sizes, comma list")
    return p


def load_config(path) -> dict:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError([f"config: cannot read {path} ({exc})"], EXIT_IO) from exc
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError([f"config: not valid JSON ({exc})"]) from exc
    if not isinstance(doc, dict):
        raise ConfigError(["config: must be a JSON object"])
    return {k.replace("-", "_"): v for k, v in doc.items()}


def merge_args(args: argparse.Namespace) -> dict:
    """Config file values overridden by any flag given on the command line."""
    config = load_config(args.config) if args.config else {}
    if args.mode_pos and args.mode and args.mode_pos != args.mode:
        raise ConfigError([f"mode: positional {args.mode_pos!r} conflicts with --mode {args.mode!r}"])
    flags = {k: v for k, v in vars(args).items()
             if v is not None and k not in ("config", "mode_pos", "mode")}
    mode = args.mode_pos or args.mode
    if mode:
        flags["mode"] = mode
    return {**config, **flags}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        config = merge_args(args)
        report = execute(config)
        text = render(report, config.get("format", DEFAULTS["format"]))
    except ConfigError as exc:
        for line in exc.diagnostics:
            print(f"error: {line}", file=sys.stderr)
        return exc.code
    out = config.get("out", "-")
    if out == "-":
        sys.stdout.write(text)
        return EXIT_OK
    try:
        Path(out).write_text(text)
    except OSError as exc:
        print(f"error: cannot write {out} ({exc})", file=sys.stderr)
        return EXIT_IO
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
