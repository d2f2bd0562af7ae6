"""Command-line driver: simulate, solve, edf and compare.

Every subcommand reads one JSON scenario (a path or ``preset:NAME``) and
writes plain CSV/JSON files into the ``--out`` directory. The file layouts
are described in ``schema/outputs.schema.json``.

Exit codes: 0 success, 1 invalid configuration or I/O error, 2 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import sys
from pathlib import Path
from typing import List, Optional

import numpy as np

from .asymptotics import (AsymptoticParams, SolverError, asymptotic_mean_se, asymptotic_se,
                          beta_closed_form, correction_bound, limiting_edf, se_cdf, se_quantile,
                          solve_beta)
from .config import ScenarioConfig, load_config, preset_names
from .montecarlo import (AllTrialsRejected, ks_distance, run_experiment, sample_received_powers,
                         trial_rows, trial_seed)
from .params import ConfigError, ScenarioParams
from .powerctl import power_distribution, representative_q_cdf

log = logging.getLogger("mmse_uplink")

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC = 0, 1, 2

TRIAL_COLUMNS = ["policy", "N", "trial", "sir", "se", "beta_n", "actives", "min_eig", "rejected"]
SEED_SCHEME = "numpy SeedSequence(entropy=seed, spawn_key=(trial,))"


def _clean(obj):
    """JSON-safe copy: NaN/inf become null, numpy scalars become Python numbers."""
    if isinstance(obj, dict):
        return {k: _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else None
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def _write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(_clean(obj), indent=2, allow_nan=False) + "\n")


def _write_csv(path: Path, columns: List[str], rows) -> None:
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for row in rows:
            w.writerow([_fmt(row[c]) for c in columns])


def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return int(v)
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return v


def _header(cfg: ScenarioConfig) -> dict:
    return {"config": cfg.data, "resolved": cfg.resolved()}


# ---------------------------------------------------------------------------
# theory side

def _theory(p: ScenarioParams):
    dist = power_distribution(p.policy, p)
    ap = AsymptoticParams.from_scenario(p)
    F_q = representative_q_cdf(p.policy, p)
    return dist, ap, F_q


def _solve_one(p: ScenarioParams) -> dict:
    dist, ap, F_q = _theory(p)
    fixed = solve_beta(ap, dist)
    closed = beta_closed_form(ap, dist)
    return {
        "policy": p.policy.describe(),
        "N": p.N,
        "c": p.c,
        "beta_fixed": fixed.beta,
        "beta_closed": closed.beta,
        "residual": fixed.residual,
        "correction_bound": correction_bound(fixed.beta, ap, dist),
        "moment": closed.moment,
        "se_unit_q": float(asymptotic_se(1.0, 1.0, p.N, ap, dist)),
        "mean_se": asymptotic_mean_se(F_q, p.N, ap, dist, F_q.atoms),
        "se_q05": se_quantile(0.05, F_q, p.N, ap, dist),
    }


def _gamma_grid(cfg: ScenarioConfig, points: int) -> np.ndarray:
    top = 0.0
    for _, N, p in cfg.scenarios():
        dist, ap, F_q = _theory(p)
        top = max(top, se_quantile(0.999, F_q, N, ap, dist))
    return np.linspace(0.0, math.ceil(top), points)


def cmd_solve(cfg: ScenarioConfig, out: Path, args) -> dict:
    table = [_solve_one(p) for _, _, p in cfg.scenarios()]
    grid = _gamma_grid(cfg, args.grid_points)
    labels, cols = [], []
    for pol, N, p in cfg.scenarios():
        dist, ap, F_q = _theory(p)
        labels.append(f"{pol.describe()}|N={N}")
        cols.append(np.asarray(se_cdf(grid, F_q, N, ap, dist), dtype=float))
    _write_csv(out / "solve_se.csv", list(table[0].keys()), table)
    _write_csv(out / "solve_cdf.csv", ["gamma"] + labels,
               ({"gamma": g, **{lab: col[i] for lab, col in zip(labels, cols)}}
                for i, g in enumerate(grid)))
    result = {**_header(cfg), "solutions": table}
    _write_json(out / "solve.json", result)
    return result


# ---------------------------------------------------------------------------
# simulation side

def _simulate(cfg: ScenarioConfig, workers: int):
    runs = []
    for pol, N, p in cfg.scenarios():
        log.info("simulating %s, N=%d, %d trials", pol.describe(), N, cfg.trials)
        runs.append(run_experiment(p, cfg.trials, cfg.seed, workers=workers))
    return runs


def _write_simulation(cfg: ScenarioConfig, runs, out: Path) -> dict:
    rows = []
    for s in runs:
        for r in trial_rows(s):
            rows.append({"policy": s.params.policy.describe(), "N": s.params.N, **r})
    _write_csv(out / "trials.csv", TRIAL_COLUMNS, rows)
    summary = {
        **_header(cfg),
        "seeds": {"seed": cfg.seed, "trials": cfg.trials, "scheme": SEED_SCHEME},
        "experiments": [
            {k: v for k, v in s.summary_dict().items() if k != "ecdf"}
            | {"mean": s.mean_se, "std": s.std_se, "ecdf": s.ecdf}
            for s in runs
        ],
    }
    _write_json(out / "summary.json", summary)
    return summary


def cmd_simulate(cfg: ScenarioConfig, out: Path, args) -> dict:
    return _write_simulation(cfg, _simulate(cfg, args.workers), out)


def cmd_compare(cfg: ScenarioConfig, out: Path, args) -> dict:
    runs = _simulate(cfg, args.workers)
    _write_simulation(cfg, runs, out)
    grid = _gamma_grid(cfg, args.grid_points)
    metrics, curve_rows = [], []
    for s in runs:
        p = s.params
        dist, ap, F_q = _theory(p)
        theory = _solve_one(p)
        F = lambda g: se_cdf(g, F_q, p.N, ap, dist)  # noqa: E731
        jumps = [math.log2(1 + q * p.N ** (p.alpha / 2) * theory["beta_closed"])
                 for q in F_q.atoms]
        G = s.se_edf()
        ks = ks_distance(F, G, jumps)
        metrics.append({
            "policy": p.policy.describe(), "N": p.N, "trials": len(s.results),
            "rejected": s.rejection_count,
            "mean_se_sim": s.mean_se, "mean_se_theory": theory["mean_se"],
            "mean_rel_error": abs(s.mean_se - theory["mean_se"]) / theory["mean_se"],
            "std_se_sim": s.std_se, "ks": ks,
            "mean_beta_n": float(np.mean(s.beta_n)), "beta_fixed": theory["beta_fixed"],
            "beta_closed": theory["beta_closed"],
        })
        sim_vals = G(grid)
        th_vals = np.asarray(F(grid), dtype=float)
        for g, a, b in zip(grid, sim_vals, th_vals):
            curve_rows.append({"policy": p.policy.describe(), "N": p.N, "gamma": g,
                               "sim_cdf": a, "theory_cdf": b})
    _write_csv(out / "compare_cdf.csv", ["policy", "N", "gamma", "sim_cdf", "theory_cdf"],
               curve_rows)
    result = {**_header(cfg), "seeds": {"seed": cfg.seed, "trials": cfg.trials,
                                        "scheme": SEED_SCHEME}, "metrics": metrics}
    _write_json(out / "compare.json", result)
    return result


def _edf_cases(cfg: ScenarioConfig):
    """(policy, params) pairs: a mobile-count sweep when ``c`` is given, else one per N."""
    for pol in cfg.policies:
        if "c" in cfg.data:
            for n in cfg.edf_sizes:
                yield pol, cfg.params_for_size(pol, n)
        else:
            for N in cfg.Ns:
                yield pol, cfg.params(pol, N)


def cmd_edf(cfg: ScenarioConfig, out: Path, args) -> dict:
    results, rows = [], []
    for k, (pol, p) in enumerate(_edf_cases(cfg)):
        log.info("e.d.f. for %s, n=%d, N=%d", pol.describe(), p.n, p.N)
        G = sample_received_powers(p, trial_seed(cfg.seed, k))
        H = limiting_edf(AsymptoticParams.from_scenario(p), power_distribution(pol, p))
        ks = ks_distance(H, G, H.breakpoints())
        results.append({"policy": pol.describe(), "n": p.n, "N": p.N, "c": p.c, "ks": ks,
                        "seed_index": k})
        pos = G.values[G.values > 0]
        if len(pos) >= 2:
            lo, hi = np.quantile(pos, [0.001, 0.999])
            xs = np.geomspace(lo, hi, args.grid_points)
        else:
            xs = pos if len(pos) else np.zeros(1)
        for x, hn, h in zip(xs, G(xs), np.asarray(H(xs), dtype=float)):
            rows.append({"policy": pol.describe(), "n": p.n, "N": p.N, "x": x,
                         "H_n": hn, "H": h})
    _write_csv(out / "edf.csv", ["policy", "n", "N", "x", "H_n", "H"], rows)
    result = {**_header(cfg), "seeds": {"seed": cfg.seed, "scheme": SEED_SCHEME},
              "ks": results}
    _write_json(out / "edf.json", result)
    return result


COMMANDS = {"simulate": cmd_simulate, "solve": cmd_solve, "edf": cmd_edf,
            "compare": cmd_compare}


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="mmse-uplink",
        description="Monte Carlo simulation and large-system analysis of the MMSE uplink "
                    "in a hexagonal cellular network.",
        epilog="Presets: " + ", ".join(f"preset:{n}" for n in preset_names()))
    ap.add_argument("command", choices=sorted(COMMANDS))
    ap.add_argument("--config", required=True, help="scenario JSON file or preset:NAME")
    ap.add_argument("--out", required=True, help="output directory (created if missing)")
    ap.add_argument("--trials", type=int, help="override the number of trials")
    ap.add_argument("--seed", type=int, help="override the master seed")
    ap.add_argument("--workers", type=int, default=1, help="worker processes (default 1)")
    ap.add_argument("--grid-points", type=int, default=201,
                    help="points of the gamma / x grids in the tables (default 201)")
    ap.add_argument("-v", "--verbose", action="store_true")
    return ap


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        if args.workers < 1 or args.grid_points < 2:
            raise ConfigError("--workers must be >= 1 and --grid-points >= 2")
        cfg = load_config(args.config).override(trials=args.trials, seed=args.seed)
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        COMMANDS[args.command](cfg, out, args)
    except (ConfigError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (SolverError, AllTrialsRejected, np.linalg.LinAlgError, FloatingPointError,
            ArithmeticError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
