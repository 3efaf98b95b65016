"""Command-line front end.

    unbiased-mvsde run|mse|kde|diagnose|cost --config exp.json [--seed S] [--threads N] [--out DIR]

Exit codes: 0 success, 2 configuration error, 3 simulation blow-up.
KDE marginals are written one file per component, numbered from 1
(``kde_c1.csv`` is the first state coordinate); config indices are 0-based.
All CSV files carry a header row, use LF line endings and print floats
with 17 significant digits; they depend only on (config, seed).
Wall-clock timings go to the JSON summaries only.
"""

import argparse
import csv
import json
import logging
import math
import sys
import time
from pathlib import Path

import numpy as np

from . import analysis
from .config import MODES, load_config
from .estimator import SimulationError, expected_cost, replicate_cost, run_replicates, summarize
from .measure import SignedEmpiricalMeasure
from .models import ConfigError
from .particles import ParticleBlowUp
from .rng import resolve_seed

log = logging.getLogger("unbiased_mvsde")

EXIT_CONFIG = 2
EXIT_RUNTIME = 3


def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return str(bool(v)).lower()
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return f"{float(v):.17g}"
    return str(v)


def write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([_fmt(v) for v in row])


def write_json(path, obj):
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _phi(cfg):
    return cfg.phi.function()


def cmd_run(cfg, seed, threads, out):
    model = cfg.build_model()
    t0 = time.perf_counter()
    reps = run_replicates(model, cfg.estimator, cfg.M[0], seed, threads=threads)
    res = summarize(reps, _phi(cfg))
    wall = time.perf_counter() - t0
    out.mkdir(parents=True, exist_ok=True)
    write_csv(out / "replicates.csv", ["id", "L", "P", "value", "cost_units"],
              [(r.replicate_id, r.level, r.horizon, v, r.cost_units) for r, v in zip(reps, res.values)])
    write_json(out / "summary.json", {
        "mode": "run", "model": cfg.model_name, "phi": cfg.phi.describe(), "seed": seed,
        "estimate": res.mean, "std_error": res.std_error, "M": res.M,
        "total_cost_units": res.total_cost, "wall_seconds": wall,
    })
    print(f"estimate {res.mean:.6g} +/- {res.std_error:.3g} (M={res.M}, {wall:.1f}s)")


def _truth(cfg):
    if cfg.truth == "curie_weiss_quadrature":
        beta = cfg.model_params.get("beta", 1.0)
        return analysis.curie_weiss_reference(beta)[1]
    return cfg.truth


def cmd_mse(cfg, seed, threads, out):
    model = cfg.build_model()
    truth = _truth(cfg)
    points = analysis.mse_study(model, cfg.estimator, _phi(cfg), truth, cfg.M, cfg.runs, seed, threads)
    out.mkdir(parents=True, exist_ok=True)
    write_csv(out / "mse.csv", ["M", "mse", "mean_cost_units"],
              [(p.M, p.mse, p.mean_cost_units) for p in points])
    write_csv(out / "mse_runs.csv", ["M", "run", "estimate"],
              [(p.M, k, e) for p in points for k, e in enumerate(p.estimates)])
    summary = {"mode": "mse", "model": cfg.model_name, "phi": cfg.phi.describe(), "seed": seed,
               "truth": truth, "runs": cfg.runs,
               "seconds": {str(p.M): p.seconds for p in points}}
    if len(points) > 1:
        summary["loglog_slope"] = analysis.loglog_slope([p.M for p in points], [p.mse for p in points])
    write_json(out / "summary.json", summary)
    for p in points:
        print(f"M={p.M:>7d}  MSE={p.mse:.6g}")


def cmd_kde(cfg, seed, threads, out):
    model = cfg.build_model()
    t0 = time.perf_counter()
    reps = run_replicates(model, cfg.estimator, cfg.M[0], seed, threads=threads)
    measure = SignedEmpiricalMeasure.average(r.measure for r in reps)
    comps = cfg.kde.components if cfg.kde.components is not None else list(range(model.dim))
    h = cfg.kde.bandwidth
    out.mkdir(parents=True, exist_ok=True)
    marginals = {}
    for c in comps:
        if cfg.kde.grid is not None:
            grid = np.linspace(cfg.kde.grid["lo"], cfg.kde.grid["hi"], cfg.kde.grid["n"])
        else:
            grid = analysis.kde_grid(measure, c, h)
        dens = analysis.kde(measure, c, h, grid)
        write_csv(out / f"kde_c{c + 1}.csv", ["x", "density"], zip(dens.grid, dens.values))
        marginals[str(c + 1)] = {
            "mass": dens.mass(), "mean": analysis.moment(measure, c, 1),
            "finite": bool(np.all(np.isfinite(dens.values))),
        }
    write_json(out / "summary.json", {
        "mode": "kde", "model": cfg.model_name, "seed": seed, "M": len(reps), "bandwidth": h,
        "total_weight": measure.total_weight(), "marginals": marginals,
        "wall_seconds": time.perf_counter() - t0,
    })
    print(f"wrote {len(comps)} marginal(s) to {out}")


def cmd_diagnose(cfg, seed, threads, out):
    model = cfg.build_model()
    d = cfg.diagnose
    rows, slopes = [], []
    for s in range(d.seeds):
        t, w2 = analysis.contraction_diagnostic(model, d.level, d.n, d.horizon, d.x0_a, d.x0_b,
                                                seed, replicate_id=s)
        rows.extend((s, ti, wi) for ti, wi in zip(t, w2))
        try:
            slopes.append(analysis.fit_log_decay(t, w2))
        except ValueError:
            slopes.append(float("nan"))
    out.mkdir(parents=True, exist_ok=True)
    write_csv(out / "diagnose.csv", ["seed_index", "t", "W2"], rows)
    write_json(out / "summary.json", {
        "mode": "diagnose", "model": cfg.model_name, "seed": seed,
        "log_w2_squared_slopes": [None if math.isnan(v) else v for v in slopes],
    })
    print(f"mean log-W2^2 slope {np.nanmean(slopes):.4g} over {d.seeds} seed(s)")


def cmd_cost(cfg, seed, threads, out):
    est = cfg.estimator
    pl = est.level_probabilities()
    pp = est.horizon_probabilities()
    rows = []
    for i, l in enumerate(est.levels):
        for j, p in enumerate(est.horizons):
            c = replicate_cost(est, int(l), int(p))
            rows.append((int(l), int(p), pl[i], pp[j], est.blocks(int(p)), c, pl[i] * pp[j] * c))
    out.mkdir(parents=True, exist_ok=True)
    write_csv(out / "cost.csv", ["l", "p", "prob_l", "prob_p", "blocks", "cost_units", "weighted"], rows)
    total = expected_cost(est)
    write_json(out / "summary.json", {"mode": "cost", "expected_cost_units": total})
    print(f"{'l':>3} {'p':>3} {'cost_units':>14} {'P_L*P_P*cost':>14}")
    for l, p, _, _, _, c, w in rows:
        print(f"{l:>3} {p:>3} {c:>14.6g} {w:>14.6g}")
    print(f"expected cost units: {total:.6g}")


COMMANDS = {"run": cmd_run, "mse": cmd_mse, "kde": cmd_kde, "diagnose": cmd_diagnose, "cost": cmd_cost}


def build_parser():
    parser = argparse.ArgumentParser(
        prog="unbiased-mvsde",
        description="Unbiased estimation of McKean-Vlasov stationary expectations.")
    sub = parser.add_subparsers(dest="mode", required=True)
    for mode in MODES:
        p = sub.add_parser(mode)
        p.add_argument("--config", required=True, help="JSON experiment file")
        p.add_argument("--seed", type=int, default=None, help="master seed (overrides MV_SEED and config)")
        p.add_argument("--threads", type=int, default=None, help="worker threads for replicates")
        p.add_argument("--out", default=None, help="output directory")
        p.add_argument("-v", "--verbose", action="store_true")
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args.config, mode=args.mode)
        seed = resolve_seed(args.seed, cfg.seed)
        if not 0 <= seed < 2 ** 64:
            raise ConfigError(f"seed must be an unsigned 64-bit integer, got {seed}")
        threads = args.threads if args.threads is not None else cfg.threads
        if threads < 1:
            raise ConfigError("--threads must be >= 1")
        out = Path(args.out or cfg.output or f"results-{args.mode}")
    except (ConfigError, ValueError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        COMMANDS[args.mode](cfg, seed, threads, out)
    except (SimulationError, ParticleBlowUp) as exc:
        print(f"simulation error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    return 0


if __name__ == "__main__":
    sys.exit(main())
