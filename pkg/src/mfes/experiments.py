"""Experiment runners behind the command-line interface, and their file outputs.

Every data file is a deterministic function of (config, seed).  Wall-clock
times and timestamps go to ``metadata.json`` only.
"""

import csv
import datetime
import json
import logging
import os
from pathlib import Path

import numpy as np

from . import __version__
from . import cartpole as cp
from . import entropy_search as es
from .errors import RunAborted
from .optimizer import (TAG_FINAL, TAG_SNAPSHOT, rng_stream, run_es_baseline, run_mfes,
                        seed_stream)

log = logging.getLogger(__name__)

OUTPUT_ROOT_ENV = "MFES_OUTPUT_ROOT"
COMPARISON_COLUMNS = ["mode", "seed", "final_cost", "n_sim", "n_exp", "total_effort",
                      "stop_reason", "theta_bg"]
LOCATE_TOLERANCE = 0.02  # fraction of the box width


def output_root(cfg):
    return Path(os.environ.get(OUTPUT_ROOT_ENV) or cfg.get("output_dir", "runs"))


def _num(v):
    return repr(float(v))


def _write_csv(path, header, rows):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def _write_json(path, obj):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(obj, fh, indent=2)
        fh.write("\n")


def _theta_cols(d, prefix="theta"):
    return [f"{prefix}_{i}" for i in range(d)]


def write_snapshot(path, gp, grid, acq, S, seed, it):
    """Posterior, p_min and per-source scores on the representer grid, sorted by theta."""
    X = grid.points
    mu0, v0 = gp.predict(X, 0)
    mu1, v1 = gp.predict(X, 1)
    pmin = es.estimate_pmin(gp, grid, S, seed_stream(seed, TAG_SNAPSHOT, it)).mass
    order = np.lexsort(X.T[::-1])
    header = _theta_cols(X.shape[1]) + ["mu_sim", "sigma_sim", "mu_exp", "sigma_exp", "pmin",
                                        "score_sim", "score_exp"]
    rows = []
    for i in order:
        rows.append([_num(v) for v in X[i]] + [
            _num(mu0[i]), _num(np.sqrt(v0[i])), _num(mu1[i]), _num(np.sqrt(v1[i])),
            _num(pmin[i]), _num(acq.score_sim[i]), _num(acq.score_exp[i])])
    _write_csv(path, header, rows)


def write_best_guess(path, run):
    d = len(run.iterations[0].theta_bg) if run.iterations else 0
    rows = [[r.index] + [_num(v) for v in r.theta_bg] + [_num(r.mu_bg), _num(r.sigma_bg)]
            for r in run.iterations]
    _write_csv(path, ["index"] + _theta_cols(d, "theta_bg") + ["mu_bg", "sigma_bg"], rows)


def write_lattice(path, gp, bounds, per_axis):
    """Final posterior on a regular lattice (one row per point)."""
    axes = [np.linspace(lo, hi, per_axis) for lo, hi in bounds]
    X = np.stack(np.meshgrid(*axes, indexing="ij"), -1).reshape(-1, len(bounds))
    mu0, v0 = gp.predict(X, 0)
    mu1, v1 = gp.predict(X, 1)
    rows = [[_num(v) for v in X[i]] + [_num(mu0[i]), _num(np.sqrt(v0[i])), _num(mu1[i]),
                                       _num(np.sqrt(v1[i]))] for i in range(len(X))]
    _write_csv(path, _theta_cols(len(bounds)) + ["mu_sim", "sigma_sim", "mu_exp", "sigma_exp"], rows)


def run_one(exp, seed, mode, out_dir, snapshots=None):
    """Run one seed in one mode and write its files into ``out_dir``."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    cfg = exp.config
    opts = cfg.get("output", {})
    if snapshots is None:
        snapshots = opts.get("snapshots", cfg["problem"] == "synthetic1d")
    callback = None
    if snapshots:
        snap_dir = out_dir / "snapshots"
        snap_dir.mkdir(exist_ok=True)

        def callback(it, gp, grid, acq):
            write_snapshot(snap_dir / f"iter_{it:03d}.csv", gp, grid, acq, exp.settings.S, seed, it)

    started = datetime.datetime.now(datetime.timezone.utc).isoformat()
    runner = run_mfes if mode == "mfes" else run_es_baseline
    try:
        run = runner(exp.objective, exp.gp, exp.settings, exp.efforts, exp.stop, seed,
                     exp.initial, callback=callback)
    except RunAborted as exc:
        if exc.log is not None:
            exc.log.write_json(out_dir / "run_log.json")
        raise
    run.write_json(out_dir / "run_log.json")
    run.write_csv(out_dir / "iterations.csv")
    write_best_guess(out_dir / "best_guess.csv", run)
    summary = {"mode": mode, "seed": seed, "theta_bg": run.final.theta_bg,
               "final_cost": run.final.cost, "stop_reason": run.final.stop_reason,
               "n_sim": run.n_sim, "n_exp": run.n_exp, "total_effort": run.total_effort}
    if exp.synthetic is not None:
        target = exp.synthetic.argmin()
        width = exp.bounds[0, 1] - exp.bounds[0, 0]
        err = abs(run.final.theta_bg[0] - target)
        summary.update(true_argmin=target, argmin_error=err,
                       located=bool(err <= LOCATE_TOLERANCE * width))
    if exp.plant is not None:
        p = exp.plant
        gain = p["theta_to_gain"](np.array(run.final.theta_bg))
        final = cp.rollout(p["real"], p["limits"], gain, p["x0"], p["penalties"][0])
        nominal_cost = float(exp.objective.eval_exp(p["nominal"], rng_stream(seed, TAG_FINAL)))
        summary.update(final_stable=final.stable, nominal_theta=p["nominal"].tolist(),
                       nominal_cost=nominal_cost,
                       improved=bool(final.stable and run.final.cost < nominal_cost))
        write_lattice(out_dir / "posterior_lattice.csv", run.model, exp.bounds,
                      opts.get("lattice_per_axis", 41))
    _write_json(out_dir / "final.json", summary)
    _write_json(out_dir / "metadata.json", {
        "version": __version__, "started": started,
        "finished": datetime.datetime.now(datetime.timezone.utc).isoformat(),
        **run.timing()})
    log.info("%s seed %d: %d sim, %d exp, final cost %.5g (%s)", mode, seed, run.n_sim,
             run.n_exp, run.final.cost, run.final.stop_reason)
    return run, summary


def comparison_row(mode, seed, run):
    if run is None:
        return [mode, str(seed), "nan", "0", "0", "0.0", "aborted", ""]
    return [mode, str(seed), _num(run.final.cost), str(run.n_sim), str(run.n_exp),
            _num(run.total_effort), run.final.stop_reason,
            " ".join(_num(v) for v in run.final.theta_bg)]


def aggregate(rows):
    """Per-mode means/stds recomputed from comparison rows (as written)."""
    out = {}
    for mode in ("mfes", "es"):
        sel = [r for r in rows if r[0] == mode and r[6] != "aborted"]
        stats = {"runs": len(sel)}
        for name, col in (("final_cost", 2), ("n_sim", 3), ("n_exp", 4), ("total_effort", 5)):
            vals = np.array([float(r[col]) for r in sel])
            stats[f"{name}_mean"] = float(vals.mean()) if len(vals) else None
            stats[f"{name}_std"] = float(vals.std()) if len(vals) else None
        out[mode] = stats
    m, e = out["mfes"]["n_exp_mean"], out["es"]["n_exp_mean"]
    out["physical_reduction_percent"] = (100.0 * (e - m) / e) if m is not None and e else None
    return out


def compare(exp, root):
    """Both modes over every configured seed; returns (rows, aggregate, aborted seeds)."""
    root = Path(root)
    rows, aborted, located = [], [], {}
    for mode in ("mfes", "es"):
        for seed in exp.config["seeds"]:
            try:
                run, summary = run_one(exp, seed, mode, root / mode / f"seed_{seed}", snapshots=False)
                located[(mode, seed)] = summary.get("located")
            except RunAborted as exc:
                log.error("%s seed %d aborted: %s", mode, seed, exc)
                run = None
                aborted.append((mode, seed))
            rows.append(comparison_row(mode, seed, run))
    _write_csv(root / "comparison.csv", COMPARISON_COLUMNS, rows)
    agg = aggregate(rows)
    if exp.synthetic is not None:
        for mode in ("mfes", "es"):
            agg[mode]["located"] = sum(1 for (m, _), ok in located.items() if m == mode and ok)
    _write_json(root / "aggregate.json", agg)
    return rows, agg, aborted
