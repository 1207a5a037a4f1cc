"""The multi-fidelity entropy-search loop and its plain (physical-only) baseline."""

import csv
import json
import logging
import time
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import entropy_search as es
from .errors import InvalidArgumentError, NumericalConditioningError, RunAborted
from .gp import ExtendedPoint

log = logging.getLogger(__name__)

ITERATION_COLUMNS = ["index", "theta", "delta", "cost", "cumulative_effort", "theta_bg",
                     "mu_bg", "sigma_bg", "pmin_entropy"]


@dataclass
class ObjectivePair:
    """Cost callables ``f(theta, rng) -> float`` for the simulator and the physical system.

    Both must be total over ``bounds``: instability is a penalty value, never an exception.
    """

    eval_sim: Callable
    eval_exp: Callable
    bounds: np.ndarray


@dataclass(frozen=True)
class EffortModel:
    t_sim: float = 1.0
    t_exp: float = 30.0

    def __post_init__(self):
        for v in (self.t_sim, self.t_exp):
            if not (np.isfinite(v) and v > 0):
                raise InvalidArgumentError("efforts must be finite and positive")

    def of(self, delta):
        return self.t_exp if delta == 1 else self.t_sim


@dataclass(frozen=True)
class StoppingRule:
    window: int = 3
    mean_band: float = 0.0196 / 4
    std_cap: float = 0.0196 / 2
    max_iterations: int = 60
    max_total_effort: float = 40 * 30.0

    def __post_init__(self):
        if self.window < 1 or not (self.mean_band > 0 and self.std_cap > 0):
            raise InvalidArgumentError("window must be >= 1 and bands positive")
        if self.max_iterations < 0 or not self.max_total_effort > 0:
            raise InvalidArgumentError("budgets must be nonnegative")

    @classmethod
    def from_kernel(cls, gp, efforts, window=3, max_iterations=60, max_total_effort=None):
        """Thresholds sigma_err / 4 (mean band) and sigma_err / 2 (std cap)."""
        sigma_err = np.sqrt(gp.kernel.k_err.output_variance)
        if max_total_effort is None:
            max_total_effort = 40 * efforts.t_exp
        return cls(window, sigma_err / 4, sigma_err / 2, max_iterations, max_total_effort)


@dataclass(frozen=True)
class EsSettings:
    R: int = 200
    S: int = 1000
    F: int = 20
    strategy: str = "posterior-weighted-sample"
    temperature: float = 0.1
    max_representers: int = es.MAX_REPRESENTERS
    max_samples: int = es.MAX_FANTASY_SAMPLES


@dataclass
class IterationRecord:
    index: int
    theta: list
    delta: int
    cost: float
    cumulative_effort: float
    theta_bg: list
    mu_bg: float
    sigma_bg: float
    pmin_entropy: float
    wall_time: float = field(default=0.0, compare=False)

    def data(self):
        return {k: getattr(self, k) for k in ITERATION_COLUMNS}


@dataclass
class FinalRecord:
    theta_bg: list
    cost: float
    stop_reason: str
    mu_bg: float = float("nan")
    sigma_bg: float = float("nan")


@dataclass
class RunLog:
    mode: str
    seed: int
    iterations: list = field(default_factory=list)
    final: FinalRecord = None
    model: object = field(default=None, repr=False, compare=False)  # GP after the last observation

    @property
    def n_sim(self):
        return sum(1 for r in self.iterations if r.delta == 0)

    @property
    def n_exp(self):
        return sum(1 for r in self.iterations if r.delta == 1)

    @property
    def total_effort(self):
        return self.iterations[-1].cumulative_effort if self.iterations else 0.0

    def to_dict(self):
        """Deterministic content only; wall-clock times live in :meth:`timing`."""
        return {
            "mode": self.mode,
            "seed": self.seed,
            "iterations": [r.data() for r in self.iterations],
            "final": None if self.final is None else vars(self.final).copy(),
        }

    def timing(self):
        return {"wall_time": [r.wall_time for r in self.iterations]}

    def write_json(self, path):
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            json.dump(self.to_dict(), fh, indent=2, allow_nan=True)
            fh.write("\n")

    def write_csv(self, path):
        with open(path, "w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(ITERATION_COLUMNS)
            for r in self.iterations:
                row = r.data()
                writer.writerow([_fmt(row[k]) for k in ITERATION_COLUMNS])


def _fmt(v):
    if isinstance(v, (list, tuple, np.ndarray)):
        return " ".join(repr(float(x)) for x in v)
    if isinstance(v, float):
        return repr(v)
    return str(v)


def check_stopping(log, gp, rule):
    """(stop, reason) with reason "converged", "budget" or None.

    Converged needs the last ``window`` posterior means at the best guess to fit
    inside a band of width ``mean_band`` and the posterior std at the latest best
    guess to be below ``std_cap``.  The std is recomputed from ``gp`` when one is
    given, otherwise the logged value is used.
    """
    records = log.iterations
    budget = len(records) >= rule.max_iterations or log.total_effort >= rule.max_total_effort
    if len(records) >= rule.window:
        recent = [r.mu_bg for r in records[-rule.window:]]
        flat = max(recent) - min(recent) <= rule.mean_band
        sigma = records[-1].sigma_bg
        if gp is not None:
            _, var = gp.predict(np.asarray(records[-1].theta_bg)[None], 1)
            sigma = float(np.sqrt(var[0]))
        if flat and sigma < rule.std_cap:
            return True, "converged"
    if budget:
        return True, "budget"
    return False, None


def seed_stream(seed, *tags):
    return np.random.SeedSequence([int(seed), *tags])


def rng_stream(seed, *tags):
    return np.random.default_rng(seed_stream(seed, *tags))


TAG_ACQ, TAG_OBJ, TAG_GRID, TAG_PMIN, TAG_FINAL, TAG_SNAPSHOT = range(6)


def _representers(gp, bounds, settings, rng):
    if gp.n == 0 or settings.strategy == "uniform-grid":
        return es.build_representers(bounds, settings.R, strategy="uniform-grid",
                                     max_size=settings.max_representers)
    return es.build_representers(bounds, settings.R, gp, settings.strategy, rng,
                                 settings.temperature, settings.max_representers)


def run_mfes(objective, gp, settings=None, efforts=None, stop=None, seed=0,
             initial=(), mode="mfes", callback=None):
    """Run the multi-fidelity loop until convergence or budget, then check the best guess physically.

    ``gp`` is the prior model (possibly already holding data).  ``initial`` lists
    ``(theta, delta)`` evaluations performed before any acquisition.  With
    ``mode="es"`` only physical evaluations are considered.  ``callback(it, gp,
    grid, acq)`` is called after each acquisition, before the chosen point is
    evaluated, so ``acq`` scores line up with ``grid`` (used for posterior snapshots).
    """
    if mode not in ("mfes", "es"):
        raise InvalidArgumentError(f"unknown mode {mode!r}")
    settings = settings or EsSettings()
    efforts = efforts or EffortModel()
    stop = stop or StoppingRule.from_kernel(gp, efforts)
    bounds = np.asarray(objective.bounds, dtype=float)
    sources = (0, 1) if mode == "mfes" else (1,)
    run = RunLog(mode=mode, seed=int(seed))
    counts = {0: 0, 1: 0}
    grid = _representers(gp, bounds, settings, rng_stream(seed, TAG_GRID, 0))
    theta_bg = es.best_guess(gp, bounds, grid)

    def evaluate(it, theta, delta, gp):
        nonlocal grid, theta_bg
        t0 = time.perf_counter()
        fn = objective.eval_exp if delta == 1 else objective.eval_sim
        y = float(fn(np.array(theta), rng_stream(seed, TAG_OBJ, it)))
        gp = gp.add_observation(ExtendedPoint(theta, delta), y)
        counts[delta] += 1
        grid = _representers(gp, bounds, settings, rng_stream(seed, TAG_GRID, it + 1))
        theta_bg = es.best_guess(gp, bounds, grid)
        mu, var = gp.predict(theta_bg[None], 1)
        pmin = es.estimate_pmin(gp, grid, settings.S, seed_stream(seed, TAG_PMIN, it))
        run.iterations.append(IterationRecord(
            index=it, theta=[float(v) for v in theta], delta=int(delta), cost=y,
            cumulative_effort=efforts.t_sim * counts[0] + efforts.t_exp * counts[1],
            theta_bg=[float(v) for v in theta_bg], mu_bg=float(mu[0]),
            sigma_bg=float(np.sqrt(var[0])), pmin_entropy=pmin.entropy,
            wall_time=time.perf_counter() - t0))
        return gp

    try:
        for theta, delta in initial:
            if len(run.iterations) >= stop.max_iterations:
                break
            gp = evaluate(len(run.iterations), np.atleast_1d(np.asarray(theta, float)), int(delta), gp)
        reason = None
        while True:
            done, reason = check_stopping(run, None, stop)
            if done:
                break
            it = len(run.iterations)
            acq = es.select_next(gp, grid.points, (efforts.t_sim, efforts.t_exp), grid,
                                 settings.F, settings.S, seed_stream(seed, TAG_ACQ, it),
                                 settings.max_samples, sources)
            log.debug("iteration %d: theta=%s delta=%d score=%.3g", it, acq.best_theta,
                      acq.best_delta, acq.score)
            if callback is not None:
                callback(it, gp, grid, acq)
            gp = evaluate(it, acq.best_theta, acq.best_delta, gp)
    except NumericalConditioningError as exc:
        raise RunAborted(str(exc), log=run, jitter=getattr(exc, "jitter", None)) from exc

    mu, var = gp.predict(theta_bg[None], 1)
    final_cost = float(objective.eval_exp(np.array(theta_bg), rng_stream(seed, TAG_FINAL)))
    run.final = FinalRecord([float(v) for v in theta_bg], final_cost, reason,
                            float(mu[0]), float(np.sqrt(var[0])))
    run.model = gp
    return run


def run_es_baseline(objective, gp, settings=None, efforts=None, stop=None, seed=0,
                    initial=(), callback=None):
    """Entropy search on the physical system only (same loop, simulations excluded)."""
    initial = [(th, d) for th, d in initial if int(d) == 1]
    return run_mfes(objective, gp, settings, efforts, stop, seed, initial, "es", callback)
