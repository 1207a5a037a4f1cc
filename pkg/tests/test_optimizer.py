import csv
import json

import numpy as np
import pytest

from mfes import config
from mfes.errors import NumericalConditioningError, RunAborted
from mfes.gp import CompositeKernel, GpModel, KernelSpec, MeanModel, NoiseModel
from mfes.optimizer import (ITERATION_COLUMNS, EffortModel, EsSettings, FinalRecord,
                            IterationRecord, ObjectivePair, RunLog, StoppingRule, check_stopping,
                            run_es_baseline, run_mfes)
from mfes.synthetic import Dip, SyntheticPair

SMALL = EsSettings(R=25, S=200, F=5)


def record(i, mu, sigma, delta=1, effort=0.0):
    return IterationRecord(i, [0.0], delta, mu, effort, [0.5], mu, sigma, 1.0)


def log_of(mus, sigma):
    return RunLog("mfes", 0, [record(i, m, sigma) for i, m in enumerate(mus)])


def small_gp(var_sim=0.04, var_err=0.01, m_sim=0.3, m_err=0.0):
    k = CompositeKernel(KernelSpec("rational-quadratic", var_sim, (0.15,), 0.25),
                        KernelSpec("rational-quadratic", var_err, (0.3,), 0.25))
    return GpModel(k, MeanModel(m_sim, m_err), NoiseModel(1e-3, 5e-3))


def small_pair(**kw):
    return SyntheticPair(level=0.6, dips=(Dip(0.3, 0.5, 0.1),), bias_offset=0.05,
                         eta_exp=5e-3, eta_sim=1e-3, **kw)


# stopping rule ------------------------------------------------------------------

def test_reference_trace_converges():
    rule = StoppingRule(3, 0.0196 / 4, 0.0196 / 2)
    assert check_stopping(log_of([0.020, 0.0201, 0.0199], 0.004), None, rule) == (True, "converged")


def test_window_not_filled():
    rule = StoppingRule(3, 0.0196 / 4, 0.0196 / 2)
    assert check_stopping(log_of([0.020, 0.0201], 0.004), None, rule) == (False, None)


def test_std_above_cap_blocks_convergence():
    rule = StoppingRule(3, 0.0196 / 4, 0.0196 / 2)
    assert check_stopping(log_of([0.020, 0.020, 0.020], 0.0099), None, rule) == (False, None)


def test_wide_mean_band_blocks_convergence():
    rule = StoppingRule(3, 0.0196 / 4, 0.0196 / 2)
    assert check_stopping(log_of([0.020, 0.030, 0.020], 0.001), None, rule) == (False, None)


def test_budget_caps():
    rule = StoppingRule(3, 1e-9, 1e-9, max_iterations=4, max_total_effort=100.0)
    assert check_stopping(log_of([1, 2, 3, 4], 1.0), None, rule) == (True, "budget")
    log = RunLog("mfes", 0, [record(0, 1.0, 1.0, effort=100.0)])
    assert check_stopping(log, None, rule) == (True, "budget")


def test_stopping_std_recomputed_from_model():
    gp = small_gp()  # prior std 0.22 at any point, far above the cap
    rule = StoppingRule(3, 0.01, 0.1)
    assert check_stopping(log_of([0.1, 0.1, 0.1], 0.0), gp, rule) == (False, None)


def test_from_kernel_thresholds():
    gp = GpModel(CompositeKernel(KernelSpec("rational-quadratic", 1.6e-5, (1.0,), 0.25),
                                 KernelSpec("rational-quadratic", 3.84e-4, (1.0,), 0.25)))
    rule = StoppingRule.from_kernel(gp, EffortModel(1, 30))
    assert rule.mean_band == pytest.approx(np.sqrt(3.84e-4) / 4)
    assert rule.std_cap == pytest.approx(np.sqrt(3.84e-4) / 2)
    assert rule.max_total_effort == 1200


def test_effort_validation():
    with pytest.raises(ValueError):
        EffortModel(0.0, 1.0)
    with pytest.raises(ValueError):
        StoppingRule(0, 1.0, 1.0)


# run loop -------------------------------------------------------------------------

def test_zero_iteration_budget_still_checks_best_guess():
    pair = small_pair()
    calls = []
    obj = ObjectivePair(pair.objective().eval_sim,
                        lambda th, rng: calls.append(th) or pair.f_exp(th[0]), np.array([pair.bounds]))
    stop = StoppingRule(3, 1e-3, 1e-3, max_iterations=0)
    run = run_mfes(obj, small_gp(), SMALL, EffortModel(1, 10), stop, seed=0)
    assert run.iterations == [] and run.final.stop_reason == "budget"
    assert len(calls) == 1 and np.array_equal(calls[0], run.final.theta_bg)


def test_effort_ledger_and_final_record():
    efforts = EffortModel(1.0, 10.0)
    stop = StoppingRule(3, 1e-3, 5e-3, max_iterations=12)
    run = run_mfes(small_pair().objective(), small_gp(), SMALL, efforts, stop, seed=1)
    for i, r in enumerate(run.iterations):
        sims = sum(1 for q in run.iterations[:i + 1] if q.delta == 0)
        exps = i + 1 - sims
        assert r.cumulative_effort == sims * 1.0 + exps * 10.0
    assert run.total_effort == run.n_sim + 10.0 * run.n_exp
    assert run.final.stop_reason in ("converged", "budget")
    assert np.isfinite(run.final.cost)


def test_baseline_is_physical_only():
    stop = StoppingRule(3, 1e-3, 5e-3, max_iterations=8)
    run = run_es_baseline(small_pair().objective(), small_gp(), SMALL, EffortModel(1, 10), stop,
                          seed=2, initial=[([0.5], 0), ([0.2], 1)])
    assert run.mode == "es" and run.n_sim == 0 and run.n_exp == len(run.iterations)
    assert run.iterations[0].theta == [0.2]


def test_runs_are_reproducible():
    stop = StoppingRule(3, 1e-3, 5e-3, max_iterations=8)
    a = run_mfes(small_pair().objective(), small_gp(), SMALL, EffortModel(1, 10), stop, seed=3)
    b = run_mfes(small_pair().objective(), small_gp(), SMALL, EffortModel(1, 10), stop, seed=3)
    assert a.to_dict() == b.to_dict()


def test_cheap_exact_simulator_is_preferred():
    pair = small_pair()
    exact = ObjectivePair(lambda th, rng: pair.f_exp(th[0]), lambda th, rng: pair.f_exp(th[0]),
                          np.array([pair.bounds]))
    gp = GpModel(small_gp().kernel, MeanModel(0.3, 0.0), NoiseModel(1e-3, 1e-3))
    stop = StoppingRule(3, 1e-3, 5e-3, max_iterations=10)
    fractions = []
    for seed in range(10):
        run = run_mfes(exact, gp, SMALL, EffortModel(1.0, 30.0), stop, seed=seed)
        fractions.append(run.n_sim / len(run.iterations))
    assert np.mean(fractions) >= 0.5


@pytest.mark.slow
def test_both_sources_used_when_simulation_is_forty_percent_cheaper():
    cfg = config.load(config.default_config_path("synthetic1d"))
    cfg["efforts"] = {"t_sim": 6.0, "t_exp": 10.0}
    exp = config.build(cfg)
    early = 0
    for seed in range(10):
        run = run_mfes(exp.objective, exp.gp, exp.settings, exp.efforts, exp.stop, seed)
        assert run.n_sim >= 1 and run.n_exp >= 1, seed
        deltas = [r.delta for r in run.iterations]
        second_exp = [i for i, d in enumerate(deltas) if d == 1][1:2]
        cut = second_exp[0] if second_exp else len(deltas)
        early += 0 in deltas[:cut]
    assert early >= 7


def test_numerical_failure_attaches_partial_log(monkeypatch):
    from mfes import optimizer

    real_select = optimizer.es.select_next
    calls = {"n": 0}

    def flaky(*args, **kw):
        calls["n"] += 1
        if calls["n"] == 3:
            raise NumericalConditioningError("ill-conditioned", jitter=1e-4)
        return real_select(*args, **kw)

    monkeypatch.setattr(optimizer.es, "select_next", flaky)
    stop = StoppingRule(3, 1e-9, 1e-9, max_iterations=10)
    with pytest.raises(RunAborted) as info:
        run_mfes(small_pair().objective(), small_gp(), SMALL, EffortModel(1, 10), stop, seed=0)
    assert len(info.value.log.iterations) == 2
    assert info.value.jitter == 1e-4
    assert isinstance(info.value, NumericalConditioningError)


# serialization -----------------------------------------------------------------------

def test_json_and_csv_writers(tmp_path):
    log = RunLog("mfes", 7, [record(0, 0.1, 0.01, delta=0, effort=1.0),
                             record(1, 0.2, 0.02, delta=1, effort=31.0)],
                 FinalRecord([0.5], 0.15, "budget", 0.1, 0.01))
    log.iterations[0].wall_time = 1.23
    log.write_json(tmp_path / "log.json")
    log.write_csv(tmp_path / "log.csv")
    data = json.loads((tmp_path / "log.json").read_text())
    assert data["seed"] == 7 and data["final"]["stop_reason"] == "budget"
    assert "wall_time" not in data["iterations"][0]
    rows = list(csv.reader(open(tmp_path / "log.csv")))
    assert rows[0] == ITERATION_COLUMNS and len(rows) == 3
    assert float(rows[2][ITERATION_COLUMNS.index("cumulative_effort")]) == 31.0
    assert log.timing() == {"wall_time": [1.23, 0.0]}
