import csv
import math

import numpy as np
import pytest
from scipy.optimize import brentq

from urllc_l2o.baseline import (TABLE2_COLUMNS, InfeasibleError, StepSchedule, solve_w_bisection,
                                solve_w_sgd, table2, write_csv)
from urllc_l2o.urllc import achievable_rate, large_scale_gain, sample_small_scale

TABLE2 = {250.0: [0.512, 0.527, 0.542, 0.556], 50.0: [0.204, 0.208, 0.211, 0.213]}
EPS = [1e-4, 1e-5, 1e-6, 1e-7]


@pytest.fixture(scope="module")
def shared_samples():
    return sample_small_scale(np.random.default_rng(77), 8, 1_000_000)


def test_schedule():
    s = StepSchedule(1e5, "robbins_monro", 1000)
    assert s(0) == 1e5 and s(1000) == pytest.approx(5e4)
    assert StepSchedule(3.0, "constant")(10**6) == 3.0
    with pytest.raises(ValueError):
        StepSchedule(0.0)
    with pytest.raises(ValueError):
        StepSchedule(1.0, "bogus")


@pytest.mark.parametrize("d, expected_mhz", [(250.0, 0.527), (50.0, 0.208)])
def test_sgd_matches_table(cfg, d, expected_mhz):
    w = solve_w_sgd(large_scale_gain(d), cfg, iters=200_000, rng=np.random.default_rng(5))
    assert w / 1e6 == pytest.approx(expected_mhz, rel=0.05)


def test_sgd_deterministic_channel_finds_rate_root(cfg):
    a = large_scale_gain(150.0)
    qinv_eps = cfg.decoding_error
    root = brentq(lambda W: achievable_rate(W, a, 8.0, qinv_eps, cfg) - cfg.arrival_rate, 1e4, 1e7,
                  xtol=1e-6)
    w = solve_w_sgd(a, cfg, iters=50_000, rng=np.random.default_rng(0),
                    g_sampler=lambda rng, n: np.full(n, 8.0))
    assert w == pytest.approx(root, rel=1e-6)


def test_sgd_rejects_bad_input(cfg):
    with pytest.raises(ValueError):
        solve_w_sgd(1e-12, cfg, iters=0)
    with pytest.raises(ValueError):
        solve_w_sgd(0.0, cfg, iters=10)


@pytest.mark.parametrize("d", [50.0, 150.0, 250.0])
def test_sgd_and_bisection_agree(cfg, shared_samples, d):
    a = large_scale_gain(d)
    wb = solve_w_bisection(a, cfg, samples=shared_samples)
    ws = solve_w_sgd(a, cfg, rng=np.random.default_rng(int(d)))
    assert ws == pytest.approx(wb, rel=0.01)


def test_bisection_reliability_sweep_at_cell_edge(cfg, shared_samples):
    a = large_scale_gain(250.0)
    ws = [solve_w_bisection(a, cfg, eps_target=e, samples=shared_samples) / 1e6 for e in EPS]
    for w, ref in zip(ws, TABLE2[250.0]):
        assert w == pytest.approx(ref, rel=0.05)
    assert all(np.diff(ws) > 0)


def test_bisection_result_is_tight(cfg, shared_samples):
    from urllc_l2o.urllc import constraint_value, qos_exponent

    a = large_scale_gain(200.0)
    w = solve_w_bisection(a, cfg, samples=shared_samples, tol=100.0)
    theta = qos_exponent(cfg)
    assert constraint_value(w, a, theta, cfg, shared_samples) <= 0
    assert constraint_value(w - 100.0, a, theta, cfg, shared_samples) > 0


def test_better_channel_needs_less_bandwidth(cfg, shared_samples):
    ws = [solve_w_bisection(large_scale_gain(d), cfg, samples=shared_samples)
          for d in (50.0, 100.0, 150.0, 200.0, 250.0)]
    assert all(np.diff(ws) > 0)


def test_bisection_infeasible_raises(cfg):
    with pytest.raises(InfeasibleError):
        solve_w_bisection(1e-25, cfg, mc_samples=1000, rng=np.random.default_rng(0))


def test_sgd_iterates_stabilise(cfg):
    a = large_scale_gain(250.0)

    def tail_var(iters):
        _, path = solve_w_sgd(a, cfg, iters=iters, rng=np.random.default_rng(1), return_path=True)
        return np.var(path[-iters // 10:])

    assert tail_var(200_000) < tail_var(20_000)


def test_table2_grid(cfg, tmp_path):
    rows = table2(cfg, mc_samples=1_000_000, seed=0)
    assert len(rows) == 8
    for row in rows:
        ref = TABLE2[row["d_m"]][EPS.index(row["epsilon_max"])]
        assert row["W_star_MHz"] == pytest.approx(ref, rel=0.05)
    edge = [r["W_star_MHz"] for r in rows if r["d_m"] == 250.0]
    per_decade = np.diff(edge) / np.array(edge[:-1])
    assert np.all((per_decade > 0.02) & (per_decade < 0.04))

    path = tmp_path / "table2.csv"
    write_csv(rows, path, TABLE2_COLUMNS)
    with open(path) as fh:
        read = list(csv.DictReader(fh))
    assert tuple(read[0]) == TABLE2_COLUMNS
    assert float(read[1]["W_star_MHz"]) == rows[1]["W_star_MHz"]


def test_table2_single_cell(cfg):
    rows = table2(cfg, distances=[250.0], reliabilities=[1e-5], mc_samples=1_000_000, seed=3)
    assert rows[0]["W_star_MHz"] == pytest.approx(0.527, rel=0.05)
    assert math.isclose(rows[0]["epsilon_max"], 1e-5)
