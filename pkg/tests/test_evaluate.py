import numpy as np
import pytest

from urllc_l2o import evaluate as ev
from urllc_l2o.baseline import solve_w_bisection
from urllc_l2o.learner import TrainerConfig, train, urllc_problem
from urllc_l2o.urllc import SystemConfig, large_scale_gain, sample_small_scale


@pytest.fixture(scope="module")
def small_oracle():
    return ev.oracle_grid(SystemConfig(), n_points=21, mc_samples=200_000, seed=1)


@pytest.fixture(scope="module")
def short_run():
    pb = urllc_problem(SystemConfig())
    return train(pb, TrainerConfig(iterations=1500, seed=0, snapshot_every=500))


def test_sigma_trivial():
    w = np.linspace(0.2e6, 0.5e6, 50)
    assert ev.sigma(w, w) == 0.0
    assert ev.sigma(1.01 * w, w) == pytest.approx(0.01, rel=1e-12)
    with pytest.raises(ValueError):
        ev.sigma([], [])


def test_bandwidth_loss_constant_excess():
    w = np.linspace(0.2e6, 0.5e6, 300)
    assert ev.bandwidth_loss(1.033 * w, w) == pytest.approx(0.033, rel=1e-9)
    excess = np.r_[np.zeros(99), 1.0]
    assert ev.bandwidth_loss(w[:100] * (1 + excess), w[:100], 0.5) == pytest.approx(0.0, abs=1e-12)


def test_oracle_grid_values_and_interpolation(small_oracle):
    o = small_oracle
    assert o.w_star[0] / 1e6 == pytest.approx(0.208, rel=0.05)
    assert o.w_star[-1] / 1e6 == pytest.approx(0.527, rel=0.05)
    assert np.all(np.diff(o.w_star) > 0)
    np.testing.assert_allclose(o(o.alpha), o.w_star, rtol=1e-10)
    # off-grid point against a direct solve on the oracle's own samples
    samples = sample_small_scale(ev.child_rng(1, "oracle"), 8, 200_000)
    a = large_scale_gain(137.0)
    direct = solve_w_bisection(a, SystemConfig(), samples=samples)
    assert o(a) == pytest.approx(direct, rel=1e-3)


def test_oracle_grid_roundtrip(tmp_path, small_oracle):
    path = tmp_path / "oracle.csv"
    small_oracle.save(path)
    back = ev.OracleGrid.load(path)
    np.testing.assert_array_equal(back.w_star, small_oracle.w_star)
    np.testing.assert_array_equal(back.d, small_oracle.d)
    assert (back.eps, back.mc_samples, back.seed) == (1e-5, 200_000, 1)


def test_oracle_grid_rejects_empty():
    with pytest.raises(ValueError):
        ev.OracleGrid([], [], 1e-5)


def test_constraint_check_brackets_the_root():
    cfg = SystemConfig()
    samples = sample_small_scale(np.random.default_rng(3), 8, 100_000)
    a = large_scale_gain(220.0)
    w = solve_w_bisection(a, cfg, samples=samples, tol=10.0)
    ok = ev.constraint_satisfied([w, w - 20.0, 10 * w, 1e3], a, cfg, samples)
    assert ok.tolist() == [True, False, True, False]


def test_availability_from_bandwidths_limits():
    cfg = SystemConfig()
    samples = sample_small_scale(np.random.default_rng(4), 8, 100_000)
    alphas = large_scale_gain(np.array([60.0, 160.0, 240.0]))
    big = np.full((2, 3), 5e6)
    assert ev.availability_from_bandwidths(big, alphas, cfg, samples)[0] == 1.0
    assert ev.availability_from_bandwidths(big / 100, alphas, cfg, samples)[0] == 0.0
    half = np.array([[5e6, 5e6, 5e4], [5e4, 5e4, 5e6]])
    avail, ok = ev.availability_from_bandwidths(half, alphas, cfg, samples)
    assert avail == 0.5 and ok.shape == (2, 3)


def test_tighter_check_lowers_availability():
    cfg = SystemConfig()
    samples = sample_small_scale(np.random.default_rng(5), 8, 100_000)
    a = large_scale_gain(250.0)
    w = solve_w_bisection(a, cfg, samples=samples, tol=10.0)
    assert ev.constraint_satisfied([w], a, cfg, samples)[0]
    assert not ev.constraint_satisfied([w], a, cfg, samples, eps_check=1e-7)[0]


def test_availability_needs_enough_samples(short_run):
    with pytest.raises(ValueError):
        ev.availability([short_run], SystemConfig(), mc_samples=10_000)


def test_sigma_curve_from_snapshots(short_run, small_oracle):
    curve = ev.sigma_curve([short_run, short_run], small_oracle, SystemConfig())
    assert [it for it, _ in curve] == [0, 500, 1000, 1500]
    assert curve[-1][1] < curve[0][1]
    assert curve[-1][1] == pytest.approx(ev.accuracy_sigma(short_run, small_oracle, SystemConfig()))


def test_sigma_curve_requires_snapshots(small_oracle):
    pair = train(urllc_problem(SystemConfig()), TrainerConfig(iterations=5, seed=0))
    with pytest.raises(ValueError):
        ev.sigma_curve([pair], small_oracle, SystemConfig())


def test_evaluate_runs_rows(short_run, small_oracle):
    cfg = SystemConfig()
    rng = np.random.default_rng(6)
    alphas = ev.sample_alphas(cfg, rng, 7)
    samples = sample_small_scale(rng, 8, 100_000)
    rep = ev.evaluate_runs([short_run], [42], 1e-5, cfg, small_oracle, alphas, samples, small_oracle)
    assert len(rep.per_alpha_rows) == 7 and set(rep.per_alpha_rows[0]) == set(ev.PER_ALPHA_COLUMNS)
    assert rep.table3_row() == {"eps_D": 1e-5, "availability": rep.availability,
                                "w_tilde": rep.w_tilde, "n_runs": 1, "n_alpha": 7}
    assert len(rep.sigma_curve) == 4
    with pytest.raises(ValueError):
        ev.EvalReport(1e-5, [], 1.5, 0.0, [{}], 1)
