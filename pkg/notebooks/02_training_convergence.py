"""
Learning the bandwidth policy without labels
=============================================

A decision network maps the user's large-scale gain to a bandwidth and a
multiplier network learns the price of the QoS constraint. Neither sees the
reference solution; it is only used here, afterwards, to score them.
"""

import numpy as np

from urllc_l2o import evaluate as ev
from urllc_l2o.learner import TrainerConfig, kkt_residual, train, urllc_problem
from urllc_l2o.urllc import SystemConfig, large_scale_gain

cfg = SystemConfig()
problem = urllc_problem(cfg)

# reference curve on a coarse grid, for scoring only
oracle = ev.oracle_grid(cfg, n_points=41, mc_samples=500_000, seed=0)

pairs = [train(problem, TrainerConfig(seed=s, snapshot_every=1000)) for s in range(5)]
for it, sig in ev.sigma_curve(pairs, oracle, cfg):
    print(f"iter {it:>5}  mean sigma {sig:.4f}")

# stationarity of the Lagrangian in both networks
k = kkt_residual(pairs[0], problem, 10_000, np.random.default_rng(0))
print("KKT residual norms:", round(k.primal_norm, 5), round(k.dual_norm, 5))

# learned policy next to the reference
d = np.array([50.0, 100.0, 150.0, 200.0, 250.0])
w_hat = problem.bandwidth_hz(pairs[0].primal, large_scale_gain(d))
for di, wh, ws in zip(d, w_hat, oracle(large_scale_gain(d))):
    print(f"d = {di:5.0f} m   learned {wh / 1e6:.4f} MHz   reference {ws / 1e6:.4f} MHz")

# the multiplier is larger where the constraint is harder to meet
lam = pairs[0].dual.predict(problem.encode(large_scale_gain(d)[:, None]))[:, 0]
print("multiplier:", np.round(lam, 3))
