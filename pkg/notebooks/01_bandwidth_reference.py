"""
Minimum bandwidth by Monte Carlo
================================

How much uplink bandwidth does one user need so that a 20-byte packet
arriving every frame meets a 1 ms delay bound with a given reliability?
This script answers it two ways for a user at the cell edge and one close
to the base station.
"""

import numpy as np

from urllc_l2o.baseline import solve_w_bisection, solve_w_sgd, table2
from urllc_l2o.urllc import SystemConfig, large_scale_gain, qos_exponent, sample_small_scale

cfg = SystemConfig()
print("QoS exponent at the default target:", round(qos_exponent(cfg), 5))

# bisection on a fixed set of fading draws; every grid cell shares them
for row in table2(cfg, mc_samples=1_000_000, seed=0):
    print(f"d = {row['d_m']:5.0f} m   eps = {row['epsilon_max']:.0e}   W* = {row['W_star_MHz']:.4f} MHz")

# Robbins-Monro needs no sample set, only a step schedule
a = large_scale_gain(250.0)
w_sgd, path = solve_w_sgd(a, cfg, rng=np.random.default_rng(1), return_path=True)
g = sample_small_scale(np.random.default_rng(2), cfg.num_antennas, 1_000_000)
w_bis = solve_w_bisection(a, cfg, samples=g)
print(f"250 m: stochastic approximation {w_sgd / 1e6:.4f} MHz, bisection {w_bis / 1e6:.4f} MHz")

# the iterates settle long before the last step
for t in (1_000, 10_000, 100_000, len(path) - 1):
    print(f"  iter {t:>6}: {path[t] / 1e6:.4f} MHz")

# tightening reliability by 10x costs only a few percent more bandwidth
edge = [solve_w_bisection(a, cfg, eps_target=e, samples=g) for e in (1e-4, 1e-5, 1e-6, 1e-7)]
print("per-decade increase:", np.round(np.diff(edge) / edge[:-1], 4))
