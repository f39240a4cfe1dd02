"""
Training with a reliability margin
==================================

A learned policy is slightly off the optimum, so about half of the users
fall short when training uses the exact target. Training against a stricter
reliability buys availability for a small amount of extra bandwidth.
This is a scaled-down sweep; the acceptance suite runs the full one.
"""

from urllc_l2o import evaluate as ev
from urllc_l2o.urllc import SystemConfig

cfg = SystemConfig()
check = ev.oracle_grid(cfg, n_points=41, mc_samples=500_000, seed=0)
reports = ev.table3(cfg, (1e-5, 1e-6, 1e-7), n_runs=5, n_alpha=100, mc_samples=200_000,
                    seed=0, check_oracle=check)
print("eps_D    availability   W_tilde")
for r in reports:
    print(f"{r.eps_d:.0e}   {r.availability:10.3f}   {100 * r.w_tilde:6.2f} %")
