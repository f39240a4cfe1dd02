"""Per-channel minimum bandwidth ``W*(alpha)``.

Two independent solvers:

* :func:`solve_w_sgd` -- Robbins-Monro iteration on the linearised QoS
  constraint, one fresh fading draw per step.
* :func:`solve_w_bisection` -- bisection on a Monte Carlo estimate of the
  constraint with common random numbers. This is the reference used to score
  learned solutions.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

from .seeding import child_rng
from .urllc import (_rate_from_coeff, inv_q, large_scale_gain, qos_exponent,
                    sample_small_scale, snr_coefficient)

W_FLOOR = 1e3  # Hz; keeps the iterate away from the singular point W = 0

TABLE2_COLUMNS = ("d_m", "epsilon_max", "W_star_MHz", "method", "mc_samples", "seed")


class InfeasibleError(RuntimeError):
    """No bandwidth inside the search bracket satisfies the QoS constraint."""


@dataclass(frozen=True)
class StepSchedule:
    """Step sizes ``phi(t)`` in Hz per unit constraint residual.

    ``kind="robbins_monro"`` gives ``initial / (1 + t / offset)``;
    ``kind="constant"`` gives ``initial`` at every step.
    """

    initial: float = 1e5
    kind: str = "robbins_monro"
    offset: float = 1000.0

    def __post_init__(self):
        if not self.initial > 0:
            raise ValueError("initial step must be positive")
        if self.kind not in ("constant", "robbins_monro"):
            raise ValueError(f"unknown schedule kind {self.kind!r}")
        if self.kind == "robbins_monro" and not self.offset > 0:
            raise ValueError("offset must be positive")

    def __call__(self, t):
        if self.kind == "constant":
            return self.initial
        return self.initial / (1.0 + t / self.offset)


def solve_w_sgd(alpha, cfg, sched=StepSchedule(), iters=200_000, rng=None, w0=1e6,
                g_sampler=None, return_path=False):
    """Stochastic fixed-point iteration for the minimum bandwidth.

    ``W <- max(W + phi(t) * (exp(-theta* s_t) - exp(-theta* m)), W_FLOOR)``
    with ``s_t`` the rate for a fresh small-scale draw. No convergence check
    is done; compare against :func:`solve_w_bisection`.

    Parameters
    ----------
    alpha : float
        Large-scale gain.
    cfg : SystemConfig
    sched : StepSchedule
    iters : int
    rng : numpy.random.Generator
    w0 : float
        Starting bandwidth in Hz.
    g_sampler : callable, optional
        ``g_sampler(rng, n) -> array`` replacing the Rayleigh/MRC draw.
    return_path : bool
        Also return the full iterate sequence.

    Returns
    -------
    float or (float, ndarray)
        Final iterate in Hz.
    """
    if iters < 1:
        raise ValueError("iters must be >= 1")
    if not alpha > 0:
        raise ValueError("alpha must be positive")
    rng = np.random.default_rng() if rng is None else rng
    theta = qos_exponent(cfg)
    target = math.exp(-theta * cfg.arrival_rate)
    qinv = inv_q(cfg.decoding_error)
    if g_sampler is None:
        g = sample_small_scale(rng, cfg.num_antennas, iters)
    else:
        g = np.asarray(g_sampler(rng, iters), dtype=float)
    coeff = snr_coefficient(alpha, g, cfg).tolist()

    scale = cfg.ul_duration / (cfg.packet_size * math.log(2.0))
    tau = cfg.ul_duration
    W = float(w0)
    path = np.empty(iters) if return_path else None
    for t in range(iters):
        s = scale * (W * math.log1p(coeff[t] / W) - qinv * math.sqrt(W / tau))
        residual = (math.exp(-theta * s) if s > 0.0 else 1.0) - target
        W = max(W + sched(t) * residual, W_FLOOR)
        if return_path:
            path[t] = W
    return (W, path) if return_path else W


def _mean_penalty(W, coeff, qinv, theta, cfg):
    return float(np.mean(np.exp(-theta * _rate_from_coeff(W, coeff, qinv, cfg))))


def solve_w_bisection(alpha, cfg, eps_target=None, mc_samples=1_000_000, tol=100.0, rng=None,
                      samples=None, bracket=(1e3, 1e8)):
    """Smallest bandwidth (within ``tol`` Hz) meeting the QoS constraint.

    One set of small-scale samples is drawn up front and reused for every
    probe, so the estimated constraint is a fixed, monotone function of ``W``.

    Parameters
    ----------
    alpha : float
    cfg : SystemConfig
    eps_target : float, optional
        Overall reliability; defaults to ``cfg.reliability``.
    mc_samples : int
        Number of fading draws (ignored when ``samples`` is given).
    tol : float
        Width of the final bracket in Hz.
    rng : numpy.random.Generator
    samples : array_like, optional
        Pre-drawn small-scale gains, for sharing across solves.
    bracket : (float, float)
        Initial search interval in Hz; widened by factors of 10 if needed.

    Returns
    -------
    float
        Upper end of the final bracket, which is feasible.
    """
    if not alpha > 0:
        raise ValueError("alpha must be positive")
    if not tol > 0:
        raise ValueError("tol must be positive")
    if eps_target is not None:
        cfg = cfg.with_reliability(eps_target)
    if samples is None:
        if mc_samples < 1:
            raise ValueError("mc_samples must be >= 1")
        rng = np.random.default_rng() if rng is None else rng
        samples = sample_small_scale(rng, cfg.num_antennas, int(mc_samples))
    coeff = snr_coefficient(alpha, np.asarray(samples, dtype=float), cfg)
    theta = qos_exponent(cfg)
    target = math.exp(-theta * cfg.arrival_rate)
    qinv = inv_q(cfg.decoding_error)

    def feasible(W):
        return _mean_penalty(W, coeff, qinv, theta, cfg) <= target

    lo, hi = bracket
    for _ in range(4):
        if feasible(hi):
            break
        lo, hi = hi, hi * 10.0
    else:
        raise InfeasibleError(f"no feasible bandwidth up to {hi:.3g} Hz (alpha={alpha:.3g})")
    while lo > 1.0 and feasible(lo):
        hi, lo = lo, lo / 10.0
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if feasible(mid):
            hi = mid
        else:
            lo = mid
    return hi


def table2(cfg, distances=(250.0, 50.0), reliabilities=(1e-4, 1e-5, 1e-6, 1e-7),
           mc_samples=1_000_000, tol=100.0, seed=0):
    """Minimum bandwidth over a (distance, reliability) grid.

    All cells share one fading sample set drawn from ``seed``.

    Returns
    -------
    list of dict
        One row per cell, keys as in :data:`TABLE2_COLUMNS`.
    """
    samples = sample_small_scale(child_rng(seed, "table2"), cfg.num_antennas, int(mc_samples))
    rows = []
    for d in distances:
        alpha = large_scale_gain(d)
        for eps in reliabilities:
            w = solve_w_bisection(alpha, cfg, eps_target=eps, tol=tol, samples=samples)
            rows.append({"d_m": float(d), "epsilon_max": float(eps), "W_star_MHz": w / 1e6,
                         "method": "bisection", "mc_samples": int(mc_samples), "seed": int(seed)})
    return rows


def write_csv(rows, path, columns):
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=list(columns), lineterminator="\n")
        writer.writeheader()
        for row in rows:
            writer.writerow({k: _fmt(row[k]) for k in columns})


def _fmt(v):
    if isinstance(v, float):
        return repr(v)
    return v
