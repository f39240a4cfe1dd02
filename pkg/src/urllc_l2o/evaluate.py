"""Scoring learned bandwidth policies against the bisection reference.

Metrics
-------
sigma
    Normalised RMS error ``sqrt(mean((W_hat - W*)^2) / mean(W*^2))`` over a
    grid of distances.
availability
    Fraction of (run, channel) pairs whose learned bandwidth meets the QoS
    constraint at the target reliability, checked by Monte Carlo.
W_tilde
    99th percentile of the relative over-provisioning ``(W_hat - W*) / W*``.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import CubicSpline

from .baseline import solve_w_bisection
from .learner import TrainerConfig, UrllcProblem, train
from .nn import Mlp
from .seeding import child_rng, child_seed
from .urllc import (_rate_from_coeff, distance_from_gain, inv_q, large_scale_gain, qos_exponent,
                    sample_small_scale, snr_coefficient)

ORACLE_COLUMNS = ("d_m", "alpha", "W_star_Hz")
SIGMA_COLUMNS = ("eps_D", "iter", "sigma")
TABLE3_COLUMNS = ("eps_D", "availability", "w_tilde", "n_runs", "n_alpha")
PER_ALPHA_COLUMNS = ("eps_D", "run", "seed", "d_m", "alpha", "W_star_MHz", "W_hat_MHz",
                     "constraint_satisfied")


@dataclass
class OracleGrid:
    """Reference bandwidths ``W*(d)`` on a distance grid, for one reliability."""

    d: np.ndarray
    w_star: np.ndarray  # Hz
    eps: float
    mc_samples: int = 0
    seed: int = 0

    def __post_init__(self):
        self.d = np.asarray(self.d, dtype=float)
        self.w_star = np.asarray(self.w_star, dtype=float)
        if self.d.size == 0:
            raise ValueError("empty oracle grid")
        if self.d.shape != self.w_star.shape:
            raise ValueError("grid and values differ in length")

    @property
    def alpha(self):
        return large_scale_gain(self.d)

    def __call__(self, alpha):
        """``W*`` at arbitrary gains, by cubic interpolation in distance."""
        d = distance_from_gain(np.asarray(alpha, dtype=float))
        if self.d.size < 4:
            return np.interp(d, self.d, self.w_star)
        return CubicSpline(self.d, self.w_star)(d)

    def save(self, path):
        with open(path, "w", newline="") as fh:
            fh.write(f"# eps={self.eps!r} mc_samples={self.mc_samples} seed={self.seed}\n")
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(ORACLE_COLUMNS)
            for d, a, ws in zip(self.d, self.alpha, self.w_star):
                w.writerow([repr(float(d)), repr(float(a)), repr(float(ws))])

    @classmethod
    def load(cls, path):
        with open(path) as fh:
            header = fh.readline()
            meta = dict(kv.split("=") for kv in header.lstrip("# ").split())
            rows = list(csv.DictReader(fh))
        return cls([float(r["d_m"]) for r in rows], [float(r["W_star_Hz"]) for r in rows],
                   float(meta["eps"]), int(meta["mc_samples"]), int(meta["seed"]))


def oracle_grid(cfg, eps=None, n_points=101, mc_samples=1_000_000, tol=100.0, seed=0):
    """Bisection reference on ``n_points`` evenly spaced distances across the cell.

    One fading sample set is shared by every grid point.
    """
    eps = cfg.reliability if eps is None else float(eps)
    d = np.linspace(cfg.cell_min_d, cfg.cell_max_d, int(n_points))
    samples = sample_small_scale(child_rng(seed, "oracle"), cfg.num_antennas, int(mc_samples))
    w = [solve_w_bisection(large_scale_gain(di), cfg, eps_target=eps, tol=tol, samples=samples)
         for di in d]
    return OracleGrid(d, w, eps, int(mc_samples), int(seed))


def sigma(w_hat, w_star):
    w_hat, w_star = np.asarray(w_hat, dtype=float), np.asarray(w_star, dtype=float)
    if w_star.size == 0:
        raise ValueError("empty grid")
    return float(np.sqrt(np.mean((w_hat - w_star) ** 2) / np.mean(w_star ** 2)))


def _primal(pair_or_net):
    return pair_or_net if isinstance(pair_or_net, Mlp) else pair_or_net.primal


def learned_bandwidth(pair_or_net, alpha, cfg):
    """Bandwidth in Hz proposed by a trained decision network."""
    return UrllcProblem(cfg).bandwidth_hz(_primal(pair_or_net), alpha)


def accuracy_sigma(pair, oracle, cfg):
    """Sigma of a trained pair (or bare decision network) over the oracle grid."""
    return sigma(learned_bandwidth(pair, oracle.alpha, cfg), oracle.w_star)


def sigma_curve(pairs, oracle, cfg):
    """Mean sigma across runs at each recorded snapshot iteration.

    Returns a list of ``(iteration, sigma)``.
    """
    if not pairs or not pairs[0].snapshots:
        raise ValueError("runs carry no snapshots; train with snapshot_every > 0")
    iters = [it for it, _ in pairs[0].snapshots]
    out = []
    for k, it in enumerate(iters):
        vals = [accuracy_sigma(p.snapshots[k][1], oracle, cfg) for p in pairs]
        out.append((it, float(np.mean(vals))))
    return out


def bandwidth_loss(w_hat, w_star, exceed_prob=0.01):
    """Relative over-provisioning exceeded in only ``exceed_prob`` of cases."""
    excess = (np.asarray(w_hat, dtype=float) - np.asarray(w_star, dtype=float)) / np.asarray(w_star)
    return float(np.quantile(excess, 1.0 - exceed_prob))


def bandwidth_loss_percentile(runs, oracle, cfg, exceed_prob=0.01, alphas=None):
    """``W_tilde`` over all (run, gain) pairs; gains default to the oracle grid."""
    alphas = oracle.alpha if alphas is None else np.asarray(alphas, dtype=float)
    w_star = oracle(alphas)
    w_hat = np.concatenate([learned_bandwidth(r, alphas, cfg) for r in runs])
    return bandwidth_loss(w_hat, np.tile(w_star, len(runs)), exceed_prob)


def constraint_satisfied(w_hat, alpha, cfg, samples, eps_check=None):
    """QoS check of several bandwidths at one gain, on a shared sample set.

    Returns a boolean array, True where ``E[exp(-theta s)] <= exp(-theta m)``.
    """
    if eps_check is not None:
        cfg = cfg.with_reliability(eps_check)
    theta = qos_exponent(cfg)
    target = math.exp(-theta * cfg.arrival_rate)
    qinv = inv_q(cfg.decoding_error)
    coeff = snr_coefficient(alpha, samples, cfg)
    return np.array([np.mean(np.exp(-theta * _rate_from_coeff(w, coeff, qinv, cfg))) <= target
                     for w in np.atleast_1d(w_hat)])


def availability_from_bandwidths(w_hat, alphas, cfg, samples, eps_check=None):
    """Fraction of feasible entries in ``w_hat`` of shape ``(n_runs, n_alpha)``."""
    w_hat = np.atleast_2d(np.asarray(w_hat, dtype=float))
    ok = np.column_stack([constraint_satisfied(w_hat[:, j], a, cfg, samples, eps_check)
                          for j, a in enumerate(alphas)])
    return float(ok.mean()), ok


def sample_alphas(cfg, rng, n):
    return large_scale_gain(rng.uniform(cfg.cell_min_d, cfg.cell_max_d, size=int(n)))


def availability(runs, cfg, eps_check=None, n_alpha=200, mc_samples=1_000_000, rng=None):
    """Availability of trained runs at reliability ``eps_check`` (default ``cfg.reliability``).

    Gains are drawn from the training distribution (uniform distance). The
    constraint is checked with ``mc_samples`` common fading draws.
    """
    if mc_samples < 100_000:
        raise ValueError("availability checks need at least 1e5 Monte Carlo samples")
    rng = np.random.default_rng() if rng is None else rng
    alphas = sample_alphas(cfg, rng, n_alpha)
    samples = sample_small_scale(rng, cfg.num_antennas, int(mc_samples))
    w_hat = np.array([learned_bandwidth(r, alphas, cfg) for r in runs])
    return availability_from_bandwidths(w_hat, alphas, cfg, samples, eps_check)[0]


@dataclass
class EvalReport:
    eps_d: float
    sigma_curve: list
    availability: float
    w_tilde: float
    per_alpha_rows: list
    runs: int
    seeds: list = field(default_factory=list)

    def __post_init__(self):
        if not 0.0 <= self.availability <= 1.0:
            raise ValueError("availability outside [0, 1]")
        if not self.per_alpha_rows:
            raise ValueError("report has no per-channel rows")

    def table3_row(self):
        return {"eps_D": self.eps_d, "availability": self.availability, "w_tilde": self.w_tilde,
                "n_runs": self.runs, "n_alpha": len(self.per_alpha_rows) // max(self.runs, 1)}


def evaluate_runs(runs, seeds, eps_d, cfg, check_oracle, alphas, samples, sigma_oracle=None):
    """Build an :class:`EvalReport` for runs trained at ``eps_d``.

    ``check_oracle`` holds ``W*`` at the target reliability ``cfg.reliability``
    and is used for the bandwidth loss; ``sigma_oracle`` (at ``eps_d``) for the
    accuracy curve.
    """
    w_star = check_oracle(alphas)
    w_hat = np.array([learned_bandwidth(r, alphas, cfg) for r in runs])
    avail, ok = availability_from_bandwidths(w_hat, alphas, cfg, samples)
    d = distance_from_gain(alphas)
    rows = []
    for i, seed in enumerate(seeds):
        for j in range(len(alphas)):
            rows.append({"eps_D": eps_d, "run": i, "seed": seed, "d_m": float(d[j]),
                         "alpha": float(alphas[j]), "W_star_MHz": float(w_star[j]) / 1e6,
                         "W_hat_MHz": float(w_hat[i, j]) / 1e6,
                         "constraint_satisfied": int(ok[i, j])})
    curve = []
    if sigma_oracle is not None and runs and runs[0].snapshots:
        curve = sigma_curve(runs, sigma_oracle, cfg)
    return EvalReport(eps_d, curve, avail, bandwidth_loss(w_hat.ravel(), np.tile(w_star, len(runs))),
                      rows, len(runs), list(seeds))


def train_runs(cfg, eps_d, n_runs, iterations=10_000, seed=0, snapshot_every=500, tcfg=None):
    """Train ``n_runs`` independent pairs at training reliability ``eps_d``.

    Run ``i`` uses seed ``child_seed(seed, f"train/{eps_d!r}", i)``.
    """
    problem = UrllcProblem(cfg, eps_d)
    base = tcfg or TrainerConfig()
    pairs, seeds = [], []
    for i in range(n_runs):
        s = child_seed(seed, f"train/{eps_d!r}", i)
        t = TrainerConfig(base.learning_rate, base.batch_size, iterations, s, base.hidden,
                          snapshot_every)
        pair = train(problem, t)
        pair.meta = {"eps_d": eps_d, "seed": s, "theta": problem.theta, "iterations": iterations}
        pairs.append(pair)
        seeds.append(s)
    return pairs, seeds


def table3(cfg, eps_d_list=(1e-5, 1e-6, 1e-7), n_runs=20, n_alpha=200, iterations=10_000,
           mc_samples=1_000_000, seed=0, check_oracle=None, sigma_oracles=None,
           oracle_points=101, runs=None):
    """Availability and bandwidth loss versus training reliability.

    Parameters
    ----------
    runs : dict, optional
        ``{eps_d: (pairs, seeds)}`` of already trained runs; missing entries
        are trained here.
    sigma_oracles : dict, optional
        ``{eps_d: OracleGrid}``; when given, sigma curves are included.

    Returns
    -------
    list of EvalReport
        One per training reliability, in the order of ``eps_d_list``.
    """
    if check_oracle is None:
        check_oracle = oracle_grid(cfg, n_points=oracle_points, mc_samples=mc_samples, seed=seed)
    rng = child_rng(seed, "table3/eval")
    alphas = sample_alphas(cfg, rng, n_alpha)
    samples = sample_small_scale(rng, cfg.num_antennas, int(mc_samples))
    reports = []
    for eps_d in eps_d_list:
        if runs and eps_d in runs:
            pairs, seeds = runs[eps_d]
        else:
            pairs, seeds = train_runs(cfg, eps_d, n_runs, iterations, seed)
        so = (sigma_oracles or {}).get(eps_d)
        reports.append(evaluate_runs(pairs, seeds, eps_d, cfg, check_oracle, alphas, samples, so))
    return reports
