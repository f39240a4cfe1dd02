"""Unsupervised primal-dual training of a decision network and a multiplier network.

For a parametric problem ``min_x f(x; p)  s.t.  C(x; p) <= 0`` with ``p``
drawn from some distribution, two networks are trained on the sampled
Lagrangian

    L_hat = mean_n [ f(x_hat(p_n); p_n) + lam_hat(p_n) . C(x_hat(p_n); p_n) ]

by gradient descent on the decision network and gradient ascent on the
multiplier network. No optimal solutions are ever computed: the stationarity
and complementary-slackness conditions of the Lagrangian are the only
training signal.
"""

from __future__ import annotations

import csv
import json
import logging
import math
from dataclasses import dataclass, field

import numpy as np

from . import urllc
from .nn import Mlp, mlp_new
from .seeding import child_seed

log = logging.getLogger(__name__)

HISTORY_COLUMNS = ("iter", "L_hat", "mean_constraint", "primal_grad_norm", "dual_grad_norm")


class ProblemSpec:
    """A family of constrained problems indexed by environment parameters.

    Subclasses implement the sampler, the objective and the constraint. Arrays
    are batched along axis 0: parameters ``(n, param_dim)``, decisions
    ``(n, decision_dim)``, constraints ``(n, num_constraints)``.

    The interface deliberately has no access to optimal solutions.
    """

    param_dim = 1
    decision_dim = 1
    num_constraints = 1

    def sample_params(self, rng, n):
        raise NotImplementedError

    def encode(self, params):
        """Network input features for a batch of parameters."""
        return params

    def decode(self, outputs):
        """Map network outputs to decisions; returns ``(x, dx/doutput)`` elementwise."""
        return outputs, np.ones_like(outputs)

    def objective(self, x, params):
        """Return ``(f, df/dx)`` with shapes ``(n,)`` and ``(n, decision_dim)``."""
        raise NotImplementedError

    def constraint(self, x, params, rng):
        """Return ``(C, dC/dx)`` with shapes ``(n, K)`` and ``(n, K, decision_dim)``.

        ``C`` may be a stochastic estimate; it must be unbiased for the true
        constraint, which rules out nonlinear functions of expectations.
        """
        raise NotImplementedError


class ToyProblem(ProblemSpec):
    """``min x^2  s.t.  p - x <= 0`` with ``p ~ U[lo, hi]``.

    The solution is ``x* = p`` with multiplier ``lam* = 2p``.
    """

    def __init__(self, lo=1.0, hi=2.0):
        self.lo, self.hi = float(lo), float(hi)

    def sample_params(self, rng, n):
        return rng.uniform(self.lo, self.hi, size=(n, 1))

    def encode(self, params):
        mid, half = 0.5 * (self.lo + self.hi), 0.5 * (self.hi - self.lo)
        return (params - mid) / half

    def objective(self, x, params):
        return x[:, 0] ** 2, 2.0 * x

    def constraint(self, x, params, rng):
        return params - x, -np.ones((x.shape[0], 1, 1))

    @staticmethod
    def optimum(params):
        p = np.asarray(params, dtype=float)
        return p, 2.0 * p


def toy_problem():
    return ToyProblem()


class UrllcProblem(ProblemSpec):
    """Minimum-bandwidth problem for one uplink user.

    The parameter is the large-scale gain ``alpha`` of a user placed uniformly
    in the cell annulus. The decision is the bandwidth in units of ``unit_hz``
    (100 kHz by default, which puts the Softplus output at 2 to 6 over the
    cell, clear of its flat region); the objective is that decision itself. The constraint is the single-draw estimate
    ``exp(-theta* s) - exp(-theta* m)`` of the linearised QoS requirement,
    computed at the training reliability ``eps_d``.

    The network input is the user distance recovered from the gain,
    standardised to zero mean and unit variance under the uniform placement,
    so the cell maps onto ``[-sqrt(3), sqrt(3)]``.
    """

    def __init__(self, cfg, eps_d=None, mc_per_sample=1, unit_hz=1e5):
        if eps_d is None:
            eps_d = cfg.reliability
        if eps_d > cfg.reliability:
            raise ValueError("training reliability must not be looser than the target")
        if mc_per_sample < 1:
            raise ValueError("mc_per_sample must be >= 1")
        self.cfg = cfg
        self.eps_d = float(eps_d)
        self.train_cfg = cfg.with_reliability(eps_d)
        self.theta = urllc.qos_exponent(self.train_cfg)
        self.qinv = urllc.inv_q(self.train_cfg.decoding_error)
        self.target = math.exp(-self.theta * cfg.arrival_rate)
        self.mc_per_sample = int(mc_per_sample)
        self.unit_hz = float(unit_hz)
        self.d_center = 0.5 * (cfg.cell_min_d + cfg.cell_max_d)
        self.d_scale = (0.5 * (cfg.cell_max_d - cfg.cell_min_d) / math.sqrt(3.0)) or 1.0

    def sample_params(self, rng, n):
        d = rng.uniform(self.cfg.cell_min_d, self.cfg.cell_max_d, size=n)
        return urllc.large_scale_gain(d)[:, None]

    def encode(self, params):
        return (urllc.distance_from_gain(params) - self.d_center) / self.d_scale

    def objective(self, x, params):
        return x[:, 0].copy(), np.ones_like(x)

    def constraint(self, x, params, rng):
        n = x.shape[0]
        W = x * self.unit_hz
        g = urllc.sample_small_scale(rng, self.cfg.num_antennas, (n, self.mc_per_sample))
        coeff = urllc.snr_coefficient(params, g, self.cfg)
        s = urllc._rate_from_coeff(W, coeff, self.qinv, self.cfg)
        ds = urllc._rate_grad_from_coeff(W, coeff, self.qinv, self.cfg)
        pen = np.exp(-self.theta * s)
        c = pen.mean(axis=1) - self.target
        dc = (-self.theta * ds * pen).mean(axis=1) * self.unit_hz
        return c[:, None], dc[:, None, None]

    def bandwidth_hz(self, net, alpha):
        """Decoded bandwidth in Hz of a trained decision network at gains ``alpha``."""
        alpha = np.asarray(alpha, dtype=float).reshape(-1, 1)
        out = net.predict(self.encode(alpha))
        return self.decode(out)[0][:, 0] * self.unit_hz


def urllc_problem(cfg, eps_d=None, mc_per_sample=1, unit_hz=1e5):
    return UrllcProblem(cfg, eps_d, mc_per_sample, unit_hz)


@dataclass
class TrainerConfig:
    learning_rate: float = 0.1
    batch_size: int = 100
    iterations: int = 10_000
    seed: int = 0
    hidden: tuple = (8, 8, 8, 8)
    snapshot_every: int = 0

    def __post_init__(self):
        if self.learning_rate < 0 or not math.isfinite(self.learning_rate):
            raise ValueError("learning_rate must be finite and non-negative")
        if self.batch_size < 1 or self.iterations < 1:
            raise ValueError("batch_size and iterations must be positive")
        self.hidden = tuple(int(h) for h in self.hidden)


@dataclass
class TrainedPair:
    primal: Mlp
    dual: Mlp
    history: dict
    snapshots: list = field(default_factory=list)  # (iteration, primal copy)
    meta: dict = field(default_factory=dict)


class TrainingDiverged(FloatingPointError):
    def __init__(self, message, pair):
        super().__init__(message)
        self.pair = pair


def init_pair(problem, tcfg):
    dims = [problem.param_dim, *tcfg.hidden]
    primal = mlp_new(dims + [problem.decision_dim], "softplus", child_seed(tcfg.seed, "primal"))
    dual = mlp_new(dims + [problem.num_constraints], "softplus", child_seed(tcfg.seed, "dual"))
    return primal, dual


def lagrangian_step(problem, primal, dual, params, rng):
    """One sampled Lagrangian evaluation with gradients for both networks.

    Returns
    -------
    L_hat : float
    C : ndarray, shape (n, K)
    primal_grads, dual_grads : GradientSet
    """
    feats = problem.encode(params)
    out, pcache = primal.forward(feats)
    x, dx = problem.decode(out)
    lam, dcache = dual.forward(feats)
    f, df = problem.objective(x, params)
    C, dC = problem.constraint(x, params, rng)
    L_hat = float(np.mean(f + np.sum(lam * C, axis=1)))
    dL_dx = df + np.einsum("nkd,nk->nd", dC, lam)
    return L_hat, C, primal.backward(pcache, dL_dx * dx), dual.backward(dcache, C)


def train(problem, tcfg, primal=None, dual=None):
    """Primal-dual training: descent on the decision network, ascent on the multipliers.

    The random streams for initialisation, parameter sampling and constraint
    noise are all derived from ``tcfg.seed``.

    Raises
    ------
    TrainingDiverged
        If the loss or a gradient becomes non-finite. The partially trained
        pair (state before the failing step) is attached as ``exc.pair``.
    """
    if primal is None or dual is None:
        p0, d0 = init_pair(problem, tcfg)
        primal = p0 if primal is None else primal
        dual = d0 if dual is None else dual
    rng = np.random.default_rng(child_seed(tcfg.seed, "train"))
    n_it = tcfg.iterations
    hist = {k: np.empty(n_it) for k in HISTORY_COLUMNS}
    hist["iter"] = np.arange(1, n_it + 1)
    pair = TrainedPair(primal, dual, hist)
    rate = tcfg.learning_rate
    for t in range(n_it):
        if tcfg.snapshot_every and t % tcfg.snapshot_every == 0:
            pair.snapshots.append((t, primal.copy()))
        params = problem.sample_params(rng, tcfg.batch_size)
        L_hat, C, gp, gd = lagrangian_step(problem, primal, dual, params, rng)
        hist["L_hat"][t] = L_hat
        hist["mean_constraint"][t] = float(C.mean())
        hist["primal_grad_norm"][t] = gp.norm()
        hist["dual_grad_norm"][t] = gd.norm()
        if not (math.isfinite(L_hat) and gp.is_finite() and gd.is_finite()):
            pair.history = {k: v[:t] for k, v in hist.items()}
            log.error("non-finite loss/gradient at iteration %d; last good iteration %d", t + 1, t)
            raise TrainingDiverged(f"non-finite loss or gradient at iteration {t + 1}", pair)
        if rate > 0:
            primal.apply_update(gp, rate, "descent")
            dual.apply_update(gd, rate, "ascent")
    if tcfg.snapshot_every:
        pair.snapshots.append((n_it, primal.copy()))
    return pair


@dataclass
class KKTResidual:
    primal_norm: float
    dual_norm: float
    max_violation: float
    min_multiplier: float


def kkt_residual(pair, problem, probe_batch=10_000, rng=None):
    """Monte Carlo estimate of the parametrised KKT conditions.

    ``primal_norm`` and ``dual_norm`` are the norms of the Lagrangian gradient
    with respect to the two networks' weights over a fresh probe batch;
    ``max_violation`` is the largest constraint estimate and
    ``min_multiplier`` the smallest multiplier output.
    """
    rng = np.random.default_rng() if rng is None else rng
    params = problem.sample_params(rng, probe_batch)
    _, C, gp, gd = lagrangian_step(problem, pair.primal, pair.dual, params, rng)
    lam = pair.dual.predict(problem.encode(params))
    return KKTResidual(gp.norm(), gd.norm(), float(C.max()), float(lam.min()))


def write_history(pair, path):
    h = pair.history
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(HISTORY_COLUMNS)
        for i in range(len(h["iter"])):
            w.writerow([int(h["iter"][i])] + [repr(float(h[k][i])) for k in HISTORY_COLUMNS[1:]])


def save_pair(pair, path):
    """Write both networks, the primal snapshots and ``meta`` as JSON (no history)."""
    data = {"format_version": 1, "primal": pair.primal.to_dict(), "dual": pair.dual.to_dict(),
            "snapshots": [[int(it), net.to_dict()] for it, net in pair.snapshots],
            "meta": pair.meta}
    with open(path, "w") as fh:
        json.dump(data, fh)


def load_pair(path):
    with open(path) as fh:
        data = json.load(fh)
    if data.get("format_version") != 1:
        raise ValueError(f"{path}: unsupported model file")
    snaps = [(int(it), Mlp.from_dict(d)) for it, d in data["snapshots"]]
    return TrainedPair(Mlp.from_dict(data["primal"]), Mlp.from_dict(data["dual"]), {}, snaps,
                       data.get("meta", {}))
