"""Batch front end: ``baseline``, ``train``, ``eval`` and ``reproduce``.

Usage::

    python3 -m urllc_l2o baseline --d 250 --eps 1e-5
    python3 -m urllc_l2o train --eps-d 1e-6 --seed 1 --out results
    python3 -m urllc_l2o eval --models results/models --out results
    python3 -m urllc_l2o reproduce --quick --seed 0 --out results

Exit codes are 0 on success, 1 for invalid input or missing artifacts and 2
for numerical failures (divergence, infeasible channel).

Config files are JSON with three sections, ``system``, ``trainer`` and
``eval``, plus top-level ``seed`` and ``output_dir``. Unit-bearing keys carry
the unit in their name (``max_tx_power_dbm``, ``frame_duration_ms``, ...).
``RunConfig().to_dict()`` is the annotated default.
"""

from __future__ import annotations

import argparse
import dataclasses
import hashlib
import json
import logging
import sys
from pathlib import Path

from . import evaluate as ev
from .baseline import TABLE2_COLUMNS, InfeasibleError, table2, write_csv
from .learner import (TrainerConfig, TrainingDiverged, UrllcProblem, load_pair, save_pair, train,
                      write_history)
from .seeding import child_rng, child_seed
from .urllc import SystemConfig, sample_small_scale

log = logging.getLogger("urllc_l2o")

CSV_FILES = ("table2.csv", "sigma_curve.csv", "table3.csv", "per_alpha.csv")


@dataclasses.dataclass
class EvalConfig:
    eps_d: tuple = (1e-5, 1e-6, 1e-7)
    n_runs: int = 20
    n_alpha: int = 200
    oracle_points: int = 101
    oracle_mc_samples: int = 1_000_000
    check_mc_samples: int = 1_000_000
    table2_mc_samples: int = 1_000_000
    snapshot_every: int = 500

    def __post_init__(self):
        self.eps_d = tuple(float(e) for e in self.eps_d)
        counts = (self.n_runs, self.n_alpha, self.oracle_points, self.oracle_mc_samples,
                  self.check_mc_samples, self.table2_mc_samples)
        if min(counts) < 1 or self.snapshot_every < 0:
            raise ValueError("eval counts must be positive")
        if self.check_mc_samples < 100_000:
            raise ValueError("check_mc_samples must be at least 1e5")
        if any(not 0 < e < 1 for e in self.eps_d):
            raise ValueError("eps_d entries must lie in (0, 1)")


# reduced counts for --quick
QUICK = {"n_runs": 3, "n_alpha": 50, "oracle_points": 21, "oracle_mc_samples": 200_000,
         "check_mc_samples": 100_000, "table2_mc_samples": 200_000}
QUICK_ITERATIONS = 5000


@dataclasses.dataclass
class RunConfig:
    system: SystemConfig = dataclasses.field(default_factory=SystemConfig)
    trainer: TrainerConfig = dataclasses.field(default_factory=TrainerConfig)
    eval: EvalConfig = dataclasses.field(default_factory=EvalConfig)
    output_dir: str = "results"
    seed: int = 0

    def to_dict(self):
        t = self.trainer
        return {"system": self.system.to_dict(),
                "trainer": {"learning_rate": t.learning_rate, "batch_size": t.batch_size,
                            "iterations": t.iterations, "hidden": list(t.hidden)},
                "eval": {k: (list(v) if isinstance(v, tuple) else v)
                         for k, v in dataclasses.asdict(self.eval).items()},
                "output_dir": self.output_dir, "seed": self.seed}

    @classmethod
    def from_dict(cls, data):
        unknown = set(data) - {"system", "trainer", "eval", "output_dir", "seed"}
        if unknown:
            raise ValueError(f"unknown config sections: {sorted(unknown)}")
        tr = dict(data.get("trainer", {}))
        bad = set(tr) - {"learning_rate", "batch_size", "iterations", "hidden"}
        if bad:
            raise ValueError(f"unknown trainer keys: {sorted(bad)}")
        try:
            evc = EvalConfig(**data.get("eval", {}))
        except TypeError as exc:
            raise ValueError(f"bad eval section: {exc}") from None
        return cls(SystemConfig.from_dict(data.get("system", {})), TrainerConfig(**tr), evc,
                   str(data.get("output_dir", "results")), int(data.get("seed", 0)))

    def quick(self):
        """Copy with reduced run counts and iterations."""
        return dataclasses.replace(
            self, eval=dataclasses.replace(self.eval, **QUICK),
            trainer=dataclasses.replace(self.trainer, iterations=QUICK_ITERATIONS))


def load_config(path):
    with open(path) as fh:
        return RunConfig.from_dict(json.load(fh))


def save_config(cfg, path):
    with open(path, "w") as fh:
        json.dump(cfg.to_dict(), fh, indent=2)
        fh.write("\n")


def _eps_tag(eps):
    return f"{eps:.0e}".replace("e-0", "e-")


def sha256_file(path):
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def cached_oracle(rc, eps, cache_dir):
    """Reference grid for reliability ``eps``, read from ``cache_dir`` or computed and stored."""
    e = rc.eval
    sys_tag = hashlib.sha256(json.dumps(rc.system.to_dict(), sort_keys=True).encode()).hexdigest()[:8]
    name = (f"oracle_eps{_eps_tag(eps)}_n{e.oracle_points}_mc{e.oracle_mc_samples}"
            f"_seed{rc.seed}_sys{sys_tag}.csv")
    path = Path(cache_dir) / name
    if path.exists():
        return ev.OracleGrid.load(path)
    log.info("computing oracle grid %s", name)
    grid = ev.oracle_grid(rc.system, eps, e.oracle_points, e.oracle_mc_samples, seed=rc.seed)
    path.parent.mkdir(parents=True, exist_ok=True)
    grid.save(path)
    return grid


def _train_one(rc, eps_d, seed, iterations, model_dir):
    problem = UrllcProblem(rc.system, eps_d)
    t = rc.trainer
    tcfg = TrainerConfig(t.learning_rate, t.batch_size, iterations, seed, t.hidden,
                         rc.eval.snapshot_every)
    log.info("training eps_D=%g seed=%d theta*=%.6f", eps_d, seed, problem.theta)
    stem = f"eps{_eps_tag(eps_d)}_seed{seed}"
    try:
        pair = train(problem, tcfg)
    except TrainingDiverged as exc:
        write_history(exc.pair, Path(model_dir) / f"history_{stem}.csv")
        log.error("diverged; last good iteration %d", len(exc.pair.history["iter"]))
        raise
    pair.meta = {"eps_d": eps_d, "seed": seed, "theta": problem.theta, "iterations": iterations,
                 "system": rc.system.to_dict()}
    save_pair(pair, Path(model_dir) / f"model_{stem}.json")
    write_history(pair, Path(model_dir) / f"history_{stem}.csv")
    return pair


def _evaluate_groups(rc, groups, out):
    """Score ``{eps_d: (pairs, seeds)}``; returns the three eval tables as row lists."""
    check = cached_oracle(rc, rc.system.reliability, Path(out) / "oracle")
    rng = child_rng(rc.seed, "table3/eval")
    alphas = ev.sample_alphas(rc.system, rng, rc.eval.n_alpha)
    samples = sample_small_scale(rng, rc.system.num_antennas, rc.eval.check_mc_samples)
    sig, t3, per = [], [], []
    for eps_d in sorted(groups, reverse=True):
        pairs, seeds = groups[eps_d]
        so = cached_oracle(rc, eps_d, Path(out) / "oracle") if pairs[0].snapshots else None
        rep = ev.evaluate_runs(pairs, seeds, eps_d, rc.system, check, alphas, samples, so)
        sig += [{"eps_D": eps_d, "iter": it, "sigma": s} for it, s in rep.sigma_curve]
        t3.append(rep.table3_row())
        per += rep.per_alpha_rows
        log.info("eps_D=%g availability=%.4f W_tilde=%.4f", eps_d, rep.availability, rep.w_tilde)
    return {"sigma_curve.csv": (sig, ev.SIGMA_COLUMNS), "table3.csv": (t3, ev.TABLE3_COLUMNS),
            "per_alpha.csv": (per, ev.PER_ALPHA_COLUMNS)}


def _write_tables(tables, out):
    for name, (rows, cols) in tables.items():
        write_csv(rows, Path(out) / name, cols)


def cmd_baseline(rc, args):
    distances = args.d or [rc.system.cell_max_d, rc.system.cell_min_d]
    eps = args.eps or [1e-4, 1e-5, 1e-6, 1e-7]
    if any(d <= 0 for d in distances):
        raise ValueError("distances must be positive")
    if any(not 0 < e < 1 for e in eps):
        raise ValueError("reliabilities must lie in (0, 1)")
    rows = table2(rc.system, distances, eps, rc.eval.table2_mc_samples, seed=rc.seed)
    out = Path(args.out or rc.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_csv(rows, out / "table2.csv", TABLE2_COLUMNS)
    for r in rows:
        print(f"d={r['d_m']:g} m  eps={r['epsilon_max']:g}  W*={r['W_star_MHz']:.4f} MHz")
    return 0


def cmd_train(rc, args):
    eps_d = rc.system.reliability if args.eps_d is None else args.eps_d
    iters = args.iters or rc.trainer.iterations
    model_dir = Path(args.out or rc.output_dir) / "models"
    model_dir.mkdir(parents=True, exist_ok=True)
    pair = _train_one(rc, eps_d, rc.seed, iters, model_dir)
    print(f"theta*={pair.meta['theta']:.6f}  final L_hat={pair.history['L_hat'][-1]:.6g}")
    return 0


def load_models(model_dir, system):
    files = sorted(Path(model_dir).glob("model_*.json"))
    if not files:
        raise ValueError(f"no model_*.json files in {model_dir}")
    groups = {}
    for f in files:
        pair = load_pair(f)
        if pair.meta.get("system", system.to_dict()) != system.to_dict():
            raise ValueError(f"{f.name} was trained with a different system config")
        pairs, seeds = groups.setdefault(float(pair.meta["eps_d"]), ([], []))
        pairs.append(pair)
        seeds.append(int(pair.meta["seed"]))
    return groups


def cmd_eval(rc, args):
    out = Path(args.out or rc.output_dir)
    groups = load_models(args.models or out / "models", rc.system)
    tables = _evaluate_groups(rc, groups, out)
    out.mkdir(parents=True, exist_ok=True)
    _write_tables(tables, out)
    return 0


def cmd_reproduce(rc, args):
    if args.quick:
        rc = rc.quick()
    out = Path(args.out or rc.output_dir)
    model_dir = out / "models"
    model_dir.mkdir(parents=True, exist_ok=True)
    stage = "baseline"
    try:
        rows = table2(rc.system, mc_samples=rc.eval.table2_mc_samples, seed=rc.seed)
        write_csv(rows, out / "table2.csv", TABLE2_COLUMNS)
        stage = "train"
        groups = {}
        for eps_d in rc.eval.eps_d:
            pairs, seeds = [], []
            for i in range(rc.eval.n_runs):
                seed = child_seed(rc.seed, f"train/{eps_d!r}", i)
                pairs.append(_train_one(rc, eps_d, seed, rc.trainer.iterations, model_dir))
                seeds.append(seed)
            groups[eps_d] = (pairs, seeds)
        stage = "eval"
        _write_tables(_evaluate_groups(rc, groups, out), out)
    except Exception:
        log.error("stage '%s' failed", stage)
        raise
    manifest = {"seed": rc.seed, "quick": bool(args.quick), "config": rc.to_dict(),
                "files": {name: sha256_file(out / name) for name in CSV_FILES}}
    with open(out / "manifest.json", "w") as fh:
        json.dump(manifest, fh, indent=2)
        fh.write("\n")
    print(json.dumps(manifest["files"], indent=2))
    return 0


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON run config (see RunConfig.to_dict for keys)")
    common.add_argument("--seed", type=int, help="master seed (overrides config)")
    common.add_argument("--out", help="output directory (overrides config)")

    parser = argparse.ArgumentParser(prog="urllc-l2o", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    p = sub.add_parser("baseline", parents=[common], help="bisection reference table")
    p.add_argument("--d", type=float, nargs="+", help="distances in m (default: cell edges)")
    p.add_argument("--eps", type=float, nargs="+", help="reliabilities (default: 1e-4 .. 1e-7)")
    p.set_defaults(func=cmd_baseline)
    p = sub.add_parser("train", parents=[common], help="train one primal/dual pair")
    p.add_argument("--eps-d", type=float, help="training reliability (default: system target)")
    p.add_argument("--iters", type=int, help="iterations (default: config)")
    p.set_defaults(func=cmd_train)
    p = sub.add_parser("eval", parents=[common], help="score saved models")
    p.add_argument("--models", help="directory of model_*.json (default: OUT/models)")
    p.set_defaults(func=cmd_eval)
    p = sub.add_parser("reproduce", parents=[common], help="run every stage and write a manifest")
    p.add_argument("--quick", action="store_true", help="reduced run counts")
    p.set_defaults(func=cmd_reproduce)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(message)s", stream=sys.stderr)
    try:
        rc = load_config(args.config) if args.config else RunConfig()
        if args.seed is not None:
            rc = dataclasses.replace(rc, seed=args.seed)
        return args.func(rc, args)
    except (InfeasibleError, FloatingPointError) as exc:
        log.error("numerical failure: %s", exc)
        return 2
    except (ValueError, TypeError, KeyError, OSError) as exc:
        log.error("%s", exc)
        return 1


if __name__ == "__main__":
    sys.exit(main())
