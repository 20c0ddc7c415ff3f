"""Command-line entry point: ``expconcave {run,diag,regret,bounds} ...``.

Exit codes: 0 on success, 1 on a validation error (bad flags, bad config,
parameters outside a formula's domain), 2 on a runtime failure (including a
run in which some replicate recorded an error; the CSVs are still written).
"""
from __future__ import annotations

import argparse
import logging
import math
import os
import sys
from pathlib import Path
from typing import List, Optional

import numpy as np

from . import boost, config, diagnostics, erm, harness, online
from .errors import InvalidInputError
from .problems import BUILTINS

OUT_ENV = "EXPCONCAVE_OUT"
DEFAULT_OUT = "expconcave_out"

log = logging.getLogger("expconcave")


class UsageError(Exception):
    pass


class Parser(argparse.ArgumentParser):
    """Argument parser whose usage errors exit with status 1."""

    def error(self, message):
        raise UsageError(f"{self.prog}: error: {message}")


def _common(p, *, delta=True, seed=True):
    p.add_argument("--config", help="INI configuration file; flags override its values")
    p.add_argument("--out", help=f"output directory (default: ${OUT_ENV} or ./{DEFAULT_OUT})")
    if seed:
        p.add_argument("--seed", type=int, help="master seed")
    if delta:
        p.add_argument("--delta", type=float, help="confidence parameter in (0, 1)")


def _problem_flags(p):
    p.add_argument("--problem", choices=BUILTINS, help="built-in problem instance")
    p.add_argument("--noise-sigma", type=float, help="label noise scale")
    p.add_argument("--noise", choices=["truncated_gaussian", "rademacher", "none"])
    p.add_argument("--eta", type=float, help="exp-concavity parameter override")
    p.add_argument("--B", type=float, help="loss diameter override")
    p.add_argument("--L", type=float, help="Lipschitz constant override")


def build_parser() -> Parser:
    parser = Parser(prog="expconcave", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=Parser)

    p = sub.add_parser("run", help="Monte Carlo experiment: records, summary and rate CSVs")
    _common(p)
    _problem_flags(p)
    p.add_argument("--threads", type=int, help="worker thread count (does not change results)")
    p.add_argument("--algorithms", help="comma-separated list from " + ",".join(harness.ALGORITHMS))
    p.add_argument("--n-grid", help="comma-separated ascending sample sizes")
    p.add_argument("--replicates", type=int)
    p.add_argument("--resolution", type=int, help="EWOO grid resolution")
    p.add_argument("--G", type=float, help="gradient-norm bound for ONS/OGD")
    p.add_argument("--D", type=float, help="domain diameter for ONS")
    p.add_argument("--nu", type=float, help="strong convexity for OGD")
    p.add_argument("--max-iters", type=int)
    p.add_argument("--tol", type=float)
    p.add_argument("--record-timing", action="store_true", default=None,
                   help="fill elapsed_ms (makes the CSV nondeterministic)")

    d = sub.add_parser("diag", help="central, Bernstein or conditional-variance check")
    d.add_argument("check", choices=["central", "bernstein", "variance"])
    _common(d, delta=False)
    _problem_flags(d)
    d.add_argument("--m", type=int, help="Monte Carlo draws per test point or round")
    d.add_argument("--flag-sigmas", type=float)
    d.add_argument("--eta-scale", type=float, default=1.0,
                   help="multiply eta by this factor before checking")
    d.add_argument("--grid-resolution", type=int, default=10)
    d.add_argument("--n-random", type=int, default=100)
    d.add_argument("--n", type=int, default=32, help="EWOO rounds for the variance check")
    d.add_argument("--resolution", type=int, default=64, help="EWOO grid resolution")

    r = sub.add_parser("regret", help="online learner traces against the worst-case regret bound")
    _common(r, delta=False)
    _problem_flags(r)
    r.add_argument("--learner", choices=["ewoo", "ons", "ogd"])
    r.add_argument("--n", type=int, default=512)
    r.add_argument("--replicates", type=int, default=1)
    r.add_argument("--resolution", type=int)
    r.add_argument("--G", type=float)
    r.add_argument("--D", type=float)
    r.add_argument("--nu", type=float)

    b = sub.add_parser("bounds", help="evaluate a theoretical bound")
    bsub = b.add_subparsers(dest="bound", required=True, parser_class=Parser)
    specs = {
        "erm": ("ERM excess-risk bound over a convex class",
                [("B", float), ("eta", float), ("L", float), ("R", float), ("d", int), ("n", int)]),
        "cb": ("ConfidenceBoost bound for a rate psi(m) = psi_c / m",
               [("psi_c", float), ("C", float), ("q", float), ("B", float), ("n", int)]),
        "corollary": ("ConfidenceBoost bound with a published rate (koren or gonen)",
                      [("setting", str), ("eta", float), ("B", float), ("d", int), ("n", int),
                       ("beta", float), ("R", float)]),
        "o2b": ("online-to-batch excess-risk bound from a measured regret",
                [("regret", float), ("eta", float), ("B", float), ("n", int)]),
        "lemma3": ("ERM threshold for a Bernstein subclass of a finite class",
                   [("C", float), ("q", float), ("B", float), ("size", int), ("n", int)]),
        "regret": ("worst-case regret of ONS, EWOO or OGD",
                   [("learner", str), ("n", int), ("d", int), ("eta", float), ("G", float),
                    ("D", float), ("nu", float)]),
    }
    for name, (help_text, params) in specs.items():
        bp = bsub.add_parser(name, help=help_text)
        bp.add_argument("--config", help="INI configuration file; flags override its values")
        if name != "regret":
            bp.add_argument("--delta", type=float)
        for flag, typ in params:
            bp.add_argument(f"--{flag.replace('_', '-')}", dest=flag, type=typ)
    return parser


def _out_dir(args, cfg) -> Path:
    out = args.out or cfg.get("experiment", {}).get("out") or os.environ.get(OUT_ENV) or DEFAULT_OUT
    return Path(out)


def _load(args) -> dict:
    if getattr(args, "config", None):
        return config.load_config(args.config)
    return config.parse_config("")


def _problem_overrides(args) -> dict:
    return {"problem.name": args.problem, "problem.noise_sigma": args.noise_sigma,
            "problem.noise": args.noise, "loss.eta": args.eta, "loss.B": args.B,
            "loss.L": args.L}


def _problem_from(cfg):
    name = cfg.get("problem", {}).get("name")
    if name is None:
        raise InvalidInputError("no problem given (use --problem or problem.name)")
    exp = harness.ExperimentConfig(name, ["erm"], [1], problem_options=config.problem_options(cfg),
                                   loss_overrides=dict(cfg.get("loss", {})))
    return harness.build_problem(exp)


def cmd_run(args) -> int:
    split = lambda s, cast: None if s is None else [cast(v) for v in s.split(",") if v.strip()]
    cfg = config.merge(_load(args), {
        **_problem_overrides(args),
        "experiment.seed": args.seed, "experiment.threads": args.threads,
        "experiment.algorithms": split(args.algorithms, str),
        "experiment.n_grid": split(args.n_grid, int),
        "experiment.replicates": args.replicates, "experiment.record_timing": args.record_timing,
        "boost.delta": args.delta, "online.resolution": args.resolution, "online.G": args.G,
        "online.D": args.D, "online.nu": args.nu, "solver.max_iters": args.max_iters,
        "solver.tol": args.tol,
    })
    out = _out_dir(args, cfg)
    exp = config.experiment_config(cfg, out_dir=str(out))
    threads = cfg["experiment"].get("threads", 1)
    records = harness.run_experiment(exp, threads=threads)
    summary = harness.summarize(records, exp.delta)
    harness.write_summary(out / "summary.csv", summary)
    harness.write_rates(out / "rates.csv", harness.rate_table(summary))
    failed = sum(1 for r in records if r.error)
    print(f"{len(records)} records, {failed} failed; wrote {out}/records.csv, summary.csv, rates.csv")
    return 2 if failed else 0


def cmd_diag(args) -> int:
    cfg = config.merge(_load(args), {**_problem_overrides(args), "diag.m": args.m,
                                     "diag.flag_sigmas": args.flag_sigmas,
                                     "experiment.seed": args.seed})
    problem = _problem_from(cfg)
    m = cfg["diag"].get("m", 100_000)
    k = cfg["diag"].get("flag_sigmas", diagnostics.FLAG_SIGMAS)
    seed = cfg["experiment"].get("seed", 0)
    eta = problem.eta * args.eta_scale
    out = _out_dir(args, cfg)
    if args.check == "variance":
        X, y = problem.sample(args.n, np.random.default_rng(harness.derive_seed(seed, "variance")))
        run = online.ewoo_run(problem.loss, problem.domain, X, y, eta, args.resolution)
        res = diagnostics.conditional_variance_check(problem, run, eta, problem.B, m, seed, X, y,
                                                     flag_sigmas=k)
        rows = [{"round": t + 1, "variance": res.variances[t], "variance_stderr": res.variance_stderr[t],
                 "excess_risk": res.excess[t], "bound": res.bounds[t], "flagged": bool(res.flagged[t])}
                for t in range(len(run))]
        harness.write_rows(out / "diag_variance.csv", rows)
        print(f"variance check: {res.n_flagged} of {len(rows)} rounds flagged")
        return 0
    points = diagnostics.default_test_points(problem, seed, args.grid_resolution, args.n_random)
    if args.check == "central":
        rep = diagnostics.central_check(problem, eta, points, m, seed, k)
    else:
        rep = diagnostics.bernstein_check(problem, eta, problem.B, points, m, seed, k)
    rows = [{**{f"f{i + 1}": v for i, v in enumerate(r["f"])},
             **{c: v for c, v in r.items() if c != "f"}} for r in rep.rows]
    harness.write_rows(out / f"diag_{args.check}.csv", rows)
    extra = ", ".join(f"{key}={val}" for key, val in rep.summary.items())
    print(f"{args.check} check at eta={eta:.6g}: {rep.n_flagged} of {len(rows)} points flagged; {extra}")
    return 0


def cmd_regret(args) -> int:
    cfg = config.merge(_load(args), {**_problem_overrides(args), "online.learner": args.learner,
                                     "online.resolution": args.resolution, "online.G": args.G,
                                     "online.D": args.D, "online.nu": args.nu,
                                     "experiment.seed": args.seed})
    problem = _problem_from(cfg)
    opts = cfg["online"]
    learner = opts.get("learner")
    if learner is None:
        raise InvalidInputError("no learner given (use --learner or online.learner)")
    seed = cfg["experiment"].get("seed", 0)
    eta, G = problem.eta, opts.get("G", problem.constants["G"])
    D, nu = opts.get("D", problem.constants["D"]), opts.get("nu", problem.loss.alpha)
    bound = online.regret_bound(learner, n=args.n, d=problem.d, eta=eta, G=G, D=D, nu=nu)
    rows, trace = [], []
    for rep in range(args.replicates):
        s = harness.derive_seed(seed, learner, args.n, rep)
        X, y = problem.sample(args.n, np.random.default_rng(s))
        if learner == "ewoo":
            run = online.ewoo_run(problem.loss, problem.domain, X, y, eta, opts.get("resolution", 64))
        elif learner == "ons":
            run = online.ons_run(problem.loss, problem.domain, X, y, eta, G, D)
        else:
            run = online.ogd_run(problem.loss, problem.domain, X, y, nu, G)
        reg = online.regret_of(problem.loss, problem.domain, X, y, run).regret
        rows.append({"replicate": rep, "seed": s, "regret": reg, "bound": bound,
                     "violation": reg > bound})
        cum = np.cumsum(run.per_round_loss)
        for t in range(len(run)):
            trace.append({"replicate": rep, "t": t + 1, "loss": run.per_round_loss[t],
                          "cumulative_loss": cum[t],
                          **{f"f{i + 1}": v for i, v in enumerate(run.iterates[t])}})
    out = _out_dir(args, cfg)
    harness.write_rows(out / "regret.csv", rows)
    harness.write_rows(out / "trace.csv", trace)
    worst = max(r["regret"] for r in rows)
    print(f"{learner}: max regret {worst:.6g} vs bound {bound:.6g}; "
          f"{sum(r['violation'] for r in rows)} of {len(rows)} violations")
    return 0


def _need(vals, *names):
    missing = [n for n in names if vals.get(n) is None]
    if missing:
        raise InvalidInputError("missing parameters: " + ", ".join("--" + n.replace("_", "-")
                                                                   for n in missing))
    return [vals[n] for n in names]


def cmd_bounds(args) -> int:
    cfg = _load(args)
    vals = {"B": cfg["loss"].get("B"), "eta": cfg["loss"].get("eta"), "L": cfg["loss"].get("L"),
            "delta": cfg["boost"].get("delta"), "G": cfg["online"].get("G"),
            "D": cfg["online"].get("D"), "nu": cfg["online"].get("nu"),
            "learner": cfg["online"].get("learner")}
    vals.update({k: v for k, v in vars(args).items() if v is not None})
    kind = args.bound
    if kind == "erm":
        value = erm.erm_whp_bound(*_need(vals, "B", "eta", "L", "R", "d", "n", "delta"))
    elif kind == "cb":
        c, C, q, B, n, delta = _need(vals, "psi_c", "C", "q", "B", "n", "delta")
        value = boost.meta_bound(lambda m: c / m, C, q, B, n, delta)
    elif kind == "corollary":
        setting, n, delta = _need(vals, "setting", "n", "delta")
        keys = ("beta", "eta", "B", "R", "d") if setting == "koren" else ("eta", "d", "B")
        value = boost.corollary_bound(setting, dict(zip(keys, _need(vals, *keys))), n, delta)
    elif kind == "o2b":
        value = online.o2b_excess_bound(*_need(vals, "regret", "eta", "B", "n", "delta"))
    elif kind == "lemma3":
        value = diagnostics.lemma3_threshold(*_need(vals, "C", "q", "B", "size", "n", "delta"))
    else:
        learner, n = _need(vals, "learner", "n")
        needed = {"ons": ("eta", "G", "D"), "ewoo": ("eta",), "ogd": ("G", "nu")}.get(learner)
        if needed is None:
            raise InvalidInputError(f"unknown learner {learner!r}")
        kw = dict(zip(needed, _need(vals, *needed)))
        value = online.regret_bound(learner, n=n, d=vals.get("d", 1), **kw)
    if not math.isfinite(value):
        raise InvalidInputError(f"bound is not finite: {value}")
    print(f"{value:.6f}")
    return 0


COMMANDS = {"run": cmd_run, "diag": cmd_diag, "regret": cmd_regret, "bounds": cmd_bounds}


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return 1
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except ValueError as exc:       # InvalidInputError, PreconditionError, ...
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:        # runtime failure
        print(f"runtime failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
