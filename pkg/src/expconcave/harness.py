"""Seeded Monte Carlo experiments: replicate grids, quantile summaries,
bound comparisons, rate fits and CSV persistence.
"""
from __future__ import annotations

import csv
import hashlib
import io
import logging
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence

import numpy as np
from scipy import stats

from . import boost, erm, online
from .errors import InvalidInputError
from .problems import ProblemInstance, make_problem

log = logging.getLogger(__name__)

RECORD_COLUMNS = ["experiment_id", "algorithm", "n", "replicate", "seed", "excess_risk",
                  "excess_risk_stderr", "regret", "elapsed_ms", "error"]
SUMMARY_COLUMNS = ["algorithm", "n", "median", "quantile", "quantile_level", "mean", "stderr"]
RATE_COLUMNS = ["algorithm", "statistic", "slope", "intercept", "r_squared", "n_points"]

ALGORITHMS = ("erm", "penalized_erm", "cb", "ewoo", "ons", "ogd", "pm", "pm_ewoo", "pm_cb")
ONLINE_ALGORITHMS = ("ewoo", "ons", "ogd")


@dataclass
class ExperimentConfig:
    problem: str
    algorithms: List[str]
    n_grid: List[int]
    replicates: int = 1
    delta: float = 0.05
    seed: int = 0
    out_dir: Optional[str] = None
    experiment_id: str = "exp"
    problem_options: Dict = field(default_factory=dict)
    loss_overrides: Dict = field(default_factory=dict)
    online: Dict = field(default_factory=dict)      # eta, resolution, G, D, nu
    boost_base: str = "erm"
    prior: Optional[List[float]] = None             # None means uniform
    class_file: Optional[str] = None
    solver: Dict = field(default_factory=dict)      # max_iters, tol
    record_timing: bool = False

    def validate(self):
        if not self.algorithms:
            raise InvalidInputError("no algorithms configured")
        unknown = [a for a in self.algorithms if a not in ALGORITHMS]
        if unknown:
            raise InvalidInputError(f"unknown algorithms {unknown}; choose from {ALGORITHMS}")
        if not self.n_grid or list(self.n_grid) != sorted(self.n_grid) or min(self.n_grid) < 1:
            raise InvalidInputError("n_grid must be a nonempty ascending list of positive sizes")
        if self.replicates < 1:
            raise InvalidInputError("replicates must be >= 1")
        if not 0 < self.delta < 1:
            raise InvalidInputError("delta must lie in (0, 1)")
        if self.boost_base not in ("erm", "penalized_erm"):
            raise InvalidInputError(f"unknown boost base {self.boost_base!r}")
        return self


@dataclass
class ReplicateRecord:
    experiment_id: str
    algorithm: str
    n: int
    replicate: int
    seed: int
    excess_risk: Optional[float] = None
    excess_risk_stderr: Optional[float] = None
    regret: Optional[float] = None
    elapsed_ms: Optional[float] = None
    error: str = ""


def derive_seed(master: int, *keys) -> int:
    """Counter-style 63-bit seed from the master seed and any labels."""
    h = hashlib.blake2b(repr((int(master),) + tuple(keys)).encode(), digest_size=8)
    return int.from_bytes(h.digest(), "little") >> 1


def build_problem(cfg: ExperimentConfig) -> ProblemInstance:
    p = make_problem(cfg.problem, **cfg.problem_options)
    if cfg.loss_overrides:
        kind = cfg.loss_overrides.get("kind")
        if kind is not None and kind != p.loss.kind:
            raise InvalidInputError(f"problem {p.name} uses the {p.loss.kind} loss, not {kind}")
        new = {k: float(v) for k, v in cfg.loss_overrides.items() if k in ("eta", "B", "L")}
        p = replace(p, loss=replace(p.loss, **new))
    if cfg.class_file:
        W = np.loadtxt(cfg.class_file, delimiter=",", ndmin=2)
        if W.shape[1] != p.d:
            raise InvalidInputError(f"class file rows must have {p.d} entries")
        p = replace(p, experts=W, prior=np.full(len(W), 1.0 / len(W)))
    if cfg.prior is not None:
        if p.experts is None or len(cfg.prior) != len(p.experts):
            raise InvalidInputError("prior length must match the expert class")
        prior = np.asarray(cfg.prior, dtype=float)
        p = replace(p, prior=prior / prior.sum())
    return p


def _solver(cfg):
    return erm.SolverConfig(**{k: v for k, v in cfg.solver.items()})


def fit_algorithm(name: str, problem: ProblemInstance, X, y, cfg: ExperimentConfig) -> dict:
    """Train ``name`` on ``(X, y)``; returns ``{'hypothesis', 'regret'}``."""
    loss, domain, solver = problem.loss, problem.domain, _solver(cfg)
    opts = cfg.online
    eta = opts.get("eta", problem.eta)
    if name == "erm":
        return {"hypothesis": erm.erm_fit(loss, domain, X, y, solver)}
    if name == "penalized_erm":
        return {"hypothesis": erm.penalized_erm_fit(loss, domain, X, y,
                                                    erm.half_squared_norm(domain), solver)}
    if name == "cb":
        base = (boost.erm_learner(solver) if cfg.boost_base == "erm"
                else boost.penalized_erm_learner(erm.half_squared_norm(domain), solver))
        return {"hypothesis": boost.confidence_boost(base, loss, domain, X, y, cfg.delta).hypothesis}
    if name in ONLINE_ALGORITHMS:
        if name == "ewoo":
            run = online.ewoo_run(loss, domain, X, y, eta, int(opts.get("resolution", 64)))
        elif name == "ons":
            run = online.ons_run(loss, domain, X, y, eta, opts.get("G", problem.constants["G"]),
                                 opts.get("D", problem.constants["D"]))
        else:
            run = online.ogd_run(loss, domain, X, y, opts.get("nu", loss.alpha),
                                 opts.get("G", problem.constants["G"]))
        trace = online.regret_of(loss, domain, X, y, run, solver)
        return {"hypothesis": online.average_iterates(run), "regret": trace.regret}
    if problem.experts is None:
        raise InvalidInputError(f"{name} needs a problem with an expert class")
    if name == "pm":
        state = online.progressive_mixture_run(loss, problem.experts, problem.prior, eta, X, y)
        return {"hypothesis": state.hypothesis}
    if name == "pm_ewoo":
        res = boost.pm_ewoo(problem.experts, problem.prior, loss, X, y, cfg.delta, eta,
                            int(opts.get("resolution", 32)))
        return {"hypothesis": res.hypothesis}
    if name == "pm_cb":
        res = boost.pm_cb(problem.experts, problem.prior, loss, X, y, cfg.delta, eta, solver)
        return {"hypothesis": res.hypothesis}
    raise InvalidInputError(f"unknown algorithm {name!r}")


def run_replicate(cfg: ExperimentConfig, problem: ProblemInstance, algorithm: str, n: int,
                  replicate: int) -> ReplicateRecord:
    seed = derive_seed(cfg.seed, algorithm, n, replicate)
    rec = ReplicateRecord(cfg.experiment_id, algorithm, n, replicate, seed)
    start = time.perf_counter()
    try:
        X, y = problem.sample(n, np.random.default_rng(seed))
        out = fit_algorithm(algorithm, problem, X, y, cfg)
        oracle_rng = np.random.default_rng(derive_seed(cfg.seed, algorithm, n, replicate, "oracle"))
        rec.excess_risk, rec.excess_risk_stderr = problem.excess_risk(out["hypothesis"], oracle_rng)
        rec.regret = out.get("regret")
    except Exception as exc:        # recorded per row; the run goes on
        rec.error = f"{type(exc).__name__}: {exc}"
        log.warning("%s n=%d replicate=%d failed: %s", algorithm, n, replicate, rec.error)
    if cfg.record_timing:
        rec.elapsed_ms = round(1000.0 * (time.perf_counter() - start), 3)
    return rec


def run_experiment(cfg: ExperimentConfig, threads: int = 1) -> List[ReplicateRecord]:
    """Every ``(algorithm, n, replicate)`` cell, merged in that order.

    Results do not depend on ``threads``; with ``record_timing`` off the
    CSV output is byte-identical across runs with the same master seed.
    """
    cfg.validate()
    problem = build_problem(cfg)
    tasks = [(a, n, r) for a in cfg.algorithms for n in cfg.n_grid for r in range(cfg.replicates)]

    def work(task):
        return run_replicate(cfg, problem, *task)

    if threads <= 1:
        records = [work(t) for t in tasks]
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            records = list(pool.map(work, tasks))
    order = {a: i for i, a in enumerate(cfg.algorithms)}
    records.sort(key=lambda r: (order[r.algorithm], r.n, r.replicate))
    if cfg.out_dir:
        write_records(Path(cfg.out_dir) / "records.csv", records)
    return records


def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _write_csv(path, columns, rows):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for row in rows:
        w.writerow([_fmt(row.get(c)) for c in columns])
    path.write_text(buf.getvalue())


def write_records(path, records: Sequence[ReplicateRecord]):
    _write_csv(path, RECORD_COLUMNS, [{f.name: getattr(r, f.name) for f in fields(r)}
                                      for r in records])


def read_records(path) -> List[ReplicateRecord]:
    out = []
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            def num(key, cast=float):
                return cast(row[key]) if row[key] != "" else None
            out.append(ReplicateRecord(row["experiment_id"], row["algorithm"], int(row["n"]),
                                       int(row["replicate"]), int(row["seed"]),
                                       num("excess_risk"), num("excess_risk_stderr"),
                                       num("regret"), num("elapsed_ms"), row["error"]))
    return out


def upper_quantile(values, delta: float) -> float:
    """Order statistic ``ceil((1 - delta) R)`` of ``R`` values (conservative)."""
    v = np.sort(np.asarray(values, dtype=float))
    k = max(1, math.ceil((1.0 - delta) * len(v) - 1e-9))
    return float(v[k - 1])


def _cells(records, value: Callable = lambda r: r.excess_risk):
    cells: Dict = {}
    for r in records:
        if r.error or value(r) is None:
            continue
        cells.setdefault((r.algorithm, r.n), []).append((r.replicate, value(r)))
    # replicate order makes the summary independent of record order
    return {k: np.array([v for _, v in sorted(vs)]) for k, vs in cells.items()}


def summarize(records: Sequence[ReplicateRecord], delta: float) -> List[dict]:
    """Per ``(algorithm, n)``: median, upper ``(1 - delta)`` quantile, mean and stderr."""
    present = {(r.algorithm, r.n) for r in records}
    cells = _cells(records)
    for key in sorted(present - set(cells)):
        log.warning("cell %s has no successful replicates; omitted from the summary", key)
    rows = []
    for (alg, n), v in sorted(cells.items(), key=lambda kv: (kv[0][0], kv[0][1])):
        rows.append({"algorithm": alg, "n": n, "median": float(np.median(v)),
                     "quantile": upper_quantile(v, delta), "quantile_level": 1.0 - delta,
                     "mean": float(v.mean()),
                     "stderr": float(v.std(ddof=1) / math.sqrt(len(v))) if len(v) > 1 else 0.0})
    return rows


def fit_rate(n_values, values):
    """OLS of ``log value`` on ``log n``: ``(slope, intercept, r_squared)``."""
    n_values = np.asarray(n_values, dtype=float)
    values = np.asarray(values, dtype=float)
    keep = values > 0
    if not np.all(keep):
        log.warning("excluding %d nonpositive values from the rate fit", int(np.sum(~keep)))
    if keep.sum() < 3:
        raise InvalidInputError("a rate fit needs at least 3 positive values")
    res = stats.linregress(np.log(n_values[keep]), np.log(values[keep]))
    return float(res.slope), float(res.intercept), float(res.rvalue ** 2)


def rate_table(summary: Sequence[dict], statistics=("quantile", "median")) -> List[dict]:
    rows = []
    for alg in sorted({r["algorithm"] for r in summary}):
        cell = [r for r in summary if r["algorithm"] == alg]
        for stat in statistics:
            try:
                slope, icpt, r2 = fit_rate([r["n"] for r in cell], [r[stat] for r in cell])
            except InvalidInputError:
                continue
            rows.append({"algorithm": alg, "statistic": stat, "slope": slope, "intercept": icpt,
                         "r_squared": r2, "n_points": len(cell)})
    return rows


def compare_bounds(records: Sequence[ReplicateRecord], bound_curve: Callable[[int], float],
                   delta: float, algorithm: Optional[str] = None) -> List[dict]:
    """Upper quantile against ``bound_curve(n)`` for each cell."""
    rows = []
    for row in summarize(records, delta):
        if algorithm is not None and row["algorithm"] != algorithm:
            continue
        b = float(bound_curve(row["n"]))
        rows.append({"algorithm": row["algorithm"], "n": row["n"], "quantile": row["quantile"],
                     "bound": b, "ratio": row["quantile"] / b if b > 0 else math.inf,
                     "violation": row["quantile"] > b})
    return rows


def write_summary(path, summary):
    _write_csv(path, SUMMARY_COLUMNS, summary)


def write_rates(path, rates):
    _write_csv(path, RATE_COLUMNS, rates)


def write_rows(path, rows: Sequence[dict], columns: Optional[List[str]] = None):
    columns = columns or (list(rows[0]) if rows else [])
    _write_csv(path, columns, rows)
