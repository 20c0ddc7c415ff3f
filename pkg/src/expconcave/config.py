"""INI-style configuration files.

Sections and keys::

    [experiment] id, algorithms, n_grid, replicates, seed, out, threads, record_timing
    [problem]    name, noise_sigma, noise, oracle, mc_size
    [loss]       kind, B, eta, L
    [domain]     kind, radius, center, lo, hi, dim   (informational, must match the problem)
    [online]     learner, eta, resolution, G, D, nu
    [boost]      delta, variant, base
    [msa]        prior (uniform or comma-separated weights), class_file
    [solver]     max_iters, tol
    [diag]       m, flag_sigmas

Lists are comma separated.  Command-line flags override file values.
"""
from __future__ import annotations

import configparser
from pathlib import Path
from typing import Dict, Optional

import numpy as np

from .errors import InvalidInputError
from .harness import ExperimentConfig
from .problems import make_problem

SCHEMA = {
    "experiment": {"id": str, "algorithms": "list", "n_grid": "intlist", "replicates": int,
                   "seed": int, "out": str, "threads": int, "record_timing": "bool"},
    "problem": {"name": str, "noise_sigma": float, "noise": str, "oracle": str, "mc_size": int},
    "loss": {"kind": str, "B": float, "eta": float, "L": float},
    "domain": {"kind": str, "radius": float, "center": "floatlist", "lo": "floatlist",
               "hi": "floatlist", "dim": int},
    "online": {"learner": str, "eta": float, "resolution": int, "G": float, "D": float,
               "nu": float},
    "boost": {"delta": float, "variant": str, "base": str},
    "msa": {"prior": str, "class_file": str},
    "solver": {"max_iters": int, "tol": float},
    "diag": {"m": int, "flag_sigmas": float},
}


def _convert(kind, raw: str, where: str):
    try:
        if kind == "list":
            return [s.strip() for s in raw.split(",") if s.strip()]
        if kind == "intlist":
            return [int(s) for s in raw.split(",") if s.strip()]
        if kind == "floatlist":
            return [float(s) for s in raw.split(",") if s.strip()]
        if kind == "bool":
            if raw.strip().lower() not in ("1", "0", "true", "false", "yes", "no", "on", "off"):
                raise ValueError(raw)
            return raw.strip().lower() in ("1", "true", "yes", "on")
        return kind(raw.strip())
    except ValueError:
        raise InvalidInputError(f"bad value {raw!r} for {where}") from None


def parse_config(text: str, source: str = "<string>") -> Dict[str, dict]:
    """Typed ``{section: {key: value}}``; unknown sections or keys are errors."""
    cp = configparser.ConfigParser()
    cp.optionxform = str        # keep "B", "G", "L" as written
    try:
        cp.read_string(text, source=source)
    except configparser.Error as exc:
        raise InvalidInputError(f"{source}: {exc}") from None
    out: Dict[str, dict] = {s: {} for s in SCHEMA}
    for section in cp.sections():
        if section not in SCHEMA:
            raise InvalidInputError(f"{source}: unknown section [{section}]")
        for key, raw in cp.items(section):
            if key not in SCHEMA[section]:
                raise InvalidInputError(f"{source}: unknown key {section}.{key}")
            out[section][key] = _convert(SCHEMA[section][key], raw, f"{section}.{key}")
    return out


def load_config(path) -> Dict[str, dict]:
    path = Path(path)
    if not path.is_file():
        raise InvalidInputError(f"config file not found: {path}")
    return parse_config(path.read_text(), str(path))


def merge(cfg: Dict[str, dict], overrides: Dict[str, object]) -> Dict[str, dict]:
    """Apply ``{"section.key": value}`` overrides; ``None`` values are skipped."""
    merged = {s: dict(v) for s, v in cfg.items()}
    for dotted, value in overrides.items():
        if value is None:
            continue
        section, key = dotted.split(".", 1)
        merged.setdefault(section, {})[key] = value
    return merged


def problem_options(cfg: Dict[str, dict]) -> dict:
    p = cfg.get("problem", {})
    return {k: p[k] for k in ("noise_sigma", "noise", "oracle", "mc_size") if k in p}


def _check_domain(cfg, problem_name, opts):
    dom = cfg.get("domain", {})
    if not dom:
        return
    p = make_problem(problem_name, **opts)
    actual = p.domain
    expected = {"kind": actual.kind, "dim": actual.dim}
    if actual.kind == "l2_ball":
        expected.update(radius=actual.radius, center=list(actual.center))
    elif actual.kind == "box":
        expected.update(lo=list(actual.lo), hi=list(actual.hi))
    for key, value in dom.items():
        if key not in expected:
            mismatch = True
        elif key == "kind":
            mismatch = value != expected[key]
        else:
            a, b = np.atleast_1d(value), np.atleast_1d(expected[key])
            mismatch = a.shape != b.shape or not np.allclose(a, b)
        if mismatch:
            raise InvalidInputError(
                f"domain.{key}={value} does not match the {problem_name} domain ({expected[key]})")


def experiment_config(cfg: Dict[str, dict], out_dir: Optional[str] = None) -> ExperimentConfig:
    """Build a validated :class:`ExperimentConfig` from parsed sections."""
    exp, prob = cfg.get("experiment", {}), cfg.get("problem", {})
    if "name" not in prob:
        raise InvalidInputError("problem.name is required")
    if "algorithms" not in exp or "n_grid" not in exp:
        raise InvalidInputError("experiment.algorithms and experiment.n_grid are required")
    opts = problem_options(cfg)
    _check_domain(cfg, prob["name"], opts)
    online = {k: v for k, v in cfg.get("online", {}).items() if k != "learner"}
    boost = cfg.get("boost", {})
    msa = cfg.get("msa", {})
    prior = None
    if msa.get("prior", "uniform") != "uniform":
        prior = _convert("floatlist", msa["prior"], "msa.prior")
    return ExperimentConfig(
        problem=prob["name"], algorithms=list(exp["algorithms"]), n_grid=list(exp["n_grid"]),
        replicates=exp.get("replicates", 1), delta=boost.get("delta", 0.05),
        seed=exp.get("seed", 0), out_dir=out_dir if out_dir is not None else exp.get("out"),
        experiment_id=exp.get("id", "exp"), problem_options=opts,
        loss_overrides=dict(cfg.get("loss", {})), online=online,
        boost_base=boost.get("base", "erm"), prior=prior, class_file=msa.get("class_file"),
        solver=dict(cfg.get("solver", {})), record_timing=exp.get("record_timing", False),
    ).validate()
