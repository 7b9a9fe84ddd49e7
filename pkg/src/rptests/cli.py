"""``rptest`` command-line entry point.

Every command writes one JSON report (stdout or ``--out``). Exit status is
0 on success, 1 when a computational error was recorded in the report and
2 for usage errors, which are all listed before exiting.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import asdict, dataclass, field

import numpy as np

from . import __version__
from .core import ErrorSource, derive_seed
from .exceptions import RPTestError
from .io import read_matrix, read_response, write_matrix
from .procedures import (
    as_design,
    group_test,
    hetero_test,
    nonlinearity_test,
    quadratic_test,
    random_group_split,
)
from .simulation import (
    ALTERNATIVES,
    DESIGN_KINDS,
    ERRORS,
    TESTS,
    Scenario,
    gen_coefficients,
    gen_design,
    gen_response,
    null_envelope,
    run_study,
)
from .single_var import all_single_var_pvalues
from .tree_ensemble import ForestConfig

__all__ = ["RunConfig", "UsageError", "build_parser", "parse_and_validate", "execute", "main"]

SCHEMA_VERSION = 1
COMMANDS = ("group", "single", "nonlin", "hetero", "quadratic", "simulate", "envelope")
DATA_COMMANDS = ("group", "single", "nonlin", "hetero", "quadratic")
DEFAULT_B = {"single": 100, "envelope": 99, "simulate": 99}


class UsageError(Exception):
    """Invalid command line; ``violations`` lists every problem found."""

    def __init__(self, violations):
        self.violations = list(violations)
        super().__init__("; ".join(self.violations))


@dataclass
class RunConfig:
    command: str
    x: str | None = None
    y: str | None = None
    y_column: str | None = None
    group: list = field(default_factory=list)
    B: int = 249
    seed: int = 0
    error_model: str = "gaussian"
    lam: float | None = None
    out: str | None = None
    workers: int = 1
    n_trees: int = 500
    # simulate
    design: str = "toeplitz"
    n: int = 100
    p: int = 500
    scheme: str = "uniform"
    alternative: str = "null"
    errors: str = "gaussian"
    sigma: float = 1.0
    x_out: str | None = None
    y_out: str | None = None
    study: bool = False
    test: str = "group"
    n_designs: int = 5
    reps: int = 40
    ecdf_csv: str | None = None
    # envelope
    r: int = 25
    x_max: float = 0.1
    n_sim: int = 10_000


def build_parser():
    parser = argparse.ArgumentParser(prog="rptest", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", metavar="command")

    def common(p, data=True):
        p.add_argument("--B", type=int, default=None, help="number of simulated residual vectors")
        p.add_argument("--seed", type=int, default=None, help="defaults to $RPTEST_SEED, then 0")
        p.add_argument("--out", default=None, help="JSON report path (default: stdout)")
        p.add_argument("--workers", type=int, default=1)
        if data:
            p.add_argument("--x", default=None, help="design CSV")
            p.add_argument("--y", default=None, help="response CSV")
            p.add_argument("--y-column", default=None, help="name or index of the response column")
            p.add_argument("--error-model", choices=("gaussian", "resample"), default="gaussian")
            p.add_argument("--lambda", dest="lam", type=float, default=None,
                           help="first-stage square-root Lasso penalty")

    g = sub.add_parser("group", help="test a group of predictors")
    common(g)
    g.add_argument("--group", default=None, help="comma-separated 0-based column indices")
    common(sub.add_parser("single", help="p-value for every predictor"))
    nl = sub.add_parser("nonlin", help="random forest test for nonlinearity")
    common(nl)
    nl.add_argument("--n-trees", type=int, default=500)
    common(sub.add_parser("hetero", help="test for heteroscedasticity"))
    common(sub.add_parser("quadratic", help="least squares fit against quadratic effects"))

    s = sub.add_parser("simulate", help="generate a dataset or run a simulation study")
    common(s, data=False)
    s.add_argument("--design", choices=DESIGN_KINDS, default="toeplitz")
    s.add_argument("--n", type=int, default=100)
    s.add_argument("--p", type=int, default=500)
    s.add_argument("--scheme", choices=("uniform", "decay"), default="uniform")
    s.add_argument("--alternative", choices=ALTERNATIVES, default="null")
    s.add_argument("--errors", choices=ERRORS, default="gaussian")
    s.add_argument("--sigma", type=float, default=1.0)
    s.add_argument("--x-out", default=None, help="write the design here")
    s.add_argument("--y-out", default=None, help="write the response here")
    s.add_argument("--study", action="store_true", help="run a study instead of writing data")
    s.add_argument("--test", choices=TESTS, default="group")
    s.add_argument("--error-model", choices=("gaussian", "resample"), default="gaussian")
    s.add_argument("--n-designs", type=int, default=5)
    s.add_argument("--reps", type=int, default=40)
    s.add_argument("--ecdf-csv", default=None, help="write per-design ECDFs here")

    e = sub.add_parser("envelope", help="null envelope for p-value ECDFs")
    common(e, data=False)
    e.add_argument("--r", type=int, default=25)
    e.add_argument("--x-max", type=float, default=0.1)
    e.add_argument("--n-sim", type=int, default=10_000)
    return parser


def _readable(path, flag, errs):
    if path is not None and not (os.path.isfile(path) and os.access(path, os.R_OK)):
        errs.append(f"{flag}: cannot read {path}")


def _writable(path, flag, errs):
    if path is None:
        return
    d = os.path.dirname(os.path.abspath(path))
    if not (os.path.isdir(d) and os.access(d, os.W_OK)):
        errs.append(f"{flag}: cannot write to {d}")


def _seed(value, errs):
    if value is not None:
        return value
    env = os.environ.get("RPTEST_SEED")
    if env is None:
        return 0
    try:
        return int(env)
    except ValueError:
        errs.append(f"RPTEST_SEED must be an integer, got {env!r}")
        return 0


def parse_and_validate(argv) -> RunConfig:
    """Parse ``argv`` into a :class:`RunConfig`, raising :class:`UsageError` on any violation."""
    parser = build_parser()
    try:
        ns = parser.parse_args(argv)
    except SystemExit as exc:
        if exc.code == 0:
            raise
        raise UsageError(["could not parse arguments (see message above)"]) from None
    if ns.command is None:
        raise UsageError([f"a command is required: one of {', '.join(COMMANDS)}"])
    errs = []
    args = {k: v for k, v in vars(ns).items() if k in RunConfig.__dataclass_fields__}
    args["seed"] = _seed(ns.seed, errs)
    args["B"] = DEFAULT_B.get(ns.command, 249) if ns.B is None else ns.B
    group = []
    if ns.command == "group":
        if ns.group is None:
            errs.append("group: --group is required")
        else:
            try:
                group = [int(t) for t in ns.group.split(",") if t.strip()]
            except ValueError:
                errs.append(f"--group must be comma-separated integers, got {ns.group!r}")
            else:
                if not group:
                    errs.append("--group is empty")
                elif min(group) < 0:
                    errs.append("--group indices must be non-negative")
    args["group"] = group
    cfg = RunConfig(**args)

    if cfg.B < 2:
        errs.append("--B must be at least 2")
    if cfg.workers < 1:
        errs.append("--workers must be at least 1")
    if cfg.command in DATA_COMMANDS:
        for flag, path in (("--x", cfg.x), ("--y", cfg.y)):
            if path is None:
                errs.append(f"{cfg.command}: {flag} is required")
            else:
                _readable(path, flag, errs)
        if cfg.lam is not None and not cfg.lam > 0:
            errs.append("--lambda must be positive")
        if cfg.lam is not None and cfg.command == "quadratic":
            errs.append("quadratic: --lambda does not apply to a least squares first stage")
        if cfg.command == "single" and cfg.error_model != "gaussian":
            errs.append("single: only the gaussian error model is available")
        if cfg.n_trees < 1:
            errs.append("--n-trees must be at least 1")
    if cfg.command == "simulate":
        if cfg.n < 2 or cfg.p < 1:
            errs.append("--n must be at least 2 and --p at least 1")
        if not cfg.sigma > 0:
            errs.append("--sigma must be positive")
        if cfg.study:
            if cfg.n_designs < 1 or cfg.reps < 0:
                errs.append("--n-designs must be at least 1 and --reps non-negative")
            if cfg.alternative == "group" and cfg.test != "group":
                errs.append("the group alternative needs --test group")
            _writable(cfg.ecdf_csv, "--ecdf-csv", errs)
        else:
            if cfg.x_out is None or cfg.y_out is None:
                errs.append("simulate: --x-out and --y-out are required unless --study is given")
            _writable(cfg.x_out, "--x-out", errs)
            _writable(cfg.y_out, "--y-out", errs)
    if cfg.command == "envelope":
        if cfg.r < 2:
            errs.append("--r must be at least 2")
        if not 0 < cfg.x_max <= 1:
            errs.append("--x-max must lie in (0, 1]")
        if cfg.n_sim < cfg.r:
            errs.append("--n-sim must be at least --r")
    _writable(cfg.out, "--out", errs)
    if errs:
        raise UsageError(errs)
    return cfg


def _floats(a):
    return [None if not np.isfinite(v) else float(v) for v in np.ravel(a)]


def _rp_report(res):
    bc = res.beta_check
    return {
        "pvalue": float(res.pvalue),
        "B": res.B,
        "sigma_check": None if res.sigma_check is None else float(res.sigma_check),
        "lambda": None if res.lam is None else float(res.lam),
        "active_set_size": None if bc is None else int(np.count_nonzero(bc)),
        "active_set": None if bc is None else np.flatnonzero(bc).tolist(),
        "observed_curve": _floats(res.curves[0]),
        "dropped_columns": list(res.dropped_columns),
    }


def _load(cfg):
    X = read_matrix(cfg.x)
    y = read_response(cfg.y, cfg.y_column)
    return X, y


def _run_data(cfg):
    X, y = _load(cfg)
    kw = dict(B=cfg.B, seed=cfg.seed, error_model=cfg.error_model)
    if cfg.command == "group":
        if max(cfg.group) >= X.shape[1]:
            raise UsageError([f"--group index {max(cfg.group)} out of range for {X.shape[1]} columns"])
        return _rp_report(group_test(X, y, cfg.group, n_jobs=cfg.workers, lam=cfg.lam, **kw))
    if cfg.command == "nonlin":
        forest = ForestConfig(n_trees=cfg.n_trees)
        return _rp_report(
            nonlinearity_test(X, y, forest=forest, n_jobs=cfg.workers, lam=cfg.lam, **kw)
        )
    if cfg.command == "hetero":
        return _rp_report(hetero_test(X, y, n_jobs=cfg.workers, lam=cfg.lam, **kw))
    if cfg.command == "quadratic":
        return _rp_report(quadratic_test(X, y, **kw))
    results = all_single_var_pvalues(
        as_design(X), y, B=cfg.B, src=ErrorSource("gaussian", cfg.seed), lam=cfg.lam,
        n_jobs=cfg.workers,
    )
    return {
        "pvalues": _floats([r.p_value for r in results]),
        "B": cfg.B,
        "variables": [
            {"k": r.k, "t": _floats([r.t_obs])[0], "m_hat": _floats([r.m_hat])[0],
             "v_hat": _floats([r.v_hat])[0], "pvalue": _floats([r.p_value])[0], "status": r.status}
            for r in results
        ],
    }


def _run_simulate(cfg):
    if cfg.study:
        sc = Scenario(
            design=cfg.design, n=cfg.n, p=cfg.p, scheme=cfg.scheme, alternative=cfg.alternative,
            test=cfg.test, errors=cfg.errors, error_model=cfg.error_model, sigma=cfg.sigma,
            n_designs=cfg.n_designs, reps=cfg.reps, B=cfg.B, seed=cfg.seed,
        )
        rep = run_study(sc, n_jobs=cfg.workers)
        if cfg.ecdf_csv is not None:
            rep.write_ecdf_csv(cfg.ecdf_csv)
        return rep.to_dict()
    X = gen_design(cfg.design, cfg.n, cfg.p, derive_seed(cfg.seed, 1))
    spec = gen_coefficients(cfg.scheme, cfg.p, derive_seed(cfg.seed, 2), s=min(12, cfg.p))
    group = None
    if cfg.alternative == "group":
        group, _ = random_group_split(cfg.p, spec.support, derive_seed(cfg.seed, 3))
    spec = type(spec)(spec.beta, cfg.sigma)
    y, truth = gen_response(
        X, spec, cfg.alternative, derive_seed(cfg.seed, 5), cfg.errors, group,
        extra_seed=derive_seed(cfg.seed, 4),
    )
    write_matrix(cfg.x_out, X.values, [f"x{j}" for j in range(cfg.p)])
    write_matrix(cfg.y_out, y, ["y"])
    return {
        "x_out": cfg.x_out,
        "y_out": cfg.y_out,
        "support": truth["support"].tolist(),
        "beta": _floats(truth["beta"]),
        "group": None if group is None else group.tolist(),
        "min_variance_before_scaling": truth.get("min_before_scaling"),
        "min_variance_after_scaling": truth.get("min_after_scaling"),
    }


def _run_envelope(cfg):
    env = null_envelope(cfg.B, cfg.r, cfg.x_max, cfg.n_sim, cfg.seed)
    x, q = env.curve()
    return {"m": env.m, "r": env.r, "x_max": env.x_max, "alpha": env.alpha,
            "x": x.tolist(), "q": q.tolist()}


def execute(cfg: RunConfig):
    """Run ``cfg`` and return ``(exit_status, report)``.

    Computational errors are caught and recorded in the report.
    """
    report = {
        "schema_version": SCHEMA_VERSION,
        "version": __version__,
        "command": cfg.command,
        "seed": cfg.seed,
        "config": asdict(cfg),
    }
    try:
        if cfg.command in DATA_COMMANDS:
            report["result"] = _run_data(cfg)
        elif cfg.command == "simulate":
            report["result"] = _run_simulate(cfg)
        else:
            report["result"] = _run_envelope(cfg)
    except RPTestError as exc:
        report["status"] = "error"
        report["error"] = {"type": type(exc).__name__, "message": str(exc)}
        return 1, report
    report["status"] = "ok"
    return 0, report


def _emit(report, path):
    text = json.dumps(report, indent=2, sort_keys=True)
    if path is None:
        sys.stdout.write(text + "\n")
    else:
        with open(path, "w") as fh:
            fh.write(text + "\n")


def main(argv=None):
    try:
        cfg = parse_and_validate(sys.argv[1:] if argv is None else argv)
        status, report = execute(cfg)
    except UsageError as exc:
        for v in exc.violations:
            sys.stderr.write(f"rptest: error: {v}\n")
        return 2
    _emit(report, cfg.out)
    return status


if __name__ == "__main__":
    sys.exit(main())
