"""Command-line front end.

    finsler-ceq {solve,analyze,check,synth} CONFIG [--samples N] [--tol T]
                [--seed S] [--eps-fraction E] [--threads K] [--out PATH]

CONFIG is a YAML (or JSON) document; the report is JSON on stdout or in
``--out``. See README.md for the field reference.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
import time
from dataclasses import dataclass, replace
from typing import Optional

import numpy as np
import yaml

from . import __version__, averaged, ceq, contact, metrics
from .errors import ConfigInvalidError, FinslerCeqError, SpecInvalidError
from .linalg import TolerancePolicy

COMMANDS = ("solve", "analyze", "check", "synth")

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_INSOLVABLE = 2
EXIT_DEGENERATE = 3
EXIT_CONFIG = 4


@dataclass
class JobConfig:
    command: str
    metric: metrics.MetricSpec
    point: np.ndarray
    solver: ceq.SolverConfig
    quad: Optional[averaged.QuadratureSpec] = None
    output_path: Optional[str] = None

    def echo(self) -> dict:
        s = self.solver
        out = {
            "command": self.command,
            "metric": self.metric.to_dict(),
            "point": self.point.tolist(),
            "solver": {
                "n_sphere_samples": s.n_sphere_samples,
                "seed": s.seed,
                "eps_fraction": s.eps_fraction,
                "max_eps_retries": s.max_eps_retries,
                "tol": {
                    "rank_rel_tol": s.tol.rank_rel_tol,
                    "residual_tol": s.tol.residual_tol,
                    "contact_tol": s.tol.contact_tol,
                },
            },
        }
        if self.quad is not None:
            out["quadrature"] = {"scheme": self.quad.scheme, "n_nodes": self.quad.n_nodes,
                                 "seed": self.quad.seed}
        return out


def _vector(value, path, n=None):
    try:
        arr = np.array(value, dtype=float)
    except (TypeError, ValueError):
        raise ConfigInvalidError("expected a list of numbers", path) from None
    if arr.ndim != 1 or (n is not None and arr.size != n):
        want = f"{n} numbers" if n is not None else "a flat list of numbers"
        raise ConfigInvalidError(f"expected {want}, got shape {arr.shape}", path)
    if not np.all(np.isfinite(arr)):
        raise ConfigInvalidError("entries must be finite", path)
    return arr


def _section(doc, key):
    sub = doc.get(key) or {}
    if not isinstance(sub, dict):
        raise ConfigInvalidError("expected a mapping", key)
    return sub


def parse_config(doc, command=None, overrides=None) -> JobConfig:
    """Validate a config mapping; CLI flag ``overrides`` win over file values."""
    if not isinstance(doc, dict):
        raise ConfigInvalidError("config document must be a mapping")
    overrides = overrides or {}
    command = command or doc.get("command")
    if command not in COMMANDS:
        raise ConfigInvalidError(f"must be one of {COMMANDS}, got {command!r}", "command")
    if "metric" not in doc:
        raise ConfigInvalidError("missing", "metric")
    try:
        spec = metrics.MetricSpec.from_dict(doc["metric"])
        metric = metrics.build(spec)
    except SpecInvalidError as exc:
        raise ConfigInvalidError(str(exc), "metric") from exc
    n = metric.dim

    if command == "synth" and spec.kind != "synthetic_germ":
        raise ConfigInvalidError("synth needs a synthetic_germ metric", "metric.kind")
    if "point" in doc:
        point = _vector(doc["point"], "point", n)
    elif spec.kind == "synthetic_germ":
        point = np.array(spec.base_point, dtype=float)
    else:
        raise ConfigInvalidError("missing", "point")

    sol = _section(doc, "solver")
    tol_doc = sol.get("tol") or {}
    if not isinstance(tol_doc, dict):
        raise ConfigInvalidError("expected a mapping", "solver.tol")
    try:
        tol_kwargs = {k: float(v) for k, v in tol_doc.items()}
        if overrides.get("tol") is not None:
            tol_kwargs["residual_tol"] = overrides["tol"]
        tol = TolerancePolicy(**tol_kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigInvalidError(str(exc), "solver.tol") from exc

    def pick(key, flag, default, cast):
        if overrides.get(flag) is not None:
            return cast(overrides[flag])
        try:
            return cast(sol.get(key, default))
        except (TypeError, ValueError):
            raise ConfigInvalidError(f"expected {cast.__name__}", f"solver.{key}") from None

    unknown = set(sol) - {"n_sphere_samples", "seed", "eps_fraction", "max_eps_retries", "tol"}
    if unknown:
        raise ConfigInvalidError(f"unknown fields {sorted(unknown)}", "solver")
    try:
        solver = ceq.SolverConfig(
            n_sphere_samples=pick("n_sphere_samples", "samples", ceq.SolverConfig.n_sphere_samples, int),
            seed=pick("seed", "seed", 0, int),
            tol=tol,
            eps_fraction=pick("eps_fraction", "eps_fraction", ceq.SolverConfig.eps_fraction, float),
            max_eps_retries=pick("max_eps_retries", None, ceq.SolverConfig.max_eps_retries, int),
            threads=int(overrides.get("threads") or 1),
        )
        solver.check_dim(n)
    except ValueError as exc:
        raise ConfigInvalidError(str(exc), "solver") from exc

    quad = None
    if doc.get("quadrature") is not None:
        q = _section(doc, "quadrature")
        default_scheme = {2: "angular", 3: "product_sphere"}.get(n, "monte_carlo")
        try:
            quad = averaged.QuadratureSpec(scheme=q.get("scheme", default_scheme),
                                           n_nodes=int(q.get("n_nodes", 256)),
                                           seed=int(q.get("seed", 0)))
            averaged.sphere_rule(n, replace(quad, n_nodes=8))
        except (TypeError, ValueError) as exc:
            raise ConfigInvalidError(str(exc), "quadrature") from exc

    return JobConfig(command=command, metric=spec, point=point, solver=solver, quad=quad,
                     output_path=overrides.get("out") or doc.get("output_path"))


def _clean(obj):
    """Convert numpy containers and non-finite floats to plain JSON values."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        obj = float(obj)
        return obj if math.isfinite(obj) else None
    return obj


def _pivot_dict(pivot):
    if pivot is None:
        return None
    return {"i": pivot.i, "j": pivot.j, "magnitude": pivot.magnitude}


def _intrinsic_dict(rep):
    if rep is None:
        return None
    return {
        "worst_residual": rep.worst_residual,
        "worst_triple": list(rep.worst_triple) if rep.worst_triple else None,
        "v": rep.v,
        "pivot": _pivot_dict(rep.pivot),
        "n_checked": rep.n_checked,
        "skipped_vertical": rep.skipped_vertical,
    }


def outcome_dict(out: ceq.SolveOutcome) -> dict:
    return {
        "status": out.status.value,
        "rho": out.rho,
        "max_ceq_residual": out.max_ceq_residual,
        "nullspace_dim": out.nullspace_dim,
        "samples_used": out.samples_used,
        "epsilon": out.epsilon_used,
        "pivot": _pivot_dict(out.pivot),
        "base_v": out.base_v,
        "intrinsic": _intrinsic_dict(out.intrinsic),
        "diagnostics": out.diagnostics,
    }


def _census(metric, p, solver):
    jets = ceq._sample_jets(metric, p, solver)
    tol = solver.tol
    vert = horiz = vert_not_horiz = 0
    ranks = {0: 0, 2: 0}
    worst_rebuild = 0.0
    for jet in jets:
        cls = contact.classify(jet, tol)
        vert += cls.vertical
        horiz += cls.horizontal
        vert_not_horiz += cls.vertical and not cls.horizontal
        fm = contact.f_matrix(jet, tol)
        ranks[contact.span_rank(fm, tol)] += 1
        pivot = contact.pick_pivot(fm)
        if pivot is not None:
            scale = fm.max_abs
            worst_rebuild = max(worst_rebuild, contact.reconstruct_check(fm, pivot) / scale)
    return {
        "samples": len(jets),
        "vertical": vert,
        "horizontal": horiz,
        "vertical_not_horizontal": vert_not_horiz,
        "span_rank_counts": {str(k): v for k, v in ranks.items()},
        "max_reconstruction_residual": worst_rebuild,
    }


def _check(metric, p, solver):
    jets = ceq._sample_jets(metric, p, solver)
    rep = ceq._aggregate_intrinsic(jets, solver.tol)
    classes = [contact.classify(j, solver.tol) for j in jets]
    gate = sum(c.vertical and not c.horizontal for c in classes)
    out = {"samples": len(jets), "vertical_not_horizontal": gate, "intrinsic": _intrinsic_dict(rep)}
    out["passes"] = gate == 0 and (rep is None or rep.worst_residual <= solver.tol.residual_tol)
    return out


def run(config: JobConfig) -> dict:
    """Execute one job and return the report mapping."""
    start = time.perf_counter()
    metric = metrics.build(config.metric)
    p = config.point
    solver = config.solver
    if config.command == "solve":
        result = outcome_dict(ceq.solve_at_point(metric, p, solver))
    elif config.command == "analyze":
        result = {"contact": _census(metric, p, solver)}
        if config.quad is not None:
            avg = averaged.averaged_metric_at(metric, p, config.quad)
            result["averaged_metric"] = {
                "gamma": avg.gamma,
                "normal_deviation": averaged.normal_deviation(avg),
                "error_estimate": avg.error_estimate,
            }
    elif config.command == "check":
        result = _check(metric, p, solver)
    else:
        outcome = ceq.solve_at_point(metric, p, solver)
        rho_star = np.array(config.metric.rho_star, dtype=float)
        oracle_rho, oracle_res = ceq.ls_oracle(metric, p, solver)
        recovery = None
        if outcome.rho is not None:
            recovery = float(np.max(np.abs(outcome.rho - rho_star)))
        result = {
            "germ": config.metric.to_dict(),
            "outcome": outcome_dict(outcome),
            "recovery_error": recovery,
            "oracle_rho": oracle_rho,
            "oracle_residual": oracle_res,
            "oracle_error": float(np.max(np.abs(oracle_rho - rho_star))),
        }
        result["status"] = outcome.status.value
    report = {
        "tool": "finsler-ceq",
        "version": __version__,
        "config": config.echo(),
        "result": result,
        "wall_time_s": time.perf_counter() - start,
    }
    return _clean(report)


def exit_code_for(report: dict) -> int:
    if report["config"]["command"] != "solve":
        return EXIT_OK
    status = report["result"]["status"]
    if status == ceq.Status.INSOLVABLE.value:
        return EXIT_INSOLVABLE
    if status == ceq.Status.DEGENERATE_SAMPLING.value:
        return EXIT_DEGENERATE
    return EXIT_OK


def _default_threads():
    env = os.environ.get("FINSLER_CEQ_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            pass
    return os.cpu_count() or 1


def build_parser():
    parser = argparse.ArgumentParser(prog="finsler-ceq",
                                     description="Semi-symmetric compatible connections on Finsler manifolds")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("command", choices=COMMANDS)
    parser.add_argument("config", help="YAML or JSON job description")
    parser.add_argument("--samples", type=int, help="number of sphere samples")
    parser.add_argument("--tol", type=float, help="residual tolerance")
    parser.add_argument("--seed", type=int)
    parser.add_argument("--eps-fraction", type=float, dest="eps_fraction")
    parser.add_argument("--threads", type=int, help="worker threads (env FINSLER_CEQ_THREADS)")
    parser.add_argument("--out", help="write the report here instead of stdout")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    overrides = {
        "samples": args.samples, "tol": args.tol, "seed": args.seed,
        "eps_fraction": args.eps_fraction, "out": args.out,
        "threads": args.threads or _default_threads(),
    }
    try:
        with open(args.config, encoding="utf-8") as fh:
            doc = yaml.safe_load(fh)
        config = parse_config(doc, args.command, overrides)
    except OSError as exc:
        print(f"CONFIG_INVALID: cannot read {args.config}: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except yaml.YAMLError as exc:
        print(f"CONFIG_INVALID: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ConfigInvalidError as exc:
        print(f"CONFIG_INVALID: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        report = run(config)
    except FinslerCeqError as exc:
        print(f"{exc.code}: {exc}", file=sys.stderr)
        return EXIT_ERROR
    text = json.dumps(report, indent=2, sort_keys=True)
    if config.output_path:
        with open(config.output_path, "w", encoding="utf-8") as fh:
            fh.write(text + "\n")
    else:
        print(text)
    return exit_code_for(report)


if __name__ == "__main__":
    sys.exit(main())
