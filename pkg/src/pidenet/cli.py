"""Command-line entry point.

Exit codes: 0 success, 1 a hard check failed, 2 usage or configuration error.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys

import numpy as np

from . import config as cfgmod
from . import parallel
from .config import ConfigError, RunConfig

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        print("config keys: " + ", ".join(RunConfig.keys()), file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


def _common(p):
    p.add_argument("--config", help="JSON config file (env PIDENET_CONFIG)")
    p.add_argument("--seed", type=int, help="master seed (env PIDENET_SEED)")
    p.add_argument("--delta", type=float, help="target accuracy (env PIDENET_DELTA)")
    p.add_argument("--out", help="output directory (env PIDENET_OUT)")
    p.add_argument("--threads", type=int, help="worker threads (env PIDENET_THREADS)")
    p.add_argument("--preset", help="problem preset name")
    p.add_argument("--d", type=int, help="state dimension")


def make_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="pidenet", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)

    p = sub.add_parser("solve", help="Monte Carlo point estimate of u(t, x)")
    _common(p)
    p.add_argument("--t", type=float)
    p.add_argument("--x", type=float, nargs="+")
    p.add_argument("--M", type=int)
    p.add_argument("--N-euler", dest="N_euler", type=int)
    p.add_argument("--mode", choices=("shifted", "compensator"))

    p = sub.add_parser("plan", help="network parameters for a target accuracy")
    _common(p)
    p.add_argument("--alpha", type=float)
    p.add_argument("--beta", type=float)
    p.add_argument("--beta-c", dest="beta_c", type=float)
    p.add_argument("--T", type=float)

    p = sub.add_parser("build", help="build and serialize the solution network")
    _common(p)
    p.add_argument("--samples", type=int, help="error-metric samples (0 skips)")

    p = sub.add_parser("check-bounds", help="size and jump-count bound studies")
    _common(p)
    p.add_argument("--scale", choices=("quick", "full"))

    p = sub.add_parser("suite", help="all studies, CSV and plots")
    _common(p)
    p.add_argument("--scale", choices=("quick", "full"))
    p.add_argument("--studies", nargs="+")
    p.add_argument("--jump-end-to-end", dest="jump_end_to_end", action="store_true",
                   default=None)
    return parser


def _problem(cfg: RunConfig):
    from .presets import get_preset
    try:
        return get_preset(cfg.preset, cfg.d, **cfg.overrides)
    except (KeyError, TypeError) as exc:
        raise ConfigError(str(exc)) from exc


def cmd_solve(cfg: RunConfig) -> int:
    from .feynman_kac import EstimatorConfig, solve_u
    problem = _problem(cfg)
    x = np.zeros(problem.d) if cfg.x is None else np.asarray(cfg.x, dtype=np.float64)
    if x.shape != (problem.d,):
        raise ConfigError(f"x needs {problem.d} coordinates")
    est = solve_u(cfg.t, x, problem, EstimatorConfig(cfg.M, cfg.N_euler, master_seed=cfg.seed,
                                                      mode=cfg.mode))
    print(f"preset={problem.name} t={cfg.t:g} x={x.tolist()} M={cfg.M} N_euler={cfg.N_euler}")
    print(f"u = {est.value:.6f} +/- {est.stderr:.6f}")
    if problem.analytic_u is not None:
        ref = float(problem.analytic_u(np.array([cfg.t]), x[None, :])[0])
        z = abs(est.value - ref) / est.stderr if est.stderr > 0 else math.inf
        print(f"reference = {ref:.6f} ({z:.2f} stderr away)")
    return EXIT_OK


def cmd_plan(cfg: RunConfig) -> int:
    from .feynman_kac import choose_parameters
    given = {k: getattr(cfg, k) for k in ("alpha", "beta", "beta_c", "T")}
    problem = None if all(v is not None for v in given.values()) else _problem(cfg)
    plan = choose_parameters(cfg.delta, problem, C=cfg.C, C_b=cfg.C_b, C_prime=cfg.C_prime,
                             **{k: v for k, v in given.items() if v is not None})
    for line in plan.lines():
        print(line)
    return EXIT_OK


def cmd_build(cfg: RunConfig) -> int:
    from .convergence_lab import weighted_l2_error
    from .net_builder import build_phi
    problem = _problem(cfg)
    sol = build_phi(problem, cfg.delta, master_seed=cfg.seed)
    os.makedirs(cfg.out, exist_ok=True)
    with open(os.path.join(cfg.out, "phi.txt"), "w", encoding="utf-8") as fh:
        fh.write(sol.phi.dumps())
    lines = sol.size_lines()
    with open(os.path.join(cfg.out, "sizes.txt"), "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")
    manifest = sol.manifest()
    manifest["preset"] = problem.name
    manifest["delta"] = cfg.delta
    if cfg.samples:
        est = weighted_l2_error(sol.phi, problem, cfg.samples, seed=cfg.seed)
        manifest["weighted_l2_error"] = {"value": est.value, "stderr": est.stderr,
                                         "oracle_stderr": est.oracle_stderr,
                                         "samples": est.samples}
        print(f"weighted L2 error = {est.value:.5f} +/- {est.stderr:.5f}")
    with open(os.path.join(cfg.out, "manifest.json"), "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
    for line in lines:
        print(line)
    print(f"size(phi) = {sol.phi.size()}; written to {cfg.out}")
    return EXIT_FAIL if sol.hard_failures else EXIT_OK


def _run_studies(cfg: RunConfig, studies) -> int:
    from .convergence_lab import SuiteConfig, run_suite
    reports = run_suite(SuiteConfig(cfg.scale, cfg.seed, cfg.out, True, studies,
                                    cfg.jump_end_to_end))
    for rep in reports:
        print(rep.summary())
    print(f"results written to {os.path.join(cfg.out, 'results.csv')}")
    return EXIT_FAIL if any(rep.hard_failures for rep in reports) else EXIT_OK


BOUND_STUDIES = ("strong", "strong_c2", "quadrature", "disruption", "mc_variance", "sqrtN",
                 "jump_budget")


def cmd_check_bounds(cfg: RunConfig) -> int:
    return _run_studies(cfg, BOUND_STUDIES)


def cmd_suite(cfg: RunConfig) -> int:
    return _run_studies(cfg, None if cfg.studies is None else tuple(cfg.studies))


COMMANDS = {"solve": cmd_solve, "plan": cmd_plan, "build": cmd_build,
            "check-bounds": cmd_check_bounds, "suite": cmd_suite}


def main(argv=None) -> int:
    parser = make_parser()
    argv = sys.argv[1:] if argv is None else list(argv)
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code in (0, None) else EXIT_USAGE
    if args.command is None:
        parser.print_usage(sys.stderr)
        return EXIT_USAGE
    flags = {k: v for k, v in vars(args).items() if k not in ("command", "config")}
    try:
        cfg = cfgmod.resolve(args.config, flags)
        parallel.set_threads(cfg.threads)
        return COMMANDS[args.command](cfg)
    except ConfigError as exc:
        print(f"pidenet: {exc}", file=sys.stderr)
        print("config keys: " + ", ".join(RunConfig.keys()), file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
