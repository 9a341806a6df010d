"""Command-line entry point: ``orbitkit <subcommand> ...``.

Exit codes: 0 success, 1 computation error (e.g. no convergence), 2 input or
domain error (e.g. a point outside the tube), 64 usage error.
"""

from __future__ import annotations

import argparse
import math
import os
import sys
from dataclasses import dataclass, field

import numpy as np

from . import matdecomp as md
from .bayes_estimator import LinearPrior, bayes_estimate_orbit, bayes_estimate_s2, bayes_risk_s2
from .bayes_regression import PosteriorModel, verify_posterior_integral
from .errors import ComputationError, DomainError, OrbitkitError, ShapeMismatch
from .orbits import OrbitKind, OrbitSpec, parse_orbit, project
from .regression import RegressionDataset, fit_extrinsic_so3, fit_intrinsic_so3
from .simlab import SimulationConfig, emit_artifacts, parse_sigma_grid, run_simulation
from .sphere_geom import sample_haar_so3

DEFAULT_SEED = 20240917
SEED_ENV = "ORBITKIT_SEED"
EXIT_OK, EXIT_COMPUTE, EXIT_DOMAIN, EXIT_USAGE = 0, 1, 2, 64


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


@dataclass(frozen=True)
class RunConfig:
    subcommand: str
    flags: dict = field(default_factory=dict)
    seed: int = DEFAULT_SEED
    inputs: tuple = ()
    outputs: tuple = ()
    verbosity: int = 0


# -- output helpers --------------------------------------------------------


def _num(x) -> str:
    if isinstance(x, bool):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    x = float(x)
    if not math.isfinite(x):
        return "null"
    return md.format_number(x)


def to_json(obj) -> str:
    """Deterministic JSON with 17-significant-digit floats."""
    if isinstance(obj, dict):
        return "{" + ", ".join(f'"{k}": {to_json(v)}' for k, v in obj.items()) + "}"
    if isinstance(obj, (list, tuple)):
        return "[" + ", ".join(to_json(v) for v in obj) + "]"
    if isinstance(obj, str):
        return '"' + obj.replace("\\", "\\\\").replace('"', '\\"') + '"'
    if obj is None:
        return "null"
    return _num(obj)


def _write(text: str, path: str | None) -> None:
    if path:
        with open(path, "w", newline="") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _read_numeric_csv(path: str) -> np.ndarray:
    with open(path, newline="") as fh:
        lines = fh.read().splitlines()
    # tolerate a single header row
    if lines and any(ch.isalpha() and ch not in "eEjJ" for ch in lines[0]):
        lines = lines[1:]
    return md.parse_matrix_csv("\n".join(lines))


def _seed(args) -> int:
    env = os.environ.get(SEED_ENV)
    raw = env if env not in (None, "") else args.seed
    try:
        seed = int(raw)
    except (TypeError, ValueError):
        raise UsageError(f"invalid seed {raw!r}") from None
    if not 0 <= seed < 2**64:
        raise UsageError("seed must be a 64-bit unsigned integer")
    return seed


# -- subcommands -----------------------------------------------------------


def cmd_project(args, cfg: RunConfig) -> int:
    spec = parse_orbit(args.orbit, args.params or _default_params(args.orbit, args.input), args.base)
    x = md.read_matrix_csv(args.input)
    point = project(spec, x)
    value = point.value.reshape(1, -1) if point.value.ndim == 1 else point.value
    _write(md.matrix_to_csv(value), args.out)
    return EXIT_OK


def _default_params(kind: str, path: str) -> str | None:
    # sphere and group dimensions can be read off the input
    if kind.lower() in ("sphere", "group", "lagrangian", "complex"):
        x = md.read_matrix_csv(path)
        n = x.size if kind.lower() == "sphere" and 1 in x.shape else x.shape[0]
        return str(n)
    return None


def cmd_estimate(args, cfg: RunConfig) -> int:
    x = md.read_matrix_csv(args.x)
    v = md.read_matrix_csv(args.v)
    kind = args.orbit.lower()
    lines = []
    if kind == "sphere":
        x, v = x.reshape(-1), v.reshape(-1)
        prior = LinearPrior(v, args.alpha, args.beta)
        if x.size == 3:
            res = bayes_estimate_s2(x, prior, args.epsilon)
        else:
            res = bayes_estimate_orbit(OrbitSpec.sphere(x.size), x, prior, args.epsilon)
        est = res.estimate.value
        step = float(np.linalg.norm(res.geodesic_step)) if res.geodesic_step.ndim == 1 else (
            float(np.linalg.norm(res.geodesic_step @ res.base_point.value))
        )
    elif kind == "group":
        if x.ndim != 2 or x.shape[0] != x.shape[1]:
            raise ShapeMismatch("group estimate needs a square matrix x")
        prior = LinearPrior(v, args.alpha, args.beta)
        res = bayes_estimate_orbit(OrbitSpec.special_orthogonal(x.shape[0]), x, prior, args.epsilon)
        est = res.estimate.value
        step = float(np.linalg.norm(res.geodesic_step @ res.base_point.value))
    else:
        raise DomainError(f"estimate supports the sphere and group orbits, not {args.orbit!r}")
    lines.append(",".join(["estimate"] + [_num(t) for t in np.ravel(est)]))
    lines.append(f"step_length,{_num(step)}")
    if kind == "sphere" and np.ravel(x).size == 3:
        risk = bayes_risk_s2(prior)
        lines.append(f"order2_coeff,{_num(risk.order2_coeff)}")
        lines.append(f"order4_coeff,{_num(risk.order4_coeff)}")
    _write("\n".join(lines) + "\n", args.out)
    return EXIT_OK


def cmd_regress(args, cfg: RunConfig) -> int:
    data = RegressionDataset.from_pairs(_read_numeric_csv(args.data))
    if args.method == "extrinsic":
        fit = fit_extrinsic_so3(data)
    else:
        fit = fit_intrinsic_so3(data, solver=args.solver, max_iter=args.max_iter)
    text = md.matrix_to_csv(fit.gamma)
    diag = to_json(fit.diagnostics()) + "\n"
    if args.out:
        _write(text, args.out)
        sys.stdout.write(diag)
    else:
        sys.stdout.write(text + diag)
    return EXIT_OK


def cmd_simulate(args, cfg: RunConfig) -> int:
    config = SimulationConfig(
        k=args.k,
        n_draws=args.draws,
        sigma_grid=parse_sigma_grid(args.sigmas),
        master_seed=cfg.seed,
        design_policy="fixed_across_draws" if args.design == "fixed" else "redrawn_per_draw",
        solver=args.solver,
    )

    def progress(r):
        if cfg.verbosity:
            print(f"sigma={r.sigma:g} failures={r.failures}", file=sys.stderr)

    report = run_simulation(config, workers=args.threads, progress=progress)
    emit_artifacts(report, args.out)
    with open(os.path.join(args.out, "summary.csv")) as fh:
        sys.stdout.write(fh.read())
    if report.total_failures:
        print(f"{report.total_failures} fits did not converge", file=sys.stderr)
        return EXIT_COMPUTE
    return EXIT_OK


def cmd_bayes_verify(args, cfg: RunConfig) -> int:
    rng = np.random.default_rng(cfg.seed)
    x = md.read_matrix_csv(args.x) if args.x else sample_haar_so3(rng)
    gamma_hat = md.read_matrix_csv(args.gamma_hat) if args.gamma_hat else sample_haar_so3(rng)
    alpha = md.read_matrix_csv(args.alpha_test) if args.alpha_test else sample_haar_so3(rng)
    model = PosteriorModel(args.c, x)
    check = verify_posterior_integral(model, gamma_hat, alpha, args.samples, rng, workers=args.threads)
    out = {
        "numeric": check.numeric,
        "analytic": check.analytic,
        "relative_error": check.relative_error,
        "stderr": check.stderr,
        "euler_y": check.euler_y,
        "c": model.c,
        "samples": int(args.samples),
        "seed": cfg.seed,
    }
    _write(to_json(out) + "\n", args.out)
    return EXIT_OK


# -- parser ----------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="orbitkit", description="Orbit projections, Bayes estimators and rotation regression.")
    p.add_argument("-v", "--verbose", action="count", default=0, help="progress messages on stderr")
    sub = p.add_subparsers(dest="command", metavar="SUBCOMMAND", parser_class=_Parser)
    sub.required = True

    kinds = ", ".join(k.value for k in OrbitKind)
    sp = sub.add_parser("project", help="project a matrix onto an orbit")
    sp.add_argument("--orbit", required=True, help=f"orbit kind: {kinds}")
    sp.add_argument("--params", help="dimension parameters, e.g. 'n' or 'k,n'")
    sp.add_argument("--base", help="comma-separated base singular values (svd orbit)")
    sp.add_argument("--in", dest="input", required=True, help="input matrix CSV")
    sp.add_argument("--out", help="output CSV (default: stdout)")
    sp.set_defaults(func=cmd_project)

    se = sub.add_parser("estimate", help="second-order Bayes estimate with a linear prior")
    se.add_argument("--orbit", default="sphere", choices=["sphere", "group"])
    se.add_argument("--x", required=True, help="observation CSV")
    se.add_argument("--v", required=True, help="prior vector / matrix CSV")
    se.add_argument("--alpha", type=float, required=True, help="prior slope alpha >= 0")
    se.add_argument("--beta", type=float, default=1.0, help="prior offset (default 1)")
    se.add_argument("--epsilon", type=float, required=True, help="noise scale > 0")
    se.add_argument("--out", help="output CSV (default: stdout)")
    se.set_defaults(func=cmd_estimate)

    sr = sub.add_parser("regress", help="fit a rotation to paired sphere data")
    sr.add_argument("--method", choices=["extrinsic", "intrinsic"], default="intrinsic")
    sr.add_argument("--data", required=True, help="CSV with columns theta_x,theta_y,theta_z,y_x,y_y,y_z")
    sr.add_argument("--solver", choices=["newton", "fixed_point"], default="newton")
    sr.add_argument("--max-iter", type=int, default=200, help="iteration cap (default 200)")
    sr.add_argument("--out", help="rotation CSV (default: stdout)")
    sr.set_defaults(func=cmd_regress)

    ss = sub.add_parser("simulate", help="Monte Carlo study of the intrinsic regressor")
    ss.add_argument("--k", type=int, default=100, help="design points per draw")
    ss.add_argument("--draws", type=int, default=1000, help="draws per sigma")
    ss.add_argument("--sigmas", default="0.1:0.9:0.1", help="start:stop:step or comma list")
    ss.add_argument("--seed", type=int, default=DEFAULT_SEED, help=f"master seed (default {DEFAULT_SEED})")
    ss.add_argument("--out", required=True, help="output directory")
    ss.add_argument("--design", choices=["fixed", "redrawn"], default="fixed")
    ss.add_argument("--solver", choices=["newton", "fixed_point"], default="newton")
    ss.add_argument("--threads", type=int, default=1, help="worker threads (default 1)")
    ss.set_defaults(func=cmd_simulate)

    sb = sub.add_parser("bayes-verify", help="check the six-dimensional posterior integral")
    sb.add_argument("--c", type=float, default=0.2, help="posterior coupling, |c| <= 0.3")
    sb.add_argument("--samples", type=int, default=1_000_000, help="Monte Carlo samples")
    sb.add_argument("--seed", type=int, default=DEFAULT_SEED, help=f"seed (default {DEFAULT_SEED})")
    sb.add_argument("--x", help="statistic rotation CSV (default: random)")
    sb.add_argument("--gamma-hat", help="candidate estimator CSV (default: random)")
    sb.add_argument("--alpha-test", help="test rotation CSV (default: random)")
    sb.add_argument("--threads", type=int, default=1, help="worker threads (default 1)")
    sb.add_argument("--out", help="JSON output file (default: stdout)")
    sb.set_defaults(func=cmd_bayes_verify)
    return p


def dispatch(argv) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        seed = _seed(args) if hasattr(args, "seed") else DEFAULT_SEED
        if getattr(args, "threads", 1) < 1:
            raise UsageError("--threads must be at least 1")
    except UsageError as exc:
        parser.error(str(exc))
    cfg = RunConfig(
        subcommand=args.command,
        flags={k: v for k, v in vars(args).items() if k not in ("func", "command")},
        seed=seed,
        inputs=tuple(getattr(args, a) for a in ("input", "x", "v", "data") if getattr(args, a, None)),
        outputs=tuple(a for a in (getattr(args, "out", None),) if a),
        verbosity=args.verbose,
    )
    try:
        return args.func(args, cfg)
    except ComputationError as exc:
        print(f"orbitkit: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_COMPUTE
    except (DomainError, OSError) as exc:
        print(f"orbitkit: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_DOMAIN
    except OrbitkitError as exc:  # pragma: no cover
        print(f"orbitkit: {exc}", file=sys.stderr)
        return EXIT_DOMAIN


def main(argv=None) -> int:
    return dispatch(sys.argv[1:] if argv is None else argv)


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
