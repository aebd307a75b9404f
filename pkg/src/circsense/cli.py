"""``circsense`` command line.

Each subcommand writes one CSV table. The first line is a ``#`` comment with
the resolved configuration (seed and parameters, not worker count or
paths), so equal arguments give byte-identical files.

A ``--config FILE`` of ``key=value`` lines supplies defaults; explicit
flags win over the file, and the file over built-in defaults.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
import warnings

import numpy as np

from circsense import __version__
from circsense import csvio
from circsense import experiments as ex
from circsense import operators as ops
from circsense import recovery as rec
from circsense import rip
from circsense.errors import CircsenseError, ConfigurationError, ContractError, DomainError, RangeError

log = logging.getLogger("circsense")

# Arguments that never affect output bytes and stay out of the header comment.
_UNLOGGED = {"threads", "output", "config", "command", "handler", "fit_output", "trials_output", "omega_output", "dense_output", "log_level"}


def _seed(text):
    try:
        return int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer seed, got {text!r}") from None


def _int_list(text):
    """``a,b,c`` or ``lo:hi[:step]`` (inclusive)."""
    try:
        if ":" in text:
            parts = [int(p) for p in text.split(":")]
            lo, hi = parts[0], parts[1]
            step = parts[2] if len(parts) > 2 else 1
            if step < 1:
                raise ValueError
            return list(range(lo, hi + 1, step))
        return [int(p) for p in text.split(",") if p.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"cannot parse integer list {text!r}") from None


def _header_comment(args) -> str:
    items = []
    for key, value in sorted(vars(args).items()):
        if key in _UNLOGGED or value is None:
            continue
        if isinstance(value, list):
            value = ",".join(str(v) for v in value)
        items.append(f"{key}={value}")
    return f"circsense {__version__} {args.command} " + " ".join(items)


def _require_seed(args):
    if args.seed is None:
        raise ConfigurationError(f"{args.command} needs --seed (all randomness flows from it)")
    if not 0 <= args.seed < 2**64:
        raise ConfigurationError("--seed must be a 64-bit unsigned integer")
    return args.seed


def _generator(args) -> ops.GeneratorSpec:
    return ops.GeneratorSpec.parse(args.generator, args.subgauss_L, args.field)


def _check_positive(**values):
    for name, value in values.items():
        if value is None or value < 1:
            raise ConfigurationError(f"--{name.replace('_', '-')} must be >= 1, got {value}")


def _solver_config(args) -> rec.SolverConfig:
    return rec.SolverConfig(max_iters=args.max_iters, tol_residual=args.tol, step_size=args.step_size, bp_penalty=args.bp_penalty)


# --------------------------------------------------------------------------
# Subcommands
# --------------------------------------------------------------------------


def cmd_gen(args):
    seed = _require_seed(args)
    _check_positive(n=args.n)
    rng = np.random.default_rng(seed)
    xi = ops.sample_generator(_generator(args), ops.generator_length(args.operator, args.n), rng)
    csvio.write_vector(args.output, xi, _header_comment(args))
    if args.m is not None:
        omega = ops.sample_omega(args.n, args.m, args.omega_mode, rng)
        with csvio.open_output(args.omega_output) as fh:
            fh.write(omega.to_string() + "\n")
    if args.dense_output:
        csvio.write_matrix(args.dense_output, ops.dense_materialize(ops.build_operator(args.operator, xi, args.n)))


def cmd_matvec(args):
    xi = csvio.read_vector(args.xi)
    x = csvio.read_vector(args.x)
    if args.operator == "circulant":
        n = xi.size
    else:
        if xi.size % 2 == 0:
            raise ConfigurationError("Toeplitz/Hankel generators have odd length 2n-1")
        n = (xi.size + 1) // 2
    op = ops.build_operator(args.operator, xi, n)
    if args.omega is not None:
        text = args.omega
        if os.path.isfile(text):
            with open(text, encoding="utf-8") as fh:
                text = fh.read()
        op = ops.subsample(op, ops.SampleSet.parse(text, n))
    out = op.rmatvec(x) if args.adjoint else op.matvec(x)
    csvio.write_vector(args.output, out, _header_comment(args))


def cmd_rip(args):
    seed = _require_seed(args)
    _check_positive(n=args.n, m=args.m, s=args.s)
    if args.s > args.n:
        raise ConfigurationError(f"--s {args.s} exceeds --n {args.n}")
    rng = np.random.default_rng(seed)
    phi = ops.partial_operator(args.operator, _generator(args), args.n, args.m, args.omega_mode, rng)
    if args.mode == "exact":
        report = rip.exact_rip_constant(phi, args.s, cap=args.cap, backend=args.backend)
    else:
        report = rip.mc_rip_lower_bound(phi, args.s, args.mc_trials, rng)
    if report.rip_violated:
        log.warning("delta_%d = %.4g >= 1: RIP violated", args.s, report.delta)
    csvio.write_table(args.output, rip.RipReport.HEADER, [report.csv_row()], _header_comment(args))


def _experiment_config(args, m=None) -> ex.ExperimentConfig:
    return ex.ExperimentConfig(
        n=args.n,
        s=args.s,
        m=m if m is not None else args.m,
        generator=_generator(args),
        omega_mode=args.omega_mode,
        solver=args.solver,
        trials=args.trials,
        master_seed=_require_seed(args),
        success_tol=args.success_tol,
        operator=args.operator,
        solver_config=_solver_config(args),
    )


def cmd_recover(args):
    seed = _require_seed(args)
    _check_positive(n=args.n, m=args.m, s=args.s, trials=args.trials)
    cfg = _experiment_config(args)
    rows = []
    for i in range(args.trials):
        rng = np.random.default_rng(ex._trial_seed(seed, i))
        phi = ops.partial_operator(cfg.operator, cfg.generator, cfg.n, cfg.m, cfg.omega_mode, rng)
        x0 = ex.planted_signal(cfg.n, cfg.s, rng)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            res = rec.solve(cfg.solver, phi, phi.matvec(x0), cfg.s, cfg.solver_config)
        rows.append(res.csv_row(cfg.solver, cfg.m, cfg.s, x0))
    csvio.write_table(args.output, rec.RecoveryResult.HEADER, rows, _header_comment(args))


def cmd_phase(args):
    _require_seed(args)
    _check_positive(n=args.n, s=args.s, trials=args.trials)
    if not args.m_grid:
        raise ConfigurationError("--m-grid is empty")
    cfg = _experiment_config(args, m=min(args.m_grid))
    records = []
    points = []
    for m in sorted(set(args.m_grid)):
        batch = ex.run_recovery_trials(ex.probe_config(cfg, m), args.threads)
        records.extend(batch)
        points.append((m, ex.success_rate(batch), len(batch)))
    comment = _header_comment(args)
    csvio.write_table(args.output, ex.PhaseCurve.HEADER, [[str(m), repr(r), str(t)] for m, r, t in points], comment)
    if args.trials_output:
        csvio.write_table(args.trials_output, ex.TrialRecord.HEADER, [r.csv_row() for r in records], comment)


def cmd_prop31(args):
    seed = _require_seed(args)
    _check_positive(n=args.n, trials=args.trials)
    report = ex.prop31_experiment(args.n, args.eps, args.trials, _generator(args), seed, args.threads)
    csvio.write_table(args.output, ex.Prop31Report.HEADER, [report.csv_row()], _header_comment(args))
    log.info("zeta mean %.4f variance %.4f; P(zeta^2 < eps) Gaussian limit %.5f", report.zeta_mean, report.zeta_variance, report.gaussian_limit)


def cmd_cor23(args):
    seed = _require_seed(args)
    _check_positive(n=args.n, s=args.s, trials=args.trials)
    summary = ex.corollary23_experiment(args.n, args.s, args.trials, _generator(args), seed, args.threads)
    csvio.write_table(args.output, ex.Cor23Summary.HEADER, [summary.csv_row()], _header_comment(args))


def cmd_sandwich(args):
    seed = _require_seed(args)
    _check_positive(n=args.n, m=args.m, s=args.s, trials=args.trials)
    params = rip.SandwichParams(args.eps, args.eta)
    summary = ex.sandwich_experiment(args.n, args.m, args.trials, params, seed, args.s, _generator(args), args.omega_mode, args.threads)
    csvio.write_table(args.output, ex.SandwichSummary.HEADER, [summary.csv_row()], _header_comment(args))


def cmd_scaling(args):
    _require_seed(args)
    _check_positive(trials=args.trials)
    if any(s < 2 for s in args.s_list):
        raise ConfigurationError("--s-list values must be >= 2 (log s must be positive)")
    base = ex.ExperimentConfig(
        n=max(args.n_list),
        s=min(args.s_list),
        m=1,
        generator=_generator(args),
        omega_mode=args.omega_mode,
        solver=args.solver,
        trials=args.trials,
        master_seed=args.seed,
        success_tol=args.success_tol,
        operator=args.operator,
        solver_config=_solver_config(args),
    )

    def grid_for(s, n):
        hi = args.m_max if args.m_max else n
        return list(range(s, hi + 1, args.m_step))

    rows = ex.scaling_grid(args.s_list, args.n_list, base, args.target, grid_for, args.threads)
    comment = _header_comment(args)
    table = [
        [str(s), str(n), str(m), repr(ex.FEATURES["new"](s, n)), repr(ex.FEATURES["old"](s, n))]
        for s, n, m in rows
    ]
    csvio.write_table(args.output, ("s", "n", "m_star", "feature_new", "feature_old"), table, comment)
    fits = [ex.fit_scaling(rows, feature) for feature in ("new", "old")]
    fit_rows = [[f.feature, repr(f.slope), repr(f.relative_residual)] for f in fits]
    if args.fit_output:
        csvio.write_table(args.fit_output, ("feature", "slope", "relative_residual"), fit_rows, comment)
    for f in fits:
        log.info("feature %s: slope %.4g, relative residual %.4g", f.feature, f.slope, f.relative_residual)


# --------------------------------------------------------------------------
# Parser
# --------------------------------------------------------------------------


def _add_common(p, seed=True):
    p.add_argument("--output", "-o", default=None, help="output CSV path (default: stdout)")
    p.add_argument("--threads", type=int, default=1, help="worker processes (0 = all cores)")
    p.add_argument("--config", default=None, help="key=value defaults file")
    if seed:
        p.add_argument("--seed", type=_seed, default=None)


def _add_generator(p):
    p.add_argument("--generator", default="rademacher", help="rademacher | uniform | gaussian | truncated")
    p.add_argument("--subgauss-L", dest="subgauss_L", type=float, default=1.0)
    p.add_argument("--field", choices=["real", "complex"], default="real")


def _add_operator(p):
    p.add_argument("--operator", choices=["circulant", "toeplitz", "hankel"], default="circulant")
    p.add_argument("--omega-mode", choices=["multiset", "subset"], default="multiset")


def _add_solver(p):
    p.add_argument("--solver", choices=sorted(rec.SOLVERS), default="basis_pursuit")
    p.add_argument("--max-iters", type=int, default=1000)
    p.add_argument("--tol", type=float, default=1e-6)
    p.add_argument("--step-size", type=float, default=None)
    p.add_argument("--bp-penalty", type=float, default=1.0)
    p.add_argument("--success-tol", type=float, default=1e-4)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="circsense", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"circsense {__version__}")
    parser.add_argument("--log-level", default="WARNING")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", help="draw a generator vector (and optionally a sample set)")
    _add_common(p)
    _add_generator(p)
    _add_operator(p)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--m", type=int, default=None)
    p.add_argument("--omega-output", default=None)
    p.add_argument("--dense-output", default=None)
    p.set_defaults(handler=cmd_gen)

    p = sub.add_parser("matvec", help="apply an operator read from CSV")
    _add_common(p, seed=False)
    p.add_argument("--operator", choices=["circulant", "toeplitz", "hankel"], default="circulant")
    p.add_argument("--xi", required=True, help="generator CSV")
    p.add_argument("--x", required=True, help="input vector CSV")
    p.add_argument("--omega", default=None, help="1-based indices 'i,j,...' or a file holding them")
    p.add_argument("--adjoint", action="store_true")
    p.set_defaults(handler=cmd_matvec)

    p = sub.add_parser("rip", help="RIP constant of a random partial operator")
    _add_common(p)
    _add_generator(p)
    _add_operator(p)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--m", type=int, required=True)
    p.add_argument("--s", type=int, required=True)
    p.add_argument("--mode", choices=["exact", "mc"], default="exact")
    p.add_argument("--mc-trials", type=int, default=1000)
    p.add_argument("--cap", type=int, default=rip.ENUMERATION_CAP)
    p.add_argument("--backend", choices=["auto", "extension", "python"], default="auto")
    p.set_defaults(handler=cmd_rip)

    for name, handler, help_ in (
        ("recover", cmd_recover, "planted-signal recovery, one result row per trial"),
        ("phase", cmd_phase, "success rate over a grid of m"),
    ):
        p = sub.add_parser(name, help=help_)
        _add_common(p)
        _add_generator(p)
        _add_operator(p)
        _add_solver(p)
        p.add_argument("--n", type=int, required=True)
        p.add_argument("--s", type=int, required=True)
        p.add_argument("--trials", type=int, default=1 if name == "recover" else 100)
        if name == "recover":
            p.add_argument("--m", type=int, required=True)
        else:
            p.add_argument("--m-grid", type=_int_list, required=True)
            p.add_argument("--trials-output", default=None)
        p.set_defaults(handler=handler)

    p = sub.add_parser("prop31", help="small-energy probability for the flat vector")
    _add_common(p)
    _add_generator(p)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--eps", type=float, required=True)
    p.add_argument("--trials", type=int, required=True)
    p.set_defaults(handler=cmd_prop31)

    p = sub.add_parser("cor23", help="isometry defect of the full circulant on sparse vectors")
    _add_common(p)
    _add_generator(p)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--s", type=int, required=True)
    p.add_argument("--trials", type=int, required=True)
    p.set_defaults(handler=cmd_cor23)

    p = sub.add_parser("sandwich", help="containment frequency of the subsampled-energy sandwich")
    _add_common(p)
    _add_generator(p)
    p.add_argument("--omega-mode", choices=["multiset", "subset", "full"], default="multiset")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--m", type=int, required=True)
    p.add_argument("--s", type=int, default=4)
    p.add_argument("--trials", type=int, required=True)
    p.add_argument("--eps", type=float, default=0.25)
    p.add_argument("--eta", type=float, default=0.25)
    p.set_defaults(handler=cmd_sandwich)

    p = sub.add_parser("scaling", help="empirical minimal m over an (s, n) grid and scaling fits")
    _add_common(p)
    _add_generator(p)
    _add_operator(p)
    _add_solver(p)
    p.add_argument("--s-list", type=_int_list, default=[4, 8, 16])
    p.add_argument("--n-list", type=_int_list, default=[256, 1024, 4096])
    p.add_argument("--trials", type=int, default=20)
    p.add_argument("--target", type=float, default=0.9)
    p.add_argument("--m-step", type=int, default=1)
    p.add_argument("--m-max", type=int, default=0, help="largest m probed (0 = n)")
    p.add_argument("--fit-output", default=None)
    p.set_defaults(handler=cmd_scaling, solver="omp")

    return parser


def _read_config(path):
    values = {}
    try:
        with open(path, encoding="utf-8") as fh:
            for lineno, raw in enumerate(fh, 1):
                line = raw.split("#", 1)[0].strip()
                if not line:
                    continue
                if "=" not in line:
                    raise ConfigurationError(f"{path}:{lineno}: expected key=value")
                key, value = (t.strip() for t in line.split("=", 1))
                values[key.replace("-", "_")] = value
    except OSError as exc:
        raise ConfigurationError(f"cannot read config {path}: {exc}") from None
    return values


def _config_path(argv):
    # Located before the full parse so file values can satisfy required flags.
    for i, tok in enumerate(argv):
        if tok == "--config" and i + 1 < len(argv):
            return argv[i + 1]
        if tok.startswith("--config="):
            return tok.split("=", 1)[1]
    return None


def _parse(argv):
    parser = build_parser()
    path = _config_path(argv)
    choices = parser._subparsers._group_actions[0].choices
    command = next((tok for tok in argv if tok in choices), None)
    if path is not None and command in choices:
        file_values = _read_config(path)
        subparser = choices[command]
        actions = {a.dest: a for a in subparser._actions}
        defaults = {}
        for key, text in file_values.items():
            if key not in actions or key in ("config", "help"):
                raise ConfigurationError(f"unknown config key {key!r} for {command}")
            action = actions[key]
            if action.type is not None:
                try:
                    defaults[key] = action.type(text)
                except (argparse.ArgumentTypeError, ValueError) as exc:
                    raise ConfigurationError(f"config key {key}: {exc}") from None
            elif action.const is True:
                defaults[key] = text.lower() in ("1", "true", "yes")
            else:
                defaults[key] = text
            action.required = False
        subparser.set_defaults(**defaults)
    return parser.parse_args(argv)


def main(argv=None) -> int:
    try:
        args = _parse(sys.argv[1:] if argv is None else argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    except ConfigurationError as exc:
        print(f"circsense: error: {exc}", file=sys.stderr)
        return 2
    logging.basicConfig(level=getattr(logging, str(args.log_level).upper(), logging.WARNING), format="%(levelname)s %(message)s")
    try:
        ex.resolve_threads(args.threads)
        args.handler(args)
    except (ConfigurationError, DomainError, ContractError, RangeError) as exc:
        print(f"circsense: error: {exc}", file=sys.stderr)
        return 2
    except (CircsenseError, OSError, ArithmeticError, np.linalg.LinAlgError) as exc:
        print(f"circsense: failed: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
