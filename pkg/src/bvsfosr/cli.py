"""Command-line interface: fit, simulate, replicate, gcv-scan, diagnose.

Settings resolve in three layers: built-in defaults, then a JSON config
file (``--config``), then explicit flags.  Each run writes the resolved
settings to ``config.json`` in its output directory, so passing that file
back through ``--config`` repeats the run.
"""
from __future__ import annotations

import argparse
import logging
import sys
import time
from pathlib import Path

import numpy as np

from . import io as fio
from .errors import ChainFailure, FOSRError, ValidationError
from .inference import ConvergenceReport, psrf
from .pipeline import fit_model
from .sampler import GibbsConfig, Hyperparameters
from .synth import ModelConfig, SyntheticSpec, generate_dataset, run_replications

log = logging.getLogger("bvsfosr")

EXIT_OK, EXIT_INPUT, EXIT_RHAT, EXIT_NUMERIC = 0, 2, 3, 4

MODEL_DEFAULTS = dict(
    k=10, order=4, lam=float(np.sqrt(2.0)), mu="0.5", psi=0.6, delta1=0.0, delta2=0.0,
    iters=10000, burn_in=0.5, thin=50, chains=2, seed=0, threads=1,
    rhat_threshold=1.1, warn_only=False,
)
SYNTH_DEFAULTS = dict(m=10, n=25, sigma=0.2)
DEFAULTS = {
    "fit": dict(MODEL_DEFAULTS, response=None, covariates=None),
    "simulate": dict(MODEL_DEFAULTS, **SYNTH_DEFAULTS),
    "replicate": dict(
        MODEL_DEFAULTS, **SYNTH_DEFAULTS, replications=20,
        mu="0.1,0.2,0.3,0.4,0.5,0.6,0.7,0.8,0.9,parameter", hold_covariates=False,
    ),
    "gcv-scan": dict(MODEL_DEFAULTS, response=None, covariates=None, ks="5,10,15"),
    "diagnose": dict(draws=None, rhat_threshold=1.1, warn_only=False),
}
INT_KEYS = {"k", "order", "iters", "thin", "chains", "seed", "threads", "m", "n", "replications"}
FLOAT_KEYS = {"lam", "psi", "delta1", "delta2", "burn_in", "sigma", "rhat_threshold"}
BOOL_KEYS = {"warn_only", "hold_covariates"}


def parse_mu(text):
    """A number for fixed mu, or ``parameter`` to sample mu."""
    s = str(text).strip().lower()
    if s == "parameter":
        return None
    try:
        v = float(s)
    except ValueError:
        raise ValidationError(f"mu must be a number in (0, 1) or 'parameter', got {text!r}") from None
    return v


def _model_flags(p):
    p.add_argument("--k", type=int, help="number of B-spline basis functions")
    p.add_argument("--order", type=int, help="B-spline order (4 = cubic)")
    p.add_argument("--lambda", dest="lam", type=float, help="rate parameter of the shrinkage prior")
    p.add_argument("--mu", help="prior inclusion mean: value in (0,1) or 'parameter'")
    p.add_argument("--psi", type=float, help="upper truncation of mu when it is a parameter")
    p.add_argument("--delta1", type=float, help="inverse-gamma shape for sigma^2")
    p.add_argument("--delta2", type=float, help="inverse-gamma scale for sigma^2")
    p.add_argument("--iters", type=int, help="iterations per chain")
    p.add_argument("--burn-in", dest="burn_in", type=float, help="burn-in fraction")
    p.add_argument("--thin", type=int, help="thinning interval")
    p.add_argument("--chains", type=int, help="number of chains")
    p.add_argument("--seed", type=int, help="master seed")
    p.add_argument("--threads", type=int, help="worker processes")
    p.add_argument("--rhat-threshold", dest="rhat_threshold", type=float, help="R-hat pass threshold")
    p.add_argument("--warn-only", dest="warn_only", action="store_true", default=None,
                   help="report R-hat failures without a nonzero exit")


def _synth_flags(p):
    p.add_argument("--m", type=int, help="number of curves")
    p.add_argument("--n", type=int, help="points per curve")
    p.add_argument("--sigma", type=float, help="noise standard deviation")


def _data_flags(p):
    p.add_argument("--response", help="long-format response CSV (curve_id,t,y)")
    p.add_argument("--covariates", help="covariate CSV (curve_id,x_1,...,x_p)")


def build_parser():
    parser = argparse.ArgumentParser(prog="bvsfosr", description="Bayesian variable selection for function-on-scalar regression")
    sub = parser.add_subparsers(dest="command", required=True)
    cmds = {
        "fit": "fit the model to CSV data",
        "simulate": "generate one synthetic dataset and fit it",
        "replicate": "replication study over mu configurations",
        "gcv-scan": "fit once per basis size and tabulate fit metric and GCV",
        "diagnose": "R-hat for every parameter of exported draws",
    }
    for name, help_text in cmds.items():
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", help="JSON file of settings; flags override it")
        p.add_argument("--out", help="output directory for this run")
        p.add_argument("-v", "--verbose", action="store_true")
        if name == "diagnose":
            p.add_argument("--draws", help="directory holding draws_chain*.csv")
            p.add_argument("--rhat-threshold", dest="rhat_threshold", type=float)
            p.add_argument("--warn-only", dest="warn_only", action="store_true", default=None)
            continue
        _model_flags(p)
        if name in ("fit", "gcv-scan"):
            _data_flags(p)
        if name in ("simulate", "replicate"):
            _synth_flags(p)
        if name == "replicate":
            p.add_argument("--replications", type=int, help="number of replications R")
            p.add_argument("--hold-covariates", dest="hold_covariates", action="store_true", default=None,
                           help="reuse one covariate draw in every replication")
        if name == "gcv-scan":
            p.add_argument("--ks", help="comma-separated basis sizes")
    return parser


def _coerce(key, value):
    if value is None:
        return None
    if key in BOOL_KEYS:
        if isinstance(value, str):
            return value.strip().lower() in ("1", "true", "yes")
        return bool(value)
    try:
        if key in INT_KEYS:
            if isinstance(value, float) and not value.is_integer():
                raise ValueError
            return int(value)
        if key in FLOAT_KEYS:
            return float(value)
    except (TypeError, ValueError):
        raise ValidationError(f"setting {key!r} has invalid value {value!r}") from None
    return value if key not in ("mu", "ks") else str(value)


def resolve_settings(args):
    """Merge defaults, config file and flags into one flat dict."""
    settings = dict(DEFAULTS[args.command])
    if args.config:
        path = Path(args.config)
        if not path.is_file():
            raise ValidationError(f"config file {path} does not exist")
        loaded = fio.read_json(path)
        if not isinstance(loaded, dict):
            raise ValidationError(f"config file {path} must hold a JSON object")
        loaded.pop("command", None)
        unknown = set(loaded) - set(settings) - {"out"}
        if unknown:
            raise ValidationError(f"unknown settings in {path}: {sorted(unknown)}")
        settings.update(loaded)
    for key, value in vars(args).items():
        if key in ("command", "config", "verbose"):
            continue
        if value is not None:
            settings[key] = value
    settings = {k: _coerce(k, v) for k, v in settings.items()}
    for key in ("response", "covariates"):
        if key in settings:
            if not settings[key]:
                raise ValidationError(f"--{key} is required")
            if not Path(settings[key]).is_file():
                raise ValidationError(f"{key} file {settings[key]} does not exist")
    if args.command == "diagnose":
        if not settings.get("draws") or not Path(settings["draws"]).is_dir():
            raise ValidationError("--draws must name an existing directory")
    if args.command == "gcv-scan":
        settings["ks"] = ",".join(str(k) for k in parse_ks(settings["ks"]))
    return settings


def parse_ks(text):
    try:
        ks = [int(s) for s in str(text).split(",") if s.strip()]
    except ValueError:
        raise ValidationError(f"--ks must be comma-separated integers, got {text!r}") from None
    if not ks:
        raise ValidationError("--ks needs at least one basis size")
    return ks


def hyperparameters_from(s):
    mu = parse_mu(s["mu"])
    return Hyperparameters(lam=s["lam"], delta1=s["delta1"], delta2=s["delta2"], mu=mu, psi=s["psi"])


def gibbs_from(s):
    return GibbsConfig(n_iterations=s["iters"], burn_in_fraction=s["burn_in"], thinning=s["thin"],
                       n_chains=s["chains"], seed=s["seed"])


def spec_from(s):
    return SyntheticSpec(m=s["m"], n=s["n"], sigma=s["sigma"], seed=s["seed"])


def _out_dir(command, settings):
    out = settings.get("out") or f"runs/{command}-{time.strftime('%Y%m%d-%H%M%S')}"
    path = Path(out)
    path.mkdir(parents=True, exist_ok=True)
    settings["out"] = str(path)
    return path


def _emit_fit(result, out, truth_data=None):
    fio.write_json(result.summary.to_dict(), out / "summary.json")
    fio.write_curves_csv(result.summary, out / "coefficients.csv")
    fio.write_fitted_csv(result.std.base, result.predictions(), out / "fitted.csv")
    fio.write_metrics(result.metrics, out)
    fio.write_json(result.convergence.to_dict(), out / "convergence.json")
    fio.write_draws(result.draws, out / "draws")


def _rhat_exit(report, settings):
    if report.all_passed:
        return EXIT_OK
    bad = report.failures()
    log.warning("R-hat >= %s for %d parameter(s), e.g. %s", report.threshold, len(bad), ", ".join(bad[:5]))
    return EXIT_OK if settings["warn_only"] else EXIT_RHAT


def cmd_fit(settings, out):
    hp, cfg = hyperparameters_from(settings), gibbs_from(settings)
    data = fio.load_dataset(settings["response"], settings["covariates"])
    log.info("loaded %d curves, %d covariates, %d observations", data.m, data.p, data.n_obs)
    result = fit_model(data, settings["k"], settings["order"], hp, cfg,
                       threads=settings["threads"], rhat_threshold=settings["rhat_threshold"])
    _emit_fit(result, out)
    log.info("Z_hat = %s, fit metric = %.6f, GCV = %.6g", result.summary.Z_hat.tolist(),
             result.metrics.r2_adj, result.metrics.gcv)
    print(f"Z_hat: {' '.join(str(int(z)) for z in result.summary.Z_hat)}")
    print(f"r2_adj: {result.metrics.r2_adj:.6f}  gcv: {result.metrics.gcv:.6g}")
    return _rhat_exit(result.convergence, settings)


def cmd_simulate(settings, out):
    hp, cfg, spec = hyperparameters_from(settings), gibbs_from(settings), spec_from(settings)
    data, truth = generate_dataset(spec)
    fio.write_dataset(data, out / "response.csv", out / "covariates.csv")
    fio.write_json(dict(grid=truth.grid, intercept=truth.intercept, coefficients=truth.coefficients,
                        selectors=truth.selectors, mean_curves=truth.mean_curves), out / "truth.json")
    result = fit_model(data, settings["k"], settings["order"], hp, cfg, truth_mean=truth.mean_curves,
                       threads=settings["threads"], rhat_threshold=settings["rhat_threshold"])
    _emit_fit(result, out)
    print(f"Z_hat: {' '.join(str(int(z)) for z in result.summary.Z_hat)}")
    print(f"r2_adj: {result.metrics.r2_adj:.6f}  mse: {result.metrics.mse:.6g}  gcv: {result.metrics.gcv:.6g}")
    return _rhat_exit(result.convergence, settings)


def replicate_configs(mu_text):
    configs = []
    for item in str(mu_text).split(","):
        if not item.strip():
            continue
        mu = parse_mu(item)
        configs.append(ModelConfig("mu=parameter" if mu is None else f"mu={mu:g}", mu))
    if not configs:
        raise ValidationError("--mu needs at least one configuration")
    return configs


def cmd_replicate(settings, out):
    spec, cfg = spec_from(settings), gibbs_from(settings)
    configs = replicate_configs(settings["mu"])
    base_hp = Hyperparameters(lam=settings["lam"], delta1=settings["delta1"], delta2=settings["delta2"], psi=settings["psi"])
    res = run_replications(spec, configs, settings["replications"], cfg, K=settings["k"], order=settings["order"],
                           hyperparameters=base_hp, hold_covariates=settings["hold_covariates"],
                           threads=settings["threads"],
                           progress=lambda r: log.info("replication %d done", r + 1))
    res.write_tidy_csv(out / "replications.csv")
    res.write_proportions_csv(out / "proportions.csv")
    fio.write_json(dict(settings=res.settings, metrics=res.metric_summary(),
                        proportions={k: v for k, v in res.proportions().items()},
                        failures=res.failure_count()), out / "replication_summary.json")
    for c, prop in res.proportions().items():
        print(f"{c}: " + " ".join(f"{x:.2f}" for x in prop))
    return EXIT_OK


def cmd_gcv_scan(settings, out):
    hp, cfg = hyperparameters_from(settings), gibbs_from(settings)
    data = fio.load_dataset(settings["response"], settings["covariates"])
    ks = parse_ks(settings["ks"])
    table = {}
    worst = EXIT_OK
    for K in ks:
        result = fit_model(data, K, settings["order"], hp, cfg, threads=settings["threads"],
                           rhat_threshold=settings["rhat_threshold"])
        table[K] = result.metrics
        sub = out / f"K{K}"
        sub.mkdir(exist_ok=True)
        _emit_fit(result, sub)
        worst = max(worst, _rhat_exit(result.convergence, settings))
    write_gcv_table(table, out / "gcv_table.csv")
    print("metric," + ",".join(f"K={K}" for K in ks))
    print("r2_adj," + ",".join(f"{table[K].r2_adj:.5f}" for K in ks))
    print("gcv," + ",".join(f"{table[K].gcv:.5f}" for K in ks))
    return worst


def write_gcv_table(table, path):
    ks = list(table)
    lines = ["metric," + ",".join(f"K={K}" for K in ks)]
    lines.append("r2_adj," + ",".join(repr(float(table[K].r2_adj)) for K in ks))
    lines.append("gcv," + ",".join(repr(float(table[K].gcv)) for K in ks))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def cmd_diagnose(settings, out):
    files = sorted(Path(settings["draws"]).glob("draws_chain*.csv"))
    if len(files) < 2:
        raise ValidationError(f"need at least two draws_chain*.csv files in {settings['draws']}")
    chains = [fio.read_draws_csv(f) for f in files]
    names = list(chains[0])
    for f, ch in zip(files[1:], chains[1:]):
        if list(ch) != names:
            raise ValidationError(f"{f} holds different parameters than {files[0]}")
    values, passed = {}, {}
    for name in names:
        series = np.vstack([ch[name][1] for ch in chains])
        try:
            values[name] = psrf(series)
        except FOSRError:
            values[name] = float("inf")
        passed[name] = bool(values[name] < settings["rhat_threshold"])
    report = ConvergenceReport(values, passed, settings["rhat_threshold"])
    fio.write_json(report.to_dict(), out / "convergence.json")
    print(f"{len(names)} parameters, {len(report.failures())} with R-hat >= {report.threshold}")
    return _rhat_exit(report, settings)


COMMANDS = {
    "fit": cmd_fit,
    "simulate": cmd_simulate,
    "replicate": cmd_replicate,
    "gcv-scan": cmd_gcv_scan,
    "diagnose": cmd_diagnose,
}


def _setup_logging(out, verbose):
    log.handlers.clear()
    log.setLevel(logging.INFO)
    fmt = logging.Formatter("%(asctime)s %(levelname)s %(message)s")
    fh = logging.FileHandler(out / "run.log", encoding="utf-8")
    fh.setFormatter(fmt)
    sh = logging.StreamHandler(sys.stderr)
    sh.setLevel(logging.INFO if verbose else logging.WARNING)
    sh.setFormatter(fmt)
    log.addHandler(fh)
    log.addHandler(sh)


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        settings = resolve_settings(args)
        # validate model settings before any output is produced
        if args.command != "diagnose":
            gibbs_from(settings)
            if args.command == "replicate":
                replicate_configs(settings["mu"])
            else:
                hyperparameters_from(settings)
        out = _out_dir(args.command, settings)
        _setup_logging(out, args.verbose)
        fio.write_json(dict(command=args.command, **settings), out / "config.json")
        log.info("command %s, output in %s", args.command, out)
        return COMMANDS[args.command](settings, out)
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (ChainFailure, FOSRError, ArithmeticError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
