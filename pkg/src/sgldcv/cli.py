"""Command line entry point: optimize, sample, postprocess, bounds, experiment.

Settings resolve as built-in defaults, then ``--config`` (INI, key = value),
then flags given explicitly on the command line.
"""
import argparse
import configparser
import math
import os
import sys

import numpy as np

from . import __version__
from .bounds import bound_report, posterior_constants_from_terms
from .errors import ConfigurationError, SgmcmcError
from .estimators import CenteringState
from .experiments import curvature_range, plan_from_mapping, run_comparison, run_zv_comparison
from .models import build_model, read_dataset
from .optimizer import SgdConfig, find_centering, read_centering, write_centering
from .samplers import _read_matrix, SamplerConfig, read_chain, run_chain, write_chain
from .zv import postprocess_coordinates, write_zv_outputs

SCHEMAS = {
    "optimize": {"theta_hat.csv": 1, "grad_hat.csv": 1},
    "sample": {"samples.csv": 1, "gradients.csv": 1},
    "postprocess": {"zv_report.csv": 1, "corrected.csv": 1},
    "bounds": {"bounds.csv": 1},
    "experiment": {"summary.csv": 1, "metrics.csv": 1, "zv_table.csv": 1},
}

DEFAULTS = {
    "family": "gaussian", "sigma_x": 1.0, "sigma_0": 1.0, "outdir": ".", "seed": 0,
    # optimize
    "schedule": "constant", "step": None, "a": None, "b": 1.0, "m_sgd": None, "iterations": None, "n": 1,
    # sample
    "estimator": "naive", "h": None, "K": 1000, "theta_hat": None, "theta0": None, "cache": "recompute",
    # postprocess
    "burn_in": 0, "ridge": False,
    # bounds
    "m": None, "M": None, "l": None, "L": None, "N": None, "d": 1, "eps0": None,
    "centering_dist_sq": 0.0, "start_dist_sq": 0.0, "w2_initial": None,
}


class UsageError(Exception):
    pass


class Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: error: {message}\n{self.format_usage()}")


def _model_args(p):
    p.add_argument("--data", help="dataset CSV, one row per datum")
    p.add_argument("--family", choices=["gaussian", "logistic"])
    p.add_argument("--sigma-x", dest="sigma_x", type=float)
    p.add_argument("--sigma-0", dest="sigma_0", type=float)


def _common(p):
    p.add_argument("--outdir", help="output directory")
    p.add_argument("--seed", type=int)
    p.add_argument("--config", help="INI file of key = value settings")


def build_parser():
    parser = Parser(prog="sgldcv", description="Stochastic gradient MCMC with control variates.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", parser_class=Parser)
    sub.required = True

    p = sub.add_parser("optimize", help="SGD to a centering value plus the full gradient there")
    _model_args(p)
    _common(p)
    p.add_argument("--n", type=int)
    p.add_argument("--schedule", choices=["constant", "robbins_monro", "inverse_strong_convexity"])
    p.add_argument("--step", type=float, help="constant stepsize (default 0.1 / estimated M)")
    p.add_argument("--a", type=float)
    p.add_argument("--b", type=float)
    p.add_argument("--m-sgd", dest="m_sgd", type=float, help="strong convexity for the 1/(m k) schedule")
    p.add_argument("--iterations", type=int, help="SGD iterations (default one pass)")

    p = sub.add_parser("sample", help="run an SGLD chain")
    _model_args(p)
    _common(p)
    p.add_argument("--estimator", choices=["naive", "cv", "saga"])
    p.add_argument("--h", type=float)
    p.add_argument("--n", type=int)
    p.add_argument("--K", type=int)
    p.add_argument("--theta-hat", dest="theta_hat", help="centering CSV (default OUTDIR/theta_hat.csv)")
    p.add_argument("--theta0", help="comma separated starting point")
    p.add_argument("--cache", choices=["recompute", "cached"])

    p = sub.add_parser("postprocess", help="ZV post-processing of samples.csv / gradients.csv")
    _common(p)
    p.add_argument("--burn-in", dest="burn_in", type=int)
    p.add_argument("--ridge", action="store_true", default=None)

    p = sub.add_parser("bounds", help="tuning budget and Wasserstein bound")
    _common(p)
    for name in ("m", "M", "l", "L", "eps0", "h", "w2_initial"):
        p.add_argument(f"--{name.replace('_', '-')}", dest=name, type=float)
    for name in ("N", "d", "n", "K"):
        p.add_argument(f"--{name}", dest=name, type=int)
    p.add_argument("--centering-dist-sq", dest="centering_dist_sq", type=float, help="E||theta_hat - theta_bar||^2")
    p.add_argument("--start-dist-sq", dest="start_dist_sq", type=float, help="E||theta_0 - theta_bar||^2")

    p = sub.add_parser("experiment", help="run a comparison plan")
    _common(p)
    p.add_argument("--zv", action="store_true", default=None, help="also run the ZV comparison")
    return parser


def _read_config(path):
    if not os.path.exists(path):
        raise FileNotFoundError(f"config file not found: {path}")
    parser = configparser.ConfigParser()
    parser.optionxform = str
    with open(path) as fh:
        text = fh.read()
    if not text.lstrip().startswith("["):
        text = "[run]\n" + text
    parser.read_string(text)
    out = {}
    for section in parser.sections():
        out.update({k.replace("-", "_"): v.strip() for k, v in parser[section].items()})
    return out


def resolve(args):
    """Merge defaults, config file and explicit flags into one dict."""
    explicit = {k: v for k, v in vars(args).items() if v is not None}
    config = _read_config(args.config) if args.config else {}
    settings = {k: DEFAULTS.get(k) for k in vars(args) if k not in ("command", "config")}
    if args.command == "bounds":
        settings["n"] = settings["K"] = None
    for key, value in config.items():
        if key not in vars(args) or key in ("command", "config"):
            raise ConfigurationError(f"unknown setting {key!r} in {args.config}")
        settings[key] = _convert(args, key, value)
    settings.update(explicit)
    return settings


def _convert(args, key, value):
    if value.lower() in ("", "none"):
        return None
    default = DEFAULTS.get(key)
    if isinstance(default, bool) or key in ("ridge", "zv"):
        return value.lower() in ("1", "true", "yes", "on")
    if key in ("n", "K", "N", "d", "seed", "iterations", "burn_in"):
        return int(float(value))
    if isinstance(default, float) or key in ("h", "step", "a", "m_sgd", "m", "M", "l", "L", "eps0", "w2_initial"):
        return float(value)
    return value


def _load_model(s):
    if not s.get("data"):
        raise ConfigurationError("a dataset is required (--data)")
    dataset = read_dataset(s["data"])
    return build_model(s["family"], dataset, sigma_x=s["sigma_x"], sigma_0=s["sigma_0"])


def write_manifest(outdir, command, settings):
    os.makedirs(outdir, exist_ok=True)
    lines = [f"command = {command}", f"version = {__version__}", f"seed = {settings.get('seed')}"]
    lines += [f"config.{k} = {settings[k]}" for k in sorted(settings) if k not in ("config", "command")]
    lines += [f"schema.{name} = {v}" for name, v in sorted(SCHEMAS[command].items())]
    with open(os.path.join(outdir, "run_manifest.txt"), "w") as fh:
        fh.write("\n".join(lines) + "\n")


def cmd_optimize(s, out):
    model = _load_model(s)
    step = s["step"]
    if s["schedule"] == "constant" and step is None:
        _, M0 = curvature_range(model, np.zeros(model.dim))
        step = 0.1 / M0
    config = SgdConfig(n=s["n"], schedule=s["schedule"], h=step, a=s["a"], b=s["b"], m=s["m_sgd"],
                       iterations=s["iterations"], seed=s["seed"])
    state = find_centering(model, config)
    write_centering(state, s["outdir"])
    print(f"theta_hat = {', '.join(format(v, '.6g') for v in state.theta_hat)}", file=out)
    print(f"evaluations = {state.n_evaluations}", file=out)


def _centering(s, model):
    path = s["theta_hat"]
    if path is None:
        default = os.path.join(s["outdir"], "theta_hat.csv")
        if not os.path.exists(default):
            raise FileNotFoundError(
                f"the cv estimator needs a centering value: {default} not found; "
                "run `sgldcv optimize` into this output directory or pass --theta-hat"
            )
        if os.path.exists(os.path.join(s["outdir"], "grad_hat.csv")):
            return read_centering(s["outdir"], model, s["cache"])
        path = default
    if not os.path.exists(path):
        raise FileNotFoundError(f"centering file not found: {path} (--theta-hat)")
    theta_hat = _read_matrix(path)[0]
    if theta_hat.size != model.dim:
        raise ConfigurationError(f"{path} has {theta_hat.size} entries, model dimension is {model.dim}")
    return CenteringState.at(model, theta_hat, s["cache"])


def cmd_sample(s, out):
    model = _load_model(s)
    if s["h"] is None:
        raise ConfigurationError("a stepsize is required (--h)")
    centering = _centering(s, model) if s["estimator"] == "cv" else None
    theta0 = None
    if s["theta0"] is not None:
        theta0 = np.array([float(v) for v in str(s["theta0"]).split(",")])
    config = SamplerConfig(h=s["h"], n=s["n"], K=s["K"], estimator=s["estimator"], seed=s["seed"])
    record = run_chain(model, config, theta0, centering)
    write_chain(record, s["outdir"])
    print(f"wrote {record.K} samples, evaluations = {record.n_evaluations}", file=out)


def cmd_postprocess(s, out):
    samples, grads = read_chain(s["outdir"])
    results = postprocess_coordinates(samples, grads, s["burn_in"], s["ridge"])
    write_zv_outputs(results, s["outdir"])
    for j, r in enumerate(results):
        print(f"theta_{j + 1}: variance {r.variance_before:.6g} -> {r.variance_after:.6g}", file=out)


def cmd_bounds(s, out):
    if s["m"] is None or s["M"] is None:
        if None in (s["l"], s["L"], s["N"]):
            raise ConfigurationError("give --m and --M, or --l, --L and --N")
        consts = posterior_constants_from_terms(s["l"], s["L"], s["N"], s["d"])
        s["m"], s["M"] = consts.m, consts.M
    if s["eps0"] is None:
        raise ConfigurationError("--eps0 is required")
    report = bound_report(s["m"], s["M"], s["d"], s["eps0"], s["centering_dist_sq"], s["start_dist_sq"],
                          s.get("h"), s.get("n_bound"), s.get("K_bound"), s["w2_initial"])
    rows = [(k, _fmt(v)) for k, v in report.rows()]
    width = max(len(k) for k, _ in rows)
    for k, v in rows:
        print(f"{k.ljust(width)}  {v}", file=out)
    print(file=out)
    csv_text = "quantity,value\n" + "".join(f"{k},{v}\n" for k, v in rows)
    out.write(csv_text)
    os.makedirs(s["outdir"], exist_ok=True)
    with open(os.path.join(s["outdir"], "bounds.csv"), "w") as fh:
        fh.write(csv_text)


def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return str(bool(v)).lower()
    if isinstance(v, float):
        return format(v, ".17g") if math.isfinite(v) else str(v)
    return str(v)


def cmd_experiment(args, out):
    raw = dict(_read_config(args.config)) if args.config else {}
    raw.pop("zv", None)
    if args.outdir is not None:
        raw["output_dir"] = args.outdir
    if args.seed is not None:
        raw["seed"] = str(args.seed)
    plan = plan_from_mapping(raw)
    rows = run_comparison(plan)
    zv = args.zv
    if zv is None and args.config:
        zv = _convert(args, "zv", _read_config(args.config).get("zv", "false"))
    if zv:
        run_zv_comparison(plan)
    for r in rows:
        print(f"N={r['N']} {r['method']}: evaluations_to_target={r.get('evaluations_to_target')} status={r['status']}", file=out)
    settings = {k: getattr(plan, k) for k in plan.__dataclass_fields__}
    settings["zv"] = bool(zv)
    return plan.output_dir, settings


def main(argv=None, out=None):
    out = out or sys.stdout
    try:
        args = build_parser().parse_args(argv)
    except UsageError as err:
        print(str(err), file=sys.stderr, end="")
        return 1
    try:
        if args.command == "experiment":
            outdir, settings = cmd_experiment(args, out)
        else:
            settings = resolve(args)
            if args.command == "bounds":
                # --n / --K in bounds refer to the bound inputs, not the sampler
                settings["n_bound"], settings["K_bound"] = settings.pop("n", None), settings.pop("K", None)
            {"optimize": cmd_optimize, "sample": cmd_sample, "postprocess": cmd_postprocess,
             "bounds": cmd_bounds}[args.command](settings, out)
            outdir = settings["outdir"]
        write_manifest(outdir, args.command, settings)
    except ConfigurationError as err:
        print(f"sgldcv {args.command}: usage error: {err}", file=sys.stderr)
        return 1
    except (OSError, SgmcmcError, ValueError, FloatingPointError) as err:
        print(f"sgldcv {args.command}: error: {err}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
