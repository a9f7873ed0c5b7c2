"""Desk-scale comparisons of SGLD, SGLD-CV and SAGA on synthetic data.

A run covers every (N, method) cell of an :class:`ExperimentPlan`. Each cell
draws its randomness from sub-streams keyed by (N, method), so cells do not
depend on the order in which they run.
"""
from dataclasses import dataclass, field
import configparser
import csv
import math
import os

import numpy as np
from scipy.special import expit

from .diagnostics import gradient_noise_variance, log_predictive_density, write_metrics
from .errors import ConfigurationError, SgmcmcError
from .estimators import CenteringState
from .models import Dataset, build_model, full_gradient
from .optimizer import SgdConfig, find_centering
from .rng import stream
from .samplers import SamplerConfig, run_chain, write_chain
from .zv import ZvInput, apply_zv

METHODS = {"sgld": "naive", "sgldcv": "cv", "saga": "saga"}


def default_truth(kind, d):
    if kind == "gaussian":
        return np.linspace(0.5, -0.5, d) if d > 1 else np.array([0.5])
    return np.linspace(-1.0, 1.0, d) if d > 1 else np.array([1.0])


def generate_synthetic(kind, N, d, seed, truth=None, sigma_x=1.0, stream_name="data"):
    """Synthetic dataset for the built-in model families.

    gaussian: x_i ~ N(truth, sigma_x^2 I).  logistic: x_i ~ N(0, I) and
    y_i = +1 with probability sigmoid(truth . x_i), else -1.
    """
    if N < 1 or d < 1:
        raise ValueError("N and d must be >= 1")
    truth = default_truth(kind, d) if truth is None else np.asarray(truth, dtype=float)
    rng = stream(seed, stream_name, kind, N, d)
    cols = [f"x{j + 1}" for j in range(d)]
    if kind == "gaussian":
        x = truth + sigma_x * rng.standard_normal((N, d))
        return Dataset(x, cols)
    if kind == "logistic":
        x = rng.standard_normal((N, d))
        y = np.where(rng.random(N) < expit(x @ truth), 1.0, -1.0)
        return Dataset(np.column_stack([x, y]), cols + ["y"])
    raise ValueError(f"unknown synthetic family {kind!r}")


def curvature_range(model, theta, eps=1e-5):
    """Crude (m, M) at ``theta`` from finite differences of the likelihood
    gradient along the coordinate axes. The prior is left out since its
    gradient may jump (Laplace prior at the origin)."""
    theta = np.asarray(theta, dtype=float)

    def data_grad(t):
        return full_gradient(model, t) - model.grad_prior(t)

    g0 = data_grad(theta)
    diag, norms = [], []
    for j in range(model.dim):
        e = np.zeros(model.dim)
        e[j] = eps
        col = (data_grad(theta + e) - g0) / eps
        diag.append(col[j])
        norms.append(np.linalg.norm(col))
    return max(min(diag), 1e-12), max(norms)


@dataclass
class ExperimentPlan:
    family: str = "logistic"
    d: int = 5
    N_values: list = field(default_factory=lambda: [1000, 10000])
    methods: list = field(default_factory=lambda: ["sgld", "sgldcv", "saga"])
    n: int = 30
    K: int = 100000
    heldout: int = 1000
    sigma_x: float = 1.0
    stepsize_rule: str = "noise_matched"
    h: float = None
    stability: float = 0.1
    kappa: float = 0.25
    sgd_iterations: int = 20000
    sgd_schedule: str = "robbins_monro"
    stride: int = 10
    window: int = None
    target_offset: float = 0.01
    replications: int = 1
    noise_replications: int = 200
    seed: int = 0
    output_dir: str = "experiment_out"
    save_chains: bool = False
    zv_N: int = None
    zv_seeds: int = 5
    zv_methods: list = field(default_factory=lambda: ["sgld", "sgldcv"])
    zv_coordinate: int = 0

    def validate(self):
        if self.replications < 1:
            raise ConfigurationError("replication count must be >= 1")
        for N in self.N_values:
            if N < self.n:
                raise ConfigurationError(f"dataset size {N} is smaller than the minibatch size {self.n}")
        for m in list(self.methods) + list(self.zv_methods):
            if m not in METHODS:
                raise ConfigurationError(f"unknown method {m!r}; choose from {sorted(METHODS)}")
        if self.stepsize_rule not in ("fixed", "noise_matched"):
            raise ConfigurationError(f"unknown stepsize rule {self.stepsize_rule!r}")
        if self.stepsize_rule == "fixed" and not (self.h and self.h > 0):
            raise ConfigurationError("the fixed stepsize rule needs h > 0")
        if self.window is not None and self.window % self.stride:
            raise ConfigurationError("window must be a multiple of stride")


_LISTS = {"N_values": int, "methods": str, "zv_methods": str}


def load_plan(path):
    """Read an INI-style plan; keys from every section are merged."""
    if not os.path.exists(path):
        raise FileNotFoundError(f"plan file not found: {path}")
    parser = configparser.ConfigParser()
    parser.optionxform = str
    with open(path) as fh:
        text = fh.read()
    if not text.lstrip().startswith("["):
        text = "[plan]\n" + text
    parser.read_string(text)
    raw = {}
    for section in parser.sections():
        raw.update(parser[section])
    return plan_from_mapping(raw)


def plan_from_mapping(raw):
    fields = ExperimentPlan.__dataclass_fields__
    kwargs = {}
    for key, value in raw.items():
        key = key.strip()
        if key not in fields:
            raise ConfigurationError(f"unknown plan key {key!r}")
        if isinstance(value, str):
            value = value.strip()
        if key in _LISTS:
            if isinstance(value, str):
                value = [v for v in value.replace(",", " ").split() if v]
            value = [_LISTS[key](float(v)) if _LISTS[key] is int else v for v in value]
        elif isinstance(value, str):
            value = _coerce(key, value)
        kwargs[key] = value
    plan = ExperimentPlan(**kwargs)
    plan.validate()
    return plan


def _coerce(key, value):
    if value.lower() in ("none", ""):
        return None
    default = ExperimentPlan.__dataclass_fields__[key].default
    if isinstance(default, bool):
        return value.lower() in ("1", "true", "yes", "on")
    if isinstance(default, float) or key == "h":
        return float(value)
    if isinstance(default, int) or default is None:
        return int(float(value))
    return value


def _seed(plan, *names):
    return int(stream(plan.seed, *names).integers(2**31 - 1))


@dataclass
class Cell:
    """Shared per-N state: data, held-out set, centering, tuning constants."""

    N: int
    model: object
    heldout: Dataset
    centering: CenteringState
    m_hat: float
    M_hat: float
    theta_ref: np.ndarray


def prepare_cell(plan, N):
    data = generate_synthetic(plan.family, N, plan.d, plan.seed, sigma_x=plan.sigma_x)
    heldout = generate_synthetic(plan.family, plan.heldout, plan.d, plan.seed, sigma_x=plan.sigma_x,
                                 stream_name=f"heldout-{N}")
    model = build_model(plan.family, data, sigma_x=plan.sigma_x, sigma_0=plan.sigma_x)
    # Curvature at the origin bounds the logistic curvature everywhere, and is
    # exact for the Gaussian model. a = 1/m0 keeps a*m above 1/2 (needed for
    # the 1/k rate) and b = M0/m0 keeps the first step below 1/M0.
    m0, M0 = curvature_range(model, np.zeros(model.dim))
    sgd = SgdConfig(
        n=plan.n,
        schedule=plan.sgd_schedule,
        h=plan.stability / M0,
        a=1.0 / m0,
        b=M0 / m0,
        m=m0,
        iterations=plan.sgd_iterations,
        seed=_seed(plan, "optimize", N),
    )
    centering = find_centering(model, sgd)
    m_hat, M_hat = curvature_range(model, centering.theta_hat)
    M_hat = max(M_hat, M0)
    rng = stream(plan.seed, "reference", N)
    theta_ref = centering.theta_hat + rng.choice([-1.0, 1.0], size=model.dim) / math.sqrt(m_hat)
    return Cell(N, model, heldout, centering, m_hat, M_hat, theta_ref)


def choose_stepsize(plan, cell, method):
    """Stepsize for ``method`` on this cell.

    ``noise_matched`` takes the smaller of stability / M and
    4 kappa d / E||xi||^2, with the noise measured one posterior standard
    deviation from the centering value. The second cap keeps the extra
    stationary variance caused by gradient noise near a fraction kappa of
    the posterior variance.
    """
    if plan.stepsize_rule == "fixed":
        return plan.h
    estimator = "cv" if method in ("sgldcv", "saga") else "naive"
    noise = gradient_noise_variance(
        cell.model, cell.theta_ref, estimator, plan.n, plan.noise_replications,
        seed=_seed(plan, "tune", cell.N, method), centering=cell.centering,
    )
    h = plan.stability / cell.M_hat
    if noise > 0:
        h = min(h, 4.0 * plan.kappa * cell.model.dim / noise)
    return h


def evaluations_to_target(series, target, setup, per_iteration):
    hit = np.nonzero(series.values >= target)[0]
    if hit.size == 0:
        return math.nan
    return setup + per_iteration * int(series.iterations[hit[0]])


def _per_iteration(method, n):
    return 2 * n if method == "sgldcv" else n


def _stationary_noise(plan, cell, method, samples, states=10):
    estimator = "cv" if method == "sgldcv" else "naive"
    half = samples[samples.shape[0] // 2:]
    picks = half[np.linspace(0, half.shape[0] - 1, states).astype(int)]
    reps = max(1, plan.noise_replications // states)
    return float(np.mean([
        gradient_noise_variance(cell.model, th, estimator, plan.n, reps,
                                seed=_seed(plan, "stationary", cell.N, method, s), centering=cell.centering)
        for s, th in enumerate(picks)
    ]))


def run_cell(plan, cell, method, replication=0):
    """Chain plus metrics for one (N, method) cell."""
    h = choose_stepsize(plan, cell, method)
    config = SamplerConfig(h=h, n=plan.n, K=plan.K, estimator=METHODS[method],
                           seed=_seed(plan, "chain", cell.N, method, replication))
    centering = cell.centering if method == "sgldcv" else None
    record = run_chain(cell.model, config, centering=centering)
    series = log_predictive_density(cell.model, record.samples, cell.heldout, plan.stride, plan.window)
    setup = {"sgld": 0, "sgldcv": cell.centering.n_evaluations, "saga": cell.N}[method]
    return h, record, series, setup


SUMMARY_COLUMNS = [
    "N", "method", "replication", "h", "setup_evaluations", "evaluations_to_target",
    "final_metric", "best_metric", "target", "noise_at_mode", "noise_stationary", "status",
]


def run_comparison(plan):
    """Run every cell, write per-cell metrics.csv and summary.csv.

    Returns the summary rows as dicts. Failing cells are recorded with their
    error message and the remaining cells still run.
    """
    plan.validate()
    rows = []
    for N in plan.N_values:
        cell = prepare_cell(plan, N)
        noise_mode = gradient_noise_variance(cell.model, cell.centering.theta_hat, "naive", plan.n,
                                             plan.noise_replications, seed=_seed(plan, "mode-noise", N))
        results = {}
        for method in plan.methods:
            for rep in range(plan.replications):
                try:
                    results[method, rep] = run_cell(plan, cell, method, rep)
                except (SgmcmcError, FloatingPointError) as err:
                    rows.append(dict(N=N, method=method, replication=rep, status=f"error: {err}"))
        if not results:
            continue
        best = max(float(np.max(series.values)) for _, _, series, _ in results.values())
        target = best - plan.target_offset
        for (method, rep), (h, record, series, setup) in sorted(results.items()):
            cell_dir = os.path.join(plan.output_dir, str(N), method)
            if plan.replications > 1:
                cell_dir = os.path.join(cell_dir, f"rep{rep}")
            write_metrics([series], os.path.join(cell_dir, "metrics.csv"))
            if plan.save_chains:
                write_chain(record, cell_dir)
            rows.append(dict(
                N=N, method=method, replication=rep, h=h, setup_evaluations=setup,
                evaluations_to_target=evaluations_to_target(series, target, setup, _per_iteration(method, plan.n)),
                final_metric=float(series.values[-1]), best_metric=best, target=target,
                noise_at_mode=noise_mode,
                noise_stationary=_stationary_noise(plan, cell, method, record.samples) if method != "saga" else math.nan,
                status="ok",
            ))
    rows.sort(key=lambda r: (r["N"], r["method"], r["replication"]))
    write_table(rows, SUMMARY_COLUMNS, os.path.join(plan.output_dir, "summary.csv"))
    return rows


ZV_COLUMNS = ["seed", "method", "N", "variance_before", "variance_after", "reduction_factor", "mean_before", "mean_after"]


def run_zv_comparison(plan):
    """Before/after ZV variance of theta[zv_coordinate] for each seed and method."""
    plan.validate()
    N = plan.zv_N or plan.N_values[-1]
    cell = prepare_cell(plan, N)
    rows = []
    for s in range(plan.zv_seeds):
        for method in plan.zv_methods:
            h = choose_stepsize(plan, cell, method)
            config = SamplerConfig(h=h, n=plan.n, K=plan.K, estimator=METHODS[method],
                                   seed=_seed(plan, "zv", N, method, s))
            record = run_chain(cell.model, config, centering=cell.centering if method == "sgldcv" else None)
            burn = record.K // 10 if method != "sgldcv" else 0
            res = apply_zv(ZvInput(record.samples[burn:], record.gradient_estimates[burn:], coordinate=plan.zv_coordinate))
            rows.append(dict(seed=s, method=method, N=N, variance_before=res.variance_before,
                             variance_after=res.variance_after, reduction_factor=res.reduction_factor,
                             mean_before=res.mean_before, mean_after=res.mean_after))
    write_table(rows, ZV_COLUMNS, os.path.join(plan.output_dir, "zv_table.csv"))
    return rows


def write_table(rows, columns, path):
    os.makedirs(os.path.dirname(path) or ".", exist_ok=True)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(columns)
        for row in rows:
            writer.writerow([_fmt(row.get(c, "")) for c in columns])


def _fmt(v):
    if isinstance(v, float):
        return format(v, ".17g")
    return v
