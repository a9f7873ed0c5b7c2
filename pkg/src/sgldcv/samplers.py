"""SGLD transition kernel and chain driver."""
from dataclasses import dataclass, field, asdict
import os
import time

import numpy as np

from .errors import ConfigurationError, DivergenceError
from .estimators import (
    CenteringState,
    MinibatchSampler,
    SagaState,
    cv_estimate,
    saga_estimate_and_update,
)
from .rng import stream

ESTIMATORS = ("naive", "cv", "saga")
DIVERGENCE_RADIUS = 1e8
_BLOCK = 1024


@dataclass
class SamplerConfig:
    h: float
    n: int
    K: int
    estimator: str = "naive"
    seed: int = 0
    record_gradients: bool = True
    weights: np.ndarray = None

    def validate(self, N):
        if not self.h > 0:
            raise ConfigurationError(f"stepsize h must be positive, got {self.h}")
        if not 1 <= self.n <= N:
            raise ConfigurationError(f"minibatch size n={self.n} must satisfy 1 <= n <= N={N}")
        if self.K < 1:
            raise ConfigurationError(f"iterations K must be >= 1, got {self.K}")
        if self.estimator not in ESTIMATORS:
            raise ConfigurationError(f"unknown estimator {self.estimator!r}; choose from {ESTIMATORS}")
        if self.weights is not None and self.estimator != "cv":
            raise ConfigurationError("non-uniform weights are only supported by the cv estimator")

    def echo(self):
        out = asdict(self)
        out["weights"] = None if self.weights is None else "custom"
        return out


@dataclass
class ChainRecord:
    """Chain output.

    ``samples[k]`` is theta_k for k = 0..K-1 and ``gradient_estimates[k]``
    the estimate evaluated there, which produced ``samples[k + 1]``. The last
    estimate produced ``theta_final`` (theta_K).
    """

    samples: np.ndarray
    gradient_estimates: np.ndarray
    theta_final: np.ndarray
    config: dict
    timestamps: np.ndarray = field(repr=False, default=None)
    n_evaluations: int = 0

    @property
    def K(self):
        return self.samples.shape[0]


def _check(theta, iteration):
    # Written so that NaN also fails the comparison.
    if not float(theta @ theta) <= DIVERGENCE_RADIUS**2:
        raise DivergenceError(f"SGLD diverged at iteration {iteration}", iteration=iteration)


def sgld_step(theta, grad_estimate, h, noise):
    """theta - (h/2) * grad_estimate + noise, with noise ~ N(0, h I)."""
    out = theta - 0.5 * h * np.asarray(grad_estimate) + noise
    _check(np.atleast_1d(out), None)
    return out


def chain_noise(seed, K, d, h, chain=0):
    """The injected noise sequence used by :func:`run_chain` (for replay)."""
    rng = stream(seed, "chain", chain, "noise")
    blocks = [rng.standard_normal((min(_BLOCK, K - s), d)) for s in range(0, K, _BLOCK)]
    return np.sqrt(h) * np.concatenate(blocks)


def _estimator(model, config, centering, theta0):
    """Return (fn(theta, batch) -> estimate, evaluations per call, setup evaluations)."""
    N, n = model.n_data, config.n
    if config.estimator == "naive":
        scale = N / n
        prior, terms = model.grad_prior, model.grad_terms

        def naive(theta, batch):
            return prior(theta) + scale * terms(theta, batch).sum(axis=0)

        return naive, n, 0
    if config.estimator == "cv":
        per = n if centering.cache is not None else 2 * n
        if config.weights is None:
            scale = N / n
            prior, terms = model.grad_prior, model.grad_terms
            anchor, prior_hat = centering.grad_full, centering.prior(model)

            def cv_uniform(theta, batch):
                diff = terms(theta, batch) - centering.terms(model, batch)
                return anchor + (prior(theta) - prior_hat) + scale * diff.sum(axis=0)

            return cv_uniform, per, 0

        def cv(theta, batch):
            return cv_estimate(model, theta, centering, batch, config.weights).value

        return cv, per, 0
    state = SagaState.initialize(model, theta0)

    def saga(theta, batch):
        return saga_estimate_and_update(model, theta, state, batch, n, N).value

    return saga, n, N


def run_chain(model, config, theta0=None, centering=None, chain=0):
    """Run ``config.K`` SGLD iterations and return a :class:`ChainRecord`.

    For the cv estimator ``centering`` is required and ``theta0`` defaults to
    its centering value; otherwise ``theta0`` defaults to zero. ``chain``
    selects an independent random sub-stream of ``config.seed``.
    """
    config.validate(model.n_data)
    if config.estimator == "cv":
        if centering is None:
            raise ConfigurationError("the cv estimator requires a CenteringState (run the optimizer first)")
        if not isinstance(centering, CenteringState):
            raise ConfigurationError("centering must be a CenteringState")
        if theta0 is None:
            theta0 = centering.theta_hat
    if theta0 is None:
        theta0 = np.zeros(model.dim)
    theta = np.array(theta0, dtype=float).reshape(model.dim)

    K, d, h = config.K, model.dim, config.h
    estimate, per_iter, setup = _estimator(model, config, centering, theta)
    sampler = MinibatchSampler(model.n_data, config.n, stream(config.seed, "chain", chain, "batch"), config.weights)
    noise_rng = stream(config.seed, "chain", chain, "noise")
    sqrt_h = np.sqrt(h)
    everything = np.arange(model.n_data)

    samples = np.empty((K, d))
    grads = np.empty((K, d))
    stamps = np.empty(K)
    start = time.perf_counter()
    k = 0
    try:
        for s in range(0, K, _BLOCK):
            size = min(_BLOCK, K - s)
            batches = None if sampler.full_batch else sampler.draw(size)
            noise = sqrt_h * noise_rng.standard_normal((size, d))
            for j in range(size):
                k = s + j
                g = estimate(theta, everything if batches is None else batches[j])
                samples[k] = theta
                grads[k] = g
                theta = theta - 0.5 * h * g + noise[j]
                _check(theta, k + 1)
                stamps[k] = time.perf_counter() - start
    except DivergenceError as err:
        err.record = ChainRecord(
            samples=samples[: k + 1].copy(),
            gradient_estimates=grads[: k + 1].copy(),
            theta_final=theta,
            config=config.echo(),
            timestamps=stamps[:k],
            n_evaluations=setup + per_iter * (k + 1),
        )
        raise
    return ChainRecord(
        samples=samples,
        gradient_estimates=grads if config.record_gradients else None,
        theta_final=theta,
        config=config.echo(),
        timestamps=stamps,
        n_evaluations=setup + per_iter * K,
    )


def run_chains(model, config, n_chains, theta0=None, centering=None):
    """Independent chains on sub-streams 0..n_chains-1 of the same seed."""
    return [run_chain(model, config, theta0, centering, chain=c) for c in range(n_chains)]


def _write_matrix(path, prefix, matrix):
    with open(path, "w", newline="") as fh:
        fh.write(",".join(f"{prefix}_{j + 1}" for j in range(matrix.shape[1])) + "\n")
        for row in matrix:
            fh.write(",".join(format(v, ".17g") for v in row) + "\n")


def _read_matrix(path):
    if not os.path.exists(path):
        raise FileNotFoundError(f"missing file: {path}")
    return np.atleast_2d(np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2))


def write_chain(record, outdir):
    """Write samples.csv and (when recorded) gradients.csv into ``outdir``."""
    os.makedirs(outdir, exist_ok=True)
    _write_matrix(os.path.join(outdir, "samples.csv"), "theta", record.samples)
    if record.gradient_estimates is not None:
        _write_matrix(os.path.join(outdir, "gradients.csv"), "g", record.gradient_estimates)


def read_chain(outdir):
    """Return (samples, gradient_estimates) as written by :func:`write_chain`."""
    samples = _read_matrix(os.path.join(outdir, "samples.csv"))
    grads = _read_matrix(os.path.join(outdir, "gradients.csv"))
    if samples.shape != grads.shape:
        raise ValueError("samples.csv and gradients.csv disagree in shape")
    return samples, grads
