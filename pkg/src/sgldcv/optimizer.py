"""SGD search for the centering value, plus the one-off full gradient."""
from dataclasses import dataclass
import math
import os

import numpy as np

from .errors import ConfigurationError, DivergenceError
from .estimators import CenteringState, MinibatchSampler
from .rng import stream
from .samplers import DIVERGENCE_RADIUS, _read_matrix, _write_matrix

SCHEDULES = ("constant", "robbins_monro", "inverse_strong_convexity")


@dataclass
class SgdConfig:
    """Stepsize schedule and budget for the centering search.

    constant: h_k = h.  robbins_monro: h_k = a / (b + k).
    inverse_strong_convexity: h_k = 1 / (m k).  Iterations k start at 1.
    ``iterations=None`` means one pass through the data, ceil(N / n).
    """

    n: int
    schedule: str = "constant"
    h: float = None
    a: float = None
    b: float = 1.0
    m: float = None
    iterations: int = None
    seed: int = 0

    def validate(self, N):
        if not 1 <= self.n <= N:
            raise ConfigurationError(f"minibatch size n={self.n} must satisfy 1 <= n <= N={N}")
        if self.schedule not in SCHEDULES:
            raise ConfigurationError(f"unknown schedule {self.schedule!r}; choose from {SCHEDULES}")
        need = {"constant": ("h",), "robbins_monro": ("a",), "inverse_strong_convexity": ("m",)}[self.schedule]
        for name in need:
            value = getattr(self, name)
            if value is None or not value > 0:
                raise ConfigurationError(f"schedule {self.schedule} needs a positive {name}")
        if self.schedule == "robbins_monro" and not self.b >= 0:
            raise ConfigurationError("robbins_monro needs b >= 0")
        if self.iterations is not None and self.iterations < 0:
            raise ConfigurationError("iterations must be >= 0")

    def n_iterations(self, N):
        return math.ceil(N / self.n) if self.iterations is None else int(self.iterations)

    def stepsize(self, k):
        if self.schedule == "constant":
            return self.h
        if self.schedule == "robbins_monro":
            return self.a / (self.b + k)
        return 1.0 / (self.m * k)


@dataclass
class SgdTrace:
    theta: np.ndarray
    grad_sq_norms: np.ndarray
    objective: np.ndarray
    n_evaluations: int


def sgd_step(model, theta, batch, h):
    """theta - h * naive minibatch gradient estimate."""
    batch = np.asarray(batch, dtype=np.intp)
    if batch.size == 0:
        raise ValueError("minibatch is empty")
    g = model.grad_prior(theta) + (model.n_data / batch.size) * model.grad_terms(theta, batch).sum(axis=0)
    out = theta - h * g
    if not float(out @ out) <= DIVERGENCE_RADIUS**2:
        raise DivergenceError("SGD diverged")
    return out


def run_sgd(model, config, theta_init=None, track_objective=False):
    """Run the configured SGD iterations and keep a light trace."""
    config.validate(model.n_data)
    theta = np.zeros(model.dim) if theta_init is None else np.array(theta_init, dtype=float).reshape(model.dim)
    K = config.n_iterations(model.n_data)
    sampler = MinibatchSampler(model.n_data, config.n, stream(config.seed, "optimize"))
    everything = np.arange(model.n_data)
    scale = model.n_data / config.n
    sq = np.empty(K)
    obj = np.empty(K + 1) if track_objective else None
    if track_objective:
        obj[0] = model.neg_log_posterior(theta)
    for start in range(0, K, 1024):
        size = min(1024, K - start)
        batches = None if sampler.full_batch else sampler.draw(size)
        for j in range(size):
            k = start + j
            batch = everything if batches is None else batches[j]
            g = model.grad_prior(theta) + scale * model.grad_terms(theta, batch).sum(axis=0)
            sq[k] = g @ g
            theta = theta - config.stepsize(k + 1) * g
            if not float(theta @ theta) <= DIVERGENCE_RADIUS**2:
                raise DivergenceError(f"SGD diverged at iteration {k + 1}", iteration=k + 1)
            if track_objective:
                obj[k + 1] = model.neg_log_posterior(theta)
    return SgdTrace(theta, sq, obj, K * config.n)


def find_centering(model, config, theta_init=None, cache_mode="recompute"):
    """SGD to a centering value, then the full gradient there.

    ``n_evaluations`` on the result counts datum-gradient evaluations:
    K_opt * n for SGD plus N for the full gradient.
    """
    trace = run_sgd(model, config, theta_init)
    return CenteringState.at(model, trace.theta, cache_mode, n_evaluations=trace.n_evaluations)


def write_centering(state, outdir):
    os.makedirs(outdir, exist_ok=True)
    _write_matrix(os.path.join(outdir, "theta_hat.csv"), "theta", state.theta_hat.reshape(1, -1))
    _write_matrix(os.path.join(outdir, "grad_hat.csv"), "g", state.grad_full.reshape(1, -1))


def read_centering(outdir, model=None, cache_mode="recompute"):
    """Load theta_hat.csv / grad_hat.csv.

    The stored full gradient is trusted. Passing ``model`` checks the
    dimension and, for ``cache_mode="cached"``, rebuilds the term cache.
    """
    theta_hat = _read_matrix(os.path.join(outdir, "theta_hat.csv"))[0]
    grad = _read_matrix(os.path.join(outdir, "grad_hat.csv"))[0]
    cache = None
    prior = None
    if model is not None:
        if theta_hat.size != model.dim:
            raise ConfigurationError(f"theta_hat has {theta_hat.size} entries, model dimension is {model.dim}")
        prior = np.asarray(model.grad_prior(theta_hat), dtype=float)
        if cache_mode == "cached":
            cache = model.grad_terms(theta_hat, np.arange(model.n_data))
    return CenteringState(theta_hat, grad, cache_mode, cache, prior)
