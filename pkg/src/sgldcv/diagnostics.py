"""Chain diagnostics: 1-D Wasserstein distance, log predictive density,
and the mean squared gradient noise of an estimator."""
from dataclasses import dataclass
import os

import numpy as np

from .errors import CapabilityError, ConfigurationError
from .estimators import MinibatchSampler, cv_estimate, naive_estimate
from .models import GradientModel, full_gradient
from .rng import stream

MIN_W2_SAMPLES = 100


@dataclass
class MetricSeries:
    iterations: np.ndarray
    values: np.ndarray
    name: str
    stride: int = 10

    def __post_init__(self):
        self.iterations = np.asarray(self.iterations)
        self.values = np.asarray(self.values, dtype=float)
        if np.any(np.diff(self.iterations) <= 0):
            raise ValueError("metric iterations must be strictly increasing")


def w2_empirical_1d(samples, target_quantile, grid_size=1000):
    """W2 between the empirical law of ``samples`` and a 1-D target.

    Both quantile functions are compared on the midpoint grid
    u_j = (j - 1/2) / grid_size.
    """
    x = np.sort(np.asarray(samples, dtype=float).ravel())
    if x.size < MIN_W2_SAMPLES:
        raise ValueError(f"need at least {MIN_W2_SAMPLES} samples, got {x.size}")
    u = (np.arange(grid_size) + 0.5) / grid_size
    empirical = x[np.ceil(u * x.size).astype(int) - 1]
    return float(np.sqrt(np.mean((empirical - target_quantile(u)) ** 2)))


def _block_lse(model, samples, heldout, stride):
    """log sum_{s in block} p(x_j | theta_s) for consecutive blocks of ``stride`` samples."""
    K = samples.shape[0]
    n_blocks = K // stride
    out = None
    chunk = max(1, 4096 // stride) * stride
    for start in range(0, n_blocks * stride, chunk):
        stop = min(start + chunk, n_blocks * stride)
        ll = np.atleast_2d(model.log_likelihood(samples[start:stop], heldout))
        ll = ll.reshape((stop - start) // stride, stride, -1)
        top = ll.max(axis=1)
        lse = top + np.log(np.exp(ll - top[:, None, :]).sum(axis=1))
        out = lse if out is None else np.concatenate([out, lse])
    return out


def log_predictive_density(model, samples, heldout, stride=10, window=None):
    """Running log predictive density evaluated every ``stride`` iterations.

    At iteration k the value is the mean over held-out points of
    log[(1/k) sum_{s<=k} p(x_j | theta_s)]. With ``window`` (a multiple of
    ``stride``) only the last ``window`` samples enter the average.
    """
    if not isinstance(model, GradientModel) or type(model).log_likelihood is GradientModel.log_likelihood:
        raise CapabilityError("model does not expose log_likelihood")
    samples = np.atleast_2d(np.asarray(samples, dtype=float))
    if stride < 1:
        raise ValueError("stride must be >= 1")
    blocks = _block_lse(model, samples, heldout, stride)
    if blocks is None:
        return MetricSeries(np.array([], dtype=int), np.array([]), "log_predictive_density", stride)
    counts = stride * np.arange(1, blocks.shape[0] + 1)
    if window is None:
        running = np.logaddexp.accumulate(blocks, axis=0)
        values = (running - np.log(counts)[:, None]).mean(axis=1)
    else:
        if window % stride:
            raise ValueError("window must be a multiple of stride")
        w = window // stride
        running = blocks.copy()
        for lag in range(1, w):
            running[lag:] = np.logaddexp(running[lag:], blocks[:-lag])
        used = np.minimum(counts, window)
        values = (running - np.log(used)[:, None]).mean(axis=1)
    return MetricSeries(counts, values, "log_predictive_density", stride)


def gradient_noise_draws(model, theta, estimator="naive", n=1, replications=100, seed=0, centering=None, weights=None):
    """||estimate - grad f(theta)||^2 for independent seeded minibatches."""
    if replications < 1:
        raise ValueError("replications must be >= 1")
    theta = np.asarray(theta, dtype=float)
    exact = full_gradient(model, theta)
    if estimator == "cv" and centering is None:
        raise ConfigurationError("cv noise needs a centering state")
    if estimator not in ("naive", "cv"):
        raise ConfigurationError(f"noise measurement supports naive and cv, not {estimator!r}")
    sampler = MinibatchSampler(model.n_data, n, stream(seed, "replication"), weights if estimator == "cv" else None)
    out = np.empty(replications)
    for r, batch in enumerate(sampler.draw(replications)):
        if estimator == "naive":
            value = naive_estimate(model, theta, batch, n, model.n_data).value
        else:
            value = cv_estimate(model, theta, centering, batch, weights).value
        err = value - exact
        out[r] = err @ err
    return out


def gradient_noise_variance(model, theta, estimator="naive", n=1, replications=100, seed=0, centering=None, weights=None):
    """Monte Carlo estimate of E||xi||^2 at ``theta``."""
    return float(gradient_noise_draws(model, theta, estimator, n, replications, seed, centering, weights).mean())


def batch_means_se(series, n_batches=50):
    """Standard error of the mean of a correlated series, by batch means."""
    x = np.asarray(series, dtype=float)
    size = x.size // n_batches
    if size < 1:
        raise ValueError("series too short for batch means")
    means = x[: size * n_batches].reshape(n_batches, size).mean(axis=1)
    return float(means.std(ddof=1) / np.sqrt(n_batches))


def write_metrics(series_list, path):
    """metrics.csv with columns iteration, metric, value."""
    os.makedirs(os.path.dirname(path) or ".", exist_ok=True)
    with open(path, "w", newline="") as fh:
        fh.write("iteration,metric,value\n")
        for series in series_list:
            for it, v in zip(series.iterations, series.values):
                fh.write(f"{int(it)},{series.name},{format(float(v), '.17g')}\n")
