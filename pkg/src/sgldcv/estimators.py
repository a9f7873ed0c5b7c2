"""Minibatch sampling and unbiased estimators of grad f.

Three estimators are provided:

* :func:`naive_estimate`, the plain minibatch estimate used by SGLD;
* :func:`cv_estimate`, the control-variate estimate anchored at a fixed
  centering value;
* :func:`saga_estimate_and_update`, which anchors each term at the state
  where that term was last evaluated.

Batch indices are 0-based positions into the dataset. The prior term is
never subsampled.
"""
from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError, StateError
from .models import full_gradient


def lipschitz_weights(L):
    """Sampling probabilities proportional to per-term Lipschitz constants."""
    L = np.asarray(L, dtype=float)
    if L.size == 0 or np.any(~(L > 0)):
        raise ValueError("Lipschitz constants must all be strictly positive")
    return L / L.sum()


class MinibatchSampler:
    """Draws size-``n`` batches i.i.d. from categorical(``probs``).

    With uniform probabilities and ``n == N`` every draw is the full index
    set, so estimators built on it are exact.
    """

    def __init__(self, N, n, rng, probs=None):
        if not 1 <= n <= N:
            raise ConfigurationError(f"minibatch size n={n} must satisfy 1 <= n <= N={N}")
        self.N = int(N)
        self.n = int(n)
        self.rng = rng
        if probs is None:
            self.probs = None
        else:
            probs = np.asarray(probs, dtype=float)
            if probs.shape != (N,) or np.any(~(probs > 0)):
                raise ConfigurationError("sampling probabilities must be N strictly positive values")
            if abs(probs.sum() - 1.0) > 1e-9:
                raise ConfigurationError("sampling probabilities must sum to 1")
            self.probs = probs
        self.full_batch = self.probs is None and self.n == self.N

    def draw(self, count=None):
        """One batch of shape (n,), or ``count`` batches of shape (count, n)."""
        shape = (self.n,) if count is None else (count, self.n)
        if self.full_batch:
            return np.broadcast_to(np.arange(self.N), shape).copy()
        if self.probs is None:
            return self.rng.integers(0, self.N, size=shape)
        return self.rng.choice(self.N, size=shape, p=self.probs)


@dataclass
class GradEstimate:
    value: np.ndarray
    indices: np.ndarray


@dataclass
class CenteringState:
    """Centering value with its precomputed full gradient.

    ``cache`` holds every grad f_i(theta_hat) when ``cache_mode`` is
    ``"cached"``; otherwise those terms are recomputed on demand.
    """

    theta_hat: np.ndarray
    grad_full: np.ndarray
    cache_mode: str = "recompute"
    cache: np.ndarray = None
    prior_grad: np.ndarray = None
    n_evaluations: int = 0

    @classmethod
    def at(cls, model, theta_hat, cache_mode="recompute", n_evaluations=0):
        """Build the state at ``theta_hat`` with one full data pass."""
        if cache_mode not in ("recompute", "cached"):
            raise ConfigurationError(f"unknown cache mode {cache_mode!r}")
        theta_hat = np.array(theta_hat, dtype=float)
        cache = None
        if cache_mode == "cached":
            cache = model.grad_terms(theta_hat, np.arange(model.n_data))
        return cls(
            theta_hat=theta_hat,
            grad_full=full_gradient(model, theta_hat),
            cache_mode=cache_mode,
            cache=cache,
            prior_grad=np.asarray(model.grad_prior(theta_hat), dtype=float),
            n_evaluations=n_evaluations + model.n_data,
        )

    def terms(self, model, indices):
        if self.cache is not None:
            return self.cache[indices]
        return model.grad_terms(self.theta_hat, indices)

    def prior(self, model):
        if self.prior_grad is None:
            self.prior_grad = np.asarray(model.grad_prior(self.theta_hat), dtype=float)
        return self.prior_grad


def _batch(batch):
    batch = np.asarray(batch, dtype=np.intp).ravel()
    if batch.size == 0:
        raise ValueError("minibatch is empty")
    return batch


def naive_estimate(model, theta, batch, n=None, N=None):
    """grad f_0(theta) + (N/n) * sum_{i in batch} grad f_i(theta)."""
    batch = _batch(batch)
    n = batch.size if n is None else n
    N = model.n_data if N is None else N
    value = model.grad_prior(theta) + (N / n) * model.grad_terms(theta, batch).sum(axis=0)
    return GradEstimate(value, batch)


def cv_estimate(model, theta, centering, batch, weights=None):
    """Control-variate estimate of grad f(theta).

    grad f(theta_hat) + grad f_0(theta) - grad f_0(theta_hat)
        + (1/n) sum_{i in batch} [grad f_i(theta) - grad f_i(theta_hat)] / p_i

    ``weights`` are the sampling probabilities p; ``None`` means 1/N.
    """
    batch = _batch(batch)
    n = batch.size
    diff = model.grad_terms(theta, batch) - centering.terms(model, batch)
    if weights is None:
        correction = (model.n_data / n) * diff.sum(axis=0)
    else:
        p = np.asarray(weights, dtype=float)[batch]
        if np.any(~(p > 0)):
            raise ConfigurationError("sampled index has non-positive probability")
        correction = (diff / p[:, None]).sum(axis=0) / n
    # grouped so that theta == theta_hat returns grad_full bit for bit
    value = centering.grad_full + (model.grad_prior(theta) - centering.prior(model)) + correction
    return GradEstimate(value, batch)


class SagaState:
    """Table of the most recent per-term gradients, prior at row 0.

    ``table[i]`` holds g_alpha^i for i = 0..N, and ``total`` their running
    sum, maintained incrementally.
    """

    def __init__(self, dim, N):
        self.table = np.zeros((N + 1, dim))
        self.total = np.zeros(dim)
        self.initialized = False

    @classmethod
    def initialize(cls, model, theta0):
        """Fill the table with one full pass at ``theta0``."""
        state = cls(model.dim, model.n_data)
        theta0 = np.asarray(theta0, dtype=float)
        state.table[0] = model.grad_prior(theta0)
        state.table[1:] = model.grad_terms(theta0, np.arange(model.n_data))
        state.total = state.table.sum(axis=0)
        state.initialized = True
        return state

    def resum(self):
        return self.table.sum(axis=0)


def saga_estimate_and_update(model, theta, state, batch, n=None, N=None):
    """SAGA estimate at ``theta``; then refresh the sampled table rows.

    Repeated indices in a with-replacement batch each contribute to the
    estimate, but their table row is replaced once.
    """
    if state is None or not state.initialized:
        raise StateError("SAGA state has not been initialized")
    batch = _batch(batch)
    n = batch.size if n is None else n
    N = model.n_data if N is None else N
    rows = batch + 1
    fresh = model.grad_terms(theta, batch)
    prior = np.asarray(model.grad_prior(theta), dtype=float)
    value = state.total + (N / n) * (fresh - state.table[rows]).sum(axis=0) + prior - state.table[0]

    uniq, first = np.unique(rows, return_index=True)
    new_rows = fresh[first]
    state.total = state.total + (new_rows - state.table[uniq]).sum(axis=0) + (prior - state.table[0])
    state.table[uniq] = new_rows
    state.table[0] = prior
    return GradEstimate(value, batch)
