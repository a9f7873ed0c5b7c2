"""Posterior models expressed through per-term gradients.

A model represents the negative log posterior

    f(theta) = f_0(theta) + sum_{i=1}^N f_i(theta)

where ``f_0`` is the negative log prior and ``f_i`` the negative log
likelihood of datum ``i``. Gradients are hand-coded; there is no autodiff.
"""
from dataclasses import dataclass, field
import csv
import math
import os

import numpy as np
from scipy.special import expit

from .errors import CapabilityError, ModelEvaluationError

# Fixed chunk size for the full-gradient reduction. Changing it changes the
# floating point summation order, so keep it constant.
REDUCTION_CHUNK = 4096


@dataclass
class Dataset:
    """N fixed-width rows of reals, one per datum."""

    records: np.ndarray
    columns: list = field(default_factory=list)

    def __post_init__(self):
        self.records = np.atleast_2d(np.asarray(self.records, dtype=float))
        if not self.columns:
            self.columns = [f"c{j + 1}" for j in range(self.records.shape[1])]
        if len(self.columns) != self.records.shape[1]:
            raise ValueError("column names do not match record width")

    @property
    def N(self):
        return self.records.shape[0]

    def __len__(self):
        return self.N


def read_dataset(path):
    """Read a CSV with a header row into a :class:`Dataset`."""
    if not os.path.exists(path):
        raise FileNotFoundError(f"dataset file not found: {path}")
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        rows = [[float(v) for v in row] for row in reader if row]
    if not rows:
        raise ValueError(f"dataset {path} has no rows")
    return Dataset(np.array(rows), [h.strip() for h in header])


def write_dataset(dataset, path):
    with open(path, "w", newline="") as fh:
        fh.write(",".join(dataset.columns) + "\n")
        for row in dataset.records:
            fh.write(",".join(format(v, ".17g") for v in row) + "\n")


def _select(dataset, names):
    index = {c: j for j, c in enumerate(dataset.columns)}
    missing = [c for c in names if c not in index]
    if missing:
        raise ValueError(f"dataset is missing columns {missing}")
    return dataset.records[:, [index[c] for c in names]]


def _feature_names(dataset):
    names = [c for c in dataset.columns if c.startswith("x") and c[1:].isdigit()]
    return sorted(names, key=lambda c: int(c[1:]))


class GradientModel:
    """Abstract posterior given by per-term gradients.

    Subclasses set ``dim`` and ``n_data`` and implement :meth:`grad_prior`
    and :meth:`grad_terms`. Everything else has a default.
    """

    dim: int
    n_data: int

    def grad_prior(self, theta):
        raise NotImplementedError

    def grad_terms(self, theta, indices):
        """Rows ``grad f_i(theta)`` for ``i`` in ``indices`` (0-based)."""
        raise NotImplementedError

    def grad_term(self, theta, i):
        return self.grad_terms(theta, np.array([i]))[0]

    def lipschitz_constants(self):
        raise CapabilityError(f"{type(self).__name__} does not expose Lipschitz constants")

    def log_likelihood(self, theta, dataset):
        raise CapabilityError(f"{type(self).__name__} does not expose a log-likelihood")

    def neg_log_posterior(self, theta):
        raise CapabilityError(f"{type(self).__name__} does not expose its log posterior")


def _check_finite(model, theta, total):
    if np.all(np.isfinite(total)):
        return total
    if not np.all(np.isfinite(model.grad_prior(theta))):
        raise ModelEvaluationError("non-finite gradient in prior term (index 0)", index=0)
    for start in range(0, model.n_data, REDUCTION_CHUNK):
        idx = np.arange(start, min(start + REDUCTION_CHUNK, model.n_data))
        bad = ~np.all(np.isfinite(model.grad_terms(theta, idx)), axis=1)
        if bad.any():
            i = int(idx[np.argmax(bad)]) + 1
            raise ModelEvaluationError(f"non-finite gradient in data term {i}", index=i)
    raise ModelEvaluationError("non-finite gradient after summation (overflow)")


def full_gradient(model, theta):
    """Exact ``grad f(theta)``.

    The data sum is reduced chunk by chunk in index order so that the result
    is bit-reproducible regardless of how the chunks were evaluated.
    """
    theta = np.asarray(theta, dtype=float)
    total = np.array(model.grad_prior(theta), dtype=float)
    partials = []
    for start in range(0, model.n_data, REDUCTION_CHUNK):
        idx = np.arange(start, min(start + REDUCTION_CHUNK, model.n_data))
        partials.append(model.grad_terms(theta, idx).sum(axis=0))
    for p in partials:
        total = total + p
    return _check_finite(model, theta, total)


class GaussianModel(GradientModel):
    """Conjugate Gaussian location model.

    x_i ~ N(theta, sigma_x^2 I), theta ~ N(0, sigma_0^2 I). The posterior is
    Gaussian and available in closed form via :func:`posterior_moments`.
    """

    def __init__(self, data, sigma_x=1.0, sigma_0=1.0, dim=None):
        data = np.asarray(data, dtype=float)
        if data.ndim == 1:
            data = data.reshape(-1, 1) if dim in (None, 1) else data.reshape(-1, dim)
        if data.size == 0:
            data = np.zeros((0, dim or 1))
        if sigma_x <= 0 or sigma_0 <= 0:
            raise ValueError("scales must be positive")
        self.data = data
        self.sigma_x = float(sigma_x)
        self.sigma_0 = float(sigma_0)
        self.dim = data.shape[1]
        self.n_data = data.shape[0]

    @classmethod
    def from_dataset(cls, dataset, sigma_x=1.0, sigma_0=1.0):
        return cls(_select(dataset, _feature_names(dataset)), sigma_x, sigma_0)

    def columns(self):
        return [f"x{j + 1}" for j in range(self.dim)]

    def grad_prior(self, theta):
        return np.asarray(theta, dtype=float) / self.sigma_0**2

    def grad_terms(self, theta, indices):
        return (theta - self.data[indices]) / self.sigma_x**2

    def lipschitz_constants(self):
        return np.full(self.n_data, 1.0 / self.sigma_x**2)

    def log_likelihood(self, theta, dataset):
        x = _select(dataset, self.columns()) if isinstance(dataset, Dataset) else np.atleast_2d(dataset)
        theta = np.asarray(theta, dtype=float)
        sq = (
            np.sum(x**2, axis=1)
            - 2.0 * theta @ x.T
            + np.sum(theta**2, axis=-1)[..., None]
        )
        return -0.5 * sq / self.sigma_x**2 - 0.5 * self.dim * math.log(2 * math.pi * self.sigma_x**2)

    def neg_log_posterior(self, theta):
        theta = np.asarray(theta, dtype=float)
        return 0.5 * theta @ theta / self.sigma_0**2 + 0.5 * np.sum((self.data - theta) ** 2) / self.sigma_x**2


def posterior_moments(model):
    """Exact posterior mean and per-coordinate variance of a GaussianModel."""
    if not isinstance(model, GaussianModel):
        raise CapabilityError("closed-form moments exist only for GaussianModel")
    precision = 1.0 / model.sigma_0**2 + model.n_data / model.sigma_x**2
    mean = model.data.sum(axis=0) / model.sigma_x**2 / precision
    return mean, np.full(model.dim, 1.0 / precision)


class LogisticModel(GradientModel):
    """Bayesian logistic regression, labels in {-1, +1}, Laplace(0, 1) prior.

    The prior gradient uses sign(beta), taking 0 at beta_j = 0.
    """

    def __init__(self, X, y):
        X = np.atleast_2d(np.asarray(X, dtype=float))
        y = np.asarray(y, dtype=float).ravel()
        if X.shape[0] != y.shape[0]:
            raise ValueError("X and y disagree on N")
        if not np.all(np.isin(y, (-1.0, 1.0))):
            raise ValueError("labels must be -1 or +1")
        self.X = X
        self.y = y
        self._yX = y[:, None] * X
        self.dim = X.shape[1]
        self.n_data = X.shape[0]

    @classmethod
    def from_dataset(cls, dataset):
        cols = _feature_names(dataset)
        return cls(_select(dataset, cols), _select(dataset, ["y"])[:, 0])

    def columns(self):
        return [f"x{j + 1}" for j in range(self.dim)] + ["y"]

    def grad_prior(self, theta):
        return np.sign(theta).astype(float)

    def grad_terms(self, theta, indices):
        yx = self._yX[indices]
        return -yx * expit(-(yx @ theta))[:, None]

    def lipschitz_constants(self):
        return 0.25 * np.sum(self.X**2, axis=1)

    def log_likelihood(self, theta, dataset):
        if isinstance(dataset, Dataset):
            yx = _select(dataset, ["y"])[:, 0][:, None] * _select(dataset, self.columns()[:-1])
        else:
            yx = np.asarray(dataset, dtype=float)
        return -np.logaddexp(0.0, -(np.asarray(theta, dtype=float) @ yx.T))

    def neg_log_posterior(self, theta):
        theta = np.asarray(theta, dtype=float)
        return np.sum(np.abs(theta)) + np.sum(np.logaddexp(0.0, -(self._yX @ theta)))


def build_model(kind, dataset, **hyper):
    """Construct a built-in model from a dataset by family name."""
    if kind == "gaussian":
        return GaussianModel.from_dataset(dataset, hyper.get("sigma_x", 1.0), hyper.get("sigma_0", 1.0))
    if kind == "logistic":
        return LogisticModel.from_dataset(dataset)
    raise ValueError(f"unknown model family {kind!r}")
