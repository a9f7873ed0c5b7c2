"""Zero-variance post-processing of SGLD output with linear polynomials.

With Q(theta) = a^T theta the control variate is a^T z, z = grad f_hat / 2,
and the corrected statistic is g + a^T z. The coefficient is fitted as

    a = -Var(z)^{-1} Cov(z, g)

which is the variance-minimising choice for ``g + a^T z``.
"""
from dataclasses import dataclass
import os

import numpy as np
from scipy import linalg

from .errors import DegenerateCovarianceError

CONDITION_LIMIT = 1e12
RIDGE_SCALE = 1e-10


@dataclass
class ZvInput:
    samples: np.ndarray
    gradient_estimates: np.ndarray
    g_values: np.ndarray = None
    coordinate: int = 0

    def __post_init__(self):
        self.samples = np.atleast_2d(np.asarray(self.samples, dtype=float))
        self.gradient_estimates = np.atleast_2d(np.asarray(self.gradient_estimates, dtype=float))
        if self.samples.shape[0] != self.gradient_estimates.shape[0]:
            raise ValueError("samples and gradient estimates have different row counts")
        K, d = self.gradient_estimates.shape
        if K < d + 2:
            raise ValueError(f"need at least d + 2 = {d + 2} rows to estimate the covariance, got {K}")
        if self.g_values is None:
            self.g_values = self.samples[:, self.coordinate]
        self.g_values = np.asarray(self.g_values, dtype=float).ravel()
        if self.g_values.size != K:
            raise ValueError("g_values must have one entry per sample")


@dataclass
class ZvResult:
    coefficients: np.ndarray
    corrected: np.ndarray
    variance_before: float
    variance_after: float
    mean_before: float
    mean_after: float

    @property
    def reduction_factor(self):
        if self.variance_after == 0:
            return np.inf
        return self.variance_before / self.variance_after

    @property
    def variance_reduction(self):
        """Absolute decrease in variance, variance_before - variance_after."""
        return self.variance_before - self.variance_after


def compute_z(gradient_estimates):
    return 0.5 * np.asarray(gradient_estimates, dtype=float)


def fit_coefficients(z, g_values, ridge=False):
    """Variance-minimising coefficients, from unbiased sample moments."""
    z = np.atleast_2d(np.asarray(z, dtype=float))
    g = np.asarray(g_values, dtype=float).ravel()
    K, d = z.shape
    zc = z - z.mean(axis=0)
    V = zc.T @ zc / (K - 1)
    c = zc.T @ (g - g.mean()) / (K - 1)
    if ridge:
        V = V + RIDGE_SCALE * np.trace(V) / d * np.eye(d)
    cond = np.linalg.cond(V) if np.any(V) else np.inf
    if not cond <= CONDITION_LIMIT:
        raise DegenerateCovarianceError(
            f"covariance of z is singular or ill-conditioned (condition number {cond:.3g}); "
            "retry with ridge regularisation enabled"
        )
    return -linalg.solve(V, c, assume_a="pos")


def apply_zv(zv_input, coefficients=None, ridge=False):
    """Correct ``g`` along the chain.

    ``coefficients`` overrides the fitted values (zeros give back ``g``).
    """
    z = compute_z(zv_input.gradient_estimates)
    g = zv_input.g_values
    a = fit_coefficients(z, g, ridge) if coefficients is None else np.asarray(coefficients, dtype=float)
    corrected = g + z @ a
    return ZvResult(
        coefficients=a,
        corrected=corrected,
        variance_before=float(np.var(g, ddof=1)),
        variance_after=float(np.var(corrected, ddof=1)),
        mean_before=float(g.mean()),
        mean_after=float(corrected.mean()),
    )


def postprocess_coordinates(samples, gradient_estimates, burn_in=0, ridge=False):
    """ZV for every coordinate projection g_j(theta) = theta_j."""
    samples = np.atleast_2d(samples)[burn_in:]
    grads = np.atleast_2d(gradient_estimates)[burn_in:]
    return [apply_zv(ZvInput(samples, grads, coordinate=j), ridge=ridge) for j in range(samples.shape[1])]


def write_zv_outputs(results, outdir, names=None):
    """zv_report.csv (one row per statistic) and corrected.csv (one column each)."""
    os.makedirs(outdir, exist_ok=True)
    names = names or [f"theta_{j + 1}" for j in range(len(results))]
    d = len(results[0].coefficients)
    header = ["statistic"] + [f"a_{j + 1}" for j in range(d)] + [
        "mean_before", "mean_after", "variance_before", "variance_after", "reduction_factor",
    ]
    with open(os.path.join(outdir, "zv_report.csv"), "w", newline="") as fh:
        fh.write(",".join(header) + "\n")
        for name, r in zip(names, results):
            row = list(r.coefficients) + [r.mean_before, r.mean_after, r.variance_before, r.variance_after, r.reduction_factor]
            fh.write(",".join([name] + [format(v, ".17g") for v in row]) + "\n")
    with open(os.path.join(outdir, "corrected.csv"), "w", newline="") as fh:
        fh.write(",".join(names) + "\n")
        for row in np.column_stack([r.corrected for r in results]):
            fh.write(",".join(format(v, ".17g") for v in row) + "\n")
