"""Closed-form Wasserstein bounds and tuning conditions for SGLD-CV.

All moment inputs (distances of the centering value and of the starting
point from the posterior mean, gradient bounds) are supplied by the caller;
nothing here estimates them.
"""
from dataclasses import dataclass, asdict
import math

import numpy as np

from .errors import PreconditionError

ALPHA = 7.0 * math.sqrt(2.0) / 6.0


@dataclass
class ConcavityConstants:
    m: float
    M: float
    d: int = 1
    N: int = None
    l: float = None
    L: float = None

    def __post_init__(self):
        if not 0 < self.m <= self.M:
            raise ValueError(f"need 0 < m <= M, got m={self.m}, M={self.M}")

    @property
    def R(self):
        return self.M / self.m


def posterior_constants_from_terms(l, L, N, d=1):
    """m = (N+1) l and M = (N+1) L when every term is l-convex and L-smooth."""
    if not 0 < l <= L:
        raise ValueError(f"need 0 < l <= L, got l={l}, L={L}")
    return ConcavityConstants(m=(N + 1) * l, M=(N + 1) * L, d=d, N=N, l=l, L=L)


def cv_variance_bound(L_terms, n, dist_sq):
    """(sum L_i)^2 / n * E||theta - theta_hat||^2."""
    if n < 1:
        raise ValueError("n must be >= 1")
    return float(np.sum(L_terms)) ** 2 / n * dist_sq


def naive_variance_bound(N, sigma, n):
    """2 N^2 sigma^2 / n for per-term gradients bounded in norm by sigma."""
    if sigma < 0:
        raise ValueError("sigma must be >= 0")
    return 2.0 * N**2 * sigma**2 / n


def step_limit(m, M):
    """Largest admissible stepsize (exclusive) for the Wasserstein bound."""
    return 2.0 * m / (2.0 * M**2 + m**2)


@dataclass
class PropositionBound:
    A: float
    B: float
    C: float
    k: int
    w2_initial: float
    bound: float

    @property
    def stationary(self):
        return self.bound - (1.0 - self.A) ** self.k * self.w2_initial


def _tail(A, B, C):
    if B == 0:
        return 0.0
    return B**2 / (C + math.sqrt(A) * B)


def proposition_constants(m, M, h, n, d, centering_dist_sq):
    """The contraction A, noise term B and discretisation term C."""
    A = 1.0 - math.sqrt(2.0 * h**2 * M**2 / n + (1.0 - m * h) ** 2)
    B = math.sqrt(2.0 * h**2 * M**2 / n * (centering_dist_sq + d / m))
    C = ALPHA * M * math.sqrt(h**3 * d)
    return A, B, C


def proposition_bound(m, M, h, n, d, centering_dist_sq, w2_initial, k):
    """Upper bound on W2(nu_k, pi) after k SGLD-CV steps.

    ``n=math.inf`` removes the gradient noise (B = 0).
    """
    if not 0 < h < step_limit(m, M):
        raise PreconditionError(f"stepsize h={h} outside (0, {step_limit(m, M):.6g}); bound not valid")
    A, B, C = proposition_constants(m, M, h, n, d, centering_dist_sq)
    bound = (1.0 - A) ** k * w2_initial + C / A + _tail(A, B, C)
    return PropositionBound(A, B, C, k, w2_initial, bound)


@dataclass
class Budget:
    """A conforming (h, K, n) for W2(nu_K, pi) <= eps0 / sqrt(m)."""

    h_max: float
    K_min: int
    n_min: int
    beta: float
    h_condition: bool
    Kh_condition: bool
    n_condition: bool

    @property
    def satisfied(self):
        return self.h_condition and self.Kh_condition and self.n_condition


def _beta(R, d, eps0):
    return min(1.0 / (2.0 * R**2 + 1.0), eps0**2 / (64.0 * R**2 * ALPHA**2 * d))


def theorem2_conditions(m, M, d, eps0, h, K, n, centering_dist_sq, start_dist_sq):
    """Check the three sufficient conditions on (h, K, n)."""
    R = M / m
    h_ok = h <= min(n / (2 * R**2 + n), eps0**2 / (64 * R**2 * ALPHA**2 * d)) / m
    kh_ok = K * h >= math.log(4 * m / eps0**2 * (start_dist_sq + d / m)) / m
    n_ok = n >= 64 * R**2 * h * m / eps0**2 * m * (centering_dist_sq + d / m)
    return h_ok, kh_ok, n_ok


def theorem2_budget(m, M, d, eps0, centering_dist_sq=0.0, start_dist_sq=0.0):
    """Smallest integer n and K, with h = beta / m, meeting the conditions.

    The stepsize cap is the smaller of n/(2R^2+n) and
    eps0^2/(64 R^2 alpha^2 d) (both are needed for the bound), and
    beta is the same minimum taken at n = 1, so h = beta / m is admissible
    for every n >= 1.
    """
    if not eps0 > 0:
        raise ValueError("eps0 must be positive")
    R = M / m
    beta = _beta(R, d, eps0)
    h = beta / m
    n_min = max(1, math.ceil(64.0 * R**2 * beta / eps0**2 * m * (centering_dist_sq + d / m)))
    log_term = math.log(4.0 * m / eps0**2 * (start_dist_sq + d / m))
    K_min = max(1, math.ceil(log_term / (m * h)))
    conds = theorem2_conditions(m, M, d, eps0, h, K_min, n_min, centering_dist_sq, start_dist_sq)
    return Budget(h, K_min, n_min, beta, *conds)


@dataclass
class CostBound:
    Kn_bound: float
    C1: float
    C2: float


def corollary_cost(m, M, d, eps0, centering_dist_sq=0.0, start_dist_sq=0.0):
    """Upper bound on K * n for the budget returned by :func:`theorem2_budget`.

    C1 = 1 / beta is the iteration constant and C2 = 64 R^2 beta / eps0^2
    the minibatch constant.
    """
    R = M / m
    beta = _beta(R, d, eps0)
    C1 = max(2.0 * R**2 + 1.0, 64.0 * R**2 * ALPHA**2 * d / eps0**2)
    C2 = 64.0 * R**2 * beta / eps0**2
    first = C1 * math.log(m * start_dist_sq + d) + C1 * math.log(4.0 / eps0**2) + 1.0
    second = C2 * m * centering_dist_sq + C2 * d + 1.0
    return CostBound(first * second, C1, C2)


def sgd_error_bound(D_sq, m, K):
    """4 D^2 / (m^2 K): mean squared error of SGD with stepsizes 1/(m k)."""
    if D_sq < 0 or m <= 0 or K <= 0:
        raise ValueError("need D^2 >= 0, m > 0 and K > 0")
    return 4.0 * D_sq / (m**2 * K)


def recurrence_iterates(A, B, C, x0, K):
    """x_{k+1} = sqrt(((1-A) x_k + C)^2 + B^2) for k < K, including x_0."""
    x = np.empty(K + 1)
    x[0] = x0
    for k in range(K):
        x[k + 1] = math.hypot((1.0 - A) * x[k] + C, B)
    return x


def recurrence_closed_form(A, B, C, x0, k):
    return (1.0 - A) ** np.asarray(k) * x0 + C / A + _tail(A, B, C)


def recurrence_dominance(A, B, C, x0, K, rtol=1e-12):
    """True when the closed form bounds every iterate of the recursion."""
    if not 0 < A < 1:
        raise ValueError(f"A must lie in (0, 1), got {A}")
    if min(B, C, x0) < 0:
        raise ValueError("B, C and x0 must be non-negative")
    x = recurrence_iterates(A, B, C, x0, K)
    bound = recurrence_closed_form(A, B, C, x0, np.arange(K + 1))
    return bool(np.all(x <= bound * (1 + rtol) + 1e-300))


@dataclass
class BoundReport:
    m: float
    M: float
    R: float
    d: int
    eps0: float
    h: float
    n: float
    K: int
    A: float
    B: float
    C: float
    w2_initial: float
    wasserstein_bound: float
    target: float
    h_condition: bool
    Kh_condition: bool
    n_condition: bool
    budget_h_max: float
    budget_K_min: int
    budget_n_min: int
    Kn_bound: float
    C1: float
    C2: float

    def rows(self):
        return list(asdict(self).items())


def bound_report(m, M, d, eps0, centering_dist_sq=0.0, start_dist_sq=0.0, h=None, n=None, K=None, w2_initial=None):
    """Budget, cost bound and the Wasserstein bound at (h, n, K).

    Missing (h, n, K) default to the budget. ``w2_initial`` defaults to the
    deterministic-start bound sqrt(E||theta_0 - theta_bar||^2 + d/m).
    """
    budget = theorem2_budget(m, M, d, eps0, centering_dist_sq, start_dist_sq)
    cost = corollary_cost(m, M, d, eps0, centering_dist_sq, start_dist_sq)
    h = budget.h_max if h is None else h
    n = budget.n_min if n is None else n
    K = budget.K_min if K is None else K
    if w2_initial is None:
        w2_initial = math.sqrt(start_dist_sq + d / m)
    prop = proposition_bound(m, M, h, n, d, centering_dist_sq, w2_initial, K)
    conds = theorem2_conditions(m, M, d, eps0, h, K, n, centering_dist_sq, start_dist_sq)
    return BoundReport(
        m=m, M=M, R=M / m, d=d, eps0=eps0, h=h, n=n, K=K,
        A=prop.A, B=prop.B, C=prop.C, w2_initial=w2_initial,
        wasserstein_bound=prop.bound, target=eps0 / math.sqrt(m),
        h_condition=conds[0], Kh_condition=conds[1], n_condition=conds[2],
        budget_h_max=budget.h_max, budget_K_min=budget.K_min, budget_n_min=budget.n_min,
        Kn_bound=cost.Kn_bound, C1=cost.C1, C2=cost.C2,
    )
