"""Soft and hard beta-quantiles of empirical lower-objective values."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import SIGMOID, Selector, _exact_ceil
from .errors import DomainError, SolverError

__all__ = [
    "QuantileSolution",
    "StabilityConstants",
    "soft_quantile",
    "soft_cdf",
    "hard_quantile",
    "hard_selection",
    "eta_weights",
    "kappa_bound",
    "inverse_stability_slack",
]

TOL = 1e-12
MAX_ITER = 200
POLISH_STEPS = 64


@dataclass(frozen=True)
class QuantileSolution:
    """Root of the soft-quantile equation.

    The solver works in the offset ``delta`` with ``(q - L_i)/tau =
    (anchor - L_i)/tau + delta``, where ``anchor`` is one of the sample
    values. ``q = anchor + tau*delta`` is the rounded result; ``z`` values
    formed from ``anchor`` and ``delta`` keep full precision even when
    ``tau`` is far below the spacing of floats near ``q``.
    """

    q: float
    residual: float
    iterations: int
    bracket: tuple
    anchor: float = math.nan
    delta: float = math.nan

    def z(self, l_values, tau: float) -> np.ndarray:
        """Selector arguments ``(q - L_i)/tau`` at full precision."""
        l = np.asarray(l_values, dtype=float)
        return (self.anchor - l) / tau + self.delta


@dataclass(frozen=True)
class StabilityConstants:
    z_beta: float
    c_s: float
    kappa: float
    log_c_s: float
    log_kappa: float


def _as_values(l_values) -> np.ndarray:
    l = np.asarray(l_values, dtype=float).ravel()
    if l.size == 0:
        raise DomainError("empty lower-objective sample")
    if not np.all(np.isfinite(l)):
        raise DomainError("lower-objective values must be finite")
    return l


def soft_cdf(q: float, l: np.ndarray, tau: float, selector: Selector = SIGMOID) -> float:
    """Selector-smoothed empirical CDF ``(1/N) sum s((q - L_i)/tau)``."""
    return float(np.mean(selector((q - l) / tau)))


def soft_quantile(l_values, beta: float, tau: float, selector: Selector = SIGMOID,
                  tol: float = TOL, max_iter: int = MAX_ITER) -> QuantileSolution:
    """Solve ``(1/N) sum_i s((q - L_i)/tau) = beta`` for ``q``.

    The root is bracketed by ``[min L + tau*z_beta, max L + tau*z_beta]``
    with ``z_beta = s^{-1}(beta)``. Newton steps are taken from the
    empirical quantile and replaced by bisection whenever they leave the
    current bracket. If the bracket shrinks to float resolution, the
    offset is re-anchored once at the sample value nearest the current
    iterate and the solve continues there.

    Raises
    ------
    DomainError
        Empty or non-finite input, ``tau <= 0`` or ``beta`` outside (0, 1).
    SolverError
        The residual is still above ``tol`` after ``max_iter`` iterations
        or once the bracket has shrunk to floating-point resolution.
    """
    l = _as_values(l_values)
    if not tau > 0:
        raise DomainError("soft_quantile needs tau > 0; use hard_quantile for tau = 0")
    if not 0 < beta < 1:
        raise DomainError("beta out of (0,1)")
    z_beta = float(selector.inverse(beta))
    l_min, l_max = float(l.min()), float(l.max())
    lo_q, hi_q = l_min + tau * z_beta, l_max + tau * z_beta
    k = min(max(_exact_ceil(beta, l.size), 1), l.size)
    anchor = float(np.partition(l, k - 1)[k - 1])
    total_it = 0
    for attempt in range(2):
        c = (anchor - l) / tau
        sol = _solve_offset(c, beta, z_beta, (l_min - anchor) / tau + z_beta,
                            (l_max - anchor) / tau + z_beta, selector, tol, max_iter - total_it)
        delta, f, it, converged = sol
        total_it += it
        if converged:
            q = min(max(anchor + tau * delta, lo_q), hi_q)
            return QuantileSolution(q, abs(f), total_it, (lo_q, hi_q), anchor, delta)
        if attempt == 0:
            # move the anchor to the sample value closest to the iterate
            j = int(np.argmin(np.abs(c + delta)))
            anchor = float(l[j])
    raise SolverError("bracket collapsed before reaching the tolerance", residual=abs(f),
                      iterations=total_it)


def _solve_offset(c, beta, z0, lo, hi, selector, tol, max_iter):
    """Safeguarded Newton on ``mean s(c_i + delta) - beta``; returns (delta, f, its, ok)."""

    n = c.size
    target = beta * n

    def residual(delta):
        # saturated terms enter as -(1 - s) next to an integer count, so the
        # residual keeps resolving the tails after s rounds to 1
        z = c + delta
        pos = z > 0
        terms = np.where(pos, -selector.complement(z), selector(z))
        return (float(np.sum(terms)) + (int(np.count_nonzero(pos)) - target)) / n

    f_lo, f_hi = residual(lo), residual(hi)
    if abs(f_lo) <= tol:
        return lo, f_lo, 0, True
    if abs(f_hi) <= tol:
        return hi, f_hi, 0, True
    if f_lo > 0 or f_hi < 0:
        # cannot happen for a valid selector except through rounding
        raise SolverError("localization interval does not bracket the root",
                          residual=min(abs(f_lo), abs(f_hi)))
    x = min(max(z0, lo), hi)
    f = residual(x)
    it = 0
    while abs(f) > tol:
        it += 1
        if it > max_iter:
            raise SolverError(f"soft quantile did not converge in {MAX_ITER} iterations",
                              residual=abs(f), iterations=it - 1)
        if f < 0:
            lo = x
        else:
            hi = x
        slope = float(np.mean(selector.derivative(c + x)))
        x_new = x - f / slope if slope > 0 and math.isfinite(slope) else math.nan
        if not (lo < x_new < hi):
            x_new = 0.5 * (lo + hi)
        if x_new == x or not (lo < x_new < hi):
            if hi - lo <= 4 * math.ulp(max(abs(lo), abs(hi))):
                return x, f, it, False
            x_new = 0.5 * (lo + hi)
        x = x_new
        f = residual(x)
    # polish: a few more Newton steps while the residual strictly drops, so
    # saturated selectors land on an exact root instead of anywhere within tol
    for _ in range(POLISH_STEPS):
        if f == 0:
            break
        slope = float(np.mean(selector.derivative(c + x)))
        if not (slope > 0 and math.isfinite(slope)):
            break
        x_new = x - f / slope
        if not (lo <= x_new <= hi) or x_new == x:
            break
        f_new = residual(x_new)
        if not abs(f_new) < abs(f):
            break
        x, f = x_new, f_new
    return x, f, it, True


def hard_selection(l_values, beta: float) -> np.ndarray:
    """Indices of the ``ceil(beta*N)`` smallest values, stable in index order."""
    l = _as_values(l_values)
    if not 0 < beta <= 1:
        raise DomainError("beta out of (0,1]")
    k = _exact_ceil(beta, l.size)
    return np.argsort(l, kind="stable")[:k]


def hard_quantile(l_values, beta: float) -> float:
    """The ``ceil(beta*N)``-th smallest value (1-indexed)."""
    l = _as_values(l_values)
    return float(l[hard_selection(l, beta)[-1]])


def eta_weights(q: float, l_values, tau: float, selector: Selector = SIGMOID) -> np.ndarray:
    """Selection weights ``s((q - L_i)/tau)``; their mean equals beta at the soft quantile."""
    l = _as_values(l_values)
    return np.asarray(selector((q - l) / tau), dtype=float).reshape(l.shape)


def kappa_bound(l_min: float, l_max: float, beta: float, tau: float,
                selector: Selector = SIGMOID) -> StabilityConstants:
    """Strong-monotonicity constant ``kappa = c_s / tau``.

    ``c_s`` is the infimum of ``s'`` over ``z_beta +- (l_max - l_min)/tau``.
    The sigmoid derivative is unimodal with its peak at 0, so the infimum
    sits at one of the endpoints. Logs are kept because ``c_s`` underflows
    once the interval is a few hundred units wide.
    """
    if l_max < l_min:
        raise DomainError("l_max must be at least l_min")
    if not tau > 0:
        raise DomainError("tau must be positive")
    z_beta = float(selector.inverse(beta))
    half = (l_max - l_min) / tau
    ends = np.array([z_beta - half, z_beta + half])
    log_ds = np.asarray(selector.log_derivative(ends), dtype=float)
    log_c_s = float(log_ds.min())
    c_s = math.exp(log_c_s) if log_c_s > -745 else 0.0
    log_kappa = log_c_s - math.log(tau)
    return StabilityConstants(z_beta=z_beta, c_s=c_s, kappa=c_s / tau,
                              log_c_s=log_c_s, log_kappa=log_kappa)


def inverse_stability_slack(l_mu, l_nu, beta: float, tau: float,
                            selector: Selector = SIGMOID) -> tuple:
    """Both sides of ``|q_mu - q_nu| <= |F_mu(q_nu)| / kappa``.

    ``kappa`` uses the pooled minimum and maximum of both samples. The
    right-hand side is assembled in log space and may be ``inf`` when
    ``kappa`` underflows.
    """
    mu = _as_values(l_mu)
    nu = _as_values(l_nu)
    q_mu = soft_quantile(mu, beta, tau, selector).q
    q_nu = soft_quantile(nu, beta, tau, selector).q
    pooled_min = min(mu.min(), nu.min())
    pooled_max = max(mu.max(), nu.max())
    stab = kappa_bound(pooled_min, pooled_max, beta, tau, selector)
    lhs = abs(q_mu - q_nu)
    f_mu = abs(soft_cdf(q_nu, mu, tau, selector) - beta)
    if f_mu == 0.0:
        rhs = 0.0
    else:
        log_rhs = math.log(f_mu) - stab.log_kappa
        rhs = math.exp(log_rhs) if log_rhs < 709 else math.inf
    return lhs, rhs
