"""Soft and hard consensus points, evaluated in the shifted log domain."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy import special

from .core import SIGMOID, AlgorithmParams, Ensemble, Selector
from .errors import DomainError, InvariantError
from .quantile import hard_quantile, soft_quantile

__all__ = [
    "ConsensusReport",
    "consensus_point",
    "hard_consensus_point",
    "compute_consensus",
    "consensus_moment_constant",
    "consensus_moment_witness",
    "weighted_mean",
    "log_norms",
    "log_fourth_moment",
]


@dataclass(frozen=True)
class ConsensusReport:
    """Consensus point together with the quantities bounding it.

    ``B``, ``A_norm``, ``b_G`` and ``a_R4`` live on the unshifted scale and
    underflow to zero for large ``alpha * G``; the ``log_*`` fields carry the
    same numbers without underflow.
    """

    q: float
    eta: np.ndarray
    m: np.ndarray
    B: float
    A_norm: float
    b_G: float
    a_R4: float
    log_B: float
    log_A_norm: float
    log_b_G: float
    log_a_R4: float
    log_weights: np.ndarray
    bounds_source: str = "empirical"
    hard: bool = False


def weighted_mean(positions: np.ndarray, weights: np.ndarray) -> tuple:
    """Return ``(sum w_i x_i / sum w_i, sum w_i x_i, sum w_i)``.

    Sums run in particle-index order with exactly rounded accumulation, so
    the result does not depend on how the weights were produced.
    """
    total = math.fsum(weights.tolist())
    num = np.array([math.fsum((weights * positions[:, j]).tolist())
                    for j in range(positions.shape[1])])
    return num / total, num, total


def _safe_exp(x: float) -> float:
    if x > 709.0:
        return math.inf
    return math.exp(x) if x > -745.0 else 0.0


def log_norms(x: np.ndarray) -> np.ndarray:
    """Row-wise ``log ||x_i||``, scaled so tiny or huge rows do not under/overflow."""
    a = np.abs(np.atleast_2d(np.asarray(x, dtype=float)))
    top = a.max(axis=1)
    safe = np.where(top > 0, top, 1.0)
    with np.errstate(divide="ignore"):
        return np.where(top > 0, np.log(safe) + 0.5 * np.log(np.sum((a / safe[:, None]) ** 2, axis=1)),
                        -np.inf)


def log_fourth_moment(x: np.ndarray) -> float:
    """``log mean ||x_i||^4`` evaluated in log space."""
    ln = 4 * log_norms(x)
    if not np.isfinite(ln).any():
        return -math.inf
    return float(special.logsumexp(ln) - math.log(len(ln)))


def _log_norm(v: np.ndarray) -> float:
    return float(log_norms(np.asarray(v, dtype=float).reshape(1, -1))[0])


def _finish(ens: Ensemble, log_eta: np.ndarray, eta: np.ndarray, q: float, alpha: float,
            beta: float, g_bounds: Optional[tuple], hard: bool) -> ConsensusReport:
    x = ens.positions
    g = ens.g_values
    n = ens.n
    g_shift = float(g.min())
    log_w = -alpha * (g - g_shift) + log_eta
    top = float(log_w.max())
    if not math.isfinite(top):
        raise InvariantError("all consensus weights underflowed")
    w = np.exp(log_w - top)
    m, num, total = weighted_mean(x, w)
    # undo both shifts and the 1/N normalisation of the empirical measure
    scale = top - alpha * g_shift - math.log(n)
    log_B = math.log(total) + scale
    log_A = _log_norm(num) + scale
    if g_bounds is None:
        g_lo, g_hi, source = g_shift, float(g.max()), "empirical"
    else:
        g_lo, g_hi = g_bounds
        source = "declared"
    log_b_G = math.log(beta) - alpha * g_hi
    log_a = 0.5 * math.log(beta) - alpha * g_lo + 0.25 * log_fourth_moment(x)
    return ConsensusReport(
        q=q, eta=eta, m=m,
        B=_safe_exp(log_B), A_norm=_safe_exp(log_A), b_G=_safe_exp(log_b_G), a_R4=_safe_exp(log_a),
        log_B=log_B, log_A_norm=log_A, log_b_G=log_b_G, log_a_R4=log_a,
        log_weights=log_w, bounds_source=source, hard=hard,
    )


def consensus_point(ensemble: Ensemble, params: AlgorithmParams, selector: Selector = SIGMOID,
                    g_bounds: Optional[tuple] = None) -> ConsensusReport:
    """Soft consensus point of the empirical measure of ``ensemble``.

    Weights are ``exp(-alpha (G_i - min G)) * eta_i``. ``g_bounds`` replaces
    the empirical G range in the ``b_G`` and ``a(R4)`` witnesses.
    """
    ensemble.require_fresh()
    if params.tau <= 0:
        raise DomainError("consensus_point needs tau > 0; use hard_consensus_point")
    l = ensemble.l_values
    sol = soft_quantile(l, params.beta, params.tau, selector)
    z = sol.z(l, params.tau)
    eta = np.asarray(selector(z), dtype=float).reshape(l.shape)
    if hasattr(selector, "log_value"):
        log_eta = np.asarray(selector.log_value(z), dtype=float).reshape(l.shape)
    else:
        log_eta = np.log(eta)
    return _finish(ensemble, log_eta, eta, sol.q, params.alpha, params.beta, g_bounds, hard=False)


def hard_consensus_point(ensemble: Ensemble, alpha: float, beta: float,
                         g_bounds: Optional[tuple] = None) -> ConsensusReport:
    """Gibbs average over particles whose L value is at most the hard quantile."""
    ensemble.require_fresh()
    l = ensemble.l_values
    q = hard_quantile(l, beta)
    selected = l <= q
    if not selected.any():
        raise InvariantError("hard selection is empty")
    eta = selected.astype(float)
    log_eta = np.where(selected, 0.0, -np.inf)
    return _finish(ensemble, log_eta, eta, q, alpha, beta, g_bounds, hard=True)


def compute_consensus(ensemble: Ensemble, params: AlgorithmParams, selector: Selector = SIGMOID,
                      g_bounds: Optional[tuple] = None) -> ConsensusReport:
    """Dispatch on ``params.tau``: zero means the hard rule."""
    if params.hard:
        return hard_consensus_point(ensemble, params.alpha, params.beta, g_bounds)
    return consensus_point(ensemble, params, selector, g_bounds)


def consensus_moment_constant(alpha: float, beta: float, g_min: float, g_max: float,
                              log: bool = False) -> float:
    """``C_m = beta^{-1/4} exp(alpha (g_max - g_min))``; ``log=True`` returns ``log C_m``."""
    log_cm = -0.25 * math.log(beta) + alpha * (g_max - g_min)
    return log_cm if log else _safe_exp(log_cm)


def consensus_moment_witness(ensemble: Ensemble, params: AlgorithmParams, g_min: float,
                             g_max: float, report: Optional[ConsensusReport] = None,
                             selector: Selector = SIGMOID) -> tuple:
    """Check ``||m||^4 <= C_m^4 * mean ||x_i||^4`` and return ``(lhs, rhs)``.

    The comparison is done in log space; ``rhs`` is ``inf`` when it
    overflows.

    Raises
    ------
    InvariantError
        If the inequality fails.
    """
    ensemble.require_fresh()
    g = ensemble.g_values
    if g.min() < g_min or g.max() > g_max:
        raise DomainError("G values fall outside [g_min, g_max]")
    if report is None:
        report = compute_consensus(ensemble, params, selector)
    m_norm = float(np.linalg.norm(report.m))
    log_lhs = 4 * _log_norm(report.m)
    log_cm = consensus_moment_constant(params.alpha, params.beta, g_min, g_max, log=True)
    log_rhs = 4 * log_cm + log_fourth_moment(ensemble.positions)
    if log_lhs > log_rhs + 1e-12:
        raise InvariantError(
            f"consensus-moment bound violated: log lhs {log_lhs:.6g} > log rhs {log_rhs:.6g}")
    return m_norm ** 4, _safe_exp(log_rhs)
