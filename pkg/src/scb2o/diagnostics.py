"""Theory constants and numerical checks of the certifiable inequalities.

Constants that overflow double precision are carried as natural logarithms
alongside the plain value (which is then ``inf``) and listed in the
``overflow`` field of the owning record.
"""

from __future__ import annotations

import json
import math
from fractions import Fraction
from dataclasses import asdict, dataclass, field
from typing import NamedTuple, Optional, Sequence

import numpy as np
from scipy import special

from .consensus import (compute_consensus, consensus_moment_constant, hard_consensus_point,
                        log_fourth_moment, log_norms)
from .core import SIGMOID, AlgorithmParams, Ensemble, ObjectiveSpec, Selector
from .errors import ConfigError, ConstraintError, DomainError, InvariantError
from .quantile import inverse_stability_slack, kappa_bound, soft_quantile

__all__ = [
    "TheoryConstants",
    "MassBoundReport",
    "LaplaceBoundReport",
    "DecayFit",
    "CutoffReport",
    "CheckRecord",
    "theory_constants",
    "admissible_c",
    "bump",
    "mass_bound_b0",
    "mass_bound_check",
    "laplace_bound_check",
    "decay_rate_fit",
    "cutoff_monitor",
    "hitting_time",
    "beta_tau",
    "alpha_tau",
    "quantile_suite",
    "consensus_moment_suite",
    "soft_hard_suite",
    "write_check_report",
    "B4D_DEFAULT",
    "THETA_DEFAULT",
]

B4D_DEFAULT = 36.0
THETA_DEFAULT = 0.5
SUP_GRID_POINTS = 10 ** 6
SOFT_HARD_BETA = 0.25


def _exp(x: float) -> float:
    if x > 709.78:
        return math.inf
    return math.exp(x)


def _log(x: float) -> float:
    return math.log(x) if x > 0 else -math.inf


def _logaddexp(*xs) -> float:
    return float(np.logaddexp.reduce(np.array(xs, dtype=float)))


@dataclass(frozen=True)
class TheoryConstants:
    c_m: float
    b_g: float
    a_r4: float
    kappa: float
    k_bd: float
    c_bd: float
    b4d: float
    mu4: float
    a_lyap: float
    b_lyap: float
    c_d: float
    horizon: float
    log_c_m: float
    log_b_g: float
    log_a_r4: float
    log_kappa: float
    log_k_bd: float
    log_c_bd: float
    log_log_c_bd: float
    overflow: tuple = ()

    def as_dict(self) -> dict:
        return asdict(self)


def theory_constants(params: AlgorithmParams, objective: ObjectiveSpec, horizon_T: float,
                     b4d: float = B4D_DEFAULT, mu4: float = 1.0) -> TheoryConstants:
    """Closed-form constants for one parameter tuple.

    ``a_r4`` uses ``R4 = mu4``. ``kappa`` is ``nan`` in hard mode.

    Raises
    ------
    ConfigError
        The objective declares no bounds.
    """
    if objective.bounds is None:
        raise ConfigError("theory constants need declared objective bounds")
    if not horizon_T > 0 or not b4d > 0 or not mu4 >= 0:
        raise ConfigError("horizon and b4d must be positive, mu4 nonnegative")
    b = objective.bounds
    d = objective.dim
    al, be, lam, sig, T = params.alpha, params.beta, params.lam, params.sigma, horizon_T
    log_cm = consensus_moment_constant(al, be, b.g_min, b.g_max, log=True)
    log_bg = math.log(be) - al * b.g_max
    log_ar4 = 0.5 * math.log(be) - al * b.g_min + 0.25 * _log(mu4)
    if params.hard:
        log_kappa = kappa = math.nan
    else:
        st = kappa_bound(b.l_min, b.l_max, be, params.tau)
        kappa, log_kappa = st.kappa, st.log_kappa
    poly = lam ** 4 * T ** 3 + sig ** 4 * b4d * d * d * T
    # log(1 + C_m^4) without forming C_m^4
    log_kbd = math.log(216.0) + float(np.logaddexp(0.0, 4 * log_cm)) + _log(poly)
    k_bd = _exp(log_kbd)
    # log C_bd = log(54 mu4) + K_bd T overflows with K_bd; keep log log C_bd as well
    log_cbd = math.log(54.0) + _log(mu4) + (k_bd * T if math.isfinite(k_bd) else math.inf)
    log_log_cbd = (math.log(log_cbd) if math.isfinite(log_cbd) and log_cbd > 0
                   else log_kbd + math.log(T) if not math.isfinite(k_bd) else math.nan)
    c_bd = _exp(log_cbd)
    values = dict(c_m=_exp(log_cm), b_g=_exp(log_bg), a_r4=_exp(log_ar4), k_bd=k_bd, c_bd=c_bd)
    overflow = tuple(k for k, v in values.items() if math.isinf(v))
    return TheoryConstants(
        kappa=kappa, b4d=b4d, mu4=mu4,
        a_lyap=2 * lam - d * sig ** 2, b_lyap=math.sqrt(2) * (lam + d * sig ** 2), c_d=d * sig ** 2 / 2,
        horizon=T, log_c_m=log_cm, log_b_g=log_bg, log_a_r4=log_ar4, log_kappa=log_kappa,
        log_k_bd=log_kbd, log_c_bd=log_cbd, log_log_c_bd=log_log_cbd, overflow=overflow, **values,
    )


def hitting_time(v0: float, eps: float, lam: float, sigma: float, d: int,
                 theta: float = THETA_DEFAULT) -> float:
    """``T* = log(V(0)/eps) / ((1 - theta)(2 lam - d sigma^2))``."""
    a = 2 * lam - d * sigma ** 2
    if a <= 0:
        raise ConfigError("hitting time needs 2*lambda > d*sigma^2")
    if not (0 < theta < 1 and v0 > 0 and eps > 0):
        raise ConfigError("need theta in (0,1) and positive V(0), eps")
    return math.log(v0 / eps) / ((1 - theta) * a)


def beta_tau(m_bar: float, s_tau: float) -> float:
    """Quantile level ``m_bar * S_tau / 2`` from the convergence argument (not certified)."""
    return 0.5 * m_bar * s_tau


def alpha_tau(u: float, k: float, gamma_tau: float) -> float:
    """Inverse temperature ``log(K / Gamma_tau) / u`` from the convergence argument (not certified)."""
    return math.log(k / gamma_tau) / u


# --------------------------------------------------------------------- mass


def admissible_c(d: int, grid: int = 10 ** 4) -> float:
    """Smallest grid point ``c`` in (1/2, 1) with ``d (1-c)^2 <= c (2c - 1)``."""
    c = 0.5 + 0.5 * np.arange(1, grid + 1) / (grid + 1)
    ok = d * (1 - c) ** 2 <= c * (2 * c - 1)
    if not ok.any():
        raise ConstraintError(f"no admissible c on the grid for d={d}")
    return float(c[np.argmax(ok)])


def bump(x, center, r: float) -> np.ndarray:
    """``exp(1 - r^2/(r^2 - |x - center|^2))`` inside the ball, 0 outside."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    s2 = np.sum((x - np.asarray(center, dtype=float)) ** 2, axis=1)
    out = np.zeros(len(x))
    inside = s2 < r * r
    out[inside] = np.exp(1 - r * r / (r * r - s2[inside]))
    return out


def mass_bound_b0(log_c_m: float, c_mf4: float, theta_star) -> float:
    """``log B0`` with ``B0 = C_m C_mf4^{1/4} + |theta*|``."""
    return _logaddexp(log_c_m + 0.25 * _log(c_mf4), _log(float(np.linalg.norm(theta_star))))


@dataclass(frozen=True)
class MassBoundReport:
    r: float
    c: float
    b0: float
    k1: float
    k2: float
    p: float
    initial_bump_mass: float
    times: np.ndarray
    lower_bound: np.ndarray
    measured: np.ndarray
    held: bool
    n_particles: int
    log_b0: float
    log_p: float


def mass_bound_check(trajectory: Sequence[np.ndarray], theta_star, r: float,
                     params: AlgorithmParams, b0: Optional[float] = None,
                     log_b0: Optional[float] = None, times=None) -> MassBoundReport:
    """Compare the ball mass around ``theta_star`` with ``e^{-pt}`` times the initial bump mass.

    ``trajectory[0]`` is the initial ensemble. ``times`` defaults to
    ``k * dt``. ``B0`` may be given directly or as a logarithm.
    """
    if not r > 0:
        raise DomainError("ball radius must be positive")
    if (b0 is None) == (log_b0 is None):
        raise ConfigError("give exactly one of b0 and log_b0")
    if log_b0 is None:
        log_b0 = _log(b0)
    ts = np.asarray(theta_star, dtype=float)
    d = ts.size
    c = admissible_c(d)
    lam, sig = params.lam, params.sigma
    lr = math.log(r)
    l1mc = math.log(1 - c)
    # K1 first term: 2 lam (c r + B0 sqrt c) / ((1-c)^2 r)
    t1 = math.log(2 * lam) + _logaddexp(math.log(c) + lr, log_b0 + 0.5 * math.log(c)) - 2 * l1mc - lr
    if sig > 0:
        t2 = (math.log(2 * sig * sig) + _logaddexp(math.log(c) + 2 * lr, 2 * log_b0)
              + math.log(2 * c + d) - 4 * l1mc - 2 * lr)
        log_k1 = _logaddexp(t1, t2)
        log_k2 = 2 * math.log(lam) - 2 * math.log(sig) - math.log(c * (2 * c - 1))
    else:
        log_k1 = t1
        log_k2 = math.inf
    log_p = math.log(2.0) + max(log_k1, log_k2)
    p = _exp(log_p)
    if times is None:
        times = np.arange(len(trajectory)) * params.dt
    times = np.asarray(times, dtype=float)
    bump0 = float(np.mean(bump(trajectory[0], ts, r)))
    measured = np.array([float(np.mean(np.linalg.norm(x - ts, axis=1) < r)) for x in trajectory])
    with np.errstate(over="ignore", invalid="ignore"):
        decay = np.where(times > 0, -p * times, 0.0)
    lower = bump0 * np.exp(decay)
    held = bool(np.all(measured >= lower))
    return MassBoundReport(r=r, c=c, b0=_exp(log_b0), k1=_exp(log_k1), k2=_exp(log_k2), p=p,
                           initial_bump_mass=bump0, times=times, lower_bound=lower,
                           measured=measured, held=held, n_particles=len(trajectory[0]),
                           log_b0=log_b0, log_p=log_p)


# ------------------------------------------------------------------ laplace


@dataclass(frozen=True)
class LaplaceBoundReport:
    status: str
    reason: str
    c_in: float
    c_out: float
    term_geometry: float
    term_leak_in: float
    term_leak_out: float
    bound: float
    actual: float
    local_mass: float
    v: float
    g_tilde_r: float
    delta_r: float
    q: float
    sup_method: str
    hypotheses: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return self.status == "pass"


def _ball_sup(fn, center: np.ndarray, r: float, ensemble: Ensemble) -> tuple:
    d = center.size
    if d <= 3:
        side = int(round(SUP_GRID_POINTS ** (1.0 / d)))
        axes = [np.linspace(-r, r, side)] * d
        pts = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, d)
        pts = pts[np.sum(pts * pts, axis=1) < r * r] + center
        method = f"grid({side}^{d})"
    else:
        x = ensemble.positions
        pts = x[np.linalg.norm(x - center, axis=1) < r]
        method = f"particles({len(pts)})"
    pts = np.vstack([center[None], pts])
    return float(np.max(fn(pts))), method


def laplace_bound_check(ensemble: Ensemble, params: AlgorithmParams, objective: ObjectiveSpec,
                        selector: Selector = SIGMOID) -> LaplaceBoundReport:
    """Evaluate the three-term bound on ``|m - theta*|`` for one ensemble.

    Suprema over ``B_r(theta*)`` come from a dense grid for ``d <= 3`` and
    from the particles inside the ball otherwise. The leading ``r_G`` is
    replaced by ``|theta_tilde - theta*|`` when the latter is larger. The
    status is ``skipped`` when a hypothesis fails or an input is missing,
    and ``pass``/``fail`` otherwise.
    """
    geo = objective.geometry
    nan = math.nan

    def skipped(reason, **kw):
        base = dict(c_in=nan, c_out=nan, term_geometry=nan, term_leak_in=nan, term_leak_out=nan,
                    bound=nan, actual=nan, local_mass=nan, v=nan, g_tilde_r=nan, delta_r=nan,
                    q=nan, sup_method="none")
        base.update(kw)
        return LaplaceBoundReport(status="skipped", reason=reason, **base)

    if geo is None:
        return skipped("no geometry constants")
    if objective.theta_star is None or objective.bounds is None:
        return skipped("objective needs theta_star and bounds")
    if geo.theta_tilde is None:
        return skipped("geometry constants lack theta_tilde")
    if params.hard:
        return skipped("hard mode has no selector temperature")
    l_lip = geo.lipschitz_L_local
    if l_lip is None:
        if objective.lipschitz is None:
            return skipped("no Lipschitz constant for L")
        l_lip = objective.lipschitz[0]
    ensemble.require_fresh()
    ts = objective.theta_star
    tilde = np.asarray(geo.theta_tilde, dtype=float)
    bnd = objective.bounds
    x = ensemble.positions
    r, r_g, tau, al, be = geo.r, geo.r_G, params.tau, params.alpha, params.beta
    report = compute_consensus(ensemble, params, selector)
    actual = float(np.linalg.norm(report.m - ts))
    q = report.q
    dist = np.linalg.norm(x - ts, axis=1)
    local_mass = float(np.mean(dist < r))
    v = 0.5 * float(np.mean(dist ** 2))
    g_sup, method = _ball_sup(objective.eval_upper, ts, r, ensemble)
    g_tilde_val = float(objective.eval_upper(tilde[None])[0])
    g_tilde_r = g_sup - g_tilde_val
    delta_r = g_sup - bnd.g_min
    level = bnd.l_min + min(geo.L_inf, (geo.eta_L * r_g) ** (1.0 / geo.nu_L))
    hyp = {
        "level": q + geo.delta_lev <= level,
        "gap": geo.u + g_tilde_r <= geo.G_inf,
        "local_mass": local_mass > 0,
    }
    common = dict(actual=actual, local_mass=local_mass, v=v, g_tilde_r=g_tilde_r, delta_r=delta_r,
                  q=q, sup_method=method, hypotheses=hyp)
    failed = [k for k, ok in hyp.items() if not ok]
    if failed:
        return skipped("hypothesis violated: " + ", ".join(failed), **common)
    log_cin = float(special.log_expit((q - bnd.l_min - l_lip * r) / tau))
    log_cout = float(special.log_expit(-geo.delta_lev / tau))
    log_mass = math.log(local_mass)
    root = math.sqrt(2 * v)
    lead = max(r_g, float(np.linalg.norm(tilde - ts)))
    term_geo = (geo.u + max(g_tilde_r, 0.0)) ** geo.nu_G / geo.eta_G
    term_in = _exp(-al * geo.u - log_cin - log_mass + _log(root + be * r_g))
    term_out = _exp(al * delta_r + log_cout - log_cin - log_mass + _log(root + r_g))
    bound = lead + term_geo + term_in + term_out
    status = "pass" if actual <= bound else "fail"
    return LaplaceBoundReport(status=status, reason="", c_in=_exp(log_cin), c_out=_exp(log_cout),
                              term_geometry=term_geo, term_leak_in=term_in, term_leak_out=term_out,
                              bound=bound, **common)


# -------------------------------------------------------------------- decay


class DecayFit(NamedTuple):
    fitted_rate: float
    target_rate: float
    theta: float = THETA_DEFAULT

    @property
    def informative(self) -> bool:
        return self.target_rate > 0

    @property
    def passed(self) -> bool:
        return self.fitted_rate >= self.target_rate


def decay_rate_fit(metrics, window: Optional[tuple] = None, theta: float = THETA_DEFAULT) -> DecayFit:
    """Least-squares rate of ``log v_hat`` against ``t`` over a step window.

    ``window = (k0, k1)`` selects recorded steps ``k0 <= k <= k1``; the
    default is the whole series. The target is ``(1 - theta)(2 lam - d sigma^2)``.

    Raises
    ------
    DomainError
        Some ``v_hat`` in the window is not positive, or fewer than two points.
    """
    step = np.asarray(metrics["step"])
    t = np.asarray(metrics["t"], dtype=float)
    v = np.asarray(metrics["v_hat"], dtype=float)
    if window is not None:
        sel = (step >= window[0]) & (step <= window[1])
        t, v = t[sel], v[sel]
    if len(v) < 2:
        raise DomainError("decay fit needs at least two points")
    if np.any(v <= 0):
        raise DomainError("v_hat must be positive on the fit window")
    y = np.log(v)
    tc = t - t.mean()
    # slope on y - y[0] so a flat series gives exactly zero
    slope = float(np.sum(tc * (y - y[0])) / np.sum(tc * tc))
    p = metrics.params
    target = (1 - theta) * (2 * p.lam - metrics.dim * p.sigma ** 2)
    return DecayFit(-slope if slope != 0 else 0.0, target, theta)


# ------------------------------------------------------------------- cutoff


class CutoffReport(NamedTuple):
    x_series: np.ndarray
    omega_m_held: bool
    markov_bound: float
    log_markov_bound: float


def cutoff_monitor(trajectory: Sequence[np.ndarray], M: float, reference: Optional[Sequence[np.ndarray]] = None,
                   log_c_bd: Optional[float] = None) -> CutoffReport:
    """Running fourth-moment functional ``X_t`` and the cutoff event ``max_t X_t <= M``.

    With a ``reference`` trajectory (a larger run sharing seed and noise),
    its first ``N`` rows stand in for the coupled mean-field copies.
    ``markov_bound`` is ``min(1, C_bd / M)`` and ``nan`` without ``log_c_bd``.
    """
    xs = []
    for k, x in enumerate(trajectory):
        r4 = np.sum(x * x, axis=1) ** 2
        if reference is not None:
            y = reference[k][: len(x)]
            r4 = np.maximum(r4, np.sum(y * y, axis=1) ** 2)
        xs.append(float(np.mean(r4)))
    xs = np.array(xs)
    held = bool(M == math.inf or xs.max(initial=0.0) <= M)
    if log_c_bd is None:
        return CutoffReport(xs, held, math.nan, math.nan)
    log_mb = 0.0 if M <= 0 else min(0.0, log_c_bd - math.log(M)) if M < math.inf else -math.inf
    return CutoffReport(xs, held, _exp(log_mb), log_mb)


# ------------------------------------------------------------------- suites


@dataclass(frozen=True)
class CheckRecord:
    name: str
    statement: str
    lhs: float
    rhs: float
    verdict: str
    detail: str = ""


def random_l_values(rng: np.random.Generator, n: int) -> np.ndarray:
    """Uniform or clustered lower-objective samples on [0, 1]."""
    if rng.random() < 0.5:
        return rng.random(n)
    centres = rng.random(rng.integers(1, 4))
    return np.clip(centres[rng.integers(0, len(centres), n)] + 1e-3 * rng.standard_normal(n), 0, 1)


def quantile_suite(n_instances: int = 1000, seed: int = 0) -> list:
    """Residual, localisation, mass identity and inverse stability on random instances."""
    rng = np.random.default_rng(seed)
    worst = dict(residual=0.0, localization=-math.inf, mass=0.0, stability=-math.inf)
    for _ in range(n_instances):
        n = int(rng.integers(1, 501))
        l = random_l_values(rng, n)
        beta = float(rng.uniform(0.01, 0.99))
        tau = float(10 ** rng.uniform(-4, 0))
        sol = soft_quantile(l, beta, tau)
        zb = float(SIGMOID.inverse(beta))
        worst["residual"] = max(worst["residual"], sol.residual)
        worst["localization"] = max(worst["localization"],
                                    float(l.min() + tau * zb - sol.q),
                                    float(sol.q - (l.max() + tau * zb)))
        eta = SIGMOID(sol.z(l, tau))
        worst["mass"] = max(worst["mass"], abs(float(np.mean(eta)) - beta))
        other = random_l_values(rng, int(rng.integers(1, 501)))
        lhs, rhs = inverse_stability_slack(l, other, beta, tau)
        worst["stability"] = max(worst["stability"], lhs - rhs * (1 + 1e-8))
    return [
        CheckRecord("quantile-residual", "|H(q) - beta| <= 1e-12", worst["residual"], 1e-12,
                    "pass" if worst["residual"] <= 1e-12 else "fail"),
        CheckRecord("quantile-localization", "min L + tau z <= q <= max L + tau z",
                    worst["localization"], 0.0, "pass" if worst["localization"] <= 0 else "fail"),
        CheckRecord("quantile-mass", "|mean(eta) - beta| <= 1e-10", worst["mass"], 1e-10,
                    "pass" if worst["mass"] <= 1e-10 else "fail"),
        CheckRecord("quantile-inverse-stability", "|q_mu - q_nu| <= |F_mu(q_nu)|/kappa",
                    worst["stability"], 0.0, "pass" if worst["stability"] <= 0 else "fail"),
    ]


def consensus_moment_suite(n_instances: int = 1000, seed: int = 0) -> list:
    """``|m|^4 <= C_m^4 R4`` on random ensembles with G clipped to [0, 10]."""
    rng = np.random.default_rng(seed)
    worst = -math.inf
    for _ in range(n_instances):
        n = int(rng.integers(1, 200))
        d = int(rng.integers(1, 5))
        x = rng.standard_normal((n, d)) * 10 ** rng.uniform(-2, 2) + rng.standard_normal(d)
        g = np.clip(rng.uniform(-2, 12, n), 0, 10)
        ens = Ensemble.from_values(x, rng.random(n), g)
        params = AlgorithmParams.from_xi(float(10 ** rng.uniform(1, 4)), alpha=30.0, beta=0.05,
                                         lam=1.0, sigma=1.0, dt=0.1, steps=1, n_particles=n)
        rep = compute_consensus(ens, params)
        log_lhs = 4 * float(log_norms(rep.m)[0])
        log_rhs = 4 * consensus_moment_constant(30.0, 0.05, 0.0, 10.0, log=True) + log_fourth_moment(x)
        worst = max(worst, log_lhs - log_rhs)
    return [CheckRecord("consensus-moment", "log|m|^4 - log(C_m^4 R4) <= 0", worst, 0.0,
                        "pass" if worst <= 0 else "fail")]


def soft_hard_suite(n_instances: int = 50, seed: int = 0, beta: float = SOFT_HARD_BETA) -> list:
    """Soft consensus approaches the hard one as tau decreases through 1e-1 .. 1e-6.

    ``beta * N`` must be an integer in floating point, not just in exact arithmetic.
    Otherwise the boundary particle's soft weight tends to the fractional
    part of ``beta * N`` instead of 1 and the two points stay apart; with
    ``beta = 0.3`` that residue is ~1e-16 and the gap climbs towards it. A
    dyadic ``beta`` and ``N`` a multiple of its denominator avoid this.
    """
    denom = Fraction(beta).denominator
    if denom > 64:
        raise DomainError("beta must be a dyadic fraction k/2^j with 2^j <= 64")
    rng = np.random.default_rng(seed)
    worst_end, monotone = 0.0, True
    for _ in range(n_instances):
        n = denom * int(rng.integers(1, 50))
        x = rng.standard_normal((n, 2))
        # distinct values spaced at least 2 apart; with spacing near tau the
        # sub-ulp selector tails can still flip the last bit of m at tau=1e-3
        l = rng.permutation(np.cumsum(rng.uniform(2.0, 4.0, n)))
        ens = Ensemble.from_values(x, l, rng.random(n))
        m_hard = hard_consensus_point(ens, 1.0, beta).m
        gaps = []
        for k in range(1, 7):
            p = AlgorithmParams(alpha=1.0, beta=beta, tau=10.0 ** -k, lam=1.0, sigma=1.0, dt=0.1,
                                steps=1, n_particles=n)
            gaps.append(float(np.linalg.norm(compute_consensus(ens, p).m - m_hard)))
        monotone &= all(b <= a for a, b in zip(gaps, gaps[1:]))
        worst_end = max(worst_end, gaps[-1])
    verdict = "pass" if monotone and worst_end <= 1e-6 else "fail"
    return [CheckRecord("soft-hard-limit", "|m_soft(1e-6) - m_hard| <= 1e-6, nonincreasing in k",
                        worst_end, 1e-6, verdict, "" if monotone else "not monotone")]


def write_check_report(records: Sequence[CheckRecord], path, fmt: str = "json") -> None:
    """One record per line: JSON objects, or CSV with a header."""
    rows = [asdict(r) for r in records]
    with open(path, "w", encoding="utf-8") as fh:
        if fmt == "json":
            for row in rows:
                fh.write(json.dumps(row, allow_nan=True) + "\n")
        elif fmt == "csv":
            fh.write("name,statement,lhs,rhs,verdict,detail\n")
            for row in rows:
                fh.write(",".join(f'"{row[k]}"' if k in ("statement", "detail") else str(row[k])
                                  for k in ("name", "statement", "lhs", "rhs", "verdict", "detail")) + "\n")
        else:
            raise ConfigError(f"unknown report format {fmt!r}")


def assert_records(records: Sequence[CheckRecord]) -> None:
    bad = [r.name for r in records if r.verdict == "fail"]
    if bad:
        raise InvariantError("failed checks: " + ", ".join(bad))
