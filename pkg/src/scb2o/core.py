"""Shared domain types, the selector family and objective plumbing."""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Callable, Optional, Sequence

import numpy as np
from scipy import special

from .errors import ConfigError, DomainError

__all__ = [
    "AlgorithmParams",
    "Ensemble",
    "GeometryConstants",
    "ObjectiveBounds",
    "ObjectiveSpec",
    "Selector",
    "Sigmoid",
    "SIGMOID",
    "clip_objective",
    "sigmoid_selector",
    "chunked_map",
    "CHUNK_ROWS",
]

# Row blocks handed to worker threads. Fixed so results never depend on the
# worker count.
CHUNK_ROWS = 512


class Selector:
    """Smooth, strictly increasing surrogate of the unit step.

    Subclasses provide the value, its derivative, the logarithm of the
    derivative and the inverse. All methods accept scalars or arrays.
    """

    def __call__(self, z):
        raise NotImplementedError

    def derivative(self, z):
        raise NotImplementedError

    def complement(self, z):
        """``1 - s(z)``; override when it can be formed without cancellation."""
        return 1.0 - np.asarray(self(z), dtype=float)

    def log_derivative(self, z):
        raise NotImplementedError

    def inverse(self, p):
        raise NotImplementedError


class Sigmoid(Selector):
    """The logistic function ``1 / (1 + exp(-z))``.

    Satisfies the left-tail bounds ``exp(-z)/2 <= s(-z) <= exp(-z)`` for
    ``z >= 0``.
    """

    tail_upper = 1.0
    tail_lower = 0.5

    def __call__(self, z):
        z = np.asarray(z, dtype=float)
        # branch on the sign so exp never sees a large positive argument
        e = np.exp(-np.abs(z))
        out = np.where(z >= 0, 1.0 / (1.0 + e), e / (1.0 + e))
        return out[()] if out.ndim == 0 else out

    def complement(self, z):
        return self(-np.asarray(z, dtype=float))

    def derivative(self, z):
        z = np.asarray(z, dtype=float)
        e = np.exp(-np.abs(z))
        out = e / (1.0 + e) ** 2
        return out[()] if out.ndim == 0 else out

    def log_derivative(self, z):
        z = np.asarray(z, dtype=float)
        out = -np.abs(z) - 2.0 * np.log1p(np.exp(-np.abs(z)))
        return out[()] if out.ndim == 0 else out

    def log_value(self, z):
        out = special.log_expit(np.asarray(z, dtype=float))
        return out[()] if np.ndim(out) == 0 else out

    def inverse(self, p):
        p = np.asarray(p, dtype=float)
        if np.any((p <= 0) | (p >= 1)):
            raise DomainError("selector inverse needs p in (0, 1)")
        out = special.logit(p)
        return out[()] if out.ndim == 0 else out


SIGMOID = Sigmoid()


def sigmoid_selector(z, derivative: bool = False):
    """Evaluate the sigmoid selector, optionally with ``s'(z)``.

    Raises
    ------
    DomainError
        If any input is not finite.
    """
    arr = np.asarray(z, dtype=float)
    if not np.all(np.isfinite(arr)):
        raise DomainError("selector input must be finite")
    value = SIGMOID(arr)
    if derivative:
        return value, SIGMOID.derivative(arr)
    return value


def clip_objective(value, cap=None):
    """Cap an objective value from above; identity when ``cap`` is None."""
    if cap is None:
        return value
    if isinstance(value, np.ndarray):
        return np.minimum(value, cap)
    return min(value, cap)


def _exact_ceil(beta: float, n: int) -> int:
    from fractions import Fraction

    # repr gives the shortest decimal, so 0.05 is read as 1/20 and not the
    # binary float slightly above it
    return math.ceil(Fraction(repr(float(beta))) * n)


@dataclass(frozen=True)
class AlgorithmParams:
    """Parameters governing one run; ``tau == 0`` selects hard mode."""

    alpha: float
    beta: float
    tau: float
    lam: float
    sigma: float
    dt: float
    steps: int
    n_particles: int

    def __post_init__(self):
        for name in ("alpha", "beta", "tau", "lam", "sigma", "dt"):
            v = getattr(self, name)
            if not isinstance(v, (int, float)) or not math.isfinite(v):
                raise ConfigError(f"{name} must be a finite real")
        if self.alpha <= 0:
            raise ConfigError("alpha must be positive")
        if not 0 < self.beta < 1:
            raise ConfigError("beta out of (0,1)")
        if self.tau < 0:
            raise ConfigError("tau must be nonnegative")
        if self.lam <= 0:
            raise ConfigError("lambda must be positive")
        if self.sigma < 0:
            raise ConfigError("sigma must be nonnegative")
        if self.dt <= 0:
            raise ConfigError("dt must be positive")
        if int(self.steps) != self.steps or self.steps < 1:
            raise ConfigError("steps must be a positive integer")
        if int(self.n_particles) != self.n_particles or self.n_particles < 1:
            raise ConfigError("n_particles must be a positive integer")

    @classmethod
    def from_xi(cls, xi: Optional[float], alpha: float, **kw) -> "AlgorithmParams":
        """Build parameters from the sharpness ``xi = 1/(tau*alpha)``.

        ``xi=None`` or ``inf`` gives hard mode (``tau = 0``).
        """
        if xi is None or math.isinf(xi):
            return cls(alpha=alpha, tau=0.0, **kw)
        if xi <= 0:
            raise ConfigError("xi must be positive")
        return cls(alpha=alpha, tau=1.0 / (xi * alpha), **kw)

    @property
    def hard(self) -> bool:
        return self.tau == 0

    @property
    def xi(self) -> float:
        return math.inf if self.tau == 0 else 1.0 / (self.tau * self.alpha)

    @property
    def horizon(self) -> float:
        return self.steps * self.dt

    @property
    def n_selected(self) -> int:
        """Number of particles kept by the hard rule, ``ceil(beta*N)``."""
        return _exact_ceil(self.beta, self.n_particles)

    def replace(self, **changes) -> "AlgorithmParams":
        return replace(self, **changes)


@dataclass(frozen=True)
class ObjectiveBounds:
    l_min: float
    l_max: float
    g_min: float
    g_max: float


@dataclass(frozen=True)
class GeometryConstants:
    """Growth and neighbourhood constants used by the Laplace-bound check."""

    eta_L: float
    nu_L: float
    L_inf: float
    eta_G: float
    nu_G: float
    G_inf: float
    r_G: float
    R_G: float
    r: float
    u: float
    delta_lev: float
    theta_tilde: Optional[tuple] = None
    lipschitz_L_local: Optional[float] = None
    theta_tilde_distance: Optional[float] = None

    def __post_init__(self):
        for name in ("eta_L", "nu_L", "L_inf", "eta_G", "nu_G", "G_inf",
                     "r_G", "R_G", "r", "u", "delta_lev"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"geometry constant {name} must be positive")
        if not self.r <= self.r_G <= self.R_G:
            raise ConfigError("geometry needs r <= r_G <= R_G")


Vectorized = Callable[[np.ndarray], np.ndarray]


@dataclass(frozen=True)
class ObjectiveSpec:
    """A bi-level problem: lower objective ``L`` and upper objective ``G``.

    Both callables take an ``(n, d)`` array and return ``(n,)`` values.
    When ``bounds`` is present, evaluations are capped at ``l_max``/``g_max``.
    """

    lower: Vectorized
    upper: Vectorized
    dim: int
    theta_star: Optional[np.ndarray] = None
    bounds: Optional[ObjectiveBounds] = None
    lipschitz: Optional[tuple] = None
    geometry: Optional[GeometryConstants] = None
    name: str = "custom"
    lower_grad: Optional[Vectorized] = None
    upper_grad: Optional[Vectorized] = None
    distance: Optional[Vectorized] = None

    def __post_init__(self):
        if self.dim < 1:
            raise ConfigError("objective dimension must be positive")
        if self.theta_star is not None:
            ts = np.asarray(self.theta_star, dtype=float)
            if ts.shape != (self.dim,):
                raise ConfigError("theta_star has the wrong shape")
            object.__setattr__(self, "theta_star", ts)

    def eval_lower(self, x):
        x = np.atleast_2d(np.asarray(x, dtype=float))
        # far-out points may overflow to inf; the cap handles that
        with np.errstate(over="ignore"):
            v = np.asarray(self.lower(x), dtype=float)
        return clip_objective(v, self.bounds.l_max if self.bounds else None)

    def eval_upper(self, x):
        x = np.atleast_2d(np.asarray(x, dtype=float))
        # far-out points may overflow to inf; the cap handles that
        with np.errstate(over="ignore"):
            v = np.asarray(self.upper(x), dtype=float)
        return clip_objective(v, self.bounds.g_max if self.bounds else None)

    def solution_distance(self, x):
        """Distance of points to the reference solution (or solution set)."""
        x = np.atleast_2d(np.asarray(x, dtype=float))
        if self.distance is not None:
            return np.asarray(self.distance(x), dtype=float)
        if self.theta_star is None:
            return np.full(len(x), np.nan)
        return np.linalg.norm(x - self.theta_star, axis=1)

    @classmethod
    def from_pointwise(cls, lower, upper, dim, **kw) -> "ObjectiveSpec":
        """Wrap scalar functions of one point into row-wise evaluators."""

        def rows(fn):
            return lambda x: np.array([fn(p) for p in x], dtype=float)

        return cls(lower=rows(lower), upper=rows(upper), dim=dim, **kw)


def chunked_map(fn, x: np.ndarray, workers: int = 1) -> np.ndarray:
    """Apply a row-wise function over fixed-size row blocks, possibly threaded.

    Block boundaries do not depend on ``workers``, so the output is identical
    for any worker count.
    """
    n = len(x)
    if n <= CHUNK_ROWS:
        return fn(x)
    blocks = [x[i:i + CHUNK_ROWS] for i in range(0, n, CHUNK_ROWS)]
    if workers <= 1:
        parts = [fn(b) for b in blocks]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(fn, blocks))
    return np.concatenate(parts)


@dataclass
class Ensemble:
    """Particle positions with cached lower/upper objective values."""

    positions: np.ndarray
    l_values: Optional[np.ndarray] = None
    g_values: Optional[np.ndarray] = None
    step_index: int = 0
    fresh: bool = field(default=False)

    def __post_init__(self):
        pos = np.array(self.positions, dtype=float)
        if pos.ndim == 1:
            pos = pos[:, None]
        if pos.ndim != 2 or len(pos) == 0:
            raise DomainError("positions must be a non-empty (N, d) array")
        if not np.all(np.isfinite(pos)):
            raise DomainError("positions must be finite")
        self.positions = pos
        if self.l_values is not None:
            self.l_values = np.asarray(self.l_values, dtype=float)
        if self.g_values is not None:
            self.g_values = np.asarray(self.g_values, dtype=float)
        self.fresh = self.l_values is not None and self.g_values is not None

    @property
    def n(self) -> int:
        return self.positions.shape[0]

    @property
    def dim(self) -> int:
        return self.positions.shape[1]

    def refresh(self, objective: ObjectiveSpec, workers: int = 1) -> "Ensemble":
        self.l_values = chunked_map(objective.eval_lower, self.positions, workers)
        self.g_values = chunked_map(objective.eval_upper, self.positions, workers)
        if not (np.all(np.isfinite(self.l_values)) and np.all(np.isfinite(self.g_values))):
            bad = int(np.flatnonzero(~(np.isfinite(self.l_values) & np.isfinite(self.g_values)))[0])
            raise DomainError(f"objective is not finite at particle {bad}")
        self.fresh = True
        return self

    def moved(self, positions: np.ndarray) -> "Ensemble":
        """New ensemble at ``positions`` with stale caches and step + 1."""
        return Ensemble(positions, step_index=self.step_index + 1)

    def require_fresh(self):
        if not self.fresh:
            raise DomainError("ensemble caches are stale; call refresh()")

    @classmethod
    def from_values(cls, positions, l_values: Sequence[float], g_values: Sequence[float]) -> "Ensemble":
        return cls(np.asarray(positions, dtype=float), np.asarray(l_values, dtype=float),
                   np.asarray(g_values, dtype=float))
