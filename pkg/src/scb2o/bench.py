"""Benchmark objectives, gradient baselines and experiment metrics."""

from __future__ import annotations

import json
import math
from importlib import resources
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, Dict, Optional, Sequence

import numpy as np
from scipy import optimize, special

from .core import AlgorithmParams, GeometryConstants, ObjectiveBounds, ObjectiveSpec
from .errors import ConfigError, DomainError

__all__ = [
    "ACKLEY_SHIFT",
    "BenchmarkInstance",
    "Box",
    "ackley_shifted",
    "circle_lower",
    "star_lower",
    "rippled_lower",
    "rippled_lower_grad",
    "upper_f",
    "upper_f_grad",
    "lattice_distance",
    "sbgd_step",
    "vpbgd_step",
    "run_gradient_baseline",
    "particle_spread",
    "get_benchmark",
    "register_benchmark",
    "benchmark_names",
]

ACKLEY_SHIFT = np.array([0.5, 1.0 / 3.0])
ACKLEY_A, ACKLEY_a, ACKLEY_b = 20.0, 0.2, 3.0
# sup of the shifted Ackley function: far away the first term vanishes and
# the cosine term is at least exp(-1)
ACKLEY_SUP = ACKLEY_A + math.e - math.exp(-1.0)
L_CAP = 1.0e4


def _rows(x):
    x = np.asarray(x, dtype=float)
    return x[None, :] if x.ndim == 1 else x


def _out(v, x):
    return float(v[0]) if np.ndim(x) == 1 else v


def ackley_shifted(x, shift=ACKLEY_SHIFT, A=ACKLEY_A, a=ACKLEY_a, b=ACKLEY_b):
    """Shifted Ackley function; accepts one point or an ``(n, d)`` array."""
    p = _rows(x)
    d = p.shape[1]
    z = p - np.asarray(shift, dtype=float)
    radial = -A * np.exp(-a * math.sqrt(b * b / d) * np.linalg.norm(z, axis=1))
    ripple = -np.exp(np.mean(np.cos(2 * math.pi * b * z), axis=1))
    return _out(radial + ripple + A + math.e, x)


def circle_lower(x):
    """Squared unit-circle constraint ``(x1^2 + x2^2 - 1)^2``."""
    p = _rows(x)
    h = np.sum(p * p, axis=1) - 1.0
    return _out(h * h, x)


def star_lower(x):
    """Squared star constraint ``(r - (1 + 0.5 sin 5 phi)^2)^2``.

    ``r = x1^2 + x2^2``; ``phi`` is the polar angle, taken as 0 at the origin.
    """
    p = _rows(x)
    r = np.sum(p * p, axis=1)
    phi = np.arctan2(p[:, 1], p[:, 0])
    h = r - (1.0 + 0.5 * np.sin(5.0 * phi)) ** 2
    return _out(h * h, x)


def rippled_lower(x):
    p = _rows(x)
    s1 = np.sin(p) ** 2
    s3 = np.sin(3.0 * p) ** 2
    return _out(s1[:, 0] + s1[:, 1] + 0.5 * (s3[:, 0] + s3[:, 1]), x)


def rippled_lower_grad(x):
    p = np.asarray(x, dtype=float)
    return np.sin(2.0 * p) + 1.5 * np.sin(6.0 * p)


def lattice_distance(x):
    """Euclidean distance to the lattice ``pi * Z^2``."""
    p = _rows(x)
    return _out(np.linalg.norm(p - math.pi * np.round(p / math.pi), axis=1), x)


def upper_f(x):
    """``cos(4y+2)/(1+e^{2-4x}) + ln((4x-2)^2 + 1)/2``."""
    p = _rows(x)
    u, v = p[:, 0], p[:, 1]
    # expit(4x-2) == 1/(1+e^{2-4x}) without overflow for very negative x
    val = np.cos(4 * v + 2) * special.expit(4 * u - 2) + 0.5 * np.log1p((4 * u - 2) ** 2)
    return _out(val, x)


def upper_f_grad(x):
    p = np.asarray(x, dtype=float)
    u, v = p[..., 0], p[..., 1]
    sig = special.expit(4 * u - 2)
    # 4 e^{2-4x}/(1+e^{2-4x})^2 == 4 sig (1 - sig)
    dx = 4 * sig * special.expit(2 - 4 * u) * np.cos(4 * v + 2) + 4 * (4 * u - 2) / ((4 * u - 2) ** 2 + 1)
    dy = -4 * np.sin(4 * v + 2) * sig
    return np.stack([dx, dy], axis=-1)


@dataclass(frozen=True)
class Box:
    """Axis-aligned box used as the projection set of the baselines."""

    lo: np.ndarray
    hi: np.ndarray

    def __call__(self, x):
        return np.clip(x, self.lo, self.hi)


def _identity(x):
    return x


def sbgd_step(x, alpha: float, gamma: float, objective: ObjectiveSpec, projection=None):
    """One lower-level then one upper-level projected gradient step."""
    proj = projection or _identity
    x = np.asarray(x, dtype=float)
    half = proj(x - gamma * alpha * objective.lower_grad(x))
    return proj(half - alpha * objective.upper_grad(half))


def vpbgd_step(x, alpha: float, gamma: float, t_inner: int, objective: ObjectiveSpec,
               projection=None, lower_mask=None, inner_rate: Optional[float] = None):
    """Value-function penalised bi-level gradient step.

    ``lower_mask`` marks the coordinates playing the lower-level variable
    (default: the last one). The inner loop descends ``L`` in those
    coordinates only, at rate ``inner_rate`` (default ``gamma * alpha``).
    The value-function gradient is ``grad L`` at the inner iterate with the
    lower-level components zeroed.
    """
    if int(t_inner) != t_inner or t_inner < 1:
        raise ConfigError("t_inner must be a positive integer")
    proj = projection or _identity
    x = np.asarray(x, dtype=float)
    if lower_mask is None:
        lower_mask = np.zeros(x.shape[-1], dtype=bool)
        lower_mask[-1] = True
    lower_mask = np.asarray(lower_mask, dtype=bool)
    rate = gamma * alpha if inner_rate is None else inner_rate
    inner = x.copy()
    for _ in range(int(t_inner)):
        inner = inner - rate * np.where(lower_mask, objective.lower_grad(inner), 0.0)
    grad_v = np.where(lower_mask, 0.0, objective.lower_grad(inner))
    direction = objective.upper_grad(x) + gamma * objective.lower_grad(x) - gamma * grad_v
    return proj(x - alpha * direction)


def run_gradient_baseline(method: str, x0, objective: ObjectiveSpec, iterations: int,
                          alpha: float, gamma: float, t_inner: int = 10, projection=None):
    """Iterate ``sbgd1`` or ``vpbgd1``; returns the ``(iterations+1, d)`` path."""
    path = [np.asarray(x0, dtype=float)]
    x = path[0]
    for _ in range(iterations):
        if method == "sbgd1":
            x = sbgd_step(x, alpha, gamma, objective, projection)
        elif method == "vpbgd1":
            x = vpbgd_step(x, alpha, gamma, t_inner, objective, projection)
        else:
            raise ConfigError(f"unknown gradient method {method!r}")
        path.append(x)
    return np.array(path)


def particle_spread(positions) -> float:
    """Mean over coordinates of the across-particle population std."""
    x = np.asarray(positions, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    if x.shape[0] < 2:
        raise DomainError("spread needs at least two particles")
    return float(np.mean(np.std(x, axis=0)))


@dataclass(frozen=True)
class BenchmarkInstance:
    name: str
    objective: ObjectiveSpec
    reference_value: float
    default_params: AlgorithmParams
    default_seeds: tuple = (0, 1, 2, 3, 4)
    init: dict = field(default_factory=lambda: {"kind": "gaussian", "loc": 0.0, "scale": 50.0})
    tabulated_optimum: Optional[tuple] = None
    baseline: dict = field(default_factory=dict)

    @property
    def reference_optimum(self) -> np.ndarray:
        return self.objective.theta_star


def _curve_minimum(radius_fn) -> np.ndarray:
    """Minimise the Ackley function along a polar curve ``r(phi)``."""

    def point(phi):
        rho = radius_fn(phi)
        return np.stack([rho * np.cos(phi), rho * np.sin(phi)], axis=-1)

    grid = np.linspace(-math.pi, math.pi, 200001)
    g = ackley_shifted(point(grid))
    i = int(np.argmin(g))
    res = optimize.minimize_scalar(lambda p: ackley_shifted(point(np.array(p))),
                                   bounds=(grid[i - 2], grid[i + 2]), method="bounded",
                                   options={"xatol": 1e-13})
    return point(np.array(res.x))


@lru_cache(maxsize=None)
def _circle_optimum():
    return tuple(_curve_minimum(lambda p: np.ones_like(p)))


@lru_cache(maxsize=None)
def _star_optimum():
    return tuple(_curve_minimum(lambda p: 1.0 + 0.5 * np.sin(5.0 * p)))


REFERENCE_PARAMS = dict(alpha=30.0, beta=0.05, lam=1.0, sigma=1.0, dt=0.1, steps=600, n_particles=100)

def _circle_lipschitz():
    # |grad (|x|^2-1)^2| = 4 |x| |(|x|^2 - 1)|, largest where the cap starts
    rho = math.sqrt(1.0 + math.sqrt(L_CAP))
    return 4.0 * rho * math.sqrt(L_CAP)


def _make_circle():
    ts = np.array(_circle_optimum())
    objective = ObjectiveSpec(
        lower=circle_lower, upper=ackley_shifted, dim=2, theta_star=ts, name="circle",
        bounds=ObjectiveBounds(0.0, L_CAP, 0.0, ACKLEY_SUP),
        lipschitz=(_circle_lipschitz(), ACKLEY_A * ACKLEY_a * ACKLEY_b / math.sqrt(2) + math.pi * ACKLEY_b * math.e),
        geometry=_circle_geometry(),
    )
    return BenchmarkInstance("circle", objective, 4.003, AlgorithmParams.from_xi(1e4, **REFERENCE_PARAMS),
                             tabulated_optimum=(0.782, 0.624))


def _circle_geometry():
    # calibrated offline by scripts/calibrate_geometry.py
    path = resources.files("scb2o") / "fixtures" / "circle_geometry.json"
    if not path.is_file():
        return None
    data = json.loads(path.read_text())
    data["theta_tilde"] = tuple(data["theta_tilde"])
    return GeometryConstants(**data)


def _make_star():
    ts = np.array(_star_optimum())
    objective = ObjectiveSpec(
        lower=star_lower, upper=ackley_shifted, dim=2, theta_star=ts, name="star",
        bounds=ObjectiveBounds(0.0, L_CAP, 0.0, ACKLEY_SUP),
    )
    return BenchmarkInstance("star", objective, 2.777, AlgorithmParams.from_xi(1e4, **REFERENCE_PARAMS),
                             tabulated_optimum=(0.473, 0.464))


RIPPLED_F_CAP = 50.0


def _make_rippled():
    objective = ObjectiveSpec(
        lower=rippled_lower, upper=upper_f, dim=2, theta_star=np.zeros(2), name="rippled",
        bounds=ObjectiveBounds(0.0, 3.0, -1.0, RIPPLED_F_CAP),
        lower_grad=rippled_lower_grad, upper_grad=upper_f_grad, distance=lattice_distance,
    )
    params = AlgorithmParams.from_xi(1e4, **{**REFERENCE_PARAMS, "steps": 300})
    return BenchmarkInstance("rippled", objective, float(upper_f(np.zeros(2))), params,
                             default_seeds=(0, 1, 2),
                             baseline={"alpha": 0.05, "gamma": 10.0, "t_inner": 10})


BOWL_UPPER_CENTER = np.array([1.0, 0.5])
BOWL_CAP = 100.0


def bowl_lower(x):
    p = _rows(x)
    return _out(np.minimum(p[:, 1] ** 2, BOWL_CAP), x)


def bowl_upper(x):
    p = _rows(x)
    return _out(np.minimum(np.sum((p - BOWL_UPPER_CENTER) ** 2, axis=1), BOWL_CAP), x)


def _make_bowl():
    objective = ObjectiveSpec(
        lower=bowl_lower, upper=bowl_upper, dim=2, theta_star=np.array([1.0, 0.0]), name="bowl",
        bounds=ObjectiveBounds(0.0, BOWL_CAP, 0.0, BOWL_CAP),
        lipschitz=(2 * math.sqrt(BOWL_CAP), 2 * math.sqrt(BOWL_CAP)),
    )
    params = AlgorithmParams.from_xi(1e4, alpha=30.0, beta=0.1, lam=1.0, sigma=0.5, dt=0.01,
                                     steps=400, n_particles=400)
    return BenchmarkInstance("bowl", objective, 0.25, params,
                             init={"kind": "gaussian", "loc": 0.0, "scale": 2.0})


_REGISTRY: Dict[str, Callable[[], BenchmarkInstance]] = {
    "circle": _make_circle,
    "star": _make_star,
    "rippled": _make_rippled,
    "bowl": _make_bowl,
}


def register_benchmark(name: str, factory: Callable[[], BenchmarkInstance]) -> None:
    """Make a custom benchmark addressable by name (e.g. from the CLI)."""
    _REGISTRY[name] = factory


def benchmark_names() -> Sequence[str]:
    return sorted(_REGISTRY)


def get_benchmark(name: str) -> BenchmarkInstance:
    try:
        return _REGISTRY[name]()
    except KeyError:
        raise ConfigError(f"unknown benchmark {name!r}; known: {', '.join(benchmark_names())}") from None
