"""Euler-Maruyama particle updates, the optimisation loop and seeded noise."""

from __future__ import annotations

import io
import logging
import math
import time
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np
from scipy import special

from .bench import particle_spread
from .consensus import (ConsensusReport, compute_consensus, consensus_moment_constant,
                        hard_consensus_point, log_fourth_moment, log_norms)
from .core import AlgorithmParams, Ensemble, ObjectiveSpec, SIGMOID, Selector
from .errors import ConfigError, DivergenceError, DomainError, InvariantError, SolverError

__all__ = [
    "NoiseSource",
    "InitSpec",
    "RunConfig",
    "RunMetrics",
    "VarianceStudy",
    "em_update",
    "em_step",
    "initial_positions",
    "run",
    "variance_scaling_study",
    "METRICS_SCHEMA_VERSION",
]

log = logging.getLogger(__name__)

METRICS_SCHEMA_VERSION = 1
_MASK64 = (1 << 64) - 1
# key slot reserved for the initial ensemble; step keys are 0..K-1
_INIT_KEY = _MASK64


class NoiseSource:
    """Standard normal vectors indexed by ``(step k, particle i)``.

    Each step has its own Philox key ``(seed, k)``. Row ``i`` of a block is
    built from raw counter outputs ``i*d .. i*d + d - 1``, so it depends on
    ``(seed, k, i)`` only and not on how many rows were requested.
    Uniforms take the top 53 bits of each word, offset by half an ulp so
    they never hit 0 or 1, and go through the normal quantile function.
    """

    def __init__(self, seed: int):
        if int(seed) != seed:
            raise ConfigError("seed must be an integer")
        self.seed = int(seed) & _MASK64

    def _raw(self, key: int, count: int) -> np.ndarray:
        gen = np.random.Philox(key=np.array([self.seed, key & _MASK64], dtype=np.uint64))
        return gen.random_raw(count)

    def uniforms(self, k: int, n: int, d: int) -> np.ndarray:
        raw = self._raw(k, n * d)
        return (((raw >> np.uint64(11)).astype(np.float64) + 0.5) * 2.0 ** -53).reshape(n, d)

    def normals(self, k: int, n: int, d: int) -> np.ndarray:
        return special.ndtri(self.uniforms(k, n, d))

    def draw(self, k: int, i: int, d: int) -> np.ndarray:
        """The single vector ``B_k^i``; equal to ``normals(k, n, d)[i]`` for any ``n > i``."""
        return self.normals(k, i + 1, d)[i]


@dataclass(frozen=True)
class InitSpec:
    """Initial law: ``gaussian(loc, scale)``, ``uniform(lo, hi)`` or an explicit matrix."""

    kind: str = "gaussian"
    loc: float = 0.0
    scale: float = 50.0
    lo: float = -1.0
    hi: float = 1.0
    matrix: Optional[np.ndarray] = None

    def __post_init__(self):
        if self.kind not in ("gaussian", "uniform", "explicit"):
            raise ConfigError(f"unknown init kind {self.kind!r}")
        if self.kind == "gaussian" and not self.scale >= 0:
            raise ConfigError("init scale must be nonnegative")
        if self.kind == "uniform" and not self.lo < self.hi:
            raise ConfigError("uniform init needs lo < hi")
        if self.kind == "explicit" and self.matrix is None:
            raise ConfigError("explicit init needs a matrix")

    @classmethod
    def from_dict(cls, spec: dict) -> "InitSpec":
        spec = dict(spec)
        if "matrix" in spec and spec["matrix"] is not None:
            spec["matrix"] = np.asarray(spec["matrix"], dtype=float)
        try:
            return cls(**spec)
        except TypeError as exc:
            raise ConfigError(f"bad init specification: {exc}") from None


def initial_positions(init: InitSpec, n: int, d: int, noise: NoiseSource) -> np.ndarray:
    if init.kind == "explicit":
        x = np.array(init.matrix, dtype=float)
        if x.shape != (n, d):
            raise ConfigError(f"explicit init has shape {x.shape}, expected {(n, d)}")
        return x
    if init.kind == "gaussian":
        return init.loc + init.scale * noise.normals(_INIT_KEY, n, d)
    return init.lo + (init.hi - init.lo) * noise.uniforms(_INIT_KEY, n, d)


def em_update(positions: np.ndarray, m: np.ndarray, lam: float, sigma: float, dt: float,
              normals: np.ndarray) -> np.ndarray:
    """``x - lam dt (x - m) + sigma sqrt(dt) |x - m| B`` applied row-wise."""
    diff = positions - m
    out = positions - (lam * dt) * diff
    if sigma != 0:
        norms = np.sqrt(np.sum(diff * diff, axis=1))
        out = out + (sigma * math.sqrt(dt)) * norms[:, None] * normals
    return out


def em_step(ensemble: Ensemble, m, params: AlgorithmParams, noise: NoiseSource, k: int) -> Ensemble:
    """One Euler-Maruyama step toward the consensus point ``m``.

    Raises
    ------
    DivergenceError
        A particle position became non-finite.
    """
    m = np.asarray(m, dtype=float)
    if not np.all(np.isfinite(m)):
        raise DomainError("consensus point is not finite")
    x = ensemble.positions
    b = noise.normals(k, *x.shape) if params.sigma != 0 else None
    with np.errstate(over="ignore", invalid="ignore"):
        new = em_update(x, m, params.lam, params.sigma, params.dt, b)
    finite = np.isfinite(new).all(axis=1)
    if not finite.all():
        i = int(np.flatnonzero(~finite)[0])
        raise DivergenceError(f"particle {i} diverged at step {k}", index=i, step=k)
    out = ensemble.moved(new)
    out.step_index = k + 1
    return out


@dataclass
class RunConfig:
    params: AlgorithmParams
    objective: ObjectiveSpec
    mode: Optional[str] = None
    seed: int = 0
    init: InitSpec = field(default_factory=InitSpec)
    record_every: int = 1
    radii: tuple = ()
    certify_moments: bool = True
    workers: int = 1
    allow_overshoot: bool = False
    store_trajectory: bool = False
    selector: Selector = SIGMOID
    baselines: Optional[dict] = None

    def __post_init__(self):
        if self.mode is None:
            self.mode = "hard" if self.params.hard else "soft"
        if self.mode not in ("soft", "hard"):
            raise ConfigError(f"mode must be soft or hard, got {self.mode!r}")
        if self.mode == "soft" and self.params.hard:
            raise ConfigError("soft mode needs tau > 0")
        if int(self.record_every) != self.record_every or self.record_every < 1:
            raise ConfigError("record_every must be a positive integer")
        if int(self.workers) != self.workers or self.workers < 1:
            raise ConfigError("workers must be a positive integer")
        if any(not r > 0 for r in self.radii):
            raise ConfigError("ball radii must be positive")
        if self.params.lam * self.params.dt > 1 and not self.allow_overshoot:
            raise ConfigError("lambda*dt > 1 overshoots the consensus point; set allow_overshoot")
        if isinstance(self.init, dict):
            self.init = InitSpec.from_dict(self.init)

    @property
    def horizon(self) -> float:
        return self.params.steps * self.params.dt


@dataclass
class RunMetrics:
    """Recorded time series of one run plus the final consensus point."""

    columns: dict
    final_consensus: np.ndarray
    wall_time: float
    params: AlgorithmParams
    dim: int
    certified_steps: int = 0
    trajectory: Optional[list] = None

    def __len__(self):
        return len(self.columns["step"])

    def __getitem__(self, name):
        return self.columns[name]

    def final(self) -> dict:
        return {k: v[-1].item() for k, v in self.columns.items()}

    def to_csv(self) -> str:
        buf = io.StringIO()
        names = list(self.columns)
        buf.write(f"# schema_version={METRICS_SCHEMA_VERSION}\n")
        buf.write(",".join(names) + "\n")
        for row in zip(*(self.columns[n] for n in names)):
            cells = [str(int(v)) if n == "step" else repr(float(v)) for n, v in zip(names, row)]
            buf.write(",".join(cells) + "\n")
        return buf.getvalue()


def metrics_columns(dim: int, n_radii: int, has_star: bool) -> list:
    cols = ["step", "t", "L_consensus", "G_consensus"]
    if has_star:
        cols += ["dist_theta_star"]
    cols += ["spread"]
    if has_star:
        cols += ["v_hat"]
    cols += ["fourth_moment"]
    if has_star:
        cols += [f"mass_r{j + 1}" for j in range(n_radii)]
    cols += [f"m_{j + 1}" for j in range(dim)] + ["log_c_m"]
    return cols


def read_metrics_csv(text: str) -> dict:
    """Parse a metrics CSV back into ``{column: np.ndarray}``."""
    lines = [ln for ln in text.splitlines() if ln and not ln.startswith("#")]
    if not lines:
        raise DomainError("empty metrics file")
    names = lines[0].split(",")
    data = np.array([[float(c) for c in ln.split(",")] for ln in lines[1:]], dtype=float)
    data = data.reshape(-1, len(names))
    return {n: data[:, j] for j, n in enumerate(names)}


def _consensus(ens: Ensemble, config: RunConfig, g_bounds) -> ConsensusReport:
    if config.mode == "hard":
        p = config.params
        return hard_consensus_point(ens, p.alpha, p.beta, g_bounds)
    return compute_consensus(ens, config.params, config.selector, g_bounds)


def _log_moment_check(report: ConsensusReport, ens: Ensemble, log_cm: float, k: int):
    lhs = 4 * float(log_norms(report.m)[0])
    rhs = 4 * log_cm + log_fourth_moment(ens.positions)
    if lhs > rhs + 1e-12:
        raise InvariantError(f"consensus-moment bound violated at step {k}")


def run(config: RunConfig) -> RunMetrics:
    """Run the particle scheme for ``params.steps`` steps.

    Metrics are recorded at ``k = 0, record_every, ...`` and always at the
    final step ``K``; the consensus point recorded at step ``k`` is the one
    computed from the ensemble at that step.
    """
    p = config.params
    obj = config.objective
    noise = NoiseSource(config.seed)
    start = time.perf_counter()
    x0 = initial_positions(config.init, p.n_particles, obj.dim, noise)
    ens = Ensemble(x0)
    g_bounds = (obj.bounds.g_min, obj.bounds.g_max) if obj.bounds is not None else None
    has_star = obj.theta_star is not None
    names = metrics_columns(obj.dim, len(config.radii), has_star)
    cols = {n: [] for n in names}
    traj = [] if config.store_trajectory else None
    certified = 0
    report = None
    for k in range(p.steps + 1):
        try:
            ens.refresh(obj, config.workers)
        except DomainError as exc:
            raise DivergenceError(f"objective blew up at step {k}: {exc}", step=k) from None
        try:
            report = _consensus(ens, config, g_bounds)
        except SolverError as exc:
            exc.step = k
            raise
        if g_bounds is None:
            g_lo, g_hi = float(ens.g_values.min()), float(ens.g_values.max())
        else:
            g_lo, g_hi = g_bounds
        log_cm = consensus_moment_constant(p.alpha, p.beta, g_lo, g_hi, log=True)
        if config.certify_moments:
            _log_moment_check(report, ens, log_cm, k)
            certified += 1
        if k % config.record_every == 0 or k == p.steps:
            with np.errstate(over="ignore"):
                _record(cols, ens, report, k, p.dt, obj, config.radii, log_cm)
            if traj is not None:
                traj.append(ens.positions.copy())
        if k == p.steps:
            break
        ens = em_step(ens, report.m, p, noise, k)
    wall = time.perf_counter() - start
    columns = {n: np.asarray(v, dtype=float) for n, v in cols.items()}
    columns["step"] = columns["step"].astype(np.int64)
    return RunMetrics(columns=columns, final_consensus=report.m.copy(), wall_time=wall, params=p,
                      dim=obj.dim, certified_steps=certified, trajectory=traj)


def _record(cols, ens, report, k, dt, obj: ObjectiveSpec, radii, log_cm):
    x = ens.positions
    m = report.m
    cols["step"].append(k)
    cols["t"].append(k * dt)
    cols["L_consensus"].append(float(obj.eval_lower(m[None])[0]))
    cols["G_consensus"].append(float(obj.eval_upper(m[None])[0]))
    if "dist_theta_star" in cols:
        cols["dist_theta_star"].append(float(obj.solution_distance(m[None])[0]))
    cols["spread"].append(particle_spread(x) if len(x) > 1 else 0.0)
    r2 = np.sum(x * x, axis=1)
    if "v_hat" in cols:
        dev = np.sum((x - obj.theta_star) ** 2, axis=1)
        cols["v_hat"].append(0.5 * float(np.mean(dev)))
        dist = np.sqrt(dev)
        for j, r in enumerate(radii):
            cols[f"mass_r{j + 1}"].append(float(np.mean(dist < r)))
    cols["fourth_moment"].append(float(np.mean(r2 * r2)))
    for j in range(len(m)):
        cols[f"m_{j + 1}"].append(float(m[j]))
    cols["log_c_m"].append(log_cm)


@dataclass(frozen=True)
class VarianceStudy:
    n_values: tuple
    variances: tuple
    slope: float
    finals: dict

    @property
    def decreasing(self) -> bool:
        return all(b < a for a, b in zip(self.variances, self.variances[1:]))


def variance_scaling_study(base: RunConfig, n_values: Sequence[int], seeds: Sequence[int]) -> VarianceStudy:
    """Across-seed variance of the final consensus point for several ``N``.

    The variance is the trace of the sample covariance (divisor ``S - 1``).
    ``slope`` is the least-squares slope of log variance against log N and
    is ``nan`` when some variance is zero.
    """
    n_values = [int(n) for n in n_values]
    seeds = list(seeds)
    if len(seeds) < 2:
        raise ConfigError("variance needs at least two seeds")
    if len(seeds) < 8:
        raise ConfigError("variance scaling study needs at least 8 seeds")
    if len(n_values) < 3:
        raise ConfigError("variance scaling study needs at least 3 values of N")
    ratios = [b / a for a, b in zip(n_values, n_values[1:])]
    if any(not math.isclose(r, ratios[0], rel_tol=1e-9) for r in ratios) or ratios[0] <= 1:
        raise ConfigError("N values must form an increasing geometric progression")
    variances = []
    finals = {}
    for n in n_values:
        pts = []
        for s in seeds:
            cfg = _replace_config(base, params=base.params.replace(n_particles=n), seed=s,
                                  store_trajectory=False)
            pts.append(run(cfg).final_consensus)
        pts = np.array(pts)
        finals[n] = pts
        variances.append(float(np.sum(np.var(pts, axis=0, ddof=1))))
    if all(v > 0 for v in variances):
        slope = float(np.polyfit(np.log(n_values), np.log(variances), 1)[0])
    else:
        slope = math.nan
    return VarianceStudy(tuple(n_values), tuple(variances), slope, finals)


def _replace_config(cfg: RunConfig, **changes) -> RunConfig:
    return replace(cfg, **changes)
