"""Command-line front end: run, sweep, check, compare and constants.

Configs are flat YAML mappings; every key is listed in ``CONFIG_KEYS`` and
anything else is rejected. Exit codes: 0 success, 1 other failure,
2 configuration error, 3 divergence, 4 failed checks.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import math
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Optional

import numpy as np
import yaml

from . import __version__
from .bench import get_benchmark, run_gradient_baseline
from .consensus import log_norms
from .core import AlgorithmParams, Ensemble
from .diagnostics import (B4D_DEFAULT, CheckRecord, consensus_moment_suite, decay_rate_fit,
                          laplace_bound_check, mass_bound_b0, mass_bound_check, quantile_suite,
                          soft_hard_suite, theory_constants, write_check_report)
from .dynamics import (InitSpec, NoiseSource, RunConfig, RunMetrics, initial_positions,
                       read_metrics_csv, run)
from .errors import ConfigError, DivergenceError, SCB2OError

log = logging.getLogger("scb2o")

CONFIG_SCHEMA_VERSION = 1
LOG_ENV = "SCB2O_LOG_LEVEL"

# key -> one-line description with units; the config schema
CONFIG_KEYS = {
    "schema_version": "config schema version (integer, currently 1)",
    "benchmark": "benchmark name: circle, star, rippled, bowl or a registered name",
    "mode": "soft or hard (hard selects the ceil(beta*N) best particles)",
    "xi": "sharpness 1/(tau*alpha), dimensionless; null means hard mode",
    "tau": "selector temperature, units of L; derived from xi when both are given",
    "alpha": "Gibbs inverse temperature, 1/units of G",
    "beta": "quantile level in (0,1)",
    "lambda": "drift rate, 1/time",
    "sigma": "noise scale, 1/sqrt(time)",
    "dt": "time step",
    "steps": "number of Euler-Maruyama steps K",
    "n_particles": "ensemble size N",
    "seed": "64-bit integer seed of all randomness",
    "init": "gaussian, uniform or explicit",
    "init_loc": "gaussian init mean (every coordinate)",
    "init_scale": "gaussian init standard deviation",
    "init_lo": "uniform init lower edge",
    "init_hi": "uniform init upper edge",
    "init_file": "explicit init: path to a .npy or whitespace-separated text matrix",
    "record_every": "record metrics every this many steps",
    "radii": "list of ball radii around theta* for the mass_r columns",
    "allow_overshoot": "permit lambda*dt > 1",
    "store_trajectory": "also archive positions at recorded steps (trajectory.npz)",
    "certify_moments": "check the consensus-moment inequality at every step",
}

def _log_level():
    level = os.environ.get(LOG_ENV, "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s")


# ----------------------------------------------------------------- configs


def parse_override(text: str) -> tuple:
    if "=" not in text:
        raise ConfigError(f"override {text!r} is not key=value")
    key, value = text.split("=", 1)
    parsed = yaml.safe_load(value)
    if isinstance(parsed, str):
        # YAML 1.1 reads "1e6" as a string
        try:
            parsed = float(parsed)
        except ValueError:
            pass
    return key.strip(), parsed


def load_config(path: Optional[str], overrides=(), seed: Optional[int] = None) -> dict:
    """Read a YAML config, apply ``key=value`` overrides and return the resolved mapping."""
    raw = {}
    if path is not None:
        try:
            with open(path, encoding="utf-8") as fh:
                raw = yaml.safe_load(fh) or {}
        except OSError as exc:
            raise ConfigError(f"cannot read config: {exc}") from None
        except yaml.YAMLError as exc:
            raise ConfigError(f"config is not valid YAML: {exc}") from None
        if not isinstance(raw, dict):
            raise ConfigError("config must be a mapping")
    for item in overrides:
        k, v = parse_override(item) if isinstance(item, str) else item
        raw[k] = v
    if seed is not None:
        raw["seed"] = seed
    return resolve_config(raw)


def resolve_config(raw: dict) -> dict:
    """Validate keys, fill benchmark defaults and derive tau from xi."""
    unknown = sorted(set(raw) - set(CONFIG_KEYS))
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
    version = raw.get("schema_version", CONFIG_SCHEMA_VERSION)
    if version != CONFIG_SCHEMA_VERSION:
        raise ConfigError(f"unsupported schema_version {version}")
    if "benchmark" not in raw:
        raise ConfigError("config needs a benchmark")
    bench = get_benchmark(raw["benchmark"])
    dp = bench.default_params
    cfg = {
        "schema_version": CONFIG_SCHEMA_VERSION,
        "benchmark": raw["benchmark"],
        "alpha": dp.alpha, "beta": dp.beta, "lambda": dp.lam, "sigma": dp.sigma, "dt": dp.dt,
        "steps": dp.steps, "n_particles": dp.n_particles,
        "seed": 0, "record_every": 1, "radii": [], "allow_overshoot": False,
        "store_trajectory": False, "certify_moments": True,
    }
    init = dict(bench.init)
    cfg["init"] = init.get("kind", "gaussian")
    for k in ("loc", "scale", "lo", "hi"):
        if k in init:
            cfg[f"init_{k}"] = init[k]
    for k, v in raw.items():
        if k not in ("xi", "tau", "mode"):
            cfg[k] = v
    for k in ("alpha", "beta", "lambda", "sigma", "dt"):
        if isinstance(cfg[k], bool) or not isinstance(cfg[k], (int, float)):
            raise ConfigError(f"{k} must be a number")
        cfg[k] = float(cfg[k])
    for k in ("steps", "n_particles", "seed", "record_every"):
        if isinstance(cfg[k], bool) or not isinstance(cfg[k], int):
            raise ConfigError(f"{k} must be an integer")
    if not isinstance(cfg["radii"], list):
        raise ConfigError("radii must be a list")
    cfg["radii"] = [float(r) for r in cfg["radii"]]
    mode = raw.get("mode")
    if mode not in (None, "soft", "hard"):
        raise ConfigError("mode must be soft or hard")
    xi, tau = raw.get("xi", "default"), raw.get("tau")
    if mode == "hard" or xi is None:
        cfg.update(mode="hard", xi=None, tau=0.0)
    else:
        if xi == "default" and tau is None:
            xi = dp.xi
        if xi == "default":
            xi = None
        if xi is not None:
            xi = float(xi)
            if not xi > 0:
                raise ConfigError("xi must be positive")
            derived = 1.0 / (xi * cfg["alpha"])
            if tau is not None and not math.isclose(float(tau), derived, rel_tol=1e-12):
                raise ConfigError("tau and xi disagree (tau must equal 1/(xi*alpha))")
            tau = derived
        tau = float(tau)
        if not tau > 0:
            raise ConfigError("soft mode needs tau > 0")
        cfg.update(mode="soft", xi=xi if xi is not None else 1.0 / (tau * cfg["alpha"]), tau=tau)
    if cfg["init"] not in ("gaussian", "uniform", "explicit"):
        raise ConfigError(f"unknown init {cfg['init']!r}")
    build_run_config(cfg)  # full validation
    return {k: cfg[k] for k in CONFIG_KEYS if k in cfg}


def dump_config(cfg: dict) -> str:
    return yaml.safe_dump(cfg, sort_keys=False, default_flow_style=None)


def build_run_config(cfg: dict, workers: int = 1) -> RunConfig:
    bench = get_benchmark(cfg["benchmark"])
    params = AlgorithmParams(alpha=cfg["alpha"], beta=cfg["beta"], tau=cfg["tau"], lam=cfg["lambda"],
                             sigma=cfg["sigma"], dt=cfg["dt"], steps=cfg["steps"],
                             n_particles=cfg["n_particles"])
    kind = cfg["init"]
    if kind == "explicit":
        if "init_file" not in cfg:
            raise ConfigError("explicit init needs init_file")
        init = InitSpec(kind="explicit", matrix=_load_matrix(cfg["init_file"]))
    else:
        init = InitSpec(kind=kind, loc=cfg.get("init_loc", 0.0), scale=cfg.get("init_scale", 50.0),
                        lo=cfg.get("init_lo", -1.0), hi=cfg.get("init_hi", 1.0))
    return RunConfig(params=params, objective=bench.objective, mode=cfg["mode"], seed=cfg["seed"],
                     init=init, record_every=cfg["record_every"], radii=tuple(cfg["radii"]),
                     certify_moments=cfg["certify_moments"], workers=workers,
                     allow_overshoot=cfg["allow_overshoot"], store_trajectory=cfg["store_trajectory"])


def _load_matrix(path) -> np.ndarray:
    try:
        if str(path).endswith(".npy"):
            return np.load(path)
        return np.loadtxt(path, ndmin=2)
    except OSError as exc:
        raise ConfigError(f"cannot read init_file: {exc}") from None


# ---------------------------------------------------------------- archives


def _sha256(text: str) -> str:
    return hashlib.sha256(text.encode()).hexdigest()


def write_archive(out: Path, cfg: dict, metrics: RunMetrics) -> dict:
    out.mkdir(parents=True, exist_ok=True)
    cfg_text = dump_config(cfg)
    csv_text = metrics.to_csv()
    (out / "config.yaml").write_text(cfg_text)
    (out / "metrics.csv").write_text(csv_text)
    final = {k: float(v) for k, v in metrics.final().items()}
    summary = {
        "final_consensus": [float(v) for v in metrics.final_consensus],
        "final_metrics": final,
        "wall_time": metrics.wall_time,
        "version": __version__,
        "seed": cfg["seed"],
        "config_sha256": _sha256(cfg_text),
        "metrics_sha256": _sha256(csv_text),
    }
    (out / "summary.json").write_text(json.dumps(summary, indent=2) + "\n")
    if metrics.trajectory is not None:
        np.savez_compressed(out / "trajectory.npz", steps=metrics["step"],
                            positions=np.stack(metrics.trajectory))
    return summary


def _fail(code: int, msg: str) -> int:
    print(f"error: {msg}", file=sys.stderr)
    return code


def _guard(fn):
    def wrapper(args):
        try:
            return fn(args)
        except ConfigError as exc:
            return _fail(2, str(exc))
        except DivergenceError as exc:
            return _fail(3, str(exc))
        except SCB2OError as exc:
            return _fail(1, f"{type(exc).__name__}: {exc}")
    return wrapper


# ---------------------------------------------------------------- commands


@_guard
def cmd_run(args) -> int:
    cfg = load_config(args.config, args.set, args.seed)
    metrics = run(build_run_config(cfg, args.workers))
    out = Path(args.out)
    summary = write_archive(out, cfg, metrics)
    if args.format == "csv":
        (out / "summary.csv").write_text(
            "key,value\n" + "".join(f"{k},{v!r}\n" for k, v in summary["final_metrics"].items()))
    log.info("run finished in %.3fs", metrics.wall_time)
    return 0


def _parse_grid(items) -> dict:
    grid = {}
    for item in items or ():
        if "=" not in item:
            raise ConfigError(f"grid entry {item!r} is not name=v1,v2,...")
        name, values = item.split("=", 1)
        name = name.strip()
        if name not in ("xi", "beta", "n_particles", "seed"):
            raise ConfigError(f"cannot sweep over {name!r}; use xi, beta, n_particles or seed")
        vals = [yaml.safe_load(v) for v in values.split(",") if v.strip()]
        if not vals:
            raise ConfigError(f"grid entry {name} has no values")
        grid[name] = vals
    return grid


def cell_seed(base: int, cell: int, replicate: int) -> int:
    """Independent per-cell seed derived from ``(base, cell, replicate)``."""
    h = hashlib.blake2b(f"{base}:{cell}:{replicate}".encode(), digest_size=8).digest()
    return int.from_bytes(h, "little") >> 1


SUMMARY_METRICS = ("G_consensus", "L_consensus", "dist_theta_star", "spread")


def _aggregate_rows(values: dict) -> dict:
    row = {}
    for name in SUMMARY_METRICS:
        v = np.array(values.get(name, []), dtype=float)
        if v.size == 0:
            continue
        row[f"{name}_mean"] = float(v.mean())
        row[f"{name}_std"] = float(v.std(ddof=1)) if v.size > 1 else 0.0
        row[f"{name}_min"] = float(v.min())
        row[f"{name}_max"] = float(v.max())
    return row


def _write_table(path: Path, rows: list, fmt: str):
    if fmt == "json":
        path.with_suffix(".json").write_text(json.dumps(rows, indent=2) + "\n")
        return
    cols = []
    for r in rows:
        cols += [k for k in r if k not in cols]
    lines = [",".join(cols)]
    for r in rows:
        lines.append(",".join("" if r.get(c) is None else str(r.get(c)) for c in cols))
    path.with_suffix(".csv").write_text("\n".join(lines) + "\n")


@_guard
def cmd_sweep(args) -> int:
    grid = _parse_grid(args.grid)
    seeds = [int(s) for s in args.seeds.split(",")] if args.seeds else None
    if not grid and not seeds and not args.replicates:
        raise ConfigError("empty sweep grid")
    base = load_config(args.config, args.set, args.seed)
    seed_values = grid.pop("seed", None)
    if seeds is None:
        seeds = seed_values
    names = list(grid)
    combos = [{}]
    for name in names:
        combos = [{**c, name: v} for c in combos for v in grid[name]]
    jobs = []
    for ci, combo in enumerate(combos):
        if seeds is not None:
            reps = [(j, s) for j, s in enumerate(seeds)]
        else:
            reps = [(j, cell_seed(base["seed"], ci, j)) for j in range(args.replicates or 1)]
        for j, s in reps:
            jobs.append((ci, j, combo, s))
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    def one(job):
        ci, j, combo, s = job
        raw = {k: v for k, v in base.items() if k not in ("tau",)}
        raw.update(combo)
        raw["seed"] = s
        if "xi" in combo:
            raw["mode"] = "soft"
        cell_dir = out / f"cell{ci:03d}_rep{j:02d}"
        try:
            cfg = resolve_config(raw)
            metrics = run(build_run_config(cfg))
            write_archive(cell_dir, cfg, metrics)
            return ci, combo, s, metrics.final(), None
        except SCB2OError as exc:
            return ci, combo, s, None, f"{type(exc).__name__}: {exc}"

    with ThreadPoolExecutor(max_workers=max(1, args.workers)) as pool:
        results = list(pool.map(one, jobs))
    rows = []
    ok = True
    for ci, combo in enumerate(combos):
        cell = [r for r in results if r[0] == ci]
        errors = [r[4] for r in cell if r[4] is not None]
        finals = [r[3] for r in cell if r[4] is None]
        ok &= not errors
        values = {m: [f[m] for f in finals if m in f] for m in SUMMARY_METRICS}
        row = {"cell": ci, **{k: combo.get(k) for k in names}, "n_seeds": len(finals),
               "n_failed": len(errors), **_aggregate_rows(values)}
        if errors:
            row["errors"] = " | ".join(errors).replace(",", ";")
            for e in errors:
                print(f"cell {ci} failed: {e}", file=sys.stderr)
        rows.append(row)
    _write_table(out / "aggregate", rows, args.format)
    return 0 if ok else 1


CHECKS = ("quantile-suite", "soft-hard", "consensus-moment-suite", "consensus-moment", "laplace",
          "mass", "cutoff", "decay", "reproducible")


def _archive_checks(archive: Path, names, cfg: dict, metrics_text: str) -> list:
    cols = read_metrics_csv(metrics_text)
    records = []
    rc = build_run_config(cfg)
    obj = rc.objective
    traj = None
    if (archive / "trajectory.npz").is_file():
        with np.load(archive / "trajectory.npz") as z:
            traj = list(z["positions"])
    for name in names:
        if name == "consensus-moment":
            d = obj.dim
            m = np.stack([cols[f"m_{j + 1}"] for j in range(d)], axis=1)
            with np.errstate(divide="ignore"):
                lhs = 4 * log_norms(m)
                rhs = 4 * cols["log_c_m"] + np.log(cols["fourth_moment"])
            bad = np.flatnonzero(lhs > rhs + 1e-12)
            worst = float(np.max(lhs - rhs))
            records.append(CheckRecord("consensus-moment", "log|m|^4 <= log(C_m^4 R4) at every recorded step",
                                       worst, 0.0, "fail" if bad.size else "pass",
                                       f"violations at steps {cols['step'][bad][:5].astype(int).tolist()}"
                                       if bad.size else ""))
        elif name == "laplace":
            if traj is None:
                records.append(CheckRecord("laplace", "|m - theta*| <= bound", math.nan, math.nan,
                                           "skipped", "no trajectory in archive"))
                continue
            ens = Ensemble(traj[-1]).refresh(obj)
            rep = laplace_bound_check(ens, rc.params, obj)
            if rep.status == "skipped":
                log.warning("laplace check skipped: %s", rep.reason)
            records.append(CheckRecord("laplace", "|m - theta*| <= bound", rep.actual, rep.bound,
                                       rep.status, rep.reason))
        elif name == "mass":
            if traj is None or obj.theta_star is None or not cfg["radii"]:
                records.append(CheckRecord("mass", "ball mass >= e^{-pt} bump mass", math.nan, math.nan,
                                           "skipped", "needs trajectory, theta* and radii"))
                continue
            tc = theory_constants(rc.params, obj, rc.horizon, mu4=float(cols["fourth_moment"][0]))
            lb0 = mass_bound_b0(tc.log_c_m, float(cols["fourth_moment"].max()), obj.theta_star)
            for r in cfg["radii"]:
                rep = mass_bound_check(traj, obj.theta_star, r, rc.params, log_b0=lb0, times=cols["t"])
                slack = float(np.min(rep.measured - rep.lower_bound))
                records.append(CheckRecord(f"mass(r={r})", "ball mass >= e^{-pt} bump mass", slack, 0.0,
                                           "pass" if rep.held else "fail", f"N={rep.n_particles}"))
        elif name == "cutoff":
            x4 = cols["fourth_moment"]
            tc = theory_constants(rc.params, obj, rc.horizon, mu4=float(x4[0])) if obj.bounds else None
            lhs = math.log(float(x4.max())) if x4.max() > 0 else -math.inf
            rhs = tc.log_c_bd if tc is not None else math.inf
            records.append(CheckRecord("cutoff", "log max_t X_t <= log C_bd(T)", lhs, rhs,
                                       "pass" if lhs <= rhs else "fail"))
        elif name == "decay":
            if "v_hat" not in cols:
                records.append(CheckRecord("decay", "fitted rate >= target", math.nan, math.nan,
                                           "skipped", "no theta*"))
                continue
            holder = _MetricsView(cols, rc.params, obj.dim)
            fit = decay_rate_fit(holder)
            verdict = ("pass" if fit.passed else "fail") if fit.informative else "skipped"
            records.append(CheckRecord("decay", "fitted rate >= (1-theta)(2 lam - d sigma^2)",
                                       fit.fitted_rate, fit.target_rate, verdict,
                                       "" if fit.informative else "target rate is not positive"))
        elif name == "reproducible":
            again = run(rc).to_csv()
            same = _sha256(again) == _sha256(metrics_text)
            records.append(CheckRecord("reproducible", "re-run metrics hash equals archive hash",
                                       float(same), 1.0, "pass" if same else "fail"))
    return records


class _MetricsView:
    def __init__(self, cols, params, dim):
        self.columns, self.params, self.dim = cols, params, dim

    def __getitem__(self, name):
        return self.columns[name]


@_guard
def cmd_check(args) -> int:
    names = [c.strip() for c in (args.checks or "").split(",") if c.strip()]
    if not names:
        raise ConfigError("empty check list")
    unknown = [n for n in names if n not in CHECKS]
    if unknown:
        raise ConfigError(f"unknown checks: {', '.join(unknown)}; known: {', '.join(CHECKS)}")
    records = []
    suites = {"quantile-suite": lambda: quantile_suite(args.instances, args.check_seed),
              "soft-hard": lambda: soft_hard_suite(50, args.check_seed),
              "consensus-moment-suite": lambda: consensus_moment_suite(args.instances, args.check_seed)}
    for n in names:
        if n in suites:
            records += suites[n]()
    archive_names = [n for n in names if n not in suites]
    if archive_names:
        if args.archive:
            archive = Path(args.archive)
            try:
                cfg = resolve_config(yaml.safe_load((archive / "config.yaml").read_text()))
                metrics_text = (archive / "metrics.csv").read_text()
            except OSError as exc:
                raise ConfigError(f"cannot read archive: {exc}") from None
        elif args.config:
            cfg = load_config(args.config, args.set, args.seed)
            cfg["store_trajectory"] = True
            archive = Path(args.out or "check_run")
            write_archive(archive, cfg, run(build_run_config(cfg, args.workers)))
            metrics_text = (archive / "metrics.csv").read_text()
        else:
            raise ConfigError(f"checks {', '.join(archive_names)} need --archive or --config")
        records += _archive_checks(archive, archive_names, cfg, metrics_text)
    out = Path(args.out) if args.out else (Path(args.archive) if args.archive else Path("."))
    out.mkdir(parents=True, exist_ok=True)
    suffix = "jsonl" if args.format == "json" else "csv"
    write_check_report(records, out / f"check_report.{suffix}", args.format)
    for r in records:
        print(f"{r.verdict.upper():7s} {r.name}: lhs={r.lhs!r} rhs={r.rhs!r} {r.detail}".rstrip())
    failed = [r.name for r in records if r.verdict == "fail"]
    if failed:
        print("failed checks: " + ", ".join(failed), file=sys.stderr)
        return 4
    return 0


METHODS = ("scb2o", "cb2o", "sbgd1", "vpbgd1")


@_guard
def cmd_compare(args) -> int:
    methods = [m.strip() for m in args.methods.split(",") if m.strip()]
    bad = [m for m in methods if m not in METHODS]
    if bad or not methods:
        raise ConfigError(f"unknown methods: {', '.join(bad) or '(none)'}; known: {', '.join(METHODS)}")
    bench = get_benchmark(args.benchmark)
    obj = bench.objective
    if any(m in ("sbgd1", "vpbgd1") for m in methods) and (obj.lower_grad is None or obj.upper_grad is None):
        raise ConfigError(f"benchmark {args.benchmark!r} has no analytic gradients for the baselines")
    seeds = [int(s) for s in args.seeds.split(",")] if args.seeds else list(bench.default_seeds)
    overrides = dict(parse_override(s) for s in args.set or ())
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    rows, series = [], []
    for method in methods:
        finals = {m: [] for m in SUMMARY_METRICS}
        for s in seeds:
            if method in ("scb2o", "cb2o"):
                raw = {"benchmark": args.benchmark, "seed": s, **overrides}
                if method == "cb2o":
                    raw["mode"] = "hard"
                cfg = resolve_config(raw)
                metrics = run(build_run_config(cfg, args.workers))
                cols = metrics.columns
                for k in range(len(metrics)):
                    for name in SUMMARY_METRICS:
                        if name in cols:
                            series.append((method, s, int(cols["step"][k]), name, float(cols[name][k])))
                for name in SUMMARY_METRICS:
                    if name in cols:
                        finals[name].append(float(cols[name][-1]))
            else:
                init = InitSpec.from_dict(bench.init)
                x0 = initial_positions(init, 1, obj.dim, NoiseSource(s))[0]
                iters = int(overrides.get("steps", bench.default_params.steps))
                path = run_gradient_baseline(method, x0, obj, iters, **bench.baseline)
                vals = {"G_consensus": obj.eval_upper(path), "L_consensus": obj.eval_lower(path),
                        "dist_theta_star": obj.solution_distance(path)}
                for k in range(len(path)):
                    for name, v in vals.items():
                        series.append((method, s, k, name, float(v[k])))
                for name, v in vals.items():
                    finals[name].append(float(v[-1]))
        rows.append({"method": method, "n_seeds": len(seeds), **_aggregate_rows(finals)})
    _write_table(out / "compare", rows, args.format)
    with open(out / "series.csv", "w", encoding="utf-8") as fh:
        fh.write("method,seed,step,metric,value\n")
        for row in series:
            fh.write(f"{row[0]},{row[1]},{row[2]},{row[3]},{row[4]!r}\n")
    for r in rows:
        print(f"{r['method']:7s} G={r.get('G_consensus_mean', math.nan):.6g}"
              f"±{r.get('G_consensus_std', math.nan):.3g} L={r.get('L_consensus_mean', math.nan):.3g}")
    return 0


@_guard
def cmd_constants(args) -> int:
    cfg = load_config(args.config, args.set, args.seed)
    rc = build_run_config(cfg)
    x0 = initial_positions(rc.init, rc.params.n_particles, rc.objective.dim, NoiseSource(rc.seed))
    mu4 = float(np.mean(np.sum(x0 * x0, axis=1) ** 2))
    tc = theory_constants(rc.params, rc.objective, rc.horizon, b4d=args.b4d, mu4=mu4)
    data = tc.as_dict()
    data["overflow"] = list(data["overflow"])
    if args.format == "json":
        print(json.dumps(data, indent=2))
    else:
        print("name,value")
        for k, v in data.items():
            print(f"{k},{v}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="scb2o", description="Soft-quantile consensus bi-level optimiser")
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, config_required=False):
        sp.add_argument("--config", required=config_required, help="YAML config file")
        sp.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                        help="override a config key (repeatable)")
        sp.add_argument("--seed", type=int, default=None, help="override the config seed")
        sp.add_argument("--workers", type=int, default=1, help="worker threads")
        sp.add_argument("--format", choices=("csv", "json"), default="csv")

    sp = sub.add_parser("run", help="run one configuration and write an archive")
    common(sp, config_required=True)
    sp.add_argument("--out", required=True, help="archive directory")
    sp.set_defaults(func=cmd_run)

    sp = sub.add_parser("sweep", help="grid of configurations and seeds")
    common(sp, config_required=True)
    sp.add_argument("--out", required=True)
    sp.add_argument("--grid", action="append", default=[], metavar="NAME=V1,V2",
                    help="xi, beta, n_particles or seed values (repeatable)")
    sp.add_argument("--seeds", default=None, help="comma-separated seed list used in every cell")
    sp.add_argument("--replicates", type=int, default=0,
                    help="per-cell replicates with seeds hashed from (seed, cell, replicate)")
    sp.set_defaults(func=cmd_sweep)

    sp = sub.add_parser("check", help="run diagnostics on an archive, a config or random instances")
    common(sp)
    sp.add_argument("--archive", default=None, help="archive directory from 'run'")
    sp.add_argument("--checks", default="", help="comma-separated: " + ", ".join(CHECKS))
    sp.add_argument("--out", default=None)
    sp.add_argument("--instances", type=int, default=1000, help="random instances for suites")
    sp.add_argument("--check-seed", type=int, default=0, help="seed of the random suites")
    sp.set_defaults(func=cmd_check)

    sp = sub.add_parser("compare", help="consensus methods against gradient baselines")
    sp.add_argument("--benchmark", required=True)
    sp.add_argument("--methods", default=",".join(METHODS))
    sp.add_argument("--seeds", default=None)
    sp.add_argument("--out", required=True)
    sp.add_argument("--set", action="append", default=[], metavar="KEY=VALUE")
    sp.add_argument("--workers", type=int, default=1)
    sp.add_argument("--format", choices=("csv", "json"), default="csv")
    sp.set_defaults(func=cmd_compare)

    sp = sub.add_parser("constants", help="print theory constants for a config")
    common(sp, config_required=True)
    sp.add_argument("--b4d", type=float, default=B4D_DEFAULT, help="BDG constant")
    sp.set_defaults(func=cmd_constants)
    return p


def main(argv=None) -> int:
    _log_level()
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 2 if exc.code not in (0, None) else 0
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
