import json
import math

import mpmath as mp
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from scb2o.bench import get_benchmark
from scb2o.consensus import consensus_moment_constant
from scb2o.core import AlgorithmParams, Ensemble, GeometryConstants, ObjectiveBounds, ObjectiveSpec
from scb2o.diagnostics import (B4D_DEFAULT, CheckRecord, admissible_c, alpha_tau, beta_tau, bump,
                               cutoff_monitor, decay_rate_fit, hitting_time, laplace_bound_check,
                               mass_bound_b0, mass_bound_check, quantile_suite, theory_constants,
                               write_check_report)
from scb2o.dynamics import InitSpec, RunConfig, run
from scb2o.errors import ConfigError, ConstraintError, DomainError

# mpmath, 50 digits
C_M_BETA_HALF = 1.1892071150027210667
C_M_CIRCLE_SMALL_RANGE = 42.47573910670609023
DECAY_SLOPE_DT_001 = 2.0100671707002882367


def params(**kw):
    base = dict(alpha=30.0, beta=0.05, tau=1e-3, lam=1.0, sigma=1.0, dt=0.1, steps=10, n_particles=10)
    base.update(kw)
    return AlgorithmParams(**base)


def objective(g_lo=0.0, g_hi=1.0, dim=2, **kw):
    return ObjectiveSpec(lower=lambda x: np.zeros(len(x)), upper=lambda x: np.zeros(len(x)), dim=dim,
                         bounds=ObjectiveBounds(0.0, 1.0, g_lo, g_hi), **kw)


def mp_constants(p, b, d, T, b4d, mu4):
    mp.mp.dps = 60
    al, be, lam, sig = (mp.mpf(v) for v in (p.alpha, p.beta, p.lam, p.sigma))
    cm = be ** mp.mpf(-0.25) * mp.e ** (al * (mp.mpf(b.g_max) - mp.mpf(b.g_min)))
    kbd = 216 * (1 + cm ** 4) * (lam ** 4 * mp.mpf(T) ** 3 + sig ** 4 * b4d * d * d * mp.mpf(T))
    return dict(c_m=cm, b_g=be * mp.e ** (-al * b.g_max),
                a_r4=mp.sqrt(be) * mp.e ** (-al * b.g_min) * mp.mpf(mu4) ** mp.mpf(0.25),
                k_bd=kbd, log_c_bd=mp.log(54 * mp.mpf(mu4)) + kbd * T)


class TestTheoryConstants:
    def test_zero_exponent(self):
        # alpha must be positive; a zero G range gives the same zero exponent
        tc = theory_constants(params(beta=0.5, alpha=7.0), objective(0.3, 0.3), 1.0)
        assert tc.c_m == pytest.approx(C_M_BETA_HALF, rel=1e-14)
        assert consensus_moment_constant(0.0, 0.5, 0.0, 5.0) == pytest.approx(C_M_BETA_HALF, rel=1e-14)
        tc = theory_constants(params(beta=0.5, alpha=1e-300), objective(0.0, 0.0), 1.0)
        assert tc.b_g == 0.5

    def test_lyapunov(self):
        tc = theory_constants(params(lam=1.0, sigma=1.0), objective(), 2.0)
        assert tc.a_lyap == 0.0
        assert tc.b_lyap == pytest.approx(3 * math.sqrt(2), rel=1e-15)
        assert tc.c_d == 1.0

    def test_c_m_example(self):
        tc = theory_constants(params(), objective(0.0, 0.1), 1.0)
        assert tc.c_m == pytest.approx(C_M_CIRCLE_SMALL_RANGE, rel=1e-13)

    def test_overflow_in_log(self):
        tc = theory_constants(params(), objective(0.0, 40.0), 60.0)
        assert math.isinf(tc.c_m) and "c_m" in tc.overflow and "c_bd" in tc.overflow
        assert tc.log_c_m == pytest.approx(-0.25 * math.log(0.05) + 1200.0, rel=1e-15)
        assert math.isfinite(tc.log_log_c_bd)

    def test_needs_bounds(self):
        with pytest.raises(ConfigError):
            theory_constants(params(), ObjectiveSpec(lower=len, upper=len, dim=1), 1.0)

    def test_hard_mode_kappa(self):
        assert math.isnan(theory_constants(params(tau=0.0), objective(), 1.0).kappa)

    @settings(max_examples=40)
    @given(alpha=st.floats(0.1, 50), beta=st.floats(0.01, 0.99), lam=st.floats(0.1, 5),
           sigma=st.floats(0.0, 3), g_hi=st.floats(0.0, 0.3), T=st.floats(0.1, 10),
           mu4=st.floats(1e-3, 1e3), d=st.integers(1, 8))
    def test_matches_mpmath(self, alpha, beta, lam, sigma, g_hi, T, mu4, d):
        p = params(alpha=alpha, beta=beta, lam=lam, sigma=sigma)
        obj = objective(0.0, g_hi, dim=d)
        tc = theory_constants(p, obj, T, mu4=mu4)
        ref = mp_constants(p, obj.bounds, d, T, B4D_DEFAULT, mu4)
        for name in ("c_m", "b_g", "a_r4", "k_bd"):
            assert abs(getattr(tc, name) - ref[name]) <= 1e-12 * abs(ref[name]), name
        assert abs(tc.log_c_bd - ref["log_c_bd"]) <= 1e-12 * abs(ref["log_c_bd"])


class TestMass:
    def test_admissible(self):
        c = admissible_c(2)
        assert 0.5 < c < 1 and 2 * (1 - c) ** 2 <= c * (2 * c - 1)
        assert 2 * (1 - 0.9) ** 2 <= 0.9 * 0.8
        assert c == pytest.approx(2 / 3, abs=1e-4)

    def test_admissible_up_to_64(self):
        cs = [admissible_c(d) for d in range(1, 65)]
        assert all(0.5 < c < 1 for c in cs) and cs == sorted(cs)

    def test_no_admissible(self):
        with pytest.raises(ConstraintError):
            admissible_c(10 ** 12, grid=100)

    def test_bump(self):
        ts = np.array([1.0, 0.0])
        assert bump(ts, ts, 0.5)[0] == 1.0
        assert bump(np.array([1.5, 0.0]), ts, 0.5)[0] == 0.0
        assert bump(np.array([1.2, 0.0]), ts, 0.5)[0] > 0

    def test_initial_mass_positive(self, rng):
        ts = np.zeros(2)
        x = rng.uniform(-0.1, 0.1, (20, 2))
        rep = mass_bound_check([x, x], ts, 0.5, params(), b0=2.0)
        assert rep.initial_bump_mass > 0 and rep.held
        assert rep.p == pytest.approx(2 * max(rep.k1, rep.k2), rel=1e-12)
        assert rep.n_particles == 20

    def test_b0_exclusive(self):
        with pytest.raises(ConfigError):
            mass_bound_check([np.zeros((1, 2))], np.zeros(2), 1.0, params())
        with pytest.raises(DomainError):
            mass_bound_check([np.zeros((1, 2))], np.zeros(2), 0.0, params(), b0=1.0)

    def test_b0(self):
        assert mass_bound_b0(math.log(2.0), 16.0, np.array([3.0, 4.0])) == pytest.approx(math.log(9.0))

    def test_measured_can_fail(self):
        ts = np.zeros(2)
        inside = np.zeros((4, 2))
        outside = np.full((4, 2), 10.0)
        rep = mass_bound_check([inside, outside], ts, 1.0, params(sigma=1.0, lam=1e-3), b0=1e-3)
        assert not rep.held


def synthetic_laplace(rng, n_near, n_far, spread):
    geo = GeometryConstants(eta_L=1.0, nu_L=0.5, L_inf=1.0, eta_G=1.0, nu_G=1.0, G_inf=1.0,
                            r_G=0.5, R_G=1.0, r=0.1, u=0.1, delta_lev=0.01,
                            theta_tilde=(0.0, 0.0), lipschitz_L_local=0.2)
    obj = ObjectiveSpec(lower=lambda x: x[:, 1] ** 2, upper=lambda x: np.linalg.norm(x, axis=1), dim=2,
                        theta_star=np.zeros(2), bounds=ObjectiveBounds(0.0, 100.0, 0.0, 100.0),
                        geometry=geo)
    far = rng.normal([4.0, 3.0], 0.5, (n_far, 2))
    x = np.vstack([rng.normal(0.0, spread, (n_near, 2)), far])
    ens = Ensemble(x)
    ens.refresh(obj)
    return ens, obj


class TestLaplace:
    def test_synthetic_family(self, rng):
        statuses = []
        for _ in range(100):
            ens, obj = synthetic_laplace(rng, int(rng.integers(20, 80)), int(rng.integers(1, 40)),
                                         float(rng.uniform(0.01, 0.08)))
            p = params(alpha=float(rng.uniform(1, 30)), beta=0.25, tau=float(10 ** rng.uniform(-4, -2)),
                       n_particles=ens.n)
            rep = laplace_bound_check(ens, p, obj)
            statuses.append(rep.status)
            if rep.status == "pass":
                assert rep.actual <= rep.bound
        assert "fail" not in statuses
        assert statuses.count("pass") == 100

    def test_no_local_mass(self, rng):
        ens, obj = synthetic_laplace(rng, 0, 30, 0.05)
        rep = laplace_bound_check(ens, params(beta=0.25, n_particles=30), obj)
        assert rep.status == "skipped" and "local_mass" in rep.reason

    def test_inside_ball_constant(self):
        geo = GeometryConstants(eta_L=1.0, nu_L=0.5, L_inf=1.0, eta_G=2.0, nu_G=1.0, G_inf=1.0,
                                r_G=0.2, R_G=0.5, r=0.1, u=0.1, delta_lev=0.01,
                                theta_tilde=(0.0, 0.0), lipschitz_L_local=1.0)
        obj = ObjectiveSpec(lower=lambda x: np.zeros(len(x)), upper=lambda x: np.zeros(len(x)), dim=2,
                            theta_star=np.zeros(2), bounds=ObjectiveBounds(0.0, 1.0, 0.0, 1.0), geometry=geo)
        ens = Ensemble(np.array([[0.01, 0.0], [-0.02, 0.03], [0.0, -0.05]]))
        ens.refresh(obj)
        rep = laplace_bound_check(ens, params(beta=0.5, n_particles=3), obj)
        assert rep.status == "pass"
        assert rep.actual <= 0.2 + 0.1 / 2.0 <= rep.bound

    def test_missing_geometry(self, rng):
        ens, obj = synthetic_laplace(rng, 10, 2, 0.05)
        bare = ObjectiveSpec(lower=obj.lower, upper=obj.upper, dim=2)
        assert laplace_bound_check(ens, params(), bare).status == "skipped"

    def test_circle_late_time(self):
        b = get_benchmark("circle")
        statuses = []
        for seed in range(5):
            cfg = RunConfig(params=b.default_params, objective=b.objective, seed=seed,
                            init=InitSpec.from_dict(b.init), store_trajectory=True, record_every=600)
            x = run(cfg).trajectory[-1]
            ens = Ensemble(x)
            ens.refresh(b.objective)
            rep = laplace_bound_check(ens, b.default_params, b.objective)
            assert rep.sup_method.startswith("grid")
            statuses.append(rep.status)
        assert "fail" not in statuses and "pass" in statuses


class _Metrics(dict):
    def __init__(self, t, v, lam, sigma, dim=2):
        super().__init__(step=np.arange(len(t)), t=np.asarray(t), v_hat=np.asarray(v))
        self.params = params(lam=lam, sigma=sigma)
        self.dim = dim


class TestDecay:
    def test_deterministic_contraction(self):
        # constant L and G give uniform weights, so m stays at the initial mean (= theta*)
        obj = ObjectiveSpec(lower=lambda x: np.zeros(len(x)), upper=lambda x: np.zeros(len(x)), dim=2,
                            theta_star=np.zeros(2), bounds=ObjectiveBounds(0.0, 1.0, 0.0, 1.0))
        x0 = np.array([[1.0, 0.0], [-1.0, 0.0], [0.0, 2.0], [0.0, -2.0]])
        p = AlgorithmParams(alpha=1.0, beta=0.5, tau=0.1, lam=1.0, sigma=0.0, dt=0.01, steps=200,
                            n_particles=4)
        met = run(RunConfig(params=p, objective=obj, init=InitSpec(kind="explicit", matrix=x0)))
        fit = decay_rate_fit(met)
        assert fit.fitted_rate == pytest.approx(DECAY_SLOPE_DT_001, rel=1e-9)
        assert fit.target_rate == 1.0 and fit.passed

    def test_constant_series(self):
        fit = decay_rate_fit(_Metrics([0, 1, 2, 3], [2.0] * 4, 1.0, 0.5))
        assert fit.fitted_rate == 0.0

    def test_non_informative(self):
        fit = decay_rate_fit(_Metrics([0, 1, 2], [3.0, 2.0, 1.0], 1.0, 1.0))
        assert fit.target_rate == 0.0 and not fit.informative

    def test_window(self):
        v = [1.0, 0.5, 0.25, 0.25, 0.25]
        fit = decay_rate_fit(_Metrics(np.arange(5.0), v, 1.0, 0.5), window=(0, 2))
        assert fit.fitted_rate == pytest.approx(math.log(2), rel=1e-14)

    def test_nonpositive(self):
        with pytest.raises(DomainError):
            decay_rate_fit(_Metrics([0, 1], [1.0, 0.0], 1.0, 0.5))


class TestCutoff:
    def test_origin(self):
        rep = cutoff_monitor([np.zeros((5, 2))] * 3, 1e-9)
        assert np.all(rep.x_series == 0) and rep.omega_m_held
        assert math.isnan(rep.markov_bound)

    def test_infinite_m(self):
        assert cutoff_monitor([np.full((2, 2), 1e50)], math.inf).omega_m_held

    def test_markov_clip(self):
        rep = cutoff_monitor([np.ones((2, 2))], 10.0, log_c_bd=1e6)
        assert rep.markov_bound == 1.0
        rep = cutoff_monitor([np.ones((2, 2))], 10.0, log_c_bd=0.0)
        assert rep.markov_bound == pytest.approx(0.1)

    def test_reference_dominates(self):
        x = [np.ones((2, 1))]
        ref = [np.full((4, 1), 2.0)]
        assert cutoff_monitor(x, 100.0, reference=ref).x_series[0] == 16.0

    def test_circle_margin(self):
        b = get_benchmark("circle")
        for seed in range(10):
            cfg = RunConfig(params=b.default_params.replace(steps=60), objective=b.objective, seed=seed,
                            init=InitSpec.from_dict(b.init), store_trajectory=True)
            traj = run(cfg).trajectory
            xs = cutoff_monitor(traj, math.inf).x_series
            assert cutoff_monitor(traj, 10 * xs.max()).omega_m_held


class TestCalculators:
    def test_hitting_time(self):
        assert hitting_time(math.e, 1.0, 1.0, 0.0, 2) == pytest.approx(1.0)
        with pytest.raises(ConfigError):
            hitting_time(1.0, 0.1, 1.0, 1.0, 2)

    def test_alpha_beta_tau(self):
        assert beta_tau(0.5, 0.4) == pytest.approx(0.1)
        assert alpha_tau(2.0, math.e ** 4, 1.0) == pytest.approx(2.0)


class TestReport:
    def test_json_and_csv(self, tmp_path):
        recs = [CheckRecord("a", "x <= y", 1.0, 2.0, "pass"), CheckRecord("b", "p, q", 3.0, 2.0, "fail", "oops")]
        write_check_report(recs, tmp_path / "r.json")
        rows = [json.loads(s) for s in (tmp_path / "r.json").read_text().splitlines()]
        assert [r["name"] for r in rows] == ["a", "b"] and rows[1]["verdict"] == "fail"
        write_check_report(recs, tmp_path / "r.csv", fmt="csv")
        lines = (tmp_path / "r.csv").read_text().splitlines()
        assert lines[0] == "name,statement,lhs,rhs,verdict,detail" and len(lines) == 3
        with pytest.raises(ConfigError):
            write_check_report(recs, tmp_path / "r.x", fmt="xml")

    def test_small_quantile_suite(self):
        assert all(r.verdict == "pass" for r in quantile_suite(50, seed=3))
