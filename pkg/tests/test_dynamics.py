import math

import numpy as np
import pytest

from scb2o.bench import get_benchmark
from scb2o.core import AlgorithmParams, Ensemble
from scb2o.dynamics import (METRICS_SCHEMA_VERSION, InitSpec, NoiseSource, RunConfig, em_step,
                            em_update, read_metrics_csv, run, variance_scaling_study)
from scb2o.errors import ConfigError, DivergenceError, DomainError


def params(**kw):
    base = dict(alpha=30.0, beta=0.25, tau=1e-3, lam=1.0, sigma=1.0, dt=0.1, steps=5, n_particles=8)
    base.update(kw)
    return AlgorithmParams(**base)


def circle_config(**kw):
    b = get_benchmark("circle")
    p = kw.pop("params", b.default_params.replace(steps=20, n_particles=40))
    init = kw.pop("init", InitSpec.from_dict(b.init))
    return RunConfig(params=p, objective=b.objective, init=init, **kw)


class TestNoise:
    def test_moments(self):
        z = NoiseSource(7).normals(0, 500_000, 2).ravel()
        assert abs(z.mean()) < 4e-3
        assert abs(z.var() - 1) < 1e-2

    def test_row_independent_of_n(self):
        src = NoiseSource(3)
        big = src.normals(5, 50, 3)
        np.testing.assert_array_equal(src.normals(5, 10, 3), big[:10])
        np.testing.assert_array_equal(src.draw(5, 17, 3), big[17])

    def test_keys_distinct(self):
        src = NoiseSource(3)
        assert not np.array_equal(src.normals(0, 4, 2), src.normals(1, 4, 2))
        assert not np.array_equal(src.normals(0, 4, 2), NoiseSource(4).normals(0, 4, 2))

    def test_uniform_open_interval(self):
        u = NoiseSource(0).uniforms(0, 100_000, 1)
        assert u.min() > 0 and u.max() < 1

    def test_isotropy(self):
        z = NoiseSource(11).normals(2, 100_000, 2)
        ang = np.arctan2(z[:, 1], z[:, 0])
        counts = np.histogram(ang, bins=8, range=(-math.pi, math.pi))[0]
        np.testing.assert_allclose(counts / counts.mean(), 1.0, atol=0.03)

    def test_bad_seed(self):
        with pytest.raises(ConfigError):
            NoiseSource(1.5)


class TestEmUpdate:
    def test_contraction_identity(self, rng):
        x = rng.standard_normal((6, 3))
        m = rng.standard_normal(3)
        out = em_update(x, m, 0.7, 0.0, 0.2, None)
        np.testing.assert_allclose(out - m, (1 - 0.14) * (x - m), rtol=1e-14, atol=1e-15)

    def test_full_step_lands_on_m(self, rng):
        x = rng.standard_normal((5, 2))
        m = np.array([0.3, -0.2])
        np.testing.assert_allclose(em_update(x, m, 1.0, 0.0, 1.0, None), np.tile(m, (5, 1)), atol=1e-15)

    def test_particle_at_m_stays(self, rng):
        m = np.array([1.0, 2.0])
        out = em_update(m[None], m, 1.0, 3.0, 0.1, rng.standard_normal((1, 2)))
        np.testing.assert_array_equal(out, m[None])

    def test_noise_scale(self):
        x = np.array([[3.0, 4.0]])
        b = np.array([[1.0, -1.0]])
        out = em_update(x, np.zeros(2), 0.5, 2.0, 0.04, b)
        np.testing.assert_allclose(out, x * 0.98 + 2.0 * 0.2 * 5.0 * b, rtol=1e-15)


    def test_diffusion_covariance(self):
        n, sigma, dt = 100_000, 0.7, 0.04
        z = np.array([0.6, -0.8, 1.2])
        m = np.zeros(3)
        b = NoiseSource(5).normals(0, n, 3)
        x = np.tile(z, (n, 1))
        noise_part = em_update(x, m, 1.0, sigma, dt, b) - em_update(x, m, 1.0, 0.0, dt, None)
        expected = sigma ** 2 * dt * float(z @ z) * np.eye(3)
        cov = np.cov(noise_part, rowvar=False)
        np.testing.assert_allclose(cov, expected, atol=0.03 * expected[0, 0])


class TestEmStep:
    def test_identity_without_drift_noise(self, rng):
        # lam must be positive, so use a step that moves nothing: x == m
        x = np.ones((3, 2))
        ens = Ensemble(x)
        out = em_step(ens, np.ones(2), params(sigma=0.0), NoiseSource(0), 0)
        np.testing.assert_array_equal(out.positions, x)
        assert out.step_index == 1

    def test_divergence_reports_index(self):
        x = np.array([[0.0, 0.0], [1e308, 1e308]])
        with pytest.raises(DivergenceError) as info:
            em_step(Ensemble(x), np.zeros(2), params(lam=1.0, dt=1.0, sigma=5.0),
                    NoiseSource(0), 3)
        assert info.value.index == 1 and info.value.step == 3

    def test_non_finite_m(self):
        with pytest.raises(DomainError):
            em_step(Ensemble(np.zeros((2, 2))), np.array([np.nan, 0.0]), params(), NoiseSource(0), 0)


class TestRunConfig:
    def test_overshoot_guard(self):
        with pytest.raises(ConfigError):
            circle_config(params=params(lam=2.0, dt=1.0))
        circle_config(params=params(lam=2.0, dt=1.0), allow_overshoot=True)

    def test_soft_needs_tau(self):
        with pytest.raises(ConfigError):
            circle_config(params=params(tau=0.0), mode="soft")

    def test_hard_mode_default(self):
        assert circle_config(params=params(tau=0.0)).mode == "hard"

    @pytest.mark.parametrize("kw", [dict(record_every=0), dict(workers=0), dict(radii=(0.0,))])
    def test_rejects(self, kw):
        with pytest.raises(ConfigError):
            circle_config(**kw)

    def test_bad_init(self):
        with pytest.raises(ConfigError):
            InitSpec.from_dict({"kind": "cauchy"})
        with pytest.raises(ConfigError):
            InitSpec.from_dict({"kind": "gaussian", "bogus": 1})


class TestRun:
    def test_single_particle_without_noise(self):
        cfg = circle_config(params=params(n_particles=1, sigma=0.0, steps=10),
                            init=InitSpec(kind="explicit", matrix=np.array([[0.3, 0.4]])))
        met = run(cfg)
        np.testing.assert_array_equal(met["m_1"], 0.3)
        np.testing.assert_array_equal(met["m_2"], 0.4)

    def test_record_every(self):
        met = run(circle_config(record_every=7))
        np.testing.assert_array_equal(met["step"], [0, 7, 14, 20])
        np.testing.assert_allclose(met["t"], met["step"] * 0.1)

    def test_certifies_every_step(self):
        met = run(circle_config())
        assert met.certified_steps == 21

    def test_deterministic(self):
        a = run(circle_config()).to_csv()
        b = run(circle_config()).to_csv()
        assert a == b

    def test_workers_do_not_change_output(self):
        a = run(circle_config(workers=1)).to_csv()
        b = run(circle_config(workers=4)).to_csv()
        assert a == b

    def test_seed_changes_output(self):
        assert run(circle_config(seed=0)).to_csv() != run(circle_config(seed=1)).to_csv()

    def test_csv_roundtrip(self):
        met = run(circle_config(radii=(0.1, 1.0)))
        text = met.to_csv()
        assert text.startswith(f"# schema_version={METRICS_SCHEMA_VERSION}\n")
        header = text.splitlines()[1].split(",")
        assert header[:4] == ["step", "t", "L_consensus", "G_consensus"]
        assert {"dist_theta_star", "spread", "v_hat", "mass_r1", "mass_r2", "m_1", "m_2"} <= set(header)
        back = read_metrics_csv(text)
        for k, v in met.columns.items():
            np.testing.assert_array_equal(back[k], v)

    def test_final(self):
        met = run(circle_config())
        fin = met.final()
        assert fin["step"] == 20 and isinstance(fin["G_consensus"], float)
        np.testing.assert_array_equal([fin["m_1"], fin["m_2"]], met.final_consensus)

    def test_hard_mode_runs(self):
        met = run(circle_config(params=params(tau=0.0, steps=5, n_particles=20)))
        assert len(met) == 6

    def test_trajectory(self):
        met = run(circle_config(store_trajectory=True, record_every=10))
        assert len(met.trajectory) == 3 and met.trajectory[0].shape == (40, 2)

    def test_empty_metrics(self):
        with pytest.raises(DomainError):
            read_metrics_csv("# schema_version=1\n")


class TestVarianceStudy:
    def test_needs_seeds(self):
        with pytest.raises(ConfigError):
            variance_scaling_study(circle_config(), [4, 8, 16], [0])

    def test_needs_geometric(self):
        with pytest.raises(ConfigError):
            variance_scaling_study(circle_config(), [4, 8, 20], range(8))

    def test_zero_noise_point_init(self):
        # a point mass with sigma=0 leaves nothing random
        base = circle_config(params=params(sigma=0.0, steps=3, n_particles=4),
                             init=InitSpec(kind="gaussian", loc=0.5, scale=0.0))
        study = variance_scaling_study(base, [2, 4, 8], range(8))
        assert study.variances == (0.0, 0.0, 0.0)
        assert math.isnan(study.slope) and not study.decreasing
