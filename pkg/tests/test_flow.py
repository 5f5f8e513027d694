import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from latentforest.flow import (
    ICFM,
    VP_RESIDUAL,
    FlowConfig,
    FlowPairs,
    NoiseSchedule,
    VectorFieldModel,
    build_training_pairs,
    fit_forest_diffusion,
    fit_vector_field,
    forest_diffusion_generate,
    initial_noise,
    sample,
    vp_recover_clean,
    vp_target,
)
from latentforest.trees import GbtRegressor

TINY = FlowConfig(n_t=5, duplicate_K=4, n_estimators=3, max_depth=3)


def test_icfm_pair_example():
    sch = NoiseSchedule(n_t=2)  # grid {0.5, 1.0}
    pairs = FlowPairs(np.zeros((1, 1)), np.ones((1, 1)), sch, ICFM, 1)
    x, target = pairs.at(0)
    assert x[0, 0] == 0.5 and target[0, 0] == 1.0


def test_vp_example():
    assert vp_target(0.0, 0.8, 0.6) == pytest.approx(-1.0)
    sch = NoiseSchedule(n_t=1, alpha_min=0.01)
    a = float(sch.alpha(1.0))
    pairs = FlowPairs(np.zeros((1, 1)), np.ones((1, 1)), sch, VP_RESIDUAL, 1)
    z_t, target = pairs.at(0)
    s = np.sqrt(1 - a * a)
    assert z_t[0, 0] == pytest.approx(s)
    assert target[0, 0] == pytest.approx(-1.0)


def test_schedule_never_reaches_unit_alpha():
    for n_t in (1, 2, 50, 400):
        sch = NoiseSchedule(n_t=n_t)
        assert sch.t.min() > 0 and sch.t.max() == 1.0
        assert np.all(sch.alpha(sch.t) < 1.0) and np.all(sch.sigma(sch.t) > 0)
    with pytest.raises(ValueError):
        NoiseSchedule(alpha_min=0.2)
    with pytest.raises(ValueError):
        NoiseSchedule(n_t=0)


def test_nearest_index():
    sch = NoiseSchedule(n_t=10)
    assert sch.nearest_index(0.0) == 0
    assert sch.nearest_index(0.31) == 2
    assert sch.nearest_index(1.0) == 9
    assert sch.nearest_index(5.0) == 9


@settings(max_examples=200)
@given(st.floats(-1e3, 1e3), st.floats(-1e3, 1e3), st.floats(0.0, 0.999))
def test_vp_inversion(z0, eps, alpha):
    z_t = alpha * z0 + np.sqrt(1 - alpha * alpha) * eps
    back = vp_recover_clean(z_t, vp_target(z0, z_t, alpha), alpha)
    assert back == pytest.approx(z0, abs=1e-9 * max(1.0, abs(z0), abs(eps)))


def test_pairs_shapes_and_errors():
    Z = np.random.default_rng(0).normal(size=(7, 3))
    p = build_training_pairs(Z, NoiseSchedule(4), VP_RESIDUAL, 5, seed=1)
    assert p.z0.shape == (35, 3) and p.noise.shape == (35, 3)
    for k in range(4):
        x, t = p.at(k)
        assert x.shape == t.shape == (35, 3)
    with pytest.raises(ValueError):
        build_training_pairs(Z, mode="bad")
    with pytest.raises(ValueError):
        build_training_pairs(Z, duplicate_K=0)
    with pytest.raises(ValueError):
        build_training_pairs(np.zeros((0, 3)))
    with pytest.raises(ValueError):
        build_training_pairs(np.array([[np.inf]]))


def test_regressor_count():
    Z = np.random.default_rng(0).normal(size=(10, 3))
    cfg = FlowConfig(n_t=50, duplicate_K=2, n_estimators=1, max_depth=1)
    m = fit_vector_field(build_training_pairs(Z, cfg.schedule(), ICFM, 2), cfg)
    assert m.n_regressors == 150
    assert len(m.regressors) == 50 and all(len(s) == 3 for s in m.regressors)


def test_refit_is_bit_identical_and_serializable():
    Z = np.random.default_rng(1).normal(size=(12, 2))
    probe = np.random.default_rng(2).normal(size=(20, 2))
    fits = [fit_vector_field(build_training_pairs(Z, TINY.schedule(), ICFM, 4, 3), TINY, 3)
            for _ in range(2)]
    for k in range(TINY.n_t):
        t = float(TINY.schedule().t[k])
        np.testing.assert_array_equal(fits[0].velocity(probe, t), fits[1].velocity(probe, t))
    loaded = VectorFieldModel.from_dict(json.loads(json.dumps(fits[0].to_dict())))
    np.testing.assert_array_equal(sample(loaded, 30, 4), sample(fits[0], 30, 4))


def _zero_field(mode, dim=2, n_t=4):
    regs = [[GbtRegressor(0.0, 1.0, [], dim) for _ in range(dim)] for _ in range(n_t)]
    return VectorFieldModel(regs, mode, NoiseSchedule(n_t), dim, 1, vp_sampler="euler")


def test_zero_field_returns_initial_draws():
    for mode in (ICFM, VP_RESIDUAL):
        m = _zero_field(mode)
        np.testing.assert_array_equal(sample(m, 25, 9), initial_noise(25, 2, 9))


class _PointMassField:
    """Exact ICFM velocity toward a point mass at ``c``: (z - c) / t."""

    def __init__(self, t, c):
        self.t, self.c = t, c

    def predict(self, z):
        return (z[:, 0] - self.c) / self.t


def test_exact_point_mass_field_lands_on_point():
    sch = NoiseSchedule(n_t=20)
    regs = [[_PointMassField(float(t), 2.5)] for t in sch.t]
    m = VectorFieldModel(regs, ICFM, sch, 1, 1)
    np.testing.assert_allclose(sample(m, 50, 0), 2.5, atol=1e-12)


def test_learned_point_mass():
    X = np.full((30, 1), 4.0)
    X[0, 0] = 4.0 + 1e-3  # keep the scaler off its constant-column branch
    fd = fit_forest_diffusion(X, FlowConfig(n_t=20, duplicate_K=20, n_estimators=30))
    s = fd.generate(200, 1)
    assert abs(np.mean(s) - 4.0) < 0.01
    assert np.std(s) < 0.01


def test_sample_prefix_property():
    Z = np.random.default_rng(5).normal(size=(15, 2))
    m = fit_vector_field(build_training_pairs(Z, TINY.schedule(), ICFM, 4), TINY)
    long = sample(m, 250, 7)
    np.testing.assert_array_equal(sample(m, 130, 7), long[:130])
    assert sample(m, 0, 7).shape == (0, 2)
    with pytest.raises(ValueError):
        sample(m, -1)


def test_generate_count_zero_and_width():
    X = np.random.default_rng(0).normal(size=(20, 3))
    assert forest_diffusion_generate(X, 0, TINY).shape == (0, 3)
    assert forest_diffusion_generate(X, 11, TINY).shape == (11, 3)
    with pytest.raises(ValueError):
        fit_forest_diffusion(X[:1], TINY)


def test_gaussian_recovery_mean():
    X = np.random.default_rng(0).normal(5.0, 1.0, (500, 1))
    s = forest_diffusion_generate(X, 500, FlowConfig(duplicate_K=20), seed=1)
    assert abs(s.mean() - 5.0) <= 0.3


def test_vp_samplers_differ_and_renoise_keeps_spread():
    X = np.random.default_rng(0).normal(5.0, 1.0, (300, 1))
    cfg = FlowConfig(duplicate_K=20, n_estimators=30)
    fd = fit_forest_diffusion(X, cfg, 0, VP_RESIDUAL)
    renoise = fd.generate(400, 1)
    fd.field.vp_sampler = "euler"
    euler = fd.generate(400, 1)
    assert abs(renoise.mean() - 5.0) <= 0.3
    assert abs(renoise.std() - 1.0) <= 0.3
    assert euler.std() < renoise.std()
