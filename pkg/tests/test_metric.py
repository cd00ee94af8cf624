"""Geometric-similarity metric tests: identity, symmetry, range, hand
computations of both terms, and qualitative degradation behavior."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tsgeo.imaging import RenderConfig
from tsgeo.metric import TgsiConfig, covariance_component, luminance, tgsi


def small_cfg(**render_kwargs):
    defaults = dict(height=24, expand=4, downscale_window=2)
    defaults.update(render_kwargs)
    return TgsiConfig(render=RenderConfig(**defaults))


class TestConfig:
    def test_stability_constants(self):
        cfg = TgsiConfig()
        assert np.isclose(cfg.c1, (0.01 * 1.0) ** 2)
        assert np.isclose(cfg.c2, (0.03 * 1.0) ** 2 / 2.0)

    def test_dynamic_range_scales_constants(self):
        cfg = TgsiConfig(dynamic_range=255.0)
        assert np.isclose(cfg.c1, (0.01 * 255.0) ** 2)

    def test_validation(self):
        with pytest.raises(ValueError):
            TgsiConfig(k1=0.0)
        with pytest.raises(ValueError):
            TgsiConfig(k2=-1.0)
        with pytest.raises(ValueError):
            TgsiConfig(dynamic_range=0.0)


class TestComponentFormulas:
    def test_luminance_hand_case(self):
        cfg = TgsiConfig()
        a = np.full((2, 2), 0.5)
        b = np.full((2, 2), 0.25)
        expect = (2 * 0.5 * 0.25 + cfg.c1) / (0.5 ** 2 + 0.25 ** 2 + cfg.c1)
        assert np.isclose(luminance(a, b, cfg), expect, atol=1e-12)

    def test_luminance_identical_images_give_one(self, rng):
        cfg = TgsiConfig()
        a = rng.uniform(size=(4, 5))
        assert np.isclose(luminance(a, a, cfg), 1.0, atol=1e-12)

    def test_covariance_hand_case(self):
        cfg = small_cfg(downscale_window=1)
        a = np.array([[0.0, 1.0], [0.0, 1.0]])
        b = np.array([[1.0, 0.0], [1.0, 0.0]])
        # population stats: cov = -0.25, sx = sy = 0.5
        expect = (-0.25 + cfg.c2) / (0.25 + cfg.c2)
        assert np.isclose(covariance_component(a, b, cfg), expect, atol=1e-12)

    def test_covariance_uses_downscaled_images(self):
        cfg = small_cfg(downscale_window=2)
        # checkerboard: pools to constant 0.5 -> zero variance both sides
        a = np.indices((4, 4)).sum(axis=0) % 2 * 1.0
        assert np.isclose(covariance_component(a, a, cfg), 1.0, atol=1e-12)

    def test_shape_mismatch_rejected(self):
        cfg = TgsiConfig()
        with pytest.raises(ValueError):
            luminance(np.ones((2, 2)), np.ones((3, 2)), cfg)
        with pytest.raises(ValueError):
            covariance_component(np.ones((2, 2)), np.ones((3, 2)), cfg)


class TestTgsi:
    def test_identity_is_one(self, rng):
        x = rng.normal(size=(60, 2))
        rep = tgsi(x, x, small_cfg())
        assert abs(rep.aggregate - 1.0) < 1e-9
        assert all(abs(v - 1.0) < 1e-9 for v in rep.tgsi)

    def test_symmetry(self, rng):
        x = rng.normal(size=(40, 2))
        y = rng.normal(size=(40, 2))
        cfg = small_cfg()
        assert abs(tgsi(x, y, cfg).aggregate - tgsi(y, x, cfg).aggregate) < 1e-12

    def test_aggregate_is_channel_mean(self, rng):
        x = rng.normal(size=(30, 3))
        y = rng.normal(size=(30, 3))
        rep = tgsi(x, y, small_cfg())
        assert np.isclose(rep.aggregate, np.mean(rep.tgsi), atol=1e-12)
        assert np.allclose(rep.tgsi,
                           np.array(rep.luminance) * np.array(rep.covariance))

    def test_accepts_1d_input(self, rng):
        x = rng.normal(size=25)
        rep = tgsi(x, x.copy(), small_cfg())
        assert len(rep.tgsi) == 1
        assert abs(rep.aggregate - 1.0) < 1e-9

    def test_anticorrelated_shapes_score_negative(self):
        t = np.linspace(0, 4 * np.pi, 120)
        y = np.sin(t)
        rep = tgsi(y, -y, small_cfg(height=64, expand=2, downscale_window=4))
        assert rep.aggregate < 0.0

    def test_offset_misaligns_structure(self):
        # stripes keep their area under a vertical shift, so the mean
        # intensities (luminance) barely move; the misalignment lands in
        # the covariance term
        t = np.linspace(0, 4 * np.pi, 100)
        y = np.sin(t)
        cfg = small_cfg(height=60, expand=10, downscale_window=5)
        rep = tgsi(y, y + 3.0, cfg)
        assert rep.covariance[0] < 0.8
        assert rep.aggregate < tgsi(y, y, cfg).aggregate - 0.1

    def test_wider_stripe_tolerates_small_jitter_better(self, rng):
        t = np.linspace(0, 6 * np.pi, 200)
        y = np.sin(t)
        x = y + rng.normal(0, 0.25, size=t.shape)
        narrow = tgsi(x, y, TgsiConfig(render=RenderConfig(
            height=200, expand=0, downscale_window=1))).aggregate
        wide = tgsi(x, y, TgsiConfig(render=RenderConfig(
            height=200, expand=100, downscale_window=10))).aggregate
        assert wide > narrow

    def test_noise_degrades_monotonically_on_average(self):
        cfg = small_cfg(height=48, expand=8, downscale_window=4)
        t = np.linspace(0, 6 * np.pi, 150)
        y = np.sin(t)
        levels = [0.0, 0.4, 0.8]
        means = []
        for sigma in levels:
            vals = []
            for seed in range(20):
                noise = np.random.default_rng(seed).normal(0, sigma, t.shape)
                vals.append(tgsi(y + noise, y, cfg).aggregate)
            means.append(np.mean(vals))
        assert means[0] > means[1] > means[2]

    @settings(max_examples=25, deadline=None)
    @given(seed=st.integers(0, 10**6))
    def test_range_bounds_hold(self, seed):
        rng = np.random.default_rng(seed)
        x = rng.normal(size=(20, 1)) * rng.uniform(0.5, 20)
        y = rng.normal(size=(20, 1)) * rng.uniform(0.5, 20)
        rep = tgsi(x, y, small_cfg())
        assert -1.0 - 1e-12 <= rep.aggregate <= 1.0 + 1e-12
        assert 0.0 < rep.luminance[0] <= 1.0 + 1e-12
