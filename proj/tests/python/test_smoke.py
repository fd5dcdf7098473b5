"""Smoke tests for the focalforge python bindings."""

import math

import numpy as np
import pytest

import focalforge as ff


def test_stratify_depth_boundaries():
    depth = np.zeros((4, 4))
    assert (ff.stratify_depth(depth, 4) == 0).all()
    assert (ff.stratify_depth(depth + 1.0, 4) == 3).all()
    assert (ff.stratify_depth(depth + 0.5, 4) == 2).all()
    with pytest.raises(ValueError):
        ff.stratify_depth(depth, 0)


def test_synthesize_and_drop():
    img, depth = ff.make_scene(seed=3, size=32)
    stack = ff.synthesize_stack(img, depth, 4, 1.5)
    assert stack.shape == (4, 32, 32, 3)
    assert stack.min() >= 0.0 and stack.max() <= 1.0

    kept, dropped = ff.drop_layers(stack, 0.5, seed=9)
    assert kept.shape[0] == 2
    assert len(dropped) == 2

    same, dropped0 = ff.drop_layers(stack, 0.0, seed=9)
    assert dropped0 == []
    np.testing.assert_array_equal(same, stack)


def test_dof_checks():
    assert ff.check_completeness([(0.0, 0.5), (0.5, 1.0)], (0.0, 1.0))
    assert not ff.check_completeness([(0.0, 0.4), (0.6, 1.0)], (0.0, 1.0))
    assert ff.check_efficiency([(0.0, 0.5), (0.5, 1.0)])
    assert not ff.check_efficiency([(0.0, 0.6), (0.5, 1.0)])


def test_schedule_math():
    s = ff.make_schedule(100, 1e-4, 0.02)
    alpha_bar = np.asarray(s.alpha_bar)
    alpha = np.asarray(s.alpha)
    assert alpha_bar[0] == alpha[0]
    assert (np.diff(alpha_bar) < 0).all()
    np.testing.assert_allclose(alpha_bar[1:], alpha_bar[:-1] * alpha[1:], rtol=0, atol=0)

    z = np.random.default_rng(0).normal(size=(4, 4))
    zeros = np.zeros_like(z)
    np.testing.assert_allclose(
        ff.q_sample(z, 10, zeros, s), math.sqrt(alpha_bar[9]) * z, rtol=1e-12
    )

    # One-step inversion at t=1.
    eps = np.random.default_rng(1).normal(size=(4, 4))
    z1 = ff.q_sample(z, 1, eps, s)
    back = ff.p_sample_step(z1, 1, eps, s)
    np.testing.assert_allclose(back, z, atol=1e-10)


def test_metrics():
    img, _ = ff.make_scene(seed=5, size=32)
    assert ff.ssim(img, img) == pytest.approx(1.0, abs=1e-12)
    assert ff.psnr(img, img) == 100.0
    flat = np.full((16, 16, 3), 0.5)
    assert ff.sharpness(flat) == 0.0


def test_baseline_fusers():
    img, depth = ff.make_scene(seed=7, size=32)
    stack = ff.synthesize_stack(img, depth, 3, 2.0)
    fused, decision = ff.laplacian_argmax_fuse(stack)
    assert fused.shape == img.shape
    assert decision.shape == (32, 32)
    assert decision.min() >= 0 and decision.max() <= 2

    avg = ff.average_fuse(stack)
    np.testing.assert_allclose(avg, stack.mean(axis=0), atol=1e-12)
