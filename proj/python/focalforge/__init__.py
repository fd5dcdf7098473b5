"""Focal-stack synthesis, deterministic fusion, and diffusion-based restoration."""

from focalforge._core import (  # noqa: F401
    FusionModel,
    NoiseSchedule,
    average_fuse,
    check_completeness,
    check_efficiency,
    drop_layers,
    laplacian_argmax_fuse,
    make_scene,
    make_schedule,
    p_sample_step,
    psnr,
    q_sample,
    restore,
    sharpness,
    ssim,
    stratify_depth,
    synthesize_stack,
)

__version__ = "1.0.0"
