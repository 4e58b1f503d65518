"""Gaussian-shading watermarks for the initial noise of latent diffusion models."""

__version__ = "0.1.0"

from .cipher import KeyMaterial, decrypt_bits, encrypt_bits, keygen
from .codec import (CapacityLayout, WatermarkMessage, aggregate, expand, message_from_text,
                    pack_bits, unpack_bits)
from .detector import (DetectionReport, ExtractionResult, binomial_cdf, detect, extract,
                       p_value, threshold_for_tfpr)
from .diffusion import (ChannelSpec, DiffusionSchedule, LinearDenoiser, ZeroDenoiser,
                        apply_channel, build_schedule, ddim_inverse, ddim_sample)
from .estimator import GaussianShadingWatermarker
from .pipeline import embed
from .sampler import UniformSource, normal_cdf, normal_ppf, reverse_sample, sample_latent

__all__ = [
    "CapacityLayout", "ChannelSpec", "DetectionReport", "DiffusionSchedule", "ExtractionResult",
    "GaussianShadingWatermarker", "KeyMaterial", "LinearDenoiser", "UniformSource",
    "WatermarkMessage", "ZeroDenoiser", "aggregate", "apply_channel", "binomial_cdf",
    "build_schedule", "ddim_inverse", "ddim_sample", "decrypt_bits", "detect", "embed",
    "encrypt_bits", "expand", "extract", "keygen", "message_from_text", "normal_cdf",
    "normal_ppf", "p_value", "pack_bits", "reverse_sample", "sample_latent",
    "threshold_for_tfpr", "unpack_bits",
]
