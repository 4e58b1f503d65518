"""Deterministic DDIM sampling/inversion over toy denoisers, plus degradation channels.

Nothing here loads a neural network. Denoisers are small callables
``denoiser(z, t) -> eps_hat`` and the pipeline effects of a real latent
diffusion model (autoencoder loss, attacks) are stood in for by channels.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from ._validation import check_bits, check_latent
from .exceptions import ChannelError, NumericalOverflowError

POLICIES = ("linear", "cosine", "quadratic", "exponential")
MODES = ("standard", "paper_literal")


@dataclass(frozen=True)
class DiffusionSchedule:
    """Cumulative signal coefficients ``alphas[t]`` for ``t = 0..steps``."""

    alphas: np.ndarray
    policy: str = "linear"

    def __post_init__(self):
        a = np.asarray(self.alphas, dtype=np.float64)
        if a.ndim != 1 or a.size < 2:
            raise ValueError("a schedule needs at least two coefficients")
        if not ((a > 0) & (a <= 1)).all():
            raise ValueError("schedule coefficients must lie in (0, 1]")
        if a[0] < 0.999:
            raise ValueError(f"alphas[0] must be >= 0.999, got {a[0]}")
        if not (np.diff(a) < 0).all():
            raise ValueError("schedule coefficients must strictly decrease")
        a.setflags(write=False)
        object.__setattr__(self, "alphas", a)

    @property
    def steps(self) -> int:
        return self.alphas.size - 1

    def timesteps(self, num_steps: int | None = None) -> np.ndarray:
        """Ascending index grid ``0 = t_0 < ... < t_S = T`` with uniform stride."""
        if num_steps is None:
            num_steps = self.steps
        if not 1 <= num_steps <= self.steps:
            raise ValueError(f"num_steps must be in [1, {self.steps}], got {num_steps}")
        return np.round(np.linspace(0, self.steps, num_steps + 1)).astype(np.int64)

    def describe(self) -> dict:
        return {"policy": self.policy, "steps": self.steps}


def build_schedule(policy: str = "linear", steps: int = 1000,
                   beta_start: float = 1e-4, beta_end: float = 0.02,
                   cosine_offset: float = 0.008) -> DiffusionSchedule:
    """Build a noise schedule of ``steps`` transitions (``steps + 1`` coefficients).

    ``linear``, ``quadratic`` and ``exponential`` interpolate per-step betas
    between ``beta_start`` and ``beta_end`` (linearly, linearly in sqrt, and
    geometrically); ``cosine`` follows the squared-cosine cumulative curve.
    """
    if steps < 1:
        raise ValueError("steps must be >= 1")
    if policy == "cosine":
        t = np.arange(steps + 1) / steps
        f = np.cos((t + cosine_offset) / (1 + cosine_offset) * np.pi / 2) ** 2
        betas = np.clip(1.0 - f[1:] / f[:-1], 1e-8, 0.999)
    else:
        if not (0.0 < beta_start < 1.0 and 0.0 < beta_end < 1.0):
            raise ValueError("beta endpoints must lie in (0, 1)")
        if policy == "linear":
            betas = np.linspace(beta_start, beta_end, steps)
        elif policy == "quadratic":
            betas = np.linspace(np.sqrt(beta_start), np.sqrt(beta_end), steps) ** 2
        elif policy == "exponential":
            betas = np.geomspace(beta_start, beta_end, steps)
        else:
            raise ValueError(f"unknown schedule policy {policy!r}; expected one of {POLICIES}")
    alphas = np.concatenate([[1.0], np.cumprod(1.0 - betas)])
    return DiffusionSchedule(alphas, policy)


class Denoiser:
    """Noise-estimation contract: ``denoiser(z, t)`` returns an array shaped like ``z``."""

    def __call__(self, z: np.ndarray, t: int) -> np.ndarray:
        raise NotImplementedError

    def describe(self) -> dict:
        return {"kind": type(self).__name__}


class ZeroDenoiser(Denoiser):
    def __call__(self, z, t):
        return np.zeros_like(z)

    def describe(self):
        return {"kind": "zero"}


class LinearDenoiser(Denoiser):
    """``eps_hat = c[t] * z`` for a per-timestep scalar sequence ``c``."""

    def __init__(self, coefs):
        self.coefs = np.atleast_1d(np.asarray(coefs, dtype=np.float64))

    def coef(self, t: int) -> float:
        if self.coefs.size == 1:
            return float(self.coefs[0])
        return float(self.coefs[t])

    def __call__(self, z, t):
        return self.coef(t) * z

    @classmethod
    def gaussian_optimal(cls, schedule: DiffusionSchedule, data_std: float = 0.5) -> "LinearDenoiser":
        """Exact noise predictor when the clean data is N(0, data_std**2)."""
        a = schedule.alphas
        return cls(np.sqrt(1.0 - a) / (a * data_std**2 + 1.0 - a))

    def describe(self):
        return {"kind": "linear", "coefs": self.coefs.size}


def _step(z, eps, a_cur, a_next, mode):
    if mode == "standard":
        x0 = (z - np.sqrt(1.0 - a_cur) * eps) / np.sqrt(a_cur)
        return np.sqrt(a_next) * x0 + np.sqrt(1.0 - a_next) * eps
    # Update rule exactly as printed in the source method description.
    drift = 0.5 * (np.sqrt((1.0 - a_cur) / a_cur) - np.sqrt((1.0 - a_next) / a_next))
    return (z * np.sqrt(a_cur) + drift * eps) / np.sqrt(a_next)


def _run(z, path, schedule, denoiser, mode):
    if mode not in MODES:
        raise ValueError(f"unknown mode {mode!r}; expected one of {MODES}")
    a = schedule.alphas
    with np.errstate(over="ignore", invalid="ignore"):
        for t_cur, t_next in zip(path[:-1], path[1:]):
            eps = np.asarray(denoiser(z, int(t_cur)), dtype=np.float64)
            if eps.shape != z.shape:
                raise ValueError(f"denoiser returned shape {eps.shape}, expected {z.shape}")
            z = _step(z, eps, a[t_cur], a[t_next], mode)
            if not np.isfinite(z).all():
                raise NumericalOverflowError(f"non-finite latent after step {t_cur} -> {t_next}")
    return z


def ddim_sample(z_T, schedule: DiffusionSchedule, denoiser: Callable | None = None,
                mode: str = "standard", num_steps: int | None = None) -> np.ndarray:
    """Deterministically denoise ``z_T`` down to ``z_0``."""
    z = check_latent(z_T, name="z_T").copy()
    path = schedule.timesteps(num_steps)[::-1]
    return _run(z, path, schedule, denoiser or ZeroDenoiser(), mode)


def ddim_inverse(z_0, schedule: DiffusionSchedule, denoiser: Callable | None = None,
                 mode: str = "standard", num_steps: int | None = None) -> np.ndarray:
    """Approximate inversion ``z_0 -> z_T``, evaluating the denoiser at the current state."""
    z = check_latent(z_0, name="z_0").copy()
    path = schedule.timesteps(num_steps)
    return _run(z, path, schedule, denoiser or ZeroDenoiser(), mode)


def roundtrip_mse(z_T, schedule, denoiser=None, mode="standard", num_steps=None) -> float:
    z_T = check_latent(z_T, name="z_T")
    z0 = ddim_sample(z_T, schedule, denoiser, mode, num_steps)
    rec = ddim_inverse(z0, schedule, denoiser, mode, num_steps)
    return float(np.mean((rec - z_T) ** 2))


# --- channels --------------------------------------------------------------

CHANNELS = ("identity", "additive_gaussian", "bit_flip", "segment_resample")


@dataclass(frozen=True)
class ChannelSpec:
    kind: str = "identity"
    sigma: float = 0.0
    p_flip: float = 0.0
    start: int = 0
    stop: int = 0
    seed: int | None = None

    def __post_init__(self):
        if self.kind not in CHANNELS:
            raise ChannelError(f"unknown channel {self.kind!r}; expected one of {CHANNELS}")
        if self.kind == "additive_gaussian" and not self.sigma >= 0:
            raise ChannelError("sigma must be >= 0")
        if self.kind == "bit_flip" and not 0.0 <= self.p_flip <= 1.0:
            raise ChannelError("p_flip must lie in [0, 1]")
        if self.kind == "segment_resample" and not 0 <= self.start <= self.stop:
            raise ChannelError("segment range must satisfy 0 <= start <= stop")

    @property
    def acts_on_bits(self) -> bool:
        return self.kind == "bit_flip"

    @classmethod
    def parse(cls, text: str, seed: int | None = None) -> "ChannelSpec":
        """Parse ``identity``, ``additive_gaussian:S``, ``bit_flip:P`` or
        ``segment_resample:START:STOP``."""
        kind, *args = text.strip().split(":")
        if kind == "gaussian":
            kind = "additive_gaussian"
        try:
            if kind == "identity" and not args:
                return cls("identity", seed=seed)
            if kind == "additive_gaussian" and len(args) == 1:
                return cls(kind, sigma=float(args[0]), seed=seed)
            if kind == "bit_flip" and len(args) == 1:
                return cls(kind, p_flip=float(args[0]), seed=seed)
            if kind == "segment_resample" and len(args) == 2:
                return cls(kind, start=int(args[0]), stop=int(args[1]), seed=seed)
        except ValueError as exc:
            if isinstance(exc, ChannelError):
                raise
            raise ChannelError(f"bad channel parameters in {text!r}") from exc
        raise ChannelError(f"cannot parse channel spec {text!r}")

    def to_string(self) -> str:
        if self.kind == "additive_gaussian":
            return f"additive_gaussian:{self.sigma!r}"
        if self.kind == "bit_flip":
            return f"bit_flip:{self.p_flip!r}"
        if self.kind == "segment_resample":
            return f"segment_resample:{self.start}:{self.stop}"
        return "identity"


def apply_channel(carrier, spec: ChannelSpec, rng: np.random.Generator | None = None):
    """Degrade a latent (float vector) or a bit string (integer vector).

    ``bit_flip`` needs bits; ``additive_gaussian`` and ``segment_resample``
    need latents; ``identity`` takes either.
    """
    if rng is None:
        rng = np.random.default_rng(spec.seed)
    is_bits = np.issubdtype(np.asarray(carrier).dtype, np.integer) or np.asarray(carrier).dtype == bool
    if spec.kind == "identity":
        return check_bits(carrier) if is_bits else check_latent(carrier)
    if spec.acts_on_bits != is_bits:
        carrier_name = "bit string" if is_bits else "latent"
        raise ChannelError(f"channel {spec.kind!r} cannot be applied to a {carrier_name}")
    if spec.kind == "bit_flip":
        bits = check_bits(carrier)
        flips = rng.random(bits.size) < spec.p_flip
        return bits ^ flips.astype(np.uint8)
    z = check_latent(carrier).copy()
    if spec.kind == "additive_gaussian":
        return z + spec.sigma * rng.standard_normal(z.size)
    if spec.stop > z.size:
        raise ChannelError(f"segment [{spec.start}, {spec.stop}) exceeds latent of {z.size} dims")
    z[spec.start:spec.stop] = rng.standard_normal(spec.stop - spec.start)
    return z
