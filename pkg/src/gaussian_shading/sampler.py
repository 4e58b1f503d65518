"""Mapping ciphertext bits to standard-normal latents and back.

With ``window`` bits per dimension the real line is cut into ``2**window``
equal-probability regions; each dimension lands uniformly inside the region
indexed by its bits, so uniformly random bits give exactly N(0, 1) latents.
"""
from __future__ import annotations

import numpy as np
from scipy.special import erfc

from ._validation import check_bits, check_latent, check_window

_SQRT2 = np.sqrt(2.0)
_SQRT2PI = np.sqrt(2.0 * np.pi)

# Acklam's rational approximation (relative error ~1.15e-9 before refinement).
_A = (-3.969683028665376e01, 2.209460984245205e02, -2.759285104469687e02,
      1.383577518672690e02, -3.066479806614716e01, 2.506628277459239e00)
_B = (-5.447609879822406e01, 1.615858368580409e02, -1.556989798598866e02,
      6.680131188771972e01, -1.328068155288572e01)
_C = (-7.784894002430293e-03, -3.223964580411365e-01, -2.400758277161838e00,
      -2.549732539343734e00, 4.374664141464968e00, 2.938163982698783e00)
_D = (7.784695709041462e-03, 3.224671290700398e-01, 2.445134137142996e00,
      3.754408661907416e00)
_P_LOW = 0.02425


def normal_cdf(x):
    """Standard normal CDF, computed through erfc to keep tail accuracy."""
    out = 0.5 * erfc(-np.asarray(x, dtype=np.float64) / _SQRT2)
    return float(out) if np.ndim(out) == 0 else out


def _lower_half_ppf(p: np.ndarray) -> np.ndarray:
    """Quantile for 0 < p <= 0.5 (initial guess plus one Halley step)."""
    x = np.empty_like(p)
    tail = p < _P_LOW
    if tail.any():
        q = np.sqrt(-2.0 * np.log(p[tail]))
        num = ((((_C[0] * q + _C[1]) * q + _C[2]) * q + _C[3]) * q + _C[4]) * q + _C[5]
        den = (((_D[0] * q + _D[1]) * q + _D[2]) * q + _D[3]) * q + 1.0
        x[tail] = num / den
    mid = ~tail
    if mid.any():
        q = p[mid] - 0.5
        r = q * q
        num = (((((_A[0] * r + _A[1]) * r + _A[2]) * r + _A[3]) * r + _A[4]) * r + _A[5]) * q
        den = ((((_B[0] * r + _B[1]) * r + _B[2]) * r + _B[3]) * r + _B[4]) * r + 1.0
        x[mid] = num / den
    e = 0.5 * erfc(-x / _SQRT2) - p
    u = e * _SQRT2PI * np.exp(0.5 * x * x)
    return x - u / (1.0 + 0.5 * x * u)


def normal_ppf(p):
    """Standard normal quantile function on the open interval (0, 1)."""
    arr = np.asarray(p, dtype=np.float64)
    if not ((arr > 0.0) & (arr < 1.0)).all():
        raise ValueError("normal_ppf is defined only for 0 < p < 1")
    flat = np.atleast_1d(arr).ravel()
    upper = flat > 0.5
    # 1 - p is exact for p > 0.5, so the upper half reuses the lower-tail kernel.
    lower = np.where(upper, 1.0 - flat, flat)
    x = _lower_half_ppf(lower)
    x = np.where(upper, -x, x).reshape(arr.shape)
    return float(x) if arr.ndim == 0 else x


class UniformSource:
    """Seeded stream of uniforms strictly inside (0, 1).

    Values are ``(k + 0.5) / 2**52`` for integer ``k``, so neither endpoint
    can ever be produced.
    """

    def __init__(self, seed=None):
        self.seed = seed
        self._rng = np.random.default_rng(seed)

    def draw(self, n: int) -> np.ndarray:
        k = self._rng.integers(0, 1 << 52, size=n, dtype=np.int64)
        return (k.astype(np.float64) + 0.5) / float(1 << 52)


def _region_index(latent: np.ndarray, window: int) -> np.ndarray:
    regions = 1 << window
    idx = np.floor(regions * normal_cdf(latent)).astype(np.int64)
    return np.clip(idx, 0, regions - 1)


def _bits_to_symbols(bits: np.ndarray, window: int) -> np.ndarray:
    weights = 1 << np.arange(window - 1, -1, -1, dtype=np.int64)
    return bits.reshape(-1, window).astype(np.int64) @ weights


def _symbols_to_bits(symbols: np.ndarray, window: int) -> np.ndarray:
    shifts = np.arange(window - 1, -1, -1, dtype=np.int64)
    return ((symbols[:, None] >> shifts) & 1).astype(np.uint8).ravel()


def sample_latent(cipher, window: int = 1, u_source=None) -> np.ndarray:
    """Draw one latent coordinate per ``window`` ciphertext bits.

    Dimension ``i`` is ``ppf((y_i + u_i) / 2**window)`` with ``y_i`` the
    MSB-first integer of its bits. A ciphertext whose length is not a
    multiple of ``window`` is zero-padded at the end.
    """
    window = check_window(window)
    bits = check_bits(cipher, name="cipher")
    if bits.size < 1:
        raise ValueError("cipher must hold at least one bit")
    if bits.size % window:
        bits = np.concatenate([bits, np.zeros(window - bits.size % window, dtype=np.uint8)])
    if u_source is None:
        u_source = UniformSource()
    elif not isinstance(u_source, UniformSource):
        u_source = UniformSource(u_source)

    y = _bits_to_symbols(bits, window)
    u = u_source.draw(y.size)
    regions = float(1 << window)
    # y + u rounds up to y + 1 when u is within half an ulp of 1; keep the
    # quantile argument strictly inside its own region (and inside (0, 1)).
    lo, hi = y / regions, (y + 1) / regions
    p = np.clip((y + u) / regions, np.nextafter(lo, 1.0), np.nextafter(hi, 0.0))
    z = normal_ppf(p)

    # Floating-point boundary guard: a u within ~1e-16 of a region edge can
    # round across it. Such draws are moved to the region's probability
    # midpoint; this affects O(2**-50) of samples.
    bad = _region_index(z, window) != y
    if bad.any():
        z[bad] = normal_ppf((y[bad] + 0.5) / regions)
    return z


def reverse_sample(latent, window: int = 1, n_bits: int | None = None) -> np.ndarray:
    """Recover ciphertext bits as ``floor(2**window * cdf(z))`` per dimension.

    ``n_bits`` truncates the zero padding added by :func:`sample_latent`.
    """
    window = check_window(window)
    z = check_latent(latent)
    bits = _symbols_to_bits(_region_index(z, window), window)
    if n_bits is not None:
        if not 0 < n_bits <= bits.size or bits.size - n_bits >= window:
            raise ValueError(f"n_bits={n_bits} inconsistent with {z.size} dims at window {window}")
        bits = bits[:n_bits]
    return bits
