"""Hamming-distance detection with exact binomial calibration, and message extraction."""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from functools import lru_cache

import numpy as np

from ._validation import check_bits, check_latent, check_open_probability, check_window
from .cipher import KeyMaterial, decrypt_bits, encrypt_bits
from .codec import WatermarkMessage, aggregate, expand
from .exceptions import CapacityError, DimensionMismatchError
from .sampler import reverse_sample

_LOG_HALF = math.log(0.5)
_LOG_2PI = math.log(2.0 * math.pi)


def _stirlerr(n: int) -> float:
    """``log(n!) - log(sqrt(2 pi n) (n/e)**n)``, accurate for all n >= 1."""
    if n <= 15:
        return math.lgamma(n + 1.0) - (n + 0.5) * math.log(n) + n - 0.5 * _LOG_2PI
    nn = float(n) * n
    s0, s1, s2, s3, s4 = 1 / 12, 1 / 360, 1 / 1260, 1 / 1680, 1 / 1188
    if n > 500:
        return (s0 - s1 / nn) / n
    if n > 80:
        return (s0 - (s1 - s2 / nn) / nn) / n
    if n > 35:
        return (s0 - (s1 - (s2 - s3 / nn) / nn) / nn) / n
    return (s0 - (s1 - (s2 - (s3 - s4 / nn) / nn) / nn) / nn) / n


def _bd0(x: float, mean: float) -> float:
    """Deviance term ``x log(x/mean) + mean - x`` without cancellation."""
    if abs(x - mean) < 0.1 * (x + mean):
        v = (x - mean) / (x + mean)
        s = (x - mean) * v
        ej = 2.0 * x * v
        v *= v
        j = 1
        while True:
            ej *= v
            s1 = s + ej / (2 * j + 1)
            if s1 == s:
                return s1
            s = s1
            j += 1
    return x * math.log(x / mean) + mean - x


@lru_cache(maxsize=64)
def _log_pmf_table(n: int) -> np.ndarray:
    """Log pmf of Binomial(n, 1/2) via the saddle-point expansion."""
    out = np.empty(n + 1)
    out[0] = out[n] = n * _LOG_HALF
    half = 0.5 * n
    sn = _stirlerr(n)
    for k in range(1, n):
        lc = sn - _stirlerr(k) - _stirlerr(n - k) - _bd0(k, half) - _bd0(n - k, half)
        lf = _LOG_2PI + math.log(k) + math.log1p(-k / n)
        out[k] = lc - 0.5 * lf
    return out


def _tail_sum(log_terms: np.ndarray) -> float:
    m = float(log_terms.max())
    return math.exp(m) * math.fsum(np.exp(log_terms - m))


def _check_count(k, n):
    if n < 1 or not 0 <= k <= n:
        raise ValueError(f"need 0 <= k <= n and n >= 1, got k={k}, n={n}")


def binomial_cdf(k: int, n: int) -> float:
    """``P(Binomial(n, 1/2) <= k)`` by log-domain summation of the exact pmf."""
    k, n = int(k), int(n)
    _check_count(k, n)
    if k == 0:
        return math.ldexp(1.0, -n)
    log_pmf = _log_pmf_table(n)
    if 2 * k < n:
        return _tail_sum(log_pmf[: k + 1])
    # Upper half: sum the (shorter) complement so the result stays accurate near 1.
    hi = log_pmf[k + 1:]
    if hi.size == 0:
        return 1.0
    return 1.0 - _tail_sum(hi)


def p_value(hamming: int, n_bits: int) -> float:
    """Chance of a Hamming distance this small between unrelated bit strings."""
    return binomial_cdf(hamming, n_bits)


@lru_cache(maxsize=1024)
def threshold_for_tfpr(n_bits: int, tfpr: float) -> int:
    """Smallest ``k`` with ``P(Binomial(n_bits, 1/2) <= k) >= tfpr``."""
    tfpr = check_open_probability(tfpr, "tfpr")
    if n_bits < 1:
        raise ValueError("n_bits must be >= 1")
    lo, hi = 0, n_bits
    while lo < hi:
        mid = (lo + hi) // 2
        if binomial_cdf(mid, n_bits) >= tfpr:
            hi = mid
        else:
            lo = mid + 1
    return lo


def hamming(a, b) -> int:
    a, b = check_bits(a, name="a"), check_bits(b, name="b")
    if a.size != b.size:
        raise DimensionMismatchError(f"cannot compare bit strings of lengths {a.size} and {b.size}")
    return int(np.count_nonzero(a != b))


@dataclass(frozen=True)
class DetectionReport:
    hamming: int
    threshold: int
    tfpr: float
    p_value: float
    detected: bool
    n_bits: int

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class ExtractionResult:
    message: np.ndarray
    bit_accuracy: float
    exact_match: bool | None = None

    @property
    def m_bits(self) -> int:
        return int(self.message.size)

    def as_message(self) -> WatermarkMessage:
        return WatermarkMessage(self.message)

    def to_dict(self) -> dict:
        msg = self.as_message()
        return {
            "bits": "".join(map(str, self.message.tolist())),
            "text": msg.to_text(),
            "bit_accuracy": self.bit_accuracy,
            "exact_match": self.exact_match,
        }


def reference_ciphertext(message, key: KeyMaterial, n_bits: int) -> np.ndarray:
    """The ciphertext an embedding of ``message`` under ``key`` would carry."""
    return encrypt_bits(expand(message, n_bits), key)


def _message_bits(message) -> np.ndarray:
    if isinstance(message, WatermarkMessage):
        return message.payload
    return check_bits(message, name="message")


def detect_bits(cipher, key: KeyMaterial, message, tfpr: float = 0.01) -> DetectionReport:
    """Detection on an already-recovered ciphertext."""
    cipher = check_bits(cipher, name="cipher")
    n = cipher.size
    if n < _message_bits(message).size:
        raise CapacityError(f"{n}-bit ciphertext is shorter than the message")
    tau = threshold_for_tfpr(n, float(tfpr))
    eta = hamming(cipher, reference_ciphertext(message, key, n))
    return DetectionReport(eta, tau, float(tfpr), p_value(eta, n), eta <= tau, n)


def _recover(latent, window, n_bits):
    window = check_window(window)
    z = check_latent(latent)
    if n_bits is None:
        n_bits = z.size * window
    elif -(-n_bits // window) != z.size:
        raise DimensionMismatchError(
            f"{z.size}-dim latent cannot carry {n_bits} bits at window {window}"
        )
    return reverse_sample(z, window, n_bits)


def detect(latent, key: KeyMaterial, message, window: int = 1, tfpr: float = 0.01,
           n_bits: int | None = None) -> DetectionReport:
    """Does ``latent`` carry ``message`` under ``key``?

    The recovered ciphertext is compared bit by bit with a fresh encryption of
    the expanded message; the watermark is declared present when the Hamming
    distance does not exceed the binomial quantile for ``tfpr``.
    """
    check_open_probability(tfpr, "tfpr")
    return detect_bits(_recover(latent, window, n_bits), key, message, tfpr)


def extract_bits(cipher, key: KeyMaterial, m_bits: int, truth=None) -> ExtractionResult:
    cipher = check_bits(cipher, name="cipher")
    if m_bits > cipher.size:
        raise CapacityError(f"cannot extract {m_bits} bits from a {cipher.size}-bit capacity")
    plain = decrypt_bits(cipher, key)
    message = aggregate(plain, m_bits)
    # Without ground truth, accuracy is agreement with the re-expanded vote.
    ref = message if truth is None else _message_bits(truth)
    if ref.size != m_bits:
        raise DimensionMismatchError(f"truth has {ref.size} bits, expected {m_bits}")
    accuracy = 1.0 - hamming(plain, expand(ref, plain.size)) / plain.size
    exact = None if truth is None else bool(np.array_equal(message, ref))
    return ExtractionResult(message, accuracy, exact)


def extract(latent, key: KeyMaterial, m_bits: int, window: int = 1, truth=None,
            n_bits: int | None = None) -> ExtractionResult:
    """Decrypt the recovered ciphertext and majority-vote each message bit."""
    return extract_bits(_recover(latent, window, n_bits), key, int(m_bits), truth)
