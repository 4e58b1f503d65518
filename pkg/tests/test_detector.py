import random

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from gaussian_shading import embed, keygen, message_from_text
from gaussian_shading.cipher import decrypt_bits, encrypt_bits
from gaussian_shading.detector import (binomial_cdf, detect, detect_bits, extract, hamming,
                                       p_value, reference_ciphertext, threshold_for_tfpr)
from gaussian_shading.diffusion import ChannelSpec, apply_channel
from gaussian_shading.exceptions import CapacityError, DimensionMismatchError
from gaussian_shading.sampler import reverse_sample

from oracles import exact_binomial_quantile, exact_half_binomial_cdf

# frozen from exact rational summation
CDF_250_500 = 0.5178323227766746
CDF_224_500 = 0.011233102459995854


def test_binomial_cdf_examples():
    assert binomial_cdf(500, 500) == 1.0
    assert binomial_cdf(250, 500) == pytest.approx(CDF_250_500, abs=1e-12)
    assert binomial_cdf(224, 500) == pytest.approx(CDF_224_500, abs=1e-12)


@pytest.mark.parametrize("n", [1, 2, 7, 64, 500, 1001])
def test_binomial_cdf_all_k_small_n(n):
    for k in range(n + 1):
        assert abs(binomial_cdf(k, n) - float(exact_half_binomial_cdf(k, n))) <= 1e-12


def test_binomial_cdf_random_large_n():
    r = random.Random(7)
    for _ in range(10):
        n = r.randint(2000, 10_000)
        k = r.randint(n // 2 - 150, n // 2 + 150)
        assert abs(binomial_cdf(k, n) - float(exact_half_binomial_cdf(k, n))) <= 1e-12


@pytest.mark.parametrize("k,n", [(-1, 5), (6, 5), (0, 0)])
def test_binomial_cdf_domain(k, n):
    with pytest.raises(ValueError):
        binomial_cdf(k, n)


def test_threshold_examples():
    assert threshold_for_tfpr(500, 0.01) == exact_binomial_quantile(500, 0.01) == 224
    assert threshold_for_tfpr(500, 0.5) == 250
    assert threshold_for_tfpr(500, 0.99) == exact_binomial_quantile(500, 0.99) == 276


@pytest.mark.parametrize("tfpr", [0.0, 1.0, -0.5, 2.0])
def test_threshold_domain(tfpr):
    with pytest.raises(ValueError):
        threshold_for_tfpr(500, tfpr)


@pytest.mark.parametrize("n", [64, 500, 1000])
@pytest.mark.parametrize("tfpr", [1e-6, 0.001, 0.01, 0.05, 0.3])
def test_threshold_quantile_definition(n, tfpr):
    tau = threshold_for_tfpr(n, tfpr)
    assert tau == exact_binomial_quantile(n, tfpr)
    assert p_value(tau, n) >= tfpr
    if tau > 0:
        assert p_value(tau - 1, n) < tfpr


def test_p_value_examples():
    assert p_value(250, 500) == pytest.approx(CDF_250_500, abs=1e-12)
    assert p_value(0, 500) == 2.0**-500
    vals = [p_value(k, 500) for k in range(501)]
    assert all(a <= b for a, b in zip(vals, vals[1:]))


def test_detect_fresh_embed(key):
    msg = message_from_text("watermark")
    report = detect(embed(msg, key, u_source=3), key, msg)
    assert report.hamming == 0 and report.detected and report.threshold == 224
    assert report.p_value == p_value(0, 500)
    assert report.to_dict()["n_bits"] == 500


def test_detect_clean_latent_near_half(key, rng):
    msg = message_from_text("watermark")
    etas = [detect(rng.standard_normal(500), key, msg).hamming for _ in range(300)]
    assert abs(np.mean(etas) - 250) < 5


def test_detect_through_bit_flip(key):
    msg = message_from_text("X")
    z = embed(msg, key, u_source=0)
    bits = apply_channel(reverse_sample(z), ChannelSpec("bit_flip", p_flip=0.056, seed=1))
    report = detect_bits(bits, key, msg)
    assert report.hamming < 60 and report.detected


def test_detect_errors(key):
    msg = message_from_text("X")
    with pytest.raises(DimensionMismatchError):
        detect(np.zeros(10), key, msg, n_bits=500)
    with pytest.raises(ValueError):
        detect(np.zeros(500), key, msg, tfpr=0.0)
    with pytest.raises(CapacityError):
        detect(np.zeros(4), key, msg)


def test_detect_is_deterministic(key, rng):
    z = rng.standard_normal(500)
    msg = message_from_text("X")
    assert detect(z, key, msg) == detect(z, key, msg)


@settings(max_examples=40)
@given(st.integers(0, 2**32), st.integers(1, 600))
def test_hamming_invariant_under_cipher(seed, n):
    rng = np.random.default_rng(seed)
    km = keygen(seed=seed)
    a, b = rng.integers(0, 2, (2, n)).astype(np.uint8)
    assert hamming(a, b) == hamming(decrypt_bits(a, km), decrypt_bits(b, km))
    assert hamming(a, b) == hamming(encrypt_bits(a, km), encrypt_bits(b, km))


@pytest.mark.parametrize("text", ["X", "watermark", "héllo ✓"])
@pytest.mark.parametrize("window", [1, 2])
def test_extract_roundtrip(key, text, window):
    msg = message_from_text(text)
    z = embed(msg, key, n_dims=500, window=window, u_source=11)
    res = extract(z, key, msg.m_bits, window, truth=msg)
    assert res.exact_match and res.bit_accuracy == 1.0
    assert res.as_message().to_text() == text


def test_extract_wrong_key(key):
    msg = message_from_text("watermark")
    z = embed(msg, key, u_source=1)
    res = extract(z, keygen(seed=99), msg.m_bits, truth=msg)
    assert not res.exact_match
    assert abs(res.bit_accuracy - 0.5) < 0.1


def test_extract_without_truth_reports_self_consistency(key):
    msg = message_from_text("X")
    res = extract(embed(msg, key, u_source=2), key, 8)
    assert res.exact_match is None and res.bit_accuracy == 1.0


def test_extract_capacity(key):
    with pytest.raises(CapacityError):
        extract(np.zeros(500), key, 501)


def test_reference_ciphertext_is_encrypted_expansion(key):
    msg = message_from_text("X")
    from gaussian_shading.codec import expand
    assert np.array_equal(reference_ciphertext(msg, key, 500), encrypt_bits(expand(msg, 500), key))
