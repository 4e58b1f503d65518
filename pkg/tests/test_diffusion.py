import numpy as np
import pytest

from gaussian_shading.diffusion import (POLICIES, ChannelSpec, LinearDenoiser, ZeroDenoiser,
                                        apply_channel, build_schedule, ddim_inverse, ddim_sample,
                                        roundtrip_mse)
from gaussian_shading.exceptions import ChannelError, NumericalOverflowError
from gaussian_shading.sampler import reverse_sample

from oracles import linear_ddim_gain


@pytest.fixture(scope="module")
def schedule():
    return build_schedule("linear", 1000)


@pytest.fixture
def z(rng):
    return rng.standard_normal(500)


def test_linear_single_step():
    s = build_schedule("linear", 1)
    assert s.alphas.size == 2 and s.alphas[0] > s.alphas[1]


@pytest.mark.parametrize("policy", POLICIES)
def test_policies_monotone_and_bounded(policy):
    s = build_schedule(policy, 500)
    a = s.alphas
    assert a.size == 501
    assert ((a > 0) & (a <= 1)).all() and a[0] >= 0.999
    assert np.all(np.diff(a) < 0)
    assert a[-1] < a[250] < a[0]


def test_invalid_schedules():
    with pytest.raises(ValueError):
        build_schedule("linear", 0)
    with pytest.raises(ValueError):
        build_schedule("linear", 10, beta_start=0.0)
    with pytest.raises(ValueError):
        build_schedule("sigmoid", 10)


def test_zero_denoiser_closed_form(schedule, z):
    out = ddim_sample(z, schedule, ZeroDenoiser(), num_steps=500)
    expected = np.sqrt(schedule.alphas[0] / schedule.alphas[-1]) * z
    assert np.max(np.abs(out - expected) / np.abs(expected)) <= 1e-12


def test_linear_with_zero_coefs_equals_zero_denoiser(schedule, z):
    a = ddim_sample(z, schedule, LinearDenoiser(np.zeros(1001)), num_steps=100)
    b = ddim_sample(z, schedule, ZeroDenoiser(), num_steps=100)
    assert np.array_equal(a, b)


@pytest.mark.parametrize("num_steps", [10, 500])
def test_linear_denoiser_matches_affine_oracle(schedule, z, num_steps):
    den = LinearDenoiser.gaussian_optimal(schedule)
    path = list(np.round(np.linspace(0, 1000, num_steps + 1)).astype(int))
    gain = linear_ddim_gain(schedule.alphas.tolist(), den.coefs.tolist(), path[::-1])
    out = ddim_sample(z, schedule, den, num_steps=num_steps)
    assert np.allclose(out, gain * z, rtol=1e-12, atol=0)
    inv_gain = linear_ddim_gain(schedule.alphas.tolist(), den.coefs.tolist(), path)
    assert np.allclose(ddim_inverse(out, schedule, den, num_steps=num_steps), inv_gain * out,
                       rtol=1e-12, atol=0)


@pytest.mark.parametrize("policy", POLICIES)
def test_zero_denoiser_roundtrip_exact(policy, z):
    s = build_schedule(policy, 1000)
    assert np.allclose(ddim_inverse(ddim_sample(z, s), s), z, rtol=1e-12, atol=0)
    assert np.allclose(ddim_sample(ddim_inverse(z, s), s), z, rtol=1e-12, atol=0)


def test_linear_roundtrip_mse_decreases(schedule, z):
    den = LinearDenoiser.gaussian_optimal(schedule)
    mses = [roundtrip_mse(z, schedule, den, num_steps=n) for n in (10, 50, 100, 500)]
    assert all(a > b for a, b in zip(mses, mses[1:]))


def test_linearity(schedule, z):
    den = LinearDenoiser.gaussian_optimal(schedule)
    for f in (ddim_sample, ddim_inverse):
        assert np.allclose(f(3.0 * z, schedule, den, num_steps=50),
                           3.0 * f(z, schedule, den, num_steps=50), rtol=1e-12)


def test_deterministic(schedule, z):
    den = LinearDenoiser.gaussian_optimal(schedule)
    assert np.array_equal(ddim_sample(z, schedule, den), ddim_sample(z.copy(), schedule, den))


def test_paper_literal_mode_zero_denoiser(schedule, z):
    out = ddim_sample(z, schedule, ZeroDenoiser(), mode="paper_literal", num_steps=50)
    assert np.allclose(out, np.sqrt(schedule.alphas[-1] / schedule.alphas[0]) * z, rtol=1e-12)


def test_overflow_is_reported(schedule, z):
    with pytest.raises(NumericalOverflowError):
        ddim_inverse(z, schedule, LinearDenoiser(1e200), num_steps=10)


def test_bad_mode(schedule, z):
    with pytest.raises(ValueError):
        ddim_sample(z, schedule, mode="bdia")


# --- channels ---

def test_identity_channel(z):
    assert np.array_equal(apply_channel(z, ChannelSpec()), z)
    bits = (z > 0).astype(np.uint8)
    assert np.array_equal(apply_channel(bits, ChannelSpec()), bits)


def test_bit_flip_rate():
    bits = np.zeros(100_000, dtype=np.uint8)
    p = 0.056
    flipped = apply_channel(bits, ChannelSpec("bit_flip", p_flip=p, seed=3))
    assert abs(flipped.mean() - p) <= 5 * np.sqrt(p * (1 - p) / bits.size)


def test_bit_flip_hamming_table3_calibration():
    p = 1 - 0.944
    bits = np.zeros(500, dtype=np.uint8)
    counts = [int(apply_channel(bits, ChannelSpec("bit_flip", p_flip=p, seed=s)).sum())
              for s in range(200)]
    assert abs(np.mean(counts) - 500 * p) <= 3 * np.sqrt(500 * p * (1 - p))


def test_additive_gaussian(z):
    out = apply_channel(z, ChannelSpec("additive_gaussian", sigma=0.1, seed=0))
    assert 0.08 < np.std(out - z) < 0.12


def test_segment_resample_destroys_half(rng):
    bits = rng.integers(0, 2, 500).astype(np.uint8)
    from gaussian_shading.sampler import sample_latent
    lat = sample_latent(bits, 1, 0)
    agree = []
    for seed in range(200):
        out = apply_channel(lat, ChannelSpec("segment_resample", start=250, stop=500, seed=seed))
        rec = reverse_sample(out)
        assert np.array_equal(rec[:250], bits[:250])
        agree.append((rec[250:] == bits[250:]).mean())
    assert abs(np.mean(agree) - 0.5) <= 5 * np.sqrt(0.25 / (250 * 200))


def test_channel_carrier_mismatch(z):
    with pytest.raises(ChannelError):
        apply_channel(z, ChannelSpec("bit_flip", p_flip=0.1))
    with pytest.raises(ChannelError):
        apply_channel(np.zeros(5, np.uint8), ChannelSpec("additive_gaussian", sigma=1.0))
    with pytest.raises(ChannelError):
        apply_channel(z, ChannelSpec("segment_resample", start=400, stop=600))


@pytest.mark.parametrize("text,kind", [("identity", "identity"), ("bit_flip:0.056", "bit_flip"),
                                       ("gaussian:0.5", "additive_gaussian"),
                                       ("segment_resample:250:500", "segment_resample")])
def test_channel_parse(text, kind):
    spec = ChannelSpec.parse(text)
    assert spec.kind == kind
    assert ChannelSpec.parse(spec.to_string()) == spec


@pytest.mark.parametrize("text", ["bit_flip", "bit_flip:1.5", "nope", "segment_resample:5:1",
                                  "additive_gaussian:-1"])
def test_channel_parse_errors(text):
    with pytest.raises(ChannelError):
        ChannelSpec.parse(text)
