import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from thimv.core import RfChannelFrame
from thimv.errors import InvalidArgument
from thimv.separation import PiPair, bandpass_2f0, harmonic_response, pi_combine

FS, F0 = 50e6, 1.96e6


def frame(data, pol, t0=0.0, idx=0):
    return RfChannelFrame(np.atleast_2d(data), FS, t0, pol, idx)


def tone(f, n=4096, ch=2):
    t = np.arange(n) / FS
    return np.tile(np.cos(2 * np.pi * f * t), (ch, 1))


def test_pi_cancels_linear_term(rng):
    f = rng.standard_normal((3, 50))
    h = rng.standard_normal((3, 50))
    out = pi_combine(PiPair(frame(f + h, 1), frame(-f + h, -1)))
    np.testing.assert_allclose(out.data, 2 * h, atol=1e-14)
    assert out.polarity == 0


def test_pi_pure_fundamental_is_zero(rng):
    f = rng.standard_normal((3, 50))
    out = pi_combine(PiPair(frame(f, 1), frame(-f, -1)))
    assert not out.data.any()


@pytest.mark.parametrize(
    "minus",
    [
        frame(np.zeros((2, 10)), -1),
        frame(np.zeros((3, 10)), -1, t0=1e-6),
        frame(np.zeros((3, 10)), -1, idx=1),
        frame(np.zeros((3, 10)), 1),
    ],
)
def test_pair_rejects_mismatch(minus):
    with pytest.raises(InvalidArgument):
        PiPair(frame(np.zeros((3, 10)), 1), minus)


@given(st.integers(0, 2**32 - 1))
def test_pi_commutes_in_data(seed):
    rng = np.random.default_rng(seed)
    a, b = rng.standard_normal((2, 2, 16))
    ab = pi_combine(PiPair(frame(a, 1), frame(b, -1))).data
    ba = pi_combine(PiPair(frame(b, 1), frame(a, -1))).data
    assert np.array_equal(ab, ba)


def test_bandpass_rejects_fundamental():
    x = frame(tone(F0), 0)
    y = bandpass_2f0(x, F0)
    interior = slice(512, -512)
    ratio = np.mean(y.data[:, interior] ** 2) / np.mean(x.data[:, interior] ** 2)
    assert 10 * np.log10(ratio) <= -40


def test_bandpass_keeps_second_harmonic():
    x = frame(tone(2 * F0), 0)
    y = bandpass_2f0(x, F0)
    interior = slice(512, -512)
    ratio = np.mean(y.data[:, interior] ** 2) / np.mean(x.data[:, interior] ** 2)
    assert abs(10 * np.log10(ratio)) <= 1.0


def test_bandpass_zero_and_shape():
    x = frame(np.zeros((4, 300)), 0)
    y = bandpass_2f0(x, F0)
    assert y.data.shape == (4, 300) and not y.data.any()


@pytest.mark.parametrize("bw", [0.0, 1.0, -0.2])
def test_bandpass_rejects_bandwidth(bw):
    with pytest.raises(InvalidArgument):
        bandpass_2f0(frame(np.zeros((1, 16)), 0), F0, bw)


def test_response_shape():
    f = np.array([2 * F0, 2 * F0 + 0.5 * F0, 2 * F0 - 0.5 * F0])
    h = harmonic_response(f, F0, 0.5)
    assert h[0] == 1.0
    np.testing.assert_allclose(h[1:], 0.1, rtol=1e-12)
