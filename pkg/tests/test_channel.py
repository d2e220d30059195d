import numpy as np
import pytest

from dcsi.channel import ChannelRealization, RngSeed, complex_gaussian, sample_channel
from dcsi.errors import InvalidDimensionError


def test_deterministic():
    a = sample_channel(3, RngSeed(9, 4))
    b = sample_channel(3, RngSeed(9, 4))
    assert np.array_equal(a.H, b.H) and np.array_equal(a.Hnorm, b.Hnorm)


def test_streams_differ():
    assert not np.array_equal(sample_channel(2, RngSeed(9, 0)).H, sample_channel(2, RngSeed(9, 1)).H)


def test_small_k_rejected():
    with pytest.raises(InvalidDimensionError):
        sample_channel(1, RngSeed(0))


def test_seed_range():
    with pytest.raises(ValueError):
        RngSeed(-1)
    with pytest.raises(ValueError):
        RngSeed(0, 2 ** 64)


def test_normalized_rows():
    for t in range(50):
        ch = sample_channel(2, RngSeed(1, t))
        np.testing.assert_allclose(np.linalg.norm(ch.Hnorm, axis=1), 1.0, atol=1e-12)
        assert np.all(ch.Hnorm[:, 0].real >= 0) and np.all(np.abs(ch.Hnorm[:, 0].imag) < 1e-15)
        assert np.all(ch.row_norms > 0)
        # Hnorm is H / norm up to one unit-modulus factor per row.
        rot = ch.Hnorm * ch.row_norms[:, None] / ch.H
        np.testing.assert_allclose(rot, np.repeat(rot[:, :1], 2, axis=1))
        np.testing.assert_allclose(np.abs(rot), 1.0)


def test_unit_variance_entries():
    # Draw 10^5 4x4 matrices with one generator, the same sampler the channel uses.
    rng = RngSeed(2).rng(0)
    H = complex_gaussian(rng, (100000, 4, 4))
    m = np.mean(np.abs(H) ** 2)
    assert 0.99 <= m <= 1.01
    assert abs(np.mean(H.real ** 2) - 0.5) < 0.01


def test_isotropy_of_normalized_rows():
    k = 3
    vals = [abs(sample_channel(k, RngSeed(5, t)).Hnorm[0, 0]) ** 2 for t in range(20000)]
    assert abs(np.mean(vals) - 1 / k) <= 0.01


def test_stream_independence():
    a = np.array([sample_channel(2, RngSeed(11, 2 * t)).H[0, 0].real for t in range(10000)])
    b = np.array([sample_channel(2, RngSeed(11, 2 * t + 1)).H[0, 0].real for t in range(10000)])
    assert abs(np.corrcoef(a, b)[0, 1]) < 0.02


def test_from_matrix_validates():
    with pytest.raises(InvalidDimensionError):
        ChannelRealization.from_matrix(np.ones((2, 3)))
    with pytest.raises(InvalidDimensionError):
        ChannelRealization.from_matrix(np.array([[1, 0], [0, 0]]))
