import numpy as np
import pytest

from mrp.streams import ConstantStream, PhiloxStream, SequenceStream


def test_philox_is_reproducible_and_keyed():
    a = PhiloxStream(5, 7).uniforms(1000)
    b = PhiloxStream(5, 7).uniforms(1000)
    c = PhiloxStream(5, 8).uniforms(1000)
    np.testing.assert_array_equal(a, b)
    assert not np.array_equal(a, c)


def test_philox_chunking_does_not_matter():
    s = PhiloxStream(1, 2)
    parts = np.concatenate([s.uniforms(3), s.uniforms(64), s.uniforms(933)])
    np.testing.assert_array_equal(parts, PhiloxStream(1, 2).uniforms(1000))


def test_philox_open_interval_and_uniformity():
    u = PhiloxStream(0, 0).uniforms(200000)
    assert u.min() > 0.0 and u.max() < 1.0
    assert u.mean() == pytest.approx(0.5, abs=0.005)


def test_sequence_and_constant_streams():
    s = SequenceStream([0.1, 0.2, 0.3])
    np.testing.assert_array_equal(s.uniforms(2), [0.1, 0.2])
    with pytest.raises(IndexError):
        s.uniforms(2)
    np.testing.assert_array_equal(ConstantStream(0.5).uniforms(3), [0.5] * 3)
    with pytest.raises(ValueError):
        ConstantStream(1.0)
