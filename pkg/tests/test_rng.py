import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import stats

from pathdep.rng import normals, philox4x32, poisson, substream_seed, uniforms

# Philox4x32-10 known-answer vectors from the Random123 distribution
KAT = [
    ([0, 0, 0, 0], [0, 0], [0x6627E8D5, 0xE169C58D, 0xBC57AC4C, 0x9B00DBD8]),
    ([0xFFFFFFFF] * 4, [0xFFFFFFFF] * 2, [0x408F276D, 0x41C83B0E, 0xA20BC7C6, 0x6D5451FD]),
    ([0x243F6A88, 0x85A308D3, 0x13198A2E, 0x03707344], [0xA4093822, 0x299F31D0], [0xD16CFE09, 0x94FDCCEB, 0x5001E420, 0x24126EA1]),
]


@pytest.mark.parametrize("ctr, key, expected", KAT)
def test_philox_known_answers(ctr, key, expected):
    assert philox4x32(np.array(ctr, dtype=np.uint32), np.array(key, dtype=np.uint32)).tolist() == expected


@given(st.integers(0, 2**64 - 1), st.integers(0, 1000), st.integers(0, 10**6))
def test_draws_depend_only_on_path_id(seed, step, pid):
    alone = normals(seed, [pid], step, 3)
    batch = normals(seed, [pid + 1, pid, pid + 2], step, 3)
    np.testing.assert_array_equal(alone[0], batch[1])


def test_uniforms_in_open_interval():
    u = uniforms(7, np.arange(5000), 0, 4)
    assert u.min() > 0 and u.max() < 1
    assert stats.kstest(u.ravel(), "uniform").pvalue > 1e-3


def test_normals_distribution():
    z = normals(11, np.arange(20000), 3, 3).ravel()
    assert abs(z.mean()) < 4 / np.sqrt(z.size)
    assert stats.kstest(z, "norm").pvalue > 1e-3


def test_poisson_moments():
    n = poisson(5, np.arange(40000), 2, [0.02, 1.5, 0.0])
    assert np.all(n[:, 2] == 0)
    for k, mu in ((0, 0.02), (1, 1.5)):
        assert abs(n[:, k].mean() - mu) < 4 * np.sqrt(mu / n.shape[0])


def test_substreams_differ():
    assert len({substream_seed(1, 2, j) for j in range(50)}) == 50
    assert substream_seed(1, 2) == substream_seed(1, 2)
