import numpy as np
import pytest

from aearb.rng import CONTINUATION_NOISE, MODEL_NOISE, ORTHOGONAL_NOISE, path_generator, path_normals


def test_path_column_independent_of_batch():
    full = path_normals(3, np.arange(10), 50, 2)
    part = path_normals(3, np.arange(4, 7), 50, 2)
    np.testing.assert_array_equal(full[:, 4:7], part)


def test_streams_and_seeds_differ():
    a = path_normals(3, [0], 100, 1, MODEL_NOISE)
    b = path_normals(3, [0], 100, 1, CONTINUATION_NOISE)
    c = path_normals(3, [0], 100, 1, ORTHOGONAL_NOISE)
    d = path_normals(4, [0], 100, 1, MODEL_NOISE)
    for other in (b, c, d):
        assert not np.allclose(a, other)


def test_same_inputs_same_bytes():
    a = path_normals(11, np.arange(5), 20, 1)
    b = path_normals(11, np.arange(5), 20, 1)
    assert a.tobytes() == b.tobytes()


def test_moments_look_standard_normal():
    x = path_normals(0, np.arange(200), 500, 1).ravel()
    assert abs(x.mean()) < 4 / np.sqrt(x.size)
    assert abs(x.var() - 1) < 0.02


def test_negative_index_rejected():
    with pytest.raises(ValueError):
        path_generator(0, -1)
