import numpy as np
import pytest

from seetrack.errors import ContractError, ShapeError
from seetrack.sparse import END_TOKEN, SparseTensor, Token, check_token_stream, density, dump, from_dense, to_dense, tokens

from conftest import random_sparse


def test_from_dense_all_zero():
    assert from_dense(np.zeros((4, 4, 2))).nnz == 0


def test_from_dense_row_major():
    d = np.zeros((4, 4, 1))
    d[2, 1] = 1.0
    d[0, 3] = -2.0
    t = from_dense(d)
    assert t.coords.tolist() == [[0, 3], [2, 1]]


def test_from_dense_zero_tol():
    d = np.zeros((2, 2, 1))
    d[0, 0] = 0.05
    d[1, 1] = 0.5
    assert from_dense(d, zero_tol=0.1).coords.tolist() == [[1, 1]]


def test_dense_round_trip(rng):
    a = rng.standard_normal((16, 16, 4))
    a[rng.random((16, 16)) < 0.9] = 0.0
    assert np.array_equal(to_dense(from_dense(a)), a)


def test_to_dense_basics():
    assert not to_dense(SparseTensor.empty((3, 3, 1))).any()
    t = SparseTensor((3, 3, 1), [[1, 1]], [[7]])
    expect = np.zeros((3, 3, 1), np.int64)
    expect[1, 1] = 7
    assert np.array_equal(to_dense(t), expect)


def test_sparse_round_trip(rng):
    for _ in range(20):
        t = random_sparse(rng, 12, 9, 3, 0.2, lo=1, hi=100)
        assert from_dense(to_dense(t)) == t


def test_tokens():
    assert list(tokens(SparseTensor.empty((4, 4, 1)))) == [END_TOKEN]
    t = SparseTensor((4, 4, 1), [[0, 3], [2, 1]], [[1], [1]])
    toks = list(tokens(t))
    assert toks[:2] == [Token(3, 0, False), Token(1, 2, False)]
    assert toks[2].end


def test_tokens_property(rng):
    t = random_sparse(rng, 20, 20, 2, 0.3)
    toks = list(tokens(t))
    assert len(toks) == t.nnz + 1
    assert check_token_stream(toks) == t.nnz
    assert [(k.y, k.x) for k in toks[:-1]] == [tuple(c) for c in t.coords.tolist()]


def test_token_order_violation_rejected():
    with pytest.raises(ContractError):
        check_token_stream([Token(1, 0, False), Token(0, 0, False), END_TOKEN])
    with pytest.raises(ContractError):
        check_token_stream([Token(1, 0, False)])


def test_unsorted_sites_rejected():
    with pytest.raises(ContractError):
        SparseTensor((4, 4, 1), [[2, 1], [0, 3]], [[1], [1]])
    with pytest.raises(ContractError):
        SparseTensor((4, 4, 1), [[1, 1], [1, 1]], [[1], [1]])


def test_shape_validation():
    with pytest.raises(ShapeError):
        SparseTensor((4, 4, 2), [[0, 0]], [[1]])
    with pytest.raises(ShapeError):
        SparseTensor((4, 4, 1), [[4, 0]], [[1]])
    with pytest.raises(ShapeError):
        from_dense(np.zeros((4, 4)))


def test_density():
    assert density(SparseTensor.empty((8, 8, 1))) == 0.0
    assert density(from_dense(np.ones((8, 8, 1)))) == 1.0
    d = np.zeros((8, 8, 1))
    d[:2] = 1  # 16 sites
    assert density(from_dense(d)) == 0.25


def test_bitmap_consistency(rng):
    t = random_sparse(rng, 10, 13, 2, 0.25)
    assert t.bitmap.sum() == t.nnz
    assert all(t.bitmap[y, x] for y, x in t.coords.tolist())


def test_immutable(rng):
    t = random_sparse(rng, 4, 4, 1, 0.5)
    with pytest.raises(ValueError):
        t.features[0, 0] = 3


def test_dump():
    t = SparseTensor((4, 4, 2), [[0, 3], [2, 1]], [[1, -2], [3, 4]])
    assert dump(t) == "0 3 1 -2\n2 1 3 4\n"
    assert dump(SparseTensor.empty((2, 2, 1))) == ""
