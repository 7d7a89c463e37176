import numpy as np
import pytest
from numpy.testing import assert_allclose

from services.exceptions import DimensionMismatchError, InvalidParameterError
from services.odeco import (
    OdecoTensor,
    all_tuples,
    enumerate_tuples,
    orthogonal_counterexample,
    random_odeco,
    swapped_pair,
    to_dense,
    tuple_residual,
    validate,
    weyl_pair,
    zero_tuple_check,
)
from services.tensor_core import Rank1Point, outer, tensor_add, tensor_scale


# ============ CONSTRUCCIÓN ============

def test_random_odeco_is_valid(small_odeco):
    diag = validate(small_odeco)
    assert diag.ok
    assert small_odeco.dims == (4, 5, 6)
    assert small_odeco.d_min == 4 and small_odeco.rank == 3
    assert_allclose(small_odeco.lambdas, [5.0, 3.0, 1.5, 0.0])


def test_random_odeco_is_deterministic():
    a = random_odeco((3, 3, 3), 2, seed=4)
    b = random_odeco((3, 3, 3), 2, seed=4)
    assert np.array_equal(a.lambdas, b.lambdas)
    assert all(np.array_equal(f, g) for f, g in zip(a.factors, b.factors))


def test_random_odeco_rejects_bad_rank():
    with pytest.raises(InvalidParameterError):
        random_odeco((3, 4, 2), 3)
    with pytest.raises(InvalidParameterError):
        random_odeco((3, 3, 3), 2, lambdas=[1.0])


def test_from_components_flips_sign_and_sorts():
    eye = np.eye(2)
    t = OdecoTensor.from_components([-2.0, 3.0], [eye, eye, eye])
    assert_allclose(t.lambdas, [3.0, 2.0])
    assert_allclose(t.factors[0][:, 1], [-1.0, 0.0])
    expected = tensor_add(
        tensor_scale(outer([eye[:, 0]] * 3), -2.0),
        tensor_scale(outer([eye[:, 1]] * 3), 3.0),
    )
    assert_allclose(to_dense(t).values, expected.values)


def test_from_components_completes_to_d_min():
    q, _ = np.linalg.qr(np.random.default_rng(0).standard_normal((4, 1)))
    t = OdecoTensor.from_components([2.0], [q, q, q])
    assert t.d_min == 4 and t.rank == 1
    assert validate(t).ok


def test_constructor_checks_shapes():
    with pytest.raises(DimensionMismatchError):
        OdecoTensor(np.ones(2), (np.eye(2), np.eye(3)[:, :1]))
    with pytest.raises(InvalidParameterError):
        OdecoTensor(np.ones(2), (np.eye(2),))


def test_validate_reports_without_raising():
    eye = np.eye(2)
    diag = validate(OdecoTensor(np.array([1.0, 2.0]), (eye, eye, 2.0 * eye)))
    assert not diag.ok
    assert diag.ordering_violation == pytest.approx(1.0)
    assert diag.max_orthonormality == pytest.approx(3.0)


def test_to_dense_matches_sum_of_outer_products(small_odeco):
    expected = sum(
        small_odeco.lambdas[k] * outer(small_odeco.component(k)).values for k in range(small_odeco.d_min)
    )
    assert_allclose(to_dense(small_odeco).values, expected, atol=1e-12)


# ============ TUPLAS SINGULARES ============

def test_singleton_tuple_is_the_component(identity_odeco):
    tup = enumerate_tuples(identity_odeco, [1])
    assert tup.value == pytest.approx(2.0)
    assert_allclose(tup.vectors[2], [0.0, 1.0, 0.0])


def test_pair_tuple_value_and_unit_vectors(identity_odeco):
    tup = enumerate_tuples(identity_odeco, [0, 1])
    assert tup.value == pytest.approx(6.0 / np.sqrt(13.0))
    assert_allclose([np.linalg.norm(v) for v in tup.vectors], [1.0, 1.0, 1.0])
    assert tuple_residual(to_dense(identity_odeco), tup) < 1e-12


def test_signs_fix_mode_one_by_product(identity_odeco):
    signs = np.array([[-1.0, 1.0], [1.0, 1.0]])
    tup = enumerate_tuples(identity_odeco, [0, 2], signs)
    assert_allclose(np.prod(tup.signs, axis=0), [1.0, 1.0])
    assert tup.signs[0, 0] == -1.0
    assert tuple_residual(to_dense(identity_odeco), tup) < 1e-12


def test_enumerate_rejects_invalid_input(identity_odeco):
    with pytest.raises(InvalidParameterError):
        enumerate_tuples(identity_odeco, [])
    with pytest.raises(InvalidParameterError):
        enumerate_tuples(identity_odeco, [0, 3])
    with pytest.raises(InvalidParameterError):
        enumerate_tuples(identity_odeco, [0], np.array([[-1.0], [1.0], [1.0]]))
    with pytest.raises(InvalidParameterError):
        enumerate_tuples(identity_odeco, [0], np.ones((1, 1)))
    eye = np.eye(2)
    with pytest.raises(InvalidParameterError):
        enumerate_tuples(OdecoTensor(np.array([1.0, 0.0]), (eye, eye, eye)), [1])
    with pytest.raises(InvalidParameterError):
        enumerate_tuples(OdecoTensor(np.array([1.0, 0.5]), (eye, eye)), [0])


def test_all_tuples_count_and_residuals():
    t = random_odeco((2, 2, 2), 2, [2.0, 1.0], seed=3)
    tuples = all_tuples(t)
    assert len(tuples) == 2 * 4 + 16
    dense = to_dense(t)
    assert max(tuple_residual(dense, tup) for tup in tuples) < 1e-10


def test_all_tuples_order_four():
    t = random_odeco((3, 3, 3, 3), 2, [3.0, 1.0], seed=5)
    dense = to_dense(t)
    tuples = all_tuples(t)
    assert len(tuples) == 2 * 8 + 64
    assert max(tuple_residual(dense, tup) for tup in tuples) < 1e-10


def test_zero_tuple_check(identity_odeco):
    eye = np.eye(3)
    assert zero_tuple_check(identity_odeco, Rank1Point((eye[:, 0], eye[:, 1], eye[:, 2])))
    assert not zero_tuple_check(identity_odeco, Rank1Point((eye[:, 0], eye[:, 0], eye[:, 0])))
    with pytest.raises(DimensionMismatchError):
        zero_tuple_check(identity_odeco, Rank1Point((eye[:2, 0], eye[:, 1], eye[:, 2])))


# ============ EJEMPLOS ============

def test_weyl_pair_values():
    a, b = weyl_pair()
    assert validate(a).ok and validate(b).ok
    assert_allclose(to_dense(b).values[0, 0, 0], 2.0)
    assert np.max(np.abs(a.lambdas - b.lambdas)) == pytest.approx(2.0 * np.sqrt(2.0))


@pytest.mark.parametrize("d", [2, 5, 20])
def test_orthogonal_counterexample_is_odeco(d):
    a, b = orthogonal_counterexample(d)
    assert validate(a).ok
    assert validate(b).ok


def test_swapped_pair_requires_small_delta():
    a, b = swapped_pair(0.2)
    assert_allclose(to_dense(a).values[0, 0, 0], 1.2)
    assert_allclose(to_dense(b).values[0, 0, 0], 0.8)
    with pytest.raises(InvalidParameterError):
        swapped_pair(1.0)
