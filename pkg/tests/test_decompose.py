import numpy as np
import pytest
from numpy.testing import assert_allclose

from services.decompose import (
    DecompositionResult,
    IterationConfig,
    decompose_odeco,
    find_tuple,
    gradient_step,
    hosvd,
    hosvd_bounds,
    refine,
)
from services.exceptions import DegeneratePointError, DimensionMismatchError, InvalidParameterError
from services.linalg import principal_sines, sin_angle
from services.odeco import OdecoTensor, random_odeco, to_dense, tuple_residual
from services.perturb import match_tuples
from services.tensor_core import DenseTensor, Rank1Point, random_rank1_point


def _max_matched_sin(a, b, r):
    matching = match_tuples(a, b)
    return max(
        sin_angle(a.factors[q][:, k], b.factors[q][:, int(matching.pi[k])])
        for k in range(r) for q in range(a.order)
    )


# ============ CONFIGURACIÓN ============

def test_iteration_config_validation():
    with pytest.raises(InvalidParameterError):
        IterationConfig(tol=0)
    with pytest.raises(InvalidParameterError):
        IterationConfig(restarts=0)
    with pytest.raises(InvalidParameterError):
        IterationConfig(deflation_mode="greedy")


# ============ ITERACIÓN ============

def test_gradient_step_fixes_components(identity_odeco):
    dense = to_dense(identity_odeco)
    eye = np.eye(3)
    x = Rank1Point((eye[:, 1], eye[:, 1], eye[:, 1]))
    y = gradient_step(dense, x)
    for f in y.factors:
        assert_allclose(f, eye[:, 1])


def test_gradient_step_degenerate(identity_odeco):
    eye = np.eye(3)
    with pytest.raises(DegeneratePointError):
        gradient_step(to_dense(identity_odeco), Rank1Point((eye[:, 0], eye[:, 1], eye[:, 2])))
    with pytest.raises(DimensionMismatchError):
        gradient_step(to_dense(identity_odeco), Rank1Point((eye[:2, 0], eye[:, 1], eye[:, 2])))


def test_find_tuple_converges_to_essential(small_odeco):
    dense = to_dense(small_odeco)
    init = random_rank1_point(dense.dims, np.random.default_rng(3))
    tup = find_tuple(dense, init)
    assert tup.converged
    assert tup.value > 0
    assert tuple_residual(dense, tup) < 1e-8
    distances = [
        max(sin_angle(tup.vectors[q], small_odeco.factors[q][:, k]) for q in range(3)) for k in range(3)
    ]
    assert min(distances) < 1e-6


def test_find_tuple_reports_non_convergence(small_odeco):
    dense = to_dense(small_odeco)
    init = random_rank1_point(dense.dims, np.random.default_rng(4))
    tup = find_tuple(dense, init, IterationConfig(tol=1e-15, max_iter=1))
    assert not tup.converged
    assert tup.iterations == 1


# ============ DESCOMPOSICIÓN ============

@pytest.mark.parametrize("mode", ["orthogonal_complement", "subtract"])
def test_decompose_recovers_odeco(small_odeco, iter_cfg, mode):
    cfg = IterationConfig(restarts=iter_cfg.restarts, deflation_mode=mode)
    result = decompose_odeco(to_dense(small_odeco), 3, cfg, seed=1)
    assert result.complete
    assert_allclose(result.odeco.lambdas, small_odeco.lambdas, atol=1e-8)
    assert _max_matched_sin(small_odeco, result.odeco, 3) < 1e-6


def test_decompose_with_repeated_values(iter_cfg):
    truth = random_odeco((5, 5, 5), 4, [4.0, 4.0, 2.0, 2.0], seed=8)
    result = decompose_odeco(to_dense(truth), 4, iter_cfg, seed=2)
    assert result.complete
    assert_allclose(result.odeco.lambdas[:4], [4.0, 4.0, 2.0, 2.0], atol=1e-8)
    assert _max_matched_sin(truth, result.odeco, 4) < 1e-6


def test_decompose_order_four(iter_cfg):
    truth = random_odeco((3, 4, 3, 5), 3, [3.0, 2.0, 1.0], seed=9)
    result = decompose_odeco(to_dense(truth), 3, iter_cfg, seed=0)
    assert result.complete
    assert _max_matched_sin(truth, result.odeco, 3) < 1e-6


def test_decompose_is_deterministic(small_odeco, iter_cfg):
    first = decompose_odeco(to_dense(small_odeco), 2, iter_cfg, seed=5)
    second = decompose_odeco(to_dense(small_odeco), 2, iter_cfg, seed=5)
    assert np.array_equal(first.odeco.lambdas, second.odeco.lambdas)


def test_decompose_partial_on_low_rank(iter_cfg):
    truth = random_odeco((3, 3, 3), 1, [2.0], seed=1)
    result = decompose_odeco(to_dense(truth), 3, iter_cfg, seed=0)
    assert isinstance(result, DecompositionResult)
    assert result.found >= 1
    assert result.odeco.lambdas[0] == pytest.approx(2.0)
    assert result.odeco.d_min == 3


def test_decompose_rejects_bad_rank(small_odeco):
    with pytest.raises(InvalidParameterError):
        decompose_odeco(to_dense(small_odeco), 5)
    with pytest.raises(InvalidParameterError):
        decompose_odeco(to_dense(small_odeco), 0)


def test_refine_keeps_exact_decomposition(small_odeco, iter_cfg):
    dense = to_dense(small_odeco)
    result = decompose_odeco(dense, 3, IterationConfig(restarts=iter_cfg.restarts, deflation_mode="subtract"), seed=3)
    refined = refine(dense, result, iter_cfg)
    assert refined.found == 3
    assert_allclose(refined.odeco.lambdas[:3], [5.0, 3.0, 1.5], atol=1e-8)


# ============ HOSVD ============

def test_hosvd_recovers_distinct_values(small_odeco):
    h = hosvd(to_dense(small_odeco))
    assert_allclose(h.lambdas[:3], [5.0, 3.0, 1.5], atol=1e-10)
    for q in range(3):
        for k in range(3):
            assert sin_angle(h.factors[q][:, k], small_odeco.factors[q][:, k]) < 1e-8


def test_hosvd_repeated_values_recover_subspace():
    truth = random_odeco((4, 4, 4), 3, [2.0, 2.0, 1.0], seed=12)
    h = hosvd(to_dense(truth))
    for q in range(3):
        sines = principal_sines(truth.factors[q][:, :2], h.factors[q][:, :2])
        assert np.max(sines) < 1e-8


def test_hosvd_bounds_hold_for_small_perturbation(small_odeco):
    rng = np.random.default_rng(13)
    noisy = DenseTensor(to_dense(small_odeco).values + 1e-3 * rng.standard_normal(small_odeco.dims))
    rows = hosvd_bounds(small_odeco, hosvd(noisy))
    assert len(rows) == small_odeco.d_min
    assert all(row.gap <= row.gap_bound + 1e-10 for row in rows)
    assert all(row.passed for row in rows[:3])


def test_hosvd_bounds_dimension_check(small_odeco):
    other = OdecoTensor.from_components([1.0], [np.eye(4)[:, :1]] * 3)
    with pytest.raises(DimensionMismatchError):
        hosvd_bounds(small_odeco, other)
