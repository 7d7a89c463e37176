import numpy as np
import pytest
from numpy.testing import assert_allclose

from services.exceptions import DimensionMismatchError, InvalidParameterError, ModeIndexError
from services.incoherent import polar_factor
from services.odeco import OdecoTensor, SingularTuple, enumerate_tuples, swapped_pair, to_dense, weyl_pair
from services.perturb import (
    BISECTION_HI,
    GENERAL_C,
    REPORT_COLUMNS,
    constants,
    delta_norm,
    h1,
    h2,
    h3,
    h4,
    m_matrix,
    match_tuples,
    report_frame,
    verify_approximation,
    verify_bounds,
    verify_nonessential,
)
from services.tensor_core import DenseTensor, frobenius_norm, tensor_sub


def perturb_odeco(a, scale, seed):
    """Copia de a con valores y factores movidos a escala `scale`."""
    rng = np.random.default_rng(seed)
    r = a.rank
    lambdas = a.lambdas[:r] + scale * rng.standard_normal(r)
    factors = [polar_factor(f[:, :r] + scale * rng.standard_normal((f.shape[0], r))) for f in a.factors]
    return OdecoTensor.from_components(lambdas, factors)


def exact_delta(a, b):
    """||.||_F acota la norma espectral por arriba."""
    return frobenius_norm(tensor_sub(to_dense(a), to_dense(b)))


# ============ EMPAREJAMIENTO ============

def test_match_identity(small_odeco):
    matching = match_tuples(small_odeco, small_odeco)
    assert_allclose(matching.pi, np.arange(4))
    assert np.all(matching.gamma == 1.0)


def test_match_swapped_pair():
    a, b = swapped_pair(0.1)
    matching = match_tuples(a, b)
    assert list(matching.pi) == [1, 0]
    assert list(matching.inverse()) == [1, 0]


def test_match_sign_alignment(identity_odeco):
    flipped = [f.copy() for f in identity_odeco.factors]
    flipped[0][:, 0] *= -1.0
    flipped[1][:, 0] *= -1.0
    b = OdecoTensor(identity_odeco.lambdas, tuple(flipped))
    matching = match_tuples(identity_odeco, b)
    assert_allclose(matching.gamma[:, 0], [-1.0, -1.0, 1.0])
    assert_allclose(np.prod(matching.gamma, axis=0), np.ones(3))


def test_match_requires_same_dims(small_odeco, identity_odeco):
    with pytest.raises(DimensionMismatchError):
        match_tuples(small_odeco, identity_odeco)


# ============ CONSTANTES ============

def test_h4_reduces_for_order_three():
    x = np.array([0.01, 0.1, 0.3])
    eps = 1.5
    assert_allclose(h4(x, eps, 3), 2.0 * np.sqrt(x) + (1.0 + eps) * x * (1.0 + x), rtol=1e-12)


def test_constants_near_optimum():
    consts = constants(2.94)
    assert consts.binding == "h4"
    assert consts.c_epsilon == pytest.approx(0.06067, abs=2e-4)
    assert consts.objective == pytest.approx(16.48, abs=0.05)
    assert consts.objective == pytest.approx(1.0 / consts.c_epsilon)


def test_constants_small_epsilon_is_tiny():
    consts = constants(0.05)
    assert 0 < consts.c_epsilon < 0.01
    assert consts.c_epsilon <= 1.0 / 1.05
    assert consts.objective > 100


@pytest.mark.parametrize("eps", [0.05, 0.5, 2.94, 6.0])
def test_constants_invert_every_branch(eps):
    consts = constants(eps)
    assert h1(consts.h1_inv) == pytest.approx(1.0 + eps, rel=1e-8)
    assert h2(consts.h2_inv) == pytest.approx(1.0 + eps, rel=1e-8)
    assert h3(consts.h3_inv, eps) == pytest.approx(1.0, rel=1e-8)
    assert h4(consts.h4_inv, eps) == pytest.approx(eps / (1.0 + eps), rel=1e-8)
    assert 0 < consts.c_epsilon < 1


def test_h1_pole_near_one_is_infinite():
    with np.errstate(divide="ignore"):
        assert np.isinf(h1(np.array(BISECTION_HI)))


def test_constants_validation():
    with pytest.raises(InvalidParameterError):
        constants(0.0)
    with pytest.raises(InvalidParameterError):
        constants(1.0, p=2)


def test_constants_order_four_runs():
    consts = constants(1.0, p=4)
    assert 0 < consts.c_epsilon <= 0.5


# ============ COTAS ============

def test_identical_tensors_pass(small_odeco, spectral_cfg):
    report = verify_bounds(small_odeco, small_odeco, cfg=spectral_cfg)
    assert report.delta == 0.0
    assert report.passed and report.naive_weyl_holds
    assert all(row.sharp for row in report.rows[:3])
    assert report.max_gap == 0.0


def test_sharp_regime_bounds_hold(small_odeco):
    b = perturb_odeco(small_odeco, 2e-6, seed=21)
    delta = exact_delta(small_odeco, b)
    report = verify_bounds(small_odeco, b, epsilon=0.05, delta=delta)
    assert all(row.sharp for row in report.rows[:3])
    assert report.passed, report.violations
    for row in report.rows[:3]:
        assert row.second_order_resid <= row.second_order_bound + 1e-12


def test_estimated_delta_is_lower_bound(small_odeco, spectral_cfg):
    b = perturb_odeco(small_odeco, 1e-3, seed=22)
    estimate = delta_norm(small_odeco, b, spectral_cfg)
    assert 0 < estimate <= exact_delta(small_odeco, b) + 1e-12


def test_weyl_pair_breaks_naive_weyl():
    a, b = weyl_pair()
    report = verify_bounds(a, b, delta=4.0 / np.sqrt(3.0))
    assert not report.naive_weyl_holds
    assert report.passed
    assert report.rows[0].bound_value == pytest.approx(GENERAL_C * 4.0 / np.sqrt(3.0))
    assert not report.rows[0].sharp


def test_general_regime_has_no_angle_bound_for_repeated_zero():
    eye = np.eye(3)
    a = OdecoTensor(np.array([1.0, 0.0, 0.0]), (eye, eye, eye))
    report = verify_bounds(a, a, delta=0.0)
    assert np.isinf(report.rows[1].bound_davis)
    assert report.passed


def test_report_frame_columns(small_odeco):
    frame = report_frame(verify_bounds(small_odeco, small_odeco, delta=0.0))
    assert list(frame.columns) == REPORT_COLUMNS
    assert len(frame) == small_odeco.d_min
    assert bool(frame["pass"].all())


# ============ NO ESENCIALES ============

def test_m_matrix_shape_and_mode(small_odeco):
    diff = DenseTensor(np.ones(small_odeco.dims))
    assert m_matrix(small_odeco, diff, 1).shape == (5, 3)
    with pytest.raises(ModeIndexError):
        m_matrix(small_odeco, diff, 3)


def test_transported_tuple_is_close(small_odeco):
    b = perturb_odeco(small_odeco, 1e-5, seed=23)
    tup = enumerate_tuples(small_odeco, [0, 2], np.array([[1.0, -1.0], [1.0, 1.0]]))
    report = verify_nonessential(small_odeco, b, tup, delta=exact_delta(small_odeco, b))
    assert report.transportable
    assert report.transported.active_set == (0, 2)
    assert report.residual < 1e-10
    assert report.vector_distance < 1e-3
    assert report.value_gap < 1e-3
    assert report.lambda_star_min == pytest.approx(1.5)
    assert report.c1 > 0


def test_nonessential_distance_scales_with_delta(small_odeco):
    tup = enumerate_tuples(small_odeco, [0, 2], np.array([[1.0, -1.0], [1.0, 1.0]]))
    reports = {}
    for scale in (1e-2, 1e-3, 1e-4):
        b = perturb_odeco(small_odeco, scale, seed=29)
        reports[scale] = verify_nonessential(small_odeco, b, tup, delta=exact_delta(small_odeco, b))
    assert all(rep.transportable for rep in reports.values())
    assert reports[1e-3].vector_distance / reports[1e-4].vector_distance == pytest.approx(10.0, rel=0.05)
    assert reports[1e-3].vector_ratio / reports[1e-4].vector_ratio == pytest.approx(1.0, rel=0.05)
    assert 0.75 <= reports[1e-2].vector_ratio / reports[1e-4].vector_ratio <= 1.33


def test_nonessential_empty_set(small_odeco):
    zero = SingularTuple(0.0, small_odeco.component(3), active_set=())
    report = verify_nonessential(small_odeco, small_odeco, zero, delta=0.1)
    assert not report.transportable
    assert report.lambda_star_min == 0.0


def test_nonessential_requires_active_set(small_odeco):
    tup = SingularTuple(5.0, small_odeco.component(0))
    with pytest.raises(InvalidParameterError):
        verify_nonessential(small_odeco, small_odeco, tup, delta=0.0)


# ============ APROXIMACIÓN ============

def test_approximation_of_noisy_tensor(small_odeco, spectral_cfg):
    rng = np.random.default_rng(24)
    observed = DenseTensor(to_dense(small_odeco).values + 1e-2 * rng.standard_normal(small_odeco.dims))
    report = verify_approximation(small_odeco, small_odeco, observed, spectral_cfg)
    assert report.noise_norm > 0
    assert report.passed


def test_greedy_matching_agrees_with_assignment_oracle(small_odeco):
    from scipy.optimize import linear_sum_assignment

    b = perturb_odeco(small_odeco, 1e-3, seed=25)
    inner = np.stack([small_odeco.factors[q].T @ b.factors[q] for q in range(3)])
    functional = b.lambdas[None, :] * np.prod(np.abs(inner) ** (1.0 / 3.0), axis=0)
    rows, cols = linear_sum_assignment(functional[:3, :3], maximize=True)
    matching = match_tuples(small_odeco, b)
    assert list(matching.pi[rows]) == list(cols)
