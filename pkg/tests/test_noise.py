import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qclock.gaussian import conditional_coefficients
from qclock.noise import (
    IntervalGrid,
    NoiseModel,
    NotPositiveSemidefinite,
    avg_cov,
    diff_cov_matrix,
    point_kernel,
    sample_trajectory,
)


def test_model_validation():
    with pytest.raises(ValueError):
        NoiseModel(-2.0, 0.0)
    with pytest.raises(ValueError):
        NoiseModel(-0.5, 1.0)
    with pytest.raises(ValueError):
        NoiseModel(-3.0, 1.0)
    assert NoiseModel.flicker(0.1).is_flicker


def test_point_kernel_formal_only():
    with pytest.raises(ValueError):
        point_kernel(NoiseModel.brownian(1.0), 0.0)
    assert point_kernel(NoiseModel.brownian(2.0), 3.0) == pytest.approx(-3.0)
    assert point_kernel(NoiseModel.flicker(1.0), np.e) == pytest.approx(-2.0)


def test_brownian_first_block_exact():
    C = diff_cov_matrix(NoiseModel.brownian(1.0), IntervalGrid.uniform(3, 1.0)).matrix
    # independent derivation: integrated Wiener process, omega(t) - omega(0) ~ W
    expected = np.array([[2 / 3, 5 / 6, 5 / 6], [5 / 6, 5 / 3, 11 / 6], [5 / 6, 11 / 6, 8 / 3]])
    assert np.allclose(C, expected, atol=1e-12)


def test_brownian_diff_cov_against_wiener_oracle():
    # For Brownian frequency with diffusion h, Cov(W_s, W_t) = h min(s, t) (up to a constant
    # that cancels in differences); average the min kernel over the intervals numerically.
    h, T, n = 0.7, 0.9, 4
    grid = IntervalGrid.uniform(n, T)
    s = np.linspace(0, 1, 2001)
    def avg(i, j):
        a, b = grid.interval(i)
        c, d = grid.interval(j)
        x = a + (b - a) * s
        y = c + (d - c) * s
        return np.trapezoid(np.trapezoid(h * np.minimum.outer(x, y), s), s)
    K = np.array([[avg(i, j) for j in range(n + 1)] for i in range(n + 1)])
    C_ref = K[1:, 1:] - K[1:, :1] - K[:1, 1:] + K[0, 0]
    C = diff_cov_matrix(NoiseModel.brownian(h), grid).matrix
    assert np.allclose(C, C_ref, rtol=1e-5, atol=1e-7)


@pytest.mark.parametrize("alpha", [-2.0, -1.0, -1.5, -2.6])
def test_closed_form_matches_quadrature(alpha):
    m = NoiseModel(alpha, 0.3)
    rng = np.random.default_rng(int(-alpha * 10))
    for _ in range(20):
        a, c = rng.uniform(0, 5, 2)
        b, d = a + rng.uniform(0.1, 2), c + rng.uniform(0.1, 2)
        cf = avg_cov(m, (a, b), (c, d))
        q = avg_cov(m, (a, b), (c, d), method="quad")
        assert cf == pytest.approx(q, rel=1e-8, abs=1e-12)


def test_avg_cov_rejects_bad_interval():
    with pytest.raises(ValueError):
        avg_cov(NoiseModel.brownian(1.0), (1.0, 1.0), (0.0, 1.0))
    with pytest.raises(ValueError):
        avg_cov(NoiseModel.brownian(1.0), (0.0, 1.0), (0.0, 1.0), method="simpson")


@pytest.mark.parametrize("model", [NoiseModel.brownian(0.03), NoiseModel.flicker(0.05), NoiseModel(-2.8, 1.0)])
def test_diff_cov_psd(model):
    C = diff_cov_matrix(model, IntervalGrid.uniform(60, 1.0))
    assert C.min_eigenvalue() > -1e-9 * np.linalg.norm(C.matrix, 2)
    assert np.allclose(C.matrix, C.matrix.T)


def test_quad_assembly_agrees_with_closed_form():
    m = NoiseModel.flicker(0.05)
    g = IntervalGrid(np.array([0.0, 1.0, 1.7, 3.1, 3.6]))
    assert np.allclose(diff_cov_matrix(m, g).matrix, diff_cov_matrix(m, g, method="quad").matrix, rtol=1e-8)


def test_non_psd_detection():
    with pytest.raises(NotPositiveSemidefinite):
        sample_trajectory(np.array([[1.0, 2.0], [2.0, 1.0]]), seed=0)


def test_grid_validation():
    with pytest.raises(ValueError):
        IntervalGrid(np.array([0.0, 1.0]))
    with pytest.raises(ValueError):
        IntervalGrid(np.array([0.0, 1.0, 1.0]))


def test_sampling_reproducible_and_shapes():
    C = diff_cov_matrix(NoiseModel.brownian(0.03), IntervalGrid.uniform(10, 1.0))
    a = sample_trajectory(C, seed=5)
    b = sample_trajectory(C, seed=5)
    assert a.shape == (10,) and np.array_equal(a, b)
    assert sample_trajectory(C, seed=1, size=7).shape == (7, 10)


def test_more_history_never_increases_conditional_variance():
    # interval-averaged Brownian motion is not finite-order Markov: extra history helps
    # a little, with a geometrically shrinking gain
    C = diff_cov_matrix(NoiseModel.brownian(0.03), IntervalGrid.uniform(12, 1.0)).matrix
    n = 11
    vs = []
    for depth in range(1, n + 1):
        idx = list(range(n - depth, n)) + [n]
        vs.append(conditional_coefficients(C[np.ix_(idx, idx)])[1])
    vs = np.array(vs)
    assert np.all(np.diff(vs) <= 1e-15)
    gaps = vs[:-1] - vs[-1]
    assert gaps[0] > 0
    ratios = gaps[1:6] / gaps[:5]
    assert np.all(ratios < 0.5)


@settings(max_examples=40, deadline=None)
@given(st.floats(-2.95, -1.0), st.floats(0.01, 5.0), st.integers(2, 8))
def test_psd_property(alpha, h, n):
    C = diff_cov_matrix(NoiseModel(alpha, h), IntervalGrid.uniform(n, 1.0))
    assert C.min_eigenvalue() > -1e-9 * max(1.0, np.linalg.norm(C.matrix, 2))
