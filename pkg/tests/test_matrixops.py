import math

import numpy as np
import pytest

from mfstackelberg.matrixops import (BlowUpError, InvalidInputError, NumericOverflowError, Path, TimeGrid,
                                     integrate_initial, integrate_terminal, lambda_min_sym, matrix_exp,
                                     simpson, spectral_norm)


def test_spectral_norm_identity_zero_and_rank_one():
    assert spectral_norm(np.eye(3)) == pytest.approx(1.0, rel=1e-10)
    assert spectral_norm(np.zeros((2, 2))) == 0.0
    assert spectral_norm([[3.0, 0.0], [4.0, 0.0]]) == pytest.approx(5.0, rel=1e-10)


def test_spectral_norm_rejects_non_finite():
    with pytest.raises(InvalidInputError):
        spectral_norm([[np.nan]])
    with pytest.raises(InvalidInputError):
        spectral_norm([[np.inf, 0.0]])


def test_lambda_min_sym_examples():
    assert lambda_min_sym(np.eye(2)) == pytest.approx(1.0)
    assert lambda_min_sym(np.diag([2.0, -3.0])) == pytest.approx(-3.0)
    assert lambda_min_sym([[0.0, 1.0], [0.0, 0.0]]) == pytest.approx(-0.5, abs=1e-15)


def test_lambda_min_sym_rejects_non_square():
    with pytest.raises(InvalidInputError):
        lambda_min_sym(np.ones((2, 3)))


def test_matrix_exp_examples():
    np.testing.assert_array_equal(matrix_exp(np.zeros((3, 3))), np.eye(3))
    assert matrix_exp([[0.7]])[0, 0] == pytest.approx(math.exp(0.7), rel=1e-12)
    np.testing.assert_allclose(matrix_exp([[0.0, 1.0], [0.0, 0.0]], 1.0), [[1.0, 1.0], [0.0, 1.0]],
                               rtol=1e-12, atol=1e-15)
    assert matrix_exp([[2.0]], 0.5)[0, 0] == pytest.approx(math.e, rel=1e-12)


def test_matrix_exp_overflow():
    with pytest.raises(NumericOverflowError):
        matrix_exp([[1000.0]])


def test_time_grid_invariants():
    g = TimeGrid.horizon(2.0, 4)
    assert g.h == 0.5
    np.testing.assert_allclose(g.nodes, [0, 0.5, 1, 1.5, 2])
    with pytest.raises(InvalidInputError):
        TimeGrid(1.0, 1.0, 3)
    with pytest.raises(InvalidInputError):
        TimeGrid(0.0, 1.0, 0)


def test_integrate_terminal_zero_rhs_is_constant():
    E = np.array([[1.0, 2.0], [3.0, 4.0]])
    path = integrate_terminal(lambda t, X: np.zeros_like(X), E, TimeGrid.horizon(1.0, 10))
    for v in path.values:
        np.testing.assert_array_equal(v, E)


def test_integrate_terminal_exponential():
    # -x' = x, x(1) = 1  =>  x(0) = e
    path = integrate_terminal(lambda t, x: x, 1.0, TimeGrid.horizon(1.0, 1000))
    assert abs(path.values[0] - math.e) < 1e-8


def test_integrate_terminal_scalar_riccati_tanh():
    T = 1.5
    grid = TimeGrid.horizon(T, 1000)
    path = integrate_terminal(lambda t, x: 1.0 - x * x, 0.0, grid)
    np.testing.assert_allclose(path.values, np.tanh(T - grid.nodes), atol=1e-10)


@pytest.mark.parametrize("rhs,exact", [
    (lambda t, x: x, lambda t: np.exp(1.0 - t)),
    (lambda t, x: 1.0 - x * x, lambda t: np.tanh(1.0 - t)),
])
def test_integrate_terminal_is_fourth_order(rhs, exact):
    errs = []
    for steps in (20, 40):
        grid = TimeGrid.horizon(1.0, steps)
        errs.append(np.max(np.abs(integrate_terminal(rhs, exact(1.0), grid).values - exact(grid.nodes))))
    assert errs[0] / errs[1] >= 14.0


def test_integrate_terminal_blow_up_reports_time():
    # -x' = x^2 with x(1) = 1 escapes at t = 0 exactly; x(t) = 1 / (t)
    with pytest.raises(BlowUpError) as err:
        integrate_terminal(lambda t, x: x * x, 1.0, TimeGrid(-1.0, 1.0, 2000))
    assert -0.01 < err.value.time < 0.01


def test_integrate_initial_linear():
    grid = TimeGrid.horizon(1.0, 200)
    path = integrate_initial(lambda t, x: -2.0 * x, 3.0, grid)
    np.testing.assert_allclose(path.values, 3.0 * np.exp(-2.0 * grid.nodes), rtol=1e-9)


def test_path_interpolation_matches_smooth_function():
    grid = TimeGrid.horizon(1.0, 50)
    t = grid.nodes
    path = Path(grid, np.sin(t), np.cos(t))
    for s in (0.013, 0.5, 0.777, 1.0):
        assert path.at(s) == pytest.approx(np.sin(s), abs=1e-8)
    with pytest.raises(InvalidInputError):
        path.at(1.5)


def test_simpson_integrates_cubics_exactly():
    x = np.linspace(0, 2, 11)
    assert float(simpson(x**3, x[1] - x[0])) == pytest.approx(4.0, rel=1e-13)
