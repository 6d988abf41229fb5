import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from vmstab.fourier import (PeriodicSeries, basis_wavenumbers, real_basis_matrix,
                            real_basis_derivative_matrix, spectral_derivative,
                            uniform_grid)


def test_uniform_grid_spacing_and_range():
    x = uniform_grid(2.0 * np.pi, 8)
    assert x[0] == 0.0
    assert np.allclose(np.diff(x), np.pi / 4)
    assert x[-1] < 2.0 * np.pi


def test_spectral_derivative_exact_on_trig_polynomial():
    # d/dx [sin(3x) + 2 cos(x)] = 3 cos(3x) - 2 sin(x), exact for any n > 6
    P = 2.0 * np.pi
    x = uniform_grid(P, 32)
    f = np.sin(3 * x) + 2 * np.cos(x)
    expect = 3 * np.cos(3 * x) - 2 * np.sin(x)
    assert np.max(np.abs(spectral_derivative(f, P) - expect)) < 1e-12


def test_spectral_second_derivative():
    P = 5.0
    k = 2.0 * np.pi / P
    x = uniform_grid(P, 24)
    f = np.cos(2 * k * x)
    expect = -(2 * k) ** 2 * np.cos(2 * k * x)
    assert np.max(np.abs(spectral_derivative(f, P, 2) - expect)) < 1e-10


def test_series_round_trip_and_pointwise_eval():
    P = 3.0
    coeffs = np.array([0.5, 1.0 - 0.25j, 0.0, 0.125j])
    s = PeriodicSeries.from_coefficients(coeffs, P)
    x = np.linspace(0.0, 2 * P, 41)
    k = 2.0 * np.pi / P
    # stored convention: f(x) = Re(sum_m a_m e^{imkx}), doubling pre-applied
    direct = np.real(sum(c * np.exp(1j * m * k * x) for m, c in enumerate(coeffs)))
    assert np.max(np.abs(s(x) - direct)) < 1e-12

    vals = s.values(16)
    back = PeriodicSeries.from_values(vals, P)
    assert np.max(np.abs(back(x) - s(x))) < 1e-12


def test_series_derivative_matches_analytic():
    P = 2.0 * np.pi
    s = PeriodicSeries.from_coefficients([0.0, -1.0j], P)   # sin(x)
    x = np.linspace(0, P, 17)
    assert np.max(np.abs(s.derivative()(x) - np.cos(x))) < 1e-12


@given(st.lists(st.floats(-5, 5), min_size=2, max_size=10))
@settings(max_examples=40, deadline=None)
def test_series_from_values_round_trips_any_resolvable_signal(parts):
    # values sampled from a K-mode series are reproduced exactly when
    # n >= 2K + 1 (enough samples to resolve every stored mode)
    coeffs = np.array(parts[::2]) + 1j * np.array((parts[1:] + [0.0])[::2])
    coeffs = coeffs[: max(len(coeffs), 1)]
    P = 4.0
    s = PeriodicSeries.from_coefficients(coeffs, P)
    n = 2 * len(coeffs) + 1
    back = PeriodicSeries.from_values(s.values(n), P)
    x = np.linspace(0, P, 23)
    assert np.max(np.abs(back(x) - s(x))) < 1e-9 * (1 + np.max(np.abs(coeffs)))


def test_real_basis_matrix_is_orthonormal():
    # rows are 1/sqrt(P), sqrt(2/P) cos, sqrt(2/P) sin; discrete orthogonality
    # on a uniform grid makes (P/n) B B^T the identity once n > 2K
    P, K, n = 7.0, 4, 32
    x = uniform_grid(P, n)
    B = real_basis_matrix(K, x, P)
    G = (P / n) * (B @ B.T)
    assert B.shape == (2 * K + 1, n)
    assert np.max(np.abs(G - np.eye(2 * K + 1))) < 1e-12


def test_basis_wavenumbers_layout():
    P = 2.0 * np.pi
    k = basis_wavenumbers(3, P)
    assert np.allclose(k, [0, 1, 1, 2, 2, 3, 3])


def test_basis_derivative_matches_central_difference():
    P, K = 7.0, 3
    x = np.array([0.13, 1.9, 3.7, 6.4])
    h = 1e-6
    D = real_basis_derivative_matrix(K, x, P)
    fd = (real_basis_matrix(K, x + h, P) - real_basis_matrix(K, x - h, P)) / (2 * h)
    assert D.shape == (2 * K + 1, x.size)
    assert np.all(D[0] == 0.0)
    assert np.max(np.abs(D - fd)) < 1e-7
