import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from manyscat.emcore import (
    FOUR_PI,
    PlaneWave,
    dipole_field,
    dipole_kernel,
    dyadic_batch,
    gradient_batch,
    green,
    green_derivatives,
    h_from_e,
    radial_derivatives,
)
from manyscat.errors import DomainError, ValidationError

coord = st.floats(-2.0, 2.0, allow_nan=False)
point = st.tuples(coord, coord, coord)


def fd_gradient(f, x, h=1e-5):
    out = []
    for i in range(3):
        e = np.zeros(3)
        e[i] = h
        out.append((f(x + e) - f(x - e)) / (2 * h))
    return np.array(out)


def test_green_value_and_reciprocity():
    x, y = np.array([0.1, 0.2, 0.3]), np.array([1.0, -0.5, 0.2])
    r = np.linalg.norm(x - y)
    assert green(2.0, x, y) == pytest.approx(np.exp(2j * r) / (FOUR_PI * r), rel=1e-14)
    assert green(2.0, x, y) == pytest.approx(green(2.0, y, x), rel=1e-15)


def test_coincident_points_rejected():
    with pytest.raises(DomainError):
        green(1.0, [0, 0, 0], [0, 0, 0])
    with pytest.raises(DomainError):
        green_derivatives(1.0, [1, 1, 1], [1, 1, 1 + 1e-14])


def test_gradient_and_hessian_match_finite_differences(rng):
    k = 1.7
    for _ in range(100):
        x = rng.uniform(-1, 1, 3)
        y = rng.uniform(-1, 1, 3)
        if np.linalg.norm(x - y) < 0.2:
            continue
        ev = green_derivatives(k, x, y)
        g_fd = fd_gradient(lambda p: green(k, p, y), x)
        H_fd = fd_gradient(lambda p: green_derivatives(k, p, y).gradient, x)
        assert np.linalg.norm(ev.gradient - g_fd) <= 1e-6 * np.linalg.norm(ev.gradient)
        assert np.linalg.norm(ev.hessian - H_fd) <= 1e-5 * np.linalg.norm(ev.hessian)


@settings(max_examples=60, deadline=None)
@given(point, point, st.floats(0.1, 5.0))
def test_hessian_trace_is_helmholtz(x, y, k):
    x, y = np.array(x), np.array(y)
    if np.linalg.norm(x - y) < 1e-2:
        return
    ev = green_derivatives(k, x, y)
    assert np.trace(ev.hessian) == pytest.approx(-k * k * ev.value, rel=1e-9, abs=1e-12)
    np.testing.assert_allclose(ev.hessian, ev.hessian.T, rtol=1e-12, atol=1e-14)


def test_radial_derivatives_static_limit():
    g, g1, g2 = radial_derivatives(0.0, 2.0)
    assert g == pytest.approx(1 / (FOUR_PI * 2))
    assert g1 == pytest.approx(-1 / (FOUR_PI * 4))
    assert g2 == pytest.approx(2 / (FOUR_PI * 8))


def test_batches_agree_with_pointwise(rng):
    d = rng.uniform(-1, 1, (7, 3))
    k = 0.9
    D = dyadic_batch(k, d)
    G = gradient_batch(k, d)
    for i in range(7):
        ev = green_derivatives(k, d[i], np.zeros(3))
        np.testing.assert_allclose(G[i], ev.gradient, rtol=1e-13)
        np.testing.assert_allclose(D[i], k * k * ev.value * np.eye(3) + ev.hessian, rtol=1e-12, atol=1e-14)


def test_dipole_kernel_is_curl_of_dipole_field(rng):
    k = 1.3
    for _ in range(20):
        x = rng.uniform(-1, 1, 3)
        y = rng.uniform(-1, 1, 3) + np.array([3.0, 0, 0])
        A = rng.normal(size=3) + 1j * rng.normal(size=3)
        J = fd_gradient(lambda p: dipole_field(k, p, y, A), x)  # J[i, c] = d_i F_c
        curl = np.array([J[1, 2] - J[2, 1], J[2, 0] - J[0, 2], J[0, 1] - J[1, 0]])
        ref = dipole_kernel(k, x, y, A)
        assert np.linalg.norm(curl - ref) <= 1e-5 * np.linalg.norm(ref)


def test_plane_wave_validation():
    with pytest.raises(ValidationError):
        PlaneWave(1.0, np.array([0, 0, 1.0]), np.array([0, 0, 1.0]))
    with pytest.raises(ValidationError):
        PlaneWave(-1.0, np.array([0, 0, 1.0]), np.array([1.0, 0, 0]))
    with pytest.raises(ValidationError):
        PlaneWave(1.0, np.array([0, 0, 2.0]), np.array([1.0, 0, 0]))
    pw = PlaneWave.projected(1.0, (0, 0, 3), (1, 0, 0.4))
    assert np.dot(pw.amp, pw.alpha) == pytest.approx(0)


def test_plane_wave_curl_and_helmholtz(oblique_wave):
    pw = oblique_wave
    x = np.array([0.3, -0.2, 0.7])
    J = fd_gradient(lambda p: pw.field(p), x)
    curl = np.array([J[1, 2] - J[2, 1], J[2, 0] - J[0, 2], J[0, 1] - J[1, 0]])
    np.testing.assert_allclose(curl, pw.curl(x), rtol=1e-7, atol=1e-9)
    # curl curl E0 = k^2 E0
    Jc = fd_gradient(lambda p: pw.curl(p), x)
    cc = np.array([Jc[1, 2] - Jc[2, 1], Jc[2, 0] - Jc[0, 2], Jc[0, 1] - Jc[1, 0]])
    np.testing.assert_allclose(cc, pw.k**2 * pw.field(x), rtol=1e-6)


def test_h_from_e():
    np.testing.assert_allclose(h_from_e([1j, 0, 2], omega=2.0), [0.5, 0, -1j])
    with pytest.raises(ValidationError):
        h_from_e([1, 0, 0], omega=0)
