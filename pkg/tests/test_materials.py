import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from manyscat.continuum import GridField
from manyscat.ensemble import Box, DensityField
from manyscat.errors import InfeasibleDesignError, ValidationError
from manyscat.materials import (
    ScalarGrid,
    curlcurl_residual,
    density_for_target,
    pde_form_gap,
    permeability_from_density,
    refraction_from_density,
    rhs_density_form,
    rhs_permeability_form,
)
from manyscat.emcore import PlaneWave

C0 = 4 * np.pi / 3


def test_refraction_examples(unit_box):
    assert np.all(refraction_from_density(DensityField.uniform(0.0, unit_box), C0).values == 1.0)
    n2 = refraction_from_density(DensityField.uniform(3 / (4 * np.pi), unit_box), C0)
    assert n2.values.ravel()[0] == pytest.approx(0.5, abs=1e-15)


def test_refraction_decreasing_in_density(unit_box):
    vals = np.linspace(0, 1, 27).reshape(3, 3, 3)
    n2 = refraction_from_density(DensityField(unit_box, values=vals), C0).values.ravel()
    assert np.all(np.diff(n2) < 0)
    assert np.all((n2 > 0) & (n2 <= 1))


def test_permeability_examples(unit_box):
    spec = permeability_from_density(DensityField.uniform(0.0, unit_box), C0, mu0=2.0, dims=(3, 3, 3))
    assert np.all(spec.mu.values == 2.0) and np.all(spec.grad_log_mu == 0)
    spec = permeability_from_density(DensityField.uniform(0.1, unit_box), C0, dims=(4, 4, 4))
    assert np.abs(spec.grad_log_mu).max() == 0.0


def test_permeability_equals_refraction(rng, unit_box):
    dens = DensityField(unit_box, values=rng.uniform(0, 0.3, (5, 4, 3)))
    spec = permeability_from_density(dens, C0, mu0=1.7)
    n2 = refraction_from_density(dens, C0)
    np.testing.assert_allclose(spec.mu.values / spec.mu0, n2.values, rtol=1e-14)


def test_gradient_ratio_on_linear_density(unit_box):
    f = lambda x: 0.1 * x[..., 0]
    dens = DensityField.from_function(f, unit_box, (6, 5, 5))
    spec = permeability_from_density(dens, C0)
    N = dens.values
    expect = -C0 * 0.1 / (1 + C0 * N)
    np.testing.assert_allclose(spec.grad_log_mu[..., 0], expect, rtol=1e-12)
    np.testing.assert_allclose(spec.grad_log_mu[..., 1:], 0, atol=1e-15)


def test_design_examples(unit_box):
    ones = ScalarGrid(unit_box, np.ones((2, 2, 2)))
    assert np.all(density_for_target(ones, C0).values == 0)
    half = ScalarGrid(unit_box, np.full((2, 2, 2), 0.5))
    np.testing.assert_allclose(density_for_target(half, C0).values, 3 / (4 * np.pi), rtol=1e-15)
    bad = ScalarGrid(unit_box, np.full((2, 2, 2), 1.5))
    with pytest.raises(InfeasibleDesignError) as exc:
        density_for_target(bad, C0)
    assert len(exc.value.offending) == 8
    neg = np.full((2, 2, 2), 0.5)
    neg[1, 0, 1] = 0.0
    with pytest.raises(InfeasibleDesignError) as exc:
        density_for_target(ScalarGrid(unit_box, neg), C0)
    assert exc.value.offending[0]["index"] == [1, 0, 1]


@settings(max_examples=50, deadline=None)
@given(arrays(np.float64, (3, 4, 2), elements=st.floats(1e-3, 1.0)), st.floats(0.1, 10.0))
def test_round_trip(n2, c0):
    box = Box.cube()
    dens = density_for_target(ScalarGrid(box, n2), c0)
    back = refraction_from_density(dens, c0).values
    np.testing.assert_allclose(back, n2, rtol=1e-12, atol=0)


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**31 - 1), st.floats(0.1, 10.0), st.floats(0.1, 5.0))
def test_pde_forms_are_identical(seed, c0, k):
    rng = np.random.default_rng(seed)
    shape = (4, 3, 5)
    N = rng.uniform(0, 1, shape)
    gN = rng.normal(size=shape + (3,))
    E = rng.normal(size=shape + (3,)) + 1j * rng.normal(size=shape + (3,))
    W = rng.normal(size=shape + (3,)) + 1j * rng.normal(size=shape + (3,))
    assert pde_form_gap(E, W, N, gN, c0, k) <= 1e-12
    a = rhs_density_form(E, W, N, gN, c0, k)
    b = rhs_permeability_form(E, W, N, gN, c0, k, mu0=3.0)
    np.testing.assert_allclose(a, b, rtol=1e-12, atol=1e-12 * np.abs(a).max())


def test_curlcurl_residual_free_space(unit_box):
    pw = PlaneWave.projected(2.0, (0.3, 0.2, 1.0), (1, 0, 0))
    zero = DensityField.uniform(0.0, unit_box)
    r = []
    for n in (12, 24):
        E = GridField(unit_box, pw.field(unit_box.cell_centers((n, n, n))))
        r.append(curlcurl_residual(E, zero, C0, pw.k))
    assert r[0] / r[1] == pytest.approx(4.0, rel=0.1)


def test_invalid_inputs(unit_box):
    with pytest.raises(ValidationError):
        refraction_from_density(DensityField.uniform(0.1, unit_box), -1.0)
    with pytest.raises(ValidationError):
        permeability_from_density(DensityField.uniform(0.1, unit_box), C0, mu0=0.0)
    E = GridField(unit_box, np.ones((4, 4, 4, 3)))
    with pytest.raises(ValidationError):
        curlcurl_residual(E, DensityField.uniform(0.0, unit_box), C0, 1.0)
