import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from manyscat.ensemble import (
    Box,
    DensityField,
    Ensemble,
    block_counts,
    count_in_region,
    min_distance,
    place_particles,
    predicted_count,
    validate_regime,
)
from manyscat.errors import ValidationError
from manyscat.single_body import ParticleShape


def test_predicted_count_examples(dilute, unit_box):
    assert predicted_count(dilute, 0.01) == 1000
    assert predicted_count(dilute, 0.005) == 8000
    grid = DensityField(unit_box, values=np.full((4, 4, 4), 8e-4))
    assert predicted_count(grid, 0.01) == 800
    with pytest.raises(ValidationError):
        predicted_count(DensityField.uniform(0.0, unit_box), 0.01)


def test_constant_density_gives_cubic_lattice(dilute, unit_box):
    ens = place_particles(dilute, 0.01)
    assert ens.M == 1000
    assert ens.d == pytest.approx(0.1)
    for octant in np.ndindex(2, 2, 2):
        lo = 0.5 * np.asarray(octant)
        assert count_in_region(ens, Box(tuple(lo), tuple(lo + 0.5))) == 125
    assert count_in_region(ens, unit_box) == ens.M
    assert count_in_region(ens, Box((2, 2, 2), (3, 3, 3))) == 0
    half = count_in_region(ens, Box((0, 0, 0), (0.5, 1, 1)))
    assert abs(half - ens.M / 2) <= 100


def test_placement_is_deterministic(dilute):
    a = place_particles(dilute, 0.02)
    b = place_particles(dilute, 0.02)
    np.testing.assert_array_equal(a.centers, b.centers)


def test_variable_density_counts(unit_box):
    f = lambda x: 2e-3 * (0.2 + x[..., 0])
    dens = DensityField.from_function(f, unit_box, (8, 8, 8))
    a = 0.01
    ens = place_particles(dens, a)
    pred = predicted_count(dens, a)
    assert abs(ens.M - pred) <= 0.05 * pred
    realised, predicted = block_counts(ens, (2, 2, 2))
    np.testing.assert_allclose(realised, predicted, rtol=0.1)
    assert min_distance(ens.centers) > 2 * a


def test_packing_infeasible(unit_box):
    with pytest.raises(ValidationError, match="2a"):
        place_particles(DensityField.uniform(0.5, unit_box), 0.01)


def test_regime_examples():
    s = ParticleShape.sphere(0.01)
    ens = Ensemble(np.zeros((1, 3)), 0.01, s, d=0.1)
    rep = validate_regime(ens, 1.0)
    assert rep.score == pytest.approx(0.11) and rep.passed
    rep = validate_regime(Ensemble(np.zeros((1, 3)), 0.01, s, d=0.02), 1.0)
    assert rep.score == pytest.approx(0.51) and not rep.passed


def test_regime_check_on_placement(dilute):
    with pytest.raises(ValidationError, match="regime"):
        place_particles(dilute, 0.02, k=10.0)
    ens = place_particles(dilute, 0.02, k=10.0, override=True)
    assert ens.M == 125


def test_regime_score_limit_is_cube_root_of_density(dilute):
    N = 1e-3
    for a in (0.02, 0.01, 0.005):
        ens = place_particles(dilute, a)
        assert validate_regime(ens, 1.0).a_over_d == pytest.approx(N ** (1 / 3))


def test_density_field_interpolation_and_integral(unit_box):
    vals = np.arange(8, dtype=float).reshape(2, 2, 2)
    dens = DensityField(unit_box, values=vals)
    centres = unit_box.cell_centers((2, 2, 2))
    np.testing.assert_allclose(dens(centres), vals)
    assert dens([5.0, 5.0, 5.0]) == 0.0
    assert dens.integral() == pytest.approx(vals.mean())
    sub = Box((0, 0, 0), (0.5, 0.5, 0.5))
    flat = DensityField(unit_box, values=np.full((3, 3, 3), 2e-3))
    assert flat.integral(sub) == pytest.approx(0.125 * 2e-3, rel=1e-12)
    assert 0 < dens.integral(sub) < dens.integral()
    with pytest.raises(ValidationError):
        DensityField(unit_box, values=-vals)


@settings(max_examples=25, deadline=None)
@given(st.floats(1e-4, 1e-2), st.sampled_from([0.02, 0.025, 0.04]))
def test_realised_count_tracks_prediction(N, a):
    dens = DensityField.uniform(N, Box.cube())
    pred = predicted_count(dens, a)
    if pred == 0 or a / (a / N ** (1 / 3)) >= 0.5:
        return
    ens = place_particles(dens, a)
    assert abs(ens.M - pred) <= max(1, 0.05 * pred)
    assert np.all(Box.cube().contains(ens.centers))


def test_duplicate_centres_rejected():
    with pytest.raises(ValidationError):
        Ensemble.from_centers([[0, 0, 0], [0, 0, 0]], 0.01)
