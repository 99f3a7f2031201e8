import warnings

import numpy as np
import pytest

from manyscat.ensemble import place_particles
from manyscat.errors import DomainError, ValidationError
from manyscat.many_body import direction_grid, field_at, solve
from manyscat.reduction import partition, reduced_field_at, reduced_solve

C0 = 4 * np.pi / 3


@pytest.fixture(scope="module")
def lattice():
    from manyscat.ensemble import Box, DensityField

    return place_particles(DensityField.uniform(1e-3, Box.cube()), 0.01)


def test_weights_match_counts(lattice):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        for n in (2, 5):
            part = partition(lattice, n)
            assert part.counts.sum() == lattice.M
            assert part.weight_consistency() < 1e-12


def test_too_many_cubes(lattice):
    with pytest.raises(ValidationError):
        partition(lattice, 11)


def test_degenerate_partition_reproduces_full_solve(lattice, wave):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        part = partition(lattice, 10)
    red = reduced_solve(part, wave, C0)
    full = solve(lattice, wave, C0)
    order = np.argsort(part.assignment)
    assert np.linalg.norm(red.A - full.A[order]) <= 1e-12 * np.linalg.norm(full.A)


def test_reduction_error_decreases(lattice, oblique_wave):
    probes = 0.5 + 1.5 * direction_grid(4, 8)
    full = solve(lattice, oblique_wave, C0)
    ref = field_at(full, probes) - oblique_wave.field(probes)
    errs = []
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        for n in (1, 2, 5):
            red = reduced_solve(partition(lattice, n), oblique_wave, C0)
            scat = reduced_field_at(red, probes) - oblique_wave.field(probes)
            errs.append(np.linalg.norm(scat - ref) / np.linalg.norm(ref))
    assert errs[0] > errs[1] > errs[2]


def test_cube_average(lattice):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        part = partition(lattice, 2)
    avg = part.cube_average(lattice.centers)
    np.testing.assert_allclose(avg, part.centers, atol=1e-12)


def test_probe_inside_cube_rejected(lattice, wave):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        red = reduced_solve(partition(lattice, 2), wave, C0)
    with pytest.raises(DomainError):
        reduced_field_at(red, [[0.26, 0.25, 0.25]])
