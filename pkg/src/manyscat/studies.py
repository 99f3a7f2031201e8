"""Refinement studies shared by the command-line driver and the test suite."""
from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .continuum import solve_continuum
from .emcore import PlaneWave
from .ensemble import DensityField, place_particles
from .many_body import scattered_field_at, solve
from .reduction import partition, reduced_field_at, reduced_solve
from .single_body import (
    ParticleShape,
    asymptotic_Q,
    compute_Q,
    gauss_identity_check,
    mesh_surface,
    solve_single_body,
)


@dataclass
class Study:
    """One refinement sequence: ``param`` values against ``error`` values."""

    name: str
    param_name: str
    param: np.ndarray
    error: np.ndarray
    extra: dict

    @property
    def monotone_decreasing(self):
        return bool(np.all(np.diff(self.error) < 0))

    def loglog_slope(self):
        """Least-squares slope of log(error) against log(param)."""
        return float(np.polyfit(np.log(self.param), np.log(self.error), 1)[0])

    def rows(self):
        return np.column_stack([self.param, self.error])

    def to_dict(self):
        d = {
            "name": self.name,
            self.param_name: self.param.tolist(),
            "error": self.error.tolist(),
            "monotone_decreasing": self.monotone_decreasing,
        }
        if len(self.param) > 1 and np.all(self.error > 0):
            d["loglog_slope"] = self.loglog_slope()
        d.update(self.extra)
        return d


def single_body_study(pw: PlaneWave, ka_values, level=3, kind="sphere", aspect=(1.0, 1.0, 1.0)) -> Study:
    """Boundary-integral moment against the closed-form small-body moment as ka shrinks."""
    rows = []
    for ka in ka_values:
        size = ka / pw.k
        if kind == "sphere":
            shape = ParticleShape.sphere(size)
        else:
            ax = np.asarray(aspect, dtype=float) / max(aspect)
            shape = ParticleShape.ellipsoid(*(size * ax))
        mesh, cur = solve_single_body(shape, pw, level)
        q_bie = compute_Q(cur, mesh)
        q_asym = asymptotic_Q(pw, shape)
        err = np.linalg.norm(q_bie - q_asym) / np.linalg.norm(q_asym)
        rows.append((ka, err, np.linalg.norm(q_bie), np.linalg.norm(q_asym), cur.cond_estimate,
                     cur.tangentiality(mesh)))
    r = np.asarray(rows, dtype=float)
    return Study(
        "single-body",
        "ka",
        r[:, 0],
        r[:, 1],
        {
            "abs_Q_bie": r[:, 2].tolist(),
            "abs_Q_asym": r[:, 3].tolist(),
            "cond_estimate": r[:, 4].tolist(),
            "tangentiality": r[:, 5].tolist(),
            "level": int(level),
        },
    )


def gauss_study(shape: ParticleShape, levels=(1, 2, 3, 4)) -> Study:
    """Deviation of the static double-layer identity from -1/2 under mesh refinement."""
    err = [gauss_identity_check(mesh_surface(shape, L)) for L in levels]
    return Study("gauss", "level", np.asarray(levels, float), np.asarray(err), {"shape": shape.to_dict()})


def reduction_study(density: DensityField, a, pw: PlaneWave, c0, per_sides, probes, method="iterative") -> Study:
    """Reduced-system scattered field against the full M-body field on exterior probes."""
    ens = place_particles(density, a, ParticleShape.sphere(a), k=pw.k)
    full = solve(ens, pw, c0, method=method)
    ref = scattered_field_at(full, probes)
    errs, consistency = [], []
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        for n in per_sides:
            part = partition(ens, n)
            red = reduced_solve(part, pw, c0, method=method)
            scat = reduced_field_at(red, probes) - pw.field(probes)
            errs.append(np.linalg.norm(scat - ref) / np.linalg.norm(ref))
            consistency.append(part.weight_consistency())
    P = np.asarray(per_sides, float) ** 3
    return Study("reduction", "P", P, np.asarray(errs), {"M": ens.M, "weight_consistency": consistency})


def continuum_limit_study(
    density: DensityField, pw: PlaneWave, c0, a_values, grid=60, coarse=5, probes=None
) -> Study:
    """Cube-averaged discrete curls against the continuum curl field as a shrinks at fixed N.

    The domain is cut into ``coarse**3`` cubes; in each cube the mean of the
    particle unknowns ``A_j`` is compared with the mean of the continuum
    ``W = curl E`` over the voxels of that cube (``grid`` must be a multiple
    of ``coarse``). With ``probes`` the exterior scattered fields are compared
    as well.
    """
    if grid % coarse:
        raise ValueError("grid must be a multiple of coarse")
    cs = solve_continuum(density, pw, c0, (grid,) * 3)
    r = grid // coarse
    Wc = cs.W.values.reshape(coarse, r, coarse, r, coarse, r, 3).mean(axis=(1, 3, 5)).reshape(-1, 3)
    errs, ext, counts = [], [], []
    for a in a_values:
        ens = place_particles(density, a, ParticleShape.sphere(a), k=pw.k)
        sol = solve(ens, pw, c0)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            part = partition(ens, coarse)
        Ad = part.cube_average(sol.A)
        errs.append(np.linalg.norm(Ad - Wc) / np.linalg.norm(Wc))
        counts.append(ens.M)
        if probes is not None:
            ref = cs.scattered_field(probes)
            ext.append(np.linalg.norm(scattered_field_at(sol, probes) - ref) / np.linalg.norm(ref))
    extra = {"M": counts, "grid": grid, "coarse": coarse}
    if probes is not None:
        extra["exterior_error"] = ext
    return Study("continuum-limit", "a", np.asarray(a_values, float), np.asarray(errs), extra)
