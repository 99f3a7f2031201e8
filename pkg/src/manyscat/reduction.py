"""Cube-partition reduction of the M-body system.

The domain is tiled by P congruent cubes. Each cube is represented by its
centre x_p carrying the weight ``N(x_p) |cube|``, which stands in for
``a^3 * (particles in the cube)``. The reduced system has the same form as the
M-body one with those weights, so its order is P instead of M.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .emcore import PlaneWave
from .ensemble import Box, Ensemble
from .errors import DomainError, ValidationError
from .many_body import PointDipoleSystem, SolveInfo, _dipole_sum, solve_system


@dataclass
class CubePartition:
    centers: np.ndarray  # (P, 3)
    side: np.ndarray  # cube edge lengths (3,)
    counts: np.ndarray  # particles per cube
    weights: np.ndarray  # N(x_p) |cube|
    per_side: int
    domain: Box
    a: float
    assignment: np.ndarray  # cube index of each particle

    @property
    def P(self):
        return len(self.centers)

    @property
    def b(self):
        return float(self.side.max())

    def weight_consistency(self):
        """Relative gap between a^3 * sum(counts) and sum(weights)."""
        realised = self.a**3 * self.counts.sum()
        target = self.weights.sum()
        return abs(realised - target) / max(target, 1e-300)

    def cube_average(self, values):
        """Mean of per-particle values over each cube (zero for empty cubes)."""
        values = np.asarray(values)
        out = np.zeros((self.P,) + values.shape[1:], dtype=values.dtype)
        np.add.at(out, self.assignment, values)
        nz = self.counts > 0
        out[nz] /= self.counts[nz].reshape((-1,) + (1,) * (values.ndim - 1))
        return out


def partition(ens: Ensemble, per_side: int) -> CubePartition:
    """Tile the ensemble domain into ``per_side**3`` cubes."""
    if int(per_side) < 1:
        raise ValidationError("per_side must be at least 1")
    if ens.domain is None or ens.density is None:
        raise ValidationError("partition needs an ensemble with a domain and a density")
    n = int(per_side)
    P = n**3
    if P > ens.M:
        raise ValidationError(f"P = {P} cubes exceeds M = {ens.M} particles")
    if P > ens.M / 8:
        warnings.warn(f"P = {P} is not much smaller than M = {ens.M}", stacklevel=2)
    box = ens.domain
    side = box.sides / n
    if np.isfinite(ens.d) and side.min() < 4 * ens.d:
        warnings.warn(f"cube side {side.min():.3g} < 4 d = {4 * ens.d:.3g}", stacklevel=2)
    centers = box.cell_centers((n, n, n)).reshape(-1, 3)
    idx = np.floor((ens.centers - np.asarray(box.lo)) / side).astype(int)
    idx = np.clip(idx, 0, n - 1)
    flat = np.ravel_multi_index(idx.T, (n, n, n))
    counts = np.bincount(flat, minlength=P)
    weights = ens.density(centers) * float(np.prod(side))
    return CubePartition(centers, side, counts, weights, n, box, ens.a, flat)


@dataclass
class ReducedSolution:
    partition: CubePartition
    A: np.ndarray
    c0: float
    k: float
    incident: PlaneWave
    info: SolveInfo


def reduced_solve(part: CubePartition, pw: PlaneWave, c0, method="iterative", tol=1e-11) -> ReducedSolution:
    """Solve the P-cube system with source weights ``c0 N(x_p) |cube|``."""
    if c0 <= 0:
        raise ValidationError("c0 must be positive")
    system = PointDipoleSystem(part.centers, c0 * part.weights, pw.k, pw)
    A, info = solve_system(system, method=method, tol=tol)
    return ReducedSolution(part, A, float(c0), pw.k, pw, info)


def reduced_field_at(sol: ReducedSolution, x):
    """E0(x) - sum_p c0 N(x_p)|cube| [grad g(x, x_p), A_p]; probes must be b/2 from every centre."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    part = sol.partition
    d = np.linalg.norm(x[:, None, :] - part.centers[None, :, :], axis=-1)
    near = np.argwhere(d < 0.5 * part.b)
    if len(near):
        p, q = near[0]
        raise DomainError(f"probe {x[p].tolist()} is within b/2 of cube centre {q}")
    return sol.incident.field(x) - _dipole_sum(x, part.centers, sol.c0 * part.weights, sol.A, sol.k)
