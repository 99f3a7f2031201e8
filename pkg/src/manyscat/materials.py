"""Effective material parameters of a medium loaded with small conducting bodies.

The homogenised field obeys

    curl curl E = k^2 / (1 + c0 N) E - c0 / (1 + c0 N) [grad N, curl E],

which reads as a medium with refraction coefficient n^2 = 1 / (1 + c0 N) and
permeability mu = mu0 n^2, i.e. curl curl E = K^2 E + [grad mu / mu, curl E]
with K^2 = k^2 n^2. Conducting inclusions can only lower n^2, so targets with
n^2 > 1 are infeasible.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .continuum import GridField
from .ensemble import Box, DensityField
from .errors import InfeasibleDesignError, ValidationError


@dataclass
class ScalarGrid:
    """Real values at the cell centres of a regular grid over ``box``."""

    box: Box
    values: np.ndarray  # (nx, ny, nz)

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.ndim != 3:
            raise ValidationError("scalar grid must be 3-D")

    @property
    def dims(self):
        return self.values.shape

    @property
    def spacing(self):
        return self.box.sides / np.asarray(self.dims)

    @property
    def points(self):
        return self.box.cell_centers(self.dims)

    def gradient(self):
        """Central differences inside, one-sided at the faces; shape (nx, ny, nz, 3)."""
        return _grid_gradient(self.values, self.spacing)


@dataclass
class MaterialSpec:
    n2: ScalarGrid
    mu: ScalarGrid
    mu0: float
    grad_log_mu: np.ndarray  # grad mu / mu, (nx, ny, nz, 3)


def _grid_gradient(values, h):
    out = np.zeros(values.shape + (3,))
    for ax in range(3):
        if values.shape[ax] > 1:
            out[..., ax] = np.gradient(values, h[ax], axis=ax)
    return out


def _density_grid(density: DensityField, dims=None):
    """Density sampled at cell centres; grid densities use their own values when dims match."""
    if density.kind == "grid" and (dims is None or tuple(dims) == density.dims):
        return density.values.copy(), density.dims
    dims = (1, 1, 1) if dims is None else tuple(int(n) for n in dims)
    return density(density.box.cell_centers(dims)), dims


def refraction_from_density(density: DensityField, c0, dims=None) -> ScalarGrid:
    """n^2 = 1 / (1 + c0 N) at the cell centres of the density grid (or of ``dims``)."""
    if c0 <= 0:
        raise ValidationError("c0 must be positive")
    N, _ = _density_grid(density, dims)
    return ScalarGrid(density.box, 1.0 / (1.0 + c0 * N))


def permeability_from_density(density: DensityField, c0, mu0=1.0, dims=None) -> MaterialSpec:
    """mu = mu0 / (1 + c0 N) and grad mu / mu = -c0 grad N / (1 + c0 N) on the grid."""
    if c0 <= 0:
        raise ValidationError("c0 must be positive")
    if mu0 <= 0:
        raise ValidationError("mu0 must be positive")
    N, _ = _density_grid(density, dims)
    n2 = ScalarGrid(density.box, 1.0 / (1.0 + c0 * N))
    mu = ScalarGrid(density.box, mu0 / (1.0 + c0 * N))
    gradN = _grid_gradient(N, n2.spacing)
    ratio = -c0 * gradN / (1.0 + c0 * N)[..., None]
    return MaterialSpec(n2, mu, float(mu0), ratio)


def density_for_target(n2_target: ScalarGrid, c0) -> DensityField:
    """Invert n^2 = 1 / (1 + c0 N): N = (1/n^2 - 1) / c0.

    Raises InfeasibleDesignError listing every voxel index with n^2 > 1 or n^2 <= 0.
    """
    if c0 <= 0:
        raise ValidationError("c0 must be positive")
    n2 = n2_target.values
    bad = ~np.isfinite(n2) | (n2 <= 0.0) | (n2 > 1.0)
    if np.any(bad):
        idx = [tuple(int(i) for i in v) for v in np.argwhere(bad)]
        raise InfeasibleDesignError(
            f"{len(idx)} voxel(s) have n^2 outside (0, 1]; conducting inclusions can only lower n^2",
            offending=[{"index": list(i), "n2": float(n2[i])} for i in idx],
        )
    N = np.maximum((1.0 / n2 - 1.0) / c0, 0.0)
    return DensityField(n2_target.box, values=N)


def rhs_density_form(E, W, N, grad_N, c0, k):
    """k^2 / (1 + c0 N) E - c0 / (1 + c0 N) [grad N, W], arrays of shape (..., 3)."""
    s = 1.0 / (1.0 + c0 * np.asarray(N))[..., None]
    return k * k * s * E - c0 * s * np.cross(grad_N, W)


def rhs_permeability_form(E, W, N, grad_N, c0, k, mu0=1.0):
    """K^2 E + [grad mu / mu, W] with mu = mu0 / (1 + c0 N) and K^2 = k^2 mu / mu0.

    grad mu is taken by the chain rule d mu / d N = -mu0 c0 / (1 + c0 N)^2.
    """
    N = np.asarray(N)
    mu = mu0 / (1.0 + c0 * N)
    dmu_dN = -mu0 * c0 / (1.0 + c0 * N) ** 2
    K2 = k * k * mu / mu0
    grad_log_mu = (dmu_dN / mu)[..., None] * grad_N
    return K2[..., None] * E + np.cross(grad_log_mu, W)


def pde_form_gap(E, W, N, grad_N, c0, k, mu0=1.0) -> float:
    """max |density form - permeability form| / max |density form|."""
    a = rhs_density_form(E, W, N, grad_N, c0, k)
    b = rhs_permeability_form(E, W, N, grad_N, c0, k, mu0)
    scale = np.max(np.abs(a))
    return float(np.max(np.abs(a - b)) / scale) if scale else float(np.max(np.abs(b)))


def _curl(F, h):
    d = [np.gradient(F, h[ax], axis=ax) for ax in range(3)]  # d[ax][..., comp]
    return np.stack(
        [d[1][..., 2] - d[2][..., 1], d[2][..., 0] - d[0][..., 2], d[0][..., 1] - d[1][..., 0]],
        axis=-1,
    )


def curlcurl_residual(E: GridField, density: DensityField, c0, k, margin=2) -> float:
    """max over interior voxels of |curl curl E - K^2 E - [grad mu / mu, curl E]| / (k^2 max|E|).

    Curls use central differences; ``margin`` (at least 2) voxels are dropped
    at each face because the nested stencil reaches two cells out.
    """
    margin = int(margin)
    if margin < 2 or min(E.dims) < 2 * margin + 1:
        raise ValidationError("grid too small for the curl-curl stencil with this margin")
    h = E.spacing
    W = _curl(E.values, h)
    CC = _curl(W, h)
    N = density(E.points)
    grad_N = _grid_gradient(N, h)
    rhs = rhs_permeability_form(E.values, W, N, grad_N, c0, k)
    m = (slice(margin, -margin),) * 3
    r = np.linalg.norm((CC - rhs)[m], axis=-1)
    scale = k * k * np.max(np.linalg.norm(E.values, axis=-1))
    return float(r.max() / scale)
