"""Particle densities and deterministic particle placement.

A density ``N(x) >= 0`` prescribes how many particles of size ``a`` sit in a
region: ``count(region) ~ a**-3 * int_region N dx``. Placement is a stratified
lattice, so positions, counts and spacings are reproducible exactly.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from math import isfinite

import numpy as np
from scipy.interpolate import RegularGridInterpolator
from scipy.spatial import cKDTree

from .errors import ValidationError
from .single_body import ParticleShape

REGIME_THRESHOLD = 0.2


@dataclass(frozen=True)
class Box:
    """Axis-aligned box [lo, hi]."""

    lo: tuple
    hi: tuple

    def __post_init__(self):
        lo = tuple(float(v) for v in self.lo)
        hi = tuple(float(v) for v in self.hi)
        if len(lo) != 3 or len(hi) != 3 or any(h <= l for l, h in zip(lo, hi)):
            raise ValidationError(f"invalid box {lo} .. {hi}")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)

    @classmethod
    def cube(cls, side=1.0, origin=(0.0, 0.0, 0.0)):
        o = np.asarray(origin, dtype=float)
        return cls(tuple(o), tuple(o + side))

    @property
    def sides(self):
        return np.asarray(self.hi) - np.asarray(self.lo)

    @property
    def volume(self):
        return float(np.prod(self.sides))

    @property
    def center(self):
        return 0.5 * (np.asarray(self.lo) + np.asarray(self.hi))

    def contains(self, x, closed=True):
        x = np.atleast_2d(x)
        lo, hi = np.asarray(self.lo), np.asarray(self.hi)
        if closed:
            return np.all((x >= lo) & (x <= hi), axis=1)
        return np.all((x >= lo) & (x < hi), axis=1)

    def cell_centers(self, dims):
        """Centres of a regular ``dims`` grid over the box, shape (nx, ny, nz, 3)."""
        axes = [
            self.lo[i] + (np.arange(dims[i]) + 0.5) * self.sides[i] / dims[i] for i in range(3)
        ]
        return np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)

    def to_dict(self):
        return {"min": list(self.lo), "max": list(self.hi)}


@dataclass
class DensityField:
    """Particle density N(x) on a box: either a constant or a cell-centred grid.

    Grid values are indexed ``values[ix, iy, iz]`` and interpolated trilinearly
    between cell centres (clamped outside the outermost centres). Outside the
    box the density is zero.
    """

    box: Box
    constant: float | None = None
    values: np.ndarray | None = None
    _interp: object = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        if (self.constant is None) == (self.values is None):
            raise ValidationError("give exactly one of constant or values")
        if self.constant is not None:
            if not isfinite(self.constant) or self.constant < 0:
                raise ValidationError("density must be finite and non-negative")
        else:
            self.values = np.asarray(self.values, dtype=float)
            if self.values.ndim != 3 or min(self.values.shape) < 1:
                raise ValidationError("grid density must be a 3-D array")
            if not np.all(np.isfinite(self.values)) or np.any(self.values < 0):
                raise ValidationError("density must be finite and non-negative")

    @classmethod
    def uniform(cls, value, box=None):
        return cls(box or Box.cube(), constant=float(value))

    @classmethod
    def from_function(cls, func, box, dims):
        """Tabulate ``func(points)`` at the cell centres of a ``dims`` grid."""
        pts = box.cell_centers(dims)
        return cls(box, values=np.asarray(func(pts), dtype=float).reshape(tuple(dims)))

    @property
    def kind(self):
        return "constant" if self.constant is not None else "grid"

    @property
    def dims(self):
        return None if self.values is None else self.values.shape

    def _axes(self):
        return [
            self.box.lo[i] + (np.arange(self.values.shape[i]) + 0.5) * self.box.sides[i] / self.values.shape[i]
            for i in range(3)
        ]

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        shape = x.shape[:-1]
        pts = x.reshape(-1, 3)
        inside = self.box.contains(pts)
        out = np.zeros(len(pts))
        if self.constant is not None:
            out[inside] = self.constant
        else:
            if self._interp is None:
                self._interp = _ClampedTrilinear(self._axes(), self.values)
            out[inside] = self._interp(pts[inside])
        return out.reshape(shape)

    def integral(self, region: Box | None = None, resolution=None):
        """int_region N dx by the midpoint rule.

        Over the full box this is exact for the grid (sum of cell values times
        cell volume). For a sub-region the density is sampled at the centres of
        a ``resolution`` grid (default: fine enough to resolve the density grid).
        """
        if region is None:
            if self.constant is not None:
                return self.constant * self.box.volume
            return float(self.values.sum()) * self.box.volume / self.values.size
        lo = np.maximum(region.lo, self.box.lo)
        hi = np.minimum(region.hi, self.box.hi)
        if np.any(hi <= lo):
            return 0.0
        sub = Box(tuple(lo), tuple(hi))
        if self.constant is not None:
            return self.constant * sub.volume
        if resolution is None:
            cell = self.box.sides / np.asarray(self.values.shape)
            resolution = tuple(int(max(2, np.ceil(4 * s / c))) for s, c in zip(sub.sides, cell))
        pts = sub.cell_centers(resolution)
        return float(self(pts).mean()) * sub.volume

    def mean(self):
        return self.integral() / self.box.volume

    def max(self):
        return self.constant if self.constant is not None else float(self.values.max())

    def gradient(self, x):
        """Gradient of the interpolated density by central differences (one-sided at the box faces)."""
        x = np.asarray(x, dtype=float)
        if self.constant is not None:
            return np.zeros(x.shape)
        cell = self.box.sides / np.asarray(self.values.shape)
        lo, hi = np.asarray(self.box.lo), np.asarray(self.box.hi)
        out = np.empty(x.shape)
        for i in range(3):
            h = 0.5 * cell[i]
            e = np.zeros(3)
            e[i] = 1.0
            xp = x + h * e
            xm = x - h * e
            xp[..., i] = np.minimum(xp[..., i], hi[i])
            xm[..., i] = np.maximum(xm[..., i], lo[i])
            out[..., i] = (self(xp) - self(xm)) / (xp[..., i] - xm[..., i])
        return out

    def to_dict(self):
        d = {"kind": self.kind, "box": self.box.to_dict()}
        if self.constant is not None:
            d["value"] = self.constant
        else:
            d["dims"] = list(self.values.shape)
        return d


class _ClampedTrilinear:
    def __init__(self, axes, values):
        self.axes = axes
        self.lo = np.array([a[0] for a in axes])
        self.hi = np.array([a[-1] for a in axes])
        # Degenerate axes (one cell) are padded so the interpolator stays trilinear.
        ax2, vals = [], values
        for i, a in enumerate(axes):
            if len(a) == 1:
                ax2.append(np.array([a[0] - 1.0, a[0] + 1.0]))
                vals = np.concatenate([vals, vals], axis=i)
            else:
                ax2.append(a)
        self.f = RegularGridInterpolator(ax2, vals, method="linear")

    def __call__(self, pts):
        return self.f(np.clip(pts, self.lo, self.hi))


@dataclass
class RegimeReport:
    ka: float
    a_over_d: float
    score: float
    passed: bool
    threshold: float = REGIME_THRESHOLD

    def to_dict(self):
        return {
            "ka": self.ka,
            "a_over_d": self.a_over_d,
            "score": self.score,
            "passed": self.passed,
            "threshold": self.threshold,
        }


@dataclass
class Ensemble:
    """Centres of M identical small bodies of size ``a`` inside a domain."""

    centers: np.ndarray
    a: float
    shape: ParticleShape
    domain: Box | None = None
    density: DensityField | None = None
    d: float = float("inf")

    def __post_init__(self):
        self.centers = np.asarray(self.centers, dtype=float).reshape(-1, 3)
        if self.a <= 0:
            raise ValidationError("particle size a must be positive")

    @classmethod
    def from_centers(cls, centers, a, shape=None, domain=None, density=None):
        centers = np.asarray(centers, dtype=float).reshape(-1, 3)
        d = min_distance(centers)
        if d == 0.0:
            raise ValidationError("duplicate particle centres")
        return cls(centers, a, shape or ParticleShape.sphere(a), domain, density, d)

    @property
    def M(self):
        return len(self.centers)

    @property
    def c0(self):
        return self.shape.c_D

    def permuted(self, perm):
        return Ensemble(self.centers[perm], self.a, self.shape, self.domain, self.density, self.d)


def min_distance(centers):
    centers = np.asarray(centers, dtype=float)
    if len(centers) < 2:
        return float("inf")
    dist, _ = cKDTree(centers).query(centers, k=2)
    return float(dist[:, 1].min())


def predicted_count(density: DensityField, a) -> int:
    """round(a**-3 * int_Omega N dx)."""
    if a <= 0:
        raise ValidationError("a must be positive")
    total = density.integral()
    if total <= 0:
        raise ValidationError("density integrates to zero: empty ensemble")
    return int(round(total / a**3))


def validate_regime(ens: Ensemble, k) -> RegimeReport:
    """Smallness score k a + a / d; passes at or below the threshold."""
    ka = float(k * ens.a)
    a_over_d = 0.0 if not np.isfinite(ens.d) else float(ens.a / ens.d)
    score = ka + a_over_d
    return RegimeReport(ka, a_over_d, score, score <= REGIME_THRESHOLD)


def _spread_order(n):
    """Deterministic ordering of n lattice cells that spreads any prefix evenly."""
    golden = (np.sqrt(5.0) - 1.0) / 2.0
    return np.argsort((np.arange(n) * golden) % 1.0, kind="stable")


def _coarse_blocks(density: DensityField, a, min_per_block=64):
    if density.constant is not None:
        return (1, 1, 1)
    m = density.integral() / a**3
    nb = max(1, int(np.floor((m / min_per_block) ** (1.0 / 3.0))))
    dims = density.values.shape
    return tuple(min(nb, d) for d in dims)


def place_particles(
    density: DensityField,
    a,
    shape: ParticleShape | None = None,
    k=None,
    override=False,
    blocks=None,
) -> Ensemble:
    """Stratified lattice placement realising the distribution law.

    The domain is split into coarse blocks. Inside each block the target count
    ``round(a**-3 int_block N)`` fixes a lattice of spacing close to
    ``a / mean(N)**(1/3)``; particles sit at the centres of selected lattice
    cells. A constant density therefore gives a full cubic lattice.
    """
    predicted_count(density, a)
    shape = shape or ParticleShape.sphere(a)
    blocks = blocks or _coarse_blocks(density, a)
    box = density.box
    bside = box.sides / np.asarray(blocks)
    centers = []
    for ib in np.ndindex(*blocks):
        lo = np.asarray(box.lo) + np.asarray(ib) * bside
        blk = Box(tuple(lo), tuple(lo + bside))
        mass = density.integral(blk)
        target = int(round(mass / a**3))
        if target == 0:
            continue
        h = (blk.volume / target) ** (1.0 / 3.0)
        n = np.maximum(1, np.round(bside / h)).astype(int)
        while np.prod(n) < target:
            n[np.argmax(bside / n)] += 1
        cells = np.prod(n)
        grid = blk.cell_centers(tuple(n)).reshape(-1, 3)
        if cells > target:
            grid = grid[np.sort(_spread_order(cells)[:target])]
        centers.append(grid)
    if not centers:
        raise ValidationError("density too small for particle size: empty ensemble")
    centers = np.concatenate(centers)
    d = min_distance(centers)
    if d <= 2 * a:
        raise ValidationError(
            f"infeasible packing: nearest-neighbour distance d={d:.4g} <= 2a={2 * a:.4g}"
        )
    ens = Ensemble(centers, float(a), shape, box, density, d)
    if k is not None:
        rep = validate_regime(ens, k)
        if not rep.passed and not override:
            raise ValidationError(
                f"regime check failed: k a + a/d = {rep.score:.3g} > {REGIME_THRESHOLD}"
            )
    return ens


def count_in_region(ens: Ensemble, region: Box) -> int:
    """Number of centres inside the closed box ``region``."""
    return int(region.contains(ens.centers).sum())


def block_counts(ens: Ensemble, blocks):
    """Realised and predicted counts per coarse block of the ensemble domain."""
    box = ens.domain
    bside = box.sides / np.asarray(blocks)
    idx = np.floor((ens.centers - np.asarray(box.lo)) / bside).astype(int)
    idx = np.clip(idx, 0, np.asarray(blocks) - 1)
    realised = np.zeros(blocks, dtype=int)
    np.add.at(realised, tuple(idx.T), 1)
    predicted = np.zeros(blocks)
    for ib in np.ndindex(*blocks):
        lo = np.asarray(box.lo) + np.asarray(ib) * bside
        predicted[ib] = ens.density.integral(Box(tuple(lo), tuple(lo + bside))) / ens.a**3
    return realised, predicted
