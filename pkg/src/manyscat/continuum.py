"""Homogenised field equation on a voxel grid.

The limiting field in a domain filled with density ``N`` satisfies

    E(x) = E0(x) - c0 curl int g(x, y) W(y) N(y) dy,   W = curl E.

Taking the curl and using curl curl = grad div - lap together with
-lap g = k^2 g + delta gives a closed equation for ``W``,

    W(x) = W0(x) - c0 [k^2 int g N W + grad div int g N W + N W](x),

which is solved on a regular grid of cubic voxels with midpoint quadrature.
The self voxel carries the exact cube integral of the curl-curl kernel:
the -1/3 delta part of grad grad g plus the local +1 term. The block-Toeplitz
operator is applied with zero-padded FFTs. ``E`` is then rebuilt from ``W``.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.sparse.linalg import LinearOperator, gmres

from .emcore import FOUR_PI, PlaneWave, dyadic_batch, gradient_batch
from .ensemble import Box, DensityField
from .errors import NumericalError, ValidationError
from .many_body import _dipole_sum, direction_grid

_PAIRS = ((0, 0), (1, 1), (2, 2), (0, 1), (0, 2), (1, 2))


@dataclass
class GridField:
    """A complex 3-vector per voxel centre of a regular grid over ``box``."""

    box: Box
    values: np.ndarray  # (nx, ny, nz, 3)
    tag: str = "E"

    def __post_init__(self):
        if self.values.ndim != 4 or self.values.shape[-1] != 3 or min(self.values.shape[:3]) < 2:
            raise ValidationError("grid field needs at least 2 voxels per axis")

    @property
    def dims(self):
        return self.values.shape[:3]

    @property
    def spacing(self):
        return self.box.sides / np.asarray(self.dims)

    @property
    def points(self):
        return self.box.cell_centers(self.dims)


def cube_green_integral(k, h, order=16):
    """int over a cube of side h centred at 0 of exp(ikr)/(4 pi r) dV.

    The cube is split into six pyramids with apex at the centre; the radial
    Jacobian cancels the 1/r singularity.
    """
    x, w = np.polynomial.legendre.leggauss(order)
    t = 0.5 * (x + 1.0)
    wt = 0.5 * w
    u = 0.5 * h * x
    wu = 0.5 * h * w
    T, U, V = np.meshgrid(t, u, u, indexing="ij")
    W = wt[:, None, None] * wu[None, :, None] * wu[None, None, :]
    r = T * np.sqrt(U**2 + V**2 + 0.25 * h * h)
    # dV = t^2 (h/2) dt du dv for the face at distance h/2
    integrand = np.exp(1j * k * r) / (FOUR_PI * r) * T**2 * (0.5 * h)
    return 6.0 * complex((integrand * W).sum())


def self_voxel_coefficient(k, h):
    """Scalar s with (curl curl int_cube g F)(0) = s F for constant F.

    curl curl = grad div + k^2 + delta on g F. By cubic symmetry the principal
    value of grad grad g over the cube is (1/3) trace = -(k^2 / 3) int g, the
    delta part of grad grad g gives -1/3, and the local term gives +1.
    """
    return (2.0 / 3.0) * k * k * cube_green_integral(k, h) + 2.0 / 3.0


class _ToeplitzOperator:
    """Convolution with a translation-invariant kernel on a regular grid via FFT."""

    def __init__(self, dims, spacing, kernel_fn, ncomp):
        self.dims = tuple(dims)
        self.pad = tuple(2 * n for n in dims)
        offs = [np.fft.fftfreq(p, 1.0 / p).astype(int) for p in self.pad]
        O = np.stack(np.meshgrid(*offs, indexing="ij"), axis=-1)
        valid = np.all(np.abs(O) < np.asarray(dims), axis=-1)
        disp = O * spacing
        zero = np.all(O == 0, axis=-1)
        disp[zero] = 1.0  # placeholder, overwritten by the caller's self term
        vals = kernel_fn(disp)  # (..., ncomp)
        vals[~valid] = 0.0
        vals[zero] = 0.0
        self.kernel_hat = np.fft.fftn(vals, axes=(0, 1, 2))
        self.ncomp = ncomp

    def convolve(self, field, comp):
        """FFT of a zero-padded scalar field, multiplied by kernel component ``comp``."""
        return self.kernel_hat[..., comp] * field

    def forward(self, f):
        padded = np.zeros(self.pad, dtype=complex)
        nx, ny, nz = self.dims
        padded[:nx, :ny, :nz] = f
        return np.fft.fftn(padded)

    def backward(self, F):
        nx, ny, nz = self.dims
        return np.fft.ifftn(F)[:nx, :ny, :nz]


class CurlCurlOperator:
    """Discrete ``F -> curl curl int g F``: off-diagonal ``h^3 (k^2 g + grad grad g) F_j`` plus the cube self term."""

    def __init__(self, box: Box, dims, k):
        self.box = box
        self.dims = tuple(int(n) for n in dims)
        self.k = float(k)
        h = box.sides / np.asarray(self.dims)
        if np.ptp(h) > 1e-9 * h.max():
            raise ValidationError("voxels must be cubic: box sides / dims must be equal")
        self.h = float(h[0])
        vol = self.h**3

        def kern(d):
            D = dyadic_batch(self.k, d) * vol
            return np.stack([D[..., i, j] for i, j in _PAIRS], axis=-1)

        self._toe = _ToeplitzOperator(self.dims, self.h, kern, 6)
        self.self_term = self_voxel_coefficient(self.k, self.h)

    def __call__(self, F):
        """Apply to a field of shape (nx, ny, nz, 3)."""
        hats = [self._toe.forward(F[..., c]) for c in range(3)]
        out = np.empty(F.shape, dtype=complex)
        kh = self._toe.kernel_hat
        comp = {(i, j): n for n, (i, j) in enumerate(_PAIRS)}
        for i in range(3):
            acc = 0
            for j in range(3):
                acc = acc + kh[..., comp[(min(i, j), max(i, j))]] * hats[j]
            out[..., i] = self._toe.backward(acc)
        return out + self.self_term * F


class GradientCrossOperator:
    """Discrete ``F -> h^3 sum_{j != i} [grad g(x_i - x_j), F_j]`` (the cube self term vanishes by symmetry)."""

    def __init__(self, box: Box, dims, k):
        self.dims = tuple(int(n) for n in dims)
        self.k = float(k)
        self.h = float(box.sides[0] / self.dims[0])
        vol = self.h**3
        self._toe = _ToeplitzOperator(self.dims, self.h, lambda d: gradient_batch(self.k, d) * vol, 3)

    def __call__(self, F):
        hats = [self._toe.forward(F[..., c]) for c in range(3)]
        G = self._toe.kernel_hat
        out = np.empty(F.shape, dtype=complex)
        for i, (j, l) in enumerate(((1, 2), (2, 0), (0, 1))):
            out[..., i] = self._toe.backward(G[..., j] * hats[l] - G[..., l] * hats[j])
        return out


@dataclass
class ContinuumSolution:
    E: GridField
    W: GridField
    density_grid: np.ndarray  # N at voxel centres
    c0: float
    incident: PlaneWave
    iterations: int
    residual: float
    history: list = field(default_factory=list)
    cond_estimate: float | None = None

    @property
    def box(self):
        return self.E.box

    @property
    def k(self):
        return self.incident.k

    def scattered_field(self, x):
        """-c0 int N [grad g(x, y), W(y)] dy by the voxel midpoint rule (x outside the grid)."""
        x = np.atleast_2d(np.asarray(x, dtype=float))
        pts = self.W.points.reshape(-1, 3)
        w = self.c0 * self.density_grid.reshape(-1) * float(np.prod(self.W.spacing))
        return -_dipole_sum(x, pts, w, self.W.values.reshape(-1, 3), self.k)

    def field(self, x):
        return self.incident.field(np.atleast_2d(x)) + self.scattered_field(x)


def solve_continuum(
    density: DensityField, pw: PlaneWave, c0, dims, tol=1e-10, maxiter=200, x0=None
) -> ContinuumSolution:
    """Solve the homogenised equation on a ``dims`` voxel grid over the density box."""
    if c0 <= 0:
        raise ValidationError("c0 must be positive")
    box = density.box
    dims = tuple(int(n) for n in dims)
    pts = box.cell_centers(dims)
    Nv = density(pts)
    if np.any(Nv < 0):
        raise ValidationError("density must be non-negative")
    K = CurlCurlOperator(box, dims, pw.k)
    W0 = pw.curl(pts)
    n = W0.size

    def matvec(v):
        Wv = v.reshape(W0.shape)
        return (Wv + c0 * K(Nv[..., None] * Wv)).reshape(-1)

    history = []
    b = W0.reshape(-1)
    if not np.any(Nv):
        W = W0.copy()
        res = 0.0
    else:
        op = LinearOperator((n, n), matvec=matvec, dtype=complex)
        start = b if x0 is None else np.asarray(x0, dtype=complex).reshape(-1)
        sol, status = gmres(
            op, b, x0=start, rtol=tol, atol=0.0, restart=50, maxiter=maxiter,
            callback=lambda r: history.append(float(r)), callback_type="pr_norm",
        )
        bn = np.linalg.norm(b)
        res = float(np.linalg.norm(matvec(sol) - b) / bn) if bn else 0.0
        if status != 0 or res > 100 * tol:
            raise NumericalError(f"continuum solve did not converge (residual {res:.3e})", history)
        W = sol.reshape(W0.shape)
    G = GradientCrossOperator(box, dims, pw.k)
    E = pw.field(pts) - c0 * G(Nv[..., None] * W)
    return ContinuumSolution(
        E=GridField(box, E, "E"),
        W=GridField(box, W, "W"),
        density_grid=Nv,
        c0=float(c0),
        incident=pw,
        iterations=len(history),
        residual=res,
        history=history,
    )


def _laplacian(values, h):
    lap = np.zeros(tuple(s - 2 for s in values.shape[:3]) + values.shape[3:], dtype=values.dtype)
    c = values[1:-1, 1:-1, 1:-1]
    for ax in range(3):
        sl_p = [slice(1, -1)] * 3
        sl_m = [slice(1, -1)] * 3
        sl_p[ax] = slice(2, None)
        sl_m[ax] = slice(None, -2)
        lap += (values[tuple(sl_p)] - 2 * c + values[tuple(sl_m)]) / h[ax] ** 2
    return lap


def schrodinger_residual(E: GridField, density: DensityField, c0, k, margin=1) -> float:
    """max over interior voxels of |-lap E - k^2 E + q E| / (k^2 max|E|), q = k^2 c0 N / (1 + c0 N).

    ``margin`` voxels are dropped at each face (at least one for the stencil).
    Where N jumps at the boundary of its box the field has edge singularities,
    so with ``margin=1`` the maximum sits next to the boundary and grows like
    c0 N / h; a wider margin measures the interior truncation error.
    """
    margin = int(margin)
    if margin < 1 or min(E.dims) < 2 * margin + 1:
        raise ValidationError("grid too small for the 7-point Laplacian with this margin")
    h = E.spacing
    lap = _laplacian(E.values, h)
    inner = E.values[1:-1, 1:-1, 1:-1]
    Nv = density(E.points[1:-1, 1:-1, 1:-1])
    q = k * k * c0 * Nv / (1.0 + c0 * Nv)
    r = np.linalg.norm(-lap - k * k * inner + q[..., None] * inner, axis=-1)
    m = margin - 1
    if m:
        r = r[m:-m, m:-m, m:-m]
    scale = k * k * np.max(np.linalg.norm(E.values, axis=-1))
    return float(r.max() / scale)


@dataclass
class RadiationReport:
    radii: np.ndarray
    defects: np.ndarray

    @property
    def decay_exponent(self):
        """Slope of -log(defect) against log(r)."""
        if np.any(self.defects <= 0):
            return float("nan")
        return float(-np.polyfit(np.log(self.radii), np.log(self.defects), 1)[0])

    @property
    def monotone(self):
        return bool(np.all(np.diff(self.defects) < 0)) or bool(np.all(self.defects == 0))

    def to_dict(self):
        return {
            "radii": self.radii.tolist(),
            "defects": self.defects.tolist(),
            "decay_exponent": self.decay_exponent,
            "monotone": self.monotone,
        }


def _scattered_callable(source):
    if callable(source):
        return source
    if isinstance(source, ContinuumSolution):
        return source.scattered_field
    from .many_body import ScatterSolution, scattered_field_at
    from .reduction import ReducedSolution, reduced_field_at

    if isinstance(source, ScatterSolution):
        return lambda x: scattered_field_at(source, x)
    if isinstance(source, ReducedSolution):
        return lambda x: reduced_field_at(source, x) - source.incident.field(x)
    raise ValidationError(f"cannot take a scattered field from {type(source).__name__}")


def radiation_check(source, radii, k, center=(0.0, 0.0, 0.0), n_theta=6, n_phi=12) -> RadiationReport:
    """max over sampled directions of |r (d v/dr - i k v)| on spheres of the given radii.

    ``source`` is a solution object or a callable returning the scattered
    field at points of shape (P, 3). The radial derivative uses a fourth-order
    central difference with step 1e-3 / k.
    """
    v = _scattered_callable(source)
    center = np.asarray(center, dtype=float)
    dirs = direction_grid(n_theta, n_phi)
    step = 1e-3 / k
    out = []
    for R in radii:
        pts = [center + (R + s * step) * dirs for s in (-2, -1, 0, 1, 2)]
        vals = [np.asarray(v(p), dtype=complex) for p in pts]
        dv = (vals[0] - 8 * vals[1] + 8 * vals[3] - vals[4]) / (12 * step)
        defect = R * np.linalg.norm(dv - 1j * k * vals[2], axis=-1)
        out.append(float(defect.max()))
    return RadiationReport(np.asarray(radii, dtype=float), np.asarray(out))
