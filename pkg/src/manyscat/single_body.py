"""Boundary-integral solver for one small perfectly conducting body.

The scattered field is represented as ``v_E = curl int_S g(x, t) J(t) dt`` with
a tangential surface current ``J``. Imposing a vanishing tangential total field
on ``S`` gives the second-kind equation

    J(s)/2 + int_S [N_s, [grad_s g(s, t), J(t)]] dt = -[N_s, E0(s)]

which is discretised by a Nystrom scheme on a reduced latitude-longitude grid
(Gauss-Legendre in cos(theta), trapezoid in phi). The weakly singular self
cell is integrated with a Duffy-type subdivision instead of being dropped.

The module also carries the closed-form small-body formulas for the moment
``Q = int_S J`` and for the scattering amplitude.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla

from .emcore import FOUR_PI, PlaneWave, gradient_batch, radial_derivatives
from .errors import DomainError, NumericalError, ValidationError

# Gauss-Legendre order per Duffy triangle for the self-cell integral.
_SELF_ORDER = 8
_COND_LIMIT = 1e12


@dataclass(frozen=True)
class ParticleShape:
    """Sphere or triaxial ellipsoid centred at the origin.

    ``a`` is half the diameter, i.e. the largest semi-axis, and the shape
    factor is ``c_D = |D| / a**3``.
    """

    kind: str
    semi_axes: tuple

    def __post_init__(self):
        if self.kind not in ("sphere", "ellipsoid"):
            raise ValidationError(f"unsupported shape kind {self.kind!r}")
        axes = tuple(float(s) for s in self.semi_axes)
        if len(axes) != 3 or min(axes) <= 0:
            raise ValidationError("semi-axes must be three positive lengths")
        if self.kind == "sphere" and not (axes[0] == axes[1] == axes[2]):
            raise ValidationError("a sphere needs equal semi-axes")
        object.__setattr__(self, "semi_axes", axes)

    @classmethod
    def sphere(cls, a):
        return cls("sphere", (a, a, a))

    @classmethod
    def ellipsoid(cls, ax, by, cz):
        return cls("ellipsoid", (ax, by, cz))

    @property
    def a(self):
        return max(self.semi_axes)

    @property
    def volume(self):
        ax, by, cz = self.semi_axes
        return 4.0 * np.pi / 3.0 * ax * by * cz

    @property
    def c_D(self):
        return self.volume / self.a**3

    def scaled(self, factor):
        return ParticleShape(self.kind, tuple(factor * s for s in self.semi_axes))

    def to_dict(self):
        return {"kind": self.kind, "semi_axes": list(self.semi_axes)}


def _surface_point(shape, center, u, phi):
    """Position, unnormalised outward normal (= x_u cross x_phi up to sign) on the surface."""
    ax, by, cz = shape.semi_axes
    s = np.sqrt(np.clip(1.0 - u * u, 0.0, None))
    cphi, sphi = np.cos(phi), np.sin(phi)
    pos = np.stack([ax * s * cphi, by * s * sphi, cz * u], axis=-1) + center
    nrm = np.stack([by * cz * s * cphi, ax * cz * s * sphi, ax * by * u], axis=-1)
    return pos, nrm


@dataclass
class SurfaceMesh:
    """Quadrature nodes, outward unit normals and area weights on a closed surface."""

    nodes: np.ndarray
    normals: np.ndarray
    weights: np.ndarray
    level: int
    shape: ParticleShape | None = None
    center: np.ndarray = field(default_factory=lambda: np.zeros(3))
    # Parameter-space cell of each node: (u, phi, u_lo, u_hi, phi_lo, phi_hi).
    cells: np.ndarray | None = None
    body: np.ndarray | None = None

    @property
    def n(self):
        return len(self.weights)

    @property
    def area(self):
        return float(self.weights.sum())

    @staticmethod
    def concatenate(meshes):
        body = np.concatenate([np.full(m.n, i) for i, m in enumerate(meshes)])
        out = SurfaceMesh(
            nodes=np.concatenate([m.nodes for m in meshes]),
            normals=np.concatenate([m.normals for m in meshes]),
            weights=np.concatenate([m.weights for m in meshes]),
            level=min(m.level for m in meshes),
            cells=np.concatenate([m.cells for m in meshes]),
            body=body,
        )
        out._parts = list(meshes)
        return out

    def parts(self):
        """Sub-meshes making up this mesh (just ``[self]`` for a single body)."""
        return getattr(self, "_parts", [self])


def mesh_surface(shape: ParticleShape, level: int, center=(0.0, 0.0, 0.0)) -> SurfaceMesh:
    """Reduced Gauss-Legendre latitude-longitude quadrature of the shape surface.

    Level ``L`` uses ``8 * 2**(L-1)`` colatitude rings; each ring carries about
    ``2 n_theta sin(theta)`` equispaced longitudes, so nodes are roughly
    uniformly spread and the count grows by about 4 per level.
    """
    if not isinstance(shape, ParticleShape):
        raise ValidationError(f"unsupported shape {shape!r}")
    if int(level) < 1:
        raise ValidationError("mesh level must be >= 1")
    level = int(level)
    center = np.asarray(center, dtype=float)
    n_theta = 8 * 2 ** (level - 1)
    u_nodes, u_w = np.polynomial.legendre.leggauss(n_theta)
    edges = np.concatenate([[-1.0], -1.0 + np.cumsum(u_w)])
    edges[-1] = 1.0

    # Ring radius and meridional cell length set the longitude count, so cells
    # are close to square in arc length on elongated or flattened shapes.
    ax, by, cz = shape.semi_axes
    sin_t = np.sqrt(1.0 - u_nodes**2)
    rho = 0.5 * (ax + by) * sin_t
    ds_du = np.sqrt((0.5 * (ax + by) * u_nodes / sin_t) ** 2 + cz**2)
    arc = ds_du * u_w
    us, phis, wts, cells = [], [], [], []
    for i, (u, wu) in enumerate(zip(u_nodes, u_w)):
        n_phi = max(4, int(round(2.0 * np.pi * rho[i] / arc[i])))
        dphi = 2.0 * np.pi / n_phi
        phi = dphi * (np.arange(n_phi) + 0.5 * (i % 2))
        us.append(np.full(n_phi, u))
        phis.append(phi)
        wts.append(np.full(n_phi, wu * dphi))
        cells.append(
            np.column_stack(
                [
                    np.full(n_phi, u),
                    phi,
                    np.full(n_phi, edges[i]),
                    np.full(n_phi, edges[i + 1]),
                    phi - 0.5 * dphi,
                    phi + 0.5 * dphi,
                ]
            )
        )
    u = np.concatenate(us)
    phi = np.concatenate(phis)
    pos, nrm = _surface_point(shape, center, u, phi)
    jac = np.linalg.norm(nrm, axis=1)
    return SurfaceMesh(
        nodes=pos,
        normals=nrm / jac[:, None],
        weights=np.concatenate(wts) * jac,
        level=level,
        shape=shape,
        center=center,
        cells=np.concatenate(cells),
        body=np.zeros(len(u), dtype=int),
    )


# ---------------------------------------------------------------------------
# Operator assembly
# ---------------------------------------------------------------------------


def _duffy_rule(order=_SELF_ORDER):
    x, w = np.polynomial.legendre.leggauss(order)
    x = 0.5 * (x + 1.0)
    w = 0.5 * w
    xi, eta = np.meshgrid(x, x, indexing="ij")
    wxi, weta = np.meshgrid(w, w, indexing="ij")
    return xi.ravel(), eta.ravel(), (wxi * weta * xi).ravel()


def _self_cell_blocks(mesh: SurfaceMesh, k, chunk=256):
    """Integral of the T kernel over each node's own cell.

    The current inside the cell is transported from the node by projecting onto
    the local tangent plane, J(t) ~ (I - N_t N_t^T) J(s). The cell is split into
    four triangles with apex at the node; the Duffy map cancels the 1/r
    singularity.
    """
    xi, eta, wq = _duffy_rule()
    out = np.zeros((mesh.n, 3, 3), dtype=complex)
    parts = mesh.parts()
    offset = 0
    for part in parts:
        cells = part.cells
        for start in range(0, part.n, chunk):
            sl = slice(start, min(start + chunk, part.n))
            c = cells[sl]
            apex = c[:, :2]
            corners = np.stack(
                [c[:, [2, 4]], c[:, [3, 4]], c[:, [3, 5]], c[:, [2, 5]]], axis=1
            )  # (b, 4, 2)
            v1 = corners
            v2 = np.roll(corners, -1, axis=1)
            e1 = v1 - apex[:, None, :]
            e12 = v2 - v1
            area2 = np.abs(e1[..., 0] * e12[..., 1] - e1[..., 1] * e12[..., 0])  # (b, 4)
            # parameter points (b, 4, q, 2)
            pts = (
                apex[:, None, None, :]
                + xi[None, None, :, None] * (e1[:, :, None, :] + eta[None, None, :, None] * e12[:, :, None, :])
            )
            pos, nrm = _surface_point(part.shape, part.center, pts[..., 0], pts[..., 1])
            jac = np.linalg.norm(nrm, axis=-1)
            nt = nrm / jac[..., None]
            wt = jac * area2[:, :, None] * wq[None, None, :]
            s = part.nodes[sl]
            ns = part.normals[sl]
            d = s[:, None, None, :] - pos
            grad = gradient_batch(k, d)  # (b, 4, q, 3)
            ndg = np.einsum("bk,bpqk->bpq", ns, grad)
            # kernel K = grad N_s^T - (N_s . grad) I, then times (I - N_t N_t^T)
            kern = grad[..., :, None] * ns[:, None, None, None, :]
            kern[..., 0, 0] -= ndg
            kern[..., 1, 1] -= ndg
            kern[..., 2, 2] -= ndg
            proj = np.eye(3) - nt[..., :, None] * nt[..., None, :]
            blk = np.einsum("bpqij,bpqjl,bpq->bil", kern, proj, wt)
            out[offset + start : offset + sl.stop] = blk
        offset += part.n
    return out


def assemble_T(mesh: SurfaceMesh, k, chunk=512):
    """Dense 3n x 3n matrix of the discretised operator T (without the 1/2 identity)."""
    n = mesh.n
    if n == 0:
        raise ValidationError("empty mesh")
    T = np.empty((n, 3, n, 3), dtype=complex)
    s, nn, w = mesh.nodes, mesh.normals, mesh.weights
    eye = np.arange(3)
    for start in range(0, n, chunk):
        stop = min(start + chunk, n)
        d = s[start:stop, None, :] - s[None, :, :]
        idx = np.arange(start, stop)
        d[idx - start, idx] = 1.0  # placeholder, overwritten below
        grad = gradient_batch(k, d) * w[None, :, None]
        ni = nn[start:stop]
        ndg = np.einsum("ik,ijk->ij", ni, grad)
        blk = grad[:, :, :, None] * ni[:, None, None, :]
        blk[:, :, eye, eye] -= ndg[:, :, None]
        T[start:stop] = blk.transpose(0, 2, 1, 3)
    T[np.arange(n), :, np.arange(n), :] = _self_cell_blocks(mesh, k)
    return T.reshape(3 * n, 3 * n)


@dataclass
class BIESystem:
    matrix: np.ndarray
    rhs: np.ndarray
    mesh: SurfaceMesh
    k: float


def _incident_field(incident, x):
    return incident.field(x)


def assemble_bie(mesh: SurfaceMesh, incident, k=None) -> BIESystem:
    """Matrix ``I/2 + T`` and right-hand side ``-[N, E0]`` of the current equation.

    ``incident`` is a :class:`PlaneWave` or any object with ``.k`` and
    ``.field(points)``.
    """
    if mesh.n == 0:
        raise ValidationError("empty mesh")
    k = incident.k if k is None else k
    size = max((p.shape.a for p in mesh.parts() if p.shape is not None), default=None)
    if size is not None and k * size > 0.5:
        warnings.warn(f"k*a = {k * size:.3g} exceeds 0.5; small-body asymptotics do not apply", stacklevel=2)
    A = assemble_T(mesh, k)
    A[np.diag_indices_from(A)] += 0.5
    e0 = _incident_field(incident, mesh.nodes)
    rhs = -np.cross(mesh.normals, e0).reshape(-1)
    return BIESystem(A, rhs, mesh, k)


@dataclass
class SurfaceCurrent:
    J: np.ndarray
    residual: float
    cond_estimate: float

    def tangentiality(self, mesh):
        """max_i |N_i . J_i| / max_i |J_i| (0 for the zero current)."""
        top = np.max(np.abs(np.einsum("ij,ij->i", mesh.normals, self.J)))
        scale = np.max(np.linalg.norm(self.J, axis=1))
        return 0.0 if scale == 0 else float(top / scale)


def solve_current(system: BIESystem) -> SurfaceCurrent:
    """Dense LU solve of the current equation with a 1-norm condition estimate."""
    A, b = system.matrix, system.rhs
    lu, piv = sla.lu_factor(A, check_finite=False)
    anorm = np.linalg.norm(A, 1)
    (gecon,) = sla.get_lapack_funcs(("gecon",), (lu,))
    rcond, info = gecon(lu, anorm, norm="1")
    cond = np.inf if rcond == 0 else 1.0 / rcond
    if info != 0 or cond > _COND_LIMIT:
        raise NumericalError(f"current equation is singular or ill-conditioned (cond ~ {cond:.3e})")
    x = sla.lu_solve((lu, piv), b, check_finite=False)
    bnorm = np.linalg.norm(b)
    res = np.linalg.norm(A @ x - b)
    rel = 0.0 if bnorm == 0 else res / bnorm
    return SurfaceCurrent(J=x.reshape(-1, 3), residual=float(rel), cond_estimate=float(cond))


def compute_Q(current, mesh: SurfaceMesh):
    J = current.J if isinstance(current, SurfaceCurrent) else np.asarray(current)
    return (mesh.weights[:, None] * J).sum(axis=0)


def scattered_field(mesh: SurfaceMesh, current, k, x):
    """v_E(x) = curl int_S g(x, t) J(t) dt by the node quadrature (x off the surface)."""
    J = current.J if isinstance(current, SurfaceCurrent) else np.asarray(current)
    x = np.atleast_2d(np.asarray(x, dtype=float))
    out = np.empty((len(x), 3), dtype=complex)
    for start in range(0, len(x), 256):
        d = x[start : start + 256, None, :] - mesh.nodes[None, :, :]
        grad = gradient_batch(k, d) * mesh.weights[None, :, None]
        out[start : start + 256] = np.cross(grad, J[None, :, :]).sum(axis=1)
    return out


def far_field_from_current(mesh: SurfaceMesh, current, k, beta):
    """Exact far-field amplitude of the current representation along unit beta."""
    J = current.J if isinstance(current, SurfaceCurrent) else np.asarray(current)
    beta = np.asarray(beta, dtype=float)
    ph = np.exp(-1j * k * (mesh.nodes @ beta)) * mesh.weights
    return 1j * k / FOUR_PI * np.cross(beta, (ph[:, None] * J).sum(axis=0))


# ---------------------------------------------------------------------------
# Closed-form small-body asymptotics
# ---------------------------------------------------------------------------


def asymptotic_Q(pw: PlaneWave, shape: ParticleShape, x1=(0.0, 0.0, 0.0)):
    """Leading-order moment: Q = -(curl E0)(x1) |D|."""
    return -pw.curl(np.asarray(x1, dtype=float)) * shape.c_D * shape.a**3


def amplitude_from_Q(k, beta, Q):
    """Far-field amplitude (ik / 4 pi) [beta, Q] of a point moment at the origin."""
    beta = np.asarray(beta, dtype=float)
    if abs(np.linalg.norm(beta) - 1.0) > 1e-10:
        raise ValidationError("beta must be a unit vector")
    return 1j * k / FOUR_PI * np.cross(beta, np.asarray(Q, dtype=complex))


def asymptotic_amplitude(pw: PlaneWave, beta, shape: ParticleShape):
    """(k^2 / 4 pi) [beta, [alpha, amp]] c_D a^3."""
    beta = np.asarray(beta, dtype=float)
    if abs(np.linalg.norm(beta) - 1.0) > 1e-10:
        raise ValidationError("beta must be a unit vector")
    inner = np.cross(pw.alpha, pw.amp)
    return pw.k**2 / FOUR_PI * np.cross(beta, inner) * shape.c_D * shape.a**3


def rayleigh_pec_sphere_amplitude(pw: PlaneWave, beta, radius):
    """Textbook small-sphere PEC amplitude: electric plus magnetic dipole.

    p = 4 pi a^3 E0 and m = -2 pi a^3 H0 with H0 = [alpha, amp]. Used only as an
    independent check of the boundary-integral solver.
    """
    beta = np.asarray(beta, dtype=float)
    p = FOUR_PI * radius**3 * pw.amp
    m = -2.0 * np.pi * radius**3 * np.cross(pw.alpha, pw.amp)
    return pw.k**2 / FOUR_PI * (np.cross(np.cross(beta, p), beta) - np.cross(beta, m))


# ---------------------------------------------------------------------------
# Diagnostics
# ---------------------------------------------------------------------------


def tangent_projector(mesh: SurfaceMesh):
    n = mesh.normals
    P = np.eye(3)[None] - n[:, :, None] * n[:, None, :]
    return sla.block_diag(*P)


def operator_norm_T(mesh: SurfaceMesh, k, tol=1e-10, maxiter=500, T=None):
    """L2(S) operator norm of T restricted to tangential fields, by power iteration.

    The discrete operator is symmetrised with the quadrature weights,
    ``B = W^(1/2) P T P W^(-1/2)``, and the dominant eigenvalue of ``B^H B`` is
    found by power iteration.
    """
    if T is None:
        T = assemble_T(mesh, k)
    n = mesh.n
    sw = np.repeat(np.sqrt(mesh.weights), 3)
    nrm = mesh.normals

    def proj(v):
        v = v.reshape(n, 3)
        return (v - nrm * np.einsum("ij,ij->i", nrm, v)[:, None]).reshape(-1)

    def apply(v):
        return sw * proj(T @ proj(v / sw))

    def apply_h(v):
        return proj(T.conj().T @ (sw * proj(v))) / sw

    rng = np.random.default_rng(0)
    v = proj(rng.standard_normal(3 * n) + 1j * rng.standard_normal(3 * n))
    v /= np.linalg.norm(v)
    lam = 0.0
    for _ in range(maxiter):
        w = apply_h(apply(v))
        new = float(np.linalg.norm(w))
        if new == 0.0:
            return 0.0
        v = w / new
        if abs(new - lam) <= tol * new:
            lam = new
            break
        lam = new
    return float(np.sqrt(lam))


def gauss_identity_check(mesh: SurfaceMesh) -> float:
    """max_t | -sum_{i != t} w_i dg0(s_i, t)/dN_{s_i} - 1/2 | with the static kernel."""
    s, nrm, w = mesh.nodes, mesh.normals, mesh.weights
    worst = 0.0
    for start in range(0, mesh.n, 512):
        t = s[start : start + 512]
        d = s[None, :, :] - t[:, None, :]  # s_i - t
        r = np.linalg.norm(d, axis=-1)
        idx = np.arange(start, start + len(t))
        r[idx - start, idx] = np.inf
        dn = -np.einsum("tik,ik->ti", d, nrm) / (FOUR_PI * r**3)
        val = -(dn * w[None, :]).sum(axis=1)
        worst = max(worst, float(np.max(np.abs(val - 0.5))))
    return worst


def solve_single_body(shape: ParticleShape, pw: PlaneWave, level: int, center=(0.0, 0.0, 0.0)):
    """Mesh, assemble and solve in one call. Returns (mesh, current)."""
    mesh = mesh_surface(shape, level, center)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        system = assemble_bie(mesh, pw)
    return mesh, solve_current(system)


@dataclass
class DominanceReport:
    """Sizes of the dipole term and the neglected remainder of one body's field at its neighbour."""

    a: float
    separation: float
    k: float
    dipole_term: float
    remainder: float

    @property
    def ratio(self):
        return self.remainder / self.dipole_term

    def to_dict(self):
        return {
            "a": self.a,
            "separation": self.separation,
            "k": self.k,
            "dipole_term": self.dipole_term,
            "remainder": self.remainder,
            "ratio": self.ratio,
        }


def near_field_dominance(shape: ParticleShape, separation, pw: PlaneWave, level=2, axis=(1.0, 0.0, 0.0)):
    """Solve two identical bodies a distance ``separation`` apart and split body 0's field at body 1.

    With ``x`` the centre of body 1 and ``x0`` that of body 0, the dipole term is
    ``|[grad g(x, x0), Q0]|`` and the remainder is
    ``|curl int_{S0} (g(x, t) - g(x, x0)) J0(t) dt|``.
    """
    axis = np.asarray(axis, dtype=float)
    axis = axis / np.linalg.norm(axis)
    if separation <= 2 * shape.a:
        raise ValidationError("bodies overlap")
    c1 = separation * axis
    m0 = mesh_surface(shape, level, (0.0, 0.0, 0.0))
    m1 = mesh_surface(shape, level, c1)
    mesh = SurfaceMesh.concatenate([m0, m1])
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        current = solve_current(assemble_bie(mesh, pw))
    J0 = current.J[: m0.n]
    Q0 = (m0.weights[:, None] * J0).sum(axis=0)
    x = c1[None, :]
    full = scattered_field(m0, J0, pw.k, x)[0]
    dipole = np.cross(gradient_batch(pw.k, x)[0], Q0)
    return DominanceReport(
        a=shape.a,
        separation=float(separation),
        k=pw.k,
        dipole_term=float(np.linalg.norm(dipole)),
        remainder=float(np.linalg.norm(full - dipole)),
    )


__all__ = [
    "ParticleShape",
    "SurfaceMesh",
    "SurfaceCurrent",
    "BIESystem",
    "mesh_surface",
    "assemble_T",
    "assemble_bie",
    "solve_current",
    "compute_Q",
    "scattered_field",
    "far_field_from_current",
    "asymptotic_Q",
    "amplitude_from_Q",
    "asymptotic_amplitude",
    "rayleigh_pec_sphere_amplitude",
    "operator_norm_T",
    "gauss_identity_check",
    "solve_single_body",
    "near_field_dominance",
    "DominanceReport",
    "DomainError",
]
