"""Effective-field linear system for many small conducting bodies.

Unknowns are the curls of the effective field at the particle centres,
``A_j = (curl E_e)(x_j)``. They satisfy

    A_j + sum_{m != j} w_m curl_x [grad_x g(x, x_m), A_m] |_{x = x_j} = (curl E0)(x_j)

with ``w_m = c0 a^3``. The field outside the particles is then
``E(x) = E0(x) - sum_m w_m [grad_x g(x, x_m), A_m]``.
"""
from __future__ import annotations

import logging
import time
import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla
from scipy.spatial import cKDTree
from scipy.sparse.linalg import LinearOperator, gmres

from . import _kernels
from .emcore import FOUR_PI, PlaneWave
from .ensemble import Ensemble, min_distance, validate_regime
from .errors import DomainError, NumericalError, ValidationError

log = logging.getLogger(__name__)

DENSE_LIMIT = 2048


class PointDipoleSystem:
    """``(I + C) A = A0`` for point sources with per-source weights.

    ``weights`` already include the shape constant, i.e. ``c0 a^3`` for the
    M-body system and ``c0 N(x_p) |cube|`` for the reduced one.
    """

    def __init__(self, points, weights, k, incident: PlaneWave):
        self.points = np.ascontiguousarray(points, dtype=float).reshape(-1, 3)
        self.weights = np.ascontiguousarray(np.broadcast_to(weights, (len(self.points),)), dtype=float)
        self.k = float(k)
        self.incident = incident
        if len(self.points) > 1 and min_distance(self.points) == 0.0:
            raise ValidationError("duplicate particle centres")
        self.rhs = incident.curl(self.points) if len(self.points) else np.zeros((0, 3), complex)

    @property
    def size(self):
        return len(self.points)

    def interaction(self, A):
        """C A, matrix-free."""
        A = np.ascontiguousarray(np.asarray(A, dtype=complex).reshape(-1, 3))
        out = np.empty_like(A)
        _kernels.interaction_apply(self.points, self.weights, A, self.k, out)
        return out

    def apply(self, A):
        """(I + C) A."""
        A = np.asarray(A, dtype=complex).reshape(-1, 3)
        return A + self.interaction(A)

    def interaction_matrix(self):
        M = self.size
        if M > DENSE_LIMIT:
            raise ValidationError(f"dense path limited to M <= {DENSE_LIMIT}, got {M}")
        out = np.empty((M, 3, M, 3), dtype=complex)
        _kernels.interaction_matrix(self.points, self.weights, self.k, out)
        return out.reshape(3 * M, 3 * M)

    def matrix(self):
        C = self.interaction_matrix()
        C[np.diag_indices_from(C)] += 1.0
        return C

    def residual(self, A):
        b = self.rhs.reshape(-1)
        bn = np.linalg.norm(b)
        r = np.linalg.norm(self.apply(A).reshape(-1) - b)
        return 0.0 if bn == 0 else float(r / bn)


def assemble_or_apply(ens: Ensemble, pw: PlaneWave, c0=None) -> PointDipoleSystem:
    """Operator ``I + C`` and right-hand side ``A0_j = (curl E0)(x_j)`` for an ensemble."""
    c0 = ens.c0 if c0 is None else float(c0)
    if c0 <= 0:
        raise ValidationError("c0 must be positive")
    return PointDipoleSystem(ens.centers, c0 * ens.a**3, pw.k, pw)


@dataclass
class SolveInfo:
    method: str
    iterations: int
    residual: float
    contraction: float | None = None
    cond_estimate: float | None = None
    history: list = field(default_factory=list)
    seconds: float = 0.0

    def to_dict(self):
        return {
            "method": self.method,
            "iterations": self.iterations,
            "residual": self.residual,
            "contraction": self.contraction,
            "cond_estimate": self.cond_estimate,
            "seconds": self.seconds,
        }


def solve_system(system: PointDipoleSystem, method="iterative", tol=1e-11, maxiter=500) -> tuple:
    """Solve ``(I + C) A = A0``; returns ``(A, SolveInfo)``.

    ``iterative`` runs the fixed-point (Born) iteration and falls back to GMRES
    when it stops contracting. ``direct`` factorises the dense matrix.
    """
    t0 = time.perf_counter()
    b = system.rhs
    M = system.size
    if M == 0:
        return np.zeros((0, 3), complex), SolveInfo(method, 0, 0.0)
    bnorm = np.linalg.norm(b)
    if bnorm == 0:
        return np.zeros_like(b), SolveInfo(method, 0, 0.0)
    if M == 1:
        return b.copy(), SolveInfo(method, 0, 0.0)

    if method == "direct":
        mat = system.matrix()
        lu, piv = sla.lu_factor(mat, check_finite=False)
        (gecon,) = sla.get_lapack_funcs(("gecon",), (lu,))
        rcond, _ = gecon(lu, np.linalg.norm(mat, 1), norm="1")
        cond = np.inf if rcond == 0 else 1.0 / rcond
        if cond > 1e12:
            raise NumericalError(f"M-body system is singular (cond ~ {cond:.3e})")
        A = sla.lu_solve((lu, piv), b.reshape(-1), check_finite=False).reshape(-1, 3)
        info = SolveInfo("direct", 1, system.residual(A), cond_estimate=float(cond))
    elif method == "iterative":
        A, info = _fixed_point(system, tol, maxiter)
        if info is None:
            A, info = _gmres(system, tol, maxiter, A)
    else:
        raise ValidationError(f"unknown method {method!r}")
    info.seconds = time.perf_counter() - t0
    return A, info


def _fixed_point(system, tol, maxiter):
    b = system.rhs
    bnorm = np.linalg.norm(b)
    A = b.copy()
    history = []
    prev = None
    ratio = None
    for it in range(1, maxiter + 1):
        CA = system.interaction(A)
        # residual of the current iterate equals the next fixed-point step
        res = np.linalg.norm(A + CA - b) / bnorm
        history.append(float(res))
        if prev is not None and prev > 0:
            ratio = float(res / prev)
        if res <= tol:
            return A, SolveInfo("fixed-point", it, float(res), contraction=ratio, history=history)
        if not np.isfinite(res) or (ratio is not None and ratio > 0.95 and it >= 3):
            log.info("fixed-point stalled (ratio %s), switching to GMRES", ratio)
            break
        A = b - CA
        prev = res
    return (A if np.all(np.isfinite(A)) else b.copy()), None


def _gmres(system, tol, maxiter, x0):
    n = 3 * system.size
    op = LinearOperator((n, n), matvec=lambda v: system.apply(v).reshape(-1), dtype=complex)
    history = []
    b = system.rhs.reshape(-1)
    x, status = gmres(
        op, b, x0=x0.reshape(-1), rtol=tol, atol=0.0, restart=min(n, 100), maxiter=maxiter,
        callback=lambda r: history.append(float(r)), callback_type="pr_norm",
    )
    A = x.reshape(-1, 3)
    res = system.residual(A)
    if status != 0 or res > 100 * tol:
        raise NumericalError(f"GMRES did not converge (residual {res:.3e})", history)
    return A, SolveInfo("gmres", len(history), res, history=history)


@dataclass
class ScatterSolution:
    """Solved effective curls together with what produced them."""

    ensemble: Ensemble
    A: np.ndarray
    c0: float
    k: float
    incident: PlaneWave
    info: SolveInfo

    @property
    def weights(self):
        return self.c0 * self.ensemble.a**3


def solve(ens: Ensemble, pw: PlaneWave, c0=None, method="iterative", tol=1e-11, override=False) -> ScatterSolution:
    """Solve the M-body system for an ensemble under plane-wave incidence."""
    rep = validate_regime(ens, pw.k)
    if not rep.passed:
        if not override:
            raise ValidationError(f"regime check failed: k a + a/d = {rep.score:.3g} > {rep.threshold}")
        warnings.warn(f"regime score {rep.score:.3g} above {rep.threshold}; results are outside the asymptotic regime", stacklevel=2)
    system = assemble_or_apply(ens, pw, c0)
    A, info = solve_system(system, method=method, tol=tol)
    return ScatterSolution(ens, A, ens.c0 if c0 is None else float(c0), pw.k, pw, info)


def moments(sol: ScatterSolution):
    """Q_j = -A_j c0 a^3."""
    return -sol.A * sol.weights


def _check_probes(centers, x, a, exclude=None):
    if len(centers) == 0 or (exclude is not None and len(centers) == 1):
        return
    kq = 2 if exclude is not None else 1
    dist, idx = cKDTree(centers).query(x, k=kq)
    dist = np.asarray(dist).reshape(len(x), kq)
    idx = np.asarray(idx).reshape(len(x), kq)
    if exclude is not None:
        own = idx[:, 0] == exclude
        dist = np.where(own, dist[:, 1], dist[:, 0])
        idx = np.where(own, idx[:, 1], idx[:, 0])
    else:
        dist, idx = dist[:, 0], idx[:, 0]
    bad = np.flatnonzero(dist < 2 * a)
    if len(bad):
        p, i = bad[0], idx[bad[0]]
        raise DomainError(
            f"probe {x[p].tolist()} lies within 2a of particle {int(i)} at {centers[i].tolist()}"
        )


def _dipole_sum(targets, points, weights, A, k, skip=-1):
    targets = np.ascontiguousarray(targets, dtype=float)
    out = np.zeros((len(targets), 3), dtype=complex)
    if len(points):
        w = np.ascontiguousarray(np.broadcast_to(weights, (len(points),)), dtype=float)
        _kernels.dipole_sum(targets, np.ascontiguousarray(points, dtype=float), w,
                            np.ascontiguousarray(A, dtype=complex), float(k), int(skip), out)
    return out


def scattered_field_at(sol: ScatterSolution, x):
    x = np.atleast_2d(np.asarray(x, dtype=float))
    _check_probes(sol.ensemble.centers, x, sol.ensemble.a)
    return -_dipole_sum(x, sol.ensemble.centers, sol.weights, sol.A, sol.k)


def field_at(sol: ScatterSolution, x):
    """E(x) = E0(x) - sum_m c0 a^3 [grad g(x, x_m), A_m] for probes at least 2a from every centre."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    return sol.incident.field(x) + scattered_field_at(sol, x)


def effective_field_at(sol: ScatterSolution, x, exclude_j: int):
    """Field acting on particle ``exclude_j``: the dipole sum without its own term."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    _check_probes(sol.ensemble.centers, x, sol.ensemble.a, exclude=exclude_j)
    return sol.incident.field(x) - _dipole_sum(x, sol.ensemble.centers, sol.weights, sol.A, sol.k, exclude_j)


def far_field_amplitude(sol: ScatterSolution, beta):
    """-(ik/4pi) c0 a^3 sum_m exp(-ik beta.x_m) [beta, A_m]."""
    beta = np.asarray(beta, dtype=float)
    if abs(np.linalg.norm(beta) - 1.0) > 1e-10:
        raise ValidationError("beta must be a unit vector")
    phase = np.exp(-1j * sol.k * (sol.ensemble.centers @ beta))
    total = (phase[:, None] * sol.A).sum(axis=0)
    return -1j * sol.k / FOUR_PI * sol.weights * np.cross(beta, total)


def direction_grid(n_theta, n_phi):
    """Unit directions on a (theta, phi) grid, theta in (0, pi), phi in [0, 2pi)."""
    th = (np.arange(n_theta) + 0.5) * np.pi / n_theta
    ph = np.arange(n_phi) * 2 * np.pi / n_phi
    T, P = np.meshgrid(th, ph, indexing="ij")
    return np.stack([np.sin(T) * np.cos(P), np.sin(T) * np.sin(P), np.cos(T)], axis=-1).reshape(-1, 3)
