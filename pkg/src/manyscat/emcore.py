"""Helmholtz Green kernel, its derivatives, and incident plane waves.

Units: c = eps = mu = 1 unless stated, so the wavenumber equals the angular
frequency. All vectors are complex numpy arrays with a trailing axis of 3.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DomainError, ValidationError

FOUR_PI = 4.0 * np.pi
# Relative separation below which two points are treated as coincident.
COINCIDENCE_TOL = 1e-12


def _as_point(x):
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != 3:
        raise ValueError(f"expected a 3-vector, got shape {x.shape}")
    return x


def _separation(x, y):
    x, y = _as_point(x), _as_point(y)
    d = x - y
    r = np.linalg.norm(d, axis=-1)
    scale = np.maximum(np.maximum(np.linalg.norm(x, axis=-1), np.linalg.norm(y, axis=-1)), 1.0)
    if np.any(r < COINCIDENCE_TOL * scale):
        raise DomainError("Green kernel evaluated at coincident points")
    return d, r


def radial_derivatives(k, r):
    """Return g(r), g'(r), g''(r) for g = exp(ikr) / (4 pi r)."""
    r = np.asarray(r, dtype=float)
    e = np.exp(1j * k * r) / FOUR_PI
    ikr = 1j * k * r
    g0 = e / r
    g1 = e * (ikr - 1.0) / r**2
    g2 = e * (2.0 - 2.0 * ikr - (k * r) ** 2) / r**3
    return g0, g1, g2


def green(k, x, y):
    """Outgoing Helmholtz Green function exp(ik|x-y|) / (4 pi |x-y|)."""
    _, r = _separation(x, y)
    return np.exp(1j * k * r) / (FOUR_PI * r)


@dataclass(frozen=True)
class GreenEval:
    """Value, gradient and Hessian of g(x, y), derivatives taken in x."""

    value: complex
    gradient: np.ndarray
    hessian: np.ndarray


def green_derivatives(k, x, y) -> GreenEval:
    d, r = _separation(x, y)
    g0, g1, g2 = radial_derivatives(k, r)
    rhat = d / r
    outer = np.outer(rhat, rhat)
    hess = g2 * outer + (g1 / r) * (np.eye(3) - outer)
    return GreenEval(value=complex(g0), gradient=g1 * rhat, hessian=hess)


def dyadic_batch(k, d):
    """Curl-curl kernel matrices k^2 g I + Hess(g) for displacements d = x - y.

    ``d`` has shape (..., 3); the result has shape (..., 3, 3). No coincidence
    check is made here; callers mask the diagonal themselves.
    """
    r = np.linalg.norm(d, axis=-1)
    g0, g1, g2 = radial_derivatives(k, r)
    rhat = d / r[..., None]
    outer = rhat[..., :, None] * rhat[..., None, :]
    iso = k * k * g0 + g1 / r
    out = (g2 - g1 / r)[..., None, None] * outer
    out[..., 0, 0] += iso
    out[..., 1, 1] += iso
    out[..., 2, 2] += iso
    return out


def gradient_batch(k, d):
    """Gradient of g in its first argument for displacements d = x - y."""
    r = np.linalg.norm(d, axis=-1)
    _, g1, _ = radial_derivatives(k, r)
    return (g1 / r)[..., None] * d


def dipole_kernel(k, x, y, A):
    """curl_x [grad_x g(x, y), A] for a constant vector A.

    Uses curl(grad g x A) = k^2 g A + (A . grad) grad g.
    """
    ev = green_derivatives(k, x, y)
    A = np.asarray(A, dtype=complex)
    return k * k * ev.value * A + ev.hessian @ A


def dipole_field(k, x, y, A):
    """[grad_x g(x, y), A]: the field radiated by a point source of curl type."""
    ev = green_derivatives(k, x, y)
    return np.cross(ev.gradient, np.asarray(A, dtype=complex))


@dataclass(frozen=True)
class PlaneWave:
    """Incident field E0 = amp * exp(i k alpha . x) with amp . alpha = 0."""

    k: float
    alpha: np.ndarray
    amp: np.ndarray

    def __post_init__(self):
        alpha = np.asarray(self.alpha, dtype=float)
        amp = np.asarray(self.amp, dtype=complex)
        if self.k <= 0:
            raise ValidationError(f"wavenumber must be positive, got {self.k}")
        if alpha.shape != (3,) or amp.shape != (3,):
            raise ValidationError("alpha and amp must be 3-vectors")
        if abs(np.linalg.norm(alpha) - 1.0) > 1e-10:
            raise ValidationError("incidence direction alpha must be a unit vector")
        if abs(np.dot(amp, alpha)) > 1e-8 * max(np.linalg.norm(amp), 1e-300):
            raise ValidationError("polarization must be transverse: amp . alpha = 0")
        object.__setattr__(self, "alpha", alpha)
        object.__setattr__(self, "amp", amp)

    @classmethod
    def projected(cls, k, alpha, amp):
        """Build a wave after normalising alpha and removing amp's component along it."""
        alpha = np.asarray(alpha, dtype=float)
        alpha = alpha / np.linalg.norm(alpha)
        amp = np.asarray(amp, dtype=complex)
        amp = amp - np.dot(alpha, amp) * alpha
        return cls(k, alpha, amp)

    def phase(self, x):
        x = np.asarray(x, dtype=float)
        return np.exp(1j * self.k * (x @ self.alpha))

    def field(self, x):
        """E0 at points x of shape (..., 3)."""
        return self.phase(x)[..., None] * self.amp

    def curl(self, x):
        """curl E0 = i k [alpha, amp] exp(i k alpha . x)."""
        c = 1j * self.k * np.cross(self.alpha, self.amp)
        return self.phase(x)[..., None] * c


def plane_wave_field(pw: PlaneWave, x):
    return pw.field(x)


def plane_wave_curl(pw: PlaneWave, x):
    return pw.curl(x)


def h_from_e(curl_e, omega=1.0, mu=1.0):
    """Magnetic field from the curl of E: H = curl E / (i omega mu)."""
    if omega <= 0 or mu <= 0:
        raise ValidationError("omega and mu must be positive")
    return np.asarray(curl_e, dtype=complex) / (1j * omega * mu)
