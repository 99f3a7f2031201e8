"""Compiled pairwise sums over point dipoles.

Every routine parallelises over the target index only and accumulates the
source sum serially in a fixed order, so results do not depend on the number
of threads.
"""
import numpy as np
from numba import njit, prange

_INV4PI = 1.0 / (4.0 * np.pi)


@njit(cache=True, inline="always")
def _radial(k, r):
    g = np.exp(1j * k * r) * _INV4PI / r
    ikr = 1j * k * r
    g1 = g * (ikr - 1.0) / r
    g2 = g * (2.0 - 2.0 * ikr - (k * r) ** 2) / (r * r)
    return g, g1, g2


@njit(parallel=True, cache=True)
def interaction_apply(xs, weights, A, k, out):
    """out_j = sum_{m != j} w_m (k^2 g + Hess g)(x_j, x_m) A_m."""
    M = xs.shape[0]
    for j in prange(M):
        s0 = 0j
        s1 = 0j
        s2 = 0j
        for m in range(M):
            if m == j:
                continue
            dx = xs[j, 0] - xs[m, 0]
            dy = xs[j, 1] - xs[m, 1]
            dz = xs[j, 2] - xs[m, 2]
            r = np.sqrt(dx * dx + dy * dy + dz * dz)
            g, g1, g2 = _radial(k, r)
            iso = (k * k * g + g1 / r) * weights[m]
            an = (g2 - g1 / r) * weights[m]
            rx = dx / r
            ry = dy / r
            rz = dz / r
            dot = rx * A[m, 0] + ry * A[m, 1] + rz * A[m, 2]
            s0 += iso * A[m, 0] + an * rx * dot
            s1 += iso * A[m, 1] + an * ry * dot
            s2 += iso * A[m, 2] + an * rz * dot
        out[j, 0] = s0
        out[j, 1] = s1
        out[j, 2] = s2


@njit(parallel=True, cache=True)
def interaction_matrix(xs, weights, k, out):
    """Dense (M, 3, M, 3) blocks of the operator applied by interaction_apply."""
    M = xs.shape[0]
    for j in prange(M):
        for m in range(M):
            if m == j:
                for a in range(3):
                    for b in range(3):
                        out[j, a, m, b] = 0.0
                continue
            d0 = xs[j, 0] - xs[m, 0]
            d1 = xs[j, 1] - xs[m, 1]
            d2 = xs[j, 2] - xs[m, 2]
            r = np.sqrt(d0 * d0 + d1 * d1 + d2 * d2)
            g, g1, g2 = _radial(k, r)
            iso = (k * k * g + g1 / r) * weights[m]
            an = (g2 - g1 / r) * weights[m]
            rh = (d0 / r, d1 / r, d2 / r)
            for a in range(3):
                for b in range(3):
                    v = an * rh[a] * rh[b]
                    if a == b:
                        v += iso
                    out[j, a, m, b] = v


@njit(parallel=True, cache=True)
def dipole_sum(targets, xs, weights, A, k, skip, out):
    """out_p = sum_m w_m [grad_x g(x_p, x_m), A_m], omitting source index ``skip``."""
    P = targets.shape[0]
    M = xs.shape[0]
    for p in prange(P):
        s0 = 0j
        s1 = 0j
        s2 = 0j
        for m in range(M):
            if m == skip:
                continue
            dx = targets[p, 0] - xs[m, 0]
            dy = targets[p, 1] - xs[m, 1]
            dz = targets[p, 2] - xs[m, 2]
            r = np.sqrt(dx * dx + dy * dy + dz * dz)
            g, g1, g2 = _radial(k, r)
            c = g1 / r * weights[m]
            gx = c * dx
            gy = c * dy
            gz = c * dz
            s0 += gy * A[m, 2] - gz * A[m, 1]
            s1 += gz * A[m, 0] - gx * A[m, 2]
            s2 += gx * A[m, 1] - gy * A[m, 0]
        out[p, 0] = s0
        out[p, 1] = s1
        out[p, 2] = s2
