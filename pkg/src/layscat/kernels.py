"""Helmholtz fundamental solution and its derivatives.

``Phi_k(x, y) = exp(i k |x - y|) / (4 pi |x - y|)``. Array kernels broadcast
over leading dimensions; points carry a trailing axis of length 3.
"""
from __future__ import annotations

from math import factorial

import numpy as np

from .errors import SingularityError

FOUR_PI = 4.0 * np.pi


def _diff(x, y):
    d = np.asarray(x, dtype=float) - np.asarray(y, dtype=float)
    r = np.sqrt((d * d).sum(-1))
    return d, r


def phi(x, y, k: float) -> complex:
    """Fundamental solution at a single point pair."""
    _, r = _diff(x, y)
    if r == 0:
        raise SingularityError("phi evaluated at coincident points")
    return complex(np.exp(1j * k * r) / (FOUR_PI * r))


def grad_phi_y(x, y, k: float) -> np.ndarray:
    """Gradient of ``Phi_k(x, .)`` with respect to the source point ``y``."""
    d, r = _diff(x, y)
    if r == 0:
        raise SingularityError("grad_phi_y evaluated at coincident points")
    g = np.exp(1j * k * r) / (FOUR_PI * r)
    return g * (1.0 - 1j * k * r) / r**2 * d


def dnu_phi(x, y, nu_y, k: float) -> complex:
    """Normal derivative ``nu(y) . grad_y Phi_k(x, y)``."""
    return complex(np.dot(grad_phi_y(x, y, k), np.asarray(nu_y, dtype=float)))


# ---- array kernels ---------------------------------------------------------

def single_layer(x, y, k):
    _, r = _diff(x, y)
    return np.exp(1j * k * r) / (FOUR_PI * r)


def double_layer(x, y, ny, k):
    """``dPhi/dnu(y)``."""
    d, r = _diff(x, y)
    g = np.exp(1j * k * r) / (FOUR_PI * r)
    return g * (1.0 - 1j * k * r) * (d * ny).sum(-1) / r**2


def adjoint_double_layer(x, nx, y, k):
    """``dPhi/dnu(x)``."""
    d, r = _diff(x, y)
    g = np.exp(1j * k * r) / (FOUR_PI * r)
    return -g * (1.0 - 1j * k * r) * (d * nx).sum(-1) / r**2


def _radial_derivatives(r, k):
    """``(Phi'(r)/r, Phi''(r))`` for a single wavenumber."""
    g = np.exp(1j * k * r) / (FOUR_PI * r)
    d1_over_r = g * (1j * k - 1.0 / r) / r
    d2 = g * (-(k * k) - 2j * k / r + 2.0 / r**2)
    return d1_over_r, d2


_SERIES_TERMS = 40


def _difference_series(r, ka, kb):
    """Series for ``(G'/r, G'')`` with ``G = Phi_ka - Phi_kb``, accurate for small k r."""
    r = np.asarray(r, dtype=float)
    d1 = np.zeros(r.shape, dtype=complex)
    d2 = np.zeros(r.shape, dtype=complex)
    for n in range(_SERIES_TERMS, 1, -1):
        c = ((1j * ka) ** n - (1j * kb) ** n) / factorial(n)
        # Horner-free direct powers are fine at these arguments
        d1 += c * (n - 1) * r ** (n - 3.0)
        if n >= 3:
            d2 += c * (n - 1) * (n - 2) * r ** (n - 3.0)
    return d1 / FOUR_PI, d2 / FOUR_PI


def difference_radial_derivatives(r, ka, kb, switch: float = 0.5):
    """``G'(r)/r`` and ``G''(r)`` for ``G = Phi_ka - Phi_kb``.

    Below ``max(k) r < switch`` the closed forms lose digits to cancellation of
    the wavenumber-independent ``1/r^3`` parts, so a power series is used.
    """
    r = np.asarray(r, dtype=float)
    kmax = max(abs(ka), abs(kb))
    small = kmax * r < switch
    d1 = np.empty(r.shape, dtype=complex)
    d2 = np.empty(r.shape, dtype=complex)
    if np.any(small):
        d1[small], d2[small] = _difference_series(r[small], ka, kb)
    big = ~small
    if np.any(big):
        a1, a2 = _radial_derivatives(r[big], ka)
        b1, b2 = _radial_derivatives(r[big], kb)
        d1[big] = a1 - b1
        d2[big] = a2 - b2
    return d1, d2


def hypersingular(x, nx, y, ny, k):
    """``d^2 Phi / dnu(x) dnu(y)`` for a single wavenumber (off-diagonal use only)."""
    d, r = _diff(x, y)
    d1, d2 = _radial_derivatives(r, k)
    return _second_normal(d, r, nx, ny, d1, d2)


def hypersingular_difference(x, nx, y, ny, ka, kb):
    """``d^2 (Phi_ka - Phi_kb) / dnu(x) dnu(y)``; weakly singular like ``1/r``."""
    d, r = _diff(x, y)
    d1, d2 = difference_radial_derivatives(r, ka, kb)
    return _second_normal(d, r, nx, ny, d1, d2)


def _second_normal(d, r, nx, ny, d1_over_r, d2):
    a = (d * nx).sum(-1) / r
    b = (d * ny).sum(-1) / r
    c = (nx * ny).sum(-1)
    return -d2 * a * b - d1_over_r * (c - a * b)
