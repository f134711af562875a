"""Orthonormal spherical harmonics on the parameter sphere.

Complex harmonics follow the Condon-Shortley convention used by
``scipy.special.sph_harm_y``: ``Y_n^m(theta, phi) = Pbar_n^m(cos theta) e^{i m phi}``
with ``Y_n^{-m} = (-1)^m conj(Y_n^m)``. Coefficients of degree ``n <= L`` are
stored flat at index ``n*n + n + m``.

Derivatives use ladder identities that stay finite at the poles, so rotated
quadrature points landing near ``theta = 0`` are harmless.
"""
from __future__ import annotations

import numpy as np


def n_coeffs(L: int) -> int:
    return (L + 1) ** 2


def index(n: int, m: int) -> int:
    return n * n + n + m


def degree_order(L: int) -> tuple[np.ndarray, np.ndarray]:
    """Degree and order arrays matching the flat coefficient layout."""
    ns = np.concatenate([np.full(2 * n + 1, n) for n in range(L + 1)])
    ms = np.concatenate([np.arange(-n, n + 1) for n in range(L + 1)])
    return ns, ms


def legendre_table(L: int, theta: np.ndarray) -> np.ndarray:
    """Normalized associated Legendre values ``Pbar[n, m, p]`` for 0 <= m <= n <= L.

    Entries with m > n are zero. Standard three-term recurrence in n,
    seeded from the sectoral values.
    """
    theta = np.asarray(theta, dtype=float)
    x = np.cos(theta)
    s = np.sin(theta)
    P = np.zeros((L + 1, L + 1) + theta.shape)
    P[0, 0] = 1.0 / np.sqrt(4.0 * np.pi)
    for m in range(1, L + 1):
        P[m, m] = -np.sqrt((2 * m + 1) / (2.0 * m)) * s * P[m - 1, m - 1]
    for m in range(0, L):
        P[m + 1, m] = np.sqrt(2 * m + 3.0) * x * P[m, m]
    for m in range(0, L + 1):
        for n in range(m + 2, L + 1):
            a = np.sqrt((4.0 * n * n - 1) / (n * n - m * m))
            b = np.sqrt(((n - 1.0) ** 2 - m * m) / (4.0 * (n - 1.0) ** 2 - 1))
            P[n, m] = a * (x * P[n - 1, m] - b * P[n - 2, m])
    return P


def _signed(P: np.ndarray, n: int, m: int) -> np.ndarray:
    # Pbar_n^{-m} = (-1)^m Pbar_n^m
    if abs(m) > n:
        return np.zeros(P.shape[2:])
    if m >= 0:
        return P[n, m]
    return (-1.0) ** m * P[n, -m]


def ylm(L: int, theta, phi) -> np.ndarray:
    """Complex harmonics, shape ``(len(theta), (L+1)**2)``."""
    theta = np.atleast_1d(np.asarray(theta, dtype=float))
    phi = np.atleast_1d(np.asarray(phi, dtype=float))
    P = legendre_table(L, theta)
    out = np.empty(theta.shape + (n_coeffs(L),), dtype=complex)
    eim = np.exp(1j * np.outer(phi, np.arange(-L, L + 1)))
    for n in range(L + 1):
        for m in range(-n, n + 1):
            out[..., index(n, m)] = _signed(P, n, m) * eim[:, m + L]
    return out


def _dtheta(P, n, m):
    return 0.5 * (
        np.sqrt((n - m) * (n + m + 1.0)) * _signed(P, n, m + 1)
        - np.sqrt((n + m) * (n - m + 1.0)) * _signed(P, n, m - 1)
    )


def _m_over_sin(P, n, m):
    # m Pbar_n^m / sin(theta) via a degree-raising ladder; P must reach n + 1
    c = 0.5 * np.sqrt((2.0 * n + 1) / (2.0 * n + 3))
    return -c * (
        np.sqrt((n + m + 1.0) * (n + m + 2)) * _signed(P, n + 1, m + 1)
        + np.sqrt((n - m + 1.0) * (n - m + 2)) * _signed(P, n + 1, m - 1)
    )


def ylm_with_derivatives(L: int, theta, phi):
    """Return ``Y``, ``dY/dtheta`` and ``(1/sin theta) dY/dphi``.

    All three have shape ``(len(theta), (L+1)**2)`` and are finite at the poles.
    """
    theta = np.atleast_1d(np.asarray(theta, dtype=float))
    phi = np.atleast_1d(np.asarray(phi, dtype=float))
    P = legendre_table(L + 1, theta)
    eim = np.exp(1j * np.outer(phi, np.arange(-L, L + 1)))
    shape = theta.shape + (n_coeffs(L),)
    Y = np.empty(shape, dtype=complex)
    Yt = np.empty(shape, dtype=complex)
    Yp = np.empty(shape, dtype=complex)
    for n in range(L + 1):
        for m in range(-n, n + 1):
            k = index(n, m)
            e = eim[:, m + L]
            Y[..., k] = _signed(P, n, m) * e
            Yt[..., k] = _dtheta(P, n, m) * e
            Yp[..., k] = 1j * _m_over_sin(P, n, m) * e
    return Y, Yt, Yp


def real_series(coeffs, theta, phi):
    """Sum of a sparse real-harmonic series and its two tangential derivatives.

    ``coeffs`` maps ``(n, m)`` to a real coefficient; ``m > 0`` carries
    ``cos(m phi)``, ``m < 0`` carries ``sin(|m| phi)``, no Condon-Shortley sign.
    Returns ``f``, ``df/dtheta`` and ``(1/sin theta) df/dphi``.
    """
    theta = np.asarray(theta, dtype=float)
    phi = np.asarray(phi, dtype=float)
    L = max(n for n, _ in coeffs)
    P = legendre_table(L + 1, theta)
    f = np.zeros(theta.shape)
    ft = np.zeros(theta.shape)
    fp = np.zeros(theta.shape)
    for (n, m), c in coeffs.items():
        if c == 0:
            continue
        a = abs(m)
        if a == 0:
            f += c * P[n, 0]
            ft += c * _dtheta(P, n, 0)
            continue
        s = c * (-1.0) ** a * np.sqrt(2.0)
        cos, sin = np.cos(a * phi), np.sin(a * phi)
        ms = _m_over_sin(P, n, a)
        if m > 0:
            f += s * P[n, a] * cos
            ft += s * _dtheta(P, n, a) * cos
            fp -= s * ms * sin
        else:
            f += s * P[n, a] * sin
            ft += s * _dtheta(P, n, a) * sin
            fp += s * ms * cos
    return f, ft, fp


def real_ylm_with_derivatives(L: int, theta, phi):
    """Real orthonormal harmonics indexed like the complex ones."""
    Y, Yt, Yp = ylm_with_derivatives(L, theta, phi)
    out = []
    for A in (Y, Yt, Yp):
        R = np.empty(A.shape)
        for n in range(L + 1):
            R[..., index(n, 0)] = A[..., index(n, 0)].real
            for m in range(1, n + 1):
                s = (-1.0) ** m * np.sqrt(2.0)
                R[..., index(n, m)] = s * A[..., index(n, m)].real
                R[..., index(n, -m)] = s * A[..., index(n, m)].imag
        out.append(R)
    return tuple(out)


def gauss_sphere_grid(n_polar: int, n_azimuth: int):
    """Gauss-Legendre in cos(theta) times uniform azimuth.

    Returns ``theta, phi, weights`` flattened polar-major, with theta ascending.
    The weights integrate over the unit sphere.
    """
    t, w = np.polynomial.legendre.leggauss(n_polar)
    order = np.argsort(-t)
    theta_1d = np.arccos(t[order])
    w_1d = w[order]
    phi_1d = 2.0 * np.pi * np.arange(n_azimuth) / n_azimuth
    theta = np.repeat(theta_1d, n_azimuth)
    phi = np.tile(phi_1d, n_polar)
    weights = np.repeat(w_1d, n_azimuth) * (2.0 * np.pi / n_azimuth)
    return theta, phi, weights


def analysis_matrix(L: int, theta, phi, weights) -> np.ndarray:
    """Quadrature projection onto degree <= L: ``coeffs = A @ values``."""
    Y = ylm(L, theta, phi)
    return (Y.conj() * weights[:, None]).T
