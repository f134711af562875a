"""Mode-matching reference solutions for concentric layered spheres.

Plane wave ``exp(i k0 x.d)`` hits a penetrable sphere of radius ``R0``
(medium ``k1``) that contains a sound-soft or impedance core of radius
``R1``. With ``P_n = P_n(cos angle(x, d))``:

    u^s = sum i^n (2n+1) a_n h_n(k0 r) P_n              r > R0
    v   = sum i^n (2n+1) [b_n j_n(k1 r) + c_n y_n(k1 r)] P_n   R1 < r < R0

Each mode gives a 3x3 system from ``u = v`` and ``du/dr = lambda0 dv/dr`` at
``R0`` plus the core condition at ``R1``.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import InvalidGeometryError, InvalidInputError, OracleFailure


# ---- spherical Bessel functions --------------------------------------------

@dataclass(frozen=True)
class SphericalWaveBasis:
    """Tables of ``j_n, y_n, h_n`` and derivatives, shape ``(N + 1,) + x.shape``."""

    max_order: int
    x: np.ndarray
    j: np.ndarray
    dj: np.ndarray
    y: np.ndarray
    dy: np.ndarray

    @property
    def h(self) -> np.ndarray:
        return self.j + 1j * self.y

    @property
    def dh(self) -> np.ndarray:
        return self.dj + 1j * self.dy


def _downward_j(N: int, x: np.ndarray) -> np.ndarray:
    """Miller's algorithm normalized by the closed form of j_0 or j_1; needs N >= 1."""
    start = int(N + np.max(x) + 30 + 4 * np.sqrt(np.max(x) + 1))
    J = np.zeros((N + 1,) + x.shape)
    hi = np.zeros(x.shape)
    cur = np.full(x.shape, 1e-300)
    for n in range(start, 0, -1):
        # j_{n-1} = (2n+1)/x j_n - j_{n+1}
        lo = (2 * n + 1) / x * cur - hi
        hi, cur = cur, lo
        if n - 1 <= N:
            J[n - 1] = cur
        big = np.abs(cur) > 1e200
        if np.any(big):
            cur[big] *= 1e-200
            hi[big] *= 1e-200
            J[:, big] *= 1e-200
    j0 = np.sin(x) / x
    j1 = np.sin(x) / x**2 - np.cos(x) / x
    use0 = np.abs(j0) >= np.abs(j1)
    with np.errstate(divide="ignore", invalid="ignore"):
        scale = np.where(use0, j0 / J[0], j1 / J[1])
    return J * scale


def _upward_y(N: int, x: np.ndarray) -> np.ndarray:
    Y = np.empty((N + 1,) + x.shape)
    Y[0] = -np.cos(x) / x
    if N >= 1:
        Y[1] = -np.cos(x) / x**2 - np.sin(x) / x
    for n in range(1, N):
        Y[n + 1] = (2 * n + 1) / x * Y[n] - Y[n - 1]
    return Y


def _derivative(F: np.ndarray, x: np.ndarray, first: np.ndarray) -> np.ndarray:
    # f_n' = f_{n-1} - (n+1)/x f_n ; f_0' = -f_1
    D = np.empty_like(F)
    D[0] = -first
    n = np.arange(1, F.shape[0]).reshape((-1,) + (1,) * x.ndim)
    D[1:] = F[:-1] - (n + 1) / x * F[1:]
    return D


def spherical_wave_basis(N: int, x) -> SphericalWaveBasis:
    x = np.asarray(x, dtype=float)
    if np.any(~(x > 0)):
        raise InvalidInputError("spherical Bessel functions need x > 0")
    if N < 0:
        raise InvalidInputError(f"order must be nonnegative, got {N}")
    M = max(N, 1)
    J = _downward_j(M + 1, x)
    Y = _upward_y(M + 1, x)
    dJ = _derivative(J, x, J[1])
    dY = _derivative(Y, x, Y[1])
    return SphericalWaveBasis(N, x, J[: N + 1], dJ[: N + 1], Y[: N + 1], dY[: N + 1])


def spherical_bessel(n: int, x):
    """``(j_n, j_n', y_n, y_n', h_n, h_n')`` with ``h_n = j_n + i y_n``."""
    b = spherical_wave_basis(n, x)
    return b.j[n], b.dj[n], b.y[n], b.dy[n], b.h[n], b.dh[n]


def legendre_polynomials(N: int, t) -> np.ndarray:
    t = np.asarray(t, dtype=float)
    P = np.empty((N + 1,) + t.shape)
    P[0] = 1.0
    if N >= 1:
        P[1] = t
    for n in range(1, N):
        P[n + 1] = ((2 * n + 1) * t * P[n] - n * P[n - 1]) / (n + 1)
    return P


# ---- layered sphere ----------------------------------------------------------

@dataclass(frozen=True)
class LayeredSphere:
    k0: float
    k1: float
    lambda0: float
    R0: float
    R1: float
    center: tuple = (0.0, 0.0, 0.0)

    def __post_init__(self):
        for name in ("k0", "k1", "lambda0", "R0", "R1"):
            if not getattr(self, name) > 0:
                raise InvalidInputError(f"{name} must be positive")
        if not self.R1 < self.R0:
            raise InvalidGeometryError("core radius must be smaller than the outer radius")

    @classmethod
    def from_config(cls, config) -> "LayeredSphere":
        s0, s1 = config.surface_S0, config.surface_S1
        if not (s0.is_sphere and s1.is_sphere and np.allclose(s0.center, s1.center, atol=1e-12)):
            raise InvalidGeometryError("oracle requires concentric spheres")
        return cls(config.k0, config.k1, config.lambda0, s0.mean_radius, s1.mean_radius,
                   tuple(s0.center))


@dataclass(frozen=True)
class MieCoefficients:
    a: np.ndarray
    b: np.ndarray
    c: np.ndarray
    medium: LayeredSphere
    core: str
    lam: float
    direction: np.ndarray

    @property
    def order(self) -> int:
        return len(self.a) - 1


def default_order(k0: float, R0: float) -> int:
    return int(np.ceil(k0 * R0)) + 20


def mode_matrix(medium: LayeredSphere, core: str, lam: float, N: int):
    """Per-mode matrices ``(N+1, 3, 3)`` and right-hand sides ``(N+1, 3)``."""
    k0, k1, l0 = medium.k0, medium.k1, medium.lambda0
    out0 = spherical_wave_basis(N, k0 * medium.R0)
    in0 = spherical_wave_basis(N, k1 * medium.R0)
    in1 = spherical_wave_basis(N, k1 * medium.R1)
    A = np.zeros((N + 1, 3, 3), dtype=complex)
    rhs = np.zeros((N + 1, 3), dtype=complex)
    A[:, 0] = np.stack([out0.h, -in0.j, -in0.y], axis=-1)
    A[:, 1] = np.stack([k0 * out0.dh, -l0 * k1 * in0.dj, -l0 * k1 * in0.dy], axis=-1)
    if core == "soft":
        A[:, 2, 1] = in1.j
        A[:, 2, 2] = in1.y
    elif core == "impedance":
        A[:, 2, 1] = k1 * in1.dj + 1j * lam * in1.j
        A[:, 2, 2] = k1 * in1.dy + 1j * lam * in1.y
    else:
        raise InvalidInputError(f"core condition must be 'soft' or 'impedance', got {core!r}")
    rhs[:, 0] = -out0.j
    rhs[:, 1] = -k0 * out0.dj
    return A, rhs


def mie_layered(medium, core: str = "soft", d=(0.0, 0.0, 1.0), N: Optional[int] = None,
                lam: float = 0.0) -> MieCoefficients:
    """Solve the mode systems. ``medium`` is a LayeredSphere or a concentric config."""
    if not isinstance(medium, LayeredSphere):
        medium = LayeredSphere.from_config(medium)
    if lam < 0:
        raise InvalidInputError("impedance must be nonnegative")
    d = np.asarray(d, dtype=float)
    if abs(np.linalg.norm(d) - 1.0) > 1e-12:
        raise InvalidInputError("incident direction must be a unit vector")
    N = default_order(medium.k0, medium.R0) if N is None else int(N)
    A, rhs = mode_matrix(medium, core, lam, N)
    # columns differ by many orders of magnitude at high n; equilibrate first
    scale = np.abs(A).max(axis=1)
    As = A / scale[:, None, :]
    cond = np.linalg.cond(As)
    bad = np.flatnonzero(~np.isfinite(cond) | (cond > 1e13))
    if bad.size:
        raise OracleFailure(
            f"mode {bad[0]} system numerically singular (condition {cond[bad[0]]:.2e}); "
            "exceptional wavenumber pair, choose different k")
    sol = np.linalg.solve(As, rhs[..., None])[..., 0] / scale
    return MieCoefficients(sol[:, 0], sol[:, 1], sol[:, 2], medium, core, lam, d)


def _cosines(coeffs: MieCoefficients, x):
    x = np.atleast_2d(np.asarray(x, dtype=float))
    rel = x - np.asarray(coeffs.medium.center)
    r = np.linalg.norm(rel, axis=1)
    t = rel @ coeffs.direction / np.where(r > 0, r, 1.0)
    return r, np.clip(t, -1.0, 1.0)


def _modal_weights(N: int) -> np.ndarray:
    n = np.arange(N + 1)
    return (1j) ** n * (2 * n + 1)


def oracle_scattered(coeffs: MieCoefficients, x) -> np.ndarray:
    """Scattered field at points outside the outer sphere."""
    r, t = _cosines(coeffs, x)
    if np.any(r <= coeffs.medium.R0):
        raise InvalidInputError("scattered-field series needs r > R0")
    N = coeffs.order
    h = spherical_wave_basis(N, coeffs.medium.k0 * r).h
    P = legendre_polynomials(N, t)
    return ((_modal_weights(N) * coeffs.a)[:, None] * h * P).sum(0)


def oracle_interior(coeffs: MieCoefficients, x) -> np.ndarray:
    """Annulus field ``v`` at points with ``R1 < r < R0``."""
    r, t = _cosines(coeffs, x)
    m = coeffs.medium
    if np.any((r <= m.R1) | (r >= m.R0)):
        raise InvalidInputError("interior series needs R1 < r < R0")
    N = coeffs.order
    B = spherical_wave_basis(N, m.k1 * r)
    P = legendre_polynomials(N, t)
    w = _modal_weights(N)[:, None]
    return (w * (coeffs.b[:, None] * B.j + coeffs.c[:, None] * B.y) * P).sum(0)


def far_field_values(coeffs: MieCoefficients, directions) -> np.ndarray:
    """``u^inf(xhat) = (-i/k0) sum (2n+1) a_n P_n(xhat . d)``."""
    xh = np.atleast_2d(np.asarray(directions, dtype=float))
    P = legendre_polynomials(coeffs.order, np.clip(xh @ coeffs.direction, -1.0, 1.0))
    n = np.arange(coeffs.order + 1)
    return (-1j / coeffs.medium.k0) * (((2 * n + 1) * coeffs.a)[:, None] * P).sum(0)


def oracle_far_field(coeffs: MieCoefficients, directions):
    from .fields import FarField

    xh = np.atleast_2d(np.asarray(directions, dtype=float))
    return FarField(xh, far_field_values(coeffs, xh),
                    {"kind": "oracle", "type": "plane", "d": coeffs.direction.tolist(),
                     "core": coeffs.core, "lambda": coeffs.lam})
