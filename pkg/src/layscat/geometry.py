"""Star-shaped quadrature surfaces and boundary partitions.

A surface is the image of the unit sphere under ``xi -> center + r(xi) xi``
where ``r`` is a finite real spherical-harmonic series. Nodes sit on a
Gauss-Legendre (in cos theta) by uniform-azimuth grid; normals and area
Jacobians come from the analytic parametrization derivatives.
"""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from enum import IntEnum
from typing import Callable, Mapping

import numpy as np

from . import sph
from .errors import DimensionError, InvalidGeometryError


class Part(IntEnum):
    INTERFACE = -1
    GAMMA0 = 0
    GAMMA1 = 1


@dataclass(frozen=True)
class RadialMap:
    """``r(theta, phi) = sum c_nm Y_nm`` over real orthonormal harmonics."""

    coeffs: Mapping[tuple[int, int], float]

    @property
    def degree(self) -> int:
        return max(n for n, _ in self.coeffs)

    def evaluate(self, theta, phi):
        """Return ``r``, ``dr/dtheta`` and ``(1/sin theta) dr/dphi``."""
        return sph.real_series(self.coeffs, theta, phi)

    def is_constant(self) -> bool:
        return all(n == 0 or v == 0 for (n, _), v in self.coeffs.items())


def sphere_map(radius: float) -> RadialMap:
    return RadialMap({(0, 0): radius * np.sqrt(4.0 * np.pi)})


def unit_vectors(theta, phi):
    st, ct = np.sin(theta), np.cos(theta)
    sp, cp = np.sin(phi), np.cos(phi)
    xi = np.stack([st * cp, st * sp, ct], axis=-1)
    e_theta = np.stack([ct * cp, ct * sp, -st], axis=-1)
    e_phi = np.stack([-sp, cp, np.zeros_like(phi)], axis=-1)
    return xi, e_theta, e_phi


@dataclass(frozen=True)
class SurfacePoints:
    points: np.ndarray
    normals: np.ndarray
    jacobian: np.ndarray  # dS / d(sigma) on the unit sphere
    t_theta: np.ndarray  # dx/dtheta
    t_phi: np.ndarray  # (1/sin theta) dx/dphi


def parametrize(center, radial: RadialMap, theta, phi) -> SurfacePoints:
    theta = np.asarray(theta, dtype=float)
    phi = np.asarray(phi, dtype=float)
    r, rt, rp = radial.evaluate(theta.ravel(), phi.ravel())
    r, rt, rp = (a.reshape(theta.shape) for a in (r, rt, rp))
    xi, et, ep = unit_vectors(theta, phi)
    r_ = r[..., None]
    points = np.asarray(center) + r_ * xi
    n_raw = r_ * (r_ * xi - rt[..., None] * et - rp[..., None] * ep)
    jac = np.linalg.norm(n_raw, axis=-1)
    normals = n_raw / jac[..., None]
    t_theta = rt[..., None] * xi + r_ * et
    t_phi = rp[..., None] * xi + r_ * ep
    return SurfacePoints(points, normals, jac, t_theta, t_phi)


@dataclass(frozen=True, eq=False)
class QuadSurface:
    """Discretized closed surface. Immutable; safe to share between threads."""

    nodes: np.ndarray
    normals: np.ndarray
    weights: np.ndarray
    n_polar: int
    n_azimuth: int
    center: np.ndarray
    radial_map: RadialMap
    theta: np.ndarray
    phi: np.ndarray
    sphere_weights: np.ndarray
    jacobian: np.ndarray
    t_theta: np.ndarray
    t_phi: np.ndarray
    part_labels: np.ndarray = field(default=None)

    @property
    def param_grid(self) -> tuple[int, int]:
        return (self.n_polar, self.n_azimuth)

    @property
    def size(self) -> int:
        return len(self.weights)

    @property
    def area(self) -> float:
        return float(self.weights.sum())

    @property
    def is_sphere(self) -> bool:
        return self.radial_map.is_constant()

    @property
    def mean_radius(self) -> float:
        return float(self.radial_map.coeffs.get((0, 0), 0.0) / np.sqrt(4 * np.pi))

    def local_mesh_width(self) -> np.ndarray:
        return np.sqrt(self.weights)

    def mesh_width(self) -> float:
        """Largest nodal spacing of the parameter grid mapped to the surface."""
        rmax = float(np.max(np.linalg.norm(self.nodes - self.center, axis=1)))
        return rmax * max(np.pi / self.n_polar, 2 * np.pi / self.n_azimuth)

    def indices(self, part: Part) -> np.ndarray:
        return np.flatnonzero(self.part_labels == int(part))

    def radius_at(self, directions: np.ndarray) -> np.ndarray:
        d = np.atleast_2d(directions)
        d = d / np.linalg.norm(d, axis=1, keepdims=True)
        theta = np.arctan2(np.hypot(d[:, 0], d[:, 1]), d[:, 2])
        phi = np.arctan2(d[:, 1], d[:, 0])
        return self.radial_map.evaluate(theta, phi)[0]

    def signed_radial_gap(self, x: np.ndarray) -> np.ndarray:
        """``|x - c| - r(direction)``: positive outside, negative inside."""
        x = np.atleast_2d(x)
        rel = x - self.center
        dist = np.linalg.norm(rel, axis=1)
        out = np.full(len(x), -np.inf)
        ok = dist > 0
        out[ok] = dist[ok] - self.radius_at(rel[ok])
        return out

    def distance_to_nodes(self, x: np.ndarray) -> np.ndarray:
        x = np.atleast_2d(x)
        d2 = ((x[:, None, :] - self.nodes[None, :, :]) ** 2).sum(-1)
        return np.sqrt(d2.min(axis=1))

    def at(self, theta, phi) -> SurfacePoints:
        return parametrize(self.center, self.radial_map, theta, phi)


def _build(center, radial: RadialMap, n_polar: int, n_azimuth: int, label: Part) -> QuadSurface:
    if n_polar < 4 or n_azimuth < 8:
        raise InvalidGeometryError(
            f"grid too small: n_polar={n_polar} (>=4), n_azimuth={n_azimuth} (>=8)"
        )
    center = np.asarray(center, dtype=float).reshape(3)
    theta, phi, w = sph.gauss_sphere_grid(n_polar, n_azimuth)
    sp = parametrize(center, radial, theta, phi)
    return QuadSurface(
        nodes=sp.points,
        normals=sp.normals,
        weights=w * sp.jacobian,
        n_polar=n_polar,
        n_azimuth=n_azimuth,
        center=center,
        radial_map=radial,
        theta=theta,
        phi=phi,
        sphere_weights=w,
        jacobian=sp.jacobian,
        t_theta=sp.t_theta,
        t_phi=sp.t_phi,
        part_labels=np.full(len(w), int(label)),
    )


def make_sphere(center=(0.0, 0.0, 0.0), radius: float = 1.0, n_polar: int = 16,
                n_azimuth: int = 32) -> QuadSurface:
    if not radius > 0:
        raise InvalidGeometryError(f"radius must be positive, got {radius}")
    return _build(center, sphere_map(radius), n_polar, n_azimuth, Part.INTERFACE)


def make_star_surface(radial_coeffs: Mapping[tuple[int, int], float], n_polar: int = 16,
                      n_azimuth: int = 32, center=(0.0, 0.0, 0.0)) -> QuadSurface:
    """Surface with radial function ``sum c_nm Y_nm`` (real orthonormal harmonics).

    The constant radius R corresponds to ``c_00 = R * sqrt(4 pi)``.
    """
    coeffs = {(int(n), int(m)): float(c) for (n, m), c in radial_coeffs.items()}
    for n, m in coeffs:
        if n < 0 or abs(m) > n:
            raise InvalidGeometryError(f"invalid harmonic index (n={n}, m={m})")
    radial = RadialMap(coeffs)
    L = radial.degree
    dense = max(4 * L + 8, 2 * n_polar)
    th, ph, _ = sph.gauss_sphere_grid(dense, 2 * dense)
    th = np.concatenate([th, [0.0, np.pi]])
    ph = np.concatenate([ph, [0.0, 0.0]])
    rmin = radial.evaluate(th, ph)[0].min()
    if not rmin > 0:
        raise InvalidGeometryError(f"radial function not positive (min {rmin:.3g})")
    return _build(center, radial, n_polar, n_azimuth, Part.INTERFACE)


def as_obstacle(surface: QuadSurface) -> QuadSurface:
    """Relabel a surface as an all-Dirichlet obstacle boundary."""
    return dataclasses.replace(surface, part_labels=np.full(surface.size, int(Part.GAMMA0)))


PointRule = Callable[[np.ndarray], np.ndarray]

NAMED_RULES: dict[str, Callable[[QuadSurface], PointRule]] = {
    "all-dirichlet": lambda s: (lambda x: np.ones(len(x), dtype=bool)),
    "all-impedance": lambda s: (lambda x: np.zeros(len(x), dtype=bool)),
    "hemisphere-z": lambda s: (lambda x: x[:, 2] >= s.center[2]),
}


@dataclass(frozen=True)
class BoundaryPartition:
    rule: str
    gamma0: np.ndarray
    gamma1: np.ndarray
    measure_gamma0: float
    measure_gamma1: float


def partition_boundary(surface: QuadSurface, rule: PointRule | str) -> QuadSurface:
    """Label obstacle nodes: predicate True gives Gamma_0 (Dirichlet), else Gamma_1."""
    if isinstance(rule, str):
        try:
            rule = NAMED_RULES[rule](surface)
        except KeyError:
            raise InvalidGeometryError(f"unknown partition rule {rule!r}") from None
    mask = np.asarray(rule(surface.nodes), dtype=bool)
    labels = np.where(mask, int(Part.GAMMA0), int(Part.GAMMA1))
    return dataclasses.replace(surface, part_labels=labels)


def boundary_partition(surface: QuadSurface, rule: str = "custom") -> BoundaryPartition:
    g0 = surface.indices(Part.GAMMA0)
    g1 = surface.indices(Part.GAMMA1)
    return BoundaryPartition(rule, g0, g1, float(surface.weights[g0].sum()),
                             float(surface.weights[g1].sum()))


def surface_integral(surface: QuadSurface, f) -> complex:
    f = np.asarray(f)
    if f.shape[0] != surface.size:
        raise DimensionError(f"expected {surface.size} samples, got {f.shape[0]}")
    return np.tensordot(surface.weights, f, axes=(0, 0))
