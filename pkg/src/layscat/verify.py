"""Numerical experiments checking residuals, invariants and the probe mechanism."""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from . import kernels
from .errors import InvalidGeometryError, InvalidInputError, ProbeHypothesisError
from .fields import boundary_traces, direction_grid, far_field
from .geometry import Part
from .solver import (
    BlockSystem,
    DensitySet,
    IncidentField,
    PlaneWave,
    PointSource,
    ScatteringConfig,
    assemble_rhs,
    build_block_operator,
    build_rhs,
    solve_many,
)


# ---- far-field matrices --------------------------------------------------------

def symmetric_directions(n: int, seed: int = 0) -> np.ndarray:
    """``n`` (even) seeded random unit vectors closed under negation."""
    if n < 2 or n % 2:
        raise InvalidInputError("direction count must be even and at least 2")
    g = np.random.default_rng(seed).normal(size=(n // 2, 3))
    g /= np.linalg.norm(g, axis=1, keepdims=True)
    return np.concatenate([g, -g])


def far_field_matrix(config: ScatteringConfig, observations, incidences,
                     system: Optional[BlockSystem] = None) -> np.ndarray:
    """``U[i, j] = u^inf(observations[i], incidences[j])`` for plane waves."""
    system = system or build_block_operator(config)
    inc = np.atleast_2d(incidences)
    R = np.stack([build_rhs(PlaneWave(d), config) for d in inc], axis=1)
    dens = solve_many(system, R)
    return np.stack([far_field(den, config, observations).values for den in dens], axis=1)


def _negation_index(dirs: np.ndarray) -> np.ndarray:
    d2 = ((-dirs[:, None, :] - dirs[None, :, :]) ** 2).sum(-1)
    idx = d2.argmin(axis=1)
    if np.any(d2[np.arange(len(dirs)), idx] > 1e-24):
        raise InvalidInputError("direction grid must be closed under negation")
    return idx


def reciprocity_from_matrix(U: np.ndarray, dirs: np.ndarray) -> float:
    """``max |U(x, d) - U(-d, -x)| / max |U|`` with both axes on ``dirs``."""
    neg = _negation_index(dirs)
    swapped = U[np.ix_(neg, neg)].T
    scale = np.abs(U).max()
    return float(np.abs(U - swapped).max() / scale) if scale > 0 else 0.0


def reciprocity_residual(config: ScatteringConfig, direction_grid: Optional[np.ndarray] = None,
                         system: Optional[BlockSystem] = None) -> float:
    dirs = symmetric_directions(10) if direction_grid is None else np.atleast_2d(direction_grid)
    U = far_field_matrix(config, dirs, dirs, system)
    return reciprocity_from_matrix(U, dirs)


# ---- energy --------------------------------------------------------------------

@dataclass(frozen=True)
class EnergyBalance:
    residual: float  # k0/(4 pi) int |u^inf|^2 - Im u^inf(d, d)
    relative: float
    sign: str  # "balanced" or "absorbing"
    lossless: bool
    tol: float = 1e-5

    @property
    def passed(self) -> bool:
        if self.lossless:
            return abs(self.relative) <= self.tol
        return self.residual < 0


def energy_residual(values: np.ndarray, weights: np.ndarray, forward: complex, k0: float,
                    lossless: bool, tol: float = 1e-5) -> EnergyBalance:
    """Optical-theorem balance from far-field samples on a quadrature grid."""
    values = np.asarray(values)
    power = k0 / (4.0 * np.pi) * float(np.sum(weights * np.abs(values) ** 2))
    r = power - float(np.imag(forward))
    scale = abs(float(np.imag(forward)))
    rel = r / scale if scale > 0 else 0.0
    sign = "absorbing" if rel < -tol else "balanced"
    return EnergyBalance(r, rel, sign, lossless, tol)


def energy_check(config: ScatteringConfig, d=(0.0, 0.0, 1.0), n_theta: int = 24,
                 system: Optional[BlockSystem] = None) -> EnergyBalance:
    d = np.asarray(d, dtype=float)
    system = system or build_block_operator(config)
    den = solve_many(system, build_rhs(PlaneWave(d), config)[:, None])[0]
    dirs, w = direction_grid(n_theta, 2 * n_theta)
    ff = far_field(den, config, np.vstack([dirs, d])).values
    return energy_residual(ff[:-1], w, ff[-1], config.k0, config.lossless)


# ---- boundary residuals --------------------------------------------------------

@dataclass(frozen=True)
class TransmissionResidual:
    res_f: float
    res_g: float
    res_dirichlet: float
    res_impedance: float
    offset: bool

    @property
    def worst(self) -> float:
        return max(self.res_f, self.res_g, self.res_dirichlet, self.res_impedance)


def _edge_mask(points, labels, config: ScatteringConfig) -> np.ndarray:
    """Offset points within two mesh widths of a node of the other boundary part."""
    s1 = config.surface_S1
    mw = s1.local_mesh_width()
    keep = np.ones(len(points), dtype=bool)
    for part, other in ((Part.GAMMA0, Part.GAMMA1), (Part.GAMMA1, Part.GAMMA0)):
        oi = s1.indices(other)
        sel = np.flatnonzero(labels == int(part))
        if oi.size == 0 or sel.size == 0:
            continue
        d2 = ((points[sel, None, :] - s1.nodes[None, oi, :]) ** 2).sum(-1)
        j = d2.argmin(axis=1)
        keep[sel] = np.sqrt(d2[np.arange(len(sel)), j]) > 2.0 * mw[oi[j]]
    return keep


def transmission_residual(densities: DensitySet, config: ScatteringConfig,
                          incident: IncidentField, offset: bool = False) -> TransmissionResidual:
    """Max-norm residuals of the boundary conditions relative to the incident field on S0.

    On mixed partitions the offset grid skips points next to the Gamma0/Gamma1 edge,
    where the densities are discontinuous and interpolation is meaningless.
    """
    tr = boundary_traces(densities, config, offset=offset)
    k0, l0 = config.k0, config.lambda0
    s0 = config.surface_S0
    scale = float(np.abs(incident.values(s0.nodes, k0)).max())
    ui = incident.values(tr.points0, k0)
    dui = incident.normal_derivative(tr.points0, tr.normals0, k0)
    # u - v = f = -u^i and du - lambda0 dv = g = -du^i
    res_f = np.abs(tr.u - tr.v + ui).max()
    res_g = np.abs(tr.du - l0 * tr.dv + dui).max()
    keep = _edge_mask(tr.points1, tr.labels1, config) if offset else np.ones(len(tr.labels1), bool)
    m0 = tr.gamma0_mask & keep
    res_d = np.abs(tr.v1[m0]).max() if m0.any() else 0.0
    res_i = 0.0
    if tr.gamma1_mask.any():
        pts = tr.points1[tr.gamma1_mask]
        lam = config.impedance_at(pts)
        r = np.abs(tr.dv1 + 1j * lam * tr.v1[tr.gamma1_mask])
        r = r[keep[tr.gamma1_mask]]
        res_i = r.max() if r.size else 0.0
    if scale == 0:
        return TransmissionResidual(0.0, 0.0, 0.0, 0.0, offset)
    return TransmissionResidual(res_f / scale, res_g / scale, res_d / scale, res_i / scale, offset)


# ---- weighted norm -------------------------------------------------------------

@dataclass(frozen=True)
class C0Norm:
    anchor: np.ndarray
    value: float


def weighted_c0_norm(values, surface, anchor) -> C0Norm:
    """``max_{x != x*} |x - x*| |h(x)|`` over the nodes of ``surface``."""
    values = np.asarray(values)
    anchor = np.asarray(anchor, dtype=float).reshape(3)
    dist = np.linalg.norm(surface.nodes - anchor, axis=1)
    ia = int(dist.argmin())
    if dist[ia] != 0.0:
        raise InvalidInputError("anchor must be a surface node")
    mask = np.ones(surface.size, dtype=bool)
    mask[ia] = False
    return C0Norm(anchor, float((dist[mask] * np.abs(values[mask])).max()))


# ---- interface probe -----------------------------------------------------------

@dataclass(frozen=True)
class ProbeReport:
    j: int
    z_j: np.ndarray
    dist_j: float
    sup_v_away: float
    sup_phi_near: float
    sup_u_near: float


def probe_sources(config: ScatteringConfig, z0_index: int, h: Optional[float], j_max: int):
    s0 = config.surface_S0
    z0 = s0.nodes[z0_index]
    nu = s0.normals[z0_index]
    if h is None:
        h = 0.3 * float(s0.local_mesh_width()[z0_index])
    if not h > 0:
        raise InvalidInputError("probe offset h must be positive")
    js = np.arange(1, j_max + 1)
    zs = z0 + (h / js)[:, None] * nu
    if np.any(s0.signed_radial_gap(zs) <= 0):
        raise InvalidGeometryError("probe source falls inside S0; reduce h")
    return z0, h, js, zs


def _image_split(config: ScatteringConfig, z: np.ndarray, z_img: np.ndarray):
    """Data for the remainder after removing the flat-interface image pair.

    Near the interface the point-source solution behaves like
    ``u^s ~ alpha Phi_0(., z*)`` and ``v ~ beta Phi_1(., z)`` with the mirror
    point ``z*``, ``beta = 2/(1+lambda0)`` and ``alpha = (1-lambda0)/(1+lambda0)``.
    Both are exact Helmholtz solutions in their regions, so the remainder
    solves the same problem with much tamer data.
    """
    s0, s1 = config.surface_S0, config.surface_S1
    k0, k1, l0 = config.k0, config.k1, config.lambda0
    beta = 2.0 / (1.0 + l0)
    alpha = (1.0 - l0) / (1.0 + l0)
    x, nu = s0.nodes, s0.normals
    f = (-kernels.single_layer(x, z, k0) - alpha * kernels.single_layer(x, z_img, k0)
         + beta * kernels.single_layer(x, z, k1))
    g = (-kernels.adjoint_double_layer(x, nu, z, k0)
         - alpha * kernels.adjoint_double_layer(x, nu, z_img, k0)
         + l0 * beta * kernels.adjoint_double_layer(x, nu, z, k1))
    y0, y1 = s1.nodes[config.gamma0], s1.nodes[config.gamma1]
    dirichlet = -beta * kernels.single_layer(y0, z, k1)
    lam = config.lambda_imp
    impedance = -beta * (kernels.adjoint_double_layer(y1, s1.normals[config.gamma1], z, k1)
                         + 1j * lam * kernels.single_layer(y1, z, k1))
    rhs = assemble_rhs(config, f, g, dirichlet, impedance)
    u_img = alpha * kernels.single_layer(x, z_img, k0)
    v_img = beta * kernels.single_layer(x, z, k1)
    return rhs, u_img, v_img


def interface_probe(config: ScatteringConfig, z0_index: int, h: Optional[float] = None,
                    j_max: int = 8, b1_radius: Optional[float] = None,
                    b2_radius: Optional[float] = None, system: Optional[BlockSystem] = None,
                    subtract_images: bool = True) -> list[ProbeReport]:
    """Point sources approaching ``z0`` along the normal; one factorization for all j.

    Ball radii default to 0.2 and 0.4 times the mean radius of S0. With
    ``subtract_images`` the singular image pair is split off analytically
    before the solve; otherwise the point-source data are collocated as is.
    """
    if config.lambda0 == 1.0:
        raise ProbeHypothesisError("interface probe needs lambda0 != 1")
    s0 = config.surface_S0
    R0 = s0.mean_radius
    b1 = 0.2 * R0 if b1_radius is None else b1_radius
    b2 = 0.4 * R0 if b2_radius is None else b2_radius
    if not 0 < b1 < b2:
        raise InvalidInputError("ball radii must satisfy 0 < B1 < B2")
    z0, h, js, zs = probe_sources(config, z0_index, h, j_max)
    system = system or build_block_operator(config)
    nu0 = s0.normals[z0_index]
    zero = np.zeros(s0.size)
    columns, images = [], []
    for j, z in zip(js, zs):
        if subtract_images:
            rhs, u_img, v_img = _image_split(config, z, z0 - (h / j) * nu0)
        else:
            rhs, u_img, v_img = build_rhs(PointSource(z), config), zero, zero
        columns.append(rhs)
        images.append((u_img, v_img))
    dens = solve_many(system, np.stack(columns, axis=1))
    near = np.linalg.norm(s0.nodes - z0, axis=1) < b2
    reports = []
    for j, z, den, (u_img, v_img) in zip(js, zs, dens, images):
        tr = boundary_traces(den, config)
        u = tr.u + u_img
        v = tr.v + v_img
        phi_near = np.abs(kernels.single_layer(s0.nodes[near], z, config.k0)).max()
        reports.append(ProbeReport(int(j), z, float(h / j), float(np.abs(v[~near]).max()),
                                   float(phi_near), float(np.abs(u[near]).max())))
    return reports


# ---- coincidence and convergence -----------------------------------------------

def coincidence_test(configA: ScatteringConfig, configB: ScatteringConfig,
                     direction_grid: Optional[np.ndarray] = None) -> float:
    """Relative Frobenius distance between the two far-field matrices."""
    dirs = symmetric_directions(10) if direction_grid is None else np.atleast_2d(direction_grid)
    UA = far_field_matrix(configA, dirs, dirs)
    UB = UA if configB is configA else far_field_matrix(configB, dirs, dirs)
    return float(np.linalg.norm(UA - UB) / np.linalg.norm(UA))


@dataclass(frozen=True)
class ConvergenceTable:
    resolutions: list
    errors: list
    orders: list  # empirical log-ratio between consecutive rows
    reference: str

    def monotone(self) -> bool:
        return all(b < a for a, b in zip(self.errors, self.errors[1:]))


def convergence_study(make_config: Callable[[int], ScatteringConfig], incident: IncidentField,
                      resolutions: Sequence[int],
                      reference: Optional[Callable[[np.ndarray], np.ndarray]] = None,
                      n_theta: int = 12) -> ConvergenceTable:
    """Far-field errors over resolutions, against ``reference`` or the finest solve."""
    resolutions = list(resolutions)
    if len(resolutions) < 3:
        raise InvalidInputError("convergence study needs at least three resolutions")
    dirs, w = direction_grid(n_theta, 2 * n_theta)
    ffs = []
    for n in resolutions:
        cfg = make_config(n)
        system = build_block_operator(cfg)
        den = solve_many(system, build_rhs(incident, cfg)[:, None])[0]
        ffs.append(far_field(den, cfg, dirs).values)
    if reference is not None:
        ref, label = reference(dirs), "reference"
        rows = ffs
    else:
        ref, label = ffs[-1], f"n={resolutions[-1]}"
        rows = ffs[:-1]
    norm = np.sqrt(np.sum(w * np.abs(ref) ** 2))
    errors = [float(np.sqrt(np.sum(w * np.abs(f - ref) ** 2)) / norm) for f in rows]
    orders = [float(np.log(a / b) / np.log(m / n)) if a > 0 and b > 0 else float("nan")
              for a, b, n, m in zip(errors, errors[1:], resolutions, resolutions[1:])]
    return ConvergenceTable(resolutions[: len(errors)], errors, orders, label)


# ---- reports -------------------------------------------------------------------

@dataclass
class CheckResult:
    name: str
    passed: bool
    value: float
    threshold: float
    detail: str = ""

    def __post_init__(self):
        self.passed = bool(self.passed)
        self.value = float(self.value)
        self.threshold = float(self.threshold)


@dataclass
class VerifyReport:
    digest: str
    checks: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def failing(self) -> list[str]:
        return [c.name for c in self.checks if not c.passed]

    def to_json(self) -> str:
        return json.dumps({"config_digest": self.digest, "passed": self.passed,
                           "checks": [asdict(c) for c in self.checks]}, indent=2, sort_keys=True)

    def to_text(self) -> str:
        lines = [f"config {self.digest}"]
        for c in self.checks:
            mark = "PASS" if c.passed else "FAIL"
            lines.append(f"{mark:4}  {c.name:<14} {c.value:12.4e}  limit {c.threshold:10.3e}  {c.detail}")
        return "\n".join(lines)
