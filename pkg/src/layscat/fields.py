"""Fields, boundary traces and far-field patterns from solved densities."""
from __future__ import annotations

import json
import logging
import weakref
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from . import sph
from .errors import DimensionError, InvalidInputError, WrongRegionError
from .geometry import Part, QuadSurface
from .operators import (
    assemble_same_surface_batch,
    assemble_smooth,
    maue_apply,
    singular_quadrature,
)
from .solver import DensitySet, ScatteringConfig, operator_bank

log = logging.getLogger(__name__)


# ---- far field ---------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class FarField:
    directions: np.ndarray
    values: np.ndarray
    incident_tag: dict

    def __post_init__(self):
        d = np.atleast_2d(np.asarray(self.directions, dtype=float))
        v = np.asarray(self.values, dtype=complex).reshape(len(d))
        if np.any(np.abs(np.linalg.norm(d, axis=1) - 1.0) > 1e-12):
            raise InvalidInputError("far-field directions must be unit vectors")
        if not np.all(np.isfinite(v)):
            raise InvalidInputError("far-field values must be finite")
        object.__setattr__(self, "directions", d)
        object.__setattr__(self, "values", v)

    def angles(self) -> tuple[np.ndarray, np.ndarray]:
        d = self.directions
        return np.arccos(np.clip(d[:, 2], -1.0, 1.0)), np.arctan2(d[:, 1], d[:, 0])

    def to_csv(self, path) -> None:
        theta, phi = self.angles()
        with open(path, "w", newline="\n") as fh:
            fh.write("theta,phi,re,im\n")
            for t, p, v in zip(theta, phi, self.values):
                fh.write(f"{t:.17g},{p:.17g},{v.real:.17g},{v.imag:.17g}\n")

    def write(self, stem, digest: str, extra: Optional[dict] = None) -> None:
        """CSV plus a JSON sidecar carrying the config digest and incidence."""
        stem = str(stem)
        self.to_csv(stem + ".csv")
        meta = {"config_digest": digest, "incidence": self.incident_tag,
                "n_directions": len(self.values)}
        meta.update(extra or {})
        with open(stem + ".json", "w") as fh:
            json.dump(meta, fh, indent=2, sort_keys=True)
            fh.write("\n")


def read_far_field_csv(path) -> FarField:
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    t, p = data[:, 0], data[:, 1]
    d = np.stack([np.sin(t) * np.cos(p), np.sin(t) * np.sin(p), np.cos(t)], axis=1)
    d /= np.linalg.norm(d, axis=1, keepdims=True)
    return FarField(d, data[:, 2] + 1j * data[:, 3], {"source": str(path)})


def direction_grid(n_theta: int, n_phi: int) -> tuple[np.ndarray, np.ndarray]:
    """Gauss-Legendre (cos theta) by uniform azimuth directions and quadrature weights."""
    theta, phi, w = sph.gauss_sphere_grid(n_theta, n_phi)
    d = np.stack([np.sin(theta) * np.cos(phi), np.sin(theta) * np.sin(phi), np.cos(theta)], axis=1)
    return d / np.linalg.norm(d, axis=1, keepdims=True), w


def far_field(densities: DensitySet, config: ScatteringConfig, directions,
              incident_tag: Optional[dict] = None) -> FarField:
    """``(1/4pi) int [lambda0 (-i k0 xhat.nu) psi + phi] exp(-i k0 xhat.y) ds``."""
    s0 = config.surface_S0
    xh = np.atleast_2d(np.asarray(directions, dtype=float))
    E = np.exp(-1j * config.k0 * (xh @ s0.nodes.T)) * s0.weights
    dn = -1j * config.k0 * (xh @ s0.normals.T)
    vals = (config.lambda0 * (E * dn) @ densities.psi + E @ densities.phi) / (4.0 * np.pi)
    return FarField(xh, vals, dict(incident_tag or {}))


# ---- potentials --------------------------------------------------------------

def _near(surface: QuadSurface, x: np.ndarray) -> np.ndarray:
    d2 = ((x[:, None, :] - surface.nodes[None, :, :]) ** 2).sum(-1)
    j = d2.argmin(axis=1)
    return np.sqrt(d2[np.arange(len(x)), j]) < surface.local_mesh_width()[j]


def _warn_near(mask, name):
    if np.any(mask):
        log.warning("%d evaluation points within one mesh width of %s; values flagged",
                    int(mask.sum()), name)


def eval_u(x, densities: DensitySet, config: ScatteringConfig, return_flags: bool = False):
    """Scattered field in the exterior through the layer ansatz."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    s0 = config.surface_S0
    if np.any(s0.signed_radial_gap(x) <= 0):
        raise WrongRegionError("eval_u needs points strictly outside S0")
    near = _near(s0, x)
    _warn_near(near, "S0")
    k0 = config.k0
    K = assemble_smooth("K", k0, s0, x, x)
    S = assemble_smooth("S", k0, s0, x, x)
    vals = config.lambda0 * K @ densities.psi + S @ densities.phi
    return (vals, near) if return_flags else vals


def eval_v(x, densities: DensitySet, config: ScatteringConfig, return_flags: bool = False):
    """Field between the obstacle and the interface."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    s0, s1 = config.surface_S0, config.surface_S1
    if np.any(s0.signed_radial_gap(x) >= 0) or np.any(s1.signed_radial_gap(x) <= 0):
        raise WrongRegionError("eval_v needs points strictly between S1 and S0")
    near = _near(s0, x) | _near(s1, x)
    _warn_near(near, "S0 or S1")
    k1, eta = config.k1, config.eta
    g0, g1 = config.gamma0, config.gamma1
    vals = (assemble_smooth("K", k1, s0, x, x) @ densities.psi
            + assemble_smooth("S", k1, s0, x, x) @ densities.phi)
    if g0.size:
        vals = vals + (assemble_smooth("K", k1, s1, x, x, g0)
                       - 1j * eta * assemble_smooth("S", k1, s1, x, x, g0)) @ densities.chi
    if g1.size:
        s2 = _s2(config, densities.varphi)
        vals = vals + assemble_smooth("S", k1, s1, x, x, g1) @ densities.varphi
        vals = vals + 1j * eta * assemble_smooth("K", k1, s1, x, x, g1) @ s2
    return (vals, near) if return_flags else vals


def _s2(config: ScatteringConfig, varphi: np.ndarray) -> np.ndarray:
    lap = operator_bank(config).laplace_g1
    return lap @ (lap @ varphi)


# ---- traces ------------------------------------------------------------------

@dataclass(eq=False)
class _TraceOps:
    """Rows of every trace operator at one set of targets on S0 and S1."""

    points0: np.ndarray
    normals0: np.ndarray
    interp0: np.ndarray
    on0: dict
    x01: dict
    maue0: Callable
    points1: np.ndarray
    labels1: np.ndarray
    interp1: np.ndarray
    on1: dict
    laplace1: np.ndarray  # targets x Gamma1 columns
    x10: dict
    t10: np.ndarray  # Gamma1 targets x Gamma0 columns
    maue1: Callable  # full-surface vector -> T_k1 at Gamma1 targets


def _node_ops(config: ScatteringConfig) -> _TraceOps:
    bank = operator_bank(config)
    s0, s1 = config.surface_S0, config.surface_S1
    g1 = config.gamma1
    k0, k1 = config.k0, config.k1
    S0 = bank.on0[("S", k0)]
    S1 = bank.on1["S"]
    full = np.zeros((s1.size, g1.size), dtype=complex)
    full[g1] = bank.laplace_g1

    def maue0(vec):
        return maue_apply(s0, k0, S0, vec[:, None])[:, 0]

    def maue1(vec):
        return maue_apply(s1, k1, S1, vec[:, None])[g1, 0]

    return _TraceOps(s0.nodes, s0.normals, np.eye(s0.size), bank.on0, bank.x01, maue0,
                     s1.nodes, s1.part_labels, np.eye(s1.size), bank.on1, full,
                     bank.x10, bank.t_gamma10, maue1)


def offset_parameters(surface: QuadSurface) -> tuple[np.ndarray, np.ndarray]:
    """Midpoints of the parameter grid: between polar rings and between meridians."""
    nt, nphi = surface.param_grid
    rings = surface.theta.reshape(nt, nphi)[:, 0]
    mid_t = 0.5 * (rings[:-1] + rings[1:])
    mid_p = 2.0 * np.pi * (np.arange(nphi) + 0.5) / nphi
    return np.repeat(mid_t, nphi), np.tile(mid_p, nt - 1)


_OFFSET: "weakref.WeakKeyDictionary[ScatteringConfig, _TraceOps]" = weakref.WeakKeyDictionary()


def _offset_ops(config: ScatteringConfig) -> _TraceOps:
    if config in _OFFSET:
        return _OFFSET[config]
    bank = operator_bank(config)
    s0, s1 = config.surface_S0, config.surface_S1
    k0, k1 = config.k0, config.k1
    g0, g1 = config.gamma0, config.gamma1
    th0, ph0 = offset_parameters(s0)
    th1, ph1 = offset_parameters(s1)
    t0 = s0.at(th0, ph0)
    t1 = s1.at(th1, ph1)

    specs = [("S", k0), ("K", k0), ("Kprime", k0)]
    if k0 != k1:
        specs += [("S", k1), ("K", k1), ("Kprime", k1), ("Tdiff", k0, k1)]
    m = assemble_same_surface_batch(s0, specs, theta_t=th0, phi_t=ph0)
    on0 = {("S", k0): m[0], ("K", k0): m[1], ("Kprime", k0): m[2], "Tdiff": None}
    if k0 != k1:
        on0.update({("S", k1): m[3], ("K", k1): m[4], ("Kprime", k1): m[5], "Tdiff": m[6]})
    m = assemble_same_surface_batch(s1, [("S", k1), ("K", k1), ("Kprime", k1), ("LaplaceS", 0.0)],
                                    theta_t=th1, phi_t=ph1)
    on1 = dict(zip(("S", "K", "Kprime"), m[:3]))
    # offset points inherit the label of the nearest node
    d2 = ((t1.points[:, None, :] - s1.nodes[None, :, :]) ** 2).sum(-1)
    labels1 = s1.part_labels[d2.argmin(axis=1)]
    tg1 = np.flatnonzero(labels1 == int(Part.GAMMA1))
    x01 = {kind: assemble_smooth(kind, k1, s1, t0.points, t0.normals)
           for kind in ("S", "K", "Kprime", "T")}
    x10 = {kind: assemble_smooth(kind, k1, s0, t1.points, t1.normals)
           for kind in ("S", "K", "Kprime", "T")}
    if g0.size and tg1.size:
        t10 = assemble_smooth("T", k1, s1, t1.points[tg1], t1.normals[tg1], g0)
    else:
        t10 = np.zeros((tg1.size, g0.size))
    S0n = bank.on0[("S", k0)]
    S1n = bank.on1["S"]
    S0t = on0[("S", k0)]
    S1t = on1["S"][tg1]

    def maue0(vec):
        return maue_apply(s0, k0, S0n, vec[:, None], target=(th0, ph0, S0t))[:, 0]

    def maue1(vec):
        return maue_apply(s1, k1, S1n, vec[:, None], target=(th1[tg1], ph1[tg1], S1t))[:, 0]

    ops = _TraceOps(t0.points, t0.normals, singular_quadrature(s0).interpolation(th0, ph0),
                    on0, x01, maue0, t1.points, labels1,
                    singular_quadrature(s1).interpolation(th1, ph1), on1, m[3][:, g1],
                    x10, t10, maue1)
    _OFFSET[config] = ops
    return ops


@dataclass(frozen=True, eq=False)
class Traces:
    """Boundary values from the jump relations.

    ``u, du, v, dv`` live on the S0 targets; ``v1`` on the S1 targets and
    ``dv1`` on the S1 targets labelled Gamma1 (``labels1``).
    """

    points0: np.ndarray
    normals0: np.ndarray
    u: np.ndarray
    du: np.ndarray
    v: np.ndarray
    dv: np.ndarray
    points1: np.ndarray
    labels1: np.ndarray
    v1: np.ndarray
    dv1: np.ndarray

    @property
    def gamma0_mask(self) -> np.ndarray:
        return self.labels1 == int(Part.GAMMA0)

    @property
    def gamma1_mask(self) -> np.ndarray:
        return self.labels1 == int(Part.GAMMA1)


def _extend(n: int, idx: np.ndarray, vals: np.ndarray) -> np.ndarray:
    out = np.zeros(n, dtype=complex)
    out[idx] = vals
    return out


def boundary_traces(densities: DensitySet, config: ScatteringConfig,
                    offset: bool = False) -> Traces:
    """Traces of ``u`` and ``v`` at the nodes, or at parameter-grid midpoints."""
    s0, s1 = config.surface_S0, config.surface_S1
    g0, g1 = config.gamma0, config.gamma1
    sizes = (s0.size, s0.size, g0.size, g1.size)
    got = tuple(len(a) for a in (densities.psi, densities.phi, densities.chi, densities.varphi))
    if got != sizes:
        raise DimensionError(f"density block sizes {got} do not match configuration {sizes}")
    ops = _offset_ops(config) if offset else _node_ops(config)
    k0, k1, l0, eta = config.k0, config.k1, config.lambda0, config.eta
    psi, phi = densities.psi, densities.phi
    chi_e = _extend(s1.size, g0, densities.chi)
    vph_e = _extend(s1.size, g1, densities.varphi)
    s2 = _s2(config, densities.varphi) if g1.size else np.zeros(0)
    s2_e = _extend(s1.size, g1, s2)
    psi_t, phi_t = ops.interp0 @ psi, ops.interp0 @ phi
    o0, x01 = ops.on0, ops.x01
    same = k0 == k1

    T0psi = ops.maue0(psi)
    T1psi = T0psi if same else T0psi - o0["Tdiff"] @ psi
    u = l0 * (o0[("K", k0)] @ psi + 0.5 * psi_t) + o0[("S", k0)] @ phi
    du = l0 * T0psi + o0[("Kprime", k0)] @ phi - 0.5 * phi_t
    v = (-0.5 * psi_t + o0[("K", k1)] @ psi + o0[("S", k1)] @ phi
         + x01["K"] @ chi_e - 1j * eta * (x01["S"] @ chi_e)
         + x01["S"] @ vph_e + 1j * eta * (x01["K"] @ s2_e))
    dv = (0.5 * phi_t + T1psi + o0[("Kprime", k1)] @ phi
          + x01["T"] @ chi_e - 1j * eta * (x01["Kprime"] @ chi_e)
          + x01["Kprime"] @ vph_e + 1j * eta * (x01["T"] @ s2_e))

    o1, x10 = ops.on1, ops.x10
    chi_t = ops.interp1 @ chi_e
    s2_t = ops.laplace1 @ (operator_bank(config).laplace_g1 @ densities.varphi) if g1.size \
        else np.zeros(len(ops.points1))
    v1 = (x10["K"] @ psi + x10["S"] @ phi + o1["K"] @ chi_e - 1j * eta * (o1["S"] @ chi_e)
          + 0.5 * chi_t + o1["S"] @ vph_e + 1j * eta * (o1["K"] @ s2_e + 0.5 * s2_t))
    tg1 = np.flatnonzero(ops.labels1 == int(Part.GAMMA1))
    if tg1.size:
        vph_t = (ops.interp1 @ vph_e)[tg1]
        dv1 = (x10["T"][tg1] @ psi + x10["Kprime"][tg1] @ phi + ops.t10 @ densities.chi
               - 1j * eta * (o1["Kprime"][tg1] @ chi_e) + o1["Kprime"][tg1] @ vph_e
               - 0.5 * vph_t + 1j * eta * ops.maue1(s2_e))
    else:
        dv1 = np.zeros(0, dtype=complex)
    return Traces(ops.points0, ops.normals0, u, du, v, dv, ops.points1, ops.labels1, v1, dv1)
