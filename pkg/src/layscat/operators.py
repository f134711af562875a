"""Dense Nystrom matrices for the boundary integral operators.

Same-surface operators with weakly singular kernels use pole-rotation
quadrature: for every target the parameter sphere is rotated so the target
sits at the north pole, a Gauss (polar) by trapezoid (azimuth) rule is laid
over the rotated sphere, and the density is evaluated there through its
spherical-harmonic hyperinterpolant. The ``sin`` factor of the area element
cancels the ``1/|x - y|`` singularity, so the integrand is smooth in the
rotated coordinates.

Targets sharing a polar angle differ by an azimuthal rotation, which acts on
harmonic coefficients as a phase, so harmonic tables are built once per ring.

Hypersingular operators are never discretized bare on a surface. Only the
wavenumber difference (weakly singular) and the Maue form composed with a
smoothing operator are available there.
"""
from __future__ import annotations

import weakref
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np

from . import kernels, sph
from .errors import (
    DegenerateDifferenceError,
    UnsupportedKernelError,
    UnsupportedOperationError,
)
from .geometry import Part, QuadSurface

KINDS = ("S", "K", "Kprime", "T", "Tdiff", "TcomposedMaue", "LaplaceS")


@dataclass(frozen=True)
class KernelParams:
    k: float
    src_surface: QuadSurface
    tgt_surface: QuadSurface
    src_part: Optional[Part] = None
    tgt_part: Optional[Part] = None

    @property
    def same_surface(self) -> bool:
        return self.src_surface is self.tgt_surface


@dataclass(frozen=True)
class OperatorMatrix:
    entries: np.ndarray
    kind: str
    quadrature_order: int
    k: float = 0.0

    @property
    def shape(self):
        return self.entries.shape

    def __matmul__(self, other):
        if isinstance(other, OperatorMatrix):
            other = other.entries
        return self.entries @ other

    def square(self) -> np.ndarray:
        return self.entries @ self.entries


# ---- pole-rotation quadrature ---------------------------------------------

def default_rotated_order(surface: QuadSurface) -> int:
    return surface.n_polar + 4


@dataclass(frozen=True)
class RotatedRule:
    xi: np.ndarray  # (M, 3) points on the rotated unit sphere
    weights: np.ndarray  # (M,), includes sin(theta')
    order: int


def rotated_rule(order: int) -> RotatedRule:
    t, w = np.polynomial.legendre.leggauss(order)
    th = 0.5 * np.pi * (t + 1.0)
    wt = 0.5 * np.pi * w * np.sin(th)
    n_phi = 2 * order
    ph = 2.0 * np.pi * np.arange(n_phi) / n_phi
    T, P = np.meshgrid(th, ph, indexing="ij")
    xi = np.stack([np.sin(T) * np.cos(P), np.sin(T) * np.sin(P), np.cos(T)], axis=-1)
    W = np.repeat(wt, n_phi) * (2.0 * np.pi / n_phi)
    return RotatedRule(xi.reshape(-1, 3), W, order)


def _angles(v):
    return np.arctan2(np.hypot(v[..., 0], v[..., 1]), v[..., 2]), np.arctan2(v[..., 1], v[..., 0])


class SingularQuadrature:
    """Pole-rotation quadrature bound to one surface.

    ``analysis`` maps nodal values to harmonic coefficients of degree
    ``n_polar - 1``.
    """

    def __init__(self, surface: QuadSurface, order: Optional[int] = None):
        self.surface = surface
        self.L = surface.n_polar - 1
        self.order = order or default_rotated_order(surface)
        self.rule = rotated_rule(self.order)
        self.analysis = sph.analysis_matrix(self.L, surface.theta, surface.phi,
                                            surface.sphere_weights)
        _, self._m = sph.degree_order(self.L)

    def coefficient_rows(self, kernel_fn: Callable, n_out: int, theta_t, phi_t) -> np.ndarray:
        """Rows acting on harmonic coefficients, shape ``(n_out, T, n_coef)``."""
        s = self.surface
        theta_t = np.asarray(theta_t, dtype=float)
        phi_t = np.asarray(phi_t, dtype=float)
        rings, inverse = np.unique(theta_t, return_inverse=True)
        out = np.empty((n_out, len(theta_t), sph.n_coeffs(self.L)), dtype=complex)
        W = self.rule.weights
        for a, th_a in enumerate(rings):
            idx = np.flatnonzero(inverse == a)
            c, sn = np.cos(th_a), np.sin(th_a)
            xi = self.rule.xi
            zeta = np.stack([c * xi[:, 0] + sn * xi[:, 2], xi[:, 1],
                             -sn * xi[:, 0] + c * xi[:, 2]], axis=-1)
            th_z, ph_z = _angles(zeta)
            E = sph.ylm(self.L, th_z, ph_z)
            phis = phi_t[idx]
            src = s.at(np.broadcast_to(th_z, (len(idx), len(th_z))),
                       ph_z[None, :] + phis[:, None])
            tgt = s.at(np.full(len(idx), th_a), phis)
            ks = kernel_fn(tgt.points[:, None, :], tgt.normals[:, None, :],
                           src.points, src.normals)
            phase = np.exp(1j * np.outer(phis, self._m))
            wj = W[None, :] * src.jacobian
            for q, kv in enumerate(ks):
                out[q, idx] = ((kv * wj) @ E) * phase
        return out

    def assemble(self, kernel_fn: Callable, n_out: int, theta_t=None, phi_t=None) -> np.ndarray:
        if theta_t is None:
            theta_t, phi_t = self.surface.theta, self.surface.phi
        rows = self.coefficient_rows(kernel_fn, n_out, theta_t, phi_t)
        return rows @ self.analysis

    def interpolation(self, theta_t, phi_t) -> np.ndarray:
        """Matrix evaluating the nodal hyperinterpolant at parameter points."""
        return sph.ylm(self.L, theta_t, phi_t) @ self.analysis


_QUAD_CACHE: "weakref.WeakKeyDictionary[QuadSurface, dict]" = weakref.WeakKeyDictionary()


def singular_quadrature(surface: QuadSurface, order: Optional[int] = None) -> SingularQuadrature:
    per = _QUAD_CACHE.setdefault(surface, {})
    order = order or default_rotated_order(surface)
    if order not in per:
        per[order] = SingularQuadrature(surface, order)
    return per[order]


# ---- kernel selection ------------------------------------------------------

def _kernel(kind: str, k: float, k_b: float = 0.0):
    if kind in ("S", "LaplaceS"):
        return lambda x, nx, y, ny: kernels.single_layer(x, y, k)
    if kind == "K":
        return lambda x, nx, y, ny: kernels.double_layer(x, y, ny, k)
    if kind == "Kprime":
        return lambda x, nx, y, ny: kernels.adjoint_double_layer(x, nx, y, k)
    if kind == "T":
        return lambda x, nx, y, ny: kernels.hypersingular(x, nx, y, ny, k)
    if kind == "Tdiff":
        return lambda x, nx, y, ny: kernels.hypersingular_difference(x, nx, y, ny, k, k_b)
    raise UnsupportedKernelError(f"unknown kernel kind {kind!r}")


def assemble_same_surface_batch(surface: QuadSurface, specs: Sequence[tuple],
                                order: Optional[int] = None, theta_t=None,
                                phi_t=None) -> list[np.ndarray]:
    """Assemble several same-surface operators sharing one geometry pass.

    Each spec is ``(kind, k)`` or ``("Tdiff", k_a, k_b)``. Targets default to
    the surface nodes; other parameter points give trace evaluation rows.
    """
    fns = []
    for spec in specs:
        kind = spec[0]
        if kind == "Tdiff":
            _check_diff(spec[1], spec[2])
            fns.append(_kernel(kind, spec[1], spec[2]))
        elif kind in ("S", "K", "Kprime", "LaplaceS"):
            fns.append(_kernel(kind, spec[1]))
        else:
            raise UnsupportedOperationError(f"{kind} has no same-surface weakly singular form")

    def combined(x, nx, y, ny):
        return [f(x, nx, y, ny) for f in fns]

    quad = singular_quadrature(surface, order)
    mats = quad.assemble(combined, len(fns), theta_t, phi_t)
    return list(mats)


def assemble_smooth(kind: str, k: float, src: QuadSurface, tgt_points, tgt_normals,
                    src_idx=None) -> np.ndarray:
    """Plain node quadrature for separated source and target sets."""
    if src_idx is None:
        src_idx = np.arange(src.size)
    y = src.nodes[src_idx][None, :, :]
    ny = src.normals[src_idx][None, :, :]
    x = np.asarray(tgt_points)[:, None, :]
    nx = np.asarray(tgt_normals)[:, None, :]
    vals = _kernel(kind, k)(x, nx, y, ny)
    return vals * src.weights[src_idx][None, :]


def _rows_cols(params: KernelParams):
    tgt = params.tgt_surface
    src = params.src_surface
    rows = np.arange(tgt.size) if params.tgt_part is None else tgt.indices(params.tgt_part)
    cols = np.arange(src.size) if params.src_part is None else src.indices(params.src_part)
    return rows, cols


def _check_k(kind: str, k: float):
    if k < 0:
        raise UnsupportedKernelError(f"negative wavenumber {k}")
    if k == 0 and kind != "S":
        raise UnsupportedKernelError(f"k = 0 only supported for single-layer assembly, not {kind}")


def assemble_layer(kind: str, params: KernelParams, order: Optional[int] = None) -> OperatorMatrix:
    """Single-layer ``S``, double-layer ``K`` or normal-derivative ``Kprime``."""
    if kind not in ("S", "K", "Kprime"):
        raise UnsupportedKernelError(f"assemble_layer handles S, K, Kprime; got {kind!r}")
    _check_k(kind, params.k)
    rows, cols = _rows_cols(params)
    if params.same_surface:
        (full,) = assemble_same_surface_batch(params.src_surface, [(kind, params.k)], order)
        entries = full[np.ix_(rows, cols)]
        q = singular_quadrature(params.src_surface, order).order
    else:
        tgt = params.tgt_surface
        entries = assemble_smooth(kind, params.k, params.src_surface, tgt.nodes[rows],
                                  tgt.normals[rows], cols)
        q = params.src_surface.n_polar
    return OperatorMatrix(entries, kind, q, params.k)


def assemble_laplace_single(surface: QuadSurface, src_part: Optional[Part] = None,
                            tgt: Optional[QuadSurface] = None,
                            order: Optional[int] = None) -> OperatorMatrix:
    """Laplace single layer over ``src_part`` of ``surface`` (k = 0 exactly).

    Targets default to the same part of the same surface, which makes the
    matrix square so that ``.square()`` gives the discrete ``S~^2``.
    """
    if tgt is None or tgt is surface:
        params = KernelParams(0.0, surface, surface, src_part, src_part)
        (full,) = assemble_same_surface_batch(surface, [("LaplaceS", 0.0)], order)
        rows, cols = _rows_cols(params)
        entries = full[np.ix_(rows, cols)]
        q = singular_quadrature(surface, order).order
    else:
        cols = np.arange(surface.size) if src_part is None else surface.indices(src_part)
        entries = assemble_smooth("S", 0.0, surface, tgt.nodes, tgt.normals, cols)
        q = surface.n_polar
    return OperatorMatrix(entries, "LaplaceS", q, 0.0)


def _check_diff(k_a, k_b):
    if k_a == k_b:
        raise DegenerateDifferenceError(
            "hypersingular difference with equal wavenumbers; the caller must drop the block")
    if k_a < 0 or k_b < 0:
        raise UnsupportedKernelError("wavenumbers must be nonnegative")


def assemble_hyper_diff(k_a: float, k_b: float, surface: QuadSurface,
                        order: Optional[int] = None) -> OperatorMatrix:
    """``T_{k_a} - T_{k_b}`` on one surface as a weakly singular operator."""
    _check_diff(k_a, k_b)
    (m,) = assemble_same_surface_batch(surface, [("Tdiff", k_a, k_b)], order)
    return OperatorMatrix(m, "Tdiff", singular_quadrature(surface, order).order, k_a)


# ---- Maue regularization ---------------------------------------------------

def surface_gradient_matrices(surface: QuadSurface, theta_t=None, phi_t=None) -> np.ndarray:
    """``G[c] @ f`` is the c-th Cartesian component of the spectral surface gradient.

    Rows sit at the nodes unless target parameters are given.
    """
    if theta_t is None and "grad" in _QUAD_CACHE.setdefault(surface, {}):
        return _QUAD_CACHE[surface]["grad"]
    quad = singular_quadrature(surface)
    nodal = theta_t is None
    if nodal:
        theta_t, phi_t = surface.theta, surface.phi
        t1, t2 = surface.t_theta, surface.t_phi
    else:
        sp = surface.at(theta_t, phi_t)
        t1, t2 = sp.t_theta, sp.t_phi
    _, Yt, Yp = sph.ylm_with_derivatives(quad.L, theta_t, phi_t)
    Dt = Yt @ quad.analysis
    Dp = Yp @ quad.analysis
    g11 = (t1 * t1).sum(-1)
    g12 = (t1 * t2).sum(-1)
    g22 = (t2 * t2).sum(-1)
    det = g11 * g22 - g12 * g12
    i11, i12, i22 = g22 / det, -g12 / det, g11 / det
    a = i11[:, None] * t1 + i12[:, None] * t2  # coefficient of d/dtheta
    b = i12[:, None] * t1 + i22[:, None] * t2  # coefficient of (1/sin) d/dphi
    G = np.stack([a[:, c, None] * Dt + b[:, c, None] * Dp for c in range(3)])
    if nodal:
        _QUAD_CACHE[surface]["grad"] = G
    return G


def _cross_rows(u, v):
    """Cross product of nodal diagonals ``u`` (N,3) with row-stacked matrices ``v`` (3,N,M)."""
    return np.stack([
        u[:, 1, None] * v[2] - u[:, 2, None] * v[1],
        u[:, 2, None] * v[0] - u[:, 0, None] * v[2],
        u[:, 0, None] * v[1] - u[:, 1, None] * v[0],
    ])


def maue_apply(surface: QuadSurface, k: float, single: np.ndarray, Y: np.ndarray,
               grad: Optional[np.ndarray] = None, target=None) -> np.ndarray:
    """``T_k @ Y`` on a full surface through Maue's identity.

    ``T psi = Div_S[(S_k (nu x Grad_S psi)) x nu] + k^2 nu . S_k(nu psi)``,
    everything weakly singular; ``single`` is the assembled ``S_k``.
    ``target = (theta_t, phi_t, single_t)`` evaluates the result at other
    parameter points, with ``single_t`` the ``S_k`` rows there.
    """
    if grad is None:
        grad = surface_gradient_matrices(surface)
    nu = surface.normals
    GY = np.stack([g @ Y for g in grad])
    W = _cross_rows(nu, GY)
    A = np.stack([single @ w for w in W])
    # (A x nu)_c, written as -(nu x A)_c
    B = -_cross_rows(nu, A)
    if target is None:
        grad_t, single_t, nu_t = grad, single, nu
    else:
        theta_t, phi_t, single_t = target
        grad_t = surface_gradient_matrices(surface, theta_t, phi_t)
        nu_t = surface.at(theta_t, phi_t).normals
    out = sum(grad_t[c] @ B[c] for c in range(3))
    for c in range(3):
        out = out + k * k * nu_t[:, c, None] * (single_t @ (nu[:, c, None] * Y))
    return out


def assemble_T_regularized(params: KernelParams, smooth_postcompose=None,
                           single: Optional[np.ndarray] = None) -> OperatorMatrix:
    """Hypersingular operator over a boundary part, optionally composed with ``S~^2``.

    Cross-surface: direct quadrature (then composed if given). Same surface:
    Maue form applied to the composed density; a bare same-surface request is
    refused. ``single`` may pass a pre-assembled full-surface ``S_k``.
    """
    smooth = smooth_postcompose
    if isinstance(smooth, OperatorMatrix):
        smooth = smooth.entries
    rows, cols = _rows_cols(params)
    src = params.src_surface
    if not params.same_surface or (params.src_part is not None and params.tgt_part is not None
                                   and params.src_part != params.tgt_part):
        tgt = params.tgt_surface
        T = assemble_smooth("T", params.k, src, tgt.nodes[rows], tgt.normals[rows], cols)
        entries = T if smooth is None else T @ smooth
        kind = "T"
    else:
        if smooth is None:
            raise UnsupportedOperationError(
                "bare same-surface hypersingular operator; compose with a smoothing operator")
        if single is None:
            (single,) = assemble_same_surface_batch(src, [("S", params.k)])
        Y = np.zeros((src.size, smooth.shape[1]), dtype=complex)
        Y[cols] = smooth
        entries = maue_apply(src, params.k, single, Y)[rows]
        kind = "TcomposedMaue"
    return OperatorMatrix(entries, kind, src.n_polar, params.k)
