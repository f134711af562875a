"""Block system for the layered transmission problem and its dense solve.

Unknowns are four densities: ``psi, phi`` on the interface ``S0``, ``chi`` on
the Dirichlet part ``Gamma0`` and ``varphi`` on the impedance part ``Gamma1``
of the obstacle surface ``S1``. With ``mu = 2 / (lambda0 + 1)`` the exterior
field is

    u = lambda0 D_{S0,k0} psi + S_{S0,k0} phi

and the field between the surfaces is

    v = D_{S0,k1} psi + S_{S0,k1} phi + (D - i eta S)_{Gamma0,k1} chi
        + S_{Gamma1,k1} varphi + i eta D_{Gamma1,k1}(S~^2 varphi)

where ``S~`` is the Laplace single layer over ``Gamma1``. Taking traces
yields the four block rows assembled in :func:`build_block_operator`.
"""
from __future__ import annotations

import logging
import warnings
import weakref
from dataclasses import dataclass, field
from typing import Callable, Optional, Union

import numpy as np
import scipy.linalg as sla

from . import kernels
from .errors import (
    InvalidGeometryError,
    InvalidIncidenceError,
    InvalidInputError,
    SolverFailure,
)
from .geometry import Part, QuadSurface
from .operators import assemble_same_surface_batch, assemble_smooth, maue_apply

log = logging.getLogger(__name__)

Impedance = Union[float, Callable[[np.ndarray], np.ndarray]]


@dataclass(frozen=True, eq=False)
class ScatteringConfig:
    k0: float
    k1: float
    lambda0: float
    surface_S0: QuadSurface
    surface_S1: QuadSurface
    impedance: Impedance = 0.0
    eta: Optional[float] = None

    def __post_init__(self):
        for name in ("k0", "k1", "lambda0"):
            v = getattr(self, name)
            if not (np.isfinite(v) and v > 0):
                raise InvalidInputError(f"{name} must be positive, got {v}")
        eta = max(self.k1, 1.0) if self.eta is None else float(self.eta)
        if eta == 0 or not np.isfinite(eta):
            raise InvalidInputError("eta must be a nonzero real number")
        object.__setattr__(self, "eta", eta)
        s0, s1 = self.surface_S0, self.surface_S1
        if self.gamma0.size + self.gamma1.size != s1.size:
            raise InvalidGeometryError(
                "obstacle surface nodes must all be labelled Gamma0 or Gamma1")
        gap = s0.signed_radial_gap(s1.nodes)
        if np.any(gap >= 0):
            raise InvalidGeometryError("obstacle surface S1 must lie strictly inside S0")
        if s0.distance_to_nodes(s1.nodes).min() <= 0:
            raise InvalidGeometryError("S1 touches S0")
        lam = self.lambda_imp
        if np.any(~np.isfinite(lam)) or np.any(lam < 0):
            raise InvalidInputError("impedance must be finite and nonnegative")

    @property
    def mu(self) -> float:
        return 2.0 / (self.lambda0 + 1.0)

    @property
    def gamma0(self) -> np.ndarray:
        return self.surface_S1.indices(Part.GAMMA0)

    @property
    def gamma1(self) -> np.ndarray:
        return self.surface_S1.indices(Part.GAMMA1)

    def impedance_at(self, points: np.ndarray) -> np.ndarray:
        if callable(self.impedance):
            return np.asarray(self.impedance(points), dtype=float).reshape(len(points))
        return np.full(len(points), float(self.impedance))

    @property
    def lambda_imp(self) -> np.ndarray:
        return self.impedance_at(self.surface_S1.nodes[self.gamma1])

    @property
    def lossless(self) -> bool:
        return self.gamma1.size == 0 or bool(np.all(self.lambda_imp == 0))


# ---- incidence ---------------------------------------------------------------

@dataclass(frozen=True)
class PlaneWave:
    d: np.ndarray

    def __post_init__(self):
        d = np.asarray(self.d, dtype=float).reshape(3)
        if abs(np.linalg.norm(d) - 1.0) > 1e-12:
            raise InvalidIncidenceError(f"plane-wave direction must be a unit vector, |d| = {np.linalg.norm(d)}")
        object.__setattr__(self, "d", d)

    def values(self, x, k0: float) -> np.ndarray:
        return np.exp(1j * k0 * (np.atleast_2d(x) @ self.d))

    def normal_derivative(self, x, nu, k0: float) -> np.ndarray:
        return 1j * k0 * (np.atleast_2d(nu) @ self.d) * self.values(x, k0)

    def tag(self) -> dict:
        return {"type": "plane", "d": self.d.tolist()}


@dataclass(frozen=True)
class PointSource:
    z: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "z", np.asarray(self.z, dtype=float).reshape(3))

    def values(self, x, k0: float) -> np.ndarray:
        return kernels.single_layer(np.atleast_2d(x), self.z, k0)

    def normal_derivative(self, x, nu, k0: float) -> np.ndarray:
        # d/dnu(x) of Phi(x, z)
        return kernels.adjoint_double_layer(np.atleast_2d(x), np.atleast_2d(nu), self.z, k0)

    def tag(self) -> dict:
        return {"type": "point", "z": self.z.tolist()}


IncidentField = Union[PlaneWave, PointSource]


def check_incidence(incident: IncidentField, config: ScatteringConfig) -> None:
    if isinstance(incident, PointSource):
        s0 = config.surface_S0
        if s0.signed_radial_gap(incident.z)[0] <= 0 or s0.distance_to_nodes(incident.z)[0] == 0:
            raise InvalidIncidenceError("point source must lie strictly outside S0")


# ---- densities and system ----------------------------------------------------

@dataclass(frozen=True, eq=False)
class DensitySet:
    psi: np.ndarray
    phi: np.ndarray
    chi: np.ndarray
    varphi: np.ndarray
    residual: float = 0.0
    condition: float = float("nan")

    def __post_init__(self):
        for name in ("psi", "phi", "chi", "varphi"):
            a = np.array(getattr(self, name), dtype=complex)
            a.setflags(write=False)
            object.__setattr__(self, name, a)

    def vector(self) -> np.ndarray:
        return np.concatenate([self.psi, self.phi, self.chi, self.varphi])


def zero_densities(config: ScatteringConfig) -> DensitySet:
    n0 = config.surface_S0.size
    return DensitySet(np.zeros(n0), np.zeros(n0), np.zeros(config.gamma0.size),
                      np.zeros(config.gamma1.size))


class _Factorization:
    def __init__(self, matrix: np.ndarray):
        with warnings.catch_warnings():
            # singularity is reported below through the condition estimate
            warnings.simplefilter("ignore", sla.LinAlgWarning)
            self.lu, self.piv = sla.lu_factor(matrix, check_finite=True)
        anorm = np.abs(matrix).sum(axis=0).max()
        (gecon,) = sla.get_lapack_funcs(("gecon",), (self.lu,))
        rcond, info = gecon(self.lu, anorm, norm="1")
        self.condition = float(1.0 / rcond) if rcond > 0 else float("inf")
        log.info("block system: N=%d, condition estimate %.3e", len(matrix), self.condition)
        if not np.isfinite(self.condition) or self.condition > 1e14:
            raise SolverFailure("block system numerically singular", self.condition)


@dataclass(frozen=True, eq=False)
class BlockSystem:
    matrix: np.ndarray
    block_index_map: dict
    config: ScatteringConfig
    rhs: Optional[np.ndarray] = None
    _lu: list = field(default_factory=list, repr=False)

    @property
    def size(self) -> int:
        return self.matrix.shape[0]

    def with_rhs(self, rhs: np.ndarray) -> "BlockSystem":
        return BlockSystem(self.matrix, self.block_index_map, self.config, rhs, self._lu)

    def factorization(self) -> _Factorization:
        if not self._lu:
            self._lu.append(_Factorization(self.matrix))
        return self._lu[0]

    def split(self, U: np.ndarray) -> tuple:
        m = self.block_index_map
        return tuple(U[m[name]] for name in ("psi", "phi", "chi", "varphi"))


# ---- operator bank -----------------------------------------------------------

@dataclass(eq=False)
class OperatorBank:
    """Every matrix the block rows and the traces need, with rows at the nodes.

    ``on0`` and ``on1`` hold same-surface operators on S0 and S1; ``x01``
    maps S1 densities to S0 targets and ``x10`` maps S0 densities to S1 targets.
    """

    on0: dict
    on1: dict
    x01: dict
    x10: dict
    laplace_g1: np.ndarray
    t_gamma10: np.ndarray


_BANKS: "weakref.WeakKeyDictionary[ScatteringConfig, OperatorBank]" = weakref.WeakKeyDictionary()


def _cross(src: QuadSurface, tgt_pts, tgt_nrm, k: float) -> dict:
    return {kind: assemble_smooth(kind, k, src, tgt_pts, tgt_nrm)
            for kind in ("S", "K", "Kprime", "T")}


def operator_bank(config: ScatteringConfig) -> OperatorBank:
    if config in _BANKS:
        return _BANKS[config]
    s0, s1 = config.surface_S0, config.surface_S1
    k0, k1 = config.k0, config.k1
    specs = [("S", k0), ("K", k0), ("Kprime", k0)]
    if k0 != k1:
        specs += [("S", k1), ("K", k1), ("Kprime", k1), ("Tdiff", k0, k1)]
    mats = assemble_same_surface_batch(s0, specs)
    on0 = {("S", k0): mats[0], ("K", k0): mats[1], ("Kprime", k0): mats[2]}
    if k0 != k1:
        on0.update({("S", k1): mats[3], ("K", k1): mats[4], ("Kprime", k1): mats[5],
                    "Tdiff": mats[6]})
    else:
        on0["Tdiff"] = None
    g0, g1 = config.gamma0, config.gamma1
    s1_specs = [("S", k1), ("K", k1), ("Kprime", k1)]
    if g1.size:
        s1_specs.append(("LaplaceS", 0.0))
    mats = assemble_same_surface_batch(s1, s1_specs)
    on1 = dict(zip(("S", "K", "Kprime"), mats[:3]))
    lap = mats[3][np.ix_(g1, g1)] if g1.size else np.zeros((0, 0))
    x01 = _cross(s1, s0.nodes, s0.normals, k1)
    x10 = _cross(s0, s1.nodes, s1.normals, k1)
    if g0.size and g1.size:
        t10 = assemble_smooth("T", k1, s1, s1.nodes[g1], s1.normals[g1], g0)
    else:
        t10 = np.zeros((g1.size, g0.size))
    bank = OperatorBank(on0, on1, x01, x10, lap, t10)
    _BANKS[config] = bank
    return bank


def _s_tilde_squared(bank: OperatorBank) -> np.ndarray:
    return bank.laplace_g1 @ bank.laplace_g1


def build_block_operator(config: ScatteringConfig) -> BlockSystem:
    """Assemble ``I + A``; empty boundary parts drop their rows and columns."""
    bank = operator_bank(config)
    s1 = config.surface_S1
    n0 = config.surface_S0.size
    g0, g1 = config.gamma0, config.gamma1
    m0, m1 = g0.size, g1.size
    k0, k1, l0, mu, eta = config.k0, config.k1, config.lambda0, config.mu, config.eta
    N = 2 * n0 + m0 + m1
    P = slice(0, n0)
    F = slice(n0, 2 * n0)
    C = slice(2 * n0, 2 * n0 + m0)
    H = slice(2 * n0 + m0, N)
    A = np.zeros((N, N), dtype=complex)
    o0, o1, x01, x10 = bank.on0, bank.on1, bank.x01, bank.x10
    same = k0 == k1
    S2 = _s_tilde_squared(bank)

    # row psi: mu (u - v) on S0
    A[P, P] = mu * (l0 * o0[("K", k0)] - o0[("K", k1)])
    if not same:
        A[P, F] = mu * (o0[("S", k0)] - o0[("S", k1)])
    A[P, C] = -mu * (x01["K"][:, g0] - 1j * eta * x01["S"][:, g0])
    A[P, H] = -mu * (x01["S"][:, g1] + 1j * eta * x01["K"][:, g1] @ S2)

    # row phi: -mu (du/dnu - lambda0 dv/dnu) on S0
    if not same:
        A[F, P] = -mu * l0 * o0["Tdiff"]
    A[F, F] = -mu * (o0[("Kprime", k0)] - l0 * o0[("Kprime", k1)])
    A[F, C] = mu * l0 * (x01["T"][:, g0] - 1j * eta * x01["Kprime"][:, g0])
    A[F, H] = mu * l0 * (x01["Kprime"][:, g1] + 1j * eta * x01["T"][:, g1] @ S2)

    # row chi: 2 v on Gamma0
    if m0:
        A[C, P] = 2 * x10["K"][g0]
        A[C, F] = 2 * x10["S"][g0]
        A[C, C] = 2 * (o1["K"][np.ix_(g0, g0)] - 1j * eta * o1["S"][np.ix_(g0, g0)])
        A[C, H] = 2 * (o1["S"][np.ix_(g0, g1)] + 1j * eta * o1["K"][np.ix_(g0, g1)] @ S2)

    # row varphi: -2 (dv/dnu + i lambda v) on Gamma1
    if m1:
        lam = config.lambda_imp[:, None]
        Y = np.zeros((s1.size, m1), dtype=complex)
        Y[g1] = S2
        TS2 = maue_apply(s1, k1, o1["S"], Y)[g1]
        A[H, P] = -2 * (x10["T"][g1] + 1j * lam * x10["K"][g1])
        A[H, F] = -2 * (x10["Kprime"][g1] + 1j * lam * x10["S"][g1])
        A[H, C] = -2 * (bank.t_gamma10 - 1j * eta * o1["Kprime"][np.ix_(g1, g0)]
                        + 1j * lam * o1["K"][np.ix_(g1, g0)] + eta * lam * o1["S"][np.ix_(g1, g0)])
        A[H, H] = -2 * (o1["Kprime"][np.ix_(g1, g1)] + 1j * eta * TS2
                        + 1j * lam * o1["S"][np.ix_(g1, g1)]
                        - eta * lam * o1["K"][np.ix_(g1, g1)] @ S2
                        - 0.5 * eta * lam * S2)

    A[np.diag_indices(N)] += 1.0
    index_map = {"psi": P, "phi": F, "chi": C, "varphi": H}
    return BlockSystem(A, index_map, config)


def assemble_rhs(config: ScatteringConfig, f: np.ndarray, g: np.ndarray,
                 dirichlet: Optional[np.ndarray] = None,
                 impedance: Optional[np.ndarray] = None) -> np.ndarray:
    """Right-hand side for general boundary data.

    ``u - v = f`` and ``du/dnu - lambda0 dv/dnu = g`` on S0, ``v = dirichlet`` on
    Gamma0 and ``dv/dnu + i lambda v = impedance`` on Gamma1 (both default to zero).
    """
    mu = config.mu
    n0 = config.surface_S0.size
    m0, m1 = config.gamma0.size, config.gamma1.size
    d = np.zeros(m0) if dirichlet is None else np.asarray(dirichlet)
    im = np.zeros(m1) if impedance is None else np.asarray(impedance)
    if len(f) != n0 or len(g) != n0 or len(d) != m0 or len(im) != m1:
        raise InvalidInputError("boundary data lengths do not match the configuration")
    return np.concatenate([mu * np.asarray(f), -mu * np.asarray(g), 2.0 * d, -2.0 * im]).astype(complex)


def build_rhs(incident: IncidentField, config: ScatteringConfig) -> np.ndarray:
    """``(mu f, -mu g, 0, 0)`` with ``f = -u^i`` and ``g = -du^i/dnu`` on S0."""
    check_incidence(incident, config)
    s0 = config.surface_S0
    f = -incident.values(s0.nodes, config.k0)
    g = -incident.normal_derivative(s0.nodes, s0.normals, config.k0)
    return assemble_rhs(config, f, g)


def _solve(system: BlockSystem, R: np.ndarray):
    fac = system.factorization()
    U = sla.lu_solve((fac.lu, fac.piv), R)
    res = system.matrix @ U - R
    scale = np.abs(R).max(axis=0)
    rel = np.where(scale > 0, np.abs(res).max(axis=0) / np.where(scale > 0, scale, 1.0), 0.0)
    if np.any(rel > 1e-10):
        raise SolverFailure(f"solve residual {rel.max():.2e} exceeds 1e-10", fac.condition)
    return U, rel, fac.condition


def solve_densities(system: BlockSystem, rhs: Optional[np.ndarray] = None) -> DensitySet:
    R = system.rhs if rhs is None else rhs
    if R is None:
        raise InvalidInputError("block system has no right-hand side")
    R = np.asarray(R, dtype=complex)
    if R.shape != (system.size,):
        raise InvalidInputError(f"rhs has shape {R.shape}, expected ({system.size},)")
    U, rel, cond = _solve(system, R)
    return DensitySet(*system.split(U), residual=float(rel), condition=cond)


def solve_many(system: BlockSystem, rhs: np.ndarray) -> list[DensitySet]:
    """Several right-hand sides (columns) against one factorization."""
    R = np.asarray(rhs, dtype=complex)
    U, rel, cond = _solve(system, R)
    return [DensitySet(*system.split(U[:, i]), residual=float(rel[i]), condition=cond)
            for i in range(U.shape[1])]


def solve_incident(config: ScatteringConfig, incident: IncidentField,
                   system: Optional[BlockSystem] = None) -> DensitySet:
    system = system or build_block_operator(config)
    return solve_densities(system, build_rhs(incident, config))
