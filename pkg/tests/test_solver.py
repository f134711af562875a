import numpy as np
import pytest

from layscat import kernels, oracle, sph
from layscat.errors import InvalidGeometryError, InvalidIncidenceError, InvalidInputError, SolverFailure
from layscat.fields import direction_grid, eval_u, eval_v, far_field
from layscat.geometry import make_sphere, partition_boundary
from layscat.solver import (
    PlaneWave,
    PointSource,
    ScatteringConfig,
    assemble_rhs,
    build_block_operator,
    build_rhs,
    solve_densities,
    solve_many,
)

from conftest import sphere_config

STAR = {(0, 0): np.sqrt(4 * np.pi), (2, 0): 0.15, (3, 2): 0.05}


@pytest.fixture(scope="module")
def soft12():
    c = sphere_config(12)
    return c, build_block_operator(c)


def test_config_validation():
    s0 = make_sphere((0, 0, 0), 1.0, 8, 16)
    s1 = partition_boundary(make_sphere((0, 0, 0), 0.4, 8, 16), "all-dirichlet")
    for kw in ({"k0": -1.0}, {"k1": 0.0}, {"lambda0": 0.0}):
        args = dict(k0=2.0, k1=3.0, lambda0=0.5) | kw
        with pytest.raises(InvalidInputError):
            ScatteringConfig(surface_S0=s0, surface_S1=s1, **args)
    with pytest.raises(InvalidInputError):
        ScatteringConfig(2.0, 3.0, 0.5, s0, s1, eta=0.0)
    with pytest.raises(InvalidInputError):
        ScatteringConfig(2.0, 3.0, 0.5, s0, partition_boundary(s1, "all-impedance"), impedance=-1.0)
    big = partition_boundary(make_sphere((0, 0, 0), 1.2, 8, 16), "all-dirichlet")
    with pytest.raises(InvalidGeometryError):
        ScatteringConfig(2.0, 3.0, 0.5, s0, big)
    c = ScatteringConfig(2.0, 3.0, 1.0, s0, s1)
    assert c.mu == 1.0 and c.eta == 3.0


def test_block_structure(soft12):
    c = sphere_config(16)
    assert c.surface_S0.size == 512 and c.gamma0.size == 512
    sys = build_block_operator(c)
    assert sys.size == 1536
    assert sys.block_index_map["varphi"].stop - sys.block_index_map["varphi"].start == 0
    mixed = sphere_config(8, rule="hemisphere-z")
    m = build_block_operator(mixed)
    assert m.size == 2 * 128 + 128


def test_equal_wavenumbers_drop_difference_blocks():
    c = sphere_config(8, k0=2.0, k1=2.0, lambda0=1.0)
    sys = build_block_operator(c)
    P, F = sys.block_index_map["psi"], sys.block_index_map["phi"]
    assert np.linalg.norm(sys.matrix[P, F]) <= 1e-10
    assert np.linalg.norm(sys.matrix[F, P]) <= 1e-10


def test_rhs_examples():
    c = sphere_config(8, lambda0=0.5)
    s0 = c.surface_S0
    d = np.array([0.0, 0.0, 1.0])
    R = build_rhs(PlaneWave(d), c)
    eq = np.flatnonzero(np.abs(s0.nodes @ d) < 1e-14)
    i = int(np.argmin(np.abs(s0.nodes @ d)))
    if eq.size:
        assert abs(R[eq[0]] + c.mu) < 1e-14
    else:
        assert abs(R[i] + c.mu * np.exp(2j * s0.nodes[i] @ d)) < 1e-14
    # point source at unit distance from a node, k0 = pi
    cp = sphere_config(8, k0=np.pi)
    y = cp.surface_S0.nodes[5]
    z = y + cp.surface_S0.normals[5]
    Rp = build_rhs(PointSource(z), cp)
    assert abs(Rp[5] - (-cp.mu * (-1 / (4 * np.pi)))) < 1e-14
    n0 = s0.size
    assert np.all(R[2 * n0:] == 0) and np.all(Rp[2 * n0:] == 0)


def test_point_source_inside_rejected():
    c = sphere_config(8)
    with pytest.raises(InvalidIncidenceError):
        build_rhs(PointSource((0.0, 0.0, 0.5)), c)
    with pytest.raises(InvalidIncidenceError):
        PlaneWave((0.0, 0.0, 2.0))


def test_zero_rhs_and_linearity(soft12):
    c, sys = soft12
    zero = solve_densities(sys, np.zeros(sys.size))
    assert not np.any(zero.vector())
    R1 = build_rhs(PlaneWave((0, 0, 1.0)), c)
    R2 = build_rhs(PointSource((0.3, 2.0, 0.1)), c)
    a, b = 0.7 - 1.3j, 2.1j
    U1, U2 = (solve_densities(sys, R).vector() for R in (R1, R2))
    U = solve_densities(sys, a * R1 + b * R2).vector()
    assert np.abs(U - (a * U1 + b * U2)).max() <= 1e-12 * np.abs(U).max()
    Uc = solve_densities(sys, a * R1).vector()
    assert np.abs(Uc - a * U1).max() <= 1e-12 * np.abs(Uc).max()


def test_solve_reports(soft12):
    c, sys = soft12
    den = solve_densities(sys, build_rhs(PlaneWave((0, 0, 1.0)), c))
    assert den.residual <= 1e-10 and np.isfinite(den.condition)
    with pytest.raises(ValueError):
        den.psi[0] = 1.0
    many = solve_many(sys, np.stack([build_rhs(PlaneWave((0, 0, 1.0)), c)] * 2, axis=1))
    assert np.array_equal(many[0].psi, den.psi)
    with pytest.raises(InvalidInputError):
        solve_densities(sys)


def test_singular_system_reported():
    c = sphere_config(8)
    sys = build_block_operator(c)
    broken = type(sys)(np.zeros_like(sys.matrix), sys.block_index_map, c)
    with pytest.raises(SolverFailure) as exc:
        solve_densities(broken, np.ones(sys.size))
    assert exc.value.condition is not None


@pytest.mark.parametrize("rule,imp", [("all-dirichlet", 0.0), ("all-impedance", 1.0)])
def test_oracle_agreement_n16(rule, imp):
    c = sphere_config(16, rule=rule, impedance=imp)
    den = solve_densities(build_block_operator(c), build_rhs(PlaneWave((0, 0, 1.0)), c))
    dirs, w = direction_grid(12, 24)
    ff = far_field(den, c, dirs).values
    core = "soft" if rule == "all-dirichlet" else "impedance"
    ref = oracle.far_field_values(oracle.mie_layered(c, core, lam=imp), dirs)
    assert np.sqrt(np.sum(w * abs(ff - ref) ** 2) / np.sum(w * abs(ref) ** 2)) <= 1e-5


def test_eta_independence():
    d = PlaneWave((0.0, 0.6, 0.8))
    dirs, w = direction_grid(12, 24)
    out = []
    for eta in (3.0, 6.0):
        c = sphere_config(16, rule="all-impedance", impedance=0.5)
        c = ScatteringConfig(c.k0, c.k1, c.lambda0, c.surface_S0, c.surface_S1, 0.5, eta)
        den = solve_densities(build_block_operator(c), build_rhs(d, c))
        out.append((den, far_field(den, c, dirs).values))
    (da, fa), (db, fb) = out
    assert np.sqrt(np.sum(w * abs(fa - fb) ** 2) / np.sum(w * abs(fa) ** 2)) <= 1e-6
    assert np.abs(da.varphi - db.varphi).max() > 1e-3 * np.abs(da.varphi).max()


def test_grid_stability():
    d = PlaneWave((0.0, 0.0, 1.0))
    psis = {}
    for n in (16, 24):
        c = sphere_config(n)
        psis[n] = (c, solve_densities(build_block_operator(c), build_rhs(d, c)).psi)
    c16, p16 = psis[16]
    c24, p24 = psis[24]
    s16, s24 = c16.surface_S0, c24.surface_S0
    L = 15
    coef = sph.analysis_matrix(L, s16.theta, s16.phi, s16.weights / s16.mean_radius**2) @ p16
    interp = sph.ylm(L, s24.theta, s24.phi) @ coef
    w = s24.weights
    assert np.sqrt(np.sum(w * abs(interp - p24) ** 2) / np.sum(w * abs(p24) ** 2)) <= 1e-4


def _manufactured(c):
    """Exact fields u = Phi0(., z0), v = Phi1(., z1) with z0 inside S0 and z1 inside S1."""
    z0, z1 = np.array([0.1, -0.2, 0.5]), np.array([0.05, 0.1, -0.1])
    s0, s1 = c.surface_S0, c.surface_S1
    k0, k1 = c.k0, c.k1
    u = kernels.single_layer(s0.nodes, z0, k0)
    du = kernels.adjoint_double_layer(s0.nodes, s0.normals, z0, k0)
    v = kernels.single_layer(s0.nodes, z1, k1)
    dv = kernels.adjoint_double_layer(s0.nodes, s0.normals, z1, k1)
    g0, g1 = c.gamma0, c.gamma1
    v1 = kernels.single_layer(s1.nodes, z1, k1)
    dv1 = kernels.adjoint_double_layer(s1.nodes, s1.normals, z1, k1)
    lam = c.lambda_imp
    R = assemble_rhs(c, u - v, du - c.lambda0 * dv, v1[g0], dv1[g1] + 1j * lam * v1[g1])
    return R, (lambda x: kernels.single_layer(x, z0, k0)), (lambda x: kernels.single_layer(x, z1, k1))


# v is sampled with plain node quadrature at points ~0.2 from S1, which limits its accuracy
# at n = 16; mixed partitions converge slowly because of the Gamma0/Gamma1 edge
@pytest.mark.parametrize("rule,tol_u,tol_v", [("all-dirichlet", 1e-7, 1e-4), ("all-impedance", 1e-7, 1e-4),
                                              ("hemisphere-z", 2e-2, 5e-2)])
def test_manufactured_solution_star(rule, tol_u, tol_v):
    c = sphere_config(16, rule=rule, impedance=0.7, star=STAR)
    R, u_exact, v_exact = _manufactured(c)
    den = solve_densities(build_block_operator(c), R)
    xo = np.array([[0.0, 0.0, 2.5], [1.8, -1.0, 0.3], [-3.0, 0.2, 0.1]])
    xi = np.array([[0.0, 0.0, 0.7], [0.5, 0.3, -0.2], [-0.2, -0.6, 0.1]])
    eu = np.abs(eval_u(xo, den, c) - u_exact(xo)).max() / np.abs(u_exact(xo)).max()
    ev = np.abs(eval_v(xi, den, c) - v_exact(xi)).max() / np.abs(v_exact(xi)).max()
    assert eu <= tol_u and ev <= tol_v
