import logging

import numpy as np
import pytest

from layscat import oracle
from layscat.errors import DimensionError, InvalidInputError, WrongRegionError
from layscat.fields import (
    FarField,
    boundary_traces,
    direction_grid,
    eval_u,
    eval_v,
    far_field,
    read_far_field_csv,
)
from layscat.geometry import make_sphere
from layscat.operators import assemble_smooth
from layscat.solver import DensitySet, PlaneWave, build_block_operator, build_rhs, solve_densities, zero_densities

from conftest import sphere_config

D = PlaneWave((0.0, 0.0, 1.0))


@pytest.fixture(scope="module")
def solved():
    c = sphere_config(20)
    den = solve_densities(build_block_operator(c), build_rhs(D, c))
    return c, den, oracle.mie_layered(c, "soft")


def test_zero_densities():
    c = sphere_config(8, rule="hemisphere-z")
    z = zero_densities(c)
    assert not np.any(eval_u([[0, 0, 3.0]], z, c))
    assert not np.any(eval_v([[0, 0, 0.7]], z, c))
    tr = boundary_traces(z, c)
    for a in (tr.u, tr.du, tr.v, tr.dv, tr.v1, tr.dv1):
        assert not np.any(a)
    dirs, _ = direction_grid(4, 8)
    assert not np.any(far_field(z, c, dirs).values)


def test_single_layer_constant_density():
    c = sphere_config(16)
    den = DensitySet(np.zeros(c.surface_S0.size), np.ones(c.surface_S0.size), np.zeros(c.gamma0.size), [])
    x = np.array([[0.0, 3.0, 4.0], [6.0, 0.0, -8.0]])
    fine = make_sphere((0, 0, 0), 1.0, 48, 96)
    ref = assemble_smooth("S", c.k0, fine, x, x) @ np.ones(fine.size)
    assert np.abs(eval_u(x, den, c) - ref).max() <= 1e-8 * np.abs(ref).max()


def test_wrong_region(solved):
    c, den, _ = solved
    with pytest.raises(WrongRegionError):
        eval_u([[0.0, 0.0, 0.5]], den, c)
    with pytest.raises(WrongRegionError):
        eval_v([[0.0, 0.0, 2.0]], den, c)
    with pytest.raises(WrongRegionError):
        eval_v([[0.0, 0.0, 0.1]], den, c)


def test_near_points_flagged(solved, caplog):
    c, den, _ = solved
    with caplog.at_level(logging.WARNING, logger="layscat"):
        near = 1.01 * c.surface_S0.nodes[c.surface_S0.size // 2]
        _, flags = eval_u([near, [0.0, 0.0, 3.0]], den, c, return_flags=True)
    assert flags.tolist() == [True, False]
    assert any("mesh width" in r.getMessage() for r in caplog.records)


def test_fields_against_oracle(solved):
    c, den, coeffs = solved
    dirs, _ = direction_grid(6, 12)
    xo = 5.0 * dirs
    ref = oracle.oracle_scattered(coeffs, xo)
    assert np.abs(eval_u(xo, den, c) - ref).max() <= 1e-5 * np.abs(ref).max()
    xi = 0.7 * dirs
    refv = oracle.oracle_interior(coeffs, xi)
    assert np.abs(eval_v(xi, den, c) - refv).max() <= 1e-5 * np.abs(refv).max()


def test_far_field_against_oracle(solved):
    c, den, coeffs = solved
    dirs, w = direction_grid(12, 24)
    ff = far_field(den, c, dirs, D.tag()).values
    ref = oracle.far_field_values(coeffs, dirs)
    assert np.sqrt(np.sum(w * abs(ff - ref) ** 2) / np.sum(w * abs(ref) ** 2)) <= 1e-5


def test_far_field_extrapolation(solved):
    c, den, _ = solved
    xh = np.array([[0.0, 0.0, 1.0], [0.6, 0.0, -0.8], [0.0, -1.0, 0.0]])
    def scaled(r):
        return r * np.exp(-1j * c.k0 * r) * eval_u(r * xh, den, c)

    # Richardson step removes the O(1/|x|) term of the asymptotic expansion
    approx = 2 * scaled(2e4) - scaled(1e4)
    ff = far_field(den, c, xh).values
    assert np.abs(approx - ff).max() <= 1e-4 * np.abs(ff).max()


def test_radiation_condition(solved):
    c, den, _ = solved
    xh = np.array([0.48, 0.6, 0.64])
    r, h = 1e3, 1e-3
    u = eval_u([r * xh], den, c)[0]
    du = (eval_u([(r + h) * xh], den, c)[0] - eval_u([(r - h) * xh], den, c)[0]) / (2 * h)
    assert r * abs(du - 1j * c.k0 * u) <= 1e-2 * abs(u * r)


def test_helmholtz_residual(solved):
    c, den, _ = solved
    x0 = np.array([0.3, 1.2, 0.9])
    h = 0.02
    # fourth-order five-point second derivative along each axis
    pts = [x0]
    for e in np.eye(3):
        pts += [x0 + s * h * e for s in (-2, -1, 1, 2)]
    vals = eval_u(np.array(pts), den, c)
    u0, rest = vals[0], vals[1:].reshape(3, 4)
    lap = sum((-r[0] + 16 * r[1] + 16 * r[2] - r[3] - 30 * u0) / (12 * h * h) for r in rest)
    assert abs(lap + c.k0**2 * u0) <= 1e-4 * abs(u0) * c.k0**2


def test_traces_self_consistent(solved):
    c, den, _ = solved
    tr = boundary_traces(den, c)
    ui = D.values(tr.points0, c.k0)
    assert np.abs(tr.u - tr.v + ui).max() <= 1e-6
    assert np.abs(tr.v1[tr.gamma0_mask]).max() <= 1e-5
    assert np.array_equal(tr.points0, c.surface_S0.nodes)


def test_traces_dimension_check(solved):
    c, den, _ = solved
    bad = DensitySet(den.psi[:-1], den.phi, den.chi, den.varphi)
    with pytest.raises(DimensionError):
        boundary_traces(bad, c)


def test_far_field_csv_round_trip(tmp_path, solved):
    c, den, _ = solved
    dirs, _ = direction_grid(4, 8)
    ff = far_field(den, c, dirs, D.tag())
    ff.write(tmp_path / "ff", "abc123", {"n_polar": 20})
    back = read_far_field_csv(tmp_path / "ff.csv")
    assert np.array_equal(back.values, ff.values)
    assert np.abs(back.directions - ff.directions).max() < 1e-15
    text = (tmp_path / "ff.csv").read_text().splitlines()
    assert text[0] == "theta,phi,re,im" and len(text) == 33
    assert '"config_digest": "abc123"' in (tmp_path / "ff.json").read_text()


def test_far_field_invariants():
    with pytest.raises(InvalidInputError):
        FarField([[1.0, 0.0, 0.1]], [1.0], {})
    with pytest.raises(InvalidInputError):
        FarField([[1.0, 0.0, 0.0]], [np.nan], {})
