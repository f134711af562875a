import mpmath as mp
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.special import spherical_jn, spherical_yn

from layscat import oracle
from layscat.errors import InvalidGeometryError, InvalidInputError
from layscat.fields import direction_grid

from conftest import sphere_config

MEDIUM = oracle.LayeredSphere(2.0, 3.0, 0.5, 1.0, 0.4)


def test_spherical_bessel_examples():
    j, dj, y, dy, h, dh = oracle.spherical_bessel(0, np.pi)
    assert abs(j) < 1e-14
    h1 = oracle.spherical_bessel(0, 1.0)[4]
    assert abs(h1 - (-1j * np.exp(1j))) < 1e-15
    x = 0.1
    # j_5(x) = x^5 / 11!! * (1 - x^2/(2*13) + x^4/(8*13*15) - ...)
    series = sum((-x * x / 2) ** m / mp.factorial(m) / mp.fac2(2 * m + 11) for m in range(8))
    exact = float(mp.mpf(x) ** 5 * series)
    assert abs(oracle.spherical_bessel(5, x)[0] - exact) <= 1e-14 * abs(exact)


@pytest.mark.parametrize("x", [0.0, -1.0])
def test_spherical_bessel_domain(x):
    with pytest.raises(InvalidInputError):
        oracle.spherical_bessel(1, x)


@settings(max_examples=50, deadline=None)
@given(st.floats(0.05, 40.0))
def test_basis_against_scipy_and_wronskian(x):
    N = 30
    B = oracle.spherical_wave_basis(N, x)
    n = np.arange(N + 1)
    j = spherical_jn(n, x)
    ok = np.abs(j) > 1e-290
    assert np.allclose(B.j[ok, 0] if B.j.ndim == 2 else B.j[ok], j[ok], rtol=1e-12, atol=0)
    w = (B.j * B.dy - B.dj * B.y).ravel()
    assert np.allclose(w, 1 / x**2, rtol=1e-10)


def test_basis_y_matches_scipy():
    x = np.array([0.3, 2.0, 15.0])
    B = oracle.spherical_wave_basis(10, x)
    for n in range(11):
        assert np.allclose(B.y[n], spherical_yn(n, x), rtol=1e-12)
        assert np.allclose(B.dy[n], spherical_yn(n, x, True), rtol=1e-12)
        assert np.allclose(B.dj[n], spherical_jn(n, x, True), rtol=1e-12, atol=1e-300)


def test_identical_media_collapse():
    c = oracle.mie_layered(oracle.LayeredSphere(2.0, 2.0, 1.0, 1.0, 0.4))
    n = np.arange(c.order + 1)
    x = 0.8
    single = -spherical_jn(n, x) / (spherical_jn(n, x) + 1j * spherical_yn(n, x))
    assert np.abs(c.a - single).max() <= 1e-12 * np.abs(single).max()
    big = np.abs(single) > 1e-30
    assert np.allclose(c.a[big], single[big], rtol=1e-12)


def test_neumann_limit():
    a0 = oracle.mie_layered(MEDIUM, "impedance", lam=0.0).a
    a8 = oracle.mie_layered(MEDIUM, "impedance", lam=1e-8).a
    assert np.abs(a0 - a8).max() <= 1e-6


def _mp_sph(n, x, kind):
    f = mp.besselj if kind == "j" else mp.bessely
    return mp.sqrt(mp.pi / (2 * x)) * f(n + mp.mpf(1) / 2, x)


def _mp_dsph(n, x, kind):
    return _mp_sph(n - 1, x, kind) - (n + 1) / x * _mp_sph(n, x, kind) if n else -_mp_sph(1, x, kind)


def _mp_coefficients(k0, k1, l0, R0, R1, N):
    out = []
    for n in range(N + 1):
        j0, dj0 = _mp_sph(n, k0 * R0, "j"), _mp_dsph(n, k0 * R0, "j")
        y0, dy0 = _mp_sph(n, k0 * R0, "y"), _mp_dsph(n, k0 * R0, "y")
        h0, dh0 = j0 + 1j * y0, dj0 + 1j * dy0
        j1, dj1 = _mp_sph(n, k1 * R0, "j"), _mp_dsph(n, k1 * R0, "j")
        y1, dy1 = _mp_sph(n, k1 * R0, "y"), _mp_dsph(n, k1 * R0, "y")
        jc, yc = _mp_sph(n, k1 * R1, "j"), _mp_sph(n, k1 * R1, "y")
        A = mp.matrix([[h0, -j1, -y1],
                       [k0 * dh0, -l0 * k1 * dj1, -l0 * k1 * dy1],
                       [0, jc, yc]])
        rhs = mp.matrix([-j0, -k0 * dj0, 0])
        # Cramer's rule; plain pivoting trips over the 1e40 column spread at high n
        det = mp.det(A)
        sol = []
        for col in range(3):
            Ac = A.copy()
            for row in range(3):
                Ac[row, col] = rhs[row]
            sol.append(complex(mp.det(Ac) / det))
        out.append(sol)
    return np.array(out)


def test_extended_precision_reimplementation():
    mp.mp.dps = 80
    k0, R0 = 2.0, 1.0
    k1, l0, R1 = 1.5 * k0, 0.5, 0.4 * R0
    c = oracle.mie_layered(oracle.LayeredSphere(k0, k1, l0, R0, R1))
    ref = _mp_coefficients(mp.mpf(k0), mp.mpf(k1), mp.mpf(l0), mp.mpf(R0), mp.mpf(R1), c.order)
    for col, got in enumerate((c.a, c.b, c.c)):
        assert np.allclose(got, ref[:, col], rtol=1e-12, atol=0)


def test_tail_decay():
    c = oracle.mie_layered(MEDIUM)
    assert c.order == oracle.default_order(2.0, 1.0)
    assert abs(c.a[-1]) / np.abs(c.a).max() <= 1e-12


def test_truncation_stability():
    dirs, _ = direction_grid(8, 16)
    f1 = oracle.far_field_values(oracle.mie_layered(MEDIUM), dirs)
    f2 = oracle.far_field_values(oracle.mie_layered(MEDIUM, N=2 * oracle.default_order(2.0, 1.0)), dirs)
    assert np.abs(f1 - f2).max() <= 1e-12 * np.abs(f1).max()


def test_zero_coefficients():
    c = oracle.mie_layered(MEDIUM)
    z = oracle.MieCoefficients(0 * c.a, 0 * c.b, 0 * c.c, MEDIUM, "soft", 0.0, c.direction)
    dirs, _ = direction_grid(4, 8)
    assert np.all(oracle.oracle_far_field(z, dirs).values == 0)


def test_axisymmetry():
    d = np.array([1.0, 2.0, 2.0]) / 3
    c = oracle.mie_layered(MEDIUM, d=d)
    e1 = np.cross(d, [0, 0, 1.0])
    e1 /= np.linalg.norm(e1)
    e2 = np.cross(d, e1)
    a = np.linspace(0, 2 * np.pi, 17)
    ring = np.cos(0.7) * d + np.sin(0.7) * (np.cos(a)[:, None] * e1 + np.sin(a)[:, None] * e2)
    v = oracle.far_field_values(c, ring)
    assert np.abs(v - v[0]).max() <= 1e-12 * abs(v[0])


@pytest.mark.parametrize("core,lam,sign", [("soft", 0.0, 0), ("impedance", 0.0, 0), ("impedance", 1.0, -1)])
def test_optical_theorem(core, lam, sign):
    c = oracle.mie_layered(MEDIUM, core, lam=lam)
    dirs, w = direction_grid(30, 60)
    ff = oracle.far_field_values(c, dirs)
    power = 2.0 / (4 * np.pi) * np.sum(w * np.abs(ff) ** 2)
    fwd = oracle.far_field_values(c, c.direction[None])[0].imag
    if sign == 0:
        assert abs(power - fwd) <= 1e-10 * abs(fwd)
    else:
        assert power - fwd < -1e-3 * abs(fwd)


def test_far_field_normalization():
    # u^s(r xhat) ~ e^{i k0 r} / r * u^inf(xhat)
    c = oracle.mie_layered(MEDIUM)
    xh = np.array([[0.0, 0.6, 0.8], [0.0, 0.0, -1.0]])
    r = 1e4
    us = oracle.oracle_scattered(c, r * xh)
    approx = us * r * np.exp(-2j * r)
    assert np.abs(approx - oracle.far_field_values(c, xh)).max() <= 1e-3 * np.abs(approx).max()


def test_interior_helmholtz_and_transmission():
    c = oracle.mie_layered(MEDIUM)
    x0 = np.array([0.2, 0.3, 0.4])
    v = oracle.oracle_interior(c, [x0])[0]

    def lap(h):
        return (sum(oracle.oracle_interior(c, [x0 + h * e])[0] + oracle.oracle_interior(c, [x0 - h * e])[0]
                    for e in np.eye(3)) - 6 * v) / h**2

    rich = (4 * lap(1e-3) - lap(2e-3)) / 3
    assert abs(rich + 9.0 * v) <= 1e-6 * 9.0 * abs(v)
    # u = v across r = R0 with u = u^i + u^s
    xh = np.array([0.6, 0.0, 0.8])
    eps = 1e-7
    u = oracle.oracle_scattered(c, [(1 + eps) * xh])[0] + np.exp(2j * (1 + eps) * 0.8)
    assert abs(u - oracle.oracle_interior(c, [(1 - eps) * xh])[0]) < 1e-5


def test_input_validation():
    with pytest.raises(InvalidGeometryError):
        oracle.LayeredSphere(2.0, 3.0, 0.5, 0.4, 1.0)
    with pytest.raises(InvalidInputError):
        oracle.mie_layered(MEDIUM, "imp")
    with pytest.raises(InvalidInputError):
        oracle.mie_layered(MEDIUM, d=(0, 0, 2))
    cfg = sphere_config(8)
    assert oracle.LayeredSphere.from_config(cfg).R1 == pytest.approx(0.4)
    star = sphere_config(8, star={(0, 0): np.sqrt(4 * np.pi), (2, 0): 0.1})
    with pytest.raises(InvalidGeometryError):
        oracle.mie_layered(star)
