import math

import numpy as np
import pytest

from qlslab.fields import (Field, ModelParams, DomainTruncationError,
                           line_grid, radial_grid, sphere_area,
                           laplacian, gradient, integrate,
                           save_field, load_field)


def test_sphere_area_values():
    assert sphere_area(1) == pytest.approx(2.0)
    assert sphere_area(2) == pytest.approx(2 * math.pi)
    assert sphere_area(3) == pytest.approx(4 * math.pi)


def test_grid_validation():
    with pytest.raises(ValueError):
        line_grid(h=0.5, R=2.0)  # fewer than 16 cells
    with pytest.raises(ValueError):
        line_grid(h=-0.1)
    with pytest.raises(ValueError):
        radial_grid(0)
    g = line_grid(h=0.02, R=30.0)
    assert g.n == 2 * g.M + 1
    assert g.M * g.h == pytest.approx(g.R)


def test_params_validation():
    with pytest.raises(ValueError):
        ModelParams(N=1, p=1.0)
    with pytest.raises(ValueError):
        ModelParams(N=3, p=11.1)  # (3N+2)/(N-2) = 11 for N = 3
    with pytest.raises(ValueError):
        ModelParams(N=1, p=3.0, omega=-1.0)
    p = ModelParams(N=2, p=4.0, omega=2.0)
    assert p.mass_critical_p == pytest.approx(3.0)
    assert p.quasilinear_critical_p == pytest.approx(5.0)


def test_field_length_check():
    g = line_grid(h=0.1, R=5.0)
    with pytest.raises(ValueError):
        Field(g, np.zeros(g.n - 1))


def test_laplacian_constant_and_quadratic():
    g = line_grid(h=0.05, R=10.0)
    inner = slice(2, -2)
    const = laplacian(Field(g, np.ones(g.n))).values
    assert np.max(np.abs(const[inner])) == 0.0
    quad = laplacian(Field(g, g.x ** 2)).values
    assert np.max(np.abs(quad[inner] - 2.0)) < 1e-9


def test_laplacian_radial_analytic():
    # lap of exp(-r^2) in 3-D is (4 r^2 - 6) exp(-r^2)
    errs = []
    for h in (0.02, 0.01):
        g = radial_grid(3, h=h, R=20.0)
        got = laplacian(Field(g, np.exp(-g.x ** 2))).values
        want = (4 * g.x ** 2 - 6) * np.exp(-g.x ** 2)
        errs.append(np.max(np.abs(got[:-1] - want[:-1])))
    assert errs[0] < 3e-3
    assert errs[0] / errs[1] > 3.5  # observed order ~2


def test_laplacian_boundary_rejection():
    g = line_grid(h=0.05, R=5.0)
    f = Field(g, np.exp(-g.x ** 2) + 0.5)
    with pytest.raises(DomainTruncationError):
        laplacian(f, boundary_tol=1e-6)
    laplacian(f)  # no tolerance: fine


def test_gradient_linear_and_sine():
    g = line_grid(h=0.01, R=10.0)
    lin = gradient(Field(g, g.x)).values
    assert np.max(np.abs(lin - 1.0)) < 1e-12
    sin = gradient(Field(g, np.sin(g.x))).values
    inner = slice(1, -1)
    assert np.max(np.abs(sin[inner] - np.cos(g.x)[inner])) <= 1e-4
    zero = gradient(Field(g, np.full(g.n, 3.7))).values
    assert np.max(np.abs(zero)) == 0.0


def test_integrate_gaussian_line():
    g = line_grid(h=0.02, R=10.0)
    val = integrate(Field(g, np.exp(-2 * g.x ** 2)))
    assert val == pytest.approx(math.sqrt(math.pi / 2), abs=1e-6)
    assert integrate(Field(g, np.zeros(g.n))) == 0.0


def test_integrate_radial_exponential():
    g = radial_grid(3, h=0.02, R=30.0)
    val = integrate(Field(g, np.exp(-g.x)))
    assert val == pytest.approx(8 * math.pi, abs=1e-4)


def test_integrate_linear_positive():
    rng = np.random.default_rng(3)
    g = line_grid(h=0.05, R=8.0)
    f1 = rng.standard_normal(g.n)
    f2 = rng.standard_normal(g.n)
    a, b = 1.7, -0.4
    lhs = integrate(a * f1 + b * f2, g)
    rhs = a * integrate(f1, g) + b * integrate(f2, g)
    assert lhs == pytest.approx(rhs, rel=1e-12)
    assert integrate(np.abs(f1), g) >= 0.0
    with pytest.raises(TypeError):
        integrate(Field(g, (1 + 1j) * np.ones(g.n)))


def test_integration_by_parts_refines():
    gaps = []
    for h in (0.04, 0.02, 0.01):
        g = line_grid(h=h, R=10.0)
        f = np.exp(-g.x ** 2)
        w = np.exp(-0.5 * g.x ** 2) * np.cos(g.x)
        lhs = integrate(f * g.apply_laplacian(w), g)
        rhs = -integrate(np.gradient(f, h) * np.gradient(w, h), g)
        gaps.append(abs(lhs - rhs))
    assert gaps[1] < gaps[0]
    assert gaps[2] < gaps[1]


def test_stencil_convergence_order():
    errs = []
    for h in (0.04, 0.02):
        g = line_grid(h=h, R=10.0)
        lap = g.apply_laplacian(np.sin(g.x))
        inner = slice(5, -5)
        errs.append(np.max(np.abs(lap[inner] + np.sin(g.x)[inner])))
    assert errs[0] / errs[1] > 3.5


def test_snapshot_roundtrip_bit_exact(tmp_path):
    rng = np.random.default_rng(9)
    g = line_grid(h=0.07, R=7.0)
    vals = rng.standard_normal(g.n) + 1j * rng.standard_normal(g.n)
    f = Field(g, vals)
    path = tmp_path / "snap.csv"
    save_field(path, f)
    back = load_field(path)
    assert back.grid.kind == "line"
    assert back.grid.h == g.h and back.grid.R == g.R
    assert np.array_equal(back.values, vals)
    assert np.array_equal(back.grid.x, g.x)


def test_snapshot_roundtrip_radial_real(tmp_path):
    g = radial_grid(3, h=0.05, R=6.0)
    f = Field(g, np.exp(-g.x))
    path = tmp_path / "snap_r.csv"
    save_field(path, f)
    back = load_field(path)
    assert back.grid.kind == "radial" and back.grid.dim == 3
    assert not back.is_complex
    assert np.array_equal(back.values, f.values)


def test_snapshot_header_required(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("1,2,3\n")
    with pytest.raises(ValueError):
        load_field(path)


def test_membership_check():
    g = line_grid(h=0.05, R=5.0)
    bad = np.ones(g.n)
    bad[3] = np.inf
    with pytest.raises(ValueError):
        Field(g, bad).check_membership()
