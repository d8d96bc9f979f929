import math

import numpy as np
import pytest
from scipy.integrate import solve_ivp
from scipy.optimize import brentq

from qlslab.fields import Field, ModelParams, line_grid
from qlslab import dual
from qlslab import functionals as F


# value confirmed by direct high-order integration of the defining
# derivative sqrt(1 + 2 s^2) from 0 to 1 (see test_forward_matches_ode)
MU_ONE = 1.2712738985228156


def test_forward_basics():
    assert dual.amplitude_to_dual(0.0) == 0.0
    s = np.linspace(-3, 3, 31)
    vals = np.asarray(dual.amplitude_to_dual(s))
    assert np.allclose(vals, -vals[::-1], atol=1e-15)  # odd
    assert np.all(np.diff(vals) > 0)                   # strictly increasing
    assert np.all(np.asarray(dual.amplitude_to_dual_prime(s)) >= 1.0)
    assert dual.amplitude_to_dual(1.0) == pytest.approx(MU_ONE, abs=1e-12)


def test_forward_matches_ode():
    ode = solve_ivp(lambda t, y: [math.sqrt(1 + 2 * t * t)], (0, 5), [0.0],
                    rtol=1e-12, atol=1e-14, dense_output=True)
    pts = np.linspace(0, 5, 101)
    closed = np.asarray(dual.amplitude_to_dual(pts))
    assert np.max(np.abs(ode.sol(pts)[0] - closed)) < 1e-9


def test_inverse_roundtrip():
    assert dual.dual_to_amplitude(0.0) == 0.0
    assert dual.dual_to_amplitude(dual.amplitude_to_dual(2.0)) \
        == pytest.approx(2.0, abs=1e-10)
    s = np.linspace(-10, 10, 1000)
    defect = np.abs(np.asarray(
        dual.amplitude_to_dual(dual.dual_to_amplitude(s))) - s)
    assert np.max(defect) <= 1e-10
    # large and tiny arguments
    for s0 in (1e-12, 1e-3, 5e3, 1e8):
        r = dual.dual_to_amplitude(s0)
        assert abs(dual.amplitude_to_dual(r) - s0) <= 1e-12 * max(1.0, s0)


def test_inverse_derivative_at_zero():
    h = 1e-6
    d = (dual.dual_to_amplitude(h) - dual.dual_to_amplitude(-h)) / (2 * h)
    assert d == pytest.approx(1.0, abs=1e-6)


def test_inverse_sublinear_and_contractive():
    s = np.linspace(0.1, 50, 200)
    r = np.asarray(dual.dual_to_amplitude(s))
    assert np.all(np.abs(r) <= s)
    ratio = r / s
    assert np.all(np.diff(ratio) < 0)  # r(s)/s strictly decreasing


P = ModelParams(N=1, p=3.0, omega=1.0)


def test_nonlinearity_at_zero():
    assert dual.semilinear_rhs(0.0, P) == 0.0
    assert dual.semilinear_potential(0.0, P) == 0.0


def test_potential_derivative_is_rhs():
    h = 1e-6
    v = 0.7
    fd = (dual.semilinear_potential(v + h, P)
          - dual.semilinear_potential(v - h, P)) / (2 * h)
    assert fd == pytest.approx(dual.semilinear_rhs(v, P), rel=1e-6)


def test_rhs_linearization_slope():
    h = 1e-7
    for omega in (1.0, 4.0):
        p = ModelParams(N=1, p=3.0, omega=omega)
        slope = (dual.semilinear_rhs(h, p) - dual.semilinear_rhs(-h, p)) / (2 * h)
        assert slope == pytest.approx(-omega, rel=1e-6)
        assert dual.semilinear_rhs_prime(0.0, p) == pytest.approx(-omega, rel=1e-12)


def test_rhs_sign_change_location():
    # k < 0 for small v > 0, k > 0 for large v, crossing where the
    # amplitude reaches omega^(1/(p-1))
    assert dual.semilinear_rhs(0.1, P) < 0
    assert dual.semilinear_rhs(10.0, P) > 0
    v_cross = brentq(lambda v: dual.semilinear_rhs(v, P), 0.05, 10.0)
    # independent root: amplitude equation |r(v)|^(p-1) = omega
    amp_root = brentq(
        lambda u: abs(u) ** (P.p - 1.0) - P.omega, 1e-3, 10.0)
    assert v_cross == pytest.approx(
        float(dual.amplitude_to_dual(amp_root)), rel=1e-10)
    assert v_cross == pytest.approx(float(dual.amplitude_to_dual(1.0)), rel=1e-10)


def test_rhs_prime_matches_fd():
    for v in (0.3, 1.1, 2.5):
        h = 1e-6
        fd = (dual.semilinear_rhs(v + h, P) - dual.semilinear_rhs(v - h, P)) / (2 * h)
        assert dual.semilinear_rhs_prime(v, P) == pytest.approx(fd, rel=1e-7)


def test_dual_action_zero_field():
    g = line_grid(h=0.05, R=8.0)
    z = Field(g, np.zeros(g.n))
    assert dual.dual_action(z, P) == 0.0
    assert dual.dual_pohozaev(z, P) == 0.0


def test_dual_action_equals_action_of_amplitude():
    g = line_grid(h=0.01, R=15.0)
    v = Field(g, 0.9 * np.exp(-0.5 * g.x ** 2))
    pair = dual.DualPair.from_dual(v, P)
    assert pair.roundtrip_defect() <= 1e-10
    assert pair.action_gap() < 10 * g.h ** 2
    # direct comparison
    assert dual.dual_action(v, P) == pytest.approx(
        F.action(pair.u, P), rel=10 * g.h ** 2)


def test_inverse_rejects_nonfinite():
    with pytest.raises((ValueError, RuntimeError)):
        bad = dual.dual_to_amplitude(np.array([1.0, np.nan]))
        if np.any(~np.isfinite(np.asarray(bad))):
            raise ValueError("non-finite propagated")
