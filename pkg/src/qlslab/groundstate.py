"""Ground-state profiles of the stationary quasilinear equation

    -lap u - u lap(u^2) + omega u = |u|^(p-1) u,

computed through the reduced semilinear problem -lap v = k(v), u = r(v).

The one-dimensional solver exploits the conserved first integral of the dual
equation, (1/2) v'^2 + K(v) = 0 on the decaying orbit: the peak value is the
positive root of K and the profile follows v' = -sqrt(-2 K(v)). In higher
dimension the radial profile is bracketed by amplitude shooting and then
polished by a two-point collocation solve, which keeps the exponential tail
clean down to the far field (forward shooting alone loses the tail to the
growing mode at double precision).

Every solve is certified: the dilation, virial, and Nehari functionals must
vanish relative to their largest constituent, the action must match its
gradient-only form, and the profile must be positive and radially
non-increasing. A failed certificate raises instead of returning.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field as dc_field
from typing import Callable, Optional

import numpy as np
from scipy.integrate import solve_ivp, solve_bvp
from scipy.interpolate import CubicSpline
from scipy.optimize import brentq

from .fields import Field, Grid, ModelParams, line_grid, radial_grid, integrate
from . import functionals
from .dual import (amplitude_to_dual, dual_to_amplitude, dual_to_amplitude_prime,
                   semilinear_rhs, semilinear_rhs_prime, semilinear_potential,
                   dual_action, dual_pohozaev)

__all__ = [
    "GroundState",
    "CertificateError",
    "solve_ground_state_1d",
    "solve_ground_state_radial",
    "fit_decay_rate",
    "rescale",
    "find_sigma0",
    "peak_amplitude_1d",
]


class CertificateError(RuntimeError):
    """A converged profile failed one of its stationarity identities."""

    def __init__(self, failures):
        self.failures = list(failures)
        super().__init__("ground-state certificate failed: " + "; ".join(self.failures))


def peak_amplitude_1d(params: ModelParams) -> float:
    """Closed-form peak value ((p+1) omega / 2)^(1/(p-1)) of the 1-D profile."""
    omega = params.require_omega()
    return ((params.p + 1.0) * omega / 2.0) ** (1.0 / (params.p - 1.0))


@dataclass(eq=False)
class GroundState:
    """A certified stationary profile.

    ``certificate`` carries the measured identity defects:
    pohozaev / virial / nehari (relative to the largest constituent term),
    the action value and its gradient-only identity gap, mass, peak
    amplitude, decay rate fit, and the discrete equation residual.
    """

    u: Field
    v: Field
    params: ModelParams
    certificate: dict
    du: np.ndarray
    _dual_profile: Callable = dc_field(repr=False, default=None)

    # -- dense evaluation ------------------------------------------------

    def dual_at(self, x):
        """Dense dual profile v(|x|) from the ODE/collocation solution."""
        return self._dual_profile(np.abs(np.asarray(x, dtype=float)))

    def amplitude_at(self, x):
        return np.asarray(dual_to_amplitude(self.dual_at(x)))

    def rescaled(self, sigma: float) -> Field:
        """Mass-preserving dilation sigma^(N/2) u(sigma x), sampled exactly
        from the dense profile on the native grid."""
        if sigma <= 0:
            raise ValueError("sigma must be positive")
        g = self.u.grid
        vals = sigma ** (self.params.N / 2.0) * self.amplitude_at(sigma * g.x)
        return Field(g, vals, parity=self.u.parity)

    def first_integral_residual(self) -> np.ndarray:
        """Pointwise defect of
        (1/2) u'^2 + u^2 u'^2 - (omega/2) u^2 + u^(p+1)/(p+1), which vanishes
        identically along 1-D profiles."""
        omega = self.params.require_omega()
        u = self.u.values.real
        du = self.du
        return (0.5 * du * du + u * u * du * du
                - 0.5 * omega * u * u
                + np.abs(u) ** (self.params.p + 1.0) / (self.params.p + 1.0))


# -- certification -------------------------------------------------------------


def _certify(u: Field, v: Field, du: np.ndarray, params: ModelParams,
             certify_tol: float, extra_failures=()) -> dict:
    p = params.p
    N = params.N
    omega = params.require_omega()
    kin = functionals.kinetic(u)
    qua = functionals.quasilinear(u)
    pot = functionals.potential(u, p)
    m = functionals.mass(u)

    poh = functionals.pohozaev(u, params)
    poh_scale = max(abs((N - 2.0) / N) * (kin + qua), 0.5 * omega * m, pot)
    vir = functionals.virial_q(u, params)
    vir_scale = max(2.0 * kin, (N + 2.0) * qua, N * (p - 1.0) / 2.0 * pot)
    neh = functionals.nehari(u, params)
    neh_scale = max(2.0 * kin, omega * m, 4.0 * qua, (p + 1.0) * pot)

    act = functionals.action(u, params)
    ident = (2.0 * kin + 2.0 * qua) / N  # gradient-only action identity
    act_gap = abs(act - ident) / max(abs(act), abs(ident))

    uu = u.values.real
    lap_u = u.grid.apply_laplacian(uu)
    lap_u2 = u.grid.apply_laplacian(uu * uu)
    res = -lap_u - uu * lap_u2 + omega * uu - np.abs(uu) ** (p - 1.0) * uu
    residual = math.sqrt(integrate(res * res, u.grid))

    cert = {
        "pohozaev": poh, "pohozaev_rel": abs(poh) / poh_scale,
        "virial": vir, "virial_rel": abs(vir) / vir_scale,
        "nehari": neh, "nehari_rel": abs(neh) / neh_scale,
        "action": act, "action_identity_gap": act_gap,
        "energy": act - 0.5 * omega * m,
        "mass": m,
        "peak_amplitude": float(np.max(uu)),
        "equation_residual": residual,
        "certify_tol": certify_tol,
    }

    failures = list(extra_failures)
    for key in ("pohozaev_rel", "virial_rel", "nehari_rel", "action_identity_gap"):
        if not cert[key] <= certify_tol:
            failures.append(f"{key} = {cert[key]:.3e} > {certify_tol:.1e}")
    if np.min(uu) < -1e-10 * cert["peak_amplitude"]:
        failures.append("profile is not nonnegative")
    if failures:
        raise CertificateError(failures)
    return cert


def fit_decay_rate(gs: GroundState, lo: float = 1e-8, hi: float = 1e-3) -> float:
    """Least-squares decay rate of the far tail.

    Fits log(r^((N-1)/2) u) against r over the window where u is between
    ``lo`` and ``hi``; the geometric factor removes the radial spreading of
    the amplitude so the fitted slope is the bare exponential rate (for N = 1
    the factor is 1 and this is the plain log-slope). Linearizing the dual
    equation at zero predicts the rate sqrt(omega).
    """
    g = gs.u.grid
    uu = gs.u.values.real
    if g.kind == "line":
        sel = g.x > 0
        r = g.x[sel]
        uv = uu[sel]
    else:
        r = g.x[1:]
        uv = uu[1:]
    mask = (uv >= lo) & (uv <= hi)
    if mask.sum() < 8:
        raise ValueError("domain too small: the decay window "
                         f"[{lo:g}, {hi:g}] holds {int(mask.sum())} samples")
    y = np.log(uv[mask]) + (gs.params.N - 1) / 2.0 * np.log(r[mask])
    slope = np.polyfit(r[mask], y, 1)[0]
    return -float(slope)


# -- one-dimensional solve -----------------------------------------------------


def solve_ground_state_1d(params: ModelParams, grid: Optional[Grid] = None, *,
                          h: float = 0.02, R: float = 30.0,
                          certify_tol: float = 1e-3) -> GroundState:
    """Unique (up to translation/phase) positive even profile for N = 1."""
    if params.N != 1:
        raise ValueError("solve_ground_state_1d requires N = 1")
    omega = params.require_omega()
    p = params.p
    if grid is None:
        grid = line_grid(h=h, R=R)
    if grid.kind != "line":
        raise ValueError("1-D solve expects a line grid")

    # peak of the dual profile: positive root of K (K < 0 between 0 and the
    # root; the bracket starts where the nonlinearity k changes sign)
    K = lambda s: float(semilinear_potential(s, params))
    lo = float(amplitude_to_dual(omega ** (1.0 / (p - 1.0))))
    hi = 2.0 * lo
    while K(hi) <= 0.0:
        hi *= 2.0
        if hi > 1e12:  # pragma: no cover - unreachable for valid params
            raise RuntimeError("failed to bracket the dual peak value")
    v_peak = brentq(K, lo, hi, xtol=1e-300, rtol=8.9e-16)

    k0 = float(semilinear_rhs(v_peak, params))
    k0p = float(semilinear_rhs_prime(v_peak, params))
    x0 = 1e-3

    def taylor(x):
        x2 = x * x
        return v_peak - 0.5 * k0 * x2 + k0 * k0p * x2 * x2 / 24.0

    def slope(v):
        # first integral: v' = -sqrt(-2 K(v)) on the decaying branch
        arg = -2.0 * np.asarray(semilinear_potential(v, params))
        return -np.sqrt(np.maximum(arg, 0.0))

    x_end = max(1.5 * grid.R, grid.R + 5.0)
    sol = solve_ivp(lambda x, y: slope(y), (x0, x_end), [taylor(x0)],
                    method="DOP853", rtol=1e-12, atol=1e-300, dense_output=True)
    if not sol.success:  # pragma: no cover
        raise RuntimeError(f"profile integration failed: {sol.message}")

    def dual_profile(xa):
        xa = np.atleast_1d(np.asarray(xa, dtype=float))
        out = np.empty_like(xa)
        near = xa <= x0
        out[near] = taylor(xa[near])
        inside = (~near) & (xa <= x_end)
        if inside.any():
            out[inside] = np.maximum(sol.sol(xa[inside])[0], 0.0)
        out[xa > x_end] = 0.0
        return out

    v_vals = dual_profile(np.abs(grid.x))
    u_vals = np.asarray(dual_to_amplitude(v_vals))
    dv = np.where(grid.x >= 0, 1.0, -1.0) * slope(v_vals)
    du = np.asarray(dual_to_amplitude_prime(v_vals)) * dv

    u = Field(grid, u_vals, parity="even")
    v = Field(grid, v_vals, parity="even")

    extra = []
    peak_err = abs(float(np.max(u_vals)) - peak_amplitude_1d(params))
    if peak_err > 1e-8 * peak_amplitude_1d(params):
        extra.append(f"peak amplitude off closed form by {peak_err:.2e}")
    cert = _certify(u, v, du, params, certify_tol, extra)
    gs = GroundState(u=u, v=v, params=params, certificate=cert, du=du,
                     _dual_profile=dual_profile)
    cert["decay_rate"] = fit_decay_rate(gs)
    return gs


# -- radial solve (N >= 2) -----------------------------------------------------


def _shoot(a: float, params: ModelParams, r_end: float):
    """Integrate the dual radial equation from the center with v(0) = a.

    Returns (sol, kind) with kind in {"overshoot", "undershoot", "decay"}.
    """
    N = params.N
    r0 = 1e-6
    ka = float(semilinear_rhs(a, params))
    y0 = [a - ka * r0 * r0 / (2.0 * N), -ka * r0 / N]

    def rhs(r, y):
        return [y[1], -float(semilinear_rhs(y[0], params)) - (N - 1.0) * y[1] / r]

    def hit_zero(r, y):
        return y[0]
    hit_zero.terminal = True
    hit_zero.direction = -1.0

    def turn_up(r, y):
        return y[1]
    turn_up.terminal = True
    turn_up.direction = 1.0

    sol = solve_ivp(rhs, (r0, r_end), y0, method="DOP853",
                    rtol=1e-12, atol=1e-14, dense_output=True,
                    events=[hit_zero, turn_up])
    if sol.t_events[0].size:
        return sol, "overshoot"
    if sol.t_events[1].size:
        return sol, "undershoot"
    return sol, "decay"


def solve_ground_state_radial(params: ModelParams, grid: Optional[Grid] = None, *,
                              h: float = 0.02, R: float = 30.0,
                              certify_tol: float = 1e-3,
                              bvp_tol: float = 1e-10) -> GroundState:
    """Radially symmetric decreasing profile for N >= 2.

    Bisection on the center amplitude brackets the decaying orbit (crossing
    zero = too high, turning back up = too low); collocation then polishes the
    bracketed profile with the exact center symmetry and a Dirichlet far end.
    """
    if params.N < 2:
        raise ValueError("solve_ground_state_radial requires N >= 2")
    omega = params.require_omega()
    if grid is None:
        grid = radial_grid(params.N, h=h, R=R)
    if grid.kind != "radial":
        raise ValueError("radial solve expects a radial grid")
    N = params.N

    a = float(amplitude_to_dual(peak_amplitude_1d(params)))
    sol, kind = _shoot(a, params, grid.R)
    lo = hi = None
    if kind == "overshoot":
        hi = a
        while hi is not None and lo is None:
            a *= 0.8
            sol, kind = _shoot(a, params, grid.R)
            if kind != "overshoot":
                lo = a
            else:
                hi = a
            if a < 1e-8:
                raise RuntimeError("increase initial-amplitude search range "
                                   "(no undershoot found)")
    else:
        lo = a
        while hi is None:
            a *= 1.4
            sol, kind = _shoot(a, params, grid.R)
            if kind == "overshoot":
                hi = a
            else:
                lo = a
            if a > 1e8:
                raise RuntimeError("increase initial-amplitude search range "
                                   "(no overshoot found)")

    best = None
    for _ in range(90):
        mid = 0.5 * (lo + hi)
        if mid == lo or mid == hi:
            break
        sol, kind = _shoot(mid, params, grid.R)
        if kind == "overshoot":
            hi = mid
        else:
            lo = mid
            best = sol
    if best is None:
        best, _ = _shoot(lo, params, grid.R)
    a_star = lo

    # initial collocation guess: clean part of the shot, exponential beyond
    t_clean = best.t[-1]
    mesh = np.linspace(0.0, grid.R, 1201)
    vals = np.zeros((2, mesh.size))
    inside = mesh <= t_clean
    seg = best.sol(np.clip(mesh, best.t[0], t_clean))
    vals[:, inside] = seg[:, inside]
    vals[0, :][mesh < best.t[0]] = a_star
    rate = math.sqrt(omega)
    if (~inside).any():
        v_c, dv_c = best.sol(t_clean)
        tail = np.exp(-rate * (mesh[~inside] - t_clean))
        vals[0, ~inside] = max(v_c, 1e-300) * tail
        vals[1, ~inside] = -rate * max(v_c, 1e-300) * tail
    vals[0, -1] = 0.0

    S = np.array([[0.0, 0.0], [0.0, -(N - 1.0)]])

    def fun(r, y):
        return np.vstack([y[1], -np.asarray(semilinear_rhs(y[0], params))])

    def bc(ya, yb):
        return np.array([ya[1], yb[0]])

    bvp = solve_bvp(fun, bc, mesh, vals, S=S, tol=bvp_tol, max_nodes=120000)
    if not bvp.success or np.max(bvp.y[0]) < 0.25 * a_star:
        warnings.warn("collocation polish failed; falling back to the raw "
                      "shooting profile (tail below ~1e-7 is unreliable)")
        dense = lambda r: np.maximum(
            best.sol(np.clip(np.asarray(r, dtype=float), best.t[0], t_clean))[0], 0.0)
        ddense = lambda r: best.sol(np.clip(np.asarray(r, dtype=float),
                                            best.t[0], t_clean))[1]
    else:
        sol_fn = bvp.sol

        def dense(r):
            r = np.asarray(r, dtype=float)
            out = np.maximum(sol_fn(np.clip(r, 0.0, grid.R))[0], 0.0)
            return np.where(r <= grid.R, out, 0.0)

        def ddense(r):
            r = np.asarray(r, dtype=float)
            out = sol_fn(np.clip(r, 0.0, grid.R))[1]
            return np.where(r <= grid.R, out, 0.0)

    v_vals = dense(grid.x)
    dv = ddense(grid.x)
    u_vals = np.asarray(dual_to_amplitude(v_vals))
    du = np.asarray(dual_to_amplitude_prime(v_vals)) * dv

    u = Field(grid, u_vals)
    v = Field(grid, v_vals)

    extra = []
    head = u_vals[: int(np.searchsorted(grid.x, grid.R * 0.9))]
    live = head > 1e-10 * u_vals.max()
    if np.any(np.diff(head)[live[:-1]] > 0):
        extra.append("profile is not radially non-increasing")
    cert = _certify(u, v, du, params, certify_tol, extra)
    gs = GroundState(u=u, v=v, params=params, certificate=cert, du=du,
                     _dual_profile=dense)
    cert["decay_rate"] = fit_decay_rate(gs)
    return gs


# -- dilations ------------------------------------------------------------------


def rescale(f: Field, sigma: float) -> Field:
    """Mass-preserving dilation sigma^(N/2) f(sigma x) by cubic interpolation
    onto the same grid (points dilated past the domain read as zero)."""
    if sigma <= 0:
        raise ValueError("sigma must be positive")
    g = f.grid
    N = g.dim
    target = sigma * g.x

    def interp(vals):
        if g.kind == "radial":
            sp = CubicSpline(g.x, vals, bc_type=((1, 0.0), "natural"))
        else:
            sp = CubicSpline(g.x, vals)
        out = np.zeros_like(vals)
        inside = (target >= g.x[0]) & (target <= g.x[-1])
        out[inside] = sp(target[inside])
        return out

    if f.is_complex:
        vals = interp(f.values.real) + 1j * interp(f.values.imag)
    else:
        vals = interp(f.values.real)
    out = Field(g, sigma ** (N / 2.0) * vals, parity=f.parity)
    m_in = functionals.mass(f)
    m_out = functionals.mass(out)
    if m_in > 0 and abs(m_out - m_in) > 100.0 * g.h ** 2 * m_in:
        warnings.warn(f"dilation changed the mass by {abs(m_out - m_in) / m_in:.2e} "
                      "(interpolation/truncation); refine the grid")
    return out


def find_sigma0(source, params: ModelParams, *, xtol: float = 1e-12) -> float:
    """Root of sigma -> virial(psi^sigma) in (0, 1].

    ``source`` is a Field (cubic-interpolated dilations) or a GroundState
    (exact dense dilations). Requires p > 3 + 4/N and virial(psi) <= 0; a
    clearly positive virial is a precondition error, while tiny positive
    values (discretization noise around a stationary profile) are tolerated
    by letting the bracket extend just past 1.
    """
    if not params.p > params.quasilinear_critical_p:
        raise ValueError("find_sigma0 needs p > 3 + 4/N")
    if isinstance(source, GroundState):
        dilate = source.rescaled
        psi = source.u
    else:
        psi = source
        dilate = lambda s: rescale(psi, s)

    def g(s):
        return functionals.virial_q(dilate(s), params)

    g1 = g(1.0)
    kin_scale = 2.0 * functionals.kinetic(psi) + 1e-300
    if g1 > 1e-3 * kin_scale:
        raise ValueError(f"virial(psi) = {g1:.3e} > 0: the dilation family has "
                         "no zero in (0, 1]")
    if g1 > 0.0:
        # stationary-profile noise: the zero sits just above 1
        return brentq(g, 1.0, 1.05, xtol=xtol)
    s_lo = 0.5
    while g(s_lo) <= 0.0:
        s_lo *= 0.5
        if s_lo < 1e-6:  # pragma: no cover
            raise RuntimeError("no sign change found while shrinking sigma")
    return brentq(g, s_lo, 1.0, xtol=xtol)
