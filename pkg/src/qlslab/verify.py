"""One-command verification battery.

Runs the library's core identities at a small, fixed resolution and returns a
pass/fail matrix keyed by capability. Each row states what is measured, the
measured defect, and the tolerance applied at this resolution. The battery is
deliberately cheap (about a minute); the pytest suite carries the strict
versions of the same checks at finer resolution.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass

import numpy as np
from scipy.integrate import solve_ivp
from scipy.optimize import brentq

from .fields import Field, ModelParams, line_grid, integrate
from . import functionals
from . import dual
from . import groundstate as gsmod
from . import massmin
from . import evolution

__all__ = ["VerifyRow", "run_battery", "format_matrix"]


@dataclass(frozen=True)
class VerifyRow:
    name: str
    passed: bool
    measured: float
    tolerance: float
    detail: str = ""


def _row(name, measured, tolerance, detail=""):
    return VerifyRow(name=name, passed=bool(measured <= tolerance),
                     measured=float(measured), tolerance=float(tolerance),
                     detail=detail)


def run_battery(fast: bool = False) -> list[VerifyRow]:
    rows = []
    h = 0.05 if fast else 0.02
    R = 12.0 if fast else 20.0

    # dual transform round trip and antiderivative cross-check
    s = np.linspace(-10.0, 10.0, 1000)
    defect = np.max(np.abs(np.asarray(
        dual.amplitude_to_dual(dual.dual_to_amplitude(s))) - s))
    rows.append(_row("dual-roundtrip", defect, 1e-10,
                     "max |forward(inverse(s)) - s| on [-10, 10]"))
    ode = solve_ivp(lambda t, y: [math.sqrt(1.0 + 2.0 * t * t)], (0.0, 5.0),
                    [0.0], rtol=1e-12, atol=1e-14, dense_output=True)
    pts = np.linspace(0.0, 5.0, 51)
    gap = np.max(np.abs(ode.sol(pts)[0] - np.asarray(dual.amplitude_to_dual(pts))))
    rows.append(_row("dual-closed-form-vs-ode", gap, 1e-9,
                     "closed form against direct integration of the derivative"))

    # dilation scaling laws on an analytic profile
    params = ModelParams(N=1, p=5.0, omega=1.0)
    g = line_grid(h=h, R=R)
    prof = lambda x: np.exp(-np.asarray(x) ** 2)
    base = Field(g, prof(g.x))
    worst = 0.0
    for sig in (0.5, 2.0):
        dil = Field(g, sig ** 0.5 * prof(sig * g.x))
        checks = [
            (functionals.mass(dil), functionals.mass(base)),
            (functionals.kinetic(dil), sig ** 2 * functionals.kinetic(base)),
            (functionals.quasilinear(dil),
             sig ** 3 * functionals.quasilinear(base)),
            (functionals.potential(dil, 5.0),
             sig ** 2 * functionals.potential(base, 5.0)),
        ]
        for got, want in checks:
            worst = max(worst, abs(got - want) / abs(want))
    rows.append(_row("dilation-scaling-laws", worst, 50.0 * h * h,
                     "mass/kinetic/quasilinear/potential under sigma-dilation"))

    # ground state + certificate + first integral
    p3 = ModelParams(N=1, p=3.0, omega=1.0)
    try:
        gs = gsmod.solve_ground_state_1d(p3, grid=line_grid(h=h, R=R))
        cert_worst = max(gs.certificate[k] for k in
                         ("pohozaev_rel", "virial_rel", "nehari_rel",
                          "action_identity_gap"))
        rows.append(_row("ground-state-certificate", cert_worst, 5e-3,
                         "dilation/virial/Nehari defects and action identity"))
        fi = float(np.max(np.abs(gs.first_integral_residual())))
        rows.append(_row("first-integral-pointwise", fi, 1e-6,
                         "profile energy relation at every node"))
        peak_gap = abs(gs.certificate["peak_amplitude"]
                       - gsmod.peak_amplitude_1d(p3))
        rows.append(_row("peak-amplitude-closed-form", peak_gap, 1e-8,
                         "u(0) against ((p+1) omega / 2)^(1/(p-1))"))
        decay_gap = abs(gs.certificate["decay_rate"] - 1.0)
        rows.append(_row("decay-rate-linearization", decay_gap, 0.05,
                         "tail log-slope against sqrt(omega)"))
    except Exception as exc:  # pragma: no cover
        rows.append(VerifyRow("ground-state-certificate", False, math.inf,
                              5e-3, f"solve failed: {exc}"))
        gs = None

    # dilation derivative identity and its zero
    if gs is not None:
        p9 = ModelParams(N=1, p=9.0, omega=1.0)
        gs9 = gsmod.solve_ground_state_1d(p9, grid=line_grid(h=h, R=R))
        act = lambda sg: functionals.action(gs9.rescaled(sg), p9)
        d = 0.02
        sg = 1.3
        fd = (-act(sg + 2 * d) + 8 * act(sg + d)
              - 8 * act(sg - d) + act(sg - 2 * d)) / (12 * d)
        qs = functionals.virial_q(gs9.rescaled(sg), p9) / sg
        rows.append(_row("dilation-derivative-identity",
                         abs(fd - qs) / abs(qs), 50.0 * h * h,
                         "d/dsigma of the action against virial/sigma"))
        s0 = gsmod.find_sigma0(gs9, p9)
        rows.append(_row("dilation-zero-at-ground-state", abs(s0 - 1.0),
                         25.0 * h * h, "virial zero of the dilation family"))

        # conservation on the standing wave
        cfg = evolution.EvolutionConfig(dt=2e-3, T=0.4, snapshot_every=20)
        rec = evolution.evolve(Field(gs9.u.grid, gs9.u.values.astype(complex)),
                               cfg, p9)
        rows.append(_row("mass-conservation", rec.mass_drift(), 1e-8,
                         "standing-wave mass drift"))
        rows.append(_row("energy-conservation", rec.energy_drift(), 1e-5,
                         "standing-wave energy drift"))

    # virial curvature along a generic evolution
    p5 = ModelParams(N=1, p=5.0)
    gv = line_grid(h=h, R=R)
    a0 = evolution.gaussian_data(gv, amplitude=1.0, width=1.0)
    cfg = evolution.EvolutionConfig(dt=1e-3, T=0.3, snapshot_every=10)
    rec = evolution.evolve(a0, cfg, p5)
    t = rec.times
    dt_s = t[1] - t[0]
    vdd = (rec.variance[2:] - 2.0 * rec.variance[1:-1] + rec.variance[:-2]) / dt_s ** 2
    # row computed through the module attribute so fault injection is testable
    target = 8.0 * rec.virial[1:-1]
    dev = float(np.max(np.abs(vdd - target) / np.abs(target)))
    rows.append(_row("virial-curvature", dev, 0.02,
                     "second difference of the variance against 8x virial"))
    vr = np.gradient(rec.variance, t)
    dev_vr = float(np.max(np.abs(vr[1:-1] - rec.variance_rate[1:-1])
                          / np.max(np.abs(rec.variance_rate))))
    rows.append(_row("variance-rate-consistency", dev_vr, 0.02,
                     "d/dt of the variance against its closed-form rate"))

    # Nehari substitution identity on the zero set
    pn = ModelParams(N=1, p=5.0, omega=1.0)
    bump = Field(gv, np.exp(-gv.x ** 2))

    def neh_of(t_amp):
        return functionals.nehari(Field(gv, t_amp * bump.values), pn)
    t_star = brentq(neh_of, 0.5, 8.0, xtol=1e-14)
    phi = Field(gv, t_star * bump.values)
    p_ = pn.p
    ident = ((p_ - 1.0) / (2.0 * (p_ + 1.0)) * 2.0 * functionals.kinetic(phi)
             + (p_ - 3.0) / (p_ + 1.0) * functionals.quasilinear(phi)
             + pn.omega * (p_ - 1.0) / (2.0 * (p_ + 1.0)) * functionals.mass(phi))
    gap = abs(functionals.action(phi, pn) - ident) / abs(ident)
    rows.append(_row("nehari-zero-set-action-identity", gap, 1e-9,
                     "action decomposition on the Nehari zero set"))

    # modulus gradient inequality
    zc = Field(gv, np.exp(-gv.x ** 2) * np.exp(1j * np.sin(gv.x)))
    ga = np.abs(np.gradient(np.abs(zc.values), gv.h))
    gf = np.abs(np.gradient(zc.values, gv.h))
    rows.append(_row("modulus-gradient-inequality",
                     float(np.max(ga - gf)), 1e-12,
                     "pointwise |grad|phi|| <= |grad phi|"))
    e_gap = functionals.energy(Field(gv, np.abs(zc.values)), p5) \
        - functionals.energy(zc, p5)
    rows.append(_row("modulus-lowers-energy", e_gap, 1e-12,
                     "energy of |phi| does not exceed energy of phi"))

    # two forms of the quasilinear term
    q1 = functionals.quasilinear(zc)
    q2 = functionals.quasilinear_pointwise(zc)
    rows.append(_row("quasilinear-two-forms", abs(q1 - q2) / q1, 10.0 * h * h,
                     "square-of-gradient form against pointwise form"))

    # constrained minimization block
    p2 = ModelParams(N=1, p=2.0)
    try:
        mn = massmin.minimize_at_mass(1.0, p2, gv)
        rows.append(_row("constrained-minimum-negative", mn.m_c, 0.0,
                         "m(1) at p = 2 is negative"))
        rows.append(_row("lagrange-multiplier-negative", mn.lambda_c, 0.0,
                         "multiplier of the constrained minimizer"))
        pw = ModelParams(N=1, p=2.0, omega=-mn.lambda_c)
        neh = functionals.nehari(mn.u, pw)
        scale = 2.0 * functionals.kinetic(mn.u) - mn.lambda_c * functionals.mass(mn.u)
        rows.append(_row("nehari-cross-identity", abs(neh) / scale, 1e-3,
                         "minimizer lies on the Nehari set at its multiplier"))
        sub = massmin.subadditivity_check(0.5, 2.0, p2, gv)
        rows.append(_row("strict-mass-subadditivity", -sub.strict_margin, 0.0,
                         "m(2d) < 2 m(d) with strict margin"))
    except Exception as exc:  # pragma: no cover
        rows.append(VerifyRow("constrained-minimum-negative", False,
                              math.inf, 0.0, f"flow failed: {exc}"))

    # unbounded-below scaling exponents
    p9u = ModelParams(N=1, p=9.0)
    gq = line_grid(h=0.002, R=10.0)
    curve = massmin.scaling_energy_curve(
        prof, p9u, sigmas=np.geomspace(2.0, 12.0, 8), grid=gq, adapt_grid=False)
    slopes = (massmin.fit_loglog_slope(curve["sigma"], curve["kinetic"]),
              massmin.fit_loglog_slope(curve["sigma"], curve["quasilinear"]),
              massmin.fit_loglog_slope(curve["sigma"], curve["potential"]))
    worst = max(abs(slopes[0] - 2.0) / 2.0, abs(slopes[1] - 3.0) / 3.0,
                abs(slopes[2] - 4.0) / 4.0)
    rows.append(_row("dilation-growth-exponents", worst, 0.01,
                     "log-log slopes of the three energy terms"))

    # discrete integration by parts improves under refinement
    gaps = []
    for hh in (h, h / 2):
        gg = line_grid(h=hh, R=10.0)
        f1 = np.exp(-gg.x ** 2)
        f2 = np.exp(-0.5 * gg.x ** 2) * np.cos(gg.x)
        lhs = integrate(f1 * gg.apply_laplacian(f2), gg)
        rhs = -integrate(np.gradient(f1, hh) * np.gradient(f2, hh), gg)
        gaps.append(abs(lhs - rhs))
    rows.append(_row("integration-by-parts-refinement",
                     gaps[1] / gaps[0], 0.75,
                     "defect shrinks when h is halved"))

    # energy gradient against finite differences
    rng = np.random.default_rng(11)
    u = np.exp(-gv.x ** 2) * (1.0 + 0.2 * np.cos(gv.x))
    worst = 0.0
    for _ in range(5):
        w = rng.standard_normal(gv.n) * np.exp(-0.2 * gv.x ** 2)
        grad = massmin.discrete_energy_gradient(u, gv, 2.0)
        lhs = float(np.dot(gv.w_cell, grad * w))
        eps = 1e-6
        fd = (massmin.discrete_energy(u + eps * w, gv, 2.0)
              - massmin.discrete_energy(u - eps * w, gv, 2.0)) / (2 * eps)
        worst = max(worst, abs(lhs - fd) / max(abs(fd), 1e-300))
    rows.append(_row("energy-gradient-exactness", worst, 1e-6,
                     "assembled gradient against directional differences"))

    return rows


def format_matrix(rows: list[VerifyRow]) -> str:
    width = max(len(r.name) for r in rows) + 2
    lines = []
    for r in rows:
        status = "PASS" if r.passed else "FAIL"
        lines.append(f"{status}  {r.name:<{width}} measured {r.measured:<12.3e} "
                     f"tol {r.tolerance:<10.3e} {r.detail}")
    n_fail = sum(not r.passed for r in rows)
    lines.append(f"{len(rows) - n_fail}/{len(rows)} checks passed")
    return "\n".join(lines)
