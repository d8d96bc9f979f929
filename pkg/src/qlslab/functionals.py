"""Scalar functionals of the quasilinear Schrödinger model.

All quantities are built from four elementary integrals of a field phi:

* mass            integral |phi|^2
* kinetic         (1/2) integral |grad phi|^2
* quasilinear     (1/4) integral |grad(|phi|^2)|^2  ==  integral |phi|^2 |grad|phi||^2
* potential       1/(p+1) integral |phi|^(p+1)

The energy is kinetic + quasilinear - potential; the frequency-omega action
adds (omega/2)*mass. The virial functional is the quantity whose eightfold
value equals the second time derivative of the variance along solutions, and
the Pohozaev and Nehari functionals both vanish on stationary profiles.
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass, asdict
from typing import Optional

import numpy as np

from .fields import Field, Grid, ModelParams, integrate

__all__ = [
    "FunctionalReport",
    "BoundaryLeakWarning",
    "mass",
    "kinetic",
    "quasilinear",
    "quasilinear_pointwise",
    "potential",
    "energy",
    "action",
    "virial_q",
    "pohozaev",
    "nehari",
    "variance",
    "variance_rate",
    "gn_decomposition",
    "report",
]

_MODULUS_FLOOR = 1e-30  # keeps grad|phi| well-defined at exact zeros


class BoundaryLeakWarning(UserWarning):
    """Emitted when an integrand is not negligible at the domain boundary."""


def _grad(grid: Grid, values: np.ndarray) -> np.ndarray:
    return np.gradient(values, grid.h)


def mass(phi: Field) -> float:
    return integrate(np.abs(phi.values) ** 2, phi.grid)


def kinetic(phi: Field) -> float:
    """(1/2) integral |grad phi|^2."""
    g = _grad(phi.grid, phi.values)
    return 0.5 * integrate(np.abs(g) ** 2, phi.grid)


def quasilinear(phi: Field) -> float:
    """(1/4) integral |grad(|phi|^2)|^2 -- the canonical form used everywhere."""
    rho = np.abs(phi.values) ** 2
    g = _grad(phi.grid, rho)
    return 0.25 * integrate(g * g, phi.grid)


def quasilinear_pointwise(phi: Field) -> float:
    """integral |phi|^2 |grad|phi||^2, the equivalent pointwise form.

    Agrees with :func:`quasilinear` up to discretization error; the pair is
    a useful consistency diagnostic.
    """
    a = np.maximum(np.abs(phi.values), _MODULUS_FLOOR)
    g = _grad(phi.grid, a)
    return integrate(a * a * g * g, phi.grid)


def potential(phi: Field, p: float) -> float:
    """1/(p+1) integral |phi|^(p+1)."""
    return integrate(np.abs(phi.values) ** (p + 1.0), phi.grid) / (p + 1.0)


def _finite(x: float, what: str) -> float:
    if not math.isfinite(x):
        raise ValueError(f"{what} evaluated to a non-finite value "
                         "(field outside the discrete energy space?)")
    return x


def energy(phi: Field, params: ModelParams) -> float:
    """Conserved energy: kinetic + quasilinear - potential."""
    e = kinetic(phi) + quasilinear(phi) - potential(phi, params.p)
    return _finite(e, "energy")


def action(phi: Field, params: ModelParams) -> float:
    """Frequency-omega action: energy + (omega/2) * mass."""
    omega = params.require_omega()
    return _finite(energy(phi, params) + 0.5 * omega * mass(phi), "action")


def virial_q(phi: Field, params: ModelParams) -> float:
    """Virial functional:

        integral |grad phi|^2 + (N+2) integral |phi|^2 |grad|phi||^2
        - N(p-1)/(2(p+1)) integral |phi|^(p+1).

    Vanishes on stationary profiles; its sign controls variance convexity.
    """
    N, p = params.N, params.p
    coeff = N * (p - 1.0) / 2.0
    return (2.0 * kinetic(phi) + (N + 2.0) * quasilinear(phi)
            - coeff * potential(phi, p))


def pohozaev(phi: Field, params: ModelParams) -> float:
    """Dilation (Pohozaev) functional:

        (N-2)/N * (kinetic + quasilinear) + (omega/2) mass - potential.

    Zero for every finite-energy stationary solution; for N = 2 the first
    term drops and it reduces to (omega/2) mass - potential.
    """
    N = params.N
    omega = params.require_omega()
    return ((N - 2.0) / N * (kinetic(phi) + quasilinear(phi))
            + 0.5 * omega * mass(phi) - potential(phi, params.p))


def nehari(phi: Field, params: ModelParams) -> float:
    """Nehari functional:

        integral |grad phi|^2 + omega mass + 4 integral |phi|^2|grad|phi||^2
        - integral |phi|^(p+1).

    Zero on stationary profiles; the action minimized over its zero set
    recovers the ground-state action level.
    """
    omega = params.require_omega()
    p = params.p
    return (2.0 * kinetic(phi) + omega * mass(phi) + 4.0 * quasilinear(phi)
            - (p + 1.0) * potential(phi, p))


def variance(phi: Field, leak_tol: Optional[float] = 1e-10) -> float:
    """integral |x|^2 |phi|^2 over the truncated domain.

    Warns when the integrand at the outermost node exceeds ``leak_tol`` --
    the moment is then contaminated by the domain cutoff.
    """
    g = phi.grid
    integrand = g.x ** 2 * np.abs(phi.values) ** 2
    edge = integrand[0] if g.kind == "line" else integrand[-1]
    edge = max(float(edge), float(integrand[-1]))
    if leak_tol is not None and edge > leak_tol:
        warnings.warn(
            f"variance integrand at the boundary is {edge:.3e} (tol {leak_tol:.1e}); "
            "the domain truncates the second moment", BoundaryLeakWarning)
    return integrate(integrand, g)


def variance_rate(phi: Field) -> float:
    """4 Im integral (x . grad phi) conj(phi); the time derivative of the
    variance along solutions (radially: x . grad phi = r d_r phi)."""
    g = phi.grid
    dphi = _grad(g, phi.values)
    integrand = np.imag(g.x * dphi * np.conj(phi.values))
    return 4.0 * integrate(integrand, g)


def gn_decomposition(u: Field, params: ModelParams) -> tuple[float, float, float]:
    """Pieces of the interpolation bound

        integral |u|^(p+1)  <=  K * (integral |u|^2)^(1-theta)
                                  * (integral |u|^2 |grad u|^2)^(theta N/(N-2)),

    with theta = (p-1)(N-2)/(2(N+2)). Returns (lhs, rhs_core, theta) where
    ``rhs_core`` is the K-free product, so lhs/rhs_core samples the constant.
    Requires N >= 3.
    """
    N, p = params.N, params.p
    if N < 3:
        raise ValueError("the interpolation decomposition needs N >= 3")
    theta = (p - 1.0) * (N - 2.0) / (2.0 * (N + 2.0))
    lhs = (p + 1.0) * potential(u, p)
    m = mass(u)
    b = quasilinear_pointwise(u)
    rhs_core = m ** (1.0 - theta) * b ** (theta * N / (N - 2.0))
    return lhs, rhs_core, theta


@dataclass(frozen=True)
class FunctionalReport:
    """All named scalars of a field in one bundle (NaN where a quantity needs
    an omega that was not supplied)."""

    mass: float
    kinetic: float
    quasilinear: float
    potential: float
    energy: float
    action: float
    virial: float
    pohozaev: float
    nehari: float
    variance: float
    variance_rate: float

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps({k: v for k, v in self.to_dict().items()},
                          sort_keys=True)

    @staticmethod
    def csv_header() -> str:
        return ",".join(FunctionalReport.__dataclass_fields__)

    def csv_row(self) -> str:
        return ",".join(f"{v:.17g}" for v in self.to_dict().values())


def report(phi: Field, params: ModelParams,
           leak_tol: Optional[float] = None) -> FunctionalReport:
    """Evaluate the full functional bundle on a field."""
    m = mass(phi)
    kin = kinetic(phi)
    qua = quasilinear(phi)
    pot = potential(phi, params.p)
    e = _finite(kin + qua - pot, "energy")
    if params.omega is not None:
        act = e + 0.5 * params.omega * m
        poh = pohozaev(phi, params)
        neh = nehari(phi, params)
    else:
        act = poh = neh = float("nan")
    return FunctionalReport(
        mass=m, kinetic=kin, quasilinear=qua, potential=pot, energy=e,
        action=act,
        virial=virial_q(phi, params),
        pohozaev=poh,
        nehari=neh,
        variance=variance(phi, leak_tol=leak_tol),
        variance_rate=variance_rate(phi),
    )
