"""Change of unknown between the quasilinear and semilinear problems.

The stationary quasilinear equation for a real amplitude u is equivalent to a
semilinear one for v = amplitude_to_dual(u), where the transform is the
strictly increasing odd function with derivative sqrt(1 + 2 s^2). Its inverse
``dual_to_amplitude`` satisfies r'(s) = 1/sqrt(1 + 2 r(s)^2), so gradients of
v and u trade the quasilinear weight exactly: the semilinear action of v
equals the frequency-omega action of u = r(v).

The closed form of the forward transform is

    s * sqrt(1 + 2 s^2) / 2 + asinh(sqrt(2) s) / (2 sqrt(2)),

and the inverse is computed by a (monotone, globally convergent) Newton
iteration; the derivative bound mu' >= 1 keeps it well conditioned everywhere.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .fields import Field, ModelParams, integrate
from . import functionals

__all__ = [
    "amplitude_to_dual",
    "amplitude_to_dual_prime",
    "dual_to_amplitude",
    "dual_to_amplitude_prime",
    "semilinear_rhs",
    "semilinear_rhs_prime",
    "semilinear_potential",
    "dual_action",
    "dual_pohozaev",
    "DualPair",
]

_SQRT2 = math.sqrt(2.0)


def amplitude_to_dual(s):
    """Forward transform (odd, strictly increasing, derivative sqrt(1+2s^2))."""
    s = np.asarray(s, dtype=float)
    out = s * np.sqrt(1.0 + 2.0 * s * s) / 2.0 + np.arcsinh(_SQRT2 * s) / (2.0 * _SQRT2)
    return out if out.ndim else float(out)


def amplitude_to_dual_prime(s):
    s = np.asarray(s, dtype=float)
    out = np.sqrt(1.0 + 2.0 * s * s)
    return out if out.ndim else float(out)


def dual_to_amplitude(s, tol: float = 1e-13, max_iter: int = 100):
    """Inverse transform by safeguarded Newton iteration.

    The returned value x satisfies |amplitude_to_dual(x) - s| <= tol * max(1, |s|).
    The starting point is chosen above the root, where monotone convexity makes
    Newton strictly decreasing, so convergence is monotone and quadratic.
    """
    s_in = np.asarray(s, dtype=float)
    a = np.abs(s_in)
    # mu(x) >= x near 0 and mu(x) ~ x^2/sqrt(2) at infinity: both starts
    # overshoot, i.e. mu(x0) >= |s|.
    x = np.where(a < 1.5, a, np.sqrt(_SQRT2 * a))
    target = tol * np.maximum(1.0, a)
    for _ in range(max_iter):
        f = np.asarray(amplitude_to_dual(x) - a)
        if np.all(np.abs(f) <= target):
            break
        x = x - f / np.asarray(amplitude_to_dual_prime(x))
    else:
        raise RuntimeError("inverse transform did not converge in "
                           f"{max_iter} Newton iterations")
    out = np.sign(s_in) * x
    return out if out.ndim else float(out)


def dual_to_amplitude_prime(v):
    """Derivative of the inverse transform: 1/sqrt(1 + 2 r(v)^2)."""
    u = np.asarray(dual_to_amplitude(v))
    out = 1.0 / np.sqrt(1.0 + 2.0 * u * u)
    return out if out.ndim else float(out)


def _amp(v, params: ModelParams):
    u = np.asarray(dual_to_amplitude(v), dtype=float)
    omega = params.require_omega()
    return u, omega


def semilinear_rhs(v, params: ModelParams):
    """Nonlinearity of the reduced semilinear equation -lap v = k(v):

        k(v) = (|r(v)|^(p-1) r(v) - omega r(v)) / sqrt(1 + 2 r(v)^2).

    Its linearization at 0 has slope -omega, which sets the exp(-sqrt(omega) r)
    far-field decay of dual profiles.
    """
    u, omega = _amp(v, params)
    out = (np.abs(u) ** (params.p - 1.0) * u - omega * u) / np.sqrt(1.0 + 2.0 * u * u)
    return out if out.ndim else float(out)


def semilinear_rhs_prime(v, params: ModelParams):
    """d/dv of :func:`semilinear_rhs` (chain rule through the inverse map)."""
    u, omega = _amp(v, params)
    p = params.p
    t = 1.0 + 2.0 * u * u
    dk_du = ((p * np.abs(u) ** (p - 1.0) - omega) / np.sqrt(t)
             - (np.abs(u) ** (p - 1.0) * u - omega * u) * 2.0 * u / t ** 1.5)
    out = dk_du / np.sqrt(t)
    return out if out.ndim else float(out)


def semilinear_potential(v, params: ModelParams):
    """Antiderivative of :func:`semilinear_rhs`:

        K(v) = |r(v)|^(p+1)/(p+1) - omega r(v)^2 / 2,  K(0) = 0.
    """
    u, omega = _amp(v, params)
    out = np.abs(u) ** (params.p + 1.0) / (params.p + 1.0) - 0.5 * omega * u * u
    return out if out.ndim else float(out)


def dual_action(v: Field, params: ModelParams) -> float:
    """Action of the reduced problem: (1/2) integral |grad v|^2 - integral K(v).

    For real v it equals the frequency-omega action of the amplitude r(v).
    """
    return functionals.kinetic(v) - integrate(
        np.asarray(semilinear_potential(v.values.real, params)), v.grid)


def dual_pohozaev(v: Field, params: ModelParams) -> float:
    """Dilation functional of the reduced problem:

        (N-2) integral |grad v|^2 - 2N integral K(v).

    Vanishes on dual ground states, simultaneously with the dilation
    functional of the corresponding amplitude.
    """
    kin2 = 2.0 * functionals.kinetic(v)  # integral |grad v|^2
    kv = integrate(np.asarray(semilinear_potential(v.values.real, params)), v.grid)
    return (params.N - 2.0) * kin2 - 2.0 * params.N * kv


@dataclass(frozen=True)
class DualPair:
    """A dual profile v together with its amplitude u = r(v)."""

    v: Field
    u: Field
    params: ModelParams

    @classmethod
    def from_dual(cls, v: Field, params: ModelParams) -> "DualPair":
        u = v.with_values(np.asarray(dual_to_amplitude(v.values.real)))
        return cls(v=v, u=u, params=params)

    def roundtrip_defect(self) -> float:
        """max |mu(u) - v|; should sit at the Newton tolerance."""
        return float(np.max(np.abs(
            np.asarray(amplitude_to_dual(self.u.values.real)) - self.v.values.real)))

    def action_gap(self) -> float:
        """Relative gap between the dual action of v and the action of u."""
        a = dual_action(self.v, self.params)
        b = functionals.action(self.u, self.params)
        scale = max(abs(a), abs(b), 1e-300)
        return abs(a - b) / scale
