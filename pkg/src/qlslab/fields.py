"""Grids, sampled fields, and the discrete calculus the rest of the library runs on.

Two grid geometries are supported:

* ``line`` -- a symmetric 1-D grid on [-R, R] with uniform spacing ``h``
  (2M+1 nodes, M*h = R), used for one-dimensional problems.
* ``radial`` -- nodes r_i = i*h on [0, R) for radially symmetric profiles in
  dimension N >= 1; integrals carry the surface measure of the (N-1)-sphere.

Fields are immutable samples of a complex- or real-valued function on a grid.
The outer boundary is homogeneous Dirichlet: every operator sees a ghost value
of zero one spacing outside the last node.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable, Optional

import numpy as np

__all__ = [
    "Grid",
    "Field",
    "ModelParams",
    "DomainTruncationError",
    "line_grid",
    "radial_grid",
    "sphere_area",
    "laplacian",
    "gradient",
    "integrate",
    "h1_inner",
    "h1_norm",
    "save_field",
    "load_field",
]


class DomainTruncationError(ValueError):
    """Raised when a field's boundary values are too large for the domain."""


def sphere_area(dim: int) -> float:
    """Surface area of the unit (dim-1)-sphere, 2*pi^(dim/2) / Gamma(dim/2)."""
    return 2.0 * math.pi ** (dim / 2.0) / math.gamma(dim / 2.0)


def _readonly(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class Grid:
    """Discretized spatial domain with quadrature weights.

    Attributes
    ----------
    kind : {"line", "radial"}
    dim : spatial dimension N (1 for line grids).
    h : node spacing.
    R : domain extent (line: [-R, R]; radial: [0, R) with Dirichlet at R).
    M : resolution count; line grids hold 2M+1 nodes, radial grids M nodes.
    x : node coordinates.
    w : quadrature weights (trapezoid-corrected; radial weights include the
        sphere-area factor).
    w_cell : finite-volume cell weights used by the conservative operators
        (uniform h on line grids; exact shell volumes on radial grids). They
        differ from ``w`` only at the boundary nodes (line) and near r = 0
        (radial).
    """

    kind: str
    dim: int
    h: float
    R: float
    M: int
    x: np.ndarray
    w: np.ndarray
    w_cell: np.ndarray
    face_area: np.ndarray  # one entry per interior/outer face, see laplacian_bands

    @property
    def n(self) -> int:
        """Number of nodes."""
        return self.x.size

    def laplacian_bands(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """(sub, diag, sup) diagonals of the conservative Laplacian.

        The operator discretizes the Laplacian acting on functions of x (line)
        or on radial profiles (v'' + (N-1)/r v'); it is symmetric with respect
        to the ``w_cell`` inner product, which is what makes the time
        integrator conserve the discrete mass. Homogeneous Dirichlet ghost
        values sit one spacing outside the last node.
        """
        return self._bands

    def __post_init__(self):
        object.__setattr__(self, "x", _readonly(self.x))
        object.__setattr__(self, "w", _readonly(self.w))
        object.__setattr__(self, "w_cell", _readonly(self.w_cell))
        object.__setattr__(self, "face_area", _readonly(self.face_area))
        object.__setattr__(self, "_bands", self._build_bands())

    def _build_bands(self):
        n = self.n
        h2 = self.h * self.h
        sub = np.zeros(n)
        diag = np.zeros(n)
        sup = np.zeros(n)
        if self.kind == "line":
            sub[:] = 1.0 / h2
            sup[:] = 1.0 / h2
            diag[:] = -2.0 / h2
            # ghost zeros beyond both endpoints: plain 3-point rows throughout
        else:
            # flux form: (Lv)_j = (flux_j - flux_{j-1}) / w_cell_j with
            # flux_j = A_j (v_{j+1} - v_j)/h through the face at r_{j+1/2};
            # the last face couples to the Dirichlet ghost at r = R.
            # Row 0 reduces to the symmetry stencil 2N(v1 - v0)/h^2.
            A = self.face_area
            out_c = A / (self.h * self.w_cell)
            in_c = np.zeros(n)
            in_c[1:] = A[:-1] / (self.h * self.w_cell[1:])
            sup[:-1] = out_c[:-1]
            sub[1:] = in_c[1:]
            diag = -(out_c + in_c)
        return sub, diag, sup

    def apply_laplacian(self, values: np.ndarray) -> np.ndarray:
        sub, diag, sup = self._bands
        out = diag * values
        out[:-1] += sup[:-1] * values[1:]
        out[1:] += sub[1:] * values[:-1]
        return out


def line_grid(h: float = 0.02, R: float = 30.0) -> Grid:
    """Symmetric line grid on [-R, R]; R is rounded to an integer multiple of h."""
    if h <= 0:
        raise ValueError("spacing h must be positive")
    M = int(round(R / h))
    if M < 16:
        raise ValueError("line grid needs at least M = 16 (R/h >= 16)")
    R = M * h
    x = (np.arange(2 * M + 1) - M) * h
    w = np.full(2 * M + 1, h)
    w[0] = w[-1] = 0.5 * h
    # uniform cells; faces include the two ghost faces at +-(R + h/2)
    return Grid(kind="line", dim=1, h=h, R=R, M=M, x=x, w=w,
                w_cell=np.full(2 * M + 1, h), face_area=np.ones(2 * M + 2))


def radial_grid(dim: int, h: float = 0.02, R: float = 30.0) -> Grid:
    """Radial grid r_i = i*h, i = 0..M-1, Dirichlet boundary at R = M*h."""
    if dim < 1:
        raise ValueError("dimension must be a positive integer")
    if h <= 0:
        raise ValueError("spacing h must be positive")
    M = int(round(R / h))
    if M < 16:
        raise ValueError("radial grid needs at least M = 16 nodes")
    R = M * h
    r = np.arange(M) * h
    S = sphere_area(dim)
    w = S * r ** (dim - 1) * h
    if dim == 1:
        w[0] *= 0.5  # trapezoid correction at r = 0 (only nonzero for N = 1)
    # exact shell volumes for the conservative operators
    faces = (np.arange(M) + 0.5) * h  # face j sits between node j and node j+1
    face_area = S * faces ** (dim - 1)
    edges_lo = np.maximum(r - 0.5 * h, 0.0)
    edges_hi = r + 0.5 * h
    w_cell = S * (edges_hi ** dim - edges_lo ** dim) / dim
    return Grid(kind="radial", dim=dim, h=h, R=R, M=M, x=r, w=w,
                w_cell=w_cell, face_area=face_area)


@dataclass(frozen=True, eq=False)
class Field:
    """Function samples on a grid.

    ``parity`` is a hint for line grids ("even" when the samples are known to
    be symmetric about x = 0); radial grids ignore it.
    """

    grid: Grid
    values: np.ndarray
    parity: str = "none"

    def __post_init__(self):
        v = np.asarray(self.values)
        if v.ndim != 1 or v.size != self.grid.n:
            raise ValueError(
                f"field length {v.size} does not match grid ({self.grid.n} nodes)")
        if not np.iscomplexobj(v):
            v = v.astype(float)
        object.__setattr__(self, "values", _readonly(v))

    @property
    def is_complex(self) -> bool:
        return np.iscomplexobj(self.values)

    def with_values(self, values: np.ndarray) -> "Field":
        return Field(self.grid, values, self.parity)

    def boundary_amplitude(self) -> float:
        """Largest |value| on the outermost node(s)."""
        v = self.values
        if self.grid.kind == "line":
            return float(max(abs(v[0]), abs(v[-1])))
        return float(abs(v[-1]))

    def check_membership(self) -> None:
        """Verify the discrete finite-energy conditions (no NaN/Inf anywhere
        in mass, gradient, or quasilinear integrands)."""
        v = self.values
        if not np.all(np.isfinite(v.view(float))):
            raise ValueError("field contains non-finite samples")
        g = np.gradient(v, self.grid.h)
        if not np.all(np.isfinite(np.abs(g))):
            raise ValueError("field gradient is non-finite")


def laplacian(f: Field, boundary_tol: Optional[float] = None) -> Field:
    """Discrete Laplacian of ``f`` (line: 3-point stencil; radial:
    v'' + (N-1)/r v' with the symmetry limit 2N(v1-v0)/h^2 at r = 0).

    With ``boundary_tol`` set, fields whose boundary amplitude exceeds it are
    rejected -- a symptom of a domain too small for the data.
    """
    if boundary_tol is not None and f.boundary_amplitude() > boundary_tol:
        raise DomainTruncationError(
            f"boundary amplitude {f.boundary_amplitude():.3e} exceeds "
            f"{boundary_tol:.3e}; enlarge the domain")
    return f.with_values(f.grid.apply_laplacian(f.values))


def gradient(f: Field) -> Field:
    """First derivative: centered differences inside, one-sided at the ends.

    On radial grids this is d/dr.
    """
    return f.with_values(np.gradient(f.values, f.grid.h))


def integrate(f, grid: Optional[Grid] = None) -> float:
    """Quadrature of a real integrand over the domain (weights include the
    sphere-area factor on radial grids)."""
    if isinstance(f, Field):
        values, grid = f.values, f.grid
    else:
        values = np.asarray(f)
        if grid is None:
            raise ValueError("integrating a bare array requires a grid")
    if np.iscomplexobj(values):
        raise TypeError("integrate expects a real integrand; take .real/.imag "
                        "or |.| explicitly")
    return float(np.dot(grid.w, values))


def h1_inner(a: Field, b: Field) -> complex:
    """Discrete H^1 inner product  sum w (a conj(b) + a' conj(b'))."""
    g = a.grid
    da = np.gradient(a.values, g.h)
    db = np.gradient(b.values, g.h)
    return complex(np.dot(g.w, a.values * np.conj(b.values))
                   + np.dot(g.w, da * np.conj(db)))


def h1_norm(a: Field) -> float:
    return math.sqrt(max(h1_inner(a, a).real, 0.0))


# -- model parameters ---------------------------------------------------------


@dataclass(frozen=True)
class ModelParams:
    """Problem data: dimension N, nonlinearity exponent p, and either a
    frequency ``omega`` (stationary-frequency problems) or a constraint mass
    ``c`` (mass-constrained problems)."""

    N: int
    p: float
    omega: Optional[float] = None
    c: Optional[float] = None

    def __post_init__(self):
        if self.N < 1:
            raise ValueError("N must be a positive integer")
        if not self.p > 1.0:
            raise ValueError("nonlinearity exponent p must exceed 1")
        if self.N >= 3 and not self.p < self.sobolev_limit:
            raise ValueError(
                f"p = {self.p} out of range: need p < (3N+2)/(N-2) = "
                f"{self.sobolev_limit:.6g} for N = {self.N}")
        if self.omega is not None and not self.omega > 0:
            raise ValueError("omega must be positive")
        if self.c is not None and not self.c > 0:
            raise ValueError("constraint mass c must be positive")

    @property
    def sobolev_limit(self) -> float:
        if self.N <= 2:
            return math.inf
        return (3.0 * self.N + 2.0) / (self.N - 2.0)

    @property
    def mass_critical_p(self) -> float:
        """Classical mass-critical exponent 1 + 4/N."""
        return 1.0 + 4.0 / self.N

    @property
    def quasilinear_critical_p(self) -> float:
        """Quasilinear mass-critical exponent 3 + 4/N."""
        return 3.0 + 4.0 / self.N

    def require_omega(self) -> float:
        if self.omega is None:
            raise ValueError("this operation needs params.omega")
        return self.omega

    def with_omega(self, omega: float) -> "ModelParams":
        return replace(self, omega=omega)


# -- snapshot I/O --------------------------------------------------------------


def save_field(path, f: Field) -> None:
    """Write a field snapshot: header ``# grid: kind,N,h,R`` then rows
    ``x_or_r, re, im`` at 17 significant digits (bit-exact round trip)."""
    g = f.grid
    v = np.asarray(f.values, dtype=complex)
    with open(path, "w") as fh:
        fh.write(f"# grid: {g.kind},{g.dim},{g.h:.17g},{g.R:.17g}\n")
        for xi, vi in zip(g.x, v):
            fh.write(f"{xi:.17g},{vi.real:.17g},{vi.imag:.17g}\n")


def load_field(path) -> Field:
    """Read a snapshot written by :func:`save_field`."""
    with open(path) as fh:
        header = fh.readline().strip()
        if not header.startswith("# grid:"):
            raise ValueError(f"{path}: missing '# grid:' header")
        kind, dim, h, R = header.split(":", 1)[1].strip().split(",")
        rows = np.loadtxt(fh, delimiter=",", ndmin=2)
    kind = kind.strip()
    if kind == "line":
        grid = line_grid(h=float(h), R=float(R))
    elif kind == "radial":
        grid = radial_grid(dim=int(dim), h=float(h), R=float(R))
    else:
        raise ValueError(f"{path}: unknown grid kind {kind!r}")
    if rows.shape[0] != grid.n:
        raise ValueError(f"{path}: {rows.shape[0]} rows but grid has {grid.n} nodes")
    values = rows[:, 1] + 1j * rows[:, 2]
    if np.all(rows[:, 2] == 0.0):
        values = rows[:, 1].copy()
    return Field(grid, values)
