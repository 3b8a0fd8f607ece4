"""Periodic uniform B-spline spaces on the unit parameter interval.

A space is spanned by N translates of the uniform B-spline of degree p over
the knots {i/N}.  Everything downstream (functionals, discrete gradients,
scheme residuals) integrates with one fixed Gauss-Legendre grid stored here,
so that the exact algebraic identities behind the time integrator hold to
round-off.
"""

from __future__ import annotations

from dataclasses import dataclass
from math import comb

import numpy as np
import scipy.linalg as sla

from .errors import RegularityError

__all__ = [
    "SplineSpace",
    "QuadratureGrid",
    "ControlCurve",
    "ScalarField",
    "build_space",
    "basis_eval",
    "curve_eval",
    "l2_project",
    "assemble_weighted_mass",
]


def _readonly(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a, dtype=float)
    a.setflags(write=False)
    return a


def _local_basis(degree: int, t: float, deriv: int) -> np.ndarray:
    """Nonzero basis values on one knot span, on integer knots.

    Returns b[j] = d^deriv/dx^deriv B_{k-degree+j}(k + t) for j = 0..degree,
    where x lives on the integer knot grid; derivatives are taken with respect
    to x (callers rescale by span width).
    """
    p = degree
    if deriv == 0:
        vals = np.zeros(p + 1)
        vals[0] = 1.0
        for d in range(1, p + 1):
            prev = vals[:d].copy()
            vals[: d + 1] = 0.0
            for j in range(d):
                off = j - d + 1  # index offset of prev[j] relative to the span
                left = (t - off) / d
                right = (off + d - t) / d
                vals[j] += right * prev[j]
                vals[j + 1] += left * prev[j]
        return vals
    # On a uniform integer knot grid the derivative is a plain difference of
    # lower-degree neighbours, iterated deriv times.
    q = p - deriv
    sub = _local_basis(q, t, 0)
    out = np.zeros(p + 1)
    for j in range(p + 1):
        for r in range(deriv + 1):
            idx = j + r - deriv
            if 0 <= idx <= q:
                out[j] += (-1) ** r * comb(deriv, r) * sub[idx]
    return out


@dataclass(frozen=True)
class QuadratureGrid:
    """Fixed Gauss-Legendre grid: `order` nodes in each of the N knot spans."""

    order: int
    nodes: np.ndarray    # (N*order,) parameter values in [0, 1)
    weights: np.ndarray  # (N*order,) positive, summing to 1
    local_coords: np.ndarray   # (order,) node positions within a unit span
    local_weights: np.ndarray  # (order,) weights on a unit span

    @property
    def n_nodes(self) -> int:
        return self.nodes.size


class SplineSpace:
    """Space of N periodic uniform B-splines of degree p on [0, 1).

    Basis function i is supported on [i*h, (i + p + 1)*h] modulo 1, with
    h = 1/N, so at any parameter value exactly p + 1 of them are nonzero.
    Construction precomputes the quadrature grid and the dense collocation
    matrices of basis values/derivatives on it; these drive every integral
    in the package.
    """

    def __init__(self, n_basis: int, degree: int, quad_order: int):
        if degree < 1:
            raise ValueError(f"degree must be >= 1, got {degree}")
        if n_basis < 2 * degree + 1:
            raise ValueError(
                f"n_basis must be >= 2*degree + 1 = {2 * degree + 1} so periodic "
                f"basis functions have distinct supports, got {n_basis}"
            )
        if quad_order < degree + 2:
            raise ValueError(
                f"quad_order must be >= degree + 2 = {degree + 2}, got {quad_order}"
            )
        self.n_basis = int(n_basis)
        self.degree = int(degree)
        self.quad_order = int(quad_order)
        self.span_width = 1.0 / self.n_basis

        x, w = np.polynomial.legendre.leggauss(self.quad_order)
        tloc = (x + 1.0) / 2.0
        wloc = w / 2.0
        h = self.span_width
        nodes = (np.arange(self.n_basis)[:, None] * h + h * tloc[None, :]).ravel()
        weights = np.tile(wloc * h, self.n_basis)
        self.quad = QuadratureGrid(
            order=self.quad_order,
            nodes=_readonly(nodes),
            weights=_readonly(weights),
            local_coords=_readonly(tloc),
            local_weights=_readonly(wloc),
        )

        # Collocation matrices E_d[m, i] = d-th derivative of B_i at node m.
        # The local basis values repeat identically in every span; only the
        # index window shifts, so one small table fills the whole matrix.
        max_deriv = min(2, self.degree)
        mats = []
        for d in range(3):
            E = np.zeros((self.quad.n_nodes, self.n_basis))
            if d <= max_deriv:
                table = np.array(
                    [_local_basis(self.degree, t, d) for t in tloc]
                ) / h**d
                for k in range(self.n_basis):
                    idx = (k - self.degree + np.arange(self.degree + 1)) % self.n_basis
                    for m in range(self.quad_order):
                        E[k * self.quad_order + m, idx] += table[m]
            mats.append(_readonly(E))
        self._design = tuple(mats)

        # Parameter-domain (unweighted) mass matrix and its factorization,
        # shared by projections and the tangential-velocity equation.
        E0 = self._design[0]
        self.param_mass = _readonly(E0.T @ (self.quad.weights[:, None] * E0))
        self._param_chol = sla.cho_factor(np.array(self.param_mass))

    def design(self, deriv: int) -> np.ndarray:
        """Collocation matrix of the deriv-th basis derivatives on the grid."""
        if not 0 <= deriv <= 2:
            raise ValueError(f"deriv must be 0, 1 or 2, got {deriv}")
        if deriv > self.degree:
            raise ValueError(f"deriv={deriv} exceeds degree {self.degree}")
        return self._design[deriv]

    def solve_param_mass(self, rhs: np.ndarray) -> np.ndarray:
        """Solve the unweighted mass system (L2 projection onto the space)."""
        return sla.cho_solve(self._param_chol, rhs)

    def __repr__(self) -> str:
        return (
            f"SplineSpace(n_basis={self.n_basis}, degree={self.degree}, "
            f"quad_order={self.quad_order})"
        )


@dataclass(frozen=True)
class ControlCurve:
    """Closed planar spline curve: N control points with periodic indexing."""

    space: SplineSpace
    points: np.ndarray  # (N, 2)

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float)
        if pts.shape != (self.space.n_basis, 2):
            raise ValueError(
                f"points must have shape ({self.space.n_basis}, 2), got {pts.shape}"
            )
        object.__setattr__(self, "points", _readonly(pts.copy()))

    def with_points(self, points: np.ndarray) -> "ControlCurve":
        return ControlCurve(self.space, points)


@dataclass(frozen=True)
class ScalarField:
    """Scalar spline function: N coefficients with periodic indexing."""

    space: SplineSpace
    coeffs: np.ndarray  # (N,)

    def __post_init__(self):
        c = np.asarray(self.coeffs, dtype=float)
        if c.shape != (self.space.n_basis,):
            raise ValueError(
                f"coeffs must have shape ({self.space.n_basis},), got {c.shape}"
            )
        object.__setattr__(self, "coeffs", _readonly(c.copy()))


def build_space(n_basis: int, degree: int, quad_order: int) -> SplineSpace:
    """Construct a periodic spline space with its fixed quadrature grid."""
    return SplineSpace(n_basis, degree, quad_order)


def basis_eval(space: SplineSpace, u: float, deriv: int = 0):
    """Evaluate the nonzero basis functions (or a derivative) at parameter u.

    Returns (window, values): `window` holds the degree + 1 basis indices that
    are nonzero at u (periodic wrapping), `values` the corresponding values of
    their deriv-th derivatives.
    """
    if deriv < 0 or deriv > space.degree:
        raise ValueError(f"deriv must be in 0..{space.degree}, got {deriv}")
    u = float(u) % 1.0
    x = u * space.n_basis
    k = min(int(x), space.n_basis - 1)
    t = x - k
    values = _local_basis(space.degree, t, deriv) / space.span_width**deriv
    window = (k - space.degree + np.arange(space.degree + 1)) % space.n_basis
    return window, values


def curve_eval(curve: ControlCurve, u: float, deriv: int = 0) -> np.ndarray:
    """Evaluate the curve (or its parameter derivative) at u."""
    window, values = basis_eval(curve.space, u, deriv)
    return values @ curve.points[window]


def l2_project(space: SplineSpace, target) -> ControlCurve:
    """L2-orthogonal projection of a parametric curve onto the spline space.

    `target` maps a parameter value in [0, 1) to a point in the plane; it is
    sampled on the fixed quadrature grid, so the projection minimizes the
    quadrature-discretized L2 distance and satisfies Galerkin orthogonality
    on that grid.
    """
    nodes = space.quad.nodes
    samples = np.asarray([target(u) for u in nodes], dtype=float)
    if samples.shape != (nodes.size, 2):
        raise ValueError("target must return planar points")
    E0 = space.design(0)
    rhs = E0.T @ (space.quad.weights[:, None] * samples)
    try:
        coeffs = space.solve_param_mass(rhs)
    except sla.LinAlgError as exc:  # pragma: no cover - SPD by construction
        raise RegularityError(f"projection mass matrix not SPD: {exc}") from exc
    return ControlCurve(space, coeffs)


def assemble_weighted_mass(space: SplineSpace, weight: np.ndarray) -> np.ndarray:
    """Mass matrix M[i, j] = sum_m qw_m * weight_m * B_i(u_m) B_j(u_m).

    With weight equal to a curve's parametric speed this realizes the L2 inner
    product over the curve (ds = |gamma_u| du).  The weight must be strictly
    positive on the grid; otherwise the matrix may be singular, which is a
    regularity failure of the underlying curve.
    """
    w = np.asarray(weight, dtype=float)
    if w.shape != (space.quad.n_nodes,):
        raise ValueError(
            f"weight must have one value per quadrature node ({space.quad.n_nodes})"
        )
    if not np.all(w > 0.0):
        raise RegularityError("nonpositive weight on the quadrature grid")
    E0 = space.design(0)
    mass = E0.T @ ((space.quad.weights * w)[:, None] * E0)
    # mirror the upper triangle: exact symmetry regardless of BLAS kernel
    upper = np.triu(mass)
    return upper + np.triu(mass, 1).T
