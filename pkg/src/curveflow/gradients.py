"""Discrete gradients of the area, length and bending functionals.

A discrete gradient of F at a pair of curves is the spline field f with

    F[curve] - F[other] = <f, curve - other>  over the midcurve,

together with consistency at coincident arguments.  The right-hand sides
below come from exact algebraic rewrites of the functional differences, so
the identity holds to round-off on the shared quadrature grid.  The field
itself is recovered by solving the midcurve-weighted mass system.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla

from .errors import LinearDependenceError, RegularityError
from .geometry import CurveJets, jets, rot90
from .splines import ControlCurve, SplineSpace, assemble_weighted_mass

__all__ = [
    "PairJets",
    "pair_jets",
    "pair_from_jets",
    "rhs_area",
    "rhs_length",
    "rhs_bending",
    "rhs_elastic",
    "solve_gradient",
    "GramData",
    "gram",
    "dissipation_rate",
    "PIVOT_RTOL",
]

# A constraint Gram matrix counts as singular when an elimination pivot drops
# below this fraction of its largest diagonal entry.
PIVOT_RTOL = 1e-12


@dataclass(frozen=True)
class PairJets:
    """Jets of a curve pair plus the symmetrized coefficients that appear in
    the discrete-gradient right-hand sides.

    t_hat is the midpoint secant direction (gamma_u + other_u) / (speed sum):
    a convex-combination direction with |t_hat| <= 1 that collapses to the
    unit tangent when the curves coincide.  bend_vec and bend_scal are the
    symmetrized coefficient fields of the bending right-hand side; mid_du and
    mid_duu are jets of the averaged curve.
    """

    first: CurveJets
    second: CurveJets
    t_hat: np.ndarray      # (n, 2)
    bend_vec: np.ndarray   # (n, 2)
    bend_scal: np.ndarray  # (n,)
    mid_du: np.ndarray     # (n, 2)
    mid_duu: np.ndarray    # (n, 2)

    @property
    def regular(self) -> bool:
        return self.first.regular and self.second.regular


def pair_jets(curve: ControlCurve, other: ControlCurve) -> PairJets:
    """Evaluate pair jets for (curve, other) on the shared quadrature grid."""
    if curve.space is not other.space:
        raise ValueError("pair_jets requires curves on the same space")
    return pair_from_jets(jets(curve), jets(other))


def pair_from_jets(j1: CurveJets, j2: CurveJets) -> PairJets:
    """Pair jets from precomputed per-curve jets (shared assembly path)."""
    g1, g2 = j1.speed, j2.speed
    gsum = g1 + g2
    if np.min(gsum) <= max(j1.speed_floor, j2.speed_floor):
        # Both speeds vanish at a node; every pair coefficient is undefined.
        t_hat = np.zeros_like(j1.du)
        bend_vec = np.zeros_like(j1.du)
        bend_scal = np.zeros_like(g1)
    else:
        t_hat = (j1.du + j2.du) / gsum[:, None]
        # near-degenerate speeds overflow the reciprocal powers; the resulting
        # non-finite residual is the breakdown signal, not an error here
        with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
            a = 1.0 / g1
            b = 1.0 / g2
            # g1^-5 g2^-5 * sum_{l=0..4} g1^l g2^(4-l), evaluated as
            # a*b*(a^4 + a^3 b + ... + b^4) to avoid overflow of the raw powers.
            horner = b**4 + a * (b**3 + a * (b**2 + a * (b + a)))
            fac = 0.5 * (j1.det**2 + j2.det**2) * (a * b) * horner
            bend_scal = 0.5 * (a**5 + b**5) * (j1.det + j2.det)
            bend_vec = fac[:, None] * t_hat
    return PairJets(
        first=j1,
        second=j2,
        t_hat=t_hat,
        bend_vec=bend_vec,
        bend_scal=bend_scal,
        mid_du=0.5 * (j1.du + j2.du),
        mid_duu=0.5 * (j1.duu + j2.duu),
    )


def rhs_area(pair: PairJets, space: SplineSpace) -> np.ndarray:
    """Pairing vector of the area difference: v -> -int J(mid_du) . v du.

    Returned as an (N, 2) array over the vector basis (component k of row i
    pairs with basis function B_i in coordinate k).
    """
    qw = space.quad.weights
    integrand = -rot90(pair.mid_du)
    return space.design(0).T @ (qw[:, None] * integrand)


def rhs_length(pair: PairJets, space: SplineSpace) -> np.ndarray:
    """Pairing vector of the length difference: v -> int t_hat . v_u du."""
    floor = max(pair.first.speed_floor, pair.second.speed_floor)
    if np.min(pair.first.speed + pair.second.speed) <= floor:
        raise RegularityError("length pairing undefined: both speeds vanish at a node")
    qw = space.quad.weights
    return space.design(1).T @ (qw[:, None] * pair.t_hat)


def rhs_bending(pair: PairJets, space: SplineSpace) -> np.ndarray:
    """Pairing vector of the bending difference.

    Three terms: the symmetrized coefficient field against v_u, and the
    scalar field against J(mid_du) . v_uu and -J(mid_duu) . v_u.  Requires
    second derivatives, hence degree >= 2.
    """
    if space.degree < 2:
        raise ValueError("bending pairing needs degree >= 2 (second derivatives)")
    if not pair.regular:
        raise RegularityError("bending pairing undefined: vanishing speed on the grid")
    qw = space.quad.weights
    h = pair.bend_scal[:, None]
    du_integrand = -pair.bend_vec - h * rot90(pair.mid_duu)
    duu_integrand = h * rot90(pair.mid_du)
    return space.design(1).T @ (qw[:, None] * du_integrand) + space.design(2).T @ (
        qw[:, None] * duu_integrand
    )


def rhs_elastic(pair: PairJets, space: SplineSpace, k0: float) -> np.ndarray:
    """Pairing vector of the elastic energy: bending plus k0 times length."""
    out = rhs_bending(pair, space)
    if k0 != 0.0:
        out = out + k0 * rhs_length(pair, space)
    return out


def solve_gradient(rhs: np.ndarray, midcurve: ControlCurve) -> ControlCurve:
    """Invert the midcurve-weighted mass pairing to recover the gradient field.

    The x and y components decouple into two systems with the same symmetric
    positive definite matrix; a dense Cholesky factorization solves both.
    """
    space = midcurve.space
    mid = jets(midcurve)
    if not mid.regular:
        raise RegularityError("gradient solve undefined: midcurve not regular")
    mass = assemble_weighted_mass(space, mid.speed)
    try:
        chol = sla.cho_factor(mass)
    except sla.LinAlgError as exc:
        raise RegularityError(f"weighted mass matrix not SPD: {exc}") from exc
    return ControlCurve(space, sla.cho_solve(chol, np.asarray(rhs, dtype=float)))


@dataclass(frozen=True)
class GramData:
    """Matrix of midcurve inner products of gradient fields, with the label
    order recording which gradient occupies which row."""

    matrix: np.ndarray
    labels: tuple

    @property
    def size(self) -> int:
        return self.matrix.shape[0]


def gram(gradients, midcurve: ControlCurve, labels=None) -> GramData:
    """Gram matrix G[i, j] = <f_i, f_j> over the midcurve.

    Entries are quadrature sums of the pointwise fields weighted by the
    midcurve speed; the matrix is symmetrized exactly by mirroring the upper
    triangle.
    """
    space = midcurve.space
    mid = jets(midcurve)
    if not mid.regular:
        raise RegularityError("Gram matrix undefined: midcurve not regular")
    wg = space.quad.weights * mid.speed
    values = [space.design(0) @ g.points for g in gradients]
    m = len(values)
    G = np.zeros((m, m))
    for i in range(m):
        for j in range(i, m):
            G[i, j] = float(np.dot(wg, np.einsum("ij,ij->i", values[i], values[j])))
            G[j, i] = G[i, j]
    if labels is None:
        labels = tuple(f"f{i}" for i in range(m))
    return GramData(matrix=G, labels=tuple(labels))


def _solve_spd_checked(matrix: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    """Solve a small SPD system by unpivoted Cholesky, rejecting tiny pivots.

    Raises LinearDependenceError when a pivot falls below PIVOT_RTOL times
    the largest diagonal entry, which is the numerical criterion for the
    gradients being linearly dependent.
    """
    A = np.array(matrix, dtype=float)
    b = np.array(rhs, dtype=float)
    m = A.shape[0]
    if m == 0:
        return b
    tol = PIVOT_RTOL * float(np.max(np.diag(A)))
    L = np.zeros_like(A)
    for k in range(m):
        d = A[k, k] - np.dot(L[k, :k], L[k, :k])
        if not d > tol:
            raise LinearDependenceError(
                f"constraint Gram pivot {d:.3e} below threshold {tol:.3e}"
            )
        L[k, k] = np.sqrt(d)
        for i in range(k + 1, m):
            L[i, k] = (A[i, k] - np.dot(L[i, :k], L[k, :k])) / L[k, k]
    y = sla.solve_triangular(L, b, lower=True)
    return sla.solve_triangular(L.T, y, lower=False)


def dissipation_rate(gram_full: GramData, gram_constraints: GramData | None = None) -> float:
    """Exact target rate of change of the driving functional.

    With the driving gradient in row 0 of `gram_full` and the constraint
    block in `gram_constraints`, solve the constraint system for auxiliary
    multipliers and evaluate  -<f0, f0> + sum_j lam_j <f_j, f0>,  which
    equals minus the Gram-determinant ratio but avoids forming near-singular
    determinants.  With no constraints the rate is simply -<f0, f0>.
    """
    G = gram_full.matrix
    m = G.shape[0] - 1  # number of constraints
    if m == 0:
        return -float(G[0, 0])
    if gram_constraints is None or gram_constraints.size != m:
        raise ValueError("constraint Gram block of matching size is required")
    b = G[1:, 0]
    lam = _solve_spd_checked(gram_constraints.matrix, b)
    return -float(G[0, 0]) + float(np.dot(lam, b))
