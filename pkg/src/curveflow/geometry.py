"""Pointwise curve geometry and the area / length / bending functionals.

All quantities live on the space's fixed quadrature grid.  Arc length never
appears symbolically: every integral over the curve is a parameter-domain
integral weighted by the local speed |gamma_u|.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import RegularityError
from .splines import ControlCurve

__all__ = [
    "ROT_90",
    "rot90",
    "CurveJets",
    "jets",
    "area",
    "length",
    "bending",
    "elastic_energy",
]

# Fixed quarter-turn J = [[0, -1], [1, 0]]; J @ tangent is the inward normal
# of a positively (counter-clockwise) oriented curve, and
# det(a, b) = (J a) . b for planar vectors a, b.
ROT_90 = np.array([[0.0, -1.0], [1.0, 0.0]])
ROT_90.setflags(write=False)


def rot90(v: np.ndarray) -> np.ndarray:
    """Apply the quarter turn to one vector or to rows of an (n, 2) array."""
    v = np.asarray(v, dtype=float)
    return np.stack([-v[..., 1], v[..., 0]], axis=-1)


# Speeds below _REGULARITY_EPS * n_basis * max(1, |points|) are round-off of
# the derivative evaluation itself, so such curves count as degenerate.
_REGULARITY_EPS = 1e-13


@dataclass(frozen=True)
class CurveJets:
    """First and second parameter derivatives plus derived scalars per node.

    speed = |gamma_u| and det = det(gamma_u, gamma_uu); curvature is
    det / speed**3 wherever the curve is regular.
    """

    du: np.ndarray    # (n, 2) first derivative at quadrature nodes
    duu: np.ndarray   # (n, 2) second derivative
    speed: np.ndarray  # (n,)  |gamma_u|
    det: np.ndarray    # (n,)  det(gamma_u, gamma_uu)
    speed_floor: float = 0.0  # representable round-off of the speed

    @property
    def regular(self) -> bool:
        return bool(np.min(self.speed) > self.speed_floor)

    def curvature(self) -> np.ndarray:
        if not self.regular:
            raise RegularityError("curvature undefined: vanishing speed on the grid")
        return self.det / self.speed**3

    def unit_tangent(self) -> np.ndarray:
        if not self.regular:
            raise RegularityError("tangent undefined: vanishing speed on the grid")
        return self.du / self.speed[:, None]


def speed_floor(points: np.ndarray, n_basis: int) -> float:
    """Regularity threshold for curves with these control points."""
    return _REGULARITY_EPS * n_basis * max(1.0, float(np.max(np.abs(points))))


def jets(curve: ControlCurve) -> CurveJets:
    """Evaluate derivative jets of the curve on the quadrature grid."""
    space = curve.space
    du = space.design(1) @ curve.points
    duu = space.design(2) @ curve.points if space.degree >= 2 else np.zeros_like(du)
    speed = np.hypot(du[:, 0], du[:, 1])
    det = du[:, 0] * duu[:, 1] - du[:, 1] * duu[:, 0]
    return CurveJets(
        du=du,
        duu=duu,
        speed=speed,
        det=det,
        speed_floor=speed_floor(curve.points, space.n_basis),
    )


def area(curve: ControlCurve) -> float:
    """Signed enclosed area, positive for counter-clockwise orientation.

    Computed as -1/2 * int gamma . (J gamma_u) du; the integrand is a
    piecewise polynomial of degree 2p - 1, so the fixed quadrature rule
    integrates it exactly.
    """
    space = curve.space
    gamma = space.design(0) @ curve.points
    du = space.design(1) @ curve.points
    integrand = gamma[:, 0] * (-du[:, 1]) + gamma[:, 1] * du[:, 0]
    return -0.5 * float(np.dot(space.quad.weights, integrand))


def length(curve: ControlCurve) -> float:
    """Curve length int |gamma_u| du on the quadrature grid."""
    j = jets(curve)
    if not j.regular:
        raise RegularityError("length undefined: vanishing speed on the grid")
    return float(np.dot(curve.space.quad.weights, j.speed))


def bending(curve: ControlCurve) -> float:
    """Bending energy int k^2 ds = int det(gamma_u, gamma_uu)^2 / |gamma_u|^5 du."""
    j = jets(curve)
    if not j.regular:
        raise RegularityError("bending energy undefined: vanishing speed on the grid")
    return float(np.dot(curve.space.quad.weights, j.det**2 / j.speed**5))


def elastic_energy(curve: ControlCurve, k0: float) -> float:
    """Bending energy plus k0 times length."""
    if k0 < 0:
        raise ValueError(f"k0 must be >= 0, got {k0}")
    j = jets(curve)
    if not j.regular:
        raise RegularityError("elastic energy undefined: vanishing speed on the grid")
    w = curve.space.quad.weights
    return float(np.dot(w, j.det**2 / j.speed**5) + k0 * np.dot(w, j.speed))
