"""Per-step nonlinear systems of the structure-preserving time integrators.

Two residual families:

* scheme 1 (no tangential velocity): midpoint evolution equation, one
  implicit-definition block per discrete gradient, and one conservation
  equation per constraint.
* scheme 2 (tangential velocity): additionally a spline tangential speed W
  driven by the reciprocal-speed redistribution rule, one extra multiplier
  that restores the exact dissipation identity, and the dissipation equation
  itself.

Instantiations: Willmore flow plain / with tangential velocity (driving
functional = bending + k0 * length, no constraints), area-preserving Willmore
(driving = bending, area constrained), Helfrich (driving = bending, area and
length constrained).

All inner products are taken over the midcurve (average of the two time
levels) with the shared quadrature rule, which is what makes the dissipation
and conservation identities exact up to round-off at a converged residual.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import geometry
from .errors import RegularityError, StructureViolationError
from .gradients import (
    GramData,
    PairJets,
    dissipation_rate,
    gram,
    pair_from_jets,
    rhs_area,
    rhs_bending,
    rhs_elastic,
    rhs_length,
)
from .geometry import CurveJets, jets, speed_floor
from .splines import ControlCurve, ScalarField, SplineSpace

__all__ = [
    "DRIVING_TAGS",
    "CONSTRAINT_TAGS",
    "FlowProblem",
    "StepUnknowns",
    "StepRecord",
    "functional_value",
    "assemble_pairing",
    "pack_unknowns",
    "unpack_unknowns",
    "StepSystem",
    "residual_scheme1",
    "residual_scheme2",
    "step_energy_report",
]

DRIVING_TAGS = ("elastic", "bending")
CONSTRAINT_TAGS = ("area", "length")

# Round-off guard for the identity checks: a difference of functional values
# carries this many ulps of the values themselves.
_IDENTITY_EPS_FACTOR = 64.0 * np.finfo(float).eps


@dataclass(frozen=True)
class FlowProblem:
    """Declarative description of one constrained-gradient-flow scheme.

    driving: "elastic" (bending + k0 * length) or "bending".
    constraints: ordered subset of ("area", "length"); area always first.
    tangential: whether the stabilizing tangential velocity (and with it the
    extra dissipation multiplier) is part of the step.
    alpha0: magnitude of the tangential velocity; unused when tangential is
    off.
    """

    driving: str
    k0: float = 0.0
    constraints: tuple = ()
    tangential: bool = False
    alpha0: float = 0.0

    def __post_init__(self):
        if self.driving not in DRIVING_TAGS:
            raise ValueError(f"driving must be one of {DRIVING_TAGS}, got {self.driving!r}")
        cons = tuple(self.constraints)
        if len(cons) != len(set(cons)) or any(c not in CONSTRAINT_TAGS for c in cons):
            raise ValueError(f"constraints must be a subset of {CONSTRAINT_TAGS}, got {cons}")
        if cons != tuple(c for c in CONSTRAINT_TAGS if c in cons):
            raise ValueError("constraints must be ordered (area before length)")
        if self.k0 < 0:
            raise ValueError(f"k0 must be >= 0, got {self.k0}")
        if self.alpha0 < 0:
            raise ValueError(f"alpha0 must be >= 0, got {self.alpha0}")
        object.__setattr__(self, "constraints", cons)

    @property
    def functionals(self) -> tuple:
        """Driving functional first, then the constraints in fixed order."""
        return (self.driving,) + self.constraints

    @property
    def n_constraints(self) -> int:
        return len(self.constraints)

    @property
    def lambda_labels(self) -> tuple:
        labels = ("lambda0",) if self.tangential else ()
        return labels + tuple(f"lambda_{c}" for c in self.constraints)

    def n_unknowns(self, space: SplineSpace) -> int:
        n = space.n_basis
        count = 2 * n * (1 + len(self.functionals))
        if self.tangential:
            count += n
        return count + len(self.lambda_labels)


@dataclass(frozen=True)
class StepUnknowns:
    """All unknowns of one time step.

    gamma_next is the new curve; gradients holds one spline field per
    functional (driving first, constraints after); w_field is the tangential
    speed (present iff the problem is tangential); lambdas collects the
    multipliers in label order (dissipation multiplier first when present,
    then one per constraint).
    """

    gamma_next: ControlCurve
    gradients: tuple
    w_field: ScalarField | None
    lambdas: np.ndarray

    def validate(self, problem: FlowProblem) -> None:
        if len(self.gradients) != 1 + problem.n_constraints:
            raise ValueError(
                f"expected {1 + problem.n_constraints} gradient fields, "
                f"got {len(self.gradients)}"
            )
        if problem.tangential and self.w_field is None:
            raise ValueError("tangential scheme requires a w_field")
        if not problem.tangential and self.w_field is not None:
            raise ValueError("non-tangential scheme must not carry a w_field")
        if len(self.lambdas) != len(problem.lambda_labels):
            raise ValueError(
                f"expected {len(problem.lambda_labels)} multipliers, got {len(self.lambdas)}"
            )


@dataclass
class StepRecord:
    """Per-step log entry: time data, functional values, multipliers and
    solver statistics.  Optional fields stay None when not applicable."""

    n: int = 0
    t: float = 0.0
    dt: float | None = None
    f0: float = 0.0
    f_area: float | None = None
    f_length: float | None = None
    lambda0: float | None = None
    lambda_area: float | None = None
    lambda_length: float | None = None
    newton_iters: int | None = None
    residual_norm: float | None = None
    wall_ms: float | None = None
    dissipation_target: float | None = None
    step_velocity: float | None = None


def functional_value(tag: str, curve: ControlCurve, k0: float = 0.0) -> float:
    if tag == "elastic":
        return geometry.elastic_energy(curve, k0)
    if tag == "bending":
        return geometry.bending(curve)
    if tag == "area":
        return geometry.area(curve)
    if tag == "length":
        return geometry.length(curve)
    raise ValueError(f"unknown functional tag {tag!r}")


def assemble_pairing(tag: str, pair: PairJets, space: SplineSpace, k0: float = 0.0) -> np.ndarray:
    """Right-hand-side pairing vector of one functional's discrete gradient."""
    if tag == "elastic":
        return rhs_elastic(pair, space, k0)
    if tag == "bending":
        return rhs_bending(pair, space)
    if tag == "area":
        return rhs_area(pair, space)
    if tag == "length":
        return rhs_length(pair, space)
    raise ValueError(f"unknown functional tag {tag!r}")


def pack_unknowns(problem: FlowProblem, unknowns: StepUnknowns) -> np.ndarray:
    """Flatten step unknowns into the solver vector (fixed block order)."""
    unknowns.validate(problem)
    parts = [unknowns.gamma_next.points.ravel()]
    parts.extend(g.points.ravel() for g in unknowns.gradients)
    if problem.tangential:
        parts.append(unknowns.w_field.coeffs)
    parts.append(np.asarray(unknowns.lambdas, dtype=float))
    return np.concatenate(parts)


def unpack_unknowns(problem: FlowProblem, space: SplineSpace, x: np.ndarray) -> StepUnknowns:
    """Rebuild structured unknowns from the solver vector."""
    n = space.n_basis
    expected = problem.n_unknowns(space)
    if x.shape != (expected,):
        raise ValueError(f"expected a vector of {expected} unknowns, got {x.shape}")
    pos = 0

    def take(count):
        nonlocal pos
        block = x[pos : pos + count]
        pos += count
        return block

    gamma = ControlCurve(space, take(2 * n).reshape(n, 2))
    grads = tuple(
        ControlCurve(space, take(2 * n).reshape(n, 2)) for _ in problem.functionals
    )
    w = ScalarField(space, take(n)) if problem.tangential else None
    lambdas = np.array(take(len(problem.lambda_labels)))
    return StepUnknowns(gamma_next=gamma, gradients=grads, w_field=w, lambdas=lambdas)


class StepSystem:
    """Residual of one time step as a function of the flat unknown vector.

    Quantities that depend only on the new curve's control points (pair jets,
    midcurve weights, gradient right-hand sides) are cached and refreshed only
    when those coordinates change.  Finite-difference Jacobian columns that
    perturb any other unknown therefore reuse them bit-for-bit; the residual
    values are identical to a from-scratch assembly.
    """

    def __init__(self, problem: FlowProblem, prev: ControlCurve, dt: float):
        if dt <= 0:
            raise ValueError(f"dt must be positive, got {dt}")
        problem_space = prev.space
        self.problem = problem
        self.space = problem_space
        self.prev = prev
        self.dt = float(dt)
        self.n = problem_space.n_basis
        self._E0 = problem_space.design(0)
        self._E1 = problem_space.design(1)
        self._qw = problem_space.quad.weights
        self._prev_jets = jets(prev)
        if not self._prev_jets.regular:
            raise RegularityError("previous curve is not regular on the grid")
        self._prev_nodal = self._E0 @ prev.points
        self._gamma_key: np.ndarray | None = None

    # -- stage A: everything determined by the new curve ------------------

    def _refresh(self, gamma_pts: np.ndarray) -> None:
        if self._gamma_key is not None and np.array_equal(self._gamma_key, gamma_pts):
            return
        self._gamma_key = gamma_pts.copy()
        du = self._E1 @ gamma_pts
        duu = self.space.design(2) @ gamma_pts if self.space.degree >= 2 else np.zeros_like(du)
        speed = np.hypot(du[:, 0], du[:, 1])
        det = du[:, 0] * duu[:, 1] - du[:, 1] * duu[:, 0]
        cur = CurveJets(
            du=du,
            duu=duu,
            speed=speed,
            det=det,
            speed_floor=speed_floor(gamma_pts, self.n),
        )
        pair = pair_from_jets(cur, self._prev_jets)
        mid_speed = np.hypot(pair.mid_du[:, 0], pair.mid_du[:, 1])
        mid_floor = speed_floor(0.5 * (gamma_pts + self.prev.points), self.n)
        if np.min(mid_speed) <= mid_floor:
            raise RegularityError("midcurve not regular on the grid")
        self._pair = pair
        self._wg_mid = self._qw * mid_speed
        self._tau_mid = pair.mid_du / mid_speed[:, None]
        self._gamma_nodal = self._E0 @ gamma_pts
        self._rhs = [
            assemble_pairing(tag, pair, self.space, self.problem.k0)
            for tag in self.problem.functionals
        ]
        if self.problem.tangential:
            self._w_rhs = self.problem.alpha0 * (self._E1.T @ (self._qw / mid_speed))

    # -- full residual -----------------------------------------------------

    def residual(self, x: np.ndarray) -> np.ndarray:
        problem = self.problem
        n = self.n
        n_fun = len(problem.functionals)
        pos = 0
        gamma_pts = x[pos : pos + 2 * n].reshape(n, 2)
        pos += 2 * n
        coeff = [x[pos + 2 * n * j : pos + 2 * n * (j + 1)].reshape(n, 2) for j in range(n_fun)]
        pos += 2 * n * n_fun
        if problem.tangential:
            w = x[pos : pos + n]
            pos += n
            lam0 = x[pos]
            pos += 1
        else:
            w = None
            lam0 = 0.0
        lam_cons = x[pos:]

        self._refresh(gamma_pts)
        wg = self._wg_mid
        E0 = self._E0

        fields = [E0 @ c for c in coeff]
        # Gram of the gradient fields over the midcurve, mirrored exactly.
        G = np.zeros((n_fun, n_fun))
        for i in range(n_fun):
            for j in range(i, n_fun):
                G[i, j] = G[j, i] = float(
                    np.dot(wg, np.einsum("ij,ij->i", fields[i], fields[j]))
                )

        combo = (-1.0 + lam0) * fields[0]
        for j, lam in enumerate(lam_cons, start=1):
            combo = combo + lam * fields[j]
        if problem.tangential:
            w_nodal = E0 @ w
            w_tau = w_nodal[:, None] * self._tau_mid
            combo = combo + w_tau
            wdot = np.array(
                [
                    float(np.dot(wg, w_nodal * np.einsum("ij,ij->i", self._tau_mid, f)))
                    for f in fields
                ]
            )
        else:
            wdot = np.zeros(n_fun)

        velocity = (self._gamma_nodal - self._prev_nodal) / self.dt
        evolution = E0.T @ (wg[:, None] * (velocity - combo))

        blocks = [evolution.ravel()]
        for f, rhs in zip(fields, self._rhs):
            blocks.append((E0.T @ (wg[:, None] * f) - rhs).ravel())
        if problem.tangential:
            blocks.append(self.space.param_mass @ w - self._w_rhs)
            rate = dissipation_rate(
                GramData(G, problem.functionals),
                GramData(G[1:, 1:], problem.constraints),
            )
            blocks.append(
                np.array([(-1.0 + lam0) * G[0, 0]
                          + float(np.dot(lam_cons, G[1:, 0]))
                          + wdot[0] - rate])
            )
        for i in range(1, n_fun):
            blocks.append(
                np.array([(-1.0 + lam0) * G[0, i]
                          + float(np.dot(lam_cons, G[1:, i]))
                          + wdot[i]])
            )
        return np.concatenate(blocks)

    def residual_unknowns(self, unknowns: StepUnknowns) -> np.ndarray:
        return self.residual(pack_unknowns(self.problem, unknowns))


def residual_scheme1(
    problem: FlowProblem, prev: ControlCurve, unknowns: StepUnknowns, dt: float
) -> np.ndarray:
    """Residual of the scheme without tangential velocity."""
    if problem.tangential:
        raise ValueError("residual_scheme1 requires a problem with tangential=False")
    return StepSystem(problem, prev, dt).residual_unknowns(unknowns)


def residual_scheme2(
    problem: FlowProblem, prev: ControlCurve, unknowns: StepUnknowns, dt: float
) -> np.ndarray:
    """Residual of the scheme with tangential velocity and its multiplier."""
    if not problem.tangential:
        raise ValueError("residual_scheme2 requires a problem with tangential=True")
    return StepSystem(problem, prev, dt).residual_unknowns(unknowns)


def step_energy_report(
    problem: FlowProblem,
    prev: ControlCurve,
    converged: StepUnknowns,
    dt: float,
    *,
    rtol_dissipation: float = 1e-9,
    rtol_conservation: float = 1e-10,
) -> StepRecord:
    """Evaluate functionals at the accepted step and verify the exact
    identities the integrator is supposed to preserve.

    The driving functional's difference quotient must match the Gram-ratio
    target relatively to rtol_dissipation, and every constrained functional
    must be conserved to rtol_conservation.  A violation beyond the round-off
    floor of the difference quotient raises StructureViolationError: that is
    an assembly bug, not a step-size problem.
    """
    converged.validate(problem)
    space = prev.space
    cur = converged.gamma_next
    tags = problem.functionals
    vals_prev = [functional_value(tag, prev, problem.k0) for tag in tags]
    vals_cur = [functional_value(tag, cur, problem.k0) for tag in tags]

    midcurve = ControlCurve(space, 0.5 * (cur.points + prev.points))
    gram_full = gram(converged.gradients, midcurve, labels=tags)
    gram_cons = GramData(gram_full.matrix[1:, 1:], problem.constraints)
    rate = dissipation_rate(gram_full, gram_cons)

    # tolerance = relative part + the round-off floor of the difference
    # quotient itself (functional values are exact only to a few ulps)
    quotient = (vals_cur[0] - vals_prev[0]) / dt
    floor = _IDENTITY_EPS_FACTOR * max(1.0, abs(vals_cur[0]), abs(vals_prev[0])) / dt
    if abs(quotient - rate) > rtol_dissipation * abs(rate) + floor:
        raise StructureViolationError(
            f"dissipation identity violated: (F0^n - F0^(n-1))/dt = {quotient!r} "
            f"but Gram target = {rate!r}"
        )
    for tag, v_new, v_old in zip(tags[1:], vals_cur[1:], vals_prev[1:]):
        tol = rtol_conservation * abs(v_old) + _IDENTITY_EPS_FACTOR * max(1.0, abs(v_old))
        if abs(v_new - v_old) > tol:
            raise StructureViolationError(
                f"conservation of {tag} violated: {v_old!r} -> {v_new!r}"
            )

    mid_speed = jets(midcurve).speed
    wg = space.quad.weights * mid_speed
    vel_nodal = (space.design(0) @ (cur.points - prev.points)) / dt
    velocity = float(np.sqrt(np.dot(wg, np.einsum("ij,ij->i", vel_nodal, vel_nodal))))

    record = StepRecord(
        dt=dt,
        f0=vals_cur[0],
        dissipation_target=rate,
        step_velocity=velocity,
    )
    for tag, value in zip(tags[1:], vals_cur[1:]):
        setattr(record, f"f_{tag}", value)
    for label, value in zip(problem.lambda_labels, converged.lambdas):
        setattr(record, label, float(value))
    return record


def initial_record(problem: FlowProblem, curve: ControlCurve) -> StepRecord:
    """Step-0 log entry: functional values only."""
    record = StepRecord(n=0, t=0.0, f0=functional_value(problem.driving, curve, problem.k0))
    for tag in problem.constraints:
        setattr(record, f"f_{tag}", functional_value(tag, curve, problem.k0))
    return record
