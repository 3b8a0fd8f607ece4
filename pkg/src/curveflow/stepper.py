"""Newton solution of the per-step system and the adaptive time loop.

The per-step Jacobian is assembled column-by-column with forward differences
on the full residual and factorized densely; system sizes stay in the low
hundreds, so correctness and reproducibility win over speed here.  Time
increments follow the dissipation speed: the first step inverts the initial
dissipation rate, later steps invert the last observed one, both capped by
tau.  A step whose Newton iteration fails ends the run as a breakdown unless
halving retries are enabled.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    LinearDependenceError,
    NonConvergenceError,
    RegularityError,
    SingularJacobianError,
    StructureViolationError,
)
from .gradients import (
    GramData,
    _solve_spd_checked,
    dissipation_rate,
    gram,
    pair_jets,
    solve_gradient,
)
from .geometry import jets
from .schemes import (
    FlowProblem,
    StepSystem,
    StepUnknowns,
    assemble_pairing,
    initial_record,
    pack_unknowns,
    step_energy_report,
    unpack_unknowns,
)
from .splines import ControlCurve, ScalarField

__all__ = [
    "NewtonConfig",
    "TimeController",
    "RunState",
    "newton_solve",
    "initial_guess",
    "dt_first",
    "dt_next",
    "run_flow",
]

TERMINATION_REACHED_END = "reached_t_end"
TERMINATION_BREAKDOWN = "breakdown"
TERMINATION_STRUCTURE = "structure_violation"

_FAILURE_NAMES = {
    NonConvergenceError: "NON_CONVERGENCE",
    SingularJacobianError: "SINGULAR_JACOBIAN",
    RegularityError: "REGULARITY",
    LinearDependenceError: "LINEAR_DEPENDENCE",
}


@dataclass
class NewtonConfig:
    """Newton settings.  residual_tol is absolute but rescaled by the initial
    residual infinity norm when that norm exceeds one."""

    residual_tol: float = 1e-11
    max_iters: int = 50
    jacobian_fd_step: float = 1e-7
    retry_on_failure: bool = False
    max_retries: int = 3

    def __post_init__(self):
        if self.residual_tol <= 0:
            raise ValueError("residual_tol must be positive")
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")
        if self.jacobian_fd_step <= 0:
            raise ValueError("jacobian_fd_step must be positive")


@dataclass
class TimeController:
    """Adaptive time-increment state: the cap tau, the end time, the last
    accepted increment and the last two driving-functional values."""

    tau_cap: float
    t_end: float
    dt_history: float | None = None
    energy_history: list = field(default_factory=list)

    def __post_init__(self):
        if self.tau_cap <= 0:
            raise ValueError("tau_cap must be positive")

    def push(self, f0: float, dt: float) -> None:
        self.energy_history.append(float(f0))
        if len(self.energy_history) > 2:
            del self.energy_history[0]
        self.dt_history = float(dt)


@dataclass
class RunState:
    """Outcome of a flow run: the step log, the final curve and why we
    stopped ("reached_t_end", "breakdown" or "structure_violation")."""

    records: list
    curve: ControlCurve
    t: float
    n: int
    termination: str
    failure: str | None = None
    message: str = ""


def newton(fun, x0: np.ndarray, cfg: NewtonConfig):
    """Damping-free Newton iteration with forward-difference Jacobian.

    Returns (x, iterations, residual_norm).  The convergence target is
    cfg.residual_tol times max(1, initial residual infinity norm).  Residual
    evaluations that raise regularity/linear-dependence errors or produce
    non-finite values after the first point are treated as non-convergence:
    the iterates have left the admissible set.
    """
    x = np.array(x0, dtype=float)

    def err_quiet():
        # non-finite intermediate values are handled explicitly (they signal
        # breakdown), so the floating-point warnings carry no information
        return np.errstate(divide="ignore", invalid="ignore", over="ignore")

    with err_quiet():
        r = fun(x)
    if not np.all(np.isfinite(r)):
        raise NonConvergenceError("non-finite residual at the initial guess", 0, float("nan"))
    scale = max(1.0, float(np.max(np.abs(r))))
    target = cfg.residual_tol * scale
    n = x.size

    for iteration in range(cfg.max_iters + 1):
        norm = float(np.max(np.abs(r)))
        if norm <= target:
            return x, iteration, norm
        if iteration == cfg.max_iters:
            break
        jac = np.empty((n, n))
        try:
            with err_quiet():
                for k in range(n):
                    step = cfg.jacobian_fd_step * max(1.0, abs(x[k]))
                    saved = x[k]
                    x[k] = saved + step
                    jac[:, k] = (fun(x) - r) / step
                    x[k] = saved
        except (RegularityError, LinearDependenceError) as exc:
            raise NonConvergenceError(
                f"residual assembly failed during Jacobian: {exc}", iteration, norm
            ) from exc
        if not np.all(np.isfinite(jac)):
            raise NonConvergenceError("non-finite Jacobian entries", iteration, norm)
        try:
            dx = np.linalg.solve(jac, r)
        except np.linalg.LinAlgError as exc:
            raise SingularJacobianError(f"Jacobian factorization failed: {exc}") from exc
        x = x - dx
        try:
            with err_quiet():
                r = fun(x)
        except (RegularityError, LinearDependenceError) as exc:
            raise NonConvergenceError(
                f"residual assembly failed at iterate {iteration + 1}: {exc}",
                iteration + 1,
                norm,
            ) from exc
        if not np.all(np.isfinite(r)):
            finite = r[np.isfinite(r)]
            raise NonConvergenceError(
                "non-finite residual",
                iteration + 1,
                float(np.max(np.abs(finite), initial=0.0)),
            )
    raise NonConvergenceError(
        f"no convergence within {cfg.max_iters} iterations "
        f"(residual {norm:.3e}, target {target:.3e})",
        cfg.max_iters,
        norm,
    )


def newton_solve(
    problem: FlowProblem,
    prev: ControlCurve,
    dt: float,
    guess: StepUnknowns,
    cfg: NewtonConfig,
):
    """Solve one time step.  Returns (unknowns, iterations, residual_norm).

    Raises NonConvergenceError, SingularJacobianError, or propagates a
    regularity/linear-dependence failure from the assembly of the starting
    point.
    """
    system = StepSystem(problem, prev, dt)
    x0 = pack_unknowns(problem, guess)
    x, iterations, norm = newton(system.residual, x0, cfg)
    return unpack_unknowns(problem, prev.space, x), iterations, norm


def initial_guess(problem: FlowProblem, prev: ControlCurve, dt: float) -> StepUnknowns:
    """Predictor for the step unknowns.

    The new curve starts at the previous one; each gradient field solves its
    defining equation at the coincident pair; the tangential speed solves its
    own linear equation on the previous curve; the constraint multipliers
    solve the continuous-limit system at those gradients, and the dissipation
    multiplier starts at zero (it vanishes in the small-step limit).
    """
    space = prev.space
    pair = pair_jets(prev, prev)
    grads = tuple(
        solve_gradient(assemble_pairing(tag, pair, space, problem.k0), prev)
        for tag in problem.functionals
    )
    w = None
    lambdas = []
    if problem.tangential:
        speed = jets(prev).speed
        if np.min(speed) <= 0.0:
            raise RegularityError("previous curve is not regular on the grid")
        w_rhs = problem.alpha0 * (space.design(1).T @ (space.quad.weights / speed))
        w = ScalarField(space, space.solve_param_mass(w_rhs))
        lambdas.append(0.0)
    if problem.constraints:
        G = gram(grads, prev, labels=problem.functionals).matrix
        lam = _solve_spd_checked(G[1:, 1:], G[1:, 0])
        lambdas.extend(lam.tolist())
    return StepUnknowns(
        gamma_next=prev,
        gradients=grads,
        w_field=w,
        lambdas=np.array(lambdas, dtype=float),
    )


def _initial_rate(problem: FlowProblem, curve: ControlCurve) -> float:
    """Dissipation rate at the coincident pair (start of a run)."""
    space = curve.space
    pair = pair_jets(curve, curve)
    grads = [
        solve_gradient(assemble_pairing(tag, pair, space, problem.k0), curve)
        for tag in problem.functionals
    ]
    G = gram(grads, curve, labels=problem.functionals)
    Gc = GramData(G.matrix[1:, 1:], problem.constraints)
    return dissipation_rate(G, Gc)


def dt_first(problem: FlowProblem, initial: ControlCurve, tau_cap: float) -> float:
    """First increment: the inverse of the initial dissipation rate, capped.

    Without constraints this is min(tau, 1 / |gradient norm|^2); with
    constraints the rate generalizes to the Gram-determinant ratio, evaluated
    through the constraint solve.  A nonpositive rate (stationary start)
    yields the cap.
    """
    if tau_cap <= 0:
        raise ValueError("tau_cap must be positive")
    rate = _initial_rate(problem, initial)
    if rate >= 0.0:
        return tau_cap
    return min(tau_cap, -1.0 / rate)


def dt_next(controller: TimeController) -> float:
    """Next increment from the last dissipation speed, capped by tau.

    A nonpositive energy decrement (stagnation near a steady state, or
    round-off) falls back to the cap.
    """
    if len(controller.energy_history) < 2 or controller.dt_history is None:
        raise ValueError("dt_next requires two prior energy values")
    older, newer = controller.energy_history[-2], controller.energy_history[-1]
    decrement_rate = (older - newer) / controller.dt_history
    if decrement_rate <= 0.0:
        return controller.tau_cap
    return min(controller.tau_cap, 1.0 / decrement_rate)


def run_flow(
    problem: FlowProblem,
    initial: ControlCurve,
    controller: TimeController,
    newton_cfg: NewtonConfig,
    uniform_dt: float | None = None,
    on_step=None,
) -> RunState:
    """Advance the flow until t reaches the controller's end time or a step
    fails.  Every accepted step is verified by step_energy_report and logged;
    failures terminate the run with an explicit cause, never silently.
    `on_step(n, t, curve)`, when given, observes each accepted step."""
    if uniform_dt is not None and uniform_dt <= 0:
        raise ValueError("uniform_dt must be positive")
    if not jets(initial).regular:
        raise RegularityError("initial curve is not regular on the grid")

    records = [initial_record(problem, initial)]
    state = RunState(
        records=records,
        curve=initial,
        t=0.0,
        n=0,
        termination=TERMINATION_REACHED_END,
    )
    controller.energy_history = [records[0].f0]
    controller.dt_history = None
    t_end = controller.t_end
    if t_end <= 0.0:
        return state

    prev = initial
    t = 0.0
    n = 0

    def fail(exc, during: str) -> RunState:
        state.termination = TERMINATION_BREAKDOWN
        state.failure = _FAILURE_NAMES.get(type(exc), type(exc).__name__)
        state.message = f"{during}: {exc}"
        return state

    try:
        dt = uniform_dt if uniform_dt is not None else dt_first(problem, initial, controller.tau_cap)
    except (RegularityError, LinearDependenceError) as exc:
        return fail(exc, "first time increment")

    while t < t_end * (1.0 - 1e-12):
        tic = time.perf_counter()
        retries = 0
        while True:
            try:
                guess = initial_guess(problem, prev, dt)
                unknowns, iterations, norm = newton_solve(problem, prev, dt, guess, newton_cfg)
                break
            except (
                NonConvergenceError,
                SingularJacobianError,
                RegularityError,
                LinearDependenceError,
            ) as exc:
                if newton_cfg.retry_on_failure and retries < newton_cfg.max_retries:
                    retries += 1
                    dt = dt / 2.0
                    continue
                return fail(exc, f"step {n + 1} at t = {t!r} with dt = {dt!r}")

        try:
            record = step_energy_report(problem, prev, unknowns, dt)
        except StructureViolationError as exc:
            state.termination = TERMINATION_STRUCTURE
            state.failure = "STRUCTURE_VIOLATION"
            state.message = f"step {n + 1} at t = {t!r}: {exc}"
            return state

        t += dt
        n += 1
        record.n = n
        record.t = t
        record.newton_iters = iterations
        record.residual_norm = norm
        record.wall_ms = (time.perf_counter() - tic) * 1e3
        records.append(record)
        controller.push(record.f0, dt)
        prev = unknowns.gamma_next
        state.curve = prev
        state.t = t
        state.n = n
        if on_step is not None:
            on_step(n, t, prev)

        if t >= t_end * (1.0 - 1e-12):
            break
        dt = uniform_dt if uniform_dt is not None else dt_next(controller)

    state.termination = TERMINATION_REACHED_END
    return state
