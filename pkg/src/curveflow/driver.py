"""Run orchestration: config -> problem -> time loop -> files on disk."""

from __future__ import annotations

import os
from concurrent.futures import ProcessPoolExecutor

from .config import RunConfig
from .errors import ConfigError
from .outputs import (
    ensure_dir,
    fmt,
    read_snapshot_points,
    write_snapshot,
    write_steps_csv,
    write_summary,
    write_svg,
)
from .presets import get_preset
from .schemes import FlowProblem
from .splines import ControlCurve, build_space, l2_project
from .stepper import (
    NewtonConfig,
    RunState,
    TERMINATION_BREAKDOWN,
    TERMINATION_REACHED_END,
    TERMINATION_STRUCTURE,
    TimeController,
    run_flow,
)

__all__ = ["resolve_problem", "build_initial", "execute", "run", "lambda_study"]

EXIT_OK = 0
EXIT_BREAKDOWN = 2
EXIT_STRUCTURE = 3
EXIT_CONFIG = 4

_EXIT_BY_TERMINATION = {
    TERMINATION_REACHED_END: EXIT_OK,
    TERMINATION_BREAKDOWN: EXIT_BREAKDOWN,
    TERMINATION_STRUCTURE: EXIT_STRUCTURE,
}


def resolve_problem(config: RunConfig) -> FlowProblem:
    if config.scheme == "willmore_plain":
        return FlowProblem(driving="elastic", k0=config.k0, tangential=False)
    if config.scheme == "willmore_tv":
        return FlowProblem(
            driving="elastic", k0=config.k0, tangential=True, alpha0=config.alpha0
        )
    if config.scheme == "apw_tv":
        return FlowProblem(
            driving="bending", constraints=("area",), tangential=True, alpha0=config.alpha0
        )
    if config.scheme == "helfrich_tv":
        return FlowProblem(
            driving="bending",
            constraints=("area", "length"),
            tangential=True,
            alpha0=config.alpha0,
        )
    raise ConfigError(f"unknown scheme {config.scheme!r}")


def build_initial(config: RunConfig, space) -> ControlCurve:
    if config.preset is not None:
        return l2_project(space, get_preset(config.preset).curve)
    return read_snapshot_points(config.points_file, space)


def execute(config: RunConfig) -> RunState:
    """Run the configured flow and write all outputs to the output directory."""
    space = build_space(config.n_basis, config.degree, config.effective_quad_order)
    initial = build_initial(config, space)
    problem = resolve_problem(config)
    controller = TimeController(
        tau_cap=config.tau_cap if config.tau_cap is not None else config.uniform_dt,
        t_end=config.t_end,
    )
    newton_cfg = NewtonConfig(
        residual_tol=config.residual_tol,
        max_iters=config.max_iters,
        jacobian_fd_step=config.jacobian_fd_step,
        retry_on_failure=config.retry_on_failure,
        max_retries=config.max_retries,
    )

    out_dir = config.output_dir
    ensure_dir(out_dir)
    snap_dir = os.path.join(out_dir, "snapshots")
    stride = config.snapshot_stride
    last_snapshot = -1

    def snapshot(n: int, curve: ControlCurve) -> None:
        nonlocal last_snapshot
        write_snapshot(os.path.join(snap_dir, f"step_{n}.csv"), curve)
        if config.svg:
            write_svg(os.path.join(snap_dir, f"step_{n}.svg"), curve)
        last_snapshot = n

    observer = None
    if stride:
        ensure_dir(snap_dir)
        snapshot(0, initial)

        def observer(n, _t, curve):
            if n % stride == 0:
                snapshot(n, curve)

    state = run_flow(
        problem, initial, controller, newton_cfg, uniform_dt=config.uniform_dt, on_step=observer
    )
    if stride and state.n != last_snapshot:
        snapshot(state.n, state.curve)

    write_steps_csv(os.path.join(out_dir, "steps.csv"), state.records, config.log_timing)
    write_summary(os.path.join(out_dir, "summary.json"), summarize(config, state))
    return state


def summarize(config: RunConfig, state: RunState) -> dict:
    records = state.records
    first = records[0]
    last = records[-1]
    summary = {
        "scheme": config.scheme,
        "preset": config.preset,
        "termination": state.termination,
        "failure": state.failure,
        "message": state.message,
        "exit_code": _EXIT_BY_TERMINATION[state.termination],
        "steps": state.n,
        "t_final": state.t,
        "F0_initial": first.f0,
        "F0_final": last.f0,
    }
    for tag in ("area", "length"):
        start = getattr(first, f"f_{tag}")
        if start is None:
            continue
        drift = max(
            abs(getattr(r, f"f_{tag}") - start) for r in records if getattr(r, f"f_{tag}") is not None
        )
        summary[f"{tag}_initial"] = start
        summary[f"max_{tag}_drift_rel"] = drift / abs(start) if start else drift
    lam0 = [abs(r.lambda0) for r in records if r.lambda0 is not None]
    if lam0:
        summary["max_abs_lambda0"] = max(lam0)
    return summary


def run(config: RunConfig) -> int:
    """Execute a run; the exit status encodes how it terminated."""
    state = execute(config)
    return _EXIT_BY_TERMINATION[state.termination]


def _lambda_case(args) -> tuple:
    index, config = args
    state = execute(config)
    lam0 = [abs(r.lambda0) for r in state.records if r.lambda0 is not None]
    return (
        index,
        config.uniform_dt,
        max(lam0) if lam0 else float("nan"),
        _EXIT_BY_TERMINATION[state.termination],
    )


def lambda_study(config: RunConfig, i_max: int, jobs: int | None = None):
    """Sweep uniform time steps dt = t_end / (100 * 2**i) for i = 0..i_max and
    tabulate the largest dissipation multiplier of each run.

    Each case writes into its own subdirectory of the study's output
    directory.  A failing case aborts the study but the table rows of the
    completed cases are kept.
    """
    if config.scheme != "willmore_tv":
        raise ConfigError("lambda_study requires scheme = willmore_tv")
    if i_max < 0:
        raise ConfigError("i_max must be >= 0")
    base_dir = config.output_dir
    ensure_dir(base_dir)
    cases = []
    for i in range(i_max + 1):
        dt = config.t_end / (100.0 * 2.0**i)
        cases.append(
            (
                i,
                config.with_overrides(
                    uniform_dt=dt,
                    tau_cap=None,
                    output_dir=os.path.join(base_dir, f"run_i{i}"),
                ),
            )
        )

    results = []
    if jobs is None:
        jobs = min(len(cases), os.cpu_count() or 1)
    if jobs <= 1:
        iterator = map(_lambda_case, cases)
        for result in iterator:
            results.append(result)
            if result[3] != EXIT_OK:
                break
    else:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            completed = list(pool.map(_lambda_case, cases))
        for result in completed:
            results.append(result)
            if result[3] != EXIT_OK:
                break

    rows = ["i,dt,max_abs_lambda0"]
    for index, dt, lam, _code in results:
        rows.append(f"{index},{fmt(dt)},{fmt(lam)}")
    with open(os.path.join(base_dir, "lambda_study.csv"), "w", encoding="utf-8") as handle:
        handle.write("\n".join(rows) + "\n")

    failed = any(code != EXIT_OK for _, _, _, code in results)
    return results, (EXIT_BREAKDOWN if failed else EXIT_OK)
