"""Step residuals of the four scheme instantiations and the energy report."""

import numpy as np
import pytest

from curveflow import (
    ControlCurve,
    FlowProblem,
    NewtonConfig,
    StepUnknowns,
    StructureViolationError,
    area,
    bending,
    build_space,
    elastic_energy,
    get_preset,
    initial_guess,
    l2_project,
    length,
    newton_solve,
    residual_scheme1,
    residual_scheme2,
    step_energy_report,
)
from curveflow.schemes import StepSystem, pack_unknowns, unpack_unknowns


def unit_circle(u):
    return np.array([np.cos(2 * np.pi * u), np.sin(2 * np.pi * u)])


WILLMORE_TV = FlowProblem(driving="elastic", k0=4.0, tangential=True, alpha0=10.0)
WILLMORE_PLAIN = FlowProblem(driving="elastic", k0=4.0, tangential=False)
APW = FlowProblem(driving="bending", constraints=("area",), tangential=True, alpha0=1.0)
HELFRICH = FlowProblem(
    driving="bending", constraints=("area", "length"), tangential=True, alpha0=1.0
)


@pytest.fixture(scope="module")
def star25():
    sp = build_space(25, 3, 5)
    return l2_project(sp, get_preset("willmore_star").curve)


@pytest.fixture(scope="module")
def helfrich30():
    sp = build_space(30, 3, 5)
    return l2_project(sp, get_preset("helfrich_star").curve)


# ------------------------------------------------------------- FlowProblem


def test_flow_problem_validation():
    with pytest.raises(ValueError):
        FlowProblem(driving="area")
    with pytest.raises(ValueError):
        FlowProblem(driving="bending", constraints=("length", "area"))
    with pytest.raises(ValueError):
        FlowProblem(driving="bending", constraints=("area", "area"))
    with pytest.raises(ValueError):
        FlowProblem(driving="elastic", k0=-1.0)


def test_unknown_counts():
    sp30 = build_space(30, 3, 5)
    sp25 = build_space(25, 3, 5)
    # two-constraint tangential scheme: 9N + 3 unknowns
    assert HELFRICH.n_unknowns(sp30) == 9 * 30 + 3 == 273
    assert APW.n_unknowns(sp30) == 7 * 30 + 2
    assert WILLMORE_TV.n_unknowns(sp25) == 5 * 25 + 1
    assert WILLMORE_PLAIN.n_unknowns(sp25) == 4 * 25


def test_pack_unpack_roundtrip(star25):
    problem = WILLMORE_TV
    guess = initial_guess(problem, star25, 1e-6)
    x = pack_unknowns(problem, guess)
    assert x.shape == (problem.n_unknowns(star25.space),)
    back = unpack_unknowns(problem, star25.space, x)
    assert np.array_equal(back.gamma_next.points, guess.gamma_next.points)
    assert all(
        np.array_equal(a.points, b.points) for a, b in zip(back.gradients, guess.gradients)
    )
    assert np.array_equal(back.w_field.coeffs, guess.w_field.coeffs)
    assert np.array_equal(back.lambdas, guess.lambdas)


def test_residual_dispatch_validates_tangential_flag(star25):
    guess = initial_guess(WILLMORE_PLAIN, star25, 1e-6)
    with pytest.raises(ValueError):
        residual_scheme2(WILLMORE_PLAIN, star25, guess, 1e-6)
    guess_tv = initial_guess(WILLMORE_TV, star25, 1e-6)
    with pytest.raises(ValueError):
        residual_scheme1(WILLMORE_TV, star25, guess_tv, 1e-6)


# ---------------------------------------------------------------- residuals


def test_stationary_circle_near_zero_residual():
    # a unit circle with k0 = 1 is a discrete near-critical point of the
    # elastic energy: plugging it in unchanged with zero gradients leaves
    # only the spatial discretization error
    sp = build_space(30, 3, 5)
    circle = l2_project(sp, unit_circle)
    problem = FlowProblem(driving="elastic", k0=1.0, tangential=False)
    unknowns = StepUnknowns(
        gamma_next=circle,
        gradients=(ControlCurve(sp, np.zeros((30, 2))),),
        w_field=None,
        lambdas=np.zeros(0),
    )
    residual = residual_scheme1(problem, circle, unknowns, 1e-3)
    assert np.max(np.abs(residual)) < 1e-3


def test_elastic_driving_merges_bending_and_length(star25):
    # schemes with driving = elastic carry one gradient unknown whose
    # right-hand side is the bending pairing plus k0 times the length pairing
    from curveflow import pair_jets, rhs_bending, rhs_elastic, rhs_length

    sp = star25.space
    pair = pair_jets(star25, star25)
    merged = rhs_elastic(pair, sp, 4.0)
    split = rhs_bending(pair, sp) + 4.0 * rhs_length(pair, sp)
    assert np.array_equal(merged, split)


def test_converged_step_residual_small(star25):
    problem = WILLMORE_TV
    dt = 2.051005785188684e-07  # first adaptive increment for this data
    guess = initial_guess(problem, star25, dt)
    scale = max(1.0, float(np.max(np.abs(residual_scheme2(problem, star25, guess, dt)))))
    unknowns, iterations, norm = newton_solve(problem, star25, dt, guess, NewtonConfig())
    fresh = residual_scheme2(problem, star25, unknowns, dt)
    assert np.max(np.abs(fresh)) < 1e-10 * scale
    assert iterations <= 10


def test_residual_reassembly_bit_identical(star25):
    problem = WILLMORE_TV
    dt = 1e-6
    guess = initial_guess(problem, star25, dt)
    unknowns, _, _ = newton_solve(problem, star25, dt, guess, NewtonConfig())
    first = residual_scheme2(problem, star25, unknowns, dt)
    second = residual_scheme2(problem, star25, unknowns, dt)
    assert np.array_equal(first, second)


def test_zero_alpha_forces_zero_tangential_speed(star25):
    problem = FlowProblem(driving="elastic", k0=4.0, tangential=True, alpha0=0.0)
    dt = 1e-6
    guess = initial_guess(problem, star25, dt)
    unknowns, _, _ = newton_solve(problem, star25, dt, guess, NewtonConfig())
    assert np.max(np.abs(unknowns.w_field.coeffs)) < 1e-12
    # the preserved quantities agree with the tangential-free scheme's
    record_tv = step_energy_report(problem, star25, unknowns, dt)
    plain = WILLMORE_PLAIN
    guess_p = initial_guess(plain, star25, dt)
    unknowns_p, _, _ = newton_solve(plain, star25, dt, guess_p, NewtonConfig())
    record_p = step_energy_report(plain, star25, unknowns_p, dt)
    assert record_tv.dissipation_target == pytest.approx(record_p.dissipation_target, rel=1e-6)
    assert record_tv.f0 == pytest.approx(record_p.f0, rel=1e-9)


# --------------------------------------------------------- step_energy_report


def test_willmore_step_dissipates(star25):
    problem = WILLMORE_TV
    dt = 1e-6
    guess = initial_guess(problem, star25, dt)
    unknowns, _, _ = newton_solve(problem, star25, dt, guess, NewtonConfig())
    record = step_energy_report(problem, star25, unknowns, dt)
    assert record.f0 < elastic_energy(star25, 4.0)
    assert record.dissipation_target < 0
    assert record.lambda0 is not None and abs(record.lambda0) < 1.0


def test_helfrich_step_conserves_area_and_length(helfrich30):
    problem = HELFRICH
    from curveflow import dt_first

    dt = dt_first(problem, helfrich30, 1e-3)  # initial dissipation is drastic
    guess = initial_guess(problem, helfrich30, dt)
    unknowns, _, _ = newton_solve(problem, helfrich30, dt, guess, NewtonConfig())
    record = step_energy_report(problem, helfrich30, unknowns, dt)
    area0 = area(helfrich30)
    length0 = length(helfrich30)
    assert abs(record.f_area - area0) / abs(area0) < 1e-10
    assert abs(record.f_length - length0) / abs(length0) < 1e-10
    assert record.f0 <= bending(helfrich30)
    assert record.lambda_area is not None and record.lambda_length is not None


def test_near_stationary_circle_step():
    # the k0 = 1 unit circle is a discrete near-minimizer: one converged step
    # barely moves it and the dissipation target is discretization-error small
    sp = build_space(30, 3, 5)
    circle = l2_project(sp, unit_circle)
    problem = FlowProblem(driving="elastic", k0=1.0, tangential=True, alpha0=1.0)
    dt = 1e-3
    guess = initial_guess(problem, circle, dt)
    unknowns, _, _ = newton_solve(problem, circle, dt, guess, NewtonConfig())
    record = step_energy_report(problem, circle, unknowns, dt)
    assert abs(record.dissipation_target) < 1e-7
    assert np.max(np.abs(unknowns.gamma_next.points - circle.points)) < 1e-6
    assert abs(record.f0 - elastic_energy(circle, 1.0)) < 1e-9


def test_energy_report_rejects_forged_step(helfrich30):
    # feeding a step that did not solve the system must trip the structure gate
    problem = HELFRICH
    dt = 1e-3
    guess = initial_guess(problem, helfrich30, dt)
    moved = ControlCurve(
        helfrich30.space, helfrich30.points * 1.01  # violates area conservation
    )
    forged = StepUnknowns(
        gamma_next=moved,
        gradients=guess.gradients,
        w_field=guess.w_field,
        lambdas=guess.lambdas,
    )
    with pytest.raises(StructureViolationError):
        step_energy_report(problem, helfrich30, forged, dt)


def test_step_system_cache_transparent(star25):
    # cached assembly (same gamma, different other unknowns) must equal a
    # fresh assembly bit for bit
    problem = WILLMORE_TV
    dt = 1e-6
    guess = initial_guess(problem, star25, dt)
    x = pack_unknowns(problem, guess)
    system = StepSystem(problem, star25, dt)
    base = system.residual(x)
    perturbed = x.copy()
    perturbed[-1] += 1e-5  # multiplier entry: gamma cache stays valid
    warm = system.residual(perturbed)
    cold = StepSystem(problem, star25, dt).residual(perturbed)
    assert np.array_equal(warm, cold)
    again = system.residual(x)
    assert np.array_equal(base, again)
