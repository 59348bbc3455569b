import math

import numpy as np
import pytest

from bnls import Field, make_grid, make_params
from bnls.evolution import (
    BlowupVerdict,
    EvolutionState,
    InsufficientDataError,
    Integrator,
    NonFiniteFieldError,
    Outcome,
    StepControl,
    detect_blowup,
    evolve,
    fit_power_law,
    step,
)
from bnls.spectral import plan_for, weighted_relative_error


@pytest.fixture(scope="module")
def grid3():
    return make_grid(3, 40.0, 384)


def gaussian(grid, amplitude=1.0, width=1.0, chirp=0.0):
    return grid.sample(lambda r: amplitude * np.exp(-((r / width) ** 2) / 2) * np.exp(1j * chirp * r**2))


def test_free_flow_matches_exact_propagator(grid3):
    params = make_params(3, 1.0, mu=0.5)
    plan = plan_for(grid3)
    u0 = gaussian(grid3, chirp=0.1)
    run = evolve(u0, params, 0.3, 0.1, control=StepControl(nonlinear=0.0), detect=False)
    phase = np.exp(-1j * (plan.rho4 + 0.5 * plan.rho2) * 0.3)
    exact = Field(grid3, plan.multiplier(u0.values, phase))
    assert weighted_relative_error(run.state.u, exact) < 1e-9


def test_integrator_is_fourth_order():
    # a moderately stiff grid; at very large ρ_max⁴h the oscillatory stiff
    # modes cause the usual irregular order reduction of exponential RK
    grid = make_grid(3, 40.0, 128)
    params = make_params(3, 1.0)
    plan = plan_for(grid)
    integ = Integrator(params, plan)
    u0 = gaussian(grid, amplitude=1.5, width=3.0)

    def solve(steps):
        values = u0.values.copy()
        coeffs = plan.to_coeffs(values)
        for _ in range(steps):
            coeffs, values, _ = integ.step(coeffs, values, 0.2 / steps)
        return values

    reference = solve(640)
    errors = [np.linalg.norm(solve(n) - reference) for n in (10, 20, 40)]
    orders = [math.log2(errors[i] / errors[i + 1]) for i in range(2)]
    assert all(3.8 < order < 4.2 for order in orders)


@pytest.mark.parametrize("mu", [-1.0, 0.0, 1.0])
def test_conservation_smooth_regime(grid3, mu):
    params = make_params(3, 1.0, mu)
    run = evolve(gaussian(grid3), params, 1.0, 0.1, detect=False)
    m0, e0 = run.records[0].mass, run.records[0].energy
    assert max(abs(r.mass - m0) / m0 for r in run.records) <= 1e-8
    assert max(abs(r.energy - e0) / abs(e0) for r in run.records) <= 1e-8
    assert run.max_drift["mass_rel"] <= 1e-8 and run.max_drift["energy_rel"] <= 1e-8


def test_soliton_rotates_in_phase(q_d3_sigma2):
    q = q_d3_sigma2.profile
    params = q_d3_sigma2.params
    u, t = q, 0.0
    for _ in range(4):
        run = evolve(u, params, 0.25, 0.25, detect=False)
        u, t = run.state.u, t + 0.25
        assert weighted_relative_error(u, q * np.exp(1j * t)) <= 1e-6


def test_single_step_and_nonfinite_guard(grid3):
    params = make_params(3, 1.0)
    plan = plan_for(grid3)
    state = EvolutionState(t=0.0, u=gaussian(grid3), dt=1e-3)
    out = step(state, params, plan)
    assert out.t == pytest.approx(1e-3) and out.step_count == 1
    bad = EvolutionState(t=0.0, u=Field(grid3, np.full(grid3.n, np.nan)), dt=1e-3)
    with pytest.raises(NonFiniteFieldError):
        step(bad, params, plan)


def test_dt_floor_reports_resolution_exhausted(grid3):
    params = make_params(3, 1.0)
    run = evolve(gaussian(grid3), params, 1.0, 0.1, dt0=1e-3, control=StepControl(dt_min=0.5), detect=False)
    assert run.verdict.outcome is Outcome.RESOLUTION_EXHAUSTED
    assert "step size" in run.verdict.reason


def test_run_unpacks_and_validates(grid3):
    params = make_params(3, 1.0)
    records, verdict = evolve(gaussian(grid3), params, 0.05, 0.01)
    assert [r.t for r in records] == pytest.approx([0.0, 0.01, 0.02, 0.03, 0.04, 0.05])
    assert verdict.outcome is Outcome.BOUNDED_ON_HORIZON
    with pytest.raises(ValueError):
        evolve(gaussian(grid3), params, -1.0, 0.1)


def test_on_record_callback(grid3):
    seen = []
    evolve(gaussian(grid3), make_params(3, 1.0), 0.02, 0.01, on_record=seen.append, detect=False)
    assert len(seen) == 3


def test_verdict_requires_time_exactly_for_blowup():
    with pytest.raises(ValueError):
        BlowupVerdict(Outcome.BLOWUP_DETECTED)
    with pytest.raises(ValueError):
        BlowupVerdict(Outcome.BOUNDED_ON_HORIZON, T_estimate=1.0)


@pytest.mark.parametrize("T, p", [(1.0, 0.5), (0.3, 1.0), (2.0, 0.25)])
def test_power_law_fit_recovers_manufactured_exponent(T, p):
    t = T - np.geomspace(0.5 * T, 1e-4 * T, 40)
    y = 3.0 * (T - t) ** (-p)
    T_fit, p_fit, logc, rms = fit_power_law(t, y)
    assert T_fit == pytest.approx(T, rel=1e-6)
    assert p_fit == pytest.approx(p, rel=0.01)
    assert math.exp(logc) == pytest.approx(3.0, rel=0.01)
    assert rms < 1e-8


def test_detector_on_manufactured_histories():
    T = 0.7
    t = T - np.geomspace(T, 1e-5, 60)
    blowup = np.column_stack((t, (T - t) ** -0.5))
    verdict = detect_blowup(blowup)
    assert verdict.outcome is Outcome.BLOWUP_DETECTED
    assert verdict.T_estimate == pytest.approx(T, rel=1e-4)
    assert verdict.growth_exponent == pytest.approx(0.5, rel=0.01)

    ts = np.linspace(0, 5, 60)
    bounded = np.column_stack((ts, 1.0 + 0.5 * np.sin(ts)))
    assert detect_blowup(bounded).outcome is Outcome.BOUNDED_ON_HORIZON
    assert detect_blowup(bounded, horizon_reached=False).outcome is Outcome.RESOLUTION_EXHAUSTED

    # large but oscillating growth is not a power-law singularity
    wiggly = np.column_stack((ts, np.exp(ts) * (2 + np.sin(20 * ts))))
    assert detect_blowup(wiggly).outcome is not Outcome.BLOWUP_DETECTED

    with pytest.raises(InsufficientDataError):
        detect_blowup(blowup[:5])
