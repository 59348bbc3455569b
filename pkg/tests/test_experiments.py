import math

import numpy as np
import pytest

from bnls import make_grid, make_params
from bnls.cutoffs import make_cutoff
from bnls.diagnostics import energy
from bnls.evolution import StepControl
from bnls.experiments import (
    Theorem,
    bubble_constants,
    criterion_energycritical,
    criterion_masscritical,
    criterion_supercritical,
    decide_threshold,
    dilate,
    fit_growth_floor,
    fit_rate,
    nr_scaling_probe,
    rate_alpha,
    rate_functional,
    virial_audit,
)
from bnls.groundstate import bubble_report, explicit_W
from bnls.spectral import sobolev_norm


def gaussian(grid, amplitude=1.0, width=1.0, chirp=0.0):
    return grid.sample(lambda r: amplitude * np.exp(-((r / width) ** 2) / 2) * np.exp(1j * chirp * r**2))


class TestSupercriticalCriterion:
    def test_scaled_ground_state_sides(self, q_d3_sigma2):
        params = q_d3_sigma2.params
        above = criterion_supercritical(1.2 * q_d3_sigma2.profile, params, q_d3_sigma2)
        below = criterion_supercritical(0.8 * q_d3_sigma2.profile, params, q_d3_sigma2)
        # E[λQ] < 0 already for λ = 1.2 when s_c = 1/2
        assert above.satisfied and above.theorem is Theorem.SUPERCRITICAL
        assert not below.satisfied and below.expected == "global existence"

    def test_threshold_branch_for_positive_energy(self, q_d3_sigma2):
        params = q_d3_sigma2.params
        u = 1.05 * q_d3_sigma2.profile
        verdict = criterion_supercritical(u, params, q_d3_sigma2)
        assert energy(u, params) > 0
        assert verdict.branch == "ii_threshold" and verdict.satisfied
        assert verdict.quantities["norm_product"] > verdict.quantities["norm_product_Q"]

    def test_threshold_needs_ground_state(self):
        grid = make_grid(3, 30.0, 256)
        with pytest.raises(ValueError, match="ground state"):
            criterion_supercritical(gaussian(grid, 0.1), make_params(3, 2.0))

    def test_mu_branches(self):
        grid = make_grid(3, 30.0, 256)
        strong = gaussian(grid, 4.0)
        pos = criterion_supercritical(strong, make_params(3, 2.0, 1.0))
        assert pos.branch == "i_mu_positive" and pos.satisfied
        with pytest.raises(ValueError, match="kappa"):
            criterion_supercritical(strong, make_params(3, 2.0, -1.0))
        neg = criterion_supercritical(strong, make_params(3, 2.0, -1.0), kappa=0.5)
        assert neg.branch == "i_mu_negative" and neg.kappa_used == 0.5
        assert neg.quantities["bound"] == pytest.approx(-0.5 * neg.quantities["mass"])

    def test_parameters_outside_range(self):
        grid = make_grid(3, 30.0, 256)
        with pytest.raises(ValueError):
            criterion_supercritical(gaussian(grid), make_params(3, 1.0))

    def test_decide_threshold_boundary(self):
        q = {"energy_mass": 1.0, "energy_mass_Q": 1.0, "norm_product": 2.0, "norm_product_Q": 1.0}
        verdict = decide_threshold(q)
        assert verdict.branch == "ii_boundary" and not verdict.satisfied


def test_masscritical_criterion():
    grid = make_grid(2, 30.0, 256)
    params = make_params(2, 2.0, 1.0)
    assert criterion_masscritical(gaussian(grid, 4.0), params).satisfied
    assert not criterion_masscritical(gaussian(grid, 0.5), params).satisfied
    assert criterion_masscritical(gaussian(grid, 4.0), params.with_mu(0.0)).branch == "ii_mu_zero"
    with pytest.raises(ValueError):
        criterion_masscritical(gaussian(grid), params.with_mu(-1.0))
    with pytest.raises(ValueError):
        criterion_masscritical(gaussian(make_grid(3, 30.0, 256)), make_params(3, 2.0))


def test_energycritical_criterion():
    consts = bubble_constants(5)
    assert consts.energy == pytest.approx(2 / 5 * consts.lap_sq, rel=1e-10)
    # the tapered samples reproduce the whole-space constants once the tail is handled
    assert bubble_report(5, make_grid(5, 100.0, 1024)).lap_sq == pytest.approx(consts.lap_sq, rel=1e-4)
    with pytest.raises(ValueError):
        bubble_constants(4)
    # d = 8: W decays like r^{-4}, so grid quadrature of λW is clean
    d = 8
    params = make_params(d, 1.0)
    grid = make_grid(d, 100.0, 1024)
    w = explicit_W(d, grid)
    above = criterion_energycritical(1.1 * w, params)
    assert above.satisfied and above.expected == "finite-time blowup"
    below = criterion_energycritical(0.9 * w, params, w=w)
    assert not below.satisfied and below.expected == "global existence"
    with pytest.raises(ValueError):
        criterion_energycritical(w, params.with_mu(-1.0))


def test_rate_alpha():
    assert rate_alpha(make_params(3, 2.0)) == pytest.approx(0.5)
    assert rate_alpha(make_params(5, 1.0)) == pytest.approx(0.75)


@pytest.mark.parametrize("p", [0.3, 0.5, 0.8])
def test_rate_fit_recovers_manufactured_exponent(p):
    # ‖Δu‖ = (T−t)^{−p} gives g ∝ (T−t)^{2−2p}
    T = 0.5
    t = T - np.geomspace(0.4, 1e-5, 200)
    records = np.column_stack((t, (T - t) ** (-p)))
    fit = fit_rate(records, T)
    assert fit.slope == pytest.approx(2 - 2 * p, rel=0.01)
    assert fit.beta_measured == pytest.approx(fit.slope / (2 - fit.slope))
    exact = (T - t) ** (2 - 2 * p) / (2 - 2 * p)
    np.testing.assert_allclose(rate_functional(t, (T - t) ** (-p), T), exact, rtol=1e-10)


def test_rate_fit_errors():
    T = 0.5
    t = T - np.geomspace(0.4, 1e-2, 10)
    records = np.column_stack((t, (T - t) ** -0.5))
    with pytest.raises(ValueError, match="too short"):
        fit_rate(records, T)
    with pytest.raises(ValueError):
        rate_functional(np.array([0.0, 1.0]), np.array([1.0, 1.0]), 0.5)


def test_growth_floor_on_quadratic_growth():
    t = np.linspace(0.0, 10.0, 101)
    floor = fit_growth_floor(np.column_stack((t, 1.0 + 0.3 * t**2)))
    assert floor.holds and floor.c >= 0.3
    assert 1.5 < floor.exponent < 2.1


def test_dilation_preserves_mass_and_scales_laplacian():
    grid = make_grid(3, 60.0, 512)
    u = gaussian(grid, chirp=0.2)
    v = dilate(u, 1.3)
    assert v.l2() == pytest.approx(u.l2(), rel=1e-9)
    assert sobolev_norm(v, 2.0) == pytest.approx(1.3**2 * sobolev_norm(u, 2.0), rel=1e-8)


@pytest.mark.parametrize("d, sigma", [(3, 2.0), (5, 1.0)])
def test_nr_scaling_relation(d, sigma):
    grid = make_grid(d, 60.0, 512)
    params = make_params(d, sigma)
    probe = nr_scaling_probe(params, gaussian(grid, chirp=0.3), [0.8, 1.0, 1.25])
    assert probe.samples == 9
    assert probe.relation_error <= 0.1


def test_nr_probe_rejects_real_data_and_degenerate_scales():
    grid = make_grid(3, 60.0, 256)
    params = make_params(3, 2.0)
    with pytest.raises(ValueError, match="complex-phase"):
        nr_scaling_probe(params, gaussian(grid), [0.8, 1.0])
    with pytest.raises(ValueError, match="degenerate"):
        nr_scaling_probe(params, gaussian(grid, chirp=0.3), [1.0, 1.0])


def test_free_flow_virial_derivative_is_eight_laplacian_squared():
    grid = make_grid(3, 60.0, 512)
    u0 = gaussian(grid, chirp=0.1)
    params = make_params(3, 1.0)
    audit = virial_audit(u0, params, make_cutoff(20.0), 0.04, 0.0025, control=StepControl(nonlinear=0.0))
    expected = 8 * sobolev_norm(u0, 2.0) ** 2
    np.testing.assert_allclose(audit.measured, expected, rtol=1e-4)


def test_virial_audit_measures_identity():
    grid = make_grid(3, 40.0, 384)
    params = make_params(3, 2.0, -0.5)
    audit = virial_audit(gaussian(grid, 1.2, chirp=0.1), params, make_cutoff(2.0), 0.05, 0.00125)
    assert audit.violations == 0
    scale = np.max(np.abs(audit.identity))
    assert np.max(np.abs(audit.measured - audit.identity)) <= 1e-3 * scale
    with pytest.raises(ValueError):
        virial_audit(gaussian(grid), params, make_cutoff(2.0), 0.01, 0.01)
