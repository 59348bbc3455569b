import math

import numpy as np
import pytest

from bnls import Field, make_grid, make_params
from bnls.groundstate import (
    ConvergenceError,
    bubble,
    bubble_amplitude,
    bubble_laplacian,
    bubble_report,
    equation_residual,
    explicit_W,
    export_ground_state,
    fourier_rearrange,
    import_ground_state,
    k_from_energy_mass,
    solve_Q,
    weinstein,
)
from bnls.spectral import apply_symbol, sobolev_norm, weighted_relative_error


@pytest.mark.parametrize("d, sigma", [(2, 2.0), (3, 1.0), (3, 2.0), (4, 1.0), (5, 1.0)])
def test_ground_state_certified(d, sigma):
    params = make_params(d, sigma)
    gs = solve_Q(params, make_grid(d, 50.0, 768))
    assert gs.residual <= 1e-10
    assert gs.pohozaev.id1_residual <= 1e-8
    assert gs.pohozaev.id2_residual <= 1e-8
    assert gs.k_gn == pytest.approx(gs.k_gn_formula, rel=1e-6)
    if 0 < params.s_c < 2:
        assert k_from_energy_mass(gs.pohozaev, params.s_c, d) == pytest.approx(gs.k_gn, rel=1e-6)
    # Q is positive near the origin and decays
    q = gs.profile.values.real
    assert q[0] > 0 and abs(q[-1]) < 1e-8 * q[0]


def test_ground_state_maximizes_weinstein(q_d3_sigma2, rng):
    params = q_d3_sigma2.params
    grid = q_d3_sigma2.profile.grid
    for _ in range(10):
        width, chirp = rng.uniform(0.5, 3.0), rng.uniform(-1, 1)
        trial = grid.sample(lambda r: np.exp(-((r / width) ** 2)) * (1 + rng.uniform(-0.5, 0.5) * r**2) * np.exp(1j * chirp * r))
        assert weinstein(trial, params) <= q_d3_sigma2.c_gn * (1 + 1e-10)
    perturbed = q_d3_sigma2.profile * (1 + 0.01 * np.exp(-grid.nodes**2))
    assert weinstein(perturbed, params) < q_d3_sigma2.c_gn


def test_weinstein_scale_invariant(q_d3_sigma2):
    params = q_d3_sigma2.params
    q = q_d3_sigma2.profile
    assert weinstein(3.7 * q, params) == pytest.approx(q_d3_sigma2.c_gn, rel=1e-12)
    with pytest.raises(ValueError):
        weinstein(0 * q, params)


def test_symmetrized_solve_agrees(q_d3_sigma2):
    gs = solve_Q(q_d3_sigma2.params, q_d3_sigma2.profile.grid, symmetrize=True)
    assert gs.residual <= 1e-10
    assert weighted_relative_error(gs.profile, q_d3_sigma2.profile) < 1e-8


def test_solver_rejects_energy_critical_and_zero_guess():
    grid = make_grid(5, 20.0, 128)
    with pytest.raises(ValueError):
        solve_Q(make_params(5, 4.0), grid)
    grid3 = make_grid(3, 20.0, 128)
    with pytest.raises(ValueError):
        solve_Q(make_params(3, 2.0), grid3, init=Field(grid3, 0.0))


def test_solver_iteration_cap_raises():
    grid = make_grid(3, 30.0, 256)
    with pytest.raises(ConvergenceError):
        solve_Q(make_params(3, 2.0), grid, max_iter=3)


def test_equation_residual_detects_wrong_profile(q_d3_sigma2):
    assert equation_residual(q_d3_sigma2.profile * 1.01, q_d3_sigma2.params) > 1e-3


def test_export_import_round_trip(q_d3_sigma2, tmp_path):
    csv_path, json_path = export_ground_state(q_d3_sigma2, tmp_path / "Q")
    assert csv_path.exists() and json_path.exists()
    back = import_ground_state(tmp_path / "Q")
    np.testing.assert_array_equal(back.profile.values, q_d3_sigma2.profile.values)
    assert back.c_gn == q_d3_sigma2.c_gn
    assert back.params == q_d3_sigma2.params


@pytest.mark.parametrize("d, w0", [(5, 105 ** (1 / 8)), (6, 384 ** (1 / 4)), (8, 1920 ** (1 / 2))])
def test_bubble_amplitude_closed_form(d, w0):
    assert bubble_amplitude(d) == pytest.approx(w0, rel=1e-14)
    assert bubble(d, 0.0) == pytest.approx(w0, rel=1e-14)


@pytest.mark.parametrize("d", [5, 6, 8])
def test_bubble_laplacian_formula(d):
    r = np.linspace(0.01, 5.0, 50)
    h = 1e-4
    fd = (bubble(d, r + h) - 2 * bubble(d, r) + bubble(d, r - h)) / h**2
    fd += (d - 1) / r * (bubble(d, r + h) - bubble(d, r - h)) / (2 * h)
    np.testing.assert_allclose(bubble_laplacian(d, r), fd, rtol=1e-5)


@pytest.mark.parametrize("d", [5, 6, 8])
def test_bubble_report(d):
    rep = bubble_report(d, make_grid(d, 100.0, 1024))
    assert rep.w0 == pytest.approx(rep.w0_exact, rel=1e-8)
    assert rep.residual <= 1e-4
    assert rep.energy_identity_error <= 1e-4
    assert rep.energy == pytest.approx(2.0 / d * rep.lap_sq, rel=1e-4)


def test_sampled_bubble_solves_its_equation_inside():
    d = 6
    grid = make_grid(d, 100.0, 1024)
    w = explicit_W(d, grid)
    lhs = apply_symbol(w, "bilap").values.real
    rhs = np.abs(w.values.real) ** (8 / (d - 4)) * w.values.real
    inner = grid.nodes <= 20.0
    assert np.max(np.abs(lhs - rhs)[inner]) <= 1e-4 * np.max(np.abs(rhs))


def test_rearrangement_properties(rng):
    grid = make_grid(3, 30.0, 256)
    for _ in range(5):
        width = rng.uniform(1.0, 3.0)
        u = grid.sample(lambda r: np.exp(-((r / width) ** 2)) * np.cos(rng.uniform(0.5, 3.0) * r) * np.exp(1j * r))
        v = fourier_rearrange(u)
        assert v.l2() == pytest.approx(u.l2(), rel=1e-10)
        assert np.all(np.isreal(v.values))
        for s in (0.5, 1.0, 2.0):
            assert sobolev_norm(v, s) <= sobolev_norm(u, s) + 1e-9
    # a rearranged field is a fixed point
    assert weighted_relative_error(fourier_rearrange(v), v) < 1e-10 or math.isclose(v.l2(), 0)
