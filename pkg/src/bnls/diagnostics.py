"""Conserved quantities, localized virial and Riesz-bivariance functionals."""

from __future__ import annotations

import math
from dataclasses import dataclass, fields

import numpy as np

from .core import Field, Params, ball_volume, lp_norm, sphere_area
from .cutoffs import CutoffPair
from .spectral import _panel_integrals, plan_for, radial_derivative, sobolev_norm, vector_grid

RECORD_COLUMNS = ("t", "mass", "energy", "grad_l2", "lap_l2", "m_r", "v_r", "n_r", "dt")


@dataclass(frozen=True)
class DiagnosticsRecord:
    """One time sample of a trajectory; v_r and n_r are NaN when d < 3 or no cutoff."""

    t: float
    mass: float
    energy: float
    grad_l2: float
    lap_l2: float
    m_r: float
    v_r: float
    n_r: float
    dt: float

    def as_row(self) -> list[float]:
        return [getattr(self, name) for name in RECORD_COLUMNS]


assert tuple(f.name for f in fields(DiagnosticsRecord)) == RECORD_COLUMNS


def mass(u: Field) -> float:
    return u.l2() ** 2


def potential_energy(u: Field, params: Params) -> float:
    """‖u‖^{2σ+2}_{L^{2σ+2}}/(2σ+2)."""
    p = params.p
    return float(np.dot(u.grid.weights, np.abs(u.values) ** p)) / p


def energy(u: Field, params: Params) -> float:
    """E[u] = ½‖Δu‖² + (μ/2)‖∇u‖² − ‖u‖^{2σ+2}/(2σ+2)."""
    plan = plan_for(u.grid)
    b = plan.to_coeffs(u.values)
    power = np.abs(b) ** 2
    kinetic = 0.5 * float(np.dot(plan.rho4, power))
    dispersive = 0.5 * params.mu * float(np.dot(plan.rho2, power))
    return kinetic + dispersive - potential_energy(u, params)


def localized_virial(u: Field, pair: CutoffPair) -> float:
    """M_R[u] = 2 Im ∫ ū φ'_R ∂_r u."""
    du = radial_derivative(u, 1).values
    dphi = pair.phi(u.grid.nodes, 1)
    return 2.0 * float(np.dot(u.grid.weights, (u.values.conj() * dphi * du).imag))


@dataclass(frozen=True)
class CutoffBounds:
    """Sup norms of the derivative combinations of φ at unit scale."""

    d2_lap: float
    bilap: float
    trilap: float
    lap_gap: float


def cutoff_bounds(pair: CutoffPair, d: int, samples: int = 20_000) -> CutoffBounds:
    """Unit-scale sup norms of ∂²_rΔφ, Δ²φ, Δ³φ and d − Δφ, with a 1% safety factor."""
    from dataclasses import replace

    unit = replace(pair, R=1.0)
    s = np.linspace(1.0, 10.5, samples)
    lap = unit.laplacians(s, d)
    pad = 1.01
    return CutoffBounds(
        d2_lap=pad * float(np.max(np.abs(lap["d2_lap"]))),
        bilap=pad * float(np.max(np.abs(lap["bilap"]))),
        trilap=pad * float(np.max(np.abs(lap["trilap"]))),
        lap_gap=pad * float(np.max(np.abs(d - lap["lap"]))),
    )


@dataclass(frozen=True)
class VirialRHS:
    """Right side of the localized virial inequality at one instant.

    Attributes:
        main: 4dσE₀ − (2dσ−8)‖Δu‖² − (2dσ−4)μ‖∇u‖².
        x_mu: −4μ∫(1 − φ''_R)|∂_r u|².
        error_budget: Explicit bound on the cutoff remainders, of the form
            c_4R⁻⁴M + c_2R⁻²‖∇u‖² + c_nR^{−σ(d−1)}‖∇u‖^σ + c_μ|μ|R⁻²M.
        identity: dM_R/dt evaluated from the exact radial virial identity.
    """

    main: float
    x_mu: float
    error_budget: float
    identity: float

    @property
    def bound(self) -> float:
        return self.main + self.x_mu + self.error_budget


def virial_rhs(u: Field, pair: CutoffPair, params: Params, energy0: float | None = None) -> VirialRHS:
    """Terms of the localized virial inequality dM_R/dt ≤ main + X_μ + budget.

    Args:
        u: Radial field.
        pair: Cutoff providing φ_R.
        params: Equation parameters.
        energy0: Energy of the initial datum; defaults to E[u] (conserved).
    """
    g = u.grid
    d, sigma, mu = g.d, params.sigma, params.mu
    r = g.nodes
    w = g.weights
    e0 = energy(u, params) if energy0 is None else float(energy0)
    grad = sobolev_norm(u, 1.0)
    lap = sobolev_norm(u, 2.0)
    m = mass(u)
    du = radial_derivative(u, 1).values
    d2u = radial_derivative(u, 2).values
    ph = pair.phi(r)
    lp = pair.laplacians(r, d)
    du2 = np.abs(du) ** 2
    u2 = np.abs(u.values) ** 2
    up = np.abs(u.values) ** params.p

    main = 4.0 * d * sigma * e0 - (2 * d * sigma - 8) * lap**2 - (2 * d * sigma - 4) * mu * grad**2
    x_mu = -4.0 * mu * float(np.dot(w, (1.0 - ph[2]) * du2))

    identity = (
        8.0 * np.dot(w, ph[2] * np.abs(d2u) ** 2)
        + 8.0 * (d - 1) * np.dot(w, ph[1] / r**3 * du2)
        - 4.0 * np.dot(w, lp["d2_lap"] * du2)
        - 2.0 * np.dot(w, lp["bilap"] * du2)
        + np.dot(w, lp["trilap"] * u2)
        + 4.0 * mu * np.dot(w, ph[2] * du2)
        - mu * np.dot(w, lp["bilap"] * u2)
        - (2.0 * sigma / (sigma + 1.0)) * np.dot(w, lp["lap"] * up)
    )

    c = cutoff_bounds(pair, d)
    R = pair.R
    strauss = math.sqrt(2.0 / sphere_area(d))
    budget = (
        c.trilap * R**-4 * m
        + (4.0 * c.d2_lap + 2.0 * c.bilap) * R**-2 * grad**2
        + (2.0 * sigma / (sigma + 1.0)) * c.lap_gap * strauss ** (2 * sigma)
        * m ** (1.0 + sigma / 2.0) * R ** (-sigma * (d - 1)) * grad**sigma
        + abs(mu) * c.bilap * R**-2 * m
    )
    return VirialRHS(main=float(main), x_mu=x_mu, error_budget=float(budget), identity=float(identity))


# Riesz bivariance -----------------------------------------------------------

_interp_cache: dict = {}


def _vector_setup(grid):
    key = id(grid)
    hit = _interp_cache.get(key)
    if hit is not None and hit[0] is grid:
        return hit[1], hit[2]
    vg = vector_grid(grid)
    interp = plan_for(grid).synthesis_matrix(vg.nodes)
    if len(_interp_cache) > 8:
        _interp_cache.clear()
    _interp_cache[key] = (grid, vg, interp)
    return vg, interp


def _vector_coefficients(u: Field, profile_values: np.ndarray, pair: CutoffPair):
    """Coefficients and first moment of the vector field ψ'_R·f·x/r on the shifted grid.

    `profile_values` are samples of a radial f on u's grid; f is interpolated
    to the order-(d/2) nodes before multiplication by ψ'_R.
    """
    vg, interp = _vector_setup(u.grid)
    plan = plan_for(u.grid)
    fv = interp @ plan.to_coeffs(profile_values).view(np.float64).reshape(-1, 2)
    fv = np.ascontiguousarray(fv).view(complex).ravel()
    v = pair.psi(vg.nodes, 1) * fv
    coeffs = plan_for(vg).to_coeffs(v)
    moment = complex(np.dot(vg.weights, v * vg.nodes))
    return vg, coeffs, moment


def _require_d3(u: Field, what: str) -> None:
    if u.grid.d < 3:
        raise ValueError(f"{what} requires d >= 3 (got d={u.grid.d})")


def _bilinear(u: Field, pair: CutoffPair, f_vals: np.ndarray, g_vals: np.ndarray) -> complex:
    """Σ_k ⟨∂_kψ f, (−Δ)^{-1} ∂_kψ g⟩ through the shifted-order transform.

    The Dirichlet inverse on the ball misses the harmonic field r·x/r; its
    contribution m_f·m_g/(d²|B|) is added back, where m is the first moment
    ∫ v r dx of each vector magnitude.
    """
    vg, bf, mf = _vector_coefficients(u, f_vals, pair)
    _, bg, mg = _vector_coefficients(u, g_vals, pair)
    dirichlet = np.sum(bf.conj() * bg / vg.spectral_nodes**2)
    harmonic = mf.conjugate() * mg / (u.grid.d**2 * ball_volume(u.grid.d, u.grid.rmax))
    return complex(dirichlet + harmonic)


def riesz_bivariance(u: Field, pair: CutoffPair) -> float:
    """V_R[u] = ‖|∇|^{-1}(∇ψ_R u)‖², always nonnegative."""
    _require_d3(u, "riesz_bivariance")
    return max(_bilinear(u, pair, u.values, u.values).real, 0.0)


def commutator_NR(u: Field, pair: CutoffPair, params: Params) -> float:
    """N_R[u] = −2 Im Σ_k ∫ ū ∂_kψ_R (−Δ)^{-1}(∂_kψ_R |u|^{2σ}u)."""
    _require_d3(u, "commutator_NR")
    if not np.any(u.values.imag) or not np.any(u.values.real):
        # constant-phase data (real or purely imaginary) make the pairing real
        return 0.0
    nonlinear = np.abs(u.values) ** (2 * params.sigma) * u.values
    return -2.0 * _bilinear(u, pair, u.values, nonlinear).imag


def gradient_potential(u: Field, pair: CutoffPair, profile: np.ndarray | None = None) -> Field:
    """G(r) = −∫_r^∞ ψ'_R f, the radial potential with ∇G = ψ'_R f x/r (f = u by default)."""
    f = u.values if profile is None else profile
    v = pair.psi(u.grid.nodes, 1) * f
    r = u.grid.nodes
    out = np.zeros(u.grid.n, dtype=complex)
    for part, scale in ((v.real, 1.0), (v.imag, 1j)):
        if not np.any(part):
            continue
        (panels,) = _panel_integrals(r, part, (0,))
        out -= scale * (np.cumsum(panels[::-1])[::-1] - panels)
    return Field(u.grid, out)


def riesz_bivariance_potential(u: Field, pair: CutoffPair) -> float:
    """V_R via ‖|∇|^{-1}∇G‖ = ‖G‖; independent of the shifted transform."""
    _require_d3(u, "riesz_bivariance_potential")
    return mass(gradient_potential(u, pair))


def commutator_NR_potential(u: Field, pair: CutoffPair, params: Params) -> float:
    """N_R = −2 Im ⟨G_u, G_f⟩ with f = |u|^{2σ}u; independent cross-check."""
    _require_d3(u, "commutator_NR_potential")
    nonlinear = np.abs(u.values) ** (2 * params.sigma) * u.values
    gu = gradient_potential(u, pair)
    gf = gradient_potential(u, pair, nonlinear)
    return -2.0 * float(np.dot(u.grid.weights, gu.values.conj() * gf.values).imag)


# Pointwise and free-flow checks ------------------------------------------------


def strauss_margin(u: Field, h2: bool = False) -> float:
    """min over nodes of 2‖u‖^{1/2}‖∇u‖^{1/2} − r^{(d−1)/2}|u(r)|.

    With h2=True the bound 2‖u‖^{3/4}‖Δu‖^{1/4} is used instead.
    """
    g = u.grid
    m = u.l2()
    if h2:
        bound = 2.0 * m**0.75 * sobolev_norm(u, 2.0) ** 0.25
    else:
        bound = 2.0 * math.sqrt(m * sobolev_norm(u, 1.0))
    weighted = g.nodes ** ((g.d - 1) / 2.0) * np.abs(u.values)
    return float(np.min(bound - weighted))


def free_bivariance_prediction(u0: Field, pair: CutoffPair, t) -> np.ndarray | float:
    """V(0) + 4M(0)t + 16‖Δu₀‖²t² for the linear biharmonic flow."""
    v0 = riesz_bivariance(u0, pair)
    m0 = localized_virial(u0, pair)
    lap = sobolev_norm(u0, 2.0)
    t = np.asarray(t, dtype=float)
    out = v0 + 4.0 * m0 * t + 16.0 * lap**2 * t**2
    return float(out) if out.ndim == 0 else out


def record(u: Field, params: Params, t: float, dt: float, pair: CutoffPair | None = None) -> DiagnosticsRecord:
    """Evaluate all diagnostics of one instant."""
    plan = plan_for(u.grid)
    b = plan.to_coeffs(u.values)
    power = np.abs(b) ** 2
    grad2 = float(np.dot(plan.rho2, power))
    lap2 = float(np.dot(plan.rho4, power))
    e = 0.5 * lap2 + 0.5 * params.mu * grad2 - potential_energy(u, params)
    m_r = v_r = n_r = math.nan
    if pair is not None:
        m_r = localized_virial(u, pair)
        if u.grid.d >= 3:
            v_r = riesz_bivariance(u, pair)
            n_r = commutator_NR(u, pair, params)
    return DiagnosticsRecord(
        t=float(t),
        mass=float(np.sum(power)),
        energy=float(e),
        grad_l2=math.sqrt(grad2),
        lap_l2=math.sqrt(lap2),
        m_r=float(m_r),
        v_r=float(v_r),
        n_r=float(n_r),
        dt=float(dt),
    )


def lp(u: Field, p: float) -> float:
    return lp_norm(u, p)
