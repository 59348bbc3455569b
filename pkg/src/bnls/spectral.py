"""Radial Hankel transform and frequency multipliers (Δ, Δ², (−Δ)^{-1}, |∇|^{-1}).

Samples u(r_k) are mapped to coefficients b = Y·(√w u), where Y is the
symmetric discrete Hankel matrix. After polishing, Y is exactly orthogonal
and an involution, so b carries the L² norm of u and b_k = √ŵ_k û(ρ_k) with
û the unitary d-dimensional Fourier transform of the radial profile.
"""

from __future__ import annotations

import math
from functools import lru_cache

import numpy as np
from scipy.interpolate import make_interp_spline
from scipy.special import gamma, jv

from .core import Field, RadialGrid, make_grid, sphere_area

SYMBOLS = ("lap", "bilap", "invlap", "riesz_half")


def _real_matmul(matrix: np.ndarray, values: np.ndarray) -> np.ndarray:
    """Real matrix times complex vector without promoting the matrix."""
    pairs = np.ascontiguousarray(values, dtype=complex).view(np.float64).reshape(-1, 2)
    out = matrix @ pairs
    return np.ascontiguousarray(out).view(complex).ravel()


def _bessel_over_power(order: float, rho: np.ndarray, r: np.ndarray) -> np.ndarray:
    """J_order(ρr)/r^order on an outer grid (rows r, columns ρ), finite at r = 0."""
    r = np.asarray(r, dtype=float)[:, None]
    rho = np.asarray(rho, dtype=float)[None, :]
    z = rho * r
    with np.errstate(divide="ignore", invalid="ignore"):
        out = jv(order, z) / np.where(r > 0, r, 1.0) ** order
    small = z < 1e-8
    if np.any(small):
        limit = (rho / 2.0) ** order / gamma(order + 1.0)
        out = np.where(small, np.broadcast_to(limit, z.shape), out)
    return out


class TransformPlan:
    """Dense Hankel transform of a grid with cached symbols and derivative matrices."""

    def __init__(self, grid: RadialGrid):
        self.grid = grid
        j = grid.zeros
        s = grid.last_zero
        jn = grid.bessel_next
        y = (2.0 / s) * jv(grid.order, np.outer(j, j) / s) / np.outer(jn, jn)
        # one Newton-Schulz step toward the orthogonal polar factor; Y is
        # symmetric and already orthogonal to ~1e-11, so this lands at rounding
        y = 0.5 * (3.0 * y - y @ (y @ y))
        self.matrix = 0.5 * (y + y.T)
        self.sqrt_w = np.sqrt(grid.weights)
        self.sqrt_what = np.sqrt(grid.spectral_weights)
        rho = grid.spectral_nodes
        self.rho2 = rho**2
        self.rho4 = rho**4
        self.inv_rho2 = 1.0 / self.rho2
        self.inv_rho = 1.0 / rho
        # synthesis factor: u(r) = r^{-ν} Σ_k c_k J_ν(ρ_k r) b_k
        self.synthesis = np.sqrt(2.0 / sphere_area(grid.d)) / (grid.rmax * jn)
        self._deriv = None

    # coefficient space -------------------------------------------------
    def to_coeffs(self, values: np.ndarray) -> np.ndarray:
        return _real_matmul(self.matrix, self.sqrt_w * values)

    def from_coeffs(self, coeffs: np.ndarray) -> np.ndarray:
        return _real_matmul(self.matrix, coeffs) / self.sqrt_w

    def forward(self, u: Field) -> np.ndarray:
        """Samples of the unitary Fourier transform û(ρ_k)."""
        return self.to_coeffs(u.values) / self.sqrt_what

    def inverse(self, spectrum: np.ndarray) -> Field:
        return Field(self.grid, self.from_coeffs(np.asarray(spectrum) * self.sqrt_what))

    def multiplier(self, values: np.ndarray, symbol: np.ndarray) -> np.ndarray:
        return self.from_coeffs(symbol * self.to_coeffs(values))

    # evaluation off the grid --------------------------------------------
    def synthesis_matrix(self, r) -> np.ndarray:
        r = np.atleast_1d(np.asarray(r, dtype=float))
        return _bessel_over_power(self.grid.order, self.grid.spectral_nodes, r) * self.synthesis

    def evaluate(self, u: Field, r) -> np.ndarray:
        """Band-limited interpolant of u at arbitrary radii (r = 0 allowed)."""
        return _real_matmul(self.synthesis_matrix(r), self.to_coeffs(u.values))

    def derivative_matrix(self) -> np.ndarray:
        """Matrix mapping coefficients to ∂_r u at the nodes."""
        if self._deriv is None:
            g = self.grid
            nu = g.order
            rho = g.spectral_nodes
            r = g.nodes[:, None]
            kern = -rho[None, :] * jv(nu + 1.0, r * rho[None, :]) / r**nu
            self._deriv = kern * self.synthesis
        return self._deriv


@lru_cache(maxsize=12)
def plan_for(grid: RadialGrid) -> TransformPlan:
    """Cached transform plan of a grid."""
    return TransformPlan(grid)


@lru_cache(maxsize=12)
def vector_grid(grid: RadialGrid) -> RadialGrid:
    """Order-shifted grid carrying radial vector fields v(r)x/r on R^d."""
    return make_grid(grid.d, grid.rmax, grid.n, order=grid.order + 1.0)


def _require_riesz_dimension(grid: RadialGrid, what: str) -> None:
    if grid.d < 3:
        raise ValueError(f"{what} requires d >= 3 (got d={grid.d})")


def monopole_constant(f: Field) -> complex:
    """Value on the sphere r = rmax of the whole-space potential (−Δ)^{-1}f.

    For f supported inside the ball, the Dirichlet solution and the Newton
    potential differ by this constant, the only radial harmonic function
    regular at the origin.
    """
    g = f.grid
    total = f.integrate()
    return total / ((g.d - 2) * sphere_area(g.d) * g.rmax ** (g.d - 2))


def apply_symbol(u: Field, symbol: str, whole_space: bool = True) -> Field:
    """Apply a radial Fourier multiplier.

    Args:
        u: Field to transform.
        symbol: One of "lap" (−ρ²), "bilap" (ρ⁴), "invlap" (1/ρ²) or
            "riesz_half" (1/ρ).
        whole_space: For "invlap", add the monopole constant so the result is
            the R^d inverse rather than the Dirichlet inverse on the ball.
            Pass False for the bare multiplier.

    Raises:
        ValueError: unknown symbol, or an inverse symbol with d < 3.
    """
    plan = plan_for(u.grid)
    if symbol == "lap":
        sym = -plan.rho2
    elif symbol == "bilap":
        sym = plan.rho4
    elif symbol == "invlap":
        _require_riesz_dimension(u.grid, "invlap")
        sym = plan.inv_rho2
    elif symbol == "riesz_half":
        _require_riesz_dimension(u.grid, "riesz_half")
        sym = plan.inv_rho
    else:
        raise ValueError(f"unknown symbol {symbol!r}; expected one of {SYMBOLS}")
    out = Field(u.grid, plan.multiplier(u.values, sym))
    if symbol == "invlap" and whole_space:
        out = out + monopole_constant(u)
    return out


def sobolev_norm(u: Field, s: float) -> float:
    """Homogeneous norm ‖|∇|^s u‖_{L²} computed from the transform."""
    plan = plan_for(u.grid)
    b = plan.to_coeffs(u.values)
    return math.sqrt(float(np.sum(u.grid.spectral_nodes ** (2.0 * s) * np.abs(b) ** 2)))


def radial_derivative(u: Field, order: int = 1) -> Field:
    """∂_r u or ∂²_r u by spectral differentiation.

    The second derivative uses ∂²_r u = Δu − (d−1)/r ∂_r u.
    """
    if order not in (1, 2):
        raise ValueError("order must be 1 or 2")
    plan = plan_for(u.grid)
    b = plan.to_coeffs(u.values)
    du = _real_matmul(plan.derivative_matrix(), b)
    if order == 1:
        return Field(u.grid, du)
    lap = plan.from_coeffs(-plan.rho2 * b)
    return Field(u.grid, lap - (u.grid.d - 1) * du / u.grid.nodes)


def _panel_integrals(r: np.ndarray, values: np.ndarray, powers: tuple) -> list:
    """Integrals of f(s)·s^k over [0, r_1], [r_1, r_2], ... for each k in `powers`.

    f is the degree-7 spline through the samples extended evenly to negative
    radii, which suits radial profiles; each panel uses 8-point Gauss-Legendre.
    """
    x = np.concatenate((-r[::-1], r))
    spline = make_interp_spline(x, np.concatenate((values[::-1], values)), k=7)
    t, wt = np.polynomial.legendre.leggauss(8)
    left = np.concatenate(([0.0], r[:-1]))
    half = 0.5 * (r - left)
    pts = (left + half)[:, None] + half[:, None] * t[None, :]
    fvals = spline(pts)
    return [np.sum(wt[None, :] * fvals * pts**k, axis=1) * half for k in powers]


def newton_potential_oracle(f: Field) -> Field:
    """(−Δ)^{-1}f by direct quadrature of Newton's formula for radial sources.

    Uses ((−Δ)^{-1}f)(r) = [r^{2−d}∫_0^r f s^{d−1} ds + ∫_r^∞ f s ds]/(d−2),
    the radial form of convolution with the Newton kernel. The integrals are
    panel quadratures of a spline through the samples, independent of the
    transform.
    """
    g = f.grid
    _require_riesz_dimension(g, "the Newton oracle")
    r = g.nodes
    d = g.d
    out = np.zeros(g.n, dtype=complex)
    for part, scale in ((f.values.real, 1.0), (f.values.imag, 1j)):
        if not np.any(part):
            continue
        inner_panels, outer_panels = _panel_integrals(r, part, (d - 1, 1))
        inside = np.cumsum(inner_panels)
        # ∫ from r_j to the last node; samples vanish near rmax by assumption
        tail = np.cumsum(outer_panels[::-1])[::-1] - outer_panels
        out += scale * (r ** (2.0 - d) * inside + tail) / (d - 2.0)
    return Field(g, out)


def weighted_relative_error(a: Field, b: Field) -> float:
    """‖a − b‖/‖b‖ in the grid's L² quadrature."""
    denom = b.l2()
    return (a - b).l2() / denom if denom > 0 else (a - b).l2()
