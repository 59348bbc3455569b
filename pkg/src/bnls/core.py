"""Problem parameters, radial grids with quadrature, and field storage."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy.optimize import brentq
from scipy.special import gamma, jv


class Criticality(str, enum.Enum):
    MASS_SUBCRITICAL = "mass-subcritical"
    MASS_CRITICAL = "mass-critical"
    MASS_SUPERCRITICAL = "mass-supercritical"
    ENERGY_CRITICAL = "energy-critical"
    ENERGY_SUPERCRITICAL = "energy-supercritical"


@dataclass(frozen=True)
class Params:
    """Parameters of i u_t = Δ²u − μΔu − |u|^{2σ}u on R^d.

    Attributes:
        d: Space dimension.
        sigma: Nonlinearity exponent.
        mu: Coefficient of the second-order dispersion.
        s_c: Critical Sobolev index d/2 − 2/σ.
        delta: d·σ − 4, the mass-supercriticality gap.
        criticality: Classification of (d, σ).
    """

    d: int
    sigma: float
    mu: float
    s_c: float
    delta: float
    criticality: Criticality

    @property
    def p(self) -> float:
        """Lebesgue exponent 2σ + 2 of the potential energy."""
        return 2.0 * self.sigma + 2.0

    def with_mu(self, mu: float) -> "Params":
        return make_params(self.d, self.sigma, mu)


def make_params(d: int, sigma: float, mu: float = 0.0) -> Params:
    """Validate (d, σ, μ) and derive the criticality data.

    Raises:
        ValueError: if d < 2, σ ≤ 0, or σ exceeds the energy-critical
            exponent 4/(d−4) when d ≥ 5.
    """
    if int(d) != d or d < 2:
        raise ValueError(f"dimension must be an integer >= 2, got {d}")
    d = int(d)
    sigma = float(sigma)
    if not sigma > 0 or not math.isfinite(sigma):
        raise ValueError(f"sigma must be positive and finite, got {sigma}")
    mu = float(mu)
    if not math.isfinite(mu):
        raise ValueError("mu must be finite")
    energy_sigma = 4.0 / (d - 4) if d >= 5 else math.inf
    if sigma > energy_sigma:
        raise ValueError(
            f"sigma={sigma} exceeds the energy-critical exponent {energy_sigma} for d={d}"
        )
    s_c = d / 2.0 - 2.0 / sigma
    mass_sigma = 4.0 / d
    if sigma == energy_sigma:
        kind = Criticality.ENERGY_CRITICAL
    elif sigma == mass_sigma:
        kind = Criticality.MASS_CRITICAL
    elif sigma < mass_sigma:
        kind = Criticality.MASS_SUBCRITICAL
    else:
        kind = Criticality.MASS_SUPERCRITICAL
    if kind is Criticality.MASS_CRITICAL:
        s_c = 0.0
    return Params(d=d, sigma=sigma, mu=mu, s_c=s_c, delta=d * sigma - 4.0, criticality=kind)


def sphere_area(d: int) -> float:
    """Surface area of the unit sphere in R^d."""
    return 2.0 * math.pi ** (d / 2.0) / gamma(d / 2.0)


def ball_volume(d: int, radius: float) -> float:
    return sphere_area(d) * radius**d / d


@lru_cache(maxsize=64)
def bessel_zeros(order: float, count: int) -> np.ndarray:
    """First `count` positive zeros of J_order, for order >= 0.

    Each zero is bracketed around McMahon's asymptotic guess and refined
    with Brent's method. Consecutive zeros of J_order are more than π apart
    for order >= 1/2, so a bracket of half-width π/2 isolates one root.
    """
    k = np.arange(1, count + 1, dtype=float)
    beta = (k + order / 2.0 - 0.25) * math.pi
    guess = beta - (4.0 * order**2 - 1.0) / (8.0 * beta)
    zeros = np.empty(count)
    lower = 0.0
    for i, g in enumerate(guess):
        a = max(lower + 1e-9, g - math.pi / 2)
        b = g + math.pi / 2
        fa, fb = jv(order, a), jv(order, b)
        while fa * fb > 0:
            # the asymptotic guess can be off for the first few low-order roots
            a, b = b, b + math.pi / 2
            fa, fb = fb, jv(order, b)
        zeros[i] = brentq(lambda x: jv(order, x), a, b, xtol=1e-14, rtol=1e-15, maxiter=200)
        lower = zeros[i]
    if np.any(np.diff(zeros) < 2.0):
        raise RuntimeError("Bessel zero search skipped or repeated a root")
    return zeros


@dataclass(frozen=True, eq=False)
class RadialGrid:
    """Bessel-zero collocation on [0, rmax] with d-dimensional quadrature.

    Nodes are r_k = j_k·rmax/S and frequencies ρ_k = j_k/rmax, where j_k are
    the zeros of J_order and S = j_{n+1}. The weights make the discrete
    Hankel transform an isometry between physical and spectral samples.
    """

    d: int
    n: int
    rmax: float
    order: float
    zeros: np.ndarray = field(repr=False)
    last_zero: float = field(repr=False)
    nodes: np.ndarray = field(repr=False)
    weights: np.ndarray = field(repr=False)
    spectral_nodes: np.ndarray = field(repr=False)
    spectral_weights: np.ndarray = field(repr=False)
    bessel_next: np.ndarray = field(repr=False)

    @property
    def rho_max(self) -> float:
        return float(self.spectral_nodes[-1])

    def volume(self) -> float:
        return ball_volume(self.d, self.rmax)

    def field(self, values) -> "Field":
        return Field(self, values)

    def sample(self, func) -> "Field":
        """Field holding func(r) at the nodes."""
        return Field(self, func(self.nodes))


def make_grid(d: int, rmax: float, n: int, order: float | None = None) -> RadialGrid:
    """Build the collocation grid for radial functions on R^d.

    Args:
        d: Space dimension, used for the quadrature measure.
        rmax: Truncation radius.
        n: Number of interior nodes (at least 16).
        order: Bessel order of the transform. Defaults to d/2 − 1 (scalar
            radial fields); d/2 is used for radial vector fields v(r)x/r.
    """
    if int(d) != d or d < 1:
        raise ValueError(f"invalid dimension {d}")
    if not rmax > 0:
        raise ValueError("rmax must be positive")
    if int(n) != n or n < 16:
        raise ValueError("grid needs at least 16 nodes")
    d, n, rmax = int(d), int(n), float(rmax)
    nu = d / 2.0 - 1.0 if order is None else float(order)
    if nu < 0:
        raise ValueError("transform order must be nonnegative")
    j = bessel_zeros(nu, n + 1)
    s = j[-1]
    jk = j[:-1].copy()
    jnext = np.abs(jv(nu + 1.0, jk))
    nodes = jk * rmax / s
    rho = jk / rmax
    omega = sphere_area(d)
    power = d - 2.0  # r^{2ν} for the scalar measure, also used by vector fields
    weights = omega * nodes**power * 2.0 * rmax**2 / (s**2 * jnext**2)
    spectral_weights = omega * rho**power * 2.0 / (rmax**2 * jnext**2)
    for arr in (jk, jnext, nodes, weights, rho, spectral_weights):
        arr.setflags(write=False)
    return RadialGrid(
        d=d,
        n=n,
        rmax=rmax,
        order=nu,
        zeros=jk,
        last_zero=float(s),
        nodes=nodes,
        weights=weights,
        spectral_nodes=rho,
        spectral_weights=spectral_weights,
        bessel_next=jnext,
    )


class Field:
    """Complex radial profile sampled on the nodes of a grid."""

    __slots__ = ("grid", "values")

    def __init__(self, grid: RadialGrid, values):
        values = np.asarray(values, dtype=complex)
        if values.shape != (grid.n,):
            values = np.broadcast_to(values, (grid.n,)).astype(complex)
        self.grid = grid
        self.values = values

    def __repr__(self) -> str:
        return f"Field(n={self.grid.n}, d={self.grid.d}, l2={self.l2():.6g})"

    def _coerce(self, other):
        if isinstance(other, Field):
            if other.grid is not self.grid:
                raise ValueError("fields live on different grids")
            return other.values
        return other

    def __add__(self, other):
        return Field(self.grid, self.values + self._coerce(other))

    __radd__ = __add__

    def __sub__(self, other):
        return Field(self.grid, self.values - self._coerce(other))

    def __rsub__(self, other):
        return Field(self.grid, self._coerce(other) - self.values)

    def __mul__(self, other):
        return Field(self.grid, self.values * self._coerce(other))

    __rmul__ = __mul__

    def __truediv__(self, other):
        return Field(self.grid, self.values / self._coerce(other))

    def __neg__(self):
        return Field(self.grid, -self.values)

    def conj(self) -> "Field":
        return Field(self.grid, self.values.conj())

    def copy(self) -> "Field":
        return Field(self.grid, self.values.copy())

    @property
    def real(self) -> np.ndarray:
        return self.values.real

    def is_finite(self) -> bool:
        return bool(np.all(np.isfinite(self.values)))

    def integrate(self, density=None) -> complex:
        """Quadrature of the samples (or of `density` on the same nodes)."""
        vals = self.values if density is None else density
        return complex(np.dot(self.grid.weights, vals))

    def l2(self) -> float:
        return math.sqrt(float(np.dot(self.grid.weights, np.abs(self.values) ** 2)))


def inner(u: Field, v: Field) -> complex:
    """L² inner product ⟨u, v⟩ = ∫ conj(u) v."""
    if u.grid is not v.grid:
        raise ValueError("fields live on different grids")
    return complex(np.dot(u.grid.weights, u.values.conj() * v.values))


def lp_norm(u: Field, p: float) -> float:
    if p <= 0:
        raise ValueError("p must be positive")
    return float(np.dot(u.grid.weights, np.abs(u.values) ** p)) ** (1.0 / p)


@dataclass(frozen=True)
class Norms:
    l2: float
    grad_l2: float
    lap_l2: float
    field: Field = field(repr=False)

    def lp(self, p: float) -> float:
        return lp_norm(self.field, p)


def norms(u: Field) -> Norms:
    """Mass, gradient and Laplacian L² norms via quadrature and the transform."""
    from .spectral import sobolev_norm

    return Norms(
        l2=u.l2(),
        grad_l2=sobolev_norm(u, 1.0),
        lap_l2=sobolev_norm(u, 2.0),
        field=u,
    )
