"""Virial cutoff φ_R, bivariance cutoff ψ_R, and their certified inequalities.

Both profiles are piecewise polynomials at unit scale, so every radial
derivative up to order 6 is exact; the scale-R versions follow from
φ_R(r) = R²φ(r/R).
"""

from __future__ import annotations

import csv
import enum
import math
from dataclasses import dataclass, field, replace
from math import comb
from pathlib import Path

import numpy as np
from numpy.polynomial import Chebyshev, Polynomial

MAX_ORDER = 6
OUTER_RADIUS = 10.0


class CutoffKind(str, enum.Enum):
    GENERIC = "generic"
    APPENDIX_B = "appendixB"


def smoothstep(n: int) -> Polynomial:
    """Polynomial step from 0 at x=0 to 1 at x=1 with n vanishing derivatives at both ends."""
    coef = np.zeros(2 * n + 2)
    for k in range(n + 1):
        coef[n + 1 + k] = comb(n + k, k) * comb(2 * n + 1, n - k) * (-1) ** k
    return Polynomial(coef)


@dataclass(frozen=True)
class Piece:
    """Polynomial in x = (r − origin)/scale, used on [left, right)."""

    left: float
    right: float
    origin: float
    scale: float
    poly: Polynomial

    def _stable(self) -> Chebyshev:
        # Chebyshev form on the piece's own x-range avoids monomial cancellation
        lo = (self.left - self.origin) / self.scale
        hi = (self.right - self.origin) / self.scale if math.isfinite(self.right) else lo + 1.0
        return self.poly.convert(kind=Chebyshev, domain=sorted((lo, hi)))

    def derivatives(self, r: np.ndarray, orders: int) -> list[np.ndarray]:
        x = (r - self.origin) / self.scale
        p = self._stable()
        out = []
        for k in range(orders + 1):
            out.append(p(x) / self.scale**k)
            p = p.deriv()
        return out

    def integral_from_left(self, r: np.ndarray) -> np.ndarray:
        """∫ from `left` to r of the piece, in the r variable."""
        anti = self._stable().integ()
        x = (np.asarray(r, dtype=float) - self.origin) / self.scale
        x_left = (self.left - self.origin) / self.scale
        return self.scale * (anti(x) - anti(x_left))


@dataclass(frozen=True)
class Piecewise:
    """Piecewise polynomial on [0, ∞); the last piece extends to infinity."""

    pieces: tuple[Piece, ...]

    def derivatives(self, r, orders: int = MAX_ORDER) -> np.ndarray:
        r = np.asarray(r, dtype=float)
        out = np.zeros((orders + 1,) + r.shape)
        for i, piece in enumerate(self.pieces):
            last = i == len(self.pieces) - 1
            mask = (r >= piece.left) & ((r < piece.right) | last)
            if np.any(mask):
                vals = piece.derivatives(r[mask], orders)
                for k in range(orders + 1):
                    out[k][mask] = vals[k]
        return out


def _leibniz_square(g: np.ndarray) -> np.ndarray:
    """Derivatives of g² from those of g (rows are derivative orders)."""
    out = np.zeros_like(g)
    for k in range(g.shape[0]):
        out[k] = sum(comb(k, j) * g[j] * g[k - j] for j in range(k + 1))
    return out


def _generic_root_profile() -> Piecewise:
    """ζ = √(2φ) for the generic cutoff.

    ζ = r on [0,1], rises smoothly to the plateau 2 on [1,3], and decays to 0
    on [3,10] through a C⁶ smoothstep, vanishing to order 7 at r = 10.
    """
    step = smoothstep(MAX_ORDER)
    ramp = 1.0 + 2.0 * (1.0 - step).integ()  # ζ on [1,3] in x = (r−1)/2
    plateau = float(ramp(1.0))
    return Piecewise(
        (
            Piece(0.0, 1.0, 0.0, 1.0, Polynomial([0.0, 1.0])),
            Piece(1.0, 3.0, 1.0, 2.0, ramp),
            Piece(3.0, OUTER_RADIUS, OUTER_RADIUS, -(OUTER_RADIUS - 3.0), plateau * step),
            Piece(OUTER_RADIUS, math.inf, OUTER_RADIUS, 1.0, Polynomial([0.0])),
        )
    )


APPENDIX_B_KNEE = 1.0 + 6.0 ** (-0.2)
APPENDIX_B_BLEND = 0.5


def _appendix_b_profile() -> Piecewise:
    """φ for the mass-critical construction.

    φ' = r on [0,1] and r − (r−1)^6 on (1, a], a = 1 + 6^{-1/5}. Past a,
    φ'' = −h with h ≥ 0: h blends 6(r−1)^5 − 1 away over a short interval
    and adds a bump (r−a)^5(10−r)^5 scaled so that φ'(10) = 0. All joins are
    C⁶ in φ, and φ'' ≤ 0 on (a, 10] by construction.
    """
    a = APPENDIX_B_KNEE
    blend = APPENDIX_B_BLEND
    tail = OUTER_RADIUS - a
    # φ on [1,a] in x = r − 1
    knee = Polynomial([0.5, 1.0, 0.5]) - Polynomial.basis(7) / 7.0
    phi_a = float(knee(a - 1.0))
    dphi_a = float(knee.deriv()(a - 1.0))
    # first part of h on [a, a+blend] in x = (r − a)/blend
    shifted = Polynomial([a - 1.0, blend])
    h_blend = (6.0 * shifted**5 - 1.0) * (1.0 - smoothstep(4))
    # bump on [a, 10] in y = (r − a)/tail
    bump = Polynomial([0.0, 1.0]) ** 5 * Polynomial([1.0, -1.0]) ** 5
    blend_mass = blend * float(h_blend.integ()(1.0))
    bump_mass = tail * float(bump.integ()(1.0))
    c = (dphi_a - blend_mass) / bump_mass
    if c < 0:
        raise RuntimeError("blend interval too long for a monotone tail")
    # bump re-expressed on the blend interval variable x: y = x·blend/tail
    bump_on_blend = bump(Polynomial([0.0, blend / tail]))
    second_blend = -(h_blend + c * bump_on_blend)  # φ'' in x, per unit x² scaled below
    dphi_blend = dphi_a + blend * (second_blend.integ())
    phi_blend = phi_a + blend * dphi_blend.integ()
    start = a + blend
    y0 = blend / tail
    # remaining interval in z = (r − start)/rest, y = y0 + z·rest/tail
    rest = OUTER_RADIUS - start
    y_of_z = Polynomial([y0, rest / tail])
    second_rest = -c * bump(y_of_z)
    dphi_start = float(dphi_blend(1.0))
    phi_start = float(phi_blend(1.0))
    dphi_rest = dphi_start + rest * second_rest.integ()
    phi_rest = phi_start + rest * dphi_rest.integ()
    phi_end = float(phi_rest(1.0))
    return Piecewise(
        (
            Piece(0.0, 1.0, 0.0, 1.0, Polynomial([0.0, 0.0, 0.5])),
            Piece(1.0, a, 1.0, 1.0, knee),
            Piece(a, start, a, blend, phi_blend),
            Piece(start, OUTER_RADIUS, start, rest, phi_rest),
            Piece(OUTER_RADIUS, math.inf, OUTER_RADIUS, 1.0, Polynomial([phi_end])),
        )
    )


_GENERIC = _generic_root_profile()
_APPENDIX_B = _appendix_b_profile()


def _root_from_square(phi: np.ndarray) -> np.ndarray:
    """Derivatives of q = √(2φ) from those of φ via Σ_j C(k,j) q^{(j)} q^{(k−j)} = 2φ^{(k)}.

    Requires q > 0.
    """
    q = np.zeros_like(phi)
    q[0] = np.sqrt(2.0 * phi[0])
    for k in range(1, phi.shape[0]):
        acc = 2.0 * phi[k] - sum(comb(k, j) * q[j] * q[k - j] for j in range(1, k))
        q[k] = acc / (2.0 * q[0])
    return q


def _gauss_integral(func, a: np.ndarray, b: np.ndarray, points: int = 24) -> np.ndarray:
    t, w = np.polynomial.legendre.leggauss(points)
    mid = 0.5 * (a + b)
    half = 0.5 * (b - a)
    nodes = mid[..., None] + half[..., None] * t
    return half * np.sum(w * func(nodes), axis=-1)


@dataclass(frozen=True)
class CutoffPair:
    """Cutoffs φ_R and ψ_R at scale R.

    Attributes:
        R: Scale; φ_R = r²/2 for r ≤ R and constant for r ≥ 10R.
        kind: Construction used for the unit-scale profile.
        complete: True once ψ_R is attached (see build_psi).
        eta0: Certified margin constant for the appendixB kind, if verified.
    """

    R: float
    kind: CutoffKind
    complete: bool = False
    eta0: float | None = None
    metadata: dict = field(default_factory=dict, compare=False)

    # unit-scale derivatives ----------------------------------------------
    def _phi_unit(self, s: np.ndarray) -> np.ndarray:
        if self.kind is CutoffKind.GENERIC:
            zeta = _GENERIC.derivatives(s)
            return 0.5 * _leibniz_square(zeta)
        return _APPENDIX_B.derivatives(s)

    def _psi_unit(self, s: np.ndarray) -> np.ndarray:
        if self.kind is CutoffKind.GENERIC:
            zeta = _GENERIC.derivatives(s)  # ψ' = ζ
            psi = np.zeros((MAX_ORDER + 1,) + s.shape)
            psi[1:] = zeta[:MAX_ORDER]
            psi[0] = _generic_psi_values(s)
            return psi
        return _appendix_b_psi(s)

    # scaled access -------------------------------------------------------
    def phi(self, r, order: int | None = None) -> np.ndarray:
        """φ_R and its radial derivatives; rows are orders 0..6 unless `order` given."""
        r = np.asarray(r, dtype=float)
        unit = self._phi_unit(np.atleast_1d(r) / self.R).reshape((MAX_ORDER + 1,) + r.shape)
        scale = self.R ** (2.0 - np.arange(MAX_ORDER + 1))
        out = unit * scale.reshape((-1,) + (1,) * r.ndim)
        return out if order is None else out[order]

    def psi(self, r, order: int | None = None) -> np.ndarray:
        """ψ_R and its radial derivatives; requires a complete pair."""
        if not self.complete:
            raise ValueError("psi requested on a pair without build_psi")
        r = np.asarray(r, dtype=float)
        unit = self._psi_unit(np.atleast_1d(r) / self.R).reshape((MAX_ORDER + 1,) + r.shape)
        scale = self.R ** (2.0 - np.arange(MAX_ORDER + 1))
        out = unit * scale.reshape((-1,) + (1,) * r.ndim)
        return out if order is None else out[order]

    def laplacians(self, r, d: int) -> dict:
        """Δφ_R, ∂²_rΔφ_R, Δ²φ_R and Δ³φ_R for radial functions on R^d."""
        r = np.asarray(r, dtype=float)
        derivs = self.phi(r)
        lap1 = radial_laplacian_derivatives(derivs, r, d)
        lap2 = radial_laplacian_derivatives(lap1, r, d)
        lap3 = radial_laplacian_derivatives(lap2, r, d)
        inside = r <= self.R
        out = {
            "lap": np.where(inside, float(d), lap1[0]),
            "d2_lap": np.where(inside, 0.0, lap1[2]),
            "bilap": np.where(inside, 0.0, lap2[0]),
            "trilap": np.where(inside, 0.0, lap3[0]),
        }
        return out

    def samples(self, r) -> dict:
        r = np.asarray(r, dtype=float)
        out = {"r": r}
        ph = self.phi(r)
        for k in range(MAX_ORDER + 1):
            out[f"phi_d{k}"] = ph[k]
        if self.complete:
            ps = self.psi(r)
            for k in range(MAX_ORDER + 1):
                out[f"psi_d{k}"] = ps[k]
        return out


def radial_laplacian_derivatives(f: np.ndarray, r: np.ndarray, d: int) -> np.ndarray:
    """Derivatives of Δf = f'' + (d−1)f'/r from derivatives of f.

    Uses (f'/r)^{(m)} = Σ_j C(m,j) f^{(m−j+1)} (−1)^j j!/r^{j+1}. Two orders
    are lost per application.
    """
    orders = f.shape[0] - 2
    out = np.zeros((orders,) + f.shape[1:])
    for m in range(orders):
        acc = f[m + 2].copy()
        for j in range(m + 1):
            acc = acc + (d - 1) * comb(m, j) * f[m - j + 1] * (-1) ** j * math.factorial(j) / r ** (j + 1)
        out[m] = acc
    return out


def _generic_psi_values(s: np.ndarray) -> np.ndarray:
    """ψ at unit scale: exact antiderivative of the piecewise polynomial ζ."""
    out = np.zeros_like(s, dtype=float)
    total = 0.0
    for piece in _GENERIC.pieces:
        mask = (s >= piece.left) & (s < piece.right)
        if np.any(mask):
            out[mask] = total + piece.integral_from_left(s[mask])
        if math.isfinite(piece.right):
            total += float(piece.integral_from_left(np.array(piece.right)))
    return out


_APPENDIX_B_BREAKS = np.array([p.left for p in _APPENDIX_B.pieces] + [OUTER_RADIUS])


def _appendix_b_root(s: np.ndarray) -> np.ndarray:
    return np.sqrt(2.0 * _APPENDIX_B.derivatives(s, 0)[0])


def _appendix_b_psi(s: np.ndarray) -> np.ndarray:
    s = np.asarray(s, dtype=float)
    phi = _APPENDIX_B.derivatives(s)
    psi = np.zeros_like(phi)
    inside = s <= 1.0
    psi[0][inside] = 0.5 * s[inside] ** 2
    psi[1][inside] = s[inside]
    psi[2][inside] = 1.0
    outside = ~inside
    if np.any(outside):
        q = _root_from_square(phi[:, outside])
        psi[1:, outside] = q[:MAX_ORDER]
        # ψ(s) = 1/2 + ∫_1^s q, accumulated over the polynomial pieces of φ
        so = s[outside]
        breaks = _APPENDIX_B_BREAKS[1:]  # 1, a, a+blend, 10
        cumulative = np.concatenate(
            ([0.5], 0.5 + np.cumsum(_gauss_integral(_appendix_b_root, breaks[:-1], breaks[1:])))
        )
        idx = np.clip(np.searchsorted(breaks, so, side="right") - 1, 0, len(breaks) - 1)
        start = breaks[idx]
        psi[0][outside] = cumulative[idx] + _gauss_integral(_appendix_b_root, start, so)
    return psi


def build_phi(R: float, kind: CutoffKind | str = CutoffKind.GENERIC) -> CutoffPair:
    """Virial cutoff φ_R = R²φ(r/R) of the requested kind."""
    if not R > 0:
        raise ValueError("R must be positive")
    kind = CutoffKind(kind)
    meta = {"kind": kind.value, "R": float(R), "outer_radius": OUTER_RADIUS}
    if kind is CutoffKind.GENERIC:
        meta["profile"] = "sqrt(2 phi): r on [0,1], C6 ramp to 2 on [1,3], C6 smoothstep to 0 on [3,10]"
    else:
        meta["profile"] = (
            "phi' = r, then r-(r-1)^6 up to 1+6^(-1/5), then phi''<=0 blend+bump to 0 at 10"
        )
        meta["blend_length"] = APPENDIX_B_BLEND
    return CutoffPair(R=float(R), kind=kind, metadata=meta)


def build_psi(pair: CutoffPair) -> CutoffPair:
    """Attach ψ_R(r) = ∫_0^r √(2φ_R) to the pair.

    Raises:
        ValueError: if φ_R is negative somewhere on a sampling of [0, 10R].
    """
    probe = np.linspace(0.0, OUTER_RADIUS * 1.05, 4001) * pair.R
    values = pair.phi(probe, 0)
    if np.any(values < 0):
        bad = probe[np.argmin(values)]
        raise ValueError(f"phi_R is negative at r={bad}; psi_R undefined")
    return replace(pair, complete=True)


def make_cutoff(R: float, kind: CutoffKind | str = CutoffKind.GENERIC) -> CutoffPair:
    """build_phi followed by build_psi."""
    return build_psi(build_phi(R, kind))


@dataclass(frozen=True)
class VerificationReport:
    """Minimal margins of the cutoff inequalities on a sampling grid.

    Margins are 1 − φ''_R, 1 − φ'_R/r and d − Δφ_R; `psi_identity` is the
    maximal |φ'_R − ψ''_Rψ'_R|. For the appendixB kind, `eta_max` is the
    largest admissible η₀ found by bisection, `eta0` the certified value
    (half of it) and `eta_slack` the minimal relative slack at `eta0`.
    """

    d: int
    min_convexity: float
    min_radial: float
    min_laplacian: float
    worst_radius: float
    psi_identity: float
    eta_max: float | None = None
    eta0: float | None = None
    eta_slack: float | None = None

    @property
    def ok(self) -> bool:
        return min(self.min_convexity, self.min_radial, self.min_laplacian) >= 0.0


def eta_bracket(pair: CutoffPair, r: np.ndarray, d: int) -> np.ndarray:
    """The bracket multiplying η₀ in the appendixB inequality, at unit scale.

    Both readings of the squared term are bounded: (4∂²_rΔφ + 2Δ²φ)², the
    square of the error density in the virial identity, and the literal
    4(Δ²φ + 4∂²_rΔφ)². Their maximum is used so η₀ certifies either.
    """
    lap = pair.laplacians(r, d)
    sq_a = (4.0 * lap["d2_lap"] + 2.0 * lap["bilap"]) ** 2
    sq_b = 4.0 * (lap["bilap"] + 4.0 * lap["d2_lap"]) ** 2
    gap = np.clip(d - lap["lap"], 0.0, None)
    return np.maximum(sq_a, sq_b) + (8.0 * d / (4.0 + d)) ** (d / 2.0) * gap ** (d / 2.0)


def verify_cutoff(pair: CutoffPair, d: int, samples: int = 10_000, strict: bool = True) -> VerificationReport:
    """Certify the sign conditions of a complete pair on a fine radial grid.

    Args:
        pair: Complete cutoff pair.
        d: Dimension entering Δ.
        samples: Number of sampling radii on (0, 12R].
        strict: Raise if any margin is negative.

    Raises:
        ValueError: on a negative margin when strict, naming the radius.
    """
    if not pair.complete:
        raise ValueError("verify_cutoff needs a complete pair (call build_psi)")
    r = np.linspace(0.0, 12.0 * pair.R, samples + 1)[1:]
    ph = pair.phi(r)
    lap = pair.laplacians(r, d)
    convexity = 1.0 - ph[2]
    radial = 1.0 - ph[1] / r
    laplacian = d - lap["lap"]
    margins = np.stack([convexity, radial, laplacian])
    # rounding in the polynomial evaluation
    margins = np.where(np.abs(margins) < 1e-12, 0.0, margins)
    worst = int(np.argmin(margins.min(axis=0)))
    ps = pair.psi(r)
    identity = float(np.max(np.abs(ph[1] - ps[2] * ps[1])))
    report = dict(
        d=d,
        min_convexity=float(margins[0].min()),
        min_radial=float(margins[1].min()),
        min_laplacian=float(margins[2].min()),
        worst_radius=float(r[worst]),
        psi_identity=identity,
    )
    if strict and min(report["min_convexity"], report["min_radial"], report["min_laplacian"]) < 0:
        raise ValueError(f"cutoff inequality violated near r={r[worst]:.6g}")
    if pair.kind is CutoffKind.APPENDIX_B:
        eta_max, eta0, slack = _certify_eta(pair, d, samples)
        report.update(eta_max=eta_max, eta0=eta0, eta_slack=slack)
    return VerificationReport(**report)


def _certify_eta(pair: CutoffPair, d: int, samples: int) -> tuple[float, float, float]:
    unit = replace(pair, R=1.0)
    s = np.linspace(1.0, 12.0, samples + 1)[1:]
    gap = 1.0 - unit.phi(s, 2)
    bracket = eta_bracket(unit, s, d)

    def admissible(eta: float) -> bool:
        return bool(np.all(gap - eta * bracket >= 0.0))

    lo, hi = 0.0, 1.0
    if admissible(hi):
        lo = hi
    else:
        for _ in range(200):
            mid = 0.5 * (lo + hi)
            if admissible(mid):
                lo = mid
            else:
                hi = mid
            if hi - lo <= 1e-14 * hi:
                break
    if lo <= 0.0:
        raise ValueError("no positive eta0 admissible on the sampling grid")
    eta0 = 0.5 * lo
    slack = float(np.min(1.0 - eta0 * bracket / gap))
    return lo, eta0, slack


def export_cutoff_csv(pair: CutoffPair, r, path: str | Path) -> Path:
    """Write r, φ_R derivatives and ψ_R derivatives to CSV."""
    data = pair.samples(r)
    path = Path(path)
    keys = list(data)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(keys)
        for row in zip(*(data[k] for k in keys)):
            writer.writerow([repr(float(v)) for v in row])
    return path
