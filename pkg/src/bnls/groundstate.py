"""Ground states of Δ²Q + Q = |Q|^{2σ}Q, the bubble W, and Fourier rearrangement."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np
from scipy.integrate import quad

from .core import Criticality, Field, Params, RadialGrid, lp_norm, make_params, sphere_area
from .spectral import plan_for, sobolev_norm

SOLVER_TOL = 1e-10
NORMALIZATION_TOL = 1e-12
MAX_ITER = 10_000
SYMMETRIZE_UNTIL = 1e-6


@dataclass(frozen=True)
class PohozaevReport:
    """Residuals of the two Pohozaev identities and the threshold products.

    Attributes:
        id1_residual: |‖ΔQ‖² − d/(d+2(2−s_c))·‖Q‖_p^p| / ‖ΔQ‖².
        id2_residual: |‖ΔQ‖² − d/(2(2−s_c))·‖Q‖²| / ‖ΔQ‖².
        energy: E[Q] with μ = 0.
        mass: ‖Q‖².
        energy_mass_threshold: E[Q]^{s_c}·M[Q]^{2−s_c}.
        norm_threshold: ‖ΔQ‖^{s_c}·‖Q‖^{2−s_c}.
    """

    id1_residual: float
    id2_residual: float
    energy: float
    mass: float
    lap_l2: float
    lp_power: float
    energy_mass_threshold: float
    norm_threshold: float


@dataclass(frozen=True)
class GroundState:
    """Converged ground state with its certification data.

    Attributes:
        profile: Real profile Q on the grid.
        residual: ‖Q − (Δ²+1)^{-1}|Q|^{2σ}Q‖/‖Q‖.
        pohozaev: Identity residuals and thresholds.
        c_gn: Optimal Gagliardo-Nirenberg constant, the Weinstein value of Q.
        k_gn: ‖ΔQ‖^{s_c}‖Q‖^{2−s_c}.
        k_gn_formula: (4(σ+1)/(dσ·c_gn))^{1/σ}.
        iterations: Petviashvili iterations used.
        params: Equation parameters (μ ignored by the elliptic problem).
    """

    profile: Field
    residual: float
    pohozaev: PohozaevReport
    c_gn: float
    k_gn: float
    k_gn_formula: float
    iterations: int
    params: Params


class ConvergenceError(RuntimeError):
    pass


def _power_nonlinearity(values: np.ndarray, sigma: float) -> np.ndarray:
    return np.abs(values) ** (2.0 * sigma) * values


def equation_residual(q: Field, params: Params) -> float:
    """Relative residual ‖Q − (Δ²+1)^{-1}|Q|^{2σ}Q‖/‖Q‖ in coefficient space."""
    plan = plan_for(q.grid)
    b = plan.to_coeffs(q.values)
    bn = plan.to_coeffs(_power_nonlinearity(q.values, params.sigma))
    scale = np.linalg.norm(b)
    return float(np.linalg.norm(b - bn / (plan.rho4 + 1.0)) / scale) if scale > 0 else math.inf


def fourier_rearrange(u: Field) -> Field:
    """Fourier rearrangement u^♯: symmetric-decreasing rearrangement of |û|.

    The moduli |û(ρ_k)| are sorted in decreasing order and laid out against
    the cumulative spectral measure of the shells; each target shell receives
    the L²-average of that decreasing profile over its own measure. This keeps
    ‖û‖ exactly and is monotone, so increasing weights only lose mass.
    """
    plan = plan_for(u.grid)
    shell = u.grid.spectral_weights
    coeffs = plan.to_coeffs(u.values)
    modulus = np.abs(coeffs) / plan.sqrt_what
    order = np.argsort(-modulus, kind="stable")
    sorted_measure = np.concatenate(([0.0], np.cumsum(shell[order])))
    sorted_mass = np.concatenate(([0.0], np.cumsum(modulus[order] ** 2 * shell[order])))
    target = np.concatenate(([0.0], np.cumsum(shell)))
    target[-1] = sorted_measure[-1]
    mass_at = np.interp(target, sorted_measure, sorted_mass)
    shell_mass = np.maximum(np.diff(mass_at), 0.0)
    return Field(u.grid, plan.from_coeffs(np.sqrt(shell_mass)).real)


def weinstein(u: Field, params: Params) -> float:
    """‖u‖_p^p / (‖Δu‖^{dσ/2}‖u‖^{2σ+2−dσ/2}) with p = 2σ+2.

    Raises:
        ValueError: for the zero field.
    """
    mass = u.l2()
    lap = sobolev_norm(u, 2.0)
    if mass == 0.0 or lap == 0.0:
        raise ValueError("Weinstein functional undefined for the zero field")
    d, sigma = params.d, params.sigma
    num = lp_norm(u, params.p) ** params.p
    return num / (lap ** (d * sigma / 2.0) * mass ** (2.0 * sigma + 2.0 - d * sigma / 2.0))


def pohozaev_report(q: Field, params: Params) -> PohozaevReport:
    """Check both Pohozaev identities of Δ²Q + Q = |Q|^{2σ}Q and return thresholds."""
    s_c = params.s_c
    lap2 = sobolev_norm(q, 2.0) ** 2
    mass = q.l2() ** 2
    lpp = lp_norm(q, params.p) ** params.p
    denom = lap2 if lap2 > 0 else 1.0
    id1 = abs(lap2 - params.d / (params.d + 2.0 * (2.0 - s_c)) * lpp) / denom
    id2 = abs(lap2 - params.d / (2.0 * (2.0 - s_c)) * mass) / denom
    energy = 0.5 * lap2 - lpp / params.p
    return PohozaevReport(
        id1_residual=float(id1),
        id2_residual=float(id2),
        energy=float(energy),
        mass=float(mass),
        lap_l2=math.sqrt(lap2),
        lp_power=float(lpp),
        # E[Q] < 0 when s_c < 0, where the product is not a real threshold
        energy_mass_threshold=float(energy**s_c * mass ** (2.0 - s_c)) if energy > 0 or s_c == 0 else math.nan,
        norm_threshold=float(lap2 ** (s_c / 2.0) * mass ** ((2.0 - s_c) / 2.0)),
    )


def solve_Q(
    params: Params,
    grid: RadialGrid,
    init: Field | None = None,
    tol: float = SOLVER_TOL,
    max_iter: int = MAX_ITER,
    symmetrize: bool = False,
) -> GroundState:
    """Petviashvili iteration for the ground state.

    Q ← S^γ(Δ²+1)^{-1}(|Q|^{2σ}Q) with S = ⟨Q,(Δ²+1)Q⟩/⟨Q,|Q|^{2σ}Q⟩ and
    γ = (2σ+1)/(2σ). Converges when |S − 1| < 1e-12 and the equation
    residual is below `tol`.

    Args:
        params: Equation parameters; must be energy-subcritical.
        grid: Collocation grid.
        init: Initial guess, e^{−r²} by default.
        tol: Residual tolerance.
        max_iter: Iteration cap.
        symmetrize: Apply Fourier rearrangement to the iterates until the
            step size falls below SYMMETRIZE_UNTIL; the plain iteration then
            polishes, since discrete shell averaging perturbs at ~1e-8.

    Raises:
        ValueError: energy-critical or -supercritical parameters, zero init.
        ConvergenceError: no convergence or collapse to zero.
    """
    if params.criticality in (Criticality.ENERGY_CRITICAL, Criticality.ENERGY_SUPERCRITICAL):
        raise ValueError("ground states need an energy-subcritical exponent")
    plan = plan_for(grid)
    values = np.exp(-grid.nodes**2) if init is None else np.asarray(init.values).real.copy()
    if not np.any(values):
        raise ValueError("initial guess is identically zero")
    sigma = params.sigma
    gamma_exp = (2.0 * sigma + 1.0) / (2.0 * sigma)
    symbol = plan.rho4 + 1.0
    b = plan.to_coeffs(values).real
    step = math.inf
    for it in range(1, max_iter + 1):
        if symmetrize and step > SYMMETRIZE_UNTIL:
            values = fourier_rearrange(Field(grid, values)).values.real
            b = plan.to_coeffs(values).real
        bn = plan.to_coeffs(_power_nonlinearity(values, sigma)).real
        overlap = float(np.dot(b, bn))
        if not overlap > 0:
            raise ConvergenceError(f"iteration lost positivity of ⟨Q,N(Q)⟩ at step {it}")
        stab = float(np.dot(symbol * b, b)) / overlap
        b_new = stab**gamma_exp * bn / symbol
        values = plan.from_coeffs(b_new).real
        step = float(np.linalg.norm(b_new - b) / np.linalg.norm(b_new))
        b = b_new
        scale = np.linalg.norm(b)
        if scale < 1e-300 or not np.isfinite(scale):
            raise ConvergenceError("iteration collapsed to zero or diverged")
        if abs(stab - 1.0) < NORMALIZATION_TOL and step < tol:
            q = Field(grid, values)
            residual = equation_residual(q, params)
            if residual < tol:
                return _finish(q, params, residual, it)
    raise ConvergenceError(f"no convergence in {max_iter} iterations")


def _finish(q: Field, params: Params, residual: float, iterations: int) -> GroundState:
    report = pohozaev_report(q, params)
    c_gn = weinstein(q, params)
    d, sigma = params.d, params.sigma
    k_formula = (4.0 * (sigma + 1.0) / (d * sigma * c_gn)) ** (1.0 / sigma)
    return GroundState(
        profile=q,
        residual=residual,
        pohozaev=report,
        c_gn=c_gn,
        k_gn=report.norm_threshold,
        k_gn_formula=k_formula,
        iterations=iterations,
        params=params,
    )


def k_from_energy_mass(report: PohozaevReport, s_c: float, d: int) -> float:
    """K = (s_c/d)^{−s_c/2}·E^{s_c/2}·M^{1−s_c/2}, valid for 0 < s_c < 2."""
    return (s_c / d) ** (-s_c / 2.0) * report.energy ** (s_c / 2.0) * report.mass ** (1.0 - s_c / 2.0)


# Energy-critical bubble --------------------------------------------------------


def bubble_amplitude(d: int) -> float:
    """W(0) = (d(d−4)(d²−4))^{(d−4)/8}."""
    return float(d * (d - 4) * (d * d - 4)) ** ((d - 4) / 8.0)


def bubble(d: int, r) -> np.ndarray:
    """W(r) = (d(d−4)(d²−4))^{(d−4)/8}·(1+r²)^{−(d−4)/2}."""
    r = np.asarray(r, dtype=float)
    return bubble_amplitude(d) * (1.0 + r**2) ** (-(d - 4) / 2.0)


def bubble_laplacian(d: int, r) -> np.ndarray:
    """ΔW(r) = −(d−4)·W(0)·(2r² + d)(1+r²)^{−d/2}."""
    r = np.asarray(r, dtype=float)
    return -(d - 4) * bubble_amplitude(d) * (2.0 * r**2 + d) * (1.0 + r**2) ** (-d / 2.0)


def _taper(r: np.ndarray, start: float, stop: float) -> np.ndarray:
    """C^∞ step from 1 on [0, start] to 0 on [stop, ∞)."""
    x = np.clip((r - start) / (stop - start), 0.0, 1.0)
    with np.errstate(divide="ignore", over="ignore"):
        a = np.where(x < 1.0, np.exp(-1.0 / np.where(x < 1.0, 1.0 - x, 1.0)), 0.0)
        b = np.where(x > 0.0, np.exp(-1.0 / np.where(x > 0.0, x, 1.0)), 0.0)
    return a / (a + b)


def explicit_W(d: int, grid: RadialGrid, taper: float = 0.6) -> Field:
    """The bubble W sampled on the grid, smoothly tapered to 0 near rmax.

    The taper starts at taper·rmax and ends at 0.95·rmax so the field is
    compatible with the transform; inside taper·rmax the samples are exact.

    Raises:
        ValueError: d < 5.
    """
    if d < 5:
        raise ValueError("the bubble W is defined for d >= 5")
    if grid.d != d:
        raise ValueError("grid dimension does not match d")
    r = grid.nodes
    chi = _taper(r, taper * grid.rmax, 0.95 * grid.rmax)
    return Field(grid, bubble(d, r) * chi)


@dataclass(frozen=True)
class BubbleReport:
    """Checks on W: value at 0, elliptic residual and the energy identity."""

    d: int
    w0: float
    w0_exact: float
    residual: float
    energy: float
    lap_sq: float
    energy_identity_error: float
    inner_radius: float


def bubble_report(d: int, grid: RadialGrid, taper: float = 0.6) -> BubbleReport:
    """Certify the sampled bubble.

    The elliptic residual ‖Δ²W − W^{(d+4)/(d−4)}‖/‖W^{(d+4)/(d−4)}‖ is measured
    on r ≤ taper·rmax/2, where the tapering has no influence. Integrals split at
    a smooth partition: the transform supplies the interior part and the
    closed forms of W and ΔW supply the tail, which for d = 5 decays only like
    1/r and cannot be dropped.
    """
    w = explicit_W(d, grid, taper)
    plan = plan_for(grid)
    r = grid.nodes
    wt = grid.weights
    expo = (d + 4.0) / (d - 4.0)
    bilap = plan.multiplier(w.values, plan.rho4).real
    target = bubble(d, r) ** expo
    inner = taper * grid.rmax / 2.0
    mask = r <= inner
    residual = math.sqrt(np.dot(wt[mask], (bilap - target)[mask] ** 2) / np.dot(wt[mask], target[mask] ** 2))

    lap = plan.multiplier(w.values, -plan.rho2).real
    split_lo, split_hi = 0.25 * grid.rmax, taper * grid.rmax
    chi = _taper(r, split_lo, split_hi)
    omega = sphere_area(d)

    def tail(func):
        def integrand(s):
            return omega * s ** (d - 1) * func(s) * (1.0 - _taper(np.array([s]), split_lo, split_hi)[0])

        total, _ = quad(integrand, split_lo, split_hi, limit=200, epsabs=0.0, epsrel=1e-13)
        rest, _ = quad(lambda s: omega * s ** (d - 1) * func(s), split_hi, np.inf, limit=200, epsabs=0.0, epsrel=1e-13)
        return total + rest

    lap_sq = float(np.dot(wt, chi * lap**2)) + tail(lambda s: bubble_laplacian(d, s) ** 2)
    p = 2.0 * d / (d - 4.0)
    lp_power = float(np.dot(wt, chi * np.abs(w.values) ** p)) + tail(lambda s: bubble(d, s) ** p)
    energy = 0.5 * lap_sq - lp_power / p
    return BubbleReport(
        d=d,
        w0=float(plan.evaluate(w, 0.0)[0].real),
        w0_exact=bubble_amplitude(d),
        residual=float(residual),
        energy=float(energy),
        lap_sq=float(lap_sq),
        energy_identity_error=abs(energy - 2.0 / d * lap_sq) / abs(2.0 / d * lap_sq),
        inner_radius=inner,
    )


# Persistence -----------------------------------------------------------------------


def export_ground_state(state: GroundState, stem: str | Path) -> tuple[Path, Path]:
    """Write <stem>.csv with (r, Q) and <stem>.json with metadata."""
    stem = Path(stem)
    stem.parent.mkdir(parents=True, exist_ok=True)
    csv_path = stem.with_suffix(".csv")
    json_path = stem.with_suffix(".json")
    grid = state.profile.grid
    with csv_path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["r", "Q"])
        for r, q in zip(grid.nodes, state.profile.values.real):
            writer.writerow([repr(float(r)), repr(float(q))])
    params = state.params
    meta = {
        "params": {"d": params.d, "sigma": params.sigma, "mu": params.mu, "s_c": params.s_c},
        "grid": {"rmax": grid.rmax, "n": grid.n},
        "residual": state.residual,
        "iterations": state.iterations,
        "c_gn": state.c_gn,
        "k_gn": state.k_gn,
        "k_gn_formula": state.k_gn_formula,
        "pohozaev": asdict(state.pohozaev),
    }
    json_path.write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")
    return csv_path, json_path


def import_ground_state(stem: str | Path) -> GroundState:
    """Read a ground state written by export_ground_state, rebuilding its grid."""
    from .core import make_grid

    stem = Path(stem)
    meta = json.loads(stem.with_suffix(".json").read_text())
    with stem.with_suffix(".csv").open() as fh:
        rows = list(csv.reader(fh))
    if rows[0] != ["r", "Q"]:
        raise ValueError(f"unexpected ground-state header {rows[0]}")
    values = np.array([float(q) for _, q in rows[1:]])
    p = meta["params"]
    params = make_params(p["d"], p["sigma"], p["mu"])
    grid = make_grid(params.d, meta["grid"]["rmax"], meta["grid"]["n"])
    if values.shape != (grid.n,):
        raise ValueError("profile length does not match the stored grid")
    q = Field(grid, values)
    return _finish(q, params, equation_residual(q, params), int(meta["iterations"]))
