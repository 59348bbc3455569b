"""Blowup criteria, rate fits, N_R scaling probes and parameter sweeps."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from .core import Criticality, Field, Params
from .cutoffs import CutoffKind, make_cutoff
from .diagnostics import commutator_NR, energy, mass
from .evolution import _series
from .groundstate import GroundState, bubble, bubble_laplacian
from .spectral import plan_for, sobolev_norm


class Theorem(str, enum.Enum):
    SUPERCRITICAL = "T1_1"
    MASS_CRITICAL = "T1_3"
    ENERGY_CRITICAL = "T1_4"


@dataclass(frozen=True)
class CriterionVerdict:
    """Evaluation of a blowup criterion on initial data.

    Attributes:
        theorem: Which criterion was applied.
        branch: The hypothesis clause that applied.
        satisfied: Whether the strict inequalities hold.
        quantities: Every compared scalar.
        kappa_used: The user-supplied constant for μ < 0, if any.
        expected: Conclusion the criterion predicts when satisfied.
    """

    theorem: Theorem
    branch: str
    satisfied: bool
    quantities: dict
    kappa_used: float | None = None
    expected: str = ""


def _base_quantities(u0: Field, params: Params) -> dict:
    return {
        "energy": energy(u0, params),
        "mass": mass(u0),
        "lap_l2": sobolev_norm(u0, 2.0),
        "grad_l2": sobolev_norm(u0, 1.0),
        "mu": params.mu,
    }


def _mu_branch(theorem: Theorem, q: dict, params: Params, kappa: float | None) -> CriterionVerdict:
    if params.mu > 0:
        return CriterionVerdict(theorem, "i_mu_positive", q["energy"] < 0, q, None, "finite-time blowup")
    if kappa is None:
        raise ValueError("mu < 0 requires a user-supplied kappa")
    if not kappa > 0:
        raise ValueError("kappa must be positive")
    q["bound"] = -kappa * params.mu**2 * q["mass"]
    return CriterionVerdict(theorem, "i_mu_negative", q["energy"] < q["bound"], q, float(kappa), "finite-time blowup")


def criterion_supercritical(u0: Field, params: Params, q: GroundState | None = None, kappa: float | None = None) -> CriterionVerdict:
    """Blowup criterion for 0 < s_c < 2, σ ≤ 4 and radial data.

    μ > 0 needs E < 0; μ < 0 needs E < −κμ²M; μ = 0 needs E < 0 or, for
    E ≥ 0, E^{s_c}M^{2−s_c} below and ‖Δu‖^{s_c}‖u‖^{2−s_c} above the ground
    state values.

    Raises:
        ValueError: parameters outside the criterion, missing κ for μ < 0,
            or missing ground state when the threshold branch is needed.
    """
    if not (0 < params.s_c < 2) or params.sigma > 4:
        raise ValueError("criterion needs 0 < s_c < 2 and sigma <= 4")
    quantities = _base_quantities(u0, params)
    if params.mu != 0:
        return _mu_branch(Theorem.SUPERCRITICAL, quantities, params, kappa)
    if quantities["energy"] < 0:
        return CriterionVerdict(Theorem.SUPERCRITICAL, "ii_negative_energy", True, quantities, None, "finite-time blowup")
    if q is None:
        raise ValueError("ground state required for the threshold branch")
    s = params.s_c
    quantities["energy_mass"] = quantities["energy"] ** s * quantities["mass"] ** (2.0 - s)
    quantities["norm_product"] = quantities["lap_l2"] ** s * quantities["mass"] ** ((2.0 - s) / 2.0)
    quantities["energy_mass_Q"] = q.pohozaev.energy_mass_threshold
    quantities["norm_product_Q"] = q.pohozaev.norm_threshold
    return decide_threshold(quantities)


def decide_threshold(quantities: dict) -> CriterionVerdict:
    """Pure decision of the μ = 0 ground-state threshold branch from its quantities."""
    below = quantities["energy_mass"] < quantities["energy_mass_Q"]
    above = quantities["norm_product"] > quantities["norm_product_Q"]
    scale = max(abs(quantities["energy_mass_Q"]), 1e-300)
    on_threshold = abs(quantities["energy_mass"] - quantities["energy_mass_Q"]) <= 1e-9 * scale
    quantities = dict(quantities, global_side=bool(below and quantities["norm_product"] < quantities["norm_product_Q"]))
    branch = "ii_boundary" if on_threshold else "ii_threshold"
    expected = "finite-time blowup" if below and above else (
        "global existence" if quantities["global_side"] else "no conclusion")
    return CriterionVerdict(Theorem.SUPERCRITICAL, branch, bool(below and above), quantities, None, expected)


def criterion_masscritical(u0: Field, params: Params) -> CriterionVerdict:
    """Mass-critical criterion: E[u₀] < 0 with μ ≥ 0.

    Raises:
        ValueError: s_c ≠ 0 or μ < 0.
    """
    if params.criticality is not Criticality.MASS_CRITICAL:
        raise ValueError("criterion needs the mass-critical exponent sigma = 4/d")
    if params.mu < 0:
        raise ValueError("the mass-critical criterion does not cover mu < 0")
    quantities = _base_quantities(u0, params)
    if params.mu > 0:
        branch, expected = "i_mu_positive", "finite-time blowup"
    else:
        branch, expected = "ii_mu_zero", "blowup in finite time, or in infinite time with ‖Δu(t)‖ ≥ Ct²"
    return CriterionVerdict(Theorem.MASS_CRITICAL, branch, quantities["energy"] < 0, quantities, None, expected)


@dataclass(frozen=True)
class BubbleConstants:
    """Whole-space ‖ΔW‖² and E[W] by adaptive quadrature of the closed forms."""

    d: int
    lap_sq: float
    energy: float


def bubble_constants(d: int) -> BubbleConstants:
    from scipy.integrate import quad

    from .core import sphere_area

    if d < 5:
        raise ValueError("the bubble W is defined for d >= 5")
    omega = sphere_area(d)
    p = 2.0 * d / (d - 4.0)
    lap_sq = omega * sum(
        quad(lambda s: s ** (d - 1) * bubble_laplacian(d, s) ** 2, a, b, limit=400, epsabs=0.0, epsrel=1e-13)[0]
        for a, b in ((0.0, 1.0), (1.0, np.inf))
    )
    lp = omega * sum(
        quad(lambda s: s ** (d - 1) * bubble(d, s) ** p, a, b, limit=400, epsabs=0.0, epsrel=1e-13)[0]
        for a, b in ((0.0, 1.0), (1.0, np.inf))
    )
    return BubbleConstants(d=d, lap_sq=float(lap_sq), energy=float(0.5 * lap_sq - lp / p))


def criterion_energycritical(u0: Field, params: Params, w: Field | BubbleConstants | None = None, kappa: float | None = None) -> CriterionVerdict:
    """Energy-critical criterion for d ≥ 5 and σ = 4/(d−4).

    μ = 0 needs E < 0 or E[u₀] < E[W] together with ‖Δu₀‖ > ‖ΔW‖. The
    reference values come from `w`: a sampled bubble (grid quadrature) or
    BubbleConstants; by default the closed-form whole-space values.
    """
    if params.criticality is not Criticality.ENERGY_CRITICAL:
        raise ValueError("criterion needs d >= 5 and the energy-critical exponent")
    quantities = _base_quantities(u0, params)
    if params.mu != 0:
        return _mu_branch(Theorem.ENERGY_CRITICAL, quantities, params, kappa)
    if quantities["energy"] < 0:
        return CriterionVerdict(Theorem.ENERGY_CRITICAL, "ii_negative_energy", True, quantities, None, "finite-time blowup")
    if w is None:
        w = bubble_constants(params.d)
    if isinstance(w, BubbleConstants):
        quantities["energy_W"], quantities["lap_l2_W"] = w.energy, math.sqrt(w.lap_sq)
    else:
        quantities["energy_W"], quantities["lap_l2_W"] = energy(w, params.with_mu(0.0)), sobolev_norm(w, 2.0)
    below = quantities["energy"] < quantities["energy_W"]
    above = quantities["lap_l2"] > quantities["lap_l2_W"]
    if below and above:
        expected = "finite-time blowup"
    elif below:
        expected = "global existence"
    else:
        expected = "no conclusion"
    return CriterionVerdict(Theorem.ENERGY_CRITICAL, "ii_threshold", bool(below and above), quantities, None, expected)


# Rate functional ---------------------------------------------------------------------


@dataclass(frozen=True)
class RateFit:
    """Slope of the rate functional g(t) = ∫_t^T (T−τ)‖Δu(τ)‖² dτ.

    Attributes:
        T: Blowup time used.
        slope: Fitted s in g ~ C(T−t)^s.
        beta_measured: s/(2−s).
        C_fit: Prefactor C.
        alpha: (4−σ)/(σ(d−1)), or NaN when params were not supplied.
        window: (T−t) interval of the fit.
        count: Records in the window.
    """

    T: float
    slope: float
    beta_measured: float
    C_fit: float
    alpha: float
    window: tuple
    count: int

    @property
    def alpha_slope(self) -> float:
        """2α/(1+α), the slope the α-rate would produce."""
        return 2.0 * self.alpha / (1.0 + self.alpha)


def rate_alpha(params: Params) -> float:
    return (4.0 - params.sigma) / (params.sigma * (params.d - 1))


def rate_functional(t: np.ndarray, y: np.ndarray, T: float, tail_points: int = 6) -> np.ndarray:
    """g(t_i) for records (t_i, ‖Δu(t_i)‖).

    Between records the integrand (T−τ)‖Δu‖² is interpolated by the power
    law through its endpoint values, which integrates exactly on power-law
    data. The gap from the last record to T uses a power law fitted to the
    last `tail_points` records.
    """
    t = np.asarray(t, dtype=float)
    y = np.asarray(y, dtype=float)
    s = T - t
    if np.any(s <= 0):
        raise ValueError("records must precede the blowup time")
    f = s * y**2
    k = np.log(f[:-1] / f[1:]) / np.log(s[:-1] / s[1:])
    amp = f[1:] / s[1:] ** k
    with np.errstate(divide="ignore", invalid="ignore"):
        pieces = np.where(
            np.abs(k + 1.0) > 1e-12,
            amp * (s[:-1] ** (k + 1.0) - s[1:] ** (k + 1.0)) / (k + 1.0),
            amp * np.log(s[:-1] / s[1:]),
        )
    m = min(tail_points, len(t))
    slope, intercept = np.polyfit(np.log(s[-m:]), np.log(f[-m:]), 1)
    if slope <= -1.0:
        raise ValueError("rate integrand not integrable up to T")
    tail = math.exp(intercept) * s[-1] ** (slope + 1.0) / (slope + 1.0)
    return np.concatenate((np.cumsum(pieces[::-1])[::-1], [0.0])) + tail


def fit_rate(records, T: float, params: Params | None = None, decades: float = 1.0, min_records: int = 30) -> RateFit:
    """Fit log g against log(T−t) over the final `decades` of (T−t).

    Raises:
        ValueError: fewer than min_records in the window, or g not decreasing.
    """
    t, y = _series(records)
    keep = t < T
    t, y = t[keep], y[keep]
    if len(t) < 2:
        raise ValueError("fit window too short")
    g = rate_functional(t, y, T)
    if np.any(np.diff(g) >= 0):
        raise ValueError("rate functional is not monotone")
    s = T - t
    window = s <= s[-1] * 10.0**decades
    count = int(np.sum(window))
    if count < min_records:
        raise ValueError(f"fit window too short: {count} records < {min_records}")
    slope, intercept = np.polyfit(np.log(s[window]), np.log(g[window]), 1)
    alpha = rate_alpha(params) if params is not None else math.nan
    return RateFit(
        T=float(T),
        slope=float(slope),
        beta_measured=float(slope / (2.0 - slope)),
        C_fit=float(math.exp(intercept)),
        alpha=alpha,
        window=(float(s[window].min()), float(s[window].max())),
        count=count,
    )


@dataclass(frozen=True)
class GrowthFloor:
    """Fit of ‖Δu(t)‖ ≥ c·t² on t ≥ t0 for a run without finite-time detection."""

    c: float
    t0: float
    exponent: float
    holds: bool


def fit_growth_floor(records, t0_fraction: float = 0.5) -> GrowthFloor:
    """Largest c with ‖Δu(t)‖ ≥ c t² on the last part of the run, and the growth exponent.

    t0 is t0_fraction of the final time; `holds` requires c > 0.
    """
    t, y = _series(records)
    t0 = t0_fraction * float(t[-1])
    mask = t >= max(t0, 1e-300)
    c = float(np.min(y[mask] / t[mask] ** 2))
    exponent = float(np.polyfit(np.log(t[mask]), np.log(y[mask]), 1)[0]) if mask.sum() >= 2 else math.nan
    return GrowthFloor(c=c, t0=t0, exponent=exponent, holds=bool(c > 0 and math.isfinite(c)))


# N_R scaling -------------------------------------------------------------------------


@dataclass(frozen=True)
class ScalingProbe:
    a_emp: float
    b_emp: float
    delta: float
    samples: int

    @property
    def relation_error(self) -> float:
        return abs(-self.a_emp + 2.0 * self.b_emp - self.delta)


def dilate(u: Field, lam: float) -> Field:
    """λ^{d/2}u(λx), resampled through the band-limited interpolant."""
    g = u.grid
    vals = plan_for(g).evaluate(u, lam * g.nodes)
    vals = np.where(lam * g.nodes < g.rmax, vals, 0.0)
    return Field(g, lam ** (g.d / 2.0) * vals)


def nr_scaling_probe(params: Params, base: Field, scales, radii=None, kind: CutoffKind = CutoffKind.GENERIC) -> ScalingProbe:
    """Regress log|N_R[u_λ]| on log R and log‖Δu_λ‖ over u_λ = λ^{d/2}u(λ·).

    Args:
        params: Equation parameters; d ≥ 3.
        base: Complex-phase datum.
        scales: Dilation factors λ.
        radii: Cutoff scales R; defaults to `scales`.
        kind: Cutoff construction.

    Raises:
        ValueError: fewer than two distinct λ or R, or N_R vanishing.
    """
    if base.grid.d < 3:
        raise ValueError("N_R requires d >= 3")
    scales = sorted({float(s) for s in scales})
    radii = scales if radii is None else sorted({float(r) for r in radii})
    if len(scales) < 2 or len(radii) < 2:
        raise ValueError("degenerate regression: need two or more distinct scales and radii")
    rows, target = [], []
    pairs = {R: make_cutoff(R, kind) for R in radii}
    for lam in scales:
        u = dilate(base, lam)
        lap = sobolev_norm(u, 2.0)
        for R in radii:
            n = commutator_NR(u, pairs[R], params)
            if n == 0.0 or not math.isfinite(n):
                raise ValueError("N_R vanishes; the probe needs complex-phase data")
            rows.append((1.0, math.log(R), math.log(lap)))
            target.append(math.log(abs(n)))
    coef, *_ = np.linalg.lstsq(np.array(rows), np.array(target), rcond=None)
    return ScalingProbe(a_emp=float(coef[1]), b_emp=float(coef[2]), delta=params.delta, samples=len(rows))


# Virial inequality audit -----------------------------------------------------------------


@dataclass(frozen=True)
class VirialAudit:
    """Measured dM_R/dt against the virial inequality at interior records.

    Attributes:
        t: Record times where the derivative was measured.
        measured: Centered finite-difference dM_R/dt.
        identity: dM_R/dt from the exact radial identity.
        bound: main + X_μ + error budget.
        violations: Number of records with measured > bound.
    """

    t: np.ndarray
    measured: np.ndarray
    identity: np.ndarray
    bound: np.ndarray

    @property
    def violations(self) -> int:
        return int(np.sum(self.measured > self.bound))

    @property
    def min_slack(self) -> float:
        return float(np.min(self.bound - self.measured))


def virial_audit(u0: Field, params: Params, pair, horizon: float, record_every: float, spacing: int = 4, control=None) -> VirialAudit:
    """Evolve, keep the field at every record and test dM_R/dt ≤ main + X_μ + budget.

    dM_R/dt is the fourth-order centered difference with node spacing of
    `spacing` recording intervals, so integrator noise is averaged out.
    """
    from .diagnostics import localized_virial, virial_rhs
    from .evolution import evolve

    if spacing < 1:
        raise ValueError("spacing must be a positive number of records")
    count = int(round(horizon / record_every))
    fields = [u0]
    u, dt = u0, 1e-3
    for _ in range(count):
        run = evolve(u, params, record_every, record_every, dt0=dt, control=control, detect=False)
        u, dt = run.state.u, run.state.dt
        fields.append(u)
    times = record_every * np.arange(count + 1)
    m = np.array([localized_virial(f, pair) for f in fields])
    e0 = energy(u0, params)
    centers = np.arange(2 * spacing, count + 1 - 2 * spacing)
    if len(centers) == 0:
        raise ValueError("horizon too short for the finite-difference stencil")
    h = spacing * record_every
    k = spacing
    measured = (-m[centers + 2 * k] + 8 * m[centers + k] - 8 * m[centers - k] + m[centers - 2 * k]) / (12 * h)
    rhs = [virial_rhs(fields[i], pair, params, e0) for i in centers]
    return VirialAudit(
        t=times[centers],
        measured=measured,
        identity=np.array([x.identity for x in rhs]),
        bound=np.array([x.bound for x in rhs]),
    )


# Sweeps --------------------------------------------------------------------------------


def _run_one(config):
    from .harness.pipeline import run_config

    return run_config(config)


def sweep(configs, workers: int | None = None) -> list:
    """Run independent configurations and return their summaries in input order.

    Runs execute in a process pool when more than one worker is available;
    each run's failure is recorded in its summary and never stops the sweep.
    """
    import os
    from concurrent.futures import ProcessPoolExecutor

    configs = list(configs)
    if not configs:
        return []
    workers = workers or min(len(configs), os.cpu_count() or 1)
    if workers <= 1:
        return [_run_one(c) for c in configs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_run_one, configs))


def verdict_table(summaries) -> list[dict]:
    """Rows of the sweep verdict table, indexed by configuration position."""
    from .harness.pipeline import verdict_row

    return [verdict_row(i, s) for i, s in enumerate(summaries)]


def write_verdict_table(path, summaries):
    """CSV with columns config_id, theorem, branch, satisfied, outcome, T_estimate, beta_measured, alpha."""
    import csv
    from pathlib import Path

    from .harness.pipeline import VERDICT_COLUMNS

    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)

    def cell(v):
        if v is None:
            return ""
        if isinstance(v, float):
            return repr(v)
        return str(v)

    with path.open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(VERDICT_COLUMNS)
        for row in verdict_table(summaries):
            writer.writerow([cell(row[c]) for c in VERDICT_COLUMNS])
    return path
