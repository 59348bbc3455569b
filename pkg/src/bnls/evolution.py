"""Exponential time differencing for i u_t = Δ²u − μΔu − |u|^{2σ}u and blowup detection."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .core import Field, Params
from .cutoffs import CutoffPair
from .diagnostics import DiagnosticsRecord, record
from .spectral import TransformPlan, plan_for

CONTOUR_POINTS = 32


class Outcome(str, enum.Enum):
    BLOWUP_DETECTED = "blowup_detected"
    BOUNDED_ON_HORIZON = "bounded_on_horizon"
    RESOLUTION_EXHAUSTED = "resolution_exhausted"


class NonFiniteFieldError(FloatingPointError):
    """Raised when a step produces NaN or Inf."""


class InsufficientDataError(ValueError):
    pass


@dataclass(frozen=True)
class BlowupVerdict:
    """Outcome of a run or of a record analysis.

    Attributes:
        outcome: Classification.
        T_estimate: Fitted blowup time; set only for blowup_detected.
        growth_exponent: Fitted p in ‖Δu‖ ~ (T−t)^{−p}.
        amplification: max ‖Δu‖ over initial ‖Δu‖.
        reason: Short human-readable explanation.
    """

    outcome: Outcome
    T_estimate: float | None = None
    growth_exponent: float | None = None
    amplification: float = 1.0
    reason: str = ""

    def __post_init__(self):
        if (self.T_estimate is not None) != (self.outcome is Outcome.BLOWUP_DETECTED):
            raise ValueError("T_estimate is present exactly for blowup_detected")


@dataclass(frozen=True)
class StepControl:
    """Tunables of the adaptive integrator and of the detector.

    Attributes:
        drift_tol: Largest relative change of mass or energy allowed in one step.
        error_tol: Largest embedded error estimate allowed in one step.
        grow_after: Clean steps before dt doubles.
        phase_cap: dt ≤ phase_cap / max|u|^{2σ}, the nonlinear phase per step.
        dt_max: Upper bound on dt.
        dt_min: Steps below this end the run as resolution-exhausted.
        amplification: ‖Δu‖ growth over its initial value that arms the detector.
        growth_record: Extra record whenever ‖Δu‖ grew by this factor since the last one.
        tail_limit: Largest fraction of ‖Δu‖² allowed in the top eighth of the spectrum.
        window: Records in the trailing power-law fit.
        stability: Relative spread of T across window shifts for a stable fit.
        nonlinear: Coefficient of the focusing term (0 gives the free flow).
    """

    drift_tol: float = 1e-9
    error_tol: float = 1e-7
    grow_after: int = 20
    phase_cap: float = 0.05
    dt_max: float = 1e-2
    dt_min: float = 1e-13
    amplification: float = 10.0
    growth_record: float = 1.05
    tail_limit: float = 1e-6
    window: int = 12
    stability: float = 0.01
    nonlinear: float = 1.0


@dataclass
class EvolutionState:
    """Time, field and bookkeeping of a run.

    Attributes:
        t: Current time.
        u: Current field.
        dt: Step the controller will try next.
        step_count: Accepted steps.
        drift: Relative deviation of mass and energy from their initial values.
    """

    t: float
    u: Field
    dt: float
    step_count: int = 0
    drift: dict = field(default_factory=lambda: {"mass_rel": 0.0, "energy_rel": 0.0})
    streak: int = field(default=0, repr=False)
    tail: float = field(default=0.0, repr=False)
    coeffs: np.ndarray | None = field(default=None, repr=False)


class _Coefficients:
    """ETDRK4 weights for one step size, by contour averaging around hL."""

    def __init__(self, plan: TransformPlan, mu: float, h: float):
        lin = -1j * (plan.rho4 + mu * plan.rho2)
        c = h * lin
        # full circle: the symbol is complex, so the half-circle shortcut does not apply
        roots = np.exp(2j * math.pi * (np.arange(1, CONTOUR_POINTS + 1) - 0.5) / CONTOUR_POINTS)
        z = c[:, None] + roots[None, :]
        ez = np.exp(z)
        ez2 = np.exp(z / 2.0)
        self.full = np.exp(c)
        self.half = np.exp(c / 2.0)
        self.q = h * np.mean((ez2 - 1.0) / z, axis=1)
        self.phi1 = h * np.mean((ez - 1.0) / z, axis=1)
        self.f1 = h * np.mean((-4.0 - z + ez * (4.0 - 3.0 * z + z**2)) / z**3, axis=1)
        self.f2 = h * np.mean((2.0 + z + ez * (z - 2.0)) / z**3, axis=1)
        self.f3 = h * np.mean((-4.0 - 3.0 * z - z**2 + ez * (4.0 - z)) / z**3, axis=1)


class Integrator:
    """ETDRK4 in the coefficient space of the Hankel transform.

    The linear part −i(ρ⁴ + μρ²) is integrated exactly; the nonlinearity
    i|u|^{2σ}u is evaluated on the physical grid. An exponential midpoint
    step shares the stages and gives the embedded error estimate.
    """

    def __init__(self, params: Params, plan: TransformPlan, nonlinear: float = 1.0):
        self.params = params
        self.plan = plan
        self.nonlinear = float(nonlinear)
        self._cache: dict[float, _Coefficients] = {}

    def coefficients(self, h: float) -> _Coefficients:
        hit = self._cache.get(h)
        if hit is None:
            if len(self._cache) > 64:
                self._cache.clear()
            hit = self._cache[h] = _Coefficients(self.plan, self.params.mu, h)
        return hit

    def _rhs(self, values: np.ndarray) -> np.ndarray:
        if self.nonlinear == 0.0:
            return np.zeros_like(values)
        term = (1j * self.nonlinear) * np.abs(values) ** (2.0 * self.params.sigma) * values
        return self.plan.to_coeffs(term)

    def step(self, coeffs: np.ndarray, values: np.ndarray, h: float):
        """One step of size h.

        Returns:
            New coefficients, new physical values and the embedded error
            estimate ‖b₄ − b₂‖/‖b₄‖.
        """
        k = self.coefficients(h)
        if self.nonlinear == 0.0:
            new = k.full * coeffs
            return new, self.plan.from_coeffs(new), 0.0
        from_coeffs = self.plan.from_coeffs
        n0 = self._rhs(values)
        a = k.half * coeffs + k.q * n0
        na = self._rhs(from_coeffs(a))
        b = k.half * coeffs + k.q * na
        nb = self._rhs(from_coeffs(b))
        c = k.half * a + k.q * (2.0 * nb - n0)
        nc = self._rhs(from_coeffs(c))
        base = k.full * coeffs
        new = base + k.f1 * n0 + 2.0 * k.f2 * (na + nb) + k.f3 * nc
        lower = base + k.phi1 * na
        scale = np.linalg.norm(new)
        err = float(np.linalg.norm(new - lower) / scale) if scale > 0 else 0.0
        return new, from_coeffs(new), err


def _invariants(plan: TransformPlan, coeffs: np.ndarray, values: np.ndarray, params: Params, nonlinear: float):
    """Mass, energy and the energy's natural scale from coefficients and samples."""
    power = np.abs(coeffs) ** 2
    kinetic = 0.5 * float(np.dot(plan.rho4, power))
    dispersive = 0.5 * params.mu * float(np.dot(plan.rho2, power))
    potential = nonlinear * float(np.dot(plan.grid.weights, np.abs(values) ** params.p)) / params.p
    energy = kinetic + dispersive - potential
    return float(np.sum(power)), energy, kinetic + abs(dispersive) + abs(potential)


def _spectral_tail(plan: TransformPlan, coeffs: np.ndarray) -> float:
    weight = plan.rho4 * np.abs(coeffs) ** 2
    total = float(np.sum(weight))
    if total == 0.0:
        return 0.0
    return float(np.sum(weight[-(len(weight) // 8):])) / total


def step(state: EvolutionState, params: Params, plan: TransformPlan, control: StepControl | None = None) -> EvolutionState:
    """Advance one accepted adaptive step from `state`.

    The step is retried with dt halved while the embedded error or the
    per-step drift of mass or energy exceeds its tolerance.

    Raises:
        NonFiniteFieldError: the field became NaN or Inf.
        FloatingPointError: dt fell below control.dt_min.
    """
    control = control or StepControl()
    integ = Integrator(params, plan, control.nonlinear)
    advanced, _ = _advance(integ, state, plan, control, math.inf, None)
    return advanced


def _advance(integ: Integrator, state: EvolutionState, plan: TransformPlan, control: StepControl, limit: float, reference):
    """Take one accepted step of size ≤ limit; returns (state, used_dt)."""
    params = integ.params
    values = state.u.values
    if not np.all(np.isfinite(values)):
        raise NonFiniteFieldError(f"non-finite field at t={state.t}")
    coeffs = state.coeffs if state.coeffs is not None else plan.to_coeffs(values)
    m0, e0, scale0 = _invariants(plan, coeffs, values, params, integ.nonlinear)
    if reference is None:
        reference = (m0, e0, scale0)
    peak = float(np.max(np.abs(values)))
    cap = control.dt_max
    if integ.nonlinear and peak > 0:
        cap = min(cap, control.phase_cap / (integ.nonlinear * peak ** (2.0 * params.sigma)))
    dt = min(state.dt, cap)
    rejected = False
    while True:
        h = min(dt, limit)
        if h < control.dt_min:
            raise FloatingPointError(f"step size fell below {control.dt_min} at t={state.t}")
        new, new_values, err = integ.step(coeffs, values, h)
        if not np.all(np.isfinite(new_values)):
            dt *= 0.5
            rejected = True
            continue
        m1, e1, scale1 = _invariants(plan, new, new_values, params, integ.nonlinear)
        mass_drift = abs(m1 - m0) / m0 if m0 > 0 else 0.0
        energy_drift = abs(e1 - e0) / max(scale0, scale1) if max(scale0, scale1) > 0 else 0.0
        if err <= control.error_tol and mass_drift <= control.drift_tol and energy_drift <= control.drift_tol:
            break
        dt *= 0.5
        rejected = True
    clean = state.step_count + 1
    next_dt = dt
    streak = 0 if rejected else state.streak + 1
    if streak >= control.grow_after:
        next_dt = dt * 2.0
        streak = 0
    m_ref, e_ref, scale_ref = reference
    out = EvolutionState(
        t=state.t + h,
        u=Field(plan.grid, new_values),
        dt=next_dt,
        step_count=clean,
        drift={
            "mass_rel": abs(m1 - m_ref) / m_ref if m_ref > 0 else 0.0,
            "energy_rel": abs(e1 - e_ref) / abs(e_ref) if e_ref != 0 else abs(e1 - e_ref) / max(scale_ref, 1e-300),
        },
        streak=streak,
        tail=_spectral_tail(plan, new),
        coeffs=new,
    )
    return out, h


# Blowup detection -------------------------------------------------------------------


def _series(records) -> tuple[np.ndarray, np.ndarray]:
    if len(records) and isinstance(records[0], DiagnosticsRecord):
        t = np.array([r.t for r in records], dtype=float)
        y = np.array([r.lap_l2 for r in records], dtype=float)
    else:
        arr = np.asarray(records, dtype=float)
        t, y = arr[:, 0], arr[:, 1]
    return t, y


def fit_power_law(t: np.ndarray, y: np.ndarray) -> tuple[float, float, float, float]:
    """Fit log y = log C − p log(T − t) by linear least squares inside a search over T.

    Returns:
        (T, p, log C, rms residual).
    """
    from scipy.optimize import minimize_scalar

    t = np.asarray(t, dtype=float)
    logy = np.log(np.asarray(y, dtype=float))
    last = float(t[-1])
    span = float(t[-1] - t[0])

    def solve(x):
        gap = math.exp(x)
        design = np.column_stack((np.ones_like(t), -np.log(last + gap - t)))
        coef, *_ = np.linalg.lstsq(design, logy, rcond=None)
        resid = logy - design @ coef
        return float(np.sqrt(np.mean(resid**2))), coef

    lo, hi = math.log(span * 1e-6), math.log(span * 1e3)
    xs = np.linspace(lo, hi, 241)
    vals = [solve(x)[0] for x in xs]
    i = int(np.argmin(vals))
    a, b = xs[max(i - 1, 0)], xs[min(i + 1, len(xs) - 1)]
    res = minimize_scalar(lambda x: solve(x)[0], bounds=(a, b), method="bounded", options={"xatol": 1e-10})
    rms, coef = solve(res.x)
    return last + math.exp(res.x), float(coef[1]), float(coef[0]), rms


def detect_blowup(records, control: StepControl | None = None, horizon_reached: bool = True) -> BlowupVerdict:
    """Classify a ‖Δu‖ history.

    Blowup is declared when ‖Δu‖ reaches control.amplification times its
    first value, the trailing window grows monotonically, and the fitted T
    of ‖Δu‖ ~ C(T−t)^{−p} moves by less than control.stability (relative)
    when the window is shifted back by one and two records.

    Args:
        records: DiagnosticsRecords, or an array of (t, ‖Δu‖) rows.
        control: Detector settings.
        horizon_reached: Label for the non-blowup outcome; False gives
            resolution_exhausted.

    Raises:
        InsufficientDataError: fewer than 8 records.
    """
    control = control or StepControl()
    t, y = _series(records)
    if len(t) < 8:
        raise InsufficientDataError(f"need at least 8 records, got {len(t)}")
    other = Outcome.BOUNDED_ON_HORIZON if horizon_reached else Outcome.RESOLUTION_EXHAUSTED
    base = y[0]
    if not base > 0:
        return BlowupVerdict(other, amplification=1.0, reason="zero initial norm")
    amp = float(np.max(y) / base)
    if amp < control.amplification:
        return BlowupVerdict(other, amplification=amp, reason="amplification below threshold")
    window = max(8, min(control.window, len(t) - 2))
    shifts = [k for k in (0, 1, 2) if len(t) - k >= window]
    tail = y[-(window + max(shifts)):]
    if np.any(np.diff(tail) <= 0):
        return BlowupVerdict(other, amplification=amp, reason="trailing window not monotone")
    fits = []
    for k in shifts:
        stop = len(t) - k
        fits.append(fit_power_law(t[stop - window:stop], y[stop - window:stop]))
    T0, p0, _, rms = fits[0]
    spread = max(abs(f[0] - T0) for f in fits) / abs(T0)
    if not (p0 > 0 and spread <= control.stability and rms < 0.05):
        return BlowupVerdict(other, amplification=amp, reason=f"unstable fit (spread {spread:.3g}, p {p0:.3g})")
    return BlowupVerdict(Outcome.BLOWUP_DETECTED, T_estimate=T0, growth_exponent=p0, amplification=amp, reason="stable power-law fit")


# Driver ----------------------------------------------------------------------------


@dataclass
class Run:
    """Result of evolve; unpacks as (records, verdict)."""

    records: list
    verdict: BlowupVerdict
    state: EvolutionState
    control: StepControl
    max_drift: dict = field(default_factory=dict)

    def __iter__(self):
        return iter((self.records, self.verdict))


def evolve(
    u0: Field,
    params: Params,
    horizon: float,
    record_every: float,
    pair: CutoffPair | None = None,
    dt0: float = 1e-3,
    control: StepControl | None = None,
    detect: bool = True,
    on_record=None,
    stop_on_detection: bool = True,
) -> Run:
    """Integrate from t = 0 to `horizon`, recording diagnostics.

    Records are taken every `record_every` in time and, near a singularity,
    whenever ‖Δu‖ grew by control.growth_record since the last record. The run
    stops early on blowup detection or when the spectrum reaches the grid's
    bandwidth (control.tail_limit) or dt falls below control.dt_min.

    Args:
        u0: Initial datum.
        params: Equation parameters.
        horizon: Final time.
        record_every: Regular recording interval.
        pair: Cutoff for M_R, V_R, N_R; omitted quantities are NaN.
        dt0: Initial step.
        control: Step and detector settings.
        detect: Run the blowup detector.
        on_record: Callback receiving each record in time order.
        stop_on_detection: End the run at the first positive detection;
            False keeps integrating until the horizon or resolution limit,
            which gives denser records for rate fits.
    """
    control = control or StepControl()
    if not horizon > 0 or not record_every > 0:
        raise ValueError("horizon and record_every must be positive")
    plan = plan_for(u0.grid)
    integ = Integrator(params, plan, control.nonlinear)
    state = EvolutionState(t=0.0, u=u0.copy(), dt=float(dt0))
    coeffs = plan.to_coeffs(u0.values)
    reference = _invariants(plan, coeffs, u0.values, params, control.nonlinear)
    effective = params if control.nonlinear == 1.0 else None
    records: list[DiagnosticsRecord] = []
    max_drift = {"mass_rel": 0.0, "energy_rel": 0.0}

    def take(st: EvolutionState, used: float):
        rec = record(st.u, params, st.t, used, pair)
        if effective is None:
            rec = replace(rec, energy=_invariants(plan, plan.to_coeffs(st.u.values), st.u.values, params, control.nonlinear)[1])
        records.append(rec)
        if on_record is not None:
            on_record(rec)
        return rec

    last = take(state, 0.0)
    initial_lap = last.lap_l2
    next_record = record_every
    exhausted = ""
    verdict = None
    while state.t < horizon * (1 - 1e-14):
        target = min(next_record, horizon)
        try:
            state, used = _advance(integ, state, plan, control, target - state.t, reference)
        except FloatingPointError as exc:
            exhausted = str(exc)
            break
        for key in max_drift:
            max_drift[key] = max(max_drift[key], state.drift[key])
        on_schedule = abs(state.t - target) <= 1e-12 * max(1.0, target)
        if on_schedule:
            state.t = target
            next_record = target + record_every
        lap = math.sqrt(float(np.dot(plan.rho4, np.abs(state.coeffs) ** 2)))
        if on_schedule or (last.lap_l2 > 0 and lap > control.growth_record * last.lap_l2):
            last = take(state, used)
            if detect and stop_on_detection and initial_lap > 0 and last.lap_l2 > control.amplification * initial_lap and len(records) >= 8:
                trial = detect_blowup(records, control)
                if trial.outcome is Outcome.BLOWUP_DETECTED:
                    verdict = trial
                    break
        if state.tail > control.tail_limit:
            exhausted = f"spectral tail {state.tail:.3g} exceeds {control.tail_limit:g} at t={state.t:.6g}"
            break
    if records[-1].t != state.t:
        last = take(state, state.dt)
    if verdict is None:
        amp = max(r.lap_l2 for r in records) / initial_lap if initial_lap > 0 else 1.0
        if detect and len(records) >= 8:
            verdict = detect_blowup(records, control, horizon_reached=not exhausted)
            if exhausted and verdict.outcome is not Outcome.BLOWUP_DETECTED:
                verdict = replace(verdict, reason=exhausted)
        elif exhausted:
            verdict = BlowupVerdict(Outcome.RESOLUTION_EXHAUSTED, amplification=amp, reason=exhausted)
        else:
            verdict = BlowupVerdict(Outcome.BOUNDED_ON_HORIZON, amplification=amp, reason="horizon reached")
    run = Run(records=records, verdict=verdict, state=state, control=control, max_drift=max_drift)
    return run
