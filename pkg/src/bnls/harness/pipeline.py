"""Single-run pipeline: initial data, criterion, evolution, rate fit and summary."""

from __future__ import annotations

import dataclasses
import math
import platform
import shutil
import tempfile
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy

from ..core import Criticality, Field, make_grid, make_params
from ..cutoffs import CutoffKind, make_cutoff, verify_cutoff
from ..evolution import CONTOUR_POINTS, Outcome, evolve
from ..experiments import (
    criterion_energycritical,
    criterion_masscritical,
    criterion_supercritical,
    fit_rate,
    rate_alpha,
)
from ..groundstate import MAX_ITER, NORMALIZATION_TOL, SOLVER_TOL, SYMMETRIZE_UNTIL, solve_Q
from .config import InitialKind, RunConfig, config_to_dict
from .io import write_json, write_records

VERSION = "0.1.0"


@dataclass
class RunSummary:
    """Deterministic account of one run; wall time is kept apart in `wall_time`."""

    config: dict
    criterion: dict | None
    evolution: dict | None
    rate_fit: dict | None
    drift: dict
    cutoff: dict
    tunables: dict
    versions: dict
    error: str | None = None
    records: list = field(default_factory=list, repr=False)
    wall_time: float = 0.0

    def to_dict(self) -> dict:
        return {
            "config": self.config,
            "criterion": self.criterion,
            "evolution": self.evolution,
            "rate_fit": self.rate_fit,
            "drift": self.drift,
            "cutoff": self.cutoff,
            "tunables": self.tunables,
            "versions": self.versions,
            "error": self.error,
        }


def versions() -> dict:
    return {
        "bnls": VERSION,
        "numpy": np.__version__,
        "scipy": scipy.__version__,
        "python": platform.python_version(),
    }


def tunables(config: RunConfig) -> dict:
    """Every numerical setting the run depends on, defaults included."""
    return {
        "step_control": dataclasses.asdict(config.control),
        "integrator": {"scheme": "ETDRK4", "embedded": "exponential midpoint", "contour_points": CONTOUR_POINTS},
        "ground_state": {
            "tol": SOLVER_TOL,
            "normalization_tol": NORMALIZATION_TOL,
            "max_iter": MAX_ITER,
            "symmetrize_until": SYMMETRIZE_UNTIL,
            "init": "exp(-r^2)",
        },
        "transform": {"kind": "discrete Hankel at Bessel zeros", "order": "d/2-1"},
        "rate_fit": {"decades": 1.0, "min_records": 30},
    }


def _read_profile(path: str, grid) -> np.ndarray:
    """Profile from CSV (r, value) or (r, real, imag), interpolated onto the grid."""
    from scipy.interpolate import CubicSpline

    data = np.genfromtxt(path, delimiter=",", names=True)
    names = data.dtype.names
    r = np.asarray(data[names[0]], dtype=float)
    if len(names) >= 3:
        values = data[names[1]] + 1j * data[names[2]]
    else:
        values = np.asarray(data[names[1]], dtype=complex)
    if len(r) == grid.n and np.allclose(r, grid.nodes, rtol=1e-14, atol=0.0):
        return values
    out = CubicSpline(r, values.real)(grid.nodes) + 1j * CubicSpline(r, values.imag)(grid.nodes)
    return np.where(grid.nodes <= r[-1], out, 0.0)


def initial_data(config: RunConfig, params, grid, ground_state=None) -> Field:
    spec = config.initial
    if spec.kind is InitialKind.SCALED_GROUND_STATE:
        q = ground_state or solve_Q(params, grid)
        return q.profile * spec.lam
    if spec.kind is InitialKind.GAUSSIAN:
        r = grid.nodes
        return Field(grid, spec.amplitude * np.exp(-((r / spec.width) ** 2)) * np.exp(1j * spec.chirp * r**2))
    return Field(grid, _read_profile(spec.path, grid))


def _criterion(config: RunConfig, params, u0, ground_state):
    """Evaluate the criterion matching the parameters; returns (dict, ground_state)."""
    kind = params.criticality
    try:
        if kind is Criticality.MASS_CRITICAL:
            if params.mu < 0:
                return {"error": "mass-critical criterion does not cover mu < 0"}, ground_state
            verdict = criterion_masscritical(u0, params)
        elif kind is Criticality.ENERGY_CRITICAL:
            verdict = criterion_energycritical(u0, params, kappa=config.kappa)
        elif 0 < params.s_c < 2 and params.sigma <= 4:
            if params.mu == 0 and ground_state is None:
                ground_state = solve_Q(params, u0.grid)
            verdict = criterion_supercritical(u0, params, ground_state, kappa=config.kappa)
        else:
            return {"error": f"no criterion for {kind.value}"}, ground_state
    except ValueError as exc:
        return {"error": str(exc)}, ground_state
    return {
        "theorem": verdict.theorem.value,
        "branch": verdict.branch,
        "satisfied": verdict.satisfied,
        "quantities": verdict.quantities,
        "kappa_used": verdict.kappa_used,
        "expected": verdict.expected,
    }, ground_state


def run_config(config: RunConfig) -> RunSummary:
    """Run one configuration in memory; failures are captured in `error`."""
    start = time.perf_counter()
    summary = RunSummary(
        config=config_to_dict(config),
        criterion=None,
        evolution=None,
        rate_fit=None,
        drift={},
        cutoff={},
        tunables=tunables(config),
        versions=versions(),
    )
    try:
        params = make_params(config.params.d, config.params.sigma, config.params.mu)
        grid = make_grid(params.d, config.grid.rmax, config.grid.n)
        pair = make_cutoff(config.cutoff.R, config.cutoff.kind)
        summary.cutoff = dict(pair.metadata)
        if pair.kind is CutoffKind.APPENDIX_B:
            report = verify_cutoff(pair, params.d, strict=False)
            summary.cutoff.update(eta0=report.eta0, eta_max=report.eta_max, eta_slack=report.eta_slack)
        ground_state = None
        if config.initial.kind is InitialKind.SCALED_GROUND_STATE:
            ground_state = solve_Q(params, grid)
        u0 = initial_data(config, params, grid, ground_state)
        summary.criterion, ground_state = _criterion(config, params, u0, ground_state)
        run = evolve(
            u0,
            params,
            config.horizon,
            config.record_every,
            pair=pair,
            dt0=config.dt0,
            control=config.control,
            stop_on_detection=not config.fit_rate,
        )
        summary.records = run.records
        v = run.verdict
        summary.evolution = {
            "outcome": v.outcome.value,
            "T_estimate": v.T_estimate,
            "growth_exponent": v.growth_exponent,
            "amplification": v.amplification,
            "reason": v.reason,
            "final_time": run.state.t,
            "steps": run.state.step_count,
            "records": len(run.records),
            "max_lap_l2": max(r.lap_l2 for r in run.records),
        }
        summary.drift = dict(run.max_drift)
        if config.fit_rate and v.outcome is Outcome.BLOWUP_DETECTED:
            try:
                fit = fit_rate(run.records, v.T_estimate, params)
                summary.rate_fit = dataclasses.asdict(fit) | {"alpha_slope": fit.alpha_slope}
            except ValueError as exc:
                summary.rate_fit = {"error": str(exc), "alpha": rate_alpha(params)}
    except Exception as exc:  # isolate per-run failures
        summary.error = f"{type(exc).__name__}: {exc}"
    summary.wall_time = time.perf_counter() - start
    return summary


def write_run(summary: RunSummary, directory: str | Path) -> Path:
    """Write records.csv, summary.json and timing.json atomically into `directory`.

    Files are staged in a sibling temporary directory and moved into place at
    the end, so an abort leaves no partial output.
    """
    directory = Path(directory)
    directory.parent.mkdir(parents=True, exist_ok=True)
    staging = Path(tempfile.mkdtemp(prefix=f".{directory.name}-", dir=directory.parent))
    try:
        write_records(staging / "records.csv", summary.records)
        write_json(staging / "summary.json", summary.to_dict())
        write_json(staging / "timing.json", {"wall_time_seconds": summary.wall_time})
        if directory.exists():
            shutil.rmtree(directory)
        staging.rename(directory)
    except BaseException:
        shutil.rmtree(staging, ignore_errors=True)
        raise
    return directory


VERDICT_COLUMNS = ("config_id", "theorem", "branch", "satisfied", "outcome", "T_estimate", "beta_measured", "alpha")


def verdict_row(config_id: int, summary: RunSummary) -> dict:
    crit = summary.criterion or {}
    evo = summary.evolution or {}
    fit = summary.rate_fit or {}
    params = summary.config["params"]
    alpha = (4.0 - params["sigma"]) / (params["sigma"] * (params["d"] - 1))
    outcome = "error" if summary.error else evo.get("outcome", "")
    return {
        "config_id": config_id,
        "theorem": crit.get("theorem", ""),
        "branch": crit.get("branch", ""),
        "satisfied": crit.get("satisfied", ""),
        "outcome": outcome,
        "T_estimate": evo.get("T_estimate"),
        "beta_measured": fit.get("beta_measured"),
        "alpha": alpha if math.isfinite(alpha) else None,
    }
