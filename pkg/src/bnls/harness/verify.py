"""Certification suite run by `bnls verify`."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from ..core import Field, make_grid, make_params
from ..cutoffs import CutoffKind, make_cutoff, verify_cutoff
from ..diagnostics import (
    free_bivariance_prediction,
    riesz_bivariance,
    riesz_bivariance_potential,
)
from ..evolution import StepControl, evolve
from ..groundstate import fourier_rearrange, solve_Q
from ..spectral import apply_symbol, newton_potential_oracle, plan_for, sobolev_norm, weighted_relative_error


@dataclass(frozen=True)
class CheckResult:
    name: str
    value: float
    limit: float
    passed: bool

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return f"{status}  {self.name:<48s} value={self.value:.3e}  limit={self.limit:.1e}"


def _random_bump(grid, rng, support: float) -> Field:
    """Smooth random radial field vanishing beyond `support`."""
    r = grid.nodes
    x = np.clip(r / support, 0.0, 1.0)
    envelope = np.where(x < 1.0, np.exp(-1.0 / np.maximum(1.0 - x**2, 1e-300)) * math.e, 0.0)
    coef = rng.normal(size=4) + 1j * rng.normal(size=4)
    poly = sum(c * np.cos((k + 1) * np.pi * x) for k, c in enumerate(coef)) + 2.0
    return Field(grid, envelope * poly)


def check_transform() -> list[CheckResult]:
    rng = np.random.default_rng(1)
    out = []
    grid = make_grid(3, 30.0, 256)
    plan = plan_for(grid)
    worst = 0.0
    for _ in range(10):
        coeffs = np.zeros(grid.n, dtype=complex)
        coeffs[:64] = rng.normal(size=64) + 1j * rng.normal(size=64)
        u = plan.from_coeffs(coeffs)
        back = plan.from_coeffs(plan.to_coeffs(u))
        worst = max(worst, float(np.linalg.norm(back - u) / np.linalg.norm(u)))
    out.append(CheckResult("transform round trip", worst, 1e-10, worst <= 1e-10))
    for d in (3, 5, 7):
        grid = make_grid(d, 20.0, 256)
        worst = 0.0
        for _ in range(5):
            f = _random_bump(grid, rng, 5.0)
            err = weighted_relative_error(apply_symbol(f, "invlap"), newton_potential_oracle(f))
            worst = max(worst, err)
        out.append(CheckResult(f"inverse Laplacian vs Newton oracle d={d}", worst, 1e-6, worst <= 1e-6))
    return out


def check_cutoffs() -> list[CheckResult]:
    out = []
    for kind in CutoffKind:
        worst_margin, worst_identity = math.inf, 0.0
        for R in (1.0, 4.0, 16.0):
            pair = make_cutoff(R, kind)
            for d in (2, 3, 4):
                rep = verify_cutoff(pair, d, samples=4000, strict=False)
                worst_margin = min(worst_margin, rep.min_convexity, rep.min_radial, rep.min_laplacian)
                worst_identity = max(worst_identity, rep.psi_identity)
                if kind is CutoffKind.APPENDIX_B and R == 1.0:
                    ok = rep.eta0 is not None and rep.eta0 > 0 and rep.eta_slack > 0
                    out.append(CheckResult(f"eta0 slack appendixB d={d}", rep.eta_slack or 0.0, 0.0, ok))
        out.append(CheckResult(f"cutoff sign margins {kind.value}", -worst_margin, 0.0, worst_margin >= 0))
        out.append(CheckResult(f"phi' = psi'' psi' {kind.value}", worst_identity, 1e-10, worst_identity <= 1e-10))
    return out


def check_rearrangement() -> list[CheckResult]:
    rng = np.random.default_rng(2)
    grid = make_grid(3, 30.0, 256)
    norm_err, sobolev_excess, lp_deficit = 0.0, -math.inf, -math.inf
    for _ in range(20):
        u = _random_bump(grid, rng, 8.0)
        v = fourier_rearrange(u)
        norm_err = max(norm_err, abs(v.l2() - u.l2()) / u.l2())
        for s in (0.5, 1.0, 2.0):
            sobolev_excess = max(sobolev_excess, sobolev_norm(v, s) - sobolev_norm(u, s))
        lp_u = float(np.dot(grid.weights, np.abs(u.values) ** 4)) ** 0.25
        lp_v = float(np.dot(grid.weights, np.abs(v.values) ** 4)) ** 0.25
        lp_deficit = max(lp_deficit, lp_u - lp_v)
    return [
        CheckResult("rearrangement keeps L2", norm_err, 1e-10, norm_err <= 1e-10),
        CheckResult("rearrangement lowers Sobolev norms", sobolev_excess, 1e-9, sobolev_excess <= 1e-9),
        CheckResult("rearrangement raises L4", lp_deficit, 1e-9, lp_deficit <= 1e-9),
    ]


def check_pohozaev() -> list[CheckResult]:
    out = []
    for d, sigma in ((2, 2.0), (3, 2.0)):
        params = make_params(d, sigma)
        gs = solve_Q(params, make_grid(d, 50.0, 768))
        worst = max(gs.pohozaev.id1_residual, gs.pohozaev.id2_residual)
        out.append(CheckResult(f"Pohozaev identities d={d} sigma={sigma:g}", worst, 1e-8, worst <= 1e-8))
        k_err = abs(gs.k_gn / gs.k_gn_formula - 1.0)
        out.append(CheckResult(f"K constant two routes d={d} sigma={sigma:g}", k_err, 1e-6, k_err <= 1e-6))
    return out


def check_bivariance() -> list[CheckResult]:
    # R and rmax are large enough that the packet stays where psi_R = r^2/2
    grid = make_grid(3, 120.0, 768)
    params = make_params(3, 1.0)
    pair = make_cutoff(10.0)
    u0 = grid.sample(lambda r: np.exp(-((r / 1.5) ** 2)) * np.exp(0.2j * r**2))
    spectral, potential = riesz_bivariance(u0, pair), riesz_bivariance_potential(u0, pair)
    route = abs(spectral - potential) / potential
    control = StepControl(nonlinear=0.0)
    run = evolve(u0, params, 0.1, 0.01, pair=pair, control=control, detect=False)
    worst = 0.0
    for rec in run.records:
        pred = free_bivariance_prediction(u0, pair, rec.t)
        worst = max(worst, abs(rec.v_r - pred) / pred)
    return [
        CheckResult("V_R spectral vs potential route", route, 1e-5, route <= 1e-5),
        CheckResult("free-flow bivariance law", worst, 1e-3, worst <= 1e-3),
    ]


SUITE: list[tuple[str, Callable[[], list[CheckResult]]]] = [
    ("transform", check_transform),
    ("cutoffs", check_cutoffs),
    ("rearrangement", check_rearrangement),
    ("ground states", check_pohozaev),
    ("bivariance", check_bivariance),
]


def run_suite(echo=print) -> bool:
    """Run every check, echoing one line each; returns True when all pass."""
    ok = True
    for title, check in SUITE:
        echo(f"[{title}]")
        for result in check():
            echo("  " + result.line())
            ok = ok and result.passed
    return ok
