"""Batch drivers: the eps-scaling study, phase diagrams, criticality
consistency and run manifests.

Every driver is deterministic given (parameters, seed) and returns plain
data objects the CLI serializes; per-point failures are recorded and do
not abort a sweep.
"""

from __future__ import annotations

import datetime
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .config import params_to_dict
from .continuation import branch_at_offsets, continue_branch, detect_bifurcation, fit_b, switch_branch
from .errors import NumericalError
from .model import ModelParams, anchor_motility, solve_steady_state
from .pde import Discretization, Field, SolverOptions, build_grid, observables
from .wna import wna_report

__all__ = [
    "RunManifest",
    "SweepPlan",
    "EpsilonScalingResult",
    "run_epsilon_scaling",
    "run_phase_diagram",
    "branch_direction_study",
    "mode_amplitude_trajectory",
    "through_origin_fit",
]


@dataclass
class RunManifest:
    """Provenance record written next to every CLI output bundle."""

    subcommand: str
    config: dict
    seed: int = 0
    tool_version: str = __version__
    created: str = ""
    outputs: list = field(default_factory=list)

    def __post_init__(self):
        if not self.created:
            self.created = datetime.datetime.now(datetime.timezone.utc).isoformat()

    def register(self, path: str | Path) -> Path:
        path = Path(path)
        if str(path) not in self.outputs:
            self.outputs.append(str(path))
        return path

    def write(self, path: str | Path) -> None:
        path = Path(path)
        self.register(path)
        payload = {
            "subcommand": self.subcommand,
            "tool_version": self.tool_version,
            "created": self.created,
            "seed": self.seed,
            "config": self.config,
            "outputs": sorted(self.outputs),
        }
        with open(path, "w") as fh:
            json.dump(payload, fh, indent=2)
            fh.write("\n")


@dataclass(frozen=True)
class SweepPlan:
    """Axis of a one-parameter sweep with a shared per-point job spec."""

    axis: str                    # 'epsilon' | 'rho_star' | 'D_prime_star'
    values: tuple
    job: dict = field(default_factory=dict)
    parallelism: int = 1

    def __post_init__(self):
        if len(self.values) == 0:
            raise ValueError("sweep needs at least one value")
        if list(self.values) != sorted(self.values):
            raise ValueError("sweep values must be sorted ascending")


def through_origin_fit(x: np.ndarray, y: np.ndarray) -> tuple[float, float]:
    """Slope and (uncentered) R^2 of the no-intercept model y = s x."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    slope = float(np.dot(x, y) / np.dot(x, x))
    ss_res = float(np.sum((y - slope * x) ** 2))
    ss_tot = float(np.sum(y**2))
    return slope, 1.0 - ss_res / ss_tot


@dataclass
class EpsilonScalingResult:
    eps_values: list
    D_hat: list
    b_hat: list
    err_D: list
    err_b: list
    exponent: list
    D_prime_critical: float
    b_theory: float
    slope_D: float
    r2_D: float
    slope_b: float
    r2_b: float
    failures: dict


def _one_epsilon_point(
    base: ModelParams,
    eps: float,
    nx: int,
    offsets_rel: np.ndarray,
    window: tuple[float, float],
    dcrit_theory: float,
    b_theory: float,
):
    params = base.with_epsilon(eps)
    steady = solve_steady_state(params)[0]
    grid = build_grid(params, steady.u_star, nx=nx, cells_per_width=12.0)
    disc = Discretization(params, grid)
    bracket = (dcrit_theory * 1.35, dcrit_theory * 0.75)
    D_hat = detect_bifurcation(disc, bracket)
    uniform = disc.uniform_steady(steady)
    offsets = offsets_rel * abs(D_hat)
    side = -1.0  # supercritical branch lives past the onset slope
    branch = branch_at_offsets(
        disc,
        uniform,
        D_hat,
        offsets,
        side=side,
        amp_predictor=lambda off: 0.5 * b_theory * math.sqrt(off),
    )
    fit = fit_b(branch, D_hat, params.rho_star, window=window)
    return D_hat, fit


def run_epsilon_scaling(
    params: ModelParams,
    eps_values=(0.02, 0.01, 0.005, 0.0025),
    nx: int = 64,
    offsets_rel: np.ndarray | None = None,
    window: tuple[float, float] = (1e-4, 1e-2),
    threads: int = 1,
) -> EpsilonScalingResult:
    """Error-vs-eps study of the detected bifurcation point and branch
    coefficient against the leading-order theory.

    Theory values are eps-independent and computed once; for each eps the
    bifurcation is detected on an eps-adapted grid, the supercritical
    branch traced over a log-spaced offset window, and the square-root
    coefficient fitted.  Relative errors are fitted with a through-origin
    line in eps.
    """
    if len(eps_values) < 3:
        raise ValueError("need at least 3 epsilon values for a scaling fit")
    if offsets_rel is None:
        offsets_rel = np.logspace(math.log10(window[0]), math.log10(window[1]), 10)
    rep = wna_report(params)
    if rep.mu <= 0.0:
        raise NumericalError(
            "epsilon scaling requires a supercritical parameter set "
            f"(mu = {rep.mu:.3e})"
        )
    dcrit, b_th = rep.D_prime_critical, rep.b

    results: dict[float, tuple] = {}
    failures: dict[float, str] = {}

    def job(eps):
        try:
            results[eps] = _one_epsilon_point(
                params, eps, nx, offsets_rel, window, dcrit, b_th
            )
        except Exception as exc:  # per-point failures recorded, sweep continues
            failures[eps] = f"{type(exc).__name__}: {exc}"

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            list(pool.map(job, eps_values))
    else:
        for eps in eps_values:
            job(eps)

    ok = [e for e in eps_values if e in results]
    D_hat = [results[e][0] for e in ok]
    fits = [results[e][1] for e in ok]
    err_D = [abs(d - dcrit) / abs(dcrit) for d in D_hat]
    err_b = [abs(f.b_hat - b_th) / b_th for f in fits]
    if len(ok) >= 3:
        slope_D, r2_D = through_origin_fit(np.array(ok), np.array(err_D))
        slope_b, r2_b = through_origin_fit(np.array(ok), np.array(err_b))
    else:
        slope_D = r2_D = slope_b = r2_b = float("nan")
    return EpsilonScalingResult(
        eps_values=list(ok),
        D_hat=D_hat,
        b_hat=[f.b_hat for f in fits],
        err_D=err_D,
        err_b=err_b,
        exponent=[f.exponent_free for f in fits],
        D_prime_critical=dcrit,
        b_theory=b_th,
        slope_D=slope_D,
        r2_D=r2_D,
        slope_b=slope_b,
        r2_b=r2_b,
        failures=failures,
    )


def relax_to_steady(
    disc: Discretization,
    start: Field,
    dt: float = 2.0,
    max_steps: int = 400,
    settle_tol: float = 1e-7,
) -> Field:
    """Implicit time stepping until the order parameter settles."""
    opts = SolverOptions(dt=dt)
    fld = start
    prev = observables(fld)["delta_rho"]
    quiet = 0
    for _ in range(max_steps):
        fld = disc.step(fld, opts)
        cur = observables(fld)["delta_rho"]
        if abs(cur - prev) < settle_tol * max(1.0, cur):
            quiet += 1
            if quiet >= 5:
                break
        else:
            quiet = 0
        prev = cur
    return fld


def run_phase_diagram(
    params: ModelParams,
    rho_values,
    dprime_values,
    nx: int = 32,
    perturb_amp: float = 1e-3,
    large_amp: float = 0.3,
    seed_large: bool = False,
    dt: float = 2.0,
    max_steps: int = 400,
    threads: int = 1,
):
    """Final order parameter on a (rho*, D'*) grid by relaxation from a
    perturbed uniform state, plus the onset curve from linear theory.

    Each grid point re-anchors the motility family at its own base state,
    seeds a cosine perturbation of relative amplitude ``perturb_amp``
    (or ``large_amp`` when probing for bistability) and relaxes.  Returns
    a dict with the delta_rho/rho* grid, the critical-slope curve and any
    per-point failures.
    """
    rho_values = np.asarray(rho_values, dtype=float)
    dprime_values = np.asarray(dprime_values, dtype=float)
    grid_out = np.full((len(rho_values), len(dprime_values)), np.nan)
    failures = {}
    critical_curve = np.full(len(rho_values), np.nan)

    def one_point(i, j):
        rho, dp = float(rho_values[i]), float(dprime_values[j])
        try:
            p, steady = anchor_motility(params.with_rho_star(rho))
            p = p.with_motility_slope(dp)
            g = build_grid(p, steady.u_star, nx=nx, cells_per_width=10.0)
            disc = Discretization(p, g)
            uni = disc.uniform_steady(steady)
            fld = uni.copy()
            amp = large_amp if seed_large else perturb_amp
            fld.n *= 1.0 + amp * np.cos(math.pi * g.x_centers / p.L)[:, None]
            fld.n *= p.rho_star * p.L / fld.mass()
            final = relax_to_steady(disc, fld, dt=dt, max_steps=max_steps)
            grid_out[i, j] = observables(final)["delta_rho"] / rho
        except Exception as exc:
            failures[(rho, dp)] = f"{type(exc).__name__}: {exc}"

    jobs = [(i, j) for i in range(len(rho_values)) for j in range(len(dprime_values))]
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            list(pool.map(lambda ij: one_point(*ij), jobs))
    else:
        for ij in jobs:
            one_point(*ij)

    for i, rho in enumerate(rho_values):
        try:
            p, steady = anchor_motility(params.with_rho_star(float(rho)))
            rep = wna_report(p)
            critical_curve[i] = rep.D_prime_critical
        except Exception as exc:
            failures[(float(rho), "critical")] = f"{type(exc).__name__}: {exc}"

    return {
        "rho_values": rho_values,
        "dprime_values": dprime_values,
        "delta_rho_rel": grid_out,
        "critical_curve": critical_curve,
        "failures": failures,
    }


def branch_direction_study(
    params: ModelParams,
    rho_values,
    nx: int = 32,
    n_steps: int = 10,
    ds: float = 4e-3,
) -> list[dict]:
    """Observed local branch direction vs the predicted criticality.

    For each mean density: re-anchor, compute mu from the weakly nonlinear
    pipeline, detect the discrete bifurcation, switch onto the nontrivial
    branch and take a few arclength steps; the branch direction is the
    sign of D'* - D_hat at the point of largest amplitude.  Supercritical
    branches emerge on the unstable side (D'* < D_hat), subcritical ones
    on the stable side.
    """
    out = []
    for rho in rho_values:
        p, steady = anchor_motility(params.with_rho_star(float(rho)))
        rep = wna_report(p)
        grid = build_grid(p, steady.u_star, nx=nx, cells_per_width=12.0)
        disc = Discretization(p, grid)
        bracket = (rep.D_prime_critical * 1.35, rep.D_prime_critical * 0.75)
        D_hat = detect_bifurcation(disc, bracket)
        uniform = disc.uniform_steady(steady)
        start, p_start = switch_branch(disc, uniform, D_hat, amplitude=0.02)
        branch = continue_branch(
            disc,
            start,
            p_start,
            p_range=(D_hat - 0.2 * abs(D_hat), D_hat + 0.2 * abs(D_hat)),
            ds=ds,
            max_points=n_steps,
        )
        amps = np.array([pt.delta_rho for pt in branch.points])
        ps = branch.parameter_values()
        idx = int(np.argmax(amps))
        direction = math.copysign(1.0, ps[idx] - D_hat)
        predicted = -1.0 if rep.mu > 0 else +1.0
        out.append(
            {
                "rho_star": float(rho),
                "mu": rep.mu,
                "criticality": rep.criticality,
                "D_hat": D_hat,
                "direction_observed": direction,
                "direction_predicted": predicted,
                "agree": direction == predicted,
            }
        )
    return out


def mode_amplitude_trajectory(
    disc: Discretization,
    start: Field,
    dt: float,
    n_steps: int,
    mode: int = 1,
) -> tuple[np.ndarray, np.ndarray]:
    """Time series of the cos(k x) amplitude of the signal field."""
    g = disc.grid
    k = mode * math.pi / g.L
    cosx = np.cos(k * g.x_centers)
    opts = SolverOptions(dt=dt)
    times, amps = [start.time], [2.0 / g.nx * float(np.dot(start.c - start.c.mean(), cosx))]
    fld = start
    for _ in range(n_steps):
        fld = disc.step(fld, opts)
        times.append(fld.time)
        amps.append(2.0 / g.nx * float(np.dot(fld.c - fld.c.mean(), cosx)))
    return np.array(times), np.array(amps)
