"""Command-line interface.

Subcommands: steady-state, dispersion, critical, series, wna, simulate,
steady, continue, epsilon-sweep, phase-diagram, stokes, report.  Global
flags: --params <file>, --out <dir>, --threads <n>, --seed <n>.  Outputs
are CSV/JSON (plus SVG for plots) under the output directory together
with a run manifest.  Exit codes: 0 success, 2 configuration error,
3 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from pathlib import Path

import numpy as np

from .config import load_params, params_to_dict, save_params
from .continuation import (
    continue_branch,
    detect_bifurcation,
    fit_b,
    switch_branch,
)
from .dispersion import critical_Dprime, growth_spectrum
from .errors import ConfigError, NumericalError, QsPatternError
from .model import default_params, solve_steady_state
from .pde import Discretization, Field, SolverOptions, build_grid, observables
from .series import eval_series, oracle_series, q_table, s_table, w_table
from .stokes import (
    StokesContext,
    estimate_singulant,
    generate_late_terms,
    optimal_truncation,
    stokes_smoothing_profile,
)
from .sweeps import RunManifest, mode_amplitude_trajectory, run_epsilon_scaling, run_phase_diagram
from .wna import build_context, wna_report
from . import plots


def _open_params(args):
    if args.params:
        return load_params(args.params)
    return default_params()


def _outdir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _manifest(args, name: str, params) -> RunManifest:
    return RunManifest(subcommand=name, config=params_to_dict(params), seed=args.seed)


def _dump_json(path: Path, payload: dict) -> None:
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2, default=_jsonable)
        fh.write("\n")


def _jsonable(obj):
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    raise TypeError(f"not JSON-serializable: {type(obj)}")


# -- subcommand implementations ----------------------------------------------


def cmd_steady_state(args) -> int:
    params = _open_params(args)
    out = _outdir(args)
    states = solve_steady_state(params)
    payload = [
        {"branch_index": s.branch_index, "c_star": s.c_star, "u_star": s.u_star, "N": s.N}
        for s in states
    ]
    man = _manifest(args, "steady-state", params)
    path = man.register(out / "steady_state.json")
    _dump_json(path, {"states": payload})
    man.write(out / "manifest-steady-state.json")
    print(json.dumps(payload, indent=2))
    return 0


def cmd_dispersion(args) -> int:
    params = _open_params(args)
    out = _outdir(args)
    steady = solve_steady_state(params)[args.branch_index]
    spectrum = growth_spectrum(params, steady, range(0, args.modes + 1))
    rows = []
    for k, roots in spectrum.entries:
        roots = list(roots) + [complex(float("nan"), float("nan"))] * (3 - len(roots))
        rows.append([k] + [z.real for z in roots[:3]] + [z.imag for z in roots[:3]])
    man = _manifest(args, "dispersion", params)
    path = man.register(out / "dispersion.csv")
    plots.write_csv(
        path,
        ["k", "re_sigma1", "re_sigma2", "re_sigma3", "im_sigma1", "im_sigma2", "im_sigma3"],
        rows,
    )
    man.write(out / "manifest-dispersion.json")
    print(f"wrote {path} (max growth {spectrum.max_real_part:.6g} at k={spectrum.critical_k:.6g})")
    return 0


def cmd_critical(args) -> int:
    params = _open_params(args)
    out = _outdir(args)
    steady = solve_steady_state(params)[args.branch_index]
    k = params.wavenumber(args.mode)
    dcrit = critical_Dprime(params, steady, k)
    man = _manifest(args, "critical", params)
    path = man.register(out / "critical.json")
    _dump_json(path, {"k": k, "D_prime_critical": dcrit})
    man.write(out / "manifest-critical.json")
    print(json.dumps({"k": k, "D_prime_critical": dcrit}))
    return 0


def cmd_series(args) -> int:
    params = _open_params(args)
    out = _outdir(args)
    steady = solve_steady_state(params)[args.branch_index]
    ctx = build_context(params, steady)
    q = q_table(ctx.series, args.jmax, args.lmax)
    if args.kind == "q":
        table = q
    elif args.kind in ("w", "wtilde"):
        table = w_table(ctx.series, args.jmax, args.lmax, k_multiplier=2 if args.kind == "wtilde" else 1)
    elif args.kind == "s":
        from .wna import compute_c22

        wt = w_table(ctx.series, args.jmax, args.lmax, k_multiplier=2)
        c22 = compute_c22(ctx, q, wt)
        table = s_table(ctx.series, q, c22, args.jmax, args.lmax)
    else:
        raise ConfigError(f"unknown series kind {args.kind!r}")
    payload = {
        "kind": table.kind,
        "j_max": table.j_max,
        "l_max": table.l_max,
        "rows": [
            {"j": j, "coefficients": [table.get(j, l) for l in range(table.valid_l(j) + 1)]}
            for j in range(table.j_max + 1)
        ],
    }
    man = _manifest(args, "series", params)
    path = man.register(out / f"series_{args.kind}.json")
    _dump_json(path, payload)
    man.write(out / "manifest-series.json")
    print(f"wrote {path}")
    return 0


def cmd_wna(args) -> int:
    params = _open_params(args)
    out = _outdir(args)
    rep = wna_report(params, branch_index=args.branch_index)
    man = _manifest(args, "wna", params)
    path = man.register(out / "wna_report.json")
    _dump_json(path, rep.to_dict())
    man.write(out / "manifest-wna.json")
    print(json.dumps(rep.to_dict(), indent=2, default=_jsonable))
    return 0


def _parse_grid(spec: str) -> tuple[int, int | None]:
    parts = spec.split(",")
    nx = int(parts[0])
    nu = int(parts[1]) if len(parts) > 1 and parts[1] else None
    return nx, nu


def cmd_simulate(args) -> int:
    params = _open_params(args)
    out = _outdir(args)
    steady = solve_steady_state(params)[args.branch_index]
    nx, nu = _parse_grid(args.grid)
    grid = build_grid(params, steady.u_star, nx=nx, nu=nu)
    disc = Discretization(params, grid, SolverOptions(dt=args.dt, scheme=args.scheme))
    fld = disc.uniform_steady(steady)
    amp, kmode = args.perturb
    rng = np.random.default_rng(args.seed)
    phase = 0.0 if not args.random_phase else float(rng.uniform(0, 2 * math.pi))
    fld.n *= 1.0 + amp * np.cos(int(kmode) * math.pi * grid.x_centers / params.L + phase)[:, None]
    fld.n *= params.rho_star * params.L / fld.mass()

    n_steps = int(round(args.tmax / args.dt))
    man = _manifest(args, "simulate", params)
    series = []
    opts = SolverOptions(dt=args.dt, scheme=args.scheme)
    snap_every = max(1, n_steps // max(args.snapshots - 1, 1)) if args.snapshots > 0 else n_steps + 1
    snap_paths = []
    for step_idx in range(n_steps + 1):
        obs = observables(fld)
        series.append([fld.time, obs["delta_rho"], obs["mass"], float(fld.c.mean())])
        if args.snapshots > 0 and step_idx % snap_every == 0:
            if args.format == "npz":
                sp = out / f"snapshot_{step_idx:06d}.npz"
                np.savez_compressed(sp, n=fld.n, c=fld.c, x=grid.x_centers, u=grid.u_centers, t=fld.time)
            else:
                sp = out / f"snapshot_{step_idx:06d}.csv"
                rows = [
                    [grid.x_centers[i], grid.u_centers[j], fld.n[i, j]]
                    for i in range(grid.nx)
                    for j in range(grid.nu)
                ]
                plots.write_csv(sp, ["x", "u", "n"], rows)
            snap_paths.append(man.register(sp))
        if step_idx < n_steps:
            fld = disc.step(fld, opts)
    ts_path = man.register(out / "observables.csv")
    plots.write_csv(ts_path, ["t", "delta_rho", "mass", "c_mean"], series)
    man.write(out / "manifest-simulate.json")
    print(f"wrote {ts_path} and {len(snap_paths)} snapshots")
    return 0


def cmd_steady(args) -> int:
    params = _open_params(args)
    out = _outdir(args)
    steady = solve_steady_state(params)[args.branch_index]
    nx, nu = _parse_grid(args.grid)
    grid = build_grid(params, steady.u_star, nx=nx, nu=nu)
    disc = Discretization(params, grid)
    fld = disc.uniform_steady(steady)
    amp, kmode = args.perturb
    fld.n *= 1.0 + amp * np.cos(int(kmode) * math.pi * grid.x_centers / params.L)[:, None]
    fld.n *= params.rho_star * params.L / fld.mass()
    sol = disc.newton_steady(fld)
    obs = observables(sol)
    man = _manifest(args, "steady", params)
    csv, svg = plots.profile_plot(out / "steady_profile", obs)
    man.register(csv)
    man.register(svg)
    np.savez_compressed(
        man.register(out / "steady_state.npz"),
        n=sol.n, c=sol.c, x=grid.x_centers, u=grid.u_centers,
    )
    man.write(out / "manifest-steady.json")
    print(f"delta_rho = {obs['delta_rho']:.6g}, mass = {obs['mass']:.12g}")
    return 0


def cmd_continue(args) -> int:
    params = _open_params(args)
    out = _outdir(args)
    steady = solve_steady_state(params)[args.branch_index]
    nx, nu = _parse_grid(args.grid)
    grid = build_grid(params, steady.u_star, nx=nx, nu=nu)
    disc = Discretization(params, grid)
    lo, hi = args.range
    man = _manifest(args, "continue", params)

    D_hat = detect_bifurcation(disc, (lo, hi))
    rows = []
    fit_payload = {"k": params.wavenumber(1), "D_prime_bif_hat": D_hat}
    if args.branch == "uniform":
        uniform = disc.uniform_steady(steady)
        for p in np.linspace(lo, hi, args.n_points):
            disc.set_motility_slope(float(p))
            lead = disc.leading_pattern_eigenvalue(uniform)
            rows.append([abs(p - lo), p, 0.0, int(lead < 0.0)])
    else:
        uniform = disc.uniform_steady(steady)
        start, p_start = switch_branch(disc, uniform, D_hat, amplitude=args.switch_amplitude)
        branch = continue_branch(
            disc, start, p_start, p_range=(lo, hi), ds=args.ds, max_points=args.n_points,
            stability_every=args.stability_every,
        )
        for pt in branch.points:
            rows.append([pt.arclength, pt.D_prime_star, pt.delta_rho,
                         -1 if pt.stable is None else int(pt.stable)])
        try:
            fit = fit_b(branch, D_hat, params.rho_star)
            fit_payload.update(
                b_hat=fit.b_hat,
                fit_window=list(fit.fit_window),
                fit_residual=fit.fit_residual,
                exponent_free=fit.exponent_free,
                n_points=fit.n_points,
            )
        except NumericalError as exc:
            fit_payload.update(fit_error=str(exc))
    csv_path = man.register(out / "branch.csv")
    plots.write_csv(csv_path, ["s", "D_prime_star", "delta_rho", "stable"], rows)
    _dump_json(man.register(out / "pitchfork_fit.json"), fit_payload)
    man.write(out / "manifest-continue.json")
    print(json.dumps(fit_payload, indent=2, default=_jsonable))
    return 0


def cmd_epsilon_sweep(args) -> int:
    params = _open_params(args)
    out = _outdir(args)
    result = run_epsilon_scaling(
        params, eps_values=tuple(args.eps), nx=args.nx, threads=args.threads
    )
    man = _manifest(args, "epsilon-sweep", params)
    csv, svg = plots.error_scaling_plot(out / "epsilon_scaling", result)
    man.register(csv)
    man.register(svg)
    payload = {
        "D_prime_critical": result.D_prime_critical,
        "b_theory": result.b_theory,
        "slope_D": result.slope_D,
        "r2_D": result.r2_D,
        "slope_b": result.slope_b,
        "r2_b": result.r2_b,
        "eps": result.eps_values,
        "err_D": result.err_D,
        "err_b": result.err_b,
        "exponents": result.exponent,
        "failures": {str(k): v for k, v in result.failures.items()},
    }
    _dump_json(man.register(out / "epsilon_scaling.json"), payload)
    man.write(out / "manifest-epsilon-sweep.json")
    print(json.dumps(payload, indent=2, default=_jsonable))
    return 0 if not result.failures else 3


def cmd_phase_diagram(args) -> int:
    params = _open_params(args)
    out = _outdir(args)
    rho_vals = np.linspace(args.rho_range[0], args.rho_range[1], args.rho_points)
    dp_vals = np.linspace(args.dprime_range[0], args.dprime_range[1], args.dprime_points)
    result = run_phase_diagram(
        params, rho_vals, dp_vals, nx=args.nx, seed_large=args.seed_large,
        threads=args.threads, max_steps=args.max_steps,
    )
    man = _manifest(args, "phase-diagram", params)
    csv, svg = plots.phase_diagram_plot(out / "phase_diagram", result)
    man.register(csv)
    man.register(svg)
    man.write(out / "manifest-phase-diagram.json")
    n_fail = len(result["failures"])
    print(f"wrote {csv} ({n_fail} failed points)")
    return 0 if n_fail == 0 else 3


def cmd_stokes(args) -> int:
    params = _open_params(args)
    out = _outdir(args)
    steady = solve_steady_state(params)[args.branch_index]
    dcrit = critical_Dprime(params, steady, params.wavenumber(1))
    ctx = StokesContext(
        motility=params.motility.with_slope(dcrit),
        k=params.wavenumber(1),
        lam=params.lam,
        u_star=steady.u_star,
        n_terms=args.n_terms,
    )
    man = _manifest(args, "stokes", params)
    summary: dict = {"study": args.study, "h0": ctx.h0}
    if args.study == "late-terms":
        study = generate_late_terms(ctx, args.r, args.jmax, seed="singular")
        v_hat, gamma_hat = estimate_singulant(study, ctx)
        rows = [[j, float(t.real), float(t.imag)] for j, t in zip(study.j_values, study.terms)]
        plots.write_csv(man.register(out / "late_terms.csv"), ["j", "re_qj", "im_qj"], rows)
        summary.update(
            v_hat=v_hat, v_expected=-args.r**2 / 2.0,
            gamma_hat=gamma_hat, gamma_expected=ctx.h0 - 1.5,
        )
    elif args.study == "truncation":
        rows = []
        slopes_x, slopes_y = [], []
        study = None
        for eps in args.eps:
            prof = optimal_truncation(ctx, args.r, eps, study=study)
            rows.append([eps, prof.N_formula, prof.N_empirical, prof.minimal_term_log])
            slopes_x.append(1.0 / eps)
            slopes_y.append(prof.minimal_term_log)
        slope = float(np.polyfit(slopes_x, slopes_y, 1)[0]) if len(rows) > 1 else float("nan")
        plots.write_csv(
            man.register(out / "truncation.csv"),
            ["eps", "N_formula", "N_empirical", "log_min_term"], rows,
        )
        summary.update(log_slope=slope, log_slope_expected=-ctx.lam * args.r**2 / 2.0)
    elif args.study == "smoothing":
        profile = stokes_smoothing_profile(ctx, r=args.r, epsilon=args.eps[0])
        csv, svg = plots.stokes_profile_plot(out / "stokes_smoothing", profile)
        man.register(csv)
        man.register(svg)
        summary.update(correlation=profile["correlation"], N=profile["N"],
                       transition_width_theta=profile["transition_width_theta"])
    else:
        raise ConfigError(f"unknown stokes study {args.study!r}")
    _dump_json(man.register(out / f"stokes_{args.study}.json"), summary)
    man.write(out / f"manifest-stokes.json")
    print(json.dumps(summary, indent=2, default=_jsonable))
    return 0


def cmd_report(args) -> int:
    """Aggregate report: steady state, onset, weakly nonlinear summary, plots."""
    params = _open_params(args)
    out = _outdir(args)
    man = _manifest(args, "report", params)
    rep = wna_report(params, branch_index=args.branch_index)
    steady = rep.steady
    spectrum = growth_spectrum(params, steady, range(0, 7))
    rows = []
    for k, roots in spectrum.entries:
        roots = list(roots)
        rows.append([k] + [z.real for z in roots[:3]] + [z.imag for z in roots[:3]])
    plots.write_csv(
        man.register(out / "dispersion.csv"),
        ["k", "re_sigma1", "re_sigma2", "re_sigma3", "im_sigma1", "im_sigma2", "im_sigma3"],
        rows,
    )
    _dump_json(man.register(out / "wna_report.json"), rep.to_dict())
    save_params(params, man.register(out / "params.json"))
    man.write(out / "manifest-report.json")
    print(json.dumps(rep.to_dict(), indent=2, default=_jsonable))
    return 0


# -- argument parsing ---------------------------------------------------------


def _float_pair(text: str) -> tuple[float, float]:
    a, b = text.split(",")
    return float(a), float(b)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="qspattern", description=__doc__)
    ap.add_argument("--params", help="TOML/JSON parameter file (defaults to the built-in set)")
    ap.add_argument("--out", default="qspattern-out", help="output directory")
    ap.add_argument("--threads", type=int, default=1)
    ap.add_argument("--seed", type=int, default=0)
    sub = ap.add_subparsers(dest="command", required=True)

    def add(name, fn, **kw):
        p = sub.add_parser(name, **kw)
        p.set_defaults(fn=fn)
        p.add_argument("--branch-index", type=int, default=0, help="steady-state root index")
        return p

    add("steady-state", cmd_steady_state, help="uniform base states")

    p = add("dispersion", cmd_dispersion, help="growth rates over the no-flux modes")
    p.add_argument("--modes", type=int, default=8)

    p = add("critical", cmd_critical, help="onset slope for one mode")
    p.add_argument("--mode", type=int, default=1)

    p = add("series", cmd_series, help="WKBJ coefficient tables")
    p.add_argument("--kind", choices=["q", "w", "wtilde", "s"], required=True)
    p.add_argument("--jmax", type=int, default=4)
    p.add_argument("--lmax", type=int, default=None)

    add("wna", cmd_wna, help="weakly nonlinear report")

    p = add("simulate", cmd_simulate, help="time-dependent solve")
    p.add_argument("--grid", default="48", help="nx[,nu]")
    p.add_argument("--dt", type=float, default=1.0)
    p.add_argument("--tmax", type=float, default=50.0)
    p.add_argument("--perturb", type=_float_pair, default=(1e-4, 1), help="amp,mode")
    p.add_argument("--scheme", choices=["implicit-euler", "imex-theta"], default="implicit-euler")
    p.add_argument("--snapshots", type=int, default=3)
    p.add_argument("--format", choices=["npz", "csv"], default="npz")
    p.add_argument("--random-phase", action="store_true")

    p = add("steady", cmd_steady, help="Newton steady solve from a perturbed guess")
    p.add_argument("--grid", default="48")
    p.add_argument("--perturb", type=_float_pair, default=(1e-2, 1), help="amp,mode")

    p = add("continue", cmd_continue, help="pseudo-arclength continuation")
    p.add_argument("--range", type=_float_pair, required=True, help="D'* range lo,hi")
    p.add_argument("--branch", choices=["uniform", "auto"], default="auto")
    p.add_argument("--grid", default="48")
    p.add_argument("--ds", type=float, default=1e-2)
    p.add_argument("--n-points", type=int, default=40)
    p.add_argument("--switch-amplitude", type=float, default=0.02)
    p.add_argument("--stability-every", type=int, default=0)

    p = add("epsilon-sweep", cmd_epsilon_sweep, help="error-vs-eps study")
    p.add_argument("--eps", type=float, nargs="+", default=[0.02, 0.01, 0.005, 0.0025])
    p.add_argument("--nx", type=int, default=64)

    p = add("phase-diagram", cmd_phase_diagram, help="order parameter over (rho*, D'*)")
    p.add_argument("--rho-range", type=_float_pair, default=(0.3, 1.0))
    p.add_argument("--rho-points", type=int, default=5)
    p.add_argument("--dprime-range", type=_float_pair, default=(-2.5, -1.0))
    p.add_argument("--dprime-points", type=int, default=5)
    p.add_argument("--nx", type=int, default=32)
    p.add_argument("--max-steps", type=int, default=300)
    p.add_argument("--seed-large", action="store_true", help="probe with finite-amplitude seeds")

    p = add("stokes", cmd_stokes, help="late-term and Stokes diagnostics")
    p.add_argument("--study", choices=["late-terms", "truncation", "smoothing"], required=True)
    p.add_argument("--r", type=float, default=0.35, help="|u - u*| of the study point")
    p.add_argument("--jmax", type=int, default=64)
    p.add_argument("--eps", type=float, nargs="+", default=[5e-3, 2.5e-3, 1.25e-3])
    p.add_argument("--n-terms", type=int, default=340)

    add("report", cmd_report, help="aggregate theory report")
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    try:
        return args.fn(args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    except QsPatternError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
