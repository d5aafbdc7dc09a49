"""Deterministic CSV + SVG emission for the batch drivers.

Every plot is written next to a CSV holding exactly the plotted numbers
(full float precision, stable ordering), so re-running a manifest
reproduces byte-identical CSVs; the SVGs are for human inspection only.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

matplotlib.rcParams["svg.hashsalt"] = "qspattern"

__all__ = [
    "write_csv",
    "bifurcation_diagram_plot",
    "error_scaling_plot",
    "phase_diagram_plot",
    "profile_plot",
    "stokes_profile_plot",
]


def write_csv(path: str | Path, header: list[str], rows) -> Path:
    path = Path(path)
    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join(_fmt(v) for v in row))
    path.write_text("\n".join(lines) + "\n")
    return path


def _fmt(v) -> str:
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return format(float(v), ".17g")
    return str(v)


def _save(fig, path: Path) -> Path:
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)
    return path


def bifurcation_diagram_plot(
    out_base: str | Path,
    branches: dict,
    theory_offsets: np.ndarray | None = None,
    theory_delta_rho: np.ndarray | None = None,
    D_hat: float | None = None,
):
    """Order parameter vs slope for the computed branches, with the local
    square-root prediction overlaid.  ``branches`` maps label -> Branch."""
    out_base = Path(out_base)
    rows = []
    fig, ax = plt.subplots(figsize=(6, 4))
    for label, br in branches.items():
        p = br.parameter_values()
        dr = br.delta_rho_values()
        ax.plot(p, dr, "o-", ms=3, label=label)
        rows += [[label, pv, dv] for pv, dv in zip(p, dr)]
    if theory_offsets is not None and D_hat is not None:
        ax.plot(D_hat + theory_offsets, theory_delta_rho, "k--", lw=1, label="local theory")
        rows += [["theory", D_hat + o, d] for o, d in zip(theory_offsets, theory_delta_rho)]
    if D_hat is not None:
        ax.axvline(D_hat, color="gray", lw=0.6)
    ax.set_xlabel("motility slope D'*")
    ax.set_ylabel("delta rho")
    ax.legend(fontsize=8)
    csv = write_csv(out_base.with_suffix(".csv"), ["branch", "D_prime_star", "delta_rho"], rows)
    svg = _save(fig, out_base.with_suffix(".svg"))
    return csv, svg


def error_scaling_plot(out_base: str | Path, result):
    """Relative errors of the detected onset and branch coefficient vs eps."""
    out_base = Path(out_base)
    eps = np.array(result.eps_values)
    fig, axes = plt.subplots(1, 2, figsize=(9, 3.6))
    for ax, err, slope, r2, name in (
        (axes[0], np.array(result.err_D), result.slope_D, result.r2_D, "onset slope"),
        (axes[1], np.array(result.err_b), result.slope_b, result.r2_b, "branch coefficient"),
    ):
        ax.plot(eps, err, "o", label="measured")
        xs = np.linspace(0.0, eps.max() * 1.05, 50)
        ax.plot(xs, slope * xs, "k-", lw=1, label=f"{slope:.2f} eps (R2={r2:.3f})")
        ax.set_xlabel("eps")
        ax.set_ylabel(f"relative error, {name}")
        ax.legend(fontsize=8)
    fig.tight_layout()
    rows = zip(result.eps_values, result.err_D, result.err_b, result.D_hat, result.b_hat)
    csv = write_csv(out_base.with_suffix(".csv"), ["eps", "err_D", "err_b", "D_hat", "b_hat"], rows)
    svg = _save(fig, out_base.with_suffix(".svg"))
    return csv, svg


def phase_diagram_plot(out_base: str | Path, result: dict):
    out_base = Path(out_base)
    rho = np.asarray(result["rho_values"])
    dp = np.asarray(result["dprime_values"])
    grid = np.asarray(result["delta_rho_rel"])
    fig, ax = plt.subplots(figsize=(6, 4.5))
    mesh = ax.pcolormesh(rho, dp, grid.T, shading="nearest", cmap="viridis")
    fig.colorbar(mesh, ax=ax, label="delta rho / rho*")
    ax.plot(rho, result["critical_curve"], "y-", lw=2, label="onset slope")
    ax.set_xlabel("rho*")
    ax.set_ylabel("D'*")
    ax.legend(fontsize=8)
    rows = []
    for i, r in enumerate(rho):
        for j, d in enumerate(dp):
            rows.append([r, d, grid[i, j]])
    csv = write_csv(out_base.with_suffix(".csv"), ["rho_star", "D_prime_star", "delta_rho_rel"], rows)
    svg = _save(fig, out_base.with_suffix(".svg"))
    return csv, svg


def profile_plot(out_base: str | Path, obs: dict):
    """rho(x) and c(x) of one state."""
    out_base = Path(out_base)
    fig, axes = plt.subplots(2, 1, figsize=(6, 5), sharex=True)
    axes[0].plot(obs["x"], obs["rho"])
    axes[0].set_ylabel("rho(x)")
    axes[1].plot(obs["x"], obs["c"])
    axes[1].set_ylabel("c(x)")
    axes[1].set_xlabel("x")
    rows = zip(obs["x"], obs["rho"], obs["u_mean"], obs["c"])
    csv = write_csv(out_base.with_suffix(".csv"), ["x", "rho", "u_mean", "c"], rows)
    svg = _save(fig, out_base.with_suffix(".svg"))
    return csv, svg


def stokes_profile_plot(out_base: str | Path, profile: dict):
    out_base = Path(out_base)
    theta = profile["theta"]
    measured = np.asarray(profile["measured"])
    m = measured - measured[0]
    if abs(m[-1]) > 0:
        m = m / m[-1]
    predicted = (np.asarray(profile["predicted"]) + 1.0) / 2.0
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(theta, m.real, "b.", ms=3, label="measured (normalized)")
    ax.plot(theta, predicted, "k-", lw=1, label="erf prediction")
    ax.set_xlabel("theta")
    ax.set_ylabel("switching fraction")
    ax.legend(fontsize=8)
    rows = zip(theta, m.real, m.imag, predicted)
    csv = write_csv(
        out_base.with_suffix(".csv"),
        ["theta", "measured_re", "measured_im", "predicted"],
        rows,
    )
    svg = _save(fig, out_base.with_suffix(".svg"))
    return csv, svg
