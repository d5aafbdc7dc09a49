"""Weakly nonlinear pipeline: harmonic coefficients, overlap integrals and
the pitchfork normal form.

Near the onset slope D'0* the slow dynamics of the primary-mode amplitude
A obey

    dA/dtau = sigma1 A - mu / (I0 + 1) A^3,

with sigma1 proportional to the slope offset d'* = D'* - D'0*.  The cubic
coefficient grouping

    mu = (c20 + c22/2)(g''* I2 + g'* I3) + (g'''* I2 + 3 g''* I3)/8
         + g'* (I4 + I5/2)

decides criticality: supercritical pitchfork for mu > 0, subcritical for
mu < 0.  The c2j are the mean and second-harmonic signal responses at
second order; I0..I5 are overlap integrals of the localized mode shapes
against the adjoint amplitude, evaluated at leading order in eps by
Laplace's method, which reduces them to a handful of series-table
entries.  The non-uniform branches predicted by the normal form give the
square-root law  delta_rho / rho* = b sqrt(|D'* - D'0*|).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .dispersion import critical_Dprime
from .errors import ConfigError, DegenerateBifurcation, NoLocalBranch, NotBracketed
from .model import ModelParams, SteadyState, derivatives_of_g, motility_taylor, solve_steady_state
from .series import SeriesContext, SeriesTable, q_table, s_table, w_table

__all__ = [
    "WnaContext",
    "WnaReport",
    "BranchPrediction",
    "build_context",
    "compute_c20",
    "compute_c22",
    "compute_integrals",
    "compute_mu",
    "amplitude_ode",
    "branch_prediction",
    "coefficient_b",
    "wna_report",
    "slope_offset",
    "find_mu_crossing",
]

SUPERCRITICAL = "supercritical"
SUBCRITICAL = "subcritical"
DEGENERATE = "degenerate"


@dataclass(frozen=True)
class WnaContext:
    """Series context at onset plus the couplings the pipeline needs."""

    series: SeriesContext
    D_c: float
    beta: float
    g3: float                 # g'''(c*)
    D_prime_critical: float
    motility0: object = None  # MotilitySpec at the critical slope

    @property
    def k(self) -> float:
        return self.series.k

    @property
    def lam(self) -> float:
        return self.series.lam


def build_context(
    params: ModelParams,
    steady: SteadyState,
    k: float | None = None,
    m_max: int = 24,
) -> WnaContext:
    """Assemble the onset context: critical slope, motility Taylor data, couplings.

    The series recursions expand the motility at criticality, so the Taylor
    coefficients are taken from the family member with slope D'0*, anchored
    at the base state.
    """
    if k is None:
        k = params.wavenumber(1)
    dcrit = critical_Dprime(params, steady, k)
    mot0 = params.motility.with_slope(dcrit)
    if abs(mot0.u_star_ref - steady.u_star) > 1e-8 * max(1.0, steady.u_star):
        raise ConfigError(
            "motility profile is not anchored at the base state "
            f"(u_star_ref={mot0.u_star_ref}, u*={steady.u_star}); re-anchor first"
        )
    deriv = motility_taylor(mot0, steady.u_star, m_max)
    D_coeffs = deriv / np.array([math.factorial(m) for m in range(m_max + 1)])
    prod = params.production
    series = SeriesContext(
        k=k,
        D_coeffs=D_coeffs,
        lam=params.lam,
        rho_star=params.rho_star,
        alpha0=params.alpha0,
        u_star=steady.u_star,
        g1=float(derivatives_of_g(prod, steady.c_star, 1)),
        g2=float(derivatives_of_g(prod, steady.c_star, 2)),
    )
    return WnaContext(
        series=series,
        D_c=params.D_c,
        beta=params.beta,
        g3=float(derivatives_of_g(prod, steady.c_star, 3)),
        D_prime_critical=dcrit,
        motility0=mot0,
    )


def slope_offset(params: ModelParams, D_prime_critical: float) -> float:
    """d'* for the tanh family: the full slope offset D'* - D'0*.

    The family keeps D(u*) fixed while the slope parameter moves, so the
    local tilt perturbation has unit derivative in the parameter; this is
    the one place the sign convention lives.
    """
    return params.motility.D_prime_star - D_prime_critical


def compute_c20(ctx: WnaContext, q: SeriesTable) -> float:
    """Mean signal response at second order (leading order in eps)."""
    se = ctx.series
    lam, g1, g2 = se.lam, se.g1, se.g2
    den = 4.0 * (lam * ctx.beta - se.alpha0 * se.rho_star * g1)
    if den <= 0.0:
        raise ConfigError(
            "uniform-mode margin lam*beta - alpha0*rho*g'* must be positive"
        )
    num = se.alpha0 * (
        se.rho_star * g2
        + math.sqrt(8.0 * math.pi / lam**3) * g1 * (lam * q.get(1, 0) + q.get(0, 2))
    )
    return num / den


def compute_c22(ctx: WnaContext, q: SeriesTable, wtilde: SeriesTable) -> float:
    """Second-harmonic signal response (leading order in eps).

    The denominator is the doubled-wavenumber analogue of the onset
    balance; it only vanishes at a 2k-instability, which cannot coincide
    with the k-instability for these parameters.
    """
    se = ctx.series
    if wtilde.kind != "wtilde":
        raise ValueError("compute_c22 needs the doubled-wavenumber adjoint table")
    lam, g1, g2 = se.lam, se.g1, se.g2
    k2 = se.k**2
    wt1, wt2 = wtilde.get(0, 1), wtilde.get(0, 2)
    num = se.rho_star * g2 * wt1 + 2.0 * g1 * math.sqrt(2.0 * math.pi / lam**3) * (
        (lam * q.get(1, 0) + q.get(0, 2)) * wt1 + 2.0 * q.get(0, 1) * wt2
    )
    den = 4.0 * (4.0 * ctx.D_c * k2 + ctx.beta - se.rho_star * g1 * wt1)
    if abs(den) < 1e-12 * max(1.0, abs(num)):
        raise DegenerateBifurcation("degenerate 2k-resonance: harmonic denominator vanished")
    return num / den


def compute_integrals(
    ctx: WnaContext,
    q: SeriesTable,
    w: SeriesTable,
    s: SeriesTable,
    c20: float,
) -> dict[str, float]:
    """Leading-order overlap integrals I0..I5.

    I1 is stored per unit slope offset (the caller scales by d'*).  Raises
    IndexError naming the first missing table entry if the tables are too
    shallow (I5 needs s rows 0..2 and w columns up to 3).
    """
    se = ctx.series
    lam, g1, g2 = se.lam, se.g1, se.g2
    a0, rho, ustar = se.alpha0, se.rho_star, se.u_star
    D0 = se.D_coeffs[0]
    dp = se.D_coeffs[1]  # critical slope D'0*
    k2 = se.k**2
    Q = D0 * k2
    R = Q + lam
    rt = math.sqrt(2.0 * math.pi / lam)

    I0 = a0 * rho * g1 * (Q - (2.0 * Q + lam) * ustar * dp / D0) / (R**2 * Q)
    I1 = a0 * rho * ustar * g1 / (Q * R)  # per unit d'*
    I2 = a0 * rho * (ustar * dp / D0 - 1.0) / R
    I3 = -rt * (
        (q.get(1, 0) + q.get(0, 2) / lam) * w.get(0, 1)
        + 2.0 / lam * q.get(0, 1) * w.get(0, 2)
    )
    I4 = -math.sqrt(2.0 * math.pi / lam**5) * g1 * (
        (q.get(0, 2) + lam * q.get(1, 0)) * w.get(0, 2)
        + 1.5 * q.get(0, 1) * w.get(0, 3)
    ) - rho / lam * (2.0 * c20 * g1 + g2 / 2.0) * w.get(0, 2)
    I5 = -rt * (
        (s.get(2, 0) + s.get(1, 2) / lam + 3.0 * s.get(0, 4) / lam**2) * w.get(0, 1)
        + 2.0 / lam * (s.get(1, 1) + 3.0 * s.get(0, 3) / lam) * w.get(0, 2)
        + 3.0 / lam * (s.get(1, 0) + 3.0 * s.get(0, 2) / lam) * w.get(0, 3)
    )
    return {"I0": I0, "I1": I1, "I2": I2, "I3": I3, "I4": I4, "I5": I5}


def compute_mu(ctx: WnaContext, c20: float, c22: float, integrals: dict[str, float]) -> float:
    """Cubic coefficient grouping whose sign sets the pitchfork criticality."""
    se = ctx.series
    g1, g2, g3 = se.g1, se.g2, ctx.g3
    I2, I3, I4, I5 = (integrals[k] for k in ("I2", "I3", "I4", "I5"))
    return (
        (c20 + c22 / 2.0) * (g2 * I2 + g1 * I3)
        + (g3 * I2 + 3.0 * g2 * I3) / 8.0
        + g1 * (I4 + I5 / 2.0)
    )


@dataclass(frozen=True)
class WnaReport:
    """Everything the weakly nonlinear analysis produced for one parameter set."""

    c20: float
    c22: float
    I0: float
    I1: float   # per unit slope offset
    I2: float
    I3: float
    I4: float
    I5: float
    mu: float
    linear_rate_per_dprime: float
    cubic_rate: float            # coefficient of A^3, equals -mu/(I0+1)
    b: float
    D_prime_critical: float
    criticality: str
    k: float
    steady: SteadyState
    context: WnaContext
    tables: dict[str, SeriesTable]

    def integrals(self) -> dict[str, float]:
        return {f"I{i}": getattr(self, f"I{i}") for i in range(6)}

    def to_dict(self) -> dict:
        out = {
            "c20": self.c20,
            "c22": self.c22,
            "mu": self.mu,
            "linear_rate_per_dprime": self.linear_rate_per_dprime,
            "cubic_rate": self.cubic_rate,
            "b": self.b,
            "D_prime_critical": self.D_prime_critical,
            "criticality": self.criticality,
            "k": self.k,
            "c_star": self.steady.c_star,
            "u_star": self.steady.u_star,
        }
        out.update(self.integrals())
        return out


def amplitude_ode(report: WnaReport, d_prime_star: float) -> tuple[float, float]:
    """(linear, cubic) coefficients of dA/dtau = lin * A + cub * A^3.

    lin = -alpha0 rho* g'* u* (D0*k^2 + lam) d'* k^2 / Delta with
    Delta = D0*k^2 (D0*k^2+lam)^2 (I0 + 1) > 0, so the linear rate has the
    opposite sign to the slope offset; cub = -mu/(I0+1).
    """
    se = report.context.series
    lam = se.lam
    D0 = se.D_coeffs[0]
    dp = se.D_coeffs[1]
    k2 = report.k**2
    Q = D0 * k2
    R = Q + lam
    delta = Q * R**2 + se.alpha0 * se.rho_star * se.g1 * (
        Q - (2.0 * Q + lam) * se.u_star * dp / D0
    )
    if abs(delta) < 1e-14:
        raise DegenerateBifurcation("amplitude equation denominator vanished")
    lin = -se.alpha0 * se.rho_star * se.g1 * se.u_star * R * d_prime_star * k2 / delta
    cub = -report.mu / (report.I0 + 1.0)
    return lin, cub


@dataclass(frozen=True)
class BranchPrediction:
    """Local non-uniform steady state rho(x) = rho* + amplitude cos(kx)."""

    rho_star: float
    amplitude: float    # the '+' member; the pair is (+amplitude, -amplitude)
    k: float
    valid_side: float   # sign of D'* - D'0* where the branch is real

    def rho_profile(self, x) -> np.ndarray:
        return self.rho_star + self.amplitude * np.cos(self.k * np.asarray(x, dtype=float))

    @property
    def delta_rho(self) -> float:
        """|rho(L) - rho(0)| for the first mode: twice the amplitude."""
        return 2.0 * abs(self.amplitude)


def branch_prediction(report: WnaReport, D_prime_star: float) -> BranchPrediction:
    """Local branch amplitude at slope D'*; real only where mu and the slope
    offset have opposite signs."""
    if report.mu == 0.0:
        raise DegenerateBifurcation("mu = 0: no cubic saturation, branch undefined")
    se = report.context.series
    lam = se.lam
    D0 = se.D_coeffs[0]
    offset = D_prime_star - report.D_prime_critical
    arg = -se.alpha0 * se.u_star * (se.rho_star * se.g1) ** 3 * offset / (
        report.mu * D0**3 * (D0 * report.k**2 + lam) ** 3
    )
    if arg < 0.0:
        raise NoLocalBranch(
            f"mu = {report.mu:.3e} and slope offset {offset:.3e} have the same sign; "
            "no local non-uniform branch on this side"
        )
    amp = report.D_prime_critical * math.sqrt(arg)
    return BranchPrediction(
        rho_star=se.rho_star,
        amplitude=abs(amp),
        k=report.k,
        valid_side=-math.copysign(1.0, report.mu),
    )


def coefficient_b(report: WnaReport) -> float:
    """Branch-law coefficient: delta_rho/rho* = b sqrt(|D'* - D'0*|) near onset."""
    if report.mu == 0.0:
        raise DegenerateBifurcation("mu = 0: square-root branch law degenerate")
    se = report.context.series
    lam = se.lam
    D0 = se.D_coeffs[0]
    return -2.0 * report.D_prime_critical * math.sqrt(
        se.alpha0 * se.rho_star * se.u_star * se.g1**3
        / (abs(report.mu) * D0**3 * (D0 * report.k**2 + lam) ** 3)
    )


def wna_report(
    params: ModelParams,
    branch_index: int = 0,
    k: float | None = None,
    j_max: int = 4,
    l_max: int | None = None,
    mu_degenerate_tol: float = 1e-10,
) -> WnaReport:
    """Run the full pipeline for one parameter set.

    Table order matters: q feeds c20 and (with the doubled-wavenumber
    adjoint) c22, which seeds the harmonic source of the s-table; the
    overlap integrals then read a fixed set of entries.
    """
    steady = solve_steady_state(params)[branch_index]
    ctx = build_context(params, steady, k=k)
    if l_max is None:
        l_max = 2 * j_max + 8
    q = q_table(ctx.series, j_max, l_max)
    w = w_table(ctx.series, j_max, l_max, k_multiplier=1)
    wt = w_table(ctx.series, j_max, l_max, k_multiplier=2)
    c20 = compute_c20(ctx, q)
    c22 = compute_c22(ctx, q, wt)
    s = s_table(ctx.series, q, c22, min(j_max, q.j_max), l_max)
    integrals = compute_integrals(ctx, q, w, s, c20)
    mu = compute_mu(ctx, c20, c22, integrals)

    se = ctx.series
    mu_scale = abs((abs(se.g2) + abs(se.g1)) * (abs(integrals["I2"]) + abs(integrals["I3"]))) + 1e-30
    if abs(mu) < mu_degenerate_tol * mu_scale:
        crit = DEGENERATE
    else:
        crit = SUPERCRITICAL if mu > 0.0 else SUBCRITICAL

    lam = se.lam
    D0 = se.D_coeffs[0]
    dp = se.D_coeffs[1]
    k2 = se.k**2
    Q = D0 * k2
    R = Q + lam
    delta = Q * R**2 + se.alpha0 * se.rho_star * se.g1 * (Q - (2.0 * Q + lam) * se.u_star * dp / D0)
    lin_unit = -se.alpha0 * se.rho_star * se.g1 * se.u_star * R * k2 / delta

    if crit == DEGENERATE:
        b = math.nan
    else:
        b = -2.0 * ctx.D_prime_critical * math.sqrt(
            se.alpha0 * se.rho_star * se.u_star * se.g1**3
            / (abs(mu) * D0**3 * R**3)
        )

    return WnaReport(
        c20=c20,
        c22=c22,
        I0=integrals["I0"],
        I1=integrals["I1"],
        I2=integrals["I2"],
        I3=integrals["I3"],
        I4=integrals["I4"],
        I5=integrals["I5"],
        mu=mu,
        linear_rate_per_dprime=lin_unit,
        cubic_rate=-mu / (integrals["I0"] + 1.0),
        b=b,
        D_prime_critical=ctx.D_prime_critical,
        criticality=crit,
        k=se.k,
        steady=steady,
        context=ctx,
        tables={"q": q, "w": w, "wtilde": wt, "s": s},
    )


def find_mu_crossing(
    params: ModelParams,
    rho_lo: float,
    rho_hi: float,
    n_scan: int = 24,
    tol: float = 1e-8,
) -> float:
    """Mean density at which mu changes sign (criticality transition).

    Scans mu over a rho* grid (re-anchoring the motility at each point,
    since u* moves with rho*) and bisects the first sign change.
    """
    from .model import anchor_motility

    def mu_at(rho: float) -> float:
        p, _ = anchor_motility(params.with_rho_star(rho))
        return wna_report(p).mu

    grid = np.linspace(rho_lo, rho_hi, n_scan)
    vals = [mu_at(r) for r in grid]
    for i in range(n_scan - 1):
        if vals[i] == 0.0:
            return float(grid[i])
        if vals[i] * vals[i + 1] < 0.0:
            a, b = float(grid[i]), float(grid[i + 1])
            fa = vals[i]
            while b - a > tol * max(1.0, abs(b)):
                m = 0.5 * (a + b)
                fm = mu_at(m)
                if fm == 0.0:
                    return m
                if fa * fm < 0.0:
                    b = m
                else:
                    a, fa = m, fm
            return 0.5 * (a + b)
    raise NotBracketed(f"mu does not change sign on [{rho_lo}, {rho_hi}]")
