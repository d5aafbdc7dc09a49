"""Late-term diagnostics for the WKBJ amplitude hierarchy.

The row equations lam (u - u*) y_j' + D(u) k^2 y_j = y_{j-1}'' admit one
smooth solution per row; any admixture of the homogeneous solution
q_h(u) = exp(-int h(t)/(t - u*) dt), h = D k^2 / lam, carries a pole of
order h0 = h(u*) at u* that deepens by two orders per row and drives a
factorial-over-power divergence

    q_j ~ Q Gamma(j + gamma + 1) / (lam^j v(u)^(j + kappa)),
    v(u) = -(u - u*)^2 / 2,   gamma = h0 - 3/2.

This module generates the sequence numerically to high order and measures
that behaviour: the singulant and prefactor exponent from late-term
ratios, the optimal truncation index N = lam r^2 / (2 eps) with its
exponentially small minimal term, and the error-function smoothing of the
Stokes switching across arg(u - u*) = pi/2.

Arithmetic: each q_j is held as a truncated Taylor germ at an anchor a
distance ~1.5 r from the singularity, iterated exactly (differentiate,
divide by the homogeneous-solution weight, integrate, multiply back), in
gmpy2 extended precision -- factorial growth exhausts doubles near j = 40
and analytic continuation around the singularity needs hundreds of
digits of headroom.  Germs are re-centred along an arc of constant |u-u*|
to reach complex evaluation points; the branch of q_h is fixed on the
positive real axis and continued counterclockwise, keeping the cut along
the negative real (u - u*) axis.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import gmpy2
import numpy as np

from .errors import NotDivergent, NumericalError
from .model import MotilitySpec
from .series import SeriesTable

__all__ = [
    "StokesContext",
    "LateTermStudy",
    "TruncationProfile",
    "generate_late_terms",
    "estimate_singulant",
    "optimal_truncation",
    "stokes_smoothing_profile",
]


@dataclass(frozen=True)
class StokesContext:
    """Model data the late-term studies need: D(u), wavenumber, decay rate."""

    motility: MotilitySpec
    k: float
    lam: float
    u_star: float
    precision_bits: int = 700
    n_terms: int = 320           # germ truncation length

    @property
    def h0(self) -> float:
        return float(self.motility.value(self.u_star)) * self.k**2 / self.lam


# -- truncated Taylor germ algebra in gmpy2 ----------------------------------
#
# A germ is a plain list of gmpy2.mpc coefficients about a fixed centre;
# all routines truncate to the context length.


def _mpc(z) -> gmpy2.mpc:
    return gmpy2.mpc(z)


def _g_mul(a: list, b: list, T: int) -> list:
    out = [gmpy2.mpc(0)] * T
    for i, ai in enumerate(a):
        if i >= T:
            break
        if ai == 0:
            continue
        top = min(T - i, len(b))
        for j in range(top):
            out[i + j] += ai * b[j]
    return out


def _g_deriv(a: list) -> list:
    return [a[n + 1] * (n + 1) for n in range(len(a) - 1)] + [gmpy2.mpc(0)]


def _g_integrate(a: list, T: int) -> list:
    out = [gmpy2.mpc(0)] * T
    for n in range(min(len(a), T - 1)):
        out[n + 1] = a[n] / (n + 1)
    return out


def _g_recip(a: list, T: int) -> list:
    if a[0] == 0:
        raise ZeroDivisionError("germ reciprocal of a series vanishing at its centre")
    out = [gmpy2.mpc(0)] * T
    out[0] = 1 / a[0]
    for n in range(1, T):
        acc = gmpy2.mpc(0)
        top = min(n, len(a) - 1)
        for m in range(1, top + 1):
            acc += a[m] * out[n - m]
        out[n] = -acc / a[0]
    return out


def _g_exp(a: list, T: int) -> list:
    out = [gmpy2.mpc(0)] * T
    out[0] = gmpy2.exp(a[0])
    for n in range(T - 1):
        acc = gmpy2.mpc(0)
        for m in range(min(n + 1, len(a) - 1)):
            acc += (m + 1) * a[m + 1] * out[n - m]
        out[n + 1] = acc / (n + 1)
    return out


def _g_shift(a: list, d, T: int) -> list:
    """Re-centre the germ by d (synthetic Horner shift, exact in the algebra)."""
    d = _mpc(d)
    out = list(a) + [gmpy2.mpc(0)] * (T - len(a)) if len(a) < T else list(a[:T])
    # repeated synthetic division by (z - d): after T passes out[k] holds
    # the coefficients about the new centre
    for k in range(T - 1):
        for n in range(T - 2, k - 1, -1):
            out[n] += d * out[n + 1]
    return out


def _g_eval(a: list, z) -> gmpy2.mpc:
    z = _mpc(z)
    acc = gmpy2.mpc(0)
    for c in reversed(a):
        acc = acc * z + c
    return acc


class _GermEngine:
    """Shared germ data (h, q_h and friends) at one anchor point."""

    def __init__(self, ctx: StokesContext, anchor: complex):
        gmpy2.get_context().precision = ctx.precision_bits
        self.ctx = ctx
        self.T = ctx.n_terms
        self.anchor = _mpc(anchor)
        T = self.T
        mot = ctx.motility
        c1 = _mpc(mot.slope_scale)
        # tanh germ of the motility argument via T' = 1 - T^2
        z0 = c1 * (self.anchor + _mpc(ctx.u_star - mot.u_star_ref))
        th = [gmpy2.mpc(0)] * T
        th[0] = gmpy2.tanh(z0)
        for n in range(T - 1):
            acc = gmpy2.mpc(0)
            for m in range(n + 1):
                acc += th[m] * th[n - m]
            th[n + 1] = ((1 if n == 0 else 0) - acc) * c1 / (n + 1)
        amp = _mpc(mot.D_star - mot.D_inf)
        D = [(-amp) * t for t in th]
        D[0] += _mpc(mot.D_star)
        scale = _mpc(ctx.k**2 / ctx.lam)
        self.h = [scale * d for d in D]
        # s-germ: the offset variable u - u*
        self.s = [self.anchor, gmpy2.mpc(1)] + [gmpy2.mpc(0)] * (T - 2)
        self.s_recip = _g_recip(self.s, T)
        # q_h normalized to 1 at the anchor
        self.qh = _g_exp([-c for c in _g_integrate(_g_mul(self.h, self.s_recip, T), T)], T)
        lam_s = [_mpc(ctx.lam) * c for c in self.s]
        self.inv_lam_s_qh = _g_recip(_g_mul(lam_s, self.qh, T), T)

    def iterate(self, q_prev: list, anchor_value=None) -> list:
        """One row step: q_j = q_h [C + int q_{j-1}'' / (lam s q_h)].

        C defaults to zero (value pinned at the anchor); passing
        anchor_value instead pins q_j(anchor) to that number, which keeps
        deliberately smooth sequences smooth.
        """
        integ = _g_integrate(
            _g_mul(_g_deriv(_g_deriv(q_prev)), self.inv_lam_s_qh, self.T), self.T
        )
        if anchor_value is not None:
            integ[0] += _mpc(anchor_value)  # q_h(anchor) = 1
        return _g_mul(self.qh, integ, self.T)


def _seed_germ(
    engine: _GermEngine,
    seed: str,
    q_ref: SeriesTable | None,
    singular_factor: tuple[float, ...] = (1.0,),
) -> list:
    T = engine.T
    if seed == "singular":
        fac = [_mpc(c) for c in singular_factor] + [gmpy2.mpc(0)] * (T - len(singular_factor))
        return _g_mul(engine.qh, fac, T)
    if seed == "smooth":
        if q_ref is None:
            raise ValueError("smooth seed requires the regular series table")
        row = q_ref.row(0)
        germ = [gmpy2.mpc(0)] * T
        for l, c in enumerate(row[: T]):
            germ[l] = _mpc(float(c))
        return _g_shift(germ, engine.anchor, T)
    raise ValueError(f"unknown seed {seed!r}")


@dataclass
class LateTermStudy:
    """Computed late-term sequence at one evaluation point."""

    u_offset: complex            # u - u*
    j_values: np.ndarray
    terms: list                  # gmpy2.mpc values q_j(u)
    seed: str
    h0: float
    singulant_hat: float | None = None
    gamma_hat: float | None = None

    def ratios(self) -> np.ndarray:
        out = []
        for a, b in zip(self.terms[1:], self.terms[:-1]):
            out.append(complex(a / b) if b != 0 else complex(math.nan))
        return np.array(out)


def series_term_sequence(
    q_ref: SeriesTable, u_offset: float, j_max: int, h0: float
) -> LateTermStudy:
    """The smooth reference sequence q_j(u) straight from the series table.

    This is the exactly smooth solution of the hierarchy; it is the
    baseline against which singular-seeded sequences show their factorial
    divergence.
    """
    if q_ref.j_max < j_max:
        raise ValueError("reference table too shallow")
    terms = [
        gmpy2.mpc(float(np.polynomial.polynomial.polyval(u_offset, q_ref.row(j))))
        for j in range(j_max + 1)
    ]
    return LateTermStudy(
        u_offset=complex(u_offset),
        j_values=np.arange(j_max + 1),
        terms=terms,
        seed="smooth-series",
        h0=h0,
    )


def generate_late_terms(
    ctx: StokesContext,
    u_offset: complex,
    j_max: int,
    seed: str = "singular",
    q_ref: SeriesTable | None = None,
    singular_factor: tuple[float, ...] = (1.0,),
    singular_at: int = 0,
    anchor_factor: float = 1.5,
) -> LateTermStudy:
    """Iterate the row hierarchy numerically and evaluate q_j at u* + u_offset.

    seed='singular' starts from (a polynomial multiple of) the homogeneous
    solution at row ``singular_at`` -- rows below it follow the smooth
    reference table, so a first non-smooth term deeper in the hierarchy
    simply shifts the divergence index.  seed='smooth' iterates the regular
    power-series solution with anchor values pinned to the reference table.

    Smoothness is a razor's-edge selection: any error in a smooth-seeded
    row (pin round-off included) is a homogeneous-solution admixture that
    the factorial cascade amplifies relative to the smooth rows, so
    smooth-seeded iterations track the reference only over a finite range
    of j (exactly for profiles whose rows terminate, e.g. a flat motility).
    ``series_term_sequence`` provides the arbitrarily deep smooth baseline.
    """
    if u_offset == 0:
        raise ValueError("late terms are evaluated away from the singular point")
    r = abs(u_offset)
    anchor = anchor_factor * r
    engine = _GermEngine(ctx, anchor)
    smooth_rows = j_max if seed == "smooth" else singular_at  # rows pinned to the reference
    if smooth_rows > 0 and (q_ref is None or q_ref.j_max < min(smooth_rows, j_max)):
        raise ValueError("smooth rows need a reference series table of matching depth")

    def pin_value(j: int) -> float:
        return float(np.polynomial.polynomial.polyval(anchor, q_ref.row(j)))

    if seed == "singular" and singular_at == 0:
        germ = _seed_germ(engine, "singular", None, singular_factor)
    else:
        germ = _seed_germ(engine, "smooth", q_ref, singular_factor)
    terms = [_g_eval(germ, _mpc(u_offset) - engine.anchor)]
    for j in range(1, j_max + 1):
        pin = None
        if seed == "smooth" or j < singular_at:
            pin = pin_value(j)
        germ = engine.iterate(germ, anchor_value=pin)
        if seed == "singular" and singular_at == j:
            extra = _seed_germ(engine, "singular", None, singular_factor)
            germ = [a + b for a, b in zip(germ, extra)]
        terms.append(_g_eval(germ, _mpc(u_offset) - engine.anchor))
    return LateTermStudy(
        u_offset=complex(u_offset),
        j_values=np.arange(j_max + 1),
        terms=terms,
        seed=seed,
        h0=ctx.h0,
    )


def estimate_singulant(
    study: LateTermStudy,
    ctx: StokesContext,
    j_window: tuple[int, int] | None = None,
) -> tuple[float, float]:
    """Fit q_{j+1}/q_j = (j + gamma + 1)/(lam v) by linear regression in j.

    The factorial-over-power form q_j ~ Q Gamma(j+gamma+1) / (lam^j
    v^(j+kappa)) gives consecutive ratios (j+gamma+1)/(lam v); with the
    quadratic singulant v = -(u-u*)^2/2 the ratios are negative and grow
    linearly.  Returns (v_hat, gamma_hat): the slope gives the singulant,
    the intercept the prefactor exponent.  Raises NotDivergent if the
    sequence shows no linear ratio growth.
    """
    n = len(study.terms) - 1
    if n < 20:
        raise NotDivergent("need at least 20 late terms for a singulant fit")
    if j_window is None:
        j_window = (max(10, n - 25), n)
    ratios = study.ratios().real
    j = study.j_values[1:].astype(float)
    lo, hi = j_window
    mask = (j >= lo) & (j <= hi) & np.isfinite(ratios)
    if int(mask.sum()) < 8:
        raise NotDivergent("too few usable ratios in the fit window")
    rj, jj = ratios[mask], j[mask] - 1.0  # ratio index: r_j = q_{j+1}/q_j
    growth = abs(rj[-1]) / max(abs(rj[0]), 1e-300)
    if growth < 1.5:
        raise NotDivergent(
            f"late-term ratios grow by x{growth:.2f} over the window; no factorial divergence"
        )
    slope, intercept = np.polyfit(jj, rj, 1)
    if slope == 0.0:
        raise NotDivergent("degenerate ratio fit")
    v_hat = 1.0 / (ctx.lam * slope)
    gamma_hat = intercept / slope - 1.0
    study.singulant_hat = float(v_hat)
    study.gamma_hat = float(gamma_hat)
    return float(v_hat), float(gamma_hat)


@dataclass
class TruncationProfile:
    epsilon: float
    r: float
    N_formula: int
    N_empirical: int
    term_magnitudes: np.ndarray   # log10 |eps^j q_j|
    minimal_term_log: float       # natural log of the minimal term magnitude


def optimal_truncation(
    ctx: StokesContext,
    u_offset: float,
    epsilon: float,
    study: LateTermStudy | None = None,
    N0: int = 0,
    margin: int = 20,
) -> TruncationProfile:
    """Optimal truncation of the divergent series at real u* + u_offset.

    N = round(lam r^2 / (2 eps)) + N0 should match the empirical minimal
    term of eps^j |q_j| within a couple of indices; the minimal term
    itself scales like exp(-lam r^2 / 2 eps).
    """
    r = abs(u_offset)
    N_formula = int(round(ctx.lam * r**2 / (2.0 * epsilon))) + N0
    if N_formula < 3:
        raise ValueError(f"epsilon too large: formula index N = {N_formula} < 3")
    j_max = N_formula + margin
    if study is None or len(study.terms) <= j_max:
        study = generate_late_terms(ctx, u_offset, j_max, seed="singular")
    log_eps = gmpy2.log(gmpy2.mpfr(epsilon))
    logs = np.array(
        [
            float(j * log_eps + gmpy2.log(abs(t))) if t != 0 else -math.inf
            for j, t in enumerate(study.terms[: j_max + 1])
        ]
    )
    N_emp = int(np.argmin(logs[1:])) + 1
    return TruncationProfile(
        epsilon=epsilon,
        r=r,
        N_formula=N_formula,
        N_empirical=N_emp,
        term_magnitudes=logs / math.log(10.0),
        minimal_term_log=float(logs[N_emp]),
    )


def stokes_smoothing_profile(
    ctx: StokesContext,
    r: float,
    epsilon: float,
    theta_grid: np.ndarray | None = None,
    N0: int = 0,
) -> dict:
    """Measure the switching of the exponentially large component across
    the Stokes line arg(u - u*) = pi/2 and compare with the error-function
    prediction.

    The optimally truncated remainder solves a forced first-order system
    whose exponentially large component has coefficient
    C(theta) ~ int q_h q_{N-1}'' eps^N exp(-lam s^2 / 2 eps) ds along the
    arc |s| = r; the integrand concentrates at theta = pi/2 with width
    sqrt(eps)/r, and the cumulative integral should follow
    erf(sqrt(lam/eps) r (theta - pi/2)) up to normalization.  Returns the
    measured profile, the prediction and their correlation (phase-aligned,
    scale- and offset-invariant).
    """
    lam = ctx.lam
    width = math.sqrt(epsilon / lam) / r
    if theta_grid is None:
        theta_grid = math.pi / 2.0 + width * np.linspace(-7.0, 7.0, 241)
    theta_grid = np.asarray(theta_grid, dtype=float)
    if not (theta_grid.min() < math.pi / 2.0 < theta_grid.max()):
        raise ValueError("theta grid must straddle pi/2")

    N = int(round(lam * r**2 / (2.0 * epsilon))) + N0
    if N < 5:
        raise ValueError("epsilon too large for a meaningful remainder study")
    required_terms = int(4.5 * N + 60)
    if ctx.n_terms < required_terms:
        raise ValueError(
            f"germ truncation n_terms={ctx.n_terms} too short for N={N} "
            f"(need >= {required_terms}): raise n_terms or lower lam r^2 / 2 eps"
        )

    # Germ anchors along the arc at radius 1.4 r.  Chained Taylor shifts of
    # one germ are exponentially unstable (truncation garbage at the top of
    # the coefficient range is amplified by every further shift), so the
    # full row iteration is re-run at each anchor instead and only the
    # integration constants are handed off: C_j at the next anchor is the
    # previous germ evaluated there, an operation that stays deep inside
    # the disc of convergence.
    anchor_rad = 1.4 * r
    step = 0.3
    phi_lo = float(theta_grid.min()) - 0.05
    phi_hi = float(theta_grid.max()) + 0.05
    anchor_angles = list(np.arange(phi_lo, phi_hi + step, step))
    anchors = [anchor_rad * complex(math.cos(ph), math.sin(ph)) for ph in anchor_angles]

    stations: list[tuple[complex, list, list]] = []  # (anchor, q_h germ, q''_{N-1} germ)
    prev_anchor = None
    prev_germs: list[list] | None = None
    for a in anchors:
        engine = _GermEngine(ctx, a)
        if prev_germs is None:
            germs = [_seed_germ(engine, "singular", None)]
            for _ in range(1, N):
                germs.append(engine.iterate(germs[-1]))
        else:
            dz = _mpc(a) - _mpc(prev_anchor)
            handoff = [_g_eval(g, dz) for g in prev_germs]
            germs = [[handoff[0] * c for c in engine.qh]]
            for j in range(1, N):
                germs.append(engine.iterate(germs[-1], anchor_value=handoff[j]))
        stations.append((a, germs[0], _g_deriv(_g_deriv(germs[-1]))))
        prev_anchor, prev_germs = a, germs

    log_eps = gmpy2.log(gmpy2.mpfr(epsilon))
    samples = []
    for th in theta_grid:
        s = r * complex(math.cos(th), math.sin(th))
        dists = [abs(s - st[0]) for st in stations]
        idx = int(np.argmin(dists))
        a, gh, gq = stations[idx]
        dz = _mpc(s) - _mpc(a)
        val_h = _g_eval(gh, dz)
        val_q = _g_eval(gq, dz)
        smp = _mpc(s)
        expo = gmpy2.exp(N * log_eps - _mpc(ctx.lam) * smp * smp / (2.0 * epsilon))
        dsdth = _mpc(complex(0.0, 1.0)) * smp
        samples.append(complex(val_q * val_h * expo * dsdth))
    samples = np.array(samples)

    measured = np.concatenate([[0.0], np.cumsum(0.5 * (samples[1:] + samples[:-1]) * np.diff(theta_grid))])
    predicted = np.array(
        [math.erf(math.sqrt(lam / epsilon) * r * (th - math.pi / 2.0)) for th in theta_grid]
    )

    mc = measured - measured.mean()
    pc = predicted - predicted.mean()
    denom = float(np.sqrt(np.sum(np.abs(mc) ** 2) * np.sum(pc**2)))
    corr = abs(np.dot(np.conj(mc), pc)) / denom if denom > 0 else 0.0
    return {
        "theta": theta_grid,
        "measured": measured,
        "predicted": predicted,
        "correlation": float(corr),
        "transition_width_theta": width,
        "N": N,
    }
