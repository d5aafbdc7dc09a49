"""Numerical Laplace-method oracle for the weakly nonlinear pipeline.

Every closed-form quantity in :mod:`qspattern.wna` (c20, c22, I0..I5, the
onset balance, the adjoint identity) is the leading order of an integral
of exponentially localized series-built functions against the Gaussian
base-state envelope.  This module evaluates those integrals numerically
at a small finite eps, so that

    quadrature(eps) = closed_form + O(eps)

can be checked directly, including the O(eps) trend across an eps pair.

Quadrature: all integrands are (analytic prefactor) x exp(-lam s^2/2 eps),
so after mapping s = sqrt(2 eps/lam) t they are Gauss-Hermite friendly;
with a truncated power-series prefactor the rule is exact once the node
count exceeds half the polynomial degree.  The formal u-range (0, inf) is
replaced by the whole axis, an exponentially small change for base states
many widths away from u = 0.
"""

from __future__ import annotations

import math
from functools import lru_cache

import numpy as np

from .series import SeriesTable, eval_series, s_table
from .wna import WnaContext

__all__ = [
    "gaussian_quadrature_nodes",
    "c20_quadrature",
    "c22_quadrature",
    "integrals_quadrature",
    "onset_balance_gap",
    "adjoint_identity_gap",
    "second_order_solvability_gaps",
]


@lru_cache(maxsize=16)
def _hermgauss(n: int):
    return np.polynomial.hermite.hermgauss(n)


def gaussian_quadrature_nodes(ctx: WnaContext, eps: float, n: int = 96):
    """Nodes u_i and weights w_i such that sum_i w_i f(u_i) integrates
    f(u) exp(-lam (u-u*)^2 / 2 eps) du over the real axis."""
    t, w = _hermgauss(n)
    scale = math.sqrt(2.0 * eps / ctx.series.lam)
    u = ctx.series.u_star + scale * t
    return u, scale * w


def _gaussian_integral(ctx: WnaContext, eps: float, f, n: int = 96) -> float:
    u, w = gaussian_quadrature_nodes(ctx, eps, n)
    return float(np.dot(w, f(u)))


def _series_prefactor(table: SeriesTable, u, eps: float, deriv: int = 0):
    """Polynomial part of the series (no envelope)."""
    return eval_series(table, u, eps, envelope=False, deriv=deriv)


def _antiderivative_prefactor(table: SeriesTable, u, eps: float):
    """Termwise antiderivative from u* of the polynomial part."""
    ctx = table.context
    s = np.asarray(u, dtype=float) - ctx.u_star
    total = np.zeros_like(s)
    for j in range(table.j_max + 1):
        row = table.coeffs[j, : table.valid_l(j) + 1]
        integ = np.concatenate([[0.0], row / (np.arange(len(row)) + 1.0)])
        total = total + eps**j * np.polynomial.polynomial.polyval(s, integ)
    return total


def _mode_prefactor(q: SeriesTable, u, eps: float, deriv: int = 0):
    """Prefactor of the localized mode eta = eps^(-3/2) q-hat exp(...)."""
    qa = _series_prefactor(q, u, eps)
    if deriv == 0:
        return eps ** (-1.5) * qa
    lam = q.context.lam
    s = np.asarray(u, dtype=float) - q.context.u_star
    qd = _series_prefactor(q, u, eps, deriv=1)
    return eps ** (-1.5) * (qd - lam * s / eps * qa)


def _mean_response_prefactors(ctx: WnaContext, q: SeriesTable, eps: float, n: int):
    """Split the mean second-order density response prefactor r(u) into the
    c20-independent part and the factor multiplying c20.

    r(u) = (c20 g1 + g2/4) rho* sqrt(lam/2 pi eps^3) s
           + eps^(-5/2) (g1/2) Int_{u*}^u q + rbar sqrt(lam/2 pi eps),
    with rbar fixed by the zero-mass condition.
    """
    se = ctx.series
    lam, g1, g2 = se.lam, se.g1, se.g2
    amp = se.rho_star * math.sqrt(lam / (2.0 * math.pi * eps**3))

    def Qpart(u):
        return eps ** (-2.5) * 0.5 * g1 * _antiderivative_prefactor(q, u, eps)

    rbar_weight = math.sqrt(lam / (2.0 * math.pi * eps))
    # zero total mass picks rbar: int (Qpart + rbar_weight * rbar_hat) E du = 0
    mass_Q = _gaussian_integral(ctx, eps, Qpart, n)
    mass_w = _gaussian_integral(ctx, eps, lambda u: rbar_weight * np.ones_like(u), n)
    rbar_hat = -mass_Q / mass_w

    def r_base(u):
        s = np.asarray(u, dtype=float) - se.u_star
        return (g2 / 4.0) * amp * s + Qpart(u) + rbar_hat * rbar_weight

    def r_c20(u):
        s = np.asarray(u, dtype=float) - se.u_star
        return g1 * amp * s

    def r_base_d(u):
        return (g2 / 4.0) * amp + eps ** (-2.5) * 0.5 * g1 * _series_prefactor(q, u, eps)

    def r_c20_d(u):
        return g1 * amp * np.ones_like(np.asarray(u, dtype=float))

    return r_base, r_c20, r_base_d, r_c20_d


def c20_quadrature(ctx: WnaContext, q: SeriesTable, eps: float, n: int = 96) -> float:
    """Mean signal response by direct quadrature of the signal balance."""
    se = ctx.series
    r_base, r_c20, _, _ = _mean_response_prefactors(ctx, q, eps, n)
    u_mom_base = _gaussian_integral(ctx, eps, lambda u: u * r_base(u), n)
    u_mom_c20 = _gaussian_integral(ctx, eps, lambda u: u * r_c20(u), n)
    return se.alpha0 * u_mom_base / (ctx.beta - se.alpha0 * u_mom_c20)


def c22_quadrature(ctx: WnaContext, q: SeriesTable, eps: float, n: int = 96,
                   j_max: int | None = None) -> float:
    """Second-harmonic signal response by quadrature.

    The harmonic density response is linear in c22 through its series
    source, so two s-tables (built at c22 = 0 and 1) give the affine map
    whose fixed point is the quadrature value of c22.
    """
    se = ctx.series
    if j_max is None:
        j_max = q.j_max
    s0 = s_table(se, q, 0.0, j_max, q.l_max)
    s1 = s_table(se, q, 1.0, j_max, q.l_max)

    def umom(table):
        return _gaussian_integral(
            ctx, eps,
            lambda u: u * eps ** (-2.5) * _series_prefactor(table, u, eps), n,
        )

    m0 = umom(s0)
    m1 = umom(s1)
    denom = 4.0 * ctx.D_c * se.k**2 + ctx.beta - se.alpha0 * (m1 - m0)
    return se.alpha0 * m0 / denom


def integrals_quadrature(
    ctx: WnaContext,
    tables: dict[str, SeriesTable],
    c20: float,
    c22: float,
    eps: float,
    n: int = 96,
) -> dict[str, float]:
    """I0..I5 by quadrature of the series-built integrands at finite eps.

    Conventions match ``wna.compute_integrals``: I1 is per unit slope
    offset (the tilt sensitivity of the motility family is the weight).
    The supplied c20/c22 (normally the leading-order values) feed the mean
    and harmonic responses, keeping the comparison at O(eps).
    """
    se = ctx.series
    lam = se.lam
    q, w = tables["q"], tables["w"]
    sT = s_table(se, q, c22, q.j_max, q.l_max)
    N = se.rho_star * math.sqrt(lam / (2.0 * math.pi * eps))

    def W_of(u):
        return _series_prefactor(w, u, eps)

    out = {}
    out["I0"] = _gaussian_integral(ctx, eps, lambda u: _mode_prefactor(q, u, eps) * W_of(u), n)
    tilt = ctx.motility0.slope_sensitivity
    out["I1"] = _gaussian_integral(
        ctx, eps, lambda u: tilt(u) * _mode_prefactor(q, u, eps) * W_of(u), n
    )
    out["I2"] = _gaussian_integral(
        ctx, eps,
        lambda u: -N * lam * (u - se.u_star) / eps * W_of(u), n,
    )
    out["I3"] = _gaussian_integral(
        ctx, eps, lambda u: _mode_prefactor(q, u, eps, deriv=1) * W_of(u), n
    )

    r_base, r_c20, r_base_d, r_c20_d = _mean_response_prefactors(ctx, q, eps, n)

    def eta20_d(u):
        s = np.asarray(u, dtype=float) - se.u_star
        r = r_base(u) + c20 * r_c20(u)
        rd = r_base_d(u) + c20 * r_c20_d(u)
        return rd - lam * s / eps * r

    out["I4"] = _gaussian_integral(ctx, eps, lambda u: eta20_d(u) * W_of(u), n)

    def eta22_d(u):
        s = np.asarray(u, dtype=float) - se.u_star
        sa = eps ** (-2.5) * _series_prefactor(sT, u, eps)
        sd = eps ** (-2.5) * _series_prefactor(sT, u, eps, deriv=1)
        return sd - lam * s / eps * sa

    out["I5"] = _gaussian_integral(ctx, eps, lambda u: eta22_d(u) * W_of(u), n)
    return out


def onset_balance_gap(ctx: WnaContext, q: SeriesTable, eps: float, n: int = 96) -> float:
    """Residual of D_c k^2 + beta = alpha0 int u eta du at the critical slope.

    Vanishes to O(eps) when the critical slope entering the series context
    is correct; this re-derives the bifurcation condition from the series.
    """
    se = ctx.series
    moment = _gaussian_integral(ctx, eps, lambda u: u * _mode_prefactor(q, u, eps), n)
    return ctx.D_c * se.k**2 + ctx.beta - se.alpha0 * moment


def adjoint_identity_gap(
    ctx: WnaContext, q: SeriesTable, w: SeriesTable, eps: float, n: int = 96
) -> float:
    """Gap in alpha0 int u eta du = - int g'* (dn*/du) W du (O(eps) small)."""
    se = ctx.series
    lam = se.lam
    N = se.rho_star * math.sqrt(lam / (2.0 * math.pi * eps))
    lhs = se.alpha0 * _gaussian_integral(
        ctx, eps, lambda u: u * _mode_prefactor(q, u, eps), n
    )
    rhs = -_gaussian_integral(
        ctx, eps,
        lambda u: se.g1 * (-N * lam * (u - se.u_star) / eps) * _series_prefactor(w, u, eps),
        n,
    )
    return lhs - rhs


def second_order_solvability_gaps(
    ctx: WnaContext,
    tables: dict[str, SeriesTable],
    eps: float,
    params,
    n: int = 96,
    nx: int = 512,
) -> tuple[float, float]:
    """Both solvability projections of the second-order forcing.

    The forcing (g''*/2) c1^2 dn*/du + g'* c1 d(eta1)/du with c1, eta1
    proportional to cos(kx) is orthogonal to the conserved-mass functional
    (u-integral of an exact derivative) and to the adjoint mode
    (cos^3-type x-integrals vanish); both projections should sit at
    quadrature noise.
    """
    se = ctx.series
    lam = se.lam
    q, w = tables["q"], tables["w"]
    N = se.rho_star * math.sqrt(lam / (2.0 * math.pi * eps))
    x = (np.arange(nx) + 0.5) * (params.L / nx)
    cosk = np.cos(se.k * x)
    dx = params.L / nx

    def forcing_u(u):
        dn = -N * lam * (u - se.u_star) / eps
        deta = _mode_prefactor(q, u, eps, deriv=1)
        return 0.5 * se.g2 * dn + se.g1 * deta

    # mass projection: x-integral of cos^2 is finite, u-integral kills it
    u_part = _gaussian_integral(ctx, eps, forcing_u, n)
    mass_gap = u_part * float(np.sum(cosk**2) * dx)

    # adjoint projection: the u-integral is finite, cos^3 integrates to zero
    u_part_w = _gaussian_integral(ctx, eps, lambda u: forcing_u(u) * _series_prefactor(w, u, eps), n)
    adj_gap = u_part_w * float(np.sum(cosk**3) * dx)
    return mass_gap, adj_gap
