"""Triangular power-series recursions for the WKBJ amplitudes.

Each amplitude y(u) solves a singularly perturbed linear ODE of the form

    eps y'' - lam (u - u*) y' - M D0(u) k^2 y = inhomogeneity,

with M = 1 for the forward mode amplitude q and the adjoint amplitude W,
and M = 4 for the second-harmonic quantities (the adjoint W-tilde uses
M = 1 with k replaced by 2k).  Expanding y = sum_j y_j eps^j and each y_j
as a power series in s = u - u* produces a triangular array of
coefficients a[j][l]: row j is built from the second derivative of row
j-1, and within a row the Taylor coefficients of D0 couple progressively
lower columns.  Regularity of every y_j at u* (enforced elsewhere by a
Stokes-phenomenon argument) makes the power-series solution unique.

Two independent code paths produce the tables:

* ``q_table`` / ``w_table`` / ``s_table`` implement the per-kind closed
  recursions, with Kronecker-delta source terms written out explicitly;
* ``oracle_series`` solves the same hierarchy generically, constructing
  the right-hand side of every row with Taylor-array operators (shift,
  differentiate, convolve) and solving coefficient-by-coefficient.

Tables agree entrywise to round-off; the oracle is the reference when the
closed recursions are in doubt.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, replace

import numpy as np

from .errors import ResonanceError

__all__ = [
    "SeriesContext",
    "SeriesTable",
    "AmplitudeOdeSpec",
    "q_table",
    "w_table",
    "s_table",
    "oracle_series",
    "eval_series",
]


@dataclass(frozen=True)
class SeriesContext:
    """Frozen parameter snapshot the recursions read from.

    ``D_coeffs[m]`` holds the Taylor coefficient D0^(m)(u*)/m! of the
    motility profile at onset; index 0 is the plateau value and index 1
    the critical slope.
    """

    k: float
    D_coeffs: np.ndarray
    lam: float
    rho_star: float
    alpha0: float
    u_star: float
    g1: float          # g'(c*)
    g2: float = 0.0    # g''(c*)
    c22: float | None = None

    @property
    def source_amp(self) -> float:
        """rho* g'* sqrt(lam^3 / 2 pi), the mode-coupling source strength."""
        return self.rho_star * self.g1 * math.sqrt(self.lam**3 / (2.0 * math.pi))

    def with_c22(self, c22: float) -> "SeriesContext":
        return replace(self, c22=c22)


@dataclass(frozen=True)
class AmplitudeOdeSpec:
    """Identifies one member of the ODE hierarchy for the generic solver."""

    kind: str            # 'q' | 'w' | 'wtilde' | 's'
    k_multiplier: int    # 1 for q/w, 2 for wtilde/s
    inhomogeneity: str

    def __post_init__(self):
        if self.k_multiplier not in (1, 2):
            raise ValueError("wavenumber multiplier must be 1 or 2")


_SPECS = {
    "q": AmplitudeOdeSpec("q", 1, "mode-coupling source proportional to (u - u*)"),
    "w": AmplitudeOdeSpec("w", 1, "secretion weight alpha0 * u"),
    "wtilde": AmplitudeOdeSpec("wtilde", 2, "secretion weight alpha0 * u at doubled wavenumber"),
    "s": AmplitudeOdeSpec("s", 2, "self-interaction of the primary mode amplitude"),
}


@dataclass
class SeriesTable:
    """Dense triangular coefficient array a[j][l] with explicit validity.

    Row j is only meaningful for l <= l_max - 2j (each row consumes two
    extra columns of its predecessor); entries beyond that are NaN, never
    zero-filled.
    """

    kind: str
    coeffs: np.ndarray
    j_max: int
    l_max: int
    context: SeriesContext

    def valid_l(self, j: int) -> int:
        return self.l_max - 2 * j

    def get(self, j: int, l: int) -> float:
        if j < 0 or j > self.j_max or l < 0 or l > self.valid_l(j):
            raise IndexError(
                f"{self.kind}-table entry (j={j}, l={l}) unavailable: "
                f"row {j} is valid only for l <= {self.valid_l(j)} "
                f"(j_max={self.j_max}, l_max={self.l_max})"
            )
        return float(self.coeffs[j, l])

    def row(self, j: int) -> np.ndarray:
        """Valid part of row j."""
        return self.coeffs[j, : self.valid_l(j) + 1]


def _mask_invalid(coeffs: np.ndarray, l_max: int) -> None:
    for j in range(coeffs.shape[0]):
        lo = l_max - 2 * j + 1
        if 0 <= lo <= l_max:
            coeffs[j, lo:] = np.nan


def _check_depth(j_max: int, l_max: int) -> None:
    if j_max < 0:
        raise ValueError("j_max must be non-negative")
    if l_max < 2 * j_max + 4:
        raise ValueError(f"l_max must be at least 2*j_max + 4 = {2 * j_max + 4}, got {l_max}")


def _denominator(ctx: SeriesContext, mult: int, l: int) -> float:
    k2 = (mult * ctx.k) ** 2
    den = ctx.D_coeffs[0] * k2 + l * ctx.lam
    if den <= 0.0:
        raise ResonanceError(f"non-positive series denominator at l={l}: {den}")
    return den


def _dconv(Dc: np.ndarray, row: np.ndarray, l: int) -> float:
    """sum_{m=1}^{min(l, m_max)} Dc[m] * row[l - m]."""
    mh = min(l, len(Dc) - 1)
    if mh < 1:
        return 0.0
    return float(np.dot(Dc[1 : mh + 1], row[l - mh : l][::-1]))


def q_table(ctx: SeriesContext, j_max: int, l_max: int | None = None) -> SeriesTable:
    """Coefficients of the forward mode amplitude q.

    Row 0 is driven by the source rho* g'* sqrt(lam^3/2pi) (u - u*), which
    enters only the l = 1 coefficient; q[0][0] = 0.  For j >= 1 the l = 0
    coefficient reads 2 q[j-1][2] / (D0* k^2) and the generic entry is

        q[j][l] = [ (l+1)(l+2) q[j-1][l+2]
                    - k^2 sum_m (D0^(m)/m!) q[j][l-m] ] / (D0* k^2 + l lam).
    """
    if l_max is None:
        l_max = 2 * j_max + 8
    _check_depth(j_max, l_max)
    k2 = ctx.k**2
    Dc = ctx.D_coeffs
    q = np.zeros((j_max + 1, l_max + 1))
    q[0, 0] = 0.0
    for l in range(1, l_max + 1):
        source = ctx.source_amp if l == 1 else 0.0
        q[0, l] = (source - k2 * _dconv(Dc, q[0], l)) / _denominator(ctx, 1, l)
    for j in range(1, j_max + 1):
        q[j, 0] = 2.0 * q[j - 1, 2] / _denominator(ctx, 1, 0)
        for l in range(1, l_max - 2 * j + 1):
            q[j, l] = (
                (l + 1) * (l + 2) * q[j - 1, l + 2] - k2 * _dconv(Dc, q[j], l)
            ) / _denominator(ctx, 1, l)
    _mask_invalid(q, l_max)
    return SeriesTable("q", q, j_max, l_max, ctx)


def w_table(
    ctx: SeriesContext,
    j_max: int,
    l_max: int | None = None,
    k_multiplier: int = 1,
) -> SeriesTable:
    """Coefficients of the adjoint amplitude W (k_multiplier=2 gives W-tilde).

    W[0][0] = alpha0 u* / (D0* k^2) and W[0][1] = (alpha0 - W[0][0] D0'* k^2)
    / (D0* k^2 + lam); higher rows follow the same second-derivative
    cascade as q but with no Kronecker source.
    """
    if l_max is None:
        l_max = 2 * j_max + 8
    _check_depth(j_max, l_max)
    kk = k_multiplier * ctx.k
    k2 = kk * kk
    Dc = ctx.D_coeffs
    W = np.zeros((j_max + 1, l_max + 1))
    W[0, 0] = ctx.alpha0 * ctx.u_star / _denominator(ctx, k_multiplier, 0)
    for l in range(1, l_max + 1):
        source = ctx.alpha0 if l == 1 else 0.0
        W[0, l] = (source - k2 * _dconv(Dc, W[0], l)) / _denominator(ctx, k_multiplier, l)
    for j in range(1, j_max + 1):
        W[j, 0] = 2.0 * W[j - 1, 2] / _denominator(ctx, k_multiplier, 0)
        for l in range(1, l_max - 2 * j + 1):
            W[j, l] = (
                (l + 1) * (l + 2) * W[j - 1, l + 2] - k2 * _dconv(Dc, W[j], l)
            ) / _denominator(ctx, k_multiplier, l)
    _mask_invalid(W, l_max)
    return SeriesTable("wtilde" if k_multiplier == 2 else "w", W, j_max, l_max, ctx)


def s_table(
    ctx: SeriesContext,
    q: SeriesTable,
    c22: float,
    j_max: int,
    l_max: int | None = None,
) -> SeriesTable:
    """Coefficients of the second-harmonic amplitude s.

    The hierarchy reads (with the doubled wavenumber on the left)

        lam s s_0' + 4 D0 k^2 s_0 = (g'*/2) lam s q_0,
        lam s s_j' + 4 D0 k^2 s_j = s_{j-1}'' - (g'*/2)(q_{j-1}' - lam s q_j)
              + delta_{j1} rho* sqrt(lam^3/2pi) (g'* c22 + g''*/4) s,

    so s[0][0] = s[0][1] = 0 and the c22-carrying source enters only the
    (j, l) = (1, 1) coefficient.  Row j consumes q rows j-1 and j.
    """
    if l_max is None:
        l_max = 2 * j_max + 8
    _check_depth(j_max, l_max)
    if q.j_max < j_max or q.l_max < l_max:
        raise ValueError(
            f"q-table too shallow for s-table: need j_max>={j_max}, l_max>={l_max}, "
            f"got ({q.j_max}, {q.l_max})"
        )
    k2 = ctx.k**2
    lam = ctx.lam
    g1 = ctx.g1
    Dc = ctx.D_coeffs
    pump = ctx.rho_star * math.sqrt(lam**3 / (2.0 * math.pi)) * (g1 * c22 + ctx.g2 / 4.0)
    S = np.zeros((j_max + 1, l_max + 1))
    qc = q.coeffs
    for l in range(2, l_max + 1):
        S[0, l] = (
            0.5 * g1 * lam * qc[0, l - 1] - 4.0 * k2 * _dconv(Dc, S[0], l)
        ) / _denominator(ctx, 2, l)
    for j in range(1, j_max + 1):
        S[j, 0] = (2.0 * S[j - 1, 2] - 0.5 * g1 * qc[j - 1, 1]) / _denominator(ctx, 2, 0)
        for l in range(1, l_max - 2 * j + 1):
            qterm = 0.5 * g1 * ((l + 1) * qc[j - 1, l + 1] - lam * qc[j, l - 1])
            source = pump if (j == 1 and l == 1) else 0.0
            S[j, l] = (
                (l + 1) * (l + 2) * S[j - 1, l + 2]
                - 4.0 * k2 * _dconv(Dc, S[j], l)
                - qterm
                + source
            ) / _denominator(ctx, 2, l)
    _mask_invalid(S, l_max)
    return SeriesTable("s", S, j_max, l_max, ctx.with_c22(c22))


# -- generic hierarchy solver (verification path) --------------------------


def _taylor_d2(row: np.ndarray) -> np.ndarray:
    """Second derivative of a Taylor array; top two coefficients drop out."""
    out = np.zeros_like(row)
    n = len(row)
    l = np.arange(0, n - 2)
    out[: n - 2] = (l + 1) * (l + 2) * row[2:]
    return out


def _taylor_d1(row: np.ndarray) -> np.ndarray:
    out = np.zeros_like(row)
    n = len(row)
    l = np.arange(0, n - 1)
    out[: n - 1] = (l + 1) * row[1:]
    return out


def _taylor_shift_up(row: np.ndarray) -> np.ndarray:
    """Multiply a Taylor array by s = (u - u*)."""
    out = np.zeros_like(row)
    out[1:] = row[:-1]
    return out


def _solve_row(ctx: SeriesContext, mult: int, rhs: np.ndarray) -> np.ndarray:
    """Solve lam s y' + M D0(u) k^2 y = rhs by matching powers of s."""
    k2 = (mult * ctx.k) ** 2
    Dc = ctx.D_coeffs
    y = np.zeros_like(rhs)
    for l in range(len(rhs)):
        y[l] = (rhs[l] - k2 * _dconv(Dc, y, l)) / _denominator(ctx, mult, l)
    return y


def oracle_series(
    spec: AmplitudeOdeSpec | str,
    ctx: SeriesContext,
    j_max: int,
    l_max: int | None = None,
    c22: float | None = None,
) -> SeriesTable:
    """Reference solution of the amplitude hierarchy by generic Taylor algebra.

    Builds the right-hand side of each row with array operators and solves
    the first-order row equation by matching powers of (u - u*); never uses
    the closed per-kind recursions.  For the s-kind the q rows it needs are
    regenerated internally through the same generic path.
    """
    if isinstance(spec, str):
        spec = _SPECS[spec]
    if l_max is None:
        l_max = 2 * j_max + 8
    _check_depth(j_max, l_max)
    width = l_max + 1
    lam = ctx.lam

    def solve_kind(kind: str, mult: int, rows_needed: int) -> np.ndarray:
        rows = np.zeros((rows_needed + 1, width))
        rhs0 = np.zeros(width)
        if kind == "q":
            rhs0[1] = ctx.source_amp
        else:  # w / wtilde share the secretion-weight inhomogeneity
            rhs0[0] = ctx.alpha0 * ctx.u_star
            rhs0[1] = ctx.alpha0
        rows[0] = _solve_row(ctx, mult, rhs0)
        for j in range(1, rows_needed + 1):
            rows[j] = _solve_row(ctx, mult, _taylor_d2(rows[j - 1]))
        return rows

    if spec.kind in ("q", "w", "wtilde"):
        rows = solve_kind(spec.kind, spec.k_multiplier, j_max)
        _mask_invalid(rows, l_max)
        return SeriesTable(spec.kind, rows, j_max, l_max, ctx)

    # s-kind: driven by the q hierarchy and the (j=1) harmonic source
    if c22 is None:
        c22 = ctx.c22
    if c22 is None:
        raise ValueError("s-kind oracle requires c22")
    qrows = solve_kind("q", 1, j_max)
    pump = np.zeros(width)
    pump[1] = ctx.rho_star * math.sqrt(lam**3 / (2.0 * math.pi)) * (ctx.g1 * c22 + ctx.g2 / 4.0)
    rows = np.zeros((j_max + 1, width))
    rows[0] = _solve_row(ctx, 2, 0.5 * ctx.g1 * lam * _taylor_shift_up(qrows[0]))
    for j in range(1, j_max + 1):
        rhs = _taylor_d2(rows[j - 1])
        rhs -= 0.5 * ctx.g1 * (_taylor_d1(qrows[j - 1]) - lam * _taylor_shift_up(qrows[j]))
        if j == 1:
            rhs = rhs + pump
        rows[j] = _solve_row(ctx, 2, rhs)
    _mask_invalid(rows, l_max)
    return SeriesTable("s", rows, j_max, l_max, ctx.with_c22(c22))


# -- evaluation -------------------------------------------------------------

_ENVELOPE_PREFACTOR = {"q": -1.5, "s": -2.5}


def eval_series(
    table: SeriesTable,
    u,
    epsilon: float,
    j_cutoff: int | None = None,
    l_cutoff: int | None = None,
    envelope: bool = False,
    deriv: int = 0,
) -> np.ndarray:
    """Evaluate sum_j eps^j sum_l a[j][l] (u - u*)^l, optionally with the
    WKBJ envelope eps^p exp(-lam (u-u*)^2 / 2 eps) attached (p = -3/2 for
    the q-kind, -5/2 for the s-kind).

    ``deriv=1`` returns d/du of the chosen representation; with the
    envelope enabled the product rule supplies the Gaussian factor.  A
    warning is emitted when the truncated tail is visibly growing at the
    evaluation point (outside the convergence radius).
    """
    if deriv not in (0, 1):
        raise ValueError("deriv must be 0 or 1")
    ctx = table.context
    u = np.asarray(u, dtype=float)
    s = u - ctx.u_star
    if j_cutoff is None:
        j_cutoff = table.j_max
    j_cutoff = min(j_cutoff, table.j_max)

    total = np.zeros_like(s)
    total_d = np.zeros_like(s)
    smax = float(np.max(np.abs(s))) if s.size else 0.0
    for j in range(j_cutoff + 1):
        lc = table.valid_l(j) if l_cutoff is None else min(l_cutoff, table.valid_l(j))
        row = table.coeffs[j, : lc + 1]
        total = total + epsilon**j * np.polynomial.polynomial.polyval(s, row)
        if deriv:
            total_d = total_d + epsilon**j * np.polynomial.polynomial.polyval(s, _taylor_d1(row))
        if lc >= 4 and smax > 0.0:
            head = abs(row[lc // 2]) * smax ** (lc // 2)
            tail = abs(row[lc]) * smax**lc
            if tail > 10.0 * max(head, 1e-300):
                warnings.warn(
                    f"{table.kind}-series terms growing at |u-u*| = {smax:.3g} (row {j}); "
                    "evaluation may sit outside the convergence radius",
                    stacklevel=2,
                )

    if not envelope:
        return total if deriv == 0 else total_d
    if table.kind not in _ENVELOPE_PREFACTOR:
        raise ValueError(f"{table.kind}-kind series has no exponential envelope")
    p = _ENVELOPE_PREFACTOR[table.kind]
    env = epsilon**p * np.exp(-ctx.lam * s**2 / (2.0 * epsilon))
    if deriv == 0:
        return total * env
    return (total_d - ctx.lam * s / epsilon * total) * env
